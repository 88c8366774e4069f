//! Tokens, terms and equation models, plus the rule-constrained term
//! generator used by the classical operators.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GenotypeError;
use crate::grid_data::names;

/// Retry budget for rejection sampling of unique terms.
pub const MAX_GENERATION_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Derivatives,
    Field,
    Forcing,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Derivatives => "derivatives",
            Family::Field => "field",
            Family::Forcing => "forcing",
        })
    }
}

/// One factor of a term: the field, a pure derivative of it, or the forcing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token {
    name: String,
    family: Family,
    x_order: usize,
    t_order: usize,
}

fn parse_derivative(name: &str) -> Option<(usize, char)> {
    // "du/dx" or "d^Ku/dx^K"
    let rest = name.strip_prefix('d')?;
    if let Some(rest) = rest.strip_prefix("u/d") {
        let mut chars = rest.chars();
        let axis = chars.next()?;
        return chars.next().is_none().then_some((1, axis));
    }
    let rest = rest.strip_prefix('^')?;
    let (order, rest) = rest.split_once("u/d")?;
    let order: usize = order.parse().ok()?;
    let mut chars = rest.chars();
    let axis = chars.next()?;
    let tail: String = chars.collect();
    (order >= 2 && tail == format!("^{order}")).then_some((order, axis))
}

impl Token {
    /// Parses a canonical field name (`u`, `du/dx`, `d^2u/dt^2`, `forcing`).
    pub fn from_name(name: &str) -> Result<Self, GenotypeError> {
        let (family, x_order, t_order) = match name {
            names::U => (Family::Field, 0, 0),
            names::FORCING => (Family::Forcing, 0, 0),
            _ => match parse_derivative(name) {
                Some((k, 'x')) => (Family::Derivatives, k, 0),
                Some((k, 't')) => (Family::Derivatives, 0, k),
                _ => return Err(GenotypeError::UnknownToken(name.to_string())),
            },
        };
        Ok(Token {
            name: name.to_string(),
            family,
            x_order,
            t_order,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Derivative orders per axis `[x, t]`; empty for non-derivative tokens.
    pub fn parameters(&self) -> Vec<usize> {
        match self.family {
            Family::Derivatives => vec![self.x_order, self.t_order],
            _ => Vec::new(),
        }
    }

    pub fn total_order(&self) -> usize {
        self.x_order + self.t_order
    }

    pub fn is_time_derivative(&self) -> bool {
        self.t_order > 0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Restrictions that keep generated terms meaningful.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StructuralRules {
    /// At most one time-derivative factor per term.
    pub single_time_derivative: bool,
    /// No term made only of repeated forcing factors.
    pub no_forcing_power: bool,
}

impl Default for StructuralRules {
    fn default() -> Self {
        StructuralRules {
            single_time_derivative: true,
            no_forcing_power: true,
        }
    }
}

impl StructuralRules {
    pub const NONE: StructuralRules = StructuralRules {
        single_time_derivative: false,
        no_forcing_power: false,
    };

    /// Whether `next` may be appended to the partial term `partial`.
    pub fn can_extend(&self, partial: &[Token], next: &Token) -> bool {
        if self.single_time_derivative
            && next.is_time_derivative()
            && partial.iter().any(Token::is_time_derivative)
        {
            return false;
        }
        if self.no_forcing_power
            && next.family == Family::Forcing
            && !partial.is_empty()
            && partial.iter().all(|t| t.family == Family::Forcing)
        {
            return false;
        }
        true
    }

    pub fn admits(&self, tokens: &[Token]) -> bool {
        (0..tokens.len()).all(|k| self.can_extend(&tokens[..k], &tokens[k]))
    }
}

/// Canonical, order-independent signature of a token product.
pub fn canonical_signature(tokens: &[Token], max_factors: usize) -> Result<String, GenotypeError> {
    if tokens.is_empty() {
        return Err(GenotypeError::EmptyTerm);
    }
    if tokens.len() > max_factors {
        return Err(GenotypeError::TooManyFactors {
            size: tokens.len(),
            max: max_factors,
        });
    }
    Ok(tokens.iter().map(Token::name).sorted().join("*"))
}

/// A product of tokens with its canonical signature.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    tokens: Vec<Token>,
    signature: String,
}

impl Term {
    pub fn new(mut tokens: Vec<Token>, max_factors: usize) -> Result<Self, GenotypeError> {
        let signature = canonical_signature(&tokens, max_factors)?;
        tokens.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(Term { tokens, signature })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn signature(&self) -> &str {
        &self.signature
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains_token(&self, name: &str) -> bool {
        self.tokens.iter().any(|t| t.name == name)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.signature)
    }
}

/// Tokens grouped by family, with the rules applied while generating terms.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenFamilies {
    families: BTreeMap<Family, Vec<Token>>,
    pub rules: StructuralRules,
}

impl TokenFamilies {
    pub fn new(tokens: &[Token], rules: StructuralRules) -> Self {
        let mut families: BTreeMap<Family, Vec<Token>> = BTreeMap::new();
        for t in tokens.iter().sorted() {
            let members = families.entry(t.family).or_default();
            if !members.contains(t) {
                members.push(t.clone());
            }
        }
        TokenFamilies { families, rules }
    }

    pub fn sizes(&self) -> BTreeMap<Family, usize> {
        self.families.iter().map(|(f, v)| (*f, v.len())).collect()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.families.values().flatten()
    }
}

/// Draws one term following the classical generation policy: the factor
/// count is uniform on `1..=max_factors`; each factor comes from a family
/// picked with probability proportional to its admissible size, uniformly
/// within that family. Draws whose signature is already in `existing` are
/// rejected.
pub fn generate_term<R: Rng + ?Sized>(
    rng: &mut R,
    max_factors: usize,
    families: &TokenFamilies,
    existing: &BTreeSet<String>,
) -> Result<Term, GenotypeError> {
    assert!(max_factors >= 1, "max_factors must be positive");
    'attempt: for _ in 0..MAX_GENERATION_ATTEMPTS {
        let factors = rng.random_range(1..=max_factors);
        let mut picked: Vec<Token> = Vec::with_capacity(factors);
        for _ in 0..factors {
            let available: Vec<Vec<&Token>> = families
                .families
                .values()
                .map(|members| {
                    members
                        .iter()
                        .filter(|t| families.rules.can_extend(&picked, t))
                        .collect::<Vec<_>>()
                })
                .filter(|v| !v.is_empty())
                .collect();
            let total: usize = available.iter().map(Vec::len).sum();
            if total == 0 {
                continue 'attempt;
            }
            let mut r = rng.random_range(0..total);
            let family = available
                .iter()
                .find(|members| {
                    if r < members.len() {
                        true
                    } else {
                        r -= members.len();
                        false
                    }
                })
                .expect("draw falls inside the total weight");
            let token = family[rng.random_range(0..family.len())].clone();
            picked.push(token);
        }
        let term = Term::new(picked, max_factors)?;
        if !existing.contains(term.signature()) {
            return Ok(term);
        }
    }
    Err(GenotypeError::Exhausted {
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

/// Every admissible term over a token set, sorted by signature.
#[derive(Clone, Debug)]
pub struct TermVocabulary {
    terms: Vec<Term>,
    index: HashMap<String, usize>,
    tokens: Vec<Token>,
    max_factors: usize,
    rules: StructuralRules,
}

/// Enumerates all multisets of 1..=`max_factors` tokens that satisfy `rules`.
pub fn enumerate_vocabulary(
    tokens: &[Token],
    max_factors: usize,
    rules: StructuralRules,
) -> TermVocabulary {
    let tokens: Vec<Token> = tokens.iter().cloned().sorted().dedup().collect();
    let mut terms: Vec<Term> = (1..=max_factors)
        .flat_map(|k| tokens.iter().cloned().combinations_with_replacement(k))
        .filter(|combo| rules.admits(combo))
        .map(|combo| Term::new(combo, max_factors).expect("size bounded by construction"))
        .collect();
    terms.sort_by(|a, b| a.signature.cmp(&b.signature));
    terms.dedup_by(|a, b| a.signature == b.signature);
    let index = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.signature.clone(), i))
        .collect();
    TermVocabulary {
        terms,
        index,
        tokens,
        max_factors,
        rules,
    }
}

impl TermVocabulary {
    /// Vocabulary over tokens parsed from field names; unknown names are errors.
    pub fn from_field_names<'a>(
        field_names: impl IntoIterator<Item = &'a str>,
        max_factors: usize,
        rules: StructuralRules,
    ) -> Result<Self, GenotypeError> {
        let tokens = field_names
            .into_iter()
            .map(Token::from_name)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(enumerate_vocabulary(&tokens, max_factors, rules))
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn signatures(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(Term::signature)
    }

    pub fn position(&self, signature: &str) -> Option<usize> {
        self.index.get(signature).copied()
    }

    pub fn get(&self, signature: &str) -> Option<&Term> {
        self.position(signature).map(|i| &self.terms[i])
    }

    pub fn contains(&self, signature: &str) -> bool {
        self.index.contains_key(signature)
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn max_factors(&self) -> usize {
        self.max_factors
    }

    pub fn rules(&self) -> StructuralRules {
        self.rules
    }

    pub fn families(&self) -> TokenFamilies {
        TokenFamilies::new(&self.tokens, self.rules)
    }

    /// The admissible vocabulary term for a token multiset, if any.
    pub fn term_for(&self, tokens: &[Token]) -> Option<&Term> {
        if tokens.is_empty() || tokens.len() > self.max_factors {
            return None;
        }
        let sig = tokens.iter().map(Token::name).sorted().join("*");
        self.get(&sig)
    }
}

/// One individual: a linear combination of distinct terms.
#[derive(Clone, Debug, PartialEq)]
pub struct EquationModel {
    pub terms: Vec<Term>,
    /// Parallel to `terms`; empty until the model has been evaluated.
    pub coefficients: Vec<f64>,
    pub target_index: Option<usize>,
}

/// Minimum number of distinct terms in a model.
pub const MIN_MODEL_TERMS: usize = 2;

impl EquationModel {
    pub fn new(terms: Vec<Term>) -> Self {
        EquationModel {
            terms,
            coefficients: Vec::new(),
            target_index: None,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn signatures(&self) -> BTreeSet<String> {
        self.terms.iter().map(|t| t.signature.clone()).collect()
    }

    pub fn contains(&self, signature: &str) -> bool {
        self.terms.iter().any(|t| t.signature == signature)
    }

    pub fn coefficient(&self, signature: &str) -> Option<f64> {
        let i = self.terms.iter().position(|t| t.signature == signature)?;
        self.coefficients.get(i).copied()
    }

    pub fn has_duplicates(&self) -> bool {
        self.signatures().len() != self.terms.len()
    }

    /// Distinct terms, at least [`MIN_MODEL_TERMS`] of them, each admissible.
    pub fn is_valid(&self, rules: &StructuralRules) -> bool {
        self.terms.len() >= MIN_MODEL_TERMS
            && !self.has_duplicates()
            && self.terms.iter().all(|t| rules.admits(&t.tokens))
    }

    /// `c1*sig1 + c2*sig2 + ... = 0`, coefficients in round-trip decimal.
    pub fn render(&self) -> String {
        let lhs = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| match self.coefficients.get(i) {
                Some(c) => format!("{c:?}*{}", t.signature),
                None => t.signature.clone(),
            })
            .join(" + ");
        format!("{lhs} = 0")
    }
}

impl fmt::Display for EquationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tok(name: &str) -> Token {
        Token::from_name(name).unwrap()
    }

    fn toks(names: &[&str]) -> Vec<Token> {
        names.iter().map(|n| tok(n)).collect()
    }

    #[test]
    fn token_names_parse_into_families_and_orders() {
        let t = tok("d^3u/dx^3");
        assert_eq!(t.family(), Family::Derivatives);
        assert_eq!(t.parameters(), vec![3, 0]);
        assert!(!t.is_time_derivative());
        let t = tok("du/dt");
        assert_eq!(t.parameters(), vec![0, 1]);
        assert!(t.is_time_derivative());
        assert_eq!(tok("u").family(), Family::Field);
        assert!(tok("u").parameters().is_empty());
        assert_eq!(tok("forcing").family(), Family::Forcing);
        for bad in ["v", "d^2u/dx^3", "d^1u/dx^1", "du/dxx", "du/"] {
            assert!(Token::from_name(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn signatures_are_permutation_invariant() {
        let a = canonical_signature(&toks(&["u", "du/dx"]), 2).unwrap();
        let b = canonical_signature(&toks(&["du/dx", "u"]), 2).unwrap();
        assert_eq!(a, "du/dx*u");
        assert_eq!(a, b);
        assert_eq!(canonical_signature(&toks(&["du/dt"]), 2).unwrap(), "du/dt");
        assert_eq!(
            canonical_signature(&toks(&["u", "u", "u"]), 2),
            Err(GenotypeError::TooManyFactors { size: 3, max: 2 })
        );
        assert_eq!(canonical_signature(&[], 2), Err(GenotypeError::EmptyTerm));
    }

    #[test]
    fn two_token_multisets_over_three_tokens() {
        // Brute force over ordered pairs: 9 ordered, 6 unordered.
        let pool = ["u", "du/dx", "du/dt"];
        let mut sigs = BTreeSet::new();
        for a in pool {
            for b in pool {
                sigs.insert(canonical_signature(&toks(&[a, b]), 2).unwrap());
            }
        }
        assert_eq!(sigs.len(), 6);
    }

    #[test]
    fn vocabulary_enumeration_examples() {
        let v = enumerate_vocabulary(&toks(&["u", "du/dx"]), 1, StructuralRules::NONE);
        assert_eq!(v.signatures().collect::<Vec<_>>(), vec!["du/dx", "u"]);

        let v = enumerate_vocabulary(&toks(&["u", "du/dx"]), 2, StructuralRules::NONE);
        assert_eq!(
            v.signatures().collect::<Vec<_>>(),
            vec!["du/dx", "du/dx*du/dx", "du/dx*u", "u", "u*u"]
        );
    }

    #[test]
    fn burgers_vocabulary_drops_double_time_derivative() {
        let tokens = toks(&["u", "du/dx", "d^2u/dx^2", "du/dt"]);
        // Brute force: every unordered pair plus singletons, minus the banned one.
        let mut expect = BTreeSet::new();
        for (i, a) in tokens.iter().enumerate() {
            expect.insert(a.name().to_string());
            for b in &tokens[i..] {
                if !(a.is_time_derivative() && b.is_time_derivative()) {
                    let mut pair = [a.name(), b.name()];
                    pair.sort();
                    expect.insert(pair.join("*"));
                }
            }
        }
        let v = enumerate_vocabulary(&tokens, 2, StructuralRules::default());
        let got: BTreeSet<String> = v.signatures().map(str::to_string).collect();
        assert_eq!(got, expect);
        assert!(!v.contains("du/dt*du/dt"));
        assert_eq!(v.len(), 13);
    }

    #[test]
    fn forcing_powers_are_excluded() {
        let v = enumerate_vocabulary(&toks(&["u", "forcing"]), 2, StructuralRules::default());
        assert!(!v.contains("forcing*forcing"));
        assert!(v.contains("forcing*u"));
        assert!(v.contains("forcing"));
    }

    #[test]
    fn single_family_single_factor_is_deterministic() {
        let fam = TokenFamilies::new(&toks(&["u"]), StructuralRules::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let t = generate_term(&mut rng, 1, &fam, &BTreeSet::new()).unwrap();
            assert_eq!(t.signature(), "u");
        }
    }

    #[test]
    fn family_choice_is_proportional_to_size() {
        let fam = TokenFamilies::new(
            &toks(&["u", "du/dx", "d^2u/dx^2", "d^3u/dx^3", "du/dt"]),
            StructuralRules::default(),
        );
        assert_eq!(fam.sizes()[&Family::Derivatives], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| {
                let t = generate_term(&mut rng, 1, &fam, &BTreeSet::new()).unwrap();
                t.tokens()[0].family() == Family::Derivatives
            })
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.8).abs() < 0.01, "frequency {freq}");
    }

    #[test]
    fn exhausted_vocabulary_is_an_error() {
        let tokens = toks(&["u", "du/dx"]);
        let v = enumerate_vocabulary(&tokens, 2, StructuralRules::default());
        let existing: BTreeSet<String> = v.signatures().map(str::to_string).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            generate_term(&mut rng, 2, &v.families(), &existing),
            Err(GenotypeError::Exhausted {
                attempts: MAX_GENERATION_ATTEMPTS
            })
        );
    }

    #[test]
    fn model_validity_and_rendering() {
        let v = enumerate_vocabulary(
            &toks(&["u", "du/dx", "du/dt"]),
            2,
            StructuralRules::default(),
        );
        let mut m = EquationModel::new(vec![
            v.get("du/dt").unwrap().clone(),
            v.get("du/dx*u").unwrap().clone(),
        ]);
        assert!(m.is_valid(&v.rules()));
        assert_eq!(m.render(), "du/dt + du/dx*u = 0");
        m.coefficients = vec![-1.0, -0.5];
        assert_eq!(m.render(), "-1.0*du/dt + -0.5*du/dx*u = 0");
        m.terms.push(v.get("du/dt").unwrap().clone());
        assert!(!m.is_valid(&v.rules()));
        let single = EquationModel::new(vec![v.get("u").unwrap().clone()]);
        assert!(!single.is_valid(&v.rules()));
    }

    const POOL: [&str; 6] = ["u", "du/dx", "d^2u/dx^2", "d^3u/dx^3", "du/dt", "forcing"];

    proptest! {
        #[test]
        fn signature_equality_iff_multiset_equality(
            a in proptest::collection::vec(0usize..POOL.len(), 1..4),
            b in proptest::collection::vec(0usize..POOL.len(), 1..4),
            shuffle in any::<u64>(),
        ) {
            let ta: Vec<Token> = a.iter().map(|&i| tok(POOL[i])).collect();
            let tb: Vec<Token> = b.iter().map(|&i| tok(POOL[i])).collect();
            let sa = canonical_signature(&ta, 3).unwrap();
            let sb = canonical_signature(&tb, 3).unwrap();
            let (mut ma, mut mb) = (a.clone(), b.clone());
            ma.sort();
            mb.sort();
            prop_assert_eq!(sa == sb, ma == mb);

            let mut permuted = ta.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(shuffle);
            rand::seq::SliceRandom::shuffle(permuted.as_mut_slice(), &mut rng);
            prop_assert_eq!(canonical_signature(&permuted, 3).unwrap(), sa);
        }

        #[test]
        fn generated_terms_are_fresh_and_bounded(seed in any::<u64>(), max in 1usize..4, taken in 0usize..6) {
            let v = enumerate_vocabulary(&toks(&POOL), max, StructuralRules::default());
            let existing: BTreeSet<String> = v.signatures().take(taken).map(str::to_string).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = generate_term(&mut rng, max, &v.families(), &existing).unwrap();
            prop_assert!(t.len() <= max);
            prop_assert!(!existing.contains(t.signature()));
            prop_assert!(v.contains(t.signature()));
        }

        #[test]
        fn unrestricted_vocabulary_size_is_multiset_count(n in 1usize..6, max in 1usize..4) {
            let tokens: Vec<Token> = POOL[..n].iter().map(|s| tok(s)).collect();
            let v = enumerate_vocabulary(&tokens, max, StructuralRules::NONE);
            // sum_k C(n + k - 1, k)
            let count: usize = (1..=max).map(|k| binomial(n + k - 1, k)).sum();
            prop_assert_eq!(v.len(), count);
            let sigs: Vec<&str> = v.signatures().collect();
            prop_assert!(sigs.windows(2).all(|w| w[0] < w[1]));
        }
    }

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }
}
