//! Truncated bivariate Taylor arithmetic ("jets") in (x, t).
//!
//! A jet stores the Taylor coefficients `c[i][j]` of a function around a point
//! for all `i <= X_ORDER`, `j <= T_ORDER`. Arithmetic on jets propagates exact
//! derivatives through closed-form expressions, which is how the manufactured
//! benchmark fields get their token values without any differencing error.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub(crate) const X_ORDER: usize = 5;
pub(crate) const T_ORDER: usize = 2;
const NX: usize = X_ORDER + 1;
const NT: usize = T_ORDER + 1;
const MAX_POWER: usize = X_ORDER + T_ORDER;

const FACTORIAL: [f64; MAX_POWER + 1] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Jet {
    c: [[f64; NT]; NX],
    // Highest x order whose coefficients are still exact; `dx` lowers it.
    x_valid: usize,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [[0.0; NT]; NX];
        c[0][0] = v;
        Jet {
            c,
            x_valid: X_ORDER,
        }
    }

    pub fn var_x(x0: f64) -> Self {
        let mut j = Self::constant(x0);
        j.c[1][0] = 1.0;
        j
    }

    pub fn var_t(t0: f64) -> Self {
        let mut j = Self::constant(t0);
        j.c[0][1] = 1.0;
        j
    }

    pub fn value(&self) -> f64 {
        self.c[0][0]
    }

    /// `d^(i+j) f / dx^i dt^j` at the expansion point.
    pub fn derivative(&self, i: usize, j: usize) -> f64 {
        assert!(
            i <= self.x_valid && j <= T_ORDER,
            "derivative order ({i},{j}) beyond jet truncation"
        );
        self.c[i][j] * FACTORIAL[i] * FACTORIAL[j]
    }

    /// Partial derivative in x, as a jet of one lower x order.
    pub fn dx(&self) -> Self {
        let mut c = [[0.0; NT]; NX];
        for i in 0..X_ORDER {
            for j in 0..NT {
                c[i][j] = self.c[i + 1][j] * (i + 1) as f64;
            }
        }
        Jet {
            c,
            x_valid: self.x_valid.saturating_sub(1),
        }
    }

    fn nilpotent(&self) -> Self {
        let mut h = *self;
        h.c[0][0] = 0.0;
        h
    }

    /// `f(self)` given `f^(k)` at the expansion value for k = 0..=MAX_POWER.
    fn compose(&self, derivs: [f64; MAX_POWER + 1]) -> Self {
        let h = self.nilpotent();
        let mut out = Jet::constant(derivs[0]);
        out.x_valid = self.x_valid;
        let mut power = h;
        for (k, d) in derivs.iter().enumerate().skip(1) {
            out = out + power * (d / FACTORIAL[k]);
            power = power * h;
        }
        out
    }

    pub fn exp(&self) -> Self {
        self.compose([self.value().exp(); MAX_POWER + 1])
    }

    pub fn ln(&self) -> Self {
        let a = self.value();
        let mut d = [0.0; MAX_POWER + 1];
        d[0] = a.ln();
        for (k, dk) in d.iter_mut().enumerate().skip(1) {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            *dk = sign * FACTORIAL[k - 1] / a.powi(k as i32);
        }
        self.compose(d)
    }

    pub fn recip(&self) -> Self {
        let a = self.value();
        let mut d = [0.0; MAX_POWER + 1];
        for (k, dk) in d.iter_mut().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            *dk = sign * FACTORIAL[k] / a.powi(k as i32 + 1);
        }
        self.compose(d)
    }

    pub fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        self.compose(std::array::from_fn(|k| cycle[k % 4]))
    }

    pub fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        self.compose(std::array::from_fn(|k| cycle[k % 4]))
    }

    pub fn square(&self) -> Self {
        *self * *self
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        for i in 0..NX {
            for j in 0..NT {
                self.c[i][j] += rhs.c[i][j];
            }
        }
        self.x_valid = self.x_valid.min(rhs.x_valid);
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for row in self.c.iter_mut() {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut c = [[0.0; NT]; NX];
        for i1 in 0..NX {
            for j1 in 0..NT {
                let a = self.c[i1][j1];
                if a == 0.0 {
                    continue;
                }
                for i2 in 0..NX - i1 {
                    for j2 in 0..NT - j1 {
                        c[i1 + i2][j1 + j2] += a * rhs.c[i2][j2];
                    }
                }
            }
        }
        Jet {
            c,
            x_valid: self.x_valid.min(rhs.x_valid),
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0][0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, rhs: f64) -> Jet {
        self + (-rhs)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for row in self.c.iter_mut() {
            for v in row.iter_mut() {
                *v *= rhs;
            }
        }
        self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}
