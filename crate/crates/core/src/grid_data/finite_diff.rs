use super::{derivative_name, names, FieldBundle, Grid, Matrix};
use crate::error::DataError;

/// Finite difference weights for the `order`-th derivative at `z` using the
/// given nodes (Fornberg's recursion).
pub fn stencil_weights(z: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    assert!(n > order, "need more nodes than the derivative order");
    // c[i][k]: weight of node i for derivative k
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[order]).collect()
}

/// Second-order stencils for every node of an axis with `n` uniformly spaced
/// points: centred where it fits, shifted one-sided near the ends.
/// Returns `(first node index, weights)` per output node.
fn axis_stencils(n: usize, h: f64, order: usize) -> Vec<(usize, Vec<f64>)> {
    let half = order.div_ceil(2);
    let width = order + 2;
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; 2 * width + 1];
    (0..n)
        .map(|i| {
            let (start, len) = if i >= half && i + half < n {
                (i - half, 2 * half + 1)
            } else if i < half {
                (0, width)
            } else {
                (n - width, width)
            };
            // Weights depend only on the offset pattern; key by (len, i - start).
            let key = if len == width {
                i - start
            } else {
                width + 1 + (i - start)
            };
            let w = cache[key]
                .get_or_insert_with(|| {
                    let nodes: Vec<f64> = (0..len).map(|p| p as f64).collect();
                    stencil_weights((i - start) as f64, &nodes, order)
                        .into_iter()
                        .map(|w| w / h.powi(order as i32))
                        .collect()
                })
                .clone();
            (start, w)
        })
        .collect()
}

fn differentiate(u: &Matrix, grid: &Grid, axis: char, order: usize) -> Result<Matrix, DataError> {
    let (points, name) = match axis {
        'x' => (grid.nx, "x"),
        _ => (grid.nt, "t"),
    };
    if points < order + 2 {
        return Err(DataError::GridTooSmall {
            axis: name,
            points,
            order,
            needed: order + 2,
        });
    }
    let h = if axis == 'x' { grid.dx() } else { grid.dt() };
    let stencils = axis_stencils(points, h, order);
    let mut out = Matrix::zeros(grid.nt, grid.nx);
    for k in 0..grid.nt {
        for i in 0..grid.nx {
            let (node, fixed) = if axis == 'x' { (i, k) } else { (k, i) };
            let (start, w) = &stencils[node];
            let v: f64 = w
                .iter()
                .enumerate()
                .map(|(p, wp)| {
                    let q = start + p;
                    wp * if axis == 'x' {
                        u.get(fixed, q)
                    } else {
                        u.get(q, fixed)
                    }
                })
                .sum();
            out.set(k, i, v);
        }
    }
    Ok(out)
}

/// Builds a bundle from a sampled field using second-order finite
/// differences for every pure derivative up to the requested orders.
pub fn finite_difference_fields(
    u: &Matrix,
    grid: &Grid,
    max_x_order: usize,
    max_t_order: usize,
) -> Result<FieldBundle, DataError> {
    grid.validate()?;
    if max_x_order == 0 || max_t_order == 0 {
        return Err(DataError::InvalidGrid(
            "derivative orders must be at least 1".into(),
        ));
    }
    let mut bundle = FieldBundle::new(*grid);
    bundle.insert(names::U, u.clone())?;
    for order in 1..=max_x_order {
        bundle.insert(
            derivative_name("x", order),
            differentiate(u, grid, 'x', order)?,
        )?;
    }
    for order in 1..=max_t_order {
        bundle.insert(
            derivative_name("t", order),
            differentiate(u, grid, 't', order)?,
        )?;
    }
    Ok(bundle)
}
