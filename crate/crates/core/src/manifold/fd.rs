//! Central finite differences for models whose metric is an opaque closure,
//! and for cross-checks against exact derivatives.

use std::collections::HashMap;
use std::sync::Arc;

use super::MetricModel;
use crate::error::{Error, Result};
use crate::taylor::{multi_factorial, MonomialBasis, TaylorPoly};

/// Extra distance, in steps, that every stencil keeps from the domain boundary.
const MARGIN_STEPS: f64 = 5.0;

/// Per-coordinate step `max(1e-3, 1e-2·|x_j|)`.
pub fn fd_step(xj: f64) -> f64 {
    (1e-2 * xj.abs()).max(1e-3)
}

/// Half-width of the 4th-order central stencil for a derivative of order `m`.
pub(crate) fn half_width(m: usize) -> usize {
    if m == 0 {
        0
    } else {
        m.div_ceil(2) + 1
    }
}

/// Weights of the central stencil on nodes `-half..=half` (unit spacing) for
/// the derivative of order `order`.
pub fn central_weights(order: usize, half: usize) -> Vec<f64> {
    let nodes: Vec<f64> = (-(half as i64)..=half as i64).map(|k| k as f64).collect();
    fornberg(&nodes, order)
}

fn fornberg(x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0];
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i];
        for j in 0..i {
            let c3 = x[i] - x[j];
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
    c.into_iter().map(|row| row[m]).collect()
}

/// Errors unless the box `x ± reach` (checked on its 3ⁿ grid) lies in the domain.
fn check_margin(model: &MetricModel, x: &[f64], reach: &[f64]) -> Result<()> {
    let n = x.len();
    let mut p = vec![0.0; n];
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        for j in 0..n {
            let o = (c % 3) as f64 - 1.0;
            c /= 3;
            p[j] = x[j] + o * reach[j];
        }
        if !model.contains(&p) {
            return Err(Error::StencilOutsideDomain {
                point: x.to_vec(),
                reach: reach.iter().fold(0.0, |m, r| m.max(*r)),
            });
        }
    }
    Ok(())
}

/// First derivatives of a vector-valued function along each coordinate,
/// `out[k][i] = ∂_k f_i(x)`, with the five-point stencil.
pub(crate) fn gradient(
    model: &MetricModel,
    x: &[f64],
    f: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|&v| fd_step(v)).collect();
    let reach: Vec<f64> = h.iter().map(|hj| (2.0 + MARGIN_STEPS) * hj).collect();
    check_margin(model, x, &reach)?;
    let w = central_weights(1, 2);
    let mut out = Vec::with_capacity(n);
    let mut p = x.to_vec();
    for k in 0..n {
        let mut acc: Vec<f64> = Vec::new();
        for (o, wk) in w.iter().enumerate() {
            if *wk == 0.0 {
                continue;
            }
            p[k] = x[k] + (o as f64 - 2.0) * h[k];
            let v = f(&p)?;
            if acc.is_empty() {
                acc = vec![0.0; v.len()];
            }
            for (a, vi) in acc.iter_mut().zip(&v) {
                *a += wk * vi / h[k];
            }
        }
        p[k] = x[k];
        out.push(acc);
    }
    Ok(out)
}

/// `∂_k g_{ij}` at index `(k n + i) n + j`.
pub(crate) fn metric_gradient(
    model: &MetricModel,
    f: &(dyn Fn(&[f64]) -> Vec<f64> + Send + Sync),
    x: &[f64],
) -> Result<Vec<f64>> {
    let grads = gradient(model, x, |p| Ok(f(p)))?;
    Ok(grads.into_iter().flatten().collect())
}

/// Taylor polynomials of `g(x + t̃)` whose coefficients are finite-difference
/// estimates of the metric derivatives. Richardson-extrapolated when third or
/// higher metric derivatives are requested.
pub(crate) fn metric_taylor(
    model: &MetricModel,
    f: &(dyn Fn(&[f64]) -> Vec<f64> + Send + Sync),
    x: &[f64],
    basis: &Arc<MonomialBasis>,
) -> Result<Vec<TaylorPoly>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|&v| fd_step(v)).collect();
    let pmax = half_width(basis.degree());
    let reach: Vec<f64> = h.iter().map(|hj| (pmax as f64 + MARGIN_STEPS) * hj).collect();
    check_margin(model, x, &reach)?;

    let refine = basis.degree() >= 3;
    let weights: Vec<Vec<f64>> = (0..=basis.degree())
        .map(|m| central_weights(m, half_width(m)))
        .collect();
    let mut cache: HashMap<(Vec<i64>, bool), Vec<f64>> = HashMap::new();
    let g0 = f(x);
    let mut coeffs = vec![vec![0.0; basis.len()]; n * n];
    for (i, &v) in g0.iter().enumerate() {
        coeffs[i][0] = v;
    }
    for idx in 1..basis.len() {
        let alpha = basis.exponents(idx).to_vec();
        let coarse = tensor_derivative(f, x, &h, &alpha, &weights, false, &mut cache);
        let d = if refine {
            let fine = tensor_derivative(f, x, &h, &alpha, &weights, true, &mut cache);
            fine.iter().zip(&coarse).map(|(a, b)| (16.0 * a - b) / 15.0).collect()
        } else {
            coarse
        };
        let fact = multi_factorial(&alpha);
        for (i, v) in d.iter().enumerate() {
            coeffs[i][idx] = v / fact;
        }
    }
    Ok(coeffs.into_iter().map(|c| TaylorPoly::from_coeffs(basis, c)).collect())
}

fn tensor_derivative(
    f: &(dyn Fn(&[f64]) -> Vec<f64> + Send + Sync),
    x: &[f64],
    h: &[f64],
    alpha: &[u8],
    weights: &[Vec<f64>],
    halved: bool,
    cache: &mut HashMap<(Vec<i64>, bool), Vec<f64>>,
) -> Vec<f64> {
    let n = x.len();
    let scale = if halved { 0.5 } else { 1.0 };
    let halves: Vec<i64> = alpha.iter().map(|&a| half_width(a as usize) as i64).collect();
    let mut offset: Vec<i64> = halves.iter().map(|hw| -hw).collect();
    let mut out: Vec<f64> = Vec::new();
    loop {
        let mut w = 1.0;
        for j in 0..n {
            let a = alpha[j] as usize;
            w *= weights[a][(offset[j] + halves[j]) as usize] / (scale * h[j]).powi(a as i32);
        }
        if w != 0.0 {
            let key = (offset.clone(), halved);
            let v = cache.entry(key).or_insert_with(|| {
                let p: Vec<f64> = (0..n).map(|j| x[j] + offset[j] as f64 * scale * h[j]).collect();
                f(&p)
            });
            if out.is_empty() {
                out = vec![0.0; v.len()];
            }
            for (o, vi) in out.iter_mut().zip(v.iter()) {
                *o += w * vi;
            }
        }
        let mut j = 0;
        loop {
            if j == n {
                return out;
            }
            offset[j] += 1;
            if offset[j] <= halves[j] {
                break;
            }
            offset[j] = -halves[j];
            j += 1;
        }
    }
}
