//! Pointwise realization of the deformed group: the inverse deformation `K`,
//! the multiplication law `φ`, the auxiliary matrices `λ` and `μ` by finite
//! differences, frame connection coefficients and canonical-law residuals.
//!
//! Group parameters are frame components `t^m`; with a coordinate frame they
//! are coordinate velocities. `K(x, t) = exp_x(h t) − x` and
//! `H^m(x, t̃) = h^m_μ log_x(x + t̃)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesic::{connect, shoot_endpoint, ConnectOptions};
use crate::jet::DeformationJet;
use crate::manifold::{fd_step, ChartPoint, FrameKind, MetricModel, VielbeinFrame};
use crate::transport::{TransportKind, TransportMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct GroupElementAt {
    pub base: ChartPoint,
    pub t: Vec<f64>,
    pub frame: FrameKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupOptions {
    pub frame: FrameKind,
    pub steps: usize,
    /// Step of the first-derivative differences in `λ` and `μ`.
    pub fd_step: f64,
    /// Step of the second differences of `μ` giving `ρ`.
    pub rho_step: f64,
    pub richardson: bool,
    /// Overrides the locality radius of the connection solves.
    pub locality: Option<f64>,
}

impl Default for GroupOptions {
    fn default() -> Self {
        Self {
            frame: FrameKind::Coordinate,
            steps: 200,
            fd_step: 1e-5,
            rho_step: 1e-3,
            richardson: true,
            locality: None,
        }
    }
}

impl GroupOptions {
    fn connect_options(&self, guess: Option<Vec<f64>>) -> ConnectOptions {
        ConnectOptions {
            steps: self.steps,
            locality: self.locality,
            initial_guess: guess,
            ..ConnectOptions::default()
        }
    }
}

/// Value of the second factor at the displaced point `x′`.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldRule {
    /// Frame components that do not change from point to point.
    Constant(Vec<f64>),
    /// `scale·τ(s₁)`, the tangent at `x′` of the geodesic `exp_x(sτ)`, for a
    /// first factor `t = s₁τ` collinear with `tau`.
    Radial { tau: Vec<f64>, scale: f64 },
}

fn frame_at(model: &MetricModel, x: &[f64], kind: FrameKind) -> Result<VielbeinFrame> {
    let p = ChartPoint::new(x.to_vec())?;
    model.vielbein(&p, kind)
}

fn to_coordinate(model: &MetricModel, x: &[f64], kind: FrameKind, t: &[f64]) -> Result<Vec<f64>> {
    match kind {
        FrameKind::Coordinate => Ok(t.to_vec()),
        _ => Ok(frame_at(model, x, kind)?.to_coordinate(t)),
    }
}

fn to_frame(model: &MetricModel, x: &[f64], kind: FrameKind, v: &[f64]) -> Result<Vec<f64>> {
    match kind {
        FrameKind::Coordinate => Ok(v.to_vec()),
        _ => Ok(frame_at(model, x, kind)?.to_frame(v)),
    }
}

/// `K(x, t)` together with the geodesic tangent (coordinate components) at
/// `x + K(x, t)`.
fn exp_displacement(model: &MetricModel, x: &[f64], t: &[f64], opts: &GroupOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let v = to_coordinate(model, x, opts.frame, t)?;
    if v.iter().all(|c| *c == 0.0) {
        return Ok((vec![0.0; x.len()], v));
    }
    let (end, tangent) = shoot_endpoint(model, x, &v, 1.0, opts.steps)?;
    Ok((end.iter().zip(x).map(|(a, b)| a - b).collect(), tangent))
}

/// `K(x, t) = exp_x(h(x) t) − x`.
pub fn eval_k(model: &MetricModel, x: &ChartPoint, t: &[f64], opts: &GroupOptions) -> Result<Vec<f64>> {
    model.check_point(x)?;
    Ok(exp_displacement(model, x, t, opts)?.0)
}

/// `H^m(x, t̃)` by solving the connection problem.
pub fn eval_h_exact(
    model: &MetricModel,
    x: &ChartPoint,
    t: &[f64],
    guess: Option<Vec<f64>>,
    opts: &GroupOptions,
) -> Result<Vec<f64>> {
    if t.iter().all(|c| *c == 0.0) {
        return Ok(vec![0.0; t.len()]);
    }
    let xp = ChartPoint::new(x.offset(t).to_vec())?;
    let tau = connect(model, x, &xp, &opts.connect_options(guess))?;
    to_frame(model, x, opts.frame, &tau.components)
}

#[allow(clippy::too_many_arguments)]
fn radial_value(
    model: &MetricModel,
    x: &[f64],
    xp: &[f64],
    t: &[f64],
    tau: &[f64],
    scale: f64,
    end_tangent: &[f64],
    kind: FrameKind,
) -> Result<Vec<f64>> {
    let tt: f64 = tau.iter().map(|c| c * c).sum();
    if tt == 0.0 {
        return Ok(vec![0.0; tau.len()]);
    }
    let s1 = t.iter().zip(tau).map(|(a, b)| a * b).sum::<f64>() / tt;
    let off = t.iter().zip(tau).fold(0.0f64, |m, (a, b)| m.max((a - s1 * b).abs()));
    if off > 1e-8 * (1.0 + t.iter().fold(0.0f64, |m, c| m.max(c.abs()))) {
        return Err(Error::InvalidArgument(
            "radial field rule needs a first factor collinear with its direction".into(),
        ));
    }
    if s1 == 0.0 {
        return Ok(tau.iter().map(|c| c * scale).collect());
    }
    let _ = x;
    let unit: Vec<f64> = end_tangent.iter().map(|c| c / s1).collect();
    let frame = to_frame(model, xp, kind, &unit)?;
    Ok(frame.into_iter().map(|c| c * scale).collect())
}

/// `t″ = H(x, K(x,t) + K(x′, t′(x′)))` and `x′ = x + K(x, t)`.
pub fn multiply(
    model: &MetricModel,
    x: &ChartPoint,
    t: &[f64],
    rule: &FieldRule,
    opts: &GroupOptions,
) -> Result<(Vec<f64>, ChartPoint)> {
    model.check_point(x)?;
    let (k1, tangent) = exp_displacement(model, x, t, opts)?;
    let xp = model.point(x.offset(&k1).to_vec())?;
    let t2 = match rule {
        FieldRule::Constant(v) => v.clone(),
        FieldRule::Radial { tau, scale } => radial_value(model, x, &xp, t, tau, *scale, &tangent, opts.frame)?,
    };
    let product = multiply_at(model, x, &xp, &k1, &t2, Some(t.to_vec()), opts)?;
    Ok((product, xp))
}

/// `H(x, k1 + K(x′, t2))` given `k1 = K(x, t)` and `x′ = x + k1`.
fn multiply_at(
    model: &MetricModel,
    x: &ChartPoint,
    xp: &ChartPoint,
    k1: &[f64],
    t2: &[f64],
    guess: Option<Vec<f64>>,
    opts: &GroupOptions,
) -> Result<Vec<f64>> {
    let (k2, _) = exp_displacement(model, xp, t2, opts)?;
    let total: Vec<f64> = k1.iter().zip(&k2).map(|(a, b)| a + b).collect();
    let guess = guess.map(|g| to_coordinate(model, x, opts.frame, &g)).transpose()?;
    eval_h_exact(model, x, &total, guess, opts)
}

fn central<F>(f: &F, h: f64, richardson: bool) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<Vec<f64>> + Sync,
{
    let diff = |step: f64| -> Result<Vec<f64>> {
        let (p, m) = rayon::join(|| f(step), || f(-step));
        let (p, m) = (p?, m?);
        Ok(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * step)).collect())
    };
    let coarse = diff(h)?;
    if !richardson {
        return Ok(coarse);
    }
    let fine = diff(0.5 * h)?;
    Ok(fine.iter().zip(&coarse).map(|(a, b)| (4.0 * a - b) / 3.0).collect())
}

/// `λ(x,t)^m_n = ∂φ(x,t,t′)/∂t′ⁿ` and `μ(x,t)^m_n = ∂φ(x,t′,t)/∂t′ⁿ` at
/// `t′ = 0`, by central differences of [`multiply`]. The second factor of
/// `μ` keeps constant frame components.
pub fn aux_matrices(
    model: &MetricModel,
    x: &ChartPoint,
    t: &[f64],
    opts: &GroupOptions,
) -> Result<(TransportMatrix, TransportMatrix)> {
    let lam = lambda_fd(model, x, t, opts)?;
    let mu = mu_fd(model, x, t, opts)?;
    let (k1, _) = exp_displacement(model, x, t, opts)?;
    let xp = model.point(x.offset(&k1).to_vec())?;
    Ok((
        TransportMatrix::new(xp, x.clone(), lam, TransportKind::LambdaFd)?,
        TransportMatrix::new(x.clone(), x.clone(), mu, TransportKind::MuFd)?,
    ))
}

/// `λ(x, t)` by differences of the multiplication law.
pub fn lambda_fd(model: &MetricModel, x: &ChartPoint, t: &[f64], opts: &GroupOptions) -> Result<DMatrix<f64>> {
    model.check_point(x)?;
    let n = model.dimension();
    let (k1, _) = exp_displacement(model, x, t, opts)?;
    let xp = model.point(x.offset(&k1).to_vec())?;
    let base = t.to_vec();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let f = |step: f64| {
                let mut e = vec![0.0; n];
                e[j] = step;
                multiply_at(model, x, &xp, &k1, &e, Some(base.clone()), opts)
            };
            central(&f, opts.fd_step, opts.richardson)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
}

/// `μ(x, t)` by differences of the multiplication law.
pub fn mu_fd(model: &MetricModel, x: &ChartPoint, t: &[f64], opts: &GroupOptions) -> Result<DMatrix<f64>> {
    model.check_point(x)?;
    let n = model.dimension();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let f = |step: f64| {
                let mut e = vec![0.0; n];
                e[j] = step;
                let (k1, _) = exp_displacement(model, x, &e, opts)?;
                let xp = model.point(x.offset(&k1).to_vec())?;
                multiply_at(model, x, &xp, &k1, t, Some(t.to_vec()), opts)
            };
            central(&f, opts.fd_step, opts.richardson)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
}

/// `γ^m_{kn} = h^m_μ(Γ^μ_{κν} h^κ_k h^ν_n + h^κ_k ∂_κ h^μ_n)` at index
/// `(m n + k) n + n'`, with the frame derivative by five-point differences.
pub fn gamma_coefficients(model: &MetricModel, x: &ChartPoint, frame: &VielbeinFrame) -> Result<Vec<f64>> {
    model.check_point(x)?;
    let n = model.dimension();
    let gamma = model.christoffel(x, 0)?;
    let h = &frame.h;
    let hinv = &frame.hinv;
    // dh[κ] = ∂_κ h
    let dh: Vec<DMatrix<f64>> = match frame.kind {
        FrameKind::Coordinate => vec![DMatrix::zeros(n, n); n],
        kind => {
            let w = crate::manifold::central_weights(1, 2);
            (0..n)
                .map(|k| {
                    let step = fd_step(x[k]);
                    let mut acc = DMatrix::zeros(n, n);
                    for (o, wk) in w.iter().enumerate() {
                        if *wk == 0.0 {
                            continue;
                        }
                        let mut p = x.to_vec();
                        p[k] += (o as f64 - 2.0) * step;
                        if !model.contains(&p) {
                            return Err(Error::StencilOutsideDomain {
                                point: x.to_vec(),
                                reach: 2.0 * step,
                            });
                        }
                        acc += frame_at(model, &p, kind)?.h * (*wk / step);
                    }
                    Ok(acc)
                })
                .collect::<Result<_>>()?
        }
    };
    let mut out = vec![0.0; n * n * n];
    for m in 0..n {
        for k in 0..n {
            for nn in 0..n {
                let mut v = 0.0;
                for mu in 0..n {
                    let mut inner = 0.0;
                    for kap in 0..n {
                        for nu in 0..n {
                            inner += gamma.gamma(mu, kap, nu) * h[(kap, k)] * h[(nu, nn)];
                        }
                        inner += h[(kap, k)] * dh[kap][(mu, nn)];
                    }
                    v += hinv[(m, mu)] * inner;
                }
                out[(m * n + k) * n + nn] = v;
            }
        }
    }
    Ok(out)
}

/// `∂_k λ(x,t)^m_n` and `∂_n μ(x,t)^m_k` at `t = 0` by central differences
/// of [`lambda_fd`] and [`mu_fd`], both at index `(m n + k) n + n'`.
pub fn connection_from_aux(
    model: &MetricModel,
    x: &ChartPoint,
    step: f64,
    opts: &GroupOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = model.dimension();
    let mut from_lambda = vec![0.0; n * n * n];
    let mut from_mu = vec![0.0; n * n * n];
    for k in 0..n {
        let at = |s: f64| {
            let mut e = vec![0.0; n];
            e[k] = s;
            e
        };
        let (lp, lm) = rayon::join(
            || lambda_fd(model, x, &at(step), opts),
            || lambda_fd(model, x, &at(-step), opts),
        );
        let (mp, mm) = rayon::join(
            || mu_fd(model, x, &at(step), opts),
            || mu_fd(model, x, &at(-step), opts),
        );
        let dl = (lp? - lm?) / (2.0 * step);
        let dm = (mp? - mm?) / (2.0 * step);
        for m in 0..n {
            for j in 0..n {
                from_lambda[(m * n + k) * n + j] = dl[(m, j)];
                // ∂_k μ^m_j fills γ^m_{jk}
                from_mu[(m * n + j) * n + k] = dm[(m, j)];
            }
        }
    }
    Ok((from_lambda, from_mu))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CanonicalLaw {
    /// `|φ(x, s₁τ, s₂τ(s₁)) − (s₁+s₂)τ|∞`
    pub r28: f64,
    /// `|τ − λ(x, s₁τ)·τ(s₁)|∞`
    pub r29: f64,
    /// `|τ − μ(x, s₂τ)τ − s₂τ|∞`, the μ-form as printed.
    pub r30_printed: f64,
    /// `|τ − μ(x, s₂τ)τ − s₂τ̇|∞` with `τ̇ = −γττ`, the derivative reading.
    pub r30_derivative: f64,
}

/// Residuals of the canonical multiplication law along `exp_x(sτ)`.
pub fn canonical_law_residuals(
    model: &MetricModel,
    x: &ChartPoint,
    tau: &[f64],
    s1: f64,
    s2: f64,
    opts: &GroupOptions,
) -> Result<CanonicalLaw> {
    let n = model.dimension();
    let t: Vec<f64> = tau.iter().map(|c| c * s1).collect();
    let rule = FieldRule::Radial {
        tau: tau.to_vec(),
        scale: s2,
    };
    let (product, xp) = multiply(model, x, &t, &rule, opts)?;
    let r28 = product
        .iter()
        .zip(tau)
        .fold(0.0f64, |m, (p, c)| m.max((p - (s1 + s2) * c).abs()));

    let (_, tangent) = exp_displacement(model, x, &t, opts)?;
    let tau_s = radial_value(model, x, &xp, &t, tau, 1.0, &tangent, opts.frame)?;
    let lam = lambda_fd(model, x, &t, opts)?;
    let back = &lam * DVector::from_column_slice(&tau_s);
    let r29 = (DVector::from_column_slice(tau) - back).amax();

    let t2: Vec<f64> = tau.iter().map(|c| c * s2).collect();
    let mu = mu_fd(model, x, &t2, opts)?;
    let mu_tau = &mu * DVector::from_column_slice(tau);
    let frame = model.vielbein(x, opts.frame)?;
    let gamma = gamma_coefficients(model, x, &frame)?;
    let mut tau_dot = vec![0.0; n];
    for (m, td) in tau_dot.iter_mut().enumerate() {
        for k in 0..n {
            for j in 0..n {
                *td -= gamma[(m * n + k) * n + j] * tau[k] * tau[j];
            }
        }
    }
    let mut r30_printed = 0.0f64;
    let mut r30_derivative = 0.0f64;
    for m in 0..n {
        r30_printed = r30_printed.max((tau[m] - mu_tau[m] - s2 * tau[m]).abs());
        r30_derivative = r30_derivative.max((tau[m] - mu_tau[m] - s2 * tau_dot[m]).abs());
    }
    Ok(CanonicalLaw {
        r28,
        r29,
        r30_printed,
        r30_derivative,
    })
}

/// `|φ(φ(t,t′),t″) − φ(t,φ(t′,t″))|∞` for the collinear triple
/// `t = s₁τ`, `t′ = s₂τ(s₁)`, `t″ = s₃τ(s₁+s₂)`.
pub fn associativity_residual(
    model: &MetricModel,
    x: &ChartPoint,
    tau: &[f64],
    s: [f64; 3],
    opts: &GroupOptions,
) -> Result<f64> {
    let [s1, s2, s3] = s;
    let t: Vec<f64> = tau.iter().map(|c| c * s1).collect();
    // Left grouping: (t·t′)·t″, all products at x.
    let (tt, _) = multiply(
        model,
        x,
        &t,
        &FieldRule::Radial {
            tau: tau.to_vec(),
            scale: s2,
        },
        opts,
    )?;
    let (left, _) = multiply(
        model,
        x,
        &tt,
        &FieldRule::Radial {
            tau: tau.to_vec(),
            scale: s3,
        },
        opts,
    )?;
    // Right grouping: t·(t′·t″), the inner product at x′.
    let (k1, tangent) = exp_displacement(model, x, &t, opts)?;
    let xp = model.point(x.offset(&k1).to_vec())?;
    let tau1 = radial_value(model, x, &xp, &t, tau, 1.0, &tangent, opts.frame)?;
    let t_prime: Vec<f64> = tau1.iter().map(|c| c * s2).collect();
    let (inner, _) = multiply(
        model,
        &xp,
        &t_prime,
        &FieldRule::Radial {
            tau: tau1.clone(),
            scale: s3,
        },
        opts,
    )?;
    let right = multiply_at(model, x, &xp, &k1, &inner, None, opts)?;
    Ok(left.iter().zip(&right).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

/// `ρ^m_{lkn} = ∂²_{lk} μ(x,t)^m_n` at `t = 0` by nested central differences,
/// at index `((m n + l) n + k) n + n'`.
pub fn rho_from_mu(model: &MetricModel, x: &ChartPoint, opts: &GroupOptions) -> Result<Vec<f64>> {
    let n = model.dimension();
    let mu_at = |t: Vec<f64>| mu_fd(model, x, &t, opts);
    let second = |h: f64| -> Result<Vec<DMatrix<f64>>> {
        let e = |pairs: &[(usize, f64)]| {
            let mut v = vec![0.0; n];
            for &(i, s) in pairs {
                v[i] += s;
            }
            v
        };
        let center = mu_at(vec![0.0; n])?;
        let mut out = vec![DMatrix::zeros(n, n); n * n];
        let jobs: Vec<(usize, usize)> = (0..n).flat_map(|l| (l..n).map(move |k| (l, k))).collect();
        let results: Vec<DMatrix<f64>> = jobs
            .par_iter()
            .map(|&(l, k)| -> Result<DMatrix<f64>> {
                if l == k {
                    let p = mu_at(e(&[(l, h)]))?;
                    let m = mu_at(e(&[(l, -h)]))?;
                    Ok((p - &center * 2.0 + m) / (h * h))
                } else {
                    let pp = mu_at(e(&[(l, h), (k, h)]))?;
                    let pm = mu_at(e(&[(l, h), (k, -h)]))?;
                    let mp = mu_at(e(&[(l, -h), (k, h)]))?;
                    let mm = mu_at(e(&[(l, -h), (k, -h)]))?;
                    Ok((pp - pm - mp + mm) / (4.0 * h * h))
                }
            })
            .collect::<Result<_>>()?;
        for (&(l, k), d) in jobs.iter().zip(results) {
            out[l * n + k] = d.clone();
            out[k * n + l] = d;
        }
        Ok(out)
    };
    let coarse = second(opts.rho_step)?;
    let d2 = if opts.richardson {
        let fine = second(0.5 * opts.rho_step)?;
        fine.iter().zip(&coarse).map(|(a, b)| (a * 4.0 - b) / 3.0).collect()
    } else {
        coarse
    };
    let mut rho = vec![0.0; n.pow(4)];
    for m in 0..n {
        for l in 0..n {
            for k in 0..n {
                for j in 0..n {
                    rho[((m * n + l) * n + k) * n + j] = d2[l * n + k][(m, j)];
                }
            }
        }
    }
    Ok(rho)
}

/// Jet of `H′ = L·H`.
pub fn reframe_jet(jet: &DeformationJet, l: &DMatrix<f64>) -> Result<DeformationJet> {
    jet.reframe(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2};

    #[test]
    fn k_examples() {
        let opts = GroupOptions {
            steps: 1000,
            ..GroupOptions::default()
        };
        let h = MetricModel::halfplane();
        let x = h.point(vec![0.0, 1.0]).unwrap();
        let k = eval_k(&h, &x, &[0.0, 1.0], &opts).unwrap();
        assert!(k[0].abs() < 1e-15 && (k[1] - (E - 1.0)).abs() < 1e-8);
        assert_eq!(eval_k(&h, &x, &[0.0, 0.0], &opts).unwrap(), vec![0.0, 0.0]);
        let f = MetricModel::flat(2).unwrap();
        let x = f.point(vec![1.0, 1.0]).unwrap();
        let k = eval_k(&f, &x, &[0.3, 0.2], &opts).unwrap();
        assert!((k[0] - 0.3).abs() < 1e-15 && (k[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn flat_multiplication_adds() {
        let f = MetricModel::flat(2).unwrap();
        let x = f.point(vec![1.0, 1.0]).unwrap();
        let opts = GroupOptions::default();
        let (p, xp) = multiply(&f, &x, &[0.3, 0.2], &FieldRule::Constant(vec![-0.1, 0.4]), &opts).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-15 && (p[1] - 0.6).abs() < 1e-15);
        assert_eq!(xp.coords(), &[1.3, 1.2]);
        let (lam, mu) = aux_matrices(&f, &x, &[0.3, 0.2], &opts).unwrap();
        let (el, em) = (
            (lam.m - DMatrix::identity(2, 2)).amax(),
            (mu.m - DMatrix::identity(2, 2)).amax(),
        );
        assert!(el < 1e-9 && em < 1e-9, "{el:e} {em:e}");
    }

    #[test]
    fn right_identity() {
        let s = MetricModel::sphere2(1.0).unwrap();
        let x = s.point(vec![1.0, 0.2]).unwrap();
        let (p, _) = multiply(
            &s,
            &x,
            &[0.1, -0.2],
            &FieldRule::Constant(vec![0.0, 0.0]),
            &GroupOptions::default(),
        )
        .unwrap();
        assert!((p[0] - 0.1).abs() < 1e-12 && (p[1] + 0.2).abs() < 1e-12);
    }

    #[test]
    fn coordinate_gamma_is_christoffel() {
        let s = MetricModel::sphere2(1.0).unwrap();
        let x = s.point(vec![0.9, 0.0]).unwrap();
        let frame = s.vielbein(&x, FrameKind::Coordinate).unwrap();
        let g = gamma_coefficients(&s, &x, &frame).unwrap();
        let c = s.christoffel(&x, 0).unwrap();
        assert_eq!(g.as_slice(), c.as_slice());
    }

    #[test]
    fn orthonormal_halfplane_gamma_is_constant() {
        let h = MetricModel::halfplane();
        let mut prev: Option<Vec<f64>> = None;
        for y in [0.5, 1.0, 3.0] {
            let x = h.point(vec![0.2, y]).unwrap();
            let frame = h.vielbein(&x, FrameKind::Orthonormal).unwrap();
            let g = gamma_coefficients(&h, &x, &frame).unwrap();
            if let Some(p) = &prev {
                for (a, b) in g.iter().zip(p) {
                    assert!((a - b).abs() < 1e-9, "{a} {b}");
                }
            }
            prev = Some(g);
        }
    }

    #[test]
    fn equator_canonical_law() {
        let s = MetricModel::sphere2(1.0).unwrap();
        let x = s.point(vec![FRAC_PI_2, 0.0]).unwrap();
        let r = canonical_law_residuals(&s, &x, &[0.0, 1.0], 0.2, 0.2, &GroupOptions::default()).unwrap();
        assert!(r.r28 < 1e-6 && r.r29 < 1e-6, "{r:?}");
        assert!(r.r30_derivative < 1e-6, "{r:?}");
        assert!((r.r30_printed - 0.2).abs() < 1e-6, "{r:?}");
    }
}
