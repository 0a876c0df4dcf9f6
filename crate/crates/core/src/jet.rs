//! Truncated Taylor jets of the deformation function `H^μ(x, t̃)`.
//!
//! For a canonical deformation `H(x, ·)` is the chart logarithm map: the
//! initial velocity of the geodesic from `x` that reaches `x + t̃` at `s = 1`.
//! Its jet is built order by order from the connection coefficients and their
//! derivatives; [`jet_from_log_samples`] fits the same coefficients to
//! numerically integrated geodesics for cross-validation.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::geodesic::{connect, shoot_endpoint, ConnectOptions};
use crate::manifold::{norm, ChartPoint, CurvatureTensor, MetricModel};
use crate::numfmt::{raw17, raw17_vec};
use crate::taylor::{matrix_inverse, MonomialBasis, TaylorPoly};
use crate::transport::{TransportKind, TransportMatrix};

pub const MIN_JET_ORDER: usize = 2;
pub const MAX_JET_ORDER: usize = 12;
pub const DEFAULT_JET_ORDER: usize = 6;

/// How the order-`d` coefficients are obtained from lower orders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetRecurrence {
    /// `∂²H[W,W] = ∂H·Γ(x+t̃)[W,W]` with `W = λ⁻¹H`, the tangent at `x + t̃`
    /// of the geodesic from `x`. Exact at every order.
    AlongGeodesic,
    /// The same equation contracted with `t̃` instead of `W`. Agrees with the
    /// logarithm map through third order and departs from it at fourth.
    Displayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetSource {
    Recurrence(JetRecurrence),
    LogFit,
}

#[derive(Debug, Clone)]
pub struct DeformationJet {
    base: ChartPoint,
    order: usize,
    /// `H^m = L^m_μ H^μ`, frame components.
    series: Vec<TaylorPoly>,
    /// Coordinate components `H^μ`.
    coord: Vec<TaylorPoly>,
    /// `∂_ν H^μ` at `μ n + ν`.
    lambda: Vec<TaylorPoly>,
    frame: DMatrix<f64>,
    trust_radius: f64,
    eval_radius: f64,
    source: JetSource,
}

fn check_order(order: usize) -> Result<()> {
    if !(MIN_JET_ORDER..=MAX_JET_ORDER).contains(&order) {
        return Err(Error::JetOrder {
            order,
            min: MIN_JET_ORDER,
            max: MAX_JET_ORDER,
        });
    }
    Ok(())
}

impl DeformationJet {
    fn from_coordinate_series(
        model: &MetricModel,
        base: ChartPoint,
        order: usize,
        coord: Vec<TaylorPoly>,
        source: JetSource,
    ) -> Self {
        let n = coord.len();
        let lambda = coord
            .iter()
            .flat_map(|h| (0..n).map(move |v| h.derivative(v)))
            .collect();
        let locality = model.locality_radius(&base);
        Self {
            base,
            order,
            series: coord.clone(),
            coord,
            lambda,
            frame: DMatrix::identity(n, n),
            trust_radius: 0.5 * locality,
            eval_radius: locality,
            source,
        }
    }

    pub fn base(&self) -> &ChartPoint {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dimension(&self) -> usize {
        self.coord.len()
    }

    /// Radius within which truncation error is expected to stay subdominant.
    pub fn trust_radius(&self) -> f64 {
        self.trust_radius
    }

    /// Largest `|t̃|` accepted by the evaluators.
    pub fn eval_radius(&self) -> f64 {
        self.eval_radius
    }

    pub fn source(&self) -> JetSource {
        self.source
    }

    /// Frame matrix `L` applied by [`DeformationJet::reframe`].
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// `C^m_{ν₁…ν_k} = ∂_{ν̃₁}…∂_{ν̃_k} H^m(x, 0)`, zero above the jet order.
    pub fn coefficient(&self, m: usize, nus: &[usize]) -> f64 {
        if nus.len() > self.order {
            return 0.0;
        }
        self.series[m].partial(nus).unwrap_or(0.0)
    }

    /// Every coefficient of order `1..=N` over sorted multi-indices, ordered by
    /// order, component and multi-index.
    pub fn coefficients(&self) -> Vec<(usize, Vec<usize>, f64)> {
        let n = self.dimension();
        let mut out = Vec::new();
        for k in 1..=self.order {
            for m in 0..n {
                for nus in sorted_multi_indices(n, k) {
                    out.push((m, nus.clone(), self.coefficient(m, &nus)));
                }
            }
        }
        out
    }

    fn check_radius(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: t.len(),
            });
        }
        let r = norm(t);
        if !(r <= self.eval_radius) {
            return Err(Error::TrustRadius {
                norm: r,
                radius: self.eval_radius,
            });
        }
        Ok(())
    }

    /// Truncated series `H^m(x, t̃)` (frame components).
    pub fn eval_h(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.check_radius(t)?;
        Ok(self.series.iter().map(|p| p.eval(t)).collect())
    }

    /// Coordinate components `H^μ(x, t̃)`.
    pub fn eval_h_coordinate(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.check_radius(t)?;
        Ok(self.coord.iter().map(|p| p.eval(t)).collect())
    }

    /// `λ^μ_ν = ∂_{ν̃} H^μ(x, t̃)` in the coordinate basis.
    pub fn lambda_matrix(&self, t: &[f64]) -> Result<DMatrix<f64>> {
        self.check_radius(t)?;
        let n = self.dimension();
        Ok(DMatrix::from_fn(n, n, |mu, nu| self.lambda[mu * n + nu].eval(t)))
    }

    /// `λ(x, t̃)` as a transport from `x + t̃` back to `x`.
    pub fn eval_lambda(&self, t: &[f64]) -> Result<TransportMatrix> {
        let m = self.lambda_matrix(t)?;
        TransportMatrix::new(self.base.offset(t), self.base.clone(), m, TransportKind::LambdaJet)
    }

    /// `∂²_{ρ̃σ̃} H^μ(x, t̃)` at index `(μ n + ρ) n + σ`, coordinate basis.
    pub fn hessian(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.check_radius(t)?;
        let n = self.dimension();
        let mut out = vec![0.0; n * n * n];
        for mu in 0..n {
            for r in 0..n {
                let d = self.lambda[mu * n + r].derivative(r);
                out[(mu * n + r) * n + r] = d.eval(t);
                for s in (r + 1)..n {
                    let v = self.lambda[mu * n + r].derivative(s).eval(t);
                    out[(mu * n + r) * n + s] = v;
                    out[(mu * n + s) * n + r] = v;
                }
            }
        }
        Ok(out)
    }

    /// The jet of `H' = L·H` for an invertible `L = L(x)` at the base point.
    pub fn reframe(&self, l: &DMatrix<f64>) -> Result<Self> {
        let n = self.dimension();
        if l.nrows() != n || l.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: l.nrows(),
            });
        }
        let det = l.determinant();
        if !(det.abs() > 1e-12) || !det.is_finite() {
            return Err(Error::SingularMatrix);
        }
        let frame = l * &self.frame;
        let basis = self.coord[0].basis().clone();
        let series = (0..n)
            .map(|m| {
                let mut p = TaylorPoly::zero(&basis);
                for mu in 0..n {
                    if frame[(m, mu)] != 0.0 {
                        p.axpy(frame[(m, mu)], &self.coord[mu]);
                    }
                }
                p
            })
            .collect();
        Ok(Self {
            series,
            frame,
            ..self.clone()
        })
    }

    /// JSON dump: base point, order and `{"mu,nu1,..,nuk": value}`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump {
            base: Box<RawValue>,
            order: usize,
            coefficients: BTreeMap<String, Box<RawValue>>,
        }
        let coefficients = self
            .coefficients()
            .into_iter()
            .map(|(m, nus, v)| {
                let mut key = m.to_string();
                for nu in nus {
                    key.push(',');
                    key.push_str(&nu.to_string());
                }
                (key, raw17(v))
            })
            .collect();
        let dump = Dump {
            base: raw17_vec(self.base.coords()),
            order: self.order,
            coefficients,
        };
        serde_json::to_string_pretty(&dump).expect("serializable")
    }
}

/// Non-decreasing index tuples of length `k` over `0..n`.
pub fn sorted_multi_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Jet of the canonical deformation at `x` through order `order`.
pub fn deformation_jet(model: &MetricModel, x: &ChartPoint, order: usize) -> Result<DeformationJet> {
    deformation_jet_with(model, x, order, JetRecurrence::AlongGeodesic)
}

pub fn deformation_jet_with(
    model: &MetricModel,
    x: &ChartPoint,
    order: usize,
    recurrence: JetRecurrence,
) -> Result<DeformationJet> {
    check_order(order)?;
    model.check_point(x)?;
    let n = model.dimension();
    let max = model.max_deriv_order();
    if order - 2 > max {
        return Err(Error::DerivativeOrder {
            requested: order - 2,
            max,
        });
    }
    let gamma = model.christoffel_taylor(x, order - 2)?;
    let top = MonomialBasis::new(n, order);
    let mut h: Vec<TaylorPoly> = (0..n).map(|m| TaylorPoly::variable(&top, m, 0.0)).collect();
    for d in 2..=order {
        let basis = MonomialBasis::new(n, d);
        let hd: Vec<TaylorPoly> = h.iter().map(|p| p.rebased(&basis)).collect();
        let gd: Vec<TaylorPoly> = gamma.iter().map(|p| p.rebased(&basis)).collect();
        let step = recurrence_step(n, d, &basis, &hd, &gd, recurrence)?;
        for (hm, q) in h.iter_mut().zip(step) {
            hm.add_assign(&q.rebased(&top));
        }
    }
    Ok(DeformationJet::from_coordinate_series(
        model,
        x.clone(),
        order,
        h,
        JetSource::Recurrence(recurrence),
    ))
}

/// Homogeneous degree-`d` part `Q_d` of `H` given `H` through degree `d − 1`.
fn recurrence_step(
    n: usize,
    d: usize,
    basis: &Arc<MonomialBasis>,
    h: &[TaylorPoly],
    gamma: &[TaylorPoly],
    recurrence: JetRecurrence,
) -> Result<Vec<TaylorPoly>> {
    let dh: Vec<TaylorPoly> = h.iter().flat_map(|p| (0..n).map(move |v| p.derivative(v))).collect();
    let w: Vec<TaylorPoly> = match recurrence {
        JetRecurrence::Displayed => (0..n).map(|m| TaylorPoly::variable(basis, m, 0.0)).collect(),
        JetRecurrence::AlongGeodesic => {
            let inv = matrix_inverse(&dh, n)?;
            (0..n)
                .map(|m| {
                    let mut acc = TaylorPoly::zero(basis);
                    for k in 0..n {
                        inv[m * n + k].mul_acc(&h[k], 1.0, &mut acc);
                    }
                    acc.truncated(d - 1)
                })
                .collect()
        }
    };
    let mut ww = vec![TaylorPoly::zero(basis); n * n];
    for r in 0..n {
        for s in r..n {
            let p = w[r].mul(&w[s]);
            ww[s * n + r] = p.clone();
            ww[r * n + s] = p;
        }
    }
    let contract = |coeffs: &dyn Fn(usize, usize) -> Option<TaylorPoly>| -> TaylorPoly {
        let mut acc = TaylorPoly::zero(basis);
        for r in 0..n {
            for s in 0..n {
                if let Some(c) = coeffs(r, s) {
                    if !c.is_zero() {
                        c.mul_acc(&ww[r * n + s], 1.0, &mut acc);
                    }
                }
            }
        }
        acc
    };
    let gww: Vec<TaylorPoly> = (0..n)
        .map(|nu| contract(&|r, s| Some(gamma[(nu * n + r) * n + s].clone())))
        .collect();
    let mut out = Vec::with_capacity(n);
    for mu in 0..n {
        let mut rhs = TaylorPoly::zero(basis);
        for nu in 0..n {
            dh[mu * n + nu].mul_acc(&gww[nu], 1.0, &mut rhs);
        }
        if recurrence == JetRecurrence::AlongGeodesic {
            let lower = contract(&|r, s| Some(dh[mu * n + r].derivative(s)));
            rhs = rhs.sub(&lower);
        }
        out.push(rhs.homogeneous(d).scale(1.0 / (d * (d - 1)) as f64));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LogFitOptions {
    /// Radius of the ball of initial velocities, as a fraction of the
    /// locality radius (a fixed 0.5 for unbounded models).
    pub radius_fraction: f64,
    /// Degree of the fitted polynomial above the jet order.
    pub extra_degree: usize,
    /// Upper bound on the number of fitted monomials.
    pub max_monomials: usize,
    pub samples_per_monomial: usize,
    pub steps: usize,
    pub seed: u64,
    pub max_condition: f64,
}

impl Default for LogFitOptions {
    fn default() -> Self {
        Self {
            radius_fraction: 0.2,
            extra_degree: 8,
            max_monomials: 500,
            samples_per_monomial: 3,
            steps: 256,
            seed: 0x6a65_7466_6974,
            max_condition: 1e10,
        }
    }
}

/// Least-squares fit of `t̃ ↦ τ` over sampled geodesic endpoints
/// `t̃ = exp_x(τ) − x`, truncated to order `order`.
pub fn jet_from_log_samples(model: &MetricModel, x: &ChartPoint, order: usize) -> Result<DeformationJet> {
    jet_from_log_samples_with(model, x, order, &LogFitOptions::default())
}

pub fn jet_from_log_samples_with(
    model: &MetricModel,
    x: &ChartPoint,
    order: usize,
    opts: &LogFitOptions,
) -> Result<DeformationJet> {
    check_order(order)?;
    model.check_point(x)?;
    let n = model.dimension();
    let mut degree = order + opts.extra_degree;
    while degree > order && MonomialBasis::new(n, degree).len() > opts.max_monomials {
        degree -= 1;
    }
    let fit_basis = MonomialBasis::new(n, degree);
    let columns = fit_basis.len();
    let count = (opts.samples_per_monomial * columns).max(columns + 1);

    let locality = model.locality_radius(x);
    let radius = if locality.is_finite() {
        opts.radius_fraction * locality
    } else {
        0.5
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let mut velocities = Vec::with_capacity(count);
    while velocities.len() < count {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        if norm(&v) <= 1.0 {
            velocities.push(v.into_iter().map(|c| c * radius).collect::<Vec<_>>());
        }
    }
    let displacements: Vec<Vec<f64>> = velocities
        .par_iter()
        .map(|tau| {
            let (end, _) = shoot_endpoint(model, x, tau, 1.0, opts.steps)?;
            Ok(end.iter().zip(x.iter()).map(|(a, b)| a - b).collect())
        })
        .collect::<Result<_>>()?;

    let scale = displacements.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::DegenerateFit {
            points: 0,
            required: columns,
        });
    }
    let mut design = DMatrix::zeros(count, columns);
    for (i, t) in displacements.iter().enumerate() {
        let u: Vec<f64> = t.iter().map(|v| v / scale).collect();
        for j in 0..columns {
            let mut term = 1.0;
            for (v, &e) in fit_basis.exponents(j).iter().enumerate() {
                term *= u[v].powi(e as i32);
            }
            design[(i, j)] = term;
        }
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = smax / smin;
    if !(condition <= opts.max_condition) {
        return Err(Error::IllConditionedFit { condition });
    }
    let top = MonomialBasis::new(n, order);
    let mut coord = Vec::with_capacity(n);
    for m in 0..n {
        let rhs = DVector::from_iterator(count, velocities.iter().map(|v| v[m]));
        let sol = svd
            .solve(&rhs, 0.0)
            .map_err(|_| Error::IllConditionedFit { condition })?;
        let mut coeffs = vec![0.0; top.len()];
        for j in 0..columns {
            let k = fit_basis.degree_of(j);
            if k <= order {
                let idx = top
                    .index_of(fit_basis.exponents(j))
                    .expect("lower-degree monomial exists in the truncated basis");
                coeffs[idx] = sol[j] / scale.powi(k as i32);
            }
        }
        coord.push(TaylorPoly::from_coeffs(&top, coeffs));
    }
    Ok(DeformationJet::from_coordinate_series(
        model,
        x.clone(),
        order,
        coord,
        JetSource::LogFit,
    ))
}

/// Largest componentwise difference between the coefficients of two jets of
/// equal dimension, over orders `1..=order`.
pub fn max_coefficient_difference(a: &DeformationJet, b: &DeformationJet, order: usize) -> f64 {
    let n = a.dimension();
    let mut worst = 0.0f64;
    for k in 1..=order {
        for m in 0..n {
            for nus in sorted_multi_indices(n, k) {
                worst = worst.max((a.coefficient(m, &nus) - b.coefficient(m, &nus)).abs());
            }
        }
    }
    worst
}

/// Tangent at `x + t̃` of the geodesic from `x` that reaches it at `s = 1`.
pub fn geodesic_tangent_at(
    model: &MetricModel,
    x: &ChartPoint,
    t: &[f64],
    opts: &ConnectOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let xp = ChartPoint::new(x.offset(t).to_vec())?;
    let tau = connect(model, x, &xp, opts)?;
    let (_, end_tangent) = shoot_endpoint(model, x, &tau.components, 1.0, opts.steps)?;
    Ok((tau.components, end_tangent))
}

/// `max_μ |[∂²H^μ − Γ(x+t̃)^ν_{ρσ} ∂_ν H^μ] τ'^ρ τ'^σ|` with coordinate `H`
/// recovered from frame components.
pub fn canonicity_residual(model: &MetricModel, jet: &DeformationJet, t: &[f64], tau_prime: &[f64]) -> Result<f64> {
    let n = jet.dimension();
    let hess = series_hessian(jet, t)?;
    let dh = series_jacobian(jet, t)?;
    let xp = jet.base().offset(t);
    model.check_point(&xp)?;
    let gamma = model.christoffel_values(&xp)?;
    let mut r = vec![0.0; n];
    for (m, rm) in r.iter_mut().enumerate() {
        for a in 0..n {
            for b in 0..n {
                let mut v = hess[(m * n + a) * n + b];
                for nu in 0..n {
                    v -= gamma[(nu * n + a) * n + b] * dh[(m, nu)];
                }
                *rm += v * tau_prime[a] * tau_prime[b];
            }
        }
    }
    let finv = jet.frame().clone().try_inverse().ok_or(Error::SingularMatrix)?;
    let coord = finv * DVector::from_column_slice(&r);
    Ok(coord.amax())
}

fn series_jacobian(jet: &DeformationJet, t: &[f64]) -> Result<DMatrix<f64>> {
    jet.check_radius(t)?;
    let n = jet.dimension();
    Ok(DMatrix::from_fn(n, n, |m, v| jet.series[m].derivative(v).eval(t)))
}

fn series_hessian(jet: &DeformationJet, t: &[f64]) -> Result<Vec<f64>> {
    jet.check_radius(t)?;
    let n = jet.dimension();
    let mut out = vec![0.0; n * n * n];
    for m in 0..n {
        for a in 0..n {
            let da = jet.series[m].derivative(a);
            for b in 0..n {
                out[(m * n + a) * n + b] = da.derivative(b).eval(t);
            }
        }
    }
    Ok(out)
}

/// `ρ^μ_{νρτ} = (R^μ_{νρτ} + R^μ_{ρντ}) / 3` together with its skew part
/// `ρ^μ_{νρτ} − ρ^μ_{ντρ}`, which reproduces `R`.
pub fn rho_coefficients(model: &MetricModel, x: &ChartPoint) -> Result<(Vec<f64>, CurvatureTensor)> {
    let r = model.riemann(x)?;
    let n = model.dimension();
    let idx = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
    let mut rho = vec![0.0; n.pow(4)];
    for m in 0..n {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    rho[idx(m, a, b, c)] = (r.get(m, a, b, c) + r.get(m, b, a, c)) / 3.0;
                }
            }
        }
    }
    Ok((rho.clone(), skew_part(x, n, &rho)))
}

/// `R^m_{lkn} = ρ^m_{lkn} − ρ^m_{lnk}` for `ρ` at index `((m n + l) n + k) n + n'`.
pub fn skew_part(base: &ChartPoint, n: usize, rho: &[f64]) -> CurvatureTensor {
    let idx = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
    let mut r = vec![0.0; n.pow(4)];
    for m in 0..n {
        for l in 0..n {
            for k in 0..n {
                for v in 0..n {
                    r[idx(m, l, k, v)] = rho[idx(m, l, k, v)] - rho[idx(m, l, v, k)];
                }
            }
        }
    }
    CurvatureTensor::from_components(base.clone(), n, r)
}

/// Largest fully symmetrized component `|ρ^m_{\{lkn\}}|` (normalized average
/// over the six orderings of the lower indices).
pub fn symmetrized_max(n: usize, rho: &[f64]) -> f64 {
    let idx = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
    let mut worst = 0.0f64;
    for m in 0..n {
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let s = rho[idx(m, a, b, c)]
                        + rho[idx(m, a, c, b)]
                        + rho[idx(m, b, a, c)]
                        + rho[idx(m, b, c, a)]
                        + rho[idx(m, c, a, b)]
                        + rho[idx(m, c, b, a)];
                    worst = worst.max((s / 6.0).abs());
                }
            }
        }
    }
    worst
}
