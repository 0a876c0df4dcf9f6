//! Chart-local geometry: metric models, connection coefficients, curvature
//! and vielbein frames.
//!
//! Every model lives on a single coordinate chart. Metric components are
//! closed-form expressions (catalog entries are built the same way), so all
//! metric derivatives come from Taylor-mode evaluation. Models built from an
//! opaque closure fall back to finite differences, and connection-only models
//! carry an affine connection without any metric.

mod connection;
mod fd;
mod frame;
mod spec;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{DualAlgebra, Expr, Predicate, TaylorAlgebra, DUAL_CAPACITY};
use crate::taylor::{MonomialBasis, TaylorPoly};

pub use connection::{ConnectionCoefficients, CurvatureTensor, MAX_DERIV_ORDER};
pub use fd::{central_weights, fd_step};
pub use frame::{FrameKind, VielbeinFrame};
pub use spec::{load_manifold, ManifoldSpec};

/// Below this `|det g|` a metric is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

/// A point in the chart, `x^μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint(Vec<f64>);

impl ChartPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidArgument("empty chart point".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite chart point {coords:?}")));
        }
        Ok(Self(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `self + d`, unchecked against any domain.
    pub fn offset(&self, d: &[f64]) -> Self {
        Self(self.0.iter().zip(d).map(|(a, b)| a + b).collect())
    }

    /// `other - self`
    pub fn displacement_to(&self, other: &ChartPoint) -> Displacement {
        Displacement(other.0.iter().zip(&self.0).map(|(a, b)| a - b).collect())
    }
}

impl std::ops::Deref for ChartPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A chart displacement `t̃ = x' - x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement(pub Vec<f64>);

impl Displacement {
    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl std::ops::Deref for Displacement {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameTag {
    Coordinate,
    Vielbein,
}

/// Components of a vector attached to `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: ChartPoint,
    pub components: Vec<f64>,
    pub frame: FrameTag,
}

impl TangentVector {
    pub fn coordinate(base: ChartPoint, components: Vec<f64>) -> Self {
        Self {
            base,
            components,
            frame: FrameTag::Coordinate,
        }
    }
}

/// How a model sizes its locality radius, in chart units.
#[derive(Debug, Clone, PartialEq)]
pub enum ScaleRule {
    /// No curvature or chart singularity limits the neighborhood.
    Unbounded,
    Constant(f64),
    /// The value of one coordinate (distance to a boundary at zero).
    Coordinate(usize),
    /// One radian of colatitude, shrunk near the coordinate poles.
    Colatitude,
}

type MetricFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Geometry {
    /// Row-major `n × n` metric components.
    Metric(Vec<Expr>),
    /// Opaque metric evaluator returning row-major `n × n` components.
    MetricFn(MetricFn),
    /// `Γ^μ_{σν}` at index `(μ n + σ) n + ν`.
    Connection(Vec<Expr>),
}

/// A chart-local manifold.
#[derive(Clone)]
pub struct MetricModel {
    id: String,
    dimension: usize,
    geometry: Geometry,
    domain: Predicate,
    scale: ScaleRule,
    known_curvature: Option<f64>,
}

impl fmt::Debug for MetricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.geometry {
            Geometry::Metric(_) => "metric",
            Geometry::MetricFn(_) => "metric-fn",
            Geometry::Connection(_) => "connection",
        };
        f.debug_struct("MetricModel")
            .field("id", &self.id)
            .field("dimension", &self.dimension)
            .field("kind", &kind)
            .field("scale", &self.scale)
            .finish()
    }
}

fn num(c: f64) -> Expr {
    Expr::Num(c)
}

fn diagonal(entries: Vec<Expr>) -> Vec<Expr> {
    let n = entries.len();
    let mut out = vec![num(0.0); n * n];
    for (i, e) in entries.into_iter().enumerate() {
        out[i * n + i] = e;
    }
    out
}

impl MetricModel {
    /// Euclidean `R^n` in Cartesian coordinates.
    pub fn flat(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("flat(n) needs n >= 1".into()));
        }
        Ok(Self {
            id: format!("flat{n}"),
            dimension: n,
            geometry: Geometry::Metric(diagonal(vec![num(1.0); n])),
            domain: Predicate::True,
            scale: ScaleRule::Unbounded,
            known_curvature: Some(0.0),
        })
    }

    /// The Euclidean plane in polar coordinates `(r, φ)`, `g = diag(1, r²)`.
    pub fn polar_flat() -> Self {
        Self {
            id: "polar_flat".into(),
            dimension: 2,
            geometry: Geometry::Metric(diagonal(vec![
                num(1.0),
                Expr::parse("x0^2", 2).expect("catalog expression"),
            ])),
            domain: Predicate::parse("x0 > 0", 2).expect("catalog domain"),
            scale: ScaleRule::Coordinate(0),
            known_curvature: Some(0.0),
        }
    }

    /// Round sphere of radius `r` in colatitude/longitude `(θ, φ)`.
    pub fn sphere2(r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidParameter(format!("sphere radius {r}")));
        }
        let r2 = r * r;
        let gphi = Expr::Mul(
            Box::new(num(r2)),
            Box::new(Expr::parse("sin(x0)^2", 2).expect("catalog expression")),
        );
        Ok(Self {
            id: if r == 1.0 {
                "sphere2".into()
            } else {
                format!("sphere2(R={r})")
            },
            dimension: 2,
            geometry: Geometry::Metric(diagonal(vec![num(r2), gphi])),
            domain: Predicate::parse("0 < x0 < pi", 2).expect("catalog domain"),
            scale: ScaleRule::Colatitude,
            known_curvature: Some(1.0 / r2),
        })
    }

    /// Poincaré upper half-plane, `g = diag(1/y², 1/y²)`.
    pub fn halfplane() -> Self {
        let c = Expr::parse("1/x1^2", 2).expect("catalog expression");
        Self {
            id: "halfplane".into(),
            dimension: 2,
            geometry: Geometry::Metric(diagonal(vec![c.clone(), c])),
            domain: Predicate::parse("x1 > 0", 2).expect("catalog domain"),
            scale: ScaleRule::Coordinate(1),
            known_curvature: Some(-1.0),
        }
    }

    /// The built-in catalog used by the verification harness.
    pub fn catalog() -> Vec<Self> {
        vec![
            Self::flat(2).expect("valid"),
            Self::flat(3).expect("valid"),
            Self::polar_flat(),
            Self::sphere2(1.0).expect("valid"),
            Self::halfplane(),
        ]
    }

    /// A metric given by row-major component expressions.
    pub fn from_metric_exprs(
        id: impl Into<String>,
        dimension: usize,
        components: Vec<Expr>,
        domain: Predicate,
        scale: ScaleRule,
    ) -> Result<Self> {
        if components.len() != dimension * dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension * dimension,
                found: components.len(),
            });
        }
        check_vars(&components, dimension)?;
        let model = Self {
            id: id.into(),
            dimension,
            geometry: Geometry::Metric(components),
            domain,
            scale,
            known_curvature: None,
        };
        model.check_symmetric()?;
        Ok(model)
    }

    /// An affine connection without a metric, `Γ^μ_{σν}` at `(μ n + σ) n + ν`.
    pub fn from_connection_exprs(
        id: impl Into<String>,
        dimension: usize,
        components: Vec<Expr>,
        domain: Predicate,
        scale: ScaleRule,
    ) -> Result<Self> {
        let n = dimension;
        if components.len() != n * n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n * n,
                found: components.len(),
            });
        }
        check_vars(&components, dimension)?;
        for mu in 0..n {
            for s in 0..n {
                for v in (s + 1)..n {
                    if components[(mu * n + s) * n + v] != components[(mu * n + v) * n + s] {
                        return Err(Error::Torsion { mu, sigma: s, nu: v });
                    }
                }
            }
        }
        Ok(Self {
            id: id.into(),
            dimension,
            geometry: Geometry::Connection(components),
            domain,
            scale,
            known_curvature: None,
        })
    }

    /// A metric from an opaque evaluator; derivatives use finite differences.
    pub fn from_metric_fn<F>(
        id: impl Into<String>,
        dimension: usize,
        metric: F,
        domain: Predicate,
        scale: ScaleRule,
    ) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            id: id.into(),
            dimension,
            geometry: Geometry::MetricFn(Arc::new(metric)),
            domain,
            scale,
            known_curvature: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn has_metric(&self) -> bool {
        !matches!(self.geometry, Geometry::Connection(_))
    }

    /// Constant sectional curvature, when the model is known to have one.
    pub fn known_curvature(&self) -> Option<f64> {
        self.known_curvature
    }

    pub fn is_flat(&self) -> bool {
        self.known_curvature == Some(0.0)
    }

    pub fn scale_rule(&self) -> &ScaleRule {
        &self.scale
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension && x.iter().all(|c| c.is_finite()) && self.domain.holds(x)
    }

    pub fn point(&self, coords: Vec<f64>) -> Result<ChartPoint> {
        let p = ChartPoint::new(coords)?;
        self.check_point(&p)?;
        Ok(p)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: x.len(),
            });
        }
        if !self.contains(x) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        Ok(())
    }

    /// Curvature/chart scale at `x` in chart units.
    pub fn scale_at(&self, x: &[f64]) -> f64 {
        match self.scale {
            ScaleRule::Unbounded => f64::INFINITY,
            ScaleRule::Constant(c) => c,
            ScaleRule::Coordinate(i) => x[i].abs(),
            ScaleRule::Colatitude => {
                let th = x[0];
                1.0f64.min(th).min(std::f64::consts::PI - th)
            }
        }
    }

    /// Default radius of the neighborhood where two-point problems are solved:
    /// half the local scale.
    pub fn locality_radius(&self, x: &[f64]) -> f64 {
        0.5 * self.scale_at(x)
    }

    fn metric_fn_values(&self, f: &MetricFn, x: &[f64]) -> Result<Vec<f64>> {
        let v = f(x);
        if v.len() != self.dimension * self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension * self.dimension,
                found: v.len(),
            });
        }
        Ok(v)
    }

    /// Metric components at `x`, without domain checks.
    pub(crate) fn metric_raw(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dimension;
        let values = match &self.geometry {
            Geometry::Metric(exprs) => exprs.iter().map(|e| e.value(x)).collect(),
            Geometry::MetricFn(f) => self.metric_fn_values(f, x)?,
            Geometry::Connection(_) => return Err(Error::MetricUnavailable(self.id.clone())),
        };
        Ok(DMatrix::from_row_slice(n, n, &values))
    }

    /// Metric `g_{μν}(x)` and its inverse.
    pub fn metric_at(&self, x: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_point(x)?;
        let g = self.metric_raw(x)?;
        let g = symmetrize(&g);
        let det = g.determinant();
        if !(det.abs() > SINGULAR_DET) {
            return Err(Error::SingularMetric { det });
        }
        let ginv = g.clone().try_inverse().ok_or(Error::SingularMetric { det })?;
        Ok((g, symmetrize(&ginv)))
    }

    /// `g(x)(a, b)`
    pub fn inner(&self, x: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
        let g = self.metric_raw(x)?;
        let n = self.dimension;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += g[(i, j)] * a[i] * b[j];
            }
        }
        Ok(s)
    }

    /// Errors unless `g(x)` is positive definite.
    pub fn require_riemannian(&self, x: &[f64]) -> Result<()> {
        let (g, _) = self.metric_at(x)?;
        if g.cholesky().is_none() {
            return Err(Error::NotPositiveDefinite { point: x.to_vec() });
        }
        Ok(())
    }

    /// `Γ^μ_{σν}(x)` at index `(μ n + σ) n + ν`, evaluated pointwise (hot path
    /// of the integrators; no domain check).
    pub(crate) fn christoffel_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dimension;
        match &self.geometry {
            Geometry::Connection(exprs) => Ok(exprs.iter().map(|e| e.value(x)).collect()),
            Geometry::Metric(exprs) if n <= DUAL_CAPACITY => {
                let alg = DualAlgebra { x };
                let duals: Vec<_> = exprs.iter().map(|e| e.eval(&alg)).collect();
                let g = DMatrix::from_fn(n, n, |i, j| duals[i * n + j].v);
                let dg = |k: usize, i: usize, j: usize| duals[i * n + j].d[k];
                christoffel_from_parts(n, &g, dg)
            }
            Geometry::Metric(_) => {
                let coeffs = self.christoffel_taylor(x, 0)?;
                Ok(coeffs.iter().map(|p| p.value()).collect())
            }
            Geometry::MetricFn(f) => {
                let g = DMatrix::from_row_slice(n, n, &self.metric_fn_values(f, x)?);
                let grads = fd::metric_gradient(self, f.as_ref(), x)?;
                christoffel_from_parts(n, &g, |k, i, j| grads[(k * n + i) * n + j])
            }
        }
    }

    /// Taylor polynomials of `g_{μν}(x + t̃)` to the given degree, row-major.
    pub(crate) fn metric_taylor(&self, x: &[f64], degree: usize) -> Result<Vec<TaylorPoly>> {
        let basis = MonomialBasis::new(self.dimension, degree);
        match &self.geometry {
            Geometry::Metric(exprs) => {
                let alg = TaylorAlgebra { basis: &basis, x };
                Ok(exprs.iter().map(|e| e.eval(&alg)).collect())
            }
            Geometry::MetricFn(f) => fd::metric_taylor(self, f.as_ref(), x, &basis),
            Geometry::Connection(_) => Err(Error::MetricUnavailable(self.id.clone())),
        }
    }

    /// Taylor polynomials of `Γ^μ_{σν}(x + t̃)` to the given degree, stored
    /// symmetrized in `(σ, ν)`.
    pub(crate) fn christoffel_taylor(&self, x: &[f64], degree: usize) -> Result<Vec<TaylorPoly>> {
        let n = self.dimension;
        let raw = match &self.geometry {
            Geometry::Connection(exprs) => {
                let basis = MonomialBasis::new(n, degree);
                let alg = TaylorAlgebra { basis: &basis, x };
                exprs.iter().map(|e| e.eval(&alg)).collect()
            }
            _ => {
                let g = self.metric_taylor(x, degree + 1)?;
                let basis = MonomialBasis::new(n, degree);
                christoffel_from_metric_taylor(n, &g)?
                    .into_iter()
                    .map(|p| p.rebased(&basis))
                    .collect::<Vec<_>>()
            }
        };
        Ok(symmetrize_lower(n, raw))
    }

    fn check_symmetric(&self) -> Result<()> {
        let Geometry::Metric(exprs) = &self.geometry else {
            return Ok(());
        };
        let n = self.dimension;
        let probes = self.probe_points(16);
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (&exprs[i * n + j], &exprs[j * n + i]);
                if a == b {
                    continue;
                }
                let differs = probes.is_empty()
                    || probes.iter().any(|p| {
                        let (va, vb) = (a.value(p), b.value(p));
                        (va - vb).abs() > 1e-12 * (1.0 + va.abs().max(vb.abs()))
                    });
                if differs {
                    return Err(Error::NonSymmetricMetric { row: i, col: j });
                }
            }
        }
        Ok(())
    }

    fn probe_points(&self, count: usize) -> Vec<Vec<f64>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let mut out = Vec::new();
        for _ in 0..(count * 16) {
            let p: Vec<f64> = (0..self.dimension).map(|_| rng.random_range(-3.0..3.0)).collect();
            if self.domain.holds(&p) {
                out.push(p);
                if out.len() == count {
                    break;
                }
            }
        }
        out
    }
}

fn check_vars(exprs: &[Expr], dimension: usize) -> Result<()> {
    for e in exprs {
        if let Some(v) = e.max_var() {
            if v >= dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: v + 1,
                });
            }
        }
    }
    Ok(())
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// `Γ^ρ_{μν} = ½ g^{ρσ}(∂_μ g_{νσ} + ∂_ν g_{μσ} − ∂_σ g_{μν})` from the
/// metric and its first derivatives `dg(k, i, j) = ∂_k g_{ij}`.
fn christoffel_from_parts(n: usize, g: &DMatrix<f64>, dg: impl Fn(usize, usize, usize) -> f64) -> Result<Vec<f64>> {
    let det = g.determinant();
    if !(det.abs() > SINGULAR_DET) {
        return Err(Error::SingularMetric { det });
    }
    let ginv = g.clone().try_inverse().ok_or(Error::SingularMetric { det })?;
    let mut lowered = vec![0.0; n * n * n];
    for s in 0..n {
        for mu in 0..n {
            for nu in 0..n {
                lowered[(s * n + mu) * n + nu] = 0.5 * (dg(mu, nu, s) + dg(nu, mu, s) - dg(s, mu, nu));
            }
        }
    }
    let mut out = vec![0.0; n * n * n];
    for rho in 0..n {
        for mu in 0..n {
            for nu in mu..n {
                let mut v = 0.0;
                for s in 0..n {
                    v += ginv[(rho, s)] * lowered[(s * n + mu) * n + nu];
                }
                out[(rho * n + mu) * n + nu] = v;
                out[(rho * n + nu) * n + mu] = v;
            }
        }
    }
    Ok(out)
}

fn christoffel_from_metric_taylor(n: usize, g: &[TaylorPoly]) -> Result<Vec<TaylorPoly>> {
    let ginv = crate::taylor::matrix_inverse(g, n)?;
    let dg: Vec<Vec<TaylorPoly>> = (0..n).map(|k| g.iter().map(|p| p.derivative(k)).collect()).collect();
    let basis = g[0].basis().clone();
    let mut out = vec![TaylorPoly::zero(&basis); n * n * n];
    for rho in 0..n {
        for mu in 0..n {
            for nu in mu..n {
                let mut acc = TaylorPoly::zero(&basis);
                for s in 0..n {
                    let mut bracket = dg[mu][nu * n + s].add(&dg[nu][mu * n + s]);
                    bracket = bracket.sub(&dg[s][mu * n + nu]);
                    if bracket.is_zero() {
                        continue;
                    }
                    ginv[rho * n + s].mul_acc(&bracket, 0.5, &mut acc);
                }
                out[(rho * n + nu) * n + mu] = acc.clone();
                out[(rho * n + mu) * n + nu] = acc;
            }
        }
    }
    Ok(out)
}

fn symmetrize_lower(n: usize, mut gamma: Vec<TaylorPoly>) -> Vec<TaylorPoly> {
    for mu in 0..n {
        for s in 0..n {
            for v in (s + 1)..n {
                let (a, b) = ((mu * n + s) * n + v, (mu * n + v) * n + s);
                let avg = gamma[a].add(&gamma[b]).scale(0.5);
                gamma[a] = avg.clone();
                gamma[b] = avg;
            }
        }
    }
    gamma
}
