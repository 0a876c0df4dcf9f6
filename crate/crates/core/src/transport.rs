//! Finite parallel transport through `λ = ∂H`, infinitesimal transport by
//! integrating the transport equation, and their comparison.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::geodesic::{shoot, shoot_endpoint, shoot_with_transport, ConnectOptions, GeodesicPath};
use crate::jet::{deformation_jet, geodesic_tangent_at, DeformationJet};
use crate::manifold::{ChartPoint, MetricModel, TangentVector};

/// Below this `|det M|` a transport matrix is rejected.
pub const SINGULAR_TRANSPORT_DET: f64 = 1e-10;
/// Minimum ladder length for scaling fits.
pub const MIN_LADDER_POINTS: usize = 4;
/// Discrepancies at or below this level count as identically zero.
pub const ZERO_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    LambdaJet,
    Ode,
    LambdaFd,
    MuFd,
}

/// A linear map taking vectors at `from` to vectors at `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMatrix {
    pub from: ChartPoint,
    pub to: ChartPoint,
    pub m: DMatrix<f64>,
    pub kind: TransportKind,
}

impl TransportMatrix {
    pub fn new(from: ChartPoint, to: ChartPoint, m: DMatrix<f64>, kind: TransportKind) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { s: f64::NAN });
        }
        if !(m.determinant().abs() > SINGULAR_TRANSPORT_DET) {
            return Err(Error::SingularMatrix);
        }
        Ok(Self { from, to, m, kind })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.m * DVector::from_column_slice(v)).as_slice().to_vec()
    }
}

/// Integrates `dM/ds = −Γ(x(s))[τ(s)]M` along the path and returns the
/// transport from the path end back to its start, `M(T)⁻¹`.
pub fn ode_transport(model: &MetricModel, path: &GeodesicPath) -> Result<TransportMatrix> {
    let start = path.start();
    let (_, _, m) = shoot_with_transport(model, &start.x, &start.tau, path.length(), path.step_count())?;
    let inv = m.try_inverse().ok_or(Error::SingularMatrix)?;
    TransportMatrix::new(path.end_point(), path.start_point(), inv, TransportKind::Ode)
}

/// `λ(x, t̃)·θ` for `θ` attached at `x + t̃`.
pub fn finite_transport(jet: &DeformationJet, t: &[f64], theta: &TangentVector) -> Result<TangentVector> {
    let target = jet.base().offset(t);
    let mismatch = target
        .iter()
        .zip(theta.base.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = target.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if mismatch > 1e-12 * scale {
        return Err(Error::InvalidArgument(format!(
            "vector is attached at {:?}, expected {:?}",
            theta.base.coords(),
            target.coords()
        )));
    }
    let m = jet.eval_lambda(t)?;
    Ok(TangentVector::coordinate(
        jet.base().clone(),
        m.apply(&theta.components),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportOptions {
    pub jet_order: usize,
    pub steps: usize,
}

impl Default for TransportOptions {
    fn default() -> Self {
        Self {
            jet_order: crate::jet::DEFAULT_JET_ORDER,
            steps: crate::geodesic::DEFAULT_CONNECT_STEPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositionResidual {
    /// Max-norm of `λ(x, x″−x) − λ(x, x′−x)·λ(x′, x″−x′)`.
    pub full: f64,
    /// The same matrix applied to the geodesic tangent at `x″`.
    pub radial: f64,
}

/// Composition of finite transports along the geodesic `exp_x(sτ)` with
/// `x′ = exp_x(s₁τ)` and `x″ = exp_x((s₁+s₂)τ)`.
pub fn composition_residual(
    model: &MetricModel,
    x: &ChartPoint,
    tau: &[f64],
    s1: f64,
    s2: f64,
    opts: &TransportOptions,
) -> Result<CompositionResidual> {
    let n = model.dimension();
    let along = |s: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        if s == 0.0 {
            return Ok((x.to_vec(), tau.to_vec()));
        }
        let v: Vec<f64> = tau.iter().map(|c| c * s).collect();
        let (p, t) = shoot_endpoint(model, x, &v, 1.0, opts.steps)?;
        Ok((p, t.iter().map(|c| c / s).collect()))
    };
    let (x1, _) = along(s1)?;
    let (x2, tau2) = along(s1 + s2)?;
    let x1p = model.point(x1.clone())?;
    let jet0 = deformation_jet(model, x, opts.jet_order)?;
    let jet1 = deformation_jet(model, &x1p, opts.jet_order)?;
    let d = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p - q).collect() };
    let direct = jet0.lambda_matrix(&d(&x2, x))?;
    let first = jet0.lambda_matrix(&d(&x1, x))?;
    let second = jet1.lambda_matrix(&d(&x2, &x1))?;
    let diff = direct - first * second;
    let radial = &diff * DVector::from_column_slice(&tau2);
    debug_assert_eq!(radial.len(), n);
    Ok(CompositionResidual {
        full: diff.amax(),
        radial: radial.amax(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricCompatResidual {
    pub radial: f64,
    pub full: f64,
}

/// Length preservation by the finite transport `λ(x, t̃)`: the full matrix
/// identity `λᵀ g(x) λ = g(x + t̃)` and its contraction with the geodesic
/// tangent at `x + t̃`.
pub fn metric_compat_residual(
    model: &MetricModel,
    jet: &DeformationJet,
    t: &[f64],
    steps: usize,
) -> Result<MetricCompatResidual> {
    let x = jet.base();
    let xp = model.point(x.offset(t).to_vec())?;
    let (g0, _) = model.metric_at(x)?;
    let (g1, _) = model.metric_at(&xp)?;
    let lam = jet.lambda_matrix(t)?;
    let full = (lam.transpose() * &g0 * &lam - &g1).amax();
    let (_, tau_p) = geodesic_tangent_at(model, x, t, &ConnectOptions::with_steps(steps))?;
    let tp = DVector::from_column_slice(&tau_p);
    let pulled = &lam * &tp;
    let radial = ((pulled.transpose() * &g0 * &pulled)[(0, 0)] - (tp.transpose() * &g1 * &tp)[(0, 0)]).abs();
    Ok(MetricCompatResidual { radial, full })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscrepancyRow {
    pub s: f64,
    /// `|(λ − M)θ|∞` for the supplied vector.
    pub discrepancy: f64,
    /// The same for the geodesic tangent at `exp_x(sτ)`.
    pub radial: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyScaling {
    /// Log-log slope of the discrepancy; `None` when it vanishes identically.
    pub exponent: Option<f64>,
    pub table: Vec<DiscrepancyRow>,
}

/// Finite versus infinitesimal transport of `θ` back from `exp_x(sτ)` over a
/// ladder of `s` values.
pub fn discrepancy_scaling(
    model: &MetricModel,
    x: &ChartPoint,
    tau: &[f64],
    theta: &[f64],
    ladder: &[f64],
    opts: &TransportOptions,
) -> Result<DiscrepancyScaling> {
    if ladder.len() < MIN_LADDER_POINTS {
        return Err(Error::DegenerateFit {
            points: ladder.len(),
            required: MIN_LADDER_POINTS,
        });
    }
    let n = model.dimension();
    if tau.len() != n || theta.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: tau.len().min(theta.len()),
        });
    }
    let tt: f64 = tau.iter().map(|c| c * c).sum();
    let proj: f64 = tau.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() / tt;
    let perp: f64 = tau
        .iter()
        .zip(theta)
        .map(|(a, b)| (b - proj * a).powi(2))
        .sum::<f64>()
        .sqrt();
    if !(perp > 1e-8 * crate::manifold::norm(theta)) {
        return Err(Error::InvalidArgument(
            "transported vector must be independent of the geodesic direction".into(),
        ));
    }
    let jet = deformation_jet(model, x, opts.jet_order)?;
    let mut table = Vec::with_capacity(ladder.len());
    for &s in ladder {
        let v: Vec<f64> = tau.iter().map(|c| c * s).collect();
        let path = shoot(model, x, &v, 1.0, opts.steps)?;
        let end = path.end();
        let t: Vec<f64> = end.x.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let lam = jet.lambda_matrix(&t)?;
        let ode = ode_transport(model, &path)?;
        let diff = lam - &ode.m;
        let unit_tangent: Vec<f64> = end.tau.iter().map(|c| c / s).collect();
        table.push(DiscrepancyRow {
            s,
            discrepancy: (&diff * DVector::from_column_slice(theta)).amax(),
            radial: (&diff * DVector::from_column_slice(&unit_tangent)).amax(),
        });
    }
    let exponent = if table.iter().all(|r| r.discrepancy <= ZERO_FLOOR) {
        None
    } else {
        let pts: Vec<(f64, f64)> = table.iter().map(|r| (r.s, r.discrepancy)).collect();
        Some(loglog_slope(&pts, MIN_LADDER_POINTS)?)
    };
    Ok(DiscrepancyScaling { exponent, table })
}

/// Writes `s,residual,kind` rows.
pub fn write_discrepancy_csv<W: std::io::Write>(table: &[DiscrepancyRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "s,residual,kind")?;
    for r in table {
        writeln!(out, "{},{},nonradial", r.s, r.discrepancy)?;
        writeln!(out, "{},{},radial", r.s, r.radial)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{E, FRAC_PI_2};

    #[test]
    fn flat_transports_are_identity() {
        let m = MetricModel::flat(2).unwrap();
        let x = m.point(vec![0.0, 0.0]).unwrap();
        let path = shoot(&m, &x, &[0.7, -0.4], 1.0, 50).unwrap();
        let t = ode_transport(&m, &path).unwrap();
        assert_eq!(t.m, DMatrix::identity(2, 2));
        let jet = deformation_jet(&m, &x, 6).unwrap();
        let theta = TangentVector::coordinate(m.point(vec![0.7, -0.4]).unwrap(), vec![1.0, 2.0]);
        let out = finite_transport(&jet, &[0.7, -0.4], &theta).unwrap();
        assert_eq!(out.components, vec![1.0, 2.0]);
    }

    #[test]
    fn equator_transport_keeps_normal_direction() {
        let m = MetricModel::sphere2(1.0).unwrap();
        let x = m.point(vec![FRAC_PI_2, 0.0]).unwrap();
        let path = shoot(&m, &x, &[0.0, 1.0], 1.0, 1000).unwrap();
        let t = ode_transport(&m, &path).unwrap();
        let v = t.apply(&[1.0, 0.0]);
        assert!((v[0] - 1.0).abs() < 1e-8 && v[1].abs() < 1e-8);
    }

    #[test]
    fn vertical_transport_preserves_length() {
        let m = MetricModel::halfplane();
        let x = m.point(vec![0.0, 1.0]).unwrap();
        let path = shoot(&m, &x, &[0.0, 1.0], 1.0, 1000).unwrap();
        let t = ode_transport(&m, &path).unwrap();
        let v = [0.3, -1.1];
        let w = t.apply(&v);
        let end = [0.0, E];
        let a = m.inner(&x, &w, &w).unwrap();
        let b = m.inner(&end, &v, &v).unwrap();
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn ladder_needs_four_points() {
        let m = MetricModel::flat(2).unwrap();
        let x = m.point(vec![0.0, 0.0]).unwrap();
        let r = discrepancy_scaling(
            &m,
            &x,
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.1, 0.2, 0.3],
            &TransportOptions::default(),
        );
        assert!(matches!(r, Err(Error::DegenerateFit { .. })));
        let r = discrepancy_scaling(
            &m,
            &x,
            &[1.0, 0.0],
            &[2.0, 0.0],
            &[0.1, 0.2, 0.3, 0.4],
            &TransportOptions::default(),
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }
}
