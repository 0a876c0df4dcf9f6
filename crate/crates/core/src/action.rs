//! Energy of connecting geodesics and the Hamilton–Jacobi relation.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesic::{connect, shoot, ConnectOptions, GeodesicPath};
use crate::jet::deformation_jet;
use crate::manifold::{ChartPoint, MetricModel};

#[derive(Debug, Clone, PartialEq)]
pub struct ActionOptions {
    /// Integrator and quadrature steps (rounded up to even).
    pub steps: usize,
    pub locality: Option<f64>,
    /// Absolute step of the central differences in `x′`.
    pub fd_step: f64,
    pub jet_order: usize,
}

impl Default for ActionOptions {
    fn default() -> Self {
        Self {
            steps: 1000,
            locality: None,
            fd_step: 1e-5,
            jet_order: crate::jet::DEFAULT_JET_ORDER,
        }
    }
}

impl ActionOptions {
    fn even_steps(&self) -> usize {
        self.steps + self.steps % 2
    }

    fn connect_options(&self, guess: Option<Vec<f64>>) -> ConnectOptions {
        ConnectOptions {
            steps: self.even_steps(),
            locality: self.locality,
            initial_guess: guess,
            ..ConnectOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionValue {
    pub value: f64,
    /// Initial tangent of the connecting geodesic.
    pub tau: Vec<f64>,
    pub path: GeodesicPath,
}

/// `½∫₀¹ g(τ, τ) dα` over the integrator grid by composite Simpson.
pub fn simpson_energy(model: &MetricModel, path: &GeodesicPath) -> Result<f64> {
    let samples = path.samples();
    let steps = samples.len() - 1;
    if !steps.is_multiple_of(2) {
        return Err(Error::InvalidArgument(
            "Simpson quadrature needs an even step count".into(),
        ));
    }
    let h = path.length() / steps as f64;
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (i, p) in samples.iter().enumerate() {
        let w = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let term = w * model.inner(&p.x, &p.tau, &p.tau)? - comp;
        let next = sum + term;
        comp = (next - sum) - term;
        sum = next;
    }
    Ok(0.5 * sum * h / 3.0)
}

fn action_with(
    model: &MetricModel,
    x: &ChartPoint,
    xp: &ChartPoint,
    opts: &ActionOptions,
    guess: Option<Vec<f64>>,
) -> Result<ActionValue> {
    model.require_riemannian(x)?;
    let tau = connect(model, x, xp, &opts.connect_options(guess))?.components;
    let path = shoot(model, x, &tau, 1.0, opts.even_steps())?;
    let value = simpson_energy(model, &path)?;
    Ok(ActionValue { value, tau, path })
}

/// `S(x, x′)`, the energy of the geodesic from `x` to `x′` on `[0, 1]`.
pub fn action_value(model: &MetricModel, x: &ChartPoint, xp: &ChartPoint, opts: &ActionOptions) -> Result<ActionValue> {
    action_with(model, x, xp, opts, None)
}

/// `∂S/∂x′^μ` by central differences, each stencil solve seeded with `seed`.
pub fn action_gradient(
    model: &MetricModel,
    x: &ChartPoint,
    xp: &ChartPoint,
    seed: &[f64],
    opts: &ActionOptions,
) -> Result<Vec<f64>> {
    let n = model.dimension();
    let h = opts.fd_step;
    (0..n)
        .into_par_iter()
        .map(|mu| {
            let value_at = |sign: f64| -> Result<f64> {
                let mut p = xp.to_vec();
                p[mu] += sign * h;
                let p = model.point(p)?;
                Ok(action_with(model, x, &p, opts, Some(seed.to_vec()))?.value)
            };
            let (plus, minus) = rayon::join(|| value_at(1.0), || value_at(-1.0));
            Ok((plus? - minus?) / (2.0 * h))
        })
        .collect()
}

/// `|g(x′)^{μν} ∂_μ′S ∂_ν′S − g(x)(τ, τ)|`.
pub fn hj_residual(model: &MetricModel, x: &ChartPoint, xp: &ChartPoint, opts: &ActionOptions) -> Result<f64> {
    let center = action_value(model, x, xp, opts)?;
    let grad = action_gradient(model, x, xp, &center.tau, opts)?;
    let (_, ginv) = model.metric_at(xp)?;
    let p = DVector::from_column_slice(&grad);
    let lhs = (p.transpose() * ginv * &p)[(0, 0)];
    let rhs = model.inner(x, &center.tau, &center.tau)?;
    Ok((lhs - rhs).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientRelation {
    /// `|∂′S − g(x′) λ(x′, x − x′) τ|∞`
    pub full: f64,
    /// The same vector contracted with the geodesic tangent at `x′`.
    pub contracted: f64,
}

/// The gradient of `S` in `x′` against the metric-lowered transport of the
/// initial tangent to `x′` through the jet based at `x′`.
pub fn gradient_relation_residual(
    model: &MetricModel,
    x: &ChartPoint,
    xp: &ChartPoint,
    opts: &ActionOptions,
) -> Result<GradientRelation> {
    let center = action_value(model, x, xp, opts)?;
    let grad = action_gradient(model, x, xp, &center.tau, opts)?;
    let jet = deformation_jet(model, xp, opts.jet_order)?;
    let back: Vec<f64> = x.iter().zip(xp.iter()).map(|(a, b)| a - b).collect();
    let lam = jet.lambda_matrix(&back)?;
    let (g, _) = model.metric_at(xp)?;
    let predicted = g * (lam * DVector::from_column_slice(&center.tau));
    let r = DVector::from_column_slice(&grad) - predicted;
    let tangent = DVector::from_column_slice(&center.path.end().tau);
    Ok(GradientRelation {
        full: r.amax(),
        contracted: r.dot(&tangent).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn flat_action() {
        let m = MetricModel::flat(2).unwrap();
        let x = m.point(vec![0.0, 0.0]).unwrap();
        let xp = m.point(vec![3.0, 4.0]).unwrap();
        let opts = ActionOptions {
            locality: Some(f64::INFINITY),
            ..ActionOptions::default()
        };
        let s = action_value(&m, &x, &xp, &opts).unwrap();
        assert!((s.value - 12.5).abs() < 1e-12);
        let r = hj_residual(&m, &x, &xp, &opts).unwrap();
        assert!(r < 1e-7, "{r:e}");
        assert_eq!(action_value(&m, &x, &x, &opts).unwrap().value, 0.0);
    }

    #[test]
    fn vertical_halfplane_action() {
        let m = MetricModel::halfplane();
        let x = m.point(vec![0.0, 1.0]).unwrap();
        let xp = m.point(vec![0.0, E]).unwrap();
        let opts = ActionOptions {
            locality: Some(f64::INFINITY),
            ..ActionOptions::default()
        };
        let s = action_value(&m, &x, &xp, &opts).unwrap();
        assert!((s.value - 0.5).abs() < 1e-8);
        assert!(hj_residual(&m, &x, &xp, &opts).unwrap() < 1e-6);
    }

    #[test]
    fn connection_only_model_has_no_action() {
        let e = |s: &str| crate::expr::Expr::parse(s, 2).unwrap();
        let zero = || e("0");
        let m = MetricModel::from_connection_exprs(
            "affine",
            2,
            (0..8).map(|_| zero()).collect(),
            crate::expr::Predicate::True,
            crate::manifold::ScaleRule::Unbounded,
        )
        .unwrap();
        let x = m.point(vec![0.0, 0.0]).unwrap();
        let xp = m.point(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            action_value(&m, &x, &xp, &ActionOptions::default()),
            Err(Error::MetricUnavailable(_))
        ));
    }
}
