use nalgebra::DMatrix;

use super::{fd, ChartPoint, Geometry, MetricModel};
use crate::error::{Error, Result};
use crate::taylor::TaylorPoly;

/// Highest Γ-derivative order served from exact Taylor arithmetic.
pub const MAX_DERIV_ORDER: usize = 10;
/// Highest Γ-derivative order for finite-difference-backed models.
pub const FD_MAX_DERIV_ORDER: usize = 4;

/// `Γ^μ_{σν}` at a point together with its partial derivatives.
#[derive(Debug, Clone)]
pub struct ConnectionCoefficients {
    base: ChartPoint,
    dimension: usize,
    gamma: Vec<f64>,
    field: Vec<TaylorPoly>,
    deriv_order: usize,
}

impl ConnectionCoefficients {
    pub fn base(&self) -> &ChartPoint {
        &self.base
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn deriv_order(&self) -> usize {
        self.deriv_order
    }

    /// `Γ^μ_{σν}`
    pub fn gamma(&self, mu: usize, sigma: usize, nu: usize) -> f64 {
        self.gamma[self.index(mu, sigma, nu)]
    }

    /// All components, `Γ^μ_{σν}` at `(μ n + σ) n + ν`.
    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    /// `∂_{κ₁…κ_j} Γ^μ_{σν}` for `j ≤ deriv_order`.
    pub fn derivative(&self, mu: usize, sigma: usize, nu: usize, kappa: &[usize]) -> Option<f64> {
        if kappa.len() > self.deriv_order {
            return None;
        }
        self.field[self.index(mu, sigma, nu)].partial(kappa)
    }

    /// Taylor polynomials of `Γ(x + t̃)`, one per component.
    pub fn field(&self) -> &[TaylorPoly] {
        &self.field
    }

    fn index(&self, mu: usize, sigma: usize, nu: usize) -> usize {
        (mu * self.dimension + sigma) * self.dimension + nu
    }
}

/// `R^μ_{λκν}` at a point.
#[derive(Debug, Clone)]
pub struct CurvatureTensor {
    base: ChartPoint,
    dimension: usize,
    r: Vec<f64>,
}

impl CurvatureTensor {
    pub(crate) fn from_components(base: ChartPoint, dimension: usize, r: Vec<f64>) -> Self {
        assert_eq!(r.len(), dimension.pow(4));
        Self { base, dimension, r }
    }

    pub fn base(&self) -> &ChartPoint {
        &self.base
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// `R^μ_{λκν}`
    pub fn get(&self, mu: usize, lambda: usize, kappa: usize, nu: usize) -> f64 {
        let n = self.dimension;
        self.r[((mu * n + lambda) * n + kappa) * n + nu]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.r
    }

    pub fn max_abs(&self) -> f64 {
        self.r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|R^μ_{λκν} + R^μ_{λνκ}|`.
    pub fn antisymmetry_residual(&self) -> f64 {
        let n = self.dimension;
        let mut worst = 0.0f64;
        for mu in 0..n {
            for l in 0..n {
                for k in 0..n {
                    for v in 0..n {
                        worst = worst.max((self.get(mu, l, k, v) + self.get(mu, l, v, k)).abs());
                    }
                }
            }
        }
        worst
    }

    /// Largest `|R^μ_{νρτ} + R^μ_{ρτν} + R^μ_{τνρ}|`.
    pub fn cyclic_residual(&self) -> f64 {
        let n = self.dimension;
        let mut worst = 0.0f64;
        for mu in 0..n {
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let s = self.get(mu, a, b, c) + self.get(mu, b, c, a) + self.get(mu, c, a, b);
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// Sectional curvature of the plane spanned by coordinate directions
    /// `a` and `b`: `g_{aσ} R^σ_{bab} / (g_aa g_bb − g_ab²)`.
    pub fn sectional(&self, g: &DMatrix<f64>, a: usize, b: usize) -> f64 {
        let n = self.dimension;
        let num: f64 = (0..n).map(|s| g[(a, s)] * self.get(s, b, a, b)).sum();
        num / (g[(a, a)] * g[(b, b)] - g[(a, b)] * g[(a, b)])
    }
}

impl MetricModel {
    /// Highest derivative order [`MetricModel::christoffel`] accepts.
    pub fn max_deriv_order(&self) -> usize {
        match self.geometry {
            Geometry::MetricFn(_) => FD_MAX_DERIV_ORDER,
            _ => MAX_DERIV_ORDER,
        }
    }

    /// Connection coefficients at `x` with derivatives up to `deriv_order`.
    pub fn christoffel(&self, x: &ChartPoint, deriv_order: usize) -> Result<ConnectionCoefficients> {
        self.check_point(x)?;
        let max = self.max_deriv_order();
        if deriv_order > max {
            return Err(Error::DerivativeOrder {
                requested: deriv_order,
                max,
            });
        }
        let field = self.christoffel_taylor(x, deriv_order)?;
        let gamma = field.iter().map(|p| p.value()).collect();
        Ok(ConnectionCoefficients {
            base: x.clone(),
            dimension: self.dimension,
            gamma,
            field,
            deriv_order,
        })
    }

    /// Riemann–Christoffel tensor
    /// `R^μ_{λκν} = ∂_κΓ^μ_{νλ} − ∂_νΓ^μ_{κλ} + Γ^μ_{κσ}Γ^σ_{νλ} − Γ^μ_{νσ}Γ^σ_{κλ}`.
    pub fn riemann(&self, x: &ChartPoint) -> Result<CurvatureTensor> {
        let c = self.christoffel(x, 1)?;
        Ok(riemann_from_connection(&c))
    }

    /// Largest `|∂_λ g_{μν} − Γ^σ_{λμ} g_{σν} − Γ^σ_{λν} g_{μσ}|` with the
    /// metric derivative taken by central finite differences.
    pub fn metric_compatibility_residual(&self, x: &ChartPoint) -> Result<f64> {
        let n = self.dimension;
        let (g, _) = self.metric_at(x)?;
        let dg = fd::gradient(self, x, |p| Ok(self.metric_raw(p)?.as_slice().to_vec()))?;
        let gamma = self.christoffel_values(x)?;
        let gm = |m: usize, s: usize, v: usize| gamma[(m * n + s) * n + v];
        let mut worst = 0.0f64;
        for l in 0..n {
            for mu in 0..n {
                for nu in 0..n {
                    // nalgebra storage is column-major: (mu, nu) lives at nu * n + mu.
                    let mut r = dg[l][nu * n + mu];
                    for s in 0..n {
                        r -= gm(s, l, mu) * g[(s, nu)] + gm(s, l, nu) * g[(mu, s)];
                    }
                    worst = worst.max(r.abs());
                }
            }
        }
        Ok(worst)
    }
}

pub(crate) fn riemann_from_connection(c: &ConnectionCoefficients) -> CurvatureTensor {
    let n = c.dimension();
    let d = |m: usize, s: usize, v: usize, k: usize| c.derivative(m, s, v, &[k]).unwrap_or(0.0);
    let mut r = vec![0.0; n.pow(4)];
    for mu in 0..n {
        for l in 0..n {
            for k in 0..n {
                for v in (k + 1)..n {
                    let mut val = d(mu, v, l, k) - d(mu, k, l, v);
                    for s in 0..n {
                        val += c.gamma(mu, k, s) * c.gamma(s, v, l) - c.gamma(mu, v, s) * c.gamma(s, k, l);
                    }
                    r[((mu * n + l) * n + k) * n + v] = val;
                    r[((mu * n + l) * n + v) * n + k] = -val;
                }
            }
        }
    }
    CurvatureTensor::from_components(c.base().clone(), n, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn sphere_christoffel_and_curvature() {
        let m = MetricModel::sphere2(1.0).unwrap();
        let x = m.point(vec![FRAC_PI_4, 0.0]).unwrap();
        let c = m.christoffel(&x, 2).unwrap();
        assert!((c.gamma(0, 1, 1) + 0.5).abs() < 1e-15);
        assert!((c.gamma(1, 0, 1) - 1.0).abs() < 1e-14);
        // ∂_θ Γ^θ_{φφ} = −cos 2θ
        assert!(c.derivative(0, 1, 1, &[0]).unwrap().abs() < 1e-14);
        let x = m.point(vec![FRAC_PI_2, 0.3]).unwrap();
        let r = m.riemann(&x).unwrap();
        assert!((r.get(0, 1, 0, 1) - 1.0).abs() < 1e-14);
        assert_eq!(r.antisymmetry_residual(), 0.0);
    }

    #[test]
    fn derivative_order_cap() {
        let m = MetricModel::halfplane();
        let x = m.point(vec![0.0, 1.0]).unwrap();
        assert!(m.christoffel(&x, MAX_DERIV_ORDER).is_ok());
        assert!(matches!(
            m.christoffel(&x, MAX_DERIV_ORDER + 1),
            Err(Error::DerivativeOrder { .. })
        ));
    }

    #[test]
    fn halfplane_sectional_curvature() {
        let m = MetricModel::halfplane();
        for p in [[0.0, 1.0], [2.0, 0.3], [-1.0, 4.0]] {
            let x = m.point(p.to_vec()).unwrap();
            let (g, _) = m.metric_at(&x).unwrap();
            let k = m.riemann(&x).unwrap().sectional(&g, 0, 1);
            assert!((k + 1.0).abs() < 1e-12, "{k}");
        }
    }

    #[test]
    fn metric_compatibility_of_levi_civita() {
        for m in MetricModel::catalog() {
            let p = if m.dimension() == 3 {
                vec![0.4, 1.1, 0.7]
            } else {
                vec![0.9, 1.3]
            };
            let x = m.point(p).unwrap();
            assert!(m.metric_compatibility_residual(&x).unwrap() < 1e-6);
        }
    }
}
