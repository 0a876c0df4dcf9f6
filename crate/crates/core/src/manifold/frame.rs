use nalgebra::DMatrix;

use super::{ChartPoint, MetricModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Coordinate,
    Orthonormal,
}

/// Frame vectors `X_m = h^μ_m ∂_μ` at a point, stored as the columns of `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct VielbeinFrame {
    pub base: ChartPoint,
    pub kind: FrameKind,
    pub h: DMatrix<f64>,
    pub hinv: DMatrix<f64>,
}

impl VielbeinFrame {
    pub fn identity(base: ChartPoint) -> Self {
        let n = base.dim();
        Self {
            base,
            kind: FrameKind::Coordinate,
            h: DMatrix::identity(n, n),
            hinv: DMatrix::identity(n, n),
        }
    }

    /// Frame components `v^m = h^m_μ v^μ`.
    pub fn to_frame(&self, v: &[f64]) -> Vec<f64> {
        (&self.hinv * nalgebra::DVector::from_column_slice(v))
            .as_slice()
            .to_vec()
    }

    /// Coordinate components `v^μ = h^μ_m v^m`.
    pub fn to_coordinate(&self, v: &[f64]) -> Vec<f64> {
        (&self.h * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec()
    }
}

impl MetricModel {
    /// Coordinate frame, or the lower-triangular orthonormal frame obtained
    /// from the Cholesky factor of `g⁻¹`.
    pub fn vielbein(&self, x: &ChartPoint, kind: FrameKind) -> Result<VielbeinFrame> {
        self.check_point(x)?;
        match kind {
            FrameKind::Coordinate => Ok(VielbeinFrame::identity(x.clone())),
            FrameKind::Orthonormal => {
                let (_, ginv) = self.metric_at(x)?;
                let chol = ginv
                    .cholesky()
                    .ok_or_else(|| Error::NotPositiveDefinite { point: x.to_vec() })?;
                let h = chol.l();
                let hinv = h.clone().try_inverse().ok_or(Error::SingularMatrix)?;
                Ok(VielbeinFrame {
                    base: x.clone(),
                    kind,
                    h,
                    hinv,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{Expr, Predicate};
    use crate::manifold::ScaleRule;
    use std::f64::consts::FRAC_PI_6;

    #[test]
    fn orthonormal_frames() {
        let hp = MetricModel::halfplane();
        let x = hp.point(vec![0.0, 2.0]).unwrap();
        let f = hp.vielbein(&x, FrameKind::Orthonormal).unwrap();
        assert!((&f.h - DMatrix::from_diagonal_element(2, 2, 2.0)).amax() < 1e-15);

        let s = MetricModel::sphere2(1.0).unwrap();
        let x = s.point(vec![FRAC_PI_6, 0.0]).unwrap();
        let f = s.vielbein(&x, FrameKind::Orthonormal).unwrap();
        assert!((f.h[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((f.h[(1, 1)] - 2.0).abs() < 1e-14);
        let (g, _) = s.metric_at(&x).unwrap();
        let gram = f.h.transpose() * g * &f.h;
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((&f.h * &f.hinv - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn indefinite_metric_has_no_orthonormal_frame() {
        let e = |s: &str| Expr::parse(s, 2).unwrap();
        let m = MetricModel::from_metric_exprs(
            "minkowski",
            2,
            vec![e("-1"), e("0"), e("0"), e("1")],
            Predicate::True,
            ScaleRule::Unbounded,
        )
        .unwrap();
        let x = m.point(vec![0.0, 0.0]).unwrap();
        assert!(m.vielbein(&x, FrameKind::Coordinate).is_ok());
        assert!(matches!(
            m.vielbein(&x, FrameKind::Orthonormal),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }
}
