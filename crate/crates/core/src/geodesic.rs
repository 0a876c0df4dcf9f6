//! Geodesic initial-value integration, the two-point connection problem
//! (chart logarithm map) and first integrals along paths.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jet::DeformationJet;
use crate::manifold::{norm, ChartPoint, MetricModel, TangentVector};

/// Smallest accepted step count for [`shoot`].
pub const MIN_STEPS: usize = 8;
/// Default step count of the connection solver.
pub const DEFAULT_CONNECT_STEPS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSample {
    pub s: f64,
    pub x: Vec<f64>,
    pub tau: Vec<f64>,
}

/// An affinely parameterized geodesic sampled on the integrator grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicPath {
    model_id: String,
    samples: Vec<GeodesicSample>,
    step_count: usize,
}

impl GeodesicPath {
    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn samples(&self) -> &[GeodesicSample] {
        &self.samples
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn length(&self) -> f64 {
        self.samples.last().map_or(0.0, |p| p.s)
    }

    pub fn start(&self) -> &GeodesicSample {
        &self.samples[0]
    }

    pub fn end(&self) -> &GeodesicSample {
        self.samples.last().expect("paths hold at least two samples")
    }

    pub fn start_point(&self) -> ChartPoint {
        ChartPoint::new(self.start().x.clone()).expect("integrated points are finite")
    }

    pub fn end_point(&self) -> ChartPoint {
        ChartPoint::new(self.end().x.clone()).expect("integrated points are finite")
    }

    /// Writes `s,x0..,tau0..` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.start().x.len();
        let mut header = vec!["s".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..n).map(|i| format!("tau{i}")));
        writeln!(out, "{}", header.join(","))?;
        for p in &self.samples {
            let mut row = vec![p.s.to_string()];
            row.extend(p.x.iter().map(f64::to_string));
            row.extend(p.tau.iter().map(f64::to_string));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Fixed-step classical Runge–Kutta integration of `y' = f(s, y)` with
/// compensated accumulation of the state. `observe` sees every grid state.
pub(crate) fn rk4<F, O>(mut y: Vec<f64>, length: f64, steps: usize, mut f: F, mut observe: O) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(usize, f64, &[f64]) -> Result<()>,
{
    let m = y.len();
    let h = length / steps as f64;
    let mut comp = vec![0.0; m];
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tmp = vec![0.0; m];
    observe(0, 0.0, &y)?;
    for step in 0..steps {
        let s = step as f64 * length / steps as f64;
        f(s, &y, &mut k1)?;
        for i in 0..m {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(s + 0.5 * h, &tmp, &mut k2)?;
        for i in 0..m {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(s + 0.5 * h, &tmp, &mut k3)?;
        for i in 0..m {
            tmp[i] = y[i] + h * k3[i];
        }
        f(s + h, &tmp, &mut k4)?;
        for i in 0..m {
            let dy = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            let t = dy - comp[i];
            let sum = y[i] + t;
            comp[i] = (sum - y[i]) - t;
            y[i] = sum;
        }
        let s_next = (step + 1) as f64 * length / steps as f64;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { s: s_next });
        }
        observe(step + 1, s_next, &y)?;
    }
    Ok(y)
}

/// Right-hand side of `ẍ = −Γ(x)ẋẋ` on the state `[x, ẋ]`, optionally
/// extended by the transport matrix `dM/ds = −Γ(x)[ẋ]M`.
fn geodesic_rhs<'a>(
    model: &'a MetricModel,
    with_transport: bool,
) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + 'a {
    let n = model.dimension();
    move |s, y, dy| {
        let (x, v) = (&y[..n], &y[n..2 * n]);
        if !model.contains(x) {
            return Err(Error::DomainExit { s });
        }
        let gamma = model.christoffel_values(x)?;
        dy[..n].copy_from_slice(v);
        for mu in 0..n {
            let mut acc = 0.0;
            for a in 0..n {
                for b in 0..n {
                    acc += gamma[(mu * n + a) * n + b] * v[a] * v[b];
                }
            }
            dy[n + mu] = -acc;
        }
        if with_transport {
            let m = &y[2 * n..];
            for mu in 0..n {
                for col in 0..n {
                    let mut acc = 0.0;
                    for a in 0..n {
                        for r in 0..n {
                            acc += gamma[(mu * n + a) * n + r] * v[a] * m[r * n + col];
                        }
                    }
                    dy[2 * n + mu * n + col] = -acc;
                }
            }
        }
        Ok(())
    }
}

fn check_shoot_args(model: &MetricModel, x0: &[f64], tau0: &[f64], length: f64, steps: usize) -> Result<()> {
    model.check_point(x0)?;
    if tau0.len() != model.dimension() {
        return Err(Error::DimensionMismatch {
            expected: model.dimension(),
            found: tau0.len(),
        });
    }
    if tau0.iter().any(|v| !v.is_finite()) || !length.is_finite() || length <= 0.0 {
        return Err(Error::InvalidArgument(
            "initial tangent and length must be finite, length > 0".into(),
        ));
    }
    if steps < MIN_STEPS {
        return Err(Error::InvalidArgument(format!(
            "steps = {steps}, need at least {MIN_STEPS}"
        )));
    }
    Ok(())
}

/// Integrates the geodesic through `x0` with initial tangent `tau0` over
/// `s ∈ [0, length]`.
pub fn shoot(model: &MetricModel, x0: &ChartPoint, tau0: &[f64], length: f64, steps: usize) -> Result<GeodesicPath> {
    check_shoot_args(model, x0, tau0, length, steps)?;
    let n = model.dimension();
    let mut samples = Vec::with_capacity(steps + 1);
    let y0 = [x0.coords(), tau0].concat();
    rk4(y0, length, steps, geodesic_rhs(model, false), |_, s, y| {
        if !model.contains(&y[..n]) {
            return Err(Error::DomainExit { s });
        }
        samples.push(GeodesicSample {
            s,
            x: y[..n].to_vec(),
            tau: y[n..].to_vec(),
        });
        Ok(())
    })?;
    Ok(GeodesicPath {
        model_id: model.id().to_string(),
        samples,
        step_count: steps,
    })
}

/// Endpoint and final tangent of [`shoot`] without storing samples.
pub fn shoot_endpoint(
    model: &MetricModel,
    x0: &[f64],
    tau0: &[f64],
    length: f64,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_shoot_args(model, x0, tau0, length, steps)?;
    let n = model.dimension();
    let y = rk4(
        [x0, tau0].concat(),
        length,
        steps,
        geodesic_rhs(model, false),
        |_, s, y| {
            if model.contains(&y[..n]) {
                Ok(())
            } else {
                Err(Error::DomainExit { s })
            }
        },
    )?;
    Ok((y[..n].to_vec(), y[n..].to_vec()))
}

/// Geodesic endpoint together with the infinitesimal transport matrix
/// `M(T)` taking vectors at `x0` to the endpoint.
pub(crate) fn shoot_with_transport(
    model: &MetricModel,
    x0: &[f64],
    tau0: &[f64],
    length: f64,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>, DMatrix<f64>)> {
    check_shoot_args(model, x0, tau0, length, steps)?;
    let n = model.dimension();
    let mut y0 = [x0, tau0].concat();
    let identity = DMatrix::<f64>::identity(n, n);
    for r in 0..n {
        for c in 0..n {
            y0.push(identity[(r, c)]);
        }
    }
    let y = rk4(y0, length, steps, geodesic_rhs(model, true), |_, s, y| {
        if model.contains(&y[..n]) {
            Ok(())
        } else {
            Err(Error::DomainExit { s })
        }
    })?;
    let m = DMatrix::from_row_slice(n, n, &y[2 * n..]);
    Ok((y[..n].to_vec(), y[n..2 * n].to_vec(), m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectOptions {
    pub steps: usize,
    /// Overrides the model's locality radius at the start point.
    pub locality: Option<f64>,
    pub max_iterations: usize,
    /// Target endpoint mismatch, relative to `max(1, |x'|∞)`.
    pub tolerance: f64,
    pub initial_guess: Option<Vec<f64>>,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        Self {
            steps: DEFAULT_CONNECT_STEPS,
            locality: None,
            max_iterations: 50,
            tolerance: 1e-14,
            initial_guess: None,
        }
    }
}

impl ConnectOptions {
    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Self::default()
        }
    }

    pub fn unbounded(mut self) -> Self {
        self.locality = Some(f64::INFINITY);
        self
    }
}

/// Residual above which a stalled Newton iteration is reported as failed.
const STALL_ACCEPT: f64 = 1e-10;
/// Relative singular-value ratio treated as a singular shooting Jacobian.
const CONJUGATE_RATIO: f64 = 1e-6;

/// Initial tangent of the geodesic from `x` reaching `xp` at `s = 1`.
pub fn connect(model: &MetricModel, x: &ChartPoint, xp: &ChartPoint, opts: &ConnectOptions) -> Result<TangentVector> {
    model.check_point(x)?;
    model.check_point(xp)?;
    let n = model.dimension();
    let target: Vec<f64> = xp.to_vec();
    let dx: Vec<f64> = target.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
    let distance = norm(&dx);
    let radius = opts.locality.unwrap_or_else(|| model.locality_radius(x));
    if distance > radius {
        return Err(Error::OutsideLocality { distance, radius });
    }
    if distance == 0.0 {
        return Ok(TangentVector::coordinate(x.clone(), vec![0.0; n]));
    }
    let scale = target.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = opts.tolerance * scale;

    let residual_at = |tau: &[f64]| -> Result<Vec<f64>> {
        let (end, _) = shoot_endpoint(model, x, tau, 1.0, opts.steps)?;
        Ok(end.iter().zip(&target).map(|(a, b)| a - b).collect())
    };
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, c| m.max(c.abs()));

    let mut tau = opts.initial_guess.clone().unwrap_or_else(|| dx.clone());
    let mut f = residual_at(&tau)?;
    let mut fnorm = inf_norm(&f);
    let mut iterations = 0;
    let mut last_svd = None;
    while fnorm > tol {
        if iterations == opts.max_iterations {
            return Err(Error::NotConverged {
                iterations,
                residual: fnorm,
            });
        }
        iterations += 1;
        let delta = 1e-7 * norm(&tau).max(1.0);
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut probe = tau.clone();
            probe[j] += delta;
            let fp = residual_at(&probe)?;
            for i in 0..n {
                jac[(i, j)] = (fp[i] - f[i]) / delta;
            }
        }
        let svd = jac.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > CONJUGATE_RATIO * smax) {
            return Err(Error::ConjugatePoint);
        }
        let step = svd
            .solve(&DVector::from_column_slice(&f), 0.0)
            .map_err(|_| Error::ConjugatePoint)?;
        last_svd = Some(svd);
        let mut damping = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial: Vec<f64> = (0..n).map(|i| tau[i] - damping * step[i]).collect();
            match residual_at(&trial) {
                Ok(ft) if inf_norm(&ft) < fnorm => {
                    accepted = Some((trial, ft));
                    break;
                }
                Ok(_) | Err(Error::DomainExit { .. }) | Err(Error::NonFinite { .. }) => {
                    damping *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        match accepted {
            Some((t, ft)) => {
                tau = t;
                f = ft;
                fnorm = inf_norm(&f);
            }
            None if fnorm <= STALL_ACCEPT * scale => break,
            None => {
                return Err(Error::NotConverged {
                    iterations,
                    residual: fnorm,
                })
            }
        }
    }
    // Chord steps with the last Jacobian push the mismatch below tolerance
    // toward rounding level, which differentiated callers depend on.
    if let Some(svd) = last_svd {
        for _ in 0..2 {
            if fnorm == 0.0 {
                break;
            }
            let Ok(step) = svd.solve(&DVector::from_column_slice(&f), 0.0) else {
                break;
            };
            let trial: Vec<f64> = (0..n).map(|i| tau[i] - step[i]).collect();
            match residual_at(&trial) {
                Ok(ft) if inf_norm(&ft) < fnorm => {
                    tau = trial;
                    fnorm = inf_norm(&ft);
                    f = ft;
                }
                _ => break,
            }
        }
    }
    Ok(TangentVector::coordinate(x.clone(), tau))
}

/// `u = λ(x, x(s) − x)·τ(s)` with `λ` from a jet based at the path start.
/// Grid parameters use the stored sample; other values re-integrate from the
/// start with the path's step density.
pub fn first_integral(model: &MetricModel, jet: &DeformationJet, path: &GeodesicPath, s: f64) -> Result<TangentVector> {
    let start = path.start();
    if jet.base().coords() != start.x.as_slice() {
        return Err(Error::InvalidArgument("jet must be based at the path start".into()));
    }
    let length = path.length();
    if !(0.0..=length).contains(&s) {
        return Err(Error::InvalidArgument(format!(
            "s = {s} outside the path range [0, {length}]"
        )));
    }
    let k = s / length * path.step_count() as f64;
    let (x_s, tau_s) = if (k - k.round()).abs() < 1e-9 {
        let sample = &path.samples()[k.round() as usize];
        (sample.x.clone(), sample.tau.clone())
    } else if s == 0.0 {
        (start.x.clone(), start.tau.clone())
    } else {
        let steps = ((k.ceil() as usize).max(MIN_STEPS)).max(1);
        shoot_endpoint(model, &start.x, &start.tau, s, steps)?
    };
    let base = jet.base();
    let disp: Vec<f64> = x_s.iter().zip(base.iter()).map(|(a, b)| a - b).collect();
    let u = jet.lambda_matrix(&disp)? * DVector::from_column_slice(&tau_s);
    Ok(TangentVector::coordinate(base.clone(), u.as_slice().to_vec()))
}

/// Largest deviation of `g(τ, τ)` along the path from its initial value.
pub fn speed_drift(model: &MetricModel, path: &GeodesicPath) -> Result<f64> {
    let p0 = path.start();
    let e0 = model.inner(&p0.x, &p0.tau, &p0.tau)?;
    let mut worst = 0.0f64;
    for p in path.samples() {
        worst = worst.max((model.inner(&p.x, &p.tau, &p.tau)? - e0).abs());
    }
    Ok(worst)
}
