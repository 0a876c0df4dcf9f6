//! Verification harness: runs the invariant suite over a set of models and
//! assembles a deterministic report.
//!
//! Records are either assertions (`assert-pass` / `assert-fail`) or
//! `measured` values that never fail a run. Full-matrix transport identities
//! are asserted only on models of zero curvature and measured elsewhere,
//! together with their fitted decay exponents.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::action::{action_value, gradient_relation_residual, hj_residual, ActionOptions};
use crate::error::{Error, Result};
use crate::fit::{loglog_slope, meets_exponent, EXPONENT_SLACK};
use crate::geodesic::{connect, first_integral, shoot, shoot_endpoint, speed_drift, ConnectOptions};
use crate::group::{
    associativity_residual, canonical_law_residuals, connection_from_aux, eval_k, lambda_fd, mu_fd, multiply,
    rho_from_mu, FieldRule, GroupOptions,
};
use crate::jet::{
    canonicity_residual, deformation_jet, geodesic_tangent_at, jet_from_log_samples, max_coefficient_difference,
    rho_coefficients, skew_part, symmetrized_max, DEFAULT_JET_ORDER, MAX_JET_ORDER,
};
use crate::manifold::{load_manifold, norm, ChartPoint, ManifoldSpec, MetricModel};
use crate::numfmt::to_json_pretty;
use crate::transport::{
    composition_residual, discrepancy_scaling, metric_compat_residual, ode_transport, TransportOptions, ZERO_FLOOR,
};

pub const SCHEMA_VERSION: u32 = 1;

/// Harness configuration; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub models: Vec<ManifoldSpec>,
    /// Base points keyed by model id; catalog models have defaults.
    pub points: BTreeMap<String, Vec<Vec<f64>>>,
    /// Directions keyed by model id. The first is the geodesic direction and
    /// the second the transported vector of the non-radial experiments.
    pub directions: BTreeMap<String, Vec<Vec<f64>>>,
    /// Shrinking ladder as fractions of `min(locality radius, 2)`.
    pub ladder: Vec<f64>,
    /// Integrator steps for paths, transports and connection solves.
    pub steps: usize,
    pub jet_order: usize,
    /// Jet order where truncation must stay below transport tolerances.
    pub transport_jet_order: usize,
    /// Per-check tolerance overrides.
    pub tolerances: BTreeMap<String, f64>,
    /// Multiplies every tolerance.
    pub tol_scale: f64,
    /// Thread limit; left out of the report echo since it cannot change results.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            models: ["flat2", "flat3", "polar_flat", "sphere2", "halfplane"]
                .iter()
                .map(|m| ManifoldSpec::catalog(m))
                .collect(),
            points: BTreeMap::new(),
            directions: BTreeMap::new(),
            ladder: vec![0.05, 0.1, 0.2, 0.4],
            steps: 1000,
            jet_order: DEFAULT_JET_ORDER,
            transport_jet_order: MAX_JET_ORDER,
            tolerances: BTreeMap::new(),
            tol_scale: 1.0,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    AssertPass,
    AssertFail,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderRow {
    pub s: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub check: String,
    pub anchor: String,
    pub model: String,
    pub point: Vec<f64>,
    pub inputs: BTreeMap<String, Value>,
    pub residuals: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    /// Lower bound on the exponent for exponent assertions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_exponent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub status: Status,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<LadderRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl CheckRecord {
    fn sort_key(&self) -> (String, String, String) {
        let inputs = serde_json::to_string(&(&self.point, &self.inputs)).expect("serializable");
        (self.check.clone(), self.model.clone(), inputs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub assert_pass: usize,
    pub assert_fail: usize,
    pub measured: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub schema: u32,
    pub tool: Tool,
    pub config: VerifyConfig,
    pub summary: Summary,
    pub records: Vec<CheckRecord>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.summary.assert_fail == 0
    }

    pub fn to_json(&self) -> String {
        to_json_pretty(self)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| r.status == Status::AssertFail)
    }

    /// `s,residual,kind` rows of every ladder, `kind` naming the record.
    pub fn write_ladder_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "s,residual,kind")?;
        for r in self.records.iter().filter(|r| !r.table.is_empty()) {
            let kind = format!("{}:{}", r.check, r.model);
            for row in &r.table {
                writeln!(out, "{},{},{}", row.s, row.residual, kind)?;
            }
        }
        Ok(())
    }
}

/// Default tolerance and anchor of each check.
fn check_info(check: &str) -> (&'static str, Option<f64>) {
    match check {
        "manifold.torsion_free" => ("symmetric connection coefficients", Some(0.0)),
        "manifold.riemann_antisymmetry" => ("curvature antisymmetry in the last two indices", Some(0.0)),
        "manifold.cyclic_identity" => ("cyclic identity of the curvature tensor", Some(1e-8)),
        "manifold.metric_compatibility" => ("metric compatibility of the connection", Some(1e-6)),
        "manifold.sectional_curvature" => ("sectional curvature of the model", Some(1e-6)),
        "geodesic.speed_conservation" => ("speed conservation along geodesics", Some(1e-9)),
        "geodesic.connect_round_trip" => ("unique geodesic between nearby points", Some(1e-8)),
        "geodesic.first_integral" => ("first integrals constant along geodesics", Some(1e-6)),
        "geodesic.convergence_order" => ("fourth-order integrator convergence", Some(0.1)),
        "jet.low_orders" => ("boundary values and connection of the deformation jet", Some(1e-12)),
        "jet.log_sample_oracle" => ("jet recurrence against fitted logarithm samples", Some(1e-5)),
        "jet.round_trip" => ("deformation function inverts the exponential displacement", Some(1e-4)),
        "jet.radial_identity" => ("radial identity of the deformation function", None),
        "jet.canonicity_decay" => ("canonicity condition on deformation functions", None),
        "jet.order_consistency" => ("truncation-order consistency", Some(1e-12)),
        "jet.rho_skew" => ("curvature as the skew part of the rho coefficients", Some(1e-6)),
        "jet.rho_symmetrized" => ("vanishing symmetrized rho coefficients", Some(1e-10)),
        "transport.radial_equivalence" => ("finite and infinitesimal transport of the geodesic tangent", Some(1e-6)),
        "transport.ode_metric_compat" => ("length preservation by infinitesimal transport", Some(1e-8)),
        "transport.discrepancy_radial" => ("finite versus infinitesimal transport, radial vector", Some(1e-6)),
        "transport.nonradial_discrepancy" => ("finite versus infinitesimal transport, arbitrary vector", Some(1e-8)),
        "transport.composition_radial" => ("composition law of finite transports, radial", Some(1e-6)),
        "transport.composition_full" => ("composition law of finite transports, full matrix", Some(1e-8)),
        "transport.metric_compat_radial" => ("length preservation by finite transport, radial", Some(1e-6)),
        "transport.metric_compat_full" => ("length preservation by finite transport, full matrix", Some(1e-8)),
        "group.right_identity" => ("identity element of the deformed group", Some(1e-12)),
        "group.aux_identity" => ("auxiliary matrices at the identity", Some(1e-8)),
        "group.aux_vs_jet" => ("auxiliary matrix against the jet derivative", Some(1e-4)),
        "group.connection_from_aux" => (
            "connection from first derivatives of the auxiliary matrices",
            Some(1e-4),
        ),
        "group.canonical_law" => ("canonical multiplication law", Some(1e-6)),
        "group.mu_form" => ("left auxiliary matrix along the canonical law", Some(1e-8)),
        "group.associativity" => ("associativity for collinear canonical data", Some(1e-6)),
        "group.rho_from_mu" => ("rho coefficients from second derivatives of mu", Some(1e-3)),
        "group.reframe_invariance" => ("frame independence of canonicity", Some(1e-10)),
        "action.hamilton_jacobi" => ("Hamilton-Jacobi equation for the action", Some(1e-5)),
        "action.symmetry" => ("symmetry of the action", Some(1e-8)),
        "action.scaling" => ("quadratic scaling of the action in the affine parameter", Some(1e-8)),
        "action.gradient_relation_contracted" => ("action gradient as transported tangent, contracted", Some(1e-5)),
        "action.gradient_relation_full" => ("action gradient as transported tangent, full vector", Some(1e-8)),
        _ => ("", None),
    }
}

/// Catalog base points used when the configuration gives none.
pub fn default_points(model: &MetricModel) -> Option<Vec<Vec<f64>>> {
    let pts = match model.id() {
        "polar_flat" => vec![vec![2.0, 0.0], vec![1.0, 0.7], vec![0.7, -1.0]],
        "sphere2" => vec![vec![std::f64::consts::FRAC_PI_2, 0.0], vec![1.0, 0.5], vec![2.0, -1.0]],
        "halfplane" => vec![vec![0.0, 1.0], vec![0.5, 2.0], vec![-0.3, 0.7]],
        id if id.starts_with("flat") => {
            let n = model.dimension();
            vec![
                vec![0.0; n],
                (0..n).map(|i| [1.5, -0.5, 0.25][i % 3]).collect(),
                (0..n).map(|i| [-2.0, 3.0, 1.0][i % 3]).collect(),
            ]
        }
        _ => return None,
    };
    Some(pts)
}

pub fn default_directions(n: usize) -> Vec<Vec<f64>> {
    let mut tau = vec![0.0; n];
    tau[0] = 1.0;
    let mut theta = vec![0.0; n];
    theta[n.min(2) - 1] = 1.0;
    if n == 1 {
        return vec![tau];
    }
    vec![tau, theta]
}

struct Ctx<'a> {
    config: &'a VerifyConfig,
    model: &'a MetricModel,
    point: ChartPoint,
    tau_dir: Vec<f64>,
    theta: Option<Vec<f64>>,
    /// Chart length of the test geodesics.
    reach: f64,
    /// Scale of the shrinking ladders.
    ladder_scale: f64,
    zero_curvature: bool,
}

impl Ctx<'_> {
    fn tolerance(&self, check: &str) -> Option<f64> {
        let base = self
            .config
            .tolerances
            .get(check)
            .copied()
            .or_else(|| check_info(check).1)?;
        Some(base * self.config.tol_scale)
    }

    fn record(&self, check: &str) -> CheckRecord {
        CheckRecord {
            check: check.to_string(),
            anchor: check_info(check).0.to_string(),
            model: self.model.id().to_string(),
            point: self.point.to_vec(),
            inputs: BTreeMap::new(),
            residuals: BTreeMap::new(),
            exponent: None,
            min_exponent: None,
            tolerance: None,
            status: Status::Measured,
            table: Vec::new(),
            message: None,
        }
    }

    /// An assertion that every residual is within the check's tolerance.
    fn assert(&self, check: &str, inputs: Vec<(&str, Value)>, residuals: Vec<(&str, f64)>) -> CheckRecord {
        let mut r = self.record(check);
        let tol = self.tolerance(check).unwrap_or(0.0);
        r.tolerance = Some(tol);
        r.inputs = inputs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let over: Vec<String> = residuals
            .iter()
            .filter(|(_, v)| !(*v <= tol))
            .map(|(k, v)| format!("{k} = {v:e}"))
            .collect();
        r.residuals = residuals.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        r.status = if over.is_empty() {
            Status::AssertPass
        } else {
            Status::AssertFail
        };
        if !over.is_empty() {
            r.message = Some(format!("{} exceeds tolerance {tol:e}", over.join(", ")));
        }
        r
    }

    fn failed(&self, check: &str, err: &Error) -> CheckRecord {
        let mut r = self.record(check);
        r.tolerance = self.tolerance(check);
        r.status = Status::AssertFail;
        r.message = Some(err.to_string());
        r
    }

    /// A ladder record: asserted to vanish on zero-curvature models,
    /// measured with its fitted exponent otherwise.
    fn ladder(&self, check: &str, inputs: Vec<(&str, Value)>, rows: Vec<LadderRow>) -> CheckRecord {
        let worst = rows.iter().fold(0.0f64, |m, r| m.max(r.residual));
        let mut r = if self.zero_curvature {
            self.assert(check, inputs, vec![("max", worst)])
        } else {
            let mut r = self.record(check);
            r.inputs = inputs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            r.residuals.insert("max".into(), worst);
            r
        };
        if rows.iter().any(|row| row.residual > ZERO_FLOOR) {
            let pts: Vec<(f64, f64)> = rows.iter().map(|row| (row.s, row.residual)).collect();
            r.exponent = loglog_slope(&pts, rows.len().min(4)).ok();
        }
        r.table = rows;
        r
    }

    /// An assertion on the fitted exponent of a ladder; residuals at the
    /// rounding floor count as vanishing identically.
    fn exponent_assert(
        &self,
        check: &str,
        inputs: Vec<(&str, Value)>,
        rows: Vec<LadderRow>,
        bound: f64,
    ) -> CheckRecord {
        let mut r = self.record(check);
        r.inputs = inputs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let worst = rows.iter().fold(0.0f64, |m, r| m.max(r.residual));
        r.residuals.insert("max".into(), worst);
        r.min_exponent = Some(bound);
        r.tolerance = Some(EXPONENT_SLACK);
        let vanishing = rows.iter().all(|row| row.residual <= ZERO_FLOOR);
        let pass = if vanishing {
            true
        } else {
            let pts: Vec<(f64, f64)> = rows.iter().map(|row| (row.s, row.residual)).collect();
            match loglog_slope(&pts, 4) {
                Ok(e) => {
                    r.exponent = Some(e);
                    let ok = meets_exponent(e, bound);
                    if !ok {
                        r.message = Some(format!("fitted exponent {e:.3} below {bound} (slack {EXPONENT_SLACK})"));
                    }
                    ok
                }
                Err(e) => {
                    r.message = Some(e.to_string());
                    false
                }
            }
        };
        r.status = if pass { Status::AssertPass } else { Status::AssertFail };
        r.table = rows;
        r
    }

    fn tau(&self, length: f64) -> Vec<f64> {
        let l = norm(&self.tau_dir);
        self.tau_dir.iter().map(|c| c * length / l).collect()
    }

    fn ladder_values(&self) -> Vec<f64> {
        self.config.ladder.iter().map(|f| f * self.ladder_scale).collect()
    }

    /// The ladder inside the jet trust radius, for asymptotic jet orders.
    fn jet_ladder_values(&self) -> Vec<f64> {
        let scale = (0.5 * self.ladder_scale).min(1.0);
        self.config.ladder.iter().map(|f| f * scale).collect()
    }

    fn connect_options(&self) -> ConnectOptions {
        ConnectOptions::with_steps(self.config.steps)
    }

    fn transport_options(&self) -> TransportOptions {
        TransportOptions {
            jet_order: self.config.transport_jet_order,
            steps: self.config.steps,
        }
    }

    fn group_options(&self) -> GroupOptions {
        GroupOptions {
            steps: self.config.steps,
            ..GroupOptions::default()
        }
    }
}

fn num(v: f64) -> Value {
    Value::from(v)
}

fn vec_value(v: &[f64]) -> Value {
    Value::from(v.to_vec())
}

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, c| m.max(c.abs()))
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

type Check = fn(&Ctx) -> Vec<CheckRecord>;

/// Runs `f`, turning an error into a failed record for `check`.
fn guarded(ctx: &Ctx, check: &str, f: impl FnOnce() -> Result<Vec<CheckRecord>>) -> Vec<CheckRecord> {
    f().unwrap_or_else(|e| vec![ctx.failed(check, &e)])
}

fn manifold_checks(ctx: &Ctx) -> Vec<CheckRecord> {
    let m = ctx.model;
    let x = &ctx.point;
    let n = m.dimension();
    let mut out = Vec::new();
    out.extend(guarded(ctx, "manifold.torsion_free", || {
        let g = m.christoffel(x, 0)?;
        let mut worst = 0.0f64;
        for mu in 0..n {
            for a in 0..n {
                for b in 0..n {
                    worst = worst.max((g.gamma(mu, a, b) - g.gamma(mu, b, a)).abs());
                }
            }
        }
        Ok(vec![ctx.assert("manifold.torsion_free", vec![], vec![("max", worst)])])
    }));
    out.extend(guarded(ctx, "manifold.riemann_antisymmetry", || {
        let r = m.riemann(x)?;
        Ok(vec![
            ctx.assert(
                "manifold.riemann_antisymmetry",
                vec![],
                vec![("max", r.antisymmetry_residual())],
            ),
            ctx.assert("manifold.cyclic_identity", vec![], vec![("max", r.cyclic_residual())]),
        ])
    }));
    if m.has_metric() {
        out.extend(guarded(ctx, "manifold.metric_compatibility", || {
            Ok(vec![ctx.assert(
                "manifold.metric_compatibility",
                vec![],
                vec![("max", m.metric_compatibility_residual(x)?)],
            )])
        }));
        if let Some(k) = m.known_curvature() {
            out.extend(guarded(ctx, "manifold.sectional_curvature", || {
                let r = m.riemann(x)?;
                let (g, _) = m.metric_at(x)?;
                let mut worst = 0.0f64;
                for a in 0..n {
                    for b in (a + 1)..n {
                        worst = worst.max((r.sectional(&g, a, b) - k).abs());
                    }
                }
                Ok(vec![ctx.assert(
                    "manifold.sectional_curvature",
                    vec![("expected", num(k))],
                    vec![("max", worst)],
                )])
            }));
        }
    }
    out
}

fn geodesic_checks(ctx: &Ctx) -> Vec<CheckRecord> {
    let m = ctx.model;
    let x = &ctx.point;
    let steps = ctx.config.steps;
    let tau = ctx.tau(ctx.reach);
    let mut out = Vec::new();
    if m.has_metric() {
        out.extend(guarded(ctx, "geodesic.speed_conservation", || {
            let unit_speed = m.inner(x, &ctx.tau_dir, &ctx.tau_dir)?.sqrt();
            let tau: Vec<f64> = ctx.tau_dir.iter().map(|c| c / unit_speed).collect();
            let path = shoot(m, x, &tau, 1.0, steps)?;
            Ok(vec![ctx.assert(
                "geodesic.speed_conservation",
                vec![("tau", vec_value(&tau)), ("steps", Value::from(steps))],
                vec![("drift", speed_drift(m, &path)?)],
            )])
        }));
    }
    out.extend(guarded(ctx, "geodesic.connect_round_trip", || {
        let (end, _) = shoot_endpoint(m, x, &tau, 1.0, steps)?;
        let back = connect(m, x, &m.point(end)?, &ctx.connect_options())?;
        Ok(vec![ctx.assert(
            "geodesic.connect_round_trip",
            vec![("tau", vec_value(&tau))],
            vec![("max", amax(&sub(&back.components, &tau)))],
        )])
    }));
    out.extend(guarded(ctx, "geodesic.first_integral", || {
        let jet = deformation_jet(m, x, ctx.config.transport_jet_order)?;
        let path = shoot(m, x, &tau, 1.0, steps)?;
        let mut worst = 0.0f64;
        for k in 0..=20 {
            let u = first_integral(m, &jet, &path, k as f64 / 20.0)?;
            worst = worst.max(amax(&sub(&u.components, &tau)));
        }
        Ok(vec![ctx.assert(
            "geodesic.first_integral",
            vec![("tau", vec_value(&tau)), ("order", Value::from(jet.order()))],
            vec![("max", worst)],
        )])
    }));
    out
}

fn convergence_check(ctx: &Ctx) -> Vec<CheckRecord> {
    // the unit-speed semicircle x = tanh s, y = sech s through (0, 1)
    if ctx.model.id() != "halfplane" || ctx.point.coords() != [0.0, 1.0] {
        return Vec::new();
    }
    guarded(ctx, "geodesic.convergence_order", || {
        let s = 1.0f64;
        let exact = [s.tanh(), 1.0 / s.cosh()];
        let mut rows = Vec::new();
        for steps in [10usize, 20, 40, 80] {
            let (end, _) = shoot_endpoint(ctx.model, &ctx.point, &[1.0, 0.0], s, steps)?;
            rows.push(LadderRow {
                s: (steps as f64).recip(),
                residual: amax(&sub(&end, &exact)),
            });
        }
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.s, r.residual)).collect();
        let slope = loglog_slope(&pts, 4)?;
        let mut r = ctx.assert(
            "geodesic.convergence_order",
            vec![("tau", vec_value(&[1.0, 0.0])), ("length", num(s))],
            vec![("slope_error", (slope - 4.0).abs())],
        );
        r.exponent = Some(slope);
        r.table = rows;
        Ok(vec![r])
    })
}

fn jet_checks(ctx: &Ctx) -> Vec<CheckRecord> {
    let m = ctx.model;
    let x = &ctx.point;
    let n = m.dimension();
    let order = ctx.config.jet_order;
    let mut out = Vec::new();
    out.extend(guarded(ctx, "jet.low_orders", || {
        let jet = deformation_jet(m, x, order)?;
        let g = m.christoffel(x, 0)?;
        let mut worst = 0.0f64;
        for mu in 0..n {
            worst = worst.max(jet.coefficient(mu, &[]).abs());
            for a in 0..n {
                let id = if mu == a { 1.0 } else { 0.0 };
                worst = worst.max((jet.coefficient(mu, &[a]) - id).abs());
                for b in a..n {
                    worst = worst.max((jet.coefficient(mu, &[a, b]) - g.gamma(mu, a, b)).abs());
                }
            }
        }
        Ok(vec![ctx.assert(
            "jet.low_orders",
            vec![("order", Value::from(order))],
            vec![("max", worst)],
        )])
    }));
    out.extend(guarded(ctx, "jet.log_sample_oracle", || {
        let mut recs = Vec::new();
        for k in 2..=4 {
            let a = deformation_jet(m, x, k)?;
            let b = jet_from_log_samples(m, x, k)?;
            recs.push(ctx.assert(
                "jet.log_sample_oracle",
                vec![("order", Value::from(k))],
                vec![("max", max_coefficient_difference(&a, &b, k))],
            ));
        }
        Ok(recs)
    }));
    out.extend(guarded(ctx, "jet.round_trip", || {
        let jet = deformation_jet(m, x, order)?;
        let trust = jet.trust_radius().min(1.0);
        let opts = ctx.group_options();
        let mut worst = 0.0f64;
        for frac in [0.25, 0.5, 1.0] {
            let t = ctx.tau(frac * trust);
            let k = eval_k(m, x, &t, &opts)?;
            worst = worst.max(amax(&sub(&jet.eval_h(&k)?, &t)));
        }
        Ok(vec![ctx.assert(
            "jet.round_trip",
            vec![("order", Value::from(order)), ("radius", num(trust))],
            vec![("max", worst)],
        )])
    }));
    out.extend(guarded(ctx, "jet.rho_skew", || {
        let r = m.riemann(x)?;
        let (rho, skew) = rho_coefficients(m, x)?;
        Ok(vec![
            ctx.assert(
                "jet.rho_skew",
                vec![],
                vec![("max", amax(&sub(skew.as_slice(), r.as_slice())))],
            ),
            ctx.assert("jet.rho_symmetrized", vec![], vec![("max", symmetrized_max(n, &rho))]),
        ])
    }));
    out
}

fn jet_scaling_checks(ctx: &Ctx) -> Vec<CheckRecord> {
    let m = ctx.model;
    let x = &ctx.point;
    let order = ctx.config.jet_order;
    let steps = ctx.config.steps;
    let mut out = Vec::new();
    out.extend(guarded(ctx, "jet.radial_identity", || {
        let jet = deformation_jet(m, x, order)?;
        let mut rows = Vec::new();
        for s in ctx.jet_ladder_values() {
            let t = ctx.tau(s);
            let (end, _) = shoot_endpoint(m, x, &t, 1.0, steps)?;
            rows.push(LadderRow {
                s,
                residual: amax(&sub(&jet.eval_h(&sub(&end, x))?, &t)),
            });
        }
        Ok(vec![ctx.exponent_assert(
            "jet.radial_identity",
            vec![("order", Value::from(order))],
            rows,
            (order + 1) as f64,
        )])
    }));
    out.extend(guarded(ctx, "jet.canonicity_decay", || {
        let jet = deformation_jet(m, x, order)?;
        let mut rows = Vec::new();
        for s in ctx.jet_ladder_values() {
            let d = ctx.tau(s);
            let (_, tangent) = geodesic_tangent_at(m, x, &d, &ctx.connect_options())?;
            rows.push(LadderRow {
                s,
                residual: canonicity_residual(m, &jet, &d, &tangent)?,
            });
        }
        Ok(vec![ctx.exponent_assert(
            "jet.canonicity_decay",
            vec![("order", Value::from(order))],
            rows,
            (order - 1) as f64,
        )])
    }));
    out.extend(guarded(ctx, "jet.order_consistency", || {
        let s = ctx.ladder_values().last().copied().unwrap_or(0.1);
        let d = ctx.tau(s);
        let (end, _) = shoot_endpoint(m, x, &d, 1.0, steps)?;
        let disp = sub(&end, x);
        let (_, tangent) = geodesic_tangent_at(m, x, &disp, &ctx.connect_options())?;
        let mut radial = Vec::new();
        let mut canon = Vec::new();
        for k in [4usize, 6, 8] {
            let jet = deformation_jet(m, x, k)?;
            radial.push(amax(&sub(&jet.eval_h(&disp)?, &d)));
            canon.push(canonicity_residual(m, &jet, &disp, &tangent)?);
        }
        let growth = |v: &[f64]| v.windows(2).fold(0.0f64, |g, w| g.max(w[1] - w[0]));
        Ok(vec![ctx.assert(
            "jet.order_consistency",
            vec![("orders", Value::from(vec![4, 6, 8])), ("s", num(s))],
            vec![
                ("radial_growth", growth(&radial)),
                ("canonicity_growth", growth(&canon)),
            ],
        )])
    }));
    out
}

fn transport_checks(ctx: &Ctx) -> Vec<CheckRecord> {
    let m = ctx.model;
    let x = &ctx.point;
    let steps = ctx.config.steps;
    let topts = ctx.transport_options();
    let mut out = Vec::new();
    out.extend(guarded(ctx, "transport.radial_equivalence", || {
        let jet = deformation_jet(m, x, topts.jet_order)?;
        let tau = ctx.tau(ctx.reach.min(jet.trust_radius()));
        let path = shoot(m, x, &tau, 1.0, steps)?;
        let end = path.end();
        let lam = jet.lambda_matrix(&sub(&end.x, x))?;
        let finite = &lam * DVector::from_column_slice(&end.tau);
        let ode = ode_transport(m, &path)?.apply(&end.tau);
        Ok(vec![ctx.assert(
            "transport.radial_equivalence",
            vec![("tau", vec_value(&tau)), ("order", Value::from(topts.jet_order))],
            vec![
                ("finite_vs_ode", amax(&sub(finite.as_slice(), &ode))),
                ("finite_vs_initial", amax(&sub(finite.as_slice(), &tau))),
            ],
        )])
    }));
    if m.has_metric() {
        out.extend(guarded(ctx, "transport.ode_metric_compat", || {
            let tau = ctx.tau(ctx.reach);
            let path = shoot(m, x, &tau, 1.0, steps)?;
            let t = ode_transport(m, &path)?;
            let (g0, _) = m.metric_at(x)?;
            let (g1, _) = m.metric_at(&path.end_point())?;
            let residual = (t.m.transpose() * g0 * &t.m - g1).amax();
            Ok(vec![ctx.assert(
                "transport.ode_metric_compat",
                vec![("tau", vec_value(&tau))],
                vec![("max", residual)],
            )])
        }));
    }
    out
}

fn transport_ladder_checks(ctx: &Ctx) -> Vec<CheckRecord> {
    let m = ctx.model;
    let x = &ctx.point;
    let steps = ctx.config.steps;
    let topts = ctx.transport_options();
    let ladder = ctx.ladder_values();
    let tau = ctx.tau(1.0);
    let mut out = Vec::new();
    if let Some(theta) = &ctx.theta {
        out.extend(guarded(ctx, "transport.nonradial_discrepancy", || {
            let d = discrepancy_scaling(m, x, &tau, theta, &ladder, &topts)?;
            let radial_worst = d.table.iter().fold(0.0f64, |w, r| w.max(r.radial));
            let inputs = || vec![("tau", vec_value(&tau)), ("theta", vec_value(theta))];
            let rows = d
                .table
                .iter()
                .map(|r| LadderRow {
                    s: r.s,
                    residual: r.discrepancy,
                })
                .collect();
            Ok(vec![
                ctx.ladder("transport.nonradial_discrepancy", inputs(), rows),
                ctx.assert("transport.discrepancy_radial", inputs(), vec![("max", radial_worst)]),
            ])
        }));
    }
    out.extend(guarded(ctx, "transport.composition_full", || {
        let mut full = Vec::new();
        let mut radial = 0.0f64;
        for &s in &ladder {
            let r = composition_residual(m, x, &tau, 0.5 * s, 0.5 * s, &topts)?;
            full.push(LadderRow { s, residual: r.full });
            radial = radial.max(r.radial);
        }
        Ok(vec![
            ctx.ladder("transport.composition_full", vec![("tau", vec_value(&tau))], full),
            ctx.assert(
                "transport.composition_radial",
                vec![("tau", vec_value(&tau))],
                vec![("max", radial)],
            ),
        ])
    }));
    if m.has_metric() {
        out.extend(guarded(ctx, "transport.metric_compat_full", || {
            let jet = deformation_jet(m, x, topts.jet_order)?;
            let mut full = Vec::new();
            let mut radial = 0.0f64;
            for &s in &ladder {
                let (end, _) = shoot_endpoint(m, x, &ctx.tau(s), 1.0, steps)?;
                let r = metric_compat_residual(m, &jet, &sub(&end, x), steps)?;
                full.push(LadderRow { s, residual: r.full });
                radial = radial.max(r.radial);
            }
            Ok(vec![
                ctx.ladder("transport.metric_compat_full", vec![("tau", vec_value(&tau))], full),
                ctx.assert(
                    "transport.metric_compat_radial",
                    vec![("tau", vec_value(&tau))],
                    vec![("max", radial)],
                ),
            ])
        }));
    }
    out
}

fn group_checks(ctx: &Ctx) -> Vec<CheckRecord> {
    let m = ctx.model;
    let x = &ctx.point;
    let n = m.dimension();
    let gopts = ctx.group_options();
    let tau = ctx.tau(ctx.reach.min(1.0));
    let mut out = Vec::new();
    out.extend(guarded(ctx, "group.right_identity", || {
        let t: Vec<f64> = tau.iter().map(|c| 0.5 * c).collect();
        let (p, _) = multiply(m, x, &t, &FieldRule::Constant(vec![0.0; n]), &gopts)?;
        Ok(vec![ctx.assert(
            "group.right_identity",
            vec![("t", vec_value(&t))],
            vec![("max", amax(&sub(&p, &t)))],
        )])
    }));
    out.extend(guarded(ctx, "group.aux_identity", || {
        let zero = vec![0.0; n];
        let ident = DMatrix::<f64>::identity(n, n);
        let lam = lambda_fd(m, x, &zero, &gopts)?;
        let mu = mu_fd(m, x, &zero, &gopts)?;
        Ok(vec![ctx.assert(
            "group.aux_identity",
            vec![],
            vec![("lambda", (lam - &ident).amax()), ("mu", (mu - &ident).amax())],
        )])
    }));
    out.extend(guarded(ctx, "group.aux_vs_jet", || {
        let t: Vec<f64> = tau.iter().map(|c| 0.2 * c).collect();
        let jet = deformation_jet(m, x, ctx.config.transport_jet_order)?;
        let k = eval_k(m, x, &t, &gopts)?;
        let lam = lambda_fd(m, x, &t, &gopts)?;
        Ok(vec![ctx.assert(
            "group.aux_vs_jet",
            vec![("t", vec_value(&t))],
            vec![("max", (lam - jet.lambda_matrix(&k)?).amax())],
        )])
    }));
    out.extend(guarded(ctx, "group.connection_from_aux", || {
        let gamma = m.christoffel(x, 0)?;
        let (from_lambda, from_mu) = connection_from_aux(m, x, 1e-3, &gopts)?;
        let g = gamma.as_slice();
        Ok(vec![ctx.assert(
            "group.connection_from_aux",
            vec![("step", num(1e-3))],
            vec![
                ("lambda", amax(&sub(&from_lambda, g))),
                ("mu", amax(&sub(&from_mu, g))),
                ("lambda_vs_mu", amax(&sub(&from_lambda, &from_mu))),
            ],
        )])
    }));
    out.extend(guarded(ctx, "group.canonical_law", || {
        let mut recs = Vec::new();
        for s1 in [0.1, 0.2] {
            for s2 in [0.1, 0.2] {
                let r = canonical_law_residuals(m, x, &tau, s1, s2, &gopts)?;
                let inputs = || vec![("tau", vec_value(&tau)), ("s1", num(s1)), ("s2", num(s2))];
                recs.push(ctx.assert("group.canonical_law", inputs(), vec![("r28", r.r28), ("r29", r.r29)]));
                if s1 != 0.1 {
                    continue;
                }
                // The printed reading does not vanish even without curvature,
                // so only the derivative reading is asserted there.
                if ctx.zero_curvature {
                    let mut mu = ctx.assert("group.mu_form", inputs(), vec![("derivative", r.r30_derivative)]);
                    mu.message = Some(format!("printed reading residual {:e}", r.r30_printed));
                    recs.push(mu);
                } else {
                    let mut mu = ctx.record("group.mu_form");
                    mu.inputs = inputs().into_iter().map(|(k, v)| (k.to_string(), v)).collect();
                    mu.residuals.insert("printed".into(), r.r30_printed);
                    mu.residuals.insert("derivative".into(), r.r30_derivative);
                    recs.push(mu);
                }
            }
        }
        Ok(recs)
    }));
    out.extend(guarded(ctx, "group.associativity", || {
        let s = [0.1, 0.1, 0.2];
        Ok(vec![ctx.assert(
            "group.associativity",
            vec![("tau", vec_value(&tau)), ("s", vec_value(&s))],
            vec![("max", associativity_residual(m, x, &tau, s, &gopts)?)],
        )])
    }));
    out.extend(guarded(ctx, "group.rho_from_mu", || {
        let rho = rho_from_mu(m, x, &gopts)?;
        let r = m.riemann(x)?;
        let skew = skew_part(x, n, &rho);
        Ok(vec![ctx.assert(
            "group.rho_from_mu",
            vec![("fd_step", num(gopts.fd_step)), ("rho_step", num(gopts.rho_step))],
            vec![
                ("skew", amax(&sub(skew.as_slice(), r.as_slice()))),
                ("symmetrized", symmetrized_max(n, &rho)),
            ],
        )])
    }));
    if n >= 2 {
        out.extend(guarded(ctx, "group.reframe_invariance", || {
            let jet = deformation_jet(m, x, ctx.config.jet_order)?;
            let d = ctx.tau(0.5 * jet.trust_radius().min(1.0));
            let (_, tangent) = geodesic_tangent_at(m, x, &d, &ctx.connect_options())?;
            let base = canonicity_residual(m, &jet, &d, &tangent)?;
            let c = std::f64::consts::FRAC_1_SQRT_2;
            let mut rot = DMatrix::<f64>::identity(n, n);
            rot[(0, 0)] = c;
            rot[(0, 1)] = -c;
            rot[(1, 0)] = c;
            rot[(1, 1)] = c;
            let doubled = DMatrix::<f64>::identity(n, n) * 2.0;
            let rotated = canonicity_residual(m, &jet.reframe(&rot)?, &d, &tangent)?;
            let scaled_jet = jet.reframe(&doubled)?;
            let scaled = canonicity_residual(m, &scaled_jet, &d, &tangent)?;
            let lambda_change = (scaled_jet.lambda_matrix(&d)? - jet.lambda_matrix(&d)?).amax();
            Ok(vec![ctx.assert(
                "group.reframe_invariance",
                vec![("displacement", vec_value(&d))],
                vec![
                    ("rotation", (rotated - base).abs()),
                    ("scaling", (scaled - base).abs()),
                    ("lambda", lambda_change),
                ],
            )])
        }));
    }
    out
}

fn action_checks(ctx: &Ctx) -> Vec<CheckRecord> {
    let m = ctx.model;
    let x = &ctx.point;
    if !m.has_metric() {
        return Vec::new();
    }
    let opts = ActionOptions {
        steps: ctx.config.steps,
        ..ActionOptions::default()
    };
    let tau = ctx.tau(0.8 * ctx.reach.min(1.0));
    let mut out = Vec::new();
    out.extend(guarded(ctx, "action.hamilton_jacobi", || {
        let (end, _) = shoot_endpoint(m, x, &tau, 1.0, ctx.config.steps)?;
        let xp = m.point(end)?;
        let forward = action_value(m, x, &xp, &opts)?.value;
        let backward = action_value(m, &xp, x, &opts)?.value;
        let mut scaling = 0.0f64;
        for s in [0.25, 0.5] {
            let (mid, _) = shoot_endpoint(m, x, &tau, s, ctx.config.steps)?;
            let part = action_value(m, x, &m.point(mid)?, &opts)?.value;
            scaling = scaling.max((part - s * s * forward).abs());
        }
        let inputs = || vec![("tau", vec_value(&tau))];
        Ok(vec![
            ctx.assert(
                "action.hamilton_jacobi",
                inputs(),
                vec![("max", hj_residual(m, x, &xp, &opts)?)],
            ),
            ctx.assert("action.symmetry", inputs(), vec![("max", (forward - backward).abs())]),
            ctx.assert("action.scaling", inputs(), vec![("max", scaling)]),
        ])
    }));
    out.extend(guarded(ctx, "action.gradient_relation_full", || {
        let mut rows = Vec::new();
        let mut contracted = 0.0f64;
        for s in ctx.ladder_values() {
            let (end, _) = shoot_endpoint(m, x, &ctx.tau(s), 1.0, ctx.config.steps)?;
            let r = gradient_relation_residual(m, x, &m.point(end)?, &opts)?;
            rows.push(LadderRow { s, residual: r.full });
            contracted = contracted.max(r.contracted);
        }
        let inputs = || vec![("tau", vec_value(&tau)), ("order", Value::from(opts.jet_order))];
        Ok(vec![
            ctx.ladder("action.gradient_relation_full", inputs(), rows),
            ctx.assert(
                "action.gradient_relation_contracted",
                inputs(),
                vec![("max", contracted)],
            ),
        ])
    }));
    out
}

/// Checks run at every configured point.
const PER_POINT: &[Check] = &[manifold_checks, geodesic_checks, jet_checks, transport_checks];
/// Checks run at the first point of each model.
const FIRST_POINT: &[Check] = &[
    convergence_check,
    jet_scaling_checks,
    transport_ladder_checks,
    group_checks,
    action_checks,
];

struct Prepared {
    model: MetricModel,
    points: Vec<ChartPoint>,
    tau_dir: Vec<f64>,
    theta: Option<Vec<f64>>,
}

fn prepare(config: &VerifyConfig) -> Result<Vec<Prepared>> {
    if config.ladder.len() < crate::transport::MIN_LADDER_POINTS {
        return Err(Error::DegenerateFit {
            points: config.ladder.len(),
            required: crate::transport::MIN_LADDER_POINTS,
        });
    }
    if !(config.tol_scale.is_finite() && config.tol_scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tol_scale {} must be positive",
            config.tol_scale
        )));
    }
    if config.steps < crate::geodesic::MIN_STEPS {
        return Err(Error::InvalidArgument(format!(
            "steps {} below the minimum {}",
            config.steps,
            crate::geodesic::MIN_STEPS
        )));
    }
    if config.models.is_empty() {
        return Err(Error::InvalidArgument("no models configured".into()));
    }
    let mut out = Vec::new();
    for spec in &config.models {
        let model = load_manifold(spec)?;
        let n = model.dimension();
        let raw = match config.points.get(model.id()) {
            Some(p) => p.clone(),
            None => default_points(&model).ok_or_else(|| {
                Error::InvalidArgument(format!("no base points configured for model '{}'", model.id()))
            })?,
        };
        if raw.is_empty() {
            return Err(Error::InvalidArgument(format!("empty point list for '{}'", model.id())));
        }
        let points = raw.into_iter().map(|p| model.point(p)).collect::<Result<Vec<_>>>()?;
        let dirs = config
            .directions
            .get(model.id())
            .cloned()
            .unwrap_or_else(|| default_directions(n));
        for d in &dirs {
            if d.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: d.len(),
                });
            }
        }
        let tau_dir = dirs
            .first()
            .filter(|d| norm(d) > 0.0)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no geodesic direction for '{}'", model.id())))?;
        out.push(Prepared {
            model,
            points,
            tau_dir,
            theta: dirs.get(1).cloned(),
        });
    }
    Ok(out)
}

/// Runs the suite. Configuration problems are errors; check failures are
/// records.
pub fn run_verification(config: &VerifyConfig) -> Result<VerificationReport> {
    let prepared = prepare(config)?;
    let mut jobs: Vec<(usize, usize, Check)> = Vec::new();
    for (mi, p) in prepared.iter().enumerate() {
        for pi in 0..p.points.len() {
            for check in PER_POINT {
                jobs.push((mi, pi, *check));
            }
        }
        for check in FIRST_POINT {
            jobs.push((mi, 0, *check));
        }
    }
    let run = || -> Vec<CheckRecord> {
        jobs.par_iter()
            .flat_map_iter(|&(mi, pi, check)| {
                let p = &prepared[mi];
                let point = p.points[pi].clone();
                let locality = p.model.locality_radius(&point);
                let ctx = Ctx {
                    config,
                    model: &p.model,
                    reach: if locality.is_finite() { 0.5 * locality } else { 1.0 },
                    ladder_scale: locality.min(2.0),
                    zero_curvature: p.model.known_curvature() == Some(0.0),
                    point,
                    tau_dir: p.tau_dir.clone(),
                    theta: p.theta.clone(),
                };
                check(&ctx)
            })
            .collect()
    };
    let mut records = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(run),
        None => run(),
    };
    records.sort_by_cached_key(|r| r.sort_key());
    let count = |s: Status| records.iter().filter(|r| r.status == s).count();
    let summary = Summary {
        assert_pass: count(Status::AssertPass),
        assert_fail: count(Status::AssertFail),
        measured: count(Status::Measured),
    };
    Ok(VerificationReport {
        schema: SCHEMA_VERSION,
        tool: Tool {
            name: "deformlab",
            version: env!("CARGO_PKG_VERSION"),
        },
        config: config.clone(),
        summary,
        records,
    })
}
