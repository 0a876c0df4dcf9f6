//! Acceptance gate: one line per criterion, non-zero exit if any fails.

use std::f64::consts::FRAC_PI_2;
use std::process::ExitCode;
use std::time::Instant;

use deformlab_core::action::{action_value, hj_residual, ActionOptions};
use deformlab_core::fit::{loglog_slope, meets_exponent};
use deformlab_core::geodesic::{first_integral, shoot, shoot_endpoint, ConnectOptions};
use deformlab_core::group::{
    associativity_residual, aux_matrices, canonical_law_residuals, eval_k, rho_from_mu, GroupOptions,
};
use deformlab_core::jet::{
    canonicity_residual, deformation_jet, geodesic_tangent_at, jet_from_log_samples, max_coefficient_difference,
    rho_coefficients, skew_part, symmetrized_max, MAX_JET_ORDER,
};
use deformlab_core::transport::{
    composition_residual, discrepancy_scaling, finite_transport, metric_compat_residual, ode_transport,
    TransportOptions,
};
use deformlab_core::{MetricModel, Result, TangentVector};
use nalgebra::DMatrix;

type Outcome = Result<(bool, String)>;

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, c| m.max(c.abs()))
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

fn chart_norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|c| c * s).collect()
}

/// Rescales `dir` to unit metric length at `x`.
fn unit(model: &MetricModel, x: &[f64], dir: &[f64]) -> Vec<f64> {
    let g = model.inner(x, dir, dir).expect("metric").sqrt();
    scaled(dir, 1.0 / g)
}

fn base_points(model: &MetricModel) -> Vec<Vec<f64>> {
    match model.id() {
        "flat2" => vec![vec![0.0, 0.0], vec![1.5, -0.5], vec![-2.0, 3.0]],
        "flat3" => vec![vec![0.0, 0.0, 0.0], vec![1.0, -0.5, 0.25], vec![-2.0, 3.0, 1.0]],
        "polar_flat" => vec![vec![1.0, 0.0], vec![2.0, 0.7], vec![0.7, -1.0]],
        "sphere2" => vec![vec![FRAC_PI_2, 0.0], vec![1.0, 0.5], vec![2.0, -1.0]],
        "halfplane" => vec![vec![0.0, 1.0], vec![0.5, 2.0], vec![-0.3, 0.7]],
        other => panic!("no base points for {other}"),
    }
}

fn directions(n: usize) -> Vec<Vec<f64>> {
    if n == 2 {
        vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, -0.8]]
    } else {
        vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8], vec![0.5, -0.5, 0.7]]
    }
}

fn criterion_flat() -> Outcome {
    let mut worst = 0.0f64;
    let tol = 1e-10;
    for model in [MetricModel::flat(2)?, MetricModel::flat(3)?] {
        let n = model.dimension();
        let x = model.point(base_points(&model)[1].clone())?;
        let jet = deformation_jet(&model, &x, 6)?;
        let gopts = GroupOptions::default();
        let copts = ConnectOptions::default().unbounded();
        let action = ActionOptions {
            locality: Some(f64::INFINITY),
            ..ActionOptions::default()
        };
        let ident = DMatrix::<f64>::identity(n, n);
        for dir in directions(n) {
            let t = scaled(&dir, 0.375);
            worst = worst.max(amax(&diff(&jet.eval_h(&t)?, &t)));
            worst = worst.max((jet.lambda_matrix(&t)? - &ident).amax());
            let (lam, mu) = aux_matrices(&model, &x, &t, &gopts)?;
            worst = worst.max((lam.m - &ident).amax()).max((mu.m - &ident).amax());

            let path = shoot(&model, &x, &t, 1.0, 1000)?;
            worst = worst.max((ode_transport(&model, &path)?.m - &ident).amax());
            let xp = path.end_point();
            let theta = TangentVector::coordinate(xp.clone(), directions(n)[0].clone());
            let disp = diff(&xp, &x);
            let moved = finite_transport(&jet, &disp, &theta)?;
            worst = worst.max(amax(&diff(&moved.components, &theta.components)));

            // canonicity, radial transport, composition, canonical law, Hamilton-Jacobi
            let (tau, tau_end) = geodesic_tangent_at(&model, &x, &disp, &copts)?;
            worst = worst.max(canonicity_residual(&model, &jet, &disp, &tau_end)?);
            let back = jet.lambda_matrix(&disp)? * nalgebra::DVector::from_column_slice(&tau_end);
            worst = worst.max(amax(&diff(back.as_slice(), &tau)));
            let comp = composition_residual(&model, &x, &dir, 0.2, 0.2, &TransportOptions::default())?;
            worst = worst.max(comp.full);
            let law = canonical_law_residuals(&model, &x, &dir, 0.2, 0.1, &gopts)?;
            worst = worst.max(law.r28).max(law.r29);
            worst = worst.max(hj_residual(&model, &x, &xp, &action)?);
        }
    }
    Ok((worst < tol, format!("max residual {worst:.3e} (tol {tol:.0e})")))
}

fn criterion_curvature() -> Outcome {
    let sphere = MetricModel::sphere2(1.0)?;
    let r = sphere.riemann(&sphere.point(vec![FRAC_PI_2, 0.0])?)?;
    let e_sphere = (r.get(0, 1, 0, 1) - 1.0).abs();

    let hp = MetricModel::halfplane();
    let mut e_hp = 0.0f64;
    for p in base_points(&hp) {
        let x = hp.point(p)?;
        let (g, _) = hp.metric_at(&x)?;
        e_hp = e_hp.max((hp.riemann(&x)?.sectional(&g, 0, 1) + 1.0).abs());
    }

    let polar = MetricModel::polar_flat();
    let mut e_polar = 0.0f64;
    let mut gamma_max = 0.0f64;
    for p in base_points(&polar) {
        let x = polar.point(p)?;
        e_polar = e_polar.max(polar.riemann(&x)?.max_abs());
        gamma_max = gamma_max.max(amax(polar.christoffel(&x, 0)?.as_slice()));
    }
    let pass = e_sphere < 1e-6 && e_hp < 1e-6 && e_polar < 1e-8 && gamma_max > 0.1;
    Ok((
        pass,
        format!("sphere {e_sphere:.3e}, halfplane {e_hp:.3e}, polar |R| {e_polar:.3e} with |Γ| {gamma_max:.2}"),
    ))
}

fn criterion_jet_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut where_ = String::new();
    for model in MetricModel::catalog() {
        for p in base_points(&model) {
            let x = model.point(p.clone())?;
            for order in 2..=4 {
                let a = deformation_jet(&model, &x, order)?;
                let b = jet_from_log_samples(&model, &x, order)?;
                let d = max_coefficient_difference(&a, &b, order);
                if d > worst {
                    worst = d;
                    where_ = format!("{} {:?} N={order}", model.id(), p);
                }
            }
        }
    }
    Ok((
        worst < 1e-5,
        format!("max coefficient difference {worst:.3e} at {where_}"),
    ))
}

fn criterion_first_integral() -> Outcome {
    let mut worst = 0.0f64;
    for model in MetricModel::catalog() {
        for p in base_points(&model) {
            let x = model.point(p.clone())?;
            let reach = 0.5 * model.locality_radius(&x);
            let reach = if reach.is_finite() { reach } else { 1.0 };
            let jet = deformation_jet(&model, &x, MAX_JET_ORDER)?;
            for dir in directions(model.dimension()) {
                let tau = scaled(&dir, reach / chart_norm(&dir));
                let path = shoot(&model, &x, &tau, 1.0, 1000)?;
                for k in (0..=1000).step_by(50) {
                    let s = k as f64 / 1000.0;
                    let v = first_integral(&model, &jet, &path, s)?;
                    worst = worst.max(amax(&diff(&v.components, &tau)));
                }
            }
        }
    }
    Ok((worst < 1e-6, format!("max drift {worst:.3e}")))
}

fn criterion_radial_transport() -> Outcome {
    let mut worst = 0.0f64;
    for model in MetricModel::catalog() {
        for p in base_points(&model) {
            let x = model.point(p.clone())?;
            let jet = deformation_jet(&model, &x, MAX_JET_ORDER)?;
            let reach = jet.trust_radius().min(1.0);
            for dir in directions(model.dimension()) {
                let tau = scaled(&dir, reach / chart_norm(&dir));
                let path = shoot(&model, &x, &tau, 1.0, 1000)?;
                let end = path.end();
                let disp = diff(&end.x, &x);
                if chart_norm(&disp) > jet.trust_radius() {
                    continue;
                }
                let theta = TangentVector::coordinate(path.end_point(), end.tau.clone());
                let moved = finite_transport(&jet, &disp, &theta)?;
                let ode = ode_transport(&model, &path)?.apply(&end.tau);
                worst = worst
                    .max(amax(&diff(&moved.components, &ode)))
                    .max(amax(&diff(&moved.components, &tau)));
            }
        }
    }
    Ok((worst < 1e-6, format!("max radial mismatch {worst:.3e}")))
}

fn criterion_integrator_order() -> Outcome {
    // the unit-speed semicircle x = tanh s, y = sech s through (0, 1)
    let hp = MetricModel::halfplane();
    let x = hp.point(vec![0.0, 1.0])?;
    let s = 1.0f64;
    let exact = [s.tanh(), 1.0 / s.cosh()];
    let mut pts = Vec::new();
    let mut table = Vec::new();
    for steps in [10usize, 20, 40, 80] {
        let (end, _) = shoot_endpoint(&hp, &x, &[1.0, 0.0], s, steps)?;
        let err = amax(&diff(&end, &exact));
        pts.push(((steps as f64).recip(), err));
        table.push(format!("{steps}:{err:.2e}"));
    }
    let slope = loglog_slope(&pts, 4)?;
    Ok((
        (slope - 4.0).abs() <= 0.1,
        format!("slope {slope:.4} [{}]", table.join(" ")),
    ))
}

fn criterion_round_trip() -> Outcome {
    let mut worst = 0.0f64;
    let opts = GroupOptions {
        steps: 1000,
        ..GroupOptions::default()
    };
    for model in MetricModel::catalog() {
        for p in base_points(&model) {
            let x = model.point(p.clone())?;
            let jet = deformation_jet(&model, &x, 6)?;
            let trust = jet.trust_radius().min(1.0);
            for dir in directions(model.dimension()) {
                for frac in [0.25, 0.5, 0.999] {
                    let t = scaled(&dir, frac * trust / chart_norm(&dir));
                    let k = eval_k(&model, &x, &t, &opts)?;
                    if chart_norm(&k) > jet.eval_radius() {
                        continue;
                    }
                    worst = worst.max(amax(&diff(&jet.eval_h(&k)?, &t)));
                }
            }
        }
    }
    Ok((worst < 1e-4, format!("max |H(K(t)) - t| {worst:.3e}")))
}

fn criterion_rho() -> Outcome {
    let mut analytic = 0.0f64;
    let mut fd = 0.0f64;
    let mut sym = 0.0f64;
    let mut cyclic = 0.0f64;
    for model in MetricModel::catalog() {
        let n = model.dimension();
        for p in base_points(&model) {
            let x = model.point(p.clone())?;
            let r = model.riemann(&x)?;
            let (rho, skew) = rho_coefficients(&model, &x)?;
            analytic = analytic.max(max_diff(skew.as_slice(), r.as_slice()));
            sym = sym.max(symmetrized_max(n, &rho));
            cyclic = cyclic.max(r.cyclic_residual());
        }
        let x = model.point(base_points(&model)[0].clone())?;
        let rho_fd = rho_from_mu(&model, &x, &GroupOptions::default())?;
        let skew = skew_part(&x, n, &rho_fd);
        fd = fd.max(max_diff(skew.as_slice(), model.riemann(&x)?.as_slice()));
        sym = sym.max(symmetrized_max(n, &rho_fd));
    }
    let pass = analytic < 1e-6 && fd < 1e-3 && sym < 1e-3 && cyclic < 1e-8;
    Ok((
        pass,
        format!("analytic {analytic:.3e}, from μ {fd:.3e}, symmetrized {sym:.3e}, cyclic {cyclic:.3e}"),
    ))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    amax(&diff(a, b))
}

fn criterion_canonical_law() -> Outcome {
    let mut law = 0.0f64;
    let mut assoc = 0.0f64;
    let opts = GroupOptions::default();
    for model in MetricModel::catalog() {
        let x = model.point(base_points(&model)[0].clone())?;
        for dir in directions(model.dimension()).into_iter().take(2) {
            let tau = unit(&model, &x, &dir);
            for s1 in [0.1, 0.2] {
                for s2 in [0.1, 0.2] {
                    let r = canonical_law_residuals(&model, &x, &tau, s1, s2, &opts)?;
                    law = law.max(r.r28).max(r.r29);
                }
            }
            assoc = assoc.max(associativity_residual(&model, &x, &tau, [0.1, 0.1, 0.2], &opts)?);
        }
    }
    Ok((
        law < 1e-6 && assoc < 1e-6,
        format!("r28/r29 {law:.3e}, associativity {assoc:.3e}"),
    ))
}

fn criterion_hamilton_jacobi() -> Outcome {
    let mut hj = 0.0f64;
    let mut symmetry = 0.0f64;
    let mut scaling = 0.0f64;
    let opts = ActionOptions::default();
    for model in MetricModel::catalog() {
        let x = model.point(base_points(&model)[0].clone())?;
        let reach = (0.4 * model.locality_radius(&x)).min(1.0);
        for dir in directions(model.dimension()).into_iter().take(2) {
            let tau = scaled(&dir, reach / chart_norm(&dir));
            let (end, _) = shoot_endpoint(&model, &x, &tau, 1.0, 1000)?;
            let xp = model.point(end)?;
            hj = hj.max(hj_residual(&model, &x, &xp, &opts)?);
            let forward = action_value(&model, &x, &xp, &opts)?.value;
            let backward = action_value(&model, &xp, &x, &opts)?.value;
            symmetry = symmetry.max((forward - backward).abs());
            for s in [0.25, 0.5] {
                let (mid, _) = shoot_endpoint(&model, &x, &tau, s, 1000)?;
                let part = action_value(&model, &x, &model.point(mid)?, &opts)?.value;
                scaling = scaling.max((part - s * s * forward).abs());
            }
        }
    }
    let pass = hj < 1e-5 && symmetry < 1e-8 && scaling < 1e-8;
    Ok((
        pass,
        format!("HJ {hj:.3e}, symmetry {symmetry:.3e}, s² scaling {scaling:.3e}"),
    ))
}

fn criterion_measured() -> Outcome {
    let mut flat_worst = 0.0f64;
    let mut exponents = Vec::new();
    let topts = TransportOptions {
        jet_order: MAX_JET_ORDER,
        ..TransportOptions::default()
    };
    for model in MetricModel::catalog() {
        let n = model.dimension();
        let x = if model.id() == "polar_flat" {
            model.point(vec![2.0, 0.0])?
        } else {
            model.point(base_points(&model)[0].clone())?
        };
        let dirs = directions(n);
        let tau = unit(&model, &x, &dirs[0]);
        let theta = dirs[1].clone();
        let jet = deformation_jet(&model, &x, MAX_JET_ORDER)?;
        let loc = model.locality_radius(&x).min(2.0);
        let ladder: Vec<f64> = [0.05, 0.1, 0.2, 0.4].iter().map(|f| f * loc).collect();
        let scaling = discrepancy_scaling(&model, &x, &tau, &theta, &ladder, &topts)?;
        let mut compat = Vec::new();
        let mut comp = Vec::new();
        for &s in &ladder {
            let t = scaled(&tau, s);
            let (end, _) = shoot_endpoint(&model, &x, &t, 1.0, 1000)?;
            let disp = diff(&end, &x);
            compat.push((s, metric_compat_residual(&model, &jet, &disp, 1000)?.full));
            comp.push((
                s,
                composition_residual(&model, &x, &tau, 0.5 * s, 0.5 * s, &topts)?.full,
            ));
        }
        let table: Vec<(f64, f64)> = scaling.table.iter().map(|r| (r.s, r.discrepancy)).collect();
        if model.known_curvature() == Some(0.0) {
            for set in [&table, &compat, &comp] {
                flat_worst = flat_worst.max(set.iter().fold(0.0f64, |m, p| m.max(p.1)));
            }
        } else {
            for (name, set) in [("nonradial", &table), ("metric", &compat), ("composition", &comp)] {
                exponents.push((model.id().to_string(), name, loglog_slope(set, 4)?));
            }
        }
    }
    let min_exp = exponents.iter().fold(f64::INFINITY, |m, e| m.min(e.2));
    let detail: Vec<String> = exponents.iter().map(|(m, k, e)| format!("{m}/{k} {e:.3}")).collect();
    Ok((
        flat_worst < 1e-8 && meets_exponent(min_exp, 2.0),
        format!("flat {flat_worst:.3e}; exponents {}", detail.join(", ")),
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("flat-chart exactness", criterion_flat),
        ("curvature correctness", criterion_curvature),
        ("jet recurrence vs log-sample oracle", criterion_jet_oracle),
        ("first-integral constancy", criterion_first_integral),
        ("radial transport equivalence", criterion_radial_transport),
        ("integrator order", criterion_integrator_order),
        ("exp/log round trip", criterion_round_trip),
        ("rho and curvature identities", criterion_rho),
        ("canonical multiplication law", criterion_canonical_law),
        ("Hamilton-Jacobi", criterion_hamilton_jacobi),
        ("measured-residual contracts", criterion_measured),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
