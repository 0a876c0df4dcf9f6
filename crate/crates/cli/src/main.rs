//! `deformlab`: geodesics, connections, transports, jets, actions and the
//! verification harness from the command line.
//!
//! Exit codes: 0 success, 1 bad input, 2 domain exit, 3 connection (boundary
//! value) failure, 4 verification assertions failed.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use deformlab_core::action::{action_value, hj_residual, ActionOptions};
use deformlab_core::geodesic::{connect, shoot, ConnectOptions, DEFAULT_CONNECT_STEPS};
use deformlab_core::jet::{deformation_jet, DEFAULT_JET_ORDER, MAX_JET_ORDER};
use deformlab_core::numfmt::to_json_pretty;
use deformlab_core::transport::{finite_transport, ode_transport};
use deformlab_core::verify::{run_verification, VerifyConfig};
use deformlab_core::{load_manifold, ChartPoint, Error, ManifoldSpec, MetricModel, TangentVector};

#[derive(Parser, Debug)]
#[command(name = "deformlab", version, about = "Deformed-group geometry laboratory")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Catalog model: flat2, flat3, flat:n=4, polar_flat, sphere2, sphere2:R=2, halfplane
    #[arg(long, global = true, conflicts_with = "spec")]
    manifold: Option<String>,
    /// Model description as a JSON file
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Verification config (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file, or directory for `verify`
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for `verify`
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Multiplies every verification tolerance
    #[arg(long = "tol-scale", global = true)]
    tol_scale: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a geodesic and write its samples as CSV
    Geodesic {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        tau: Vec<f64>,
        /// Affine length
        #[arg(long = "T", alias = "length", default_value_t = 1.0)]
        length: f64,
        #[arg(long, default_value_t = DEFAULT_CONNECT_STEPS)]
        steps: usize,
    },
    /// Initial tangent of the geodesic from x reaching x′ at s = 1
    Connect {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        xp: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_CONNECT_STEPS)]
        steps: usize,
        /// Skip the locality-radius check
        #[arg(long)]
        unbounded: bool,
    },
    /// Transport θ from x′ back to x
    Transport {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        xp: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        theta: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        /// Jet order of the finite transport
        #[arg(long, default_value_t = MAX_JET_ORDER)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_CONNECT_STEPS)]
        steps: usize,
    },
    /// Dump the deformation jet at x as JSON
    Jet {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_JET_ORDER)]
        order: usize,
    },
    /// Run the verification suite
    Verify {
        /// Integrator steps, overriding the config
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Energy of the geodesic from x to x′ and its Hamilton-Jacobi residual
    Action {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        xp: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_CONNECT_STEPS)]
        steps: usize,
        /// Also compute the Hamilton-Jacobi residual
        #[arg(long)]
        hj: bool,
        /// Skip the locality-radius check
        #[arg(long)]
        unbounded: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Jet,
    Ode,
    Both,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DomainExit { .. }
            | Error::NonFinite { .. }
            | Error::StencilOutsideDomain { .. }
            | Error::SingularMetric { .. } => 2,
            Error::NotConverged { .. } | Error::ConjugatePoint | Error::OutsideLocality { .. } => 3,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn bad_input(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| bad_input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| bad_input(format!("{}: {e}", path.display())))
}

fn manifold_spec(global: &Global) -> Result<Option<ManifoldSpec>, Failure> {
    match (&global.manifold, &global.spec) {
        (Some(name), _) => Ok(Some(ManifoldSpec::from_short_name(name)?)),
        (None, Some(path)) => Ok(Some(read_json(path)?)),
        (None, None) => Ok(None),
    }
}

fn model(global: &Global) -> Result<MetricModel, Failure> {
    let spec = manifold_spec(global)?.ok_or_else(|| bad_input("a model is required: --manifold or --spec"))?;
    Ok(load_manifold(&spec)?)
}

fn emit(global: &Global, text: &str) -> Result<(), Failure> {
    let text = if text.ends_with('\n') {
        text.to_string()
    } else {
        format!("{text}\n")
    };
    match &global.out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn point(model: &MetricModel, coords: &[f64]) -> Result<ChartPoint, Failure> {
    Ok(model.point(coords.to_vec())?)
}

#[derive(Serialize)]
struct ConnectOutput<'a> {
    model: &'a str,
    x: &'a [f64],
    xp: &'a [f64],
    tau: Vec<f64>,
}

#[derive(Serialize)]
struct TransportOutput<'a> {
    model: &'a str,
    from: &'a [f64],
    to: &'a [f64],
    theta: &'a [f64],
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    jet: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ode: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    discrepancy: Option<f64>,
    /// `radial` when θ is the geodesic tangent at x′, else `measured`.
    status: &'static str,
}

#[derive(Serialize)]
struct ActionOutput<'a> {
    model: &'a str,
    x: &'a [f64],
    xp: &'a [f64],
    action: f64,
    tau: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hj_residual: Option<f64>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match &cli.command {
        Command::Geodesic { x, tau, length, steps } => {
            let m = model(g)?;
            let p = point(&m, x)?;
            let path = shoot(&m, &p, tau, *length, *steps)?;
            let mut buf = Vec::new();
            path.write_csv(&mut buf)?;
            emit(g, &String::from_utf8(buf).expect("CSV is UTF-8"))
        }
        Command::Connect {
            x,
            xp,
            steps,
            unbounded,
        } => {
            let m = model(g)?;
            let mut opts = ConnectOptions::with_steps(*steps);
            if *unbounded {
                opts = opts.unbounded();
            }
            let tau = connect(&m, &point(&m, x)?, &point(&m, xp)?, &opts)?;
            emit(
                g,
                &to_json_pretty(&ConnectOutput {
                    model: m.id(),
                    x,
                    xp,
                    tau: tau.components,
                }),
            )
        }
        Command::Transport {
            x,
            xp,
            theta,
            method,
            order,
            steps,
        } => {
            let m = model(g)?;
            let (px, pxp) = (point(&m, x)?, point(&m, xp)?);
            if theta.len() != m.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: m.dimension(),
                    found: theta.len(),
                }
                .into());
            }
            let tau = connect(&m, &px, &pxp, &ConnectOptions::with_steps(*steps))?;
            let path = shoot(&m, &px, &tau.components, 1.0, *steps)?;
            let end_tangent = path.end().tau.clone();
            let jet_result = if *method != Method::Ode {
                let jet = deformation_jet(&m, &px, *order)?;
                let t: Vec<f64> = xp.iter().zip(x).map(|(a, b)| a - b).collect();
                let v = TangentVector::coordinate(pxp.clone(), theta.clone());
                Some(finite_transport(&jet, &t, &v)?.components)
            } else {
                None
            };
            let ode_result = if *method != Method::Jet {
                Some(ode_transport(&m, &path)?.apply(theta))
            } else {
                None
            };
            let discrepancy = match (&jet_result, &ode_result) {
                (Some(a), Some(b)) => Some(a.iter().zip(b).fold(0.0f64, |w, (p, q)| w.max((p - q).abs()))),
                _ => None,
            };
            emit(
                g,
                &to_json_pretty(&TransportOutput {
                    model: m.id(),
                    from: xp,
                    to: x,
                    theta,
                    method: *method,
                    jet: jet_result,
                    ode: ode_result,
                    discrepancy,
                    status: if is_parallel(theta, &end_tangent) {
                        "radial"
                    } else {
                        "measured"
                    },
                }),
            )
        }
        Command::Jet { x, order } => {
            let m = model(g)?;
            let jet = deformation_jet(&m, &point(&m, x)?, *order)?;
            emit(g, &jet.to_json())
        }
        Command::Verify { steps } => {
            let mut config: VerifyConfig = match &g.config {
                Some(path) => read_json(path)?,
                None => VerifyConfig::default(),
            };
            if let Some(spec) = manifold_spec(g)? {
                config.models = vec![spec];
            }
            if let Some(s) = steps {
                config.steps = *s;
            }
            if let Some(w) = g.workers {
                config.workers = Some(w);
            }
            if let Some(t) = g.tol_scale {
                config.tol_scale = t;
            }
            let report = run_verification(&config)?;
            let mut json = report.to_json();
            if !json.ends_with('\n') {
                json.push('\n');
            }
            match &g.out {
                Some(dir) => {
                    fs::create_dir_all(dir)?;
                    fs::write(dir.join("report.json"), &json)?;
                    let mut csv = Vec::new();
                    report.write_ladder_csv(&mut csv)?;
                    fs::write(dir.join("ladders.csv"), csv)?;
                }
                None => io::stdout().write_all(json.as_bytes())?,
            }
            let s = &report.summary;
            eprintln!(
                "verify: {} passed, {} failed, {} measured",
                s.assert_pass, s.assert_fail, s.measured
            );
            for f in report.failures() {
                eprintln!(
                    "FAIL {} {} {:?}: {}",
                    f.check,
                    f.model,
                    f.point,
                    f.message.as_deref().unwrap_or("")
                );
            }
            if report.passed() {
                Ok(())
            } else {
                Err(Failure {
                    code: 4,
                    message: format!("{} assertion(s) failed", s.assert_fail),
                })
            }
        }
        Command::Action {
            x,
            xp,
            steps,
            hj,
            unbounded,
        } => {
            let m = model(g)?;
            let (px, pxp) = (point(&m, x)?, point(&m, xp)?);
            let opts = ActionOptions {
                steps: *steps,
                locality: unbounded.then_some(f64::INFINITY),
                ..ActionOptions::default()
            };
            let value = action_value(&m, &px, &pxp, &opts)?;
            let hj_residual = if *hj {
                Some(hj_residual(&m, &px, &pxp, &opts)?)
            } else {
                None
            };
            emit(
                g,
                &to_json_pretty(&ActionOutput {
                    model: m.id(),
                    x,
                    xp,
                    action: value.value,
                    tau: value.tau,
                    hj_residual,
                }),
            )
        }
    }
}

fn is_parallel(a: &[f64], b: &[f64]) -> bool {
    let bb: f64 = b.iter().map(|c| c * c).sum();
    let aa: f64 = a.iter().map(|c| c * c).sum();
    if bb == 0.0 || aa == 0.0 {
        return false;
    }
    let k = a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() / bb;
    let off: f64 = a.iter().zip(b).map(|(p, q)| (p - k * q).powi(2)).sum();
    off.sqrt() <= 1e-6 * aa.sqrt()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if f.code != 4 {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
