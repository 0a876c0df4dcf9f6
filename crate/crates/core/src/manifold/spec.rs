use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricModel, ScaleRule};
use crate::error::{Error, Result};
use crate::expr::{Expr, Predicate};

/// JSON description of a model: a catalog entry or inline expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifoldSpec {
    Catalog {
        catalog: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    Inline {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        dimension: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric: Option<Vec<Vec<String>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        connection: Option<Vec<Vec<Vec<String>>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        domain: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        curvature_scale: Option<f64>,
    },
}

impl ManifoldSpec {
    pub fn catalog(name: &str) -> Self {
        Self::Catalog {
            catalog: name.to_string(),
            params: BTreeMap::new(),
        }
    }

    /// Short names as accepted on the command line: `flat2`, `flat:n=4`,
    /// `polar_flat`, `sphere2`, `sphere2:R=2`, `halfplane`.
    pub fn from_short_name(s: &str) -> Result<Self> {
        let (name, rest) = match s.split_once(':') {
            Some((a, b)) => (a.trim(), b),
            None => (s.trim(), ""),
        };
        let mut params = BTreeMap::new();
        for kv in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got '{kv}'")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad number in '{kv}'")))?;
            params.insert(k.trim().to_string(), v);
        }
        Ok(Self::Catalog {
            catalog: name.to_string(),
            params,
        })
    }
}

fn take_param(params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::InvalidParameter(format!("unexpected parameter '{k}'")));
        }
    }
    Ok(())
}

fn dimension_param(v: f64) -> Result<usize> {
    if v.fract() != 0.0 || !(1.0..=64.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("dimension n = {v}")));
    }
    Ok(v as usize)
}

/// Builds a model from its description.
pub fn load_manifold(spec: &ManifoldSpec) -> Result<MetricModel> {
    match spec {
        ManifoldSpec::Catalog { catalog, params } => match catalog.as_str() {
            "flat" => {
                take_param(params, &["n"])?;
                let n = params.get("n").copied().unwrap_or(2.0);
                MetricModel::flat(dimension_param(n)?)
            }
            "polar_flat" => {
                take_param(params, &[])?;
                Ok(MetricModel::polar_flat())
            }
            "sphere2" => {
                take_param(params, &["R"])?;
                MetricModel::sphere2(params.get("R").copied().unwrap_or(1.0))
            }
            "halfplane" => {
                take_param(params, &[])?;
                Ok(MetricModel::halfplane())
            }
            other => {
                if let Some(n) = other.strip_prefix("flat").and_then(|d| d.parse::<usize>().ok()) {
                    take_param(params, &[])?;
                    return MetricModel::flat(n);
                }
                Err(Error::UnknownCatalog(other.to_string()))
            }
        },
        ManifoldSpec::Inline {
            id,
            dimension,
            metric,
            connection,
            domain,
            curvature_scale,
        } => {
            let n = *dimension;
            if n == 0 {
                return Err(Error::InvalidParameter("dimension must be >= 1".into()));
            }
            let domain = Predicate::parse(domain.as_deref().unwrap_or(""), n)?;
            let scale = ScaleRule::Constant(curvature_scale.unwrap_or(1.0));
            let id = id.clone().unwrap_or_else(|| "user".to_string());
            match (metric, connection) {
                (Some(rows), None) => {
                    check_rows(rows, n)?;
                    let exprs = rows
                        .iter()
                        .flatten()
                        .map(|s| Expr::parse(s, n))
                        .collect::<Result<Vec<_>>>()?;
                    MetricModel::from_metric_exprs(id, n, exprs, domain, scale)
                }
                (None, Some(blocks)) => {
                    if blocks.len() != n {
                        return Err(Error::DimensionMismatch {
                            expected: n,
                            found: blocks.len(),
                        });
                    }
                    let mut exprs = Vec::with_capacity(n * n * n);
                    for rows in blocks {
                        check_rows(rows, n)?;
                        for s in rows.iter().flatten() {
                            exprs.push(Expr::parse(s, n)?);
                        }
                    }
                    MetricModel::from_connection_exprs(id, n, exprs, domain, scale)
                }
                _ => Err(Error::InvalidParameter(
                    "inline spec needs exactly one of 'metric' or 'connection'".into(),
                )),
            }
        }
    }
}

fn check_rows(rows: &[Vec<String>], n: usize) -> Result<()> {
    if rows.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rows.len(),
        });
    }
    for r in rows {
        if r.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: r.len(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_entries_load() {
        let s: ManifoldSpec = serde_json::from_str(r#"{"catalog": "sphere2", "params": {"R": 1.0}}"#).unwrap();
        let m = load_manifold(&s).unwrap();
        assert_eq!(m.dimension(), 2);
        assert_eq!(m.known_curvature(), Some(1.0));
        let m = load_manifold(&ManifoldSpec::from_short_name("flat:n=3").unwrap()).unwrap();
        assert_eq!(m.dimension(), 3);
        let m = load_manifold(&ManifoldSpec::from_short_name("flat2").unwrap()).unwrap();
        assert_eq!(m.id(), "flat2");
        assert!(matches!(
            load_manifold(&ManifoldSpec::catalog("torus")),
            Err(Error::UnknownCatalog(_))
        ));
        assert!(load_manifold(&ManifoldSpec::from_short_name("sphere2:k=2").unwrap()).is_err());
    }

    #[test]
    fn inline_metric_matches_catalog_sphere() {
        let s: ManifoldSpec = serde_json::from_str(
            r#"{"dimension": 2, "metric": [["1","0"],["0","sin(x0)^2"]], "domain": "x0>0 && x0<pi"}"#,
        )
        .unwrap();
        let user = load_manifold(&s).unwrap();
        let cat = MetricModel::sphere2(1.0).unwrap();
        let x = cat.point(vec![0.7, 0.2]).unwrap();
        let a = user.riemann(&x).unwrap();
        let b = cat.riemann(&x).unwrap();
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((p - q).abs() < 1e-14);
        }
        assert!(user.check_point(&[-0.1, 0.0]).is_err());
    }

    #[test]
    fn inline_errors() {
        let bad: ManifoldSpec = serde_json::from_str(r#"{"dimension": 2, "metric": [["1","x0"],["0","1"]]}"#).unwrap();
        assert!(matches!(load_manifold(&bad), Err(Error::NonSymmetricMetric { .. })));
        let short: ManifoldSpec = serde_json::from_str(r#"{"dimension": 3, "metric": [["1","0"],["0","1"]]}"#).unwrap();
        assert!(matches!(load_manifold(&short), Err(Error::DimensionMismatch { .. })));
        let var: ManifoldSpec = serde_json::from_str(r#"{"dimension": 2, "metric": [["1","0"],["0","x2"]]}"#).unwrap();
        assert!(load_manifold(&var).is_err());
    }

    #[test]
    fn connection_only_model() {
        let s: ManifoldSpec =
            serde_json::from_str(r#"{"dimension": 2, "connection": [[["0","0"],["0","0"]],[["x1","0"],["0","0"]]]}"#)
                .unwrap();
        let m = load_manifold(&s).unwrap();
        assert!(!m.has_metric());
        let x = m.point(vec![0.0, 1.0]).unwrap();
        assert!(matches!(m.metric_at(&x), Err(Error::MetricUnavailable(_))));
        assert_eq!(m.christoffel(&x, 1).unwrap().gamma(1, 0, 0), 1.0);
        let torsion: ManifoldSpec =
            serde_json::from_str(r#"{"dimension": 2, "connection": [[["0","1"],["0","0"]],[["0","0"],["0","0"]]]}"#)
                .unwrap();
        assert!(matches!(load_manifold(&torsion), Err(Error::Torsion { .. })));
    }
}
