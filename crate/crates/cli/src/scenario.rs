//! Scenario files: TOML documents naming charts, maps, metrics,
//! connections and the checks to run on them.

use std::collections::HashMap;

use serde::Deserialize;
use tkbundle_core::connections::Christoffel;
use tkbundle_core::expr::{parse_expr_with, DomainBox, Expr, MapSpec};
use tkbundle_core::metrics::{pullback_metric, ImmersionSpec, MetricField};
use tkbundle_core::{Backend, Rational};

use crate::registry;
use crate::CliError;

pub const DEFAULT_SEED: u64 = 20240611;
pub const DEFAULT_SAMPLES: usize = 50;
pub const DEFAULT_ORDER: usize = 2;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub name: Option<String>,
    pub description: Option<String>,
    pub backend: Backend,
    pub order: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub charts: Vec<RawChart>,
    #[serde(default)]
    pub transitions: Vec<RawMap>,
    #[serde(default)]
    pub maps: Vec<RawMap>,
    #[serde(default)]
    pub metrics: Vec<RawMetric>,
    #[serde(default)]
    pub connections: Vec<RawConnection>,
    #[serde(default)]
    pub checks: Vec<RawCheck>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawChart {
    pub name: String,
    pub dim: usize,
    /// One `[lo, hi]` pair per coordinate; omitted means unbounded.
    pub domain: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMap {
    pub name: String,
    pub source: String,
    pub target: String,
    pub exprs: Vec<String>,
    pub inverse: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMetric {
    pub name: String,
    pub chart: String,
    /// Row-major `dim × dim` components.
    pub components: Option<Vec<String>>,
    /// Pull back the metric `ambient` along `map`.
    pub map: Option<String>,
    pub ambient: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ConnectionKind {
    Flat,
    Christoffel,
    LeviCivita,
    Pullback,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConnection {
    pub name: String,
    pub chart: String,
    pub kind: ConnectionKind,
    /// `Γ^i_{jk}` at index `(i·n + j)·n + k`.
    pub symbols: Option<Vec<String>>,
    pub metric: Option<String>,
    pub target: Option<String>,
    pub map: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCheck {
    pub check: String,
    pub order: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    pub map: Option<String>,
    pub source: Option<String>,
    pub target: Option<String>,
    pub connection: Option<String>,
    pub other: Option<String>,
    pub lambda: Option<String>,
    pub metric: Option<String>,
    pub source_metric: Option<String>,
    pub target_metric: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub name: String,
    pub dim: usize,
    pub domain: DomainBox,
}

#[derive(Debug, Clone)]
pub struct NamedMap {
    pub name: String,
    pub source: usize,
    pub target: usize,
    pub map: MapSpec,
    pub inverse: Option<MapSpec>,
}

#[derive(Debug, Clone)]
pub struct NamedMetric {
    pub chart: usize,
    pub field: MetricField,
}

#[derive(Debug, Clone)]
pub struct NamedConnection {
    pub chart: usize,
    pub gamma: Christoffel,
}

/// A check with every reference resolved and its settings fixed.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub check: &'static str,
    pub order: usize,
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub map: Option<NamedMap>,
    pub source: Option<NamedConnection>,
    pub target: Option<NamedConnection>,
    pub connection: Option<NamedConnection>,
    pub other: Option<NamedConnection>,
    pub lambda: Option<Rational>,
    pub metric: Option<NamedMetric>,
    pub source_metric: Option<NamedMetric>,
    pub target_metric: Option<NamedMetric>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub backend: Backend,
    pub checks: Vec<Invocation>,
}

/// Command-line overrides applied to every check.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub order: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub tolerance: Option<f64>,
    pub only: Option<String>,
    pub max_order: usize,
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Validation {
        path: path.into(),
        message: message.into(),
    }
}

pub fn parse(text: &str, overrides: &Overrides) -> Result<Scenario, CliError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    Builder::new(raw.backend).build(raw, overrides)
}

struct Builder {
    backend: Backend,
    charts: Vec<Chart>,
    chart_index: HashMap<String, usize>,
    maps: HashMap<String, NamedMap>,
    metrics: HashMap<String, NamedMetric>,
    connections: HashMap<String, NamedConnection>,
}

impl Builder {
    fn new(backend: Backend) -> Self {
        Builder {
            backend,
            charts: Vec::new(),
            chart_index: HashMap::new(),
            maps: HashMap::new(),
            metrics: HashMap::new(),
            connections: HashMap::new(),
        }
    }

    fn exprs(&self, path: &str, src: &[String], arity: usize) -> Result<Vec<Expr>, CliError> {
        src.iter()
            .enumerate()
            .map(|(i, s)| {
                parse_expr_with(s, arity, self.backend)
                    .map_err(|e| invalid(format!("{path}[{i}]"), format!("`{s}`: {e}")))
            })
            .collect()
    }

    fn chart(&self, path: &str, name: &str) -> Result<usize, CliError> {
        self.chart_index
            .get(name)
            .copied()
            .ok_or_else(|| invalid(path, format!("unknown chart `{name}`")))
    }

    fn unique<T>(path: &str, name: &str, table: &HashMap<String, T>) -> Result<(), CliError> {
        if table.contains_key(name) {
            return Err(invalid(path, format!("duplicate name `{name}`")));
        }
        Ok(())
    }

    fn build(mut self, raw: RawScenario, ov: &Overrides) -> Result<Scenario, CliError> {
        for (i, c) in raw.charts.iter().enumerate() {
            let path = format!("charts[{i}]");
            if self.chart_index.contains_key(&c.name) {
                return Err(invalid(format!("{path}.name"), format!("duplicate chart `{}`", c.name)));
            }
            if c.dim == 0 {
                return Err(invalid(format!("{path}.dim"), "dimension must be positive"));
            }
            let domain = match &c.domain {
                None => DomainBox::unbounded(c.dim),
                Some(d) => {
                    if d.len() != c.dim {
                        return Err(invalid(
                            format!("{path}.domain"),
                            format!("expected {} intervals, found {}", c.dim, d.len()),
                        ));
                    }
                    let iv: Vec<(f64, f64)> = d.iter().map(|p| (p[0], p[1])).collect();
                    DomainBox::from_intervals(&iv).map_err(|e| invalid(format!("{path}.domain"), e.to_string()))?
                }
            };
            self.chart_index.insert(c.name.clone(), self.charts.len());
            self.charts.push(Chart {
                name: c.name.clone(),
                dim: c.dim,
                domain,
            });
        }
        let maps = raw.transitions.iter().map(|m| ("transitions", m));
        let maps = maps.chain(raw.maps.iter().map(|m| ("maps", m)));
        let mut counters = HashMap::new();
        for (table, m) in maps {
            let i = counters.entry(table).or_insert(0usize);
            let path = format!("{table}[{i}]");
            *i += 1;
            Self::unique(&format!("{path}.name"), &m.name, &self.maps)?;
            let source = self.chart(&format!("{path}.source"), &m.source)?;
            let target = self.chart(&format!("{path}.target"), &m.target)?;
            let (n, k) = (self.charts[source].dim, self.charts[target].dim);
            if m.exprs.len() != k {
                return Err(invalid(
                    format!("{path}.exprs"),
                    format!("target chart `{}` has dimension {k}, found {} expressions", m.target, m.exprs.len()),
                ));
            }
            let exprs = self.exprs(&format!("{path}.exprs"), &m.exprs, n)?;
            let map = MapSpec::new(n, exprs, self.charts[source].domain.clone())
                .map_err(|e| invalid(format!("{path}.exprs"), e.to_string()))?;
            let inverse = match &m.inverse {
                None => None,
                Some(inv) => {
                    if inv.len() != n || n != k {
                        return Err(invalid(
                            format!("{path}.inverse"),
                            "an inverse needs as many expressions as both chart dimensions",
                        ));
                    }
                    let exprs = self.exprs(&format!("{path}.inverse"), inv, k)?;
                    Some(
                        MapSpec::new(k, exprs, self.charts[target].domain.clone())
                            .map_err(|e| invalid(format!("{path}.inverse"), e.to_string()))?,
                    )
                }
            };
            self.maps.insert(
                m.name.clone(),
                NamedMap {
                    name: m.name.clone(),
                    source,
                    target,
                    map,
                    inverse,
                },
            );
        }
        for (i, m) in raw.metrics.iter().enumerate() {
            let path = format!("metrics[{i}]");
            Self::unique(&format!("{path}.name"), &m.name, &self.metrics)?;
            let chart = self.chart(&format!("{path}.chart"), &m.chart)?;
            let field = match (&m.components, &m.map, &m.ambient) {
                (Some(c), None, None) => {
                    let n = self.charts[chart].dim;
                    if c.len() != n * n {
                        return Err(invalid(
                            format!("{path}.components"),
                            format!("expected {} components, found {}", n * n, c.len()),
                        ));
                    }
                    let exprs = self.exprs(&format!("{path}.components"), c, n)?;
                    MetricField::from_components(n, exprs, self.charts[chart].domain.clone())
                        .map_err(|e| invalid(format!("{path}.components"), e.to_string()))?
                }
                (None, Some(map), Some(ambient)) => {
                    let g = self.map(&format!("{path}.map"), map)?;
                    let h = self.metric(&format!("{path}.ambient"), ambient)?;
                    if g.source != chart {
                        return Err(invalid(format!("{path}.map"), format!("map `{map}` does not start on `{}`", m.chart)));
                    }
                    if g.target != h.chart {
                        return Err(invalid(
                            format!("{path}.ambient"),
                            format!("metric `{ambient}` does not live on the target chart of `{map}`"),
                        ));
                    }
                    let imm = ImmersionSpec::new(g.map, h.field).map_err(|e| invalid(path.clone(), e.to_string()))?;
                    pullback_metric(&imm)
                }
                _ => {
                    return Err(invalid(
                        path,
                        "give either `components` or both `map` and `ambient`",
                    ))
                }
            };
            self.metrics.insert(m.name.clone(), NamedMetric { chart, field });
        }
        for (i, c) in raw.connections.iter().enumerate() {
            let path = format!("connections[{i}]");
            Self::unique(&format!("{path}.name"), &c.name, &self.connections)?;
            let chart = self.chart(&format!("{path}.chart"), &c.chart)?;
            let n = self.charts[chart].dim;
            let need = |field: &Option<String>, key: &str| -> Result<String, CliError> {
                field
                    .clone()
                    .ok_or_else(|| invalid(format!("{path}.{key}"), format!("required for kind {:?}", c.kind)))
            };
            let gamma = match c.kind {
                ConnectionKind::Flat => Christoffel::flat(n),
                ConnectionKind::Christoffel => {
                    let symbols = c
                        .symbols
                        .as_ref()
                        .ok_or_else(|| invalid(format!("{path}.symbols"), "required for kind christoffel"))?;
                    if symbols.len() != n * n * n {
                        return Err(invalid(
                            format!("{path}.symbols"),
                            format!("expected {} symbols, found {}", n * n * n, symbols.len()),
                        ));
                    }
                    let exprs = self.exprs(&format!("{path}.symbols"), symbols, n)?;
                    let symmetric = (0..n).all(|a| {
                        (0..n).all(|b| (0..n).all(|d| symbols[(a * n + b) * n + d] == symbols[(a * n + d) * n + b]))
                    });
                    Christoffel::from_symbols(n, exprs, self.charts[chart].domain.clone(), symmetric)
                        .map_err(|e| invalid(format!("{path}.symbols"), e.to_string()))?
                }
                ConnectionKind::LeviCivita => {
                    let name = need(&c.metric, "metric")?;
                    let g = self.metric(&format!("{path}.metric"), &name)?;
                    if g.chart != chart {
                        return Err(invalid(format!("{path}.metric"), format!("metric `{name}` lives on another chart")));
                    }
                    tkbundle_core::metrics::levi_civita(&g.field)
                }
                ConnectionKind::Pullback => {
                    let tname = need(&c.target, "target")?;
                    let mname = need(&c.map, "map")?;
                    let target = self.connection(&format!("{path}.target"), &tname)?;
                    let g = self.map(&format!("{path}.map"), &mname)?;
                    if g.source != chart || g.target != target.chart {
                        return Err(invalid(
                            format!("{path}.map"),
                            format!("map `{mname}` must run from `{}` to the chart of `{tname}`", c.chart),
                        ));
                    }
                    Christoffel::pullback(target.gamma, g.map).map_err(|e| invalid(path.clone(), e.to_string()))?
                }
            };
            self.connections.insert(c.name.clone(), NamedConnection { chart, gamma });
        }

        let mut checks = Vec::new();
        for (i, c) in raw.checks.iter().enumerate() {
            let path = format!("checks[{i}]");
            let Some(info) = registry::lookup(&c.check) else {
                return Err(invalid(format!("{path}.check"), format!("unknown check `{}`", c.check)));
            };
            if ov.only.as_deref().is_some_and(|only| only != info.name) {
                continue;
            }
            let order = ov.order.or(c.order).or(raw.order).unwrap_or(DEFAULT_ORDER);
            if order == 0 || order > ov.max_order {
                return Err(invalid(
                    format!("{path}.order"),
                    format!("order {order} is outside 1..={}", ov.max_order),
                ));
            }
            let tolerance = ov
                .tolerance
                .or(c.tolerance)
                .or(raw.tolerance)
                .unwrap_or_else(|| tkbundle_core::report::Settings::default_tolerance(self.backend));
            if !(tolerance >= 0.0) {
                return Err(invalid(format!("{path}.tolerance"), "tolerance must be non-negative"));
            }
            let lambda = match &c.lambda {
                None => None,
                Some(s) => Some(
                    tkbundle_core::scalar::parse_rational(s)
                        .ok_or_else(|| invalid(format!("{path}.lambda"), format!("`{s}` is not a rational number")))?,
                ),
            };
            let inv = Invocation {
                check: info.name,
                order,
                samples: ov.samples.or(c.samples).or(raw.samples).unwrap_or(DEFAULT_SAMPLES),
                seed: ov.seed.or(c.seed).or(raw.seed).unwrap_or(DEFAULT_SEED),
                tolerance,
                map: self.opt(&path, "map", &c.map, Self::map)?,
                source: self.opt(&path, "source", &c.source, Self::connection)?,
                target: self.opt(&path, "target", &c.target, Self::connection)?,
                connection: self.opt(&path, "connection", &c.connection, Self::connection)?,
                other: self.opt(&path, "other", &c.other, Self::connection)?,
                lambda,
                metric: self.opt(&path, "metric", &c.metric, Self::metric)?,
                source_metric: self.opt(&path, "source_metric", &c.source_metric, Self::metric)?,
                target_metric: self.opt(&path, "target_metric", &c.target_metric, Self::metric)?,
            };
            registry::validate(&inv, self.backend, &self.charts)
                .map_err(|(key, message)| invalid(format!("{path}.{key}"), message))?;
            checks.push(inv);
        }
        Ok(Scenario {
            name: raw.name.unwrap_or_else(|| "scenario".into()),
            backend: self.backend,
            checks,
        })
    }

    fn opt<T>(
        &self,
        path: &str,
        key: &str,
        name: &Option<String>,
        get: fn(&Self, &str, &str) -> Result<T, CliError>,
    ) -> Result<Option<T>, CliError> {
        name.as_ref().map(|n| get(self, &format!("{path}.{key}"), n)).transpose()
    }

    fn map(&self, path: &str, name: &str) -> Result<NamedMap, CliError> {
        self.maps
            .get(name)
            .cloned()
            .ok_or_else(|| invalid(path, format!("unknown map `{name}`")))
    }

    fn metric(&self, path: &str, name: &str) -> Result<NamedMetric, CliError> {
        self.metrics
            .get(name)
            .cloned()
            .ok_or_else(|| invalid(path, format!("unknown metric `{name}`")))
    }

    fn connection(&self, path: &str, name: &str) -> Result<NamedConnection, CliError> {
        self.connections
            .get(name)
            .cloned()
            .ok_or_else(|| invalid(path, format!("unknown connection `{name}`")))
    }
}
