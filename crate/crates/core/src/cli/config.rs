//! Scenario configuration documents.
//!
//! The native format is one `key = value` pair per line with dotted
//! namespaces; `#` starts a comment. A JSON object with the same keys, either
//! dotted or nested, is accepted as well.
//!
//! ```text
//! kind = beta_sweep
//! intensity.kappa = 1
//! sweep.values = 0.3, 0.9
//! solver.init = const:0.5
//! bounds.upper = inf
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::equilibrium::{InitRule, SolverSettings};
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Reference,
    Equilibrium,
    BetaSweep,
    PriceCap,
    Oversell,
    Robustness,
    Validate,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::Reference,
        ScenarioKind::Equilibrium,
        ScenarioKind::BetaSweep,
        ScenarioKind::PriceCap,
        ScenarioKind::Oversell,
        ScenarioKind::Robustness,
        ScenarioKind::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Reference => "reference",
            ScenarioKind::Equilibrium => "equilibrium",
            ScenarioKind::BetaSweep => "beta_sweep",
            ScenarioKind::PriceCap => "price_cap",
            ScenarioKind::Oversell => "oversell",
            ScenarioKind::Robustness => "robustness",
            ScenarioKind::Validate => "validate",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                format!("unknown scenario kind `{s}`; expected one of {}", names.join(", "))
            })
    }
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub model: ModelParams,
    pub solver: SolverSettings,
    /// β values for `beta_sweep`.
    pub sweep_values: Vec<f64>,
    pub robustness_trials: usize,
    pub n_paths: usize,
    /// Constant quote shifts tried against the equilibrium strategy by `validate`.
    pub shifts: Vec<f64>,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    /// Defaults for `kind`; `reference` switches competition off.
    pub fn defaults(kind: ScenarioKind) -> Self {
        let mut model = ModelParams::default();
        if kind == ScenarioKind::Reference {
            model.intensity.beta = 0.0;
        }
        Self {
            kind,
            model,
            solver: SolverSettings::default(),
            sweep_values: Vec::new(),
            robustness_trials: 100,
            n_paths: 100_000,
            shifts: vec![-0.2, -0.1, -0.05, 0.05, 0.1, 0.2],
            seed: 0,
            output: None,
        }
    }

    /// Checks the model, the solver settings and the requirements of the kind.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.solver.validate()?;
        let requirement = |key: &str, message: &str| Error::Config {
            line: 0,
            key: key.into(),
            message: format!("kind `{}` {message}", self.kind),
        };
        match self.kind {
            ScenarioKind::Reference if self.model.intensity.beta != 0.0 => {
                Err(requirement("intensity.beta", "requires beta = 0"))
            }
            ScenarioKind::Oversell if !self.model.inventory.allows_overselling() => {
                Err(requirement("inventory.q_min", "requires q_min < 0"))
            }
            ScenarioKind::PriceCap if !self.model.bounds.is_capped() => {
                Err(requirement("bounds.upper", "requires a finite upper bound"))
            }
            ScenarioKind::BetaSweep if self.sweep_values.is_empty() => {
                Err(requirement("sweep.values", "requires a nonempty value list"))
            }
            ScenarioKind::Robustness if self.robustness_trials < 2 => {
                Err(requirement("robustness.trials", "requires at least 2 trials"))
            }
            ScenarioKind::Validate if self.n_paths < 2 => {
                Err(requirement("validate.n_paths", "requires at least 2 paths"))
            }
            _ => Ok(()),
        }
    }

    /// Serializes every resolved key in the native format. Parsing the result
    /// gives back an equal config.
    pub fn to_document(&self) -> String {
        let m = &self.model;
        let s = &self.solver;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("kind", self.kind.to_string());
        put("seed", self.seed.to_string());
        if let Some(dir) = &self.output {
            put("output", dir.display().to_string());
        }
        put("grid.horizon", m.grid.horizon.to_string());
        put("grid.n_steps", m.grid.n_steps.to_string());
        put("inventory.q_max", m.inventory.q_max.to_string());
        put("inventory.q_min", m.inventory.q_min.to_string());
        put("intensity.scale", m.intensity.scale.to_string());
        put("intensity.kappa", m.intensity.kappa.to_string());
        put("intensity.beta", m.intensity.beta.to_string());
        put("penalty.alpha_pos", m.penalty.alpha_pos.to_string());
        put("penalty.alpha_neg", m.penalty.alpha_neg.to_string());
        put("penalty.phi_pos", m.penalty.phi_pos.to_string());
        put("penalty.phi_neg", m.penalty.phi_neg.to_string());
        put("bounds.lower", m.bounds.lower.to_string());
        put("bounds.upper", m.bounds.upper.to_string());
        put("market.sigma", m.sigma.to_string());
        put("market.s0", m.s0.to_string());
        put("market.x0", m.x0.to_string());
        put("solver.gamma", s.gamma.to_string());
        put("solver.tol", s.tol.to_string());
        put("solver.max_iter", s.max_iter.to_string());
        put("solver.init", init_to_string(&s.init));
        put("sweep.values", join(&self.sweep_values));
        put("robustness.trials", self.robustness_trials.to_string());
        put("validate.n_paths", self.n_paths.to_string());
        put("validate.shifts", join(&self.shifts));
        out
    }
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

fn init_to_string(init: &InitRule) -> String {
    match init {
        InitRule::TerminalQuote => "terminal".into(),
        InitRule::Constant(v) => format!("const:{v}"),
        InitRule::Path(_) => "path".into(),
    }
}

/// A raw `key = value` entry with the line it came from (0 for JSON input).
#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

/// Parses a native or JSON document and applies defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let entries = if text.trim_start().starts_with('{') {
        json_entries(text)?
    } else {
        flat_entries(text)?
    };
    resolve(entries)
}

fn flat_entries(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                key: content.into(),
                message: "expected `key = value`".into(),
            });
        };
        let key = k.trim().to_string();
        let value = unquote(v.trim()).to_string();
        insert(&mut out, key, Entry { line, value })?;
    }
    Ok(out)
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

fn insert(map: &mut BTreeMap<String, Entry>, key: String, entry: Entry) -> Result<()> {
    if let Some(prev) = map.get(&key) {
        return Err(Error::Config {
            line: entry.line,
            key,
            message: format!("duplicate key, first set on line {}", prev.line),
        });
    }
    map.insert(key, entry);
    Ok(())
}

fn json_entries(text: &str) -> Result<BTreeMap<String, Entry>> {
    let root: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Config {
        line: e.line(),
        key: String::new(),
        message: format!("invalid JSON: {e}"),
    })?;
    let mut out = BTreeMap::new();
    flatten_json("", &root, &mut out)?;
    Ok(out)
}

fn flatten_json(
    prefix: &str,
    v: &serde_json::Value,
    out: &mut BTreeMap<String, Entry>,
) -> Result<()> {
    use serde_json::Value;
    let leaf = |s: String| Entry { line: 0, value: s };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_json(&key, child, out)?;
            }
            Ok(())
        }
        Value::Array(items) => {
            let mut parts = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::Number(n) => parts.push(n.to_string()),
                    Value::String(s) => parts.push(s.clone()),
                    _ => {
                        return Err(Error::Config {
                            line: 0,
                            key: prefix.into(),
                            message: "list items must be numbers".into(),
                        })
                    }
                }
            }
            insert(out, prefix.into(), leaf(parts.join(", ")))
        }
        Value::Number(n) => insert(out, prefix.into(), leaf(n.to_string())),
        Value::String(s) => insert(out, prefix.into(), leaf(s.clone())),
        Value::Bool(_) | Value::Null => Err(Error::Config {
            line: 0,
            key: prefix.into(),
            message: "expected a number, string or list".into(),
        }),
    }
}

fn typed<T: FromStr>(key: &str, e: &Entry, what: &str) -> Result<T> {
    e.value.parse().map_err(|_| Error::Config {
        line: e.line,
        key: key.into(),
        message: format!("expected {what}, got `{}`", e.value),
    })
}

fn list(key: &str, e: &Entry) -> Result<Vec<f64>> {
    let body = e.value.trim();
    let body = body
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(body);
    body.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| Error::Config {
                line: e.line,
                key: key.into(),
                message: format!("expected a list of numbers, got `{s}`"),
            })
        })
        .collect()
}

fn init_rule(key: &str, e: &Entry) -> Result<InitRule> {
    match e.value.as_str() {
        "terminal" => Ok(InitRule::TerminalQuote),
        v => match v.strip_prefix("const:").map(|x| x.trim().parse::<f64>()) {
            Some(Ok(x)) => Ok(InitRule::Constant(x)),
            _ => Err(Error::Config {
                line: e.line,
                key: key.into(),
                message: format!("expected `terminal` or `const:<number>`, got `{v}`"),
            }),
        },
    }
}

fn resolve(mut entries: BTreeMap<String, Entry>) -> Result<ScenarioConfig> {
    let Some(kind_entry) = entries.remove("kind") else {
        return Err(Error::Config {
            line: 0,
            key: "kind".into(),
            message: "missing required key".into(),
        });
    };
    let kind: ScenarioKind = kind_entry.value.parse().map_err(|message| Error::Config {
        line: kind_entry.line,
        key: "kind".into(),
        message,
    })?;

    let mut cfg = ScenarioConfig::defaults(kind);
    let kind_line = kind_entry.line;
    let mut lines = BTreeMap::new();
    for (key, e) in &entries {
        lines.insert(key.as_str(), e.line);
        let k = key.as_str();
        let m = &mut cfg.model;
        let s = &mut cfg.solver;
        let real = || typed::<f64>(k, e, "a number");
        match k {
            "seed" => cfg.seed = typed(k, e, "an unsigned integer")?,
            "output" => cfg.output = Some(PathBuf::from(&e.value)),
            "grid.horizon" => m.grid.horizon = real()?,
            "grid.n_steps" => m.grid.n_steps = typed(k, e, "a positive integer")?,
            "inventory.q_max" => m.inventory.q_max = typed(k, e, "an integer")?,
            "inventory.q_min" => m.inventory.q_min = typed(k, e, "an integer")?,
            "intensity.scale" => m.intensity.scale = real()?,
            "intensity.kappa" => m.intensity.kappa = real()?,
            "intensity.beta" => m.intensity.beta = real()?,
            "penalty.alpha_pos" => m.penalty.alpha_pos = real()?,
            "penalty.alpha_neg" => m.penalty.alpha_neg = real()?,
            "penalty.phi_pos" => m.penalty.phi_pos = real()?,
            "penalty.phi_neg" => m.penalty.phi_neg = real()?,
            "bounds.lower" => m.bounds.lower = real()?,
            "bounds.upper" => m.bounds.upper = real()?,
            "market.sigma" => m.sigma = real()?,
            "market.s0" => m.s0 = real()?,
            "market.x0" => m.x0 = real()?,
            "solver.gamma" => s.gamma = real()?,
            "solver.tol" => s.tol = real()?,
            "solver.max_iter" => s.max_iter = typed(k, e, "a positive integer")?,
            "solver.init" => s.init = init_rule(k, e)?,
            "sweep.values" => cfg.sweep_values = list(k, e)?,
            "robustness.trials" => cfg.robustness_trials = typed(k, e, "an integer")?,
            "validate.n_paths" => cfg.n_paths = typed(k, e, "an integer")?,
            "validate.shifts" => cfg.shifts = list(k, e)?,
            _ => {
                return Err(Error::Config {
                    line: e.line,
                    key: key.clone(),
                    message: "unknown key".into(),
                })
            }
        }
    }

    cfg.validate().map_err(|err| match err {
        Error::Config { key, message, .. } => Error::Config {
            line: lines.get(key.as_str()).copied().unwrap_or(kind_line),
            key,
            message,
        },
        other => other,
    })?;
    Ok(cfg)
}
