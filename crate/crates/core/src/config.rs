//! Study configuration: TOML with dotted keys plus `key=value` overrides.
//!
//! Every key is checked against the default configuration before
//! deserialization, so unknown keys and type mismatches are reported with
//! their full dotted path.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::envs::{EnvName, EnvSpec, DEFAULT_REWARD_NOISE};
use crate::error::{Error, Result};
use crate::experiments::{AgentConfig, ReplaySettings, VariantSpec};
use crate::schedule::ReplayMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Train,
    Grid,
    Additive,
    Ablative,
    Offline,
    Sticky,
}

impl StudyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StudyKind::Train => "train",
            StudyKind::Grid => "grid",
            StudyKind::Additive => "additive",
            StudyKind::Ablative => "ablative",
            StudyKind::Offline => "offline",
            StudyKind::Sticky => "sticky",
        }
    }
}

/// Environment settings: the cross product of `settings` and `sticky`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSettings {
    /// Base environments; `+noise` enables goal-reward noise.
    pub settings: Vec<String>,
    pub sticky: Vec<f64>,
    pub noise_sigma: f64,
}

impl Default for EnvSettings {
    fn default() -> Self {
        Self {
            settings: vec!["gridworld".into(), "gridworld+noise".into(), "sparse_maze".into()],
            sticky: vec![0.0, 0.25],
            noise_sigma: DEFAULT_REWARD_NOISE,
        }
    }
}

impl EnvSettings {
    fn parse_setting(&self, s: &str) -> Result<(EnvName, f64)> {
        let (base, noise) = match s.strip_suffix("+noise") {
            Some(b) => (b, self.noise_sigma),
            None => (s, 0.0),
        };
        let name = match base {
            "gridworld" => EnvName::Gridworld,
            "sparse_maze" => EnvName::SparseMaze,
            "chain" => EnvName::Chain,
            _ => {
                return Err(Error::config(
                    "env.settings",
                    format!("unknown environment `{s}` (gridworld, sparse_maze, chain, optionally +noise)"),
                ))
            }
        };
        Ok((name, noise))
    }

    /// Resolved settings, sticky-major.
    pub fn specs_with_sticky(&self, sticky: &[f64]) -> Result<Vec<EnvSpec>> {
        let mut out = Vec::new();
        for &st in sticky {
            for s in &self.settings {
                let (name, noise) = self.parse_setting(s)?;
                let spec = EnvSpec::new(name, st, noise);
                spec.validate()?;
                out.push(spec);
            }
        }
        if out.is_empty() {
            return Err(Error::config("env.settings", "no environment settings"));
        }
        Ok(out)
    }

    pub fn specs(&self) -> Result<Vec<EnvSpec>> {
        self.specs_with_sticky(&self.sticky)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReplayConfig {
    pub mode: ReplayMode,
    pub capacity: u64,
    /// Larger capacity used by capacity comparisons.
    pub capacity_large: u64,
    pub ratio: f64,
    pub oldest_age: u64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        let s = ReplaySettings::default();
        Self {
            mode: s.mode,
            capacity: s.capacity,
            capacity_large: 50_000,
            ratio: s.ratio,
            oldest_age: s.oldest_age,
        }
    }
}

impl ReplayConfig {
    pub fn settings(&self, capacity: u64) -> ReplaySettings {
        ReplaySettings {
            mode: self.mode,
            capacity,
            ratio: self.ratio,
            oldest_age: self.oldest_age,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSettings {
    pub capacities: Vec<u64>,
    pub oldest_ages: Vec<u64>,
    /// Cells whose replay ratio falls below this are skipped.
    pub min_ratio: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            capacities: vec![1_000, 5_000, 25_000],
            oldest_ages: vec![250, 1_250, 6_250],
            min_ratio: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StickySettings {
    pub values: Vec<f64>,
    pub n: Vec<u64>,
}

impl Default for StickySettings {
    fn default() -> Self {
        Self {
            values: vec![0.0, 0.25],
            n: vec![1, 3, 5, 7],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OfflineSettings {
    /// Dataset file for `train`-style offline runs; empty means collect one.
    pub dataset: String,
    /// Gradient budget of the agent that collects the data.
    pub collect_budget: u64,
    pub n: Vec<u64>,
}

impl Default for OfflineSettings {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            collect_budget: 40_000,
            n: vec![1, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub seed_root: u64,
    pub seeds: u64,
    /// Gradient updates per run.
    pub budget: u64,
    /// Bootstrap resamples per comparison.
    pub resamples: u64,
    pub output_dir: String,
    pub env: EnvSettings,
    pub variant: VariantSpec,
    pub replay: ReplayConfig,
    pub agent: AgentConfig,
    pub grid: GridSettings,
    pub sticky: StickySettings,
    pub offline: OfflineSettings,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            study: StudyKind::Train,
            seed_root: 0,
            seeds: 20,
            budget: 40_000,
            resamples: 1_000,
            output_dir: "results".into(),
            env: EnvSettings::default(),
            variant: VariantSpec::rainbow(),
            replay: ReplayConfig::default(),
            agent: AgentConfig::default(),
            grid: GridSettings::default(),
            sticky: StickySettings::default(),
            offline: OfflineSettings::default(),
        }
    }
}

type Flat = BTreeMap<String, Value>;

fn flatten_into(prefix: &str, table: &toml::Table, out: &mut Flat) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten_into(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn flatten(table: &toml::Table) -> Flat {
    let mut out = Flat::new();
    flatten_into("", table, &mut out);
    out
}

fn unflatten(flat: &Flat) -> toml::Table {
    let mut root = toml::Table::new();
    for (key, v) in flat {
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().expect("non-empty key");
        let mut t = &mut root;
        for p in parts {
            t = t
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(toml::Table::new()))
                .as_table_mut()
                .expect("prefix keys are tables");
        }
        t.insert(last.to_string(), v.clone());
    }
    root
}

fn default_flat() -> Flat {
    let v = Value::try_from(StudyConfig::default()).expect("default config serializes");
    flatten(v.as_table().expect("config is a table"))
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

/// Coerces `value` to the type of `template`, allowing integers where floats
/// are expected.
fn conform(key: &str, template: &Value, value: Value) -> Result<Value> {
    let mismatch = |found: &Value| {
        Error::config(
            key,
            format!("expected {}, found {}", type_name(template), type_name(found)),
        )
    };
    match (template, value) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (Value::Integer(_), Value::Integer(i)) if i < 0 => {
            Err(Error::config(key, format!("{i} must be >= 0")))
        }
        (Value::Array(t), Value::Array(items)) => {
            let elem = t.first().or(items.first()).cloned();
            let items = match elem {
                Some(elem) => items
                    .into_iter()
                    .map(|x| conform(key, &elem, x))
                    .collect::<Result<Vec<_>>>()?,
                None => items,
            };
            Ok(Value::Array(items))
        }
        (t, v) if std::mem::discriminant(t) == std::mem::discriminant(&v) => Ok(v),
        (_, v) => Err(mismatch(&v)),
    }
}

/// Parses a `--set` right-hand side: a TOML value, or a bare string.
fn parse_override_value(raw: &str) -> Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

impl StudyConfig {
    /// Parses TOML text and applies `key=value` overrides in order.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config("<file>", e.message().to_string()))?;
        let mut user = flatten(&table);
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o.clone(), "override must be key=value"))?;
            user.insert(k.trim().to_string(), parse_override_value(v.trim()));
        }
        let defaults = default_flat();
        let mut merged = defaults.clone();
        for (k, v) in user {
            let template = defaults
                .get(&k)
                .ok_or_else(|| Error::config(k.clone(), "unknown key"))?;
            merged.insert(k.clone(), conform(&k, template, v)?);
        }
        let config: StudyConfig = Value::Table(unflatten(&merged))
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("<config>", e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::config("seeds", "must be >= 1"));
        }
        if self.resamples == 0 {
            return Err(Error::config("resamples", "must be >= 1"));
        }
        if !(self.env.noise_sigma > 0.0 && self.env.noise_sigma.is_finite()) {
            return Err(Error::config("env.noise_sigma", "must be > 0"));
        }
        for &s in &self.env.sticky {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::config("env.sticky", format!("{s} not in [0, 1]")));
            }
        }
        self.env.specs()?;
        self.variant.validate()?;
        self.agent.validate()?;
        self.replay.settings(self.replay.capacity).validate()?;
        if self.replay.capacity_large == 0 {
            return Err(Error::config("replay.capacity_large", "must be > 0"));
        }
        if self.grid.capacities.is_empty() || self.grid.capacities.contains(&0) {
            return Err(Error::config("grid.capacities", "must be non-empty and > 0"));
        }
        if self.grid.oldest_ages.is_empty() || self.grid.oldest_ages.contains(&0) {
            return Err(Error::config("grid.oldest_ages", "must be non-empty and > 0"));
        }
        for &s in &self.sticky.values {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::config("sticky.values", format!("{s} not in [0, 1]")));
            }
        }
        if self.sticky.n.contains(&0) {
            return Err(Error::config("sticky.n", "must be >= 1"));
        }
        if self.offline.n.contains(&0) {
            return Err(Error::config("offline.n", "must be >= 1"));
        }
        Ok(())
    }

    /// Flat `key = value` lines in key order; parses back to an equal config.
    pub fn to_toml(&self) -> String {
        let v = Value::try_from(self).expect("config serializes");
        let mut out = String::new();
        for (k, v) in flatten(v.as_table().expect("config is a table")) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}
