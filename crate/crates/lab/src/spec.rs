//! Experiment parameter records and spec files.
//!
//! A spec file is either a JSON object or flat `key = value` lines with `#`
//! comments. Values are read as JSON where possible and as bare strings
//! otherwise, so `alphas = [0, 0.1]` and `strategy = thinning` both work.
//! The `kind` key selects the experiment and `out` the output path; every
//! other key is a parameter of that experiment, and missing parameters take
//! the command-line defaults.

use std::path::Path;

use clap::{Args, Command, FromArgMatches, Subcommand};
use loopsoup::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Parameters of an `Args` struct with every option at its default.
fn clap_defaults<T: Args + FromArgMatches>() -> T {
    let cmd = T::augment_args(Command::new("defaults"));
    let m = cmd.try_get_matches_from(["defaults"]).expect("every option has a default");
    T::from_arg_matches(&m).expect("defaults parse")
}

macro_rules! clap_default {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                clap_defaults()
            }
        }
    )*};
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialArgs {
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// Radius of the killing carrier `B(0, carrier)`.
    #[arg(long, default_value_t = 20)]
    pub carrier: i64,
    /// The set is the inner boundary of `B(0, a_radius)`.
    #[arg(long, default_value_t = 2)]
    pub a_radius: i64,
    /// Start `x = x_dist e_1`.
    #[arg(long, default_value_t = 5)]
    pub x_dist: i64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopsArgs {
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// Loops of length up to this cutoff.
    #[arg(long, default_value_t = 8)]
    pub nmax: usize,
    /// Window radius; the window is `B(0, window)`.
    #[arg(long, default_value_t = 0)]
    pub window: i64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoupArgs {
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Window radius; the window is `B(0, window)`.
    #[arg(long, default_value_t = 0)]
    pub window: i64,
    #[arg(long, default_value_t = 8)]
    pub nmax: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: u64,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// `conditioned` or `thinning`.
    #[arg(long, default_value = "conditioned")]
    pub strategy: String,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcursionsArgs {
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// `A` is the inner boundary of `B(0, a_radius)`.
    #[arg(long, default_value_t = 1)]
    pub a_radius: i64,
    /// `B` is the inner boundary of `B(0, b_radius)`.
    #[arg(long, default_value_t = 6)]
    pub b_radius: i64,
    #[arg(long, default_value_t = 12)]
    pub carrier: i64,
    #[arg(long, default_value_t = 10000)]
    pub reps: u64,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Thresholds `k` of the tail check.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
    pub ks: Vec<u64>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenormArgs {
    /// Depth of the embedded binary tree.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 6)]
    pub l: u64,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub big_l0: i64,
    /// `exhaustive` or `sampled`.
    #[arg(long, default_value = "exhaustive")]
    pub mode: String,
    /// Refuse exhaustive runs whose count bound exceeds this.
    #[arg(long, default_value_t = 10_000_000)]
    pub guard: u64,
    #[arg(long, default_value_t = 10000)]
    pub samples: usize,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploreArgs {
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Box radius `R`.
    #[arg(long, default_value_t = 3)]
    pub radius: i64,
    /// Scale `N`; the exploration targets coarse distance `floor(N / 30)`.
    #[arg(long, default_value_t = 90)]
    pub n: i64,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 8)]
    pub nmax: usize,
    /// Replicate index of the soup realisation.
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoupleArgs {
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.2")]
    pub delta: Vec<f64>,
    /// Anchor box radius `L`.
    #[arg(long, default_value_t = 1)]
    pub l: i64,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    pub s: Vec<i64>,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    /// `site_occupied`, `site_vacant`, `occupied_fraction_ge:q` or `vacant_crossing`.
    #[arg(long, default_value = "site_occupied")]
    pub f1: String,
    #[arg(long, default_value = "site_occupied")]
    pub f2: String,
    /// `increasing` or `decreasing`; must match `f2` when given.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[arg(long, default_value_t = 16)]
    pub nmax: usize,
    #[arg(long, default_value_t = 10000)]
    pub reps: u64,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.99)]
    pub level: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LuArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub n: i64,
    /// The surrogate boundary is the inner boundary of `B(0, proxy_factor * n)`.
    #[arg(long, default_value_t = 4)]
    pub proxy_factor: i64,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 16)]
    pub nmax: usize,
    #[arg(long, default_value_t = 20)]
    pub reps: u64,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.99)]
    pub level: f64,
    #[arg(long, default_value_t = 0.9)]
    pub target: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VacancyArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,4")]
    pub alphas: Vec<f64>,
    /// Window radius; the window is `B(0, n)`.
    #[arg(long, default_value_t = 5)]
    pub n: i64,
    #[arg(long, default_value_t = 8)]
    pub nmax: usize,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: u64,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `conditioned` or `thinning`.
    #[arg(long, default_value = "thinning")]
    pub strategy: String,
    #[arg(long, default_value_t = 0.99)]
    pub level: f64,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LedgerArgs {
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.9)]
    pub zeta: f64,
    #[arg(long, default_value_t = 0.4)]
    pub u: f64,
    #[arg(long, default_value_t = 0.5)]
    pub uprime: f64,
    #[arg(long, default_value_t = 20)]
    pub r0: u64,
    #[arg(long, default_value_t = 4)]
    pub l0: u64,
    #[arg(long, default_value_t = 1)]
    pub big_l0: u64,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 40)]
    pub horizon: usize,
}

clap_default!(
    PotentialArgs,
    LoopsArgs,
    SoupArgs,
    ExcursionsArgs,
    RenormArgs,
    ExploreArgs,
    DecoupleArgs,
    LuArgs,
    VacancyArgs,
    LedgerArgs
);

/// One experiment with its full parameter record. Doubles as the CLI's
/// subcommand set.
#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    /// Green function, hitting probability and equilibrium measure identities.
    Potential(PotentialArgs),
    /// Exact masses of loops meeting a window.
    Loops(LoopsArgs),
    /// Replicates of the truncated loop soup on a window.
    Soup(SoupArgs),
    /// Endpoint process of excursions between two spheres and its tail check.
    Excursions(ExcursionsArgs),
    /// Counting and separation of tree embeddings.
    Renorm(RenormArgs),
    /// Box exploration of the vacant cluster of the origin.
    Explore(ExploreArgs),
    /// Decoupling defect sweep over separations and sprinkling.
    Decouple(DecoupleArgs),
    /// Local uniqueness frequencies.
    Lu(LuArgs),
    /// Vacancy curve along an intensity grid.
    Vacancy(VacancyArgs),
    /// Induction ledger over scales.
    Ledger(LedgerArgs),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Potential(_) => "potential",
            Experiment::Loops(_) => "loops",
            Experiment::Soup(_) => "soup",
            Experiment::Excursions(_) => "excursions",
            Experiment::Renorm(_) => "renorm",
            Experiment::Explore(_) => "explore",
            Experiment::Decouple(_) => "decouple",
            Experiment::Lu(_) => "lu",
            Experiment::Vacancy(_) => "vacancy",
            Experiment::Ledger(_) => "ledger",
        }
    }

    /// Extension of the main output file.
    pub fn extension(&self) -> &'static str {
        match self {
            Experiment::Potential(_) | Experiment::Excursions(_) | Experiment::Ledger(_) => "json",
            Experiment::Explore(_) => "jsonl",
            _ => "csv",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub out: Option<String>,
}

fn bad(msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("spec: {msg}"))
}

impl ExperimentSpec {
    pub fn to_value(&self) -> Value {
        let mut v = serde_json::to_value(&self.experiment).expect("parameter records serialize");
        if let (Some(out), Value::Object(m)) = (&self.out, &mut v) {
            m.insert("out".into(), Value::String(out.clone()));
        }
        v
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let Value::Object(mut m) = v else { return Err(bad("expected an object")) };
        let out = match m.remove("out") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s),
            Some(other) => return Err(bad(format!("out must be a string, got {other}"))),
        };
        let experiment: Experiment = serde_json::from_value(Value::Object(m)).map_err(bad)?;
        Ok(ExperimentSpec { experiment, out })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_value()).expect("serializable")
    }

    /// Flat `key = value` text with `kind` first and JSON-encoded values.
    pub fn to_key_value(&self) -> String {
        let Value::Object(m) = self.to_value() else { unreachable!("records are objects") };
        let mut s = String::new();
        if let Some(kind) = m.get("kind") {
            s.push_str(&format!("kind = {kind}\n"));
        }
        for (k, v) in m.iter().filter(|(k, _)| k.as_str() != "kind") {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            let v: Value = serde_json::from_str(text).map_err(bad)?;
            return Self::from_value(v);
        }
        let mut m = Map::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(bad(format!("line {}: expected key = value", no + 1)));
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(bad(format!("line {}: empty key", no + 1)));
            }
            let value = serde_json::from_str::<Value>(v).unwrap_or_else(|_| Value::String(v.to_string()));
            if m.insert(k.to_string(), value).is_some() {
                return Err(bad(format!("line {}: duplicate key {k}", no + 1)));
            }
        }
        Self::from_value(Value::Object(m))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}
