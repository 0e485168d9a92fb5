//! Batch front end for `gridembed-core`: graph ingestion, generators, one
//! function per subcommand, reports and exit codes.
//!
//! Every subcommand that builds something also runs the matching
//! independent verifier, and the report it writes embeds the full
//! [`RunConfig`]. Exit codes: 0 success, 1 verification failure, 2 solver
//! non-convergence, 3 I/O or configuration error.

pub mod commands;
pub mod io;

use std::collections::BTreeMap;
use std::str::FromStr;

use gridembed_core::embedding::PairSource;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] gridembed_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(gridembed_core::Error::NotConverged { .. }) => {
                Status::NotConverged.exit_code()
            }
            _ => 3,
        }
    }
}

/// Outcome of a run that produced a report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    VerificationFailed,
    NotConverged,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::VerificationFailed => 1,
            Status::NotConverged => 2,
        }
    }

    /// `Ok` if `passed`, else a verification failure.
    pub fn check(passed: bool) -> Status {
        if passed {
            Status::Ok
        } else {
            Status::VerificationFailed
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Theory,
    Desk,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "theory" => Ok(Mode::Theory),
            "desk" => Ok(Mode::Desk),
            _ => Err(format!("unknown mode `{s}` (theory or desk)")),
        }
    }
}

/// `exhaustive` or `sample:<rate>`.
pub fn parse_pairs(s: &str) -> Result<PairSource, String> {
    if s == "exhaustive" {
        return Ok(PairSource::Exhaustive);
    }
    let rate = s
        .strip_prefix("sample:")
        .and_then(|r| r.parse::<f64>().ok())
        .filter(|r| *r > 0.0 && *r <= 1.0)
        .ok_or_else(|| format!("bad pair source `{s}` (exhaustive or sample:<rate in (0,1]>)"))?;
    Ok(PairSource::Sample { rate })
}

/// Everything that determines a run. Serialized into every report.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub input: Option<String>,
    pub gen: Option<String>,
    /// Embedding file read by `verify`.
    pub embedding: Option<String>,
    /// Desk schedule file read by `embed` and `inject`.
    pub schedule: Option<String>,
    pub seed: u64,
    pub overrides: BTreeMap<String, String>,
    pub mode: Mode,
    pub budget: Option<u64>,
    pub pairs: PairSource,
    pub out: Option<String>,
    pub verbosity: u8,
}

impl RunConfig {
    /// Name of the input graph as it appears in reports.
    pub fn graph_name(&self) -> String {
        self.gen
            .clone()
            .or_else(|| self.input.clone())
            .unwrap_or_default()
    }
}

/// Parses `k=v,k=v` lists; later keys win.
pub fn parse_overrides(items: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for item in items {
        for kv in item.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{kv}` is not k=v")))?;
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(out)
}

/// Typed access to overrides; [`Overrides::finish`] rejects unused keys.
pub struct Overrides {
    left: BTreeMap<String, String>,
}

impl Overrides {
    pub fn new(map: &BTreeMap<String, String>) -> Self {
        Overrides { left: map.clone() }
    }

    pub fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.left.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("override {key}={v} has the wrong type"))),
        }
    }

    pub fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T, CliError> {
        self.get(key)?
            .ok_or_else(|| CliError::Config(format!("override {key}=… is required")))
    }

    pub fn finish(self) -> Result<(), CliError> {
        match self.left.keys().next() {
            None => Ok(()),
            Some(k) => Err(CliError::Config(format!("unknown override `{k}`"))),
        }
    }
}

/// Report skeleton shared by all subcommands.
#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub config: RunConfig,
    pub status: Status,
    pub graph: GraphSummary,
    pub result: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct GraphSummary {
    pub name: String,
    pub vertices: usize,
    pub edges: usize,
    pub components: usize,
    pub max_degree: usize,
}

impl GraphSummary {
    pub fn of(name: String, g: &gridembed_core::Graph) -> Self {
        GraphSummary {
            name,
            vertices: g.vertex_count(),
            edges: g.edge_count(),
            components: g.components().len(),
            max_degree: g.max_degree(),
        }
    }
}

/// A finished run: the JSON report and any artifact files, by file name.
#[derive(Debug)]
pub struct Output {
    pub status: Status,
    pub report: String,
    pub artifacts: Vec<(String, String)>,
}
