//! Config-driven experiment runner behind the `dyadlab` binary.
//!
//! A run takes a command, a JSON config (command parameters plus optional `seed` and `depth`)
//! and produces a [`RunReport`]: config echo, certificates, violations, CSV side tables and
//! JSON artifacts. Reports carry no timestamps, so equal inputs give byte-identical output.

mod commands;
mod selftest;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub use commands::{DomainSource, WeightSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Constants,
    Factorize,
    ExtendDyadic,
    ExtendContinuous,
    Average,
    Azuma,
    Trace,
    Counterexample,
    Selftest,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Self::Constants,
        Self::Factorize,
        Self::ExtendDyadic,
        Self::ExtendContinuous,
        Self::Average,
        Self::Azuma,
        Self::Trace,
        Self::Counterexample,
        Self::Selftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Constants => "constants",
            Self::Factorize => "factorize",
            Self::ExtendDyadic => "extend-dyadic",
            Self::ExtendContinuous => "extend-continuous",
            Self::Average => "average",
            Self::Azuma => "azuma",
            Self::Trace => "trace",
            Self::Counterexample => "counterexample",
            Self::Selftest => "selftest",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::Malformed(format!("unknown command {s:?}")))
    }
}

/// Flags that apply to every command; they override the same keys in the config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub depth: Option<u32>,
    /// Relative paths in the config resolve against this directory.
    pub base_dir: PathBuf,
}

/// One CSV column and what it holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub description: String,
}

/// A side table; the rows go to `<name>.csv`, the header to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub file: String,
    pub columns: Vec<Column>,
    #[serde(skip)]
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            file: format!("{name}.csv"),
            columns: columns.iter().map(|(n, d)| Column { name: n.to_string(), description: d.to_string() }).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| num(*v)).collect());
    }
}

/// Shortest round-tripping text of a float.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: Option<u64>,
    /// Effective parameters after defaults.
    pub config: Value,
    pub certificates: Value,
    /// Failed certificate inequalities; nonempty means exit code 2.
    pub violations: Vec<String>,
    pub tables: Vec<Table>,
    /// File names of the JSON artifacts written next to the report.
    pub artifacts: Vec<String>,
    #[serde(skip)]
    pub artifact_data: Vec<(String, Value)>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.violations.is_empty() {
            0
        } else {
            2
        }
    }

    /// Writes `report.json`, the CSV tables and the artifacts into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::Malformed(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        crate::io::write_json(&dir.join("report.json"), self)?;
        for t in &self.tables {
            let path = dir.join(&t.file);
            let csv_err = |e: csv::Error| Error::Malformed(format!("{}: {e}", path.display()));
            let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
            w.write_record(t.columns.iter().map(|c| c.name.as_str())).map_err(csv_err)?;
            for row in &t.rows {
                w.write_record(row).map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
        }
        for (name, value) in &self.artifact_data {
            crate::io::write_json(&dir.join(name), value)?;
        }
        Ok(())
    }
}

/// Exit code for a failed run: 2 for a violated certificate, 3 for everything else.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Certificate(_) => 2,
        _ => 3,
    }
}

/// What a command hands back to [`run`].
#[derive(Default)]
pub(crate) struct Outcome {
    pub config: Value,
    pub certificates: Value,
    pub violations: Vec<String>,
    pub tables: Vec<Table>,
    pub artifacts: Vec<(String, Value)>,
}

/// Seed, depth and path context shared by the commands.
pub(crate) struct Ctx {
    pub seed: Option<u64>,
    pub depth: Option<u32>,
    pub base_dir: PathBuf,
    rng: Option<ChaCha8Rng>,
}

impl Ctx {
    /// The run's generator; randomized experiments refuse to run without a seed.
    pub fn rng(&mut self, what: &str) -> Result<&mut ChaCha8Rng> {
        let seed = self.seed.ok_or_else(|| Error::Precondition(format!("{what} is randomized and needs --seed or a \"seed\" key")))?;
        Ok(self.rng.get_or_insert_with(|| ChaCha8Rng::seed_from_u64(seed)))
    }

    pub fn depth_or(&self, default: u32) -> u32 {
        self.depth.unwrap_or(default)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

pub(crate) fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

pub(crate) fn parse<T: serde::de::DeserializeOwned>(config: Value) -> Result<T> {
    serde_json::from_value(config).map_err(|e| Error::Malformed(format!("config: {e}")))
}

/// Runs one command. `config` is a JSON object; its `seed` and `depth` keys are
/// overridden by the matching fields of `opts`, and a `command` key must agree with `command`.
pub fn run(command: Command, config: &Value, opts: &RunOptions) -> Result<RunReport> {
    let mut params = match config {
        Value::Null => serde_json::Map::new(),
        Value::Object(m) => m.clone(),
        _ => return Err(Error::Malformed("config must be a JSON object".into())),
    };
    if let Some(c) = params.remove("command") {
        let named: Command = parse(c)?;
        if named != command {
            return Err(Error::Malformed(format!("config is for {named}, not {command}")));
        }
    }
    let seed = match params.remove("seed") {
        Some(v) => Some(parse::<u64>(v)?),
        None => None,
    };
    let depth = match params.remove("depth") {
        Some(v) => Some(parse::<u32>(v)?),
        None => None,
    };
    let mut ctx = Ctx { seed: opts.seed.or(seed), depth: opts.depth.or(depth), base_dir: opts.base_dir.clone(), rng: None };
    let params = Value::Object(params);
    let out = match command {
        Command::Constants => commands::constants(parse(params)?, &mut ctx)?,
        Command::Factorize => commands::factorize(parse(params)?, &mut ctx)?,
        Command::ExtendDyadic => commands::extend_dyadic(parse(params)?, &mut ctx)?,
        Command::ExtendContinuous => commands::extend_continuous(parse(params)?, &mut ctx)?,
        Command::Average => commands::average(parse(params)?, &mut ctx)?,
        Command::Azuma => commands::azuma(parse(params)?, &mut ctx)?,
        Command::Trace => commands::trace(parse(params)?, &mut ctx)?,
        Command::Counterexample => commands::counterexample(parse(params)?, &mut ctx)?,
        Command::Selftest => selftest::run(parse(params)?, &mut ctx)?,
    };
    Ok(RunReport {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        seed: ctx.seed,
        config: out.config,
        certificates: out.certificates,
        violations: out.violations,
        tables: out.tables,
        artifacts: out.artifacts.iter().map(|a| a.0.clone()).collect(),
        artifact_data: out.artifacts,
    })
}
