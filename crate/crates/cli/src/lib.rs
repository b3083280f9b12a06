//! Command-line front end for `hmtree-core`: file formats, one function per
//! subcommand, and the dispatcher used by the `hmtree` binary.

pub mod commands;
pub mod formats;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use hmtree_core::recovery::RecoverOptions;
use hmtree_core::semialgebraic::{C5Form, CertifyOptions};
use hmtree_core::tree::parse_newick;
use hmtree_core::{NodeId, Rational, TreeTopology};
use serde_json::Value;

use commands::{Input, Outcome};
use formats::{moments_from_json, params_from_json, table_from_json, Number};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hmtree_core::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid JSON in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("format error: {0}")]
    Format(String),
    #[error("usage error: {0}")]
    Usage(String),
}

impl CliError {
    /// Every error exits with status 2.
    pub const EXIT_CODE: i32 = 2;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Rational arithmetic; decimal inputs are read exactly.
    Exact,
    Float,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Non-central moments, central moments and tree cumulants of a table.
    Cumulants,
    /// Check membership in the model; exit 0 on PASS, 1 on FAIL.
    Certify,
    /// Recover parameters from a table or cumulants; exit 1 when infeasible.
    Recover,
    /// Joint table of a parameter file.
    Forward,
    /// Edge flattenings and their rank conditions.
    Invariants,
    /// Correlation distances, four-point and second-order checks.
    Metric,
    /// Seeded uniform draw of parameters with its joint table.
    Sample,
}

/// Options shared by all subcommands.
#[derive(Clone, Debug, clap::Args)]
pub struct RunConfig {
    /// Newick file, or a Newick string ending in ';'.
    #[arg(long, global = true)]
    pub tree: Option<String>,
    /// Joint table JSON.
    #[arg(long, global = true)]
    pub table: Option<PathBuf>,
    /// Moment JSON (cumulants unless `kind` says otherwise).
    #[arg(long, global = true)]
    pub moments: Option<PathBuf>,
    /// Parameter JSON, theta or omega.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact", global = true)]
    pub mode: Mode,
    /// Float-mode zero threshold and inequality slack.
    #[arg(long, default_value_t = 1e-9, global = true)]
    pub tol: f64,
    /// Node to hang parameters from (`3`, `h2`, …).
    #[arg(long, global = true)]
    pub root: Option<String>,
    /// Certify non-trivalent trees on their trivalent refinement.
    #[arg(long, global = true)]
    pub refine: bool,
    /// Check the unscaled C5 form instead of the model constraint.
    #[arg(long, global = true)]
    pub unscaled_c5: bool,
    #[arg(long, default_value_t = 1, global = true)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "json", global = true)]
    pub format: OutputFormat,
}

#[derive(Debug, Parser)]
#[command(name = "hmtree", version, about = "Binary latent tree models: cumulants, certificates and recovery")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: RunConfig,
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.into(), source })
}

/// Reads the tree from a file, or takes the argument itself as Newick.
pub fn load_tree(arg: &str) -> Result<TreeTopology, CliError> {
    let path = Path::new(arg);
    let text = if path.exists() {
        fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?
    } else if arg.trim_end().ends_with(';') {
        arg.to_string()
    } else {
        return Err(CliError::Usage(format!("tree file {arg} not found")));
    };
    Ok(parse_newick(&text)?)
}

impl RunConfig {
    fn tree(&self) -> Result<TreeTopology, CliError> {
        let arg = self.tree.as_deref().ok_or_else(|| CliError::Usage("--tree is required".into()))?;
        load_tree(arg)
    }

    fn root(&self, t: &TreeTopology) -> Result<Option<NodeId>, CliError> {
        self.root.as_deref().map(|r| t.parse_node(r)).transpose().map_err(Into::into)
    }

    fn table<S: Number>(&self) -> Result<hmtree_core::transforms::ProbTable<S>, CliError> {
        let path = self.table.as_ref().ok_or_else(|| CliError::Usage("--table is required".into()))?;
        table_from_json(&read_json(path)?)
    }

    fn input<S: Number>(&self) -> Result<Input<S>, CliError> {
        match (&self.table, &self.moments) {
            (Some(_), None) => Ok(Input::Table(self.table()?)),
            (None, Some(path)) => Ok(Input::Moments(moments_from_json(&read_json(path)?)?)),
            _ => Err(CliError::Usage("give exactly one of --table and --moments".into())),
        }
    }

    fn params<S: Number>(&self, t: &TreeTopology) -> Result<formats::Params<S>, CliError> {
        let path = self.params.as_ref().ok_or_else(|| CliError::Usage("--params is required".into()))?;
        params_from_json(t, &read_json(path)?)
    }

    fn certify_options(&self) -> CertifyOptions {
        let c5_form = if self.unscaled_c5 { C5Form::Unscaled } else { C5Form::Scaled };
        CertifyOptions { tol: self.tol, refine: self.refine, c5_form }
    }

    fn check(&self) -> Result<(), CliError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Usage(format!("--tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

fn dispatch<S: Number>(command: Command, c: &RunConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Cumulants => commands::cmd_cumulants(&c.tree()?, &c.table::<S>()?, c.tol),
        Command::Certify => commands::cmd_certify(&c.tree()?, &c.input::<S>()?, &c.certify_options()),
        Command::Recover => {
            let t = c.tree()?;
            commands::cmd_recover(&t, &c.input::<S>()?, &RecoverOptions { tol: c.tol }, c.root(&t)?)
        }
        Command::Forward => {
            let t = c.tree()?;
            commands::cmd_forward(&t, &c.params::<S>(&t)?)
        }
        Command::Invariants => commands::cmd_invariants(&c.tree()?, &c.table::<S>()?, c.tol),
        Command::Metric => commands::cmd_metric(&c.input::<S>()?, c.tol),
        Command::Sample => {
            let t = c.tree()?;
            commands::cmd_sample::<S>(&t, c.root(&t)?, c.seed)
        }
    }
}

/// Runs one command in the configured mode.
pub fn run(command: Command, config: &RunConfig) -> Result<Outcome, CliError> {
    config.check()?;
    match config.mode {
        Mode::Exact => dispatch::<Rational>(command, config),
        Mode::Float => dispatch::<f64>(command, config),
    }
}

/// Output text for the configured format.
pub fn render(outcome: &Outcome, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(&outcome.json).expect("JSON values always serialize");
            s.push('\n');
            s
        }
        OutputFormat::Text => outcome.text.clone(),
    }
}
