//! Subcommands of the `neurolin` tool.

pub mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};

use neurolin::eval::{error_inf, error_l2, residual_l2, EvalReport, TestSet};
use neurolin::fnn::Network;
use neurolin::problems::ProblemInstance;
use neurolin::solver::{train_from, HistoryRecord, TrainHistory, TrainObserver};
use neurolin::verify::{run_all, CheckResult, Fault};
use neurolin::Error;

use crate::config::{OutputFormat, RunConfig};

/// Overrides the root against which relative output directories resolve.
pub const OUTPUT_ROOT_VAR: &str = "NEUROLIN_OUTPUT_ROOT";

/// Failure of a subcommand; each kind maps to its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed or invalid configuration.
    Config(String),
    Io(String),
    /// Training or evaluation hit a numerical failure.
    Numeric(String),
    /// `verify` found failing checks.
    Checks(usize),
    /// Malformed history file.
    Parse(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Checks(_) => 1,
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Parse(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::Checks(n) => write!(f, "{n} verification check(s) failed"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn classify(e: Error) -> CliError {
    match e {
        Error::Parameter(_) | Error::Range(_) | Error::Construction(_) | Error::Contract(_) => {
            CliError::Config(e.to_string())
        }
        Error::Numeric(_) | Error::Singular(_) | Error::NoConvergence(_) => {
            CliError::Numeric(e.to_string())
        }
    }
}

/// Where the outputs of `cfg` go, honoring [`OUTPUT_ROOT_VAR`].
pub fn output_dir(cfg: &RunConfig, root: Option<&Path>) -> PathBuf {
    match root {
        Some(r) if cfg.output.directory.is_relative() => r.join(&cfg.output.directory),
        _ => cfg.output.directory.clone(),
    }
}

/// Records test-set metrics at every logged iteration.
struct MetricsObserver<'a> {
    instance: &'a ProblemInstance,
    test: &'a TestSet,
    verbose: bool,
}

impl TrainObserver for MetricsObserver<'_> {
    fn on_log(&mut self, net: &Network, record: &mut HistoryRecord) -> neurolin::Result<()> {
        if self.instance.truth.is_some() {
            record.e_inf = Some(error_inf(net, self.instance, self.test)?);
            record.e_l2 = Some(error_l2(net, self.instance, self.test)?);
        }
        record.res_l2 = Some(residual_l2(net, self.instance, self.test)?);
        if self.verbose {
            eprintln!(
                "iter {:>7}  loss {:.4e}  lr {:.2e}  e_l2 {}  res_l2 {:.4e}",
                record.iter,
                record.loss,
                record.lr,
                record.e_l2.map_or("-".to_string(), |v| format!("{v:.4e}")),
                record.res_l2.unwrap_or(f64::NAN)
            );
        }
        Ok(())
    }
}

fn write_outputs(
    dir: &Path,
    cfg: &RunConfig,
    history: &TrainHistory,
    report: Option<&EvalReport>,
    net: &Network,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for format in &cfg.output.formats {
        match format {
            OutputFormat::Csv => {
                let path = dir.join("history.csv");
                let f = File::create(&path).map_err(|e| io_err(&path, e))?;
                history.write_csv(BufWriter::new(f)).map_err(|e| io_err(&path, e))?;
            }
            OutputFormat::Json => {
                if let Some(report) = report {
                    let path = dir.join("report.json");
                    let text = serde_json::to_string_pretty(report).expect("report serializes");
                    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
                }
            }
            OutputFormat::Checkpoint => {
                let path = dir.join("checkpoint.bin");
                let f = File::create(&path).map_err(|e| io_err(&path, e))?;
                net.write_checkpoint(cfg.training.seed, BufWriter::new(f))
                    .map_err(|e| io_err(&path, e))?;
            }
        }
    }
    Ok(())
}

/// `run <config>`: validate, train, evaluate and write the requested
/// outputs. Nothing is written when validation fails. After a numerical
/// failure the history and checkpoint up to that point are still written.
pub fn run(
    config_path: &Path,
    threads: Option<usize>,
    output_root: Option<&Path>,
    verbose: bool,
) -> Result<EvalReport, CliError> {
    let text = fs::read_to_string(config_path).map_err(|e| io_err(config_path, e))?;
    let mut cfg = RunConfig::parse(&text).map_err(CliError::Config)?;
    if let Some(t) = threads {
        cfg.training.threads = t;
    }
    let prepared = cfg.prepare().map_err(classify)?;
    let test = TestSet::draw(
        prepared.instance.shape(),
        cfg.evaluation.n_test,
        cfg.evaluation.test_seed,
    )
    .map_err(classify)?;
    let dir = output_dir(&cfg, output_root);

    let init = Network::init(prepared.arch, cfg.training.init_scale, cfg.training.seed)
        .map_err(classify)?;
    let mut observer = MetricsObserver {
        instance: &prepared.instance,
        test: &test,
        verbose,
    };
    let outcome = match train_from(&prepared.instance, init, &cfg.training, &mut observer) {
        Ok(o) => o,
        Err(failure) => {
            write_outputs(&dir, &cfg, &failure.history, None, &failure.network)?;
            return Err(CliError::Numeric(failure.to_string()));
        }
    };
    if verbose {
        eprintln!("trained in {:.1} s", outcome.history.wall_clock_secs);
    }
    let report = EvalReport::compute(&outcome.network, &prepared.instance, &test, &cfg.training)
        .map_err(classify)?;
    write_outputs(&dir, &cfg, &outcome.history, Some(&report), &outcome.network)?;
    Ok(report)
}

/// `verify`: the oracle suite. Returns the results and fails when any
/// check fails.
pub fn verify(fault: Fault) -> (Vec<CheckResult>, Result<(), CliError>) {
    let results = run_all(fault);
    let failed = results.iter().filter(|c| !c.passed).count();
    let status = if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Checks(failed))
    };
    (results, status)
}

pub fn format_check(c: &CheckResult) -> String {
    format!(
        "{} {:<28} discrepancy {:.3e} (tolerance {:.1e})  {}",
        if c.passed { "PASS" } else { "FAIL" },
        c.name,
        c.discrepancy,
        c.tolerance,
        c.detail
    )
}

/// Summary of a training history.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySummary {
    pub iterations: usize,
    pub first_loss: f64,
    pub last_loss: f64,
    pub min_loss: f64,
    pub min_loss_iter: usize,
    pub last: HistoryRecord,
}

pub fn summarize(history: &TrainHistory) -> Option<HistorySummary> {
    let first = history.records.first()?;
    let last = history.records.last()?;
    let min = history
        .records
        .iter()
        .min_by(|a, b| a.loss.total_cmp(&b.loss))
        .expect("nonempty");
    Some(HistorySummary {
        iterations: last.iter,
        first_loss: first.loss,
        last_loss: last.loss,
        min_loss: min.loss,
        min_loss_iter: min.iter,
        last: last.clone(),
    })
}

/// `report <csv>`: the summary as text.
pub fn report<R: io::Read>(input: R) -> Result<String, CliError> {
    let history = TrainHistory::read_csv(input).map_err(|e| CliError::Parse(e.to_string()))?;
    let Some(s) = summarize(&history) else {
        return Ok("no iterations\n".to_string());
    };
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6e}"));
    Ok(format!(
        "iterations  {}\nfirst loss  {:.6e}\nlast loss   {:.6e}\nmin loss    {:.6e} (iter {})\n\
         final e_inf {}\nfinal e_l2  {}\nfinal res_l2 {}\n",
        s.iterations,
        s.first_loss,
        s.last_loss,
        s.min_loss,
        s.min_loss_iter,
        opt(s.last.e_inf),
        opt(s.last.e_l2),
        opt(s.last.res_l2),
    ))
}
