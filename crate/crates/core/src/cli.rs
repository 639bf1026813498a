//! Command-line entry point: `run`, `sweep`, `analyze`, `version`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::analysis::{analyze, AnalysisOptions, RunReport};
use crate::model::config::parse_document;
use crate::model::{expand_sweep, presets, validate_pairs, BenchmarkConfig, SweepMatrix};
use crate::report::{self, files, ReportRow};
use crate::runner::sweep::{run_configs, summary_text};
use crate::runner::{run_benchmark, write_run, RunStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "pubbench",
    version,
    about = "Publish/subscribe latency benchmark harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute one benchmark run and print its summary.
    Run(RunArgs),
    /// Execute every configuration of a parameter matrix in sequence.
    Sweep(SweepArgs),
    /// Recompute reports from a persisted run directory or sweep directory.
    Analyze(AnalyzeArgs),
    /// Print version information.
    Version,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Configuration file (`key = value` lines). Flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Output directory; the run is written to `<out>/<run_id>/`.
    #[arg(long, env = "PUBBENCH_OUT", default_value = "pubbench-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Matrix file: config keys, with comma-separated lists for the dimensions.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub matrix: Option<PathBuf>,
    /// Built-in matrix: table1 or table2.
    #[arg(long)]
    pub preset: Option<String>,
    /// Print the expanded run ids without running anything.
    #[arg(long)]
    pub list: bool,
    #[command(flatten)]
    pub overrides: Overrides,
    #[arg(long, env = "PUBBENCH_OUT", default_value = "pubbench-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// A run directory, or a sweep directory containing index.csv.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Leave LATE deliveries out of the latency statistics.
    #[arg(long)]
    pub in_time_only: bool,
}

/// One flag per configuration key; unset flags leave the file's value alone.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub run_id: Option<String>,
    #[arg(long)]
    pub node_count: Option<String>,
    #[arg(long)]
    pub topology_kind: Option<String>,
    #[arg(long)]
    pub payload_bytes: Option<String>,
    #[arg(long)]
    pub frequency_hz: Option<String>,
    /// Measurement window in seconds.
    #[arg(long)]
    pub duration: Option<String>,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub reliability: Option<String>,
    #[arg(long)]
    pub fragment_payload_bytes: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub discovery_wait_ms: Option<String>,
    #[arg(long)]
    pub drain_ms: Option<String>,
    #[arg(long)]
    pub loss_prob: Option<String>,
    #[arg(long)]
    pub sim_delay_ns: Option<String>,
    #[arg(long)]
    pub max_repair_rounds: Option<String>,
    #[arg(long)]
    pub repair_interval_ms: Option<String>,
    #[arg(long)]
    pub publisher_phase_ns: Option<String>,
    #[arg(long)]
    pub sim_serialize_ps_per_byte: Option<String>,
    #[arg(long)]
    pub sim_send_ps_per_byte: Option<String>,
    #[arg(long)]
    pub udp_port_base: Option<String>,
    /// Any config key as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Overrides {
    fn pairs(&self) -> anyhow::Result<Vec<(String, String)>> {
        let named = [
            ("run_id", &self.run_id),
            ("node_count", &self.node_count),
            ("topology_kind", &self.topology_kind),
            ("payload_bytes", &self.payload_bytes),
            ("frequency_hz", &self.frequency_hz),
            ("duration_s", &self.duration),
            ("backend", &self.backend),
            ("reliability", &self.reliability),
            ("fragment_payload_bytes", &self.fragment_payload_bytes),
            ("seed", &self.seed),
            ("discovery_wait_ms", &self.discovery_wait_ms),
            ("drain_ms", &self.drain_ms),
            ("loss_prob", &self.loss_prob),
            ("sim_delay_ns", &self.sim_delay_ns),
            ("max_repair_rounds", &self.max_repair_rounds),
            ("repair_interval_ms", &self.repair_interval_ms),
            ("publisher_phase_ns", &self.publisher_phase_ns),
            ("sim_serialize_ps_per_byte", &self.sim_serialize_ps_per_byte),
            ("sim_send_ps_per_byte", &self.sim_send_ps_per_byte),
            ("udp_port_base", &self.udp_port_base),
        ];
        let mut out = Vec::new();
        for raw in &self.set {
            let (k, v) = raw
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {raw:?}"))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        out.extend(
            named
                .into_iter()
                .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))),
        );
        Ok(out)
    }

    fn apply(&self, pairs: &mut BTreeMap<String, String>) -> anyhow::Result<()> {
        for (k, v) in self.pairs()? {
            pairs.insert(k, v);
        }
        Ok(())
    }
}

/// An error tagged with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

fn usage(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error,
    }
}

fn runtime(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error,
    }
}

/// Parses `args` (including the program name) and executes the command.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    match execute(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {:#}", f.error);
            f.code
        }
    }
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Run(args) => cmd_run(args, out),
        Command::Sweep(args) => cmd_sweep(args, out),
        Command::Analyze(args) => cmd_analyze(args, out),
        Command::Version => {
            let _ = writeln!(
                out,
                "pubbench {} (csv schema v{})",
                env!("CARGO_PKG_VERSION"),
                report::SCHEMA_VERSION
            );
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Loads the config file (if any) and applies flag overrides.
pub fn resolve_config(
    path: Option<&Path>,
    overrides: &Overrides,
) -> anyhow::Result<BenchmarkConfig> {
    let mut pairs = match path {
        Some(p) => parse_document(&read_text(p)?).with_context(|| format!("in {}", p.display()))?,
        None => BTreeMap::new(),
    };
    overrides.apply(&mut pairs)?;
    Ok(validate_pairs(&pairs)?)
}

/// Loads the matrix file or preset and applies flag overrides; an override of
/// a dimension key replaces that dimension's list.
pub fn resolve_matrix(
    path: Option<&Path>,
    preset: Option<&str>,
    overrides: &Overrides,
) -> anyhow::Result<SweepMatrix> {
    let base = match (path, preset) {
        (Some(p), _) => {
            SweepMatrix::parse(&read_text(p)?).with_context(|| format!("in {}", p.display()))?
        }
        (None, Some(name)) => presets::by_name(name)
            .ok_or_else(|| anyhow!("unknown preset {name:?}; expected table1 or table2"))?,
        (None, None) => bail!("either --matrix or --preset is required"),
    };
    let extra = overrides.pairs()?;
    if extra.is_empty() {
        return Ok(base);
    }
    let mut pairs = parse_document(&base.to_document())?;
    for (k, v) in extra {
        pairs.insert(k, v);
    }
    let text: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    Ok(SweepMatrix::parse(&text)?)
}

fn cmd_run(args: RunArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let config = resolve_config(args.config.as_deref(), &args.overrides).map_err(usage)?;
    let dir = args.out.join(&config.run_id);
    let artifacts = run_benchmark(&config)
        .with_context(|| format!("run {} failed", config.run_id))
        .map_err(runtime)?;
    let run_report = write_run(&dir, &artifacts)
        .with_context(|| format!("cannot persist run {}", config.run_id))
        .map_err(runtime)?;
    let _ = write!(out, "{}", summary_text(&artifacts, &run_report));
    let _ = writeln!(out, "artifacts: {}", dir.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let matrix = resolve_matrix(
        args.matrix.as_deref(),
        args.preset.as_deref(),
        &args.overrides,
    )
    .map_err(usage)?;
    let configs = expand_sweep(&matrix).map_err(|e| usage(e.into()))?;
    if args.list {
        for c in &configs {
            let _ = writeln!(out, "{}", c.run_id);
        }
        let _ = writeln!(out, "{} configs", configs.len());
        return Ok(());
    }
    let total = configs.len();
    let mut done = 0usize;
    let summaries = run_configs(&configs, &args.out, &mut |s| {
        done += 1;
        let status = match &s.status {
            RunStatus::Ok => "ok".to_string(),
            RunStatus::Failed(reason) => format!("failed: {reason}"),
        };
        let _ = writeln!(out, "[{done}/{total}] {} {status}", s.run_id);
    })
    .map_err(|e| runtime(e.into()))?;
    let failed = summaries
        .iter()
        .filter(|s| s.status != RunStatus::Ok)
        .count();
    let _ = writeln!(
        out,
        "{} runs, {failed} failed; index: {}",
        summaries.len(),
        args.out.join(files::INDEX).display()
    );
    if failed > 0 {
        return Err(runtime(anyhow!(
            "{failed} of {} runs failed",
            summaries.len()
        )));
    }
    Ok(())
}

fn analyze_dir(dir: &Path, options: AnalysisOptions) -> anyhow::Result<RunReport> {
    let run = report::load_run_dir(dir)?;
    let r = analyze(
        &run.config,
        &run.samples,
        &run.publisher_records,
        &run.traces,
        options,
    )
    .with_context(|| format!("cannot analyze {}", dir.display()))?;
    let (csv, txt) = if options.in_time_only {
        (files::REPORT_IN_TIME_CSV, files::REPORT_IN_TIME_TXT)
    } else {
        (files::REPORT_CSV, files::REPORT_TXT)
    };
    report::emit_report(&dir.join(csv), &r.rows())?;
    report::write_text(&dir.join(txt), &r.render_text())?;
    Ok(r)
}

fn cmd_analyze(args: AnalyzeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let options = AnalysisOptions {
        in_time_only: args.in_time_only,
        ..AnalysisOptions::default()
    };
    if !args.input.is_dir() {
        return Err(usage(anyhow!(
            "{} is not a run or sweep directory",
            args.input.display()
        )));
    }
    let index_path = args.input.join(files::INDEX);
    if !index_path.is_file() {
        let r = analyze_dir(&args.input, options).map_err(runtime)?;
        let _ = write!(out, "{}", r.render_text());
        return Ok(());
    }
    let index = report::load_index(&index_path).map_err(|e| runtime(e.into()))?;
    let mut combined: Vec<ReportRow> = Vec::new();
    let mut failed = 0usize;
    for row in index.iter().filter(|r| r.status == "ok") {
        match analyze_dir(&args.input.join(&row.run_id), options) {
            Ok(r) => {
                let _ = write!(out, "{}", r.render_text());
                combined.extend(r.rows());
            }
            Err(e) => {
                failed += 1;
                let _ = writeln!(out, "{}: {e:#}", row.run_id);
            }
        }
    }
    let name = if args.in_time_only {
        files::REPORT_IN_TIME_CSV
    } else {
        files::REPORT_CSV
    };
    report::emit_report(&args.input.join(name), &combined).map_err(|e| runtime(e.into()))?;
    if failed > 0 {
        return Err(runtime(anyhow!("{failed} runs could not be analyzed")));
    }
    Ok(())
}
