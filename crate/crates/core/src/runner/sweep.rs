//! Sequential multi-config sweeps and run-directory persistence.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{run_benchmark, RunArtifacts};
use crate::analysis::{analyze, AnalysisError, AnalysisOptions, RunReport};
use crate::model::{expand_sweep, BenchmarkConfig, ConfigError, SweepMatrix};
use crate::report::{self, files, IndexRow, ReportError, ReportRow};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write sweep output: {0}")]
    Output(#[from] ReportError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub run_id: String,
    pub status: RunStatus,
    pub config_hash: String,
    pub dir: PathBuf,
}

impl RunSummary {
    fn index_row(&self) -> IndexRow {
        IndexRow {
            run_id: self.run_id.clone(),
            status: match self.status {
                RunStatus::Ok => "ok".into(),
                RunStatus::Failed(_) => "failed".into(),
            },
            config_hash: self.config_hash.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("analysis failed: {0}")]
    Analysis(#[from] AnalysisError),
}

fn create_dir(dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|e| ReportError::io(dir, e))
}

/// Writes a run's artifacts, report, and summary into `dir`; returns the report.
pub fn write_run(dir: &Path, artifacts: &RunArtifacts) -> Result<RunReport, PersistError> {
    create_dir(dir)?;
    report::write_text(&dir.join(files::CONFIG), &artifacts.config.to_document())?;
    report::emit_samples(&dir.join(files::SAMPLES), &artifacts.samples)?;
    report::emit_publishers(&dir.join(files::PUBLISHERS), &artifacts.publisher_records)?;
    report::emit_traces(&dir.join(files::TRACES), &artifacts.traces)?;
    let run_report = analyze(
        &artifacts.config,
        &artifacts.samples,
        &artifacts.publisher_records,
        &artifacts.traces,
        AnalysisOptions::default(),
    )?;
    report::emit_report(&dir.join(files::REPORT_CSV), &run_report.rows())?;
    report::write_text(&dir.join(files::REPORT_TXT), &run_report.render_text())?;
    report::write_text(
        &dir.join(files::SUMMARY),
        &summary_text(artifacts, &run_report),
    )?;
    Ok(run_report)
}

/// The run's report followed by timing and protocol diagnostics.
pub fn summary_text(artifacts: &RunArtifacts, run_report: &RunReport) -> String {
    let c = &artifacts.config;
    let d = &artifacts.diagnostics;
    let mut t = run_report.render_text();
    let _ = writeln!(
        t,
        "config: {} nodes {} payload {} B at {} Hz for {} s, {} {}, hash {}",
        c.node_count,
        c.topology_kind,
        c.payload_bytes,
        c.frequency_hz,
        crate::model::config::format_seconds(c.duration),
        c.backend,
        c.reliability,
        c.config_hash()
    );
    let _ = writeln!(
        t,
        "wall clock: start {} ns, end {} ns, elapsed {:.3} s",
        artifacts.wall_start_ns,
        artifacts.wall_end_ns,
        artifacts
            .wall_end_ns
            .saturating_sub(artifacts.wall_start_ns) as f64
            / 1e9
    );
    let n = &d.nodes;
    let _ = writeln!(
        t,
        "datagrams received {}  malformed {}  send errors {}  receive errors {}",
        n.datagrams_received, n.malformed, n.send_errors, n.recv_errors
    );
    let _ = writeln!(
        t,
        "repair: nacks sent {}  fragments resent {}  unrepairable {}  abandoned {}  heartbeats {}",
        n.nacks_sent, n.fragments_resent, n.unrepairable, n.abandoned, n.heartbeats_sent
    );
    if c.backend == crate::model::Backend::Sim {
        let _ = writeln!(
            t,
            "simulated channel: data datagrams {}  dropped {}",
            d.sim_data_sent, d.sim_data_dropped
        );
    }
    if d.payloads_verified > 0 {
        let _ = writeln!(
            t,
            "payload hashes: verified {}  mismatched {}",
            d.payloads_verified, d.payload_mismatches
        );
    }
    for e in &d.errors {
        let _ = writeln!(t, "error: {e}");
    }
    t
}

/// Expands `matrix` and runs every config in order, one at a time.
pub fn run_sweep(matrix: &SweepMatrix, out_dir: &Path) -> Result<Vec<RunSummary>, SweepError> {
    run_configs(&expand_sweep(matrix)?, out_dir, &mut |_| {})
}

/// Runs `configs` sequentially under `out_dir`. A failing run is recorded
/// and the sweep continues; an unwritable output aborts it. The index is
/// rewritten after every run so an interrupted sweep still describes itself.
pub fn run_configs(
    configs: &[BenchmarkConfig],
    out_dir: &Path,
    on_run: &mut dyn FnMut(&RunSummary),
) -> Result<Vec<RunSummary>, SweepError> {
    create_dir(out_dir)?;
    let mut summaries = Vec::with_capacity(configs.len());
    let mut combined: Vec<ReportRow> = Vec::new();
    for config in configs {
        let dir = out_dir.join(&config.run_id);
        create_dir(&dir)?;
        report::write_text(&dir.join(files::CONFIG), &config.to_document())?;
        let status = match run_benchmark(config) {
            Ok(artifacts) => match write_run(&dir, &artifacts) {
                Ok(r) => {
                    combined.extend(r.rows());
                    RunStatus::Ok
                }
                Err(PersistError::Report(e)) => return Err(SweepError::Output(e)),
                Err(PersistError::Analysis(e)) => RunStatus::Failed(e.to_string()),
            },
            Err(e) => RunStatus::Failed(e.to_string()),
        };
        if let RunStatus::Failed(reason) = &status {
            report::write_text(&dir.join(files::ERROR), &format!("{reason}\n"))?;
        }
        let summary = RunSummary {
            run_id: config.run_id.clone(),
            status,
            config_hash: config.config_hash(),
            dir,
        };
        on_run(&summary);
        summaries.push(summary);
        let index: Vec<IndexRow> = summaries.iter().map(RunSummary::index_row).collect();
        report::emit_index(&out_dir.join(files::INDEX), &index)?;
    }
    report::emit_report(&out_dir.join(files::REPORT_CSV), &combined)?;
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn table1_at_desk_scale_gives_six_directories() {
        let mut m = presets::table1();
        m.fixed.insert("duration_s".into(), "1".into());
        m.fixed.insert("discovery_wait_ms".into(), "100".into());
        m.fixed.insert("drain_ms".into(), "100".into());
        let tmp = tempfile::tempdir().unwrap();
        let runs = run_sweep(&m, tmp.path()).unwrap();
        assert_eq!(runs.len(), 6);
        assert!(runs.iter().all(|r| r.status == RunStatus::Ok));
        for r in &runs {
            for f in [
                files::CONFIG,
                files::SAMPLES,
                files::PUBLISHERS,
                files::TRACES,
                files::SUMMARY,
            ] {
                assert!(r.dir.join(f).is_file(), "{}/{f}", r.run_id);
            }
        }
        let index = report::load_index(&tmp.path().join(files::INDEX)).unwrap();
        assert_eq!(index.len(), 6);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        let mut m = presets::table1();
        m.payload_bytes.clear();
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(
            run_sweep(&m, tmp.path()),
            Err(SweepError::Config(_))
        ));
    }

    #[test]
    fn unwritable_output_aborts() {
        let tmp = tempfile::tempdir().unwrap();
        let blocker = tmp.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let m = presets::table1();
        assert!(matches!(
            run_sweep(&m, &blocker.join("sub")),
            Err(SweepError::Output(_))
        ));
    }
}
