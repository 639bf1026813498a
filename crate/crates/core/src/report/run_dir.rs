//! Reading a persisted run directory back.

use std::path::Path;

use super::{files, load, ReportError};
use crate::model::{validate_config, BenchmarkConfig};
use crate::stack::{PublisherRecord, SampleRecord, TraceEvent};

#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub config: BenchmarkConfig,
    pub samples: Vec<SampleRecord>,
    pub publisher_records: Vec<PublisherRecord>,
    pub traces: Vec<TraceEvent>,
}

pub fn load_run_dir(dir: &Path) -> Result<LoadedRun, ReportError> {
    let config_path = dir.join(files::CONFIG);
    let text =
        std::fs::read_to_string(&config_path).map_err(|e| ReportError::io(&config_path, e))?;
    let config = validate_config(&text).map_err(|e| ReportError::Invalid {
        path: config_path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(LoadedRun {
        config,
        samples: load(&dir.join(files::SAMPLES))?,
        publisher_records: load(&dir.join(files::PUBLISHERS))?,
        traces: load(&dir.join(files::TRACES))?,
    })
}
