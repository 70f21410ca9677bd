use std::path::Path;

use iclscope::{attnratio, probes, repgeom, report, stats, synth, taskgen, tensorstore};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("dump failed validation with {0} error(s)")]
    InvalidDump(usize),
    #[error(transparent)]
    Dump(#[from] tensorstore::DumpError),
    #[error(transparent)]
    Taskgen(#[from] taskgen::TaskgenError),
    #[error(transparent)]
    Repgeom(#[from] repgeom::RepgeomError),
    #[error(transparent)]
    Attn(#[from] attnratio::AttnRatioError),
    #[error(transparent)]
    Probe(#[from] probes::ProbeError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error(transparent)]
    Report(#[from] report::ReportError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::InvalidDump(_) => "invalid_dump",
            CliError::Dump(_) => "dump",
            CliError::Taskgen(_) => "taskgen",
            CliError::Repgeom(_) => "repgeom",
            CliError::Attn(_) => "attnratio",
            CliError::Probe(_) => "probes",
            CliError::Stats(_) => "stats",
            CliError::Synth(_) => "synth",
            CliError::Report(_) => "report",
            CliError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
