//! The `analyze` subcommand: load trial logs (and optionally questionnaire
//! responses), run the condition comparison, and print the report.

use crate::config::{read_file, HostError};
use loco_core::session::{read_trial_logs, TrialLog};
use loco_core::summary::{self, read_responses_csv, AnalysisReport, ResponseRecord};
use std::path::{Path, PathBuf};

/// Reads trial logs from `path`: either a single `.jsonl` file or a
/// directory whose `*.jsonl` files are concatenated in name order.
pub fn load_logs(path: &Path) -> Result<Vec<TrialLog>, HostError> {
    let mut files: Vec<PathBuf> = if path.is_dir() {
        let entries = std::fs::read_dir(path)
            .map_err(|e| HostError::from_io(&path.display().to_string(), &e))?;
        let mut found = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| HostError::from_io(&path.display().to_string(), &e))?;
            let p = entry.path();
            if p.extension().is_some_and(|ext| ext == "jsonl") {
                found.push(p);
            }
        }
        found.sort();
        found
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(HostError::MissingInput(format!(
            "{}: no .jsonl log files found",
            path.display()
        )));
    }
    files.sort();
    let mut logs = Vec::new();
    for file in &files {
        let text = read_file(file)?;
        let mut parsed = read_trial_logs(&text)
            .map_err(|e| HostError::Data(format!("{}: {e}", file.display())))?;
        logs.append(&mut parsed);
    }
    Ok(logs)
}

/// Runs the analysis over logs at `logs_path` and optional responses CSV,
/// returning the report for printing or JSON output.
pub fn run_analysis(
    logs_path: &Path,
    responses_path: Option<&Path>,
) -> Result<AnalysisReport, HostError> {
    let logs = load_logs(logs_path)?;
    let responses: Vec<ResponseRecord> = match responses_path {
        Some(p) => read_responses_csv(p).map_err(|e| match std::fs::metadata(p) {
            Err(io) => HostError::from_io(&p.display().to_string(), &io),
            Ok(_) => HostError::Data(format!("{}: {e}", p.display())),
        })?,
        None => Vec::new(),
    };
    summary::analyze(&logs, &responses).map_err(|e| HostError::Data(e.to_string()))
}
