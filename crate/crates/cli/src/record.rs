//! Result rows and the append-only sinks they are written through.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::Format;
use crate::CliError;

pub const RUN_RECORD_HEADER: &str =
    "dataset,d,solver,seed,train_seconds,solve_seconds,infer_seconds,accuracy,entropy_bits,timestamp";

/// One trained-and-evaluated model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub dataset: String,
    /// Hidden width: `d` for analytic models, `h` for the SGD baseline.
    pub d: usize,
    pub solver: String,
    pub seed: u64,
    pub train_seconds: f64,
    pub solve_seconds: f64,
    pub infer_seconds: f64,
    pub accuracy: f64,
    pub entropy_bits: f64,
    /// Unix seconds at which the run finished.
    pub timestamp: u64,
}

impl RunRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.d,
            self.solver,
            self.seed,
            self.train_seconds,
            self.solve_seconds,
            self.infer_seconds,
            self.accuracy,
            self.entropy_bits,
            self.timestamp
        )
    }

    /// The record with its wall-clock fields zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        Self {
            train_seconds: 0.0,
            solve_seconds: 0.0,
            infer_seconds: 0.0,
            timestamp: 0,
            ..self.clone()
        }
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// A table of rows that can be rendered as CSV or JSON lines.
pub trait Row: Serialize {
    const HEADER: &'static str;
    fn csv(&self) -> String;
}

impl Row for RunRecord {
    const HEADER: &'static str = RUN_RECORD_HEADER;

    fn csv(&self) -> String {
        self.csv_row()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub angle: f64,
    pub accuracy: f64,
    pub model_tag: String,
}

impl Row for RobustnessRow {
    const HEADER: &'static str = voodoo_core::analysis::ROBUSTNESS_CSV_HEADER;

    fn csv(&self) -> String {
        format!("{},{},{}", self.angle, self.accuracy, self.model_tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyRow {
    pub model: String,
    pub family: String,
    pub bins: usize,
    pub entropy_bits: f64,
    pub min_w: f64,
    pub max_w: f64,
}

impl Row for EntropyRow {
    const HEADER: &'static str = "model,family,bins,entropy_bits,min_w,max_w";

    fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.model, self.family, self.bins, self.entropy_bits, self.min_w, self.max_w
        )
    }
}

pub fn render<R: Row>(rows: &[R], format: Format, with_header: bool) -> String {
    let mut out = String::new();
    match format {
        Format::Csv => {
            if with_header {
                out.push_str(R::HEADER);
                out.push('\n');
            }
            for r in rows {
                out.push_str(&r.csv());
                out.push('\n');
            }
        }
        Format::Json => {
            for r in rows {
                out.push_str(&serde_json::to_string(r).expect("rows serialize"));
                out.push('\n');
            }
        }
    }
    out
}

/// Appends rows to `path`, creating it if needed. A CSV file gets the header
/// only when new; an existing CSV file with a different header is refused
/// rather than mixed.
pub fn append<R: Row>(path: &Path, rows: &[R], format: Format) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let existing = match std::fs::File::open(path) {
        Ok(f) => {
            let mut first = String::new();
            BufReader::new(f).read_line(&mut first).map_err(io_err)?;
            Some(first.trim_end().to_string())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(io_err(e)),
    };
    let needs_header = match (&existing, format) {
        (Some(first), Format::Csv) if !first.is_empty() => {
            if first != R::HEADER {
                return Err(CliError::Io(format!(
                    "{} has header {first:?}, expected {:?}; refusing to append",
                    path.display(),
                    R::HEADER
                )));
            }
            false
        }
        _ => true,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
    file.write_all(render(rows, format, needs_header).as_bytes()).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64) -> RunRecord {
        RunRecord {
            dataset: "mnist".into(),
            d: 2000,
            solver: "svd".into(),
            seed,
            train_seconds: 1.5,
            solve_seconds: 1.25,
            infer_seconds: 0.5,
            accuracy: 0.97,
            entropy_bits: 7.25,
            timestamp: 1_700_000_000,
        }
    }

    #[test]
    fn header_matches_field_order() {
        let json: serde_json::Value = serde_json::to_value(record(1)).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        let mut header: Vec<&str> = RUN_RECORD_HEADER.split(',').collect();
        assert_eq!(header.len(), record(1).csv_row().split(',').count());
        header.sort_unstable();
        let mut keys = keys;
        keys.sort_unstable();
        assert_eq!(header, keys);
        assert_eq!(
            record(1).csv_row(),
            "mnist,2000,svd,1,1.5,1.25,0.5,0.97,7.25,1700000000"
        );
    }

    #[test]
    fn csv_appends_without_repeating_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/runs.csv");
        append(&path, &[record(1)], Format::Csv).unwrap();
        append(&path, &[record(2), record(3)], Format::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], RUN_RECORD_HEADER);
        assert!(lines[3].starts_with("mnist,2000,svd,3,"));
    }

    #[test]
    fn mismatched_header_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        std::fs::write(&path, "something,else\n1,2\n").unwrap();
        assert!(matches!(append(&path, &[record(1)], Format::Csv), Err(CliError::Io(_))));
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "something,else\n1,2\n");
    }

    #[test]
    fn json_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.jsonl");
        append(&path, &[record(1)], Format::Json).unwrap();
        append(&path, &[record(2)], Format::Json).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1]["seed"], 2);
        assert_eq!(rows[0]["accuracy"], 0.97);
    }

    #[test]
    fn without_timing_keeps_results() {
        let r = record(5).without_timing();
        assert_eq!((r.train_seconds, r.timestamp, r.accuracy, r.seed), (0.0, 0, 0.97, 5));
    }
}
