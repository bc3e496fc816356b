use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, MetricsRecord, DEFAULT_COMM_TRIALS, DEFAULT_SENSING_TRIALS};
use crate::config::{DerivedParams, Setup};
use crate::error::{Error, Result};

/// One line of the results CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub scheme: String,
    pub task: String,
    pub snr_db: String,
    pub metric: String,
    pub value: f64,
    pub trial_count: usize,
    pub seed: u64,
    pub params_hash: String,
}

pub fn format_snr(snr_db: f64) -> String {
    if snr_db.is_infinite() {
        "inf".to_string()
    } else {
        format!("{snr_db}")
    }
}

impl MetricsRecord {
    /// Flattened rows; error samples are emitted in ascending order.
    pub fn rows(&self) -> Vec<MetricRow> {
        let cfg = &self.config;
        let mut rows = Vec::new();
        for point in &self.points {
            let mut push = |metric: &str, value: f64| {
                rows.push(MetricRow {
                    scheme: cfg.scheme.as_str().to_string(),
                    task: cfg.task.as_str().to_string(),
                    snr_db: format_snr(point.snr_db),
                    metric: metric.to_string(),
                    value,
                    trial_count: point.trials,
                    seed: cfg.seed,
                    params_hash: self.params_hash.clone(),
                });
            };
            if let Some(h) = point.hit_rate {
                push("hit_rate", h);
            }
            if let Some(s) = point.ser {
                push("ser", s);
            }
            if let Some(b) = point.effective_bits {
                push("effective_bits", b as f64);
            }
            if let Some(r) = point.comm_rate {
                push("comm_rate_bps", r);
            }
            push("failed_trials", point.failed_trials as f64);
            for (name, values) in [
                ("range_error_m", &point.range_errors),
                ("velocity_error_mps", &point.velocity_errors),
                ("angle_error_rad", &point.angle_errors),
            ] {
                let mut sorted = values.clone();
                sorted.sort_by(f64::total_cmp);
                for v in sorted {
                    push(name, v);
                }
            }
        }
        rows
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    params_hash: &'a str,
    default_trials: DefaultTrials,
    config: &'a ExperimentConfig,
    derived: DerivedParams,
}

#[derive(Serialize)]
struct DefaultTrials {
    sensing: usize,
    comms: usize,
}

/// Path of the configuration sidecar written next to `csv_path`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("toml")
}

/// Writes the CSV to `path` and the full configuration to its `.toml` sidecar.
pub fn emit_results(record: &MetricsRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["scheme", "task", "snr_db", "metric", "value", "trial_count", "seed", "params_hash"])
        .map_err(|e| csv_error(path, e))?;
    for row in record.rows() {
        w.write_record([
            row.scheme,
            row.task,
            row.snr_db,
            row.metric,
            format!("{}", row.value),
            row.trial_count.to_string(),
            row.seed.to_string(),
            row.params_hash,
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let setup = Setup::new(record.config.params.clone())?;
    let sidecar = Sidecar {
        params_hash: &record.params_hash,
        default_trials: DefaultTrials {
            sensing: DEFAULT_SENSING_TRIALS,
            comms: DEFAULT_COMM_TRIALS,
        },
        config: &record.config,
        derived: setup.derived,
    };
    let text = toml::to_string(&sidecar).map_err(|e| Error::Config(format!("cannot render sidecar: {e}")))?;
    let side = sidecar_path(path);
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(format!("{other:?}")),
        },
    }
}

/// Writes one JSON object per trial: truths, matched estimates and hit flags
/// (sensing) or sent and decided symbols (communication).
pub fn emit_trace(record: &MetricsRecord, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for t in &record.traces {
        let line = serde_json::to_string(t).map_err(|e| Error::Config(format!("cannot encode trace: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a results CSV back into rows.
pub fn read_csv_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}
