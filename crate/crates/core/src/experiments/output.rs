//! Metric rows, CSV/JSON emission and the output directory layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunConfig;
use crate::error::Result;
use crate::fl::RoundMetrics;
use crate::signal::snr_grid;

/// One CSV record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub algorithm: String,
    pub scenario: String,
    pub round: usize,
    pub theta: i32,
    /// Cluster count, or `none` for the chained mode and `-` where unused.
    pub clusters: String,
    pub queue: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub per_snr: BTreeMap<i32, f64>,
}

impl MetricRow {
    pub fn from_round(
        run_id: &str,
        m: &RoundMetrics,
        scenario: &str,
        theta: i32,
        clusters: String,
        queue: usize,
    ) -> Self {
        Self {
            run_id: run_id.to_string(),
            algorithm: m.algorithm.name().to_string(),
            scenario: scenario.to_string(),
            round: m.round,
            theta,
            clusters,
            queue,
            accuracy: m.accuracy,
            loss: m.loss,
            per_snr: m.per_snr.clone(),
        }
    }
}

pub fn csv_header() -> String {
    let mut h = String::from("run_id,algorithm,scenario,round,theta,clusters,queue,accuracy,loss");
    for s in snr_grid() {
        write!(h, ",snr_{s}").expect("string write");
    }
    h
}

/// Header plus one LF-terminated line per row. Missing SNRs are empty cells.
pub fn render_csv(rows: &[MetricRow]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for r in rows {
        write!(
            out,
            "{},{},{},{},{},{},{},{:.6},{:.6}",
            r.run_id, r.algorithm, r.scenario, r.round, r.theta, r.clusters, r.queue, r.accuracy, r.loss
        )
        .expect("string write");
        for s in snr_grid() {
            match r.per_snr.get(&s) {
                Some(v) => write!(out, ",{v:.6}").expect("string write"),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Result of one subcommand ready to be written.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricRow>,
    pub summary: serde_json::Value,
    /// Additional files, by name, written next to the standard ones.
    pub extra_files: Vec<(String, String)>,
}

/// Text written to `config.resolved`: a comment naming the command, then the
/// canonical config. It parses back to the same config.
pub fn resolved_config(command: &str, cfg: &RunConfig) -> String {
    format!("# command: {command}\n{}", cfg.render())
}

/// `out_root/<hash of the resolved config>`.
pub fn output_dir(out_root: &Path, resolved: &str) -> PathBuf {
    let d = Sha256::digest(resolved.as_bytes());
    out_root.join(d.iter().take(6).map(|b| format!("{b:02x}")).collect::<String>())
}

/// Writes `config.resolved`, `metrics.csv`, `summary.json` and any extra
/// files into [`output_dir`]. Files are staged in a sibling directory and
/// renamed into place, so a failure leaves no partial output.
pub fn write_outputs(out_root: &Path, resolved: &str, out: &ExperimentOutput) -> Result<PathBuf> {
    let dir = output_dir(out_root, resolved);
    let name = dir.file_name().expect("hash name").to_string_lossy().into_owned();
    let staging = out_root.join(format!(".staging-{name}-{}", std::process::id()));
    let result = (|| -> Result<()> {
        std::fs::create_dir_all(&staging)?;
        std::fs::write(staging.join("config.resolved"), resolved)?;
        std::fs::write(staging.join("metrics.csv"), render_csv(&out.rows))?;
        let mut json = serde_json::to_string_pretty(&out.summary).expect("json value");
        json.push('\n');
        std::fs::write(staging.join("summary.json"), json)?;
        for (name, body) in &out.extra_files {
            std::fs::write(staging.join(name), body)?;
        }
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::rename(&staging, &dir)?;
        Ok(())
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_dir_all(&staging);
        return Err(e);
    }
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_has_fixed_schema() {
        let h = csv_header();
        assert!(h.starts_with("run_id,algorithm,scenario,round,theta,clusters,queue,accuracy,loss,snr_-20,"));
        assert!(h.ends_with(",snr_18"));
        assert_eq!(h.split(',').count(), 9 + 20);
    }

    #[test]
    fn rows_fill_missing_snrs_with_empty_cells() {
        let row = MetricRow {
            run_id: "abc-1".into(),
            algorithm: "fedavg".into(),
            scenario: "iid".into(),
            round: 3,
            theta: -12,
            clusters: "2".into(),
            queue: 1500,
            accuracy: 0.5,
            loss: 1.25,
            per_snr: [(0, 0.75)].into_iter().collect(),
        };
        let csv = render_csv(&[row]);
        let line = csv.lines().nth(1).unwrap();
        assert!(line.starts_with("abc-1,fedavg,iid,3,-12,2,1500,0.500000,1.250000,"));
        assert_eq!(line.split(',').count(), 29);
        assert_eq!(line.split(',').nth(9 + 10).unwrap(), "0.750000");
    }

    #[test]
    fn outputs_land_in_hash_directory_without_staging_leftovers() {
        let root = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let resolved = resolved_config("run-fl", &cfg);
        assert_eq!(super::super::parse_config(&resolved, &[]).unwrap(), cfg);
        let out = ExperimentOutput {
            rows: Vec::new(),
            summary: serde_json::json!({"ok": true}),
            extra_files: vec![("extra.txt".into(), "x".into())],
        };
        let dir = write_outputs(root.path(), &resolved, &out).unwrap();
        assert_eq!(dir, output_dir(root.path(), &resolved));
        assert_ne!(dir, output_dir(root.path(), &resolved_config("ablate", &cfg)));
        for f in ["config.resolved", "metrics.csv", "summary.json", "extra.txt"] {
            assert!(dir.join(f).is_file(), "{f}");
        }
        assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 1);
    }
}
