//! Total absolute advantage (eta) curves and report emission.
//!
//! File formats written by [`emit_report`]:
//!
//! * `timeline_<i>_<label>.csv`: the [`StepRecord`] columns, one row per step;
//!   evaluation columns are empty on non-evaluation steps.
//! * `eta_<kind>_n<N>_k<k>.csv`: `n_pos,accuracy,a_pos,a_neg,eta,is_argmax`.
//! * `comparison.csv` (two or more timelines): `step` then
//!   `<label>_pass1_eval,<label>_passk_eval,<label>_policy_entropy,<label>_train_reward_mean`
//!   per timeline, one row per step present in any timeline.
//! * `plot_report.py`: matplotlib script rendering the CSVs next to it.
//! * `manifest.json`: the list of files written.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::advantage::{closed_form_advantage, EstimatorKind, EstimatorSpec};
use crate::error::{Error, Result};
use crate::trainer::{MetricsTimeline, StepRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaPoint {
    pub n_pos: usize,
    pub a_pos: f64,
    pub a_neg: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaCurve {
    pub n_rollout: usize,
    pub k: usize,
    pub kind: EstimatorKind,
    pub zero_easy_threshold: Option<f64>,
    pub points: Vec<EtaPoint>,
}

impl EtaCurve {
    /// `n_pos` of the largest eta; the smallest such `n_pos` on ties.
    pub fn argmax(&self) -> usize {
        let mut best = &self.points[0];
        for p in &self.points[1..] {
            if p.eta > best.eta {
                best = p;
            }
        }
        best.n_pos
    }

    pub fn etas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.eta).collect()
    }

    pub fn file_name(&self) -> String {
        let easy = match self.zero_easy_threshold {
            Some(t) => format!("_easy{t}"),
            None => String::new(),
        };
        format!(
            "eta_{}_n{}_k{}{easy}.csv",
            self.kind, self.n_rollout, self.k
        )
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            n_pos: usize,
            accuracy: f64,
            a_pos: f64,
            a_neg: f64,
            eta: f64,
            is_argmax: bool,
        }
        let argmax = self.argmax();
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.points {
            w.serialize(Row {
                n_pos: p.n_pos,
                accuracy: p.n_pos as f64 / self.n_rollout as f64,
                a_pos: p.a_pos,
                a_neg: p.a_neg,
                eta: p.eta,
                is_argmax: p.n_pos == argmax,
            })?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// `eta(n_pos) = n_pos |a_pos| + n_neg |a_neg|` for every `n_pos` in `0..=n_rollout`,
/// using the closed form of `spec.kind` at `k` and honouring `spec.zero_easy_threshold`.
pub fn eta_curve(n_rollout: usize, k: usize, spec: &EstimatorSpec) -> Result<EtaCurve> {
    if spec.kind.is_sampling() || spec.kind == EstimatorKind::PasskFull {
        return Err(Error::UnsupportedSpec(format!(
            "{} has no closed form",
            spec.kind
        )));
    }
    if n_rollout == 0 {
        return Err(Error::domain("n_rollout must be at least 1"));
    }
    let check = EstimatorSpec { k, ..spec.clone() };
    check.validate_for(n_rollout)?;
    let points = (0..=n_rollout)
        .map(|n_pos| {
            let (mut a_pos, mut a_neg) = closed_form_advantage(spec.kind, n_rollout, n_pos, k)?;
            if let Some(t) = spec.zero_easy_threshold {
                if n_pos as f64 / n_rollout as f64 > t {
                    a_pos = 0.0;
                    a_neg = 0.0;
                }
            }
            let eta = n_pos as f64 * a_pos.abs() + (n_rollout - n_pos) as f64 * a_neg.abs();
            Ok(EtaPoint {
                n_pos,
                a_pos,
                a_neg,
                eta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EtaCurve {
        n_rollout,
        k,
        kind: spec.kind,
        zero_easy_threshold: spec.zero_easy_threshold,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub files: Vec<String>,
    pub timelines: Vec<String>,
    pub curves: Vec<String>,
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes per-timeline and per-curve CSVs, a comparison table, a plot script
/// and a manifest into `out_dir`, overwriting previous output. Returns the
/// paths written.
pub fn emit_report(
    timelines: &[MetricsTimeline],
    curves: &[EtaCurve],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut timeline_files = Vec::new();
    let mut curve_files = Vec::new();

    for (i, t) in timelines.iter().enumerate() {
        let name = format!("timeline_{i}_{}.csv", sanitize(&t.label));
        let mut buf = Vec::new();
        t.write_csv(&mut buf)?;
        write_file(&out_dir.join(&name), &buf)?;
        timeline_files.push(name);
    }

    for c in curves {
        let name = c.file_name();
        let mut buf = Vec::new();
        c.write_csv(&mut buf)?;
        write_file(&out_dir.join(&name), &buf)?;
        curve_files.push(name);
    }

    let mut extra = Vec::new();
    if timelines.len() >= 2 {
        let name = "comparison.csv".to_string();
        write_file(&out_dir.join(&name), &comparison_csv(timelines)?)?;
        extra.push(name);
    }
    if !timelines.is_empty() || !curves.is_empty() {
        let name = "plot_report.py".to_string();
        write_file(&out_dir.join(&name), PLOT_SCRIPT.as_bytes())?;
        extra.push(name);
    }

    let mut files: Vec<String> = timeline_files
        .iter()
        .chain(&curve_files)
        .chain(&extra)
        .cloned()
        .collect();
    files.push("manifest.json".into());
    let manifest = ReportManifest {
        files: files.clone(),
        timelines: timeline_files,
        curves: curve_files,
    };
    write_file(
        &out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    written.extend(files.iter().map(|f| out_dir.join(f)));
    Ok(written)
}

/// Joins timelines on `step`.
pub fn comparison_csv(timelines: &[MetricsTimeline]) -> Result<Vec<u8>> {
    let mut by_step: BTreeMap<usize, Vec<Option<&StepRecord>>> = BTreeMap::new();
    for (i, t) in timelines.iter().enumerate() {
        for r in &t.records {
            by_step
                .entry(r.step)
                .or_insert_with(|| vec![None; timelines.len()])[i] = Some(r);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string()];
    for (i, t) in timelines.iter().enumerate() {
        let label = format!("{i}_{}", sanitize(&t.label));
        for col in [
            "pass1_eval",
            "passk_eval",
            "policy_entropy",
            "train_reward_mean",
        ] {
            header.push(format!("{label}_{col}"));
        }
    }
    w.write_record(&header)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (step, rows) in by_step {
        let mut record = vec![step.to_string()];
        for r in rows {
            match r {
                Some(r) => {
                    record.push(cell(r.pass1_eval));
                    record.push(cell(r.passk_eval));
                    record.push(cell(r.policy_entropy));
                    record.push(cell(r.train_reward_mean));
                }
                None => record.extend(std::iter::repeat_n(String::new(), 4)),
            }
        }
        w.write_record(&record)?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<csv>", std::io::Error::other(e.to_string())))
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Render report panels from the CSV files in this directory."""
import csv
import glob
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def series(rows, x, y):
    xs, ys = [], []
    for r in rows:
        if r.get(y, "") != "":
            xs.append(float(r[x]))
            ys.append(float(r[y]))
    return xs, ys


def main():
    timelines = sorted(glob.glob(os.path.join(HERE, "timeline_*.csv")))
    curves = sorted(glob.glob(os.path.join(HERE, "eta_*.csv")))
    if timelines:
        fig, axes = plt.subplots(1, 3, figsize=(15, 4))
        for path in timelines:
            rows = read(path)
            label = os.path.basename(path)[len("timeline_"):-len(".csv")]
            for ax, col in zip(axes, ["pass1_eval", "passk_eval", "policy_entropy"]):
                ax.plot(*series(rows, "step", col), marker="o", ms=3, label=label)
                ax.set_title(col)
                ax.set_xlabel("step")
        axes[0].legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(os.path.join(HERE, "timelines.png"), dpi=120)
    if curves:
        fig, axes = plt.subplots(1, 2, figsize=(11, 4))
        for path in curves:
            rows = read(path)
            label = os.path.basename(path)[len("eta_"):-len(".csv")]
            axes[0].plot(*series(rows, "accuracy", "eta"), label=label)
            axes[1].plot(*series(rows, "accuracy", "a_pos"), label=label + " pos")
            axes[1].plot(*series(rows, "accuracy", "a_neg"), "--", label=label + " neg")
        axes[0].set_title("sum of absolute advantage")
        axes[1].set_title("advantage per class")
        for ax in axes:
            ax.set_xlabel("accuracy")
            ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(os.path.join(HERE, "eta.png"), dpi=120)
    return 0


if __name__ == "__main__":
    sys.exit(main())
"#;
