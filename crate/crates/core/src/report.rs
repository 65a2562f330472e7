//! Plot-ready CSV and JSON exports of every pipeline stage.
//!
//! Floats are written with Rust's shortest round-trip formatting so repeated
//! runs produce byte-identical files.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conformal::{confidence_credibility, CoverageReport, PValueVector};
use crate::error::{Error, Result};
use crate::forecast::ForecastDistribution;
use crate::health::{BucketCount, DiskHealth, DiskRecord, Disposition, HealthReport, ScrubCycle};
use crate::label::Label;
use crate::scalar::Scalar;
use crate::schedule::ScrubSchedule;

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_health_csv<W: Write>(report: &HealthReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "disk_index",
        "label",
        "health_score",
        "credibility",
        "disposition",
        "cycle",
    ])?;
    for r in &report.disks {
        let h = &r.health;
        out.write_record([
            h.disk_index.to_string(),
            h.point_label.to_string(),
            h.health_score.to_string(),
            h.credibility.to_string(),
            h.disposition().as_str().to_string(),
            r.cycle.code().to_string(),
        ])?;
    }
    flush(out)
}

pub fn read_health_csv<R: Read>(r: R) -> Result<Vec<DiskRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |what: &str| Error::MalformedRow {
            line,
            reason: format!("bad {what}"),
        };
        if rec.len() != 6 {
            return Err(bad("arity"));
        }
        let disk_index: u64 = rec[0].parse().map_err(|_| bad("disk index"))?;
        let point_label = match &rec[1] {
            "0" => Label::Failed,
            "1" => Label::Functional,
            _ => return Err(bad("label")),
        };
        let health_score: f64 = rec[2].parse().map_err(|_| bad("health score"))?;
        let credibility: f64 = rec[3].parse().map_err(|_| bad("credibility"))?;
        let disposition = Disposition::parse(&rec[4]).ok_or_else(|| bad("disposition"))?;
        let cycle = ScrubCycle::from_code(&rec[5]).ok_or_else(|| bad("cycle"))?;
        out.push(DiskRecord {
            health: DiskHealth {
                disk_index,
                point_label,
                health_score,
                credibility,
                concern: disposition == Disposition::Scrub,
            },
            cycle,
        });
    }
    Ok(out)
}

/// Fleet-level summary of a [`HealthReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthSummary {
    pub fleet_size: usize,
    pub selected_count: usize,
    pub skipped_count: usize,
    pub replacement_count: usize,
    pub selected_fraction: f64,
    pub healthy_floor: f64,
    pub buckets: Vec<BucketCount>,
    pub below_lowest_bucket: usize,
    pub above_highest_bucket: usize,
}

impl HealthSummary {
    pub fn of(report: &HealthReport) -> Self {
        Self {
            fleet_size: report.fleet_size(),
            selected_count: report.selected_count,
            skipped_count: report.skipped_count,
            replacement_count: report.replacement_count,
            selected_fraction: report.selected_fraction(),
            healthy_floor: report.healthy_floor,
            buckets: report.buckets.clone(),
            below_lowest_bucket: report.below_lowest_bucket,
            above_highest_bucket: report.above_highest_bucket,
        }
    }

    /// Reassembles the full report from the per-disk CSV records.
    pub fn rebuild(&self, records: Vec<DiskRecord>) -> Result<HealthReport> {
        let buckets: Vec<_> = self.buckets.iter().map(|b| b.interval).collect();
        HealthReport::from_records(records, &buckets, self.healthy_floor)
    }
}

/// Per-object p-values for calibration plots.
pub fn write_pvalues_csv<T: Scalar, W: Write>(
    object_ids: &[String],
    pvals: &[PValueVector<T>],
    truth: Option<&[Label]>,
    w: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![
        "object_id",
        "p0",
        "p1",
        "confidence",
        "credibility",
        "point_label",
    ];
    if truth.is_some() {
        header.push("true_label");
    }
    out.write_record(&header)?;
    for (i, (id, pv)) in object_ids.iter().zip(pvals).enumerate() {
        let cc = confidence_credibility(pv);
        let mut rec = vec![
            id.clone(),
            pv.p[0].to_string(),
            pv.p[1].to_string(),
            cc.confidence.to_string(),
            cc.credibility.to_string(),
            cc.point_label.to_string(),
        ];
        if let Some(t) = truth {
            rec.push(t[i].to_string());
        }
        out.write_record(&rec)?;
    }
    flush(out)
}

pub fn write_coverage_csv<W: Write>(report: &CoverageReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "epsilon",
        "confidence_level",
        "effective_coverage",
        "average_set_size",
        "error_rate_0",
        "error_rate_1",
        "empty_fraction",
        "singleton_fraction",
    ])?;
    for r in &report.rows {
        out.write_record([
            r.epsilon.to_string(),
            (1.0 - r.epsilon).to_string(),
            r.effective_coverage.to_string(),
            r.average_set_size.to_string(),
            r.error_rate[0].to_string(),
            r.error_rate[1].to_string(),
            r.empty_fraction.to_string(),
            r.singleton_fraction.to_string(),
        ])?;
    }
    flush(out)
}

/// 2x2 counts indexed `[actual][predicted]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut m = Self::default();
        for (actual, predicted) in pairs {
            m.counts[actual.index()][predicted.index()] += 1;
        }
        m
    }

    /// Share of actual `class` objects predicted as `class`.
    pub fn recall(&self, class: Label) -> f64 {
        let row = self.counts[class.index()];
        let total = row[0] + row[1];
        if total == 0 {
            0.0
        } else {
            row[class.index()] as f64 / total as f64
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

/// Side-by-side confusion matrices of the point classifier and the conformal point labels.
pub fn write_confusion_csv<W: Write>(
    knn: &ConfusionMatrix,
    conformal: &ConfusionMatrix,
    w: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "actual", "predicted_0", "predicted_1"])?;
    for (name, m) in [("kNN", knn), ("MCP", conformal)] {
        for actual in Label::ALL {
            let row = m.counts[actual.index()];
            out.write_record([
                name.to_string(),
                actual.to_string(),
                row[0].to_string(),
                row[1].to_string(),
            ])?;
        }
    }
    flush(out)
}

pub fn write_forecast_csv<T: Scalar, W: Write>(dist: &ForecastDistribution<T>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![
        "step".to_string(),
        "hour_index".to_string(),
        "point_forecast".to_string(),
    ];
    header.extend((1..=dist.centers.len()).map(|i| format!("p_{i}")));
    out.write_record(&header)?;
    for (i, step) in dist.steps.iter().enumerate() {
        let mut rec = vec![
            (i + 1).to_string(),
            (dist.origin_hour + i as i64 + 1).to_string(),
            step.point.to_string(),
        ];
        rec.extend(step.probabilities.iter().map(|p| p.to_string()));
        out.write_record(&rec)?;
    }
    flush(out)
}

pub fn write_schedule_csv<W: Write>(schedule: &ScrubSchedule, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["hour", "hour_index", "disk_index", "cycle", "health_score"])?;
    for a in &schedule.assignments {
        out.write_record([
            a.slot.to_string(),
            a.hour_index.to_string(),
            a.disk_index.to_string(),
            a.cycle.code().to_string(),
            a.health_score.to_string(),
        ])?;
    }
    flush(out)
}
