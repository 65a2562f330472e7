//! Synthetic fleets and utilization traces shared by the integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use scrubsel::ingest::DiskSample;
use scrubsel::pipeline::PipelineConfig;
use scrubsel::Label;

/// Two unit-variance Gaussian clusters; the failed (minority) one is shifted
/// by `shift` along every axis. Exactly `round(n * minority)` rows are failed,
/// placed at random positions. Each row is its own disk.
pub fn gaussian_rows(
    seed: u64,
    n: usize,
    minority: f64,
    dim: usize,
    shift: f64,
) -> Vec<DiskSample<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let failed = (n as f64 * minority).round() as usize;
    let mut labels: Vec<Label> = (0..n)
        .map(|i| {
            if i < failed {
                Label::Failed
            } else {
                Label::Functional
            }
        })
        .collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.gen_range(0..=i));
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let offset = if label == Label::Failed { shift } else { 0.0 };
            DiskSample {
                disk_index: i as u64 + 1,
                features: (0..dim).map(|_| normal.sample(&mut rng) + offset).collect(),
                label,
                bms_error_count: None,
                timestamp_hour: None,
            }
        })
        .collect()
}

/// Daily utilization cycle: mean 50, amplitude 30, Gaussian noise, clipped to [0, 100].
pub fn sinusoid(seed: u64, len: usize, sigma: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    (0..len)
        .map(|t| {
            let clean = 50.0 + 30.0 * (2.0 * std::f64::consts::PI * t as f64 / 24.0).sin();
            (clean + noise.sample(&mut rng)).clamp(0.0, 100.0)
        })
        .collect()
}

/// Writes a SMART CSV in the default 14-column layout plus disk-busy,
/// CPU-busy and actual-utilization logs, and returns a config pointing at
/// them with output in `out`.
pub fn write_fleet(dir: &Path, out: &Path, seed: u64, disks: usize) -> PipelineConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 4.0).unwrap();
    let mut smart = String::from("disk,f1,f2,f3,f4,f5,f6,f7,f8,f9,f10,raw5,raw197,label\n");
    for d in 1..=disks {
        let failed = rng.gen_bool(0.1);
        let centre: f64 = if failed { 92.0 } else { 100.0 };
        for _ in 0..2 {
            write!(smart, "{d}").unwrap();
            for _ in 0..10 {
                write!(smart, ",{}", (centre + noise.sample(&mut rng)).round()).unwrap();
            }
            let raw = if failed {
                rng.gen_range(0..8)
            } else {
                rng.gen_range(0..2)
            };
            writeln!(smart, ",{raw},{},{}", raw / 2, u8::from(!failed)).unwrap();
        }
    }
    let log = |values: &[f64], first_hour: usize| {
        let mut s = String::from("hour,pct\n");
        for (i, v) in values.iter().enumerate() {
            writeln!(s, "{},{v:.3}", first_hour + i).unwrap();
        }
        s
    };
    let history = 186;
    let busy = sinusoid(seed + 1, history + 24, 2.0);
    let cpu: Vec<f64> = sinusoid(seed + 2, history, 2.0)
        .iter()
        .map(|v| v * 0.6)
        .collect();
    let files = [
        ("smart.csv", smart),
        ("disk_busy.csv", log(&busy[..history], 0)),
        ("cpu_busy.csv", log(&cpu, 0)),
        ("actual.csv", log(&busy[history..], history)),
    ];
    for (name, text) in &files {
        std::fs::write(dir.join(name), text).unwrap();
    }
    PipelineConfig {
        dataset: Some(dir.join("smart.csv")),
        disk_busy: Some(dir.join("disk_busy.csv")),
        cpu_busy: Some(dir.join("cpu_busy.csv")),
        actual_utilization: Some(dir.join("actual.csv")),
        out: out.to_path_buf(),
        seed,
        ..Default::default()
    }
}
