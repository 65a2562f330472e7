//! Stage runners behind the command-line front end.
//!
//! Each stage reads the artifacts of earlier stages from the output
//! directory, writes its own, and records checksums and timing in
//! `manifest.json`. Given identical inputs and seed every artifact other
//! than the manifest is byte-identical across runs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conformal::{
    calibrate, confidence_credibility, coverage_from_pvalues, p_values_batch, CalibrationTable,
    ConformalConfig,
};
use crate::error::{Error, Result};
use crate::forecast::{fit_pwfts, forecast_series, ForecastDistribution, DEFAULT_SETS};
use crate::health::{
    default_report_buckets, score_disk, selection_summary, BucketCount, CycleBand, ScoreInterval,
    ThresholdPolicy,
};
use crate::ingest::{
    parse_smart_dataset, parse_utilization_log, read_smart_csv, read_utilization_csv,
    split_dataset, write_smart_csv, write_utilization_csv, DiskSampleTable, SchemaDescriptor,
    SmartSchema, SplitSpec, UtilizationSchema, UtilizationSeries, UtilizationSource,
};
use crate::knn::{fit_knn, KnnModel, MODEL_FORMAT_VERSION};
use crate::label::{Label, Labeled};
use crate::report::{
    read_health_csv, read_json, write_confusion_csv, write_coverage_csv, write_forecast_csv,
    write_health_csv, write_pvalues_csv, write_schedule_csv, ConfusionMatrix, HealthSummary,
};
use crate::schedule::{
    build_schedule, energy_for_counts, simulate, DueLedger, EnergyReport, ScheduleWarning,
    SchedulerConfig, ScrubSchedule, SimulationReport, UtilizationOutlook,
};

pub const MANIFEST: &str = "manifest.json";
pub const SAMPLES: &str = "samples.csv";
pub const FLEET: &str = "fleet.csv";
pub const DISK_BUSY: &str = "disk_busy.csv";
pub const CPU_BUSY: &str = "cpu_busy.csv";
pub const ACTUAL_UTILIZATION: &str = "actual_utilization.csv";
pub const INGEST_SUMMARY: &str = "ingest.json";
pub const MODEL: &str = "model.json";
pub const CALIBRATION: &str = "calibration.json";
pub const PVALUES: &str = "pvalues.csv";
pub const COVERAGE: &str = "coverage.csv";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const CONFUSION_JSON: &str = "confusion.json";
pub const HEALTH: &str = "health.csv";
pub const HEALTH_SUMMARY: &str = "health_summary.json";
pub const FORECAST: &str = "forecast.json";
pub const FORECAST_DISK_BUSY: &str = "forecast_disk_busy.csv";
pub const FORECAST_CPU_BUSY: &str = "forecast_cpu_busy.csv";
pub const SCHEDULE_CSV: &str = "schedule.csv";
pub const SCHEDULE_JSON: &str = "schedule.json";
pub const NEXT_DUE: &str = "next_due.json";
pub const ENERGY: &str = "energy.json";
pub const SIMULATION: &str = "simulation.json";
pub const REPORT: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub proper_train: f64,
    pub calibration: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        let d = SplitSpec::default();
        Self {
            proper_train: d.proper_train_fraction,
            calibration: d.calibration_fraction,
            test: d.test_fraction,
        }
    }
}

/// Everything a run needs. Loadable from JSON; absent fields keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// SMART telemetry CSV.
    pub dataset: Option<PathBuf>,
    /// Column mapping (JSON) for the input CSVs.
    pub schema: Option<PathBuf>,
    /// Hourly disk-busy log used to forecast the scrub window.
    pub disk_busy: Option<PathBuf>,
    /// Optional hourly CPU-busy log; the window must be idle on both.
    pub cpu_busy: Option<PathBuf>,
    /// Observed utilization during the window, for simulation.
    pub actual_utilization: Option<PathBuf>,
    /// Disks to score; defaults to the test partition of `dataset`.
    pub fleet: Option<PathBuf>,
    /// `next_due.json` of a previous schedule run.
    pub ledger: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub k: usize,
    pub conformal: ConformalConfig,
    pub split: SplitFractions,
    /// Significance level; scores at or above `1 - threshold` are skipped.
    pub threshold: f64,
    /// Overrides `1 - threshold` as the skip boundary.
    pub healthy_floor: Option<f64>,
    /// Overrides the default cycle bands.
    pub bands: Option<Vec<CycleBand>>,
    pub report_buckets: Vec<ScoreInterval>,
    /// Significance levels of the coverage table.
    pub epsilons: Vec<f64>,
    pub fuzzy_sets: usize,
    pub scheduler: SchedulerConfig,
    /// Day index the schedule is built for.
    pub day: i64,
    /// Reuse the persisted model and calibration scores when they match the data and split.
    pub reuse_calibration: bool,
    /// Build the schedule without simulating it.
    pub dry_run: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            schema: None,
            disk_busy: None,
            cpu_busy: None,
            actual_utilization: None,
            fleet: None,
            ledger: None,
            out: PathBuf::from("out"),
            seed: 0,
            k: 5,
            conformal: ConformalConfig::default(),
            split: SplitFractions::default(),
            threshold: 0.01,
            healthy_floor: None,
            bands: None,
            report_buckets: default_report_buckets(),
            epsilons: (1..=20).map(|i| i as f64 / 100.0).collect(),
            fuzzy_sets: DEFAULT_SETS,
            scheduler: SchedulerConfig::default(),
            day: 0,
            reuse_calibration: false,
            dry_run: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        SplitSpec::new(
            self.split.proper_train,
            self.split.calibration,
            self.split.test,
            self.seed,
        )
    }

    pub fn policy(&self) -> Result<ThresholdPolicy> {
        match (&self.bands, self.healthy_floor) {
            (None, None) => ThresholdPolicy::with_threshold(self.threshold),
            (None, Some(floor)) => ThresholdPolicy::with_floor(floor),
            (Some(bands), floor) => ThresholdPolicy::new(
                self.threshold,
                floor.unwrap_or(1.0 - self.threshold),
                bands.clone(),
            ),
        }
    }

    fn input_paths(&self) -> Vec<(&'static str, &Path)> {
        [
            ("dataset", &self.dataset),
            ("schema", &self.schema),
            ("disk_busy", &self.disk_busy),
            ("cpu_busy", &self.cpu_busy),
            ("actual_utilization", &self.actual_utilization),
            ("fleet", &self.fleet),
            ("ledger", &self.ledger),
        ]
        .into_iter()
        .filter_map(|(role, p)| p.as_deref().map(|p| (role, p)))
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k == 0 {
            return bad("k must be positive".into());
        }
        if self.fuzzy_sets < 3 {
            return bad(format!(
                "need at least 3 fuzzy sets, got {}",
                self.fuzzy_sets
            ));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad("significance levels must lie in (0, 1)".into());
        }
        let mut seen = BTreeSet::new();
        seen.insert(self.out.as_path());
        for (role, p) in self.input_paths() {
            if !seen.insert(p) {
                return bad(format!("{role} path {} is used twice", p.display()));
            }
        }
        self.split_spec()?;
        self.policy()?;
        self.scheduler.validate()
    }

    /// SHA-256 of the configuration with the output directory blanked, so
    /// identical runs into different directories share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn schema(&self) -> Result<SchemaDescriptor> {
        match &self.schema {
            Some(p) => SchemaDescriptor::load(p).map_err(|e| e.in_file(p)),
            None => Ok(SchemaDescriptor::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub millis: u64,
    pub artifacts: Vec<String>,
}

/// Provenance of everything in the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub model_format_version: u32,
    pub seed: u64,
    pub disk_count: Option<usize>,
    pub inputs: BTreeMap<String, InputDigest>,
    /// Artifact file name to SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load(out: &Path) -> Result<Self> {
        read_json(&out.join(MANIFEST))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Bookkeeping for one stage: writes artifacts and folds them into the manifest.
struct Stage<'a> {
    cfg: &'a PipelineConfig,
    name: &'static str,
    started: Instant,
    written: BTreeMap<String, String>,
    removed: Vec<String>,
    inputs: Vec<(&'static str, PathBuf)>,
    disk_count: Option<usize>,
}

impl<'a> Stage<'a> {
    fn begin(cfg: &'a PipelineConfig, name: &'static str) -> Result<Self> {
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
        log::info!("stage {name}: output in {}", cfg.out.display());
        Ok(Self {
            cfg,
            name,
            started: Instant::now(),
            written: BTreeMap::new(),
            removed: Vec::new(),
            inputs: Vec::new(),
            disk_count: None,
        })
    }

    fn put(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        let path = self.cfg.artifact(name);
        std::fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        self.written
            .insert(name.to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.put(name, buf)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.put(name, buf)
    }

    fn remove(&mut self, name: &str) -> Result<()> {
        let path = self.cfg.artifact(name);
        if path.exists() {
            std::fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
        self.removed.push(name.to_string());
        Ok(())
    }

    fn input(&mut self, role: &'static str, path: &Path) {
        self.inputs.push((role, path.to_path_buf()));
    }

    fn finish(self) -> Result<RunManifest> {
        let manifest_path = self.cfg.artifact(MANIFEST);
        let mut m = if manifest_path.exists() {
            RunManifest::load(&self.cfg.out)?
        } else {
            RunManifest::default()
        };
        m.version = env!("CARGO_PKG_VERSION").to_string();
        m.model_format_version = MODEL_FORMAT_VERSION;
        m.seed = self.cfg.seed;
        if self.disk_count.is_some() {
            m.disk_count = self.disk_count;
        }
        for (role, path) in &self.inputs {
            let sha256 = sha256_file(path)?;
            m.inputs.insert(
                role.to_string(),
                InputDigest {
                    path: path.clone(),
                    sha256,
                },
            );
        }
        for name in &self.removed {
            m.artifacts.remove(name);
        }
        m.artifacts.extend(self.written.clone());
        m.stages.insert(
            self.name.to_string(),
            StageRecord {
                config_hash: self.cfg.hash(),
                millis: self.started.elapsed().as_millis() as u64,
                artifacts: self.written.into_keys().collect(),
            },
        );
        crate::report::write_json(&manifest_path, &m)?;
        Ok(m)
    }
}

fn require(cfg: &PipelineConfig, name: &str) -> Result<PathBuf> {
    let p = cfg.artifact(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(Error::MissingArtifact(p))
    }
}

/// Reads a table written by [`write_smart_csv`].
pub fn load_samples(path: &Path) -> Result<DiskSampleTable<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let columns = text.lines().next().map_or(0, |l| l.split(',').count());
    if columns < 5 {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "not a canonical sample table".into(),
        }
        .in_file(path));
    }
    read_smart_csv(text.as_bytes(), &SmartSchema::canonical(columns - 4))
        .map_err(|e| e.in_file(path))
}

fn load_series(path: &Path, source: UtilizationSource) -> Result<UtilizationSeries<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_utilization_csv(file, &UtilizationSchema::default(), source).map_err(|e| e.in_file(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub disk_count: usize,
    pub failed_disk_count: usize,
    pub feature_dim: usize,
    pub fleet_disk_count: Option<usize>,
    /// Observation count per utilization artifact.
    pub utilization: BTreeMap<String, usize>,
}

/// Parses the configured inputs and persists them in canonical form.
pub fn ingest(cfg: &PipelineConfig) -> Result<IngestSummary> {
    let mut stage = Stage::begin(cfg, "ingest")?;
    let schema = cfg.schema()?;
    if let Some(p) = &cfg.schema {
        stage.input("schema", p);
    }
    let dataset = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| Error::InvalidConfig("no dataset path configured".into()))?;
    let table: DiskSampleTable<f64> =
        parse_smart_dataset(dataset, &schema.smart).map_err(|e| e.in_file(dataset))?;
    stage.input("dataset", dataset);
    stage.csv(SAMPLES, |w| write_smart_csv(&table, w))?;

    let fleet_disk_count = match &cfg.fleet {
        Some(p) => {
            let fleet: DiskSampleTable<f64> =
                parse_smart_dataset(p, &schema.smart).map_err(|e| e.in_file(p))?;
            if fleet.feature_dim() != table.feature_dim() {
                return Err(Error::DimensionMismatch {
                    expected: table.feature_dim(),
                    got: fleet.feature_dim(),
                }
                .in_file(p));
            }
            stage.input("fleet", p);
            stage.csv(FLEET, |w| write_smart_csv(&fleet, w))?;
            Some(fleet.disk_count())
        }
        None => None,
    };

    let mut utilization = BTreeMap::new();
    for (role, path, source, name) in [
        (
            "disk_busy",
            &cfg.disk_busy,
            UtilizationSource::DiskBusy,
            DISK_BUSY,
        ),
        (
            "cpu_busy",
            &cfg.cpu_busy,
            UtilizationSource::CpuBusy,
            CPU_BUSY,
        ),
        (
            "actual_utilization",
            &cfg.actual_utilization,
            UtilizationSource::DiskBusy,
            ACTUAL_UTILIZATION,
        ),
    ] {
        if let Some(p) = path {
            let series: UtilizationSeries<f64> =
                parse_utilization_log(p, &schema.utilization, source).map_err(|e| e.in_file(p))?;
            stage.input(role, p);
            stage.csv(name, |w| write_utilization_csv(&series, w))?;
            utilization.insert(name.to_string(), series.len());
        }
    }

    let summary = IngestSummary {
        rows: table.len(),
        disk_count: table.disk_count(),
        failed_disk_count: table.failed_disk_count(),
        feature_dim: table.feature_dim(),
        fleet_disk_count,
        utilization,
    };
    stage.json(INGEST_SUMMARY, &summary)?;
    stage.disk_count = Some(summary.disk_count);
    stage.finish()?;
    log::info!(
        "ingested {} rows from {} disks ({} failed)",
        summary.rows,
        summary.disk_count,
        summary.failed_disk_count
    );
    Ok(summary)
}

/// Persisted calibration scores plus the fingerprint of what produced them.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CalibrationArtifact {
    key: String,
    table: serde_json::Value,
}

fn calibration_key(cfg: &PipelineConfig, samples: &Path) -> Result<String> {
    let split = cfg.split_spec()?;
    let material = serde_json::to_vec(&(sha256_file(samples)?, split, cfg.k))?;
    Ok(hex::encode(Sha256::digest(material)))
}

fn reusable(
    cfg: &PipelineConfig,
    key: &str,
) -> Result<Option<(KnnModel<f64>, CalibrationTable<f64>)>> {
    let (model_path, cal_path) = (cfg.artifact(MODEL), cfg.artifact(CALIBRATION));
    if !cfg.reuse_calibration || !model_path.exists() || !cal_path.exists() {
        return Ok(None);
    }
    let art: CalibrationArtifact = read_json(&cal_path).map_err(|e| e.in_file(&cal_path))?;
    if art.key != key {
        log::info!("persisted calibration does not match the data or split; refitting");
        return Ok(None);
    }
    let text = std::fs::read_to_string(&model_path).map_err(|e| Error::io(&model_path, e))?;
    let model = KnnModel::from_json(&text).map_err(|e| e.in_file(&model_path))?;
    let table =
        CalibrationTable::from_json(&art.table.to_string()).map_err(|e| e.in_file(&cal_path))?;
    Ok(Some((model, table)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    /// Plain kNN point predictions on the test partition.
    pub knn: ConfusionMatrix,
    /// Conformal point labels on the same objects.
    pub conformal: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub test_rows: usize,
    pub reused_calibration: bool,
    pub confusion: ConfusionSummary,
    pub health: HealthSummary,
}

/// Fits the classifier, calibrates, evaluates on the test partition and
/// scores the fleet.
pub fn score(cfg: &PipelineConfig) -> Result<ScoreSummary> {
    let mut stage = Stage::begin(cfg, "score")?;
    let policy = cfg.policy()?;
    let samples_path = require(cfg, SAMPLES)?;
    let samples = load_samples(&samples_path)?;
    let (train, cal, test) = split_dataset(&samples, &cfg.split_spec()?)?;
    log::info!(
        "split {} / {} / {} rows (train / calibration / test)",
        train.len(),
        cal.len(),
        test.len()
    );

    let key = calibration_key(cfg, &samples_path)?;
    let (model, table, reused) = match reusable(cfg, &key)? {
        Some((model, table)) => {
            let table = if table.config().nonconformity == cfg.conformal.nonconformity {
                table
                    .with_pvalue_mode(cfg.conformal.pvalue_mode)
                    .with_taxonomy(cfg.conformal.taxonomy)?
            } else {
                calibrate(&model, cal.rows(), cfg.conformal)?
            };
            log::info!("reusing persisted model and calibration");
            (model, table, true)
        }
        None => {
            let model = fit_knn(train.rows(), cfg.k)?;
            let table = calibrate(&model, cal.rows(), cfg.conformal)?;
            (model, table, false)
        }
    };
    stage.put(MODEL, model.to_json()?.into_bytes())?;
    let table_value: serde_json::Value = serde_json::from_str(&table.to_json()?)?;
    stage.json(
        CALIBRATION,
        &CalibrationArtifact {
            key,
            table: table_value,
        },
    )?;

    let pvals = p_values_batch(&table, &model, test.rows())?;
    let truth: Vec<Label> = test.rows().iter().map(|r| r.label()).collect();
    let ids: Vec<String> = test
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{}/{}", r.disk_index, i))
        .collect();
    stage.csv(PVALUES, |w| {
        write_pvalues_csv(&ids, &pvals, Some(&truth), w)
    })?;
    let coverage = coverage_from_pvalues(&pvals, &truth, &cfg.epsilons)?;
    stage.csv(COVERAGE, |w| write_coverage_csv(&coverage, w))?;

    let knn_pred = model.predict_proba_batch(test.rows())?;
    let confusion = ConfusionSummary {
        knn: ConfusionMatrix::from_pairs(
            truth
                .iter()
                .copied()
                .zip(knn_pred.iter().map(|p| p.argmax())),
        ),
        conformal: ConfusionMatrix::from_pairs(
            truth
                .iter()
                .copied()
                .zip(pvals.iter().map(|p| confidence_credibility(p).point_label)),
        ),
    };
    stage.csv(CONFUSION_CSV, |w| {
        write_confusion_csv(&confusion.knn, &confusion.conformal, w)
    })?;
    stage.json(CONFUSION_JSON, &confusion)?;

    let fleet_table = match cfg.artifact(FLEET) {
        p if p.exists() => load_samples(&p)?,
        _ => test,
    };
    let latest = fleet_table.latest_per_disk();
    let fleet_pvals = p_values_batch(&table, &model, &latest)?;
    let healths: Vec<_> = latest
        .iter()
        .zip(&fleet_pvals)
        .map(|(s, pv)| score_disk(s.disk_index, pv, &policy))
        .collect();
    let report = selection_summary(&healths, &policy, &cfg.report_buckets)?;
    let health = HealthSummary::of(&report);
    stage.csv(HEALTH, |w| write_health_csv(&report, w))?;
    stage.json(HEALTH_SUMMARY, &health)?;
    stage.finish()?;
    log::info!(
        "selected {} of {} disks for scrubbing ({:.3}%)",
        health.selected_count,
        health.fleet_size,
        100.0 * health.selected_fraction
    );
    Ok(ScoreSummary {
        test_rows: truth.len(),
        reused_calibration: reused,
        confusion,
        health,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastArtifact {
    pub fuzzy_sets: usize,
    pub horizon: usize,
    pub disk_busy: ForecastDistribution<f64>,
    pub cpu_busy: Option<ForecastDistribution<f64>>,
    /// Hour-wise maximum of the point forecasts; what the scheduler plans against.
    pub outlook: UtilizationOutlook,
}

/// Forecasts utilization over the next scheduling window.
pub fn forecast(cfg: &PipelineConfig) -> Result<ForecastArtifact> {
    let mut stage = Stage::begin(cfg, "forecast")?;
    let horizon = cfg.scheduler.horizon_hours;
    let run = |name: &str, source| -> Result<ForecastDistribution<f64>> {
        let path = require(cfg, name)?;
        let series = load_series(&path, source)?;
        let model = fit_pwfts(&series, cfg.fuzzy_sets).map_err(|e| e.in_file(&path))?;
        forecast_series(&model, &series, horizon).map_err(|e| e.in_file(&path))
    };
    let disk_busy = run(DISK_BUSY, UtilizationSource::DiskBusy)?;
    stage.csv(FORECAST_DISK_BUSY, |w| write_forecast_csv(&disk_busy, w))?;
    let cpu_busy = if cfg.artifact(CPU_BUSY).exists() {
        let d = run(CPU_BUSY, UtilizationSource::CpuBusy)?;
        stage.csv(FORECAST_CPU_BUSY, |w| write_forecast_csv(&d, w))?;
        Some(d)
    } else {
        stage.remove(FORECAST_CPU_BUSY)?;
        None
    };
    let mut outlooks = vec![UtilizationOutlook::from_distribution(&disk_busy)];
    outlooks.extend(cpu_busy.as_ref().map(UtilizationOutlook::from_distribution));
    let artifact = ForecastArtifact {
        fuzzy_sets: cfg.fuzzy_sets,
        horizon,
        outlook: UtilizationOutlook::max_of(&outlooks)?,
        disk_busy,
        cpu_busy,
    };
    stage.json(FORECAST, &artifact)?;
    stage.finish()?;
    Ok(artifact)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    pub schedule: ScrubSchedule,
    pub energy: EnergyReport,
    /// Absent on a dry run.
    pub simulation: Option<SimulationReport>,
}

impl ScheduleOutcome {
    pub fn warning(&self) -> Option<ScheduleWarning> {
        self.schedule.warning
    }
}

/// Places today's due concern disks into forecast idle hours and, unless
/// dry-running, replays the plan against observed utilization.
pub fn schedule(cfg: &PipelineConfig) -> Result<ScheduleOutcome> {
    let mut stage = Stage::begin(cfg, "schedule")?;
    let summary_path = require(cfg, HEALTH_SUMMARY)?;
    let summary: HealthSummary = read_json(&summary_path).map_err(|e| e.in_file(&summary_path))?;
    let health_path = require(cfg, HEALTH)?;
    let file = std::fs::File::open(&health_path).map_err(|e| Error::io(&health_path, e))?;
    let records = read_health_csv(file).map_err(|e| e.in_file(&health_path))?;
    let report = summary
        .rebuild(records)
        .map_err(|e| e.in_file(&health_path))?;

    let forecast_path = require(cfg, FORECAST)?;
    let fc: ForecastArtifact = read_json(&forecast_path).map_err(|e| e.in_file(&forecast_path))?;
    let ledger = match &cfg.ledger {
        Some(p) => {
            stage.input("ledger", p);
            read_json::<DueLedger>(p).map_err(|e| e.in_file(p))?
        }
        None => DueLedger::default(),
    };
    let schedule = build_schedule(&report, &fc.outlook, &cfg.scheduler, cfg.day, &ledger)?;
    if schedule.warning == Some(ScheduleWarning::NoIdleWindow) {
        log::warn!(
            "no forecast idle hour in the {}-hour window; {} disks deferred",
            schedule.horizon_hours,
            schedule.deferred.len()
        );
    }
    let energy = energy_for_counts(report.selected_count, report.fleet_size(), &cfg.scheduler);
    stage.csv(SCHEDULE_CSV, |w| write_schedule_csv(&schedule, w))?;
    stage.json(SCHEDULE_JSON, &schedule)?;
    stage.json(NEXT_DUE, &schedule.next_due)?;
    stage.json(ENERGY, &energy)?;

    let simulation = if cfg.dry_run {
        stage.remove(SIMULATION)?;
        None
    } else {
        let actual = match &cfg.actual_utilization {
            Some(p) => {
                stage.input("actual_utilization", p);
                let schema = cfg.schema()?;
                parse_utilization_log(p, &schema.utilization, UtilizationSource::DiskBusy)
                    .map_err(|e| e.in_file(p))?
            }
            None => {
                let p = cfg.artifact(ACTUAL_UTILIZATION);
                if !p.exists() {
                    return Err(Error::InvalidConfig(
                        "simulation needs observed utilization; supply it or use a dry run".into(),
                    ));
                }
                load_series(&p, UtilizationSource::DiskBusy)?
            }
        };
        let sim = simulate(&schedule, &actual, &cfg.scheduler)?;
        for n in &sim.interrupted {
            log::debug!("{}", n.message);
        }
        if !sim.interrupted.is_empty() {
            log::warn!(
                "{} of {} scrubs interrupted by load; details in {SIMULATION}",
                sim.interrupted.len(),
                sim.interrupted.len() + sim.completed.len()
            );
        }
        stage.json(SIMULATION, &sim)?;
        Some(sim)
    };
    stage.finish()?;
    Ok(ScheduleOutcome {
        schedule,
        energy,
        simulation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleStats {
    pub day: i64,
    pub window_start_hour: i64,
    pub assigned: usize,
    pub deferred: usize,
    pub warning: Option<ScheduleWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationStats {
    pub completed: usize,
    pub interrupted: usize,
    pub energy_wh_spent: f64,
}

/// Fleet-level digest of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub fleet_size: usize,
    pub selected_count: usize,
    pub skipped_count: usize,
    pub replacement_count: usize,
    pub selected_fraction: f64,
    pub healthy_floor: f64,
    pub buckets: Vec<BucketCount>,
    pub below_lowest_bucket: usize,
    pub minority_recall: Option<MinorityRecall>,
    pub energy: EnergyReport,
    pub schedule: Option<ScheduleStats>,
    pub simulation: Option<SimulationStats>,
}

/// Recall of the failed class for both point predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinorityRecall {
    pub knn: f64,
    pub conformal: f64,
}

fn optional_json<T: serde::de::DeserializeOwned>(
    cfg: &PipelineConfig,
    name: &str,
) -> Result<Option<T>> {
    let p = cfg.artifact(name);
    if p.exists() {
        read_json(&p).map(Some).map_err(|e| e.in_file(&p))
    } else {
        Ok(None)
    }
}

/// Collects the stage outputs into `report.json`.
pub fn report(cfg: &PipelineConfig) -> Result<RunReport> {
    let mut stage = Stage::begin(cfg, "report")?;
    let summary_path = require(cfg, HEALTH_SUMMARY)?;
    let h: HealthSummary = read_json(&summary_path).map_err(|e| e.in_file(&summary_path))?;
    let confusion: Option<ConfusionSummary> = optional_json(cfg, CONFUSION_JSON)?;
    let schedule: Option<ScrubSchedule> = optional_json(cfg, SCHEDULE_JSON)?;
    let simulation: Option<SimulationReport> = optional_json(cfg, SIMULATION)?;
    let out = RunReport {
        fleet_size: h.fleet_size,
        selected_count: h.selected_count,
        skipped_count: h.skipped_count,
        replacement_count: h.replacement_count,
        selected_fraction: h.selected_fraction,
        healthy_floor: h.healthy_floor,
        below_lowest_bucket: h.below_lowest_bucket,
        minority_recall: confusion.map(|c| MinorityRecall {
            knn: c.knn.recall(Label::Failed),
            conformal: c.conformal.recall(Label::Failed),
        }),
        energy: energy_for_counts(h.selected_count, h.fleet_size, &cfg.scheduler),
        schedule: schedule.map(|s| ScheduleStats {
            day: s.day,
            window_start_hour: s.window_start_hour,
            assigned: s.assignments.len(),
            deferred: s.deferred.len(),
            warning: s.warning,
        }),
        simulation: simulation.map(|s| SimulationStats {
            completed: s.completed.len(),
            interrupted: s.interrupted.len(),
            energy_wh_spent: s.energy_wh_spent,
        }),
        buckets: h.buckets,
    };
    stage.json(REPORT, &out)?;
    stage.finish()?;
    Ok(out)
}

/// Every stage in order. Forecasting and scheduling run only when a
/// disk-busy log is configured.
pub fn run_all(cfg: &PipelineConfig) -> Result<RunReport> {
    ingest(cfg)?;
    score(cfg)?;
    if cfg.disk_busy.is_some() {
        forecast(cfg)?;
        schedule(cfg)?;
    }
    report(cfg)
}
