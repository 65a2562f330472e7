//! SMART telemetry and utilization-log ingestion, plus disk-level splitting.
//!
//! The default SMART layout has 14 columns: disk index, ten manufacturer
//! normalized attribute values (IDs 1, 3, 5, 7, 9, 187, 189, 194, 195, 197),
//! the raw counters of IDs 5 and 197, and the class label (0 failed,
//! 1 functional). Other fleets can be read by supplying a [`SmartSchema`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, Labeled};
use crate::scalar::Scalar;

/// SMART attribute IDs of the normalized feature columns in the default layout.
pub const NORMALIZED_SMART_IDS: [u16; 10] = [1, 3, 5, 7, 9, 187, 189, 194, 195, 197];
/// SMART attribute IDs whose raw counters follow the normalized values.
pub const RAW_SMART_IDS: [u16; 2] = [5, 197];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskSample<T> {
    pub disk_index: u64,
    /// Normalized SMART values followed by raw counters, in schema order.
    pub features: Vec<T>,
    pub label: Label,
    pub bms_error_count: Option<u64>,
    pub timestamp_hour: Option<i64>,
}

impl<T> DiskSample<T> {
    /// The manufacturer-normalized values under the default layout.
    pub fn smart_values(&self) -> &[T] {
        let n = self.features.len().min(NORMALIZED_SMART_IDS.len());
        &self.features[..n]
    }

    /// The raw sector counters under the default layout.
    pub fn raw_values(&self) -> &[T] {
        let n = NORMALIZED_SMART_IDS.len().min(self.features.len());
        &self.features[n..]
    }
}

impl<T> Labeled<T> for DiskSample<T> {
    fn features(&self) -> &[T] {
        &self.features
    }

    fn label(&self) -> Label {
        self.label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiskSampleTable<T> {
    rows: Vec<DiskSample<T>>,
    disk_count: usize,
    failed_disk_count: usize,
}

impl<T> DiskSampleTable<T> {
    pub fn new(rows: Vec<DiskSample<T>>) -> Self {
        let mut all_failed: BTreeMap<u64, bool> = BTreeMap::new();
        for r in &rows {
            let e = all_failed.entry(r.disk_index).or_insert(true);
            *e &= r.label == Label::Failed;
        }
        let failed_disk_count = all_failed.values().filter(|f| **f).count();
        Self {
            disk_count: all_failed.len(),
            failed_disk_count,
            rows,
        }
    }

    pub fn rows(&self) -> &[DiskSample<T>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<DiskSample<T>> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn disk_count(&self) -> usize {
        self.disk_count
    }

    /// Disks whose every row is labeled failed.
    pub fn failed_disk_count(&self) -> usize {
        self.failed_disk_count
    }

    pub fn feature_dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.features.len())
    }

    /// Disk-level labels: a disk is failed if any of its rows is failed.
    pub fn disk_labels(&self) -> BTreeMap<u64, Label> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            let e = out.entry(r.disk_index).or_insert(Label::Functional);
            if r.label == Label::Failed {
                *e = Label::Failed;
            }
        }
        out
    }

    pub fn disk_indices(&self) -> BTreeSet<u64> {
        self.rows.iter().map(|r| r.disk_index).collect()
    }

    /// Most recent row of every disk: greatest timestamp, falling back to the
    /// last row in file order when timestamps are absent or tied.
    pub fn latest_per_disk(&self) -> Vec<&DiskSample<T>> {
        let mut latest: BTreeMap<u64, &DiskSample<T>> = BTreeMap::new();
        for r in &self.rows {
            match latest.get(&r.disk_index) {
                Some(prev) if prev.timestamp_hour > r.timestamp_hour => {}
                _ => {
                    latest.insert(r.disk_index, r);
                }
            }
        }
        latest.into_values().collect()
    }
}

/// Column positions (zero-based) of a SMART telemetry file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmartSchema {
    pub columns: usize,
    pub disk_index: usize,
    pub features: Vec<usize>,
    pub label: usize,
    #[serde(default)]
    pub bms_error_count: Option<usize>,
    #[serde(default)]
    pub timestamp_hour: Option<usize>,
}

impl Default for SmartSchema {
    fn default() -> Self {
        Self {
            columns: 14,
            disk_index: 0,
            features: (1..13).collect(),
            label: 13,
            bms_error_count: None,
            timestamp_hour: None,
        }
    }
}

impl SmartSchema {
    /// Layout written by [`write_smart_csv`]: index, features, label, BMS count, timestamp.
    pub fn canonical(feature_count: usize) -> Self {
        Self {
            columns: feature_count + 4,
            disk_index: 0,
            features: (1..=feature_count).collect(),
            label: feature_count + 1,
            bms_error_count: Some(feature_count + 2),
            timestamp_hour: Some(feature_count + 3),
        }
    }

    fn validate(&self) -> Result<()> {
        let mut used = vec![self.disk_index, self.label];
        used.extend(&self.features);
        used.extend(self.bms_error_count);
        used.extend(self.timestamp_hour);
        let distinct: BTreeSet<_> = used.iter().collect();
        if distinct.len() != used.len() {
            return Err(Error::InvalidConfig("schema maps a column twice".into()));
        }
        if used.iter().any(|c| *c >= self.columns) {
            return Err(Error::InvalidConfig(format!(
                "schema references a column beyond {}",
                self.columns
            )));
        }
        if self.features.is_empty() {
            return Err(Error::InvalidConfig(
                "schema lists no feature columns".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilizationSchema {
    pub columns: usize,
    pub hour: usize,
    pub utilization: usize,
}

impl Default for UtilizationSchema {
    fn default() -> Self {
        Self {
            columns: 2,
            hour: 0,
            utilization: 1,
        }
    }
}

/// JSON document accepted by `--schema`; absent sections keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDescriptor {
    #[serde(default)]
    pub smart: SmartSchema,
    #[serde(default)]
    pub utilization: UtilizationSchema,
}

impl SchemaDescriptor {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(rdr)
}

fn looks_like_header(record: &csv::StringRecord) -> bool {
    record
        .get(0)
        .is_some_and(|f| !f.is_empty() && f.parse::<f64>().is_err())
}

fn malformed(line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn parse_integer(field: &str, line: usize, what: &str) -> Result<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Ok(v);
    }
    match field.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(malformed(
            line,
            format!("{what} `{field}` is not an integer"),
        )),
    }
}

fn parse_real<T: Scalar>(field: &str, line: usize, what: &str) -> Result<T> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(T::of(v)),
        _ => Err(malformed(
            line,
            format!("{what} `{field}` is not a finite number"),
        )),
    }
}

pub fn parse_smart_dataset<T: Scalar>(
    path: &Path,
    schema: &SmartSchema,
) -> Result<DiskSampleTable<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_smart_csv(file, schema)
}

pub fn read_smart_csv<T: Scalar, R: Read>(
    rdr: R,
    schema: &SmartSchema,
) -> Result<DiskSampleTable<T>> {
    schema.validate()?;
    let mut rows = Vec::new();
    for (i, rec) in csv_reader(rdr).records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && looks_like_header(&rec) {
            continue;
        }
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != schema.columns {
            return Err(malformed(
                line,
                format!("expected {} fields, found {}", schema.columns, rec.len()),
            ));
        }
        let disk_index = parse_integer(&rec[schema.disk_index], line, "disk index")?;
        if disk_index < 1 {
            return Err(malformed(
                line,
                format!("disk index {disk_index} must be >= 1"),
            ));
        }
        let features = schema
            .features
            .iter()
            .map(|&c| parse_real(&rec[c], line, "feature"))
            .collect::<Result<Vec<T>>>()?;
        let label = match parse_integer(&rec[schema.label], line, "label")? {
            0 => Label::Failed,
            1 => Label::Functional,
            other => return Err(malformed(line, format!("label {other} is not 0 or 1"))),
        };
        let optional = |col: Option<usize>, what: &str| -> Result<Option<i64>> {
            match col.map(|c| &rec[c]) {
                None | Some("") => Ok(None),
                Some(f) => parse_integer(f, line, what).map(Some),
            }
        };
        let bms_error_count = match optional(schema.bms_error_count, "BMS error count")? {
            Some(v) if v < 0 => return Err(malformed(line, "BMS error count is negative")),
            v => v.map(|v| v as u64),
        };
        let timestamp_hour = optional(schema.timestamp_hour, "timestamp")?;
        rows.push(DiskSample {
            disk_index: disk_index as u64,
            features,
            label,
            bms_error_count,
            timestamp_hour,
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(DiskSampleTable::new(rows))
}

/// Writes the canonical layout described by [`SmartSchema::canonical`], with a header row.
pub fn write_smart_csv<T: Scalar, W: Write>(table: &DiskSampleTable<T>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let n = table.feature_dim();
    let mut header = vec!["disk_index".to_string()];
    header.extend((1..=n).map(|i| format!("f{i}")));
    header.extend(["label", "bms_error_count", "timestamp_hour"].map(String::from));
    out.write_record(&header)?;
    for r in table.rows() {
        let mut rec = Vec::with_capacity(n + 4);
        rec.push(r.disk_index.to_string());
        rec.extend(r.features.iter().map(|v| v.to_string()));
        rec.push(r.label.to_string());
        rec.push(r.bms_error_count.map(|v| v.to_string()).unwrap_or_default());
        rec.push(r.timestamp_hour.map(|v| v.to_string()).unwrap_or_default());
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilizationSource {
    #[default]
    DiskBusy,
    CpuBusy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationSeries<T> {
    samples: Vec<(i64, T)>,
    pub source: UtilizationSource,
}

impl<T: Scalar> UtilizationSeries<T> {
    /// Validates ordering and range; line numbers in errors are 1-based sample positions.
    pub fn new(samples: Vec<(i64, T)>, source: UtilizationSource) -> Result<Self> {
        for (i, (hour, pct)) in samples.iter().enumerate() {
            if !(*pct >= T::zero() && *pct <= T::of(100.0)) {
                return Err(Error::OutOfRange {
                    line: i + 1,
                    value: pct.as_f64(),
                });
            }
            if i > 0 && *hour <= samples[i - 1].0 {
                return Err(Error::NonMonotonicTime {
                    line: i + 1,
                    hour: *hour,
                });
            }
        }
        Ok(Self { samples, source })
    }

    pub fn samples(&self) -> &[(i64, T)] {
        &self.samples
    }

    pub fn values(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.1).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn at_hour(&self, hour: i64) -> Option<T> {
        self.samples
            .binary_search_by_key(&hour, |s| s.0)
            .ok()
            .map(|i| self.samples[i].1)
    }

    pub fn last(&self) -> Option<(i64, T)> {
        self.samples.last().copied()
    }
}

pub fn parse_utilization_log<T: Scalar>(
    path: &Path,
    schema: &UtilizationSchema,
    source: UtilizationSource,
) -> Result<UtilizationSeries<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_utilization_csv(file, schema, source)
}

pub fn read_utilization_csv<T: Scalar, R: Read>(
    rdr: R,
    schema: &UtilizationSchema,
    source: UtilizationSource,
) -> Result<UtilizationSeries<T>> {
    let mut samples: Vec<(i64, T)> = Vec::new();
    for (i, rec) in csv_reader(rdr).records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && looks_like_header(&rec) {
            continue;
        }
        if rec.len() != schema.columns {
            return Err(malformed(
                line,
                format!("expected {} fields, found {}", schema.columns, rec.len()),
            ));
        }
        let hour = parse_integer(&rec[schema.hour], line, "hour index")?;
        let pct: T = parse_real(&rec[schema.utilization], line, "utilization")?;
        if !(pct >= T::zero() && pct <= T::of(100.0)) {
            return Err(Error::OutOfRange {
                line,
                value: pct.as_f64(),
            });
        }
        if samples.last().is_some_and(|(h, _)| hour <= *h) {
            return Err(Error::NonMonotonicTime { line, hour });
        }
        samples.push((hour, pct));
    }
    if samples.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(UtilizationSeries { samples, source })
}

pub fn write_utilization_csv<T: Scalar, W: Write>(
    series: &UtilizationSeries<T>,
    w: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["hour_index", "utilization_pct"])?;
    for (h, v) in series.samples() {
        out.write_record([h.to_string(), v.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub proper_train_fraction: f64,
    pub calibration_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            proper_train_fraction: 0.5,
            calibration_fraction: 0.25,
            test_fraction: 0.25,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(train: f64, calibration: f64, test: f64, seed: u64) -> Result<Self> {
        let s = Self {
            proper_train_fraction: train,
            calibration_fraction: calibration,
            test_fraction: test,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::InvalidSplit(format!(
                "fractions {f:?} must lie in (0, 1)"
            )));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSplit(format!(
                "fractions {f:?} must sum to 1"
            )));
        }
        Ok(())
    }

    fn fractions(&self) -> [f64; 3] {
        [
            self.proper_train_fraction,
            self.calibration_fraction,
            self.test_fraction,
        ]
    }
}

/// Largest-remainder apportionment of `n` items over `fractions`.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let quotas = fractions.map(|f| f * n as f64);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Disk-level stratified split into (proper train, calibration, test).
///
/// Global partition sizes are apportioned first; the rarer class is then
/// apportioned with at least one disk per partition and the majority class
/// fills the remainder, so both classes reach every partition.
pub fn split_dataset<T: Clone>(
    table: &DiskSampleTable<T>,
    spec: &SplitSpec,
) -> Result<(DiskSampleTable<T>, DiskSampleTable<T>, DiskSampleTable<T>)> {
    spec.validate()?;
    if table.is_empty() {
        return Err(Error::EmptyFile);
    }
    let labels = table.disk_labels();
    let mut by_class: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
    for (disk, label) in &labels {
        by_class[label.index()].push(*disk);
    }
    for class in Label::ALL {
        if by_class[class.index()].len() < 3 {
            return Err(Error::ClassAbsent(class));
        }
    }
    let fractions = spec.fractions();
    let totals = apportion(labels.len(), &fractions);
    let minority = if by_class[0].len() <= by_class[1].len() {
        Label::Failed
    } else {
        Label::Functional
    };
    let mut minor = apportion(by_class[minority.index()].len(), &fractions);
    for p in 0..3 {
        if minor[p] == 0 {
            let donor = (0..3)
                .max_by_key(|&i| (minor[i], std::cmp::Reverse(i)))
                .unwrap();
            minor[donor] -= 1;
            minor[p] += 1;
        }
    }
    let mut major = [0usize; 3];
    for p in 0..3 {
        major[p] = totals[p]
            .checked_sub(minor[p])
            .filter(|v| *v > 0)
            .ok_or(Error::ClassAbsent(minority.other()))?;
    }
    let mut per_class = [[0usize; 3]; 2];
    per_class[minority.index()] = minor;
    per_class[minority.other().index()] = major;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut assignment: BTreeMap<u64, usize> = BTreeMap::new();
    for class in Label::ALL {
        let disks = &mut by_class[class.index()];
        disks.shuffle(&mut rng);
        let counts = per_class[class.index()];
        let mut it = disks.iter();
        for (part, &count) in counts.iter().enumerate() {
            for disk in it.by_ref().take(count) {
                assignment.insert(*disk, part);
            }
        }
    }
    let mut parts: [Vec<DiskSample<T>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for row in table.rows() {
        parts[assignment[&row.disk_index]].push(row.clone());
    }
    let [train, cal, test] = parts;
    Ok((
        DiskSampleTable::new(train),
        DiskSampleTable::new(cal),
        DiskSampleTable::new(test),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_text(disk: u64, label: u8) -> String {
        let feats: Vec<String> = (0..12).map(|i| format!("{}", 100 + i)).collect();
        format!("{disk},{},{label}\n", feats.join(","))
    }

    fn fleet(failed: u64, functional: u64, rows_per_disk: usize) -> DiskSampleTable<f64> {
        let mut rows = Vec::new();
        for d in 1..=failed + functional {
            let label = if d <= failed {
                Label::Failed
            } else {
                Label::Functional
            };
            for t in 0..rows_per_disk {
                rows.push(DiskSample {
                    disk_index: d,
                    features: vec![d as f64; 12],
                    label,
                    bms_error_count: None,
                    timestamp_hour: Some(t as i64),
                });
            }
        }
        DiskSampleTable::new(rows)
    }

    #[test]
    fn parses_default_layout_row() {
        let text = row_text(1, 1);
        let t: DiskSampleTable<f64> =
            read_smart_csv(text.as_bytes(), &SmartSchema::default()).unwrap();
        let r = &t.rows()[0];
        assert_eq!(r.disk_index, 1);
        assert_eq!(r.label, Label::Functional);
        assert_eq!(r.smart_values().len(), 10);
        assert_eq!(r.raw_values(), &[110.0, 111.0]);
    }

    #[test]
    fn header_is_auto_detected() {
        let text = format!("index,a,b,c,d,e,f,g,h,i,j,k,l,label\n{}", row_text(3, 0));
        let t: DiskSampleTable<f64> =
            read_smart_csv(text.as_bytes(), &SmartSchema::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.failed_disk_count(), 1);
    }

    #[test]
    fn empty_file_is_rejected() {
        let r: Result<DiskSampleTable<f64>> =
            read_smart_csv("".as_bytes(), &SmartSchema::default());
        assert!(matches!(r, Err(Error::EmptyFile)));
    }

    #[test]
    fn wrong_arity_reports_line() {
        let text = format!("{}1,2,3\n", row_text(1, 1));
        let r: Result<DiskSampleTable<f64>> =
            read_smart_csv(text.as_bytes(), &SmartSchema::default());
        assert!(
            matches!(r, Err(Error::MalformedRow { line: 2, .. })),
            "{r:?}"
        );
    }

    #[test]
    fn non_numeric_field_is_rejected() {
        let text = row_text(1, 1).replace("105", "oops");
        let r: Result<DiskSampleTable<f64>> =
            read_smart_csv(text.as_bytes(), &SmartSchema::default());
        assert!(matches!(r, Err(Error::MalformedRow { line: 1, .. })));
    }

    #[test]
    fn bad_label_and_index_are_rejected() {
        let r: Result<DiskSampleTable<f64>> =
            read_smart_csv(row_text(1, 2).as_bytes(), &SmartSchema::default());
        assert!(matches!(r, Err(Error::MalformedRow { .. })));
        let r: Result<DiskSampleTable<f64>> =
            read_smart_csv(row_text(0, 1).as_bytes(), &SmartSchema::default());
        assert!(matches!(r, Err(Error::MalformedRow { .. })));
    }

    #[test]
    fn custom_schema_reads_optional_columns() {
        let schema = SmartSchema {
            columns: 5,
            disk_index: 1,
            features: vec![2, 3],
            label: 0,
            bms_error_count: Some(4),
            timestamp_hour: None,
        };
        let t: DiskSampleTable<f32> =
            read_smart_csv("1,7,0.5,2.5,3\n0,8,1,1,\n".as_bytes(), &schema).unwrap();
        assert_eq!(t.rows()[0].bms_error_count, Some(3));
        assert_eq!(t.rows()[1].bms_error_count, None);
        assert_eq!(t.rows()[1].label, Label::Failed);
        assert_eq!(t.disk_count(), 2);
    }

    #[test]
    fn failed_count_requires_every_row_failed() {
        let mut t = fleet(2, 3, 2).into_rows();
        t[0].label = Label::Functional;
        let t = DiskSampleTable::new(t);
        assert_eq!(t.failed_disk_count(), 1);
        assert_eq!(t.disk_labels()[&1], Label::Failed);
    }

    #[test]
    fn latest_per_disk_prefers_timestamp_then_file_order() {
        let mut rows = fleet(0, 1, 3).into_rows();
        rows[0].timestamp_hour = Some(10);
        rows[0].features[0] = -1.0;
        let t = DiskSampleTable::new(rows);
        assert_eq!(t.latest_per_disk()[0].features[0], -1.0);

        let mut rows = fleet(0, 1, 3).into_rows();
        for r in rows.iter_mut() {
            r.timestamp_hour = None;
        }
        rows[2].features[0] = 42.0;
        let t = DiskSampleTable::new(rows);
        assert_eq!(t.latest_per_disk()[0].features[0], 42.0);
    }

    #[test]
    fn utilization_well_formed() {
        let s: UtilizationSeries<f64> = read_utilization_csv(
            "0,30.0\n1,45.5\n".as_bytes(),
            &Default::default(),
            UtilizationSource::CpuBusy,
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.at_hour(1), Some(45.5));
    }

    #[test]
    fn utilization_duplicate_hour() {
        let r: Result<UtilizationSeries<f64>> = read_utilization_csv(
            "0,30.0\n0,40.0\n".as_bytes(),
            &Default::default(),
            Default::default(),
        );
        assert!(matches!(
            r,
            Err(Error::NonMonotonicTime { line: 2, hour: 0 })
        ));
    }

    #[test]
    fn utilization_out_of_range() {
        let r: Result<UtilizationSeries<f64>> = read_utilization_csv(
            "0,101.0\n".as_bytes(),
            &Default::default(),
            Default::default(),
        );
        assert!(matches!(r, Err(Error::OutOfRange { value, .. }) if value == 101.0));
        let r = UtilizationSeries::new(vec![(0, -0.5)], UtilizationSource::DiskBusy);
        assert!(matches!(r, Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn split_ten_disks_is_six_two_two_and_deterministic() {
        let t = fleet(3, 7, 2);
        let spec = SplitSpec::new(0.6, 0.2, 0.2, 7).unwrap();
        let (a, b, c) = split_dataset(&t, &spec).unwrap();
        assert_eq!((a.disk_count(), b.disk_count(), c.disk_count()), (6, 2, 2));
        let again = split_dataset(&t, &spec).unwrap();
        assert_eq!(again.0, a);
        assert_eq!(again.1, b);
        assert_eq!(again.2, c);
        for part in [&a, &b, &c] {
            assert!(part.failed_disk_count() > 0);
            assert!(part.disk_count() > part.failed_disk_count());
        }
    }

    #[test]
    fn split_single_class_is_class_absent() {
        let t = fleet(0, 10, 1);
        let r = split_dataset(&t, &SplitSpec::default());
        assert!(matches!(r, Err(Error::ClassAbsent(Label::Failed))));
    }

    #[test]
    fn split_spec_must_sum_to_one() {
        assert!(SplitSpec::new(0.5, 0.3, 0.3, 0).is_err());
        assert!(SplitSpec::new(0.5, 0.5, 0.0, 0).is_err());
    }

    #[test]
    fn split_keeps_disks_whole() {
        let t = fleet(40, 400, 3);
        let (a, b, c) = split_dataset(&t, &SplitSpec::default()).unwrap();
        let (da, db, dc) = (a.disk_indices(), b.disk_indices(), c.disk_indices());
        assert!(da.is_disjoint(&db) && da.is_disjoint(&dc) && db.is_disjoint(&dc));
        assert_eq!(da.len() + db.len() + dc.len(), 440);
        assert_eq!(a.len() + b.len() + c.len(), t.len());
        assert_eq!(a.len(), 3 * a.disk_count());
    }
}
