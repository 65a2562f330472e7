//! Disk health scores, the concern / no-concern partition and scrub-cycle bands.
//!
//! A disk's health score is the confidence of its conformal prediction.
//! Disks predicted failed go to replacement. Functional disks scoring at or
//! above the healthy floor (`1 - threshold`) are left alone. The rest are
//! concern disks, which get a scrub cycle from the band their score falls in.

use std::cmp::Ordering;
use std::fmt;

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::conformal::{confidence_credibility, PValue, PValueVector};
use crate::error::{Error, Result};
use crate::label::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScrubCycle {
    /// Low scrub frequency.
    #[serde(rename = "A")]
    ALow,
    #[serde(rename = "B")]
    BMedium,
    /// High scrub frequency.
    #[serde(rename = "C")]
    CHigh,
    #[serde(rename = "none")]
    None,
}

impl ScrubCycle {
    pub fn default_period_days(self) -> Option<u32> {
        match self {
            ScrubCycle::ALow => Some(90),
            ScrubCycle::BMedium => Some(30),
            ScrubCycle::CHigh => Some(7),
            ScrubCycle::None => None,
        }
    }

    pub fn frequency(self) -> &'static str {
        match self {
            ScrubCycle::ALow => "LOW",
            ScrubCycle::BMedium => "MEDIUM",
            ScrubCycle::CHigh => "HIGH",
            ScrubCycle::None => "NONE",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            ScrubCycle::ALow => "A",
            ScrubCycle::BMedium => "B",
            ScrubCycle::CHigh => "C",
            ScrubCycle::None => "none",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        match s {
            "A" => Some(ScrubCycle::ALow),
            "B" => Some(ScrubCycle::BMedium),
            "C" => Some(ScrubCycle::CHigh),
            "none" => Some(ScrubCycle::None),
            _ => None,
        }
    }
}

impl fmt::Display for ScrubCycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// `[lo, hi)`, or `[lo, hi]` when `closed_hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreInterval {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub closed_hi: bool,
}

impl ScoreInterval {
    pub const fn half_open(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            closed_hi: false,
        }
    }

    pub const fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            closed_hi: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && (x < self.hi || (self.closed_hi && x == self.hi))
    }
}

impl fmt::Display for ScoreInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let close = if self.closed_hi { ']' } else { ')' };
        write!(f, "[{}, {}{close}", self.lo, self.hi)
    }
}

/// Health-score intervals of the default selection report.
pub fn default_report_buckets() -> Vec<ScoreInterval> {
    vec![
        ScoreInterval::half_open(0.998, 0.9985),
        ScoreInterval::half_open(0.9985, 0.999),
        ScoreInterval::half_open(0.999, 0.9995),
        ScoreInterval::closed(0.9995, 1.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleBand {
    pub interval: ScoreInterval,
    pub cycle: ScrubCycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    /// Administrator's significance level, e.g. 0.01.
    pub threshold: f64,
    /// Scores at or above this are healthy enough to skip. Normally `1 - threshold`.
    pub healthy_floor: f64,
    /// Ascending, contiguous bands covering `[0, healthy_floor)`.
    pub bands: Vec<CycleBand>,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self::with_threshold(0.01).expect("default policy is valid")
    }
}

impl ThresholdPolicy {
    /// Default bands: `< 0.80` high, `[0.80, 0.95)` medium, `[0.95, floor)` low frequency.
    pub fn with_threshold(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidPolicy(format!(
                "threshold {threshold} outside (0, 1)"
            )));
        }
        Self::with_floor(1.0 - threshold)
    }

    /// Builds the default bands against an explicit healthy floor, e.g. `0.999`.
    /// Bands are clipped to the floor; any left empty are dropped.
    pub fn with_floor(healthy_floor: f64) -> Result<Self> {
        let defaults = [
            (0.0, 0.80, ScrubCycle::CHigh),
            (0.80, 0.95, ScrubCycle::BMedium),
            (0.95, healthy_floor, ScrubCycle::ALow),
        ];
        let bands = defaults
            .into_iter()
            .filter(|(lo, _, _)| *lo < healthy_floor)
            .map(|(lo, hi, cycle)| CycleBand {
                interval: ScoreInterval::half_open(lo, f64::min(hi, healthy_floor)),
                cycle,
            })
            .collect();
        Self::new(1.0 - healthy_floor, healthy_floor, bands)
    }

    pub fn new(threshold: f64, healthy_floor: f64, bands: Vec<CycleBand>) -> Result<Self> {
        let p = Self {
            threshold,
            healthy_floor,
            bands,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPolicy(m));
        if !(self.healthy_floor > 0.0 && self.healthy_floor < 1.0) {
            return bad(format!(
                "healthy floor {} outside (0, 1)",
                self.healthy_floor
            ));
        }
        let Some(first) = self.bands.first() else {
            return bad("no cycle bands".into());
        };
        if first.interval.lo != 0.0 {
            return bad("bands must start at 0".into());
        }
        for w in self.bands.windows(2) {
            if w[0].interval.hi != w[1].interval.lo {
                return bad(format!(
                    "bands {} and {} are not contiguous",
                    w[0].interval, w[1].interval
                ));
            }
        }
        for b in &self.bands {
            if !(b.interval.lo < b.interval.hi) || b.interval.closed_hi {
                return bad(format!(
                    "band {} must be a non-empty half-open interval",
                    b.interval
                ));
            }
            if b.cycle == ScrubCycle::None {
                return bad("a concern band cannot map to no cycle".into());
            }
        }
        if self.bands.last().unwrap().interval.hi != self.healthy_floor {
            return bad(format!(
                "bands must end at the healthy floor {}",
                self.healthy_floor
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    /// Predicted failed: replace, never scrub.
    Replace,
    NoConcern,
    Scrub,
}

impl Disposition {
    pub fn as_str(self) -> &'static str {
        match self {
            Disposition::Replace => "replace",
            Disposition::NoConcern => "no_concern",
            Disposition::Scrub => "scrub",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "replace" => Some(Disposition::Replace),
            "no_concern" => Some(Disposition::NoConcern),
            "scrub" => Some(Disposition::Scrub),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskHealth {
    pub disk_index: u64,
    pub point_label: Label,
    pub health_score: f64,
    pub credibility: f64,
    pub concern: bool,
}

impl DiskHealth {
    pub fn disposition(&self) -> Disposition {
        if self.point_label == Label::Failed {
            Disposition::Replace
        } else if self.concern {
            Disposition::Scrub
        } else {
            Disposition::NoConcern
        }
    }
}

fn to_f64<P: ToPrimitive>(p: P) -> f64 {
    p.to_f64().expect("p-value converts to f64")
}

pub fn score_disk<P: PValue + ToPrimitive>(
    disk_index: u64,
    pvals: &PValueVector<P>,
    policy: &ThresholdPolicy,
) -> DiskHealth {
    let cc = confidence_credibility(pvals);
    let health_score = to_f64(cc.confidence);
    let concern = cc.point_label == Label::Functional && health_score < policy.healthy_floor;
    DiskHealth {
        disk_index,
        point_label: cc.point_label,
        health_score,
        credibility: to_f64(cc.credibility),
        concern,
    }
}

pub fn map_to_cycle(health: &DiskHealth, policy: &ThresholdPolicy) -> Result<ScrubCycle> {
    if !health.concern {
        return Err(Error::NotConcern(health.disk_index));
    }
    let s = health.health_score;
    policy
        .bands
        .iter()
        .find(|b| b.interval.contains(s))
        .map(|b| b.cycle)
        .ok_or_else(|| {
            Error::InvalidPolicy(format!(
                "score {s} of disk {} falls outside every band",
                health.disk_index
            ))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskRecord {
    #[serde(flatten)]
    pub health: DiskHealth,
    pub cycle: ScrubCycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketCount {
    pub interval: ScoreInterval,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    /// One record per disk, ordered by disk index.
    pub disks: Vec<DiskRecord>,
    /// Histogram of functional-predicted disks.
    pub buckets: Vec<BucketCount>,
    pub below_lowest_bucket: usize,
    pub above_highest_bucket: usize,
    pub selected_count: usize,
    pub skipped_count: usize,
    pub replacement_count: usize,
    pub healthy_floor: f64,
    /// Concern disks, worst health first; ties by disk index.
    pub concern_ranked: Vec<u64>,
}

impl HealthReport {
    pub fn fleet_size(&self) -> usize {
        self.disks.len()
    }

    pub fn selected_fraction(&self) -> f64 {
        if self.disks.is_empty() {
            0.0
        } else {
            self.selected_count as f64 / self.disks.len() as f64
        }
    }

    pub fn record(&self, disk_index: u64) -> Option<&DiskRecord> {
        self.disks
            .binary_search_by_key(&disk_index, |d| d.health.disk_index)
            .ok()
            .map(|i| &self.disks[i])
    }

    /// Histogram mass in buckets lying entirely below `cut`.
    pub fn bucket_count_below(&self, cut: f64) -> usize {
        self.buckets
            .iter()
            .filter(|b| b.interval.hi <= cut)
            .map(|b| b.count)
            .sum()
    }

    pub fn ranked_concern(&self) -> impl Iterator<Item = &DiskRecord> {
        self.concern_ranked
            .iter()
            .map(move |d| self.record(*d).expect("ranked disk has a record"))
    }
}

fn worst_first(a: &DiskHealth, b: &DiskHealth) -> Ordering {
    a.health_score
        .total_cmp(&b.health_score)
        .then(a.disk_index.cmp(&b.disk_index))
}

/// Aggregates per-disk health into the fleet report.
///
/// Every disk lands in exactly one of replacement, no-concern or scrub.
pub fn selection_summary(
    healths: &[DiskHealth],
    policy: &ThresholdPolicy,
    buckets: &[ScoreInterval],
) -> Result<HealthReport> {
    let records = healths
        .iter()
        .map(|h| {
            let cycle = if h.concern {
                map_to_cycle(h, policy)?
            } else {
                ScrubCycle::None
            };
            Ok(DiskRecord { health: *h, cycle })
        })
        .collect::<Result<Vec<_>>>()?;
    HealthReport::from_records(records, buckets, policy.healthy_floor)
}

impl HealthReport {
    /// Rebuilds counts, histogram and ranking from per-disk records whose
    /// cycles are already assigned.
    pub fn from_records(
        mut records: Vec<DiskRecord>,
        buckets: &[ScoreInterval],
        healthy_floor: f64,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyTest);
        }
        records.sort_by_key(|r| r.health.disk_index);
        if let Some(w) = records
            .windows(2)
            .find(|w| w[0].health.disk_index == w[1].health.disk_index)
        {
            return Err(Error::InvalidConfig(format!(
                "disk {} scored twice",
                w[0].health.disk_index
            )));
        }
        let mut counts = vec![0usize; buckets.len()];
        let (mut below, mut above) = (0usize, 0usize);
        let lowest = buckets.iter().map(|b| b.lo).fold(f64::INFINITY, f64::min);
        let (mut selected, mut skipped, mut replace) = (0usize, 0usize, 0usize);
        for r in &records {
            let h = &r.health;
            match h.disposition() {
                Disposition::Replace => replace += 1,
                Disposition::NoConcern => skipped += 1,
                Disposition::Scrub => {
                    if r.cycle == ScrubCycle::None {
                        return Err(Error::InvalidPolicy(format!(
                            "concern disk {} has no cycle",
                            h.disk_index
                        )));
                    }
                    selected += 1
                }
            }
            if h.point_label == Label::Functional {
                match buckets.iter().position(|b| b.contains(h.health_score)) {
                    Some(i) => counts[i] += 1,
                    None if h.health_score < lowest => below += 1,
                    None => above += 1,
                }
            }
        }
        let mut ranked: Vec<&DiskHealth> = records
            .iter()
            .map(|r| &r.health)
            .filter(|h| h.concern)
            .collect();
        ranked.sort_by(|a, b| worst_first(a, b));
        let concern_ranked = ranked.into_iter().map(|h| h.disk_index).collect();
        Ok(HealthReport {
            buckets: buckets
                .iter()
                .zip(counts)
                .map(|(interval, count)| BucketCount {
                    interval: *interval,
                    count,
                })
                .collect(),
            disks: records,
            below_lowest_bucket: below,
            above_highest_bucket: above,
            selected_count: selected,
            skipped_count: skipped,
            replacement_count: replace,
            healthy_floor,
            concern_ranked,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn functional(disk: u64, score: f64, policy: &ThresholdPolicy) -> DiskHealth {
        score_disk(disk, &PValueVector::new(1.0 - score, 1.0), policy)
    }

    #[test]
    fn high_confidence_functional_is_not_concern() {
        let p = ThresholdPolicy::default();
        let h = score_disk(1, &PValueVector::new(0.005, 0.9), &p);
        assert!((h.health_score - 0.995).abs() < 1e-12);
        assert!(!h.concern);
        assert_eq!(h.disposition(), Disposition::NoConcern);
    }

    #[test]
    fn loose_threshold_drops_empty_bands() {
        let p = ThresholdPolicy::with_threshold(0.05).unwrap();
        assert_eq!(p.bands.len(), 2);
        let p = ThresholdPolicy::with_threshold(0.1).unwrap();
        assert_eq!(
            p.bands.last().unwrap().interval,
            ScoreInterval::half_open(0.80, 0.90)
        );
        assert_eq!(
            map_to_cycle(&functional(1, 0.85, &p), &p).unwrap(),
            ScrubCycle::BMedium
        );
        assert!(!functional(1, 0.92, &p).concern);
    }

    #[test]
    fn low_confidence_functional_is_concern() {
        let p = ThresholdPolicy::default();
        let h = score_disk(2, &PValueVector::new(0.15, 0.6), &p);
        assert!(h.concern);
        assert_eq!(map_to_cycle(&h, &p).unwrap(), ScrubCycle::BMedium);
    }

    #[test]
    fn failed_prediction_goes_to_replacement() {
        let p = ThresholdPolicy::default();
        let h = score_disk(3, &PValueVector::new(0.7, 0.2), &p);
        assert_eq!(h.point_label, Label::Failed);
        assert!(!h.concern);
        assert_eq!(h.disposition(), Disposition::Replace);
        assert!(matches!(map_to_cycle(&h, &p), Err(Error::NotConcern(3))));
    }

    #[test]
    fn exact_p_values_score_the_same() {
        let p = ThresholdPolicy::default();
        let h = score_disk(
            4,
            &PValueVector::new(Ratio::new(3u64, 20), Ratio::new(3, 5)),
            &p,
        );
        assert!((h.health_score - 0.85).abs() < 1e-15);
        assert!(h.concern);
    }

    #[test]
    fn default_bands_match_cycle_table() {
        let p = ThresholdPolicy::default();
        let cycle = |s: f64| {
            map_to_cycle(
                &DiskHealth {
                    disk_index: 1,
                    point_label: Label::Functional,
                    health_score: s,
                    credibility: 1.0,
                    concern: true,
                },
                &p,
            )
            .unwrap()
        };
        assert_eq!(cycle(0.97), ScrubCycle::ALow);
        assert_eq!(cycle(0.85), ScrubCycle::BMedium);
        assert_eq!(cycle(0.50), ScrubCycle::CHigh);
        assert_eq!(cycle(0.95), ScrubCycle::ALow);
        assert_eq!(cycle(0.80), ScrubCycle::BMedium);
        assert_eq!(cycle(0.0), ScrubCycle::CHigh);
    }

    #[test]
    fn cycle_periods_are_ordered() {
        let a = ScrubCycle::ALow.default_period_days().unwrap();
        let b = ScrubCycle::BMedium.default_period_days().unwrap();
        let c = ScrubCycle::CHigh.default_period_days().unwrap();
        assert!(a > b && b > c);
        assert_eq!(c, 7);
    }

    #[test]
    fn policy_validation() {
        assert!(ThresholdPolicy::with_threshold(0.0).is_err());
        assert!(ThresholdPolicy::with_threshold(1.0).is_err());
        assert_eq!(ThresholdPolicy::with_threshold(0.2).unwrap().bands.len(), 1);
        let mut p = ThresholdPolicy::default();
        p.bands[1].interval.lo = 0.81;
        assert!(p.validate().is_err());
    }

    #[test]
    fn nothing_selected_when_all_perfect() {
        let p = ThresholdPolicy::default();
        let hs: Vec<_> = (1..=5).map(|d| functional(d, 1.0, &p)).collect();
        let r = selection_summary(&hs, &p, &default_report_buckets()).unwrap();
        assert_eq!(r.selected_count, 0);
        assert_eq!(r.skipped_count, 5);
        assert_eq!(r.buckets.last().unwrap().count, 5);
    }

    #[test]
    fn summary_counts_and_ranking() {
        let p = ThresholdPolicy::default();
        let mut hs = vec![
            functional(5, 0.90, &p),
            functional(2, 0.50, &p),
            functional(9, 0.90, &p),
            functional(1, 0.999, &p),
            score_disk(7, &PValueVector::new(0.9, 0.1), &p),
        ];
        hs.reverse();
        let r = selection_summary(&hs, &p, &default_report_buckets()).unwrap();
        assert_eq!(
            (r.selected_count, r.skipped_count, r.replacement_count),
            (3, 1, 1)
        );
        assert_eq!(r.concern_ranked, vec![2, 5, 9]);
        assert_eq!(r.below_lowest_bucket, 3);
        assert_eq!(r.record(2).unwrap().cycle, ScrubCycle::CHigh);
        assert!((r.selected_fraction() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn duplicate_disks_rejected() {
        let p = ThresholdPolicy::default();
        let hs = vec![functional(1, 0.9, &p), functional(1, 0.8, &p)];
        assert!(selection_summary(&hs, &p, &[]).is_err());
    }

    proptest! {
        #[test]
        fn stricter_threshold_never_selects_fewer(
            scores in prop::collection::vec(0.0f64..=1.0, 1..60),
            t1 in 0.001f64..0.4,
            t2 in 0.001f64..0.4,
        ) {
            let (strict, loose) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let count = |t: f64| {
                let p = ThresholdPolicy::with_threshold(t).unwrap();
                let hs: Vec<_> = scores.iter().enumerate().map(|(i, s)| functional(i as u64 + 1, *s, &p)).collect();
                selection_summary(&hs, &p, &default_report_buckets()).unwrap().selected_count
            };
            prop_assert!(count(strict) >= count(loose));
        }

        #[test]
        fn ranking_is_independent_of_input_order(
            scores in prop::collection::vec(prop::sample::select(vec![0.3f64, 0.5, 0.85, 0.9, 0.97, 0.995]), 1..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let p = ThresholdPolicy::default();
            let hs: Vec<_> = scores.iter().enumerate().map(|(i, s)| functional(i as u64 + 1, *s, &p)).collect();
            let mut shuffled = hs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = selection_summary(&hs, &p, &default_report_buckets()).unwrap();
            let b = selection_summary(&shuffled, &p, &default_report_buckets()).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.selected_count + a.skipped_count + a.replacement_count, hs.len());
        }
    }
}
