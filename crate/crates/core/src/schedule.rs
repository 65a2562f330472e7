//! Scrub window planning against the utilization forecast, execution
//! simulation, and energy accounting.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{point_forecasts, ForecastDistribution, DEFAULT_HORIZON};
use crate::health::{HealthReport, ScrubCycle};
use crate::ingest::UtilizationSeries;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclePeriods {
    pub a_low_days: u32,
    pub b_medium_days: u32,
    pub c_high_days: u32,
}

impl Default for CyclePeriods {
    fn default() -> Self {
        Self {
            a_low_days: ScrubCycle::ALow.default_period_days().unwrap(),
            b_medium_days: ScrubCycle::BMedium.default_period_days().unwrap(),
            c_high_days: ScrubCycle::CHigh.default_period_days().unwrap(),
        }
    }
}

impl CyclePeriods {
    pub fn days(&self, cycle: ScrubCycle) -> Option<u32> {
        match cycle {
            ScrubCycle::ALow => Some(self.a_low_days),
            ScrubCycle::BMedium => Some(self.b_medium_days),
            ScrubCycle::CHigh => Some(self.c_high_days),
            ScrubCycle::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub idle_threshold_pct: f64,
    /// Maximum scrubs started per hour.
    pub hour_capacity: usize,
    pub scrub_duration_hours: usize,
    pub power_watts: f64,
    pub horizon_hours: usize,
    pub cycle_periods: CyclePeriods,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            idle_threshold_pct: 50.0,
            hour_capacity: 8,
            scrub_duration_hours: 6,
            power_watts: 7.0,
            horizon_hours: DEFAULT_HORIZON,
            cycle_periods: CyclePeriods::default(),
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSchedulerConfig(m.to_string()));
        if !(self.idle_threshold_pct > 0.0 && self.idle_threshold_pct < 100.0) {
            return bad("idle threshold must lie in (0, 100)");
        }
        if self.hour_capacity == 0 || self.scrub_duration_hours == 0 || self.horizon_hours == 0 {
            return bad("capacity, duration and horizon must be positive");
        }
        if !(self.power_watts > 0.0 && self.power_watts.is_finite()) {
            return bad("power draw must be positive");
        }
        let p = self.cycle_periods;
        if !(p.a_low_days > p.b_medium_days && p.b_medium_days > p.c_high_days && p.c_high_days > 0)
        {
            return bad("cycle periods must satisfy A > B > C > 0");
        }
        Ok(())
    }

    pub fn energy_per_disk_wh(&self) -> f64 {
        self.power_watts * self.scrub_duration_hours as f64
    }
}

/// Hourly utilization expected over the planning window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationOutlook {
    /// Absolute hour index of slot 0.
    pub start_hour: i64,
    pub hourly_pct: Vec<f64>,
}

impl UtilizationOutlook {
    pub fn from_distribution<T: Scalar>(dist: &ForecastDistribution<T>) -> Self {
        Self {
            start_hour: dist.origin_hour + 1,
            hourly_pct: point_forecasts(dist)
                .into_iter()
                .map(Scalar::as_f64)
                .collect(),
        }
    }

    /// Hour-wise maximum, e.g. of the disk-busy and CPU-busy outlooks.
    pub fn max_of(outlooks: &[UtilizationOutlook]) -> Result<Self> {
        let first = outlooks
            .first()
            .ok_or_else(|| Error::InvalidForecast("no outlook to combine".into()))?;
        if outlooks.iter().any(|o| {
            o.start_hour != first.start_hour || o.hourly_pct.len() != first.hourly_pct.len()
        }) {
            return Err(Error::InvalidForecast(
                "outlooks cover different windows".into(),
            ));
        }
        let hourly_pct = (0..first.hourly_pct.len())
            .map(|i| {
                outlooks
                    .iter()
                    .map(|o| o.hourly_pct[i])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        Ok(Self {
            start_hour: first.start_hour,
            hourly_pct,
        })
    }
}

/// Next due day per disk. Disks never scrubbed are due immediately.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DueLedger {
    pub next_due: BTreeMap<u64, i64>,
}

impl DueLedger {
    pub fn due_day(&self, disk: u64) -> Option<i64> {
        self.next_due.get(&disk).copied()
    }

    pub fn is_due(&self, disk: u64, today: i64) -> bool {
        self.due_day(disk).is_none_or(|d| d <= today)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Offset into the planning window.
    pub slot: usize,
    pub hour_index: i64,
    pub disk_index: u64,
    pub cycle: ScrubCycle,
    pub health_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeferReason {
    NoIdleWindow,
    CapacityExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeferredDisk {
    pub disk_index: u64,
    pub cycle: ScrubCycle,
    pub health_score: f64,
    pub due_day: i64,
    pub reason: DeferReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleWarning {
    /// Every hour of the window is forecast above the idle threshold.
    NoIdleWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScrubSchedule {
    pub day: i64,
    pub window_start_hour: i64,
    pub horizon_hours: usize,
    pub fleet_size: usize,
    pub assignments: Vec<Assignment>,
    pub deferred: Vec<DeferredDisk>,
    pub next_due: DueLedger,
    pub warning: Option<ScheduleWarning>,
}

impl ScrubSchedule {
    pub fn assigned_disks(&self) -> impl Iterator<Item = u64> + '_ {
        self.assignments.iter().map(|a| a.disk_index)
    }
}

/// Greedy worst-first placement of today's due concern disks.
///
/// Disks are ordered by health score, overdue before merely due at equal
/// score, then by disk index. Each takes the earliest slot that is forecast
/// idle, still has capacity, and leaves room for the full scrub duration
/// inside the window. Disks that find no slot are deferred and keep their
/// due day.
pub fn build_schedule(
    report: &HealthReport,
    outlook: &UtilizationOutlook,
    config: &SchedulerConfig,
    today: i64,
    ledger: &DueLedger,
) -> Result<ScrubSchedule> {
    config.validate()?;
    if outlook.hourly_pct.len() != config.horizon_hours {
        return Err(Error::InvalidForecast(format!(
            "forecast covers {} hours, scheduler expects {}",
            outlook.hourly_pct.len(),
            config.horizon_hours
        )));
    }
    let mut due: Vec<(f64, bool, u64, ScrubCycle)> = report
        .ranked_concern()
        .filter(|r| ledger.is_due(r.health.disk_index, today))
        .map(|r| {
            let disk = r.health.disk_index;
            let overdue = ledger.due_day(disk).is_some_and(|d| d < today);
            (r.health.health_score, overdue, disk, r.cycle)
        })
        .collect();
    due.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));

    let last_start = config
        .horizon_hours
        .checked_sub(config.scrub_duration_hours);
    let open: Vec<usize> = (0..config.horizon_hours)
        .filter(|&s| last_start.is_some_and(|l| s <= l))
        .filter(|&s| outlook.hourly_pct[s] < config.idle_threshold_pct)
        .collect();
    let warning = open.is_empty().then_some(ScheduleWarning::NoIdleWindow);
    if warning.is_some() && !due.is_empty() {
        warn!(
            "no idle hour in the {}-hour window; deferring {} disks",
            config.horizon_hours,
            due.len()
        );
    }

    let mut load = vec![0usize; config.horizon_hours];
    let mut cursor = 0usize;
    let mut assignments = Vec::new();
    let mut deferred = Vec::new();
    let mut next_due = ledger.clone();
    for (score, _, disk, cycle) in due {
        while cursor < open.len() && load[open[cursor]] >= config.hour_capacity {
            cursor += 1;
        }
        match open.get(cursor) {
            Some(&slot) => {
                load[slot] += 1;
                assignments.push(Assignment {
                    slot,
                    hour_index: outlook.start_hour + slot as i64,
                    disk_index: disk,
                    cycle,
                    health_score: score,
                });
                let period = config
                    .cycle_periods
                    .days(cycle)
                    .expect("concern disks carry a cycle");
                next_due.next_due.insert(disk, today + period as i64);
            }
            None => {
                let due_day = *next_due.next_due.entry(disk).or_insert(today);
                deferred.push(DeferredDisk {
                    disk_index: disk,
                    cycle,
                    health_score: score,
                    due_day,
                    reason: if warning.is_some() {
                        DeferReason::NoIdleWindow
                    } else {
                        DeferReason::CapacityExhausted
                    },
                });
            }
        }
    }
    Ok(ScrubSchedule {
        day: today,
        window_start_hour: outlook.start_hour,
        horizon_hours: config.horizon_hours,
        fleet_size: report.fleet_size(),
        assignments,
        deferred,
        next_due,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub disk_index: u64,
    pub start_hour: i64,
    pub interrupted_at_hour: i64,
    pub observed_utilization_pct: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub window_start_hour: i64,
    pub completed: Vec<u64>,
    pub interrupted: Vec<Notification>,
    pub energy_wh_spent: f64,
    pub energy_wh_saved_vs_scrub_all: f64,
}

/// Replays a schedule against observed utilization.
///
/// A scrub completes when every hour it occupies is observed below the idle
/// threshold; otherwise it stops at the first busy hour and the
/// administrator is notified.
pub fn simulate<T: Scalar>(
    schedule: &ScrubSchedule,
    actual: &UtilizationSeries<T>,
    config: &SchedulerConfig,
) -> Result<SimulationReport> {
    config.validate()?;
    let mut completed = Vec::new();
    let mut interrupted = Vec::new();
    for a in &schedule.assignments {
        let mut stop = None;
        for h in 0..config.scrub_duration_hours as i64 {
            let hour = a.hour_index + h;
            let u = actual
                .at_hour(hour)
                .ok_or(Error::MissingActuals(hour))?
                .as_f64();
            if u >= config.idle_threshold_pct {
                stop = Some((hour, u));
                break;
            }
        }
        match stop {
            None => completed.push(a.disk_index),
            Some((hour, u)) => interrupted.push(Notification {
                disk_index: a.disk_index,
                start_hour: a.hour_index,
                interrupted_at_hour: hour,
                observed_utilization_pct: u,
                message: format!(
                    "scrub of disk {} started at hour {} interrupted at hour {}: utilization {:.1}% >= {:.1}%",
                    a.disk_index, a.hour_index, hour, u, config.idle_threshold_pct
                ),
            }),
        }
    }
    let per_disk = config.energy_per_disk_wh();
    let skipped = schedule.fleet_size.saturating_sub(completed.len());
    Ok(SimulationReport {
        window_start_hour: schedule.window_start_hour,
        energy_wh_spent: completed.len() as f64 * per_disk,
        energy_wh_saved_vs_scrub_all: skipped as f64 * per_disk,
        completed,
        interrupted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub per_disk_wh: f64,
    pub selected_count: usize,
    pub fleet_size: usize,
    pub selected_energy_wh: f64,
    pub scrub_all_energy_wh: f64,
    pub saved_wh: f64,
}

pub fn energy_for_counts(selected: usize, fleet: usize, config: &SchedulerConfig) -> EnergyReport {
    let per = config.energy_per_disk_wh();
    EnergyReport {
        per_disk_wh: per,
        selected_count: selected,
        fleet_size: fleet,
        selected_energy_wh: selected as f64 * per,
        scrub_all_energy_wh: fleet as f64 * per,
        saved_wh: fleet.saturating_sub(selected) as f64 * per,
    }
}

pub fn energy_report(summary: &HealthReport, config: &SchedulerConfig) -> EnergyReport {
    energy_for_counts(summary.selected_count, summary.fleet_size(), config)
}
