//! First-order probabilistic weighted fuzzy time series over a grid partition.
//!
//! The utilization universe is covered by `m` evenly spaced triangular fuzzy
//! sets, each overlapping only its neighbors, so memberships sum to one
//! everywhere inside the universe. Fitting accumulates fuzzy co-memberships of
//! consecutive observations into an `m x m` transition weight matrix.
//! Forecasting fuzzifies the last value and pushes that distribution
//! through the row-normalized matrix, one step per hour.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::UtilizationSeries;
use crate::scalar::Scalar;

pub const DEFAULT_SETS: usize = 20;
pub const DEFAULT_HORIZON: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FuzzyPartition<T> {
    universe_min: T,
    universe_max: T,
    centers: Vec<T>,
}

impl<T: Scalar> FuzzyPartition<T> {
    pub fn new(universe_min: T, universe_max: T, sets: usize) -> Result<Self> {
        if sets < 2 {
            return Err(Error::InvalidForecast(format!(
                "need at least 2 fuzzy sets, got {sets}"
            )));
        }
        if !(universe_min < universe_max) {
            return Err(Error::InvalidForecast(format!(
                "empty universe [{universe_min}, {universe_max}]"
            )));
        }
        let step = (universe_max - universe_min) / T::of_usize(sets - 1);
        let mut centers: Vec<T> = (0..sets)
            .map(|i| universe_min + step * T::of_usize(i))
            .collect();
        centers[sets - 1] = universe_max;
        Ok(Self {
            universe_min,
            universe_max,
            centers,
        })
    }

    /// Universe spanning the observed range padded by 10% per side, clipped to `[0, 100]`.
    pub fn fit_universe(values: &[T], sets: usize) -> Result<Self> {
        let lo = values.iter().copied().fold(T::infinity(), T::min);
        let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
        let hundred = T::of(100.0);
        let range = hi - lo;
        let pad = if range > T::zero() {
            range * T::of(0.1)
        } else {
            T::one()
        };
        let mut min = (lo - pad).max(T::zero());
        let mut max = (hi + pad).min(hundred);
        if !(min < max) {
            // constant series pinned at a bound
            min = (max - T::one()).max(T::zero());
            max = (min + T::one()).min(hundred);
        }
        Self::new(min, max, sets)
    }

    pub fn sets(&self) -> usize {
        self.centers.len()
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn universe(&self) -> (T, T) {
        (self.universe_min, self.universe_max)
    }

    /// Distance between adjacent centers, also the half-base of every triangle.
    pub fn set_width(&self) -> T {
        (self.universe_max - self.universe_min) / T::of_usize(self.sets() - 1)
    }

    pub fn clamp(&self, u: T) -> T {
        u.max(self.universe_min).min(self.universe_max)
    }

    /// Membership of `u` (clamped into the universe) in every set.
    pub fn memberships(&self, u: T) -> Vec<T> {
        let u = self.clamp(u);
        let w = self.set_width();
        self.centers
            .iter()
            .map(|c| (T::one() - (u - *c).abs() / w).max(T::zero()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PwftsModel<T> {
    partition: FuzzyPartition<T>,
    transition_weights: Vec<Vec<T>>,
    row_totals: Vec<T>,
}

impl<T: Scalar> PwftsModel<T> {
    /// A model with no observed transitions.
    pub fn unfitted(partition: FuzzyPartition<T>) -> Self {
        let m = partition.sets();
        Self {
            partition,
            transition_weights: vec![vec![T::zero(); m]; m],
            row_totals: vec![T::zero(); m],
        }
    }

    pub fn partition(&self) -> &FuzzyPartition<T> {
        &self.partition
    }

    pub fn transition_weights(&self) -> &[Vec<T>] {
        &self.transition_weights
    }

    pub fn row_totals(&self) -> &[T] {
        &self.row_totals
    }

    /// Rows with no outgoing mass.
    pub fn unseen_states(&self) -> Vec<usize> {
        (0..self.row_totals.len())
            .filter(|&i| self.row_totals[i] <= T::zero())
            .collect()
    }

    pub fn is_fitted(&self) -> bool {
        self.row_totals.iter().any(|t| *t > T::zero())
    }

    /// Adds the co-membership of one consecutive pair.
    pub fn observe(&mut self, from: T, to: T) {
        let a = self.partition.memberships(from);
        let b = self.partition.memberships(to);
        for (i, ai) in a.iter().enumerate() {
            if *ai == T::zero() {
                continue;
            }
            for (j, bj) in b.iter().enumerate() {
                let w = *ai * *bj;
                self.transition_weights[i][j] = self.transition_weights[i][j] + w;
                self.row_totals[i] = self.row_totals[i] + w;
            }
        }
    }

    /// Row-stochastic transition matrix; unseen states get the uniform row.
    pub fn transition_matrix(&self) -> Vec<Vec<T>> {
        let m = self.partition.sets();
        let uniform = T::one() / T::of_usize(m);
        self.transition_weights
            .iter()
            .zip(&self.row_totals)
            .map(|(row, total)| {
                if *total > T::zero() {
                    row.iter().map(|w| *w / *total).collect()
                } else {
                    vec![uniform; m]
                }
            })
            .collect()
    }
}

pub fn fit_pwfts<T: Scalar>(series: &UtilizationSeries<T>, sets: usize) -> Result<PwftsModel<T>> {
    if series.len() < 2 {
        return Err(Error::SeriesTooShort(series.len()));
    }
    if sets < 3 {
        return Err(Error::InvalidForecast(format!(
            "need at least 3 fuzzy sets, got {sets}"
        )));
    }
    let values = series.values();
    let partition = FuzzyPartition::fit_universe(&values, sets)?;
    let mut model = PwftsModel::unfitted(partition);
    for w in values.windows(2) {
        model.observe(w[0], w[1]);
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ForecastStep<T> {
    pub probabilities: Vec<T>,
    pub point: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ForecastDistribution<T> {
    /// Hour index of the last observation; step `s` (1-based) forecasts `origin_hour + s`.
    pub origin_hour: i64,
    pub universe: (T, T),
    pub centers: Vec<T>,
    pub steps: Vec<ForecastStep<T>>,
}

impl<T: Scalar> ForecastDistribution<T> {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn with_origin(mut self, hour: i64) -> Self {
        self.origin_hour = hour;
        self
    }
}

fn normalize<T: Scalar>(v: &mut [T]) {
    let s: T = v.iter().copied().sum();
    if s > T::zero() {
        for x in v.iter_mut() {
            *x = *x / s;
        }
    } else {
        let u = T::one() / T::of_usize(v.len());
        v.iter_mut().for_each(|x| *x = u);
    }
}

fn expected_center<T: Scalar>(probs: &[T], centers: &[T], universe: (T, T)) -> T {
    let p: T = probs.iter().zip(centers).map(|(p, c)| *p * *c).sum();
    p.max(universe.0).min(universe.1)
}

pub fn forecast<T: Scalar>(
    model: &PwftsModel<T>,
    last_value: T,
    horizon: usize,
) -> Result<ForecastDistribution<T>> {
    if !model.is_fitted() {
        return Err(Error::UnfittedModel);
    }
    if horizon == 0 {
        return Err(Error::InvalidForecast("horizon must be positive".into()));
    }
    let partition = model.partition();
    let matrix = model.transition_matrix();
    let centers = partition.centers().to_vec();
    let universe = partition.universe();
    let m = centers.len();
    let mut state = partition.memberships(last_value);
    normalize(&mut state);
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut next = vec![T::zero(); m];
        for (i, pi) in state.iter().enumerate() {
            if *pi == T::zero() {
                continue;
            }
            for (j, pij) in matrix[i].iter().enumerate() {
                next[j] = next[j] + *pi * *pij;
            }
        }
        normalize(&mut next);
        let point = expected_center(&next, &centers, universe);
        steps.push(ForecastStep {
            probabilities: next.clone(),
            point,
        });
        state = next;
    }
    Ok(ForecastDistribution {
        origin_hour: 0,
        universe,
        centers,
        steps,
    })
}

/// Forecast continuing from the series' final observation.
pub fn forecast_series<T: Scalar>(
    model: &PwftsModel<T>,
    series: &UtilizationSeries<T>,
    horizon: usize,
) -> Result<ForecastDistribution<T>> {
    let (hour, value) = series.last().ok_or(Error::SeriesTooShort(0))?;
    Ok(forecast(model, value, horizon)?.with_origin(hour))
}

/// Probability-weighted set centers per step, clamped to the universe.
pub fn point_forecasts<T: Scalar>(dist: &ForecastDistribution<T>) -> Vec<T> {
    dist.steps
        .iter()
        .map(|s| expected_center(&s.probabilities, &dist.centers, dist.universe))
        .collect()
}
