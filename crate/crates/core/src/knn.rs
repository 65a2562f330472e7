//! k-nearest-neighbor point classifier and the nonconformity measures built on it.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, Labeled};
use crate::scalar::Scalar;

/// Current version of the persisted model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-feature z-score transform fitted on the proper training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FeatureScaler<T> {
    pub means: Vec<T>,
    pub std_devs: Vec<T>,
    /// Features with zero variance; their std dev is stored as 1.
    pub constant: Vec<bool>,
}

impl<T: Scalar> FeatureScaler<T> {
    pub fn fit<'a, I>(rows: I, dim: usize) -> Self
    where
        I: IntoIterator<Item = &'a [T]>,
    {
        let mut n = 0usize;
        let mut sum = vec![0.0f64; dim];
        let mut sum_sq = vec![0.0f64; dim];
        let rows: Vec<&[T]> = rows.into_iter().collect();
        for r in &rows {
            n += 1;
            for (j, v) in r.iter().enumerate() {
                sum[j] += v.as_f64();
            }
        }
        let means: Vec<f64> = sum.iter().map(|s| s / n.max(1) as f64).collect();
        for r in &rows {
            for (j, v) in r.iter().enumerate() {
                let d = v.as_f64() - means[j];
                sum_sq[j] += d * d;
            }
        }
        let mut std_devs = Vec::with_capacity(dim);
        let mut constant = Vec::with_capacity(dim);
        for s in sum_sq {
            let sd = (s / n.max(1) as f64).sqrt();
            let flat = !(sd > 0.0) || !sd.is_finite();
            constant.push(flat);
            std_devs.push(if flat { T::one() } else { T::of(sd) });
        }
        Self {
            means: means.into_iter().map(T::of).collect(),
            std_devs,
            constant,
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.means.iter().zip(&self.std_devs))
            .map(|(v, (m, s))| (*v - *m) / *s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KnnModel<T> {
    k: usize,
    scaler: FeatureScaler<T>,
    points: Vec<Vec<T>>,
    labels: Vec<Label>,
    distance: Distance,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ModelDocument<T> {
    format_version: u32,
    model: KnnModel<T>,
}

/// Estimated class-membership probabilities, indexed by [`Label`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClassProbabilities<T>(pub [T; 2]);

impl<T: Scalar> ClassProbabilities<T> {
    pub fn get(&self, label: Label) -> T {
        self.0[label.index()]
    }

    /// Label with the larger probability; ties go to the failed class.
    pub fn argmax(&self) -> Label {
        if self.0[Label::Functional.index()] > self.0[Label::Failed.index()] {
            Label::Functional
        } else {
            Label::Failed
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonconformityMode {
    /// `1 - P[y|x]`.
    InverseProbability,
    /// `max_{y' != y} P[y'|x] - P[y|x]`.
    #[default]
    Margin,
}

/// How strange `(x, hypothesized)` looks given the classifier's probabilities.
/// Higher is stranger.
pub fn nonconformity<T: Scalar>(
    probs: &ClassProbabilities<T>,
    hypothesized: Label,
    mode: NonconformityMode,
) -> T {
    let own = probs.get(hypothesized);
    match mode {
        NonconformityMode::InverseProbability => T::one() - own,
        NonconformityMode::Margin => probs.get(hypothesized.other()) - own,
    }
}

pub fn fit_knn<T: Scalar, S: Labeled<T>>(train: &[S], k: usize) -> Result<KnnModel<T>> {
    if k == 0 || train.len() < k {
        return Err(Error::TooFewPoints {
            k,
            got: train.len(),
        });
    }
    let first = train[0].label();
    if train.iter().all(|s| s.label() == first) {
        return Err(Error::SingleClassTraining);
    }
    let dim = train[0].features().len();
    if let Some(bad) = train.iter().find(|s| s.features().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.features().len(),
        });
    }
    let scaler = FeatureScaler::fit(train.iter().map(|s| s.features()), dim);
    let points = train
        .iter()
        .map(|s| scaler.transform(s.features()))
        .collect();
    let labels = train.iter().map(|s| s.label()).collect();
    Ok(KnnModel {
        k,
        scaler,
        points,
        labels,
        distance: Distance::Euclidean,
    })
}

impl<T: Scalar> KnnModel<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.scaler.dim()
    }

    pub fn scaler(&self) -> &FeatureScaler<T> {
        &self.scaler
    }

    pub fn training_len(&self) -> usize {
        self.points.len()
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Training-row indices of the k nearest neighbors, nearest first.
    /// Equal distances are ordered by training-row index.
    pub fn neighbors(&self, x: &[T]) -> Result<Vec<usize>> {
        self.check_dim(x)?;
        let q = self.scaler.transform(x);
        let mut d: Vec<(T, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let s: T = p.iter().zip(&q).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
                (s, i)
            })
            .collect();
        let cmp = |a: &(T, usize), b: &(T, usize)| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
        };
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_by(cmp);
        Ok(d.into_iter().map(|(_, i)| i).collect())
    }

    /// Unweighted neighbor vote: `P[y|x]` is the share of the k nearest labeled `y`.
    pub fn predict_proba(&self, x: &[T]) -> Result<ClassProbabilities<T>> {
        let nn = self.neighbors(x)?;
        let functional = nn
            .iter()
            .filter(|&&i| self.labels[i] == Label::Functional)
            .count();
        let k = self.k;
        let p1 = T::of_usize(functional) / T::of_usize(k);
        let p0 = T::of_usize(k - functional) / T::of_usize(k);
        Ok(ClassProbabilities([p0, p1]))
    }

    pub fn predict_proba_batch<S: Labeled<T> + Sync>(
        &self,
        xs: &[S],
    ) -> Result<Vec<ClassProbabilities<T>>> {
        xs.par_iter()
            .map(|s| self.predict_proba(s.features()))
            .collect()
    }

    pub fn predict(&self, x: &[T]) -> Result<Label> {
        Ok(self.predict_proba(x)?.argmax())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument<T> = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(doc.format_version));
        }
        let m = doc.model;
        if m.k == 0 || m.k > m.points.len() || m.points.len() != m.labels.len() {
            return Err(Error::InvalidConfig("inconsistent model document".into()));
        }
        Ok(m)
    }
}
