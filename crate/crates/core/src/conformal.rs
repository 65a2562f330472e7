//! Inductive conformal prediction over a fitted point classifier, with the
//! class-conditional (Mondrian) taxonomy.
//!
//! Calibration scores every calibration example under its true label. A test
//! object gets one p-value per hypothesized class: the share of calibration
//! scores at least as large as the test score. Under the Mondrian taxonomy
//! only calibration examples of the hypothesized class take part, which
//! keeps the error rate valid per class even when one class is rare.
//!
//! Two p-value conventions are supported:
//!
//! * [`PValueMode::Paper`]: `#{alpha_i >= alpha} / n`
//! * [`PValueMode::Conservative`]: `(#{alpha_i >= alpha} + 1) / (n + 1)`
//!
//! Only the conservative form carries the finite-sample validity guarantee.

use num_rational::Ratio;
use num_traits::Num;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::{nonconformity, KnnModel, NonconformityMode};
use crate::label::{Label, Labeled};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMode {
    Paper,
    #[default]
    Conservative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taxonomy {
    /// Class-conditional p-values.
    #[default]
    Mondrian,
    /// Every calibration score participates regardless of class.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConformalConfig {
    pub nonconformity: NonconformityMode,
    pub pvalue_mode: PValueMode,
    pub taxonomy: Taxonomy,
}

/// Anything a p-value can be: a float or an exact rational.
pub trait PValue: Num + PartialOrd + Copy {}

impl<P: Num + PartialOrd + Copy> PValue for P {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CalibrationTable<T> {
    scores_by_class: [Vec<T>; 2],
    pooled_scores: Vec<T>,
    config: ConformalConfig,
}

fn sort_scores<T: Scalar>(v: &mut [T]) {
    v.sort_by(|a, b| a.partial_cmp(b).expect("nonconformity scores are finite"));
}

impl<T: Scalar> CalibrationTable<T> {
    /// Builds a table from already-computed `(true label, score)` pairs.
    pub fn from_scores<I>(scores: I, config: ConformalConfig) -> Result<Self>
    where
        I: IntoIterator<Item = (Label, T)>,
    {
        let mut by_class: [Vec<T>; 2] = [Vec::new(), Vec::new()];
        for (label, s) in scores {
            if !s.is_finite() {
                return Err(Error::InvalidConfig(
                    "non-finite nonconformity score".into(),
                ));
            }
            by_class[label.index()].push(s);
        }
        if by_class.iter().all(Vec::is_empty) {
            return Err(Error::EmptyCalibration);
        }
        if config.taxonomy == Taxonomy::Mondrian {
            if let Some(c) = Label::ALL
                .into_iter()
                .find(|c| by_class[c.index()].is_empty())
            {
                return Err(Error::ClassAbsent(c));
            }
        }
        let mut pooled: Vec<T> = by_class.iter().flatten().copied().collect();
        for v in by_class.iter_mut() {
            sort_scores(v);
        }
        sort_scores(&mut pooled);
        Ok(Self {
            scores_by_class: by_class,
            pooled_scores: pooled,
            config,
        })
    }

    pub fn config(&self) -> ConformalConfig {
        self.config
    }

    /// Same scores under a different p-value convention; no rescoring needed.
    pub fn with_pvalue_mode(mut self, mode: PValueMode) -> Self {
        self.config.pvalue_mode = mode;
        self
    }

    pub fn with_taxonomy(self, taxonomy: Taxonomy) -> Result<Self> {
        let config = ConformalConfig {
            taxonomy,
            ..self.config
        };
        let pairs: Vec<(Label, T)> = Label::ALL
            .into_iter()
            .flat_map(|c| self.scores_by_class[c.index()].iter().map(move |s| (c, *s)))
            .collect();
        Self::from_scores(pairs, config)
    }

    /// Total calibration count `q`.
    pub fn q(&self) -> usize {
        self.pooled_scores.len()
    }

    pub fn class_scores(&self, class: Label) -> &[T] {
        &self.scores_by_class[class.index()]
    }

    pub fn pooled_scores(&self) -> &[T] {
        &self.pooled_scores
    }

    fn reference(&self, class: Label) -> &[T] {
        match self.config.taxonomy {
            Taxonomy::Mondrian => self.class_scores(class),
            Taxonomy::Pooled => &self.pooled_scores,
        }
    }

    /// `(#{alpha_i >= score}, n)` over the scores relevant to `class`.
    pub fn count_at_least(&self, class: Label, score: T) -> (usize, usize) {
        let reference = self.reference(class);
        let first = reference.partition_point(|s| *s < score);
        (reference.len() - first, reference.len())
    }

    fn ratio(&self, class: Label, score: T) -> (u64, u64) {
        let (c, n) = self.count_at_least(class, score);
        match self.config.pvalue_mode {
            PValueMode::Paper => (c as u64, n as u64),
            PValueMode::Conservative => (c as u64 + 1, n as u64 + 1),
        }
    }

    pub fn p_value_from_score(&self, class: Label, score: T) -> T {
        let (num, den) = self.ratio(class, score);
        T::of(num as f64) / T::of(den as f64)
    }

    /// p-values for externally supplied per-class test scores.
    pub fn p_values_from_scores(&self, scores: [T; 2]) -> PValueVector<T> {
        PValueVector {
            p: [
                self.p_value_from_score(Label::Failed, scores[0]),
                self.p_value_from_score(Label::Functional, scores[1]),
            ],
            mondrian: self.config.taxonomy == Taxonomy::Mondrian,
        }
    }

    /// The same p-values as exact fractions.
    pub fn exact_p_values_from_scores(&self, scores: [T; 2]) -> PValueVector<Ratio<u64>> {
        let r = |c: Label| {
            let (num, den) = self.ratio(c, scores[c.index()]);
            Ratio::new(num, den)
        };
        PValueVector {
            p: [r(Label::Failed), r(Label::Functional)],
            mondrian: self.config.taxonomy == Taxonomy::Mondrian,
        }
    }

    /// Test scores of `x` under each hypothesized class.
    pub fn test_scores(&self, model: &KnnModel<T>, x: &[T]) -> Result<[T; 2]> {
        let probs = model.predict_proba(x)?;
        let mode = self.config.nonconformity;
        Ok(Label::ALL.map(|c| nonconformity(&probs, c, mode)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text)?;
        let pairs: Vec<(Label, T)> = Label::ALL
            .into_iter()
            .flat_map(|c| t.scores_by_class[c.index()].iter().map(move |s| (c, *s)))
            .collect();
        Self::from_scores(pairs, t.config)
    }
}

/// Scores every calibration example under its true label.
pub fn calibrate<T: Scalar, S: Labeled<T> + Sync>(
    model: &KnnModel<T>,
    calibration: &[S],
    config: ConformalConfig,
) -> Result<CalibrationTable<T>> {
    if calibration.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let scores = calibration
        .par_iter()
        .map(|z| {
            let probs = model.predict_proba(z.features())?;
            Ok((
                z.label(),
                nonconformity(&probs, z.label(), config.nonconformity),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    CalibrationTable::from_scores(scores, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValueVector<P> {
    pub p: [P; 2],
    pub mondrian: bool,
}

impl<P: PValue> PValueVector<P> {
    pub fn new(p_failed: P, p_functional: P) -> Self {
        Self {
            p: [p_failed, p_functional],
            mondrian: true,
        }
    }

    pub fn get(&self, class: Label) -> P {
        self.p[class.index()]
    }
}

pub fn p_values<T: Scalar>(
    table: &CalibrationTable<T>,
    model: &KnnModel<T>,
    x: &[T],
) -> Result<PValueVector<T>> {
    Ok(table.p_values_from_scores(table.test_scores(model, x)?))
}

pub fn p_values_batch<T: Scalar, S: Labeled<T> + Sync>(
    table: &CalibrationTable<T>,
    model: &KnnModel<T>,
    objects: &[S],
) -> Result<Vec<PValueVector<T>>> {
    objects
        .par_iter()
        .map(|z| p_values(table, model, z.features()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet<P> {
    members: [bool; 2],
    pub epsilon: P,
}

impl<P> PredictionSet<P> {
    pub fn contains(&self, class: Label) -> bool {
        self.members[class.index()]
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<Label> {
        Label::ALL
            .into_iter()
            .filter(|c| self.contains(*c))
            .collect()
    }

    pub fn is_subset_of<Q>(&self, other: &PredictionSet<Q>) -> bool {
        Label::ALL
            .into_iter()
            .all(|c| !self.contains(c) || other.contains(c))
    }
}

/// Every class whose p-value strictly exceeds `epsilon`.
pub fn prediction_set<P: PValue>(pvals: &PValueVector<P>, epsilon: P) -> PredictionSet<P> {
    PredictionSet {
        members: pvals.p.map(|p| p > epsilon),
        epsilon,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceCredibility<P> {
    pub confidence: P,
    pub credibility: P,
    pub point_label: Label,
}

/// Credibility is the largest p-value, confidence one minus the other.
/// Equal p-values resolve toward the failed class.
pub fn confidence_credibility<P: PValue>(pvals: &PValueVector<P>) -> ConfidenceCredibility<P> {
    let [p0, p1] = pvals.p;
    let (point_label, largest, second) = if p1 > p0 {
        (Label::Functional, p1, p0)
    } else {
        (Label::Failed, p0, p1)
    };
    ConfidenceCredibility {
        confidence: P::one() - second,
        credibility: largest,
        point_label,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub epsilon: f64,
    /// Fraction of test objects whose true label is in the prediction set.
    pub effective_coverage: f64,
    pub average_set_size: f64,
    /// Per class: fraction of that class's objects whose label is missing from the set.
    pub error_rate: [f64; 2],
    pub class_counts: [usize; 2],
    pub empty_fraction: f64,
    pub singleton_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn at(&self, epsilon: f64) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.epsilon == epsilon)
    }
}

/// Coverage statistics for p-values already computed on labeled objects.
pub fn coverage_from_pvalues<T: Scalar>(
    pvals: &[PValueVector<T>],
    truth: &[Label],
    epsilons: &[f64],
) -> Result<CoverageReport> {
    if pvals.is_empty() {
        return Err(Error::EmptyTest);
    }
    assert_eq!(pvals.len(), truth.len(), "one label per p-value vector");
    let n = pvals.len() as f64;
    let mut class_counts = [0usize; 2];
    for t in truth {
        class_counts[t.index()] += 1;
    }
    let rows = epsilons
        .iter()
        .map(|&eps| {
            let e = T::of(eps);
            let mut covered = 0usize;
            let mut size_sum = 0usize;
            let mut empty = 0usize;
            let mut single = 0usize;
            let mut misses = [0usize; 2];
            for (pv, t) in pvals.iter().zip(truth) {
                let set = prediction_set(pv, e);
                size_sum += set.len();
                match set.len() {
                    0 => empty += 1,
                    1 => single += 1,
                    _ => {}
                }
                if set.contains(*t) {
                    covered += 1;
                } else {
                    misses[t.index()] += 1;
                }
            }
            let rate = |c: usize| {
                if class_counts[c] == 0 {
                    0.0
                } else {
                    misses[c] as f64 / class_counts[c] as f64
                }
            };
            CoverageRow {
                epsilon: eps,
                effective_coverage: covered as f64 / n,
                average_set_size: size_sum as f64 / n,
                error_rate: [rate(0), rate(1)],
                class_counts,
                empty_fraction: empty as f64 / n,
                singleton_fraction: single as f64 / n,
            }
        })
        .collect();
    Ok(CoverageReport { rows })
}

pub fn evaluate_coverage<T: Scalar, S: Labeled<T> + Sync>(
    table: &CalibrationTable<T>,
    model: &KnnModel<T>,
    test: &[S],
    epsilons: &[f64],
) -> Result<CoverageReport> {
    if test.is_empty() {
        return Err(Error::EmptyTest);
    }
    let pvals = p_values_batch(table, model, test)?;
    let truth: Vec<Label> = test.iter().map(|z| z.label()).collect();
    coverage_from_pvalues(&pvals, &truth, epsilons)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(class1: &[f64], class0: &[f64], pvalue_mode: PValueMode) -> CalibrationTable<f64> {
        let pairs = class1
            .iter()
            .map(|s| (Label::Functional, *s))
            .chain(class0.iter().map(|s| (Label::Failed, *s)));
        CalibrationTable::from_scores(
            pairs,
            ConformalConfig {
                pvalue_mode,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn construction_sorts_per_class_and_pooled() {
        let t = table(&[0.2, 0.1], &[0.4, 0.3], PValueMode::Paper);
        assert_eq!(t.q(), 4);
        assert_eq!(t.class_scores(Label::Functional), &[0.1, 0.2]);
        assert_eq!(t.class_scores(Label::Failed), &[0.3, 0.4]);
        assert_eq!(t.pooled_scores(), &[0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn mondrian_requires_both_classes() {
        let r = CalibrationTable::from_scores(
            [(Label::Functional, 0.1f64)],
            ConformalConfig::default(),
        );
        assert!(matches!(r, Err(Error::ClassAbsent(Label::Failed))));
        let pooled = ConformalConfig {
            taxonomy: Taxonomy::Pooled,
            ..Default::default()
        };
        assert!(CalibrationTable::from_scores([(Label::Functional, 0.1f64)], pooled).is_ok());
        let r = CalibrationTable::<f64>::from_scores([], pooled);
        assert!(matches!(r, Err(Error::EmptyCalibration)));
    }

    #[test]
    fn paper_and_conservative_p_values() {
        let scores = [0.1, 0.2, 0.3, 0.4];
        let paper = table(&scores, &[0.0], PValueMode::Paper);
        assert_eq!(paper.p_value_from_score(Label::Functional, 0.25), 0.5);
        let cons = table(&scores, &[0.0], PValueMode::Conservative);
        assert!((cons.p_value_from_score(Label::Functional, 0.25) - 0.6).abs() < 1e-15);
        assert_eq!(paper.p_value_from_score(Label::Functional, 0.9), 0.0);
        assert!((cons.p_value_from_score(Label::Functional, 0.9) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ties_count_as_at_least() {
        let t = table(&[0.1, 0.2, 0.2, 0.4], &[0.0], PValueMode::Paper);
        assert_eq!(t.count_at_least(Label::Functional, 0.2), (3, 4));
    }

    #[test]
    fn pooled_divides_by_q() {
        let t = table(&[0.1, 0.2], &[0.3, 0.4], PValueMode::Paper)
            .with_taxonomy(Taxonomy::Pooled)
            .unwrap();
        assert_eq!(t.p_value_from_score(Label::Functional, 0.25), 0.5);
        assert_eq!(t.p_value_from_score(Label::Failed, 0.05), 1.0);
    }

    #[test]
    fn exact_p_values_match_float() {
        let t = table(&[0.1, 0.2, 0.3], &[0.5, 0.6], PValueMode::Conservative);
        let ex = t.exact_p_values_from_scores([0.55, 0.15]);
        assert_eq!(ex.p, [Ratio::new(2, 3), Ratio::new(3, 4)]);
        let fl = t.p_values_from_scores([0.55, 0.15]);
        assert_eq!(fl.p, [2.0 / 3.0, 0.75]);
    }

    #[test]
    fn prediction_set_examples() {
        let s = prediction_set(&PValueVector::new(0.04, 0.81), 0.05);
        assert_eq!(s.labels(), vec![Label::Functional]);
        let s = prediction_set(&PValueVector::new(0.30, 0.81), 0.05);
        assert_eq!(s.labels(), vec![Label::Failed, Label::Functional]);
        let s = prediction_set(&PValueVector::new(0.04, 0.03), 0.05);
        assert!(s.is_empty());
    }

    #[test]
    fn confidence_credibility_examples() {
        let cc = confidence_credibility(&PValueVector::new(0.04f64, 0.81));
        assert!((cc.confidence - 0.96).abs() < 1e-15);
        assert_eq!(cc.credibility, 0.81);
        assert_eq!(cc.point_label, Label::Functional);
        let cc = confidence_credibility(&PValueVector::new(0.5, 0.5));
        assert_eq!(
            (cc.confidence, cc.credibility, cc.point_label),
            (0.5, 0.5, Label::Failed)
        );
    }

    #[test]
    fn exact_confidence_is_exact() {
        let cc = confidence_credibility(&PValueVector::new(
            Ratio::new(1u64, 25),
            Ratio::new(81, 100),
        ));
        assert_eq!(cc.confidence, Ratio::new(24, 25));
        assert_eq!(cc.confidence + Ratio::new(1, 25), Ratio::from_integer(1));
    }

    #[test]
    fn coverage_limits() {
        let pv = vec![PValueVector::new(0.3, 0.7), PValueVector::new(0.6, 0.2)];
        let truth = [Label::Functional, Label::Failed];
        let rep = coverage_from_pvalues(&pv, &truth, &[0.001, 0.999]).unwrap();
        assert_eq!(rep.rows[0].average_set_size, 2.0);
        assert_eq!(rep.rows[0].effective_coverage, 1.0);
        assert_eq!(rep.rows[1].average_set_size, 0.0);
        assert_eq!(rep.rows[1].error_rate, [1.0, 1.0]);
        assert!(matches!(
            coverage_from_pvalues::<f64>(&[], &[], &[0.1]),
            Err(Error::EmptyTest)
        ));
    }

    #[test]
    fn json_round_trip() {
        let t = table(&[0.1, 0.2], &[0.3], PValueMode::Paper);
        assert_eq!(
            CalibrationTable::from_json(&t.to_json().unwrap()).unwrap(),
            t
        );
    }

    proptest! {
        #[test]
        fn conservative_p_values_have_floor(
            class1 in prop::collection::vec(-1.0f64..1.0, 1..40),
            class0 in prop::collection::vec(-1.0f64..1.0, 1..40),
            test in (-2.0f64..2.0, -2.0f64..2.0),
        ) {
            let t = table(&class1, &class0, PValueMode::Conservative);
            let pv = t.p_values_from_scores([test.0, test.1]);
            prop_assert!(pv.p[0] >= 1.0 / (class0.len() as f64 + 1.0) - 1e-15);
            prop_assert!(pv.p[1] >= 1.0 / (class1.len() as f64 + 1.0) - 1e-15);
            prop_assert!(pv.p.iter().all(|p| *p > 0.0 && *p <= 1.0));
        }

        #[test]
        fn one_more_calibration_example_moves_p_by_at_most_one_over_n(
            class1 in prop::collection::vec(-1.0f64..1.0, 1..40),
            extra in -1.0f64..1.0,
            test in -1.5f64..1.5,
        ) {
            let before = table(&class1, &[0.0], PValueMode::Paper);
            let mut grown = class1.clone();
            grown.push(extra);
            let after = table(&grown, &[0.0], PValueMode::Paper);
            let d = (before.p_value_from_score(Label::Functional, test)
                - after.p_value_from_score(Label::Functional, test)).abs();
            prop_assert!(d <= 1.0 / class1.len() as f64 + 1e-15);
        }

        #[test]
        fn sets_are_nested_in_epsilon(p0 in 0.0f64..=1.0, p1 in 0.0f64..=1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let pv = PValueVector::new(p0, p1);
            prop_assert!(prediction_set(&pv, hi).is_subset_of(&prediction_set(&pv, lo)));
        }

        #[test]
        fn confidence_plus_second_largest_is_one(p0 in 0.0f64..=1.0, p1 in 0.0f64..=1.0) {
            let cc = confidence_credibility(&PValueVector::new(p0, p1));
            let second = p0.min(p1);
            prop_assert_eq!(cc.confidence + second, 1.0);
            prop_assert_eq!(cc.credibility, p0.max(p1));
        }
    }
}
