//! Task metrics, plug-in mutual information, information gain per parameter,
//! and likelihood-based model selection scores. All logarithms are natural.

use serde::{Deserialize, Serialize};

/// Square matrix of `(true bin, predicted bin)` counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointCounts {
    bins: usize,
    counts: Vec<u64>,
}

impl JointCounts {
    pub fn new(bins: usize) -> Self {
        JointCounts {
            bins,
            counts: vec![0; bins * bins],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let bins = rows.len();
        assert!(rows.iter().all(|r| r.len() == bins), "square matrix required");
        JointCounts {
            bins,
            counts: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn from_labels(bins: usize, truth: &[usize], pred: &[usize]) -> Self {
        assert_eq!(truth.len(), pred.len());
        let mut c = JointCounts::new(bins);
        for (&t, &p) in truth.iter().zip(pred) {
            c.add(t, p);
        }
        c
    }

    /// Discretize `[0, 1]` values into `bins` equal-width bins.
    pub fn from_scores(bins: usize, truth: &[f64], pred: &[f64]) -> Self {
        let t: Vec<usize> = truth.iter().map(|&v| score_bin(v, bins)).collect();
        let p: Vec<usize> = pred.iter().map(|&v| score_bin(v, bins)).collect();
        JointCounts::from_labels(bins, &t, &p)
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.bins + pred] += 1;
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.bins + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let b = self.bins;
        let mut t = JointCounts::new(b);
        for i in 0..b {
            for j in 0..b {
                t.counts[j * b + i] = self.get(i, j);
            }
        }
        t
    }

    pub fn truth_marginal(&self) -> Vec<u64> {
        (0..self.bins)
            .map(|i| (0..self.bins).map(|j| self.get(i, j)).sum())
            .collect()
    }

    pub fn pred_marginal(&self) -> Vec<u64> {
        (0..self.bins)
            .map(|j| (0..self.bins).map(|i| self.get(i, j)).sum())
            .collect()
    }
}

/// Equal-width bin of a `[0, 1]` value; out-of-range values are clamped.
pub fn score_bin(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

/// Shannon entropy of a count vector.
pub fn entropy(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Plug-in estimate of I(Y; Ŷ) in nats, with `0·ln 0 = 0`.
pub fn mutual_information(counts: &JointCounts) -> f64 {
    let n = counts.total();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let py = counts.truth_marginal();
    let pp = counts.pred_marginal();
    let mut mi = 0.0;
    for i in 0..counts.bins() {
        for j in 0..counts.bins() {
            let c = counts.get(i, j);
            if c == 0 {
                continue;
            }
            let c = c as f64;
            mi += c / n * (c * n / (py[i] as f64 * pp[j] as f64)).ln();
        }
    }
    // float noise can dip a hair below zero for independent tables
    mi.max(0.0)
}

pub fn igpp(delta_i: f64, params: usize) -> f64 {
    delta_i / params as f64
}

/// `None` when the gradient norm is zero (undefined, not zero).
pub fn iggp(delta_i: f64, params: usize, grad_norm: f64) -> Option<f64> {
    (grad_norm > 0.0).then(|| delta_i / (params as f64 * grad_norm))
}

/// Unweighted mean of per-class F1; a class with no support and no
/// predictions scores 0.
pub fn macro_f1(counts: &JointCounts) -> f64 {
    let b = counts.bins();
    let truth = counts.truth_marginal();
    let pred = counts.pred_marginal();
    let total: f64 = (0..b)
        .map(|k| {
            let tp = counts.get(k, k) as f64;
            let denom = truth[k] as f64 + pred[k] as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .sum();
    total / b as f64
}

pub fn accuracy(counts: &JointCounts) -> f64 {
    let n = counts.total();
    if n == 0 {
        return 0.0;
    }
    (0..counts.bins()).map(|k| counts.get(k, k)).sum::<u64>() as f64 / n as f64
}

pub fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / pred.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitKind {
    /// Gaussian residuals with `σ̂² = MSE`.
    Mse,
    /// Mean categorical cross-entropy.
    CrossEntropy,
}

/// Log-likelihood of `n` observations. A zero MSE gives `+∞`.
pub fn log_likelihood(kind: FitKind, fit: f64, n: usize) -> f64 {
    let n = n as f64;
    match kind {
        FitKind::Mse if fit <= 0.0 => f64::INFINITY,
        FitKind::Mse => -(n / 2.0) * ((2.0 * std::f64::consts::PI * fit).ln() + 1.0),
        FitKind::CrossEntropy => -n * fit,
    }
}

pub fn aic(k: usize, logl: f64) -> f64 {
    2.0 * k as f64 - 2.0 * logl
}

pub fn bic(k: usize, n: usize, logl: f64) -> f64 {
    k as f64 * (n as f64).ln() - 2.0 * logl
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mi_examples() {
        let uniform = JointCounts::from_rows(&[vec![5, 5], vec![5, 5]]);
        assert_eq!(mutual_information(&uniform), 0.0);
        let diag = JointCounts::from_rows(&[vec![7, 0], vec![0, 7]]);
        assert!((mutual_information(&diag) - 2f64.ln()).abs() < 1e-12);
        // (2/3)·ln(4/3) + (1/3)·ln(2/3), evaluated by hand
        let mixed = JointCounts::from_rows(&[vec![2, 1], vec![1, 2]]);
        let expected = (2.0 / 3.0) * (4.0f64 / 3.0).ln() + (1.0 / 3.0) * (2.0f64 / 3.0).ln();
        assert!((mutual_information(&mixed) - expected).abs() < 1e-12);
        assert!((mutual_information(&mixed) - 0.0566).abs() < 1e-4);
    }

    #[test]
    fn igpp_iggp() {
        assert_eq!(igpp(0.0, 10), 0.0);
        assert!((igpp(0.05, 1000) - 5e-5).abs() < 1e-18);
        assert_eq!(iggp(0.0, 1000, 0.5), Some(0.0));
        assert!((iggp(0.05, 1000, 0.5).unwrap() - 1e-4).abs() < 1e-18);
        assert_eq!(iggp(0.05, 1000, 0.0), None);
        let a = iggp(0.03, 77, 0.4).unwrap();
        let b = iggp(0.03, 77, 0.8).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_examples() {
        let perfect = JointCounts::from_rows(&[vec![4, 0, 0], vec![0, 4, 0], vec![0, 0, 4]]);
        assert_eq!(macro_f1(&perfect), 1.0);
        let majority = JointCounts::from_rows(&[vec![4, 0, 0], vec![4, 0, 0], vec![4, 0, 0]]);
        assert!((macro_f1(&majority) - 1.0 / 6.0).abs() < 1e-12);
        // class 2 absent from truth and prediction
        let absent = JointCounts::from_rows(&[vec![3, 0, 0], vec![0, 3, 0], vec![0, 0, 0]]);
        assert!((macro_f1(&absent) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_matches_accuracy_on_symmetric_errors() {
        // each class: 8 right, 1 to each other class
        let sym = JointCounts::from_rows(&[vec![8, 1, 1], vec![1, 8, 1], vec![1, 1, 8]]);
        assert!((macro_f1(&sym) - accuracy(&sym)).abs() < 1e-12);
        let skew = JointCounts::from_rows(&[vec![8, 2, 0], vec![0, 10, 0], vec![0, 2, 8]]);
        assert!((macro_f1(&skew) - accuracy(&skew)).abs() > 1e-3);
    }

    #[test]
    fn likelihood_and_criteria() {
        assert!((log_likelihood(FitKind::Mse, 0.0094, 100) - 91.45).abs() < 0.01);
        assert!((log_likelihood(FitKind::Mse, 0.0168, 100) - 62.42).abs() < 0.01);
        assert!((log_likelihood(FitKind::CrossEntropy, 1.0091, 100) + 100.91).abs() < 1e-9);
        assert_eq!(log_likelihood(FitKind::Mse, 0.0, 10), f64::INFINITY);
        assert!((aic(1042, 91.5) - 1901.0).abs() < 1e-9);
        assert!((bic(1042, 100, 91.5) - (1042.0 * 100f64.ln() - 183.0)).abs() < 1e-9);
        assert_eq!(aic(1, 0.0), 2.0);
        assert!((bic(1, 37, 0.0) - 37f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn bins() {
        assert_eq!(score_bin(0.0, 4), 0);
        assert_eq!(score_bin(0.25, 4), 1);
        assert_eq!(score_bin(0.9999, 4), 3);
        assert_eq!(score_bin(1.0, 4), 3);
        let c = JointCounts::from_scores(4, &[0.1, 0.9], &[0.1, 0.6]);
        assert_eq!(c.get(0, 0), 1);
        assert_eq!(c.get(3, 2), 1);
    }

    proptest! {
        #[test]
        fn mi_bounds_and_symmetry(cells in proptest::collection::vec(0u64..20, 9)) {
            prop_assume!(cells.iter().sum::<u64>() > 0);
            let c = JointCounts::from_rows(&[cells[0..3].to_vec(), cells[3..6].to_vec(), cells[6..9].to_vec()]);
            let mi = mutual_information(&c);
            let bound = entropy(&c.truth_marginal()).min(entropy(&c.pred_marginal()));
            prop_assert!(mi >= 0.0);
            prop_assert!(mi <= bound + 1e-12);
            prop_assert!((mi - mutual_information(&c.transpose())).abs() < 1e-12);
            let f1 = macro_f1(&c);
            prop_assert!((0.0..=1.0).contains(&f1));
        }

        #[test]
        fn criteria_increase_with_k(k in 1usize..5000, logl in -500.0f64..500.0, n in 2usize..1000) {
            prop_assert!(aic(k + 1, logl) > aic(k, logl));
            prop_assert!(bic(k + 1, n, logl) > bic(k, n, logl));
        }
    }
}
