//! Significance testing: paired one-tailed t-test, Iman-Davenport adjusted
//! Friedman test and the Bonferroni-Dunn post-hoc critical difference.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use super::EvalError;

/// One-tailed p-value for `mean(a) > mean(b)` over paired samples.
///
/// Differences with no spread are decided directly: p = 0 when `a` is ahead,
/// p = 1 otherwise.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(EvalError::TooFewRows {
            needed: 2,
            found: n,
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        return Ok(if mean > 0.0 { 0.0 } else { 1.0 });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    Ok(dist.sf(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Better,
    Worse,
    Equal,
}

impl Outcome {
    pub fn flip(self) -> Outcome {
        match self {
            Outcome::Better => Outcome::Worse,
            Outcome::Worse => Outcome::Better,
            Outcome::Equal => Outcome::Equal,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Outcome::Better => '+',
            Outcome::Worse => '-',
            Outcome::Equal => '=',
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Row-vs-column paired t-test outcomes over per-fold values (larger is better).
pub fn pairwise_t_tests(values: &[Vec<f64>], alpha: f64) -> Result<Vec<Vec<Outcome>>, EvalError> {
    let k = values.len();
    let mut out = vec![vec![Outcome::Equal; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let outcome = if paired_t_test(&values[i], &values[j])? < alpha {
                Outcome::Better
            } else if paired_t_test(&values[j], &values[i])? < alpha {
                Outcome::Worse
            } else {
                Outcome::Equal
            };
            out[i][j] = outcome;
            out[j][i] = outcome.flip();
        }
    }
    Ok(out)
}

/// Ranks within one dataset: 1 for the largest value, ties share the average.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        let r = (start + end + 2) as f64 / 2.0;
        for &i in &order[start..=end] {
            ranks[i] = r;
        }
        start = end + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub mean_ranks: Vec<f64>,
    pub chi_square: f64,
    /// Iman-Davenport statistic.
    pub f_statistic: f64,
    pub p_value: f64,
}

/// Adjusted Friedman test on a datasets x classifiers matrix of scores.
pub fn friedman(matrix: &[Vec<f64>]) -> Result<FriedmanResult, EvalError> {
    let n = matrix.len();
    let k = matrix.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(EvalError::DegenerateMatrix(format!(
            "need at least 2 datasets and 2 classifiers, got {n} x {k}"
        )));
    }
    if let Some(row) = matrix.iter().position(|r| r.len() != k) {
        return Err(EvalError::DegenerateMatrix(format!(
            "row {row} has {} entries, expected {k}",
            matrix[row].len()
        )));
    }
    let mut rank_sums = vec![0.0; k];
    for row in matrix {
        for (m, r) in rank_sums.iter_mut().zip(average_ranks(row)) {
            *m += r;
        }
    }
    let mean_ranks: Vec<f64> = rank_sums.iter().map(|s| s / n as f64).collect();
    let (nf, kf) = (n as f64, k as f64);
    let chi_square = 12.0 * nf / (kf * (kf + 1.0))
        * (mean_ranks.iter().map(|r| r * r).sum::<f64>() - kf * (kf + 1.0).powi(2) / 4.0);
    let chi_square = chi_square.max(0.0);
    let denom = nf * (kf - 1.0) - chi_square;
    let (f_statistic, p_value) = if chi_square <= 1e-12 {
        (0.0, 1.0)
    } else if denom <= 1e-12 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (nf - 1.0) * chi_square / denom;
        let dist = FisherSnedecor::new(kf - 1.0, (kf - 1.0) * (nf - 1.0))
            .expect("positive degrees of freedom");
        (f, dist.sf(f))
    };
    Ok(FriedmanResult {
        mean_ranks,
        chi_square,
        f_statistic,
        p_value,
    })
}

/// Two-tailed Bonferroni-Dunn critical difference in mean rank.
pub fn bonferroni_dunn_cd(k: usize, n: usize, alpha: f64) -> f64 {
    let q = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - alpha / (2.0 * (k as f64 - 1.0)));
    q * (k as f64 * (k as f64 + 1.0) / (6.0 * n as f64)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub friedman: FriedmanResult,
    pub alpha: f64,
    pub rejected: bool,
    pub critical_difference: f64,
    pub reference: usize,
    /// Row classifier vs column classifier by mean-rank difference.
    pub pairwise: Vec<Vec<Outcome>>,
    /// Reference vs every classifier.
    pub post_hoc: Vec<Outcome>,
}

/// Friedman test followed, if it rejects, by Bonferroni-Dunn comparisons.
/// Nothing is declared different when the Friedman test does not reject.
pub fn friedman_bonferroni(
    matrix: &[Vec<f64>],
    reference: usize,
    alpha: f64,
) -> Result<SignificanceReport, EvalError> {
    let friedman = friedman(matrix)?;
    let k = friedman.mean_ranks.len();
    if reference >= k {
        return Err(EvalError::DegenerateMatrix(format!(
            "reference {reference} out of range for {k} classifiers"
        )));
    }
    let critical_difference = bonferroni_dunn_cd(k, matrix.len(), alpha);
    let rejected = friedman.p_value < alpha;
    let compare = |i: usize, j: usize| {
        let gap = friedman.mean_ranks[j] - friedman.mean_ranks[i];
        if !rejected || gap.abs() <= critical_difference {
            Outcome::Equal
        } else if gap > 0.0 {
            Outcome::Better
        } else {
            Outcome::Worse
        }
    };
    let pairwise: Vec<Vec<Outcome>> = (0..k)
        .map(|i| (0..k).map(|j| compare(i, j)).collect())
        .collect();
    let post_hoc = pairwise[reference].clone();
    Ok(SignificanceReport {
        friedman,
        alpha,
        rejected,
        critical_difference,
        reference,
        pairwise,
        post_hoc,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// ln Gamma(x) for x a positive multiple of 1/2.
    fn ln_gamma_half(x: f64) -> f64 {
        let mut acc = 0.0;
        let mut y = x;
        while y > 1.0 {
            y -= 1.0;
            acc += y.ln();
        }
        if (y - 0.5).abs() < 1e-12 {
            acc + std::f64::consts::PI.sqrt().ln()
        } else {
            acc
        }
    }

    /// Upper tail of Student's t by Simpson integration of the density over [|t|, |t| + 1000].
    pub(crate) fn t_upper_tail(t: f64, df: f64) -> f64 {
        let c = (ln_gamma_half((df + 1.0) / 2.0) - ln_gamma_half(df / 2.0)).exp()
            / (df * std::f64::consts::PI).sqrt();
        let pdf = |x: f64| c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        let (a, b) = if t >= 0.0 {
            (t, t + 1000.0)
        } else {
            (-t, -t + 1000.0)
        };
        let steps = 400_000;
        let h = (b - a) / steps as f64;
        let mut s = pdf(a) + pdf(b);
        for i in 1..steps {
            s += pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        // remaining tail from its algebraic asymptote
        let tail = c * df.powf((df + 1.0) / 2.0) * b.powf(-df) / df;
        let upper = s * h / 3.0 + tail;
        if t >= 0.0 {
            upper
        } else {
            1.0 - upper
        }
    }

    #[test]
    fn degenerate_conventions() {
        let a = [0.9, 0.8, 0.85];
        assert_eq!(paired_t_test(&a, &a).unwrap(), 1.0);
        assert_eq!(
            paired_t_test(&[1.5, 2.5, 3.5], &[1.0, 2.0, 3.0]).unwrap(),
            0.0
        );
        assert!(matches!(
            paired_t_test(&[1.0], &[1.0, 2.0]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn paired_t_against_simpson_oracle() {
        assert!(paired_t_test(&[0.9, 0.8, 0.85], &[0.7, 0.6, 0.65]).unwrap() < 1e-6);
        let a = [0.9, 0.8, 0.85];
        let b = [0.7, 0.6, 0.66];
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / 3.0;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        let t = mean / (sd / 3f64.sqrt());
        assert!((paired_t_test(&a, &b).unwrap() - t_upper_tail(t, 2.0)).abs() < 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(2..12);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.0)).collect();
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            let m = d.iter().sum::<f64>() / n as f64;
            let s = (d.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            let t = m / (s / (n as f64).sqrt());
            let oracle = t_upper_tail(t, (n - 1) as f64);
            assert!(
                (paired_t_test(&a, &b).unwrap() - oracle).abs() < 1e-6,
                "n={n} t={t}"
            );
        }
    }

    #[test]
    fn ranks_share_ties() {
        assert_eq!(average_ranks(&[0.9, 0.7, 0.9, 0.5]), [1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn identical_classifiers_are_all_equal() {
        let m = vec![vec![0.8; 4]; 6];
        let r = friedman_bonferroni(&m, 0, 0.05).unwrap();
        assert!(!r.rejected);
        assert_eq!(r.friedman.p_value, 1.0);
        assert!(r.pairwise.iter().flatten().all(|&o| o == Outcome::Equal));
    }

    #[test]
    fn critical_difference_formula() {
        let q = 2.638;
        let cd = bonferroni_dunn_cd(7, 30, 0.05);
        assert!((cd - q * (7.0 * 8.0 / 180.0f64).sqrt()).abs() < 2e-3);
    }

    #[test]
    fn dominant_classifier_beats_the_worst() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Vec::new();
        for _ in 0..30 {
            let mut row = vec![0.99];
            let mut rest: Vec<f64> = (0..6).map(|i| 0.9 - 0.05 * f64::from(i)).collect();
            // keep a stable worst classifier, shuffle the middle
            let a = rng.random_range(0..5);
            let b = rng.random_range(0..5);
            rest.swap(a, b);
            row.extend(rest);
            m.push(row);
        }
        let r = friedman_bonferroni(&m, 0, 0.05).unwrap();
        assert!(r.rejected);
        let worst = (0..7)
            .max_by(|&i, &j| r.friedman.mean_ranks[i].total_cmp(&r.friedman.mean_ranks[j]))
            .unwrap();
        assert_eq!(r.post_hoc[worst], Outcome::Better);
        assert_eq!(r.friedman.mean_ranks[0], 1.0);
    }

    #[test]
    fn pairwise_matrices_are_antisymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let m: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let r = friedman_bonferroni(&m, 0, 0.05).unwrap();
            let folds: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..10).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect();
            let t = pairwise_t_tests(&folds, 0.05).unwrap();
            for mat in [&r.pairwise, &t] {
                for (i, row) in mat.iter().enumerate() {
                    for (j, o) in row.iter().enumerate() {
                        assert_eq!(*o, mat[j][i].flip());
                    }
                }
            }
        }
    }
}
