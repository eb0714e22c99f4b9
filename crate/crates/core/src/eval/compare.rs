//! Paired per-fold comparison of one method against baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::EvalError;

/// Value substituted for a fold on which a method produced no metric.
pub const MISSING_METRIC: f64 = 0.5;
pub const BOOTSTRAP_RESAMPLES: usize = 2000;
/// Largest number of non-zero differences tested with the exact signed-rank distribution.
pub const EXACT_WILCOXON_MAX: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub baseline: String,
    pub folds: usize,
    /// Mean of `reference - baseline` over folds.
    pub mean_delta: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `None` when the differences have zero spread and a non-zero mean.
    pub t_statistic: Option<f64>,
    pub p_t: f64,
    pub p_wilcoxon: f64,
    pub p_t_holm: f64,
    pub p_wilcoxon_holm: f64,
    pub cohens_d: Option<f64>,
    pub imputed_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference: String,
    pub baselines: Vec<BaselineComparison>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Two-sided paired t-test on differences. Zero spread is an exact result:
/// p = 1 for a zero mean and p = 0 otherwise.
pub fn paired_t(diffs: &[f64]) -> (Option<f64>, f64) {
    let n = diffs.len();
    let m = mean(diffs);
    let sd = sample_sd(diffs);
    if sd == 0.0 || !sd.is_finite() {
        return if m == 0.0 { (Some(0.0), 1.0) } else { (None, 0.0) };
    }
    let t = m / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("degrees of freedom >= 1");
    (Some(t), (2.0 * (1.0 - dist.cdf(t.abs()))).min(1.0))
}

/// Average ranks of `values` (1-based), doubled so ties stay integral.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j; doubled average is i+1+j
        for &k in &order[i..j] {
            ranks[k] = (i + 1 + j) as u64;
        }
        i = j;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank p-value. Zero differences are dropped.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> f64 {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return 1.0;
    }
    let abs: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w_plus: u64 = ranks.iter().zip(&nz).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    if n <= EXACT_WILCOXON_MAX {
        let total: u64 = ranks.iter().sum();
        // counts[s] = number of sign assignments with doubled W+ equal to s
        let mut counts = vec![0f64; total as usize + 1];
        counts[0] = 1.0;
        let mut reach = 0usize;
        for &r in &ranks {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] != 0.0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let all = 2f64.powi(n as i32);
        let lower: f64 = counts[..=w_plus as usize].iter().sum::<f64>() / all;
        let upper: f64 = counts[w_plus as usize..].iter().sum::<f64>() / all;
        (2.0 * lower.min(upper)).min(1.0)
    } else {
        let nf = n as f64;
        let mu = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        for chunk in sorted.chunk_by(|a, b| a == b) {
            let t = chunk.len() as f64;
            tie_term += t * t * t - t;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        if var <= 0.0 {
            return 1.0;
        }
        let w = w_plus as f64 / 2.0;
        let z = ((w - mu).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * (1.0 - normal.cdf(z))).min(1.0)
    }
}

/// Holm–Bonferroni step-down adjustment, returned in input order.
pub fn holm_bonferroni(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p[i]).min(1.0));
        out[i] = running;
    }
    out
}

/// Percentile bootstrap 95% interval of the mean difference.
pub fn bootstrap_mean_ci(diffs: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let n = diffs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| diffs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (means.len() - 1) as f64 * p;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        if lo + 1 < means.len() {
            means[lo] + frac * (means[lo + 1] - means[lo])
        } else {
            means[lo]
        }
    };
    (q(0.025), q(0.975))
}

pub fn cohens_d(diffs: &[f64]) -> Option<f64> {
    let m = mean(diffs);
    let sd = sample_sd(diffs);
    if sd > 0.0 {
        Some(m / sd)
    } else if m == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Compares `methods[reference]` against every other method over paired folds.
///
/// `matrix[m][f]` is method `m`'s metric on fold `f`; missing cells count as
/// [`MISSING_METRIC`].
pub fn paired_comparison(
    methods: &[String],
    matrix: &[Vec<Option<f64>>],
    reference: usize,
    seed: u64,
) -> Result<ComparisonReport, EvalError> {
    if methods.len() < 2 || matrix.len() != methods.len() {
        return Err(EvalError::InvalidInput(format!(
            "need at least two methods with one row each, got {} names and {} rows",
            methods.len(),
            matrix.len()
        )));
    }
    if reference >= methods.len() {
        return Err(EvalError::InvalidInput(format!("reference index {reference} out of range")));
    }
    let folds = matrix[0].len();
    if matrix.iter().any(|row| row.len() != folds) {
        return Err(EvalError::InvalidInput("metric rows have different fold counts".into()));
    }
    if folds < 2 {
        return Err(EvalError::InsufficientFolds(folds));
    }
    let filled = |row: &[Option<f64>]| -> Vec<f64> { row.iter().map(|c| c.unwrap_or(MISSING_METRIC)).collect() };
    let ref_row = filled(&matrix[reference]);
    let mut baselines = Vec::new();
    for (i, row) in matrix.iter().enumerate() {
        if i == reference {
            continue;
        }
        let base = filled(row);
        let diffs: Vec<f64> = ref_row.iter().zip(&base).map(|(a, b)| a - b).collect();
        let (t_statistic, p_t) = paired_t(&diffs);
        let (ci_low, ci_high) = bootstrap_mean_ci(&diffs, BOOTSTRAP_RESAMPLES, seed.wrapping_add(i as u64));
        baselines.push(BaselineComparison {
            baseline: methods[i].clone(),
            folds,
            mean_delta: mean(&diffs),
            ci_low,
            ci_high,
            t_statistic,
            p_t,
            p_wilcoxon: wilcoxon_signed_rank(&diffs),
            p_t_holm: 0.0,
            p_wilcoxon_holm: 0.0,
            cohens_d: cohens_d(&diffs),
            imputed_cells: matrix[reference].iter().zip(row).filter(|(a, b)| a.is_none() || b.is_none()).count(),
        });
    }
    let adj_t = holm_bonferroni(&baselines.iter().map(|b| b.p_t).collect::<Vec<_>>());
    let adj_w = holm_bonferroni(&baselines.iter().map(|b| b.p_wilcoxon).collect::<Vec<_>>());
    for (b, (t, w)) in baselines.iter_mut().zip(adj_t.into_iter().zip(adj_w)) {
        b.p_t_holm = t;
        b.p_wilcoxon_holm = w;
    }
    Ok(ComparisonReport { reference: methods[reference].clone(), baselines })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn identical_columns_are_null() {
        let row: Vec<Option<f64>> = [0.7, 0.8, 0.75, 0.9].iter().map(|&x| Some(x)).collect();
        let r = paired_comparison(&names(2), &[row.clone(), row], 0, 1).unwrap();
        let b = &r.baselines[0];
        assert_eq!(b.mean_delta, 0.0);
        assert_eq!(b.p_t, 1.0);
        assert_eq!(b.p_wilcoxon, 1.0);
        assert_eq!(b.cohens_d, Some(0.0));
    }

    #[test]
    fn constant_shift_is_exact_win() {
        let base: Vec<Option<f64>> = (0..40).map(|i| Some(0.6 + 0.005 * i as f64)).collect();
        let better: Vec<Option<f64>> = base.iter().map(|x| x.map(|v| v + 0.1)).collect();
        let r = paired_comparison(&names(2), &[better, base], 0, 1).unwrap();
        let b = &r.baselines[0];
        assert!((b.mean_delta - 0.1).abs() < 1e-12);
        assert!(b.p_t < 0.001);
        assert!(b.p_wilcoxon < 0.001);
    }

    #[test]
    fn swapping_negates_delta_and_d() {
        let a: Vec<Option<f64>> = [0.70, 0.82, 0.64, 0.91, 0.77].iter().map(|&x| Some(x)).collect();
        let b: Vec<Option<f64>> = [0.68, 0.80, 0.69, 0.85, 0.71].iter().map(|&x| Some(x)).collect();
        let ab = paired_comparison(&names(2), &[a.clone(), b.clone()], 0, 3).unwrap();
        let ba = paired_comparison(&names(2), &[b, a], 0, 3).unwrap();
        let (x, y) = (&ab.baselines[0], &ba.baselines[0]);
        assert!((x.mean_delta + y.mean_delta).abs() < 1e-15);
        assert!((x.cohens_d.unwrap() + y.cohens_d.unwrap()).abs() < 1e-12);
        assert!((x.p_t - y.p_t).abs() < 1e-12);
        assert_eq!(x.p_wilcoxon, y.p_wilcoxon);
    }

    #[test]
    fn missing_cells_become_half() {
        let a = vec![Some(0.9), None, Some(0.8)];
        let b = vec![Some(0.5), Some(0.5), Some(0.5)];
        let r = paired_comparison(&names(2), &[a, b], 0, 0).unwrap();
        assert_eq!(r.baselines[0].imputed_cells, 1);
        assert!((r.baselines[0].mean_delta - 0.7 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_folds() {
        let r = paired_comparison(&names(2), &[vec![Some(0.5)], vec![Some(0.6)]], 0, 0);
        assert_eq!(r, Err(EvalError::InsufficientFolds(1)));
    }

    #[test]
    fn exact_wilcoxon_small_table() {
        // n = 5 all positive: W+ = 15, P(W+ >= 15) = 1/32, two-sided 1/16
        assert!((wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0]) - 0.0625).abs() < 1e-15);
        // n = 4, ranks with one negative of rank 1: W+ = 9, P(W+ >= 9) = 2/16
        assert!((wilcoxon_signed_rank(&[-1.0, 2.0, 3.0, 4.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn normal_approximation_is_close_to_exact_near_cutover() {
        let diffs: Vec<f64> = (1..=50).map(|i| if i % 3 == 0 { -(i as f64) } else { i as f64 }).collect();
        let exact = wilcoxon_signed_rank(&diffs);
        let mut longer = diffs.clone();
        longer.push(0.0);
        longer.push(51.0);
        let approx = wilcoxon_signed_rank(&longer);
        assert!(exact > 0.0 && approx > 0.0);
        assert!((exact.ln() - approx.ln()).abs() < 1.0);
    }

    #[test]
    fn holm_adjustment() {
        let adj = holm_bonferroni(&[0.01, 0.04, 0.03]);
        assert_eq!(adj, vec![0.03, 0.06, 0.06]);
    }
}
