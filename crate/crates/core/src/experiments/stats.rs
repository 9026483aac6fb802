//! Rank tests and interval summaries.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Pooled size up to which [`mann_whitney_u`] enumerates the exact null
/// distribution instead of using the normal approximation.
pub const EXACT_MAX_POOLED: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitney {
    /// `U` statistic of the first sample: the number of (a, b) pairs with
    /// `a > b`, ties counting one half.
    pub u: f64,
    pub p_two_sided: f64,
    pub method: PValueMethod,
}

/// Midranks (1-based) of `values`, in input order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i..j (0-based) share ranks i+1..=j.
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn pooled_ranks(a: &[f64], b: &[f64]) -> Vec<f64> {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    midranks(&pooled)
}

fn u_from_ranks(rank_sum: f64, n: usize) -> f64 {
    rank_sum - (n * (n + 1)) as f64 / 2.0
}

/// Two-sided Mann-Whitney U test. Exact when the pooled size is at most
/// [`EXACT_MAX_POOLED`], otherwise normal with tie and continuity
/// correction.
///
/// # Panics
///
/// If either sample is empty.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> MannWhitney {
    if a.len() + b.len() <= EXACT_MAX_POOLED {
        mann_whitney_exact(a, b)
    } else {
        mann_whitney_normal(a, b)
    }
}

/// Exact permutation distribution of `U` given the observed (possibly
/// tied) pooled ranks.
pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> MannWhitney {
    assert!(!a.is_empty() && !b.is_empty(), "samples must be non-empty");
    let (n, m) = (a.len(), b.len());
    let ranks = pooled_ranks(a, b);
    // Midranks are multiples of 1/2, so doubled rank sums are integers.
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let obs: usize = doubled[..n].iter().sum();
    let max_sum: usize = doubled.iter().sum();

    // ways[k][s]: subsets of size k with doubled rank sum s.
    let mut ways = vec![vec![0f64; max_sum + 1]; n + 1];
    ways[0][0] = 1.0;
    for &r in &doubled {
        for k in (1..=n).rev() {
            let (lo, hi) = ways.split_at_mut(k);
            for s in (r..=max_sum).rev() {
                hi[0][s] += lo[k - 1][s - r];
            }
        }
    }
    let total: f64 = ways[n].iter().sum();
    // Centre of the U distribution, in doubled rank-sum units.
    let centre2 = (n * (n + m + 1)) as f64;
    let obs_dev = (obs as f64 - centre2).abs();
    let extreme: f64 = ways[n]
        .iter()
        .enumerate()
        .filter(|&(s, _)| (s as f64 - centre2).abs() >= obs_dev - 1e-9)
        .map(|(_, w)| *w)
        .sum();
    MannWhitney {
        u: u_from_ranks(obs as f64 / 2.0, n),
        p_two_sided: (extreme / total).min(1.0),
        method: PValueMethod::Exact,
    }
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity
/// correction.
pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> MannWhitney {
    assert!(!a.is_empty() && !b.is_empty(), "samples must be non-empty");
    let (n, m) = (a.len() as f64, b.len() as f64);
    let ranks = pooled_ranks(a, b);
    let u = u_from_ranks(ranks[..a.len()].iter().sum(), a.len());

    let big_n = n + m;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie_term += t * t * t - t;
        i += j;
    }
    let var = n * m / 12.0 * ((big_n + 1.0) - tie_term / (big_n * (big_n - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - n * m / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
        let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
        (2.0 * std_normal.sf(z)).min(1.0)
    };
    MannWhitney {
        u,
        p_two_sided: p,
        method: PValueMethod::Normal,
    }
}

/// Sample mean with a two-sided 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

pub fn summarize(sample: &[f64]) -> Summary {
    let n = sample.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            std_dev: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
        };
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Summary {
            n,
            mean,
            std_dev: 0.0,
            ci_low: mean,
            ci_high: mean,
        };
    }
    let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.975);
    let half = t * sd / (n as f64).sqrt();
    Summary {
        n,
        mean,
        std_dev: sd,
        ci_low: mean - half,
        ci_high: mean + half,
    }
}

/// Per-comparison significance level after Bonferroni correction.
pub fn bonferroni_alpha(alpha: f64, comparisons: usize) -> f64 {
    alpha / comparisons.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(midranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn separated_samples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        assert_eq!(r.u, 0.0);
        assert_abs_diff_eq!(r.p_two_sided, 0.1, epsilon = 1e-12);
        assert_eq!(r.method, PValueMethod::Exact);
        let r = mann_whitney_u(&[4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]);
        assert_eq!(r.u, 9.0);
        assert_abs_diff_eq!(r.p_two_sided, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn identical_samples() {
        let a = [0.3, 0.5, 0.9, 0.9];
        assert_eq!(mann_whitney_u(&a, &a).p_two_sided, 1.0);
        let big: Vec<f64> = (0..30).map(|i| (i % 7) as f64).collect();
        assert_eq!(mann_whitney_u(&big, &big).p_two_sided, 1.0);
        assert_eq!(mann_whitney_u(&[1.0; 20], &[1.0; 20]).p_two_sided, 1.0);
    }

    #[test]
    fn large_samples_use_normal() {
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = (10..30).map(f64::from).collect();
        let r = mann_whitney_u(&a, &b);
        assert_eq!(r.method, PValueMethod::Normal);
        assert_eq!(r.u, 50.0);
        assert!(r.p_two_sided < 0.01);
    }

    #[test]
    fn summary_interval() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        // t(0.975, 3) = 3.182446305...
        let half = 3.182_446_305_284_263 * s.std_dev / 2.0;
        assert_abs_diff_eq!(s.ci_high - s.mean, half, epsilon = 1e-9);
        let s = summarize(&[0.7]);
        assert_eq!((s.ci_low, s.ci_high), (0.7, 0.7));
    }

    #[test]
    fn bonferroni() {
        assert_abs_diff_eq!(bonferroni_alpha(0.05, 6), 0.05 / 6.0);
        assert_eq!(bonferroni_alpha(0.05, 0), 0.05);
    }
}
