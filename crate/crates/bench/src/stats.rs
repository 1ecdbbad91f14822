//! Summary statistics and the two-sided Wilcoxon rank-sum test.

use eldt_core::env::Sum;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("cannot aggregate an empty sample")]
    Empty,
}

/// Arithmetic mean and sample standard deviation (n - 1 denominator; 0 for
/// a single value).
pub fn aggregate(values: &[f64]) -> Result<(f64, f64), StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = values.len() as f64;
    let mut sum = Sum::default();
    values.iter().for_each(|&v| sum.add(v));
    let mean = sum.value() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let mut sq = Sum::default();
    values.iter().for_each(|&v| sq.add((v - mean) * (v - mean)));
    Ok((mean, (sq.value() / (n - 1.0)).sqrt()))
}

/// Ranks 1..=n with ties sharing their mean rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Largest combined size for which the p-value is computed by enumerating
/// every split of the pooled ranks.
pub const EXACT_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSum {
    /// Mann-Whitney U of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub exact: bool,
}

/// Two-sided rank-sum test. Exact over all relabelings when the pooled
/// size is at most 12, otherwise the normal approximation with tie and
/// continuity corrections.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<RankSum, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Empty);
    }
    let (na, nb) = (a.len(), b.len());
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let w: f64 = ranks[..na].iter().sum();
    let u = w - (na * (na + 1)) as f64 / 2.0;
    let mu = (na * (n + 1)) as f64 / 2.0;

    if n <= EXACT_LIMIT {
        let observed = (w - mu).abs();
        let (mut extreme, mut total) = (0u64, 0u64);
        for_each_subset(n, na, &mut |subset| {
            let s: f64 = subset.iter().map(|&i| ranks[i]).sum();
            total += 1;
            if (s - mu).abs() >= observed - 1e-9 {
                extreme += 1;
            }
        });
        return Ok(RankSum { u, p: extreme as f64 / total as f64, exact: true });
    }

    let ties: f64 = tie_sizes(&pooled).iter().map(|&t| t * t * t - t).sum();
    let (naf, nbf, nf) = (na as f64, nb as f64, n as f64);
    let var = naf * nbf / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(RankSum { u, p: 1.0, exact: false });
    }
    let z = ((u - naf * nbf / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    let phi = Normal::new(0.0, 1.0).expect("standard normal").cdf(z);
    Ok(RankSum { u, p: (2.0 * (1.0 - phi)).min(1.0), exact: false })
}

fn tie_sizes(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < v.len() {
        let j = v[i..].iter().take_while(|&&x| x == v[i]).count();
        sizes.push(j as f64);
        i += j;
    }
    sizes
}

fn for_each_subset(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..=n - (k - cur.len()) {
            cur.push(i);
            go(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    go(0, n, k, &mut Vec::with_capacity(k), f);
}
