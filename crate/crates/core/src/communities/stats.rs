//! Rank-based group comparison and partition agreement.

use std::collections::HashMap;

use serde::Serialize;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KruskalWallis {
    pub h_statistic: f64,
    pub p_value: f64,
    pub df: usize,
}

/// Upper tail `P(χ²_df > x)` via the regularized upper incomplete gamma
/// function `Q(df/2, x/2)`.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}

/// Midranks (1-based) of `values`; tied values share the mean of their ranks.
/// Also returns `Σ (t³ - t)` over tie groups.
fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut tie_term = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        let t = (end - start) as f64;
        tie_term += t * t * t - t;
        start = end;
    }
    (ranks, tie_term)
}

/// Kruskal-Wallis H test with midrank tie correction. The p-value comes from
/// the chi-square distribution with `groups - 1` degrees of freedom.
pub fn kruskal_wallis<G: AsRef<[f64]>>(groups: &[G]) -> Result<KruskalWallis> {
    if groups.len() < 2 {
        return Err(Error::contract("Kruskal-Wallis needs at least two groups"));
    }
    if let Some(i) = groups.iter().position(|g| g.as_ref().is_empty()) {
        return Err(Error::contract(format!("group {i} is empty")));
    }
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    if pooled.iter().any(|v| v.is_nan()) {
        return Err(Error::contract("Kruskal-Wallis input contains NaN"));
    }
    let n = pooled.len();
    if n < 3 {
        return Err(Error::contract("Kruskal-Wallis needs at least three observations"));
    }
    let df = groups.len() - 1;
    let (ranks, tie_term) = midranks(&pooled);
    let nf = n as f64;
    let tie_correction = 1.0 - tie_term / (nf * nf * nf - nf);
    if tie_correction <= 0.0 {
        // Every value identical: no evidence of any group effect.
        return Ok(KruskalWallis { h_statistic: 0.0, p_value: 1.0, df });
    }

    let mut offset = 0;
    let mut weighted = 0.0;
    for g in groups {
        let len = g.as_ref().len();
        let rank_sum: f64 = ranks[offset..offset + len].iter().sum();
        weighted += rank_sum * rank_sum / len as f64;
        offset += len;
    }
    let raw = 12.0 / (nf * (nf + 1.0)) * weighted - 3.0 * (nf + 1.0);
    // Tiny negative values are rounding noise around H = 0.
    let h = (raw / tie_correction).max(0.0);
    Ok(KruskalWallis {
        h_statistic: h,
        p_value: chi_square_sf(h, df),
        df,
    })
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract("labelings have different lengths"));
    }
    let n = a.len() as f64;
    let pairs = |c: f64| c * (c - 1.0) / 2.0;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut rows: HashMap<usize, f64> = HashMap::new();
    let mut cols: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let index: f64 = joint.values().map(|&c| pairs(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        // Both partitions trivial (all-one-cluster or all-singletons).
        return Ok(if index == expected { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max_index - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn separated_groups() {
        let kw = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        // 12/42 · (36/3 + 225/3) - 21 = 27/7
        assert_abs_diff_eq!(kw.h_statistic, 27.0 / 7.0, epsilon = 1e-12);
        assert_eq!(kw.df, 1);
        assert!(kw.p_value < 0.05 && kw.p_value > 0.04);
    }

    #[test]
    fn identical_groups_use_midranks() {
        let kw = kruskal_wallis(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_abs_diff_eq!(kw.h_statistic, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(kw.p_value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn all_tied() {
        let kw = kruskal_wallis(&[vec![5.0], vec![5.0], vec![5.0]]).unwrap();
        assert_eq!(kw.h_statistic, 0.0);
        assert_eq!(kw.p_value, 1.0);
        assert_eq!(kw.df, 2);
    }

    #[test]
    fn tie_correction_matches_hand_value() {
        // Pooled [1,1,2,3] ranks [1.5,1.5,3,4]; groups {1,2} {1,3}.
        // Raw H = 12/20·(4.5²/2 + 5.5²/2) - 15 = 0.15, ties Σ(t³-t) = 6,
        // correction 1 - 6/60 = 0.9, H = 1/6.
        let kw = kruskal_wallis(&[vec![1.0, 2.0], vec![1.0, 3.0]]).unwrap();
        assert_abs_diff_eq!(kw.h_statistic, 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn contract_violations() {
        assert!(kruskal_wallis(&[vec![1.0, 2.0, 3.0]]).is_err());
        assert!(kruskal_wallis(&[vec![1.0], Vec::new()]).is_err());
        assert!(kruskal_wallis(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn chi_square_closed_forms() {
        for &x in &[0.1, 1.0, 3.8571, 10.0] {
            // df = 2 is exponential with mean 2.
            assert_abs_diff_eq!(chi_square_sf(x, 2), (-x / 2.0).exp(), epsilon = 1e-12);
        }
        // df = 1 at the 95% quantile.
        assert_abs_diff_eq!(chi_square_sf(3.8414588206941285, 1), 0.05, epsilon = 1e-10);
        assert_eq!(chi_square_sf(0.0, 3), 1.0);
    }

    #[test]
    fn ari_values() {
        assert_abs_diff_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 1.0);
        // Reference values from scikit-learn's adjusted_rand_score.
        assert_abs_diff_eq!(
            adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]).unwrap(),
            0.5714285714285714,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]).unwrap(),
            0.24242424242424243,
            epsilon = 1e-12
        );
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }
}
