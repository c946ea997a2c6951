use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest pooled size for which `Auto` enumerates exactly.
pub const EXACT_MAX_POOLED: usize = 12;
const ENUMERATION_LIMIT: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankSumMethod {
    /// Exact enumeration up to `EXACT_MAX_POOLED` pooled samples, normal
    /// approximation with continuity correction above.
    Auto,
    /// Enumerate every assignment of the pooled midranks to the first sample.
    Exact,
    /// Tie-corrected normal approximation.
    Normal { continuity: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSumTest {
    /// Mann-Whitney `U` of the first sample.
    pub u: f64,
    /// Rank sum of the first sample.
    pub w: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: RankSumMethod,
}

/// Average ranks (1-based) of `values`, ties sharing their mean rank.
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
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) p-value with the `Auto`
/// method.
pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(wilcoxon_rank_sum_with(x, y, RankSumMethod::Auto)?.p_value)
}

pub fn wilcoxon_rank_sum_with(x: &[f64], y: &[f64], method: RankSumMethod) -> Result<RankSumTest> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySample);
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidRange("rank-sum input contains NaN".into()));
    }
    let (n, m) = (x.len(), y.len());
    let big_n = n + m;
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let w: f64 = ranks[..n].iter().sum();
    let u = w - (n * (n + 1)) as f64 / 2.0;
    let method = match method {
        RankSumMethod::Auto if big_n <= EXACT_MAX_POOLED => RankSumMethod::Exact,
        RankSumMethod::Auto => RankSumMethod::Normal { continuity: true },
        m => m,
    };
    let p_value = match method {
        RankSumMethod::Exact => {
            if big_n > ENUMERATION_LIMIT {
                return Err(Error::InvalidRange(format!(
                    "exact rank-sum enumeration limited to {ENUMERATION_LIMIT} pooled samples, got {big_n}"
                )));
            }
            exact_p(&ranks, n, w)
        }
        RankSumMethod::Normal { continuity } => normal_p(&ranks, n, m, u, continuity),
        RankSumMethod::Auto => unreachable!(),
    };
    Ok(RankSumTest {
        u,
        w,
        p_value,
        method,
    })
}

/// Share of all `C(N, n)` first-sample assignments whose rank sum lies at
/// least as far from its mean as the observed one.
fn exact_p(ranks: &[f64], n: usize, w: f64) -> f64 {
    let big_n = ranks.len();
    let mean = n as f64 * (big_n + 1) as f64 / 2.0;
    let observed = (w - mean).abs();
    // ranks are multiples of 1/2, so sums compare exactly after this slack
    let eps = 1e-9;
    let (mut total, mut extreme) = (0u64, 0u64);
    for bits in 0u32..(1 << big_n) {
        if bits.count_ones() as usize != n {
            continue;
        }
        let s: f64 = (0..big_n).filter(|&i| bits >> i & 1 == 1).map(|i| ranks[i]).sum();
        total += 1;
        if (s - mean).abs() >= observed - eps {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

fn normal_p(ranks: &[f64], n: usize, m: usize, u: f64, continuity: bool) -> f64 {
    let big_n = (n + m) as f64;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let (nf, mf) = (n as f64, m as f64);
    let var = nf * mf / 12.0 * ((big_n + 1.0) - ties / (big_n * (big_n - 1.0)).max(1.0));
    if var <= 0.0 {
        return 1.0;
    }
    let mut d = (u - nf * mf / 2.0).abs();
    if continuity {
        d = (d - 0.5).max(0.0);
    }
    let z = d / var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * std_normal.sf(z)).min(1.0)
}

/// `min(1, m·p)` for every p-value.
pub fn bonferroni(p_values: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidRange("bonferroni family size must be at least 1".into()));
    }
    p_values
        .iter()
        .map(|&p| {
            if (0.0..=1.0).contains(&p) {
                Ok((m as f64 * p).min(1.0))
            } else {
                Err(Error::InvalidRange(format!("p-value {p} outside [0, 1]")))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_samples_give_p_near_one() {
        let x = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.0, 3.5, 8.0, 7.9, 0.3, 6.6, 2.2, 4.4];
        for method in [RankSumMethod::Auto, RankSumMethod::Normal { continuity: true }] {
            assert!(wilcoxon_rank_sum_with(&x, &x, method).unwrap().p_value > 0.9);
        }
        assert!(wilcoxon_rank_sum(&x[..5], &x[..5]).unwrap() > 0.9);
    }

    #[test]
    fn separated_triples() {
        let (x, y) = ([1.0, 2.0, 3.0], [100.0, 101.0, 102.0]);
        // 2 of the C(6,3) = 20 assignments are this extreme
        let exact = wilcoxon_rank_sum_with(&x, &y, RankSumMethod::Exact).unwrap();
        assert!((exact.p_value - 0.1).abs() < 1e-15);
        assert_eq!(exact.u, 0.0);
        assert_eq!(wilcoxon_rank_sum(&x, &y).unwrap(), exact.p_value);
        // z = 4.5 / sqrt(5.25)
        let plain = wilcoxon_rank_sum_with(&x, &y, RankSumMethod::Normal { continuity: false }).unwrap();
        assert!((plain.p_value - 0.049_534_613_435_626_7).abs() < 1e-9);
        assert!(plain.p_value < 0.05);
        let cc = wilcoxon_rank_sum_with(&x, &y, RankSumMethod::Normal { continuity: true }).unwrap();
        assert!((cc.p_value - 0.080_855_598_370_052_2).abs() < 1e-9);
    }

    #[test]
    fn ties_use_midranks() {
        assert_eq!(midranks(&[2.0, 1.0, 2.0, 3.0]), vec![2.5, 1.0, 2.5, 4.0]);
        let all_tied = wilcoxon_rank_sum_with(&[1.0; 20], &[1.0; 20], RankSumMethod::Normal { continuity: true }).unwrap();
        assert_eq!(all_tied.p_value, 1.0);
    }

    #[test]
    fn bonferroni_scales_and_caps() {
        assert_eq!(bonferroni(&[0.01, 0.4], 2).unwrap(), vec![0.02, 0.8]);
        assert_eq!(bonferroni(&[0.7], 3).unwrap(), vec![1.0]);
        assert!(bonferroni(&[0.1], 0).is_err());
        assert!(bonferroni(&[1.1], 1).is_err());
    }

    #[test]
    fn empty_sample_rejected() {
        assert!(matches!(wilcoxon_rank_sum(&[], &[1.0]), Err(Error::EmptySample)));
        assert!(matches!(wilcoxon_rank_sum(&[1.0], &[]), Err(Error::EmptySample)));
    }

    proptest! {
        #[test]
        fn monotone_transforms_leave_p_unchanged(
            x in prop::collection::vec(-50.0f64..50.0, 1..15),
            y in prop::collection::vec(-50.0f64..50.0, 1..15),
        ) {
            let f = |v: &[f64]| v.iter().map(|t| t.exp() * 3.0 + t.powi(3)).collect::<Vec<_>>();
            let p = wilcoxon_rank_sum(&x, &y).unwrap();
            prop_assert_eq!(p, wilcoxon_rank_sum(&f(&x), &f(&y)).unwrap());
        }
    }
}
