//! Effective sample size and rank-normalized split R-hat.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::InferenceError;

/// Default convergence thresholds applied in reports.
pub const DEFAULT_RHAT_MAX: f64 = 1.01;
pub const DEFAULT_ESS_MIN: f64 = 400.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterDiagnostics {
    pub name: String,
    pub mean: f64,
    pub ess: f64,
    /// `None` when only one chain is available.
    pub rhat: Option<f64>,
}

impl ParameterDiagnostics {
    pub fn compute(name: &str, chains: &[&[f64]]) -> Self {
        let n: usize = chains.iter().map(|c| c.len()).sum();
        let mean = chains.iter().flat_map(|c| c.iter()).sum::<f64>() / n.max(1) as f64;
        ParameterDiagnostics {
            name: name.to_string(),
            mean,
            ess: ess(chains),
            rhat: rhat(chains).ok(),
        }
    }

    pub fn converged(&self, rhat_max: f64, ess_min: f64) -> bool {
        self.ess >= ess_min && self.rhat.is_none_or(|r| r < rhat_max)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Biased autocovariance at `lag`.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence
/// truncation. Chains are cut to the shortest length.
pub fn ess(chains: &[&[f64]]) -> f64 {
    let chains: Vec<&[f64]> = chains.iter().copied().filter(|c| !c.is_empty()).collect();
    if chains.is_empty() {
        return 0.0;
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap();
    let m = chains.len();
    let total = (n * m) as f64;
    if n < 4 {
        return total;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, 0)).collect();
    let w = mean(&acov0) * n as f64 / (n as f64 - 1.0);
    let between_over_n = if m > 1 {
        let gm = mean(&means);
        means.iter().map(|mu| (mu - gm).powi(2)).sum::<f64>() / (m as f64 - 1.0)
    } else {
        0.0
    };
    let var_plus = w * (n as f64 - 1.0) / n as f64 + between_over_n;
    if !(var_plus > 0.0) {
        // Constant draws carry no autocorrelation information.
        return total;
    }
    let rho = |lag: usize| -> f64 {
        let mean_acov = chains.iter().zip(&means).map(|(c, &mu)| autocov(c, mu, lag)).sum::<f64>() / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut lag = 0;
    while lag + 1 < n {
        let r0 = if lag == 0 { 1.0 } else { rho(lag) };
        let pair = r0 + rho(lag + 1);
        if pair < 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        lag += 2;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / total.log10().max(1.0));
    total / tau
}

pub fn ess_single(draws: &[f64]) -> f64 {
    ess(&[draws])
}

fn split_halves<'a>(chains: &[&'a [f64]]) -> Vec<&'a [f64]> {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = n / 2;
    chains
        .iter()
        .flat_map(|c| {
            let c = &c[..n];
            [&c[..half], &c[n - half..]]
        })
        .collect()
}

/// Classic potential scale reduction over the given sequences.
fn basic_rhat(seqs: &[Vec<f64>]) -> f64 {
    let m = seqs.len() as f64;
    let n = seqs[0].len() as f64;
    let means: Vec<f64> = seqs.iter().map(|s| mean(s)).collect();
    let gm = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|mu| (mu - gm).powi(2)).sum::<f64>();
    let w = seqs
        .iter()
        .zip(&means)
        .map(|(s, &mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// Replaces values by normal scores of their pooled fractional ranks.
fn rank_normalize(seqs: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut all: Vec<(f64, usize, usize)> = seqs
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| seq.iter().enumerate().map(move |(i, &x)| (x, s, i)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = all.len() as f64;
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = seqs.iter().map(|s| vec![0.0; s.len()]).collect();
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // Average rank of the tie group, 1-based.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let z = normal.inverse_cdf((rank - 0.375) / (total + 0.25));
        for &(_, s, k) in &all[i..=j] {
            out[s][k] = z;
        }
        i = j + 1;
    }
    out
}

/// Rank-normalized split R-hat: the larger of the bulk and folded values.
/// Identical constant chains give 1 by convention.
pub fn rhat(chains: &[&[f64]]) -> Result<f64, InferenceError> {
    if chains.len() < 2 {
        return Err(InferenceError::SingleChain);
    }
    let halves = split_halves(chains);
    if halves[0].len() < 2 {
        return Err(InferenceError::NoDraws);
    }
    let first = halves[0][0];
    if halves.iter().all(|h| h.iter().all(|&x| x == first)) {
        return Ok(1.0);
    }
    let bulk = basic_rhat(&rank_normalize(&halves));

    let mut pooled: Vec<f64> = halves.iter().flat_map(|h| h.iter().copied()).collect();
    pooled.sort_by(f64::total_cmp);
    let median = if pooled.len() % 2 == 1 {
        pooled[pooled.len() / 2]
    } else {
        0.5 * (pooled[pooled.len() / 2 - 1] + pooled[pooled.len() / 2])
    };
    let folded: Vec<Vec<f64>> = halves.iter().map(|h| h.iter().map(|x| (x - median).abs()).collect()).collect();
    let folded_refs: Vec<&[f64]> = folded.iter().map(|v| v.as_slice()).collect();
    let tail = basic_rhat(&rank_normalize(&folded_refs));
    Ok(bulk.max(tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn white_noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(seed: u64, n: usize, rho: f64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let sd = (1.0 - rho * rho).sqrt();
        let mut x: f64 = StandardNormal.sample(&mut rng);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = rho * x + sd * z;
                x
            })
            .collect()
    }

    #[test]
    fn white_noise_ess_near_n() {
        let n = 10_000;
        let x = white_noise(1, n);
        let e = ess_single(&x);
        assert!((e / n as f64 - 1.0).abs() < 0.1, "{e}");
    }

    #[test]
    fn ar1_ess_matches_analytic() {
        let n = 100_000;
        let rho = 0.9;
        let expected = n as f64 * (1.0 - rho) / (1.0 + rho);
        let e = ess_single(&ar1(2, n, rho));
        assert!((e / expected - 1.0).abs() < 0.25, "{e} vs {expected}");
    }

    #[test]
    fn multi_chain_ess_adds_up() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| white_noise(10 + s, 2_000)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let e = ess(&refs);
        assert!((e / 8_000.0 - 1.0).abs() < 0.15, "{e}");
    }

    #[test]
    fn rhat_conventions() {
        let c = vec![2.5; 100];
        assert_eq!(rhat(&[&c, &c]).unwrap(), 1.0);
        assert_eq!(rhat(&[&c]), Err(InferenceError::SingleChain));
    }

    #[test]
    fn rhat_near_one_for_mixed_chains() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| white_noise(20 + s, 1_000)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(|c| c.as_slice()).collect();
        let r = rhat(&refs).unwrap();
        assert!(r < 1.01, "{r}");
    }

    #[test]
    fn rhat_flags_shifted_chain() {
        let a = white_noise(30, 1_000);
        let b: Vec<f64> = white_noise(31, 1_000).iter().map(|x| x + 3.0).collect();
        let r = rhat(&[&a, &b]).unwrap();
        assert!(r > 1.5, "{r}");
    }
}
