use serde::Serialize;

use super::InferenceError;

pub fn posterior_mean(draws: &[f64]) -> Result<f64, InferenceError> {
    if draws.is_empty() {
        return Err(InferenceError::NoDraws);
    }
    Ok(draws.iter().sum::<f64>() / draws.len() as f64)
}

/// Number of order statistics an interval at `level` must span.
fn window_len(n: usize, level: f64) -> Result<usize, InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::InvalidLevel(level));
    }
    // The small offset keeps e.g. 0.95 * 100 from rounding up to 96.
    let m = ((level * n as f64) - 1e-9).ceil().max(1.0) as usize;
    if n < m + 1 {
        return Err(InferenceError::InsufficientDraws { n, level });
    }
    Ok(m)
}

fn sorted(draws: &[f64]) -> Vec<f64> {
    let mut x = draws.to_vec();
    x.sort_by(f64::total_cmp);
    x
}

/// Empirical highest posterior density interval: the shortest window of
/// `ceil(level * n)` consecutive order statistics. Ties go to the window
/// starting at the smallest order statistic.
pub fn hpd_interval(draws: &[f64], level: f64) -> Result<(f64, f64), InferenceError> {
    let m = window_len(draws.len(), level)?;
    let x = sorted(draws);
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for j in 0..=(x.len() - m) {
        let width = x[j + m - 1] - x[j];
        if width < best_width {
            best_width = width;
            best = j;
        }
    }
    Ok((x[best], x[best + m - 1]))
}

/// Central interval spanning the same number of order statistics as
/// [`hpd_interval`], so its width is never smaller.
pub fn equal_tailed_interval(draws: &[f64], level: f64) -> Result<(f64, f64), InferenceError> {
    let m = window_len(draws.len(), level)?;
    let x = sorted(draws);
    let j = (x.len() - m) / 2;
    Ok((x[j], x[j + m - 1]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionSummary {
    pub region: String,
    pub mean: f64,
    pub hpd: (f64, f64),
    pub adults: f64,
}

/// Posterior mean and HPD interval of statewide and regional prevalence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrevalenceSummary {
    pub level: f64,
    pub n_draws: usize,
    pub mean: f64,
    pub hpd: (f64, f64),
    /// Mean prevalence times the adult population of the state.
    pub adults: f64,
    pub regions: Vec<RegionSummary>,
}

/// Summarizes prevalence draws. `regional[r]` holds the draws of region `r`.
pub fn summarize_prevalence(
    statewide: &[f64],
    regional: &[Vec<f64>],
    region_names: &[String],
    region_totals: &[f64],
    total_population: f64,
    level: f64,
) -> Result<PrevalenceSummary, InferenceError> {
    let mean = posterior_mean(statewide)?;
    let hpd = hpd_interval(statewide, level)?;
    let regions = regional
        .iter()
        .zip(region_names)
        .zip(region_totals)
        .map(|((draws, name), &total)| {
            let m = posterior_mean(draws)?;
            Ok(RegionSummary {
                region: name.clone(),
                mean: m,
                hpd: hpd_interval(draws, level)?,
                adults: m * total,
            })
        })
        .collect::<Result<Vec<_>, InferenceError>>()?;
    Ok(PrevalenceSummary {
        level,
        n_draws: statewide.len(),
        mean,
        hpd,
        adults: mean * total_population,
        regions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Shortest window by exhaustive search over every pair of order statistics.
    fn brute_force_hpd(draws: &[f64], level: f64) -> (f64, f64) {
        let mut x = draws.to_vec();
        x.sort_by(f64::total_cmp);
        let n = x.len();
        let need = (level * n as f64 - 1e-9).ceil() as usize;
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..n {
            for j in i..n {
                if j - i + 1 >= need && x[j] - x[i] < best.0 {
                    best = (x[j] - x[i], i, j);
                }
            }
        }
        (x[best.1], x[best.2])
    }

    #[test]
    fn mean_examples() {
        assert_eq!(posterior_mean(&[0.5]).unwrap(), 0.5);
        assert_eq!(posterior_mean(&[0.0, 1.0]).unwrap(), 0.5);
        assert!((posterior_mean(&[0.01, 0.02, 0.03]).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(posterior_mean(&[]), Err(InferenceError::NoDraws));
    }

    #[test]
    fn hpd_on_uniform_grid_breaks_ties_low() {
        let draws: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(hpd_interval(&draws, 0.95).unwrap(), (1.0, 95.0));
        assert_eq!(brute_force_hpd(&draws, 0.95), (1.0, 95.0));
    }

    #[test]
    fn hpd_point_mass() {
        assert_eq!(hpd_interval(&[0.3; 50], 0.9).unwrap(), (0.3, 0.3));
    }

    #[test]
    fn hpd_errors() {
        assert!(matches!(hpd_interval(&[1.0], 0.95), Err(InferenceError::InsufficientDraws { .. })));
        assert!(matches!(hpd_interval(&[1.0, 2.0], 1.0), Err(InferenceError::InvalidLevel(_))));
    }

    #[test]
    fn hpd_matches_brute_force_on_random_sets() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(3..60);
            let draws: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
            let level = rng.random_range(0.5..0.97);
            match hpd_interval(&draws, level) {
                Ok(h) => assert_eq!(h, brute_force_hpd(&draws, level)),
                Err(e) => assert!(matches!(e, InferenceError::InsufficientDraws { .. })),
            }
        }
    }

    proptest! {
        #[test]
        fn hpd_no_wider_than_equal_tailed(draws in prop::collection::vec(-10.0f64..10.0, 5..200), level in 0.5f64..0.99) {
            if let (Ok(h), Ok(e)) = (hpd_interval(&draws, level), equal_tailed_interval(&draws, level)) {
                prop_assert!(h.1 - h.0 <= e.1 - e.0);
                prop_assert!(h.0 <= h.1);
            }
        }
    }
}
