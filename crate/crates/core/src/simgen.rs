//! Survey simulator and validation oracles.
//!
//! [`simulate_survey`] generates a synthetic state (regions, tracts,
//! poststratification cells), draws tracts by systematic PPS within each
//! region, contacts a fixed number of households per tract, thins them by
//! household non-response and simulates each respondent's infection status
//! and antibody panel from the model. The output uses the same raw tables the
//! command line ingests.
//!
//! The module also provides the exact posterior of the infection indicators
//! for tiny datasets and simulation-based calibration of the sampler.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::domain::{
    validate_dataset, Dataset, InterceptPrior, NonResponseRow, ParticipantRow, PostStratRow, PriorSpec,
    RawTables, RegressionState, Stratum, TestMask, TestPanel, TestParams, TractRow, ValidationOptions,
    ValidationReport, N_TESTS, OHIO_NONRESPONSE, OHIO_REGIONS,
};
use crate::inference::rhat;
use crate::prevmodel::{design_row, expit, linear_predictor, logit, SdConvention, Standardizer, TractEffect};
use crate::rng::replication_rng;
use crate::sampler::{run_chains, Draw, SamplerConfig, SamplerError};
use crate::testmodel::{covariance_upper_bound, pattern_likelihood, pattern_prob_vector, patterns};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("region {region}: {requested} tracts requested but only {available} exist")]
    TooManyTracts {
        region: String,
        requested: usize,
        available: usize,
    },
    #[error("exact enumeration supports at most {max} participants, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("no replications requested")]
    NoReplications,
    #[error("simulated data failed validation: {0}")]
    Validation(#[from] ValidationReport),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Synthetic state geography.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeographyConfig {
    pub regions: Vec<String>,
    /// Tracts in each region's sampling frame.
    pub tracts_per_region: usize,
    /// Tract total population is log-normal with these parameters.
    pub log_population_mean: f64,
    pub log_population_sd: f64,
    /// Fraction of the tract population aged 18 and over.
    pub adult_share: f64,
    /// Composition of adults by stratum (age-major, male first).
    pub stratum_shares: [f64; Stratum::COUNT],
}

impl Default for GeographyConfig {
    fn default() -> Self {
        GeographyConfig {
            regions: OHIO_REGIONS.iter().map(|s| s.to_string()).collect(),
            tracts_per_region: 300,
            log_population_mean: 8.3,
            log_population_sd: 0.45,
            adult_share: 0.77,
            stratum_shares: [0.225, 0.225, 0.162, 0.168, 0.097, 0.123],
        }
    }
}

/// Ground truth and design of a simulated survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthConfig {
    pub tests: TestParams,
    pub alpha: f64,
    pub sigma: f64,
    pub tau: f64,
    pub beta_stratum: [f64; 3],
    pub beta_tract: f64,
    pub geography: GeographyConfig,
    /// Tracts drawn per region.
    pub tracts_per_region: usize,
    /// Households contacted per drawn tract.
    pub households_per_tract: usize,
    /// Household non-response probability per region.
    pub nonresponse: Vec<f64>,
    /// Probability that each test result is missing.
    pub missingness: [f64; N_TESTS],
    /// Probability that a respondent's age or sex is not recorded.
    pub demographics_missing: f64,
    /// Relative frequency of respondents by stratum.
    pub respondent_strata: [f64; Stratum::COUNT],
}

/// Respondent composition implied by the sample margins: ages 18-44, 45-64
/// and 65+ at 175, 239 and 253 of 667; 275 men and 392 women.
fn sample_margins() -> [f64; Stratum::COUNT] {
    let age = [175.0, 239.0, 253.0];
    let sex = [275.0, 392.0];
    std::array::from_fn(|i| age[i / 2] * sex[i % 2] / (667.0 * 667.0))
}

impl Default for TruthConfig {
    fn default() -> Self {
        let (s, c) = PriorSpec::default().accuracy_means();
        let tests = TestParams {
            sensitivity: s,
            specificity: c,
            cov_infected: 0.5 * covariance_upper_bound(s[0], s[1]),
            cov_uninfected: 0.5 * covariance_upper_bound(c[0], c[1]),
        };
        TruthConfig {
            tests,
            alpha: logit(0.013),
            sigma: 0.3,
            tau: 0.3,
            beta_stratum: [0.0; 3],
            beta_tract: 0.0,
            geography: GeographyConfig::default(),
            tracts_per_region: 30,
            households_per_tract: 5,
            nonresponse: OHIO_NONRESPONSE.to_vec(),
            missingness: [0.05, 0.05, 0.05],
            demographics_missing: 0.0,
            respondent_strata: sample_margins(),
        }
    }
}

impl TruthConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        self.tests.validate().map_err(|e| SimError::Config(e.to_string()))?;
        let g = &self.geography;
        if g.regions.is_empty() || g.tracts_per_region == 0 {
            return bad("geography has no tracts".into());
        }
        if self.nonresponse.len() != g.regions.len() {
            return bad(format!(
                "{} non-response rates for {} regions",
                self.nonresponse.len(),
                g.regions.len()
            ));
        }
        let probs = self
            .nonresponse
            .iter()
            .chain(&self.missingness)
            .chain([&self.demographics_missing, &g.adult_share]);
        if probs.clone().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        for (name, w) in [("stratum_shares", &g.stratum_shares), ("respondent_strata", &self.respondent_strata)] {
            if w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return bad(format!("{name} must be nonnegative with a positive sum"));
            }
        }
        if !(self.sigma >= 0.0 && self.tau >= 0.0 && g.log_population_sd >= 0.0) {
            return bad("standard deviations must be nonnegative".into());
        }
        let finite = [self.alpha, self.beta_tract, g.log_population_mean]
            .iter()
            .chain(&self.beta_stratum)
            .all(|x| x.is_finite());
        if !finite {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }
}

/// One tract of the synthetic frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTract {
    pub label: String,
    pub region: usize,
    pub total_population: f64,
    /// Adults per stratum.
    pub adults: [f64; Stratum::COUNT],
}

/// Draws a synthetic geography. Tracts are listed region by region.
pub fn synthetic_geography<R: Rng>(g: &GeographyConfig, rng: &mut R) -> Vec<FrameTract> {
    let share_total: f64 = g.stratum_shares.iter().sum();
    let mut out = Vec::with_capacity(g.regions.len() * g.tracts_per_region);
    for r in 0..g.regions.len() {
        for t in 0..g.tracts_per_region {
            let z: f64 = rng.sample(StandardNormal);
            let total = (g.log_population_mean + g.log_population_sd * z).exp().round().max(50.0);
            let adults = std::array::from_fn(|s| (total * g.adult_share * g.stratum_shares[s] / share_total).round().max(1.0));
            out.push(FrameTract {
                label: format!("r{}t{:04}", r + 1, t + 1),
                region: r,
                total_population: total,
                adults,
            });
        }
    }
    out
}

/// Systematic PPS sampling without replacement. Units whose expected
/// selection count reaches one are taken with certainty and the rest are
/// drawn systematically from a random start. Returns ascending indices.
///
/// Inclusion probability of unit `i` is `n * size[i] / sum(size)` whenever
/// that value is at most one.
pub fn pps_systematic<R: Rng>(sizes: &[f64], n: usize, rng: &mut R) -> Option<Vec<usize>> {
    if n > sizes.len() {
        return None;
    }
    let mut certain = vec![false; sizes.len()];
    let mut remaining = n;
    loop {
        let total: f64 = sizes.iter().zip(&certain).filter(|(_, c)| !**c).map(|(s, _)| s).sum();
        if remaining == 0 {
            break;
        }
        let mut changed = false;
        for (i, &s) in sizes.iter().enumerate() {
            if !certain[i] && remaining as f64 * s / total >= 1.0 {
                certain[i] = true;
                remaining -= 1;
                changed = true;
                if remaining == 0 {
                    break;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut chosen: Vec<usize> = (0..sizes.len()).filter(|&i| certain[i]).collect();
    if remaining > 0 {
        let total: f64 = sizes.iter().zip(&certain).filter(|(_, c)| !**c).map(|(s, _)| s).sum();
        let step = total / remaining as f64;
        let mut next = rng.random::<f64>() * step;
        let mut cum = 0.0;
        for (i, &s) in sizes.iter().enumerate() {
            if certain[i] {
                continue;
            }
            cum += s;
            if cum > next && chosen.len() < n {
                chosen.push(i);
                next += step;
            }
        }
        // Guard against rounding leaving the last pick unmade.
        if chosen.len() < n {
            let last = (0..sizes.len()).rev().find(|i| !chosen.contains(i)).expect("enough units");
            chosen.push(last);
        }
    }
    chosen.sort_unstable();
    Some(chosen)
}

fn categorical<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Everything that was drawn while simulating a survey.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub alpha_region: Vec<f64>,
    /// Effect of every frame tract, in tract-table order.
    pub tract_effects: Vec<f64>,
    /// Infection status of each participant row.
    pub infected: Vec<bool>,
    /// Adult-weighted prevalence over the whole frame.
    pub prevalence: f64,
    pub region_prevalence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSurvey {
    pub raw: RawTables,
    pub truth: TruthRecord,
}

/// Simulates one survey from `truth`.
pub fn simulate_survey<R: Rng>(truth: &TruthConfig, rng: &mut R) -> Result<SimulatedSurvey, SimError> {
    truth.validate()?;
    let g = &truth.geography;
    let frame = synthetic_geography(g, rng);
    let pops: Vec<f64> = frame.iter().map(|t| t.total_population).collect();
    let standardizer =
        Standardizer::fit(&pops, SdConvention::Population).map_err(|e| SimError::Config(e.to_string()))?;

    let alpha_region: Vec<f64> = (0..g.regions.len())
        .map(|_| truth.alpha + truth.sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let tract_effects: Vec<f64> = frame
        .iter()
        .map(|_| truth.tau * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let reg = RegressionState {
        alpha_region: alpha_region.clone(),
        alpha: truth.alpha,
        sigma2: truth.sigma * truth.sigma,
        beta_stratum: truth.beta_stratum,
        beta_tract: truth.beta_tract,
        tract_effects: Vec::new(),
        tau2: truth.tau * truth.tau,
    };
    let eta = |stratum: Stratum, tract: usize| {
        let row = design_row(stratum.age_group, stratum.sex, frame[tract].total_population, &standardizer);
        linear_predictor(&reg, &row, frame[tract].region, TractEffect::Supplied(tract_effects[tract]))
            .expect("supplied effect")
    };

    let full_probs = [
        pattern_prob_vector(false, &truth.tests, TestMask::FULL).expect("validated"),
        pattern_prob_vector(true, &truth.tests, TestMask::FULL).expect("validated"),
    ];
    let full_patterns = patterns(TestMask::FULL);

    let mut raw = RawTables::default();
    let mut infected = Vec::new();
    for r in 0..g.regions.len() {
        let members: Vec<usize> = (0..frame.len()).filter(|&t| frame[t].region == r).collect();
        let sizes: Vec<f64> = members.iter().map(|&t| frame[t].total_population).collect();
        let picked = pps_systematic(&sizes, truth.tracts_per_region, rng).ok_or_else(|| SimError::TooManyTracts {
            region: g.regions[r].clone(),
            requested: truth.tracts_per_region,
            available: members.len(),
        })?;
        for &m in &picked {
            let t = members[m];
            for _ in 0..truth.households_per_tract {
                if rng.random::<f64>() < truth.nonresponse[r] {
                    continue;
                }
                let stratum = Stratum::from_index(categorical(&truth.respondent_strata, rng));
                let d = rng.random::<f64>() < expit(eta(stratum, t));
                let pattern = &full_patterns[categorical(&full_probs[d as usize], rng)];
                let tests: [Option<bool>; N_TESTS] =
                    std::array::from_fn(|j| (rng.random::<f64>() >= truth.missingness[j]).then_some(pattern[j]));
                let demo_missing = rng.random::<f64>() < truth.demographics_missing;
                let n = raw.participants.len();
                raw.participants.push(ParticipantRow {
                    row: n + 1,
                    id: format!("s{:05}", n + 1),
                    region: g.regions[r].clone(),
                    age_group: (!demo_missing).then(|| stratum.age_group.label().to_string()),
                    sex: Some(stratum.sex.label().to_string()),
                    tract: frame[t].label.clone(),
                    tests,
                });
                infected.push(d);
            }
        }
    }

    let mut num = 0.0;
    let mut den = 0.0;
    let mut rnum = vec![0.0; g.regions.len()];
    let mut rden = vec![0.0; g.regions.len()];
    for (t, tract) in frame.iter().enumerate() {
        raw.tracts.push(TractRow {
            row: t + 1,
            tract: tract.label.clone(),
            region: g.regions[tract.region].clone(),
            total_population: tract.total_population,
        });
        for s in Stratum::all() {
            let p = tract.adults[s.index()];
            raw.poststrat.push(PostStratRow {
                row: raw.poststrat.len() + 1,
                region: g.regions[tract.region].clone(),
                tract: tract.label.clone(),
                age_group: s.age_group.label().to_string(),
                sex: s.sex.label().to_string(),
                adult_population: p,
            });
            let pi = expit(eta(s, t));
            num += pi * p;
            den += p;
            rnum[tract.region] += pi * p;
            rden[tract.region] += p;
        }
    }
    raw.nonresponse = g
        .regions
        .iter()
        .zip(&truth.nonresponse)
        .enumerate()
        .map(|(i, (name, &rate))| NonResponseRow {
            row: i + 1,
            region: name.clone(),
            rate,
        })
        .collect();

    Ok(SimulatedSurvey {
        raw,
        truth: TruthRecord {
            alpha_region,
            tract_effects,
            infected,
            prevalence: num / den,
            region_prevalence: rnum.iter().zip(&rden).map(|(n, d)| n / d).collect(),
        },
    })
}

// ---------------------------------------------------------------------------
// Exact posterior of the infection indicators
// ---------------------------------------------------------------------------

pub const EXACT_MAX_PARTICIPANTS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactPosterior {
    /// `P(D_i = 1 | T)` by enumeration of all latent configurations.
    pub marginals: Vec<f64>,
    /// The same probabilities from the per-participant closed form.
    pub closed_form: Vec<f64>,
    /// `P(T)` with every parameter held fixed.
    pub marginal_likelihood: f64,
}

/// Exact posterior for participants given as (panel, infection probability)
/// pairs, by enumerating all `2^n` infection configurations.
pub fn exact_posterior_from(units: &[(TestPanel, f64)], tests: &TestParams) -> Result<ExactPosterior, SimError> {
    let n = units.len();
    if n > EXACT_MAX_PARTICIPANTS {
        return Err(SimError::TooLarge {
            n,
            max: EXACT_MAX_PARTICIPANTS,
        });
    }
    let terms: Vec<[f64; 2]> = units
        .iter()
        .map(|(panel, pi)| {
            [
                (1.0 - pi) * pattern_likelihood(panel, false, tests),
                pi * pattern_likelihood(panel, true, tests),
            ]
        })
        .collect();
    let mut total = 0.0;
    let mut infected_mass = vec![0.0; n];
    for config in 0u32..(1u32 << n) {
        let w: f64 = (0..n).map(|i| terms[i][((config >> i) & 1) as usize]).product();
        total += w;
        for (i, m) in infected_mass.iter_mut().enumerate() {
            if (config >> i) & 1 == 1 {
                *m += w;
            }
        }
    }
    Ok(ExactPosterior {
        marginals: infected_mass.iter().map(|m| m / total).collect(),
        closed_form: terms.iter().map(|t| t[1] / (t[0] + t[1])).collect(),
        marginal_likelihood: total,
    })
}

/// Exact posterior of every participant's infection status in a small
/// dataset, with test and regression parameters held fixed.
pub fn exact_small_posterior(data: &Dataset, tests: &TestParams, regression: &RegressionState) -> Result<ExactPosterior, SimError> {
    if data.n_participants() > EXACT_MAX_PARTICIPANTS {
        return Err(SimError::TooLarge {
            n: data.n_participants(),
            max: EXACT_MAX_PARTICIPANTS,
        });
    }
    let units: Vec<(TestPanel, f64)> = data
        .participants
        .iter()
        .map(|p| {
            let slot = data.tract_slot[p.tract].expect("participant tracts are sampled");
            let eta = linear_predictor(regression, &data.design_row(p), p.region, TractEffect::Sampled(slot))
                .expect("regression covers sampled tracts");
            (p.panel, expit(eta))
        })
        .collect();
    exact_posterior_from(&units, tests)
}

// ---------------------------------------------------------------------------
// Simulation-based calibration
// ---------------------------------------------------------------------------

/// Parameters ranked in calibration, in this order.
pub const SBC_PARAMETERS: [&str; 16] = [
    "sensitivity[1]",
    "sensitivity[2]",
    "sensitivity[3]",
    "specificity[1]",
    "specificity[2]",
    "specificity[3]",
    "cov_infected",
    "cov_uninfected",
    "alpha",
    "beta[1]",
    "beta[2]",
    "beta[3]",
    "beta_tract",
    "sigma",
    "tau",
    "prevalence",
];

fn sbc_values(tests: &TestParams, reg: &RegressionState, prevalence: f64) -> [f64; 16] {
    [
        tests.sensitivity[0],
        tests.sensitivity[1],
        tests.sensitivity[2],
        tests.specificity[0],
        tests.specificity[1],
        tests.specificity[2],
        tests.cov_infected,
        tests.cov_uninfected,
        reg.alpha,
        reg.beta_stratum[0],
        reg.beta_stratum[1],
        reg.beta_stratum[2],
        reg.beta_tract,
        reg.sigma(),
        reg.tau(),
        prevalence,
    ]
}

fn draw_values(d: &Draw) -> [f64; 16] {
    sbc_values(&d.tests, &d.regression, d.prevalence)
}

/// Draws a truth from the priors, keeping the design of `template`.
pub fn sample_prior_truth<R: Rng>(priors: &PriorSpec, template: &TruthConfig, rng: &mut R) -> TruthConfig {
    let beta = |a: f64, b: f64, rng: &mut R| Beta::new(a, b).expect("validated prior").sample(rng);
    let s: [f64; N_TESTS] = std::array::from_fn(|j| beta(priors.sensitivity[j].a, priors.sensitivity[j].b, rng));
    let c: [f64; N_TESTS] = std::array::from_fn(|j| beta(priors.specificity[j].a, priors.specificity[j].b, rng));
    let f1: f64 = rng.random();
    let f0: f64 = rng.random();
    let tests = TestParams {
        sensitivity: s,
        specificity: c,
        cov_infected: f1 * covariance_upper_bound(s[0], s[1]),
        cov_uninfected: f0 * covariance_upper_bound(c[0], c[1]),
    };
    let alpha = match priors.alpha {
        InterceptPrior::Normal { mean, variance } => mean + variance.sqrt() * rng.sample::<f64, _>(StandardNormal),
        InterceptPrior::LogitBeta { a, b } => logit(beta(a, b, rng)),
    };
    let sd = priors.beta_variance.sqrt();
    let beta_stratum = std::array::from_fn(|_| sd * rng.sample::<f64, _>(StandardNormal));
    let beta_tract = sd * rng.sample::<f64, _>(StandardNormal);
    TruthConfig {
        tests,
        alpha,
        sigma: priors.sigma_upper * rng.random::<f64>(),
        tau: priors.tau_upper * rng.random::<f64>(),
        beta_stratum,
        beta_tract,
        ..template.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbcConfig {
    pub replications: usize,
    pub seed: u64,
    /// Design of every simulated survey; parameters come from the prior.
    pub design: TruthConfig,
    pub sampler: SamplerConfig,
    /// Posterior draws each truth is ranked against.
    pub ranked_draws: usize,
    /// Replications whose largest R-hat reaches this value are excluded.
    pub rhat_max: f64,
}

impl Default for SbcConfig {
    /// 200 replications of about 200 participants: 8 regions, 5 tracts per
    /// region, 5 households per tract, full response.
    fn default() -> Self {
        let design = TruthConfig {
            geography: GeographyConfig {
                tracts_per_region: 40,
                ..Default::default()
            },
            tracts_per_region: 5,
            households_per_tract: 5,
            nonresponse: vec![0.0; OHIO_REGIONS.len()],
            missingness: [0.05, 0.05, 0.05],
            ..Default::default()
        };
        SbcConfig {
            replications: 200,
            seed: 20_200_709,
            design,
            sampler: SamplerConfig {
                n_iterations: 12_000,
                n_burnin: 4_000,
                thin: 40,
                n_chains: 2,
                ..SamplerConfig::default()
            },
            ranked_draws: 99,
            rhat_max: 1.05,
        }
    }
}

/// Ranks of the truth within the posterior draws of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct SbcReplication {
    pub ranks: [usize; 16],
    pub max_rhat: f64,
    pub n_participants: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbcResult {
    /// Ranks per parameter (outer index follows [`SBC_PARAMETERS`]) over the
    /// retained replications.
    pub ranks: Vec<Vec<usize>>,
    pub ranked_draws: usize,
    pub n_replications: usize,
    pub n_excluded: usize,
}

impl SbcResult {
    pub fn parameter_index(name: &str) -> Option<usize> {
        SBC_PARAMETERS.iter().position(|p| *p == name)
    }

    /// Chi-square uniformity p-value for one parameter's ranks.
    pub fn uniformity_pvalue(&self, name: &str, bins: usize) -> Option<f64> {
        let i = Self::parameter_index(name)?;
        Some(chi_square_uniformity(&self.ranks[i], self.ranked_draws + 1, bins).1)
    }
}

/// Pearson chi-square test that `ranks` (values in `0..n_values`) are
/// uniform, after grouping into `bins` equal bins. Returns the statistic
/// and the p-value.
pub fn chi_square_uniformity(ranks: &[usize], n_values: usize, bins: usize) -> (f64, f64) {
    assert!(bins >= 2 && n_values % bins == 0, "bins must divide the number of rank values");
    let width = n_values / bins;
    let mut counts = vec![0usize; bins];
    for &r in ranks {
        counts[(r / width).min(bins - 1)] += 1;
    }
    let expected = ranks.len() as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = ChiSquared::new((bins - 1) as f64).expect("positive dof").sf(stat);
    (stat, p)
}

/// Runs one calibration replication: draw a truth from the priors, simulate
/// a survey, fit it and rank the truth among the posterior draws.
pub fn sbc_replication(cfg: &SbcConfig, priors: &PriorSpec, replication: usize) -> Result<SbcReplication, SimError> {
    let mut rng = replication_rng(cfg.seed, replication);
    let truth = sample_prior_truth(priors, &cfg.design, &mut rng);
    let survey = simulate_survey(&truth, &mut rng)?;
    let data = validate_dataset(&survey.raw, ValidationOptions::default())?.dataset;
    let sampler = SamplerConfig {
        seed: cfg.seed ^ (replication as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ..cfg.sampler.clone()
    };
    let chains = run_chains(&sampler, &data, priors)?;

    let truth_reg = RegressionState {
        alpha_region: survey.truth.alpha_region.clone(),
        alpha: truth.alpha,
        sigma2: truth.sigma * truth.sigma,
        beta_stratum: truth.beta_stratum,
        beta_tract: truth.beta_tract,
        tract_effects: Vec::new(),
        tau2: truth.tau * truth.tau,
    };
    let truth_values = sbc_values(&truth.tests, &truth_reg, survey.truth.prevalence);

    let per_chain: Vec<Vec<[f64; 16]>> = chains
        .iter()
        .map(|c| c.draws.iter().map(draw_values).collect())
        .collect();
    let mut max_rhat: f64 = 1.0;
    if per_chain.len() > 1 {
        for k in 0..16 {
            let series: Vec<Vec<f64>> = per_chain.iter().map(|c| c.iter().map(|v| v[k]).collect()).collect();
            let refs: Vec<&[f64]> = series.iter().map(|s| s.as_slice()).collect();
            if let Ok(r) = rhat(&refs) {
                if r.is_finite() {
                    max_rhat = max_rhat.max(r);
                } else {
                    max_rhat = f64::INFINITY;
                }
            }
        }
    }
    // Interleave chains, then take evenly spaced draws.
    let pooled: Vec<[f64; 16]> = per_chain.concat();
    let l = cfg.ranked_draws.min(pooled.len());
    let picked: Vec<&[f64; 16]> = (0..l).map(|i| &pooled[i * pooled.len() / l]).collect();
    let ranks = std::array::from_fn(|k| picked.iter().filter(|v| v[k] < truth_values[k]).count());
    Ok(SbcReplication {
        ranks,
        max_rhat,
        n_participants: data.n_participants(),
    })
}

/// Runs every replication (concurrently) and gathers the ranks.
pub fn run_sbc(cfg: &SbcConfig, priors: &PriorSpec) -> Result<SbcResult, SimError> {
    if cfg.replications == 0 {
        return Err(SimError::NoReplications);
    }
    let total = cfg.sampler.draws_per_chain() * cfg.sampler.n_chains;
    if cfg.ranked_draws == 0 || cfg.ranked_draws > total {
        return Err(SimError::Config(format!(
            "{} ranked draws requested from {} posterior draws",
            cfg.ranked_draws, total
        )));
    }
    let reps: Vec<SbcReplication> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| sbc_replication(cfg, priors, r))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_, _>>()?;
    let kept: Vec<&SbcReplication> = reps.iter().filter(|r| r.max_rhat < cfg.rhat_max).collect();
    Ok(SbcResult {
        ranks: (0..16).map(|k| kept.iter().map(|r| r.ranks[k]).collect()).collect(),
        ranked_draws: cfg.ranked_draws,
        n_replications: reps.len(),
        n_excluded: reps.len() - kept.len(),
    })
}
