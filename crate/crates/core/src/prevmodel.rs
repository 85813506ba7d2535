//! Multilevel logistic regression for the probability of past infection.
//!
//! ```text
//! logit(pi_i) = alpha_r[i] + x_s[i] . beta_s + x_t[i] * beta_t + b_t[i]
//! ```
//!
//! Age and sex enter through sum-to-zero contrasts; the tract covariate is log
//! population standardized across every tract of the state. This module also
//! evaluates the log prior and log joint density of the full model.

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use thiserror::Error;

use crate::domain::{
    AgeGroup, Dataset, InterceptPrior, PriorSpec, RegionIntercepts, RegressionState, Sex, TestParams,
};
use crate::testmodel::pattern_likelihood;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrevModelError {
    #[error("log population standardization needs at least two distinct positive populations")]
    DegenerateSd,
    #[error("population {0} is not positive")]
    NonPositivePopulation(f64),
    #[error("tract has no random effect and no draw was supplied")]
    MissingTractEffect,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(expit(x))` without overflow or cancellation.
pub fn ln_expit(x: f64) -> f64 {
    -softplus(-x)
}

/// `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn ln_normal_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let z = x - mean;
    -0.5 * (LN_2PI + variance.ln() + z * z / variance)
}

/// Log density of Beta(a, b) at `x`; `-inf` outside `(0, 1)`.
pub fn ln_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
}

/// Log density of Uniform(0, upper) at `x`.
pub fn ln_uniform_pdf(x: f64, upper: f64) -> f64 {
    if x > 0.0 && x < upper {
        -upper.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log Bernoulli mass of `d` given logit `eta`.
pub fn ln_bernoulli_logit(d: bool, eta: f64) -> f64 {
    if d {
        ln_expit(eta)
    } else {
        ln_expit(-eta)
    }
}

/// Denominator used for the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdConvention {
    /// Divide by N.
    #[default]
    Population,
    /// Divide by N - 1.
    Sample,
}

/// Affine map `z = (ln p - mean) / sd` fitted on statewide tract populations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
}

impl Standardizer {
    pub fn fit(populations: &[f64], convention: SdConvention) -> Result<Self, PrevModelError> {
        if let Some(&p) = populations.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
            return Err(PrevModelError::NonPositivePopulation(p));
        }
        let logs: Vec<f64> = populations.iter().map(|p| p.ln()).collect();
        let n = logs.len();
        let distinct = logs.iter().any(|&l| l != logs[0]);
        if n < 2 || !distinct {
            return Err(PrevModelError::DegenerateSd);
        }
        let mean = logs.iter().sum::<f64>() / n as f64;
        let ss: f64 = logs.iter().map(|l| (l - mean).powi(2)).sum();
        let denom = match convention {
            SdConvention::Population => n as f64,
            SdConvention::Sample => (n - 1) as f64,
        };
        let sd = (ss / denom).sqrt();
        if !(sd > 0.0) {
            return Err(PrevModelError::DegenerateSd);
        }
        Ok(Standardizer { mean, sd })
    }

    pub fn apply(&self, population: f64) -> f64 {
        (population.ln() - self.mean) / self.sd
    }
}

/// Covariates of one (stratum, tract) combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignRow {
    /// Age contrasts (two columns) then the sex contrast.
    pub x_stratum: [f64; 3],
    /// Standardized log tract population.
    pub x_tract: f64,
}

impl DesignRow {
    pub fn fixed_effect(&self, beta_stratum: &[f64; 3], beta_tract: f64) -> f64 {
        self.x_stratum[0] * beta_stratum[0]
            + self.x_stratum[1] * beta_stratum[1]
            + self.x_stratum[2] * beta_stratum[2]
            + self.x_tract * beta_tract
    }
}

pub fn age_contrast(age: AgeGroup) -> [f64; 2] {
    match age {
        AgeGroup::Age18To44 => [1.0, 0.0],
        AgeGroup::Age45To64 => [0.0, 1.0],
        AgeGroup::Age65Plus => [-1.0, -1.0],
    }
}

pub fn sex_contrast(sex: Sex) -> f64 {
    match sex {
        Sex::Male => 1.0,
        Sex::Female => -1.0,
    }
}

pub fn design_row(age: AgeGroup, sex: Sex, tract_population: f64, standardizer: &Standardizer) -> DesignRow {
    let [a1, a2] = age_contrast(age);
    DesignRow {
        x_stratum: [a1, a2, sex_contrast(sex)],
        x_tract: standardizer.apply(tract_population),
    }
}

/// Tract random effect source for [`linear_predictor`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TractEffect {
    /// Position among the sampled tracts in the state.
    Sampled(usize),
    /// An externally supplied value (unsampled tracts).
    Supplied(f64),
}

/// Logit of the infection probability for one design row.
pub fn linear_predictor(
    state: &RegressionState,
    row: &DesignRow,
    region: usize,
    tract: TractEffect,
) -> Result<f64, PrevModelError> {
    let b = match tract {
        TractEffect::Sampled(slot) => *state.tract_effects.get(slot).ok_or(PrevModelError::MissingTractEffect)?,
        TractEffect::Supplied(b) => b,
    };
    Ok(state.alpha_region[region] + row.fixed_effect(&state.beta_stratum, state.beta_tract) + b)
}

/// Log prior of the test parameters: Beta priors on accuracy plus uniform
/// priors on each covariance over its admissible range.
pub fn log_prior_tests(params: &TestParams, priors: &PriorSpec) -> f64 {
    let mut lp = 0.0;
    for j in 0..3 {
        lp += ln_beta_pdf(params.sensitivity[j], priors.sensitivity[j].a, priors.sensitivity[j].b);
        lp += ln_beta_pdf(params.specificity[j], priors.specificity[j].a, priors.specificity[j].b);
    }
    lp + ln_cov_prior(params.cov_infected, params.cov_infected_bound())
        + ln_cov_prior(params.cov_uninfected, params.cov_uninfected_bound())
}

/// Uniform(0, bound) log density; a zero bound is a point mass at zero.
fn ln_cov_prior(r: f64, bound: f64) -> f64 {
    if bound <= 0.0 {
        return if r == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if (0.0..=bound).contains(&r) {
        -bound.ln()
    } else {
        f64::NEG_INFINITY
    }
}

pub fn log_prior_alpha(alpha: f64, prior: &InterceptPrior) -> f64 {
    match *prior {
        InterceptPrior::Normal { mean, variance } => ln_normal_pdf(alpha, mean, variance),
        InterceptPrior::LogitBeta { a, b } => a * ln_expit(alpha) + b * ln_expit(-alpha) - ln_beta(a, b),
    }
}

/// Log prior of the region intercepts and their scale, given the global intercept.
pub fn log_prior_regions(state: &RegressionState, priors: &PriorSpec) -> f64 {
    match priors.region_intercepts {
        RegionIntercepts::Hierarchical => {
            let sigma = state.sigma();
            let mut lp = ln_uniform_pdf(sigma, priors.sigma_upper);
            if lp == f64::NEG_INFINITY {
                return lp;
            }
            for &a in &state.alpha_region {
                lp += ln_normal_pdf(a, state.alpha, state.sigma2);
            }
            lp
        }
        RegionIntercepts::Pooled => {
            if state.alpha_region.iter().all(|&a| a == state.alpha) {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

pub fn log_prior_tracts(state: &RegressionState, priors: &PriorSpec) -> f64 {
    let mut lp = ln_uniform_pdf(state.tau(), priors.tau_upper);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    for &b in &state.tract_effects {
        lp += ln_normal_pdf(b, 0.0, state.tau2);
    }
    lp
}

pub fn log_prior_beta(state: &RegressionState, priors: &PriorSpec) -> f64 {
    state
        .beta_stratum
        .iter()
        .chain(std::iter::once(&state.beta_tract))
        .map(|&b| ln_normal_pdf(b, 0.0, priors.beta_variance))
        .sum()
}

/// Log prior density of every parameter. The density is with respect to
/// the sds `sigma` and `tau` (their priors are uniform on the sd scale).
pub fn log_prior(params: &TestParams, state: &RegressionState, priors: &PriorSpec) -> f64 {
    let lp = log_prior_tests(params, priors)
        + log_prior_alpha(state.alpha, &priors.alpha)
        + log_prior_regions(state, priors)
        + log_prior_beta(state, priors)
        + log_prior_tracts(state, priors);
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

/// Per-participant log likelihood terms: test results given infection status
/// and infection status given the regression.
pub fn log_likelihood_terms(data: &Dataset, latent: &[bool], params: &TestParams, state: &RegressionState) -> Vec<f64> {
    data.participants
        .iter()
        .zip(latent)
        .map(|(p, &d)| {
            let row = data.design_row(p);
            let slot = data.tract_slot[p.tract].expect("participant tracts are sampled");
            let eta = linear_predictor(state, &row, p.region, TractEffect::Sampled(slot)).expect("slot in range");
            pattern_likelihood(&p.panel, d, params).ln() + ln_bernoulli_logit(d, eta)
        })
        .collect()
}

/// Log joint density of data, latent infection indicators and parameters.
pub fn log_joint(data: &Dataset, latent: &[bool], params: &TestParams, state: &RegressionState, priors: &PriorSpec) -> f64 {
    let lp = log_prior(params, state, priors);
    if lp == f64::NEG_INFINITY {
        return lp;
    }
    lp + log_likelihood_terms(data, latent, params, state).iter().sum::<f64>()
}
