//! Adaptive Metropolis-within-Gibbs sampler for the joint latent-class and
//! multilevel regression model.
//!
//! Each iteration draws every infection indicator exactly from its full
//! conditional, then updates parameter blocks by random-walk Metropolis on
//! unconstrained scales:
//!
//! - sensitivities and specificities on the logit scale, one per block;
//! - each IgG covariance as the logit of its fraction of the admissible range;
//! - the four fixed effects jointly, with an empirical proposal covariance
//!   learned during burn-in;
//! - region intercepts, the global intercept and `log sigma`;
//! - tract effects and `log tau`.
//!
//! Two rescaling moves update a scale together with the effects it governs
//! (the non-centered direction of the hierarchy), and a shift move translates
//! the global and region intercepts together. Step sizes adapt during burn-in
//! only.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Dataset, DomainError, PriorSpec, RegionIntercepts, RegressionState, TestParams, N_TESTS};
use crate::inference::{PostStratifier, UnsampledTractPolicy};
use crate::prevmodel::{
    expit, ln_beta_pdf, ln_expit, ln_normal_pdf, ln_uniform_pdf, log_prior_alpha, logit, DesignRow,
};
use crate::rng::{chain_rng, poststrat_rng, StreamRng};
use crate::testmodel::{covariance_upper_bound, full_conditional_from, observed_prob, slot_observations, N_PATTERN_SLOTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("invalid prior: {0}")]
    Prior(DomainError),
    #[error("chain {chain}, iteration {iteration}: non-finite log density at the current state of block {block}")]
    NonFinite { chain: usize, iteration: usize, block: String },
    #[error("chain {chain}, iteration {iteration}: stored draw violates support: {source}")]
    Support {
        chain: usize,
        iteration: usize,
        source: DomainError,
    },
    #[error("chain {chain}: results of participant {participant} are impossible under both infection states")]
    ImpossibleResults { chain: usize, participant: String },
}

/// Starting point of each chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// Prior means, covariances at mid-range, effects at zero, unit scales.
    #[default]
    PriorMean,
    /// Prior means perturbed on the unconstrained scale, for overdispersed chains.
    Jittered,
}

/// Parameter groups that can be held at their initial values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockGroup {
    Tests,
    Beta,
    RegionIntercepts,
    Alpha,
    Tracts,
}

/// Which test-result likelihood the sampler targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodVariant {
    #[default]
    Full,
    /// Test results carry no information, as if every result were missing.
    PriorOnly,
    /// The IgG covariance terms are dropped from the likelihood.
    IgnoreCovariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Iterations between step-size adaptations during burn-in.
    pub adapt_window: usize,
    /// Target acceptance rate of scalar blocks.
    pub target_scalar: f64,
    /// Target acceptance rate of the joint fixed-effect block.
    pub target_joint: f64,
    pub init: InitPolicy,
    pub fixed: Vec<BlockGroup>,
    pub likelihood: LikelihoodVariant,
    pub unsampled_tracts: UnsampledTractPolicy,
    /// Keep the infection indicators of every stored draw.
    pub record_latent: bool,
    /// Overrides the initial test parameters.
    pub initial_tests: Option<TestParams>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_iterations: 500_000,
            n_burnin: 250_000,
            thin: 20,
            n_chains: 4,
            seed: 1,
            adapt_window: 100,
            target_scalar: 0.44,
            target_joint: 0.234,
            init: InitPolicy::PriorMean,
            fixed: Vec::new(),
            likelihood: LikelihoodVariant::Full,
            unsampled_tracts: UnsampledTractPolicy::PosteriorWhereSampled,
            record_latent: false,
            initial_tests: None,
        }
    }
}

impl SamplerConfig {
    /// Desk-scale run: 4 chains of 20,000 iterations, 10,000 burn-in, thin 10.
    pub fn desk() -> Self {
        SamplerConfig {
            n_iterations: 20_000,
            n_burnin: 10_000,
            thin: 10,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let err = |m: &str| Err(SamplerError::Config(m.to_string()));
        if self.n_burnin >= self.n_iterations {
            return err("burn-in must be shorter than the run");
        }
        if self.thin == 0 {
            return err("thinning interval must be at least 1");
        }
        if self.n_chains == 0 {
            return err("at least one chain is required");
        }
        if self.adapt_window == 0 {
            return err("adaptation window must be at least 1");
        }
        for t in [self.target_scalar, self.target_joint] {
            if !(t > 0.0 && t < 1.0) {
                return err("target acceptance rates must lie in (0, 1)");
            }
        }
        if let Some(t) = &self.initial_tests {
            t.validate().map_err(|e| SamplerError::Config(format!("initial test parameters: {e}")))?;
        }
        Ok(())
    }

    /// Number of stored draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.n_iterations - self.n_burnin) / self.thin
    }

    pub fn is_fixed(&self, group: BlockGroup) -> bool {
        self.fixed.contains(&group)
    }

    fn keeps(&self, it: usize) -> bool {
        it >= self.n_burnin && (it - self.n_burnin + 1) % self.thin == 0
    }
}

/// A single Metropolis update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    Sensitivity(usize),
    Specificity(usize),
    CovInfected,
    CovUninfected,
    Beta,
    AlphaRegion(usize),
    Alpha,
    LogSigma,
    SigmaRescale,
    AlphaShift,
    TractEffect(usize),
    LogTau,
    TauRescale,
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Block::Sensitivity(j) => write!(f, "sensitivity[{}]", j + 1),
            Block::Specificity(j) => write!(f, "specificity[{}]", j + 1),
            Block::CovInfected => f.write_str("cov_infected"),
            Block::CovUninfected => f.write_str("cov_uninfected"),
            Block::Beta => f.write_str("beta"),
            Block::AlphaRegion(r) => write!(f, "alpha_region[{}]", r + 1),
            Block::Alpha => f.write_str("alpha"),
            Block::LogSigma => f.write_str("log_sigma"),
            Block::SigmaRescale => f.write_str("sigma_rescale"),
            Block::AlphaShift => f.write_str("alpha_shift"),
            Block::TractEffect(t) => write!(f, "tract_effect[{}]", t + 1),
            Block::LogTau => f.write_str("log_tau"),
            Block::TauRescale => f.write_str("tau_rescale"),
        }
    }
}

/// Acceptance record of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub block: String,
    /// Proposals after burn-in.
    pub proposed: u64,
    pub accepted: u64,
    /// Step size after adaptation.
    pub step: f64,
}

impl BlockStats {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// One stored posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub tests: TestParams,
    pub regression: RegressionState,
    /// Poststratified statewide prevalence.
    pub prevalence: f64,
    pub region_prevalence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub chain: usize,
    pub draws: Vec<Draw>,
    /// Infection indicators per stored draw; empty unless recorded.
    pub latent: Vec<Vec<bool>>,
    pub acceptance: Vec<BlockStats>,
}

// ---------------------------------------------------------------------------
// Model structure
// ---------------------------------------------------------------------------

/// Participants sharing a (tract, stratum) combination share a linear predictor.
#[derive(Debug, Clone)]
struct Cell {
    region: usize,
    slot: usize,
    row: DesignRow,
    n: u32,
}

struct Model<'a> {
    data: &'a Dataset,
    priors: &'a PriorSpec,
    variant: LikelihoodVariant,
    slot_obs: [[Option<bool>; N_TESTS]; N_PATTERN_SLOTS],
    part_slot: Vec<usize>,
    part_cell: Vec<usize>,
    cells: Vec<Cell>,
    region_cells: Vec<Vec<usize>>,
    tract_cells: Vec<Vec<usize>>,
}

#[inline]
fn cell_ll(eta: f64, n: u32, k: u32) -> f64 {
    let mut ll = 0.0;
    if k > 0 {
        ll += k as f64 * ln_expit(eta);
    }
    if n > k {
        ll += (n - k) as f64 * ln_expit(-eta);
    }
    ll
}

fn beta_vec(state: &RegressionState) -> [f64; 4] {
    let b = state.beta_stratum;
    [b[0], b[1], b[2], state.beta_tract]
}

fn design_vec(row: &DesignRow) -> [f64; 4] {
    [row.x_stratum[0], row.x_stratum[1], row.x_stratum[2], row.x_tract]
}

impl<'a> Model<'a> {
    fn new(data: &'a Dataset, priors: &'a PriorSpec, variant: LikelihoodVariant) -> Self {
        let mut slot_obs = [[None; N_TESTS]; N_PATTERN_SLOTS];
        for (s, o) in slot_obs.iter_mut().enumerate() {
            *o = slot_observations(s);
        }
        let mut cell_of: std::collections::BTreeMap<(usize, usize), usize> = Default::default();
        let mut cells: Vec<Cell> = Vec::new();
        let mut part_cell = Vec::with_capacity(data.n_participants());
        for p in &data.participants {
            let key = (p.tract, p.stratum().index());
            let idx = *cell_of.entry(key).or_insert_with(|| {
                cells.push(Cell {
                    region: p.region,
                    slot: data.tract_slot[p.tract].expect("participant tracts are sampled"),
                    row: data.design_row(p),
                    n: 0,
                });
                cells.len() - 1
            });
            cells[idx].n += 1;
            part_cell.push(idx);
        }
        let mut region_cells = vec![Vec::new(); data.n_regions()];
        let mut tract_cells = vec![Vec::new(); data.n_sampled_tracts()];
        for (i, c) in cells.iter().enumerate() {
            region_cells[c.region].push(i);
            tract_cells[c.slot].push(i);
        }
        Model {
            data,
            priors,
            variant,
            slot_obs,
            part_slot: data.participants.iter().map(|p| p.panel.pattern().slot()).collect(),
            part_cell,
            cells,
            region_cells,
            tract_cells,
        }
    }

    fn pooled(&self) -> bool {
        self.priors.region_intercepts == RegionIntercepts::Pooled
    }

    fn slot_prob(&self, slot: usize, d: bool, tests: &TestParams) -> f64 {
        match self.variant {
            LikelihoodVariant::Full => observed_prob(self.slot_obs[slot], d, tests),
            LikelihoodVariant::PriorOnly => 1.0,
            LikelihoodVariant::IgnoreCovariance => {
                let indep = TestParams {
                    cov_infected: 0.0,
                    cov_uninfected: 0.0,
                    ..*tests
                };
                observed_prob(self.slot_obs[slot], d, &indep)
            }
        }
    }

    fn likelihood_table(&self, tests: &TestParams) -> [[f64; N_PATTERN_SLOTS]; 2] {
        let mut t = [[0.0; N_PATTERN_SLOTS]; 2];
        for slot in 0..N_PATTERN_SLOTS {
            t[0][slot] = self.slot_prob(slot, false, tests).max(0.0);
            t[1][slot] = self.slot_prob(slot, true, tests).max(0.0);
        }
        t
    }

    fn eta(&self, cell: usize, state: &RegressionState) -> f64 {
        let c = &self.cells[cell];
        state.alpha_region[c.region] + c.row.fixed_effect(&state.beta_stratum, state.beta_tract) + state.tract_effects[c.slot]
    }

    // Local log targets. Each equals the log joint density, up to terms that
    // do not involve the block's parameters, with covariances expressed as
    // fractions of their admissible range and scales on the sd scale.

    fn tests_target(&self, tests: &TestParams, counts: &[[u32; N_PATTERN_SLOTS]; 2]) -> f64 {
        let mut lp = 0.0;
        for j in 0..N_TESTS {
            lp += ln_beta_pdf(tests.sensitivity[j], self.priors.sensitivity[j].a, self.priors.sensitivity[j].b);
            lp += ln_beta_pdf(tests.specificity[j], self.priors.specificity[j].a, self.priors.specificity[j].b);
        }
        for (d, row) in counts.iter().enumerate() {
            for (slot, &k) in row.iter().enumerate() {
                if k > 0 {
                    let p = self.slot_prob(slot, d == 1, tests);
                    lp += if p > 0.0 { k as f64 * p.ln() } else { f64::NEG_INFINITY };
                }
            }
        }
        lp
    }

    fn cells_ll(&self, cells: &[usize], eta: impl Fn(usize) -> f64, cell_k: &[u32]) -> f64 {
        cells.iter().map(|&c| cell_ll(eta(c), self.cells[c].n, cell_k[c])).sum()
    }

    fn all_cells_ll(&self, state: &RegressionState, cell_k: &[u32]) -> f64 {
        (0..self.cells.len()).map(|c| cell_ll(self.eta(c, state), self.cells[c].n, cell_k[c])).sum()
    }

    /// Every regression term of the log joint.
    fn regression_target(&self, state: &RegressionState, cell_k: &[u32]) -> f64 {
        let p = self.priors;
        let lp = log_prior_alpha(state.alpha, &p.alpha)
            + crate::prevmodel::log_prior_regions(state, p)
            + crate::prevmodel::log_prior_beta(state, p)
            + crate::prevmodel::log_prior_tracts(state, p);
        if lp == f64::NEG_INFINITY || lp.is_nan() {
            return f64::NEG_INFINITY;
        }
        lp + self.all_cells_ll(state, cell_k)
    }

    fn beta_prior(&self, b: &[f64; 4]) -> f64 {
        b.iter().map(|&x| ln_normal_pdf(x, 0.0, self.priors.beta_variance)).sum()
    }

    fn region_target(&self, r: usize, value: f64, state: &RegressionState, eta: &[f64], cell_k: &[u32]) -> f64 {
        let delta = value - state.alpha_region[r];
        ln_normal_pdf(value, state.alpha, state.sigma2) + self.cells_ll(&self.region_cells[r], |c| eta[c] + delta, cell_k)
    }

    fn alpha_target(&self, alpha: f64, state: &RegressionState) -> f64 {
        log_prior_alpha(alpha, &self.priors.alpha)
            + state.alpha_region.iter().map(|&a| ln_normal_pdf(a, alpha, state.sigma2)).sum::<f64>()
    }

    fn sigma_target(&self, sigma: f64, state: &RegressionState) -> f64 {
        let lu = ln_uniform_pdf(sigma, self.priors.sigma_upper);
        if lu == f64::NEG_INFINITY {
            return lu;
        }
        let s2 = sigma * sigma;
        lu + state.alpha_region.iter().map(|&a| ln_normal_pdf(a, state.alpha, s2)).sum::<f64>()
    }

    fn tract_target(&self, t: usize, value: f64, state: &RegressionState, eta: &[f64], cell_k: &[u32]) -> f64 {
        let delta = value - state.tract_effects[t];
        ln_normal_pdf(value, 0.0, state.tau2) + self.cells_ll(&self.tract_cells[t], |c| eta[c] + delta, cell_k)
    }

    fn tau_target(&self, tau: f64, state: &RegressionState) -> f64 {
        let lu = ln_uniform_pdf(tau, self.priors.tau_upper);
        if lu == f64::NEG_INFINITY {
            return lu;
        }
        let t2 = tau * tau;
        lu + state.tract_effects.iter().map(|&b| ln_normal_pdf(b, 0.0, t2)).sum::<f64>()
    }
}

// ---------------------------------------------------------------------------
// Chain state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct State {
    tests: TestParams,
    /// Covariances as fractions of their admissible ranges.
    frac: [f64; 2],
    reg: RegressionState,
    latent: Vec<bool>,
    counts: [[u32; N_PATTERN_SLOTS]; 2],
    cell_k: Vec<u32>,
    eta: Vec<f64>,
}

fn frac_of(r: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        (r / bound).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

fn tests_from(s: [f64; N_TESTS], c: [f64; N_TESTS], frac: [f64; 2]) -> TestParams {
    TestParams {
        sensitivity: s,
        specificity: c,
        cov_infected: frac[0] * covariance_upper_bound(s[0], s[1]),
        cov_uninfected: frac[1] * covariance_upper_bound(c[0], c[1]),
    }
}

/// Scalar step sizes and window counters.
#[derive(Debug, Clone)]
struct Adaptive {
    step: f64,
    window_proposed: u32,
    window_accepted: u32,
    proposed: u64,
    accepted: u64,
}

impl Adaptive {
    fn new(step: f64) -> Self {
        Adaptive {
            step,
            window_proposed: 0,
            window_accepted: 0,
            proposed: 0,
            accepted: 0,
        }
    }

    fn record(&mut self, accepted: bool, after_burnin: bool) {
        self.window_proposed += 1;
        self.window_accepted += accepted as u32;
        if after_burnin {
            self.proposed += 1;
            self.accepted += accepted as u64;
        }
    }

    fn adapt(&mut self, target: f64, window: usize) {
        if self.window_proposed > 0 {
            let rate = self.window_accepted as f64 / self.window_proposed as f64;
            self.step = adapt_step(self.step, rate, target, window);
        }
        self.window_proposed = 0;
        self.window_accepted = 0;
    }
}

/// Robbins-Monro step update on the log scale with a decaying gain.
pub fn adapt_step(step: f64, acceptance: f64, target: f64, window: usize) -> f64 {
    let gain = (3.0 / ((window + 1) as f64).sqrt()).min(1.0);
    (step * ((acceptance - target) * gain).exp()).clamp(1e-6, 1e3)
}

fn cholesky4(a: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Proposal of the joint fixed-effect block: `scale * L z` with `L` the
/// Cholesky factor of the running covariance estimate.
#[derive(Debug, Clone)]
struct JointProposal {
    adaptive: Adaptive,
    chol: [[f64; 4]; 4],
    n: f64,
    mean: [f64; 4],
    m2: [[f64; 4]; 4],
    empirical: bool,
}

impl JointProposal {
    fn new() -> Self {
        let mut chol = [[0.0; 4]; 4];
        for (i, row) in chol.iter_mut().enumerate() {
            row[i] = 0.2;
        }
        JointProposal {
            adaptive: Adaptive::new(1.0),
            chol,
            n: 0.0,
            mean: [0.0; 4],
            m2: [[0.0; 4]; 4],
            empirical: false,
        }
    }

    fn observe(&mut self, x: [f64; 4]) {
        self.n += 1.0;
        let delta: Vec<f64> = (0..4).map(|i| x[i] - self.mean[i]).collect();
        for i in 0..4 {
            self.mean[i] += delta[i] / self.n;
        }
        for i in 0..4 {
            for j in 0..4 {
                self.m2[i][j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    fn refresh(&mut self) {
        if self.n < 200.0 {
            return;
        }
        let mut cov = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                cov[i][j] = self.m2[i][j] / (self.n - 1.0);
            }
            cov[i][i] += 1e-6;
        }
        if let Some(l) = cholesky4(&cov) {
            self.chol = l;
            if !self.empirical {
                // Optimal random-walk scaling for a four-dimensional target.
                self.adaptive.step = 2.38 / 2.0;
                self.empirical = true;
            }
        }
    }

    fn propose<R: Rng>(&self, current: [f64; 4], rng: &mut R) -> [f64; 4] {
        let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let mut out = current;
        for i in 0..4 {
            let mut s = 0.0;
            for (k, zk) in z.iter().enumerate().take(i + 1) {
                s += self.chol[i][k] * zk;
            }
            out[i] += self.adaptive.step * s;
        }
        out
    }
}

/// A single chain: model, state, step sizes and random stream.
pub struct Chain<'a> {
    model: Model<'a>,
    config: &'a SamplerConfig,
    chain: usize,
    state: State,
    rng: StreamRng,
    iteration: usize,
    steps: std::collections::HashMap<Block, Adaptive>,
    beta: JointProposal,
    table: [[f64; N_PATTERN_SLOTS]; 2],
}

/// Initial parameters of a chain. Draws from `rng` only for jittered starts.
pub fn init_state<R: Rng>(
    config: &SamplerConfig,
    data: &Dataset,
    priors: &PriorSpec,
    rng: &mut R,
) -> Result<(TestParams, RegressionState, Vec<bool>), SamplerError> {
    let (s_mean, c_mean) = priors.accuracy_means();
    let alpha0 = priors.alpha.central_logit();
    let mut tests = match &config.initial_tests {
        Some(t) => *t,
        None => tests_from(s_mean, c_mean, [0.5, 0.5]),
    };
    let mut reg = RegressionState::baseline(data.n_regions(), data.n_sampled_tracts(), alpha0);
    if config.init == InitPolicy::Jittered {
        let mut z = || -> f64 { rng.sample(StandardNormal) };
        if config.initial_tests.is_none() && !config.is_fixed(BlockGroup::Tests) {
            let s = tests.sensitivity.map(|v| expit(logit(v) + 0.5 * z()));
            let c = tests.specificity.map(|v| expit(logit(v) + 0.5 * z()));
            let f = [expit(z()), expit(z())];
            tests = tests_from(s, c, f);
        }
        if !config.is_fixed(BlockGroup::Alpha) {
            reg.alpha += 0.5 * z();
        }
        if !config.is_fixed(BlockGroup::RegionIntercepts) {
            if priors.region_intercepts == RegionIntercepts::Pooled {
                let a = reg.alpha;
                reg.alpha_region.iter_mut().for_each(|x| *x = a);
            } else {
                let a = reg.alpha;
                reg.alpha_region.iter_mut().for_each(|x| *x = a + 0.3 * z());
                reg.sigma2 = (0.5 * z()).exp().min(0.9 * priors.sigma_upper).powi(2);
            }
        } else {
            let a = reg.alpha;
            reg.alpha_region.iter_mut().for_each(|x| *x = a);
        }
        if !config.is_fixed(BlockGroup::Beta) {
            reg.beta_stratum = reg.beta_stratum.map(|_| 0.3 * z());
            reg.beta_tract = 0.3 * z();
        }
        if !config.is_fixed(BlockGroup::Tracts) {
            reg.tau2 = (0.5 * z()).exp().min(0.9 * priors.tau_upper).powi(2);
        }
    }
    let model = Model::new(data, priors, config.likelihood);
    let table = model.likelihood_table(&tests);
    let pi0 = priors.alpha.central_prevalence();
    let latent = data
        .participants
        .iter()
        .zip(&model.part_slot)
        .map(|(p, &slot)| {
            let q = full_conditional_from(pi0, table[1][slot], table[0][slot]);
            if q.is_nan() {
                Err(SamplerError::ImpossibleResults {
                    chain: usize::MAX,
                    participant: p.id.clone(),
                })
            } else {
                Ok(q >= 0.5)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((tests, reg, latent))
}

impl<'a> Chain<'a> {
    pub fn new(config: &'a SamplerConfig, data: &'a Dataset, priors: &'a PriorSpec, chain: usize) -> Result<Self, SamplerError> {
        config.validate()?;
        priors.validate().map_err(SamplerError::Prior)?;
        let mut rng = chain_rng(config.seed, chain);
        let (tests, reg, latent) = init_state(config, data, priors, &mut rng).map_err(|e| match e {
            SamplerError::ImpossibleResults { participant, .. } => SamplerError::ImpossibleResults { chain, participant },
            e => e,
        })?;
        Ok(Self::from_state(config, data, priors, chain, rng, tests, reg, latent))
    }

    /// Chain started from explicit values.
    #[allow(clippy::too_many_arguments)]
    pub fn from_state(
        config: &'a SamplerConfig,
        data: &'a Dataset,
        priors: &'a PriorSpec,
        chain: usize,
        rng: StreamRng,
        tests: TestParams,
        reg: RegressionState,
        latent: Vec<bool>,
    ) -> Self {
        let model = Model::new(data, priors, config.likelihood);
        let frac = [
            frac_of(tests.cov_infected, tests.cov_infected_bound()),
            frac_of(tests.cov_uninfected, tests.cov_uninfected_bound()),
        ];
        let n_cells = model.cells.len();
        let eta = (0..n_cells).map(|c| model.eta(c, &reg)).collect();
        let state = State {
            tests,
            frac,
            reg,
            latent,
            counts: [[0; N_PATTERN_SLOTS]; 2],
            cell_k: vec![0; n_cells],
            eta,
        };
        let mut steps = std::collections::HashMap::new();
        for j in 0..N_TESTS {
            steps.insert(Block::Sensitivity(j), Adaptive::new(0.3));
            steps.insert(Block::Specificity(j), Adaptive::new(0.3));
        }
        for b in [
            Block::CovInfected,
            Block::CovUninfected,
            Block::Alpha,
            Block::LogSigma,
            Block::SigmaRescale,
            Block::AlphaShift,
            Block::LogTau,
            Block::TauRescale,
        ] {
            steps.insert(b, Adaptive::new(0.5));
        }
        for r in 0..data.n_regions() {
            steps.insert(Block::AlphaRegion(r), Adaptive::new(0.5));
        }
        for t in 0..data.n_sampled_tracts() {
            steps.insert(Block::TractEffect(t), Adaptive::new(0.5));
        }
        let table = model.likelihood_table(&state.tests);
        let mut chain = Chain {
            model,
            config,
            chain,
            state,
            rng,
            iteration: 0,
            steps,
            beta: JointProposal::new(),
            table,
        };
        chain.recount();
        chain
    }

    pub fn tests(&self) -> &TestParams {
        &self.state.tests
    }

    pub fn regression(&self) -> &RegressionState {
        &self.state.reg
    }

    pub fn latent(&self) -> &[bool] {
        &self.state.latent
    }

    pub fn step(&self, block: Block) -> f64 {
        match block {
            Block::Beta => self.beta.adaptive.step,
            b => self.steps[&b].step,
        }
    }

    pub fn set_step(&mut self, block: Block, step: f64) {
        match block {
            Block::Beta => self.beta.adaptive.step = step,
            b => self.steps.get_mut(&b).expect("known block").step = step,
        }
    }

    /// Full log joint density at the current state, with sd-scale densities
    /// for the scale parameters.
    pub fn log_joint(&self) -> f64 {
        crate::prevmodel::log_joint(self.model.data, &self.state.latent, &self.state.tests, &self.state.reg, self.model.priors)
    }

    fn recount(&mut self) {
        let s = &mut self.state;
        s.counts = [[0; N_PATTERN_SLOTS]; 2];
        s.cell_k.iter_mut().for_each(|k| *k = 0);
        for ((&d, &slot), &cell) in s.latent.iter().zip(&self.model.part_slot).zip(&self.model.part_cell) {
            s.counts[d as usize][slot] += 1;
            s.cell_k[cell] += d as u32;
        }
    }

    fn after_burnin(&self) -> bool {
        self.iteration >= self.config.n_burnin
    }

    /// Exact Gibbs update of every infection indicator.
    pub fn update_latent(&mut self) -> Result<(), SamplerError> {
        self.table = self.model.likelihood_table(&self.state.tests);
        let pis: Vec<f64> = self.state.eta.iter().map(|&e| expit(e)).collect();
        for i in 0..self.state.latent.len() {
            let slot = self.model.part_slot[i];
            let q = full_conditional_from(pis[self.model.part_cell[i]], self.table[1][slot], self.table[0][slot]);
            if q.is_nan() {
                return Err(SamplerError::ImpossibleResults {
                    chain: self.chain,
                    participant: self.model.data.participants[i].id.clone(),
                });
            }
            self.state.latent[i] = self.rng.random::<f64>() < q;
        }
        self.recount();
        Ok(())
    }

    fn fault(&self, block: Block) -> SamplerError {
        SamplerError::NonFinite {
            chain: self.chain,
            iteration: self.iteration,
            block: block.to_string(),
        }
    }

    fn accept(&mut self, log_ratio: f64) -> bool {
        if log_ratio >= 0.0 {
            return true;
        }
        // NaN ratios compare false and are rejected.
        self.rng.random::<f64>().ln() < log_ratio
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// One Metropolis update of `block`. Returns whether the proposal was accepted.
    pub fn update_block(&mut self, block: Block) -> Result<bool, SamplerError> {
        let accepted = match block {
            Block::Sensitivity(_) | Block::Specificity(_) | Block::CovInfected | Block::CovUninfected => {
                self.update_tests(block)?
            }
            Block::Beta => self.update_beta()?,
            Block::AlphaRegion(r) => self.update_alpha_region(r)?,
            Block::Alpha => self.update_alpha()?,
            Block::LogSigma => self.update_log_sigma()?,
            Block::SigmaRescale => self.update_sigma_rescale()?,
            Block::AlphaShift => self.update_alpha_shift()?,
            Block::TractEffect(t) => self.update_tract(t)?,
            Block::LogTau => self.update_log_tau()?,
            Block::TauRescale => self.update_tau_rescale()?,
        };
        let after = self.after_burnin();
        match block {
            Block::Beta => self.beta.adaptive.record(accepted, after),
            b => self.steps.get_mut(&b).expect("known block").record(accepted, after),
        }
        Ok(accepted)
    }

    fn update_tests(&mut self, block: Block) -> Result<bool, SamplerError> {
        let cur = self.model.tests_target(&self.state.tests, &self.state.counts);
        if !cur.is_finite() {
            return Err(self.fault(block));
        }
        let step = self.steps[&block].step;
        let eps = step * self.normal();
        let mut s = self.state.tests.sensitivity;
        let mut c = self.state.tests.specificity;
        let mut frac = self.state.frac;
        let x = match block {
            Block::Sensitivity(j) => &mut s[j],
            Block::Specificity(j) => &mut c[j],
            Block::CovInfected => &mut frac[0],
            _ => &mut frac[1],
        };
        let old = *x;
        let new = expit(logit(old) + eps);
        if !(new > 0.0 && new < 1.0) {
            return Ok(false);
        }
        *x = new;
        let proposal = tests_from(s, c, frac);
        let prop = self.model.tests_target(&proposal, &self.state.counts);
        let jac = (new * (1.0 - new)).ln() - (old * (1.0 - old)).ln();
        if self.accept(prop - cur + jac) {
            self.state.tests = proposal;
            self.state.frac = frac;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn update_beta(&mut self) -> Result<bool, SamplerError> {
        let b0 = beta_vec(&self.state.reg);
        let k = &self.state.cell_k;
        let cur = self.model.beta_prior(&b0)
            + (0..self.model.cells.len())
                .map(|c| cell_ll(self.state.eta[c], self.model.cells[c].n, k[c]))
                .sum::<f64>();
        if !cur.is_finite() {
            return Err(self.fault(Block::Beta));
        }
        let b1 = self.beta.propose(b0, &mut self.rng);
        let diff: [f64; 4] = std::array::from_fn(|i| b1[i] - b0[i]);
        let new_eta: Vec<f64> = self
            .model
            .cells
            .iter()
            .zip(&self.state.eta)
            .map(|(c, &e)| {
                let x = design_vec(&c.row);
                e + x[0] * diff[0] + x[1] * diff[1] + x[2] * diff[2] + x[3] * diff[3]
            })
            .collect();
        let prop = self.model.beta_prior(&b1)
            + (0..self.model.cells.len())
                .map(|c| cell_ll(new_eta[c], self.model.cells[c].n, k[c]))
                .sum::<f64>();
        if self.accept(prop - cur) {
            self.state.reg.beta_stratum = [b1[0], b1[1], b1[2]];
            self.state.reg.beta_tract = b1[3];
            self.refresh_eta();
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Recomputes linear predictors from scratch so that cached values never
    /// drift from the parameters.
    fn refresh_eta(&mut self) {
        for c in 0..self.model.cells.len() {
            self.state.eta[c] = self.model.eta(c, &self.state.reg);
        }
    }

    fn refresh_eta_cells(&mut self, cells: &[usize]) {
        for &c in cells {
            self.state.eta[c] = self.model.eta(c, &self.state.reg);
        }
    }

    fn update_alpha_region(&mut self, r: usize) -> Result<bool, SamplerError> {
        let block = Block::AlphaRegion(r);
        let s = &self.state;
        let old = s.reg.alpha_region[r];
        let cur = self.model.region_target(r, old, &s.reg, &s.eta, &s.cell_k);
        if !cur.is_finite() {
            return Err(self.fault(block));
        }
        let new = old + self.steps[&block].step * self.normal();
        let s = &self.state;
        let prop = self.model.region_target(r, new, &s.reg, &s.eta, &s.cell_k);
        if self.accept(prop - cur) {
            self.state.reg.alpha_region[r] = new;
            let cells = self.model.region_cells[r].clone();
            self.refresh_eta_cells(&cells);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn update_alpha(&mut self) -> Result<bool, SamplerError> {
        let old = self.state.reg.alpha;
        let step = self.steps[&Block::Alpha].step;
        if self.model.pooled() {
            // Every region shares the global intercept.
            let cur = self.model.regression_target(&self.state.reg, &self.state.cell_k);
            if !cur.is_finite() {
                return Err(self.fault(Block::Alpha));
            }
            let new = old + step * self.normal();
            let mut reg = self.state.reg.clone();
            reg.alpha = new;
            reg.alpha_region.iter_mut().for_each(|a| *a = new);
            let prop = self.model.regression_target(&reg, &self.state.cell_k);
            return Ok(self.commit_regression(prop - cur, reg));
        }
        let cur = self.model.alpha_target(old, &self.state.reg);
        if !cur.is_finite() {
            return Err(self.fault(Block::Alpha));
        }
        let new = old + step * self.normal();
        let prop = self.model.alpha_target(new, &self.state.reg);
        if self.accept(prop - cur) {
            self.state.reg.alpha = new;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn commit_regression(&mut self, log_ratio: f64, reg: RegressionState) -> bool {
        if self.accept(log_ratio) {
            self.state.reg = reg;
            self.refresh_eta();
            true
        } else {
            false
        }
    }

    fn update_log_sigma(&mut self) -> Result<bool, SamplerError> {
        let sigma = self.state.reg.sigma();
        let cur = self.model.sigma_target(sigma, &self.state.reg) + sigma.ln();
        if !cur.is_finite() {
            return Err(self.fault(Block::LogSigma));
        }
        let new = sigma * (self.steps[&Block::LogSigma].step * self.normal()).exp();
        let prop = self.model.sigma_target(new, &self.state.reg) + new.ln();
        if self.accept(prop - cur) {
            self.state.reg.sigma2 = new * new;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn update_sigma_rescale(&mut self) -> Result<bool, SamplerError> {
        let cur = self.model.regression_target(&self.state.reg, &self.state.cell_k);
        if !cur.is_finite() {
            return Err(self.fault(Block::SigmaRescale));
        }
        let eps = self.steps[&Block::SigmaRescale].step * self.normal();
        let scale = eps.exp();
        let mut reg = self.state.reg.clone();
        let sigma = reg.sigma() * scale;
        reg.sigma2 = sigma * sigma;
        let a = reg.alpha;
        reg.alpha_region.iter_mut().for_each(|x| *x = a + (*x - a) * scale);
        let prop = self.model.regression_target(&reg, &self.state.cell_k);
        // Jacobian of scaling sigma and every region deviation by e^eps.
        let jac = (reg.alpha_region.len() + 1) as f64 * eps;
        Ok(self.commit_regression(prop - cur + jac, reg))
    }

    fn update_alpha_shift(&mut self) -> Result<bool, SamplerError> {
        let cur = self.model.regression_target(&self.state.reg, &self.state.cell_k);
        if !cur.is_finite() {
            return Err(self.fault(Block::AlphaShift));
        }
        let delta = self.steps[&Block::AlphaShift].step * self.normal();
        let mut reg = self.state.reg.clone();
        reg.alpha += delta;
        reg.alpha_region.iter_mut().for_each(|x| *x += delta);
        let prop = self.model.regression_target(&reg, &self.state.cell_k);
        Ok(self.commit_regression(prop - cur, reg))
    }

    fn update_tract(&mut self, t: usize) -> Result<bool, SamplerError> {
        let block = Block::TractEffect(t);
        let s = &self.state;
        let old = s.reg.tract_effects[t];
        let cur = self.model.tract_target(t, old, &s.reg, &s.eta, &s.cell_k);
        if !cur.is_finite() {
            return Err(self.fault(block));
        }
        let new = old + self.steps[&block].step * self.normal();
        let s = &self.state;
        let prop = self.model.tract_target(t, new, &s.reg, &s.eta, &s.cell_k);
        if self.accept(prop - cur) {
            self.state.reg.tract_effects[t] = new;
            let cells = self.model.tract_cells[t].clone();
            self.refresh_eta_cells(&cells);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn update_log_tau(&mut self) -> Result<bool, SamplerError> {
        let tau = self.state.reg.tau();
        let cur = self.model.tau_target(tau, &self.state.reg) + tau.ln();
        if !cur.is_finite() {
            return Err(self.fault(Block::LogTau));
        }
        let new = tau * (self.steps[&Block::LogTau].step * self.normal()).exp();
        let prop = self.model.tau_target(new, &self.state.reg) + new.ln();
        if self.accept(prop - cur) {
            self.state.reg.tau2 = new * new;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn update_tau_rescale(&mut self) -> Result<bool, SamplerError> {
        let cur = self.model.regression_target(&self.state.reg, &self.state.cell_k);
        if !cur.is_finite() {
            return Err(self.fault(Block::TauRescale));
        }
        let eps = self.steps[&Block::TauRescale].step * self.normal();
        let scale = eps.exp();
        let mut reg = self.state.reg.clone();
        let tau = reg.tau() * scale;
        reg.tau2 = tau * tau;
        reg.tract_effects.iter_mut().for_each(|b| *b *= scale);
        let prop = self.model.regression_target(&reg, &self.state.cell_k);
        let jac = (reg.tract_effects.len() + 1) as f64 * eps;
        Ok(self.commit_regression(prop - cur + jac, reg))
    }

    /// Blocks updated in every iteration, in order.
    pub fn schedule(&self) -> Vec<Block> {
        let cfg = self.config;
        let pooled = self.model.pooled();
        let mut blocks = Vec::new();
        if !cfg.is_fixed(BlockGroup::Tests) {
            for j in 0..N_TESTS {
                blocks.push(Block::Sensitivity(j));
                blocks.push(Block::Specificity(j));
            }
            blocks.push(Block::CovInfected);
            blocks.push(Block::CovUninfected);
        }
        if !cfg.is_fixed(BlockGroup::Beta) {
            blocks.push(Block::Beta);
        }
        let regions_free = !cfg.is_fixed(BlockGroup::RegionIntercepts) && !pooled;
        if regions_free {
            blocks.extend((0..self.model.data.n_regions()).map(Block::AlphaRegion));
        }
        if !cfg.is_fixed(BlockGroup::Alpha) {
            blocks.push(Block::Alpha);
        }
        if regions_free {
            blocks.push(Block::LogSigma);
            blocks.push(Block::SigmaRescale);
            if !cfg.is_fixed(BlockGroup::Alpha) {
                blocks.push(Block::AlphaShift);
            }
        }
        if !cfg.is_fixed(BlockGroup::Tracts) {
            blocks.extend((0..self.model.data.n_sampled_tracts()).map(Block::TractEffect));
            blocks.push(Block::LogTau);
            blocks.push(Block::TauRescale);
        }
        blocks
    }

    fn adapt(&mut self, window: usize) {
        let target = self.config.target_scalar;
        for a in self.steps.values_mut() {
            a.adapt(target, window);
        }
        self.beta.refresh();
        self.beta.adaptive.adapt(self.config.target_joint, window);
    }

    /// Runs one full sweep: latent indicators then every block in the schedule.
    pub fn iterate(&mut self, schedule: &[Block]) -> Result<(), SamplerError> {
        self.update_latent()?;
        for &b in schedule {
            self.update_block(b)?;
        }
        if self.iteration < self.config.n_burnin {
            if schedule.contains(&Block::Beta) {
                self.beta.observe(beta_vec(&self.state.reg));
            }
            if (self.iteration + 1) % self.config.adapt_window == 0 {
                self.adapt((self.iteration + 1) / self.config.adapt_window - 1);
            }
        }
        self.iteration += 1;
        Ok(())
    }

    fn check_support(&self) -> Result<(), SamplerError> {
        let support = |source| SamplerError::Support {
            chain: self.chain,
            iteration: self.iteration,
            source,
        };
        self.state.tests.validate().map_err(support)?;
        self.state
            .reg
            .validate(self.model.data.n_regions(), self.model.data.n_sampled_tracts())
            .map_err(support)?;
        // A held test block may sit outside its prior's support (perfect
        // tests, say); its prior is then a constant and is left out.
        let lj = if self.config.is_fixed(BlockGroup::Tests) {
            let st = &self.state;
            let (data, priors) = (self.model.data, self.model.priors);
            crate::prevmodel::log_prior_alpha(st.reg.alpha, &priors.alpha)
                + crate::prevmodel::log_prior_regions(&st.reg, priors)
                + crate::prevmodel::log_prior_beta(&st.reg, priors)
                + crate::prevmodel::log_prior_tracts(&st.reg, priors)
                + crate::prevmodel::log_likelihood_terms(data, &st.latent, &st.tests, &st.reg)
                    .iter()
                    .sum::<f64>()
        } else {
            self.log_joint()
        };
        if !lj.is_finite() {
            return Err(support(DomainError::OutOfRange {
                name: "log joint density",
                value: lj,
                range: "finite",
            }));
        }
        Ok(())
    }

    fn stats(&self, schedule: &[Block]) -> Vec<BlockStats> {
        schedule
            .iter()
            .map(|&b| {
                let a = match b {
                    Block::Beta => &self.beta.adaptive,
                    b => &self.steps[&b],
                };
                BlockStats {
                    block: b.to_string(),
                    proposed: a.proposed,
                    accepted: a.accepted,
                    step: a.step,
                }
            })
            .collect()
    }
}

/// Runs one chain to completion. Deterministic in `(config.seed, chain)`.
pub fn run_chain(config: &SamplerConfig, data: &Dataset, priors: &PriorSpec, chain: usize) -> Result<ChainDraws, SamplerError> {
    let mut c = Chain::new(config, data, priors, chain)?;
    let schedule = c.schedule();
    let poststrat = PostStratifier::new(data, config.unsampled_tracts);
    let rates = data.nonresponse.rates();
    let mut draws = Vec::with_capacity(config.draws_per_chain());
    let mut latent = Vec::new();
    for it in 0..config.n_iterations {
        c.iterate(&schedule)?;
        if config.keeps(it) {
            c.check_support()?;
            let k = draws.len();
            let mut rng = poststrat_rng(config.seed, chain, k);
            let p = poststrat.poststratify(&c.state.reg, rates, &mut rng);
            draws.push(Draw {
                tests: c.state.tests,
                regression: c.state.reg.clone(),
                prevalence: p.statewide,
                region_prevalence: p.regions,
            });
            if config.record_latent {
                latent.push(c.state.latent.clone());
            }
        }
    }
    Ok(ChainDraws {
        chain,
        draws,
        latent,
        acceptance: c.stats(&schedule),
    })
}

/// Runs every chain concurrently and returns them in chain order.
pub fn run_chains(config: &SamplerConfig, data: &Dataset, priors: &PriorSpec) -> Result<Vec<ChainDraws>, SamplerError> {
    config.validate()?;
    (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(config, data, priors, c))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Draws the infection indicators once from their full conditionals under
/// the given parameters.
pub fn update_latent<R: Rng>(
    data: &Dataset,
    tests: &TestParams,
    regression: &RegressionState,
    rng: &mut R,
) -> Result<Vec<bool>, SamplerError> {
    data.participants
        .iter()
        .map(|p| {
            let slot = data.tract_slot[p.tract].expect("participant tracts are sampled");
            let eta = crate::prevmodel::linear_predictor(
                regression,
                &data.design_row(p),
                p.region,
                crate::prevmodel::TractEffect::Sampled(slot),
            )
            .expect("regression state covers every sampled tract");
            let q = crate::testmodel::latent_full_conditional(&p.panel, expit(eta), tests);
            if q.is_nan() {
                return Err(SamplerError::ImpossibleResults {
                    chain: 0,
                    participant: p.id.clone(),
                });
            }
            Ok(rng.random::<f64>() < q)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::tiny_dataset;
    use crate::rng::stream_rng;

    fn short(n: usize, burn: usize, thin: usize) -> SamplerConfig {
        SamplerConfig {
            n_iterations: n,
            n_burnin: burn,
            thin,
            n_chains: 2,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn draw_count_follows_thinning() {
        let data = tiny_dataset();
        let cfg = short(1000, 500, 5);
        let d = run_chain(&cfg, &data, &PriorSpec::default(), 0).unwrap();
        assert_eq!(d.draws.len(), 100);
        assert_eq!(cfg.draws_per_chain(), 100);
        assert_eq!(short(1003, 500, 5).draws_per_chain(), 100);
    }

    #[test]
    fn same_seed_same_draws() {
        let data = tiny_dataset();
        let cfg = short(400, 200, 2);
        let a = run_chains(&cfg, &data, &PriorSpec::default()).unwrap();
        let b = run_chains(&cfg, &data, &PriorSpec::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].draws, a[1].draws);
    }

    #[test]
    fn config_validation() {
        assert!(short(100, 100, 1).validate().is_err());
        assert!(short(100, 10, 0).validate().is_err());
        assert!(SamplerConfig { n_chains: 0, ..short(100, 10, 1) }.validate().is_err());
        assert!(SamplerConfig::desk().validate().is_ok());
    }

    #[test]
    fn init_at_prior_means() {
        let data = tiny_dataset();
        let cfg = SamplerConfig::desk();
        let mut rng = stream_rng(1, 0);
        let (t, reg, _) = init_state(&cfg, &data, &PriorSpec::default(), &mut rng).unwrap();
        assert!((t.sensitivity[0] - 109.0 / 122.0).abs() < 1e-15);
        assert!((t.sensitivity[1] - 96.0 / 135.0).abs() < 1e-15);
        assert_eq!(t.sensitivity[2], 0.45);
        assert!((t.cov_infected - 0.5 * t.cov_infected_bound()).abs() < 1e-15);
        assert_eq!(reg.sigma(), 1.0);
        assert_eq!(reg.tau(), 1.0);
    }

    #[test]
    fn negative_panel_starts_uninfected() {
        let data = tiny_dataset();
        let mut rng = stream_rng(1, 0);
        let (_, _, latent) = init_state(&SamplerConfig::desk(), &data, &PriorSpec::default(), &mut rng).unwrap();
        for (p, d) in data.participants.iter().zip(latent) {
            if p.panel.positives() == 0 {
                assert!(!d, "{}", p.id);
            }
        }
    }

    #[test]
    fn adaptation_moves_toward_target() {
        assert!(adapt_step(1.0, 1.0, 0.44, 0) > 1.0);
        assert!(adapt_step(1.0, 0.0, 0.44, 0) < 1.0);
        assert_eq!(adapt_step(0.7, 0.44, 0.44, 5), 0.7);
    }

    #[test]
    fn zero_step_always_accepts() {
        let data = tiny_dataset();
        let cfg = short(100, 50, 1);
        let priors = PriorSpec::default();
        let mut c = Chain::new(&cfg, &data, &priors, 0).unwrap();
        for b in c.schedule() {
            c.set_step(b, 0.0);
        }
        c.update_latent().unwrap();
        for b in c.schedule() {
            assert!(c.update_block(b).unwrap(), "{b}");
        }
    }

    #[test]
    fn tau_stays_inside_prior_support() {
        let data = tiny_dataset();
        let cfg = short(100, 50, 1);
        let priors = PriorSpec::default();
        let mut c = Chain::new(&cfg, &data, &priors, 0).unwrap();
        c.state.reg.tau2 = 4.99 * 4.99;
        c.set_step(Block::LogTau, 2.0);
        let mut rejected = 0;
        for _ in 0..500 {
            if !c.update_block(Block::LogTau).unwrap() {
                rejected += 1;
            }
            assert!(c.regression().tau() < 5.0);
        }
        assert!(rejected > 0);
    }

    #[test]
    fn current_state_outside_support_is_a_fault() {
        let data = tiny_dataset();
        let cfg = short(100, 50, 1);
        let priors = PriorSpec::default();
        let mut c = Chain::new(&cfg, &data, &priors, 0).unwrap();
        c.state.reg.tau2 = 36.0;
        assert!(matches!(c.update_block(Block::LogTau), Err(SamplerError::NonFinite { .. })));
    }

    /// Differences of each local target equal differences of the full log
    /// joint, after converting to the coordinates the block works in.
    #[test]
    fn local_targets_match_log_joint() {
        let data = tiny_dataset();
        let priors = PriorSpec::default();
        let cfg = short(100, 50, 1);
        let mut c = Chain::new(&cfg, &data, &priors, 0).unwrap();
        let mut rng = stream_rng(5, 5);
        c.state.reg.beta_stratum = [0.3, -0.2, 0.4];
        c.state.reg.beta_tract = -0.5;
        c.state.reg.tract_effects.iter_mut().for_each(|b| *b = rng.sample::<f64, _>(StandardNormal) * 0.5);
        c.state.reg.alpha_region.iter_mut().for_each(|a| *a = -3.0 + rng.random::<f64>());
        c.refresh_eta();
        c.update_latent().unwrap();

        let lj = |c: &Chain, tests: &TestParams, reg: &RegressionState| {
            crate::prevmodel::log_joint(c.model.data, &c.state.latent, tests, reg, c.model.priors)
        };
        let base = lj(&c, &c.state.tests, &c.state.reg);

        // Tests: the covariance prior density cancels against the fraction Jacobian.
        let t1 = tests_from([0.85, 0.75, 0.5], [0.99, 0.98, 0.995], [0.3, 0.6]);
        let local = c.model.tests_target(&t1, &c.state.counts) - c.model.tests_target(&c.state.tests, &c.state.counts);
        let full = lj(&c, &t1, &c.state.reg) + t1.cov_infected_bound().ln() + t1.cov_uninfected_bound().ln()
            - base
            - c.state.tests.cov_infected_bound().ln()
            - c.state.tests.cov_uninfected_bound().ln();
        assert!((local - full).abs() < 1e-9, "{local} vs {full}");

        // Region intercept.
        let mut reg = c.state.reg.clone();
        reg.alpha_region[1] += 0.7;
        let s = &c.state;
        let local = c.model.region_target(1, reg.alpha_region[1], &s.reg, &s.eta, &s.cell_k)
            - c.model.region_target(1, s.reg.alpha_region[1], &s.reg, &s.eta, &s.cell_k);
        assert!((local - (lj(&c, &s.tests, &reg) - base)).abs() < 1e-9);

        // Tract effect.
        let mut reg = c.state.reg.clone();
        reg.tract_effects[0] -= 0.4;
        let local = c.model.tract_target(0, reg.tract_effects[0], &s.reg, &s.eta, &s.cell_k)
            - c.model.tract_target(0, s.reg.tract_effects[0], &s.reg, &s.eta, &s.cell_k);
        assert!((local - (lj(&c, &s.tests, &reg) - base)).abs() < 1e-9);

        // Global intercept, region scale and tract scale.
        let mut reg = c.state.reg.clone();
        reg.alpha -= 0.3;
        let local = c.model.alpha_target(reg.alpha, &s.reg) - c.model.alpha_target(s.reg.alpha, &s.reg);
        assert!((local - (lj(&c, &s.tests, &reg) - base)).abs() < 1e-9);

        let mut reg = c.state.reg.clone();
        reg.sigma2 = 2.3;
        let local = c.model.sigma_target(reg.sigma(), &s.reg) - c.model.sigma_target(s.reg.sigma(), &s.reg);
        assert!((local - (lj(&c, &s.tests, &reg) - base)).abs() < 1e-9);

        let mut reg = c.state.reg.clone();
        reg.tau2 = 0.4;
        let local = c.model.tau_target(reg.tau(), &s.reg) - c.model.tau_target(s.reg.tau(), &s.reg);
        assert!((local - (lj(&c, &s.tests, &reg) - base)).abs() < 1e-9);

        // Whole regression target.
        let mut reg = c.state.reg.clone();
        reg.beta_stratum[2] = 1.1;
        reg.tract_effects[1] = 0.9;
        let local = c.model.regression_target(&reg, &s.cell_k) - c.model.regression_target(&s.reg, &s.cell_k);
        assert!((local - (lj(&c, &s.tests, &reg) - base)).abs() < 1e-9);
    }

    #[test]
    fn cached_predictors_track_parameters() {
        let data = tiny_dataset();
        let priors = PriorSpec::default();
        let cfg = short(300, 100, 1);
        let mut c = Chain::new(&cfg, &data, &priors, 1).unwrap();
        let schedule = c.schedule();
        for _ in 0..300 {
            c.iterate(&schedule).unwrap();
        }
        for i in 0..c.model.cells.len() {
            assert!((c.state.eta[i] - c.model.eta(i, &c.state.reg)).abs() < 1e-12);
        }
        let mut k = vec![0u32; c.model.cells.len()];
        for (d, &cell) in c.state.latent.iter().zip(&c.model.part_cell) {
            k[cell] += *d as u32;
        }
        assert_eq!(k, c.state.cell_k);
    }

    #[test]
    fn latent_update_frequencies_match_full_conditional() {
        let data = tiny_dataset();
        let tests = TestParams::new([0.8, 0.7, 0.5], [0.95, 0.9, 0.97], 0.05, 0.02).unwrap();
        let mut reg = RegressionState::baseline(data.n_regions(), data.n_sampled_tracts(), -1.0);
        reg.beta_stratum = [0.5, -0.5, 0.2];
        let n = 20_000;
        let mut hits = vec![0usize; data.n_participants()];
        let mut rng = stream_rng(9, 0);
        for _ in 0..n {
            for (h, d) in hits.iter_mut().zip(update_latent(&data, &tests, &reg, &mut rng).unwrap()) {
                *h += d as usize;
            }
        }
        for (p, &h) in data.participants.iter().zip(&hits) {
            let slot = data.tract_slot[p.tract].unwrap();
            let eta = crate::prevmodel::linear_predictor(&reg, &data.design_row(p), p.region, crate::prevmodel::TractEffect::Sampled(slot)).unwrap();
            let q = crate::testmodel::latent_full_conditional(&p.panel, expit(eta), &tests);
            let se = (q * (1.0 - q) / n as f64).sqrt().max(1e-12);
            assert!(((h as f64 / n as f64) - q).abs() <= 4.0 * se, "{}: {} vs {q}", p.id, h as f64 / n as f64);
        }
    }
}
