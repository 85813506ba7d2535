//! Survey records, model parameters and poststratification cells.
//!
//! Raw tables come in as loosely typed rows (labels are strings, test results
//! are optional 0/1 values). [`validate_dataset`] cross-references them and
//! produces an immutable [`Dataset`] with dense integer identifiers that the
//! model and sampler work against.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prevmodel::{design_row, DesignRow, SdConvention, Standardizer};

/// Canonical region names of the eight administrative regions used by the
/// state survey design.
pub const OHIO_REGIONS: [&str; 8] = [
    "Central",
    "East Central",
    "Northeast",
    "Northwest",
    "Southeast",
    "Southeast Central",
    "Southwest",
    "West Central",
];

/// Household-level non-response rates observed in each of [`OHIO_REGIONS`].
pub const OHIO_NONRESPONSE: [f64; 8] = [0.783, 0.841, 0.840, 0.832, 0.752, 0.790, 0.810, 0.818];

/// Number of antibody tests in the panel.
pub const N_TESTS: usize = 3;

/// Names of the tests in panel order.
pub const TEST_NAMES: [&str; N_TESTS] = ["abbott_igg", "liaison_igg", "epitope_igm"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("panel has no observed test result")]
    EmptyPanel,
    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("unknown {kind} label {label:?}")]
    UnknownLabel { kind: &'static str, label: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeGroup {
    #[serde(rename = "18-44")]
    Age18To44,
    #[serde(rename = "45-64")]
    Age45To64,
    #[serde(rename = "65+")]
    Age65Plus,
}

impl AgeGroup {
    pub const ALL: [AgeGroup; 3] = [AgeGroup::Age18To44, AgeGroup::Age45To64, AgeGroup::Age65Plus];

    pub fn label(self) -> &'static str {
        match self {
            AgeGroup::Age18To44 => "18-44",
            AgeGroup::Age45To64 => "45-64",
            AgeGroup::Age65Plus => "65+",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for AgeGroup {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().replace(['–', '—'], "-").as_str() {
            "18-44" => Ok(AgeGroup::Age18To44),
            "45-64" => Ok(AgeGroup::Age45To64),
            "65+" | "65-" | ">=65" => Ok(AgeGroup::Age65Plus),
            _ => Err(DomainError::UnknownLabel {
                kind: "age_group",
                label: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for AgeGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

impl Sex {
    pub const ALL: [Sex; 2] = [Sex::Male, Sex::Female];

    pub fn label(self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Sex {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Sex::Male),
            "female" | "f" => Ok(Sex::Female),
            _ => Err(DomainError::UnknownLabel {
                kind: "sex",
                label: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Demographic stratum: one (age group, sex) cell. Six in total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Stratum {
    pub age_group: AgeGroup,
    pub sex: Sex,
}

impl Stratum {
    pub const COUNT: usize = 6;

    pub fn new(age_group: AgeGroup, sex: Sex) -> Self {
        Stratum { age_group, sex }
    }

    pub fn index(self) -> usize {
        self.age_group.index() * 2 + self.sex.index()
    }

    pub fn from_index(index: usize) -> Self {
        Stratum {
            age_group: AgeGroup::ALL[index / 2],
            sex: Sex::ALL[index % 2],
        }
    }

    pub fn all() -> impl Iterator<Item = Stratum> {
        (0..Self::COUNT).map(Stratum::from_index)
    }
}

/// Bit set of observed tests. Bit 0 is the Abbott IgG, bit 1 the Liaison
/// IgG, bit 2 the Epitope IgM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TestMask(u8);

impl TestMask {
    pub const FULL: TestMask = TestMask(0b111);
    pub const IGG_PAIR: TestMask = TestMask(0b011);
    pub const EMPTY: TestMask = TestMask(0);

    pub fn from_bits(bits: u8) -> Self {
        TestMask(bits & 0b111)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, test: usize) -> bool {
        self.0 & (1 << test) != 0
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Observed test indices in panel order.
    pub fn tests(self) -> impl Iterator<Item = usize> {
        (0..N_TESTS).filter(move |&j| self.contains(j))
    }

    /// The seven nonempty masks, full mask first.
    pub fn nonempty() -> [TestMask; 7] {
        [0b111, 0b011, 0b101, 0b110, 0b001, 0b010, 0b100].map(TestMask)
    }
}

impl fmt::Display for TestMask {
    /// Renders as three digits in panel order, e.g. `101` for Abbott and Epitope.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..N_TESTS {
            f.write_str(if self.contains(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// The three optional binary antibody results of one participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TestPanel {
    results: [Option<bool>; N_TESTS],
}

impl TestPanel {
    pub fn new(
        abbott_igg: Option<bool>,
        liaison_igg: Option<bool>,
        epitope_igm: Option<bool>,
    ) -> Result<Self, DomainError> {
        Self::from_results([abbott_igg, liaison_igg, epitope_igm])
    }

    pub fn from_results(results: [Option<bool>; N_TESTS]) -> Result<Self, DomainError> {
        if results.iter().all(Option::is_none) {
            return Err(DomainError::EmptyPanel);
        }
        Ok(TestPanel { results })
    }

    /// Complete panel from 0/1 integers.
    pub fn complete(t1: u8, t2: u8, t3: u8) -> Self {
        TestPanel {
            results: [Some(t1 != 0), Some(t2 != 0), Some(t3 != 0)],
        }
    }

    pub fn abbott_igg(&self) -> Option<bool> {
        self.results[0]
    }

    pub fn liaison_igg(&self) -> Option<bool> {
        self.results[1]
    }

    pub fn epitope_igm(&self) -> Option<bool> {
        self.results[2]
    }

    pub fn result(&self, test: usize) -> Option<bool> {
        self.results[test]
    }

    pub fn results(&self) -> [Option<bool>; N_TESTS] {
        self.results
    }

    pub fn mask(&self) -> TestMask {
        let mut bits = 0;
        for (j, r) in self.results.iter().enumerate() {
            if r.is_some() {
                bits |= 1 << j;
            }
        }
        TestMask(bits)
    }

    pub fn is_complete(&self) -> bool {
        self.mask() == TestMask::FULL
    }

    pub fn positives(&self) -> usize {
        self.results.iter().filter(|r| **r == Some(true)).count()
    }
}

/// A validated participant with identifiers resolved against the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub id: String,
    /// Index into [`Dataset::regions`].
    pub region: usize,
    pub age_group: AgeGroup,
    pub sex: Sex,
    /// Index into [`Dataset::tracts`].
    pub tract: usize,
    pub panel: TestPanel,
}

impl Participant {
    pub fn stratum(&self) -> Stratum {
        Stratum::new(self.age_group, self.sex)
    }
}

/// Sensitivities, specificities and the conditional covariances of the IgG pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestParams {
    pub sensitivity: [f64; N_TESTS],
    pub specificity: [f64; N_TESTS],
    /// Covariance of the two IgG results among the infected.
    pub cov_infected: f64,
    /// Covariance of the two IgG results among the uninfected.
    pub cov_uninfected: f64,
}

impl TestParams {
    /// Builds and validates a parameter set.
    ///
    /// Sensitivities and specificities may sit on the closed interval `[0, 1]`
    /// so that degenerate perfect tests can be expressed; the priors keep the
    /// sampler away from the boundary.
    pub fn new(
        sensitivity: [f64; N_TESTS],
        specificity: [f64; N_TESTS],
        cov_infected: f64,
        cov_uninfected: f64,
    ) -> Result<Self, DomainError> {
        let p = TestParams {
            sensitivity,
            specificity,
            cov_infected,
            cov_uninfected,
        };
        p.validate()?;
        Ok(p)
    }

    /// Conditionally independent tests.
    pub fn independent(sensitivity: [f64; N_TESTS], specificity: [f64; N_TESTS]) -> Result<Self, DomainError> {
        Self::new(sensitivity, specificity, 0.0, 0.0)
    }

    pub fn cov_infected_bound(&self) -> f64 {
        crate::testmodel::covariance_upper_bound(self.sensitivity[0], self.sensitivity[1])
    }

    pub fn cov_uninfected_bound(&self) -> f64 {
        crate::testmodel::covariance_upper_bound(self.specificity[0], self.specificity[1])
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        for &s in &self.sensitivity {
            check_unit("sensitivity", s)?;
        }
        for &c in &self.specificity {
            check_unit("specificity", c)?;
        }
        // Tolerate rounding when a covariance sits exactly on its bound.
        let slack = 1e-15;
        if !(self.cov_infected >= 0.0 && self.cov_infected <= self.cov_infected_bound() + slack) {
            return Err(DomainError::OutOfRange {
                name: "cov_infected",
                value: self.cov_infected,
                range: "[0, min(S1,S2) - S1*S2]",
            });
        }
        if !(self.cov_uninfected >= 0.0 && self.cov_uninfected <= self.cov_uninfected_bound() + slack) {
            return Err(DomainError::OutOfRange {
                name: "cov_uninfected",
                value: self.cov_uninfected,
                range: "[0, min(C1,C2) - C1*C2]",
            });
        }
        Ok(())
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<(), DomainError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(DomainError::OutOfRange {
            name,
            value: v,
            range: "[0, 1]",
        })
    }
}

/// Parameters of the multilevel logistic regression for infection probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionState {
    /// Region intercepts on the logit scale, indexed like [`Dataset::regions`].
    pub alpha_region: Vec<f64>,
    /// Mean of the region intercepts.
    pub alpha: f64,
    /// Variance of the region intercepts.
    pub sigma2: f64,
    /// Two age contrasts followed by the sex contrast.
    pub beta_stratum: [f64; 3],
    /// Effect of standardized log tract population.
    pub beta_tract: f64,
    /// Tract random effects, aligned with [`Dataset::sampled_tracts`].
    pub tract_effects: Vec<f64>,
    /// Variance of the tract random effects.
    pub tau2: f64,
}

impl RegressionState {
    /// All effects zero with the given intercept and unit variances.
    pub fn baseline(n_regions: usize, n_sampled_tracts: usize, alpha: f64) -> Self {
        RegressionState {
            alpha_region: vec![alpha; n_regions],
            alpha,
            sigma2: 1.0,
            beta_stratum: [0.0; 3],
            beta_tract: 0.0,
            tract_effects: vec![0.0; n_sampled_tracts],
            tau2: 1.0,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn tau(&self) -> f64 {
        self.tau2.sqrt()
    }

    pub fn validate(&self, n_regions: usize, n_sampled_tracts: usize) -> Result<(), DomainError> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(DomainError::OutOfRange {
                name: "sigma2",
                value: self.sigma2,
                range: "(0, inf)",
            });
        }
        if !(self.tau2 > 0.0 && self.tau2.is_finite()) {
            return Err(DomainError::OutOfRange {
                name: "tau2",
                value: self.tau2,
                range: "(0, inf)",
            });
        }
        if self.alpha_region.len() != n_regions {
            return Err(DomainError::OutOfRange {
                name: "alpha_region length",
                value: self.alpha_region.len() as f64,
                range: "number of regions",
            });
        }
        if self.tract_effects.len() != n_sampled_tracts {
            return Err(DomainError::OutOfRange {
                name: "tract_effects length",
                value: self.tract_effects.len() as f64,
                range: "number of sampled tracts",
            });
        }
        let finite = self.alpha.is_finite()
            && self.beta_tract.is_finite()
            && self.beta_stratum.iter().all(|b| b.is_finite())
            && self.alpha_region.iter().all(|a| a.is_finite())
            && self.tract_effects.iter().all(|b| b.is_finite());
        if !finite {
            return Err(DomainError::OutOfRange {
                name: "regression coefficient",
                value: f64::NAN,
                range: "finite reals",
            });
        }
        Ok(())
    }
}

/// A census tract of the statewide frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Tract {
    pub label: String,
    pub region: usize,
    pub total_population: f64,
    /// Sum of adult population over the tract's poststratification cells.
    pub adult_population: f64,
}

/// One poststratification cell with its adult population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostStratCell {
    pub region: usize,
    pub tract: usize,
    pub stratum: Stratum,
    pub adult_population: f64,
}

/// Adult population counts by region, tract and stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct PostStratTable {
    cells: Vec<PostStratCell>,
    total: f64,
}

impl PostStratTable {
    pub fn new(cells: Vec<PostStratCell>) -> Self {
        let total = cells.iter().map(|c| c.adult_population).sum();
        PostStratTable { cells, total }
    }

    pub fn cells(&self) -> &[PostStratCell] {
        &self.cells
    }

    pub fn total_population(&self) -> f64 {
        self.total
    }

    pub fn region_total(&self, region: usize) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.region == region)
            .map(|c| c.adult_population)
            .sum()
    }
}

/// Household non-response probability per region.
#[derive(Debug, Clone, PartialEq)]
pub struct NonResponseRates {
    rates: Vec<f64>,
}

impl NonResponseRates {
    pub fn new(rates: Vec<f64>) -> Result<Self, DomainError> {
        for &r in &rates {
            check_unit("nonresponse rate", r)?;
        }
        Ok(NonResponseRates { rates })
    }

    pub fn rate(&self, region: usize) -> f64 {
        self.rates[region]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

/// Beta(a, b) hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl BetaPrior {
    pub const fn new(a: f64, b: f64) -> Self {
        BetaPrior { a, b }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// Prior on the global intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InterceptPrior {
    /// Normal on the logit scale.
    Normal { mean: f64, variance: f64 },
    /// Beta(a, b) on the probability scale, pushed through the logit.
    LogitBeta { a: f64, b: f64 },
}

impl InterceptPrior {
    /// Prior mean prevalence at the center of the intercept prior.
    pub fn central_prevalence(&self) -> f64 {
        match *self {
            InterceptPrior::Normal { mean, .. } => crate::prevmodel::expit(mean),
            InterceptPrior::LogitBeta { a, b } => a / (a + b),
        }
    }

    pub fn central_logit(&self) -> f64 {
        match *self {
            InterceptPrior::Normal { mean, .. } => mean,
            InterceptPrior::LogitBeta { a, b } => crate::prevmodel::logit(a / (a + b)),
        }
    }
}

/// How region intercepts relate to the global intercept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionIntercepts {
    /// Region intercepts are iid normal around the global intercept.
    #[default]
    Hierarchical,
    /// Every region shares the global intercept; the region scale is unused.
    Pooled,
}

/// Hyperparameters of every prior in the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub sensitivity: [BetaPrior; N_TESTS],
    pub specificity: [BetaPrior; N_TESTS],
    pub alpha: InterceptPrior,
    /// Prior variance of every fixed-effect coefficient.
    pub beta_variance: f64,
    /// Upper end of the uniform prior on the tract random-effect sd.
    pub tau_upper: f64,
    /// Upper end of the uniform prior on the region intercept sd.
    pub sigma_upper: f64,
    #[serde(default)]
    pub region_intercepts: RegionIntercepts,
}

impl Default for PriorSpec {
    /// Package-insert validation priors for the three tests and weakly
    /// informative priors elsewhere.
    fn default() -> Self {
        PriorSpec {
            sensitivity: [
                BetaPrior::new(109.0, 13.0),
                BetaPrior::new(96.0, 39.0),
                BetaPrior::new(9.0, 11.0),
            ],
            specificity: [
                BetaPrior::new(1066.0, 4.0),
                BetaPrior::new(1074.0, 16.0),
                BetaPrior::new(54.0, 0.1),
            ],
            alpha: InterceptPrior::Normal {
                mean: crate::prevmodel::logit(0.03),
                variance: 1.0,
            },
            beta_variance: 9.0,
            tau_upper: 5.0,
            sigma_upper: 5.0,
            region_intercepts: RegionIntercepts::Hierarchical,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<(), DomainError> {
        for p in self.sensitivity.iter().chain(self.specificity.iter()) {
            if !(p.a > 0.0 && p.b > 0.0) {
                return Err(DomainError::OutOfRange {
                    name: "beta prior parameter",
                    value: p.a.min(p.b),
                    range: "(0, inf)",
                });
            }
        }
        match self.alpha {
            InterceptPrior::Normal { mean, variance } => {
                if !(variance > 0.0 && mean.is_finite()) {
                    return Err(DomainError::OutOfRange {
                        name: "alpha prior variance",
                        value: variance,
                        range: "(0, inf)",
                    });
                }
            }
            InterceptPrior::LogitBeta { a, b } => {
                if !(a > 0.0 && b > 0.0) {
                    return Err(DomainError::OutOfRange {
                        name: "alpha logit-beta parameter",
                        value: a.min(b),
                        range: "(0, inf)",
                    });
                }
            }
        }
        for (name, v) in [
            ("beta_variance", self.beta_variance),
            ("tau_upper", self.tau_upper),
            ("sigma_upper", self.sigma_upper),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DomainError::OutOfRange {
                    name,
                    value: v,
                    range: "(0, inf)",
                });
            }
        }
        Ok(())
    }

    /// Prior mean of every sensitivity and specificity.
    pub fn accuracy_means(&self) -> ([f64; N_TESTS], [f64; N_TESTS]) {
        (self.sensitivity.map(|p| p.mean()), self.specificity.map(|p| p.mean()))
    }
}

// ---------------------------------------------------------------------------
// Raw tables and validation
// ---------------------------------------------------------------------------

/// Participant row as ingested. `row` is the 1-based data row number.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantRow {
    pub row: usize,
    pub id: String,
    pub region: String,
    pub age_group: Option<String>,
    pub sex: Option<String>,
    pub tract: String,
    pub tests: [Option<bool>; N_TESTS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TractRow {
    pub row: usize,
    pub tract: String,
    pub region: String,
    pub total_population: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostStratRow {
    pub row: usize,
    pub region: String,
    pub tract: String,
    pub age_group: String,
    pub sex: String,
    pub adult_population: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonResponseRow {
    pub row: usize,
    pub region: String,
    pub rate: f64,
}

/// The four ingested tables before cross-referencing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTables {
    pub participants: Vec<ParticipantRow>,
    pub tracts: Vec<TractRow>,
    pub poststrat: Vec<PostStratRow>,
    pub nonresponse: Vec<NonResponseRow>,
}

/// Which table a validation issue refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Table {
    Participants,
    Tracts,
    PostStrat,
    NonResponse,
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Table::Participants => "participants",
            Table::Tracts => "tracts",
            Table::PostStrat => "poststrat",
            Table::NonResponse => "nonresponse",
        })
    }
}

/// A single problem found during validation. `row` is `None` for
/// table-level problems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub table: Table,
    pub row: Option<usize>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(r) => write!(f, "{} row {}: {}", self.table, r, self.message),
            None => write!(f, "{}: {}", self.table, self.message),
        }
    }
}

/// Every violation found in one validation pass.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} validation error(s):", self.errors.len())?;
        for e in &self.errors {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

/// Treatment of participants that fail the inclusion rule (no test result,
/// or missing age or sex).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionPolicy {
    /// Drop them and report a warning per row.
    #[default]
    Drop,
    /// Treat them as validation errors.
    Strict,
}

/// Options that shape the validated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationOptions {
    pub inclusion: InclusionPolicy,
    /// Population column feeding the tract covariate.
    #[serde(default)]
    pub covariate_population: CovariatePopulation,
    #[serde(default)]
    pub sd_convention: SdConvention,
}

/// Which tract population enters the log-population covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariatePopulation {
    #[default]
    Total,
    Adult,
}

/// A validated, cross-referenced survey bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub regions: Vec<String>,
    pub tracts: Vec<Tract>,
    pub participants: Vec<Participant>,
    pub poststrat: PostStratTable,
    pub nonresponse: NonResponseRates,
    /// Tract indices with at least one participant, ascending.
    pub sampled_tracts: Vec<usize>,
    /// For each tract, its position in `sampled_tracts`.
    pub tract_slot: Vec<Option<usize>>,
    pub standardizer: Standardizer,
    pub options: ValidationOptions,
}

/// Result of a successful validation: the bundle plus per-row warnings for
/// dropped participants.
#[derive(Debug, Clone, PartialEq)]
pub struct Validated {
    pub dataset: Dataset,
    pub warnings: Vec<Issue>,
    /// Participant rows seen before dropping.
    pub n_input: usize,
}

impl Dataset {
    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_participants(&self) -> usize {
        self.participants.len()
    }

    pub fn n_sampled_tracts(&self) -> usize {
        self.sampled_tracts.len()
    }

    /// Covariate population of a tract under the configured column.
    pub fn covariate_population(&self, tract: usize) -> f64 {
        match self.options.covariate_population {
            CovariatePopulation::Total => self.tracts[tract].total_population,
            CovariatePopulation::Adult => self.tracts[tract].adult_population,
        }
    }

    pub fn design_row(&self, participant: &Participant) -> DesignRow {
        self.design_row_for(participant.stratum(), participant.tract)
    }

    pub fn design_row_for(&self, stratum: Stratum, tract: usize) -> DesignRow {
        design_row(
            stratum.age_group,
            stratum.sex,
            self.covariate_population(tract),
            &self.standardizer,
        )
    }

    /// Converts back to raw tables; validating the result reproduces `self`.
    pub fn to_raw(&self) -> RawTables {
        let participants = self
            .participants
            .iter()
            .enumerate()
            .map(|(i, p)| ParticipantRow {
                row: i + 1,
                id: p.id.clone(),
                region: self.regions[p.region].clone(),
                age_group: Some(p.age_group.label().to_string()),
                sex: Some(p.sex.label().to_string()),
                tract: self.tracts[p.tract].label.clone(),
                tests: p.panel.results(),
            })
            .collect();
        let tracts = self
            .tracts
            .iter()
            .enumerate()
            .map(|(i, t)| TractRow {
                row: i + 1,
                tract: t.label.clone(),
                region: self.regions[t.region].clone(),
                total_population: t.total_population,
            })
            .collect();
        let poststrat = self
            .poststrat
            .cells()
            .iter()
            .enumerate()
            .map(|(i, c)| PostStratRow {
                row: i + 1,
                region: self.regions[c.region].clone(),
                tract: self.tracts[c.tract].label.clone(),
                age_group: c.stratum.age_group.label().to_string(),
                sex: c.stratum.sex.label().to_string(),
                adult_population: c.adult_population,
            })
            .collect();
        let nonresponse = self
            .regions
            .iter()
            .enumerate()
            .map(|(i, r)| NonResponseRow {
                row: i + 1,
                region: r.clone(),
                rate: self.nonresponse.rate(i),
            })
            .collect();
        RawTables {
            participants,
            tracts,
            poststrat,
            nonresponse,
        }
    }
}

struct Collector {
    errors: Vec<Issue>,
}

impl Collector {
    fn push(&mut self, table: Table, row: Option<usize>, message: impl Into<String>) {
        self.errors.push(Issue {
            table,
            row,
            message: message.into(),
        });
    }
}

/// Cross-references the raw tables and builds a [`Dataset`].
///
/// Regions are taken from the tract table in order of first appearance. All
/// violations are collected; the error report lists every offending row.
pub fn validate_dataset(raw: &RawTables, options: ValidationOptions) -> Result<Validated, ValidationReport> {
    let mut c = Collector { errors: Vec::new() };

    // Regions and tracts.
    let mut regions: Vec<String> = Vec::new();
    let mut region_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut tracts: Vec<Tract> = Vec::new();
    let mut tract_index: BTreeMap<String, usize> = BTreeMap::new();
    if raw.tracts.is_empty() {
        c.push(Table::Tracts, None, "table is empty");
    }
    for t in &raw.tracts {
        let region = *region_index.entry(t.region.clone()).or_insert_with(|| {
            regions.push(t.region.clone());
            regions.len() - 1
        });
        if tract_index.contains_key(&t.tract) {
            c.push(Table::Tracts, Some(t.row), format!("duplicate tract {:?}", t.tract));
            continue;
        }
        if !(t.total_population > 0.0 && t.total_population.is_finite()) {
            c.push(
                Table::Tracts,
                Some(t.row),
                format!("tract {:?} has non-positive total_population {}", t.tract, t.total_population),
            );
        }
        tract_index.insert(t.tract.clone(), tracts.len());
        tracts.push(Tract {
            label: t.tract.clone(),
            region,
            total_population: t.total_population,
            adult_population: 0.0,
        });
    }

    // Poststratification cells.
    let mut cells = Vec::with_capacity(raw.poststrat.len());
    let mut seen_cells = BTreeSet::new();
    for r in &raw.poststrat {
        let Some(&tract) = tract_index.get(&r.tract) else {
            c.push(Table::PostStrat, Some(r.row), format!("unknown tract {:?}", r.tract));
            continue;
        };
        let Some(&region) = region_index.get(&r.region) else {
            c.push(Table::PostStrat, Some(r.row), format!("unknown region {:?}", r.region));
            continue;
        };
        if tracts[tract].region != region {
            c.push(
                Table::PostStrat,
                Some(r.row),
                format!("tract {:?} belongs to region {:?}, not {:?}", r.tract, regions[tracts[tract].region], r.region),
            );
            continue;
        }
        let age = r.age_group.parse::<AgeGroup>();
        let sex = r.sex.parse::<Sex>();
        let (age, sex) = match (age, sex) {
            (Ok(a), Ok(s)) => (a, s),
            (a, s) => {
                for e in [a.err(), s.err()].into_iter().flatten() {
                    c.push(Table::PostStrat, Some(r.row), e.to_string());
                }
                continue;
            }
        };
        if !(r.adult_population >= 0.0 && r.adult_population.is_finite()) {
            c.push(
                Table::PostStrat,
                Some(r.row),
                format!("negative adult_population {}", r.adult_population),
            );
            continue;
        }
        let stratum = Stratum::new(age, sex);
        if !seen_cells.insert((tract, stratum)) {
            c.push(
                Table::PostStrat,
                Some(r.row),
                format!("duplicate cell ({}, {}, {}, {})", r.region, r.tract, age, sex),
            );
            continue;
        }
        tracts[tract].adult_population += r.adult_population;
        cells.push(PostStratCell {
            region,
            tract,
            stratum,
            adult_population: r.adult_population,
        });
    }
    let poststrat = PostStratTable::new(cells);
    if !(poststrat.total_population() > 0.0) {
        c.push(Table::PostStrat, None, "total adult population is not positive");
    }
    let tracts_in_table: BTreeSet<usize> = poststrat.cells().iter().map(|c| c.tract).collect();

    // Non-response.
    let mut rates = vec![f64::NAN; regions.len()];
    for r in &raw.nonresponse {
        let Some(&region) = region_index.get(&r.region) else {
            c.push(Table::NonResponse, Some(r.row), format!("unknown region {:?}", r.region));
            continue;
        };
        if !(0.0..=1.0).contains(&r.rate) {
            c.push(Table::NonResponse, Some(r.row), format!("rate {} outside [0, 1]", r.rate));
            continue;
        }
        if !rates[region].is_nan() {
            c.push(Table::NonResponse, Some(r.row), format!("duplicate region {:?}", r.region));
            continue;
        }
        rates[region] = r.rate;
    }
    for (i, r) in rates.iter().enumerate() {
        if r.is_nan() {
            c.push(Table::NonResponse, None, format!("missing rate for region {:?}", regions[i]));
        }
    }

    // Participants.
    let mut warnings = Vec::new();
    let mut participants = Vec::with_capacity(raw.participants.len());
    let mut ids = BTreeSet::new();
    for p in &raw.participants {
        let row = Some(p.row);
        let mut ok = true;
        if !ids.insert(p.id.clone()) {
            c.push(Table::Participants, row, format!("duplicate participant id {:?}", p.id));
            ok = false;
        }
        let region = region_index.get(&p.region).copied();
        if region.is_none() {
            c.push(Table::Participants, row, format!("unknown region {:?}", p.region));
            ok = false;
        }
        let tract = tract_index.get(&p.tract).copied();
        match tract {
            None => {
                c.push(Table::Participants, row, format!("unknown tract {:?}", p.tract));
                ok = false;
            }
            Some(t) => {
                if !tracts_in_table.contains(&t) {
                    c.push(
                        Table::Participants,
                        row,
                        format!("tract {:?} has no poststratification cells", p.tract),
                    );
                    ok = false;
                }
                if let Some(r) = region {
                    if tracts[t].region != r {
                        c.push(
                            Table::Participants,
                            row,
                            format!(
                                "tract {:?} belongs to region {:?}, not {:?}",
                                p.tract, regions[tracts[t].region], p.region
                            ),
                        );
                        ok = false;
                    }
                }
            }
        }

        // Labels that are present must parse; absent labels fall under the
        // inclusion rule.
        let age = p.age_group.as_deref().map(str::parse::<AgeGroup>);
        let sex = p.sex.as_deref().map(str::parse::<Sex>);
        for e in [age.clone().and_then(Result::err), sex.clone().and_then(Result::err)]
            .into_iter()
            .flatten()
        {
            c.push(Table::Participants, row, e.to_string());
            ok = false;
        }

        let mut exclusion = Vec::new();
        if age.is_none() {
            exclusion.push("missing age_group");
        }
        if sex.is_none() {
            exclusion.push("missing sex");
        }
        let panel = TestPanel::from_results(p.tests);
        if panel.is_err() {
            exclusion.push("no antibody test result");
        }
        if !exclusion.is_empty() {
            let message = format!("participant {:?} excluded: {}", p.id, exclusion.join(", "));
            match options.inclusion {
                InclusionPolicy::Strict => {
                    c.push(Table::Participants, row, message);
                }
                InclusionPolicy::Drop => {
                    log::warn!("participants row {}: {}", p.row, message);
                    warnings.push(Issue {
                        table: Table::Participants,
                        row,
                        message,
                    });
                }
            }
            continue;
        }
        if !ok {
            continue;
        }
        participants.push(Participant {
            id: p.id.clone(),
            region: region.expect("checked"),
            age_group: age.expect("checked").expect("checked"),
            sex: sex.expect("checked").expect("checked"),
            tract: tract.expect("checked"),
            panel: panel.expect("checked"),
        });
    }

    // Covariate standardization over the whole frame.
    let pops: Vec<f64> = tracts
        .iter()
        .map(|t| match options.covariate_population {
            CovariatePopulation::Total => t.total_population,
            CovariatePopulation::Adult => t.adult_population,
        })
        .collect();
    let standardizer = if c.errors.is_empty() {
        match Standardizer::fit(&pops, options.sd_convention) {
            Ok(s) => Some(s),
            Err(e) => {
                c.push(Table::Tracts, None, e.to_string());
                None
            }
        }
    } else {
        None
    };

    if !c.errors.is_empty() {
        return Err(ValidationReport { errors: c.errors });
    }

    let mut tract_slot = vec![None; tracts.len()];
    let sampled: BTreeSet<usize> = participants.iter().map(|p| p.tract).collect();
    let sampled_tracts: Vec<usize> = sampled.into_iter().collect();
    for (slot, &t) in sampled_tracts.iter().enumerate() {
        tract_slot[t] = Some(slot);
    }

    Ok(Validated {
        dataset: Dataset {
            regions,
            tracts,
            participants,
            poststrat,
            nonresponse: NonResponseRates { rates },
            sampled_tracts,
            tract_slot,
            standardizer: standardizer.expect("no errors"),
            options,
        },
        warnings,
        n_input: raw.participants.len(),
    })
}
