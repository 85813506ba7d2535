//! Likelihood of an antibody result pattern given true infection status.
//!
//! The two IgG tests form a correlated pair; the IgM test is conditionally
//! independent of them. Given infection status `d`:
//!
//! ```text
//! P(t1, t2 | d=1) = S1^t1 S2^t2 (1-S1)^(1-t1) (1-S2)^(1-t2) + (-1)^(t1+t2) R1
//! P(t1, t2 | d=0) = C1^(1-t1) C2^(1-t2) (1-C1)^t1 (1-C2)^t2 + (-1)^(t1+t2) R0
//! P(t3 | d)       = d S3^t3 (1-S3)^(1-t3) + (1-d) C3^(1-t3) (1-C3)^t3
//! ```
//!
//! Missing results marginalize out. When only one IgG result is observed the
//! covariance term cancels, so every single observed test contributes its
//! marginal probability.
//!
//! Patterns within a mask are ordered by number of positives (descending),
//! then lexicographically descending in panel order. For the full mask this
//! is `111, 110, 101, 011, 100, 010, 001, 000`.

use thiserror::Error;

use crate::domain::{DomainError, TestMask, TestPanel, TestParams, N_TESTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestModelError {
    #[error("no test is observed")]
    EmptyMask,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Number of distinct (mask, pattern) combinations over the seven nonempty masks.
pub const N_PATTERN_SLOTS: usize = 26;

/// Position of an observed result pattern within its mask's ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatternIndex {
    pub mask: TestMask,
    /// Zero-based position in [`patterns`]`(mask)`.
    pub index: usize,
}

impl PatternIndex {
    /// One-based pattern number; for complete panels this is the row of the
    /// eight-pattern table.
    pub fn number(&self) -> usize {
        self.index + 1
    }

    /// Dense id over all nonempty masks, in `0..N_PATTERN_SLOTS`.
    pub fn slot(&self) -> usize {
        slot_offset(self.mask) + self.index
    }
}

fn slot_offset(mask: TestMask) -> usize {
    (1..mask.bits()).map(|b| 1usize << TestMask::from_bits(b).count()).sum()
}

/// Observed values (in panel order over the mask's tests) for every pattern
/// of `mask`, in canonical order.
pub fn patterns(mask: TestMask) -> Vec<Vec<bool>> {
    let k = mask.count();
    let mut out: Vec<Vec<bool>> = (0..(1u32 << k))
        .map(|code| (0..k).map(|pos| code & (1 << (k - 1 - pos)) != 0).collect())
        .collect();
    out.sort_by(|a, b| {
        let pa = a.iter().filter(|&&x| x).count();
        let pb = b.iter().filter(|&&x| x).count();
        pb.cmp(&pa).then_with(|| b.cmp(a))
    });
    out
}

/// Maps a panel to its pattern index and missingness mask.
pub fn pattern_index(results: [Option<bool>; N_TESTS]) -> Result<PatternIndex, TestModelError> {
    let mut bits = 0u8;
    let mut values = Vec::with_capacity(N_TESTS);
    for (j, r) in results.iter().enumerate() {
        if let Some(v) = r {
            bits |= 1 << j;
            values.push(*v);
        }
    }
    if bits == 0 {
        return Err(TestModelError::EmptyMask);
    }
    let mask = TestMask::from_bits(bits);
    let index = patterns(mask)
        .iter()
        .position(|p| *p == values)
        .expect("every value combination is enumerated");
    Ok(PatternIndex { mask, index })
}

/// Observed results of a slot, `None` for tests outside its mask.
pub fn slot_observations(slot: usize) -> [Option<bool>; N_TESTS] {
    let (mask, values) = slot_pattern(slot);
    let mut it = values.into_iter();
    let mut obs = [None; N_TESTS];
    for j in mask.tests() {
        obs[j] = it.next();
    }
    obs
}

/// Inverse of [`PatternIndex::slot`].
pub fn slot_pattern(slot: usize) -> (TestMask, Vec<bool>) {
    let mut offset = 0;
    for b in 1..=7u8 {
        let mask = TestMask::from_bits(b);
        let n = 1usize << mask.count();
        if slot < offset + n {
            return (mask, patterns(mask).swap_remove(slot - offset));
        }
        offset += n;
    }
    panic!("pattern slot {slot} out of range");
}

impl TestPanel {
    pub fn pattern(&self) -> PatternIndex {
        pattern_index(self.results()).expect("panels always have an observed test")
    }
}

/// Largest admissible positive covariance between two binary results with
/// success probabilities `p1` and `p2`.
pub fn covariance_upper_bound(p1: f64, p2: f64) -> f64 {
    (p1.min(p2) - p1 * p2).max(0.0)
}

/// Probability that one test reads `t` given infection status `d`.
pub fn single_test_prob(t: bool, d: bool, sensitivity: f64, specificity: f64) -> Result<f64, TestModelError> {
    for (name, v) in [("sensitivity", sensitivity), ("specificity", specificity)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(DomainError::OutOfRange {
                name,
                value: v,
                range: "[0, 1]",
            }
            .into());
        }
    }
    Ok(marginal(t, d, sensitivity, specificity))
}

#[inline]
fn marginal(t: bool, d: bool, s: f64, c: f64) -> f64 {
    match (d, t) {
        (true, true) => s,
        (true, false) => 1.0 - s,
        (false, true) => 1.0 - c,
        (false, false) => c,
    }
}

#[inline]
fn igg_pair(t1: bool, t2: bool, d: bool, p: &TestParams) -> f64 {
    let cov = if d { p.cov_infected } else { p.cov_uninfected };
    let base = marginal(t1, d, p.sensitivity[0], p.specificity[0]) * marginal(t2, d, p.sensitivity[1], p.specificity[1]);
    if t1 == t2 {
        base + cov
    } else {
        base - cov
    }
}

/// Joint probability of the IgG pair results given infection status.
pub fn joint_igg_prob(t1: bool, t2: bool, d: bool, params: &TestParams) -> Result<f64, TestModelError> {
    params.validate()?;
    Ok(igg_pair(t1, t2, d, params))
}

/// Probability of the observed results in `values` (one entry per test of
/// `mask`, in panel order). No validation.
fn masked_prob(mask: TestMask, values: &[bool], d: bool, p: &TestParams) -> f64 {
    let mut it = values.iter().copied();
    let mut obs = [None; N_TESTS];
    for j in mask.tests() {
        obs[j] = it.next();
    }
    observed_prob(obs, d, p)
}

/// Probability of the observed entries of `obs` given infection status.
/// No validation; `None` entries are marginalized out.
#[inline]
pub fn observed_prob(obs: [Option<bool>; N_TESTS], d: bool, p: &TestParams) -> f64 {
    let mut prob = match (obs[0], obs[1]) {
        (Some(t1), Some(t2)) => igg_pair(t1, t2, d, p),
        (Some(t1), None) => marginal(t1, d, p.sensitivity[0], p.specificity[0]),
        (None, Some(t2)) => marginal(t2, d, p.sensitivity[1], p.specificity[1]),
        (None, None) => 1.0,
    };
    if let Some(t3) = obs[2] {
        prob *= marginal(t3, d, p.sensitivity[2], p.specificity[2]);
    }
    prob
}

/// Probability of every observable pattern of `mask` given infection status,
/// in canonical order.
pub fn pattern_prob_vector(d: bool, params: &TestParams, mask: TestMask) -> Result<Vec<f64>, TestModelError> {
    if mask.is_empty() {
        return Err(TestModelError::EmptyMask);
    }
    params.validate()?;
    Ok(patterns(mask).iter().map(|v| masked_prob(mask, v, d, params)).collect())
}

/// Likelihood of a participant's observed results given infection status.
pub fn pattern_likelihood(panel: &TestPanel, d: bool, params: &TestParams) -> f64 {
    observed_prob(panel.results(), d, params)
}

/// Pattern probabilities under both infection states for one mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternProbs {
    pub mask: TestMask,
    pub infected: Vec<f64>,
    pub uninfected: Vec<f64>,
}

impl PatternProbs {
    pub fn new(params: &TestParams, mask: TestMask) -> Result<Self, TestModelError> {
        Ok(PatternProbs {
            mask,
            infected: pattern_prob_vector(true, params, mask)?,
            uninfected: pattern_prob_vector(false, params, mask)?,
        })
    }

    pub fn given(&self, d: bool) -> &[f64] {
        if d {
            &self.infected
        } else {
            &self.uninfected
        }
    }
}

/// Posterior probability that a participant was infected, given their
/// results, their prior infection probability `pi` and the test parameters.
///
/// Returns NaN when the results are impossible under both infection states.
pub fn latent_full_conditional(panel: &TestPanel, pi: f64, params: &TestParams) -> f64 {
    let l1 = pattern_likelihood(panel, true, params);
    let l0 = pattern_likelihood(panel, false, params);
    full_conditional_from(pi, l1, l0)
}

#[inline]
pub(crate) fn full_conditional_from(pi: f64, l1: f64, l0: f64) -> f64 {
    let num = pi * l1;
    num / (num + (1.0 - pi) * l0)
}

/// Pattern likelihoods for every slot under both infection states.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodTable {
    /// `[uninfected, infected]` probabilities per slot.
    pub prob: [[f64; N_PATTERN_SLOTS]; 2],
}

impl LikelihoodTable {
    pub fn new(params: &TestParams) -> Self {
        let mut prob = [[0.0; N_PATTERN_SLOTS]; 2];
        for slot in 0..N_PATTERN_SLOTS {
            let (mask, values) = slot_pattern(slot);
            prob[0][slot] = masked_prob(mask, &values, false, params);
            prob[1][slot] = masked_prob(mask, &values, true, params);
        }
        LikelihoodTable { prob }
    }

    /// Every slot has probability one: the results carry no information.
    pub fn uninformative() -> Self {
        LikelihoodTable {
            prob: [[1.0; N_PATTERN_SLOTS]; 2],
        }
    }

    #[inline]
    pub fn get(&self, slot: usize, d: bool) -> f64 {
        self.prob[d as usize][slot]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(s: [f64; 3], c: [f64; 3], r1: f64, r0: f64) -> TestParams {
        TestParams::new(s, c, r1, r0).unwrap()
    }

    #[test]
    fn full_mask_ordering_matches_table() {
        let expected: Vec<Vec<bool>> = ["111", "110", "101", "011", "100", "010", "001", "000"]
            .iter()
            .map(|s| s.chars().map(|c| c == '1').collect())
            .collect();
        assert_eq!(patterns(TestMask::FULL), expected);
    }

    #[test]
    fn pattern_index_examples() {
        let p = pattern_index([Some(true); 3]).unwrap();
        assert_eq!((p.number(), p.mask), (1, TestMask::FULL));
        let p = pattern_index([Some(false); 3]).unwrap();
        assert_eq!((p.number(), p.mask), (8, TestMask::FULL));
        let p = pattern_index([Some(true), None, Some(false)]).unwrap();
        assert_eq!(p.mask.to_string(), "101");
        assert_eq!(patterns(p.mask)[p.index], vec![true, false]);
        assert_eq!(pattern_index([None; 3]), Err(TestModelError::EmptyMask));
    }

    #[test]
    fn complete_panels_biject_onto_one_to_eight() {
        let mut seen = std::collections::BTreeSet::new();
        for code in 0..8u8 {
            let panel = TestPanel::complete(code >> 2 & 1, code >> 1 & 1, code & 1);
            seen.insert(panel.pattern().number());
        }
        assert_eq!(seen, (1..=8).collect());
    }

    #[test]
    fn slots_are_dense_and_invertible() {
        let mut seen = vec![false; N_PATTERN_SLOTS];
        for mask in TestMask::nonempty() {
            for (i, values) in patterns(mask).into_iter().enumerate() {
                let pi = PatternIndex { mask, index: i };
                assert!(!seen[pi.slot()]);
                seen[pi.slot()] = true;
                assert_eq!(slot_pattern(pi.slot()), (mask, values));
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn joint_igg_examples() {
        let p = params([0.9, 0.7, 0.5], [0.9, 0.9, 0.9], 0.0, 0.0);
        assert!((joint_igg_prob(true, true, true, &p).unwrap() - 0.63).abs() < 1e-15);
        let p = params([0.9, 0.7, 0.5], [0.9, 0.9, 0.9], 0.05, 0.0);
        // 2x2 table from marginals plus covariance: P(11) = E[T1 T2] = S1 S2 + R.
        let s1s2 = 0.9 * 0.7;
        assert!((joint_igg_prob(true, true, true, &p).unwrap() - (s1s2 + 0.05)).abs() < 1e-15);
        assert!((joint_igg_prob(true, true, true, &p).unwrap() - 0.68).abs() < 1e-12);
        let total: f64 = [(true, true), (true, false), (false, true), (false, false)]
            .iter()
            .map(|&(a, b)| joint_igg_prob(a, b, true, &p).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn joint_igg_rejects_invalid_params() {
        let p = TestParams {
            sensitivity: [0.9, 0.7, 0.5],
            specificity: [0.9; 3],
            cov_infected: 0.2,
            cov_uninfected: 0.0,
        };
        assert!(matches!(joint_igg_prob(true, true, true, &p), Err(TestModelError::Domain(_))));
    }

    #[test]
    fn single_test_examples() {
        assert_eq!(single_test_prob(true, true, 0.45, 0.9).unwrap(), 0.45);
        assert_eq!(single_test_prob(false, false, 0.45, 0.998).unwrap(), 0.998);
        assert!((single_test_prob(true, false, 0.45, 0.985).unwrap() - (1.0 - 0.985)).abs() < 1e-15);
        assert!(single_test_prob(true, true, 1.5, 0.9).is_err());
    }

    #[test]
    fn masked_vector_examples() {
        let p = params([0.9, 0.7, 0.45], [0.99, 0.98, 0.998], 0.05, 0.0);
        let v = pattern_prob_vector(true, &p, TestMask::IGG_PAIR).unwrap();
        // 2x2 reconstruction: P11 = S1S2+R, P10 = S1-P11, P01 = S2-P11, P00 = 1-S1-S2+P11.
        let p11 = 0.63 + 0.05;
        let oracle = [p11, 0.9 - p11, 0.7 - p11, 1.0 - 0.9 - 0.7 + p11];
        for (a, b) in v.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-12, "{v:?}");
        }
        assert!((v[0] - 0.68).abs() < 1e-12 && (v[1] - 0.22).abs() < 1e-12);
        assert!((v[2] - 0.02).abs() < 1e-12 && (v[3] - 0.08).abs() < 1e-12);

        let v = pattern_prob_vector(false, &p, TestMask::from_bits(0b100)).unwrap();
        assert!((v[0] - 0.002).abs() < 1e-12 && (v[1] - 0.998).abs() < 1e-12);
        assert_eq!(pattern_prob_vector(false, &p, TestMask::EMPTY), Err(TestModelError::EmptyMask));
    }

    #[test]
    fn covariance_bound_examples() {
        assert!((covariance_upper_bound(0.9, 0.7) - 0.07).abs() < 1e-15);
        assert!((covariance_upper_bound(0.5, 0.5) - 0.25).abs() < 1e-15);
        assert!((covariance_upper_bound(0.9, 0.9) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn full_conditional_examples() {
        let p = params([0.89, 0.71, 0.45], [0.996, 0.985, 0.998], 0.0, 0.0);
        let panel = TestPanel::complete(0, 0, 0);
        let l1 = 0.11 * 0.29 * 0.55;
        let l0 = 0.996 * 0.985 * 0.998;
        let oracle = 0.03 * l1 / (0.03 * l1 + 0.97 * l0);
        let got = latent_full_conditional(&panel, 0.03, &p);
        assert!((got - oracle).abs() < 1e-15);
        // 0.00055391, quoted to three significant figures as 0.000553.
        assert!((got - 0.000553).abs() < 1e-6, "{got}");

        // Symmetric tests: S = 1 - C makes both likelihoods equal.
        let sym = params([0.3, 0.4, 0.6], [0.7, 0.6, 0.4], 0.0, 0.0);
        let v = latent_full_conditional(&TestPanel::complete(1, 0, 1), 0.5, &sym);
        assert!((v - 0.5).abs() < 1e-15);

        assert!(latent_full_conditional(&TestPanel::complete(1, 1, 1), 1e-300, &p) < 1e-290);
    }

    #[test]
    fn likelihood_table_matches_direct() {
        let p = params([0.89, 0.71, 0.45], [0.996, 0.985, 0.998], 0.03, 0.002);
        let t = LikelihoodTable::new(&p);
        for mask in TestMask::nonempty() {
            for d in [false, true] {
                let v = pattern_prob_vector(d, &p, mask).unwrap();
                for (i, pr) in v.iter().enumerate() {
                    assert_eq!(t.get(PatternIndex { mask, index: i }.slot(), d), *pr);
                }
            }
        }
    }

    fn arb_params() -> impl Strategy<Value = TestParams> {
        (
            prop::array::uniform3(0.001f64..0.999),
            prop::array::uniform3(0.001f64..0.999),
            0.0f64..=1.0,
            0.0f64..=1.0,
        )
            .prop_map(|(s, c, f1, f0)| {
                let r1 = f1 * covariance_upper_bound(s[0], s[1]);
                let r0 = f0 * covariance_upper_bound(c[0], c[1]);
                TestParams::new(s, c, r1, r0).unwrap()
            })
    }

    proptest! {
        #[test]
        fn vectors_normalized_and_nonnegative(p in arb_params(), bits in 1u8..8, d in any::<bool>()) {
            let v = pattern_prob_vector(d, &p, TestMask::from_bits(bits)).unwrap();
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(v.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn pair_marginalizes_to_single(p in arb_params(), t1 in any::<bool>(), d in any::<bool>()) {
            let joint = joint_igg_prob(t1, true, d, &p).unwrap() + joint_igg_prob(t1, false, d, &p).unwrap();
            let single = single_test_prob(t1, d, p.sensitivity[0], p.specificity[0]).unwrap();
            prop_assert!((joint - single).abs() < 1e-12);
        }
    }
}
