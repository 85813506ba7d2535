use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, RegressionState};
use crate::prevmodel::{expit, DesignRow};

use super::sensitivity::adjust_cell_prevalence;

/// Source of tract random effects when poststratifying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnsampledTractPolicy {
    /// Posterior effects for surveyed tracts, fresh N(0, tau^2) draws elsewhere.
    #[default]
    PosteriorWhereSampled,
    /// Fresh N(0, tau^2) draws for every tract.
    FreshEverywhere,
}

/// Statewide and per-region prevalence of one posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PrevalenceDraw {
    pub statewide: f64,
    pub regions: Vec<f64>,
}

/// Population-weighted aggregation of cell prevalences.
#[derive(Debug, Clone, PartialEq)]
pub struct CellAggregator {
    cell_region: Vec<usize>,
    weights: Vec<f64>,
    region_totals: Vec<f64>,
    total: f64,
}

impl CellAggregator {
    pub fn new(cell_region: Vec<usize>, weights: Vec<f64>, n_regions: usize) -> Self {
        assert_eq!(cell_region.len(), weights.len());
        let mut region_totals = vec![0.0; n_regions];
        let mut total = 0.0;
        for (&r, &w) in cell_region.iter().zip(&weights) {
            region_totals[r] += w;
            total += w;
        }
        CellAggregator {
            cell_region,
            weights,
            region_totals,
            total,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.weights.len()
    }

    pub fn n_regions(&self) -> usize {
        self.region_totals.len()
    }

    pub fn cell_region(&self) -> &[usize] {
        &self.cell_region
    }

    pub fn region_totals(&self) -> &[f64] {
        &self.region_totals
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Weighted mean of cell prevalences after applying the non-response
    /// adjustment for prevalence ratio `lambda`. With `lambda == 1` the cell
    /// values pass through unchanged.
    pub fn aggregate(&self, cells: &[f64], lambda: f64, rates: &[f64]) -> PrevalenceDraw {
        let mut region_sums = vec![0.0; self.n_regions()];
        let mut sum = 0.0;
        for ((&pi, &w), &r) in cells.iter().zip(&self.weights).zip(&self.cell_region) {
            let v = adjust_cell_prevalence(pi, lambda, rates[r]) * w;
            region_sums[r] += v;
            sum += v;
        }
        PrevalenceDraw {
            statewide: sum / self.total,
            regions: region_sums
                .iter()
                .zip(&self.region_totals)
                .map(|(s, t)| if *t > 0.0 { s / t } else { f64::NAN })
                .collect(),
        }
    }
}

/// Evaluates cell prevalences of the poststratification table for a draw.
#[derive(Debug, Clone)]
pub struct PostStratifier {
    rows: Vec<DesignRow>,
    cell_tract: Vec<usize>,
    /// Per tract: sampled slot, if any.
    tract_slot: Vec<Option<usize>>,
    policy: UnsampledTractPolicy,
    aggregator: CellAggregator,
}

impl PostStratifier {
    pub fn new(data: &Dataset, policy: UnsampledTractPolicy) -> Self {
        let cells = data.poststrat.cells();
        let rows = cells.iter().map(|c| data.design_row_for(c.stratum, c.tract)).collect();
        let aggregator = CellAggregator::new(
            cells.iter().map(|c| c.region).collect(),
            cells.iter().map(|c| c.adult_population).collect(),
            data.n_regions(),
        );
        PostStratifier {
            rows,
            cell_tract: cells.iter().map(|c| c.tract).collect(),
            tract_slot: data.tract_slot.clone(),
            policy,
            aggregator,
        }
    }

    pub fn aggregator(&self) -> &CellAggregator {
        &self.aggregator
    }

    /// Tract effects for every tract of the frame. Fresh effects are drawn in
    /// ascending tract order, one per tract, so all strata of a tract share it.
    pub fn tract_effects<R: Rng>(&self, state: &RegressionState, rng: &mut R) -> Vec<f64> {
        let tau = state.tau();
        self.tract_slot
            .iter()
            .map(|slot| match (slot, self.policy) {
                (Some(s), UnsampledTractPolicy::PosteriorWhereSampled) => state.tract_effects[*s],
                _ => {
                    let z: f64 = rng.sample(StandardNormal);
                    tau * z
                }
            })
            .collect()
    }

    /// Prevalence of every poststratification cell, in table order.
    pub fn cell_prevalences<R: Rng>(&self, state: &RegressionState, rng: &mut R) -> Vec<f64> {
        let effects = self.tract_effects(state, rng);
        let region = self.aggregator.cell_region();
        self.rows
            .iter()
            .zip(&self.cell_tract)
            .zip(region)
            .map(|((row, &t), &r)| {
                expit(state.alpha_region[r] + row.fixed_effect(&state.beta_stratum, state.beta_tract) + effects[t])
            })
            .collect()
    }

    pub fn poststratify<R: Rng>(&self, state: &RegressionState, rates: &[f64], rng: &mut R) -> PrevalenceDraw {
        let cells = self.cell_prevalences(state, rng);
        self.aggregator.aggregate(&cells, 1.0, rates)
    }
}

/// Poststratified statewide and regional prevalence of one draw.
pub fn poststratify<R: Rng>(
    data: &Dataset,
    state: &RegressionState,
    policy: UnsampledTractPolicy,
    rng: &mut R,
) -> PrevalenceDraw {
    PostStratifier::new(data, policy).poststratify(state, data.nonresponse.rates(), rng)
}
