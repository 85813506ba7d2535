use serde::Serialize;

use crate::domain::Dataset;
use crate::rng::poststrat_rng;
use crate::sampler::ChainDraws;

use super::poststrat::{CellAggregator, PostStratifier, UnsampledTractPolicy};
use super::summary::{summarize_prevalence, PrevalenceSummary};
use super::InferenceError;

/// Cell prevalence when non-responders have `lambda` times the prevalence of
/// responders and a fraction `nonresponse` of households did not respond.
///
/// `pi (1 - p) + (lambda pi) p`, clamped at 1. `lambda == 1` returns `pi`
/// unchanged; the sum form can be off by an ulp there.
pub fn adjust_cell_prevalence(pi: f64, lambda: f64, nonresponse: f64) -> f64 {
    if lambda == 1.0 {
        return pi;
    }
    (pi * (1.0 - nonresponse) + (lambda * pi) * nonresponse).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityEntry {
    pub lambda: f64,
    pub summary: PrevalenceSummary,
}

/// Prevalence summaries across a grid of non-responder prevalence ratios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityGrid {
    pub entries: Vec<SensitivityEntry>,
}

impl SensitivityGrid {
    pub fn get(&self, lambda: f64) -> Option<&PrevalenceSummary> {
        self.entries.iter().find(|e| e.lambda == lambda).map(|e| &e.summary)
    }
}

fn check_lambdas(lambdas: &[f64]) -> Result<(), InferenceError> {
    match lambdas.iter().find(|l| !(**l >= 0.0)) {
        Some(&l) => Err(InferenceError::NegativeLambda(l)),
        None => Ok(()),
    }
}

/// Applies the sweep to explicit cell-prevalence draws. Returns, per lambda,
/// the statewide draws and the per-region draws.
pub fn sweep_fields<'a, I>(
    fields: I,
    aggregator: &CellAggregator,
    rates: &[f64],
    lambdas: &[f64],
) -> Result<Vec<(Vec<f64>, Vec<Vec<f64>>)>, InferenceError>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    check_lambdas(lambdas)?;
    let mut out: Vec<(Vec<f64>, Vec<Vec<f64>>)> = lambdas
        .iter()
        .map(|_| (Vec::new(), vec![Vec::new(); aggregator.n_regions()]))
        .collect();
    for cells in fields {
        if cells.len() != aggregator.n_cells() {
            return Err(InferenceError::TableMismatch(format!(
                "{} cell values for {} cells",
                cells.len(),
                aggregator.n_cells()
            )));
        }
        for (slot, &lambda) in out.iter_mut().zip(lambdas) {
            let d = aggregator.aggregate(cells, lambda, rates);
            slot.0.push(d.statewide);
            for (r, v) in d.regions.into_iter().enumerate() {
                slot.1[r].push(v);
            }
        }
    }
    Ok(out)
}

/// Recomputes cell prevalences for every kept draw (replaying the
/// unsampled-tract effects of the fit) and summarizes each lambda.
pub fn sensitivity_sweep(
    chains: &[ChainDraws],
    data: &Dataset,
    rates: &[f64],
    lambdas: &[f64],
    level: f64,
    seed: u64,
    policy: UnsampledTractPolicy,
) -> Result<SensitivityGrid, InferenceError> {
    check_lambdas(lambdas)?;
    if rates.len() != data.n_regions() {
        return Err(InferenceError::TableMismatch(format!(
            "{} non-response rates for {} regions",
            rates.len(),
            data.n_regions()
        )));
    }
    let ps = PostStratifier::new(data, policy);
    let agg = ps.aggregator();
    let mut per_lambda: Vec<(Vec<f64>, Vec<Vec<f64>>)> = lambdas
        .iter()
        .map(|_| (Vec::new(), vec![Vec::new(); agg.n_regions()]))
        .collect();
    for chain in chains {
        for (k, draw) in chain.draws.iter().enumerate() {
            let mut rng = poststrat_rng(seed, chain.chain, k);
            let cells = ps.cell_prevalences(&draw.regression, &mut rng);
            for (slot, &lambda) in per_lambda.iter_mut().zip(lambdas) {
                let d = agg.aggregate(&cells, lambda, rates);
                slot.0.push(d.statewide);
                for (r, v) in d.regions.into_iter().enumerate() {
                    slot.1[r].push(v);
                }
            }
        }
    }
    let entries = per_lambda
        .iter()
        .zip(lambdas)
        .map(|((state, regions), &lambda)| {
            Ok(SensitivityEntry {
                lambda,
                summary: summarize_prevalence(
                    state,
                    regions,
                    &data.regions,
                    agg.region_totals(),
                    agg.total(),
                    level,
                )?,
            })
        })
        .collect::<Result<Vec<_>, InferenceError>>()?;
    Ok(SensitivityGrid { entries })
}
