use crate::domain::Dataset;
use crate::prevmodel::{expit, linear_predictor, TractEffect};
use crate::sampler::Draw;
use crate::testmodel::latent_full_conditional;

/// Posterior probability of past infection for every participant: the
/// average over draws of the exact conditional probability given that
/// draw's parameters.
pub fn participant_infection_probs<'a, I>(draws: I, data: &Dataset) -> Vec<f64>
where
    I: IntoIterator<Item = &'a Draw>,
{
    let rows: Vec<_> = data.participants.iter().map(|p| data.design_row(p)).collect();
    let mut sums = vec![0.0; data.n_participants()];
    let mut n = 0usize;
    for draw in draws {
        n += 1;
        for ((p, row), sum) in data.participants.iter().zip(&rows).zip(sums.iter_mut()) {
            let slot = data.tract_slot[p.tract].expect("participant tracts are sampled");
            let eta = linear_predictor(&draw.regression, row, p.region, TractEffect::Sampled(slot))
                .expect("draw carries every sampled tract");
            *sum += latent_full_conditional(&p.panel, expit(eta), &draw.tests);
        }
    }
    sums.iter().map(|s| s / n as f64).collect()
}

/// Number of probabilities strictly above `threshold`.
pub fn count_above(probs: &[f64], threshold: f64) -> usize {
    probs.iter().filter(|&&p| p > threshold).count()
}
