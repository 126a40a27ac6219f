#![allow(dead_code)]

use abstain_al::oracle::{FiniteInstance, InducedPrior};
use abstain_al::{Feedback, FiniteBelief};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::Rng;

/// A history of `len` distinct queries answered by a realisation drawn
/// from the induced prior, so it always has positive probability.
pub fn random_history<R: Rng>(rng: &mut R, induced: &InducedPrior, len: usize) -> Vec<(usize, Feedback)> {
    let support = induced.support();
    let weights: Vec<f64> = support.iter().map(|r| r.weight).collect();
    let world = &support[WeightedIndex::new(&weights).unwrap().sample(rng)];
    sample(rng, induced.pool_size(), len)
        .iter()
        .map(|x| (x, world.feedback(x)))
        .collect()
}

pub fn posterior(prior: &FiniteBelief, history: &[(usize, Feedback)]) -> FiniteBelief {
    history
        .iter()
        .fold(prior.clone(), |b, &(x, fb)| b.update(x, fb).expect("history has positive mass"))
}

/// Random non-empty subset of the examples not in `history`.
pub fn random_candidates<R: Rng>(rng: &mut R, m: usize, history: &[(usize, Feedback)]) -> Vec<usize> {
    let free: Vec<usize> = (0..m).filter(|x| history.iter().all(|(h, _)| h != x)).collect();
    let k = rng.random_range(1..=free.len());
    let mut c: Vec<usize> = sample(rng, free.len(), k).iter().map(|i| free[i]).collect();
    c.sort_unstable();
    c
}

/// Indices whose value is within `tol` of the best.
pub fn extremal_set(values: &[(usize, f64)], maximise: bool, tol: f64) -> Vec<usize> {
    let best = values
        .iter()
        .map(|v| v.1)
        .fold(if maximise { f64::NEG_INFINITY } else { f64::INFINITY }, |a, b| {
            if maximise { a.max(b) } else { a.min(b) }
        });
    values.iter().filter(|v| (v.1 - best).abs() <= tol).map(|v| v.0).collect()
}

pub fn random_instance<R: Rng>(rng: &mut R, m: usize) -> FiniteInstance {
    FiniteInstance::random(rng, m, 3, 2)
}
