//! The sequential query loop shared by every policy.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::belief::Belief;
use crate::criteria::{select, Policy};
use crate::error::{Error, Result};
use crate::sim::SimulatedLabeler;
use crate::types::{Dataset, Example, Feedback};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub example: usize,
    pub feedback: Feedback,
    /// Test accuracy of the belief after this query was incorporated.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub seed: u64,
    pub policy: String,
    pub scenario: String,
    pub budget: usize,
}

impl RunTrace {
    pub fn accuracies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.accuracy).collect()
    }

    pub fn queried(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.example).collect()
    }

    pub fn abstentions(&self) -> usize {
        self.records.iter().filter(|r| r.feedback.is_abstain()).count()
    }
}

/// Argmax of the predictive pmf with ties going to the lowest label.
pub fn predict_label<B: Belief + ?Sized>(belief: &B, x: &Example) -> Result<u32> {
    let pmf = belief.predictive_pmf(x)?;
    let mut best = 0;
    for (i, p) in pmf.iter().enumerate() {
        if *p > pmf[best] {
            best = i;
        }
    }
    Ok(best as u32 + 1)
}

/// Fraction of `test_set` whose predicted label matches the true one.
pub fn evaluate_accuracy<B: Belief + ?Sized>(belief: &B, test_set: &Dataset) -> Result<f64> {
    if test_set.is_empty() {
        return Err(Error::BadInput("empty test set".into()));
    }
    let mut correct = 0usize;
    for x in test_set {
        let y = x
            .label
            .ok_or_else(|| Error::BadInput(format!("test example {} is redundant", x.index)))?;
        if predict_label(belief, x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / test_set.len() as f64)
}

/// Runs `budget` queries. Every query, answered or not, spends one unit of
/// budget and removes the example from the candidate set.
pub fn run_active_learning<B: Belief>(
    policy: &Policy,
    labeler: &SimulatedLabeler,
    pool: &Dataset,
    budget: usize,
    mut belief: B,
    test_set: &Dataset,
    seed: u64,
) -> Result<(RunTrace, B)> {
    if budget == 0 {
        return Err(Error::BadInput("budget must be at least 1".into()));
    }
    if budget > pool.len() {
        return Err(Error::BudgetExceedsPool { budget, pool: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining: BTreeSet<usize> = (0..pool.len()).collect();
    let mut records = Vec::with_capacity(budget);
    for iteration in 0..budget {
        let candidates: Vec<&Example> = remaining.iter().map(|&i| &pool.examples()[i]).collect();
        let chosen = select(policy, &belief, &candidates, &mut rng)?;
        let x = pool.get(chosen)?;
        let feedback = labeler.query(chosen)?;
        belief.observe(x, feedback)?;
        remaining.remove(&chosen);
        records.push(TraceRecord {
            iteration,
            example: chosen,
            feedback,
            accuracy: evaluate_accuracy(&belief, test_set)?,
        });
    }
    let trace = RunTrace {
        records,
        seed,
        policy: policy.name().to_string(),
        scenario: labeler.scenario().to_string(),
        budget,
    };
    Ok((trace, belief))
}
