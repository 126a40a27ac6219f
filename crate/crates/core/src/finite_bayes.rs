//! Exact Bayesian inference over a finite set of probabilistic hypotheses
//! and a finite set of abstention-rate functions.
//!
//! The prior factorises as `p[h] * p[r]` and every update keeps it that way:
//! a returned label multiplies hypothesis weights by `P[h(x) = y]` and rate
//! weights by `1 - r(x)`; an abstention multiplies rate weights by `r(x)`
//! and leaves hypothesis weights alone.

use crate::belief::{AbstentionRate, Belief};
use crate::error::{Error, Result};
use crate::types::{Example, Feedback, LabelSpace};

const PMF_TOLERANCE: f64 = 1e-12;

/// A random labelling function: an independent categorical pmf per example.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbHypothesis {
    pmfs: Vec<Vec<f64>>,
}

impl ProbHypothesis {
    /// `pmfs[x][y - 1] = P[h(x) = y]`.
    pub fn new(pmfs: Vec<Vec<f64>>) -> Result<Self> {
        for (x, pmf) in pmfs.iter().enumerate() {
            if pmf.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::BadInput(format!("pmf at example {x} has entries outside [0,1]")));
            }
            let total: f64 = pmf.iter().sum();
            if (total - 1.0).abs() > PMF_TOLERANCE {
                return Err(Error::BadInput(format!("pmf at example {x} sums to {total}")));
            }
        }
        Ok(ProbHypothesis { pmfs })
    }

    /// Binary hypothesis from `P[h(x) = 1]` per example.
    pub fn binary(p_first: &[f64]) -> Result<Self> {
        ProbHypothesis::new(p_first.iter().map(|&p| vec![p, 1.0 - p]).collect())
    }

    pub fn pool_size(&self) -> usize {
        self.pmfs.len()
    }

    pub fn pmf(&self, x: usize) -> Result<&[f64]> {
        self.pmfs.get(x).map(Vec::as_slice).ok_or(Error::UnknownExample(x))
    }

    /// `P[h(x) = y]`.
    pub fn prob(&self, x: usize, y: u32) -> Result<f64> {
        let pmf = self.pmf(x)?;
        pmf.get((y as usize).wrapping_sub(1))
            .copied()
            .ok_or(Error::InvalidLabel { label: y, num_labels: pmf.len() })
    }
}

/// Per-example abstention probability.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    rates: Vec<f64>,
}

impl RateFunction {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::BadInput(format!("abstention rate {r} outside [0,1]")));
        }
        Ok(RateFunction { rates })
    }

    pub fn constant(pool_size: usize, rate: f64) -> Result<Self> {
        RateFunction::new(vec![rate; pool_size])
    }

    pub fn pool_size(&self) -> usize {
        self.rates.len()
    }

    pub fn at(&self, x: usize) -> Result<f64> {
        self.rates.get(x).copied().ok_or(Error::UnknownExample(x))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rates
    }
}

impl AbstentionRate for RateFunction {
    fn rate(&self, x: &Example) -> Result<f64> {
        self.at(x.index)
    }
}

/// Posterior over a finite hypothesis set and a finite rate set.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteBelief {
    label_space: LabelSpace,
    hypotheses: Vec<ProbHypothesis>,
    h_weights: Vec<f64>,
    rates: Vec<RateFunction>,
    r_weights: Vec<f64>,
}

fn normalized(weights: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::BadInput(format!("{what} weights must be finite and non-negative")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::BadInput(format!("{what} weights have zero total mass")));
    }
    Ok(weights.into_iter().map(|w| w / total).collect())
}

impl FiniteBelief {
    /// Weights are normalised on construction; all hypotheses and rate
    /// functions must cover the same pool.
    pub fn new(
        label_space: LabelSpace,
        hypotheses: Vec<ProbHypothesis>,
        h_weights: Vec<f64>,
        rates: Vec<RateFunction>,
        r_weights: Vec<f64>,
    ) -> Result<Self> {
        if hypotheses.is_empty() || rates.is_empty() {
            return Err(Error::BadInput("need at least one hypothesis and one rate function".into()));
        }
        if hypotheses.len() != h_weights.len() || rates.len() != r_weights.len() {
            return Err(Error::BadInput("weight vector length mismatch".into()));
        }
        let m = hypotheses[0].pool_size();
        if hypotheses.iter().any(|h| h.pool_size() != m) || rates.iter().any(|r| r.pool_size() != m) {
            return Err(Error::BadInput("hypotheses and rates must cover the same pool".into()));
        }
        let ell = label_space.num_labels();
        if hypotheses.iter().any(|h| h.pmfs.iter().any(|p| p.len() != ell)) {
            return Err(Error::BadInput(format!("every pmf must have {ell} entries")));
        }
        Ok(FiniteBelief {
            label_space,
            hypotheses,
            h_weights: normalized(h_weights, "hypothesis")?,
            rates,
            r_weights: normalized(r_weights, "rate")?,
        })
    }

    pub fn pool_size(&self) -> usize {
        self.hypotheses[0].pool_size()
    }

    pub fn hypotheses(&self) -> &[ProbHypothesis] {
        &self.hypotheses
    }

    pub fn rates(&self) -> &[RateFunction] {
        &self.rates
    }

    pub fn hypothesis_weights(&self) -> &[f64] {
        &self.h_weights
    }

    pub fn rate_weights(&self) -> &[f64] {
        &self.r_weights
    }

    fn check_index(&self, x: usize) -> Result<()> {
        if x < self.pool_size() {
            Ok(())
        } else {
            Err(Error::UnknownExample(x))
        }
    }

    /// `y -> sum_h p[h] P[h(x) = y]`.
    pub fn predictive_pmf_at(&self, x: usize) -> Result<Vec<f64>> {
        self.check_index(x)?;
        let mut pmf = vec![0.0; self.label_space.num_labels()];
        for (h, w) in self.hypotheses.iter().zip(&self.h_weights) {
            for (acc, p) in pmf.iter_mut().zip(h.pmf(x)?) {
                *acc += w * p;
            }
        }
        Ok(pmf)
    }

    /// `sum_r p[r] r(x)`.
    pub fn estimated_rate_at(&self, x: usize) -> Result<f64> {
        self.check_index(x)?;
        self.rates
            .iter()
            .zip(&self.r_weights)
            .map(|(r, w)| Ok(w * r.at(x)?))
            .sum()
    }

    pub fn update_on_label(&self, x: usize, y: u32) -> Result<Self> {
        self.check_index(x)?;
        self.label_space.check(y)?;
        let h_weights = reweight(&self.h_weights, x, self.hypotheses.iter().map(|h| h.prob(x, y)))?;
        let r_weights = reweight(&self.r_weights, x, self.rates.iter().map(|r| Ok(1.0 - r.at(x)?)))?;
        Ok(FiniteBelief {
            h_weights,
            r_weights,
            ..self.clone()
        })
    }

    pub fn update_on_abstain(&self, x: usize) -> Result<Self> {
        self.check_index(x)?;
        let r_weights = reweight(&self.r_weights, x, self.rates.iter().map(|r| r.at(x)))?;
        Ok(FiniteBelief {
            r_weights,
            ..self.clone()
        })
    }

    pub fn update(&self, x: usize, feedback: Feedback) -> Result<Self> {
        match feedback {
            Feedback::Abstain => self.update_on_abstain(x),
            Feedback::Label(y) => self.update_on_label(x, y),
        }
    }

    /// Probability of a joint labelling of several examples,
    /// `sum_h p[h] prod_x P[h(x) = y_x]`.
    pub fn labeling_probability(&self, assignment: &[(usize, u32)]) -> Result<f64> {
        self.hypotheses
            .iter()
            .zip(&self.h_weights)
            .map(|(h, w)| {
                assignment
                    .iter()
                    .try_fold(*w, |acc, &(x, y)| Ok(acc * h.prob(x, y)?))
            })
            .sum()
    }

    /// Probability of an abstention pattern on several examples
    /// (`true` = abstains).
    pub fn pattern_probability(&self, pattern: &[(usize, bool)]) -> Result<f64> {
        self.rates
            .iter()
            .zip(&self.r_weights)
            .map(|(r, w)| {
                pattern.iter().try_fold(*w, |acc, &(x, abstains)| {
                    let rate = r.at(x)?;
                    Ok(acc * if abstains { rate } else { 1.0 - rate })
                })
            })
            .sum()
    }
}

fn reweight(
    weights: &[f64],
    x: usize,
    likelihoods: impl Iterator<Item = Result<f64>>,
) -> Result<Vec<f64>> {
    let unnormalized = weights
        .iter()
        .zip(likelihoods)
        .map(|(w, l)| Ok(w * l?))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = unnormalized.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroPosteriorMass { example: x });
    }
    Ok(unnormalized.into_iter().map(|w| w / total).collect())
}

impl Belief for FiniteBelief {
    fn label_space(&self) -> LabelSpace {
        self.label_space
    }

    fn predictive_pmf(&self, x: &Example) -> Result<Vec<f64>> {
        self.predictive_pmf_at(x.index)
    }

    fn estimated_rate(&self, x: &Example) -> Result<f64> {
        self.estimated_rate_at(x.index)
    }

    fn observe(&mut self, x: &Example, feedback: Feedback) -> Result<()> {
        *self = self.update(x.index, feedback)?;
        Ok(())
    }
}
