//! Greedy selection scores and the policies built on them.
//!
//! | policy | score | pick |
//! |--------|-------|------|
//! | `pl`   | none (uniform draw) | random |
//! | `alg`  | `1 - sum_y p(y)^2` | argmax |
//! | `ala`  | `1 - r^2 - (1 - r)^2 sum_y p(y)^2` | argmax |
//! | `alw`  | `max{r, (1 - r) max_y p(y)}` | argmin |
//!
//! `r` is the estimated abstention rate at the candidate: the belief's own
//! estimate for `ala`/`alw`, or a frozen estimate for the `-known` variants.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::belief::{AbstentionRate, Belief};
use crate::error::{Error, Result};
use crate::types::Example;

fn sum_sq(pmf: &[f64]) -> f64 {
    pmf.iter().map(|p| p * p).sum()
}

fn max_prob(pmf: &[f64]) -> f64 {
    pmf.iter().copied().fold(0.0, f64::max)
}

/// Expected one-step version-space reduction with abstention.
pub fn score_avg(pmf: &[f64], rate: f64) -> f64 {
    1.0 - rate * rate - (1.0 - rate).powi(2) * sum_sq(pmf)
}

/// Largest outcome probability when abstention is one more outcome.
pub fn score_worst(pmf: &[f64], rate: f64) -> f64 {
    rate.max((1.0 - rate) * max_prob(pmf))
}

/// Gibbs error.
pub fn score_gibbs(pmf: &[f64]) -> f64 {
    1.0 - sum_sq(pmf)
}

/// Largest predictive probability; least-confidence sampling minimises it.
pub fn least_confidence(pmf: &[f64]) -> f64 {
    max_prob(pmf)
}

/// Shannon entropy in nats.
pub fn entropy(pmf: &[f64]) -> f64 {
    -pmf.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// The `r` maximising [`score_avg`] for a fixed pmf.
pub fn avg_maximizer(pmf: &[f64]) -> f64 {
    let s = sum_sq(pmf);
    s / (1.0 + s)
}

/// The `r` minimising [`score_worst`] for a fixed pmf.
pub fn worst_minimizer(pmf: &[f64]) -> f64 {
    let m = max_prob(pmf);
    m / (1.0 + m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Passive,
    Gibbs,
    Average,
    Worst,
}

/// The policy names accepted in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyName {
    Pl,
    Alg,
    Ala,
    Alw,
    AlaKnown,
    AlwKnown,
}

impl PolicyName {
    pub const ALL: [PolicyName; 6] = [
        PolicyName::Pl,
        PolicyName::Alg,
        PolicyName::Ala,
        PolicyName::Alw,
        PolicyName::AlaKnown,
        PolicyName::AlwKnown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::Pl => "pl",
            PolicyName::Alg => "alg",
            PolicyName::Ala => "ala",
            PolicyName::Alw => "alw",
            PolicyName::AlaKnown => "ala-known",
            PolicyName::AlwKnown => "alw-known",
        }
    }

    pub fn needs_fixed_rate(self) -> bool {
        matches!(self, PolicyName::AlaKnown | PolicyName::AlwKnown)
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))
    }
}

/// Where a policy takes its abstention-rate estimate from.
#[derive(Debug, Clone)]
pub enum RateSource {
    None,
    Learned,
    Fixed(Arc<dyn AbstentionRate>),
}

#[derive(Debug, Clone)]
pub struct Policy {
    name: PolicyName,
    kind: PolicyKind,
    rate_source: RateSource,
}

impl Policy {
    pub fn passive() -> Self {
        Policy { name: PolicyName::Pl, kind: PolicyKind::Passive, rate_source: RateSource::None }
    }

    pub fn gibbs() -> Self {
        Policy { name: PolicyName::Alg, kind: PolicyKind::Gibbs, rate_source: RateSource::None }
    }

    pub fn average() -> Self {
        Policy { name: PolicyName::Ala, kind: PolicyKind::Average, rate_source: RateSource::Learned }
    }

    pub fn worst() -> Self {
        Policy { name: PolicyName::Alw, kind: PolicyKind::Worst, rate_source: RateSource::Learned }
    }

    pub fn average_known(rate: Arc<dyn AbstentionRate>) -> Self {
        Policy { name: PolicyName::AlaKnown, kind: PolicyKind::Average, rate_source: RateSource::Fixed(rate) }
    }

    pub fn worst_known(rate: Arc<dyn AbstentionRate>) -> Self {
        Policy { name: PolicyName::AlwKnown, kind: PolicyKind::Worst, rate_source: RateSource::Fixed(rate) }
    }

    /// Builds the named policy; `-known` variants require `fixed`.
    pub fn from_name(name: PolicyName, fixed: Option<Arc<dyn AbstentionRate>>) -> Result<Self> {
        Ok(match name {
            PolicyName::Pl => Policy::passive(),
            PolicyName::Alg => Policy::gibbs(),
            PolicyName::Ala => Policy::average(),
            PolicyName::Alw => Policy::worst(),
            PolicyName::AlaKnown | PolicyName::AlwKnown => {
                let rate = fixed.ok_or_else(|| Error::Config(format!("{name} needs a fixed rate estimate")))?;
                if name == PolicyName::AlaKnown {
                    Policy::average_known(rate)
                } else {
                    Policy::worst_known(rate)
                }
            }
        })
    }

    pub fn name(&self) -> PolicyName {
        self.name
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn rate_source(&self) -> &RateSource {
        &self.rate_source
    }

    fn rate<B: Belief + ?Sized>(&self, belief: &B, x: &Example) -> Result<f64> {
        match &self.rate_source {
            RateSource::None => Ok(0.0),
            RateSource::Learned => belief.estimated_rate(x),
            RateSource::Fixed(f) => f.rate(x),
        }
    }

    /// The policy's score at `x`, oriented so that larger is better.
    pub fn utility<B: Belief + ?Sized>(&self, belief: &B, x: &Example) -> Result<f64> {
        let pmf = belief.predictive_pmf(x)?;
        Ok(match self.kind {
            PolicyKind::Passive => 0.0,
            PolicyKind::Gibbs => score_gibbs(&pmf),
            PolicyKind::Average => score_avg(&pmf, self.rate(belief, x)?),
            PolicyKind::Worst => -score_worst(&pmf, self.rate(belief, x)?),
        })
    }
}

/// Picks the next example to query among `candidates`. Score ties go to
/// the lowest example index; the passive draw is made over candidates
/// sorted by index.
pub fn select<B: Belief + ?Sized, R: Rng + ?Sized>(
    policy: &Policy,
    belief: &B,
    candidates: &[&Example],
    rng: &mut R,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if policy.kind == PolicyKind::Passive {
        let mut indices: Vec<usize> = candidates.iter().map(|e| e.index).collect();
        indices.sort_unstable();
        return Ok(indices[rng.random_range(0..indices.len())]);
    }
    let mut best: Option<(f64, usize)> = None;
    for x in candidates {
        let u = policy.utility(belief, x)?;
        best = match best {
            Some((bu, bi)) if bu > u || (bu == u && bi < x.index) => Some((bu, bi)),
            _ => Some((u, x.index)),
        };
    }
    Ok(best.expect("non-empty").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_bayes::{FiniteBelief, ProbHypothesis, RateFunction};
    use crate::types::{LabelSpace, SparseVec};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn avg_score_values() {
        let u = [0.5, 0.5];
        assert_abs_diff_eq!(score_avg(&u, 0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(score_avg(&u, 1.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(score_avg(&u, 1.0 / 3.0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(avg_maximizer(&u), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn worst_score_values() {
        let u = [0.5, 0.5];
        assert_abs_diff_eq!(score_worst(&u, 0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(score_worst(&u, 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(score_worst(&u, 1.0 / 3.0), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(worst_minimizer(&u), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn gibbs_values() {
        assert_abs_diff_eq!(score_gibbs(&[0.5, 0.5]), 0.5, epsilon = 1e-15);
        assert_eq!(score_gibbs(&[1.0, 0.0]), 0.0);
        assert_abs_diff_eq!(score_gibbs(&[0.9, 0.1]), 0.18, epsilon = 1e-15);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in PolicyName::ALL {
            assert_eq!(p.as_str().parse::<PolicyName>().unwrap(), p);
        }
        assert!("bald".parse::<PolicyName>().is_err());
        assert!(Policy::from_name(PolicyName::AlaKnown, None).is_err());
    }

    fn belief(p_first: &[f64], rates: &[f64]) -> FiniteBelief {
        FiniteBelief::new(
            LabelSpace::binary(),
            vec![ProbHypothesis::binary(p_first).unwrap()],
            vec![1.0],
            vec![RateFunction::new(rates.to_vec()).unwrap()],
            vec![1.0],
        )
        .unwrap()
    }

    fn pool(n: usize) -> Vec<Example> {
        (0..n).map(|i| Example::new(i, SparseVec::default(), Some(1))).collect()
    }

    #[test]
    fn single_candidate_always_chosen() {
        let b = belief(&[0.9, 0.5], &[0.1, 0.2]);
        let ex = pool(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in [Policy::passive(), Policy::gibbs(), Policy::average(), Policy::worst()] {
            assert_eq!(select(&p, &b, &[&ex[1]], &mut rng).unwrap(), 1);
        }
        assert!(matches!(select(&Policy::gibbs(), &b, &[], &mut rng), Err(Error::EmptyCandidates)));
    }

    #[test]
    fn gibbs_prefers_uncertain() {
        let b = belief(&[0.9, 0.5], &[0.0, 0.0]);
        let ex = pool(2);
        let c: Vec<&Example> = ex.iter().collect();
        assert_eq!(select(&Policy::gibbs(), &b, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(), 1);
    }

    #[test]
    fn average_prefers_balanced_rate() {
        let b = belief(&[0.5, 0.5, 0.5], &[0.0, 1.0 / 3.0, 0.9]);
        let ex = pool(3);
        let c: Vec<&Example> = ex.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select(&Policy::average(), &b, &c, &mut rng).unwrap(), 1);
        assert_eq!(select(&Policy::worst(), &b, &c, &mut rng).unwrap(), 1);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let b = belief(&[0.5, 0.5, 0.5], &[0.2, 0.2, 0.2]);
        let ex = pool(3);
        let c: Vec<&Example> = vec![&ex[2], &ex[0], &ex[1]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for p in [Policy::gibbs(), Policy::average(), Policy::worst()] {
            assert_eq!(select(&p, &b, &c, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn passive_draw_ignores_enumeration_order() {
        let b = belief(&[0.5; 5], &[0.0; 5]);
        let ex = pool(5);
        let fwd: Vec<&Example> = ex.iter().collect();
        let rev: Vec<&Example> = ex.iter().rev().collect();
        for seed in 0..20 {
            let a = select(&Policy::passive(), &b, &fwd, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let r = select(&Policy::passive(), &b, &rev, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(a, r);
        }
    }
}
