//! Simulated labelers. Each one materialises its full answer table at
//! construction, so repeated queries of an example always get the same
//! answer.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::belief::AbstentionRate;
use crate::error::{Error, Result};
use crate::map_models::{fit_map, predict_proba};
use crate::types::{Dataset, Feedback};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    /// Abstains on redundant examples, labels everything else.
    Unrelated,
    /// Abstains on the examples a generator model is most sure about.
    Easy,
    /// Abstains on the examples a generator model is least sure about.
    Hard,
    /// Abstains independently per example with a given rate.
    Stochastic,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Unrelated => "unrelated",
            ScenarioKind::Easy => "easy",
            ScenarioKind::Hard => "hard",
            ScenarioKind::Stochastic => "stochastic",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unrelated" => Ok(ScenarioKind::Unrelated),
            "easy" => Ok(ScenarioKind::Easy),
            "hard" => Ok(ScenarioKind::Hard),
            "stochastic" => Ok(ScenarioKind::Stochastic),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

/// A labeler with persistent answers.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedLabeler {
    scenario: ScenarioKind,
    answers: Vec<Feedback>,
}

impl SimulatedLabeler {
    pub fn from_answers(scenario: ScenarioKind, answers: Vec<Feedback>) -> Self {
        SimulatedLabeler { scenario, answers }
    }

    pub fn scenario(&self) -> ScenarioKind {
        self.scenario
    }

    pub fn query(&self, index: usize) -> Result<Feedback> {
        self.answers.get(index).copied().ok_or(Error::UnknownExample(index))
    }

    pub fn answers(&self) -> &[Feedback] {
        &self.answers
    }

    /// `true` where the labeler abstains.
    pub fn abstention_pattern(&self) -> Vec<bool> {
        self.answers.iter().map(|f| f.is_abstain()).collect()
    }

    pub fn abstention_count(&self) -> usize {
        self.answers.iter().filter(|f| f.is_abstain()).count()
    }
}

fn check_fraction(q: f64) -> Result<()> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(Error::BadInput(format!("abstention fraction {q} outside [0,1]")))
    }
}

fn labelled_only(ds: &Dataset) -> Result<Vec<u32>> {
    ds.iter()
        .map(|e| {
            e.label.ok_or_else(|| {
                Error::BadInput(format!("example {} has no target label", e.index))
            })
        })
        .collect()
}

/// `ceil(q * m)`, robust to `q * m` landing a hair above an integer.
pub fn abstention_count_for(q: f64, m: usize) -> usize {
    ((q * m as f64) - 1e-9).ceil().max(0.0) as usize
}

pub fn make_unrelated(ds: &Dataset) -> Result<SimulatedLabeler> {
    if ds.iter().all(|e| e.is_redundant()) {
        return Err(Error::NoTargetExamples);
    }
    let answers = ds
        .iter()
        .map(|e| e.label.map_or(Feedback::Abstain, Feedback::Label))
        .collect();
    Ok(SimulatedLabeler::from_answers(ScenarioKind::Unrelated, answers))
}

/// `|P(y = 2 | x) - 0.5|` under a model fit on the whole dataset.
pub fn distance_statistic(ds: &Dataset, sigma2: f64) -> Result<Vec<f64>> {
    let labels = labelled_only(ds)?;
    let obs: Vec<_> = ds
        .iter()
        .zip(&labels)
        .map(|(e, &y)| (&e.features, y == 2))
        .collect();
    let model = fit_map(&obs, sigma2)?;
    Ok(ds
        .iter()
        .map(|e| (predict_proba(&model, &e.features) - 0.5).abs())
        .collect())
}

fn make_by_distance(ds: &Dataset, q: f64, sigma2: f64, kind: ScenarioKind) -> Result<SimulatedLabeler> {
    check_fraction(q)?;
    let labels = labelled_only(ds)?;
    let d = distance_statistic(ds, sigma2)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    match kind {
        ScenarioKind::Easy => order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b))),
        _ => order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b))),
    }
    let mut answers: Vec<Feedback> = labels.into_iter().map(Feedback::Label).collect();
    for &i in order.iter().take(abstention_count_for(q, ds.len())) {
        answers[i] = Feedback::Abstain;
    }
    Ok(SimulatedLabeler::from_answers(kind, answers))
}

/// Abstains on the `ceil(q m)` examples farthest from the generator
/// model's decision boundary.
pub fn make_easy_abstain(ds: &Dataset, q: f64, sigma2: f64) -> Result<SimulatedLabeler> {
    make_by_distance(ds, q, sigma2, ScenarioKind::Easy)
}

/// Abstains on the `ceil(q m)` examples closest to the generator model's
/// decision boundary.
pub fn make_hard_abstain(ds: &Dataset, q: f64, sigma2: f64) -> Result<SimulatedLabeler> {
    make_by_distance(ds, q, sigma2, ScenarioKind::Hard)
}

/// Draws one persistent abstain/label decision per example.
pub fn make_stochastic(ds: &Dataset, rate: &dyn AbstentionRate, seed: u64) -> Result<SimulatedLabeler> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let answers = ds
        .iter()
        .map(|e| {
            let r = rate.rate(e)?;
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::BadInput(format!("abstention rate {r} outside [0,1]")));
            }
            let u: f64 = rng.random();
            if u < r {
                return Ok(Feedback::Abstain);
            }
            e.label.map(Feedback::Label).ok_or_else(|| {
                Error::BadInput(format!("example {} has no target label", e.index))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulatedLabeler::from_answers(ScenarioKind::Stochastic, answers))
}

/// Constant abstention rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantRate(pub f64);

impl AbstentionRate for ConstantRate {
    fn rate(&self, _x: &crate::types::Example) -> Result<f64> {
        Ok(self.0)
    }
}
