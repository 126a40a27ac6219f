//! Bayesian pool-based active learning when the labeler may abstain.
//!
//! A learner picks examples from a finite pool, one at a time, and asks a
//! labeler for their labels. The labeler either answers with a label in
//! `1..=l` or abstains (feedback `0`); abstentions cost budget just like
//! labels. The learner keeps a Bayesian belief over both the label
//! hypothesis and the labeler's abstention rate and selects queries with
//! one of two greedy criteria:
//!
//! * [`criteria::score_avg`], the expected version-space reduction
//!   (average case);
//! * [`criteria::score_worst`], the largest outcome probability, minimised
//!   (worst case).
//!
//! Two belief implementations are provided: [`FiniteBelief`] with exact
//! posteriors over finite hypothesis and rate sets, and [`PluginBelief`]
//! using MAP logistic-regression models. The [`oracle`] module enumerates
//! small instances exactly to check the greedy policies against optimal
//! policies, and [`harness`] runs seeded experiment grids.
//!
//! ```
//! use abstain_al::{Feedback, FiniteBelief, LabelSpace, ProbHypothesis, RateFunction};
//!
//! let belief = FiniteBelief::new(
//!     LabelSpace::binary(),
//!     vec![ProbHypothesis::binary(&[0.9]).unwrap(), ProbHypothesis::binary(&[0.1]).unwrap()],
//!     vec![0.5, 0.5],
//!     vec![RateFunction::constant(1, 0.2).unwrap()],
//!     vec![1.0],
//! )
//! .unwrap();
//! let after = belief.update(0, Feedback::Label(1)).unwrap();
//! assert!((after.hypothesis_weights()[0] - 0.9).abs() < 1e-12);
//! ```

pub mod belief;
pub mod criteria;
pub mod error;
pub mod finite_bayes;
pub mod harness;
pub mod learner;
pub mod map_models;
pub mod oracle;
pub mod sim;
pub mod types;

pub use belief::{AbstentionRate, Belief};
pub use criteria::{select, Policy, PolicyKind, PolicyName};
pub use error::{Error, Result};
pub use finite_bayes::{FiniteBelief, ProbHypothesis, RateFunction};
pub use learner::{evaluate_accuracy, run_active_learning, RunTrace, TraceRecord};
pub use map_models::{fit_map, LinearModel, PluginBelief};
pub use sim::{ScenarioKind, SimulatedLabeler};
pub use types::{Dataset, Example, Feedback, LabelSpace, SparseVec};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/beliefs.md")]
    mod beliefs {}
    #[doc = include_str!("../../../book/src/criteria.md")]
    mod criteria {}
    #[doc = include_str!("../../../book/src/plugin.md")]
    mod plugin {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
