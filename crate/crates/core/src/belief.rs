//! The interface the active-learning loop and the policies are written
//! against. Two implementations exist: [`FiniteBelief`](crate::finite_bayes::FiniteBelief)
//! for exact inference and [`PluginBelief`](crate::map_models::PluginBelief)
//! for MAP logistic regression.

use std::fmt::Debug;

use crate::error::Result;
use crate::types::{Example, Feedback, LabelSpace};

/// Current knowledge about the label function and the abstention rate.
pub trait Belief {
    fn label_space(&self) -> LabelSpace;

    /// Predictive label distribution at `x`, indexed by `label - 1`.
    fn predictive_pmf(&self, x: &Example) -> Result<Vec<f64>>;

    /// Posterior-mean abstention probability at `x`.
    fn estimated_rate(&self, x: &Example) -> Result<f64>;

    /// Incorporate the labeler's answer for `x`. A label updates both the
    /// label model and the abstention model; an abstention only the latter.
    fn observe(&mut self, x: &Example, feedback: Feedback) -> Result<()>;
}

/// A fixed abstention-rate estimate, independent of any belief state.
pub trait AbstentionRate: Debug + Send + Sync {
    fn rate(&self, x: &Example) -> Result<f64>;
}
