//! MAP logistic regression under an independent Gaussian prior on every
//! parameter, and the plugin belief built from it.
//!
//! The fitted objective is
//!
//! ```text
//! J(w, b) = sum_j log Bernoulli(t_j | sigmoid(w.x_j + b)) - (|w|^2 + b^2) / (2 sigma^2)
//! ```
//!
//! which is strictly concave, so the maximiser is unique. Small problems
//! are solved with damped Newton steps, large ones with L-BFGS; both stop
//! once the gradient norm drops below [`GRAD_TOL`] or after [`MAX_ITER`]
//! iterations.

use std::collections::VecDeque;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::belief::{AbstentionRate, Belief};
use crate::error::{Error, Result};
use crate::types::{Example, Feedback, LabelSpace, SparseVec};

pub const GRAD_TOL: f64 = 1e-6;
pub const MAX_ITER: usize = 500;
pub const DEFAULT_SIGMA2: f64 = 0.5;

/// Parameter count above which L-BFGS replaces Newton.
const NEWTON_MAX_PARAMS: usize = 257;
const LBFGS_MEMORY: usize = 10;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(z))` without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

/// A fitted linear logit model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub prior_variance: f64,
}

impl LinearModel {
    /// The prior mode: all parameters zero.
    pub fn prior_mode(dim: usize, prior_variance: f64) -> Self {
        LinearModel {
            weights: vec![0.0; dim],
            intercept: 0.0,
            prior_variance,
        }
    }

    pub fn logit(&self, x: &SparseVec) -> f64 {
        x.dot(&self.weights) + self.intercept
    }

    fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.push(self.intercept);
        p
    }

    fn from_params(mut params: Vec<f64>, prior_variance: f64) -> Self {
        let intercept = params.pop().unwrap_or(0.0);
        LinearModel {
            weights: params,
            intercept,
            prior_variance,
        }
    }
}

/// `sigmoid(w.x + b)`.
pub fn predict_proba(model: &LinearModel, x: &SparseVec) -> f64 {
    sigmoid(model.logit(x))
}

/// The regularised log-likelihood over a parameter vector laid out as
/// `[w_0, ..., w_{dim-1}, b]`.
#[derive(Debug, Clone, Copy)]
pub struct MapObjective<'a> {
    observations: &'a [(&'a SparseVec, bool)],
    sigma2: f64,
    dim: usize,
}

impl<'a> MapObjective<'a> {
    pub fn new(observations: &'a [(&'a SparseVec, bool)], sigma2: f64, dim: usize) -> Self {
        MapObjective {
            observations,
            sigma2,
            dim,
        }
    }

    pub fn num_params(&self) -> usize {
        self.dim + 1
    }

    fn logit(&self, params: &[f64], x: &SparseVec) -> f64 {
        x.dot(&params[..self.dim]) + params[self.dim]
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let loglik: f64 = self
            .observations
            .iter()
            .map(|(x, t)| {
                let z = self.logit(params, x);
                if *t {
                    log_sigmoid(z)
                } else {
                    log_sigmoid(-z)
                }
            })
            .sum();
        let sq: f64 = params.iter().map(|p| p * p).sum();
        loglik - sq / (2.0 * self.sigma2)
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let mut grad: Vec<f64> = params.iter().map(|p| -p / self.sigma2).collect();
        for (x, t) in self.observations {
            let resid = f64::from(u8::from(*t)) - sigmoid(self.logit(params, x));
            for (i, v) in x.iter().filter(|(i, _)| *i < self.dim) {
                grad[i] += resid * v;
            }
            grad[self.dim] += resid;
        }
        grad
    }

    /// Negated Hessian, `sum_j s_j (1 - s_j) x_j x_j^T + I / sigma^2`.
    fn curvature(&self, params: &[f64]) -> DMatrix<f64> {
        let n = self.num_params();
        let mut h = DMatrix::<f64>::identity(n, n) / self.sigma2;
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (x, _) in self.observations {
            let s = sigmoid(self.logit(params, x));
            let c = s * (1.0 - s);
            entries.clear();
            entries.extend(x.iter().filter(|(i, _)| *i < self.dim));
            entries.push((self.dim, 1.0));
            for &(i, vi) in &entries {
                for &(j, vj) in &entries {
                    h[(i, j)] += c * vi * vj;
                }
            }
        }
        h
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], t: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + t * b).collect()
}

/// Backtracking along an ascent direction. Returns the accepted point.
fn line_search(obj: &MapObjective, x: &[f64], fx: f64, grad: &[f64], dir: &[f64]) -> Option<(Vec<f64>, f64)> {
    let slope = dot(grad, dir);
    if slope <= 0.0 {
        return None;
    }
    let slack = 1e-12 * fx.abs().max(1.0);
    let mut t = 1.0;
    while t > 1e-12 {
        let cand = axpy(x, t, dir);
        let fc = obj.value(&cand);
        if fc >= fx + 1e-4 * t * slope - slack {
            return Some((cand, fc));
        }
        t *= 0.5;
    }
    None
}

fn newton(obj: &MapObjective, mut x: Vec<f64>) -> Vec<f64> {
    let mut fx = obj.value(&x);
    for _ in 0..MAX_ITER {
        let grad = obj.gradient(&x);
        if norm(&grad) <= GRAD_TOL {
            break;
        }
        let Some(chol) = obj.curvature(&x).cholesky() else {
            break;
        };
        let step = chol.solve(&DVector::from_column_slice(&grad));
        match line_search(obj, &x, fx, &grad, step.as_slice()) {
            Some((nx, nf)) => {
                x = nx;
                fx = nf;
            }
            None => break,
        }
    }
    x
}

fn lbfgs(obj: &MapObjective, mut x: Vec<f64>) -> Vec<f64> {
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(LBFGS_MEMORY);
    let mut fx = obj.value(&x);
    // Work with the descent problem on -J.
    let mut grad: Vec<f64> = obj.gradient(&x).iter().map(|g| -g).collect();
    for _ in 0..MAX_ITER {
        if norm(&grad) <= GRAD_TOL {
            break;
        }
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q = axpy(&q, -a, y);
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map_or(obj.sigma2.min(1.0), |(s, y, _)| dot(s, y) / dot(y, y));
        let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &r);
            r = axpy(&r, a - b, s);
        }
        // Ascent direction for J is -r.
        let dir: Vec<f64> = r.iter().map(|v| -v).collect();
        let ascent: Vec<f64> = grad.iter().map(|g| -g).collect();
        let accepted = line_search(obj, &x, fx, &ascent, &dir).or_else(|| {
            history.clear();
            line_search(obj, &x, fx, &ascent, &ascent)
        });
        let Some((nx, nf)) = accepted else {
            break;
        };
        let ngrad: Vec<f64> = obj.gradient(&nx).iter().map(|g| -g).collect();
        let s: Vec<f64> = nx.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ngrad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == LBFGS_MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = nx;
        fx = nf;
        grad = ngrad;
    }
    x
}

/// Maximises the objective over `dim` feature weights plus the intercept,
/// optionally warm-started from `warm`.
pub fn fit_map_with(
    observations: &[(&SparseVec, bool)],
    sigma2: f64,
    dim: usize,
    warm: Option<&LinearModel>,
) -> Result<LinearModel> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::BadInput(format!("prior variance must be positive, got {sigma2}")));
    }
    if observations
        .iter()
        .any(|(x, _)| x.iter().any(|(_, v)| !v.is_finite()))
    {
        return Err(Error::BadInput("non-finite feature value".into()));
    }
    let obj = MapObjective::new(observations, sigma2, dim);
    let start = match warm {
        Some(m) => {
            let mut p = m.params();
            let b = p.pop().unwrap_or(0.0);
            p.resize(dim, 0.0);
            p.push(b);
            p
        }
        None => vec![0.0; dim + 1],
    };
    let params = if obj.num_params() <= NEWTON_MAX_PARAMS {
        newton(&obj, start)
    } else {
        lbfgs(&obj, start)
    };
    Ok(LinearModel::from_params(params, sigma2))
}

/// MAP fit with the dimension taken from the observations.
pub fn fit_map(observations: &[(&SparseVec, bool)], sigma2: f64) -> Result<LinearModel> {
    let dim = observations.iter().map(|(x, _)| x.dim()).max().unwrap_or(0);
    fit_map_with(observations, sigma2, dim, None)
}

/// A rate estimate frozen after one fit on a full abstention pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedRate {
    model: LinearModel,
}

impl FixedRate {
    pub fn model(&self) -> &LinearModel {
        &self.model
    }
}

impl AbstentionRate for FixedRate {
    fn rate(&self, x: &Example) -> Result<f64> {
        Ok(predict_proba(&self.model, &x.features))
    }
}

/// Fits the abstention model once on `(features, abstained)` pairs covering
/// the whole pool. An empty pattern yields the prior mode.
pub fn fixed_rate_estimator(pattern: &[(&SparseVec, bool)], sigma2: f64) -> Result<FixedRate> {
    Ok(FixedRate {
        model: fit_map(pattern, sigma2)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Observation<T> {
    index: usize,
    features: SparseVec,
    target: T,
}

/// MAP plugin approximation of the posterior over labels and abstention
/// rates. Both models are refit on all accumulated observations; the label
/// model on every returned label, the abstention model lazily on first use
/// after an observation.
#[derive(Debug, Clone)]
pub struct PluginBelief {
    label_space: LabelSpace,
    dim: usize,
    label_sigma2: f64,
    abstain_sigma2: f64,
    label_obs: Vec<Observation<u32>>,
    abstain_obs: Vec<Observation<bool>>,
    /// One model for binary problems (label 2 vs 1), one per class otherwise.
    label_models: Vec<LinearModel>,
    abstain_model: OnceLock<LinearModel>,
    last_abstain_model: Option<LinearModel>,
}

impl PluginBelief {
    pub fn new(label_space: LabelSpace, dim: usize, label_sigma2: f64, abstain_sigma2: f64) -> Result<Self> {
        for s in [label_sigma2, abstain_sigma2] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::BadInput(format!("prior variance must be positive, got {s}")));
            }
        }
        let n_models = if label_space.num_labels() == 2 { 1 } else { label_space.num_labels() };
        Ok(PluginBelief {
            label_space,
            dim,
            label_sigma2,
            abstain_sigma2,
            label_obs: Vec::new(),
            abstain_obs: Vec::new(),
            label_models: vec![LinearModel::prior_mode(dim, label_sigma2); n_models],
            abstain_model: OnceLock::from(LinearModel::prior_mode(dim, abstain_sigma2)),
            last_abstain_model: None,
        })
    }

    /// `(example index, label)` for every returned label, in query order.
    pub fn label_observations(&self) -> Vec<(usize, u32)> {
        self.label_obs.iter().map(|o| (o.index, o.target)).collect()
    }

    /// `(example index, abstained)` for every query, in query order.
    pub fn abstain_observations(&self) -> Vec<(usize, bool)> {
        self.abstain_obs.iter().map(|o| (o.index, o.target)).collect()
    }

    pub fn label_models(&self) -> &[LinearModel] {
        &self.label_models
    }

    pub fn abstain_model(&self) -> &LinearModel {
        self.abstain_model.get_or_init(|| {
            let obs: Vec<(&SparseVec, bool)> =
                self.abstain_obs.iter().map(|o| (&o.features, o.target)).collect();
            fit_map_with(&obs, self.abstain_sigma2, self.dim, self.last_abstain_model.as_ref())
                .expect("features validated on construction")
        })
    }

    fn refit_labels(&mut self) -> Result<()> {
        let binary = self.label_models.len() == 1;
        for (c, model) in self.label_models.iter_mut().enumerate() {
            let positive = if binary { 2 } else { c as u32 + 1 };
            let obs: Vec<(&SparseVec, bool)> = self
                .label_obs
                .iter()
                .map(|o| (&o.features, o.target == positive))
                .collect();
            *model = fit_map_with(&obs, self.label_sigma2, self.dim, Some(model))?;
        }
        Ok(())
    }

    pub fn plugin_predictive_pmf(&self, x: &SparseVec) -> Vec<f64> {
        if let [model] = self.label_models.as_slice() {
            let p = predict_proba(model, x);
            return vec![1.0 - p, p];
        }
        let scores: Vec<f64> = self.label_models.iter().map(|m| predict_proba(m, x)).collect();
        let total: f64 = scores.iter().sum();
        scores.into_iter().map(|s| s / total).collect()
    }

    pub fn plugin_estimated_rate(&self, x: &SparseVec) -> f64 {
        predict_proba(self.abstain_model(), x)
    }
}

impl Belief for PluginBelief {
    fn label_space(&self) -> LabelSpace {
        self.label_space
    }

    fn predictive_pmf(&self, x: &Example) -> Result<Vec<f64>> {
        Ok(self.plugin_predictive_pmf(&x.features))
    }

    fn estimated_rate(&self, x: &Example) -> Result<f64> {
        Ok(self.plugin_estimated_rate(&x.features))
    }

    fn observe(&mut self, x: &Example, feedback: Feedback) -> Result<()> {
        if let Some(m) = self.abstain_model.take() {
            self.last_abstain_model = Some(m);
        }
        self.abstain_obs.push(Observation {
            index: x.index,
            features: x.features.clone(),
            target: feedback.is_abstain(),
        });
        if let Feedback::Label(y) = feedback {
            self.label_space.check(y)?;
            self.label_obs.push(Observation {
                index: x.index,
                features: x.features.clone(),
                target: y,
            });
            self.refit_labels()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(i: u32) -> SparseVec {
        SparseVec::new(vec![i], vec![1.0]).unwrap()
    }

    #[test]
    fn empty_fit_is_prior_mode() {
        let m = fit_map(&[], 0.5).unwrap();
        assert!(m.weights.is_empty());
        assert_eq!(m.intercept, 0.0);
        assert_eq!(predict_proba(&m, &one_hot(3)), 0.5);
    }

    #[test]
    fn rejects_bad_variance() {
        assert!(fit_map(&[], 0.0).is_err());
        assert!(fit_map(&[], f64::NAN).is_err());
    }

    #[test]
    fn saturation_and_symmetry() {
        let x = SparseVec::new(vec![0, 1], vec![0.3, -1.2]).unwrap();
        let m = LinearModel { weights: vec![0.0, 0.0], intercept: 20.0, prior_variance: 1.0 };
        assert!(predict_proba(&m, &x) >= 1.0 - 1e-8);
        let m = LinearModel { weights: vec![0.7, 0.4], intercept: -0.2, prior_variance: 1.0 };
        let neg = LinearModel { weights: vec![-0.7, -0.4], intercept: 0.2, prior_variance: 1.0 };
        let p = predict_proba(&m, &x);
        assert!((predict_proba(&neg, &x) - (1.0 - p)).abs() < 1e-15);
    }

    #[test]
    fn separable_data_stays_bounded() {
        let xs: Vec<SparseVec> = (0..20)
            .map(|i| SparseVec::new(vec![0], vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).unwrap())
            .collect();
        let obs: Vec<(&SparseVec, bool)> = xs.iter().enumerate().map(|(i, x)| (x, i % 2 == 0)).collect();
        let m = fit_map(&obs, 0.5).unwrap();
        assert!(m.weights[0].is_finite() && m.weights[0].abs() < 10.0);
        let grad = MapObjective::new(&obs, 0.5, 1).gradient(&m.params());
        assert!(norm(&grad) <= GRAD_TOL);
    }

    #[test]
    fn lbfgs_path_converges() {
        // 300 features forces the quasi-Newton branch.
        let xs: Vec<SparseVec> = (0..40u32)
            .map(|i| SparseVec::new(vec![i % 7, 299 - i], vec![1.0, 0.5 + f64::from(i % 3)]).unwrap())
            .collect();
        let obs: Vec<(&SparseVec, bool)> = xs.iter().enumerate().map(|(i, x)| (x, i % 3 == 0)).collect();
        let m = fit_map(&obs, 0.5).unwrap();
        assert_eq!(m.weights.len(), 300);
        let grad = MapObjective::new(&obs, 0.5, 300).gradient(&m.params());
        assert!(norm(&grad) <= GRAD_TOL, "gradient norm {}", norm(&grad));
    }

    #[test]
    fn plugin_prior_mode() {
        let b = PluginBelief::new(LabelSpace::binary(), 3, 0.5, 0.5).unwrap();
        let x = one_hot(1);
        assert_eq!(b.plugin_predictive_pmf(&x), vec![0.5, 0.5]);
        assert_eq!(b.plugin_estimated_rate(&x), 0.5);
        let b = PluginBelief::new(LabelSpace::new(4).unwrap(), 3, 0.5, 0.5).unwrap();
        assert_eq!(b.plugin_predictive_pmf(&x), vec![0.25; 4]);
    }

    #[test]
    fn plugin_routes_feedback() {
        let mut b = PluginBelief::new(LabelSpace::binary(), 2, 0.5, 0.5).unwrap();
        let e0 = Example::new(0, one_hot(0), Some(2));
        let e1 = Example::new(1, one_hot(1), Some(1));
        b.observe(&e0, Feedback::Label(2)).unwrap();
        b.observe(&e1, Feedback::Abstain).unwrap();
        assert_eq!(b.label_observations(), vec![(0, 2)]);
        assert_eq!(b.abstain_observations(), vec![(0, false), (1, true)]);
        assert!(b.plugin_predictive_pmf(&e0.features)[1] > 0.5);
        assert!(b.plugin_estimated_rate(&e1.features) > 0.5);
        assert!(b.plugin_estimated_rate(&e0.features) < 0.5);
    }

    #[test]
    fn multiclass_pmf_sums_to_one() {
        let mut b = PluginBelief::new(LabelSpace::new(3).unwrap(), 3, 0.5, 0.5).unwrap();
        for (i, y) in [(0, 1), (1, 2), (2, 3)] {
            b.observe(&Example::new(i, one_hot(i as u32), Some(y)), Feedback::Label(y)).unwrap();
        }
        let pmf = b.plugin_predictive_pmf(&one_hot(2));
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pmf[2] > pmf[0] && pmf[2] > pmf[1]);
    }

    #[test]
    fn fixed_rate_on_empty_pattern_is_prior_mode() {
        let f = fixed_rate_estimator(&[], 0.5).unwrap();
        assert_eq!(f.rate(&Example::new(0, one_hot(2), None)).unwrap(), 0.5);
    }
}
