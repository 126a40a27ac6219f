//! Exhaustive machinery for small instances: the induced deterministic
//! spaces of labellings and abstention patterns, the version-space
//! reduction utility, policy trees, their average- and worst-case values,
//! optimal policies by dynamic programming over histories, and the
//! certification of the greedy policies against those optima.
//!
//! A realisation is a pair `(f, k)` of a labelling and an abstention
//! pattern. Querying `x` under `(f, k)` yields `0` when `k(x) = 1` and
//! `f(x)` otherwise, so a label hidden behind an abstention is never
//! observed. The utility of a selected set `S` is one minus the prior mass
//! of the realisations that agree with everything observed on `S`:
//!
//! ```text
//! g(S, (f, k)) = 1 - qF[f on {x in S : k(x) = 0}] * qK[k on S]
//! ```

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::belief::Belief;
use crate::criteria::{select, Policy};
use crate::error::{Error, Result};
use crate::finite_bayes::{FiniteBelief, ProbHypothesis, RateFunction};
use crate::types::{Example, Feedback, LabelSpace, SparseVec};

/// Largest labelling or pattern space we are willing to enumerate.
pub const MAX_ENUMERATION: usize = 1_000_000;
/// Largest budget accepted by the exhaustive optimiser.
pub const MAX_DP_BUDGET: usize = 4;

/// Observations gathered so far: `(example, feedback)` in query order.
pub type History = [(usize, Feedback)];

/// A finite problem instance: the prior over hypotheses and rates.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteInstance {
    prior: FiniteBelief,
}

impl FiniteInstance {
    pub fn new(prior: FiniteBelief) -> Self {
        FiniteInstance { prior }
    }

    pub fn prior(&self) -> &FiniteBelief {
        &self.prior
    }

    pub fn pool_size(&self) -> usize {
        self.prior.pool_size()
    }

    /// Featureless examples `0..m`, all carrying label 1 as a placeholder.
    pub fn pool(&self) -> Vec<Example> {
        (0..self.pool_size())
            .map(|i| Example::new(i, SparseVec::default(), Some(1)))
            .collect()
    }

    /// Parses the line-oriented instance format:
    ///
    /// ```text
    /// pool <m> labels 2
    /// h <weight> <P(y=1|x_1)> ... <P(y=1|x_m)>
    /// r <weight> <r(x_1)> ... <r(x_m)>
    /// ```
    ///
    /// Blank lines and `#` comments are ignored; weights are normalised.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { path: path.to_string(), line, msg };
        let mut header: Option<(usize, usize)> = None;
        let (mut hs, mut hw, mut rs, mut rw) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            match tokens[0] {
                "pool" => {
                    if header.is_some() {
                        return Err(err(lineno, "duplicate header".into()));
                    }
                    let [_, m, kw, l] = tokens[..] else {
                        return Err(err(lineno, "expected `pool <m> labels <l>`".into()));
                    };
                    let m: usize = m.parse().map_err(|_| err(lineno, format!("bad pool size {m:?}")))?;
                    let l: usize = l.parse().map_err(|_| err(lineno, format!("bad label count {l:?}")))?;
                    if kw != "labels" || m == 0 {
                        return Err(err(lineno, "expected `pool <m> labels <l>` with m >= 1".into()));
                    }
                    if l != 2 {
                        return Err(err(lineno, "only binary instances (labels 2) are supported".into()));
                    }
                    header = Some((m, l));
                }
                kind @ ("h" | "r") => {
                    let Some((m, _)) = header else {
                        return Err(err(lineno, "header must come first".into()));
                    };
                    let nums = tokens[1..]
                        .iter()
                        .map(|t| t.parse::<f64>().map_err(|_| err(lineno, format!("bad number {t:?}"))))
                        .collect::<Result<Vec<f64>>>()?;
                    if nums.len() != m + 1 {
                        return Err(err(lineno, format!("expected weight plus {m} values, got {}", nums.len())));
                    }
                    let wrap = |e: Error| err(lineno, e.to_string());
                    if kind == "h" {
                        hs.push(ProbHypothesis::binary(&nums[1..]).map_err(wrap)?);
                        hw.push(nums[0]);
                    } else {
                        rs.push(RateFunction::new(nums[1..].to_vec()).map_err(wrap)?);
                        rw.push(nums[0]);
                    }
                }
                other => return Err(err(lineno, format!("unknown record {other:?}"))),
            }
        }
        let Some((_, l)) = header else {
            return Err(err(0, "missing `pool` header".into()));
        };
        let prior = FiniteBelief::new(LabelSpace::new(l)?, hs, hw, rs, rw)
            .map_err(|e| err(0, e.to_string()))?;
        Ok(FiniteInstance { prior })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        FiniteInstance::parse(&text, &path.display().to_string())
    }

    /// Serialises into the format accepted by [`FiniteInstance::parse`].
    pub fn to_text(&self) -> String {
        let p = &self.prior;
        let mut out = format!("pool {} labels {}\n", p.pool_size(), p.label_space().num_labels());
        for (h, w) in p.hypotheses().iter().zip(p.hypothesis_weights()) {
            write!(out, "h {w}").unwrap();
            for x in 0..p.pool_size() {
                write!(out, " {}", h.pmf(x).expect("in range")[0]).unwrap();
            }
            out.push('\n');
        }
        for (r, w) in p.rates().iter().zip(p.rate_weights()) {
            write!(out, "r {w}").unwrap();
            for v in r.as_slice() {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// A random binary instance with `1..=max_h` hypotheses and
    /// `1..=max_r` rate functions. About one probability in ten is snapped
    /// to exactly 0 or 1 so that zero-mass branches get exercised.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, pool_size: usize, max_h: usize, max_r: usize) -> Self {
        let prob = |rng: &mut R| -> f64 {
            let u: f64 = rng.random();
            if u < 0.05 {
                0.0
            } else if u < 0.1 {
                1.0
            } else {
                rng.random()
            }
        };
        let n_h = rng.random_range(1..=max_h.max(1));
        let n_r = rng.random_range(1..=max_r.max(1));
        let hs = (0..n_h)
            .map(|_| {
                let ps: Vec<f64> = (0..pool_size).map(|_| prob(rng)).collect();
                ProbHypothesis::binary(&ps).expect("probabilities in range")
            })
            .collect();
        let rs = (0..n_r)
            .map(|_| RateFunction::new((0..pool_size).map(|_| prob(rng)).collect()).expect("in range"))
            .collect();
        let hw = (0..n_h).map(|_| rng.random_range(0.05..1.0)).collect();
        let rw = (0..n_r).map(|_| rng.random_range(0.05..1.0)).collect();
        let prior = FiniteBelief::new(LabelSpace::binary(), hs, hw, rs, rw).expect("valid random instance");
        FiniteInstance { prior }
    }
}

/// A labelling of the whole pool, labels in `1..=l`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeterministicLabeling(pub Vec<u32>);

/// An abstention pattern over the whole pool, `true` = abstains.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbstentionPattern(pub Vec<bool>);

/// One element of `F x K` with its prior weight `qF[f] qK[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub labeling: DeterministicLabeling,
    pub pattern: AbstentionPattern,
    pub weight: f64,
}

impl Realization {
    pub fn feedback(&self, x: usize) -> Feedback {
        if self.pattern.0[x] {
            Feedback::Abstain
        } else {
            Feedback::Label(self.labeling.0[x])
        }
    }

    pub fn consistent_with(&self, history: &History) -> bool {
        history.iter().all(|&(x, fb)| self.feedback(x) == fb)
    }
}

/// Priors induced on the deterministic labelling space and the pattern
/// space. Labelling `i` assigns `f(x) = (i / l^x) % l + 1`; pattern `k`
/// abstains on `x` iff bit `x` of `k` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedPrior {
    num_labels: usize,
    pool_size: usize,
    qf: Vec<f64>,
    qk: Vec<f64>,
}

fn space_size(base: usize, m: usize) -> Result<usize> {
    u32::try_from(m)
        .ok()
        .and_then(|m| base.checked_pow(m))
        .filter(|&n| n <= MAX_ENUMERATION)
        .ok_or_else(|| Error::InstanceTooLarge(format!("{base}^{m} exceeds {MAX_ENUMERATION}")))
}

fn decode_labeling(mut i: usize, l: usize, m: usize) -> Vec<u32> {
    (0..m)
        .map(|_| {
            let y = (i % l) as u32 + 1;
            i /= l;
            y
        })
        .collect()
}

fn decode_pattern(k: usize, m: usize) -> Vec<bool> {
    (0..m).map(|x| k >> x & 1 == 1).collect()
}

/// `qF[f] = sum_h p0[h] prod_x P[h(x) = f(x)]` for every labelling.
pub fn induce_qf(prior: &FiniteBelief) -> Result<Vec<f64>> {
    let (l, m) = (prior.label_space().num_labels(), prior.pool_size());
    let n = space_size(l, m)?;
    (0..n)
        .map(|i| {
            let f = decode_labeling(i, l, m);
            let mut total = 0.0;
            for (h, w) in prior.hypotheses().iter().zip(prior.hypothesis_weights()) {
                let mut p = *w;
                for (x, &y) in f.iter().enumerate() {
                    p *= h.prob(x, y)?;
                }
                total += p;
            }
            Ok(total)
        })
        .collect()
}

/// `qK[k] = sum_r p0[r] prod_x (1 - r(x))^(1 - k(x)) r(x)^k(x)` for every pattern.
pub fn induce_qk(prior: &FiniteBelief) -> Result<Vec<f64>> {
    let m = prior.pool_size();
    let n = space_size(2, m)?;
    (0..n)
        .map(|k| {
            let pattern = decode_pattern(k, m);
            let mut total = 0.0;
            for (r, w) in prior.rates().iter().zip(prior.rate_weights()) {
                let mut p = *w;
                for (x, &abstains) in pattern.iter().enumerate() {
                    let rate = r.at(x)?;
                    p *= if abstains { rate } else { 1.0 - rate };
                }
                total += p;
            }
            Ok(total)
        })
        .collect()
}

impl InducedPrior {
    pub fn from_prior(prior: &FiniteBelief) -> Result<Self> {
        Ok(InducedPrior {
            num_labels: prior.label_space().num_labels(),
            pool_size: prior.pool_size(),
            qf: induce_qf(prior)?,
            qk: induce_qk(prior)?,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn qf(&self) -> &[f64] {
        &self.qf
    }

    pub fn qk(&self) -> &[f64] {
        &self.qk
    }

    pub fn labeling(&self, i: usize) -> DeterministicLabeling {
        DeterministicLabeling(decode_labeling(i, self.num_labels, self.pool_size))
    }

    pub fn pattern(&self, k: usize) -> AbstentionPattern {
        AbstentionPattern(decode_pattern(k, self.pool_size))
    }

    /// `qF[Y = y; S]`: total weight of labellings agreeing with `assignment`.
    pub fn labeling_marginal(&self, assignment: &[(usize, u32)]) -> f64 {
        self.qf
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let f = decode_labeling(*i, self.num_labels, self.pool_size);
                assignment.iter().all(|&(x, y)| f[x] == y)
            })
            .map(|(_, w)| w)
            .sum()
    }

    /// `qK[Z = z; S]`: total weight of patterns agreeing with `assignment`.
    pub fn pattern_marginal(&self, assignment: &[(usize, bool)]) -> f64 {
        self.qk
            .iter()
            .enumerate()
            .filter(|(k, _)| assignment.iter().all(|&(x, z)| (k >> x & 1 == 1) == z))
            .map(|(_, w)| w)
            .sum()
    }

    /// Every realisation with positive prior weight.
    pub fn support(&self) -> Vec<Realization> {
        let mut out = Vec::new();
        for (i, &wf) in self.qf.iter().enumerate() {
            if wf <= 0.0 {
                continue;
            }
            for (k, &wk) in self.qk.iter().enumerate() {
                let weight = wf * wk;
                if weight > 0.0 {
                    out.push(Realization {
                        labeling: self.labeling(i),
                        pattern: self.pattern(k),
                        weight,
                    });
                }
            }
        }
        out
    }
}

/// Version-space reduction utility of selecting `set` under realisation
/// `(f, k)`.
pub fn utility_g(induced: &InducedPrior, set: &[usize], f: &DeterministicLabeling, k: &AbstentionPattern) -> f64 {
    let labels: Vec<(usize, u32)> = set.iter().filter(|&&x| !k.0[x]).map(|&x| (x, f.0[x])).collect();
    let pattern: Vec<(usize, bool)> = set.iter().map(|&x| (x, k.0[x])).collect();
    1.0 - induced.labeling_marginal(&labels) * induced.pattern_marginal(&pattern)
}

fn utility_of(induced: &InducedPrior, set: &[usize], r: &Realization) -> f64 {
    utility_g(induced, set, &r.labeling, &r.pattern)
}

/// An adaptive policy: each node queries an example and branches on the
/// feedback `0..=l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyTree {
    Leaf,
    Node { example: usize, children: Vec<PolicyTree> },
}

impl PolicyTree {
    /// Queries the lowest remaining examples regardless of feedback.
    pub fn fixed_sequence(examples: &[usize], num_labels: usize) -> PolicyTree {
        match examples.split_first() {
            None => PolicyTree::Leaf,
            Some((&x, rest)) => PolicyTree::Node {
                example: x,
                children: vec![PolicyTree::fixed_sequence(rest, num_labels); num_labels + 1],
            },
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            PolicyTree::Leaf => 0,
            PolicyTree::Node { children, .. } => 1 + children.iter().map(PolicyTree::depth).max().unwrap_or(0),
        }
    }

    /// `true` if no example repeats along any root-to-leaf path.
    pub fn has_distinct_paths(&self) -> bool {
        fn walk(t: &PolicyTree, seen: &mut Vec<usize>) -> bool {
            match t {
                PolicyTree::Leaf => true,
                PolicyTree::Node { example, children } => {
                    if seen.contains(example) {
                        return false;
                    }
                    seen.push(*example);
                    let ok = children.iter().all(|c| walk(c, seen));
                    seen.pop();
                    ok
                }
            }
        }
        walk(self, &mut Vec::new())
    }

    /// Examples this policy selects when the world is `r`.
    pub fn selected(&self, r: &Realization) -> Vec<usize> {
        let mut out = Vec::new();
        let mut node = self;
        while let PolicyTree::Node { example, children } = node {
            out.push(*example);
            node = &children[r.feedback(*example).value() as usize];
        }
        out
    }
}

/// Expected utility of `tree` under the induced prior.
pub fn eval_policy_avg(tree: &PolicyTree, induced: &InducedPrior) -> f64 {
    induced
        .support()
        .iter()
        .map(|r| r.weight * utility_of(induced, &tree.selected(r), r))
        .sum()
}

/// Smallest utility of `tree` over realisations with positive weight.
pub fn eval_policy_worst(tree: &PolicyTree, induced: &InducedPrior) -> f64 {
    induced
        .support()
        .iter()
        .map(|r| utility_of(induced, &tree.selected(r), r))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Average,
    Worst,
}

struct Search<'a> {
    induced: &'a InducedPrior,
    objective: Objective,
}

impl Search<'_> {
    /// Value and subtree for the history whose consistent realisations are
    /// `worlds`. Average values are unnormalised (weighted sums), so the
    /// root value is the objective itself.
    fn solve(&self, worlds: &[Realization], chosen: &mut Vec<usize>, depth: usize) -> (f64, PolicyTree) {
        let l = self.induced.num_labels;
        if depth == 0 {
            let value = match self.objective {
                Objective::Average => worlds.iter().map(|r| r.weight * utility_of(self.induced, chosen, r)).sum(),
                Objective::Worst => worlds
                    .iter()
                    .map(|r| utility_of(self.induced, chosen, r))
                    .fold(f64::INFINITY, f64::min),
            };
            return (value, PolicyTree::Leaf);
        }
        let mut best: Option<(f64, PolicyTree)> = None;
        for x in 0..self.induced.pool_size {
            if chosen.contains(&x) {
                continue;
            }
            chosen.push(x);
            let mut children = Vec::with_capacity(l + 1);
            let mut value = match self.objective {
                Objective::Average => 0.0,
                Objective::Worst => f64::INFINITY,
            };
            for o in 0..=l as u32 {
                let fb = Feedback::from_value(o);
                let branch: Vec<Realization> = worlds.iter().filter(|r| r.feedback(x) == fb).cloned().collect();
                if branch.is_empty() {
                    // Unreachable: any completion will do.
                    let rest: Vec<usize> = (0..self.induced.pool_size).filter(|i| !chosen.contains(i)).take(depth - 1).collect();
                    children.push(PolicyTree::fixed_sequence(&rest, l));
                    continue;
                }
                let (v, sub) = self.solve(&branch, chosen, depth - 1);
                children.push(sub);
                value = match self.objective {
                    Objective::Average => value + v,
                    Objective::Worst => value.min(v),
                };
            }
            chosen.pop();
            if best.as_ref().is_none_or(|(bv, _)| value > *bv) {
                best = Some((value, PolicyTree::Node { example: x, children }));
            }
        }
        best.expect("budget never exceeds pool size")
    }
}

/// Optimal policy of depth `budget` for the chosen objective, by exhaustive
/// search over histories. Ties between examples go to the lowest index.
pub fn optimal_policy(objective: Objective, induced: &InducedPrior, budget: usize) -> Result<(PolicyTree, f64)> {
    if budget > MAX_DP_BUDGET || budget > induced.pool_size {
        return Err(Error::InstanceTooLarge(format!(
            "budget {budget} exceeds min(pool size {}, {MAX_DP_BUDGET})",
            induced.pool_size
        )));
    }
    let worlds = induced.support();
    let search = Search { induced, objective };
    let (value, tree) = search.solve(&worlds, &mut Vec::new(), budget);
    Ok((tree, value))
}

/// The greedy policy tree: average-case uses the expected-reduction score,
/// worst-case the largest-outcome score, both with exact posterior updates
/// along every branch.
pub fn greedy_tree(objective: Objective, prior: &FiniteBelief, budget: usize) -> Result<PolicyTree> {
    if budget > prior.pool_size() {
        return Err(Error::BudgetExceedsPool { budget, pool: prior.pool_size() });
    }
    let policy = match objective {
        Objective::Average => Policy::average(),
        Objective::Worst => Policy::worst(),
    };
    let pool: Vec<Example> = (0..prior.pool_size())
        .map(|i| Example::new(i, SparseVec::default(), None))
        .collect();
    fn build(
        policy: &Policy,
        pool: &[Example],
        belief: &FiniteBelief,
        chosen: &mut Vec<usize>,
        depth: usize,
    ) -> Result<PolicyTree> {
        if depth == 0 {
            return Ok(PolicyTree::Leaf);
        }
        let candidates: Vec<&Example> = pool.iter().filter(|e| !chosen.contains(&e.index)).collect();
        // Deterministic policies never touch the rng.
        let x = select(policy, belief, &candidates, &mut ChaCha8Rng::seed_from_u64(0))?;
        chosen.push(x);
        let mut children = Vec::new();
        for o in 0..=belief.label_space().num_labels() as u32 {
            let child = match belief.update(x, Feedback::from_value(o)) {
                Ok(next) => build(policy, pool, &next, chosen, depth - 1)?,
                Err(Error::ZeroPosteriorMass { .. }) => build(policy, pool, belief, chosen, depth - 1)?,
                Err(e) => return Err(e),
            };
            children.push(child);
        }
        chosen.pop();
        Ok(PolicyTree::Node { example: x, children })
    }
    build(&policy, &pool, prior, &mut Vec::new(), budget)
}

fn consistent(induced: &InducedPrior, history: &History) -> Vec<Realization> {
    induced.support().into_iter().filter(|r| r.consistent_with(history)).collect()
}

/// Expected increase of the utility from also querying `x` after
/// `history`, divided by the current version-space mass, computed by
/// enumerating the consistent realisations.
pub fn expected_one_step_gain(induced: &InducedPrior, history: &History, x: usize) -> f64 {
    let worlds = consistent(induced, history);
    let mass: f64 = worlds.iter().map(|r| r.weight).sum();
    if mass <= 0.0 {
        return 0.0;
    }
    let before: Vec<usize> = history.iter().map(|&(e, _)| e).collect();
    let mut after = before.clone();
    after.push(x);
    let expected: f64 = worlds
        .iter()
        .map(|r| r.weight * (utility_of(induced, &after, r) - utility_of(induced, &before, r)))
        .sum::<f64>()
        / mass;
    expected / mass
}

/// Smallest increase of the utility from querying `x` after `history`
/// over consistent realisations, divided by the current version-space mass.
pub fn worst_case_one_step_gain(induced: &InducedPrior, history: &History, x: usize) -> f64 {
    let worlds = consistent(induced, history);
    let mass: f64 = worlds.iter().map(|r| r.weight).sum();
    if mass <= 0.0 {
        return 0.0;
    }
    let before: Vec<usize> = history.iter().map(|&(e, _)| e).collect();
    let mut after = before.clone();
    after.push(x);
    worlds
        .iter()
        .map(|r| utility_of(induced, &after, r) - utility_of(induced, &before, r))
        .fold(f64::INFINITY, f64::min)
        / mass
}

/// Probability of the most likely outcome (abstain, or each label) at `x`
/// given `history`; the worst-case greedy minimises it.
pub fn max_outcome_probability(induced: &InducedPrior, history: &History, x: usize) -> f64 {
    1.0 - worst_case_one_step_gain(induced, history, x)
}

pub const APPROX_FACTOR: f64 = 1.0 - 1.0 / std::f64::consts::E;
pub const CERTIFY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct CertificationReport {
    pub instance: String,
    pub budget: usize,
    pub avg_greedy: f64,
    pub avg_optimal: f64,
    pub avg_ratio: f64,
    pub worst_greedy: f64,
    pub worst_optimal: f64,
    pub worst_ratio: f64,
    pub avg_passed: bool,
    pub worst_passed: bool,
    pub passed: bool,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        1.0
    }
}

/// Checks both greedy policies against the optima on one instance.
pub fn certify_bounds(instance: &FiniteInstance, budget: usize) -> Result<CertificationReport> {
    let induced = InducedPrior::from_prior(instance.prior())?;
    let avg_greedy = eval_policy_avg(&greedy_tree(Objective::Average, instance.prior(), budget)?, &induced);
    let worst_greedy = eval_policy_worst(&greedy_tree(Objective::Worst, instance.prior(), budget)?, &induced);
    let (_, avg_optimal) = optimal_policy(Objective::Average, &induced, budget)?;
    let (_, worst_optimal) = optimal_policy(Objective::Worst, &induced, budget)?;
    let avg_passed = avg_greedy >= APPROX_FACTOR * avg_optimal - CERTIFY_SLACK;
    let worst_passed = worst_greedy >= APPROX_FACTOR * worst_optimal - CERTIFY_SLACK;
    Ok(CertificationReport {
        instance: instance.to_text(),
        budget,
        avg_greedy,
        avg_optimal,
        avg_ratio: ratio(avg_greedy, avg_optimal),
        worst_greedy,
        worst_optimal,
        worst_ratio: ratio(worst_greedy, worst_optimal),
        avg_passed,
        worst_passed,
        passed: avg_passed && worst_passed,
    })
}

/// Certifies `trials` random binary instances with at most three
/// hypotheses and two rate functions each.
pub fn certify_random(pool_size: usize, budget: usize, trials: usize, seed: u64) -> Result<Vec<CertificationReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| certify_bounds(&FiniteInstance::random(&mut rng, pool_size, 3, 2), budget))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn instance(hs: &[(f64, &[f64])], rs: &[(f64, &[f64])]) -> FiniteInstance {
        FiniteInstance::new(
            FiniteBelief::new(
                LabelSpace::binary(),
                hs.iter().map(|(_, p)| ProbHypothesis::binary(p).unwrap()).collect(),
                hs.iter().map(|(w, _)| *w).collect(),
                rs.iter().map(|(_, r)| RateFunction::new(r.to_vec()).unwrap()).collect(),
                rs.iter().map(|(w, _)| *w).collect(),
            )
            .unwrap(),
        )
    }

    #[test]
    fn qf_single_example() {
        let inst = instance(&[(1.0, &[0.7])], &[(1.0, &[0.0])]);
        let qf = induce_qf(inst.prior()).unwrap();
        assert_abs_diff_eq!(qf[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(qf[1], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn qf_deterministic_pushforward() {
        let inst = instance(&[(0.25, &[1.0, 0.0]), (0.75, &[0.0, 0.0])], &[(1.0, &[0.0, 0.0])]);
        let induced = InducedPrior::from_prior(inst.prior()).unwrap();
        // labelling index: f(0) + 2 f(1) with labels shifted to 0-based.
        assert_eq!(induced.qf(), &[0.0, 0.0, 0.25, 0.75]);
    }

    #[test]
    fn qf_symmetric() {
        let inst = instance(&[(1.0, &[0.5, 0.5])], &[(1.0, &[0.0, 0.0])]);
        assert_eq!(induce_qf(inst.prior()).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn qk_product() {
        let inst = instance(&[(1.0, &[0.5, 0.5])], &[(1.0, &[0.2, 0.5])]);
        let induced = InducedPrior::from_prior(inst.prior()).unwrap();
        // k = (1, 0): bit 0 set.
        assert_abs_diff_eq!(induced.qk()[0b01], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(induced.qk().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        let zero = instance(&[(1.0, &[0.5, 0.5])], &[(1.0, &[0.0, 0.0])]);
        assert_eq!(induce_qk(zero.prior()).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn enumeration_guard() {
        let inst = instance(&[(1.0, &[0.5; 21])], &[(1.0, &[0.1; 21])]);
        assert!(matches!(InducedPrior::from_prior(inst.prior()), Err(Error::InstanceTooLarge(_))));
    }

    #[test]
    fn utility_cases() {
        // qF[f(x0) = 1] = 0.6, qK[k(x0) = 0] = 0.3.
        let inst = instance(&[(1.0, &[0.6])], &[(1.0, &[0.7])]);
        let induced = InducedPrior::from_prior(inst.prior()).unwrap();
        let f = DeterministicLabeling(vec![1]);
        let k = AbstentionPattern(vec![false]);
        assert_eq!(utility_g(&induced, &[], &f, &k), 0.0);
        assert_abs_diff_eq!(utility_g(&induced, &[0], &f, &k), 0.82, epsilon = 1e-15);

        let point = instance(&[(1.0, &[1.0, 0.0])], &[(1.0, &[0.0, 1.0])]);
        let induced = InducedPrior::from_prior(point.prior()).unwrap();
        let f = DeterministicLabeling(vec![1, 2]);
        let k = AbstentionPattern(vec![false, true]);
        assert_eq!(utility_g(&induced, &[0, 1], &f, &k), 0.0);
    }

    #[test]
    fn policy_values_single_example() {
        let inst = instance(&[(1.0, &[0.7])], &[(1.0, &[0.0])]);
        let induced = InducedPrior::from_prior(inst.prior()).unwrap();
        assert_eq!(eval_policy_avg(&PolicyTree::Leaf, &induced), 0.0);
        let tree = PolicyTree::fixed_sequence(&[0], 2);
        assert_abs_diff_eq!(eval_policy_avg(&tree, &induced), 0.42, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_policy_worst(&tree, &induced), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn worst_ignores_zero_weight_realisations() {
        // f(x1) is certain, so half the labellings have zero weight; those
        // would score g = 1 and cannot lower the minimum, but realisations
        // outside the support must not be visited at all.
        let inst = instance(&[(1.0, &[0.7, 1.0])], &[(1.0, &[0.0, 0.0])]);
        let induced = InducedPrior::from_prior(inst.prior()).unwrap();
        assert_eq!(induced.support().len(), 2);
        let tree = PolicyTree::fixed_sequence(&[0, 1], 2);
        assert_abs_diff_eq!(eval_policy_worst(&tree, &induced), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn point_mass_avg_equals_worst() {
        let inst = instance(&[(1.0, &[1.0, 0.0])], &[(1.0, &[0.0, 1.0])]);
        let report = certify_bounds(&inst, 2).unwrap();
        assert_eq!(report.avg_greedy, report.worst_greedy);
        assert_eq!(report.avg_optimal, report.avg_greedy);
        assert!(report.passed);
    }

    #[test]
    fn optimal_prefers_informative_example() {
        let inst = instance(&[(1.0, &[1.0, 0.5])], &[(1.0, &[0.0, 0.0])]);
        let induced = InducedPrior::from_prior(inst.prior()).unwrap();
        let (tree, value) = optimal_policy(Objective::Average, &induced, 1).unwrap();
        let PolicyTree::Node { example, .. } = tree else { panic!("expected a node") };
        assert_eq!(example, 1);
        assert_abs_diff_eq!(value, 0.5, epsilon = 1e-15);
        let other = eval_policy_avg(&PolicyTree::fixed_sequence(&[0], 2), &induced);
        assert_eq!(other, 0.0);
    }

    #[test]
    fn dp_guard() {
        let inst = instance(&[(1.0, &[0.5; 5])], &[(1.0, &[0.1; 5])]);
        let induced = InducedPrior::from_prior(inst.prior()).unwrap();
        assert!(optimal_policy(Objective::Average, &induced, 5).is_err());
        let small = instance(&[(1.0, &[0.5; 2])], &[(1.0, &[0.1; 2])]);
        let induced = InducedPrior::from_prior(small.prior()).unwrap();
        assert!(optimal_policy(Objective::Worst, &induced, 3).is_err());
    }

    #[test]
    fn worked_one_step_values() {
        let inst = instance(&[(1.0, &[0.6])], &[(1.0, &[0.25])]);
        let induced = InducedPrior::from_prior(inst.prior()).unwrap();
        assert_abs_diff_eq!(expected_one_step_gain(&induced, &[], 0), 0.645, epsilon = 1e-12);
        assert_abs_diff_eq!(max_outcome_probability(&induced, &[], 0), 0.45, epsilon = 1e-12);

        let certain = instance(&[(1.0, &[0.6])], &[(1.0, &[1.0])]);
        let induced = InducedPrior::from_prior(certain.prior()).unwrap();
        assert_abs_diff_eq!(expected_one_step_gain(&induced, &[], 0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(max_outcome_probability(&induced, &[], 0), 1.0, epsilon = 1e-15);

        let known = instance(&[(1.0, &[1.0])], &[(1.0, &[0.0])]);
        let induced = InducedPrior::from_prior(known.prior()).unwrap();
        assert_abs_diff_eq!(expected_one_step_gain(&induced, &[], 0), 0.0, epsilon = 1e-15);

        let balanced = instance(&[(1.0, &[0.5])], &[(1.0, &[1.0 / 3.0])]);
        let induced = InducedPrior::from_prior(balanced.prior()).unwrap();
        assert_abs_diff_eq!(max_outcome_probability(&induced, &[], 0), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn instance_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = FiniteInstance::random(&mut rng, 3, 3, 2);
        let back = FiniteInstance::parse(&inst.to_text(), "mem").unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn instance_parse_errors() {
        assert!(FiniteInstance::parse("h 1 0.5\n", "t").is_err());
        assert!(FiniteInstance::parse("pool 2 labels 2\nh 1 0.5\nr 1 0 0\n", "t").is_err());
        assert!(FiniteInstance::parse("pool 1 labels 3\n", "t").is_err());
        let err = FiniteInstance::parse("pool 1 labels 2\nh 1 0.5\nq 1 0\n", "t").unwrap_err();
        assert!(err.to_string().contains("t:3"), "{err}");
        assert!(FiniteInstance::parse("# comment\npool 1 labels 2\nh 1 0.5\nr 1 0\n", "t").is_ok());
    }

    #[test]
    fn greedy_trees_are_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let inst = FiniteInstance::random(&mut rng, 3, 3, 2);
            for obj in [Objective::Average, Objective::Worst] {
                let t = greedy_tree(obj, inst.prior(), 3).unwrap();
                assert_eq!(t.depth(), 3);
                assert!(t.has_distinct_paths());
            }
        }
    }
}
