//! Datasets on disk, synthetic data, experiment grids and their outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::belief::{AbstentionRate, Belief};
use crate::criteria::{Policy, PolicyName};
use crate::error::{Error, Result};
use crate::finite_bayes::FiniteBelief;
use crate::learner::{run_active_learning, RunTrace};
use crate::map_models::{fixed_rate_estimator, PluginBelief, DEFAULT_SIGMA2};
use crate::oracle::FiniteInstance;
use crate::sim::{
    abstention_count_for, make_easy_abstain, make_hard_abstain, make_stochastic, make_unrelated,
    ConstantRate, ScenarioKind, SimulatedLabeler,
};
use crate::types::{Dataset, Example, Feedback, LabelSpace, SparseVec};

/// Environment variable holding the worker count for grid runs.
pub const THREADS_ENV: &str = "ABSTAIN_AL_THREADS";

// ---------------------------------------------------------------------------
// Sparse dataset format

/// Parses `<label> <idx>:<val> ...` lines. Label `-1` marks a redundant
/// example. Blank lines and lines starting with `#` are skipped. The label
/// space is `1..=max(2, largest label)`.
pub fn parse_dataset(text: &str, path: &str) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_string(), line, msg };
    let mut examples = Vec::new();
    let mut max_label = 2u32;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label = match label_tok {
            "-1" => None,
            t => match t.parse::<u32>() {
                Ok(y) if y >= 1 => Some(y),
                _ => return Err(err(lineno, format!("bad label {t:?}"))),
            },
        };
        if let Some(y) = label {
            max_label = max_label.max(y);
        }
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(lineno, format!("expected idx:val, got {tok:?}")))?;
            let idx: u32 = idx.parse().map_err(|_| err(lineno, format!("bad feature index {idx:?}")))?;
            let val: f64 = val.parse().map_err(|_| err(lineno, format!("bad feature value {val:?}")))?;
            if indices.last().is_some_and(|&last| idx <= last) {
                return Err(err(lineno, format!("feature index {idx} is not increasing")));
            }
            indices.push(idx);
            values.push(val);
        }
        let features = SparseVec::new(indices, values).map_err(|e| err(lineno, e.to_string()))?;
        examples.push(Example::new(examples.len(), features, label));
    }
    Dataset::new(examples, LabelSpace::new(max_label as usize)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text, &path.display().to_string())
}

/// Writes a dataset in the format read by [`parse_dataset`].
pub fn format_dataset(ds: &Dataset) -> String {
    let mut out = String::new();
    for e in ds {
        match e.label {
            Some(y) => write!(out, "{y}").unwrap(),
            None => out.push_str("-1"),
        }
        for (i, v) in e.features.iter() {
            write!(out, " {i}:{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    std::fs::write(path, format_dataset(ds))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Distance of each class mean from the origin along the class direction.
pub const CLASS_OFFSET: f64 = 0.75;
/// Distance of each redundant cloud centre from the origin.
pub const REDUNDANT_OFFSET: f64 = 3.0;

/// Two unit-variance Gaussian classes at `-+CLASS_OFFSET * u` for a random
/// unit direction `u`, plus redundant examples from two clouds whose
/// centres are orthogonal to `u` (so they carry no class signal).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticGenerator {
    seed: u64,
    direction: Vec<f64>,
    redundant_centres: [Vec<f64>; 2],
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn orthonormalise(v: &mut [f64], basis: &[&[f64]]) {
    for b in basis {
        let proj: f64 = v.iter().zip(*b).map(|(a, c)| a * c).sum();
        v.iter_mut().zip(*b).for_each(|(a, c)| *a -= proj * c);
    }
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= norm);
}

impl SyntheticGenerator {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::BadInput(format!("synthetic data needs dim >= 3, got {dim}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = gaussian_vec(&mut rng, dim);
        orthonormalise(&mut u, &[]);
        let mut v1 = gaussian_vec(&mut rng, dim);
        orthonormalise(&mut v1, &[&u]);
        let mut v2 = gaussian_vec(&mut rng, dim);
        orthonormalise(&mut v2, &[&u, &v1]);
        let scale = |v: Vec<f64>| v.into_iter().map(|a| a * REDUNDANT_OFFSET).collect();
        Ok(SyntheticGenerator { seed, direction: u, redundant_centres: [scale(v1), scale(v2)] })
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// Draws `n` target and `redundant` redundant examples in shuffled
    /// order. Different `split`s give independent samples from the same
    /// geometry.
    pub fn sample(&self, n: usize, redundant: usize, split: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(split + 1);
        let dim = self.dim();
        let mut examples = Vec::with_capacity(n + redundant);
        for _ in 0..n {
            let label: u32 = if rng.random_bool(0.5) { 2 } else { 1 };
            let sign = if label == 2 { 1.0 } else { -1.0 };
            let x: Vec<f64> = gaussian_vec(&mut rng, dim)
                .into_iter()
                .zip(&self.direction)
                .map(|(z, u)| z + sign * CLASS_OFFSET * u)
                .collect();
            examples.push((x, Some(label)));
        }
        for i in 0..redundant {
            let centre = &self.redundant_centres[i % 2];
            let x: Vec<f64> = gaussian_vec(&mut rng, dim).into_iter().zip(centre).map(|(z, c)| z + c).collect();
            examples.push((x, None));
        }
        examples.shuffle(&mut rng);
        let shuffled = examples
            .into_iter()
            .map(|(x, y)| Example::new(0, SparseVec::from_dense(&x).expect("finite features"), y))
            .collect();
        Dataset::new(shuffled, LabelSpace::binary()).expect("binary labels")
    }
}

// ---------------------------------------------------------------------------
// Metric

/// Area under the accuracy curve: `100 * mean(accuracies)`.
pub fn auac(accuracies: &[f64]) -> Result<f64> {
    if accuracies.is_empty() {
        return Err(Error::BadInput("empty accuracy curve".into()));
    }
    Ok(100.0 * accuracies.iter().sum::<f64>() / accuracies.len() as f64)
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files { train: String, test: String },
    Synthetic { train_n: usize, test_n: usize, dim: usize, redundant: usize, seed: u64 },
    Instance { path: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeliefKind {
    Plugin,
    Finite,
}

impl FromStr for BeliefKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plugin" => Ok(BeliefKind::Plugin),
            "finite" => Ok(BeliefKind::Finite),
            other => Err(Error::Config(format!("unknown belief {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Raw text, echoed into the manifest.
    pub text: String,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
    pub data: DataSource,
    pub belief: BeliefKind,
    pub policies: Vec<PolicyName>,
    pub scenario: ScenarioKind,
    pub fractions: Vec<f64>,
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub label_sigma2: f64,
    pub abstain_sigma2: f64,
    pub generator_sigma2: f64,
    pub pool_size: Option<usize>,
    pub output: String,
}

const KEYS: &[&str] = &[
    "train",
    "test",
    "synth_train",
    "synth_test",
    "synth_dim",
    "synth_seed",
    "synth_redundant",
    "instance",
    "belief",
    "policies",
    "scenario",
    "abstention_fractions",
    "budget",
    "seeds",
    "label_sigma2",
    "abstain_sigma2",
    "generator_sigma2",
    "pool_size",
    "output",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value for {key}: {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

/// `a..b` (exclusive) or a comma list.
fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = value.split_once("..") {
        let a: u64 = parse_value("seeds", a.trim())?;
        let b: u64 = parse_value("seeds", b.trim())?;
        return Ok((a..b).collect());
    }
    parse_list("seeds", value)
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{key} must be positive, got {v}")))
    }
}

impl ExperimentConfig {
    /// Parses `key = value` lines. Unknown or repeated keys are errors.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut map = std::collections::BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key {key:?}", i + 1)));
            }
            if map.insert(key, value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", i + 1)));
            }
        }
        let get = |k: &str| map.get(k).copied();

        let belief = get("belief").map_or(Ok(BeliefKind::Plugin), str::parse)?;
        let files = get("train").is_some() || get("test").is_some();
        let synth = ["synth_train", "synth_test", "synth_dim", "synth_seed", "synth_redundant"]
            .iter()
            .any(|k| get(k).is_some());
        let data = match (belief, files, synth, get("instance")) {
            (BeliefKind::Finite, false, false, Some(path)) => DataSource::Instance { path: path.to_string() },
            (BeliefKind::Finite, ..) => {
                return Err(Error::Config("belief = finite needs `instance` and no dataset keys".into()))
            }
            (BeliefKind::Plugin, _, _, Some(_)) => {
                return Err(Error::Config("`instance` requires belief = finite".into()))
            }
            (BeliefKind::Plugin, true, false, None) => DataSource::Files {
                train: get("train").ok_or_else(|| Error::Config("missing `train`".into()))?.to_string(),
                test: get("test").ok_or_else(|| Error::Config("missing `test`".into()))?.to_string(),
            },
            (BeliefKind::Plugin, false, true, None) => DataSource::Synthetic {
                train_n: parse_value("synth_train", get("synth_train").unwrap_or("1500"))?,
                test_n: parse_value("synth_test", get("synth_test").unwrap_or("500"))?,
                dim: parse_value("synth_dim", get("synth_dim").unwrap_or("20"))?,
                redundant: parse_value("synth_redundant", get("synth_redundant").unwrap_or("0"))?,
                seed: parse_value("synth_seed", get("synth_seed").unwrap_or("0"))?,
            },
            (BeliefKind::Plugin, true, true, None) => {
                return Err(Error::Config("give either train/test files or synth_* keys, not both".into()))
            }
            (BeliefKind::Plugin, false, false, None) => {
                return Err(Error::Config("no data source: set train/test or synth_* keys".into()))
            }
        };

        let policies = match get("policies") {
            Some(v) => parse_list("policies", v)?,
            None => vec![PolicyName::Pl, PolicyName::Alg, PolicyName::Ala, PolicyName::Alw],
        };
        let scenario = match (belief, get("scenario")) {
            (BeliefKind::Finite, None) => ScenarioKind::Stochastic,
            (BeliefKind::Finite, Some(_)) => {
                return Err(Error::Config("belief = finite draws abstentions from the prior; drop `scenario`".into()))
            }
            (BeliefKind::Plugin, Some(v)) => v.parse()?,
            (BeliefKind::Plugin, None) => return Err(Error::Config("missing `scenario`".into())),
        };
        let fractions = match (belief, get("abstention_fractions")) {
            (BeliefKind::Finite, None) => Vec::new(),
            (BeliefKind::Finite, Some(_)) => {
                return Err(Error::Config("belief = finite does not take abstention_fractions".into()))
            }
            (BeliefKind::Plugin, Some(v)) => parse_list("abstention_fractions", v)?,
            (BeliefKind::Plugin, None) => return Err(Error::Config("missing `abstention_fractions`".into())),
        };
        if let Some(q) = fractions.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(Error::Config(format!("abstention fraction {q} outside [0,1]")));
        }
        let budget: usize = parse_value("budget", get("budget").unwrap_or("300"))?;
        if budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        let seeds = parse_seeds(get("seeds").unwrap_or("0..10"))?;
        if seeds.is_empty() {
            return Err(Error::Config("empty seed list".into()));
        }
        let sigma = |k: &str| -> Result<f64> {
            positive(k, get(k).map_or(Ok(DEFAULT_SIGMA2), |v| parse_value(k, v))?)
        };
        let pool_size = get("pool_size").map(|v| parse_value("pool_size", v)).transpose()?;
        if let Some(m) = pool_size {
            if budget > m {
                return Err(Error::BudgetExceedsPool { budget, pool: m });
            }
        }
        Ok(ExperimentConfig {
            text: text.to_string(),
            base_dir: base_dir.to_path_buf(),
            data,
            belief,
            policies,
            scenario,
            fractions,
            budget,
            seeds,
            label_sigma2: sigma("label_sigma2")?,
            abstain_sigma2: sigma("abstain_sigma2")?,
            generator_sigma2: sigma("generator_sigma2")?,
            pool_size,
            output: get("output").unwrap_or("results").to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::parse(&text, base)
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }
}

// ---------------------------------------------------------------------------
// Grid

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub policy: PolicyName,
    pub scenario: ScenarioKind,
    pub fraction: f64,
    pub seed: u64,
    pub auac: f64,
    pub trace: RunTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellError {
    pub policy: PolicyName,
    pub scenario: ScenarioKind,
    pub fraction: f64,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub policy: PolicyName,
    pub scenario: ScenarioKind,
    pub fraction: f64,
    pub mean_auac: f64,
    pub stddev_auac: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridOutcome {
    pub rows: Vec<ResultRow>,
    pub errors: Vec<CellError>,
}

impl GridOutcome {
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        aggregate(&self.rows)
    }

    /// Mean AUAC of `policy` at `fraction`, if any run succeeded.
    pub fn mean_auac(&self, policy: PolicyName, fraction: f64) -> Option<f64> {
        self.aggregate()
            .into_iter()
            .find(|a| a.policy == policy && a.fraction == fraction)
            .map(|a| a.mean_auac)
    }
}

/// Mean and sample standard deviation per (policy, scenario, fraction), in
/// order of first appearance.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(PolicyName, ScenarioKind, f64)> = Vec::new();
    for r in rows {
        let key = (r.policy, r.scenario, r.fraction);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(policy, scenario, fraction)| {
            let xs: Vec<f64> = rows
                .iter()
                .filter(|r| r.policy == policy && r.scenario == scenario && r.fraction == fraction)
                .map(|r| r.auac)
                .collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let stddev = if xs.len() < 2 {
                0.0
            } else {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            AggregateRow { policy, scenario, fraction, mean_auac: mean, stddev_auac: stddev, runs: xs.len() }
        })
        .collect()
}

/// Loaded inputs shared by every cell.
enum GridData {
    Plugin { train: Dataset, test: Dataset, dim: usize },
    Finite { instance: FiniteInstance },
}

fn load_grid_data(config: &ExperimentConfig) -> Result<GridData> {
    match &config.data {
        DataSource::Files { train, test } => {
            let train = load_dataset(&config.resolve(train))?;
            let test = load_dataset(&config.resolve(test))?.targets_only();
            plugin_data(train, test)
        }
        DataSource::Synthetic { train_n, test_n, dim, redundant, seed } => {
            let gen = SyntheticGenerator::new(*dim, *seed)?;
            plugin_data(gen.sample(*train_n, *redundant, 0), gen.sample(*test_n, 0, 1))
        }
        DataSource::Instance { path } => Ok(GridData::Finite { instance: FiniteInstance::load(&config.resolve(path))? }),
    }
}

fn plugin_data(train: Dataset, test: Dataset) -> Result<GridData> {
    if test.is_empty() {
        return Err(Error::BadInput("test set has no target examples".into()));
    }
    let num_labels = train.label_space().num_labels().max(test.label_space().num_labels());
    let space = LabelSpace::new(num_labels)?;
    let dim = train.dim().max(test.dim());
    let train = Dataset::new(train.into_examples(), space)?;
    let test = Dataset::new(test.into_examples(), space)?;
    Ok(GridData::Plugin { train, test, dim })
}

/// Seeded pool for one (fraction, seed) cell, shared by every policy.
///
/// Unrelated: `ceil(q M)` redundant plus `M - ceil(q M)` target examples,
/// with `M = pool_size` (default: every target example). Other scenarios:
/// target examples only, subsampled to `pool_size` if set.
pub fn build_pool(
    train: &Dataset,
    scenario: ScenarioKind,
    fraction: f64,
    pool_size: Option<usize>,
    seed: u64,
) -> Result<Dataset> {
    let targets: Vec<usize> = train.iter().filter(|e| !e.is_redundant()).map(|e| e.index).collect();
    let redundant: Vec<usize> = train.iter().filter(|e| e.is_redundant()).map(|e| e.index).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut pick = |from: &[usize], k: usize, what: &str| -> Result<Vec<usize>> {
        if k > from.len() {
            return Err(Error::BadInput(format!("pool needs {k} {what} examples, dataset has {}", from.len())));
        }
        Ok(sample(&mut rng, from.len(), k).iter().map(|i| from[i]).collect())
    };
    let mut chosen = match scenario {
        ScenarioKind::Unrelated => {
            let m = pool_size.unwrap_or(targets.len());
            let k = abstention_count_for(fraction, m);
            let mut v = pick(&redundant, k, "redundant")?;
            v.extend(pick(&targets, m - k, "target")?);
            v
        }
        _ => match pool_size {
            Some(m) => pick(&targets, m, "target")?,
            None => targets,
        },
    };
    chosen.sort_unstable();
    if chosen.is_empty() {
        return Err(Error::BadInput("empty pool".into()));
    }
    train.subset(&chosen)
}

fn make_labeler(config: &ExperimentConfig, pool: &Dataset, fraction: f64, seed: u64) -> Result<SimulatedLabeler> {
    match config.scenario {
        ScenarioKind::Unrelated => make_unrelated(pool),
        ScenarioKind::Easy => make_easy_abstain(pool, fraction, config.generator_sigma2),
        ScenarioKind::Hard => make_hard_abstain(pool, fraction, config.generator_sigma2),
        ScenarioKind::Stochastic => make_stochastic(pool, &ConstantRate(fraction), seed ^ 0x9e37_79b9_7f4a_7c15),
    }
}

/// Fixed rate fit on the pool's true abstention pattern, for the known-rate
/// variants.
pub fn known_rate(pool: &Dataset, labeler: &SimulatedLabeler, sigma2: f64) -> Result<Arc<dyn AbstentionRate>> {
    let pattern: Vec<(&SparseVec, bool)> = pool
        .iter()
        .zip(labeler.abstention_pattern())
        .map(|(e, z)| (&e.features, z))
        .collect();
    Ok(Arc::new(fixed_rate_estimator(&pattern, sigma2)?))
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    policy: PolicyName,
    fraction: f64,
    seed: u64,
}

fn run_plugin_cell(config: &ExperimentConfig, train: &Dataset, test: &Dataset, dim: usize, cell: Cell) -> Result<RunTrace> {
    let pool = build_pool(train, config.scenario, cell.fraction, config.pool_size, cell.seed)?;
    let labeler = make_labeler(config, &pool, cell.fraction, cell.seed)?;
    let fixed = if cell.policy.needs_fixed_rate() {
        Some(known_rate(&pool, &labeler, config.abstain_sigma2)?)
    } else {
        None
    };
    let policy = Policy::from_name(cell.policy, fixed)?;
    let belief = PluginBelief::new(pool.label_space(), dim, config.label_sigma2, config.abstain_sigma2)?;
    let (trace, _) = run_active_learning(&policy, &labeler, &pool, config.budget, belief, test, cell.seed)?;
    Ok(trace)
}

/// A realisation drawn from a finite prior: the pool with its true labels,
/// the labeler, and the rate function it abstains with.
pub struct SampledWorld {
    pub pool: Dataset,
    pub labeler: SimulatedLabeler,
    pub rate: Arc<dyn AbstentionRate>,
}

/// Draws `h` and `r` from the prior, then labels and a persistent
/// abstention pattern from them.
pub fn sample_world(instance: &FiniteInstance, seed: u64) -> Result<SampledWorld> {
    let prior = instance.prior();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let weighted = |w: &[f64]| WeightedIndex::new(w).map_err(|e| Error::BadInput(e.to_string()));
    let h = &prior.hypotheses()[weighted(prior.hypothesis_weights())?.sample(&mut rng)];
    let r = prior.rates()[weighted(prior.rate_weights())?.sample(&mut rng)].clone();
    let mut examples = Vec::with_capacity(prior.pool_size());
    let mut answers = Vec::with_capacity(prior.pool_size());
    for x in 0..prior.pool_size() {
        let y = weighted(h.pmf(x)?)?.sample(&mut rng) as u32 + 1;
        let abstains = rng.random::<f64>() < r.at(x)?;
        examples.push(Example::new(x, SparseVec::default(), Some(y)));
        answers.push(if abstains { Feedback::Abstain } else { Feedback::Label(y) });
    }
    Ok(SampledWorld {
        pool: Dataset::new(examples, prior.label_space())?,
        labeler: SimulatedLabeler::from_answers(ScenarioKind::Stochastic, answers),
        rate: Arc::new(r),
    })
}

/// One run with the exact finite belief on a world sampled from the prior.
/// Accuracy is measured on the pool itself against the sampled labels.
pub fn run_finite(
    instance: &FiniteInstance,
    policy: PolicyName,
    budget: usize,
    seed: u64,
) -> Result<(RunTrace, FiniteBelief, SampledWorld)> {
    let world = sample_world(instance, seed)?;
    let fixed = policy.needs_fixed_rate().then(|| world.rate.clone());
    let policy = Policy::from_name(policy, fixed)?;
    let (trace, belief) = run_active_learning(
        &policy,
        &world.labeler,
        &world.pool,
        budget,
        instance.prior().clone(),
        &world.pool,
        seed,
    )?;
    Ok((trace, belief, world))
}

/// Mean prior abstention rate over the pool; the fraction column of
/// finite-belief grids.
pub fn prior_mean_rate(instance: &FiniteInstance) -> Result<f64> {
    let prior = instance.prior();
    let m = prior.pool_size();
    let mut total = 0.0;
    for x in 0..m {
        total += prior.estimated_rate(&Example::new(x, SparseVec::default(), None))?;
    }
    Ok(total / m as f64)
}

fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse().map_err(|_| Error::Config(format!("{THREADS_ENV} must be an integer, got {v:?}")))
        }
        _ => Ok(0),
    }
}

/// Runs every (policy, fraction, seed) cell. A failing cell is recorded in
/// [`GridOutcome::errors`] and does not stop the grid. Output order is the
/// grid order regardless of parallelism.
pub fn run_grid(config: &ExperimentConfig) -> Result<GridOutcome> {
    let data = load_grid_data(config)?;
    let fractions = match &data {
        GridData::Finite { instance } => vec![prior_mean_rate(instance)?],
        GridData::Plugin { .. } => config.fractions.clone(),
    };
    let mut cells = Vec::new();
    for &policy in &config.policies {
        for &fraction in &fractions {
            for &seed in &config.seeds {
                cells.push(Cell { policy, fraction, seed });
            }
        }
    }
    let run = |cell: &Cell| -> Result<RunTrace> {
        match &data {
            GridData::Plugin { train, test, dim } => run_plugin_cell(config, train, test, *dim, *cell),
            GridData::Finite { instance } => run_finite(instance, cell.policy, config.budget, cell.seed).map(|r| r.0),
        }
    };
    let threads = thread_count()?;
    let results: Vec<Result<RunTrace>> = if threads == 0 {
        cells.iter().map(run).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| cells.par_iter().map(run).collect())
    };
    let mut outcome = GridOutcome::default();
    for (cell, result) in cells.iter().zip(results) {
        match result.and_then(|trace| auac(&trace.accuracies()).map(|a| (trace, a))) {
            Ok((trace, auac)) => outcome.rows.push(ResultRow {
                policy: cell.policy,
                scenario: config.scenario,
                fraction: cell.fraction,
                seed: cell.seed,
                auac,
                trace,
            }),
            Err(e) => outcome.errors.push(CellError {
                policy: cell.policy,
                scenario: config.scenario,
                fraction: cell.fraction,
                seed: cell.seed,
                message: e.to_string(),
            }),
        }
    }
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// Outputs

pub const RESULTS_HEADER: &str = "policy,scenario,fraction,seed,auac";
pub const AGGREGATE_HEADER: &str = "policy,scenario,fraction,mean_auac,stddev_auac";
pub const CURVES_HEADER: &str = "policy,scenario,fraction,seed,iteration,example,feedback,accuracy";
pub const ERRORS_HEADER: &str = "policy,scenario,fraction,seed,error";

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{:.6}", r.policy, r.scenario, r.fraction, r.seed, r.auac).unwrap();
    }
    out
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for a in rows {
        writeln!(out, "{},{},{},{:.6},{:.6}", a.policy, a.scenario, a.fraction, a.mean_auac, a.stddev_auac).unwrap();
    }
    out
}

pub fn curves_csv(rows: &[ResultRow]) -> String {
    let mut out = format!("{CURVES_HEADER}\n");
    for r in rows {
        for rec in &r.trace.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{:.6}",
                r.policy,
                r.scenario,
                r.fraction,
                r.seed,
                rec.iteration,
                rec.example,
                rec.feedback,
                rec.accuracy
            )
            .unwrap();
        }
    }
    out
}

pub fn errors_csv(errors: &[CellError]) -> String {
    let mut out = format!("{ERRORS_HEADER}\n");
    for e in errors {
        let msg = e.message.replace('"', "\"\"");
        writeln!(out, "{},{},{},{},\"{msg}\"", e.policy, e.scenario, e.fraction, e.seed).unwrap();
    }
    out
}

/// Git-style blob hash (`sha256("blob <len>\0" ++ bytes)`), hex encoded.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct ManifestInput {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config: &'a str,
    config_sha256: String,
    inputs: Vec<ManifestInput>,
    cells: usize,
    failed_cells: usize,
    files: Vec<&'static str>,
}

fn manifest_json(config: &ExperimentConfig, outcome: &GridOutcome) -> Result<String> {
    let paths: Vec<&String> = match &config.data {
        DataSource::Files { train, test } => vec![train, test],
        DataSource::Instance { path } => vec![path],
        DataSource::Synthetic { .. } => vec![],
    };
    let inputs = paths
        .into_iter()
        .map(|p| {
            Ok(ManifestInput { path: p.clone(), sha256: blob_hash(&std::fs::read(config.resolve(p))?) })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        config: &config.text,
        config_sha256: blob_hash(config.text.as_bytes()),
        inputs,
        cells: outcome.rows.len() + outcome.errors.len(),
        failed_cells: outcome.errors.len(),
        files: vec!["results.csv", "aggregate.csv", "curves.csv", "errors.csv"],
    };
    let mut s = serde_json::to_string_pretty(&manifest)?;
    s.push('\n');
    Ok(s)
}

/// Writes `results.csv`, `aggregate.csv`, `curves.csv`, `errors.csv` and
/// `manifest.json` into `dir`.
pub fn write_outputs(config: &ExperimentConfig, outcome: &GridOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), results_csv(&outcome.rows))?;
    std::fs::write(dir.join("aggregate.csv"), aggregate_csv(&outcome.aggregate()))?;
    std::fs::write(dir.join("curves.csv"), curves_csv(&outcome.rows))?;
    std::fs::write(dir.join("errors.csv"), errors_csv(&outcome.errors))?;
    std::fs::write(dir.join("manifest.json"), manifest_json(config, outcome)?)?;
    Ok(())
}
