use abstain_al::map_models::{
    fit_map, fit_map_with, fixed_rate_estimator, predict_proba, sigmoid, MapObjective, PluginBelief,
};
use abstain_al::sim::{distance_statistic, make_easy_abstain};
use abstain_al::harness::SyntheticGenerator;
use abstain_al::{AbstentionRate, Belief, Example, Feedback, LabelSpace, SparseVec};
use proptest::prelude::*;

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    assert!(f(lo) > 0.0 && f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn data_strategy() -> impl Strategy<Value = (Vec<(SparseVec, bool)>, usize)> {
    (1usize..6).prop_flat_map(|dim| {
        let row = (prop::collection::vec(-3.0f64..3.0, dim), any::<bool>())
            .prop_map(|(x, t)| (SparseVec::from_dense(&x).unwrap(), t));
        (prop::collection::vec(row, 0..25), Just(dim))
    })
}

fn as_refs(data: &[(SparseVec, bool)]) -> Vec<(&SparseVec, bool)> {
    data.iter().map(|(x, t)| (x, *t)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_central_differences(
        (data, dim) in data_strategy(),
        point in prop::collection::vec(-2.0f64..2.0, 6),
        sigma2 in 0.1f64..5.0,
    ) {
        let obs = as_refs(&data);
        let obj = MapObjective::new(&obs, sigma2, dim);
        let params = &point[..dim + 1];
        let grad = obj.gradient(params);
        let h = 1e-5;
        for i in 0..=dim {
            let mut up = params.to_vec();
            let mut down = params.to_vec();
            up[i] += h;
            down[i] -= h;
            let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
            let scale = grad[i].abs().max(fd.abs()).max(1.0);
            prop_assert!((grad[i] - fd).abs() / scale <= 1e-4, "param {}: {} vs {}", i, grad[i], fd);
        }
    }

    #[test]
    fn fit_is_stationary_and_beats_prior_mode((data, dim) in data_strategy(), sigma2 in 0.1f64..5.0) {
        let obs = as_refs(&data);
        let model = fit_map_with(&obs, sigma2, dim, None).unwrap();
        let obj = MapObjective::new(&obs, sigma2, dim);
        let mut params = model.weights.clone();
        params.push(model.intercept);
        let g = obj.gradient(&params);
        prop_assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1e-6);
        prop_assert!(obj.value(&params) >= obj.value(&vec![0.0; dim + 1]));
    }

    #[test]
    fn fit_ignores_observation_order(
        (data, shuffled) in data_strategy().prop_flat_map(|(d, _)| (Just(d.clone()), Just(d).prop_shuffle())),
        probe in prop::collection::vec(-3.0f64..3.0, 5),
    ) {
        let a = fit_map_with(&as_refs(&data), 0.5, 5, None).unwrap();
        let b = fit_map_with(&as_refs(&shuffled), 0.5, 5, None).unwrap();
        let x = SparseVec::from_dense(&probe).unwrap();
        prop_assert!((predict_proba(&a, &x) - predict_proba(&b, &x)).abs() <= 1e-6);
    }

    #[test]
    fn warm_start_does_not_change_the_optimum((data, dim) in data_strategy(), warm in prop::collection::vec(-3.0f64..3.0, 6)) {
        let obs = as_refs(&data);
        let cold = fit_map_with(&obs, 0.5, dim, None).unwrap();
        let mut start = cold.clone();
        start.weights = warm[..dim].to_vec();
        start.intercept = warm[dim];
        let hot = fit_map_with(&obs, 0.5, dim, Some(&start)).unwrap();
        for (a, b) in cold.weights.iter().zip(&hot.weights) {
            prop_assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn estimated_rate_is_strictly_inside_unit_interval(zs in prop::collection::vec(any::<bool>(), 0..30)) {
        let mut b = PluginBelief::new(LabelSpace::binary(), 2, 0.5, 0.5).unwrap();
        for (i, z) in zs.iter().enumerate() {
            let x = Example::new(i, SparseVec::from_dense(&[1.0, (i % 3) as f64]).unwrap(), Some(1));
            b.observe(&x, if *z { Feedback::Abstain } else { Feedback::Label(1) }).unwrap();
        }
        for v in [-3.0, 0.0, 3.0] {
            let r = b.plugin_estimated_rate(&SparseVec::from_dense(&[v, v]).unwrap());
            prop_assert!(r > 0.0 && r < 1.0);
        }
    }
}

/// Intercept-only model: the optimum solves
/// `k (1 - s(b)) - (n - k) s(b) = b / sigma2`, found here by bisection.
#[test]
fn intercept_only_fit_matches_bisection() {
    let empty = SparseVec::default();
    for (n, k, sigma2) in [(10, 7, 0.5), (20, 0, 2.0), (5, 5, 0.1)] {
        let obs: Vec<(&SparseVec, bool)> = (0..n).map(|i| (&empty, i < k)).collect();
        let model = fit_map(&obs, sigma2).unwrap();
        let (n, k) = (n as f64, k as f64);
        let b = bisect(-100.0, 100.0, |b| k - n * sigmoid(b) - b / sigma2);
        assert!((model.intercept - b).abs() < 1e-6, "{} vs {b}", model.intercept);
    }
}

/// One observation with feature 1 and target 1: `1 - s(w + b) = w / sigma2 = b / sigma2`.
#[test]
fn single_observation_stationarity() {
    let x = SparseVec::from_dense(&[1.0]).unwrap();
    let model = fit_map(&[(&x, true)], 0.5).unwrap();
    let (w, b) = (model.weights[0], model.intercept);
    let resid = 1.0 - sigmoid(w + b);
    assert!((resid - w / 0.5).abs() < 1e-6);
    assert!((resid - b / 0.5).abs() < 1e-6);
    // By symmetry w = b = t with 1 - s(2t) = t / sigma2.
    let t = bisect(0.0, 10.0, |t| 1.0 - sigmoid(2.0 * t) - t / 0.5);
    assert!((w - t).abs() < 1e-6 && (b - t).abs() < 1e-6);
}

#[test]
fn repeated_label_two_dominates_prediction() {
    let x = Example::new(0, SparseVec::from_dense(&[1.0]).unwrap(), Some(2));
    let mut belief = PluginBelief::new(LabelSpace::binary(), 1, 0.5, 0.5).unwrap();
    for _ in 0..50 {
        belief.observe(&x, Feedback::Label(2)).unwrap();
    }
    let p = belief.predictive_pmf(&x).unwrap()[1];
    // 50 log s(2t) - t^2 / sigma2 with w = b = t.
    let t = bisect(0.0, 50.0, |t| 100.0 * (1.0 - sigmoid(2.0 * t)) - 2.0 * t / 0.5);
    assert!(p > 0.9);
    assert!((p - sigmoid(2.0 * t)).abs() < 1e-6);
}

#[test]
fn all_labelled_pattern_pulls_rate_below_half() {
    let ds = SyntheticGenerator::new(5, 3).unwrap().sample(80, 0, 0);
    let pattern: Vec<(&SparseVec, bool)> = ds.iter().map(|e| (&e.features, false)).collect();
    let fixed = fixed_rate_estimator(&pattern, 0.5).unwrap();
    assert!(fixed.model().intercept < 0.0);
    for e in &ds {
        assert!(fixed.rate(e).unwrap() < 0.5);
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            r[idx[k]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn easy_pattern_rate_tracks_distance() {
    let ds = SyntheticGenerator::new(5, 4).unwrap().sample(300, 0, 0);
    let labeler = make_easy_abstain(&ds, 0.4, 0.5).unwrap();
    let pattern: Vec<(&SparseVec, bool)> =
        ds.iter().zip(labeler.abstention_pattern()).map(|(e, z)| (&e.features, z)).collect();
    let fixed = fixed_rate_estimator(&pattern, 0.5).unwrap();
    let rates: Vec<f64> = ds.iter().map(|e| fixed.rate(e).unwrap()).collect();
    let d = distance_statistic(&ds, 0.5).unwrap();
    let rho = spearman(&rates, &d);
    assert!(rho > 0.0, "spearman {rho}");
}
