//! Library behaviour checked against independently computed references.

use mtirl::aggregate::{bayes_posterior, bwve_decide_with_uncertainty, weighted_vote, Reward};
use mtirl::experiments::stats::{mann_whitney_exact, mann_whitney_normal};
use mtirl::gridworld::{optimal_q, GridMap, OracleRewards, Pos};
use mtirl::memory::{review_probability, ReviewModel, ReviewPolicy};
use mtirl::sim_trainers::{give_feedback, sample_population, TrainerProfile};
use mtirl::trust::{TrustRecord, TrustStore};
use mtirl::{bwve_decide, Action, FeedbackEvent, FeedbackSet, Polarity};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn store(records: &[(&str, f64, f64)]) -> TrustStore {
    let mut s = TrustStore::new();
    for &(id, a, b) in records {
        s.insert(id, TrustRecord::with_evidence(a, b, 0.5).unwrap());
    }
    s
}

fn set(events: &[(&str, Polarity)]) -> FeedbackSet {
    events.iter().map(|&(id, v)| FeedbackEvent::new(id, v)).collect()
}

#[test]
fn two_trainer_ensemble_by_hand() {
    // Trusts 0.9 and 0.5, uncertainties 0.2 and 0.25.
    let s = store(&[("a", 8.0, 0.0), ("b", 3.0, 3.0)]);
    let d = bwve_decide(&set(&[("a", Polarity::Positive), ("b", Polarity::Negative)]), &s).unwrap();
    let u = (0.2 + 0.25) / 2.0;
    let bayes = 0.9 * 0.5 / (0.9 * 0.5 + 0.1 * 0.5);
    let vote = 0.9 / 1.4;
    let want = (1.0 - u) * bayes + u * vote;
    assert!((d.p_pos - want).abs() < 1e-12);
    assert!((d.p_pos - 0.8421).abs() < 5e-5);
    assert!((d.confidence - 0.6843).abs() < 5e-5);
    assert_eq!(d.reward, Reward::Positive);
    assert!((review_probability(&set(&[("a", Polarity::Positive), ("b", Polarity::Negative)]), &s).unwrap() - (1.0 - d.confidence)).abs() < 1e-15);
}

#[test]
fn ensemble_endpoints_match_components() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let n = rng.random_range(1..6);
        let recs: Vec<(String, f64, f64)> = (0..n)
            .map(|i| (format!("x{i}"), rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)))
            .collect();
        let mut s = TrustStore::new();
        let mut events = FeedbackSet::new();
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (id, a, b) in &recs {
            let rec = TrustRecord::with_evidence(*a, *b, 0.5).unwrap();
            s.insert(id.as_str(), rec);
            let v = Polarity::from_bool(rng.random_bool(0.5));
            if v == Polarity::Positive {
                pos.push(rec.trustworthiness());
            } else {
                neg.push(rec.trustworthiness());
            }
            events.push(FeedbackEvent::new(id.as_str(), v));
        }
        let at0 = bwve_decide_with_uncertainty(&events, &s, 0.0).unwrap().posterior();
        let at1 = bwve_decide_with_uncertainty(&events, &s, 1.0).unwrap().posterior();
        assert_eq!(at0, bayes_posterior(&pos, &neg, 0.5));
        assert_eq!(at1, weighted_vote(&pos, &neg));
    }
}

proptest! {
    #[test]
    fn bayes_matches_direct_products(
        trusts in prop::collection::vec(0.0..=1.0f64, 1..=5),
        mask in 0u32..32,
        prior in 0.01..0.99f64,
    ) {
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        let (mut l_pos, mut l_neg) = (1.0, 1.0);
        for (i, &t) in trusts.iter().enumerate() {
            let c = t.clamp(1e-9, 1.0 - 1e-9);
            if mask & (1 << i) != 0 {
                pos.push(t);
                l_pos *= c;
                l_neg *= 1.0 - c;
            } else {
                neg.push(t);
                l_pos *= 1.0 - c;
                l_neg *= c;
            }
        }
        let want = prior * l_pos / (prior * l_pos + (1.0 - prior) * l_neg);
        let got = bayes_posterior(&pos, &neg, prior);
        prop_assert!((got.pos - want).abs() < 1e-9);
    }
}

#[test]
fn review_on_merged_set_matches_direct_decision() {
    let mut trust = store(&[("A", 2.0, 0.0), ("B", 1.0, 3.0)]);
    let key = (Pos::new(0, 0), Action::Right);
    let mut model = ReviewModel::new(ReviewPolicy::Review);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // First visit archives {A: pos}.
    model
        .resolve(key, &mut trust, |_| Ok(set(&[("A", Polarity::Positive)])), &mut rng)
        .unwrap();
    // A lone confident answer is never reviewed, so force the review path.
    let expected = bwve_decide(&set(&[("A", Polarity::Positive), ("B", Polarity::Negative)]), &trust).unwrap();
    let d = model.commit(key, set(&[("B", Polarity::Negative)]), &mut trust).unwrap();
    assert_eq!(d, expected);
}

/// Mean and variance of `clamp(N(mu, sigma), 0, 1)` by trapezoidal
/// integration of the Gaussian density.
fn rectified_moments(mu: f64, sigma: f64) -> (f64, f64) {
    let pdf = |x: f64| (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let integrate = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
        let n = 200_000;
        let h = (b - a) / n as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..n {
            s += f(a + i as f64 * h);
        }
        s * h
    };
    let hi = mu + 12.0 * sigma;
    let mass_above = integrate(&pdf, 1.0, hi);
    let m1 = integrate(&|x| x * pdf(x), 0.0, 1.0) + mass_above;
    let m2 = integrate(&|x| x * x * pdf(x), 0.0, 1.0) + mass_above;
    (m1, m2 - m1 * m1)
}

#[test]
fn rectified_gaussian_mean() {
    let n = 100_000;
    let pop = sample_population(n, 0.7, 0.5, 0.1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let mean = pop.iter().map(|p| p.true_trust).sum::<f64>() / n as f64;
    let (want, var) = rectified_moments(0.7, 0.5);
    let sigma = (var / n as f64).sqrt();
    assert!((mean - want).abs() < 3.0 * sigma, "{mean} vs {want} ± {}", 3.0 * sigma);
    // Point masses at the bounds are present.
    assert!(pop.iter().any(|p| p.true_trust == 1.0));
    assert!(pop.iter().any(|p| p.true_trust == 0.0));
}

#[test]
fn feedback_correctness_is_binomial() {
    let trainer = TrainerProfile::new("t", 0.8, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let correct = (0..n)
        .filter(|_| give_feedback(&trainer, Polarity::Positive, &mut rng).unwrap().value == Polarity::Positive)
        .count();
    let frac = correct as f64 / n as f64;
    let sigma = (0.8 * 0.2 / n as f64).sqrt();
    assert!((frac - 0.8).abs() < 3.0 * sigma, "{frac}");
}

#[test]
fn response_rate_is_binomial() {
    let trainer = TrainerProfile::new("t", 1.0, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 100_000;
    let answered = (0..n)
        .filter(|_| give_feedback(&trainer, Polarity::Negative, &mut rng).is_some())
        .count();
    let sigma = (0.1 * 0.9 / n as f64).sqrt();
    assert!((answered as f64 / n as f64 - 0.1).abs() < 3.0 * sigma);
}

/// Every split of ranks 1..=16 into two samples of eight, visited once per
/// attainable U value.
fn tie_free_splits_of_eight() -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..=64)
        .map(|u| {
            let mut a: Vec<f64> = (1..=8).map(f64::from).collect();
            let mut left = u;
            for x in a.iter_mut().rev() {
                let inc = left.min(8);
                *x += inc as f64;
                left -= inc;
            }
            let b = (1..=16).map(f64::from).filter(|x| !a.contains(x)).collect();
            (a, b)
        })
        .collect()
}

#[test]
fn normal_approximation_tracks_exact_at_eight() {
    let mut worst_tail: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for (a, b) in tie_free_splits_of_eight() {
        let exact = mann_whitney_exact(&a, &b);
        let approx = mann_whitney_normal(&a, &b);
        assert_eq!(exact.u, approx.u);
        let gap = (exact.p_two_sided - approx.p_two_sided).abs();
        worst = worst.max(gap);
        if exact.p_two_sided <= 0.25 {
            worst_tail = worst_tail.max(gap);
        }
    }
    assert!(worst_tail <= 0.01, "tail gap {worst_tail}");
    // Near p = 0.44 the continuity-corrected normal sits 0.0109 below the
    // exact value; this pins that known gap.
    assert!(worst <= 0.011, "worst gap {worst}");
}

#[test]
fn greedy_oracle_paths_on_open_grid_are_manhattan() {
    let map = GridMap::open(3, 3, Pos::new(2, 2)).unwrap();
    let q = optimal_q(&map, OracleRewards::default()).unwrap();
    for &p in map.start_pool() {
        let manhattan = (2 - p.x) + (2 - p.y);
        assert_eq!(q.greedy_path_len(&map, p, 50), Some(manhattan));
    }
}
