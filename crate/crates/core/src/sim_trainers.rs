//! Simulated trainer populations with known ground-truth trust.

use std::io;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{FeedbackEvent, FeedbackSet, Polarity, TrainerId};
use crate::gridworld::{is_best_action, Action, Pos};
use crate::sarsa::QTable;
use crate::trust::TrustStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerProfile {
    pub id: TrainerId,
    /// Probability that a given answer is correct.
    pub true_trust: f64,
    /// Probability of answering a query at all.
    pub response_prob: f64,
}

impl TrainerProfile {
    pub fn new(id: impl Into<TrainerId>, true_trust: f64, response_prob: f64) -> Self {
        TrainerProfile {
            id: id.into(),
            true_trust,
            response_prob,
        }
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")))
    }
}

/// Draws `n` trainers whose trust is `Normal(mean, std)` clamped to [0, 1].
/// With `std == 0` no random numbers are consumed.
pub fn sample_population<R: Rng + ?Sized>(
    n: usize,
    mean: f64,
    std: f64,
    response_prob: f64,
    rng: &mut R,
) -> Result<Vec<TrainerProfile>> {
    if n == 0 {
        return Err(Error::InvalidArgument("population size must be positive".into()));
    }
    check_unit("mean", mean)?;
    check_unit("response_prob", response_prob)?;
    if !(std.is_finite() && std >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "std must be finite and non-negative, got {std}"
        )));
    }
    let width = n.saturating_sub(1).to_string().len().max(2);
    let normal = (std > 0.0).then(|| Normal::new(mean, std).expect("checked parameters"));
    Ok((0..n)
        .map(|i| {
            let trust = match &normal {
                Some(d) => d.sample(rng).clamp(0.0, 1.0),
                None => mean,
            };
            TrainerProfile::new(format!("t{i:0width$}"), trust, response_prob)
        })
        .collect())
}

/// One simulated answer: `None` if the trainer stays silent.
pub fn give_feedback<R: Rng + ?Sized>(
    profile: &TrainerProfile,
    correct: Polarity,
    rng: &mut R,
) -> Option<FeedbackEvent> {
    if !rng.random_bool(profile.response_prob) {
        return None;
    }
    let value = if rng.random_bool(profile.true_trust) {
        correct
    } else {
        correct.flip()
    };
    Some(FeedbackEvent::new(profile.id.clone(), value))
}

/// Asks every trainer once, in population order.
pub fn gather<R: Rng + ?Sized>(
    population: &[TrainerProfile],
    correct: Polarity,
    rng: &mut R,
) -> FeedbackSet {
    population
        .iter()
        .filter_map(|p| give_feedback(p, correct, rng))
        .collect()
}

/// The correct answer in the grid world: positive iff `action` is optimal.
pub fn gridworld_truth(optimal: &QTable, state: Pos, action: Action) -> Polarity {
    Polarity::from_bool(is_best_action(optimal, state, action))
}

/// A trust store with a fresh record for every trainer.
pub fn fresh_store(population: &[TrainerProfile], base_rate: f64) -> TrustStore {
    let mut store = TrustStore::with_base_rate(base_rate);
    for p in population {
        store.register(p.id.clone());
    }
    store
}

#[derive(Serialize)]
struct PopulationRow<'a> {
    id: &'a str,
    true_trust: f64,
}

pub fn write_population_csv<W: io::Write>(population: &[TrainerProfile], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in population {
        w.serialize(PopulationRow {
            id: p.id.as_str(),
            true_trust: p.true_trust,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{optimal_q, GridMap, OracleRewards};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degenerate_populations() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for mean in [1.0, 0.51] {
            let pop = sample_population(50, mean, 0.0, 0.1, &mut rng).unwrap();
            assert_eq!(pop.len(), 50);
            assert!(pop.iter().all(|p| p.true_trust == mean));
        }
        assert!(sample_population(0, 0.5, 0.1, 0.1, &mut rng).is_err());
        assert!(sample_population(3, 1.2, 0.1, 0.1, &mut rng).is_err());
        assert!(sample_population(3, 0.5, -0.1, 0.1, &mut rng).is_err());
    }

    #[test]
    fn ids_are_unique_and_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pop = sample_population(120, 0.5, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(pop[0].id.as_str(), "t000");
        let ids: Vec<_> = pop.iter().map(|p| p.id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let a = sample_population(20, 0.7, 0.3, 0.1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_population(20, 0.7, 0.3, 0.1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| (0.0..=1.0).contains(&p.true_trust)));
    }

    #[test]
    fn feedback_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let perfect = TrainerProfile::new("p", 1.0, 1.0);
        let silent = TrainerProfile::new("s", 1.0, 0.0);
        for _ in 0..1000 {
            let e = give_feedback(&perfect, Polarity::Negative, &mut rng).unwrap();
            assert_eq!(e.value, Polarity::Negative);
            assert!(give_feedback(&silent, Polarity::Positive, &mut rng).is_none());
        }
    }

    #[test]
    fn truth_marks_best_actions() {
        let map = GridMap::open(4, 4, Pos::new(3, 3)).unwrap();
        let q = optimal_q(&map, OracleRewards::default()).unwrap();
        // Both Down and Right are optimal from the opposite corner.
        assert_eq!(gridworld_truth(&q, Pos::new(0, 0), Action::Right), Polarity::Positive);
        assert_eq!(gridworld_truth(&q, Pos::new(0, 0), Action::Down), Polarity::Positive);
        assert_eq!(gridworld_truth(&q, Pos::new(0, 0), Action::Up), Polarity::Negative);
    }

    #[test]
    fn population_csv() {
        let pop = vec![TrainerProfile::new("t00", 0.25, 0.1)];
        let mut buf = Vec::new();
        write_population_csv(&pop, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "id,true_trust\nt00,0.25\n");
    }
}
