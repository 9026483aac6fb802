//! Interactive SARSA on the cliff world with simulated trainers.

use std::io;

use serde::Serialize;

use super::config::{GridExpConfig, Variant};
use super::output::{write_csv, Provenance};
use super::{
    closeness, key, pairwise_tests, run_cells, stream_rng, summary_rows, PairTest, SampleMap,
    Stream, SummaryRow,
};
use crate::aggregate::{apply_evidence_updates, bwve_decide, Method};
use crate::error::Result;
use crate::gridworld::{optimal_q, GridMap, OracleRewards};
use crate::memory::{ReviewModel, ReviewPolicy};
use crate::sarsa::{run_episode, EpisodeEnd, QTable, StepFeedback};
use crate::sim_trainers::{
    fresh_store, gather, gridworld_truth, sample_population, TrainerProfile,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRunResult {
    pub variant: Variant,
    pub trust_mean: f64,
    pub trust_std: f64,
    pub repeat: usize,
    pub seed: u64,
    pub closeness: f64,
    pub best_solution: bool,
    pub n_queries: usize,
    pub n_steps: usize,
    pub n_episodes: usize,
}

/// Per-episode record of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub variant: Variant,
    pub trust_mean: f64,
    pub repeat: usize,
    pub episode: usize,
    pub start_x: usize,
    pub start_y: usize,
    pub steps: usize,
    pub queries: usize,
    pub end: EpisodeEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridworldResults {
    pub config: GridExpConfig,
    pub rows: Vec<GridRunResult>,
    pub episodes: Vec<EpisodeSummary>,
}

/// Runs every (variant, mean, repeat) cell.
///
/// The multi-trainer variants of one (mean, repeat) setting share the same
/// trainer population.
pub fn run_gridworld_experiment(config: &GridExpConfig, jobs: usize) -> Result<GridworldResults> {
    config.validate()?;
    let map = config.load_map()?;
    let optimal = optimal_q(&map, OracleRewards::default())?;
    let means = config.means()?;
    let mut cells = Vec::new();
    for &variant in &config.variants {
        for &mean in &means {
            for repeat in 0..config.repeats {
                cells.push((variant, mean, repeat));
            }
        }
    }
    let runs = run_cells(cells.len(), jobs, |i| {
        let (variant, mean, repeat) = cells[i];
        run_gridworld_cell(config, &map, &optimal, variant, mean, repeat)
    })?;
    let mut rows = Vec::with_capacity(runs.len());
    let mut episodes = Vec::new();
    for (row, eps) in runs {
        rows.push(row);
        episodes.extend(eps);
    }
    Ok(GridworldResults {
        config: config.clone(),
        rows,
        episodes,
    })
}

fn population(
    config: &GridExpConfig,
    variant: Variant,
    mean: f64,
    setting: &[u64],
) -> Result<Vec<TrainerProfile>> {
    if variant == Variant::SingleTrainer {
        return Ok(vec![TrainerProfile::new("t00", mean, config.response_prob)]);
    }
    let mut rng = stream_rng(config.seed, Stream::Population, setting);
    sample_population(
        config.n_trainers,
        mean,
        config.trust_std,
        config.response_prob,
        &mut rng,
    )
}

/// Trains one agent and evaluates it against the oracle.
pub fn run_gridworld_cell(
    config: &GridExpConfig,
    map: &GridMap,
    optimal: &QTable,
    variant: Variant,
    mean: f64,
    repeat: usize,
) -> Result<(GridRunResult, Vec<EpisodeSummary>)> {
    let setting = [mean.to_bits(), config.trust_std.to_bits(), repeat as u64];
    // Variants share streams (common random numbers); their trajectories
    // still diverge as soon as their rewards differ.
    let mut agent_rng = stream_rng(config.seed, Stream::Agent, &setting);
    let mut fb_rng = stream_rng(config.seed, Stream::Feedback, &setting);
    let mut review_rng = stream_rng(config.seed, Stream::Review, &setting);

    let trainers = population(config, variant, mean, &setting)?;
    let mut trust = fresh_store(&trainers, config.base_rate);
    let mut model = match variant {
        Variant::NoReview => Some(ReviewModel::new(ReviewPolicy::FirstDecision)),
        Variant::Review => Some(ReviewModel::new(ReviewPolicy::Review)),
        _ => None,
    };

    let mut source = |s, a| -> Result<StepFeedback> {
        let truth = gridworld_truth(optimal, s, a);
        match (&mut model, variant) {
            (Some(model), _) => {
                let r = model.resolve(
                    (s, a),
                    &mut trust,
                    |_| Ok(gather(&trainers, truth, &mut fb_rng)),
                    &mut review_rng,
                )?;
                Ok(StepFeedback {
                    decision: r.decision,
                    queried: r.queried,
                })
            }
            (None, Variant::SingleTrainer) => {
                let fb = gather(&trainers, truth, &mut fb_rng);
                Ok(StepFeedback {
                    decision: Method::Majority.decide(&fb, &trust)?,
                    queried: true,
                })
            }
            (None, _) => {
                let fb = gather(&trainers, truth, &mut fb_rng);
                let decision = bwve_decide(&fb, &trust)?;
                apply_evidence_updates(&decision, &fb, &mut trust)?;
                Ok(StepFeedback {
                    decision,
                    queried: true,
                })
            }
        }
    };

    let learner = &config.learner;
    let mut q = QTable::zeros(map);
    let mut episodes = Vec::new();
    let (mut n_steps, mut n_queries) = (0, 0);
    for ep in 0..config.max_episodes {
        let start = map.sample_start(&mut agent_rng)?;
        let log = run_episode(
            map,
            &mut q,
            learner,
            learner.epsilon_at(ep),
            start,
            config.max_actions,
            &mut source,
            &mut agent_rng,
        )?;
        n_steps += log.n_steps();
        n_queries += log.queries;
        episodes.push(EpisodeSummary {
            variant,
            trust_mean: mean,
            repeat,
            episode: ep,
            start_x: start.x,
            start_y: start.y,
            steps: log.n_steps(),
            queries: log.queries,
            end: log.end,
        });
        if (ep + 1) % config.check_every == 0 && q.is_best_solution(map, config.max_actions) {
            break;
        }
    }

    let row = GridRunResult {
        variant,
        trust_mean: mean,
        trust_std: config.trust_std,
        repeat,
        seed: config.seed,
        closeness: closeness(&q, optimal, map, config.max_actions),
        best_solution: q.is_best_solution(map, config.max_actions),
        n_queries,
        n_steps,
        n_episodes: episodes.len(),
    };
    Ok((row, episodes))
}

impl GridworldResults {
    pub fn provenance(&self, kind: &str) -> Provenance {
        Provenance::new(kind, &self.config, self.config.seed)
    }

    fn order(&self) -> Vec<String> {
        self.config.variants.iter().map(|v| v.to_string()).collect()
    }

    /// Samples of one metric per (mean, std, variant). Metrics:
    /// `closeness`, `best_solution`, `n_queries`, `n_steps`, `n_episodes`.
    pub fn samples(&self, metric: &str) -> SampleMap {
        let mut map = SampleMap::new();
        for r in &self.rows {
            let v = match metric {
                "closeness" => r.closeness,
                "best_solution" => f64::from(u8::from(r.best_solution)),
                "n_queries" => r.n_queries as f64,
                "n_steps" => r.n_steps as f64,
                "n_episodes" => r.n_episodes as f64,
                other => panic!("unknown metric `{other}`"),
            };
            map.entry(key(r.trust_mean, r.trust_std, r.variant.as_str()))
                .or_default()
                .push(v);
        }
        map
    }

    /// Mean of `metric` for `variant` at trust mean `mean`.
    pub fn mean_of(&self, metric: &str, variant: Variant, mean: f64) -> Option<f64> {
        self.samples(metric)
            .get(&key(mean, self.config.trust_std, variant.as_str()))
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub const METRICS: [&'static str; 4] = ["closeness", "best_solution", "n_queries", "n_steps"];

    pub fn summary(&self) -> Vec<SummaryRow> {
        let order = self.order();
        Self::METRICS
            .iter()
            .flat_map(|m| summary_rows(m, &self.samples(m), &order))
            .collect()
    }

    pub fn significance(&self, metric: &str, alpha: f64) -> Vec<PairTest> {
        pairwise_tests(&self.samples(metric), &self.order(), alpha)
    }

    pub fn render_significance(&self, metric: &str, alpha: f64) -> String {
        super::render_significance(&self.significance(metric, alpha), &self.order(), metric)
    }

    pub fn write_results<W: io::Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.provenance("gridworld-results"), &self.rows)
    }

    pub fn write_summary<W: io::Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.provenance("gridworld-summary"), &self.summary())
    }

    pub fn write_episodes<W: io::Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.provenance("gridworld-episodes"), &self.episodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::Grid;

    fn small() -> GridExpConfig {
        GridExpConfig {
            max_episodes: 40,
            repeats: 2,
            trust_means: Grid::List(vec![0.8]),
            ..Default::default()
        }
    }

    #[test]
    fn unlimited_asks_every_step() {
        let res = run_gridworld_experiment(
            &GridExpConfig {
                variants: vec![Variant::Unlimited],
                ..small()
            },
            0,
        )
        .unwrap();
        for r in &res.rows {
            assert_eq!(r.n_queries, r.n_steps);
        }
    }

    #[test]
    fn query_ordering_per_run() {
        let res = run_gridworld_experiment(&small(), 0).unwrap();
        for r in &res.rows {
            assert!((0.0..=1.0).contains(&r.closeness));
            assert!(r.n_queries <= r.n_steps);
            assert_eq!(
                r.n_steps,
                res.episodes
                    .iter()
                    .filter(|e| e.variant == r.variant && e.repeat == r.repeat)
                    .map(|e| e.steps)
                    .sum::<usize>()
            );
        }
    }

    #[test]
    fn variant_filter_reproduces_rows() {
        let full = run_gridworld_experiment(&small(), 2).unwrap();
        let only = run_gridworld_experiment(
            &GridExpConfig {
                variants: vec![Variant::Review],
                ..small()
            },
            1,
        )
        .unwrap();
        let expected: Vec<_> = full
            .rows
            .iter()
            .filter(|r| r.variant == Variant::Review)
            .cloned()
            .collect();
        assert_eq!(only.rows, expected);
    }
}
