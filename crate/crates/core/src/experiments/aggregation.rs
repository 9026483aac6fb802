//! Question-answering study: many trainers, sparse responses, binary truth.

use std::io;

use rand::Rng;
use serde::Serialize;

use super::config::AggExpConfig;
use super::output::{write_csv, Provenance};
use super::{key, pairwise_tests, run_cells, stream_rng, summary_rows, PairTest, SampleMap, Stream, SummaryRow};
use crate::aggregate::{apply_evidence_updates, bwve_decide, Method};
use crate::error::Result;
use crate::feedback::Polarity;
use crate::sim_trainers::{fresh_store, gather, sample_population};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggRunResult {
    pub method: Method,
    pub trust_mean: f64,
    pub trust_std: f64,
    pub repeat: usize,
    pub seed: u64,
    /// Correct decisions over all questions; ties and silent questions are
    /// settled by a fair coin.
    pub accuracy: f64,
    /// Correct decisions over questions with at least one response.
    pub answered_accuracy: f64,
    pub n_questions: usize,
    pub n_answered: usize,
    /// Tied decisions among answered questions.
    pub n_ties: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregationResults {
    pub config: AggExpConfig,
    pub rows: Vec<AggRunResult>,
}

struct Cell {
    method: Method,
    mean: f64,
    std: f64,
    repeat: usize,
}

/// Runs every (method, std, mean, repeat) cell of the study.
///
/// Within one (mean, std, repeat) setting all methods see the same
/// population, questions and responses, so method comparisons are paired.
/// The trust model is shared: evidence always follows the ensemble's
/// decision, and each trust-using method reads the resulting trust values
/// through its own decision rule.
pub fn run_aggregation_experiment(config: &AggExpConfig, jobs: usize) -> Result<AggregationResults> {
    config.validate()?;
    let means = config.means()?;
    let mut cells = Vec::new();
    for &method in &config.methods {
        for &std in &config.trust_stds {
            for &mean in &means {
                for repeat in 0..config.repeats {
                    cells.push(Cell {
                        method,
                        mean,
                        std,
                        repeat,
                    });
                }
            }
        }
    }
    let rows = run_cells(cells.len(), jobs, |i| run_cell(config, &cells[i]))?;
    Ok(AggregationResults {
        config: config.clone(),
        rows,
    })
}

fn run_cell(config: &AggExpConfig, cell: &Cell) -> Result<AggRunResult> {
    let setting = [cell.mean.to_bits(), cell.std.to_bits(), cell.repeat as u64];
    let mut pop_rng = stream_rng(config.seed, Stream::Population, &setting);
    let mut fb_rng = stream_rng(config.seed, Stream::Feedback, &setting);
    let mut coin = stream_rng(
        config.seed,
        Stream::TieBreak,
        &[cell.method as u64, setting[0], setting[1], setting[2]],
    );

    let population = sample_population(
        config.n_trainers,
        cell.mean,
        cell.std,
        config.response_prob,
        &mut pop_rng,
    )?;
    let mut trust = fresh_store(&population, config.base_rate);

    let (mut correct, mut answered, mut answered_correct, mut ties) = (0, 0, 0, 0);
    for _ in 0..config.n_questions {
        let truth = Polarity::from_bool(fb_rng.random_bool(0.5));
        let feedback = gather(&population, truth, &mut fb_rng);
        let decision = cell.method.decide(&feedback, &trust)?;
        let right = match decision.reward.polarity() {
            Some(p) => p == truth,
            None => {
                if !feedback.is_empty() {
                    ties += 1;
                }
                coin.random_bool(0.5)
            }
        };
        correct += usize::from(right);
        if !feedback.is_empty() {
            answered += 1;
            answered_correct += usize::from(right);
        }
        if cell.method.uses_trust() {
            let ensemble = if cell.method == Method::Bwve {
                decision
            } else {
                bwve_decide(&feedback, &trust)?
            };
            apply_evidence_updates(&ensemble, &feedback, &mut trust)?;
        }
    }
    Ok(AggRunResult {
        method: cell.method,
        trust_mean: cell.mean,
        trust_std: cell.std,
        repeat: cell.repeat,
        seed: config.seed,
        accuracy: correct as f64 / config.n_questions as f64,
        answered_accuracy: if answered == 0 {
            f64::NAN
        } else {
            answered_correct as f64 / answered as f64
        },
        n_questions: config.n_questions,
        n_answered: answered,
        n_ties: ties,
    })
}

impl AggregationResults {
    pub fn provenance(&self, kind: &str) -> Provenance {
        Provenance::new(kind, &self.config, self.config.seed)
    }

    fn order(&self) -> Vec<String> {
        self.config.methods.iter().map(|m| m.to_string()).collect()
    }

    /// Accuracy samples per (mean, std, method).
    pub fn samples(&self) -> SampleMap {
        let mut map = SampleMap::new();
        for r in &self.rows {
            map.entry(key(r.trust_mean, r.trust_std, r.method.as_str()))
                .or_default()
                .push(r.accuracy);
        }
        map
    }

    /// Mean accuracy of `method` at one setting, if it was run.
    pub fn mean_accuracy(&self, method: Method, mean: f64, std: f64) -> Option<f64> {
        self.samples()
            .get(&key(mean, std, method.as_str()))
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        summary_rows("accuracy", &self.samples(), &self.order())
    }

    pub fn significance(&self, alpha: f64) -> Vec<PairTest> {
        pairwise_tests(&self.samples(), &self.order(), alpha)
    }

    pub fn render_significance(&self, alpha: f64) -> String {
        super::render_significance(&self.significance(alpha), &self.order(), "accuracy")
    }

    pub fn write_results<W: io::Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.provenance("aggregate-results"), &self.rows)
    }

    pub fn write_summary<W: io::Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.provenance("aggregate-summary"), &self.summary())
    }
}
