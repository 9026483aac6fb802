//! Simulated studies: feedback aggregation accuracy and interactive
//! grid-world training.
//!
//! Every run is a cell `(method or variant, trust mean, trust std, repeat)`.
//! Cells run in parallel and own their random streams, derived from the
//! config seed and the cell's identity, so results do not depend on thread
//! count or on which other cells are in the config.

mod aggregation;
pub mod config;
mod gridworld_exp;
pub mod output;
pub mod stats;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gridworld::GridMap;
use crate::sarsa::QTable;

pub use aggregation::{run_aggregation_experiment, AggRunResult, AggregationResults};
pub use config::{AggExpConfig, ExperimentFile, GridExpConfig, Grid, Variant};
pub use gridworld_exp::{
    run_gridworld_cell, run_gridworld_experiment, EpisodeSummary, GridRunResult, GridworldResults,
};
pub use output::{config_hash, write_csv, Provenance};
pub use stats::{mann_whitney_u, summarize, MannWhitney, Summary};

/// Purpose tags that keep per-cell random streams apart.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub(crate) enum Stream {
    Population = 1,
    Feedback = 2,
    TieBreak = 3,
    Agent = 4,
    Review = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A ChaCha stream keyed by the seed and an identity path.
pub(crate) fn stream_rng(seed: u64, purpose: Stream, parts: &[u64]) -> ChaCha8Rng {
    let mut id = splitmix64(purpose as u64);
    for &p in parts {
        id = splitmix64(id ^ p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs `f` over `0..n` with `jobs` threads (0 = all cores) and returns
/// results in index order.
pub fn run_cells<T, F>(n: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(&f).collect())
}

/// Mean over start cells of `optimal length / greedy length`; a cell whose
/// greedy path fails within `max_actions` scores 0.
pub fn closeness(learned: &QTable, optimal: &QTable, map: &GridMap, max_actions: usize) -> f64 {
    let pool = map.start_pool();
    if pool.is_empty() {
        return 0.0;
    }
    let total: f64 = pool
        .iter()
        .map(|&s| {
            let Some(opt) = optimal
                .greedy_path_len(map, s, max_actions)
                .or_else(|| map.shortest_path_len(s))
            else {
                return 0.0;
            };
            match learned.greedy_path_len(map, s, max_actions) {
                Some(len) => opt as f64 / len as f64,
                None => 0.0,
            }
        })
        .sum();
    total / pool.len() as f64
}

/// One row of a summary table: a metric aggregated over repeats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub group: String,
    pub trust_mean: f64,
    pub trust_std: f64,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Samples of one metric keyed by (trust mean, trust std, group).
pub(crate) type SampleMap = BTreeMap<(u64, u64, String), Vec<f64>>;

pub(crate) fn key(mean: f64, std: f64, group: &str) -> (u64, u64, String) {
    (mean.to_bits(), std.to_bits(), group.to_string())
}

pub(crate) fn summary_rows(metric: &str, samples: &SampleMap, order: &[String]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for group in order {
        for ((m, s, g), values) in samples {
            if g != group {
                continue;
            }
            let sum = summarize(values);
            rows.push(SummaryRow {
                group: g.clone(),
                trust_mean: f64::from_bits(*m),
                trust_std: f64::from_bits(*s),
                metric: metric.to_string(),
                n: sum.n,
                mean: sum.mean,
                std_dev: sum.std_dev,
                ci_low: sum.ci_low,
                ci_high: sum.ci_high,
            });
        }
    }
    rows
}

/// A pairwise Mann-Whitney comparison within one (mean, std) setting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairTest {
    pub trust_mean: f64,
    pub trust_std: f64,
    pub a: String,
    pub b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub u: f64,
    pub p: f64,
    pub significant: bool,
}

/// All pairwise tests between groups at each setting, judged at the
/// Bonferroni-corrected level `alpha / pairs`.
pub fn pairwise_tests(samples: &SampleMap, order: &[String], alpha: f64) -> Vec<PairTest> {
    let pairs = order.len() * order.len().saturating_sub(1) / 2;
    let level = stats::bonferroni_alpha(alpha, pairs);
    let mut settings: Vec<(u64, u64)> = samples.keys().map(|(m, s, _)| (*m, *s)).collect();
    settings.dedup();
    let mut out = Vec::new();
    for (m, s) in settings {
        for (i, a) in order.iter().enumerate() {
            for b in &order[i + 1..] {
                let (Some(xa), Some(xb)) = (
                    samples.get(&(m, s, a.clone())),
                    samples.get(&(m, s, b.clone())),
                ) else {
                    continue;
                };
                let t = mann_whitney_u(xa, xb);
                out.push(PairTest {
                    trust_mean: f64::from_bits(m),
                    trust_std: f64::from_bits(s),
                    a: a.clone(),
                    b: b.clone(),
                    mean_a: summarize(xa).mean,
                    mean_b: summarize(xb).mean,
                    u: t.u,
                    p: t.p_two_sided,
                    significant: t.p_two_sided < level,
                });
            }
        }
    }
    out
}

/// Text matrix of significant wins: entry (row, col) counts settings where
/// the row group's mean beats the column group's at the corrected level.
pub fn render_significance(tests: &[PairTest], order: &[String], metric: &str) -> String {
    let pairs = order.len() * order.len().saturating_sub(1) / 2;
    let settings = tests.len() / pairs.max(1);
    let mut wins: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for t in tests.iter().filter(|t| t.significant) {
        let (w, l) = if t.mean_a >= t.mean_b { (&t.a, &t.b) } else { (&t.b, &t.a) };
        *wins.entry((w.as_str(), l.as_str())).or_default() += 1;
    }
    let width = order.iter().map(String::len).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "significant wins on {metric} (row beats column, Mann-Whitney U, Bonferroni over {pairs} pairs, {settings} settings)"
    );
    let _ = write!(out, "{:width$}", "");
    for g in order {
        let _ = write!(out, " {g:>width$}");
    }
    out.push('\n');
    for r in order {
        let _ = write!(out, "{r:width$}");
        for c in order {
            if r == c {
                let _ = write!(out, " {:>width$}", "-");
            } else {
                let n = wins.get(&(r.as_str(), c.as_str())).copied().unwrap_or(0);
                let _ = write!(out, " {n:>width$}");
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{optimal_q, Action, OracleRewards, Pos};
    use rand::Rng;

    #[test]
    fn streams_differ_by_purpose_and_parts() {
        let draw = |p, parts: &[u64]| stream_rng(1, p, parts).random::<u64>();
        assert_eq!(draw(Stream::Agent, &[1, 2]), draw(Stream::Agent, &[1, 2]));
        assert_ne!(draw(Stream::Agent, &[1, 2]), draw(Stream::Review, &[1, 2]));
        assert_ne!(draw(Stream::Agent, &[1, 2]), draw(Stream::Agent, &[2, 1]));
    }

    #[test]
    fn cells_come_back_in_order() {
        let out = run_cells(100, 4, |i| Ok(i * 2)).unwrap();
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
        let err = run_cells(10, 2, |i| {
            if i == 7 {
                Err(Error::Query("boom".into()))
            } else {
                Ok(i)
            }
        });
        assert!(err.is_err());
    }

    #[test]
    fn closeness_examples() {
        let map = GridMap::default_map();
        let opt = optimal_q(&map, OracleRewards::default()).unwrap();
        assert_eq!(closeness(&opt, &opt, &map, 200), 1.0);
        // All-zero table: greedy always picks Up and never arrives.
        assert_eq!(closeness(&QTable::zeros(&map), &opt, &map, 200), 0.0);
    }

    #[test]
    fn closeness_detour_by_hand() {
        // 2×2, goal bottom-right. Learned policy: (0,1) up, (0,0) right,
        // (1,0) down. Lengths 3, 2, 1 against optimal 1, 2, 1.
        let map = GridMap::open(2, 2, Pos::new(1, 1)).unwrap();
        let opt = optimal_q(&map, OracleRewards::default()).unwrap();
        let mut q = QTable::zeros(&map);
        q.set(Pos::new(0, 1), Action::Up, 1.0);
        q.set(Pos::new(0, 0), Action::Right, 1.0);
        q.set(Pos::new(1, 0), Action::Down, 1.0);
        let c = closeness(&q, &opt, &map, 10);
        assert!((c - 7.0 / 9.0).abs() < 1e-12, "{c}");
    }
}
