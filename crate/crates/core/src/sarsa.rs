//! Tabular interactive SARSA.
//!
//! The agent never sees environment rewards: every step's reward comes from
//! a [`RewardSource`], normally the aggregated trainer decision.

use std::io;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{Decision, Reward};
use crate::error::{Error, Result};
use crate::gridworld::{Action, GridMap, Outcome, Pos};

/// Dense action-value table over every cell of a map.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct QRow {
    state_x: usize,
    state_y: usize,
    action: Action,
    value: f64,
}

impl QTable {
    pub fn zeros(map: &GridMap) -> Self {
        Self::with_dims(map.width(), map.height())
    }

    pub fn with_dims(width: usize, height: usize) -> Self {
        QTable {
            width,
            height,
            values: vec![0.0; width * height * Action::ALL.len()],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn slot(&self, s: Pos, a: Action) -> usize {
        debug_assert!(s.x < self.width && s.y < self.height);
        (s.y * self.width + s.x) * Action::ALL.len() + a.index()
    }

    pub fn get(&self, s: Pos, a: Action) -> f64 {
        self.values[self.slot(s, a)]
    }

    pub fn set(&mut self, s: Pos, a: Action, v: f64) {
        let i = self.slot(s, a);
        self.values[i] = v;
    }

    pub fn row(&self, s: Pos) -> [f64; 4] {
        let i = self.slot(s, Action::Up);
        [
            self.values[i],
            self.values[i + 1],
            self.values[i + 2],
            self.values[i + 3],
        ]
    }

    pub fn max_value(&self, s: Pos) -> f64 {
        self.row(s).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax with ties broken by [`Action::ALL`] order.
    pub fn greedy_action(&self, s: Pos) -> Action {
        let row = self.row(s);
        let mut best = 0;
        for i in 1..row.len() {
            if row[i] > row[best] {
                best = i;
            }
        }
        Action::from_index(best)
    }

    /// Steps the deterministic greedy policy takes from `start` to the goal,
    /// or `None` if it falls off a cliff or exceeds `max_steps`.
    pub fn greedy_path_len(&self, map: &GridMap, start: Pos, max_steps: usize) -> Option<usize> {
        let mut s = start;
        for n in 1..=max_steps {
            let (next, outcome) = map.step(s, self.greedy_action(s));
            match outcome {
                Outcome::Goal => return Some(n),
                Outcome::Cliff => return None,
                Outcome::Continue => s = next,
            }
        }
        None
    }

    /// Whether the greedy policy follows a shortest safe path from every
    /// start cell.
    pub fn is_best_solution(&self, map: &GridMap, max_steps: usize) -> bool {
        map.start_pool().iter().all(|&p| {
            let want = map.shortest_path_len(p);
            want.is_some() && self.greedy_path_len(map, p, max_steps) == want
        })
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for y in 0..self.height {
            for x in 0..self.width {
                for a in Action::ALL {
                    w.serialize(QRow {
                        state_x: x,
                        state_y: y,
                        action: a,
                        value: self.get(Pos::new(x, y), a),
                    })?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(reader: R, width: usize, height: usize) -> Result<Self> {
        let mut q = QTable::with_dims(width, height);
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        for row in r.deserialize() {
            let row: QRow = row?;
            if row.state_x >= width || row.state_y >= height || !row.value.is_finite() {
                return Err(Error::MalformedTable {
                    path: "<q-table>".into(),
                    reason: format!(
                        "row ({}, {}, {}) out of range or non-finite",
                        row.state_x, row.state_y, row.action
                    ),
                });
            }
            q.set(Pos::new(row.state_x, row.state_y), row.action, row.value);
        }
        Ok(q)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Learner hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub r_pos: f64,
    pub r_neg: f64,
    /// Reward for tied (or empty) decisions.
    pub r_tie: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            learning_rate: 0.1,
            gamma: 0.9,
            epsilon_start: 0.5,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 300,
            r_pos: 1.0,
            r_neg: -1.0,
            r_tie: 0.0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, why: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("learner.{field}"), why))
            }
        };
        check(
            self.learning_rate > 0.0 && self.learning_rate <= 1.0,
            "learning_rate",
            "must lie in (0, 1]",
        )?;
        check(self.gamma > 0.0 && self.gamma < 1.0, "gamma", "must lie in (0, 1)")?;
        check(
            (0.0..=1.0).contains(&self.epsilon_start),
            "epsilon_start",
            "must lie in [0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.epsilon_end) && self.epsilon_end <= self.epsilon_start,
            "epsilon_end",
            "must lie in [0, epsilon_start]",
        )?;
        check(
            self.r_pos.is_finite() && self.r_neg.is_finite() && self.r_tie.is_finite(),
            "r_pos",
            "rewards must be finite",
        )
    }

    /// Linearly decayed exploration rate for a 0-based episode index.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        if self.epsilon_decay_episodes == 0 || episode >= self.epsilon_decay_episodes {
            return self.epsilon_end;
        }
        let frac = episode as f64 / self.epsilon_decay_episodes as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    pub fn reward_value(&self, reward: Reward) -> f64 {
        match reward {
            Reward::Positive => self.r_pos,
            Reward::Negative => self.r_neg,
            Reward::Tie => self.r_tie,
        }
    }
}

/// Epsilon-greedy action choice; greedy ties are broken uniformly.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, s: Pos, epsilon: f64, rng: &mut R) -> Action {
    if rng.random::<f64>() < epsilon {
        return Action::from_index(rng.random_range(0..Action::ALL.len()));
    }
    let row = q.row(s);
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ties = [0usize; 4];
    let mut n = 0;
    for (i, &v) in row.iter().enumerate() {
        if v == best {
            ties[n] = i;
            n += 1;
        }
    }
    let pick = if n == 1 { 0 } else { rng.random_range(0..n) };
    Action::from_index(ties[pick])
}

/// One SARSA backup. `next` is `None` when `s'` is terminal.
pub fn sarsa_update(
    q: &mut QTable,
    s: Pos,
    a: Action,
    r: f64,
    next: Option<(Pos, Action)>,
    config: &LearnerConfig,
) {
    let bootstrap = next.map_or(0.0, |(s2, a2)| q.get(s2, a2));
    let old = q.get(s, a);
    q.set(
        s,
        a,
        old + config.learning_rate * (r + config.gamma * bootstrap - old),
    );
}

/// A reward decision for one step, and whether trainers were asked for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFeedback {
    pub decision: Decision,
    pub queried: bool,
}

/// Supplies the interactive reward for a state-action pair.
pub trait RewardSource {
    fn feedback(&mut self, state: Pos, action: Action) -> Result<StepFeedback>;
}

impl<F> RewardSource for F
where
    F: FnMut(Pos, Action) -> Result<StepFeedback>,
{
    fn feedback(&mut self, state: Pos, action: Action) -> Result<StepFeedback> {
        self(state, action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeEnd {
    Goal,
    Cliff,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub state: Pos,
    pub action: Action,
    pub reward: Reward,
    pub queried: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeLog {
    pub start: Pos,
    pub steps: Vec<StepRecord>,
    pub queries: usize,
    pub end: EpisodeEnd,
}

impl EpisodeLog {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }
}

/// Plays one episode from `start`, learning online. At most `max_actions`
/// actions are taken; the episode is truncated after that.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<R, S>(
    map: &GridMap,
    q: &mut QTable,
    config: &LearnerConfig,
    epsilon: f64,
    start: Pos,
    max_actions: usize,
    source: &mut S,
    rng: &mut R,
) -> Result<EpisodeLog>
where
    R: Rng + ?Sized,
    S: RewardSource + ?Sized,
{
    let mut log = EpisodeLog {
        start,
        steps: Vec::new(),
        queries: 0,
        end: EpisodeEnd::Truncated,
    };
    if max_actions == 0 {
        return Ok(log);
    }
    let mut s = start;
    let mut a = select_action(q, s, epsilon, rng);
    loop {
        let fb = source.feedback(s, a)?;
        let r = config.reward_value(fb.decision.reward);
        log.queries += usize::from(fb.queried);
        log.steps.push(StepRecord {
            state: s,
            action: a,
            reward: fb.decision.reward,
            queried: fb.queried,
        });
        let (next, outcome) = map.step(s, a);
        if outcome.is_terminal() {
            sarsa_update(q, s, a, r, None, config);
            log.end = match outcome {
                Outcome::Goal => EpisodeEnd::Goal,
                _ => EpisodeEnd::Cliff,
            };
            return Ok(log);
        }
        let a_next = select_action(q, next, epsilon, rng);
        sarsa_update(q, s, a, r, Some((next, a_next)), config);
        if log.steps.len() >= max_actions {
            return Ok(log);
        }
        s = next;
        a = a_next;
    }
}
