//! Step-at-a-time SARSA training with review-gated trainer queries.
//!
//! [`SessionEngine`] walks the same sequence of random draws, lookups,
//! commits and backups as `mtirl::sarsa::run_episode` driven through
//! `ReviewModel::resolve`, but pauses at every pair that needs trainers so
//! the caller can collect answers asynchronously.

use std::path::Path;

use mtirl::gridworld::{optimal_q, GridMap, OracleRewards, Pos};
use mtirl::memory::{FeedbackArchive, Lookup, ReviewModel, ReviewPolicy};
use mtirl::sarsa::{sarsa_update, select_action, EpisodeEnd};
use mtirl::{Action, Decision, FeedbackSet, LearnerConfig, QTable, TrustStore};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LiveError, Result};
use crate::protocol::FinishReason;

/// Stream ids of the two session RNGs.
pub const AGENT_STREAM: u64 = 1;
pub const REVIEW_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub learner: LearnerConfig,
    pub max_episodes: usize,
    pub max_actions: usize,
    pub check_every: usize,
    pub seed: u64,
    pub base_rate: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            learner: LearnerConfig::default(),
            max_episodes: 500,
            max_actions: 200,
            check_every: 5,
            seed: 0,
            base_rate: 0.5,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        let bad = |field: &str, why: &str| Err(LiveError::Invalid(format!("{field}: {why}")));
        if self.max_episodes == 0 {
            return bad("max_episodes", "must be at least 1");
        }
        if self.max_actions == 0 {
            return bad("max_actions", "must be at least 1");
        }
        if self.check_every == 0 {
            return bad("check_every", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.base_rate) {
            return bad("base_rate", "must lie in [0, 1]");
        }
        Ok(())
    }
}

/// The pair the agent is about to be rewarded for.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cursor {
    state: Pos,
    action: Action,
    epsilon: f64,
    steps: usize,
}

/// What the engine needs next.
#[derive(Debug, Clone, PartialEq)]
pub enum Next {
    /// Ask the trainers about this pair, then call [`SessionEngine::answer`].
    Query { state: Pos, action: Action },
    /// The pair was answered from memory and the agent has moved on.
    Stepped(StepReport),
    Finished(FinishReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub state: Pos,
    pub action: Action,
    pub decision: Decision,
    pub queried: bool,
    /// Set when this step ended an episode.
    pub episode_end: Option<EpisodeEnd>,
    pub finished: Option<FinishReason>,
}

#[derive(Debug, Clone)]
pub struct SessionEngine {
    map: GridMap,
    optimal: QTable,
    config: EngineConfig,
    q: QTable,
    trust: TrustStore,
    model: ReviewModel,
    agent_rng: ChaCha8Rng,
    review_rng: ChaCha8Rng,
    episode: usize,
    cursor: Option<Cursor>,
    pending: bool,
    steps: usize,
    queries: usize,
    finished: Option<FinishReason>,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

impl SessionEngine {
    pub fn new(map: GridMap, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        map.ensure_fully_reachable()?;
        let optimal = optimal_q(&map, OracleRewards::default())?;
        Ok(SessionEngine {
            q: QTable::zeros(&map),
            trust: TrustStore::with_base_rate(config.base_rate),
            model: ReviewModel::new(ReviewPolicy::Review),
            agent_rng: rng(config.seed, AGENT_STREAM),
            review_rng: rng(config.seed, REVIEW_STREAM),
            map,
            optimal,
            config,
            episode: 0,
            cursor: None,
            pending: false,
            steps: 0,
            queries: 0,
            finished: None,
        })
    }

    /// Rebuilds learned state saved by [`SessionEngine::persist`]. Episode
    /// counters and RNG positions start over.
    pub fn restore(map: GridMap, config: EngineConfig, dir: &Path) -> Result<Self> {
        let mut engine = Self::new(map, config)?;
        engine.trust = TrustStore::load(&dir.join("trust.csv"), engine.config.base_rate)?;
        let archive = FeedbackArchive::load(&dir.join("archive.json"))?;
        engine.model = ReviewModel::from_archive(ReviewPolicy::Review, archive, &engine.trust)?;
        let file = std::fs::File::open(dir.join("qtable.csv"))?;
        engine.q = QTable::read_csv(file, engine.map.width(), engine.map.height())?;
        Ok(engine)
    }

    /// Writes `trust.csv`, `archive.json` and `qtable.csv` into `dir`.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.trust.save(&dir.join("trust.csv"))?;
        self.model.archive().save(&dir.join("archive.json"))?;
        self.q.save(&dir.join("qtable.csv"))?;
        Ok(())
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn trust(&self) -> &TrustStore {
        &self.trust
    }

    pub fn q(&self) -> &QTable {
        &self.q
    }

    pub fn archive(&self) -> &FeedbackArchive {
        self.model.archive()
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    pub fn finished(&self) -> Option<FinishReason> {
        self.finished
    }

    /// Where the agent stands, if an episode is in progress.
    pub fn agent(&self) -> Option<Pos> {
        self.cursor.map(|c| c.state)
    }

    pub fn closeness(&self) -> f64 {
        mtirl::experiments::closeness(&self.q, &self.optimal, &self.map, self.config.max_actions)
    }

    /// Adds a trainer with a fresh record; known trainers keep theirs.
    pub fn register(&mut self, id: impl Into<mtirl::TrainerId>) {
        self.trust.register(id);
    }

    /// Advances until trainers are needed, a cached step is taken, or the
    /// session is over. Repeated calls while a query is open return the
    /// same query.
    pub fn advance(&mut self) -> Result<Next> {
        if let Some(reason) = self.finished {
            return Ok(Next::Finished(reason));
        }
        if self.pending {
            let c = self.cursor.expect("pending query has a cursor");
            return Ok(Next::Query {
                state: c.state,
                action: c.action,
            });
        }
        let c = match self.cursor {
            Some(c) => c,
            None => self.start_episode()?,
        };
        let key = (c.state, c.action);
        match self.model.lookup(key, &self.trust, &mut self.review_rng)? {
            Lookup::Cached(decision) => Ok(Next::Stepped(self.apply(decision, false))),
            Lookup::Unseen | Lookup::Review { .. } => {
                self.pending = true;
                Ok(Next::Query {
                    state: c.state,
                    action: c.action,
                })
            }
        }
    }

    /// Commits the trainers' answers for the open query and moves the agent.
    pub fn answer(&mut self, fresh: FeedbackSet) -> Result<StepReport> {
        if !self.pending {
            return Err(LiveError::NoOpenQuery);
        }
        let c = self.cursor.expect("pending query has a cursor");
        // Everyone who answers must have a record before evidence is paid.
        for e in fresh.iter() {
            if !self.trust.contains(&e.trainer_id) {
                return Err(mtirl::Error::UnknownTrainer(e.trainer_id.to_string()).into());
            }
        }
        let decision = self.model.commit((c.state, c.action), fresh, &mut self.trust)?;
        self.pending = false;
        Ok(self.apply(decision, true))
    }

    fn start_episode(&mut self) -> Result<Cursor> {
        let start = self.map.sample_start(&mut self.agent_rng)?;
        let epsilon = self.config.learner.epsilon_at(self.episode);
        let action = select_action(&self.q, start, epsilon, &mut self.agent_rng);
        let c = Cursor {
            state: start,
            action,
            epsilon,
            steps: 0,
        };
        self.cursor = Some(c);
        Ok(c)
    }

    fn apply(&mut self, decision: Decision, queried: bool) -> StepReport {
        let mut c = self.cursor.expect("apply needs a cursor");
        let (state, action) = (c.state, c.action);
        let learner = self.config.learner;
        let r = learner.reward_value(decision.reward);
        self.steps += 1;
        self.queries += usize::from(queried);
        c.steps += 1;

        let (next, outcome) = self.map.step(c.state, c.action);
        let mut end = None;
        if outcome.is_terminal() {
            sarsa_update(&mut self.q, c.state, c.action, r, None, &learner);
            end = Some(match outcome {
                mtirl::gridworld::Outcome::Goal => EpisodeEnd::Goal,
                _ => EpisodeEnd::Cliff,
            });
        } else {
            let a_next = select_action(&self.q, next, c.epsilon, &mut self.agent_rng);
            sarsa_update(&mut self.q, c.state, c.action, r, Some((next, a_next)), &learner);
            if c.steps >= self.config.max_actions {
                end = Some(EpisodeEnd::Truncated);
            }
            c.state = next;
            c.action = a_next;
        }

        self.cursor = Some(c);
        if end.is_some() {
            self.end_episode();
        }
        StepReport {
            state,
            action,
            decision,
            queried,
            episode_end: end,
            finished: self.finished,
        }
    }

    fn end_episode(&mut self) {
        self.cursor = None;
        let done = self.episode + 1;
        if done % self.config.check_every == 0
            && self.q.is_best_solution(&self.map, self.config.max_actions)
        {
            self.finished = Some(FinishReason::BestSolution);
        } else if done >= self.config.max_episodes {
            self.finished = Some(FinishReason::MaxEpisodes);
        }
        self.episode = done;
    }
}
