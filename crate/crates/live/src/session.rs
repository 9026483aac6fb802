//! One actor task per session. The actor owns the engine, the roster and
//! the open query; connections and HTTP handlers talk to it through a
//! command channel and hear from it through a broadcast channel.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use mtirl::gridworld::{GridMap, MapSpec, Pos};
use mtirl::{Action, FeedbackEvent, FeedbackSet, Polarity, TrainerId};
use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::Instant;

use crate::engine::{EngineConfig, Next, SessionEngine, StepReport};
use crate::error::{LiveError, Result};
use crate::protocol::{
    trust_snapshot, DecisionMsg, FeedbackRejected, GridSnapshot, Joined, Lifecycle,
    Query, QueryId, RejectCode, ServerMessage, SessionSummary, TrainerTrust,
};

pub const DEFAULT_DEADLINE_MS: u64 = 10_000;

/// Body of a create-session request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSettings {
    /// `None` selects the built-in cliff map.
    pub map: Option<MapSpec>,
    pub deadline_ms: u64,
    pub engine: EngineConfig,
}

impl Default for SessionSettings {
    fn default() -> Self {
        SessionSettings {
            map: None,
            deadline_ms: DEFAULT_DEADLINE_MS,
            engine: EngineConfig::default(),
        }
    }
}

enum Control {
    Start,
    Pause,
    Resume,
}

enum Command {
    Join {
        trainer_id: TrainerId,
        reply: oneshot::Sender<(Joined, Option<Query>)>,
    },
    Leave {
        trainer_id: TrainerId,
    },
    Feedback {
        query_id: QueryId,
        trainer_id: TrainerId,
        value: Polarity,
        reply: oneshot::Sender<Option<FeedbackRejected>>,
    },
    Control {
        op: Control,
        reply: oneshot::Sender<Result<SessionSummary>>,
    },
    Summary {
        reply: oneshot::Sender<SessionSummary>,
    },
}

/// Cheap, cloneable access to a running session actor.
#[derive(Clone)]
pub struct SessionHandle {
    id: String,
    commands: mpsc::Sender<Command>,
    events: broadcast::Sender<Arc<ServerMessage>>,
}

impl SessionHandle {
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Messages broadcast to every connected trainer from now on.
    pub fn subscribe(&self) -> broadcast::Receiver<Arc<ServerMessage>> {
        self.events.subscribe()
    }

    async fn call<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T> {
        let (tx, rx) = oneshot::channel();
        self.commands.send(make(tx)).await.map_err(|_| LiveError::Closed)?;
        rx.await.map_err(|_| LiveError::Closed)
    }

    /// Adds the trainer to the roster. Returns the greeting and the query
    /// currently open, if any.
    pub async fn join(&self, trainer_id: TrainerId) -> Result<(Joined, Option<Query>)> {
        self.call(|reply| Command::Join { trainer_id, reply }).await
    }

    /// Drops one connection of the trainer from the roster. Trust records
    /// are kept.
    pub async fn leave(&self, trainer_id: TrainerId) {
        let _ = self.commands.send(Command::Leave { trainer_id }).await;
    }

    /// Submits an answer; returns the rejection, if any.
    pub async fn feedback(
        &self,
        query_id: QueryId,
        trainer_id: TrainerId,
        value: Polarity,
    ) -> Result<Option<FeedbackRejected>> {
        self.call(|reply| Command::Feedback {
            query_id,
            trainer_id,
            value,
            reply,
        })
        .await
    }

    pub async fn start(&self) -> Result<SessionSummary> {
        self.control(Control::Start).await
    }

    /// Pauses after the current step and persists the learned state. With a
    /// query open this waits for it to close.
    pub async fn pause(&self) -> Result<SessionSummary> {
        self.control(Control::Pause).await
    }

    pub async fn resume(&self) -> Result<SessionSummary> {
        self.control(Control::Resume).await
    }

    async fn control(&self, op: Control) -> Result<SessionSummary> {
        self.call(|reply| Command::Control { op, reply }).await?
    }

    pub async fn summary(&self) -> Result<SessionSummary> {
        self.call(|reply| Command::Summary { reply }).await
    }
}

/// All sessions of one server.
pub struct Registry {
    sessions: RwLock<BTreeMap<String, SessionHandle>>,
    counter: AtomicU64,
    data_dir: PathBuf,
}

impl Registry {
    /// `data_dir` receives one subdirectory per paused session.
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Registry {
            sessions: RwLock::new(BTreeMap::new()),
            counter: AtomicU64::new(1),
            data_dir: data_dir.into(),
        }
    }

    /// Validates the settings and spawns a lobby session. Must be called
    /// inside a Tokio runtime.
    pub fn open_session(&self, settings: SessionSettings) -> Result<SessionHandle> {
        if settings.deadline_ms == 0 {
            return Err(LiveError::Invalid("deadline_ms: must be positive".into()));
        }
        let map = match &settings.map {
            Some(spec) => GridMap::from_spec(spec)?,
            None => GridMap::default_map(),
        };
        let engine = SessionEngine::new(map, settings.engine.clone())?;
        let id = format!("s{:04}", self.counter.fetch_add(1, Ordering::Relaxed));
        let (commands, rx) = mpsc::channel(256);
        let (events, _) = broadcast::channel(1024);
        let actor = Actor {
            id: id.clone(),
            spec: engine.map().to_spec(),
            engine,
            deadline: Duration::from_millis(settings.deadline_ms),
            state: Lifecycle::Lobby,
            roster: BTreeMap::new(),
            rx,
            events: events.clone(),
            next_query_id: 1,
            open: None,
            pause_waiters: Vec::new(),
            dir: self.data_dir.join(&id),
        };
        tokio::spawn(actor.run());
        let handle = SessionHandle {
            id: id.clone(),
            commands,
            events,
        };
        self.sessions.write().unwrap().insert(id, handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Result<SessionHandle> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| LiveError::UnknownSession(id.to_string()))
    }

    pub fn handles(&self) -> Vec<SessionHandle> {
        self.sessions.read().unwrap().values().cloned().collect()
    }
}

struct OpenQuery {
    msg: Query,
    answers: FeedbackSet,
    answered: BTreeSet<TrainerId>,
}

struct Actor {
    id: String,
    spec: MapSpec,
    engine: SessionEngine,
    deadline: Duration,
    state: Lifecycle,
    /// Connected trainers and how many connections each has.
    roster: BTreeMap<TrainerId, usize>,
    rx: mpsc::Receiver<Command>,
    events: broadcast::Sender<Arc<ServerMessage>>,
    next_query_id: QueryId,
    open: Option<OpenQuery>,
    pause_waiters: Vec<oneshot::Sender<Result<SessionSummary>>>,
    dir: PathBuf,
}

impl Actor {
    async fn run(mut self) {
        loop {
            if self.state == Lifecycle::Running {
                loop {
                    match self.rx.try_recv() {
                        Ok(cmd) => self.handle(cmd),
                        Err(mpsc::error::TryRecvError::Empty) => break,
                        Err(mpsc::error::TryRecvError::Disconnected) => return,
                    }
                }
                if !self.pause_waiters.is_empty() {
                    self.pause();
                    continue;
                }
                if let Err(e) = self.step().await {
                    tracing::error!(session = %self.id, "step failed: {e}");
                    self.state = Lifecycle::Paused;
                    self.broadcast(ServerMessage::SessionState(self.summary()));
                }
            } else {
                match self.rx.recv().await {
                    Some(cmd) => self.handle(cmd),
                    None => return,
                }
            }
        }
    }

    fn broadcast(&self, msg: ServerMessage) {
        // No receivers is fine: nobody is listening yet.
        let _ = self.events.send(Arc::new(msg));
    }

    fn summary(&self) -> SessionSummary {
        SessionSummary {
            session_id: self.id.clone(),
            state: self.state,
            episode: self.engine.episode(),
            steps: self.engine.steps(),
            queries: self.engine.queries(),
            roster: self.roster.keys().cloned().collect(),
            trust: trust_snapshot(self.engine.trust()),
            deadline_ms: self.deadline.as_millis() as u64,
            closeness: self.engine.closeness(),
            finish_reason: self.engine.finished(),
        }
    }

    fn trainer_trust(&self, id: &TrainerId) -> TrainerTrust {
        trust_snapshot(self.engine.trust())
            .into_iter()
            .find(|t| &t.trainer_id == id)
            .expect("joined trainers have a record")
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Join { trainer_id, reply } => {
                self.engine.register(trainer_id.clone());
                *self.roster.entry(trainer_id.clone()).or_default() += 1;
                let joined = Joined {
                    session_id: self.id.clone(),
                    trust: self.trainer_trust(&trainer_id),
                    trainer_id,
                    state: self.state,
                };
                let _ = reply.send((joined, self.open.as_ref().map(|o| o.msg.clone())));
            }
            Command::Leave { trainer_id } => {
                if let Some(n) = self.roster.get_mut(&trainer_id) {
                    *n -= 1;
                    if *n == 0 {
                        self.roster.remove(&trainer_id);
                    }
                }
            }
            Command::Feedback {
                query_id,
                trainer_id,
                value,
                reply,
            } => {
                let verdict = self.accept(query_id, &trainer_id, value);
                let _ = reply.send(verdict.err().map(|(code, message)| FeedbackRejected {
                    query_id: Some(query_id),
                    trainer_id: Some(trainer_id),
                    code,
                    message,
                }));
            }
            Command::Control { op, reply } => match (op, self.state) {
                (Control::Start, Lifecycle::Lobby) | (Control::Resume, Lifecycle::Paused) => {
                    self.state = Lifecycle::Running;
                    self.broadcast(ServerMessage::SessionState(self.summary()));
                    let _ = reply.send(Ok(self.summary()));
                }
                (Control::Pause, Lifecycle::Running) => self.pause_waiters.push(reply),
                (op, state) => {
                    let verb = match op {
                        Control::Start => "start",
                        Control::Pause => "pause",
                        Control::Resume => "resume",
                    };
                    let _ = reply.send(Err(LiveError::WrongState(state_name(state), verb)));
                }
            },
            Command::Summary { reply } => {
                let _ = reply.send(self.summary());
            }
        }
    }

    fn accept(
        &mut self,
        query_id: QueryId,
        trainer_id: &TrainerId,
        value: Polarity,
    ) -> std::result::Result<(), (RejectCode, String)> {
        if self.state != Lifecycle::Running {
            return Err((RejectCode::NotRunning, format!("session is {}", state_name(self.state))));
        }
        if !self.roster.contains_key(trainer_id) {
            return Err((RejectCode::UnknownTrainer, format!("`{trainer_id}` has not joined")));
        }
        if query_id == 0 || query_id >= self.next_query_id {
            return Err((RejectCode::UnknownQuery, format!("query {query_id} was never issued")));
        }
        let Some(open) = self.open.as_mut().filter(|o| o.msg.query_id == query_id) else {
            return Err((RejectCode::Late, format!("query {query_id} is closed")));
        };
        if !open.answered.insert(trainer_id.clone()) {
            return Err((RejectCode::Duplicate, format!("`{trainer_id}` already answered query {query_id}")));
        }
        open.answers.push(FeedbackEvent::new(trainer_id.clone(), value));
        Ok(())
    }

    fn pause(&mut self) {
        let result = self
            .engine
            .persist(&self.dir)
            .map(|()| {
                self.state = Lifecycle::Paused;
                self.summary()
            });
        if result.is_ok() {
            self.broadcast(ServerMessage::SessionState(self.summary()));
        }
        for w in self.pause_waiters.drain(..) {
            let _ = w.send(match &result {
                Ok(s) => Ok(s.clone()),
                Err(e) => Err(LiveError::Invalid(format!("persist failed: {e}"))),
            });
        }
    }

    async fn step(&mut self) -> Result<()> {
        match self.engine.advance()? {
            Next::Finished(_) => self.finish(),
            Next::Stepped(report) => {
                self.after_step(&report);
                // Cached steps never wait on I/O; let other tasks in.
                tokio::task::yield_now().await;
            }
            Next::Query { state, action } => {
                let (query_id, fresh) = self.gather(state, action).await;
                let n = fresh.len();
                let report = self.engine.answer(fresh)?;
                self.broadcast(ServerMessage::Decision(DecisionMsg::new(
                    query_id,
                    &report.decision,
                    n,
                    self.engine.trust(),
                )));
                self.after_step(&report);
            }
        }
        Ok(())
    }

    fn after_step(&mut self, report: &StepReport) {
        if report.finished.is_some() {
            self.finish();
        } else if report.episode_end.is_some() {
            self.broadcast(ServerMessage::SessionState(self.summary()));
        }
    }

    fn finish(&mut self) {
        self.state = Lifecycle::Finished;
        self.broadcast(ServerMessage::SessionState(self.summary()));
    }

    fn all_answered(&self) -> bool {
        let Some(open) = &self.open else { return true };
        !self.roster.is_empty() && self.roster.keys().all(|t| open.answered.contains(t))
    }

    /// Broadcasts the query and collects answers until the deadline or until
    /// every connected trainer has answered. An empty roster waits out the
    /// full deadline so that trainers can still join.
    async fn gather(&mut self, state: Pos, action: Action) -> (QueryId, FeedbackSet) {
        let query_id = self.next_query_id;
        self.next_query_id += 1;
        let msg = Query {
            query_id,
            state,
            action,
            grid: GridSnapshot {
                map: self.spec.clone(),
                agent: state,
            },
            deadline_ms: self.deadline.as_millis() as u64,
            episode: self.engine.episode(),
        };
        self.open = Some(OpenQuery {
            msg: msg.clone(),
            answers: FeedbackSet::new(),
            answered: BTreeSet::new(),
        });
        self.broadcast(ServerMessage::Query(msg));
        let until = Instant::now() + self.deadline;
        while !self.all_answered() {
            tokio::select! {
                cmd = self.rx.recv() => match cmd {
                    Some(cmd) => self.handle(cmd),
                    None => break,
                },
                _ = tokio::time::sleep_until(until) => break,
            }
        }
        let open = self.open.take().expect("query is open while gathering");
        (query_id, open.answers)
    }
}

fn state_name(s: Lifecycle) -> &'static str {
    match s {
        Lifecycle::Lobby => "lobby",
        Lifecycle::Running => "running",
        Lifecycle::Paused => "paused",
        Lifecycle::Finished => "finished",
    }
}

