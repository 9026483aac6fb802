//! Wire messages. Every frame is one JSON object whose `type` field names
//! the message. The full schema is written out in `docs/protocol.md`.

use mtirl::gridworld::{MapSpec, Pos};
use mtirl::trust::TrustStore;
use mtirl::{Action, Decision, Polarity, Reward, TrainerId};
use serde::{Deserialize, Serialize};

pub type QueryId = u64;

/// Frames sent by trainer clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Join {
        trainer_id: TrainerId,
    },
    Feedback {
        query_id: QueryId,
        trainer_id: TrainerId,
        value: Polarity,
    },
}

/// Frames sent by the server, either broadcast or addressed to one client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Joined(Joined),
    Query(Query),
    FeedbackRejected(FeedbackRejected),
    Decision(DecisionMsg),
    SessionState(SessionSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joined {
    pub session_id: String,
    pub trainer_id: TrainerId,
    pub trust: TrainerTrust,
    pub state: Lifecycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: QueryId,
    pub state: Pos,
    pub action: Action,
    pub grid: GridSnapshot,
    /// Milliseconds the server waits for answers after sending this.
    pub deadline_ms: u64,
    pub episode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSnapshot {
    #[serde(flatten)]
    pub map: MapSpec,
    pub agent: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectCode {
    /// The trainer already answered this query; the first answer stands.
    Duplicate,
    /// The query was closed before the answer arrived.
    Late,
    /// The sender has not joined, or answered under another name.
    UnknownTrainer,
    /// No such query was ever issued.
    UnknownQuery,
    /// The session is not running.
    NotRunning,
    /// The frame could not be parsed.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRejected {
    pub query_id: Option<QueryId>,
    pub trainer_id: Option<TrainerId>,
    pub code: RejectCode,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMsg {
    pub query_id: QueryId,
    pub reward: Reward,
    pub p_pos: f64,
    pub confidence: f64,
    pub n_feedback: usize,
    pub trust: Vec<TrainerTrust>,
}

impl DecisionMsg {
    pub fn new(query_id: QueryId, decision: &Decision, n_feedback: usize, trust: &TrustStore) -> Self {
        DecisionMsg {
            query_id,
            reward: decision.reward,
            p_pos: decision.p_pos,
            confidence: decision.confidence,
            n_feedback,
            trust: trust_snapshot(trust),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerTrust {
    pub trainer_id: TrainerId,
    pub alpha: f64,
    pub beta: f64,
    pub trust: f64,
    pub uncertainty: f64,
}

pub fn trust_snapshot(store: &TrustStore) -> Vec<TrainerTrust> {
    store
        .iter()
        .map(|(id, rec)| TrainerTrust {
            trainer_id: id.clone(),
            alpha: rec.alpha(),
            beta: rec.beta(),
            trust: rec.trustworthiness(),
            uncertainty: rec.uncertainty(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifecycle {
    Lobby,
    Running,
    Paused,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    BestSolution,
    MaxEpisodes,
}

/// Session overview, sent as `session_state` and returned by the HTTP API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub state: Lifecycle,
    pub episode: usize,
    pub steps: usize,
    pub queries: usize,
    pub roster: Vec<TrainerId>,
    pub trust: Vec<TrainerTrust>,
    pub deadline_ms: u64,
    pub closeness: f64,
    pub finish_reason: Option<FinishReason>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn client_frames() {
        let m: ClientMessage =
            serde_json::from_value(json!({"type": "join", "trainer_id": "ann"})).unwrap();
        assert_eq!(m, ClientMessage::Join { trainer_id: TrainerId::new("ann") });

        let m: ClientMessage = serde_json::from_value(json!({
            "type": "feedback", "query_id": 4, "trainer_id": "ann", "value": "negative"
        }))
        .unwrap();
        assert_eq!(
            m,
            ClientMessage::Feedback {
                query_id: 4,
                trainer_id: TrainerId::new("ann"),
                value: Polarity::Negative,
            }
        );
        assert!(serde_json::from_value::<ClientMessage>(json!({"type": "decision"})).is_err());
        assert!(serde_json::from_value::<ClientMessage>(
            json!({"type": "join", "trainer_id": "a", "extra": 1})
        )
        .is_err());
    }

    #[test]
    fn server_frames_are_tagged() {
        let m = ServerMessage::FeedbackRejected(FeedbackRejected {
            query_id: Some(3),
            trainer_id: Some(TrainerId::new("bo")),
            code: RejectCode::Duplicate,
            message: "already answered".into(),
        });
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["type"], "feedback_rejected");
        assert_eq!(v["code"], "duplicate");
        assert_eq!(serde_json::from_value::<ServerMessage>(v).unwrap(), m);

        let q = ServerMessage::Query(Query {
            query_id: 1,
            state: Pos::new(0, 2),
            action: Action::Up,
            grid: GridSnapshot {
                map: MapSpec {
                    width: 3,
                    height: 3,
                    goal: Pos::new(2, 2),
                    cliffs: vec![],
                },
                agent: Pos::new(0, 2),
            },
            deadline_ms: 10_000,
            episode: 0,
        });
        let v = serde_json::to_value(&q).unwrap();
        assert_eq!(v["type"], "query");
        assert_eq!(v["action"], "up");
        assert_eq!(v["grid"]["width"], 3);
        assert_eq!(v["grid"]["agent"], json!({"x": 0, "y": 2}));
    }
}
