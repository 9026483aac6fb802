//! HTTP routes and the per-connection WebSocket bridge.

use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use mtirl::TrainerId;
use serde_json::json;
use tokio::sync::{broadcast, mpsc};

use crate::error::LiveError;
use crate::protocol::{ClientMessage, FeedbackRejected, RejectCode, ServerMessage, SessionSummary};
use crate::session::{Registry, SessionHandle, SessionSettings};

impl IntoResponse for LiveError {
    fn into_response(self) -> Response {
        let status = match &self {
            LiveError::UnknownSession(_) => StatusCode::NOT_FOUND,
            LiveError::WrongState(..) => StatusCode::CONFLICT,
            LiveError::Invalid(_) | LiveError::Core(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type Shared = Arc<Registry>;

/// Routes:
///
/// | method | path | body / reply |
/// |---|---|---|
/// | POST | `/sessions` | `SessionSettings` → `SessionSummary` |
/// | GET | `/sessions` | → `[SessionSummary]` |
/// | GET | `/sessions/{id}` | → `SessionSummary` |
/// | POST | `/sessions/{id}/start`, `/pause`, `/resume` | → `SessionSummary` |
/// | GET | `/sessions/{id}/ws` | WebSocket upgrade |
pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}", get(summary))
        .route("/sessions/{id}/start", post(start))
        .route("/sessions/{id}/pause", post(pause))
        .route("/sessions/{id}/resume", post(resume))
        .route("/sessions/{id}/ws", get(ws))
        .with_state(registry)
}

async fn create(
    State(reg): State<Shared>,
    body: Option<Json<SessionSettings>>,
) -> Result<(StatusCode, Json<SessionSummary>), LiveError> {
    let settings = body.map(|Json(s)| s).unwrap_or_default();
    let handle = reg.open_session(settings)?;
    Ok((StatusCode::CREATED, Json(handle.summary().await?)))
}

async fn list(State(reg): State<Shared>) -> Result<Json<Vec<SessionSummary>>, LiveError> {
    let mut out = Vec::new();
    for h in reg.handles() {
        out.push(h.summary().await?);
    }
    Ok(Json(out))
}

async fn summary(
    State(reg): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<SessionSummary>, LiveError> {
    Ok(Json(reg.get(&id)?.summary().await?))
}

async fn start(State(reg): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionSummary>, LiveError> {
    Ok(Json(reg.get(&id)?.start().await?))
}

async fn pause(State(reg): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionSummary>, LiveError> {
    Ok(Json(reg.get(&id)?.pause().await?))
}

async fn resume(State(reg): State<Shared>, Path(id): Path<String>) -> Result<Json<SessionSummary>, LiveError> {
    Ok(Json(reg.get(&id)?.resume().await?))
}

async fn ws(
    State(reg): State<Shared>,
    Path(id): Path<String>,
    upgrade: WebSocketUpgrade,
) -> Result<Response, LiveError> {
    let handle = reg.get(&id)?;
    Ok(upgrade.on_upgrade(move |socket| connection(socket, handle)))
}

fn encode(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("server messages serialize").into())
}

fn rejection(code: RejectCode, message: String) -> ServerMessage {
    ServerMessage::FeedbackRejected(FeedbackRejected {
        query_id: None,
        trainer_id: None,
        code,
        message,
    })
}

/// Bridges one socket to the session: broadcasts and direct replies go
/// out through a single writer, incoming frames become session commands.
async fn connection(socket: WebSocket, session: SessionHandle) {
    let (mut sink, mut stream) = socket.split();
    let mut events = session.subscribe();
    let (direct_tx, mut direct) = mpsc::unbounded_channel::<ServerMessage>();

    let writer = tokio::spawn(async move {
        loop {
            let frame = tokio::select! {
                m = direct.recv() => match m {
                    Some(m) => encode(&m),
                    None => break,
                },
                e = events.recv() => match e {
                    Ok(m) => encode(&m),
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        tracing::warn!("connection lagged, {n} broadcasts dropped");
                        continue;
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            };
            if sink.send(frame).await.is_err() {
                break;
            }
        }
    });

    let mut me: Option<TrainerId> = None;
    while let Some(Ok(frame)) = stream.next().await {
        let text = match frame {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let reply = match serde_json::from_str::<ClientMessage>(&text) {
            Err(e) => Some(rejection(RejectCode::Malformed, e.to_string())),
            Ok(ClientMessage::Join { trainer_id }) => {
                if let Some(old) = me.take() {
                    session.leave(old).await;
                }
                match session.join(trainer_id.clone()).await {
                    Ok((joined, open)) => {
                        me = Some(trainer_id);
                        let _ = direct_tx.send(ServerMessage::Joined(joined));
                        open.map(ServerMessage::Query)
                    }
                    Err(_) => break,
                }
            }
            Ok(ClientMessage::Feedback {
                query_id,
                trainer_id,
                value,
            }) => {
                if me.as_ref() != Some(&trainer_id) {
                    Some(ServerMessage::FeedbackRejected(FeedbackRejected {
                        query_id: Some(query_id),
                        trainer_id: Some(trainer_id),
                        code: RejectCode::UnknownTrainer,
                        message: "join under this name before answering".into(),
                    }))
                } else {
                    match session.feedback(query_id, trainer_id, value).await {
                        Ok(r) => r.map(ServerMessage::FeedbackRejected),
                        Err(_) => break,
                    }
                }
            }
        };
        if let Some(r) = reply {
            let _ = direct_tx.send(r);
        }
    }
    if let Some(id) = me {
        session.leave(id).await;
    }
    drop(direct_tx);
    let _ = writer.await;
}
