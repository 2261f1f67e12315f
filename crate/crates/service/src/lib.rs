//! HTTP session API: a human plays the expert, one round at a time.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | POST | `/sessions` | run config (JSON) | [`SessionView`] |
//! | POST | `/sessions/{id}/selection` | `{"ids": [...]}` | [`SubmitResponse`] |
//! | GET | `/sessions/{id}/progress` | | [`Progress`] |
//! | GET | `/sessions/{id}` | | [`SessionView`] |
//!
//! Errors are `{"error_code", "message"}` with a 4xx status.

mod error;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tower_http::cors::{AllowOrigin, CorsLayer};

use seqdiscover::engine::{Experiment, RoundRecord};
use seqdiscover::RunConfig;

pub use error::{ErrorBody, ServiceError};
pub use session::{recommendation_rows, start, Phase, RecommendationRow, SessionView, Transcript};

type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Sessions are saved here after every change and restored on start.
    pub snapshot_dir: Option<PathBuf>,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub record: RoundRecord,
    pub phase: Phase,
    pub round: usize,
    pub recommendations: Vec<RecommendationRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub session_id: String,
    pub phase: Phase,
    pub round: usize,
    pub rounds: usize,
    pub history: Vec<RoundRecord>,
}

struct Slot {
    exp: Experiment,
    transcript: Transcript,
}

struct Session {
    slot: Arc<Mutex<Slot>>,
    view: RwLock<SessionView>,
}

impl Session {
    fn view(&self) -> SessionView {
        self.view.read().expect("view lock").clone()
    }

    fn set_view(&self, view: SessionView) {
        *self.view.write().expect("view lock") = view;
    }

    fn set_phase(&self, phase: Phase) {
        self.view.write().expect("view lock").phase = phase;
    }
}

/// In-memory session store shared by all request handlers.
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            config,
        }
    }

    /// Replays every snapshot in the snapshot directory. Returns the number
    /// of sessions restored.
    pub fn restore(&self) -> Result<usize> {
        let Some(dir) = &self.config.snapshot_dir else {
            return Ok(0);
        };
        if !dir.is_dir() {
            return Ok(0);
        }
        let entries = std::fs::read_dir(dir).map_err(|e| ServiceError::Internal(format!("{}: {e}", dir.display())))?;
        let mut restored = 0;
        for path in entries.filter_map(|e| e.ok().map(|e| e.path())) {
            let (Some(id), Some("json")) = (
                path.file_stem().and_then(|s| s.to_str()),
                path.extension().and_then(|s| s.to_str()),
            ) else {
                continue;
            };
            let text = std::fs::read_to_string(&path).map_err(|e| ServiceError::Internal(format!("{}: {e}", path.display())))?;
            let transcript: Transcript = serde_json::from_str(&text).map_err(seqdiscover::Error::from)?;
            let exp = transcript.replay()?;
            self.insert(id.to_string(), exp, transcript);
            restored += 1;
        }
        Ok(restored)
    }

    fn insert(&self, id: String, exp: Experiment, transcript: Transcript) -> SessionView {
        let view = SessionView::of(&id, &exp);
        let session = Arc::new(Session {
            slot: Arc::new(Mutex::new(Slot { exp, transcript })),
            view: RwLock::new(view.clone()),
        });
        self.sessions.write().expect("session map lock").insert(id, session);
        view
    }

    fn session(&self, id: &str) -> Result<Arc<Session>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))
    }

    fn save(&self, id: &str, transcript: &Transcript) -> Result<()> {
        let Some(dir) = &self.config.snapshot_dir else {
            return Ok(());
        };
        let io = |p: &Path, e: std::io::Error| ServiceError::Internal(format!("{}: {e}", p.display()));
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let path = dir.join(format!("{id}.json"));
        let tmp = dir.join(format!(".{id}.json.tmp"));
        let bytes = serde_json::to_vec(transcript).map_err(seqdiscover::Error::from)?;
        std::fs::write(&tmp, bytes).map_err(|e| io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| io(&path, e))
    }

    /// Starts a session and returns its round-1 recommendations.
    pub async fn create(self: &Arc<Self>, config: RunConfig) -> Result<SessionView> {
        let exp = tokio::task::spawn_blocking({
            let config = config.clone();
            move || start(&config)
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
        let id = loop {
            let id = format!("{:016x}", rand::random::<u64>());
            if self.session(&id).is_err() {
                break id;
            }
        };
        let transcript = Transcript::new(config);
        self.save(&id, &transcript)?;
        Ok(self.insert(id, exp, transcript))
    }

    /// Reveals the selected molecules, retrains and prepares the next round.
    pub async fn submit(self: &Arc<Self>, id: &str, ids: Vec<String>) -> Result<SubmitResponse> {
        let session = self.session(id)?;
        let mut slot = session
            .slot
            .clone()
            .try_lock_owned()
            .map_err(|_| ServiceError::WrongPhase("a selection for this session is already being processed".into()))?;
        if slot.exp.is_finished() {
            return Err(ServiceError::WrongPhase("the session has finished".into()));
        }
        session.set_phase(Phase::Training);
        let outcome = tokio::task::spawn_blocking(move || {
            let result = slot.exp.commit_from_union(ids.clone()).cloned().and_then(|record| {
                slot.transcript.selections.push(ids);
                if !slot.exp.is_finished() {
                    slot.exp.prepare()?;
                }
                Ok(record)
            });
            (slot, result)
        })
        .await;
        let (slot, result) = match outcome {
            Ok(v) => v,
            Err(e) => {
                session.set_phase(Phase::AwaitingSelection);
                return Err(ServiceError::Internal(e.to_string()));
            }
        };
        let view = SessionView::of(id, &slot.exp);
        session.set_view(view.clone());
        let record = result?;
        self.save(id, &slot.transcript)?;
        Ok(SubmitResponse {
            record,
            phase: view.phase,
            round: view.round,
            recommendations: view.recommendations,
        })
    }

    pub fn view(&self, id: &str) -> Result<SessionView> {
        Ok(self.session(id)?.view())
    }

    pub fn progress(&self, id: &str) -> Result<Progress> {
        let v = self.session(id)?.view();
        Ok(Progress {
            session_id: v.session_id,
            phase: v.phase,
            round: v.round,
            rounds: v.rounds,
            history: v.history,
        })
    }
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<SessionView>)> {
    let config: RunConfig = serde_json::from_slice(&body)
        .map_err(|e| seqdiscover::Error::ConfigInvalid(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(state.create(config).await?)))
}

async fn submit_selection(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<SubmitResponse>> {
    // Unknown sessions win over malformed bodies.
    state.session(&id)?;
    let selection: Selection = serde_json::from_slice(&body)
        .map_err(|e| seqdiscover::Error::BadSelection(e.to_string()))?;
    Ok(Json(state.submit(&id, selection.ids).await?))
}

async fn get_progress(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<Progress>> {
    Ok(Json(state.progress(&id)?))
}

async fn get_session(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionView>> {
    Ok(Json(state.view(&id)?))
}

pub fn router(state: Arc<AppState>) -> Router {
    let origin = match &state.config.cors_origin {
        Some(o) => HeaderValue::from_str(o).map(AllowOrigin::exact).unwrap_or_else(|_| AllowOrigin::any()),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/selection", post(submit_selection))
        .route("/sessions/{id}/progress", get(get_progress))
        .layer(cors)
        .with_state(state)
}

/// Restores snapshots, binds `addr` and serves until the process exits.
pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> Result<()> {
    let state = Arc::new(AppState::new(config));
    state.restore()?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::Internal(format!("bind {addr}: {e}")))?;
    axum::serve(listener, router(state))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}
