//! Study service: sessions walk through elicitation, tolerance capture and
//! one blinded recommendation set per configured engine, with one engine
//! shown twice as an attention check.

mod api;
pub mod store;

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engines::{EngineId, EngineSpec, Recommender, DEFAULT_R};
use crate::scoring::{UserProfile, MAX_RATING, MIN_RATING};

pub use api::router;
pub use store::{Demographics, Likert};
use store::{Event, SessionLog, Store};

pub const ADMIN_TOKEN_ENV: &str = "MOSAIC_ADMIN_TOKEN";

/// Attention-check threshold: a duplicate whose answers differ by more than
/// this on any statement is flagged.
pub const ATTENTION_THRESHOLD: u8 = 2;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no engines configured")]
    NoEngines,
    #[error("engine {0} needs a similarity matrix for its backbone")]
    MissingBackbone(EngineId),
    #[error("stored session {session}: {message}")]
    Replay { session: String, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub engines: Vec<EngineId>,
    pub r: usize,
    /// Seeds session tokens and sampling; `None` draws from the OS.
    pub seed: Option<u64>,
    pub admin_token: Option<String>,
    pub image_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            engines: ["pop-a", "pop-b", "mosaic-a", "mosaic-b"]
                .iter()
                .map(|s| s.parse().expect("known engine id"))
                .collect(),
            r: DEFAULT_R,
            seed: None,
            admin_token: std::env::var(ADMIN_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            image_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Created,
    Elicited,
    Recommending,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Served {
    pub position: usize,
    pub engine: EngineId,
    pub items: Vec<String>,
    pub replay_of: Option<usize>,
    pub optimal: bool,
}

#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub demographics: Demographics,
    pub elicitation_items: Vec<String>,
    pub engine_order: Vec<EngineId>,
    pub ratings: Option<BTreeMap<String, u8>>,
    pub tolerances: Option<(u8, u8)>,
    pub served: Vec<Served>,
    pub feedback: Vec<Likert>,
    log: SessionLog,
}

/// Maps a 1..=5 answer onto [0, 1].
pub fn likert_to_unit(raw: u8) -> f64 {
    f64::from(raw.saturating_sub(1)) / 4.0
}

impl Session {
    fn from_events(events: Vec<Event>, log: SessionLog) -> Result<Self, String> {
        let mut events = events.into_iter();
        let Some(Event::Created {
            session_id,
            demographics,
            elicitation_items,
            engine_order,
        }) = events.next()
        else {
            return Err("missing created event".into());
        };
        let engine_order = engine_order
            .iter()
            .map(|e| e.parse::<EngineId>().map_err(|err| err.to_string()))
            .collect::<Result<_, _>>()?;
        let mut session = Session {
            id: session_id,
            demographics,
            elicitation_items,
            engine_order,
            ratings: None,
            tolerances: None,
            served: Vec::new(),
            feedback: Vec::new(),
            log,
        };
        for event in events {
            session.apply(event)?;
        }
        Ok(session)
    }

    fn apply(&mut self, event: Event) -> Result<(), String> {
        match event {
            Event::Created { .. } => return Err("second created event".into()),
            Event::Ratings { ratings } => self.ratings = Some(ratings),
            Event::Tolerances { beta_raw, xi_raw } => self.tolerances = Some((beta_raw, xi_raw)),
            Event::Served {
                position,
                engine,
                items,
                replay_of,
                optimal,
            } => {
                if position != self.served.len() || position >= self.engine_order.len() {
                    return Err(format!("served event out of order at position {position}"));
                }
                let engine = engine.parse::<EngineId>().map_err(|e| e.to_string())?;
                self.served.push(Served {
                    position,
                    engine,
                    items,
                    replay_of,
                    optimal,
                });
            }
            Event::Feedback { position, feedback } => {
                if position != self.feedback.len() || position >= self.served.len() {
                    return Err(format!("feedback event without a served set at position {position}"));
                }
                self.feedback.push(feedback);
            }
        }
        Ok(())
    }

    /// Persists, then applies. Nothing changes in memory if the write fails.
    fn record(&mut self, event: Event) -> io::Result<()> {
        self.log.append(&event)?;
        self.apply(event).map_err(io::Error::other)
    }

    pub fn state(&self) -> SessionState {
        if self.feedback.len() == self.engine_order.len() {
            SessionState::Done
        } else if !self.served.is_empty() {
            SessionState::Recommending
        } else if self.ratings.is_some() {
            SessionState::Elicited
        } else {
            SessionState::Created
        }
    }

    /// Position of the set awaiting feedback, if any.
    pub fn pending(&self) -> Option<usize> {
        (self.served.len() > self.feedback.len()).then_some(self.feedback.len())
    }

    /// First earlier position showing the same engine.
    pub fn original_of(&self, position: usize) -> Option<usize> {
        let engine = self.engine_order[position];
        self.engine_order[..position].iter().position(|&e| e == engine)
    }

    /// Positions of the engine shown twice, as (first, second).
    pub fn duplicate_pair(&self) -> Option<(usize, usize)> {
        (0..self.engine_order.len()).find_map(|p| self.original_of(p).map(|o| (o, p)))
    }

    pub fn profile(&self) -> Option<UserProfile> {
        let (b, x) = self.tolerances?;
        Some(UserProfile {
            ratings: self.ratings.clone()?,
            beta: likert_to_unit(b),
            xi: likert_to_unit(x),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionCheck {
    pub engine: EngineId,
    pub original_position: usize,
    pub duplicate_position: usize,
    /// Largest absolute difference over the four statements, once both
    /// sets have feedback.
    pub max_abs_diff: Option<u8>,
    pub deviation: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackRow {
    pub session_id: String,
    pub position: usize,
    pub engine: EngineId,
    pub duplicate_of: Option<usize>,
    pub accuracy: u8,
    pub diversity: u8,
    pub novelty: u8,
    pub serendipity: u8,
    pub attention_deviation: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionExport {
    pub session_id: String,
    pub state: SessionState,
    pub demographics: Demographics,
    pub elicitation_items: Vec<String>,
    pub ratings: Option<BTreeMap<String, u8>>,
    pub beta_raw: Option<u8>,
    pub xi_raw: Option<u8>,
    pub beta: Option<f64>,
    pub xi: Option<f64>,
    pub engine_order: Vec<EngineId>,
    pub served: Vec<Served>,
    pub feedback: Vec<Likert>,
    pub attention: Option<AttentionCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyExport {
    pub sessions: Vec<SessionExport>,
    pub feedback_rows: Vec<FeedbackRow>,
}

fn attention(session: &Session) -> Option<AttentionCheck> {
    let (first, second) = session.duplicate_pair()?;
    let diff = match (session.feedback.get(first), session.feedback.get(second)) {
        (Some(a), Some(b)) => Some(
            a.values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| x.abs_diff(y))
                .max()
                .unwrap_or(0),
        ),
        _ => None,
    };
    Some(AttentionCheck {
        engine: session.engine_order[first],
        original_position: first,
        duplicate_position: second,
        max_abs_diff: diff,
        deviation: diff.map(|d| d > ATTENTION_THRESHOLD),
    })
}

fn export_session(session: &Session) -> SessionExport {
    SessionExport {
        session_id: session.id.clone(),
        state: session.state(),
        demographics: session.demographics.clone(),
        elicitation_items: session.elicitation_items.clone(),
        ratings: session.ratings.clone(),
        beta_raw: session.tolerances.map(|t| t.0),
        xi_raw: session.tolerances.map(|t| t.1),
        beta: session.tolerances.map(|t| likert_to_unit(t.0)),
        xi: session.tolerances.map(|t| likert_to_unit(t.1)),
        engine_order: session.engine_order.clone(),
        served: session.served.clone(),
        feedback: session.feedback.clone(),
        attention: attention(session),
    }
}

pub type SharedSession = Arc<tokio::sync::Mutex<Session>>;

/// Everything the handlers share.
pub struct AppState {
    recommender: Arc<Recommender>,
    config: ServiceConfig,
    store: Store,
    sessions: RwLock<HashMap<String, SharedSession>>,
    /// Session ids in creation order.
    order: Mutex<Vec<String>>,
    rng: Mutex<ChaCha8Rng>,
}

impl AppState {
    /// Opens the data directory and replays every stored session.
    pub fn open(recommender: Arc<Recommender>, config: ServiceConfig, data_dir: &Path) -> Result<Arc<Self>, ServiceError> {
        if config.engines.is_empty() {
            return Err(ServiceError::NoEngines);
        }
        if let Some(e) = config.engines.iter().find(|e| !recommender.has_backbone(e.backbone)) {
            return Err(ServiceError::MissingBackbone(*e));
        }
        let (store, recovered) = Store::open(data_dir)?;
        let mut sessions = HashMap::new();
        let mut order = Vec::new();
        for rec in recovered {
            let session = Session::from_events(rec.events, rec.log).map_err(|message| ServiceError::Replay {
                session: "?".into(),
                message,
            })?;
            order.push(session.id.clone());
            sessions.insert(session.id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
        }
        tracing::info!(sessions = sessions.len(), dir = %data_dir.display(), "store opened");
        let rng = match config.seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_os_rng(),
        };
        Ok(Arc::new(Self {
            recommender,
            config,
            store,
            sessions: RwLock::new(sessions),
            order: Mutex::new(order),
            rng: Mutex::new(rng),
        }))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn recommender(&self) -> &Recommender {
        &self.recommender
    }

    pub fn session(&self, id: &str) -> Option<SharedSession> {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    /// Samples elicitation items and engine order, persists, and registers
    /// a new session.
    pub fn create_session(&self, demographics: Demographics) -> io::Result<SharedSession> {
        let (id, mut rng) = {
            let mut master = self.rng.lock().unwrap_or_else(|e| e.into_inner());
            let sessions = self.sessions.read().unwrap_or_else(|e| e.into_inner());
            let id = loop {
                let id = format!("{:032x}", master.random::<u128>());
                if !sessions.contains_key(&id) {
                    break id;
                }
            };
            (id, ChaCha8Rng::seed_from_u64(master.random()))
        };
        let elicitation_items = sample_elicitation(&self.recommender, &mut rng);
        let engine_order = sample_engine_order(&self.config.engines, &mut rng);
        let created = Event::Created {
            session_id: id.clone(),
            demographics: demographics.clone(),
            elicitation_items: elicitation_items.clone(),
            engine_order: engine_order.iter().map(ToString::to_string).collect(),
        };
        let log = self.store.create_session(&id, &created)?;
        let session = Arc::new(tokio::sync::Mutex::new(Session {
            id: id.clone(),
            demographics,
            elicitation_items,
            engine_order,
            ratings: None,
            tolerances: None,
            served: Vec::new(),
            feedback: Vec::new(),
            log,
        }));
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(id.clone(), session.clone());
        self.order.lock().unwrap_or_else(|e| e.into_inner()).push(id);
        Ok(session)
    }

    pub async fn export(&self) -> StudyExport {
        let ids = self.order.lock().unwrap_or_else(|e| e.into_inner()).clone();
        let mut sessions = Vec::with_capacity(ids.len());
        let mut feedback_rows = Vec::new();
        for id in ids {
            let Some(shared) = self.session(&id) else { continue };
            let session = shared.lock().await;
            let export = export_session(&session);
            let deviation = export.attention.as_ref().and_then(|a| a.deviation);
            for (position, fb) in session.feedback.iter().enumerate() {
                feedback_rows.push(FeedbackRow {
                    session_id: session.id.clone(),
                    position,
                    engine: session.engine_order[position],
                    duplicate_of: session.original_of(position),
                    accuracy: fb.accuracy,
                    diversity: fb.diversity,
                    novelty: fb.novelty,
                    serendipity: fb.serendipity,
                    attention_deviation: deviation,
                });
            }
            sessions.push(export);
        }
        StudyExport {
            sessions,
            feedback_rows,
        }
    }

    /// Writes the study export as pretty JSON.
    pub async fn export_to_path(&self, path: &Path) -> io::Result<()> {
        let export = self.export().await;
        let text = serde_json::to_string_pretty(&export).map_err(io::Error::other)?;
        std::fs::write(path, text)
    }

    pub fn data_dir(&self) -> &Path {
        self.store.dir()
    }
}

/// One painting per story group, uniform among members not already taken.
fn sample_elicitation(recommender: &Recommender, rng: &mut ChaCha8Rng) -> Vec<String> {
    let collection = recommender.collection();
    let mut chosen: Vec<usize> = Vec::new();
    for members in collection.group_members() {
        let free: Vec<usize> = members.iter().copied().filter(|m| !chosen.contains(m)).collect();
        if free.is_empty() {
            continue;
        }
        chosen.push(free[rng.random_range(0..free.len())]);
    }
    chosen.into_iter().map(|i| collection.id(i).to_owned()).collect()
}

/// A shuffled engine list with one engine inserted a second time at a
/// random position.
fn sample_engine_order(engines: &[EngineId], rng: &mut ChaCha8Rng) -> Vec<EngineId> {
    let mut order = engines.to_vec();
    order.shuffle(rng);
    let dup = order[rng.random_range(0..order.len())];
    let at = rng.random_range(0..=order.len());
    order.insert(at, dup);
    order
}

/// Validation failures that map onto 4xx responses.
#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    Invalid { code: &'static str, message: String, field: Option<String> },
    Conflict { code: &'static str, message: String },
}

fn invalid(code: &'static str, message: impl Into<String>, field: impl Into<String>) -> Rejection {
    Rejection::Invalid {
        code,
        message: message.into(),
        field: Some(field.into()),
    }
}

fn conflict(code: &'static str, message: impl Into<String>) -> Rejection {
    Rejection::Conflict {
        code,
        message: message.into(),
    }
}

#[derive(Debug)]
pub enum ActionError {
    Rejected(Rejection),
    Storage(io::Error),
    Engine(String),
}

impl From<Rejection> for ActionError {
    fn from(r: Rejection) -> Self {
        ActionError::Rejected(r)
    }
}

impl From<io::Error> for ActionError {
    fn from(e: io::Error) -> Self {
        ActionError::Storage(e)
    }
}

fn check_likert(field: &str, value: i64) -> Result<u8, Rejection> {
    if (i64::from(MIN_RATING)..=i64::from(MAX_RATING)).contains(&value) {
        Ok(value as u8)
    } else {
        Err(invalid("out_of_range", format!("{field} = {value} is outside 1..=5"), field))
    }
}

/// What `next` hands back.
#[derive(Debug, Clone, PartialEq)]
pub enum NextSet {
    Set { position: usize, items: Vec<String> },
    Done,
}

impl AppState {
    pub fn submit_ratings(&self, session: &mut Session, ratings: &BTreeMap<String, i64>) -> Result<(), ActionError> {
        if session.state() != SessionState::Created {
            return Err(conflict("invalid_state", "ratings were already submitted").into());
        }
        let missing: Vec<&str> = session
            .elicitation_items
            .iter()
            .filter(|id| !ratings.contains_key(*id))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(invalid("missing_ratings", format!("missing ratings for {}", missing.join(", ")), "ratings").into());
        }
        let extra: Vec<&str> = ratings
            .keys()
            .filter(|id| !session.elicitation_items.contains(id))
            .map(String::as_str)
            .collect();
        if !extra.is_empty() {
            return Err(invalid("unexpected_ratings", format!("not elicited: {}", extra.join(", ")), "ratings").into());
        }
        let mut checked = BTreeMap::new();
        for (id, &value) in ratings {
            checked.insert(id.clone(), check_likert(&format!("ratings.{id}"), value)?);
        }
        session.record(Event::Ratings { ratings: checked })?;
        Ok(())
    }

    pub fn submit_tolerances(&self, session: &mut Session, beta_raw: i64, xi_raw: i64) -> Result<(f64, f64), ActionError> {
        if !matches!(session.state(), SessionState::Created | SessionState::Elicited) {
            return Err(conflict("invalid_state", "tolerances are fixed once recommendations start").into());
        }
        let b = check_likert("beta", beta_raw)?;
        let x = check_likert("xi", xi_raw)?;
        session.record(Event::Tolerances { beta_raw: b, xi_raw: x })?;
        Ok((likert_to_unit(b), likert_to_unit(x)))
    }

    /// Serves the next set, or the pending one again if feedback is owed.
    pub fn next_set(&self, session: &mut Session) -> Result<NextSet, ActionError> {
        match session.state() {
            SessionState::Created => {
                return Err(conflict("invalid_state", "submit ratings before requesting recommendations").into())
            }
            SessionState::Done => return Ok(NextSet::Done),
            SessionState::Elicited | SessionState::Recommending => {}
        }
        if let Some(position) = session.pending() {
            return Ok(NextSet::Set {
                position,
                items: session.served[position].items.clone(),
            });
        }
        let Some(profile) = session.profile() else {
            return Err(conflict("tolerances_missing", "submit tolerances before requesting recommendations").into());
        };
        let position = session.served.len();
        let engine = session.engine_order[position];
        let (items, replay_of, optimal) = match session.original_of(position) {
            Some(orig) => {
                let original = &session.served[orig];
                (original.items.clone(), Some(orig), original.optimal)
            }
            None => {
                let out = self
                    .recommender
                    .recommend(EngineSpec::new(engine).with_r(self.config.r), &profile)
                    .map_err(|e| ActionError::Engine(e.to_string()))?;
                let ids = out.items.into_iter().map(|i| i.id).collect();
                (ids, None, out.optimal)
            }
        };
        session.record(Event::Served {
            position,
            engine: engine.to_string(),
            items: items.clone(),
            replay_of,
            optimal,
        })?;
        Ok(NextSet::Set { position, items })
    }

    pub fn submit_feedback(
        &self,
        session: &mut Session,
        values: [i64; 4],
        position: Option<usize>,
    ) -> Result<usize, ActionError> {
        let Some(pending) = session.pending() else {
            return Err(conflict("nothing_pending", "no recommendation set is awaiting feedback").into());
        };
        if let Some(p) = position {
            if p != pending {
                return Err(conflict("nothing_pending", format!("set {p} is not awaiting feedback")).into());
            }
        }
        let names = ["accuracy", "diversity", "novelty", "serendipity"];
        let mut v = [0u8; 4];
        for i in 0..4 {
            v[i] = check_likert(names[i], values[i])?;
        }
        let feedback = Likert {
            accuracy: v[0],
            diversity: v[1],
            novelty: v[2],
            serendipity: v[3],
        };
        session.record(Event::Feedback {
            position: pending,
            feedback,
        })?;
        Ok(pending)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn likert_mapping() {
        assert_eq!(likert_to_unit(1), 0.0);
        assert_eq!(likert_to_unit(3), 0.5);
        assert_eq!(likert_to_unit(5), 1.0);
    }

    #[test]
    fn engine_order_has_one_duplicate() {
        let engines: Vec<EngineId> = ServiceConfig::default().engines;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let order = sample_engine_order(&engines, &mut rng);
            assert_eq!(order.len(), engines.len() + 1);
            for e in &engines {
                assert!(order.contains(e));
            }
            let mut sorted = order.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), engines.len());
        }
    }
}
