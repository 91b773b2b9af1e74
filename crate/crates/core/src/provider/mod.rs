//! Pluggable model roles.
//!
//! Every external model (planner, verifier, followers, tie-breaker,
//! perceiver, target extractor, object scorer) is reached through the
//! [`Provider`] trait: a typed [`Request`] goes in, raw response text comes
//! out. Parsing the text is the job of the pipeline step that made the call,
//! so mocks, live HTTP adapters and replayed recordings are interchangeable.

pub mod chat;
pub mod mock;
pub mod replay;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use chat::{ChatAdapter, ChatBinding};
pub use replay::ReplayProvider;

const PERCEIVE_ROUND1_SYSTEM: &str = include_str!("../../prompts/perceive_round1.txt");
const PERCEIVE_ROUND2_SYSTEM: &str = include_str!("../../prompts/perceive_round2.txt");
const VERIFY_SYSTEM: &str = include_str!("../../prompts/verify.txt");
const FOLLOW_SYSTEM: &str = include_str!("../../prompts/follow.txt");
const EXTRACT_SYSTEM: &str = include_str!("../../prompts/extract.txt");
const SCORE_SYSTEM: &str = include_str!("../../prompts/score.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("replay divergence: {0}")]
    Replay(String),
    #[error("provider failure: {0}")]
    Failed(String),
}

/// The model role a call is made for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Perceiver,
    Planner,
    Verifier,
    Follower(usize),
    TieBreaker,
    Extractor,
    Scorer,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Perceiver => f.write_str("perceiver"),
            Role::Planner => f.write_str("planner"),
            Role::Verifier => f.write_str("verifier"),
            Role::Follower(i) => write!(f, "follower[{i}]"),
            Role::TieBreaker => f.write_str("tie_breaker"),
            Role::Extractor => f.write_str("extractor"),
            Role::Scorer => f.write_str("scorer"),
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "perceiver" => Role::Perceiver,
            "planner" => Role::Planner,
            "verifier" => Role::Verifier,
            "tie_breaker" => Role::TieBreaker,
            "extractor" => Role::Extractor,
            "scorer" => Role::Scorer,
            other => {
                let idx = other
                    .strip_prefix("follower[")
                    .and_then(|r| r.strip_suffix(']'))
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| format!("unknown role `{other}`"))?;
                Role::Follower(idx)
            }
        })
    }
}

impl Serialize for Role {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// One egocentric view handed to a vision-side provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewPayload {
    pub label: String,
    /// Agent-relative bucket in degrees.
    pub bucket: u16,
    /// Stored description when the environment carries one.
    pub scene_text: Option<String>,
    /// Stable reference to the image this view stands for.
    pub image_ref: String,
}

impl ViewPayload {
    fn render(&self) -> String {
        match &self.scene_text {
            Some(text) => format!("{}: {}", self.label, text),
            None => format!("{}: <image {}>", self.label, self.image_ref),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceiveRequest {
    /// Conversation round: 1 describes the views, 2 infers the position.
    pub round: u8,
    pub views: Vec<ViewPayload>,
    /// Round-1 descriptions, present in round 2.
    #[serde(default)]
    pub descriptions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub view: ViewPayload,
    pub guidance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborInfo {
    pub id: String,
    /// Heading relative to the agent, degrees in (-180, 180].
    pub relative_heading: f64,
    pub distance: f64,
    pub height_delta: f64,
    /// Names of objects within detection range of the neighbor.
    pub landmarks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerRequest {
    pub context: String,
    pub current_node: String,
    pub here_landmarks: Vec<String>,
    pub observation: String,
    pub neighbors: Vec<NeighborInfo>,
    pub memory_map: String,
    pub visited: Vec<String>,
    /// Moves already executed for the current guidance.
    pub moves_so_far: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub target: String,
    pub candidates: Vec<String>,
}

/// A request to one provider role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Request {
    Perceive(PerceiveRequest),
    Plan { messages: Vec<ChatMessage> },
    Verify(VerifyRequest),
    Follow(FollowerRequest),
    TieBreak { prompt: String },
    Extract { instruction: String },
    Score(ScoreRequest),
}

impl Request {
    /// Chat-format rendering used by the HTTP adapter and for cost accounting.
    pub fn messages(&self) -> Vec<ChatMessage> {
        match self {
            Request::Perceive(p) => {
                let views = p.views.iter().map(ViewPayload::render).collect::<Vec<_>>().join("\n");
                if p.round == 1 {
                    vec![
                        ChatMessage::system(PERCEIVE_ROUND1_SYSTEM.trim_end()),
                        ChatMessage::user(views),
                    ]
                } else {
                    vec![
                        ChatMessage::system(PERCEIVE_ROUND2_SYSTEM.trim_end()),
                        ChatMessage::user(format!(
                            "{views}\n\nDescriptions:\n{}",
                            p.descriptions.join("\n")
                        )),
                    ]
                }
            }
            Request::Plan { messages } => messages.clone(),
            Request::Verify(v) => vec![
                ChatMessage::system(VERIFY_SYSTEM.trim_end()),
                ChatMessage::user(format!("View {}\nGuidance: {}", v.view.render(), v.guidance)),
            ],
            Request::Follow(f) => vec![
                ChatMessage::system(FOLLOW_SYSTEM.trim_end()),
                ChatMessage::user(serde_json::to_string(f).expect("request serializes")),
            ],
            Request::TieBreak { prompt } => vec![ChatMessage::user(prompt.clone())],
            Request::Extract { instruction } => vec![
                ChatMessage::system(EXTRACT_SYSTEM.trim_end()),
                ChatMessage::user(instruction.clone()),
            ],
            Request::Score(s) => vec![
                ChatMessage::system(SCORE_SYSTEM.trim_end()),
                ChatMessage::user(serde_json::to_string(s).expect("request serializes")),
            ],
        }
    }

    /// Total characters of the chat rendering.
    pub fn prompt_chars(&self) -> usize {
        self.messages().iter().map(|m| m.content.chars().count()).sum()
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn digest(&self) -> String {
        digest_str(&serde_json::to_string(self).expect("request serializes"))
    }
}

pub fn digest_str(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Identifies one provider call within an episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallMeta {
    pub episode_id: String,
    pub role: Role,
    pub seq: u64,
    pub request_hash: String,
}

pub trait Provider: Send + Sync {
    fn respond(&self, meta: &CallMeta, request: &Request) -> Result<String, ProviderError>;

    /// Maximum number of concurrent calls this provider accepts.
    fn max_concurrency(&self) -> Option<usize> {
        None
    }
}

impl<P: Provider + ?Sized> Provider for Arc<P> {
    fn respond(&self, meta: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        (**self).respond(meta, request)
    }

    fn max_concurrency(&self) -> Option<usize> {
        (**self).max_concurrency()
    }
}

/// Counting semaphore limiting in-flight calls to one provider.
struct Gate {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// A provider plus the concurrency limit it declared.
#[derive(Clone)]
pub struct BoundProvider {
    inner: Arc<dyn Provider>,
    gate: Option<Arc<Gate>>,
}

impl BoundProvider {
    pub fn new(inner: Arc<dyn Provider>) -> Self {
        let gate = inner.max_concurrency().map(|limit| {
            Arc::new(Gate {
                limit: limit.max(1),
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
            })
        });
        Self { inner, gate }
    }

    pub fn respond(&self, meta: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        let _guard = self.gate.as_ref().map(|g| g.acquire());
        self.inner.respond(meta, request)
    }
}

impl fmt::Debug for BoundProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundProvider")
            .field("limit", &self.gate.as_ref().map(|g| g.limit))
            .finish()
    }
}

/// Provider bindings for every role of one run.
#[derive(Debug, Clone)]
pub struct Providers {
    pub perceiver: BoundProvider,
    pub planner: BoundProvider,
    pub verifier: BoundProvider,
    pub followers: Vec<BoundProvider>,
    pub tie_breaker: BoundProvider,
    pub extractor: BoundProvider,
    pub scorer: BoundProvider,
}

impl Providers {
    /// Binds the same provider to every role, with `followers` follower slots.
    pub fn uniform(provider: Arc<dyn Provider>, followers: usize) -> Self {
        let p = BoundProvider::new(provider);
        Self {
            perceiver: p.clone(),
            planner: p.clone(),
            verifier: p.clone(),
            followers: vec![p.clone(); followers],
            tie_breaker: p.clone(),
            extractor: p.clone(),
            scorer: p,
        }
    }

    pub fn for_role(&self, role: Role) -> Option<&BoundProvider> {
        match role {
            Role::Perceiver => Some(&self.perceiver),
            Role::Planner => Some(&self.planner),
            Role::Verifier => Some(&self.verifier),
            Role::Follower(i) => self.followers.get(i),
            Role::TieBreaker => Some(&self.tie_breaker),
            Role::Extractor => Some(&self.extractor),
            Role::Scorer => Some(&self.scorer),
        }
    }

    pub fn set(&mut self, role: Role, provider: Arc<dyn Provider>) {
        let bound = BoundProvider::new(provider);
        match role {
            Role::Perceiver => self.perceiver = bound,
            Role::Planner => self.planner = bound,
            Role::Verifier => self.verifier = bound,
            Role::Follower(i) => {
                if i >= self.followers.len() {
                    self.followers.resize(i + 1, bound.clone());
                }
                self.followers[i] = bound;
            }
            Role::TieBreaker => self.tie_breaker = bound,
            Role::Extractor => self.extractor = bound,
            Role::Scorer => self.scorer = bound,
        }
    }

    pub fn with(mut self, role: Role, provider: Arc<dyn Provider>) -> Self {
        self.set(role, provider);
        self
    }

    pub fn with_followers(mut self, followers: Vec<Arc<dyn Provider>>) -> Self {
        self.followers = followers.into_iter().map(BoundProvider::new).collect();
        self
    }
}
