//! Replays provider responses recorded in episode traces.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{CallMeta, Provider, ProviderError, Request, Role};
use crate::session::TraceEvent;

#[derive(Debug, Clone)]
struct Recorded {
    role: Role,
    request_hash: String,
    outcome: Result<String, String>,
}

/// Answers calls by `(episode_id, seq)`, checking that the role and the
/// request hash match what was recorded.
#[derive(Debug, Default, Clone)]
pub struct ReplayProvider {
    calls: HashMap<(String, u64), Recorded>,
}

#[derive(Deserialize)]
struct TraceFile {
    episode_id: String,
    events: Vec<TraceEvent>,
}

impl ReplayProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_events(&mut self, episode_id: &str, events: &[TraceEvent]) {
        for ev in events {
            if let TraceEvent::Call {
                seq,
                role,
                request_hash,
                response,
                error,
                ..
            } = ev
            {
                let outcome = match (response, error) {
                    (Some(r), _) => Ok(r.clone()),
                    (None, e) => Err(e.clone().unwrap_or_default()),
                };
                self.calls.insert(
                    (episode_id.to_string(), *seq),
                    Recorded {
                        role: *role,
                        request_hash: request_hash.clone(),
                        outcome,
                    },
                );
            }
        }
    }

    /// Loads every `*.json` trace in `dir`.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut out = Self::new();
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            let trace: TraceFile = serde_json::from_str(&text).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))
            })?;
            out.add_events(&trace.episode_id, &trace.events);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }
}

impl Provider for ReplayProvider {
    fn respond(&self, meta: &CallMeta, _: &Request) -> Result<String, ProviderError> {
        let rec = self
            .calls
            .get(&(meta.episode_id.clone(), meta.seq))
            .ok_or_else(|| ProviderError::Replay(format!("no recorded call {} of {}", meta.seq, meta.episode_id)))?;
        if rec.role != meta.role {
            return Err(ProviderError::Replay(format!(
                "call {} of {} was recorded for {}, requested by {}",
                meta.seq, meta.episode_id, rec.role, meta.role
            )));
        }
        if rec.request_hash != meta.request_hash {
            return Err(ProviderError::Replay(format!(
                "request {} of {} differs from the recording",
                meta.seq, meta.episode_id
            )));
        }
        rec.outcome.clone().map_err(ProviderError::Failed)
    }
}
