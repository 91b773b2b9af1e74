//! Per-episode call context: dispatches provider calls, keeps the cost
//! ledger and the trace event log.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::provider::{digest_str, CallMeta, ProviderError, Providers, Request, Role};

/// Cost counters for one role.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RoleCost {
    pub calls: u64,
    pub failures: u64,
    pub prompt_chars: u64,
    pub response_chars: u64,
    pub est_tokens: u64,
    /// Wall time is kept out of persisted records so they stay reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Equality ignores wall time.
impl PartialEq for RoleCost {
    fn eq(&self, other: &Self) -> bool {
        (self.calls, self.failures, self.prompt_chars, self.response_chars, self.est_tokens)
            == (other.calls, other.failures, other.prompt_chars, other.response_chars, other.est_tokens)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub roles: BTreeMap<String, RoleCost>,
    pub unanimous_steps: u64,
    pub split_steps: u64,
}

impl CostLedger {
    /// Token estimate: characters / 4, rounded up.
    pub fn estimate_tokens(chars: usize) -> u64 {
        (chars as u64).div_ceil(4)
    }

    pub fn record(&mut self, role: Role, prompt_chars: usize, response_chars: usize, ok: bool, wall: Duration) {
        let entry = self.roles.entry(role.to_string()).or_default();
        entry.calls += 1;
        if !ok {
            entry.failures += 1;
        }
        entry.prompt_chars += prompt_chars as u64;
        entry.response_chars += response_chars as u64;
        entry.est_tokens += Self::estimate_tokens(prompt_chars + response_chars);
        entry.wall_time += wall;
    }

    pub fn calls(&self, role: Role) -> u64 {
        self.roles.get(&role.to_string()).map_or(0, |c| c.calls)
    }

    pub fn follower_calls(&self) -> u64 {
        self.roles
            .iter()
            .filter(|(k, _)| k.starts_with("follower["))
            .map(|(_, c)| c.calls)
            .sum()
    }

    pub fn total_calls(&self) -> u64 {
        self.roles.values().map(|c| c.calls).sum()
    }

    pub fn total_tokens(&self) -> u64 {
        self.roles.values().map(|c| c.est_tokens).sum()
    }

    /// Calls made to LLM-backed roles (planner, tie-breaker, extractor).
    pub fn llm_calls(&self) -> u64 {
        self.calls(Role::Planner) + self.calls(Role::TieBreaker) + self.calls(Role::Extractor)
    }

    pub fn merge(&mut self, other: &CostLedger) {
        for (role, cost) in &other.roles {
            let e = self.roles.entry(role.clone()).or_default();
            e.calls += cost.calls;
            e.failures += cost.failures;
            e.prompt_chars += cost.prompt_chars;
            e.response_chars += cost.response_chars;
            e.est_tokens += cost.est_tokens;
            e.wall_time += cost.wall_time;
        }
        self.unanimous_steps += other.unanimous_steps;
        self.split_steps += other.split_steps;
    }
}

/// One entry of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Call {
        seq: u64,
        role: Role,
        request_hash: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        response_hash: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        response: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        error: Option<String>,
    },
    Iteration {
        index: u32,
        node: String,
        heading: f64,
    },
    Observation {
        node: String,
        text: String,
    },
    Guidance {
        direction: u16,
        text: String,
        thought: String,
    },
    ActionViolation {
        phrases: Vec<String>,
    },
    Verdict {
        feasible: bool,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        reason: Option<String>,
    },
    Vote {
        node: String,
        unanimous: bool,
        proposals: Vec<Option<String>>,
    },
    Move {
        from: String,
        to: String,
        action_text: String,
    },
    Stop {
        at: String,
    },
    Finished,
    BudgetExhausted,
    Warning {
        message: String,
    },
    Aborted {
        reason: String,
    },
    Localized {
        target_phrase: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        chosen: Option<String>,
    },
}

/// Call dispatcher owned by a single episode.
pub struct Session<'a> {
    episode_id: String,
    providers: &'a Providers,
    next_seq: u64,
    pub ledger: CostLedger,
    pub events: Vec<TraceEvent>,
}

impl<'a> Session<'a> {
    pub fn new(episode_id: impl Into<String>, providers: &'a Providers) -> Self {
        Self {
            episode_id: episode_id.into(),
            providers,
            next_seq: 0,
            ledger: CostLedger::default(),
            events: Vec::new(),
        }
    }

    pub fn episode_id(&self) -> &str {
        &self.episode_id
    }

    pub fn providers(&self) -> &Providers {
        self.providers
    }

    pub fn follower_count(&self) -> usize {
        self.providers.followers.len()
    }

    pub fn call(&mut self, role: Role, request: &Request) -> Result<String, ProviderError> {
        let meta = self.meta(role, request);
        let (out, wall) = dispatch(self.providers, &meta, request);
        self.finish(meta, request, out, wall)
    }

    /// Issues independent calls concurrently; trace order follows input order.
    pub fn call_all(&mut self, calls: Vec<(Role, Request)>) -> Vec<Result<String, ProviderError>> {
        let metas: Vec<_> = calls.iter().map(|(role, req)| self.meta(*role, req)).collect();
        let providers = self.providers;
        let outs: Vec<_> = metas
            .par_iter()
            .zip(calls.par_iter())
            .map(|(meta, (_, req))| dispatch(providers, meta, req))
            .collect();
        metas
            .into_iter()
            .zip(calls)
            .zip(outs)
            .map(|((meta, (_, req)), (out, wall))| self.finish(meta, &req, out, wall))
            .collect()
    }

    pub fn note(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        log::warn!("[{}] {message}", self.episode_id);
        self.events.push(TraceEvent::Warning { message });
    }

    pub fn into_parts(self) -> (CostLedger, Vec<TraceEvent>) {
        (self.ledger, self.events)
    }

    fn meta(&mut self, role: Role, request: &Request) -> CallMeta {
        let seq = self.next_seq;
        self.next_seq += 1;
        CallMeta {
            episode_id: self.episode_id.clone(),
            role,
            seq,
            request_hash: request.digest(),
        }
    }

    fn finish(
        &mut self,
        meta: CallMeta,
        request: &Request,
        out: Result<String, ProviderError>,
        wall: Duration,
    ) -> Result<String, ProviderError> {
        let prompt_chars = request.prompt_chars();
        let (response_chars, ok) = match &out {
            Ok(text) => (text.chars().count(), true),
            Err(_) => (0, false),
        };
        self.ledger.record(meta.role, prompt_chars, response_chars, ok, wall);
        self.events.push(TraceEvent::Call {
            seq: meta.seq,
            role: meta.role,
            request_hash: meta.request_hash,
            response_hash: out.as_ref().ok().map(|t| digest_str(t)),
            response: out.as_ref().ok().cloned(),
            error: out.as_ref().err().map(ToString::to_string),
        });
        out
    }
}

fn dispatch(
    providers: &Providers,
    meta: &CallMeta,
    request: &Request,
) -> (Result<String, ProviderError>, Duration) {
    let start = Instant::now();
    let out = match providers.for_role(meta.role) {
        Some(p) => p.respond(meta, request),
        None => Err(ProviderError::Failed(format!("no provider bound for {}", meta.role))),
    };
    (out, start.elapsed())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_estimate_rounds_up() {
        assert_eq!(CostLedger::estimate_tokens(0), 0);
        assert_eq!(CostLedger::estimate_tokens(4), 1);
        assert_eq!(CostLedger::estimate_tokens(5), 2);
    }

    #[test]
    fn ledger_counts_per_role() {
        let mut l = CostLedger::default();
        l.record(Role::Planner, 40, 8, true, Duration::ZERO);
        l.record(Role::Follower(1), 4, 4, false, Duration::ZERO);
        assert_eq!(l.calls(Role::Planner), 1);
        assert_eq!(l.follower_calls(), 1);
        assert_eq!(l.total_tokens(), 12 + 2);
        assert_eq!(l.roles["follower[1]"].failures, 1);
    }

    #[test]
    fn wall_time_not_serialized() {
        let mut l = CostLedger::default();
        l.record(Role::Planner, 1, 1, true, Duration::from_secs(3));
        let json = serde_json::to_string(&l).unwrap();
        assert!(!json.contains("wall"));
    }
}
