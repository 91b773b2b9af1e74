//! Feasibility verification of planner guidances, and the bounded
//! plan → verify → re-plan loop.

use serde::{Deserialize, Serialize};

use crate::perceive::{Observation, Orientation, ViewDescriptor};
use crate::plan::{
    build_plan_prompt, parse_planner_output, validate_action_phrases, Guidance, NavHistory,
    PlannerOutput, ViolationPolicy,
};
use crate::provider::{ProviderError, Request, Role, VerifyRequest, ViewPayload};
use crate::session::{Session, TraceEvent};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Feasible,
    Infeasible(String),
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Verdict::Feasible)
    }
}

/// The view in the planner's chosen direction.
pub fn select_direction_view(observation: &Observation, direction: u16) -> &ViewDescriptor {
    let o = Orientation::from_bucket(direction).unwrap_or(Orientation::Front);
    observation.view(o)
}

/// Parses a verifier reply. `None` means the reply did not follow the contract.
pub fn parse_verdict(raw: &str) -> Option<Verdict> {
    let text = raw.trim();
    let upper = text.to_ascii_uppercase();
    if upper.starts_with("INFEASIBLE") {
        let reason = text["INFEASIBLE".len()..]
            .trim_start_matches([':', '-', ',', '.', ' ', '\n', '\t'])
            .trim();
        let reason = if reason.is_empty() { "no reason given" } else { reason };
        Some(Verdict::Infeasible(reason.to_string()))
    } else if upper.starts_with("FEASIBLE") {
        Some(Verdict::Feasible)
    } else {
        None
    }
}

/// Asks the verifier whether `guidance` can be followed given `view`.
/// Transport or parse failures fail open.
pub fn verify(session: &mut Session<'_>, view: &ViewDescriptor, node: &str, guidance: &Guidance) -> Verdict {
    let request = Request::Verify(VerifyRequest {
        view: ViewPayload {
            label: view.orientation_label().to_string(),
            bucket: view.orientation_bucket(),
            scene_text: Some(view.scene_text.clone()),
            image_ref: format!("{node}/{}", view.orientation_label()),
        },
        guidance: guidance.text.clone(),
    });
    let verdict = match session.call(Role::Verifier, &request) {
        Ok(raw) => match parse_verdict(&raw) {
            Some(v) => v,
            None => {
                session.warn(format!("unparseable verifier reply `{raw}`; treating as feasible"));
                Verdict::Feasible
            }
        },
        Err(e) => {
            session.warn(format!("verifier unavailable ({e}); treating as feasible"));
            Verdict::Feasible
        }
    };
    session.note(TraceEvent::Verdict {
        feasible: verdict.is_feasible(),
        reason: match &verdict {
            Verdict::Infeasible(r) => Some(r.clone()),
            Verdict::Feasible => None,
        },
    });
    verdict
}

/// Knobs of the plan/verify loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopLimits {
    /// Planner uses allowed per iteration, including re-plans.
    pub replan_cap: u32,
    /// Extra planner calls on unparseable output; not counted as uses.
    pub parse_retries: u32,
    /// Planner uses still available in the episode budget.
    pub remaining_uses: u32,
    pub violation_policy: ViolationPolicy,
}

/// Inputs to one plan/verify round.
pub struct PlanContext<'a> {
    pub principle: &'a str,
    pub instruction: &'a str,
    pub history: &'a NavHistory,
    pub observation: &'a Observation,
    pub include_guidance_in_history: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoopOutcome {
    Finished,
    Accepted(Guidance),
    /// The planner never produced parseable output.
    Failed(String),
    /// A provider error the episode cannot recover from.
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopReport {
    pub outcome: LoopOutcome,
    /// Planner uses consumed (parsed outputs, including re-plans).
    pub planner_uses: u32,
}

/// Plans, verifies and re-plans with feedback until a guidance is feasible,
/// the planner finishes, or `replan_cap` uses are spent. On cap exhaustion
/// the most recent guidance is accepted.
pub fn plan_verify_loop(session: &mut Session<'_>, ctx: &PlanContext<'_>, limits: &LoopLimits) -> LoopReport {
    let cap = limits.replan_cap.max(1).min(limits.remaining_uses);
    let mut uses = 0;
    let mut feedback: Option<String> = None;
    let mut last: Option<Guidance> = None;
    let mut strict_replanned = false;

    while uses < cap {
        let messages = build_plan_prompt(
            ctx.principle,
            ctx.instruction,
            ctx.history,
            ctx.observation,
            feedback.as_deref(),
            ctx.include_guidance_in_history,
        );
        let request = Request::Plan { messages };
        let output = match call_planner(session, &request, limits.parse_retries) {
            Ok(Some(out)) => out,
            Ok(None) => {
                return LoopReport {
                    outcome: LoopOutcome::Failed("planner output unparseable after retries".into()),
                    planner_uses: uses + 1,
                }
            }
            Err(e) => {
                return LoopReport {
                    outcome: LoopOutcome::Aborted(format!("planner failed: {e}")),
                    planner_uses: uses,
                }
            }
        };
        uses += 1;

        let guidance = match output {
            PlannerOutput::Finished => {
                session.note(TraceEvent::Finished);
                return LoopReport {
                    outcome: LoopOutcome::Finished,
                    planner_uses: uses,
                };
            }
            PlannerOutput::Plan(g) => g,
        };
        session.note(TraceEvent::Guidance {
            direction: guidance.direction,
            text: guidance.text.clone(),
            thought: guidance.thought.clone(),
        });

        if let Err(phrases) = validate_action_phrases(&guidance.text) {
            session.note(TraceEvent::ActionViolation {
                phrases: phrases.clone(),
            });
            if limits.violation_policy == ViolationPolicy::Strict && !strict_replanned && uses < cap {
                strict_replanned = true;
                feedback = Some(format!(
                    "it uses actions outside the action space ({})",
                    phrases.join(", ")
                ));
                last = Some(guidance);
                continue;
            }
        }

        let view = select_direction_view(ctx.observation, guidance.direction);
        match verify(session, view, &ctx.observation.node, &guidance) {
            Verdict::Feasible => {
                return LoopReport {
                    outcome: LoopOutcome::Accepted(guidance),
                    planner_uses: uses,
                }
            }
            Verdict::Infeasible(reason) => {
                feedback = Some(reason);
                last = Some(guidance);
            }
        }
    }

    session.warn("re-plan cap reached; proceeding with the last guidance");
    LoopReport {
        outcome: LoopOutcome::Accepted(last.expect("at least one guidance was produced")),
        planner_uses: uses,
    }
}

/// One planner use: the call plus up to `parse_retries` retries on
/// unparseable output. `Ok(None)` when every attempt was unparseable.
pub fn call_planner(
    session: &mut Session<'_>,
    request: &Request,
    parse_retries: u32,
) -> Result<Option<PlannerOutput>, ProviderError> {
    for _ in 0..=parse_retries {
        let raw = session.call(Role::Planner, request)?;
        match parse_planner_output(&raw) {
            Ok(out) => return Ok(Some(out)),
            Err(e) => session.warn(format!("planner output rejected: {e}")),
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perceive::ViewDescriptor;
    use crate::provider::mock::{AlwaysFeasible, FnProvider, KeywordVerifier, ScriptedSequence};
    use crate::provider::Providers;
    use std::sync::{Arc, Mutex};

    fn observation() -> Observation {
        Observation::new(
            "a",
            1.5,
            0,
            "in a hallway",
            [
                ViewDescriptor { orientation: Orientation::Front, scene_text: "a long hallway".into() },
                ViewDescriptor { orientation: Orientation::Right, scene_text: "a kitchen".into() },
                ViewDescriptor { orientation: Orientation::Back, scene_text: "a closed door".into() },
                ViewDescriptor { orientation: Orientation::Left, scene_text: "a staircase".into() },
            ],
            vec![],
        )
    }

    #[test]
    fn direction_views_are_distinct() {
        let obs = observation();
        assert_eq!(select_direction_view(&obs, 0).scene_text, "a long hallway");
        assert_eq!(select_direction_view(&obs, 270).scene_text, "a staircase");
        let all: std::collections::HashSet<_> =
            [0, 90, 180, 270].iter().map(|&d| select_direction_view(&obs, d).scene_text.clone()).collect();
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("FEASIBLE"), Some(Verdict::Feasible));
        assert_eq!(parse_verdict("  feasible."), Some(Verdict::Feasible));
        assert_eq!(
            parse_verdict("INFEASIBLE: the door is closed"),
            Some(Verdict::Infeasible("the door is closed".into()))
        );
        assert_eq!(parse_verdict("INFEASIBLE"), Some(Verdict::Infeasible("no reason given".into())));
        assert_eq!(parse_verdict("maybe"), None);
    }

    fn guidance(text: &str) -> Guidance {
        Guidance { thought: String::new(), direction: 0, text: text.into() }
    }

    #[test]
    fn keyword_verifier_rejects() {
        let providers = Providers::uniform(
            Arc::new(KeywordVerifier::new(vec![("closed door".into(), "the door is closed".into())])),
            1,
        );
        let mut s = Session::new("e", &providers);
        let obs = observation();
        let v = verify(&mut s, obs.view(Orientation::Front), "a", &guidance("go through the closed door"));
        assert_eq!(v, Verdict::Infeasible("the door is closed".into()));
        assert!(verify(&mut s, obs.view(Orientation::Front), "a", &guidance("go forward")).is_feasible());
    }

    #[test]
    fn verifier_failures_fail_open() {
        let providers = Providers::uniform(
            Arc::new(FnProvider::new(|_, _| Err(ProviderError::Transport("down".into())))),
            1,
        );
        let mut s = Session::new("e", &providers);
        let obs = observation();
        assert!(verify(&mut s, obs.view(Orientation::Front), "a", &guidance("go forward")).is_feasible());
        let providers = Providers::uniform(Arc::new(FnProvider::new(|_, _| Ok("hmm".into()))), 1);
        let mut s = Session::new("e", &providers);
        assert!(verify(&mut s, obs.view(Orientation::Front), "a", &guidance("go forward")).is_feasible());
        assert!(s.events.iter().any(|e| matches!(e, TraceEvent::Warning { .. })));
    }

    const PLAN: &str = "Thought: t\nDirection: front\nGuidance: go forward to the lamp";

    fn limits(cap: u32) -> LoopLimits {
        LoopLimits { replan_cap: cap, parse_retries: 2, remaining_uses: 10, violation_policy: ViolationPolicy::Warn }
    }

    fn run(verifier: Arc<dyn crate::provider::Provider>, planner: Arc<dyn crate::provider::Provider>, cap: u32) -> (LoopReport, Session<'static>) {
        let providers = Box::leak(Box::new(
            Providers::uniform(Arc::new(AlwaysFeasible), 1)
                .with(Role::Verifier, verifier)
                .with(Role::Planner, planner),
        ));
        let mut s = Session::new("e", providers);
        let obs = Box::leak(Box::new(observation()));
        let history = Box::leak(Box::new(NavHistory::default()));
        let ctx = PlanContext {
            principle: "SYS",
            instruction: "find the lamp",
            history,
            observation: obs,
            include_guidance_in_history: false,
        };
        let report = plan_verify_loop(&mut s, &ctx, &limits(cap));
        (report, s)
    }

    #[test]
    fn feasible_first_try() {
        let (r, s) = run(Arc::new(AlwaysFeasible), Arc::new(ScriptedSequence::new(vec![PLAN.into()])), 3);
        assert!(matches!(r.outcome, LoopOutcome::Accepted(_)));
        assert_eq!(s.ledger.calls(Role::Planner), 1);
        assert_eq!(s.ledger.calls(Role::Verifier), 1);
    }

    #[test]
    fn two_rejections_then_accept() {
        let verifier = ScriptedSequence::new(vec![
            "INFEASIBLE: the door is closed".into(),
            "INFEASIBLE: there is a wall".into(),
            "FEASIBLE".into(),
        ]);
        let prompts = Arc::new(Mutex::new(Vec::new()));
        let seen = prompts.clone();
        let planner = FnProvider::new(move |_, req| {
            if let Request::Plan { messages } = req {
                seen.lock().unwrap().push(messages[1].content.clone());
            }
            Ok(PLAN.to_string())
        });
        let (r, s) = run(Arc::new(verifier), Arc::new(planner), 3);
        assert!(matches!(r.outcome, LoopOutcome::Accepted(_)));
        assert_eq!(r.planner_uses, 3);
        assert_eq!(s.ledger.calls(Role::Planner), 3);
        assert_eq!(s.ledger.calls(Role::Verifier), 3);
        let prompts = prompts.lock().unwrap();
        assert!(!prompts[0].contains("infeasible because"));
        assert!(prompts[1].ends_with("The previous guidance was infeasible because: the door is closed"));
        assert!(prompts[2].ends_with("The previous guidance was infeasible because: there is a wall"));
    }

    #[test]
    fn cap_exhaustion_accepts_last() {
        let n = Arc::new(Mutex::new(0));
        let counter = n.clone();
        let planner = FnProvider::new(move |_, _| {
            let mut k = counter.lock().unwrap();
            *k += 1;
            Ok(format!("Thought: t\nDirection: front\nGuidance: go forward {k}"))
        });
        let verifier = FnProvider::new(|_, _| Ok("INFEASIBLE: blocked".into()));
        let (r, s) = run(Arc::new(verifier), Arc::new(planner), 3);
        let LoopOutcome::Accepted(g) = r.outcome else { panic!("expected acceptance") };
        assert_eq!(g.text, "go forward 3");
        assert_eq!(s.ledger.calls(Role::Planner), 3);
        assert!(s.events.iter().any(|e| matches!(e, TraceEvent::Warning { message } if message.contains("cap"))));
    }

    #[test]
    fn parse_retries_do_not_count_as_uses() {
        let planner = ScriptedSequence::new(vec!["garbage".into(), "more garbage".into(), PLAN.into()]);
        let (r, s) = run(Arc::new(AlwaysFeasible), Arc::new(planner), 3);
        assert!(matches!(r.outcome, LoopOutcome::Accepted(_)));
        assert_eq!(r.planner_uses, 1);
        assert_eq!(s.ledger.calls(Role::Planner), 3);
    }

    #[test]
    fn unparseable_after_retries_fails() {
        let planner = FnProvider::new(|_, _| Ok("garbage".into()));
        let (r, s) = run(Arc::new(AlwaysFeasible), Arc::new(planner), 3);
        assert!(matches!(r.outcome, LoopOutcome::Failed(_)));
        assert_eq!(s.ledger.calls(Role::Planner), 3);
    }

    #[test]
    fn finished_during_replan() {
        let planner = ScriptedSequence::new(vec![PLAN.into(), "Finished!".into()]);
        let verifier = FnProvider::new(|_, _| Ok("INFEASIBLE: blocked".into()));
        let (r, _) = run(Arc::new(verifier), Arc::new(planner), 3);
        assert_eq!(r.outcome, LoopOutcome::Finished);
        assert_eq!(r.planner_uses, 2);
    }

    #[test]
    fn strict_policy_replans_once() {
        let planner = ScriptedSequence::new(vec![
            "Thought: t\nDirection: front\nGuidance: walk towards the lamp".into(),
            PLAN.into(),
        ]);
        let providers = Providers::uniform(Arc::new(AlwaysFeasible), 1).with(Role::Planner, Arc::new(planner));
        let mut s = Session::new("e", &providers);
        let obs = observation();
        let history = NavHistory::default();
        let ctx = PlanContext {
            principle: "SYS",
            instruction: "find the lamp",
            history: &history,
            observation: &obs,
            include_guidance_in_history: false,
        };
        let lim = LoopLimits { violation_policy: ViolationPolicy::Strict, ..limits(3) };
        let r = plan_verify_loop(&mut s, &ctx, &lim);
        assert_eq!(r.outcome, LoopOutcome::Accepted(Guidance { thought: "t".into(), direction: 0, text: "go forward to the lamp".into() }));
        assert_eq!(r.planner_uses, 2);
        assert_eq!(s.ledger.calls(Role::Verifier), 1);
    }

    #[test]
    fn remaining_budget_bounds_the_loop() {
        let planner = FnProvider::new(|_, _| Ok(PLAN.to_string()));
        let verifier = FnProvider::new(|_, _| Ok("INFEASIBLE: blocked".into()));
        let providers = Providers::uniform(Arc::new(AlwaysFeasible), 1)
            .with(Role::Planner, Arc::new(planner))
            .with(Role::Verifier, Arc::new(verifier));
        let mut s = Session::new("e", &providers);
        let obs = observation();
        let history = NavHistory::default();
        let ctx = PlanContext {
            principle: "SYS",
            instruction: "x",
            history: &history,
            observation: &obs,
            include_guidance_in_history: false,
        };
        let lim = LoopLimits { remaining_uses: 1, ..limits(3) };
        let r = plan_verify_loop(&mut s, &ctx, &lim);
        assert_eq!(r.planner_uses, 1);
        assert_eq!(s.ledger.calls(Role::Planner), 1);
    }
}
