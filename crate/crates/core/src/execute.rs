//! Guidance execution by an ensemble of instruction followers.
//!
//! At every step each follower proposes an action. Agreement is executed
//! directly; disagreement is put to the tie-breaker as a multiple-choice
//! question. A guidance ends when the chosen action is to stop, when the
//! move budget is spent, or when every follower abstains.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envgraph::{GraphError, NavGraph, OBJECT_RADIUS_M};
use crate::perceive::{discretize_views, Orientation};
use crate::provider::{FollowerRequest, NeighborInfo, Request, Role};
use crate::session::{Session, TraceEvent};
use crate::textualize::{describe_move, describe_move_symbolic, join_steps, move_geometry, HistoryStyle};

/// Follower reply meaning "the guidance is complete".
pub const STOP_TOKEN: &str = "STOP";
/// Option text for stopping in tie-break questions.
pub const STOP_OPTION: &str = "stop here";
/// Scene used when the destination carries no description.
pub const UNSEEN_SCENE: &str = "an unseen area";

const TIE_BREAK_TEMPLATE: &str = include_str!("../prompts/tie_break.txt");

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CandidateAction {
    MoveTo(String),
    Stop,
}

impl fmt::Display for CandidateAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateAction::MoveTo(n) => f.write_str(n),
            CandidateAction::Stop => f.write_str(STOP_TOKEN),
        }
    }
}

/// Topological memory of visited nodes and the edges seen from them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryMap {
    visited_nodes: Vec<String>,
    observed_edges: BTreeSet<(String, String)>,
    #[serde(skip)]
    seen: HashSet<String>,
}

impl MemoryMap {
    pub fn visit(&mut self, graph: &NavGraph, node: &str) -> Result<(), GraphError> {
        if self.seen.insert(node.to_string()) {
            self.visited_nodes.push(node.to_string());
        }
        for n in graph.neighbors(node)? {
            let key = if node < n { (node.to_string(), n.to_string()) } else { (n.to_string(), node.to_string()) };
            self.observed_edges.insert(key);
        }
        Ok(())
    }

    pub fn visited_nodes(&self) -> &[String] {
        &self.visited_nodes
    }

    pub fn observed_edges(&self) -> &BTreeSet<(String, String)> {
        &self.observed_edges
    }

    pub fn has_visited(&self, node: &str) -> bool {
        self.seen.contains(node)
    }

    pub fn summary(&self) -> String {
        let edges: Vec<String> = self.observed_edges.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        format!("visited: {}; edges: {}", self.visited_nodes.join(", "), edges.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitOption {
    pub action: CandidateAction,
    /// Indices of the followers that proposed this action.
    pub proposers: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteResult {
    Unanimous(CandidateAction),
    /// Distinct proposals in order of first appearance.
    Split(Vec<SplitOption>),
}

/// Groups follower proposals; abstentions (`None`) are ignored.
/// Returns `None` when every follower abstained.
pub fn tally(proposals: &[Option<CandidateAction>]) -> Option<VoteResult> {
    let mut options: Vec<SplitOption> = Vec::new();
    for (i, p) in proposals.iter().enumerate() {
        let Some(action) = p else { continue };
        match options.iter_mut().find(|o| &o.action == action) {
            Some(o) => o.proposers.push(i),
            None => options.push(SplitOption {
                action: action.clone(),
                proposers: vec![i],
            }),
        }
    }
    match options.len() {
        0 => None,
        1 => Some(VoteResult::Unanimous(options.pop().unwrap().action)),
        _ => Some(VoteResult::Split(options)),
    }
}

/// Most-proposed option; ties go to the option holding the lowest follower
/// index.
pub fn plurality(options: &[SplitOption]) -> CandidateAction {
    options
        .iter()
        .max_by(|a, b| {
            a.proposers
                .len()
                .cmp(&b.proposers.len())
                .then_with(|| b.proposers[0].cmp(&a.proposers[0]))
        })
        .map(|o| o.action.clone())
        .expect("options are nonempty")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub from: String,
    /// `None` marks a stop.
    pub to: Option<String>,
    pub action_text: String,
    pub turn_deg: f64,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub steps: Vec<TrajectoryStep>,
}

impl TrajectorySegment {
    pub fn moves(&self) -> usize {
        self.steps.iter().filter(|s| s.to.is_some()).count()
    }

    pub fn stopped(&self) -> bool {
        self.steps.last().is_some_and(|s| s.to.is_none())
    }

    /// Nodes moved into, in order.
    pub fn visited(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().filter_map(|s| s.to.as_deref())
    }
}

/// Text of a segment for the navigation history.
pub fn describe_trajectory(segment: &TrajectorySegment, style: HistoryStyle) -> String {
    match style {
        HistoryStyle::Landmark => join_steps(segment.steps.iter().map(|s| s.action_text.as_str())),
        HistoryStyle::Symbolic => {
            let texts: Vec<String> = segment
                .steps
                .iter()
                .filter(|s| s.to.is_some())
                .map(|s| {
                    describe_move_symbolic(&crate::textualize::MoveGeometry {
                        turn_deg: s.turn_deg,
                        new_heading: 0.0,
                        distance_m: s.distance_m,
                        height_delta_m: 0.0,
                    })
                })
                .collect();
            join_steps(texts.iter().map(String::as_str))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    Single,
    #[default]
    Multi,
}

/// Guidance text handed to followers: the latest guidance, or every
/// guidance so far joined by ". ".
pub fn guidance_context(mode: ContextMode, guidances: &[String]) -> String {
    match mode {
        ContextMode::Single => guidances.last().cloned().unwrap_or_default(),
        ContextMode::Multi => guidances.join(". "),
    }
}

/// Where the agent is and what it remembers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub node: String,
    pub heading: f64,
    pub map: MemoryMap,
    /// Every node occupied, starting with the start node.
    pub path: Vec<String>,
}

impl AgentState {
    pub fn new(graph: &NavGraph, node: &str, heading: f64) -> Result<Self, GraphError> {
        let mut map = MemoryMap::default();
        map.visit(graph, node)?;
        Ok(Self {
            node: node.to_string(),
            heading: crate::envgraph::normalize_heading(heading),
            map,
            path: vec![node.to_string()],
        })
    }
}

/// Stored view texts at a node, for the follower request.
fn local_view_text(graph: &NavGraph, node: &str, heading: f64) -> String {
    match discretize_views(graph, node, heading) {
        Ok(views) => views
            .iter()
            .map(|v| format!("{}: {}", v.orientation_label(), v.scene_text))
            .collect::<Vec<_>>()
            .join("; "),
        Err(_) => String::new(),
    }
}

fn landmark_names(graph: &NavGraph, node: &str) -> Result<Vec<String>, GraphError> {
    Ok(graph
        .objects_within(node, OBJECT_RADIUS_M)?
        .into_iter()
        .map(|o| o.name.clone())
        .collect())
}

pub fn follower_request(
    graph: &NavGraph,
    state: &AgentState,
    context: &str,
    moves_so_far: usize,
) -> Result<FollowerRequest, GraphError> {
    let mut neighbors = Vec::new();
    for n in graph.neighbors(&state.node)? {
        let geo = move_geometry(graph, &state.node, n, state.heading)?;
        neighbors.push(NeighborInfo {
            id: n.to_string(),
            relative_heading: geo.turn_deg,
            distance: geo.distance_m,
            height_delta: geo.height_delta_m,
            landmarks: landmark_names(graph, n)?,
        });
    }
    Ok(FollowerRequest {
        context: context.to_string(),
        current_node: state.node.clone(),
        here_landmarks: landmark_names(graph, &state.node)?,
        observation: local_view_text(graph, &state.node, state.heading),
        neighbors,
        memory_map: state.map.summary(),
        visited: state.map.visited_nodes().to_vec(),
        moves_so_far,
    })
}

/// Interprets a follower reply; anything other than STOP or a neighbor id
/// is an abstention.
pub fn parse_follower_reply(raw: &str, neighbors: &[NeighborInfo]) -> Option<CandidateAction> {
    let t = raw.trim().trim_matches(['"', '\'', '.', '`']).trim();
    if t.eq_ignore_ascii_case(STOP_TOKEN) {
        return Some(CandidateAction::Stop);
    }
    neighbors.iter().find(|n| n.id == t).map(|n| CandidateAction::MoveTo(n.id.clone()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepVotes {
    pub proposals: Vec<Option<CandidateAction>>,
    pub result: VoteResult,
}

/// Queries every follower once. `None` when all abstain.
pub fn step_votes(
    session: &mut Session<'_>,
    graph: &NavGraph,
    state: &AgentState,
    context: &str,
    moves_so_far: usize,
) -> Result<Option<StepVotes>, GraphError> {
    let request = follower_request(graph, state, context, moves_so_far)?;
    let calls = (0..session.follower_count())
        .map(|i| (Role::Follower(i), Request::Follow(request.clone())))
        .collect();
    let replies = session.call_all(calls);
    let mut proposals = Vec::with_capacity(replies.len());
    for (i, reply) in replies.into_iter().enumerate() {
        let p = match reply {
            Ok(raw) => {
                let p = parse_follower_reply(&raw, &request.neighbors);
                if p.is_none() {
                    session.warn(format!("follower[{i}] reply `{}` is not a valid action; abstaining", raw.trim()));
                }
                p
            }
            Err(e) => {
                session.warn(format!("follower[{i}] failed ({e}); abstaining"));
                None
            }
        };
        proposals.push(p);
    }
    let result = tally(&proposals);
    session.note(TraceEvent::Vote {
        node: state.node.clone(),
        unanimous: matches!(result, Some(VoteResult::Unanimous(_))),
        proposals: proposals.iter().map(|p| p.as_ref().map(ToString::to_string)).collect(),
    });
    Ok(result.map(|result| StepVotes { proposals, result }))
}

/// Fills the multiple-choice template.
pub fn build_tie_break_prompt(context: &str, iter_history: &str, option_texts: &[String]) -> String {
    let options = option_texts
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {t}", option_letter(i)))
        .collect::<Vec<_>>()
        .join("\n");
    TIE_BREAK_TEMPLATE
        .replace("{guidance}", context)
        .replace("{history}", iter_history)
        .replace("{options}", &options)
}

fn option_letter(i: usize) -> char {
    (b'A' + i as u8) as char
}

/// Index of the chosen option in a tie-break reply such as `B`, `(B)`,
/// `Answer: B.` or `B. stop here`.
pub fn parse_choice(raw: &str, n_options: usize) -> Option<usize> {
    let mut t = raw.trim();
    for prefix in ["answer:", "answer", "option", "choice:"] {
        if t.len() >= prefix.len() && t[..prefix.len()].eq_ignore_ascii_case(prefix) {
            t = t[prefix.len()..].trim_start();
        }
    }
    let t = t.trim_start_matches(['(', '[', '*', ' ']);
    let mut chars = t.chars();
    let c = chars.next()?.to_ascii_uppercase();
    if chars.next().is_some_and(|next| next.is_alphanumeric()) {
        return None;
    }
    let idx = (c as usize).checked_sub('A' as usize)?;
    (idx < n_options).then_some(idx)
}

fn scene_after_move(graph: &NavGraph, to: &str, heading: f64) -> String {
    discretize_views(graph, to, heading)
        .map(|v| v[Orientation::Front as usize].scene_text.clone())
        .unwrap_or_else(|_| UNSEEN_SCENE.to_string())
}

fn describe_option<R: Rng + ?Sized>(
    graph: &NavGraph,
    state: &AgentState,
    action: &CandidateAction,
    rng: &mut R,
) -> Result<String, GraphError> {
    match action {
        CandidateAction::Stop => Ok(STOP_OPTION.to_string()),
        CandidateAction::MoveTo(to) => {
            let geo = move_geometry(graph, &state.node, to, state.heading)?;
            let scene = scene_after_move(graph, to, geo.new_heading);
            describe_move(graph, &state.node, to, state.heading, &scene, rng)
        }
    }
}

/// Resolves a split vote through the tie-breaker, falling back to plurality
/// when the reply cannot be used.
pub fn tie_break<R: Rng + ?Sized>(
    session: &mut Session<'_>,
    graph: &NavGraph,
    state: &AgentState,
    context: &str,
    iter_history: &str,
    options: &[SplitOption],
    rng: &mut R,
) -> Result<CandidateAction, GraphError> {
    let texts = options
        .iter()
        .map(|o| describe_option(graph, state, &o.action, rng))
        .collect::<Result<Vec<_>, _>>()?;
    let prompt = build_tie_break_prompt(context, iter_history, &texts);
    let choice = match session.call(Role::TieBreaker, &Request::TieBreak { prompt }) {
        Ok(raw) => {
            let c = parse_choice(&raw, options.len());
            if c.is_none() {
                session.warn(format!("unparseable tie-break reply `{}`; using plurality", raw.trim()));
            }
            c
        }
        Err(e) => {
            session.warn(format!("tie-breaker failed ({e}); using plurality"));
            None
        }
    };
    Ok(match choice {
        Some(i) => options[i].action.clone(),
        None => plurality(options),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecuteOptions {
    pub max_moves: usize,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        Self { max_moves: 5 }
    }
}

/// Executes one guidance, updating the agent state and memory map.
pub fn execute_guidance<R: Rng + ?Sized>(
    session: &mut Session<'_>,
    graph: &NavGraph,
    state: &mut AgentState,
    context: &str,
    opts: &ExecuteOptions,
    rng: &mut R,
) -> Result<TrajectorySegment, GraphError> {
    let mut segment = TrajectorySegment::default();
    while segment.moves() < opts.max_moves {
        let Some(votes) = step_votes(session, graph, state, context, segment.moves())? else {
            session.warn(format!("all followers abstained at `{}`; ending guidance", state.node));
            break;
        };
        let action = match votes.result {
            VoteResult::Unanimous(a) => {
                session.ledger.unanimous_steps += 1;
                a
            }
            VoteResult::Split(options) => {
                session.ledger.split_steps += 1;
                let history = describe_trajectory(&segment, HistoryStyle::Landmark);
                tie_break(session, graph, state, context, &history, &options, rng)?
            }
        };
        match action {
            CandidateAction::Stop => {
                session.note(TraceEvent::Stop { at: state.node.clone() });
                segment.steps.push(TrajectoryStep {
                    from: state.node.clone(),
                    to: None,
                    action_text: String::new(),
                    turn_deg: 0.0,
                    distance_m: 0.0,
                });
                break;
            }
            CandidateAction::MoveTo(to) => {
                let geo = move_geometry(graph, &state.node, &to, state.heading)?;
                let scene = scene_after_move(graph, &to, geo.new_heading);
                let text = describe_move(graph, &state.node, &to, state.heading, &scene, rng)?;
                session.note(TraceEvent::Move {
                    from: state.node.clone(),
                    to: to.clone(),
                    action_text: text.clone(),
                });
                segment.steps.push(TrajectoryStep {
                    from: state.node.clone(),
                    to: Some(to.clone()),
                    action_text: text,
                    turn_deg: geo.turn_deg,
                    distance_m: geo.distance_m,
                });
                state.map.visit(graph, &to)?;
                state.heading = geo.new_heading;
                state.path.push(to.clone());
                state.node = to;
            }
        }
    }
    Ok(segment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgraph::tests::{obj, vp};
    use crate::provider::mock::{FnProvider, ScriptedSequence};
    use crate::provider::{Provider, ProviderError, Providers};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    /// Chain n0 - n1 - ... - n9 along +y, 2 m apart.
    fn chain() -> NavGraph {
        let mut vps: Vec<_> = (0..10).map(|i| vp(&format!("n{i}"), 0.0, 2.0 * i as f64, 0.0)).collect();
        vps[3].objects = vec![obj("sofa1", "sofa", 0.5, 6.0, 0.0)];
        let edges = (0..9).map(|i| (format!("n{i}"), format!("n{}", i + 1)));
        NavGraph::new(vps, edges).unwrap()
    }

    /// Follower that walks to the next node along the chain, stopping after `stop_after` moves.
    fn walker(stop_after: usize) -> Arc<dyn Provider> {
        Arc::new(FnProvider::new(move |_, req| {
            let Request::Follow(f) = req else { unreachable!() };
            if f.moves_so_far >= stop_after {
                return Ok(STOP_TOKEN.into());
            }
            let next = f.neighbors.iter().find(|n| !f.visited.contains(&n.id)).map(|n| n.id.clone());
            Ok(next.unwrap_or_else(|| STOP_TOKEN.into()))
        }))
    }

    fn providers(followers: Vec<Arc<dyn Provider>>) -> Providers {
        Providers::uniform(Arc::new(crate::provider::mock::AlwaysFeasible), 1).with_followers(followers)
    }

    #[test]
    fn context_modes() {
        let g = vec!["go forward".to_string(), "turn left at the sofa".to_string()];
        assert_eq!(guidance_context(ContextMode::Multi, &g), "go forward. turn left at the sofa");
        assert_eq!(guidance_context(ContextMode::Single, &g), "turn left at the sofa");
        assert_eq!(ContextMode::default(), ContextMode::Multi);
    }

    #[test]
    fn tally_votes() {
        let b = || Some(CandidateAction::MoveTo("b".into()));
        assert_eq!(tally(&[b(), b(), b()]), Some(VoteResult::Unanimous(CandidateAction::MoveTo("b".into()))));
        assert_eq!(
            tally(&[b(), b(), Some(CandidateAction::Stop)]),
            Some(VoteResult::Split(vec![
                SplitOption { action: CandidateAction::MoveTo("b".into()), proposers: vec![0, 1] },
                SplitOption { action: CandidateAction::Stop, proposers: vec![2] },
            ]))
        );
        assert_eq!(tally(&[Some(CandidateAction::Stop)]), Some(VoteResult::Unanimous(CandidateAction::Stop)));
        assert_eq!(tally(&[None, None]), None);
        assert_eq!(tally(&[None, b()]), Some(VoteResult::Unanimous(CandidateAction::MoveTo("b".into()))));
    }

    #[test]
    fn plurality_and_tie_rule() {
        let opts = vec![
            SplitOption { action: CandidateAction::Stop, proposers: vec![2] },
            SplitOption { action: CandidateAction::MoveTo("b".into()), proposers: vec![0, 1] },
        ];
        assert_eq!(plurality(&opts), CandidateAction::MoveTo("b".into()));
        let tied = vec![
            SplitOption { action: CandidateAction::MoveTo("c".into()), proposers: vec![1] },
            SplitOption { action: CandidateAction::Stop, proposers: vec![0] },
        ];
        assert_eq!(plurality(&tied), CandidateAction::Stop);
    }

    #[test]
    fn choice_parsing() {
        assert_eq!(parse_choice("B", 2), Some(1));
        assert_eq!(parse_choice(" (a) ", 2), Some(0));
        assert_eq!(parse_choice("Answer: B.", 2), Some(1));
        assert_eq!(parse_choice("C", 2), None);
        assert_eq!(parse_choice("Both are fine", 2), None);
        assert_eq!(parse_choice("", 2), None);
    }

    #[test]
    fn tie_break_letter_selects_option() {
        let g = chain();
        let state = AgentState::new(&g, "n0", 0.0).unwrap();
        let p = providers(vec![]).with(Role::TieBreaker, Arc::new(ScriptedSequence::new(vec!["B".into()])));
        let mut s = Session::new("e", &p);
        let opts = vec![
            SplitOption { action: CandidateAction::MoveTo("n1".into()), proposers: vec![0] },
            SplitOption { action: CandidateAction::Stop, proposers: vec![1, 2] },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = tie_break(&mut s, &g, &state, "go forward", "did not move.", &opts, &mut rng).unwrap();
        assert_eq!(a, CandidateAction::Stop);
        assert_eq!(s.ledger.calls(Role::TieBreaker), 1);
    }

    #[test]
    fn tie_break_falls_back_to_plurality() {
        let g = chain();
        let state = AgentState::new(&g, "n0", 0.0).unwrap();
        let opts = vec![
            SplitOption { action: CandidateAction::MoveTo("n1".into()), proposers: vec![0, 1] },
            SplitOption { action: CandidateAction::Stop, proposers: vec![2] },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for reply in [Ok("I am not sure".to_string()), Err(ProviderError::Transport("x".into()))] {
            let p = providers(vec![]).with(Role::TieBreaker, Arc::new(FnProvider::new(move |_, _| reply.clone())));
            let mut s = Session::new("e", &p);
            let a = tie_break(&mut s, &g, &state, "go forward", "did not move.", &opts, &mut rng).unwrap();
            assert_eq!(a, CandidateAction::MoveTo("n1".into()));
        }
    }

    #[test]
    fn four_moves_then_stop() {
        let g = chain();
        let p = providers(vec![walker(4), walker(4), walker(4)]);
        let mut s = Session::new("e", &p);
        let mut state = AgentState::new(&g, "n0", 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seg = execute_guidance(&mut s, &g, &mut state, "go forward", &ExecuteOptions::default(), &mut rng).unwrap();
        assert_eq!(seg.moves(), 4);
        assert_eq!(seg.steps.len(), 5);
        assert!(seg.stopped());
        assert_eq!(state.node, "n4");
        for n in seg.visited() {
            assert!(state.map.has_visited(n));
        }
        assert_eq!(s.ledger.calls(Role::TieBreaker), 0);
        assert_eq!(s.ledger.unanimous_steps, 5);
    }

    #[test]
    fn never_stopping_followers_capped_at_five() {
        let g = chain();
        let p = providers(vec![walker(100), walker(100), walker(100)]);
        let mut s = Session::new("e", &p);
        let mut state = AgentState::new(&g, "n0", 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seg = execute_guidance(&mut s, &g, &mut state, "go forward", &ExecuteOptions::default(), &mut rng).unwrap();
        assert_eq!(seg.moves(), 5);
        assert_eq!(seg.steps.len(), 5);
        assert_eq!(state.path, vec!["n0", "n1", "n2", "n3", "n4", "n5"]);
        assert_eq!(seg.steps[0].action_text, "go forward, facing toward an unseen area.");
        assert_eq!(seg.steps[2].action_text, "go forward to sofa, facing toward an unseen area.");
    }

    #[test]
    fn disagreement_goes_to_tie_breaker() {
        let g = chain();
        let p = providers(vec![walker(2), walker(2), walker(1)])
            .with(Role::TieBreaker, Arc::new(ScriptedSequence::new(vec!["A".into()])));
        let mut s = Session::new("e", &p);
        let mut state = AgentState::new(&g, "n0", 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seg = execute_guidance(&mut s, &g, &mut state, "go forward", &ExecuteOptions::default(), &mut rng).unwrap();
        // step 2 splits (n2 vs STOP) and A = move; step 3 is a unanimous stop
        assert_eq!(seg.moves(), 2);
        assert_eq!(s.ledger.split_steps, 1);
        assert_eq!(s.ledger.calls(Role::TieBreaker), 1);
    }

    #[test]
    fn all_abstaining_ends_guidance() {
        let g = chain();
        let bad: Arc<dyn Provider> = Arc::new(FnProvider::new(|_, _| Ok("nowhere".into())));
        let p = providers(vec![bad.clone(), bad]);
        let mut s = Session::new("e", &p);
        let mut state = AgentState::new(&g, "n0", 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seg = execute_guidance(&mut s, &g, &mut state, "go", &ExecuteOptions::default(), &mut rng).unwrap();
        assert_eq!(seg.steps.len(), 0);
        assert_eq!(describe_trajectory(&seg, HistoryStyle::Landmark), "did not move.");
    }

    #[test]
    fn single_follower_is_always_unanimous() {
        let g = chain();
        let p = providers(vec![walker(3)]);
        let mut s = Session::new("e", &p);
        let mut state = AgentState::new(&g, "n0", 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        execute_guidance(&mut s, &g, &mut state, "go", &ExecuteOptions::default(), &mut rng).unwrap();
        assert_eq!(s.ledger.split_steps, 0);
    }

    #[test]
    fn symbolic_history() {
        let g = chain();
        let p = providers(vec![walker(2)]);
        let mut s = Session::new("e", &p);
        let mut state = AgentState::new(&g, "n0", 90.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seg = execute_guidance(&mut s, &g, &mut state, "go", &ExecuteOptions::default(), &mut rng).unwrap();
        assert_eq!(
            describe_trajectory(&seg, HistoryStyle::Symbolic),
            "Turn -90 degrees. Move 2.0 meters. Turn 0 degrees. Move 2.0 meters."
        );
    }

    #[test]
    fn tie_break_prompt_shape() {
        let p = build_tie_break_prompt("go forward", "did not move.", &["go forward.".into(), STOP_OPTION.into()]);
        assert!(p.contains("A. go forward.\nB. stop here"));
        assert!(p.contains("Guidance: go forward\n"));
    }
}
