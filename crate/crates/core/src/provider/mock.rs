//! Deterministic offline providers.
//!
//! These stand in for the real models: scripted sequences and closures for
//! tests, plus heuristic reference implementations of every role that read
//! the same request payloads a live model would see.

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::{CallMeta, FollowerRequest, Provider, ProviderError, Providers, Request, Role};

type ReplyFn = dyn Fn(&CallMeta, &Request) -> Result<String, ProviderError> + Send + Sync;

/// Provider backed by a closure.
pub struct FnProvider(Box<ReplyFn>);

impl FnProvider {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&CallMeta, &Request) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        Self(Box::new(f))
    }
}

impl Provider for FnProvider {
    fn respond(&self, meta: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        (self.0)(meta, request)
    }
}

/// Returns scripted replies in order, repeating the last one once exhausted.
pub struct ScriptedSequence {
    replies: Vec<String>,
    next: AtomicUsize,
}

impl ScriptedSequence {
    pub fn new(replies: Vec<String>) -> Self {
        assert!(!replies.is_empty(), "a script needs at least one reply");
        Self {
            replies,
            next: AtomicUsize::new(0),
        }
    }
}

impl Provider for ScriptedSequence {
    fn respond(&self, _: &CallMeta, _: &Request) -> Result<String, ProviderError> {
        let i = self.next.fetch_add(1, Ordering::SeqCst);
        Ok(self.replies[i.min(self.replies.len() - 1)].clone())
    }
}

pub struct AlwaysFeasible;

impl Provider for AlwaysFeasible {
    fn respond(&self, _: &CallMeta, _: &Request) -> Result<String, ProviderError> {
        Ok("FEASIBLE".into())
    }
}

/// Rejects guidances containing any configured keyword, with its reason.
pub struct KeywordVerifier {
    rules: Vec<(String, String)>,
}

impl KeywordVerifier {
    pub fn new(rules: Vec<(String, String)>) -> Self {
        Self { rules }
    }
}

impl Provider for KeywordVerifier {
    fn respond(&self, _: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        let Request::Verify(v) = request else {
            return Err(ProviderError::Failed("keyword verifier only verifies".into()));
        };
        let text = v.guidance.to_lowercase();
        Ok(self
            .rules
            .iter()
            .find(|(kw, _)| text.contains(&kw.to_lowercase()))
            .map_or_else(|| "FEASIBLE".to_string(), |(_, reason)| format!("INFEASIBLE: {reason}")))
    }
}

/// Echoes stored scene texts in round 1 and derives a position in round 2.
pub struct MockPerceiver;

impl Provider for MockPerceiver {
    fn respond(&self, _: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        let Request::Perceive(p) = request else {
            return Err(ProviderError::Failed("mock perceiver only perceives".into()));
        };
        if p.round == 1 {
            Ok(p.views
                .iter()
                .map(|v| {
                    let text = v.scene_text.clone().unwrap_or_else(|| format!("a view toward {}", v.image_ref));
                    format!("{}: {}", v.label, text)
                })
                .collect::<Vec<_>>()
                .join("\n"))
        } else {
            let front = p
                .descriptions
                .first()
                .and_then(|d| d.split_once(':'))
                .map_or("", |(_, t)| t.trim());
            let place = front.split(" with ").next().unwrap_or(front).trim();
            Ok(if place.is_empty() {
                "in an unknown place".into()
            } else {
                format!("in {place}")
            })
        }
    }
}

const OBJECT_NOUNS: &[&str] = &[
    "lamp", "pillow", "chair", "sofa", "couch", "table", "bed", "towel", "sink", "toilet", "mirror",
    "picture", "painting", "plant", "vase", "clock", "television", "tv", "fridge", "refrigerator",
    "oven", "stove", "microwave", "cabinet", "shelf", "bookshelf", "desk", "stool", "bench",
    "bathtub", "shower", "faucet", "curtain", "rug", "cushion", "basket", "bottle", "cup", "bowl",
    "book", "fireplace", "piano", "dresser", "nightstand", "wardrobe", "door", "window", "candle",
    "statue", "sculpture", "fan", "light", "chandelier", "counter", "blanket", "box", "trash can",
    "washing machine", "dryer", "laptop", "computer", "speaker", "ottoman", "armchair", "photo",
];

const ADJECTIVES: &[&str] = &[
    "red", "blue", "green", "yellow", "white", "black", "brown", "gray", "grey", "maroon", "orange",
    "purple", "pink", "beige", "golden", "silver", "wooden", "glass", "metal", "leather", "small",
    "large", "big", "little", "round", "square", "tall", "short", "striped", "dark", "light",
    "left", "right", "middle", "blue-gray", "potted", "framed", "hanging", "decorative",
];

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Last object noun in the instruction plus any adjectives right before it;
/// falls back to the last word.
pub fn heuristic_target(instruction: &str) -> String {
    let words = tokens(instruction);
    let mut best: Option<(usize, usize)> = None; // (start, end) of the noun
    for i in 0..words.len() {
        for noun in OBJECT_NOUNS {
            let parts: Vec<&str> = noun.split(' ').collect();
            if words.len() - i >= parts.len() && parts.iter().zip(&words[i..]).all(|(a, b)| a == b) {
                best = Some((i, i + parts.len()));
            }
        }
    }
    let Some((mut start, end)) = best else {
        return words.last().cloned().unwrap_or_default();
    };
    while start > 0 && ADJECTIVES.contains(&words[start - 1].as_str()) {
        start -= 1;
    }
    words[start..end].join(" ")
}

/// Target extraction by lexicon heuristic.
pub struct MockExtractor;

impl Provider for MockExtractor {
    fn respond(&self, _: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        match request {
            Request::Extract { instruction } => Ok(heuristic_target(instruction)),
            _ => Err(ProviderError::Failed("mock extractor only extracts".into())),
        }
    }
}

/// 1.0 on case-insensitive equality, otherwise token Jaccard overlap.
pub fn overlap_score(name: &str, target: &str) -> f64 {
    if name.trim().eq_ignore_ascii_case(target.trim()) {
        return 1.0;
    }
    let a: HashSet<String> = tokens(name).into_iter().collect();
    let b: HashSet<String> = tokens(target).into_iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    }
}

pub struct OverlapScorer;

impl Provider for OverlapScorer {
    fn respond(&self, _: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        let Request::Score(s) = request else {
            return Err(ProviderError::Failed("overlap scorer only scores".into()));
        };
        let scores: Vec<f64> = s.candidates.iter().map(|c| overlap_score(c, &s.target)).collect();
        Ok(serde_json::to_string(&scores).expect("scores serialize"))
    }
}

fn block<'a>(text: &'a str, label: &str) -> &'a str {
    let Some(start) = text.find(label) else { return "" };
    let rest = &text[start + label.len()..];
    rest.split("\n\n").next().unwrap_or("").trim()
}

fn head_noun(phrase: &str) -> String {
    tokens(phrase).last().cloned().unwrap_or_default()
}

/// Reference planner: finishes when the target is within 3 m, otherwise
/// heads toward a view that mentions it, or sweeps directions.
pub struct MockPlanner;

impl MockPlanner {
    pub fn plan(prompt: &str) -> String {
        let instruction = block(prompt, "Instruction:");
        let history = block(prompt, "Navigation History:");
        let observation = block(prompt, "Current Observation:");
        let target = heuristic_target(instruction);
        let noun = head_noun(&target);

        let objects = observation
            .rsplit_once("Objects in 3m:")
            .map_or("", |(_, o)| o.trim().trim_end_matches('.'));
        if !noun.is_empty() && objects.split(", ").any(|o| tokens(o).contains(&noun)) {
            return format!("Thought: The {target} is within 3 meters, so the destination is reached.\nFinished!");
        }

        let steps = if history == "none" { 0 } else { history.lines().count() };
        let rejected = prompt.contains("infeasible because:");
        let labels = ["front", "right", "back", "left"];
        let scene_of = |label: &str| {
            let key = format!(" {label}: ");
            observation
                .find(&key)
                .map(|i| observation[i + key.len()..].split('.').next().unwrap_or(""))
                .unwrap_or("")
                .to_lowercase()
        };
        let direction = labels
            .iter()
            .copied()
            .find(|l| !rejected && !noun.is_empty() && scene_of(l).contains(&noun))
            .unwrap_or_else(|| ["front", "left", "right", "back"][(steps + usize::from(rejected)) % 4]);
        let guidance = match direction {
            "front" => format!("go forward to the {target}"),
            "right" => format!("turn right and go to the {target}"),
            "left" => format!("turn left and go to the {target}"),
            _ => format!("turn around and go to the {target}"),
        };
        format!(
            "Thought: The {target} is not within 3 meters yet; exploring {direction}.\nDirection: {direction}\nGuidance: {guidance}"
        )
    }
}

impl Provider for MockPlanner {
    fn respond(&self, _: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        let Request::Plan { messages } = request else {
            return Err(ProviderError::Failed("mock planner only plans".into()));
        };
        let prompt = messages.last().map_or("", |m| m.content.as_str());
        Ok(Self::plan(prompt))
    }
}

/// Decision style of a heuristic follower.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FollowerStyle {
    /// Prefers neighbors whose landmarks match the guidance.
    Landmark,
    /// Follows the turn the guidance asks for and stops after a few moves.
    Heading,
    /// Prefers the nearest unvisited neighbor.
    Explorer,
}

pub struct HeuristicFollower {
    pub style: FollowerStyle,
}

impl HeuristicFollower {
    pub fn decide(&self, f: &FollowerRequest) -> String {
        let last = f.context.rsplit(". ").next().unwrap_or(&f.context);
        let noun = head_noun(last);
        let matches = |names: &[String]| !noun.is_empty() && names.iter().any(|n| tokens(n).contains(&noun));
        if matches(&f.here_landmarks) {
            return "STOP".into();
        }
        let wanted = if f.moves_so_far > 0 {
            0.0
        } else if last.starts_with("turn right") {
            90.0
        } else if last.starts_with("turn left") {
            -90.0
        } else if last.starts_with("turn around") {
            180.0
        } else {
            0.0
        };
        let angle_err = |h: f64| {
            let d = (h - wanted).rem_euclid(360.0);
            d.min(360.0 - d)
        };
        let unvisited: Vec<_> = f.neighbors.iter().filter(|n| !f.visited.contains(&n.id)).collect();
        let by_landmark = unvisited.iter().find(|n| matches(&n.landmarks));
        let by_heading = unvisited
            .iter()
            .min_by(|a, b| angle_err(a.relative_heading).total_cmp(&angle_err(b.relative_heading)));
        let nearest = unvisited.iter().min_by(|a, b| a.distance.total_cmp(&b.distance));
        let pick = match self.style {
            FollowerStyle::Landmark => by_landmark.or(by_heading),
            FollowerStyle::Heading if f.moves_so_far >= 3 => None,
            FollowerStyle::Heading => by_heading,
            FollowerStyle::Explorer => by_landmark.or(nearest),
        };
        pick.map_or_else(|| "STOP".to_string(), |n| n.id.clone())
    }
}

impl Provider for HeuristicFollower {
    fn respond(&self, _: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        match request {
            Request::Follow(f) => Ok(self.decide(f)),
            _ => Err(ProviderError::Failed("follower only follows".into())),
        }
    }
}

/// Picks the first option mentioning the guidance's final noun, else `A`.
pub struct MockTieBreaker;

impl MockTieBreaker {
    pub fn choose(prompt: &str) -> String {
        let guidance = prompt
            .lines()
            .find_map(|l| l.strip_prefix("Guidance: "))
            .unwrap_or("");
        let last = guidance.rsplit(". ").next().unwrap_or(guidance);
        let noun = head_noun(last);
        let options: Vec<&str> = prompt
            .lines()
            .filter(|l| l.len() > 3 && l.as_bytes()[0].is_ascii_uppercase() && l[1..].starts_with(". "))
            .collect();
        options
            .iter()
            .find(|o| !noun.is_empty() && tokens(o).contains(&noun))
            .or(options.first())
            .map_or_else(|| "A".to_string(), |o| o[..1].to_string())
    }
}

impl Provider for MockTieBreaker {
    fn respond(&self, _: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        match request {
            Request::TieBreak { prompt } => Ok(Self::choose(prompt)),
            _ => Err(ProviderError::Failed("tie-breaker only breaks ties".into())),
        }
    }
}

/// Every heuristic role behind one provider, dispatched on request kind.
pub struct MockSuite;

impl Provider for MockSuite {
    fn respond(&self, meta: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        match request {
            Request::Perceive(_) => MockPerceiver.respond(meta, request),
            Request::Plan { .. } => MockPlanner.respond(meta, request),
            Request::Verify(_) => AlwaysFeasible.respond(meta, request),
            Request::Follow(f) => {
                let idx = match meta.role {
                    Role::Follower(i) => i,
                    _ => 0,
                };
                let style = [FollowerStyle::Landmark, FollowerStyle::Heading, FollowerStyle::Explorer][idx % 3];
                Ok(HeuristicFollower { style }.decide(f))
            }
            Request::TieBreak { .. } => MockTieBreaker.respond(meta, request),
            Request::Extract { .. } => MockExtractor.respond(meta, request),
            Request::Score(_) => OverlapScorer.respond(meta, request),
        }
    }
}

/// Heuristic mock bindings for every role.
pub fn mock_providers(followers: usize) -> Providers {
    Providers::uniform(Arc::new(MockSuite), followers.max(1))
}
