//! Planner prompts, planner output parsing and the constrained action
//! language guidances must be written in.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perceive::{Observation, Orientation};
use crate::provider::ChatMessage;

/// Token that marks navigation as complete.
pub const FINISH_TOKEN: &str = "Finished!";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("system principle section `{0}` is empty")]
    EmptySection(&'static str),
    #[error("planner output has no Guidance field")]
    MissingGuidance,
    #[error("planner output has no Direction field")]
    MissingDirection,
    #[error("unrecognized direction `{0}`")]
    BadDirection(String),
}

/// The closed set of action phrases guidances may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionPhrase {
    GoDownstairs,
    GoUpstairs,
    GoForward,
    GoThrough,
    GoPast,
    TurnAround,
    TurnLeft,
    TurnRight,
    TurnLeftAt,
    TurnRightAt,
    GoTo,
    GoInto,
    GoOutOf,
    Stop,
}

impl ActionPhrase {
    pub const ALL: [ActionPhrase; 14] = [
        ActionPhrase::GoDownstairs,
        ActionPhrase::GoUpstairs,
        ActionPhrase::GoForward,
        ActionPhrase::GoThrough,
        ActionPhrase::GoPast,
        ActionPhrase::TurnAround,
        ActionPhrase::TurnLeft,
        ActionPhrase::TurnRight,
        ActionPhrase::TurnLeftAt,
        ActionPhrase::TurnRightAt,
        ActionPhrase::GoTo,
        ActionPhrase::GoInto,
        ActionPhrase::GoOutOf,
        ActionPhrase::Stop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionPhrase::GoDownstairs => "go downstairs",
            ActionPhrase::GoUpstairs => "go upstairs",
            ActionPhrase::GoForward => "go forward",
            ActionPhrase::GoThrough => "go through",
            ActionPhrase::GoPast => "go past",
            ActionPhrase::TurnAround => "turn around",
            ActionPhrase::TurnLeft => "turn left",
            ActionPhrase::TurnRight => "turn right",
            ActionPhrase::TurnLeftAt => "turn left at",
            ActionPhrase::TurnRightAt => "turn right at",
            ActionPhrase::GoTo => "go to",
            ActionPhrase::GoInto => "go into",
            ActionPhrase::GoOutOf => "go out of",
            ActionPhrase::Stop => "stop",
        }
    }

    /// Case-insensitive whole-phrase lookup.
    pub fn parse(text: &str) -> Option<Self> {
        let norm = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        Self::ALL.into_iter().find(|p| p.as_str() == norm)
    }
}

impl fmt::Display for ActionPhrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A planner guidance for one iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Guidance {
    pub thought: String,
    /// Agent-relative bucket in degrees: 0, 90, 180 or 270.
    pub direction: u16,
    pub text: String,
}

impl Guidance {
    pub fn orientation(&self) -> Orientation {
        Orientation::from_bucket(self.direction).unwrap_or(Orientation::Front)
    }

    /// Renders the labeled output format the planner is asked to produce.
    pub fn render(&self) -> String {
        format!(
            "Thought: {}\nDirection: {}\nGuidance: {}",
            self.thought,
            self.orientation().label(),
            self.text
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlannerOutput {
    Finished,
    Plan(Guidance),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub trajectory_text: String,
    pub guidance_text: Option<String>,
}

/// Append-only navigation history of an episode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavHistory {
    iterations: Vec<HistoryEntry>,
}

impl NavHistory {
    pub fn push(&mut self, trajectory_text: impl Into<String>, guidance_text: Option<String>) {
        self.iterations.push(HistoryEntry {
            trajectory_text: trajectory_text.into(),
            guidance_text,
        });
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.iterations
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// One numbered line per iteration; guidances only when asked for.
    pub fn render(&self, include_guidance: bool) -> String {
        if self.iterations.is_empty() {
            return "none".into();
        }
        self.iterations
            .iter()
            .enumerate()
            .map(|(i, e)| match (&e.guidance_text, include_guidance) {
                (Some(g), true) => format!("Step {}: Guidance: {g}. Trajectory: {}", i + 1, e.trajectory_text),
                _ => format!("Step {}: {}", i + 1, e.trajectory_text),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// The six sections of the planner's system message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemPrinciple {
    pub role: String,
    pub objective: String,
    pub input_definitions: String,
    pub output_requirements: String,
    pub abilities: String,
    pub constraints: String,
}

impl Default for SystemPrinciple {
    fn default() -> Self {
        Self {
            role: include_str!("../prompts/principle/role.txt").into(),
            objective: include_str!("../prompts/principle/objective.txt").into(),
            input_definitions: include_str!("../prompts/principle/input_definitions.txt").into(),
            output_requirements: include_str!("../prompts/principle/output_requirements.txt").into(),
            abilities: include_str!("../prompts/principle/abilities.txt").into(),
            constraints: include_str!("../prompts/principle/constraints.txt").into(),
        }
    }
}

impl SystemPrinciple {
    fn sections(&self) -> [(&'static str, &str); 6] {
        [
            ("Role", &self.role),
            ("Objective", &self.objective),
            ("Input Definitions", &self.input_definitions),
            ("Output Requirements", &self.output_requirements),
            ("Abilities", &self.abilities),
            ("Constraints", &self.constraints),
        ]
    }
}

/// Concatenates the six sections in order under numbered headers.
pub fn build_system_principle(principle: &SystemPrinciple) -> Result<String, PlanError> {
    let mut parts = Vec::with_capacity(6);
    for (i, (name, body)) in principle.sections().into_iter().enumerate() {
        let body = body.trim();
        if body.is_empty() {
            return Err(PlanError::EmptySection(name));
        }
        parts.push(format!("{}. {name}:\n{body}", i + 1));
    }
    Ok(parts.join("\n\n"))
}

/// Feedback prefix for a rejected guidance.
pub fn infeasibility_feedback(reason: &str) -> String {
    format!("The previous guidance was infeasible because: {reason}")
}

pub fn build_plan_prompt(
    principle: &str,
    instruction: &str,
    history: &NavHistory,
    observation: &Observation,
    feedback: Option<&str>,
    include_guidance_in_history: bool,
) -> Vec<ChatMessage> {
    let mut user = format!(
        "Instruction: {instruction}\n\nNavigation History: {}\n\nCurrent Observation: {}",
        history.render(include_guidance_in_history),
        observation.formatted_text
    );
    if let Some(reason) = feedback {
        user.push_str("\n\n");
        user.push_str(&infeasibility_feedback(reason));
    }
    vec![ChatMessage::system(principle), ChatMessage::user(user)]
}

const LABELS: [&str; 3] = ["thought:", "direction:", "guidance:"];

/// Parses raw planner text. Any occurrence of the finish token wins.
pub fn parse_planner_output(raw: &str) -> Result<PlannerOutput, PlanError> {
    if raw.contains(FINISH_TOKEN) {
        return Ok(PlannerOutput::Finished);
    }
    let lower = raw.to_ascii_lowercase();
    let mut found: Vec<(usize, usize)> = Vec::new(); // (label index, byte position)
    for (k, label) in LABELS.iter().enumerate() {
        if let Some(pos) = lower.find(label) {
            found.push((k, pos));
        }
    }
    found.sort_by_key(|&(_, pos)| pos);
    let field = |k: usize| -> Option<String> {
        let i = found.iter().position(|&(label, _)| label == k)?;
        let start = found[i].1 + LABELS[k].len();
        let end = found.get(i + 1).map_or(raw.len(), |&(_, p)| p);
        Some(raw[start..end].trim().to_string())
    };

    let text = field(2).filter(|t| !t.is_empty()).ok_or(PlanError::MissingGuidance)?;
    let dir_raw = field(1).ok_or(PlanError::MissingDirection)?;
    let dir_clean = dir_raw.trim_end_matches(['.', ',', ';']).trim();
    let direction = Orientation::from_label(dir_clean)
        .ok_or_else(|| PlanError::BadDirection(dir_raw.clone()))?
        .bucket();
    Ok(PlannerOutput::Plan(Guidance {
        thought: field(0).unwrap_or_default(),
        direction,
        text,
    }))
}

/// Movement verbs that start an action phrase.
const MOVEMENT_VERBS: &[&str] = &[
    "go", "walk", "turn", "move", "proceed", "climb", "jump", "run", "enter", "exit", "step",
    "cross", "pass", "stop", "continue", "descend", "ascend", "travel", "approach", "navigate",
    "wait", "head", "leave", "take", "follow", "return",
];

/// A verb right after one of these is a noun ("the exit", "a step").
const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "each", "every", "first", "second", "last", "next", "its", "your",
];

/// Words that extend a verb into the reported violation phrase.
const PARTICLES: &[&str] = &[
    "over", "towards", "toward", "to", "into", "through", "past", "up", "down", "around", "out",
    "along", "across", "left", "right", "forward", "ahead", "back", "in", "onto", "by", "straight",
    "upstairs", "downstairs", "inside", "outside", "off", "on",
];

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Scans a guidance for movement verb phrases outside the action space.
/// Returns the offending phrases in order of appearance.
pub fn validate_action_phrases(guidance_text: &str) -> Result<(), Vec<String>> {
    let tokens = words(guidance_text);
    let phrases: Vec<Vec<&str>> = ActionPhrase::ALL
        .iter()
        .map(|p| p.as_str().split(' ').collect())
        .collect();
    let mut violations = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let after_determiner = i > 0 && DETERMINERS.contains(&tokens[i - 1].as_str());
        if after_determiner || !MOVEMENT_VERBS.contains(&tokens[i].as_str()) {
            i += 1;
            continue;
        }
        let longest = phrases
            .iter()
            .filter(|p| tokens.len() - i >= p.len() && p.iter().zip(&tokens[i..]).all(|(a, b)| a == b))
            .map(Vec::len)
            .max();
        match longest {
            Some(n) => i += n,
            None => {
                let mut phrase = tokens[i].clone();
                if let Some(next) = tokens.get(i + 1).filter(|t| PARTICLES.contains(&t.as_str())) {
                    phrase.push(' ');
                    phrase.push_str(next);
                    i += 1;
                }
                violations.push(phrase);
                i += 1;
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// What to do when a guidance uses phrases outside the action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationPolicy {
    #[default]
    Warn,
    Strict,
}
