//! Environmental perception: four egocentric views per node, a two-round
//! conversation with a scene perceiver, and the textual observation record
//! handed to the planner.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envgraph::{normalize_heading, GraphError, NavGraph, OBJECT_RADIUS_M};
use crate::provider::{PerceiveRequest, ProviderError, Request, Role, ViewPayload};
use crate::session::Session;

/// Default story height used to infer the floor from the height off ground.
pub const STORY_HEIGHT_M: f64 = 3.0;

#[derive(Debug, Error)]
pub enum PerceiveError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("viewpoint `{0}` has no scene descriptions")]
    MissingScenes(String),
    #[error("perceiver failed: {0}")]
    Provider(#[from] ProviderError),
    #[error("malformed perceiver response: {0}")]
    Malformed(String),
}

/// Agent-relative view orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Front,
    Right,
    Back,
    Left,
}

impl Orientation {
    /// Views in rendering order.
    pub const ALL: [Orientation; 4] = [
        Orientation::Front,
        Orientation::Right,
        Orientation::Back,
        Orientation::Left,
    ];

    pub fn bucket(self) -> u16 {
        match self {
            Orientation::Front => 0,
            Orientation::Right => 90,
            Orientation::Back => 180,
            Orientation::Left => 270,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Orientation::Front => "front",
            Orientation::Right => "right",
            Orientation::Back => "back",
            Orientation::Left => "left",
        }
    }

    pub fn from_bucket(bucket: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.bucket() == bucket)
    }

    pub fn from_label(label: &str) -> Option<Self> {
        let label = label.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|o| o.label() == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewDescriptor {
    pub orientation: Orientation,
    pub scene_text: String,
}

impl ViewDescriptor {
    pub fn orientation_bucket(&self) -> u16 {
        self.orientation.bucket()
    }

    pub fn orientation_label(&self) -> &'static str {
        self.orientation.label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub node: String,
    pub height_m: f64,
    pub floor_index: i32,
    pub position_desc: String,
    pub views: [ViewDescriptor; 4],
    pub objects_in_3m: Vec<String>,
    pub formatted_text: String,
}

impl Observation {
    pub fn new(
        node: impl Into<String>,
        height_m: f64,
        floor_index: i32,
        position_desc: impl Into<String>,
        views: [ViewDescriptor; 4],
        objects_in_3m: Vec<String>,
    ) -> Self {
        let mut obs = Observation {
            node: node.into(),
            height_m,
            floor_index,
            position_desc: position_desc.into(),
            views,
            objects_in_3m,
            formatted_text: String::new(),
        };
        obs.formatted_text = format_observation(&obs);
        obs
    }

    pub fn view(&self, orientation: Orientation) -> &ViewDescriptor {
        &self.views[orientation as usize]
    }
}

/// Renders the observation template:
/// `Height off ground is {h} meters. {position}. {label}: {scene}. ... Objects in 3m: {objects}.`
pub fn format_observation(obs: &Observation) -> String {
    let mut out = format!(
        "Height off ground is {:.1} meters. {}.",
        obs.height_m, obs.position_desc
    );
    for view in &obs.views {
        out.push_str(&format!(" {}: {}.", view.orientation_label(), view.scene_text));
    }
    let objects = if obs.objects_in_3m.is_empty() {
        "none".to_string()
    } else {
        obs.objects_in_3m.join(", ")
    };
    out.push_str(&format!(" Objects in 3m: {objects}."));
    out
}

/// Floor index for a height, `floor(h / 3.0)` clamped at zero.
pub fn infer_floor(height_m: f64) -> i32 {
    infer_floor_with(height_m, STORY_HEIGHT_M)
}

pub fn infer_floor_with(height_m: f64, story_height: f64) -> i32 {
    ((height_m / story_height).floor() as i32).max(0)
}

/// Absolute bucket nearest to a heading; exact half-way headings round up.
pub fn snap_to_bucket(heading: f64) -> u16 {
    let steps = (normalize_heading(heading) / 90.0).round() as u16 % 4;
    steps * 90
}

/// Absolute bucket that an agent-relative view faces.
pub fn absolute_bucket(agent_heading: f64, orientation: Orientation) -> u16 {
    (snap_to_bucket(agent_heading) + orientation.bucket()) % 360
}

/// The four agent-relative views at a node, drawn from the stored scene
/// descriptions.
pub fn discretize_views(
    graph: &NavGraph,
    node: &str,
    agent_heading: f64,
) -> Result<[ViewDescriptor; 4], PerceiveError> {
    let vp = graph.viewpoint(node)?;
    let scenes = vp
        .scene_descriptions
        .as_ref()
        .ok_or_else(|| PerceiveError::MissingScenes(node.to_string()))?;
    Ok(Orientation::ALL.map(|o| ViewDescriptor {
        orientation: o,
        scene_text: scenes.for_bucket(absolute_bucket(agent_heading, o)).to_string(),
    }))
}

/// Payloads sent to vision-side providers for the four views.
pub fn view_payloads(graph: &NavGraph, node: &str, agent_heading: f64) -> Result<Vec<ViewPayload>, GraphError> {
    let vp = graph.viewpoint(node)?;
    Ok(Orientation::ALL
        .iter()
        .map(|&o| {
            let abs = absolute_bucket(agent_heading, o);
            ViewPayload {
                label: o.label().to_string(),
                bucket: o.bucket(),
                scene_text: vp.scene_descriptions.as_ref().map(|s| s.for_bucket(abs).to_string()),
                image_ref: format!("{node}/{abs}"),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceiveOptions {
    pub story_height: f64,
    pub object_radius: f64,
    /// Extra attempts per round after a failure or malformed reply.
    pub retries: u32,
}

impl Default for PerceiveOptions {
    fn default() -> Self {
        Self {
            story_height: STORY_HEIGHT_M,
            object_radius: OBJECT_RADIUS_M,
            retries: 1,
        }
    }
}

/// Runs the two-round perception conversation and assembles the observation.
pub fn perceive(
    session: &mut Session<'_>,
    graph: &NavGraph,
    node: &str,
    agent_heading: f64,
    opts: &PerceiveOptions,
) -> Result<Observation, PerceiveError> {
    let vp = graph.viewpoint(node)?;
    let views = view_payloads(graph, node, agent_heading)?;

    let round1 = Request::Perceive(PerceiveRequest {
        round: 1,
        views: views.clone(),
        descriptions: Vec::new(),
    });
    let descriptions = with_retries(session, &round1, opts.retries, parse_view_lines)?;

    let round2 = Request::Perceive(PerceiveRequest {
        round: 2,
        views,
        descriptions: Orientation::ALL
            .iter()
            .zip(&descriptions)
            .map(|(o, d)| format!("{}: {}", o.label(), d))
            .collect(),
    });
    let position = with_retries(session, &round2, opts.retries, |text| {
        let p = clean_clause(text);
        if p.is_empty() {
            Err(PerceiveError::Malformed("empty position description".into()))
        } else {
            Ok(p)
        }
    })?;

    let mut texts = descriptions.into_iter();
    let views = Orientation::ALL.map(|o| ViewDescriptor {
        orientation: o,
        scene_text: texts.next().unwrap_or_default(),
    });
    let objects = graph
        .objects_within(node, opts.object_radius)?
        .into_iter()
        .map(|o| o.name.clone())
        .collect();
    let height = vp.position.z;
    Ok(Observation::new(
        node,
        height,
        infer_floor_with(height, opts.story_height),
        position,
        views,
        objects,
    ))
}

fn with_retries<T>(
    session: &mut Session<'_>,
    request: &Request,
    retries: u32,
    parse: impl Fn(&str) -> Result<T, PerceiveError>,
) -> Result<T, PerceiveError> {
    let mut last = None;
    for _ in 0..=retries {
        match session.call(Role::Perceiver, request) {
            Ok(text) => match parse(&text) {
                Ok(v) => return Ok(v),
                Err(e) => last = Some(e),
            },
            Err(e) => last = Some(e.into()),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Parses `label: description` lines, one per view, in any order.
fn parse_view_lines(text: &str) -> Result<Vec<String>, PerceiveError> {
    let mut found: [Option<String>; 4] = Default::default();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let Some((label, desc)) = line.split_once(':') else {
            continue;
        };
        if let Some(o) = Orientation::from_label(label.trim_start_matches(['-', '*', ' '])) {
            found[o as usize] = Some(clean_clause(desc));
        }
    }
    found
        .into_iter()
        .zip(Orientation::ALL)
        .map(|(d, o)| d.ok_or_else(|| PerceiveError::Malformed(format!("no `{}` view line", o.label()))))
        .collect()
}

fn clean_clause(text: &str) -> String {
    text.trim().trim_end_matches('.').trim().to_string()
}
