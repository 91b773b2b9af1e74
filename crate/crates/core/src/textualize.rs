//! Turns executed moves into the directional-phrase texts used in the
//! navigation history and in tie-break questions.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envgraph::{heading_of, normalize_delta, GraphError, NavGraph, OBJECT_RADIUS_M};

/// Height change above which a move is described as taking the stairs.
pub const STAIRS_THRESHOLD_M: f64 = 0.2;
/// Rotations strictly below this are "go forward".
pub const FORWARD_LIMIT_DEG: f64 = 30.0;
/// Rotations up to and including this are left/right turns.
pub const TURN_LIMIT_DEG: f64 = 150.0;

/// Sentinel used when a segment contains no moves.
pub const NO_MOVEMENT: &str = "did not move.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionalPhrase {
    GoDownstairs,
    GoUpstairs,
    GoForward,
    TurnLeft,
    TurnRight,
    TurnAround,
}

impl DirectionalPhrase {
    pub const ALL: [DirectionalPhrase; 6] = [
        DirectionalPhrase::GoDownstairs,
        DirectionalPhrase::GoUpstairs,
        DirectionalPhrase::GoForward,
        DirectionalPhrase::TurnLeft,
        DirectionalPhrase::TurnRight,
        DirectionalPhrase::TurnAround,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DirectionalPhrase::GoDownstairs => "go downstairs",
            DirectionalPhrase::GoUpstairs => "go upstairs",
            DirectionalPhrase::GoForward => "go forward",
            DirectionalPhrase::TurnLeft => "turn left",
            DirectionalPhrase::TurnRight => "turn right",
            DirectionalPhrase::TurnAround => "turn around",
        }
    }

    pub fn is_stairs(self) -> bool {
        matches!(self, DirectionalPhrase::GoDownstairs | DirectionalPhrase::GoUpstairs)
    }
}

impl fmt::Display for DirectionalPhrase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies a move. Stairs take precedence over rotation; positive
/// (clockwise) rotation is a right turn.
pub fn directional_phrase(heading_delta: f64, height_delta: f64) -> DirectionalPhrase {
    if height_delta.abs() > STAIRS_THRESHOLD_M {
        return if height_delta > 0.0 {
            DirectionalPhrase::GoUpstairs
        } else {
            DirectionalPhrase::GoDownstairs
        };
    }
    let turn = heading_delta.abs();
    if turn < FORWARD_LIMIT_DEG {
        DirectionalPhrase::GoForward
    } else if turn <= TURN_LIMIT_DEG {
        if heading_delta > 0.0 {
            DirectionalPhrase::TurnRight
        } else {
            DirectionalPhrase::TurnLeft
        }
    } else {
        DirectionalPhrase::TurnAround
    }
}

/// Geometry of a single edge traversal given the agent's current heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveGeometry {
    /// Rotation needed, degrees in (-180, 180]; zero for purely vertical moves.
    pub turn_deg: f64,
    /// Heading after the move; unchanged for purely vertical moves.
    pub new_heading: f64,
    pub distance_m: f64,
    pub height_delta_m: f64,
}

pub fn move_geometry(graph: &NavGraph, from: &str, to: &str, heading: f64) -> Result<MoveGeometry, GraphError> {
    let (a, b) = (graph.position(from)?, graph.position(to)?);
    let (turn_deg, new_heading) = match heading_of(&a, &b) {
        Ok(h) => (normalize_delta(h - heading), h),
        Err(GraphError::ZeroDisplacement) => (0.0, heading),
        Err(e) => return Err(e),
    };
    Ok(MoveGeometry {
        turn_deg,
        new_heading,
        distance_m: a.distance(&b),
        height_delta_m: b.z - a.z,
    })
}

/// `{phrase} to {object}, facing toward {scene}.` for planar moves, with the
/// object drawn uniformly from those within 3 m of the destination. Stair
/// moves are described by the phrase alone.
pub fn describe_move<R: Rng + ?Sized>(
    graph: &NavGraph,
    from: &str,
    to: &str,
    heading: f64,
    scene_of_to: &str,
    rng: &mut R,
) -> Result<String, GraphError> {
    let geo = move_geometry(graph, from, to, heading)?;
    let phrase = directional_phrase(geo.turn_deg, geo.height_delta_m);
    if phrase.is_stairs() {
        return Ok(format!("{phrase}."));
    }
    let nearby = graph.objects_within(to, OBJECT_RADIUS_M)?;
    Ok(if nearby.is_empty() {
        format!("{phrase}, facing toward {scene_of_to}.")
    } else {
        let pick = &nearby[rng.random_range(0..nearby.len())];
        format!("{phrase} to {}, facing toward {scene_of_to}.", pick.name)
    })
}

/// `Turn {angle} degrees. Move {distance} meters.`
pub fn describe_move_symbolic(geo: &MoveGeometry) -> String {
    format!(
        "Turn {:.0} degrees. Move {:.1} meters.",
        geo.turn_deg, geo.distance_m
    )
}

/// How trajectories are rendered in the planner's navigation history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistoryStyle {
    #[default]
    Landmark,
    Symbolic,
}

/// Joins step texts with a space, or returns the no-movement sentinel.
pub fn join_steps<'a>(texts: impl IntoIterator<Item = &'a str>) -> String {
    let parts: Vec<&str> = texts.into_iter().filter(|t| !t.is_empty()).collect();
    if parts.is_empty() {
        NO_MOVEMENT.to_string()
    } else {
        parts.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgraph::tests::{obj, vp};
    use crate::envgraph::NavGraph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn phrase_examples() {
        assert_eq!(directional_phrase(20.0, 0.0), DirectionalPhrase::GoForward);
        assert_eq!(directional_phrase(90.0, 0.0), DirectionalPhrase::TurnRight);
        assert_eq!(directional_phrase(-90.0, 0.0), DirectionalPhrase::TurnLeft);
        assert_eq!(directional_phrase(180.0, 0.0), DirectionalPhrase::TurnAround);
        assert_eq!(directional_phrase(5.0, 0.5), DirectionalPhrase::GoUpstairs);
        assert_eq!(directional_phrase(5.0, -0.5), DirectionalPhrase::GoDownstairs);
    }

    #[test]
    fn boundaries() {
        assert_eq!(directional_phrase(29.999, 0.0), DirectionalPhrase::GoForward);
        assert_eq!(directional_phrase(30.0, 0.0), DirectionalPhrase::TurnRight);
        assert_eq!(directional_phrase(-30.0, 0.0), DirectionalPhrase::TurnLeft);
        assert_eq!(directional_phrase(150.0, 0.0), DirectionalPhrase::TurnRight);
        assert_eq!(directional_phrase(150.001, 0.0), DirectionalPhrase::TurnAround);
        assert_eq!(directional_phrase(0.0, 0.2), DirectionalPhrase::GoForward);
        assert_eq!(directional_phrase(0.0, 0.2001), DirectionalPhrase::GoUpstairs);
    }

    #[test]
    fn turns_mirror() {
        for d in 30..=150 {
            let d = d as f64;
            assert_eq!(directional_phrase(d, 0.0), DirectionalPhrase::TurnRight);
            assert_eq!(directional_phrase(-d, 0.0), DirectionalPhrase::TurnLeft);
        }
    }

    fn line_graph() -> NavGraph {
        let mut b = vp("b", 0.0, 2.0, 0.0);
        b.objects = vec![obj("lamp1", "lamp", 0.5, 2.0, 0.0)];
        NavGraph::new(
            vec![vp("a", 0.0, 0.0, 0.0), b, vp("c", 0.0, 4.0, 0.0), vp("d", 0.0, 4.0, 3.0)],
            vec![("a".into(), "b".into()), ("b".into(), "c".into()), ("c".into(), "d".into())],
        )
        .unwrap()
    }

    #[test]
    fn describe_move_template() {
        let g = line_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            describe_move(&g, "a", "b", 0.0, "a bright living room", &mut rng).unwrap(),
            "go forward to lamp, facing toward a bright living room."
        );
        // lamp at (0.5, 2) is 2.06 m from c
        assert_eq!(
            describe_move(&g, "b", "c", 0.0, "a hallway", &mut rng).unwrap(),
            "go forward to lamp, facing toward a hallway."
        );
        assert_eq!(
            describe_move(&g, "c", "d", 0.0, "a landing", &mut rng).unwrap(),
            "go upstairs."
        );
        assert_eq!(
            describe_move(&g, "c", "b", 0.0, "a hallway", &mut rng).unwrap(),
            "turn around to lamp, facing toward a hallway."
        );
    }

    #[test]
    fn describe_move_without_objects() {
        let g = NavGraph::new(
            vec![vp("a", 0.0, 0.0, 0.0), vp("b", 0.0, 5.0, 0.0)],
            vec![("a".into(), "b".into())],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            describe_move(&g, "a", "b", 0.0, "a bright living room", &mut rng).unwrap(),
            "go forward, facing toward a bright living room."
        );
    }

    #[test]
    fn seeded_choice_is_reproducible() {
        let mut b = vp("b", 0.0, 2.0, 0.0);
        b.objects = (0..6).map(|i| obj(&format!("o{i}"), &format!("thing{i}"), 0.0, 2.0 + i as f64 * 0.1, 0.0)).collect();
        let g = NavGraph::new(vec![vp("a", 0.0, 0.0, 0.0), b], vec![("a".into(), "b".into())]).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10)
                .map(|_| describe_move(&g, "a", "b", 0.0, "x", &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
    }

    #[test]
    fn vertical_move_keeps_heading() {
        let g = line_graph();
        let geo = move_geometry(&g, "c", "d", 123.0).unwrap();
        assert_eq!(geo.turn_deg, 0.0);
        assert_eq!(geo.new_heading, 123.0);
        assert_eq!(geo.height_delta_m, 3.0);
    }

    #[test]
    fn symbolic_rendering() {
        let g = line_graph();
        let geo = move_geometry(&g, "a", "b", 90.0).unwrap();
        assert_eq!(describe_move_symbolic(&geo), "Turn -90 degrees. Move 2.0 meters.");
    }

    #[test]
    fn joining() {
        assert_eq!(join_steps([]), NO_MOVEMENT);
        assert_eq!(join_steps(["go forward.", "turn left."]), "go forward. turn left.");
    }
}
