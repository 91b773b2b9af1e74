//! Object localization at the end of navigation: pull the target phrase out
//! of the instruction and pick the best-matching object near the final node.

use serde::{Deserialize, Serialize};

use crate::envgraph::{GraphError, NavGraph, OBJECT_RADIUS_M};
use crate::provider::{Request, Role, ScoreRequest};
use crate::session::{Session, TraceEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub object_id: String,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub target_phrase: String,
    pub candidates: Vec<ScoredCandidate>,
    pub chosen: Option<String>,
}

/// Highest score wins; equal scores go to the smallest object id.
pub fn choose(candidates: &[ScoredCandidate]) -> Option<String> {
    candidates
        .iter()
        .max_by(|a, b| a.score.total_cmp(&b.score).then_with(|| b.object_id.cmp(&a.object_id)))
        .map(|c| c.object_id.clone())
}

/// Asks the extractor for the target phrase; an empty or failed reply falls
/// back to the whole instruction.
pub fn extract_target(session: &mut Session<'_>, instruction: &str) -> String {
    let request = Request::Extract {
        instruction: instruction.to_string(),
    };
    match session.call(Role::Extractor, &request) {
        Ok(raw) => {
            let phrase = raw.trim().trim_matches(['"', '.', '\'']).trim();
            if phrase.is_empty() {
                session.warn("target extractor returned nothing; using the full instruction");
                instruction.to_string()
            } else {
                phrase.to_string()
            }
        }
        Err(e) => {
            session.warn(format!("target extractor failed ({e}); using the full instruction"));
            instruction.to_string()
        }
    }
}

/// Parses scorer output: a JSON array, or whitespace/comma separated numbers.
pub fn parse_scores(raw: &str, expected: usize) -> Option<Vec<f64>> {
    let trimmed = raw.trim();
    let scores: Vec<f64> = match serde_json::from_str::<Vec<f64>>(trimmed) {
        Ok(v) => v,
        Err(_) => trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .ok()?,
    };
    (scores.len() == expected && scores.iter().all(|s| s.is_finite()))
        .then(|| scores.into_iter().map(|s| s.clamp(0.0, 1.0)).collect())
}

/// Scores every object within 3 m of `final_node` against the target.
pub fn locate(
    session: &mut Session<'_>,
    graph: &NavGraph,
    final_node: &str,
    target_phrase: &str,
) -> Result<LocalizationResult, GraphError> {
    let objects = graph.objects_within(final_node, OBJECT_RADIUS_M)?;
    let mut result = LocalizationResult {
        target_phrase: target_phrase.to_string(),
        candidates: Vec::new(),
        chosen: None,
    };
    if !objects.is_empty() {
        let request = Request::Score(ScoreRequest {
            target: target_phrase.to_string(),
            candidates: objects.iter().map(|o| o.name.clone()).collect(),
        });
        let scores = match session.call(Role::Scorer, &request) {
            Ok(raw) => {
                let s = parse_scores(&raw, objects.len());
                if s.is_none() {
                    session.warn(format!("unparseable scorer reply `{}`", raw.trim()));
                }
                s
            }
            Err(e) => {
                session.warn(format!("object scorer failed ({e})"));
                None
            }
        };
        if let Some(scores) = scores {
            result.candidates = objects
                .iter()
                .zip(scores)
                .map(|(o, score)| ScoredCandidate {
                    object_id: o.object_id.clone(),
                    name: o.name.clone(),
                    score,
                })
                .collect();
            result.chosen = choose(&result.candidates);
        }
    }
    session.note(TraceEvent::Localized {
        target_phrase: result.target_phrase.clone(),
        chosen: result.chosen.clone(),
    });
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgraph::tests::{obj, vp};
    use crate::provider::mock::{MockExtractor, OverlapScorer};
    use crate::provider::Providers;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn sc(id: &str, score: f64) -> ScoredCandidate {
        ScoredCandidate { object_id: id.into(), name: id.into(), score }
    }

    #[test]
    fn tie_goes_to_smallest_id() {
        assert_eq!(choose(&[sc("b", 0.5), sc("a", 0.5)]), Some("a".into()));
        assert_eq!(choose(&[sc("b", 0.9), sc("a", 0.5)]), Some("b".into()));
        assert_eq!(choose(&[]), None);
    }

    #[test]
    fn score_parsing() {
        assert_eq!(parse_scores("[1.0, 0.5]", 2), Some(vec![1.0, 0.5]));
        assert_eq!(parse_scores("0.2 1.7", 2), Some(vec![0.2, 1.0]));
        assert_eq!(parse_scores("[1.0]", 2), None);
        assert_eq!(parse_scores("high", 1), None);
    }

    fn graph() -> NavGraph {
        let mut a = vp("a", 0.0, 0.0, 0.0);
        a.objects = vec![obj("o-chair", "chair", 1.0, 0.0, 0.0), obj("o-pillow", "pillow", 0.0, 1.0, 0.0)];
        let mut b = vp("b", 10.0, 0.0, 0.0);
        b.objects = vec![obj("o-lamp", "lamp", 10.0, 1.0, 0.0)];
        NavGraph::new(vec![a, b, vp("c", 20.0, 0.0, 0.0)], vec![("a".into(), "b".into()), ("b".into(), "c".into())]).unwrap()
    }

    fn providers() -> Providers {
        Providers::uniform(Arc::new(OverlapScorer), 1).with(Role::Extractor, Arc::new(MockExtractor))
    }

    #[test]
    fn partial_overlap_picks_pillow() {
        let p = providers();
        let mut s = Session::new("e", &p);
        let r = locate(&mut s, &graph(), "a", "maroon pillow").unwrap();
        assert_eq!(r.chosen.as_deref(), Some("o-pillow"));
        let pillow = r.candidates.iter().find(|c| c.name == "pillow").unwrap();
        let chair = r.candidates.iter().find(|c| c.name == "chair").unwrap();
        assert_eq!(pillow.score, 0.5);
        assert_eq!(chair.score, 0.0);
    }

    #[test]
    fn single_candidate() {
        let p = providers();
        let mut s = Session::new("e", &p);
        let r = locate(&mut s, &graph(), "b", "lamp").unwrap();
        assert_eq!(r.chosen.as_deref(), Some("o-lamp"));
    }

    #[test]
    fn no_candidates_means_no_choice() {
        let p = providers();
        let mut s = Session::new("e", &p);
        let r = locate(&mut s, &graph(), "c", "lamp").unwrap();
        assert_eq!(r.chosen, None);
        assert_eq!(s.ledger.calls(Role::Scorer), 0);
    }

    #[test]
    fn extraction_with_mock() {
        let p = providers();
        let mut s = Session::new("e", &p);
        assert_eq!(extract_target(&mut s, "Go to the lounge on first floor and turn on the lamp."), "lamp");
        assert_eq!(extract_target(&mut s, "find the maroon pillow"), "maroon pillow");
        assert_eq!(extract_target(&mut s, "pillow"), "pillow");
    }

    #[test]
    fn empty_extraction_falls_back() {
        let p = Providers::uniform(Arc::new(crate::provider::mock::FnProvider::new(|_, _| Ok("  ".into()))), 1);
        let mut s = Session::new("e", &p);
        assert_eq!(extract_target(&mut s, "find it"), "find it");
    }

    proptest! {
        #[test]
        fn choice_ignores_order(scores in proptest::collection::vec(0u8..4, 1..8), rot in 0usize..8) {
            let cands: Vec<_> = scores.iter().enumerate().map(|(i, &s)| sc(&format!("o{i}"), s as f64 / 4.0)).collect();
            let mut rotated = cands.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
            prop_assert_eq!(choose(&cands), choose(&rotated));
        }
    }
}
