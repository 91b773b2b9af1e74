#![allow(dead_code)]

use std::path::PathBuf;

use flexnav_core::envgraph::{NavGraph, ObjectAnnotation, Point3, Viewpoint};
use flexnav_core::perceive::{Observation, Orientation, ViewDescriptor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(golden_path(name)).unwrap_or_else(|e| panic!("golden file {name}: {e}"))
}

pub fn hallway_observation() -> Observation {
    Observation::new(
        "h1",
        4.5,
        1,
        "You are in a hallway on the second floor",
        [
            ViewDescriptor { orientation: Orientation::Front, scene_text: "a long hallway".into() },
            ViewDescriptor { orientation: Orientation::Right, scene_text: "a kitchen with a fridge".into() },
            ViewDescriptor { orientation: Orientation::Back, scene_text: "a staircase".into() },
            ViewDescriptor { orientation: Orientation::Left, scene_text: "a bedroom door".into() },
        ],
        vec!["table lamp".into(), "sofa".into()],
    )
}

pub fn bathroom_observation() -> Observation {
    Observation::new(
        "b1",
        1.5,
        0,
        "You are in a bathroom",
        [
            ViewDescriptor { orientation: Orientation::Front, scene_text: "a mirror".into() },
            ViewDescriptor { orientation: Orientation::Right, scene_text: "a bathtub".into() },
            ViewDescriptor { orientation: Orientation::Back, scene_text: "an open door".into() },
            ViewDescriptor { orientation: Orientation::Left, scene_text: "a towel rack".into() },
        ],
        vec![],
    )
}

/// A random graph of `n` nodes. Not necessarily connected; objects are
/// sprinkled around a few nodes.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, edge_prob: f64) -> NavGraph {
    let names = ["lamp", "sofa", "chair", "table"];
    let vps: Vec<Viewpoint> = (0..n)
        .map(|i| {
            let position = Point3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(0.0..6.0));
            let objects = (0..rng.random_range(0..3))
                .map(|k| ObjectAnnotation {
                    object_id: format!("o{i}_{k}"),
                    name: names[rng.random_range(0..names.len())].to_string(),
                    position: Point3::new(
                        position.x + rng.random_range(-3.0..3.0),
                        position.y + rng.random_range(-3.0..3.0),
                        position.z,
                    ),
                })
                .collect();
            Viewpoint { id: format!("v{i:02}"), position, objects, scene_descriptions: None }
        })
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(edge_prob) {
                edges.push((format!("v{i:02}"), format!("v{j:02}")));
            }
        }
    }
    NavGraph::new(vps, edges).unwrap()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// All-pairs shortest paths by Floyd–Warshall over the raw positions,
/// indexed by the graph's sorted node order.
pub fn floyd_warshall(graph: &NavGraph) -> (Vec<String>, Vec<Vec<f64>>) {
    let ids: Vec<String> = graph.viewpoints().map(|v| v.id.clone()).collect();
    let pos: Vec<Point3> = graph.viewpoints().map(|v| v.position).collect();
    let n = ids.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for (i, a) in ids.iter().enumerate() {
        for (j, b) in ids.iter().enumerate() {
            if i != j && graph.has_edge(a, b) {
                let (p, q) = (pos[i], pos[j]);
                d[i][j] = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    (ids, d)
}

/// Random walk of up to `steps` moves from `start`.
pub fn random_walk(graph: &NavGraph, rng: &mut ChaCha8Rng, start: &str, steps: usize) -> Vec<String> {
    let mut walk = vec![start.to_string()];
    for _ in 0..steps {
        let nbrs = graph.neighbors(walk.last().unwrap()).unwrap();
        if nbrs.is_empty() {
            break;
        }
        walk.push(nbrs[rng.random_range(0..nbrs.len())].to_string());
    }
    walk
}

/// A random episode result on `graph`: random goals and target, a random
/// walk as the trajectory, and a random localization choice.
pub fn random_result(graph: &NavGraph, rng: &mut ChaCha8Rng, id: usize) -> flexnav_core::EpisodeResult {
    use flexnav_core::{Episode, EpisodeResult, LocalizationResult};
    let ids: Vec<String> = graph.viewpoints().map(|v| v.id.clone()).collect();
    let start = ids[rng.random_range(0..ids.len())].clone();
    let goals: Vec<String> = (0..rng.random_range(1..=3)).map(|_| ids[rng.random_range(0..ids.len())].clone()).collect();
    let objects = graph.all_objects();
    let target = if objects.is_empty() || rng.random_bool(0.1) {
        "piano".to_string()
    } else {
        objects[rng.random_range(0..objects.len())].name.to_uppercase()
    };
    let steps = rng.random_range(0..8);
    let trajectory = random_walk(graph, rng, &start, steps);
    let chosen = (!objects.is_empty() && rng.random_bool(0.7)).then(|| objects[rng.random_range(0..objects.len())].object_id.clone());
    EpisodeResult {
        episode: Episode {
            id: format!("r{id:04}"),
            scan: String::new(),
            instruction: format!("find the {target}"),
            start_viewpoint: start,
            start_heading: 0.0,
            goal_viewpoints: goals,
            target_object: target.clone(),
        },
        final_node: trajectory.last().unwrap().clone(),
        trajectory,
        localization: LocalizationResult { target_phrase: target, candidates: vec![], chosen },
        planner_iterations: 1,
        aborted: false,
        abort_reason: None,
    }
}

/// Metric values recomputed from scratch: Floyd–Warshall distances,
/// brute-force object visibility, no calls into the metrics module.
#[derive(Debug)]
pub struct OracleMetrics {
    pub tl: f64,
    pub ne: f64,
    pub shortest: f64,
    pub sr: u8,
    pub osr: u8,
    pub spl: f64,
    pub gp: f64,
}

pub fn oracle_metrics(graph: &NavGraph, fw: &(Vec<String>, Vec<Vec<f64>>), r: &flexnav_core::EpisodeResult) -> OracleMetrics {
    let (ids, d) = fw;
    let idx = |id: &str| ids.iter().position(|x| x == id).unwrap();
    let near = |from: &str| r.episode.goal_viewpoints.iter().map(|g| d[idx(from)][idx(g)]).fold(f64::INFINITY, f64::min);
    let sees = |node: &str| {
        let p = graph.viewpoint(node).unwrap().position;
        graph.viewpoints().flat_map(|v| v.objects.iter()).any(|o| {
            let q = o.position;
            let dist = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
            dist <= 3.0 && o.name.to_lowercase() == r.episode.target_object.to_lowercase()
        })
    };
    let tl: f64 = r.trajectory.windows(2).map(|w| edge_len(graph, &w[0], &w[1])).sum();
    let ne = near(&r.final_node);
    let shortest = near(&r.episode.start_viewpoint);
    let sr = u8::from(sees(&r.final_node));
    let osr = u8::from(r.trajectory.iter().any(|n| sees(n)));
    let spl = if sr == 0 {
        0.0
    } else if shortest == 0.0 {
        1.0
    } else {
        shortest / tl.max(shortest)
    };
    OracleMetrics { tl, ne, shortest, sr, osr, spl, gp: shortest - ne }
}

fn edge_len(graph: &NavGraph, a: &str, b: &str) -> f64 {
    let (p, q) = (graph.viewpoint(a).unwrap().position, graph.viewpoint(b).unwrap().position);
    ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt()
}

/// Compares an optional metric against an oracle value that may be infinite.
pub fn close(actual: Option<f64>, oracle: f64, tol: f64) -> bool {
    match actual {
        Some(a) => oracle.is_finite() && (a - oracle).abs() <= tol,
        None => !oracle.is_finite(),
    }
}

/// Every golden file paired with the text the code renders for it.
pub fn golden_cases() -> Vec<(&'static str, String)> {
    use flexnav_core::execute::build_tie_break_prompt;
    use flexnav_core::plan::{build_plan_prompt, build_system_principle, NavHistory, SystemPrinciple};

    let principle = build_system_principle(&SystemPrinciple::default()).unwrap();
    let options = [
        "go forward to lamp, facing toward a bedroom.".to_string(),
        "turn left to chair, facing toward a kitchen.".to_string(),
        "stop here".to_string(),
    ];
    let tie_break = build_tie_break_prompt("go forward to the lamp", "go forward to sofa, facing toward a hallway.", &options);
    let mut history = NavHistory::default();
    history.push("go forward to sofa, facing toward a hallway. go upstairs.", Some("go upstairs".into()));
    history.push("turn left to bed, facing toward a bedroom.", Some("turn left to the bed".into()));
    let messages = build_plan_prompt(
        &principle,
        "Go to the bedroom on the second floor and find the lamp.",
        &history,
        &hallway_observation(),
        Some("the door ahead is closed"),
        false,
    );
    assert_eq!(messages.len(), 2);
    assert_eq!(messages[0].content, principle);
    vec![
        ("observation.txt", hallway_observation().formatted_text),
        ("observation_empty.txt", bathroom_observation().formatted_text),
        ("system_principle.txt", principle),
        ("tie_break.txt", tie_break),
        ("plan_prompt.txt", messages[1].content.clone()),
    ]
}
