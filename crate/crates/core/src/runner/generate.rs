//! Seeded synthetic houses for offline runs and tests.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envgraph::{heading_of, normalize_delta, Episode, NavGraph, ObjectAnnotation, Point3, SceneSet, Viewpoint};
use crate::perceive::{infer_floor, STORY_HEIGHT_M};

const SPACING_M: f64 = 3.0;
const CAMERA_HEIGHT_M: f64 = 1.5;

const GROUND_ROOMS: &[&str] = &["living room", "kitchen", "dining room", "hallway", "bathroom", "office", "laundry room"];
const UPPER_ROOMS: &[&str] = &["bedroom", "bathroom", "hallway", "study", "closet"];
const COLORS: &[&str] = &["red", "blue", "white", "black", "wooden", "small", "large"];

fn furniture(room: &str) -> &'static [&'static str] {
    match room {
        "living room" => &["sofa", "television", "armchair", "rug", "plant", "lamp"],
        "kitchen" => &["fridge", "oven", "microwave", "sink", "stool"],
        "dining room" => &["table", "chair", "vase", "candle"],
        "hallway" => &["picture", "clock", "mirror", "bench"],
        "bathroom" => &["towel", "toilet", "sink", "bathtub", "mirror"],
        "office" | "study" => &["desk", "computer", "bookshelf", "chair", "lamp"],
        "laundry room" => &["washing machine", "dryer", "basket"],
        "bedroom" => &["bed", "pillow", "nightstand", "dresser", "lamp", "wardrobe"],
        _ => &["box", "basket", "shelf"],
    }
}

fn ordinal(floor: i32) -> String {
    match floor {
        0 => "first".into(),
        1 => "second".into(),
        2 => "third".into(),
        3 => "fourth".into(),
        n => format!("{}th", n + 1),
    }
}

/// A connected house of `nodes` viewpoints spread over `floors` floors.
/// Each floor is a jittered grid; consecutive floors are joined by a
/// staircase edge. Identical inputs give identical graphs.
pub fn generate_environment(nodes: usize, floors: usize, seed: u64) -> NavGraph {
    let floors = floors.clamp(1, nodes.max(1));
    let nodes = nodes.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    struct Slot {
        id: String,
        floor: usize,
        room: &'static str,
        pos: Point3,
    }
    let mut slots: Vec<Slot> = Vec::with_capacity(nodes);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut first_of_floor = Vec::with_capacity(floors);

    for f in 0..floors {
        let count = nodes / floors + usize::from(f < nodes % floors);
        let cols = (count as f64).sqrt().ceil() as usize;
        let base = slots.len();
        first_of_floor.push(base);
        let rooms = if f == 0 { GROUND_ROOMS } else { UPPER_ROOMS };
        for i in 0..count {
            let (row, col) = (i / cols, i % cols);
            let jx = rng.random_range(-0.4..0.4);
            let jy = rng.random_range(-0.4..0.4);
            slots.push(Slot {
                id: format!("f{f}n{i:02}"),
                floor: f,
                room: rooms.choose(&mut rng).expect("rooms"),
                pos: Point3::new(
                    col as f64 * SPACING_M + jx + f as f64,
                    row as f64 * SPACING_M + jy,
                    f as f64 * STORY_HEIGHT_M + CAMERA_HEIGHT_M,
                ),
            });
            if col > 0 {
                edges.push((base + i - 1, base + i));
            }
            if row > 0 {
                edges.push((base + i - cols, base + i));
            }
            if row > 0 && col + 1 < cols && rng.random_bool(0.2) {
                edges.push((base + i - cols + 1, base + i));
            }
        }
        if f > 0 {
            edges.push((first_of_floor[f - 1], base));
        }
    }

    let mut neighbors = vec![Vec::new(); slots.len()];
    for &(a, b) in &edges {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }

    let mut objects: Vec<Vec<ObjectAnnotation>> = Vec::with_capacity(slots.len());
    for s in &slots {
        let n = rng.random_range(1..=2);
        let mut here = Vec::with_capacity(n);
        for k in 0..n {
            let noun = furniture(s.room).choose(&mut rng).expect("furniture");
            let name = if rng.random_bool(0.5) {
                format!("{} {noun}", COLORS.choose(&mut rng).expect("colors"))
            } else {
                noun.to_string()
            };
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let r = rng.random_range(0.5..1.5);
            here.push(ObjectAnnotation {
                object_id: format!("{}-o{k}", s.id),
                name,
                position: Point3::new(s.pos.x + r * angle.sin(), s.pos.y + r * angle.cos(), s.pos.z),
            });
        }
        objects.push(here);
    }

    let scene = |i: usize, bucket: f64| -> String {
        let best = neighbors[i]
            .iter()
            .filter_map(|&j| {
                let h = heading_of(&slots[i].pos, &slots[j].pos).ok()?;
                let off = normalize_delta(h - bucket).abs();
                (off <= 45.0).then_some((off, j))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match best {
            Some((_, j)) if slots[j].floor != slots[i].floor => "a staircase".to_string(),
            Some((_, j)) => format!("a {} with a {}", slots[j].room, objects[j][0].name),
            None => format!("a {} wall", slots[i].room),
        }
    };
    let viewpoints: Vec<Viewpoint> = (0..slots.len())
        .map(|i| Viewpoint {
            id: slots[i].id.clone(),
            position: slots[i].pos,
            objects: objects[i].clone(),
            scene_descriptions: Some(SceneSet {
                north: scene(i, 0.0),
                east: scene(i, 90.0),
                south: scene(i, 180.0),
                west: scene(i, 270.0),
            }),
        })
        .collect();
    let edge_ids = edges.iter().map(|&(a, b)| (slots[a].id.clone(), slots[b].id.clone()));
    NavGraph::new(viewpoints, edge_ids).expect("generated graph is valid")
}

/// Object-goal episodes on a generated graph: the target is an annotated
/// object, goals are the viewpoints within detection range of any object
/// with that name.
pub fn generate_episodes(graph: &NavGraph, scan: &str, count: usize, seed: u64) -> Vec<Episode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let ids: Vec<&str> = graph.viewpoints().map(|v| v.id.as_str()).collect();
    let objects = graph.all_objects();
    let templates = [
        "Go to the {floor} floor and find the {target}.",
        "Walk to the {target} on the {floor} floor.",
        "Find the {target} on the {floor} floor.",
    ];
    let mut out = Vec::with_capacity(count);
    if objects.is_empty() {
        return out;
    }
    for i in 0..count {
        let target = objects.choose(&mut rng).expect("objects");
        let goals: Vec<String> = ids
            .iter()
            .filter(|id| {
                graph
                    .objects_within(id, crate::envgraph::OBJECT_RADIUS_M)
                    .is_ok_and(|objs| objs.iter().any(|o| o.name.eq_ignore_ascii_case(&target.name)))
            })
            .map(|id| id.to_string())
            .collect();
        let starts: Vec<&str> = ids.iter().copied().filter(|id| !goals.iter().any(|g| g == id)).collect();
        let start = starts.choose(&mut rng).or(ids.first()).expect("non-empty graph");
        let floor = infer_floor(target.position.z);
        let instruction = templates
            .choose(&mut rng)
            .expect("templates")
            .replace("{floor}", &ordinal(floor))
            .replace("{target}", &target.name);
        out.push(Episode {
            id: format!("{scan}-{i:03}"),
            scan: scan.to_string(),
            instruction,
            start_viewpoint: start.to_string(),
            start_heading: f64::from(rng.random_range(0..12) * 30),
            goal_viewpoints: goals,
            target_object: target.name.clone(),
        });
    }
    out
}
