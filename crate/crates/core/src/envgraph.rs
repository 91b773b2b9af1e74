//! Environment model: an undirected navigation graph over viewpoints, with
//! geometry queries, weighted shortest paths and object proximity.
//!
//! Graphs are immutable once built and can be shared freely between
//! concurrently running episodes.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default object-detection radius in meters.
pub const OBJECT_RADIUS_M: f64 = 3.0;

const WEIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid environment: {0}")]
    Validation(String),
    #[error("unknown viewpoint `{0}`")]
    UnknownNode(String),
    #[error("headings are undefined for a zero planar displacement")]
    ZeroDisplacement,
}

/// A point in world coordinates, meters. `z` is the height off the ground.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (other.x - self.x, other.y - self.y, other.z - self.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn planar_distance(&self, other: &Point3) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    pub fn translated(&self, by: &Point3) -> Point3 {
        Point3::new(self.x + by.x, self.y + by.y, self.z + by.z)
    }
}

// Serialized as a bare `[x, y, z]` array.
impl Serialize for Point3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        Ok(Point3 { x, y, z })
    }
}

/// Agent pose. Heading is a compass angle: 0° along +y, clockwise positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Point3,
    pub heading: f64,
    pub elevation: f64,
}

impl Pose {
    pub fn new(position: Point3, heading: f64, elevation: f64) -> Self {
        Self {
            position,
            heading: normalize_heading(heading),
            elevation: elevation.clamp(-90.0, 90.0),
        }
    }
}

/// Wraps any angle into `[0, 360)`.
pub fn normalize_heading(deg: f64) -> f64 {
    // adding 0.0 turns -0.0 into 0.0
    let h = deg.rem_euclid(360.0) + 0.0;
    // rem_euclid can return 360.0 for tiny negative inputs
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Wraps any angle difference into `(-180, 180]`.
pub fn normalize_delta(deg: f64) -> f64 {
    let d = normalize_heading(deg);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Compass heading of the planar displacement from `from` to `to`.
pub fn heading_between(from: &Pose, to: &Point3) -> Result<f64, GraphError> {
    heading_of(&from.position, to)
}

pub(crate) fn heading_of(from: &Point3, to: &Point3) -> Result<f64, GraphError> {
    let (dx, dy) = (to.x - from.x, to.y - from.y);
    if dx == 0.0 && dy == 0.0 {
        return Err(GraphError::ZeroDisplacement);
    }
    Ok(normalize_heading(dx.atan2(dy).to_degrees()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    #[serde(rename = "id")]
    pub object_id: String,
    pub name: String,
    pub position: Point3,
}

/// Scene descriptions for the four absolute orientation buckets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSet {
    #[serde(rename = "0")]
    pub north: String,
    #[serde(rename = "90")]
    pub east: String,
    #[serde(rename = "180")]
    pub south: String,
    #[serde(rename = "270")]
    pub west: String,
}

impl SceneSet {
    /// Description stored for an absolute bucket (0, 90, 180 or 270).
    pub fn for_bucket(&self, bucket: u16) -> &str {
        match bucket {
            0 => &self.north,
            90 => &self.east,
            180 => &self.south,
            _ => &self.west,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub id: String,
    pub position: Point3,
    #[serde(default)]
    pub objects: Vec<ObjectAnnotation>,
    #[serde(default, rename = "scenes", skip_serializing_if = "Option::is_none")]
    pub scene_descriptions: Option<SceneSet>,
}

/// A navigation episode: instruction, start pose and goal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    #[serde(default)]
    pub scan: String,
    pub instruction: String,
    pub start_viewpoint: String,
    #[serde(default)]
    pub start_heading: f64,
    pub goal_viewpoints: Vec<String>,
    pub target_object: String,
}

impl Episode {
    pub fn validate(&self, graph: &NavGraph) -> Result<(), GraphError> {
        if self.goal_viewpoints.is_empty() {
            return Err(GraphError::Validation(format!(
                "episode {} has no goal viewpoints",
                self.id
            )));
        }
        for id in std::iter::once(&self.start_viewpoint).chain(&self.goal_viewpoints) {
            if !graph.contains(id) {
                return Err(GraphError::Validation(format!(
                    "episode {} references unknown viewpoint `{id}`",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct EnvironmentFile {
    viewpoints: Vec<Viewpoint>,
    edges: Vec<[String; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Undirected weighted graph of viewpoints. Edge weights are the Euclidean
/// distance between endpoint positions.
#[derive(Debug, Clone)]
pub struct NavGraph {
    // sorted by id
    viewpoints: Vec<Viewpoint>,
    index: HashMap<String, usize>,
    // neighbor lists sorted by neighbor id
    adjacency: Vec<Vec<(usize, f64)>>,
    // every annotated object in the graph, deduplicated by id
    objects: Vec<ObjectAnnotation>,
    warnings: Vec<String>,
}

impl NavGraph {
    /// Builds and validates a graph. Edge weights are always derived from
    /// positions.
    pub fn new<I>(viewpoints: Vec<Viewpoint>, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut viewpoints = viewpoints;
        viewpoints.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = HashMap::with_capacity(viewpoints.len());
        for (i, vp) in viewpoints.iter().enumerate() {
            if index.insert(vp.id.clone(), i).is_some() {
                return Err(GraphError::Validation(format!(
                    "duplicate viewpoint id `{}`",
                    vp.id
                )));
            }
            let mut seen = HashSet::new();
            for obj in &vp.objects {
                if !seen.insert(obj.object_id.as_str()) {
                    return Err(GraphError::Validation(format!(
                        "duplicate object id `{}` at viewpoint `{}`",
                        obj.object_id, vp.id
                    )));
                }
            }
        }

        let mut edge_set = BTreeSet::new();
        for (a, b) in edges {
            let ia = *index.get(&a).ok_or_else(|| {
                GraphError::Validation(format!("edge references unknown viewpoint `{a}`"))
            })?;
            let ib = *index.get(&b).ok_or_else(|| {
                GraphError::Validation(format!("edge references unknown viewpoint `{b}`"))
            })?;
            if ia == ib {
                return Err(GraphError::Validation(format!("self-loop at `{a}`")));
            }
            edge_set.insert((ia.min(ib), ia.max(ib)));
        }

        let mut adjacency = vec![Vec::new(); viewpoints.len()];
        for &(a, b) in &edge_set {
            let w = viewpoints[a].position.distance(&viewpoints[b].position);
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        // indices follow id order, so sorting by index sorts by id
        for list in &mut adjacency {
            list.sort_by_key(|&(n, _)| n);
        }

        let mut seen = HashSet::new();
        let objects = viewpoints
            .iter()
            .flat_map(|vp| vp.objects.iter())
            .filter(|o| seen.insert(o.object_id.clone()))
            .cloned()
            .collect();

        let mut graph = NavGraph {
            viewpoints,
            index,
            adjacency,
            objects,
            warnings: Vec::new(),
        };
        let components = graph.component_count();
        if components > 1 {
            let msg = format!("graph is disconnected ({components} components)");
            log::warn!("{msg}");
            graph.warnings.push(msg);
        }
        Ok(graph)
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: EnvironmentFile = serde_json::from_str(text).map_err(|e| GraphError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let edges = file.edges.into_iter().map(|[a, b]| (a, b));
        NavGraph::new(file.viewpoints, edges)
    }

    /// Canonical serialization: viewpoints sorted by id, edges as sorted
    /// `[lo, hi]` pairs, two-space indentation and a trailing newline.
    pub fn to_json(&self) -> String {
        let file = EnvironmentFile {
            viewpoints: self.viewpoints.clone(),
            edges: self
                .edges()
                .map(|(a, b, _)| [a.to_string(), b.to_string()])
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&file).expect("environment serializes");
        out.push('\n');
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Non-fatal issues found while building the graph.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.viewpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.viewpoints.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn viewpoints(&self) -> impl Iterator<Item = &Viewpoint> {
        self.viewpoints.iter()
    }

    pub fn viewpoint(&self, id: &str) -> Result<&Viewpoint, GraphError> {
        self.idx(id).map(|i| &self.viewpoints[i])
    }

    pub fn position(&self, id: &str) -> Result<Point3, GraphError> {
        self.viewpoint(id).map(|vp| vp.position)
    }

    /// All edges once each as `(lo, hi, weight)`, ordered by `(lo, hi)`.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.adjacency.iter().enumerate().flat_map(move |(a, list)| {
            list.iter()
                .filter(move |&&(b, _)| b > a)
                .map(move |&(b, w)| (self.viewpoints[a].id.as_str(), self.viewpoints[b].id.as_str(), w))
        })
    }

    pub fn edge_weight(&self, a: &str, b: &str) -> Option<f64> {
        let (ia, ib) = (self.idx(a).ok()?, self.idx(b).ok()?);
        self.adjacency[ia]
            .binary_search_by_key(&ib, |&(n, _)| n)
            .ok()
            .map(|k| self.adjacency[ia][k].1)
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edge_weight(a, b).is_some()
    }

    /// Neighbor ids in sorted order.
    pub fn neighbors(&self, node: &str) -> Result<Vec<&str>, GraphError> {
        let i = self.idx(node)?;
        Ok(self.adjacency[i]
            .iter()
            .map(|&(n, _)| self.viewpoints[n].id.as_str())
            .collect())
    }

    /// Shortest weighted path length, or `f64::INFINITY` when unreachable.
    pub fn geodesic(&self, a: &str, b: &str) -> Result<f64, GraphError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        Ok(self.dijkstra(ia, Some(ib))[ib])
    }

    /// Shortest distances from `source` to every node, keyed by id.
    pub fn distances_from(&self, source: &str) -> Result<HashMap<&str, f64>, GraphError> {
        let s = self.idx(source)?;
        let dist = self.dijkstra(s, None);
        Ok(self
            .viewpoints
            .iter()
            .zip(dist)
            .map(|(vp, d)| (vp.id.as_str(), d))
            .collect())
    }

    /// Shortest path as a node list including both endpoints.
    pub fn shortest_path(&self, a: &str, b: &str) -> Result<Option<Vec<String>>, GraphError> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let n = self.viewpoints.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[ia] = 0.0;
        heap.push(std::cmp::Reverse((Dist(0.0), ia)));
        while let Some(std::cmp::Reverse((Dist(d), u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            if u == ib {
                break;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                    heap.push(std::cmp::Reverse((Dist(nd), v)));
                }
            }
        }
        if dist[ib].is_infinite() {
            return Ok(None);
        }
        let mut path = vec![ib];
        while *path.last().unwrap() != ia {
            path.push(prev[*path.last().unwrap()]);
        }
        Ok(Some(
            path.into_iter()
                .rev()
                .map(|i| self.viewpoints[i].id.clone())
                .collect(),
        ))
    }

    /// Objects within `radius` meters (inclusive) of the node's position,
    /// drawn from every annotation in the graph, sorted by distance then id.
    pub fn objects_within(&self, node: &str, radius: f64) -> Result<Vec<&ObjectAnnotation>, GraphError> {
        let origin = self.position(node)?;
        let mut hits: Vec<(f64, &ObjectAnnotation)> = self
            .objects
            .iter()
            .map(|o| (origin.distance(&o.position), o))
            .filter(|&(d, _)| d <= radius)
            .collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.object_id.cmp(&b.1.object_id)));
        Ok(hits.into_iter().map(|(_, o)| o).collect())
    }

    pub fn object(&self, object_id: &str) -> Option<&ObjectAnnotation> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    /// Every distinct annotated object in the graph.
    pub fn all_objects(&self) -> &[ObjectAnnotation] {
        &self.objects
    }

    /// Signed height change `z(b) - z(a)`.
    pub fn height_delta(&self, a: &str, b: &str) -> Result<f64, GraphError> {
        Ok(self.position(b)?.z - self.position(a)?.z)
    }

    /// Copy of the graph with every coordinate shifted by `offset`.
    pub fn translated(&self, offset: Point3) -> NavGraph {
        let viewpoints = self
            .viewpoints
            .iter()
            .map(|vp| Viewpoint {
                position: vp.position.translated(&offset),
                objects: vp
                    .objects
                    .iter()
                    .map(|o| ObjectAnnotation {
                        position: o.position.translated(&offset),
                        ..o.clone()
                    })
                    .collect(),
                ..vp.clone()
            })
            .collect();
        let edges: Vec<_> = self
            .edges()
            .map(|(a, b, _)| (a.to_string(), b.to_string()))
            .collect();
        NavGraph::new(viewpoints, edges).expect("translation preserves validity")
    }

    fn idx(&self, id: &str) -> Result<usize, GraphError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    fn dijkstra(&self, source: usize, target: Option<usize>) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.viewpoints.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(std::cmp::Reverse((Dist(0.0), source)));
        while let Some(std::cmp::Reverse((Dist(d), u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            if Some(u) == target {
                break;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(std::cmp::Reverse((Dist(nd), v)));
                }
            }
        }
        dist
    }

    fn component_count(&self) -> usize {
        let n = self.viewpoints.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    /// Checks stored weights against positions.
    pub fn check_weights(&self) -> bool {
        self.edges().all(|(a, b, w)| {
            let d = self.viewpoints[self.index[a]]
                .position
                .distance(&self.viewpoints[self.index[b]].position);
            (d - w).abs() <= WEIGHT_EPS
        })
    }
}

impl fmt::Display for NavGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "NavGraph({} viewpoints, {} edges)",
            self.viewpoints.len(),
            self.edges().count()
        )
    }
}
