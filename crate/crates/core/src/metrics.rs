//! Evaluation metrics over finished episodes, plus result-file writers.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envgraph::{Episode, GraphError, NavGraph, OBJECT_RADIUS_M};
use crate::locate::LocalizationResult;
use crate::session::CostLedger;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("malformed result for episode {episode}: {message}")]
    Malformed { episode: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad results record on line {line}: {message}")]
    Record { line: usize, message: String },
}

/// Outcome of one episode, the input to every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: Episode,
    /// Nodes occupied in order; the first is the start node.
    pub trajectory: Vec<String>,
    pub final_node: String,
    pub localization: LocalizationResult,
    pub planner_iterations: u32,
    pub aborted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

impl EpisodeResult {
    pub fn validate(&self, graph: &NavGraph) -> Result<(), MetricsError> {
        let bad = |message: String| MetricsError::Malformed {
            episode: self.episode.id.clone(),
            message,
        };
        let (Some(first), Some(last)) = (self.trajectory.first(), self.trajectory.last()) else {
            return Err(bad("empty trajectory".into()));
        };
        if *first != self.episode.start_viewpoint {
            return Err(bad(format!("trajectory starts at `{first}`, not the start viewpoint")));
        }
        if *last != self.final_node {
            return Err(bad(format!("final node `{}` is not the last trajectory node", self.final_node)));
        }
        for w in self.trajectory.windows(2) {
            if !graph.has_edge(&w[0], &w[1]) {
                return Err(bad(format!("`{}` and `{}` are not adjacent", w[0], w[1])));
            }
        }
        Ok(())
    }
}

/// Trajectory length: sum of edge lengths along the walk.
pub fn tl(graph: &NavGraph, result: &EpisodeResult) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    for w in result.trajectory.windows(2) {
        total += graph.position(&w[0])?.distance(&graph.position(&w[1])?);
    }
    Ok(total)
}

fn nearest_goal(graph: &NavGraph, from: &str, goals: &[String]) -> Result<f64, MetricsError> {
    let dist = graph.distances_from(from)?;
    goals.iter().try_fold(f64::INFINITY, |best, g| {
        dist.get(g.as_str())
            .map(|&d| best.min(d))
            .ok_or_else(|| MetricsError::Graph(GraphError::UnknownNode(g.clone())))
    })
}

/// Navigation error: geodesic distance from the final node to the nearest goal.
pub fn ne(graph: &NavGraph, result: &EpisodeResult) -> Result<f64, MetricsError> {
    nearest_goal(graph, &result.final_node, &result.episode.goal_viewpoints)
}

fn target_visible(graph: &NavGraph, node: &str, target: &str) -> Result<bool, MetricsError> {
    let target = target.trim();
    Ok(graph
        .objects_within(node, OBJECT_RADIUS_M)?
        .iter()
        .any(|o| o.name.trim().eq_ignore_ascii_case(target)))
}

/// Success: the target object lies within 3 m of the final node.
pub fn sr(graph: &NavGraph, result: &EpisodeResult) -> Result<u8, MetricsError> {
    Ok(target_visible(graph, &result.final_node, &result.episode.target_object)?.into())
}

/// Oracle success: the target was within 3 m of some trajectory node.
pub fn osr(graph: &NavGraph, result: &EpisodeResult) -> Result<u8, MetricsError> {
    for node in &result.trajectory {
        if target_visible(graph, node, &result.episode.target_object)? {
            return Ok(1);
        }
    }
    Ok(0)
}

/// Length-weighted success `s * L / max(P, L)`; a successful episode whose
/// start already satisfies the goal (L = 0) scores 1.
pub fn path_weighted(success: u8, shortest: f64, taken: f64) -> f64 {
    if success == 0 {
        0.0
    } else if shortest == 0.0 {
        1.0
    } else {
        shortest / taken.max(shortest)
    }
}

fn shortest_len(graph: &NavGraph, result: &EpisodeResult) -> Result<f64, MetricsError> {
    nearest_goal(graph, &result.episode.start_viewpoint, &result.episode.goal_viewpoints)
}

/// `None` when the start cannot reach any goal.
pub fn spl(graph: &NavGraph, result: &EpisodeResult) -> Result<Option<f64>, MetricsError> {
    let l = shortest_len(graph, result)?;
    if !l.is_finite() {
        return Ok(None);
    }
    Ok(Some(path_weighted(sr(graph, result)?, l, tl(graph, result)?)))
}

/// Remote grounding success: navigation succeeded and the chosen object is the target.
pub fn rgs(graph: &NavGraph, result: &EpisodeResult) -> Result<u8, MetricsError> {
    if sr(graph, result)? == 0 {
        return Ok(0);
    }
    let target = result.episode.target_object.trim();
    let hit = result
        .localization
        .chosen
        .as_deref()
        .and_then(|id| graph.object(id))
        .is_some_and(|o| o.name.trim().eq_ignore_ascii_case(target));
    Ok(hit.into())
}

pub fn rgspl(graph: &NavGraph, result: &EpisodeResult) -> Result<Option<f64>, MetricsError> {
    let l = shortest_len(graph, result)?;
    if !l.is_finite() {
        return Ok(None);
    }
    Ok(Some(path_weighted(rgs(graph, result)?, l, tl(graph, result)?)))
}

/// Goal progress: distance to the goal at the start minus at the end.
pub fn gp(graph: &NavGraph, result: &EpisodeResult) -> Result<Option<f64>, MetricsError> {
    let (start, end) = (shortest_len(graph, result)?, ne(graph, result)?);
    Ok((start.is_finite() && end.is_finite()).then_some(start - end))
}

/// Every metric for one episode. Geodesic-based values are `None` when a
/// required geodesic is infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode_id: String,
    pub tl: f64,
    pub ne: Option<f64>,
    pub sr: u8,
    pub osr: u8,
    pub spl: Option<f64>,
    pub rgs: u8,
    pub rgspl: Option<f64>,
    pub gp: Option<f64>,
}

impl EpisodeMetrics {
    pub fn compute(graph: &NavGraph, result: &EpisodeResult) -> Result<Self, MetricsError> {
        result.validate(graph)?;
        let ne = ne(graph, result)?;
        Ok(Self {
            episode_id: result.episode.id.clone(),
            tl: tl(graph, result)?,
            ne: ne.is_finite().then_some(ne),
            sr: sr(graph, result)?,
            osr: osr(graph, result)?,
            spl: spl(graph, result)?,
            rgs: rgs(graph, result)?,
            rgspl: rgspl(graph, result)?,
            gp: gp(graph, result)?,
        })
    }

    pub fn has_infinite_geodesic(&self) -> bool {
        self.ne.is_none() || self.spl.is_none() || self.gp.is_none()
    }
}

/// Macro averages; `None` when no episode contributes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub tl: Option<f64>,
    pub ne: Option<f64>,
    pub sr: Option<f64>,
    pub osr: Option<f64>,
    pub spl: Option<f64>,
    pub rgs: Option<f64>,
    pub rgspl: Option<f64>,
    pub gp: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: Vec<EpisodeMetrics>,
    pub mean: MeanMetrics,
    /// Episodes left out of geodesic-based averages.
    pub infinite_geodesic_exclusions: usize,
    pub aborted: usize,
    pub cost: CostLedger,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates per-episode metrics. Episodes with an infinite required
/// geodesic are excluded from every average and counted.
pub fn aggregate(episodes: &[EpisodeMetrics]) -> MetricsReport {
    let inc: Vec<&EpisodeMetrics> = episodes.iter().filter(|m| !m.has_infinite_geodesic()).collect();
    let avg = |f: &dyn Fn(&EpisodeMetrics) -> f64| mean(inc.iter().map(|m| f(m)));
    MetricsReport {
        episodes: episodes.to_vec(),
        mean: MeanMetrics {
            tl: avg(&|m| m.tl),
            ne: avg(&|m| m.ne.unwrap_or_default()),
            sr: avg(&|m| m.sr.into()),
            osr: avg(&|m| m.osr.into()),
            spl: avg(&|m| m.spl.unwrap_or_default()),
            rgs: avg(&|m| m.rgs.into()),
            rgspl: avg(&|m| m.rgspl.unwrap_or_default()),
            gp: avg(&|m| m.gp.unwrap_or_default()),
        },
        infinite_geodesic_exclusions: episodes.len() - inc.len(),
        aborted: 0,
        cost: CostLedger::default(),
    }
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub result: EpisodeResult,
    pub metrics: EpisodeMetrics,
    pub ledger: CostLedger,
}

pub fn aggregate_records(records: &[EpisodeRecord]) -> MetricsReport {
    let metrics: Vec<_> = records.iter().map(|r| r.metrics.clone()).collect();
    let mut report = aggregate(&metrics);
    report.aborted = records.iter().filter(|r| r.result.aborted).count();
    for r in records {
        report.cost.merge(&r.ledger);
    }
    report
}

pub fn write_results(path: &Path, records: &[EpisodeRecord]) -> Result<(), MetricsError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<EpisodeRecord>, MetricsError> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| MetricsError::Record {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

const SUMMARY_COLUMNS: [&str; 13] = [
    "episodes", "TL", "NE", "OSR", "SR", "SPL", "RGS", "RGSPL", "GP", "LLM calls", "Total Tokens", "excluded",
    "aborted",
];

fn summary_cells(report: &MetricsReport) -> Vec<String> {
    let m = &report.mean;
    let meters = |v: Option<f64>| v.map_or_else(|| "-".into(), |v| format!("{v:.2}"));
    let pct = |v: Option<f64>| v.map_or_else(|| "-".into(), |v| format!("{:.2}", v * 100.0));
    vec![
        report.episodes.len().to_string(),
        meters(m.tl),
        meters(m.ne),
        pct(m.osr),
        pct(m.sr),
        pct(m.spl),
        pct(m.rgs),
        pct(m.rgspl),
        meters(m.gp),
        report.cost.llm_calls().to_string(),
        report.cost.total_tokens().to_string(),
        report.infinite_geodesic_exclusions.to_string(),
        report.aborted.to_string(),
    ]
}

/// Summary as CSV; rates are percentages, lengths in meters.
pub fn summary_csv(report: &MetricsReport) -> String {
    format!("{}\n{}\n", SUMMARY_COLUMNS.join(","), summary_cells(report).join(","))
}

/// Aligned plain-text version of [`summary_csv`].
pub fn summary_table(report: &MetricsReport) -> String {
    let cells = summary_cells(report);
    let widths: Vec<usize> = SUMMARY_COLUMNS.iter().zip(&cells).map(|(h, c)| h.len().max(c.len())).collect();
    let mut out = String::new();
    for row in [SUMMARY_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>(), cells] {
        let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  "));
    }
    out
}
