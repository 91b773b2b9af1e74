use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::envgraph::{Episode, NavGraph};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// Environment graphs keyed by scan id, plus the episodes to run.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub graphs: BTreeMap<String, NavGraph>,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    /// Graph an episode runs in. An empty scan id is allowed when there is
    /// exactly one graph.
    pub fn graph_for(&self, episode: &Episode) -> Option<&NavGraph> {
        if episode.scan.is_empty() && self.graphs.len() == 1 {
            return self.graphs.values().next();
        }
        self.graphs.get(&episode.scan)
    }
}

/// Loads every `*.json` graph in `graph_dir` (scan id = file stem) and the
/// episode array in `episodes_file`. All problems are reported together.
pub fn load_dataset(graph_dir: &Path, episodes_file: &Path) -> Result<Dataset, DatasetError> {
    let mut errors = Vec::new();
    let mut dataset = Dataset::default();

    match std::fs::read_dir(graph_dir) {
        Ok(entries) => {
            let mut paths: Vec<_> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            paths.sort();
            for path in paths {
                let scan = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                match NavGraph::load(&path) {
                    Ok(g) => {
                        for w in g.warnings() {
                            log::warn!("{}: {w}", path.display());
                        }
                        dataset.graphs.insert(scan, g);
                    }
                    Err(e) => errors.push(format!("{}: {e}", path.display())),
                }
            }
            if dataset.graphs.is_empty() && errors.is_empty() {
                errors.push(format!("{}: no environment files found", graph_dir.display()));
            }
        }
        Err(e) => errors.push(format!("{}: {e}", graph_dir.display())),
    }

    let episodes: Vec<serde_json::Value> = match std::fs::read_to_string(episodes_file)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(v) => v,
        Err(e) => {
            errors.push(format!("{}: {e}", episodes_file.display()));
            return Err(DatasetError::Invalid(errors));
        }
    };

    let mut seen = std::collections::HashSet::new();
    for (i, value) in episodes.into_iter().enumerate() {
        let episode: Episode = match serde_json::from_value(value) {
            Ok(ep) => ep,
            Err(e) => {
                errors.push(format!("episode #{i}: {e}"));
                continue;
            }
        };
        if !seen.insert(episode.id.clone()) {
            errors.push(format!("episode #{i}: duplicate id `{}`", episode.id));
        }
        match dataset.graph_for(&episode) {
            Some(g) => {
                if let Err(e) = episode.validate(g) {
                    errors.push(format!("episode #{i}: {e}"));
                }
            }
            None if !dataset.graphs.is_empty() => {
                errors.push(format!("episode #{i} ({}): unknown scan `{}`", episode.id, episode.scan))
            }
            None => {}
        }
        dataset.episodes.push(episode);
    }

    if errors.is_empty() {
        Ok(dataset)
    } else {
        Err(DatasetError::Invalid(errors))
    }
}
