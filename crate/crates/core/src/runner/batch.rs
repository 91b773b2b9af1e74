use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{run_episode, DatasetError, EpisodeOutput, RunConfig};
use super::dataset::Dataset;
use crate::metrics::{aggregate_records, summary_csv, write_results, EpisodeMetrics, EpisodeRecord, MetricsReport};
use crate::provider::Providers;

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub outputs: Vec<EpisodeOutput>,
    pub records: Vec<EpisodeRecord>,
    pub report: MetricsReport,
}

/// Wall-clock figures, kept apart from the reproducible results.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeTiming {
    pub episode_id: String,
    pub wall_ms: f64,
    pub roles_ms: std::collections::BTreeMap<String, f64>,
}

/// Runs every episode with up to `config.parallelism` in flight. Output
/// order follows the dataset order regardless of scheduling.
pub fn run_batch(config: &RunConfig, dataset: &Dataset, providers: &Providers) -> Result<BatchOutput, DatasetError> {
    let mut missing = Vec::new();
    for ep in &dataset.episodes {
        match dataset.graph_for(ep) {
            Some(g) => {
                if let Err(e) = ep.validate(g) {
                    missing.push(e.to_string());
                }
            }
            None => missing.push(format!("episode {}: unknown scan `{}`", ep.id, ep.scan)),
        }
    }
    if !missing.is_empty() {
        return Err(DatasetError::Invalid(missing));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .expect("thread pool");
    let outputs: Vec<EpisodeOutput> = pool.install(|| {
        dataset
            .episodes
            .par_iter()
            .map(|ep| {
                let graph = dataset.graph_for(ep).expect("checked above");
                run_episode(config, graph, ep, providers)
            })
            .collect()
    });

    let mut records = Vec::with_capacity(outputs.len());
    for out in &outputs {
        let graph = dataset.graph_for(&out.result.episode).expect("checked above");
        match EpisodeMetrics::compute(graph, &out.result) {
            Ok(metrics) => records.push(EpisodeRecord {
                result: out.result.clone(),
                metrics,
                ledger: out.ledger.clone(),
            }),
            Err(e) => log::error!("episode {} left out of the report: {e}", out.result.episode.id),
        }
    }
    let report = aggregate_records(&records);
    Ok(BatchOutput {
        outputs,
        records,
        report,
    })
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Writes `results.jsonl`, `summary.csv`, `traces/<episode>.json` and
/// `timing.json` under `out_dir`.
pub fn write_batch(out_dir: &Path, batch: &BatchOutput) -> std::io::Result<()> {
    let traces = out_dir.join("traces");
    std::fs::create_dir_all(&traces)?;
    write_results(&out_dir.join("results.jsonl"), &batch.records).map_err(std::io::Error::other)?;
    std::fs::write(out_dir.join("summary.csv"), summary_csv(&batch.report))?;
    let mut timing = Vec::new();
    for out in &batch.outputs {
        let mut text = serde_json::to_string_pretty(&out.trace).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(traces.join(format!("{}.json", file_safe(&out.trace.episode_id))), text)?;
        timing.push(EpisodeTiming {
            episode_id: out.trace.episode_id.clone(),
            wall_ms: out.wall_time.as_secs_f64() * 1e3,
            roles_ms: out
                .ledger
                .roles
                .iter()
                .map(|(k, v)| (k.clone(), v.wall_time.as_secs_f64() * 1e3))
                .collect(),
        });
    }
    std::fs::write(
        out_dir.join("timing.json"),
        serde_json::to_string_pretty(&timing).map_err(std::io::Error::other)?,
    )?;
    Ok(())
}
