use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use flexnav_core::metrics::{aggregate_records, read_results, summary_table};
use flexnav_core::runner::{trajectory_dot, write_batch};
use flexnav_core::{generate_environment, generate_episodes, load_dataset, run_batch, NavGraph, Providers, RunConfig};

#[derive(Parser)]
#[command(name = "flexnav", version, about = "Run and evaluate hierarchical graph navigation episodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every episode of a dataset and write results, traces and a summary.
    Run {
        /// Directory of environment files; the file stem is the scan id.
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        episodes: PathBuf,
        /// TOML run configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// `mock`, `replay:DIR` or `live`.
        #[arg(long, default_value = "mock")]
        providers: String,
    },
    /// Summarize a results file.
    Eval {
        #[arg(long)]
        results: PathBuf,
        /// Print CSV instead of an aligned table.
        #[arg(long)]
        csv: bool,
    },
    /// Generate a synthetic multi-floor environment.
    Gen {
        #[arg(long)]
        nodes: usize,
        #[arg(long, default_value_t = 1)]
        floors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write this many episodes for the environment.
        #[arg(long)]
        episodes: Option<usize>,
        /// Where to write the episodes (default: `<out stem>.episodes.json`).
        #[arg(long)]
        episodes_out: Option<PathBuf>,
    },
    /// Export the walked trajectory of one episode as a Graphviz file.
    Trace {
        #[arg(long)]
        episode: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "results.jsonl")]
        results: PathBuf,
        /// Environment directory, to draw the full graph at node positions.
        #[arg(long)]
        graphs: Option<PathBuf>,
    },
}

fn providers(mode: &str, config: &RunConfig) -> Result<Providers> {
    Ok(match mode {
        "mock" => config.mock_providers(),
        "live" => config.live_providers()?,
        other => match other.strip_prefix("replay:") {
            Some(dir) => config.replay_providers(Path::new(dir))?,
            None => bail!("unknown provider mode `{other}` (expected mock, replay:DIR or live)"),
        },
    })
}

fn run(graphs: &Path, episodes: &Path, config: Option<&Path>, out: &Path, mode: &str) -> Result<()> {
    let config = match config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    let providers = providers(mode, &config)?;
    let dataset = load_dataset(graphs, episodes)?;
    log::info!("running {} episodes over {} environments", dataset.episodes.len(), dataset.graphs.len());
    let batch = run_batch(&config, &dataset, &providers)?;
    std::fs::create_dir_all(out)?;
    write_batch(out, &batch).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", summary_table(&batch.report));
    Ok(())
}

fn gen(nodes: usize, floors: usize, seed: u64, out: &Path, episodes: Option<usize>, episodes_out: Option<PathBuf>) -> Result<()> {
    if nodes == 0 {
        bail!("--nodes must be at least 1");
    }
    let graph = generate_environment(nodes, floors, seed);
    graph.save(out)?;
    if let Some(n) = episodes {
        let scan = out.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let path = episodes_out.unwrap_or_else(|| out.with_file_name(format!("{scan}.episodes.json")));
        let eps = generate_episodes(&graph, &scan, n, seed);
        std::fs::write(&path, serde_json_pretty(&eps)?)?;
        println!("wrote {} episodes to {}", eps.len(), path.display());
    }
    println!("wrote {} viewpoints to {}", graph.len(), out.display());
    Ok(())
}

fn serde_json_pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

fn trace(episode: &str, out: &Path, results: &Path, graphs: Option<&Path>) -> Result<()> {
    let records = read_results(results).with_context(|| format!("reading {}", results.display()))?;
    let Some(record) = records.iter().find(|r| r.result.episode.id == episode) else {
        bail!("episode `{episode}` not found in {}", results.display());
    };
    let graph = match graphs {
        Some(dir) => {
            let scan = &record.result.episode.scan;
            let path = if scan.is_empty() {
                let mut files: Vec<_> = std::fs::read_dir(dir)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
                if files.len() != 1 {
                    bail!("episode has no scan id and {} holds {} environments", dir.display(), files.len());
                }
                files.remove(0)
            } else {
                dir.join(format!("{scan}.json"))
            };
            Some(NavGraph::load(&path).with_context(|| format!("loading {}", path.display()))?)
        }
        None => None,
    };
    std::fs::write(out, trajectory_dot(episode, &record.result.trajectory, graph.as_ref()))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            graphs,
            episodes,
            config,
            out,
            providers,
        } => run(&graphs, &episodes, config.as_deref(), &out, &providers),
        Command::Eval { results, csv } => {
            let records = read_results(&results).with_context(|| format!("reading {}", results.display()))?;
            let report = aggregate_records(&records);
            if csv {
                print!("{}", flexnav_core::metrics::summary_csv(&report));
            } else {
                print!("{}", summary_table(&report));
            }
            Ok(())
        }
        Command::Gen {
            nodes,
            floors,
            seed,
            out,
            episodes,
            episodes_out,
        } => gen(nodes, floors, seed, &out, episodes, episodes_out),
        Command::Trace {
            episode,
            out,
            results,
            graphs,
        } => trace(&episode, &out, &results, graphs.as_deref()),
    }
}
