//! Hierarchical navigation on discrete viewpoint graphs.
//!
//! An episode runs a loop of perception, high-level planning with a
//! feasibility check, and low-level execution by an ensemble of
//! instruction followers, then localizes the target object at the final
//! viewpoint. Every model role sits behind [`provider::Provider`], so runs
//! can use heuristic mocks, recorded traces or an HTTP chat endpoint.
//!
//! ```
//! use flexnav_core::{generate_environment, generate_episodes, run_episode, RunConfig};
//!
//! let graph = generate_environment(12, 2, 7);
//! let episode = &generate_episodes(&graph, "house", 1, 7)[0];
//! let config = RunConfig::default();
//! let out = run_episode(&config, &graph, episode, &config.mock_providers());
//! assert_eq!(out.result.trajectory[0], episode.start_viewpoint);
//! ```

pub mod envgraph;
pub mod execute;
pub mod locate;
pub mod metrics;
pub mod perceive;
pub mod plan;
pub mod provider;
pub mod runner;
pub mod session;
pub mod textualize;
pub mod verify;

pub use envgraph::{Episode, GraphError, NavGraph, ObjectAnnotation, Point3, Pose, SceneSet, Viewpoint};
pub use execute::{AgentState, CandidateAction, ContextMode, MemoryMap, TrajectorySegment, TrajectoryStep, VoteResult};
pub use locate::LocalizationResult;
pub use metrics::{EpisodeMetrics, EpisodeRecord, EpisodeResult, MetricsReport};
pub use perceive::{Observation, Orientation, ViewDescriptor};
pub use plan::{Guidance, NavHistory, PlannerOutput, ViolationPolicy};
pub use provider::{Provider, ProviderError, Providers, Request, Role};
pub use runner::{
    generate_environment, generate_episodes, load_dataset, per_step_baseline, run_batch, run_episode, Dataset,
    EpisodeOutput, EpisodeTrace, RunConfig,
};
pub use session::{CostLedger, Session, TraceEvent};
pub use textualize::{DirectionalPhrase, HistoryStyle};
pub use verify::Verdict;
