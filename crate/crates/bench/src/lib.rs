//! Shared fixtures for the criterion benches under `benches/`.

use flexnav_core::{generate_environment, generate_episodes, Episode, NavGraph};

/// A generated house and a handful of episodes on it.
pub fn fixture(nodes: usize, floors: usize, episodes: usize) -> (NavGraph, Vec<Episode>) {
    let graph = generate_environment(nodes, floors, 42);
    let eps = generate_episodes(&graph, "bench", episodes, 42);
    (graph, eps)
}
