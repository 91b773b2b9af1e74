use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::execute::ContextMode;
use crate::perceive::STORY_HEIGHT_M;
use crate::plan::ViolationPolicy;
use crate::provider::mock::mock_providers;
use crate::provider::{ChatAdapter, ChatBinding, Provider, ProviderError, Providers, ReplayProvider, Role};
use crate::textualize::HistoryStyle;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Run settings, loadable from TOML. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Planner uses allowed per episode, re-plans included.
    pub max_planner_iterations: u32,
    pub max_moves_per_guidance: usize,
    /// Planner uses allowed within one plan/verify round.
    pub replan_cap: u32,
    /// Extra planner calls on unparseable output.
    pub parse_retries: u32,
    pub perception_retries: u32,
    pub guidance_context_mode: ContextMode,
    /// Keep the memory map across guidances instead of resetting it.
    pub retain_memory_map: bool,
    pub history_style: HistoryStyle,
    pub history_includes_guidance: bool,
    pub violation_policy: ViolationPolicy,
    pub followers: usize,
    pub story_height: f64,
    pub seed: u64,
    /// Episodes run concurrently by a batch.
    pub parallelism: usize,
    /// Live bindings by role name (`planner`, `verifier`, `follower`,
    /// `follower[1]`, `tie_breaker`, `perceiver`, `extractor`, `scorer`);
    /// `default` applies to roles without their own entry.
    pub providers: BTreeMap<String, ChatBinding>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_planner_iterations: 10,
            max_moves_per_guidance: 5,
            replan_cap: 3,
            parse_retries: 2,
            perception_retries: 1,
            guidance_context_mode: ContextMode::Multi,
            retain_memory_map: true,
            history_style: HistoryStyle::Landmark,
            history_includes_guidance: false,
            violation_policy: ViolationPolicy::Warn,
            followers: 3,
            story_height: STORY_HEIGHT_M,
            seed: 0,
            parallelism: 4,
            providers: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let budgets = [
            ("max_planner_iterations", self.max_planner_iterations as usize),
            ("max_moves_per_guidance", self.max_moves_per_guidance),
            ("replan_cap", self.replan_cap as usize),
            ("followers", self.followers),
            ("parallelism", self.parallelism),
        ];
        for (name, value) in budgets {
            if value == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
            }
        }
        if self.story_height.is_nan() || self.story_height <= 0.0 {
            return Err(ConfigError::Invalid("story_height must be positive".into()));
        }
        for key in self.providers.keys() {
            if key != "default" && key != "follower" && key.parse::<Role>().is_err() {
                return Err(ConfigError::Invalid(format!("unknown provider role `{key}`")));
            }
        }
        Ok(())
    }

    fn binding(&self, role: Role) -> Result<ChatBinding, ConfigError> {
        let specific = role.to_string();
        let general = match role {
            Role::Follower(_) => Some("follower"),
            _ => None,
        };
        let found = std::iter::once(specific.as_str())
            .chain(general)
            .chain(["default"])
            .find_map(|k| self.providers.get(k))
            .cloned();
        found.ok_or_else(|| ConfigError::Invalid(format!("no provider binding for {role}")))
    }

    /// HTTP-backed providers for every role.
    pub fn live_providers(&self) -> Result<Providers, ConfigError> {
        let adapter = |role| -> Result<Arc<dyn Provider>, ConfigError> { Ok(Arc::new(ChatAdapter::new(self.binding(role)?)?)) };
        let mut p = Providers::uniform(adapter(Role::Planner)?, 0);
        for role in [Role::Perceiver, Role::Verifier, Role::TieBreaker, Role::Extractor, Role::Scorer] {
            p.set(role, adapter(role)?);
        }
        let followers = (0..self.followers).map(|i| adapter(Role::Follower(i))).collect::<Result<_, _>>()?;
        Ok(p.with_followers(followers))
    }

    pub fn mock_providers(&self) -> Providers {
        mock_providers(self.followers)
    }

    pub fn replay_providers(&self, dir: &Path) -> Result<Providers, ConfigError> {
        Ok(Providers::uniform(Arc::new(ReplayProvider::load_dir(dir)?), self.followers))
    }
}
