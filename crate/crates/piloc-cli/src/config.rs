//! TOML configuration with one section per subsystem. Every default named
//! by a section below also appears in the shipped `piloc.toml`. Precedence
//! is CLI flag > config file > built-in default, and each command echoes
//! its effective config into the output directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use piloc_core::dynamics::EpisodeConfig;
use piloc_learn::curriculum::CurriculumConfig;
use piloc_learn::spec::{BranchSpec, ConvStage, LayerSpec};
use piloc_learn::trainer::{AdamSettings, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AppConfig {
    pub map: MapSection,
    pub episode: EpisodeSection,
    pub pheromone: PheromoneSection,
    pub reward: RewardSection,
    pub metrics: MetricsSection,
    pub net: NetSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapSection {
    pub width: usize,
    pub height: usize,
    pub density: f64,
}

impl Default for MapSection {
    fn default() -> Self {
        MapSection {
            width: 60,
            height: 60,
            density: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeSection {
    pub num_agents: usize,
    pub num_targets: usize,
    pub perception_radius: usize,
    pub comm_range: u32,
    pub pheromone_window: usize,
    pub step_limit: usize,
    pub pheromone_enabled: bool,
    pub comms_enabled: bool,
    pub fallback_enabled: bool,
    pub transitive_comms: bool,
    pub target_found_bonus: f64,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        let d = EpisodeConfig::default();
        EpisodeSection {
            num_agents: d.num_agents,
            num_targets: d.num_targets,
            perception_radius: d.perception_radius,
            comm_range: d.comm_range,
            pheromone_window: d.pheromone_window,
            step_limit: d.step_limit,
            pheromone_enabled: d.pheromone_enabled,
            comms_enabled: d.comms_enabled,
            fallback_enabled: d.fallback_enabled,
            transitive_comms: d.transitive_comms,
            target_found_bonus: d.target_found_bonus,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PheromoneSection {
    pub p_max: f64,
    pub lambda: f64,
}

impl Default for PheromoneSection {
    fn default() -> Self {
        PheromoneSection {
            p_max: piloc_core::pheromone::DEFAULT_P_MAX,
            lambda: piloc_core::pheromone::DEFAULT_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSection {
    pub alpha: f64,
    pub beta: f64,
    pub re_reward_alt_paren: bool,
}

impl Default for RewardSection {
    fn default() -> Self {
        RewardSection {
            alpha: piloc_core::reward::DEFAULT_ALPHA,
            beta: piloc_core::reward::DEFAULT_BETA,
            re_reward_alt_paren: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSection {
    /// Average steps over all episodes (failures at their cap) rather than
    /// over successes only.
    pub avg_steps_over_all: bool,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection {
            avg_steps_over_all: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetSection {
    pub map_conv_channels: Vec<usize>,
    pub pheromone_conv_channels: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    pub channel_out: usize,
    pub spatial_out: usize,
    pub trunk_dim: usize,
    pub shared_trunk: bool,
}

impl Default for NetSection {
    fn default() -> Self {
        NetSection {
            map_conv_channels: vec![8, 16],
            pheromone_conv_channels: vec![8],
            kernel: 3,
            pool: 2,
            channel_out: 8,
            spatial_out: 8,
            trunk_dim: 128,
            shared_trunk: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub gamma: f64,
    pub clip_epsilon: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub episodes_per_wave: usize,
    pub max_updates: usize,
    pub use_gae: bool,
    pub gae_lambda: f64,
    pub checkpoint_every: usize,
    pub curriculum_start: usize,
    pub curriculum_increment: usize,
    pub curriculum_cap: usize,
    pub curriculum_patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            gamma: d.gamma,
            clip_epsilon: d.clip_epsilon,
            learning_rate: d.adam.learning_rate,
            epochs: d.epochs,
            minibatch_size: d.minibatch_size,
            entropy_coef: d.entropy_coef,
            value_coef: d.value_coef,
            max_grad_norm: d.max_grad_norm,
            episodes_per_wave: d.episodes_per_wave,
            max_updates: d.max_updates,
            use_gae: d.use_gae,
            gae_lambda: d.gae_lambda,
            checkpoint_every: 50,
            curriculum_start: d.curriculum.start,
            curriculum_increment: d.curriculum.increment,
            curriculum_cap: d.curriculum.cap,
            curriculum_patience: d.curriculum.patience,
        }
    }
}

impl AppConfig {
    pub fn load(path: &Path) -> anyhow::Result<AppConfig> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            num_agents: self.episode.num_agents,
            num_targets: self.episode.num_targets,
            perception_radius: self.episode.perception_radius,
            comm_range: self.episode.comm_range,
            pheromone_window: self.episode.pheromone_window,
            step_limit: self.episode.step_limit,
            pheromone_enabled: self.episode.pheromone_enabled,
            comms_enabled: self.episode.comms_enabled,
            fallback_enabled: self.episode.fallback_enabled,
            transitive_comms: self.episode.transitive_comms,
            pheromone_max: self.pheromone.p_max,
            evaporation_rate: self.pheromone.lambda,
            pheromone_alpha: self.reward.alpha,
            pheromone_beta: self.reward.beta,
            target_found_bonus: self.episode.target_found_bonus,
            re_reward_alt_paren: self.reward.re_reward_alt_paren,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            gamma: t.gamma,
            clip_epsilon: t.clip_epsilon,
            adam: AdamSettings {
                learning_rate: t.learning_rate,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
            epochs: t.epochs,
            minibatch_size: t.minibatch_size,
            entropy_coef: t.entropy_coef,
            value_coef: t.value_coef,
            max_grad_norm: t.max_grad_norm,
            curriculum: CurriculumConfig {
                start: t.curriculum_start,
                increment: t.curriculum_increment,
                cap: t.curriculum_cap,
                patience: t.curriculum_patience,
            },
            episodes_per_wave: t.episodes_per_wave,
            max_updates: t.max_updates,
            use_gae: t.use_gae,
            gae_lambda: t.gae_lambda,
            seed,
            checkpoint_every: t.checkpoint_every,
        }
    }

    /// Layer spec for maps of the given dimensions.
    pub fn layer_spec(&self, map_height: usize, map_width: usize) -> LayerSpec {
        let n = &self.net;
        let stages = |channels: &[usize]| {
            channels
                .iter()
                .map(|&c| ConvStage {
                    out_channels: c,
                    kernel: n.kernel,
                    pool: n.pool,
                })
                .collect::<Vec<_>>()
        };
        let map_branch = BranchSpec {
            input_height: map_height,
            input_width: map_width,
            stages: stages(&n.map_conv_channels),
            channel_out: n.channel_out,
            spatial_out: n.spatial_out,
        };
        let l = self.episode.pheromone_window;
        LayerSpec {
            obstacle: map_branch.clone(),
            exploration: map_branch,
            pheromone: BranchSpec {
                input_height: l,
                input_width: l,
                stages: stages(&n.pheromone_conv_channels),
                channel_out: n.channel_out,
                spatial_out: n.spatial_out,
            },
            trunk_dim: n.trunk_dim,
            num_actions: 4,
            shared_trunk: n.shared_trunk,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let config = AppConfig::default();
        let text = config.to_toml();
        let back: AppConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn file_values_override_defaults() {
        let text = "[episode]\nnum_agents = 4\n\n[train]\ngamma = 0.95\n";
        let config: AppConfig = toml::from_str(text).unwrap();
        assert_eq!(config.episode.num_agents, 4);
        assert_eq!(config.train.gamma, 0.95);
        // Untouched keys keep their defaults.
        assert_eq!(config.episode.num_targets, 6);
        assert_eq!(config.train.clip_epsilon, 0.2);
    }

    #[test]
    fn default_layer_spec_matches_published_shapes() {
        let config = AppConfig::default();
        let spec = config.layer_spec(60, 60);
        spec.validate().unwrap();
        assert_eq!(spec.fused_dim(), 192);
        assert_eq!(spec.trunk_dim, 128);
    }

    #[test]
    fn shipped_default_config_matches_builtin_defaults() {
        let shipped = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("../../piloc.toml");
        let text = std::fs::read_to_string(shipped).expect("piloc.toml ships with the repo");
        let parsed: AppConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed, AppConfig::default());
    }
}
