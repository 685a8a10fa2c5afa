//! Centralized-training / decentralized-execution trainer: parallel rollout
//! waves with a frozen parameter snapshot, full-horizon returns and
//! normalized advantages, clipped policy/value updates, and the step-limit
//! curriculum.
//!
//! All homogeneous agents act and learn through one shared parameter set.
//! Rollout episodes and minibatch gradient chunks are parallelized with
//! fixed seed assignments and fixed reduction order, so a full run is
//! reproducible bit-for-bit regardless of thread scheduling.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use piloc_core::dynamics::{Action, Done, EpisodeConfig};
use piloc_core::episode::{run_episode, AgentPolicy, EpisodeOptions, PolicyDecision};
use piloc_core::gridmap::GridMap;
use piloc_core::perception::ObservationStack;
use piloc_core::scalar::Scalar;
use piloc_core::seeds;

use crate::buffer::{discounted_returns, gae_advantages, raw_advantages, RolloutBuffer, Trajectory};
use crate::curriculum::{Curriculum, CurriculumConfig};
use crate::loss;
use crate::net::{self, find_non_finite, Network};
use crate::optim::{clip_grad_norm, Adam, AdamConfig};

/// Samples per parallel gradient chunk; fixed so the reduction order (and
/// therefore the result bits) never depends on the thread count.
const GRAD_CHUNK: usize = 32;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("no training maps provided")]
    NoMaps,
    #[error(transparent)]
    Net(#[from] net::NetError),
    #[error(transparent)]
    Dynamics(#[from] piloc_core::dynamics::DynamicsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub clip_epsilon: f64,
    pub adam: AdamSettings,
    /// Optimization epochs per rollout wave.
    pub epochs: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub curriculum: CurriculumConfig,
    pub episodes_per_wave: usize,
    /// Hard budget on updates regardless of the curriculum.
    pub max_updates: usize,
    /// Use GAE instead of the full-horizon return baseline.
    pub use_gae: bool,
    pub gae_lambda: f64,
    pub seed: u64,
    /// Emit a checkpoint every N updates (0 = only on request).
    pub checkpoint_every: usize,
}

/// Serializable mirror of [`AdamConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl From<AdamSettings> for AdamConfig {
    fn from(s: AdamSettings) -> Self {
        AdamConfig {
            learning_rate: s.learning_rate,
            beta1: s.beta1,
            beta2: s.beta2,
            epsilon: s.epsilon,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            clip_epsilon: 0.2,
            adam: AdamSettings {
                learning_rate: 3e-4,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
            },
            epochs: 4,
            minibatch_size: 256,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            curriculum: CurriculumConfig::default(),
            episodes_per_wave: 16,
            max_updates: 10_000,
            use_gae: false,
            gae_lambda: 0.95,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    pub update: usize,
    /// Current curriculum step limit N_s.
    pub step_limit: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Samples dropped for non-finite ratios.
    pub skipped_samples: usize,
    /// True when a non-finite loss aborted this update's optimization.
    pub aborted: bool,
}

/// Why the run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    CurriculumFinished,
    UpdateBudget,
}

/// Shared-parameter sampling policy over a frozen network snapshot.
pub struct NetPolicy<'a, T: Scalar> {
    pub net: &'a Network<T>,
}

impl<T: Scalar> AgentPolicy<T> for NetPolicy<'_, T> {
    fn act(
        &mut self,
        _agent_idx: usize,
        obs: &ObservationStack<T>,
        rng: &mut ChaCha8Rng,
    ) -> PolicyDecision<T> {
        let out = self.net.forward(obs).expect("observation shapes match the spec");
        let (action, log_prob) = net::sample_action(&out, rng);
        PolicyDecision {
            action: Action::from_index(action).expect("4 actions"),
            log_prob: Some(log_prob),
            value: Some(out.value),
        }
    }

    fn name(&self) -> &'static str {
        "piloc"
    }
}

pub struct Trainer<T: Scalar> {
    pub net: Network<T>,
    optimizer: Adam<T>,
    pub curriculum: Curriculum,
    config: TrainConfig,
    episode_config: EpisodeConfig,
    maps: Vec<Arc<GridMap>>,
    update_index: usize,
}

struct WaveStats {
    mean_return: f64,
    success_rate: f64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(
        net: Network<T>,
        maps: Vec<Arc<GridMap>>,
        episode_config: EpisodeConfig,
        config: TrainConfig,
    ) -> Result<Self, TrainerError> {
        if maps.is_empty() {
            return Err(TrainerError::NoMaps);
        }
        episode_config.validate()?;
        let optimizer = Adam::new(net.param_count(), config.adam.into());
        let curriculum = Curriculum::new(config.curriculum);
        Ok(Trainer {
            net,
            optimizer,
            curriculum,
            config,
            episode_config,
            maps,
            update_index: 0,
        })
    }

    pub fn optimizer(&self) -> &Adam<T> {
        &self.optimizer
    }

    /// Episode config for rollouts at the current curriculum limit. The
    /// fallback override is test-time only and never runs during training.
    fn rollout_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            step_limit: self.curriculum.step_limit(),
            fallback_enabled: false,
            ..self.episode_config.clone()
        }
    }

    fn collect_wave(&self) -> Result<(RolloutBuffer<T>, WaveStats), TrainerError> {
        let config = self.rollout_config();
        let wave = self.update_index as u64;
        let episodes: Result<Vec<_>, _> = (0..self.config.episodes_per_wave)
            .into_par_iter()
            .map(|e| {
                let map = Arc::clone(
                    &self.maps
                        [(self.update_index * self.config.episodes_per_wave + e) % self.maps.len()],
                );
                let seed = seeds::derive2(self.config.seed, wave, e as u64);
                let mut policy = NetPolicy { net: &self.net };
                run_episode::<T, _>(
                    map,
                    &config,
                    seed,
                    &mut policy,
                    EpisodeOptions {
                        record_replay: false,
                        record_transitions: true,
                    },
                )
            })
            .collect();
        let episodes = episodes?;

        let mut buffer = RolloutBuffer::new();
        let mut return_sum = 0.0;
        let mut successes = 0usize;
        for outcome in &episodes {
            if outcome.result.success {
                successes += 1;
            }
            // Episode return: per-agent reward sums averaged over agents.
            let agents = outcome.transitions.len() as f64;
            let ep_return: f64 = outcome
                .transitions
                .iter()
                .map(|t| t.rewards.iter().map(|r| r.to_f64_lossy()).sum::<f64>())
                .sum::<f64>()
                / agents;
            return_sum += ep_return;
            let truncated = outcome.done == Done::StepLimit;
            for (agent_idx, t) in outcome.transitions.iter().enumerate() {
                let bootstrap = if truncated {
                    let out = self.net.forward(&outcome.final_observations[agent_idx])?;
                    Some(out.value)
                } else {
                    None
                };
                buffer.push(Trajectory {
                    observations: t.observations.clone(),
                    actions: t.actions.clone(),
                    log_probs_old: t.log_probs.clone(),
                    values_old: t.values.clone(),
                    rewards: t.rewards.clone(),
                    bootstrap,
                });
            }
        }
        let stats = WaveStats {
            mean_return: return_sum / episodes.len() as f64,
            success_rate: successes as f64 / episodes.len() as f64,
        };
        Ok((buffer, stats))
    }

    /// One rollout wave plus its optimization epochs.
    pub fn single_update(&mut self) -> Result<UpdateMetrics, TrainerError> {
        let (buffer, stats) = self.collect_wave()?;
        debug_assert!(buffer.validate().is_ok());

        // Per-trajectory returns, then batch-normalized advantages.
        let gamma = T::of(self.config.gamma);
        let mut flat: Vec<(usize, usize)> = Vec::with_capacity(buffer.len());
        let mut returns: Vec<Vec<T>> = Vec::with_capacity(buffer.trajectories.len());
        let mut advantages: Vec<T> = Vec::with_capacity(buffer.len());
        for (ti, traj) in buffer.trajectories.iter().enumerate() {
            let ret = discounted_returns(&traj.rewards, gamma, traj.bootstrap);
            let adv = if self.config.use_gae {
                gae_advantages(
                    &traj.rewards,
                    &traj.values_old,
                    gamma,
                    T::of(self.config.gae_lambda),
                    traj.bootstrap,
                )
            } else {
                raw_advantages(&ret, &traj.values_old)
            };
            for si in 0..traj.len() {
                flat.push((ti, si));
                advantages.push(adv[si]);
            }
            returns.push(ret);
        }
        crate::buffer::normalize(&mut advantages);

        let clip = T::of(self.config.clip_epsilon);
        let c_v = T::of(self.config.value_coef);
        let c_ent = T::of(self.config.entropy_coef);
        let mut rng =
            ChaCha8Rng::seed_from_u64(seeds::derive2(self.config.seed, self.update_index as u64, 0xE50C));
        let mut indices: Vec<usize> = (0..flat.len()).collect();

        let mut policy_loss_sum = 0.0;
        let mut value_loss_sum = 0.0;
        let mut entropy_sum = 0.0;
        let mut minibatches = 0usize;
        let mut skipped = 0usize;
        let mut aborted = false;

        'epochs: for _ in 0..self.config.epochs {
            indices.shuffle(&mut rng);
            for chunk in indices.chunks(self.config.minibatch_size) {
                let m = chunk.len();
                let inv_m = T::one() / T::of(m as f64);
                // Fixed-size sub-chunks keep the float reduction order
                // independent of thread scheduling.
                let partials: Vec<_> = chunk
                    .par_chunks(GRAD_CHUNK)
                    .map(|sub| {
                        let samples: Vec<loss::PpoSample<'_, T>> = sub
                            .iter()
                            .map(|&fi| {
                                let (ti, si) = flat[fi];
                                let traj = &buffer.trajectories[ti];
                                loss::PpoSample {
                                    obs: &traj.observations[si],
                                    action: traj.actions[si],
                                    log_prob_old: traj.log_probs_old[si],
                                    value_old: traj.values_old[si],
                                    ret: returns[ti][si],
                                    advantage: advantages[fi],
                                }
                            })
                            .collect();
                        loss::accumulate_ppo_grads(&self.net, &samples, clip, c_v, c_ent, inv_m)
                    })
                    .collect();

                let mut grads = vec![T::zero(); self.net.param_count()];
                let mut p_loss = T::zero();
                let mut v_loss = T::zero();
                let mut ent = T::zero();
                for part in partials {
                    for (acc, gi) in grads.iter_mut().zip(&part.grads) {
                        *acc = *acc + *gi;
                    }
                    p_loss = p_loss + part.policy_loss_sum;
                    v_loss = v_loss + part.value_loss_sum;
                    ent = ent + part.entropy_sum;
                    skipped += part.skipped;
                }
                let p_loss = p_loss * inv_m;
                let v_loss = v_loss * inv_m;
                let ent = ent * inv_m;
                let total = p_loss - c_ent * ent + c_v * v_loss;
                if !total.is_finite() {
                    eprintln!(
                        "update {}: non-finite loss (policy {p_loss}, value {v_loss}); aborting update",
                        self.update_index
                    );
                    aborted = true;
                    break 'epochs;
                }
                if let Some(idx) = find_non_finite(&grads) {
                    eprintln!(
                        "update {}: {}; aborting update",
                        self.update_index,
                        net::NetError::NonFiniteGradient(idx)
                    );
                    aborted = true;
                    break 'epochs;
                }
                clip_grad_norm(&mut grads, T::of(self.config.max_grad_norm));
                self.optimizer.apply(self.net.params_mut(), &grads);

                policy_loss_sum += p_loss.to_f64_lossy();
                value_loss_sum += v_loss.to_f64_lossy();
                entropy_sum += ent.to_f64_lossy();
                minibatches += 1;
            }
        }

        let n = minibatches.max(1) as f64;
        let metrics = UpdateMetrics {
            update: self.update_index,
            step_limit: self.curriculum.step_limit(),
            mean_return: stats.mean_return,
            success_rate: stats.success_rate,
            policy_loss: policy_loss_sum / n,
            value_loss: value_loss_sum / n,
            entropy: entropy_sum / n,
            skipped_samples: skipped,
            aborted,
        };
        self.update_index += 1;
        Ok(metrics)
    }

    /// Run until the curriculum finishes or the update budget is spent.
    /// `on_metrics` sees every update; `on_checkpoint` fires per the
    /// configured cadence and once at the end.
    pub fn run(
        &mut self,
        mut on_metrics: impl FnMut(&UpdateMetrics),
        mut on_checkpoint: impl FnMut(usize, &Network<T>),
    ) -> Result<StopReason, TrainerError> {
        loop {
            if self.update_index >= self.config.max_updates {
                on_checkpoint(self.update_index, &self.net);
                return Ok(StopReason::UpdateBudget);
            }
            let metrics = self.single_update()?;
            let mean_return = metrics.mean_return;
            on_metrics(&metrics);
            if self.config.checkpoint_every > 0
                && self.update_index % self.config.checkpoint_every == 0
            {
                on_checkpoint(self.update_index, &self.net);
            }
            self.curriculum.record_wave(mean_return);
            if self.curriculum.finished() {
                on_checkpoint(self.update_index, &self.net);
                return Ok(StopReason::CurriculumFinished);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::mini_spec;
    use piloc_core::gridmap::GridMap;

    fn tiny_setup() -> (Network<f64>, Vec<Arc<GridMap>>, EpisodeConfig, TrainConfig) {
        let spec = crate::spec::LayerSpec {
            pheromone: crate::spec::BranchSpec {
                input_height: 5,
                input_width: 5,
                ..mini_spec(true).pheromone
            },
            ..mini_spec(true)
        };
        let net = Network::init(spec, 0).unwrap();
        let maps = vec![
            GridMap::generate(8, 8, 0.1, 1).unwrap().into_arc(),
            GridMap::generate(8, 8, 0.15, 2).unwrap().into_arc(),
        ];
        let episode = EpisodeConfig {
            num_agents: 2,
            num_targets: 1,
            perception_radius: 2,
            pheromone_window: 5,
            step_limit: 30,
            fallback_enabled: false,
            ..EpisodeConfig::default()
        };
        let train = TrainConfig {
            episodes_per_wave: 4,
            minibatch_size: 64,
            epochs: 2,
            max_updates: 3,
            curriculum: CurriculumConfig {
                start: 12,
                increment: 10,
                cap: 30,
                patience: 2,
            },
            ..TrainConfig::default()
        };
        (net, maps, episode, train)
    }

    #[test]
    fn updates_run_and_report_metrics() {
        let (net, maps, episode, train) = tiny_setup();
        let mut trainer = Trainer::new(net, maps, episode, train).unwrap();
        let m = trainer.single_update().unwrap();
        assert_eq!(m.update, 0);
        assert_eq!(m.step_limit, 12);
        assert!(m.policy_loss.is_finite());
        assert!(m.value_loss.is_finite());
        assert!(m.entropy > 0.0);
        assert!(!m.aborted);
    }

    #[test]
    fn training_is_reproducible_bit_for_bit() {
        let run = || {
            let (net, maps, episode, train) = tiny_setup();
            let mut trainer = Trainer::new(net, maps, episode, train).unwrap();
            trainer.single_update().unwrap();
            trainer.single_update().unwrap();
            trainer.net.params().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn run_respects_update_budget() {
        let (net, maps, episode, train) = tiny_setup();
        let mut trainer = Trainer::new(net, maps, episode, train).unwrap();
        let mut seen = 0;
        let mut checkpoints = 0;
        let reason = trainer
            .run(|_| seen += 1, |_, _| checkpoints += 1)
            .unwrap();
        assert!(seen <= 3);
        assert!(checkpoints >= 1);
        assert!(matches!(
            reason,
            StopReason::UpdateBudget | StopReason::CurriculumFinished
        ));
    }

    #[test]
    fn no_maps_is_an_error() {
        let (net, _, episode, train) = tiny_setup();
        assert!(matches!(
            Trainer::new(net, vec![], episode, train),
            Err(TrainerError::NoMaps)
        ));
    }
}
