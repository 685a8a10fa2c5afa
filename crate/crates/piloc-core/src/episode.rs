//! Episode runner: drives the tick pipeline with a pluggable per-agent
//! policy, optionally recording replays, training transitions, and applying
//! the test-time fallback override.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines;
use crate::dynamics::{self, Action, Done, EpisodeConfig, WorldState};
use crate::fallback::FallbackController;
use crate::gridmap::GridMap;
use crate::metrics::EpisodeResult;
use crate::perception::{encode, ObservationStack};
use crate::replay::{ReplayHeader, ReplayLog, RewardRecord, TickRecord};
use crate::scalar::Scalar;

/// Seed salt separating the policy RNG stream from the environment stream.
const POLICY_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// What one agent decided for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDecision<T> {
    pub action: Action,
    /// Log-probability of the sampled action; present for learned policies.
    pub log_prob: Option<T>,
    /// Critic value estimate; present for learned policies.
    pub value: Option<T>,
}

impl<T> PolicyDecision<T> {
    pub fn rule_based(action: Action) -> Self {
        PolicyDecision {
            action,
            log_prob: None,
            value: None,
        }
    }
}

/// A per-agent decision rule. The same policy instance serves every agent
/// (homogeneous agents share parameters); `agent_idx` is provided for
/// stateful rule-based policies.
pub trait AgentPolicy<T: Scalar> {
    fn act(
        &mut self,
        agent_idx: usize,
        obs: &ObservationStack<T>,
        rng: &mut ChaCha8Rng,
    ) -> PolicyDecision<T>;

    /// Display name recorded in replay headers.
    fn name(&self) -> &'static str;
}

/// Uniform random walk.
pub struct RandomPolicy;

impl<T: Scalar> AgentPolicy<T> for RandomPolicy {
    fn act(&mut self, _: usize, _: &ObservationStack<T>, rng: &mut ChaCha8Rng) -> PolicyDecision<T> {
        PolicyDecision::rule_based(baselines::random_action(rng))
    }

    fn name(&self) -> &'static str {
        "random"
    }
}

/// Frontier exploration over the agent's own (possibly merged) knowledge.
/// Needs the world's knowledge maps, so it is wired specially by the runner.
pub struct FrontierPolicy;

impl<T: Scalar> AgentPolicy<T> for FrontierPolicy {
    fn act(&mut self, _: usize, _: &ObservationStack<T>, rng: &mut ChaCha8Rng) -> PolicyDecision<T> {
        // Placeholder for trait completeness; the runner intercepts frontier
        // policies and calls `baselines::frontier_action` with map access.
        PolicyDecision::rule_based(baselines::random_action(rng))
    }

    fn name(&self) -> &'static str {
        "frontier"
    }
}

/// Recording switches for a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct EpisodeOptions {
    pub record_replay: bool,
    pub record_transitions: bool,
}

/// Per-agent trajectory collected for training.
#[derive(Debug, Clone)]
pub struct AgentTransitions<T> {
    pub observations: Vec<ObservationStack<T>>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<T>,
    pub values: Vec<T>,
    pub rewards: Vec<T>,
}

impl<T> AgentTransitions<T> {
    fn new() -> Self {
        AgentTransitions {
            observations: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            values: Vec::new(),
            rewards: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome<T> {
    pub result: EpisodeResult,
    pub done: Done,
    pub replay: Option<ReplayLog>,
    /// One trajectory per agent when transition recording was on.
    pub transitions: Vec<AgentTransitions<T>>,
    /// Observation of the final state per agent, for value bootstrapping of
    /// truncated episodes.
    pub final_observations: Vec<ObservationStack<T>>,
}

/// Run one full episode. Deterministic given (map, config, seed, policy).
pub fn run_episode<T: Scalar, P: AgentPolicy<T>>(
    map: Arc<GridMap>,
    config: &EpisodeConfig,
    seed: u64,
    policy: &mut P,
    options: EpisodeOptions,
) -> Result<EpisodeOutcome<T>, dynamics::DynamicsError> {
    debug_assert!(
        !(options.record_transitions && config.fallback_enabled),
        "training rollouts must not use the fallback override"
    );
    let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed ^ POLICY_STREAM_SALT);
    let mut state: WorldState<T> = dynamics::reset(Arc::clone(&map), config, &mut env_rng)?;

    let is_frontier = policy.name() == "frontier";
    let mut fallbacks: Vec<FallbackController> = (0..config.num_agents)
        .map(|_| FallbackController::new())
        .collect();
    let mut transitions: Vec<AgentTransitions<T>> = (0..config.num_agents)
        .map(|_| AgentTransitions::new())
        .collect();
    let mut ticks: Vec<TickRecord> = Vec::new();
    let mut reward_sum = 0.0f64;
    let mut fallback_ticks = 0usize;
    let l = config.pheromone_window;

    let done = loop {
        let done = state.is_done(config);
        if done != Done::Running {
            break done;
        }
        // Encode observations from the post-previous-tick state.
        let field = config.pheromone_enabled.then_some(&state.pheromone);
        let observations: Vec<ObservationStack<T>> = state
            .agents
            .iter()
            .map(|a| encode(&a.knowledge, a.pos, &a.history, field, l))
            .collect();

        let mut actions = Vec::with_capacity(config.num_agents);
        let mut decisions = Vec::with_capacity(config.num_agents);
        let mut fallback_flags = vec![false; config.num_agents];
        for (i, agent) in state.agents.iter().enumerate() {
            let decision = if is_frontier {
                PolicyDecision::rule_based(baselines::frontier_action(
                    &agent.knowledge,
                    agent.pos,
                    &mut policy_rng,
                ))
            } else {
                policy.act(i, &observations[i], &mut policy_rng)
            };
            let decision = if config.fallback_enabled && !is_frontier {
                match fallbacks[i].decide(&agent.knowledge, agent.pos, &agent.recent_positions) {
                    Some(action) => {
                        fallback_flags[i] = true;
                        PolicyDecision::rule_based(action)
                    }
                    None => decision,
                }
            } else {
                decision
            };
            actions.push(decision.action);
            decisions.push(decision);
        }
        if fallback_flags.iter().any(|&f| f) {
            fallback_ticks += 1;
        }

        let info = state.step(&actions, config, &mut env_rng)?;

        if options.record_transitions {
            for (i, decision) in decisions.iter().enumerate() {
                let t = &mut transitions[i];
                t.observations.push(observations[i].clone());
                t.actions.push(decision.action.index());
                t.log_probs
                    .push(decision.log_prob.expect("training policies report log-probs"));
                t.values
                    .push(decision.value.expect("training policies report values"));
                t.rewards.push(info.rewards[i].total);
            }
        }
        // Flat accumulation order matches ReplayLog::recompute_result.
        for r in &info.rewards {
            reward_sum += r.total.to_f64_lossy();
        }
        if options.record_replay {
            ticks.push(TickRecord {
                tick: state.step,
                actions: actions.iter().map(|a| a.index()).collect(),
                agents: state.agents.iter().map(|a| (a.pos.x, a.pos.y)).collect(),
                targets: state.targets.iter().map(|t| (t.x, t.y)).collect(),
                rewards: info
                    .rewards
                    .iter()
                    .map(|r| RewardRecord {
                        exploration: r.exploration.to_f64_lossy(),
                        re_exploration: r.re_exploration.to_f64_lossy(),
                        collision: r.collision.to_f64_lossy(),
                        pheromone: r.pheromone.to_f64_lossy(),
                        total: r.total.to_f64_lossy(),
                    })
                    .collect(),
                detections: info.detections.clone(),
                comm_groups: info.merged_groups.clone(),
                window_sums: info
                    .window_sums
                    .iter()
                    .map(|&(a, b)| (a.to_f64_lossy(), b.to_f64_lossy()))
                    .collect(),
                fallback: fallback_flags,
            });
        }
    };

    let field = config.pheromone_enabled.then_some(&state.pheromone);
    let final_observations = state
        .agents
        .iter()
        .map(|a| encode(&a.knowledge, a.pos, &a.history, field, l))
        .collect();

    let result = EpisodeResult {
        success: done == Done::AllFound,
        steps: state.step,
        targets_found: state.found_count,
        targets_total: state.targets_total,
        reward_sum,
        fallback_ticks,
    };
    let replay = options.record_replay.then(|| ReplayLog {
        header: ReplayHeader::new(map.to_text(), seed, policy.name(), config),
        ticks,
        result: result.clone(),
    });
    Ok(EpisodeOutcome {
        result,
        done,
        replay,
        transitions,
        final_observations,
    })
}
