//! World state and the synchronous tick pipeline.
//!
//! Each tick runs a fixed stage order: (1) agents move, (2) targets
//! random-walk, (3) pheromone deposit then evaporate, (4) per-agent
//! knowledge update, (5) target detection and removal, (6) communication
//! merge, (7) reward computation, (8) termination check. Agents never block
//! each other and may co-locate; moves into obstacles or off the map edge
//! collide and leave the agent in place.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::comms;
use crate::gridmap::{GridMap, Position};
use crate::perception::KnowledgeMaps;
use crate::pheromone::PheromoneField;
use crate::reward::{self, RewardBreakdown, RewardParams};
use crate::scalar::Scalar;

/// Length of the recent-position ring buffer driving the trapped test.
pub const RECENT_POSITIONS: usize = 10;

/// The four movement actions, index-stable 0..3 for the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Left,
    Up,
    Right,
    Down,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Left, Action::Up, Action::Right, Action::Down];

    pub fn index(self) -> usize {
        match self {
            Action::Left => 0,
            Action::Up => 1,
            Action::Right => 2,
            Action::Down => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// Column/row delta; y grows downward.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Left => (-1, 0),
            Action::Up => (0, -1),
            Action::Right => (1, 0),
            Action::Down => (0, 1),
        }
    }

    /// Destination of applying the action at `pos`, if it stays in bounds.
    pub fn apply(self, pos: Position, width: usize, height: usize) -> Option<Position> {
        let (dx, dy) = self.delta();
        let x = pos.x as i64 + dx;
        let y = pos.y as i64 + dy;
        (x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height)
            .then(|| Position::new(x as usize, y as usize))
    }
}

/// Action that moves `from` to an adjacent cell `to`.
pub fn action_towards(from: Position, to: Position) -> Option<Action> {
    Action::ALL
        .into_iter()
        .find(|a| a.apply(from, usize::MAX, usize::MAX) == Some(to))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveOutcome {
    Moved,
    Collided,
}

/// Episode parameters and feature toggles.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub num_agents: usize,
    pub num_targets: usize,
    /// Perception radius v (Chebyshev).
    pub perception_radius: usize,
    /// Communication range c (Euclidean, inclusive).
    pub comm_range: u32,
    /// Pheromone observation window side l (odd).
    pub pheromone_window: usize,
    pub step_limit: usize,
    pub pheromone_enabled: bool,
    pub comms_enabled: bool,
    /// Test-time hybrid fallback; training runs always disable it.
    pub fallback_enabled: bool,
    /// Merge whole connected components (true) or only pairwise edges.
    pub transitive_comms: bool,
    pub pheromone_max: f64,
    pub evaporation_rate: f64,
    pub pheromone_alpha: f64,
    pub pheromone_beta: f64,
    pub target_found_bonus: f64,
    pub re_reward_alt_paren: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            num_agents: 2,
            num_targets: 6,
            perception_radius: 5,
            comm_range: 10,
            pheromone_window: 11,
            step_limit: 250,
            pheromone_enabled: true,
            comms_enabled: true,
            fallback_enabled: true,
            transitive_comms: true,
            pheromone_max: crate::pheromone::DEFAULT_P_MAX,
            evaporation_rate: crate::pheromone::DEFAULT_LAMBDA,
            pheromone_alpha: reward::DEFAULT_ALPHA,
            pheromone_beta: reward::DEFAULT_BETA,
            target_found_bonus: 0.0,
            re_reward_alt_paren: false,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.num_agents < 1
            || self.num_targets < 1
            || self.perception_radius < 1
            || self.step_limit < 1
            || self.pheromone_window < 3
            || self.pheromone_window % 2 == 0
        {
            return Err(DynamicsError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn reward_params<T: Scalar>(&self) -> RewardParams<T> {
        RewardParams {
            alpha: T::of(self.pheromone_alpha),
            beta: T::of(self.pheromone_beta),
            target_found_bonus: T::of(self.target_found_bonus),
            alt_parenthesization: self.re_reward_alt_paren,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("invalid episode config: {0}")]
    InvalidConfig(String),
    #[error("map has {available} free cells, need {needed} for agents + targets")]
    NotEnoughFreeCells { needed: usize, available: usize },
    #[error("expected {expected} actions, got {got}")]
    ActionCountMismatch { expected: usize, got: usize },
}

/// One agent's mutable state within an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<T> {
    pub pos: Position,
    /// Previous two positions, most recent first; padded with the start
    /// position at episode start.
    pub history: [Position; 2],
    pub knowledge: KnowledgeMaps<T>,
    /// Positions occupied over the last ticks, most recent last; capacity
    /// [`RECENT_POSITIONS`].
    pub recent_positions: VecDeque<Position>,
}

impl<T: Scalar> AgentState<T> {
    fn new(pos: Position, width: usize, height: usize) -> Self {
        let mut recent = VecDeque::with_capacity(RECENT_POSITIONS);
        recent.push_back(pos);
        AgentState {
            pos,
            history: [pos, pos],
            knowledge: KnowledgeMaps::new_unknown(width, height),
            recent_positions: recent,
        }
    }

    fn record_move(&mut self, new_pos: Position) {
        self.history = [self.pos, self.history[0]];
        self.pos = new_pos;
        if self.recent_positions.len() == RECENT_POSITIONS {
            self.recent_positions.pop_front();
        }
        self.recent_positions.push_back(new_pos);
    }
}

/// Episode termination status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Done {
    AllFound,
    StepLimit,
    Running,
}

/// Full mutable world state of one episode.
#[derive(Debug, Clone)]
pub struct WorldState<T> {
    pub map: Arc<GridMap>,
    pub agents: Vec<AgentState<T>>,
    /// Live targets only; detected targets are removed.
    pub targets: Vec<Position>,
    pub pheromone: PheromoneField<T>,
    pub step: usize,
    pub found_count: usize,
    pub targets_total: usize,
}

/// Everything downstream consumers need about one tick.
#[derive(Debug, Clone)]
pub struct StepInfo<T> {
    pub outcomes: Vec<MoveOutcome>,
    /// Free cells newly discovered by each agent's own observation.
    pub newly_seen_free: Vec<usize>,
    /// `(agent, target index before removal)` detections this tick.
    pub detections: Vec<(usize, usize)>,
    /// Whether each agent was credited a detection.
    pub credited: Vec<bool>,
    /// Pheromone window sums `(previous position, current position)`, both
    /// against the post-update field.
    pub window_sums: Vec<(T, T)>,
    pub rewards: Vec<RewardBreakdown<T>>,
    /// Communication groups of size >= 2 that merged this tick.
    pub merged_groups: Vec<Vec<usize>>,
    pub done: Done,
}

/// Place agents and targets uniformly at random on distinct free cells.
pub fn reset<T: Scalar, R: Rng>(
    map: Arc<GridMap>,
    config: &EpisodeConfig,
    rng: &mut R,
) -> Result<WorldState<T>, DynamicsError> {
    config.validate()?;
    let free = map.free_cells();
    let needed = config.num_agents + config.num_targets;
    if free.len() < needed {
        return Err(DynamicsError::NotEnoughFreeCells {
            needed,
            available: free.len(),
        });
    }
    // Partial Fisher-Yates over free-cell indices.
    let mut idx: Vec<usize> = (0..free.len()).collect();
    for i in 0..needed {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    let agents = idx[..config.num_agents]
        .iter()
        .map(|&i| AgentState::new(free[i], map.width(), map.height()))
        .collect();
    let targets = idx[config.num_agents..needed]
        .iter()
        .map(|&i| free[i])
        .collect();
    let pheromone = PheromoneField::new(
        map.width(),
        map.height(),
        T::of(config.pheromone_max),
        T::of(config.evaporation_rate),
    );
    Ok(WorldState {
        map,
        agents,
        targets,
        pheromone,
        step: 0,
        found_count: 0,
        targets_total: config.num_targets,
    })
}

impl<T: Scalar> WorldState<T> {
    /// Move every agent by its action; collisions leave the agent in place.
    pub fn step_agents(&mut self, actions: &[Action]) -> Result<Vec<MoveOutcome>, DynamicsError> {
        if actions.len() != self.agents.len() {
            return Err(DynamicsError::ActionCountMismatch {
                expected: self.agents.len(),
                got: actions.len(),
            });
        }
        let outcomes = self
            .agents
            .iter_mut()
            .zip(actions)
            .map(|(agent, &action)| {
                let dest = action.apply(agent.pos, self.map.width(), self.map.height());
                match dest {
                    Some(d) if self.map.is_free(d) => {
                        agent.record_move(d);
                        MoveOutcome::Moved
                    }
                    _ => {
                        agent.record_move(agent.pos);
                        MoveOutcome::Collided
                    }
                }
            })
            .collect();
        Ok(outcomes)
    }

    /// Each live target moves to a uniformly chosen free neighbor, staying
    /// put only when fully enclosed. Targets move independently and may
    /// share cells with each other or with agents.
    pub fn step_targets<R: Rng>(&mut self, rng: &mut R) {
        for t in &mut self.targets {
            let neighbors = self.map.neighbors4(*t);
            if !neighbors.is_empty() {
                *t = neighbors[rng.gen_range(0..neighbors.len())];
            }
        }
    }

    /// Remove every target within Chebyshev distance `v` of an agent and
    /// credit the nearest agent (ties to the lowest agent index). Returns
    /// `(agent, original target index)` pairs.
    pub fn detect_targets(&mut self, v: usize) -> Vec<(usize, usize)> {
        let mut detections = Vec::new();
        for (ti, &t) in self.targets.iter().enumerate() {
            let best = self
                .agents
                .iter()
                .enumerate()
                .map(|(ai, a)| (a.pos.chebyshev(t), ai))
                .filter(|&(d, _)| d <= v)
                .min();
            if let Some((_, ai)) = best {
                detections.push((ai, ti));
            }
        }
        for &(_, ti) in detections.iter().rev() {
            self.targets.remove(ti);
        }
        self.found_count += detections.len();
        detections
    }

    pub fn is_done(&self, config: &EpisodeConfig) -> Done {
        if self.targets.is_empty() {
            Done::AllFound
        } else if self.step >= config.step_limit {
            Done::StepLimit
        } else {
            Done::Running
        }
    }

    /// Advance one full tick. See the module docs for the stage order.
    pub fn step<R: Rng>(
        &mut self,
        actions: &[Action],
        config: &EpisodeConfig,
        rng: &mut R,
    ) -> Result<StepInfo<T>, DynamicsError> {
        let prev_positions: Vec<Position> = self.agents.iter().map(|a| a.pos).collect();

        // (1) agents, (2) targets.
        let outcomes = self.step_agents(actions)?;
        self.step_targets(rng);

        // (3) pheromone deposit then evaporate. Deposits are presence-based:
        // collided agents still mark their (unchanged) cell.
        if config.pheromone_enabled {
            let positions: Vec<Position> = self.agents.iter().map(|a| a.pos).collect();
            self.pheromone.deposit(&positions);
            self.pheromone.evaporate();
        }

        // (4) perception: age marks first so cells observed this tick keep a
        // mark of exactly zero; snapshot in-view marks before they are reset.
        let v = config.perception_radius;
        for agent in &mut self.agents {
            agent.knowledge.age_marks();
        }
        let mut newly_seen_free = Vec::with_capacity(self.agents.len());
        let mut view_marks = Vec::with_capacity(self.agents.len());
        let map = Arc::clone(&self.map);
        for agent in &mut self.agents {
            view_marks.push(agent.knowledge.marks_in_window(agent.pos, v));
            newly_seen_free.push(agent.knowledge.observe(&map, agent.pos, v));
        }

        // (5) detection and removal.
        let detections = self.detect_targets(v);
        let mut credited = vec![false; self.agents.len()];
        for &(ai, _) in &detections {
            credited[ai] = true;
        }

        // (6) communication merge.
        let merged_groups = if config.comms_enabled {
            self.merge_knowledge(config)
        } else {
            Vec::new()
        };

        // (7) rewards.
        let params: RewardParams<T> = config.reward_params();
        let mut window_sums = Vec::with_capacity(self.agents.len());
        let mut rewards = Vec::with_capacity(self.agents.len());
        for (i, agent) in self.agents.iter().enumerate() {
            let (i_prev, i_curr) = if config.pheromone_enabled {
                (
                    self.pheromone.window_sum(prev_positions[i], v),
                    self.pheromone.window_sum(agent.pos, v),
                )
            } else {
                (T::zero(), T::zero())
            };
            window_sums.push((i_prev, i_curr));
            let r_e = reward::exploration_reward(newly_seen_free[i]);
            let r_re = if credited[i] {
                reward::re_exploration_reward::<T>(&[], true, params.alt_parenthesization)
                    + params.target_found_bonus
            } else {
                reward::re_exploration_reward(&view_marks[i], false, params.alt_parenthesization)
            };
            let r_co = reward::collision_penalty(outcomes[i] == MoveOutcome::Collided);
            let r_ph = if config.pheromone_enabled {
                reward::pheromone_reward(i_prev, i_curr, params.alpha, params.beta)
            } else {
                T::zero()
            };
            rewards.push(RewardBreakdown::compose(r_e, r_re, r_co, r_ph));
        }

        // (8) advance the clock and check termination.
        self.step += 1;
        let done = self.is_done(config);

        debug_assert_eq!(self.found_count + self.targets.len(), self.targets_total);
        Ok(StepInfo {
            outcomes,
            newly_seen_free,
            detections,
            credited,
            window_sums,
            rewards,
            merged_groups,
            done,
        })
    }

    fn merge_knowledge(&mut self, config: &EpisodeConfig) -> Vec<Vec<usize>> {
        let positions: Vec<Position> = self.agents.iter().map(|a| a.pos).collect();
        let mut merged = Vec::new();
        if config.transitive_comms {
            for group in comms::comm_groups(&positions, config.comm_range) {
                if group.len() >= 2 {
                    let union = comms::merged_knowledge(group.iter().map(|&i| &self.agents[i].knowledge));
                    for &i in &group {
                        self.agents[i].knowledge = union.clone();
                    }
                    merged.push(group);
                }
            }
        } else {
            for (i, j) in comms::comm_pairs(&positions, config.comm_range) {
                let union = comms::merged_knowledge([&self.agents[i].knowledge, &self.agents[j].knowledge]);
                self.agents[i].knowledge = union.clone();
                self.agents[j].knowledge = union;
                merged.push(vec![i, j]);
            }
        }
        merged
    }

    /// All world-state invariants; used by tests and debug assertions.
    pub fn check_invariants(&self, config: &EpisodeConfig) {
        for agent in &self.agents {
            assert!(self.map.is_free(agent.pos), "agent on non-free cell");
            assert!(agent.recent_positions.len() <= RECENT_POSITIONS);
        }
        for &t in &self.targets {
            assert!(self.map.is_free(t), "target on non-free cell");
        }
        assert_eq!(self.found_count + self.targets.len(), self.targets_total);
        assert!(self.step <= config.step_limit);
        assert!(self.pheromone.max_value() <= self.pheromone.p_max());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open_map(n: usize) -> Arc<GridMap> {
        GridMap::generate(n, n, 0.0, 0).unwrap().into_arc()
    }

    fn config(agents: usize, targets: usize) -> EpisodeConfig {
        EpisodeConfig {
            num_agents: agents,
            num_targets: targets,
            ..EpisodeConfig::default()
        }
    }

    #[test]
    fn action_indices_are_stable() {
        assert_eq!(Action::Left.index(), 0);
        assert_eq!(Action::Up.index(), 1);
        assert_eq!(Action::Right.index(), 2);
        assert_eq!(Action::Down.index(), 3);
        for i in 0..4 {
            assert_eq!(Action::from_index(i).unwrap().index(), i);
        }
        assert_eq!(Action::from_index(4), None);
    }

    #[test]
    fn reset_is_deterministic_under_seed() {
        let map = open_map(10);
        let cfg = config(2, 2);
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        let a: WorldState<f64> = reset(Arc::clone(&map), &cfg, &mut r1).unwrap();
        let b: WorldState<f64> = reset(map, &cfg, &mut r2).unwrap();
        assert_eq!(
            a.agents.iter().map(|x| x.pos).collect::<Vec<_>>(),
            b.agents.iter().map(|x| x.pos).collect::<Vec<_>>()
        );
        assert_eq!(a.targets, b.targets);
    }

    #[test]
    fn reset_fills_exact_capacity_distinctly() {
        // Exactly 4 free cells for 2 agents + 2 targets.
        let map = GridMap::parse("5 5\n..###\n#.###\n#.###\n#.###\n#####\n")
            .unwrap()
            .into_arc();
        assert_eq!(map.free_count(), 5);
        let text = "5 5\n..###\n#.###\n#.###\n#####\n#####\n";
        let map = GridMap::parse(text).unwrap().into_arc();
        assert_eq!(map.free_count(), 4);
        let cfg = config(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let state: WorldState<f64> = reset(map, &cfg, &mut rng).unwrap();
        let mut all: Vec<Position> = state.agents.iter().map(|a| a.pos).collect();
        all.extend(&state.targets);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 4);
    }

    #[test]
    fn reset_rejects_insufficient_free_cells() {
        let text = "5 5\n..###\n#.###\n#####\n#####\n#####\n";
        let map = GridMap::parse(text).unwrap().into_arc();
        assert_eq!(map.free_count(), 3);
        let cfg = config(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = reset::<f64, _>(map, &cfg, &mut rng).unwrap_err();
        assert_eq!(
            err,
            DynamicsError::NotEnoughFreeCells {
                needed: 4,
                available: 3
            }
        );
    }

    #[test]
    fn enclosed_target_stays_put() {
        // A single free cell is trivially connected and leaves the target
        // with zero legal moves.
        let map = GridMap::parse("5 5\n#####\n#####\n##.##\n#####\n#####\n")
            .unwrap()
            .into_arc();
        let mut state: WorldState<f64> = WorldState {
            map,
            agents: vec![],
            targets: vec![Position::new(2, 2)],
            pheromone: PheromoneField::with_defaults(5, 5),
            step: 0,
            found_count: 0,
            targets_total: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            state.step_targets(&mut rng);
            assert_eq!(state.targets, vec![Position::new(2, 2)]);
        }
    }

    #[test]
    fn open_field_target_moves_uniformly() {
        let map = open_map(11);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 4];
        let n = 10_000;
        let center = Position::new(5, 5);
        for _ in 0..n {
            let mut state: WorldState<f64> = WorldState {
                map: Arc::clone(&map),
                agents: vec![],
                targets: vec![center],
                pheromone: PheromoneField::with_defaults(11, 11),
                step: 0,
                found_count: 0,
                targets_total: 1,
            };
            state.step_targets(&mut rng);
            let moved = state.targets[0];
            let dir = Action::ALL
                .into_iter()
                .position(|a| a.apply(center, 11, 11) == Some(moved))
                .expect("target moved to a neighbor");
            counts[dir] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() <= 0.02, "frequency {freq} off uniform");
        }
    }

    #[test]
    fn corridor_target_splits_evenly() {
        // 1-wide corridor: two free neighbors.
        let text = "7 5\n#######\n#######\n.......\n#######\n#######\n";
        let map = GridMap::parse(text).unwrap().into_arc();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut left = 0usize;
        let n = 10_000;
        for _ in 0..n {
            let mut state: WorldState<f64> = WorldState {
                map: Arc::clone(&map),
                agents: vec![],
                targets: vec![Position::new(3, 2)],
                pheromone: PheromoneField::with_defaults(7, 5),
                step: 0,
                found_count: 0,
                targets_total: 1,
            };
            state.step_targets(&mut rng);
            if state.targets[0] == Position::new(2, 2) {
                left += 1;
            } else {
                assert_eq!(state.targets[0], Position::new(4, 2));
            }
        }
        let freq = left as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 0.03, "corridor frequency {freq}");
    }

    fn state_with_agent_at(map: Arc<GridMap>, pos: Position) -> WorldState<f64> {
        let (w, h) = (map.width(), map.height());
        WorldState {
            map,
            agents: vec![AgentState::new(pos, w, h)],
            targets: vec![Position::new(0, 0)],
            pheromone: PheromoneField::with_defaults(w, h),
            step: 0,
            found_count: 0,
            targets_total: 1,
        }
    }

    #[test]
    fn agent_collides_with_obstacle_and_stays() {
        let text = "5 5\n.....\n..#..\n.....\n.....\n.....\n";
        let map = GridMap::parse(text).unwrap().into_arc();
        let mut state = state_with_agent_at(map, Position::new(2, 2));
        let outcomes = state.step_agents(&[Action::Up]).unwrap();
        assert_eq!(outcomes, vec![MoveOutcome::Collided]);
        assert_eq!(state.agents[0].pos, Position::new(2, 2));
    }

    #[test]
    fn agent_collides_at_map_edge() {
        let map = open_map(5);
        let mut state = state_with_agent_at(map, Position::new(0, 0));
        let outcomes = state.step_agents(&[Action::Left]).unwrap();
        assert_eq!(outcomes, vec![MoveOutcome::Collided]);
        assert_eq!(state.agents[0].pos, Position::new(0, 0));
    }

    #[test]
    fn agents_may_co_locate() {
        let map = open_map(5);
        let (w, h) = (5, 5);
        let mut state: WorldState<f64> = WorldState {
            map,
            agents: vec![
                AgentState::new(Position::new(1, 2), w, h),
                AgentState::new(Position::new(3, 2), w, h),
            ],
            targets: vec![Position::new(0, 0)],
            pheromone: PheromoneField::with_defaults(w, h),
            step: 0,
            found_count: 0,
            targets_total: 1,
        };
        let outcomes = state
            .step_agents(&[Action::Right, Action::Left])
            .unwrap();
        assert_eq!(outcomes, vec![MoveOutcome::Moved, MoveOutcome::Moved]);
        assert_eq!(state.agents[0].pos, Position::new(2, 2));
        assert_eq!(state.agents[1].pos, Position::new(2, 2));
    }

    #[test]
    fn action_count_mismatch_errors() {
        let map = open_map(5);
        let mut state = state_with_agent_at(map, Position::new(2, 2));
        let err = state.step_agents(&[]).unwrap_err();
        assert_eq!(
            err,
            DynamicsError::ActionCountMismatch {
                expected: 1,
                got: 0
            }
        );
    }

    #[test]
    fn history_tracks_previous_two_steps() {
        let map = open_map(5);
        let mut state = state_with_agent_at(map, Position::new(2, 2));
        state.step_agents(&[Action::Right]).unwrap();
        state.step_agents(&[Action::Down]).unwrap();
        let a = &state.agents[0];
        assert_eq!(a.pos, Position::new(3, 3));
        assert_eq!(a.history, [Position::new(3, 2), Position::new(2, 2)]);
    }

    #[test]
    fn detection_boundary_is_inclusive_at_v() {
        let map = open_map(20);
        let mut state = state_with_agent_at(map, Position::new(10, 10));
        state.targets = vec![Position::new(15, 10)]; // Chebyshev 5
        state.targets_total = 1;
        let det = state.detect_targets(5);
        assert_eq!(det, vec![(0, 0)]);
        assert!(state.targets.is_empty());
        assert_eq!(state.found_count, 1);
    }

    #[test]
    fn detection_excludes_v_plus_one() {
        let map = open_map(20);
        let mut state = state_with_agent_at(map, Position::new(10, 10));
        state.targets = vec![Position::new(16, 10)]; // Chebyshev 6
        state.targets_total = 1;
        assert!(state.detect_targets(5).is_empty());
        assert_eq!(state.targets.len(), 1);
    }

    #[test]
    fn equidistant_detection_credits_lowest_index() {
        let map = open_map(20);
        let (w, h) = (20, 20);
        let mut state: WorldState<f64> = WorldState {
            map,
            agents: vec![
                AgentState::new(Position::new(8, 10), w, h),
                AgentState::new(Position::new(12, 10), w, h),
            ],
            targets: vec![Position::new(10, 10)],
            pheromone: PheromoneField::with_defaults(w, h),
            step: 0,
            found_count: 0,
            targets_total: 1,
        };
        let det = state.detect_targets(5);
        assert_eq!(det, vec![(0, 0)]);
    }

    #[test]
    fn done_states() {
        let map = open_map(10);
        let cfg = config(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state: WorldState<f64> = reset(map, &cfg, &mut rng).unwrap();
        assert_eq!(state.is_done(&cfg), Done::Running);
        state.step = 10;
        assert_eq!(state.is_done(&cfg), Done::Running);
        state.step = 250;
        assert_eq!(state.is_done(&cfg), Done::StepLimit);
        state.targets.clear();
        assert_eq!(state.is_done(&cfg), Done::AllFound);
    }

    #[test]
    fn full_tick_is_deterministic() {
        let map = GridMap::generate(10, 10, 0.2, 21).unwrap().into_arc();
        let cfg = config(2, 2);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let mut state: WorldState<f64> = reset(Arc::clone(&map), &cfg, &mut rng).unwrap();
            let info = state
                .step(&[Action::Left, Action::Down], &cfg, &mut rng)
                .unwrap();
            (format!("{state:?}"), format!("{info:?}"))
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn colliding_agents_still_deposit() {
        let map = open_map(5);
        let cfg = config(1, 1);
        let mut state = state_with_agent_at(map, Position::new(0, 0));
        state.targets = vec![Position::new(4, 4)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let info = state.step(&[Action::Left], &cfg, &mut rng).unwrap();
        assert_eq!(info.outcomes, vec![MoveOutcome::Collided]);
        // Deposited then evaporated once: 1 * 0.98.
        let p = state.pheromone.get(Position::new(0, 0));
        assert!((p - 0.98).abs() < 1e-12);
        // Collision penalty shows up in the breakdown.
        assert_eq!(info.rewards[0].collision, 3.0);
    }

    #[test]
    fn last_target_detection_finishes_episode_in_same_tick() {
        let map = open_map(9);
        let cfg = EpisodeConfig {
            num_agents: 1,
            num_targets: 1,
            ..EpisodeConfig::default()
        };
        let mut state = state_with_agent_at(map, Position::new(4, 4));
        state.targets = vec![Position::new(6, 4)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let info = state.step(&[Action::Right], &cfg, &mut rng).unwrap();
        assert_eq!(info.done, Done::AllFound);
        assert_eq!(info.detections.len(), 1);
        assert!(info.credited[0]);
        assert_eq!(info.rewards[0].re_exploration, 0.1);
    }

    #[test]
    fn invariants_hold_over_random_episode() {
        let map = GridMap::generate(15, 15, 0.25, 4).unwrap().into_arc();
        let cfg = config(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut state: WorldState<f64> = reset(Arc::clone(&map), &cfg, &mut rng).unwrap();
        let mut action_rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..60 {
            if state.is_done(&cfg) != Done::Running {
                break;
            }
            let actions: Vec<Action> = (0..3)
                .map(|_| Action::ALL[action_rng.gen_range(0..4)])
                .collect();
            state.step(&actions, &cfg, &mut rng).unwrap();
            state.check_invariants(&cfg);
        }
    }

    #[test]
    fn comms_disabled_keeps_maps_private() {
        let map = open_map(9);
        let cfg = EpisodeConfig {
            num_agents: 2,
            num_targets: 1,
            comms_enabled: false,
            ..EpisodeConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut state: WorldState<f64> = reset(map, &cfg, &mut rng).unwrap();
        let info = state
            .step(&[Action::Left, Action::Right], &cfg, &mut rng)
            .unwrap();
        assert!(info.merged_groups.is_empty());
    }

    #[test]
    fn pheromone_disabled_zeroes_field_and_reward() {
        let map = open_map(9);
        let cfg = EpisodeConfig {
            num_agents: 1,
            num_targets: 1,
            pheromone_enabled: false,
            ..EpisodeConfig::default()
        };
        let mut state = state_with_agent_at(map, Position::new(4, 4));
        state.targets = vec![Position::new(0, 0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let info = state.step(&[Action::Right], &cfg, &mut rng).unwrap();
        assert_eq!(state.pheromone.max_value(), 0.0);
        assert_eq!(info.rewards[0].pheromone, 0.0);
        assert_eq!(info.window_sums[0], (0.0, 0.0));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn world_invariants_after_any_tick(
                map_seed in 0u64..200,
                seed in 0u64..200,
                ticks in 1usize..30,
            ) {
                let map = GridMap::generate(12, 12, 0.2, map_seed).unwrap().into_arc();
                let cfg = config(2, 3);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut state: WorldState<f64> = reset(map, &cfg, &mut rng).unwrap();
                let mut arng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
                for _ in 0..ticks {
                    if state.is_done(&cfg) != Done::Running {
                        break;
                    }
                    let actions: Vec<Action> =
                        (0..2).map(|_| Action::ALL[arng.gen_range(0..4)]).collect();
                    state.step(&actions, &cfg, &mut rng).unwrap();
                    state.check_invariants(&cfg);
                }
            }
        }
    }
}
