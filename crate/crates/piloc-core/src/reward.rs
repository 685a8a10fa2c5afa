//! Per-tick shaped reward `r = r_e + r_re - r_co + r_ph`.
//!
//! - exploration: 0.5 per free cell newly discovered by the agent's own
//!   observation this tick (merged-in knowledge does not count);
//! - re-exploration: 0.1 when the agent is credited a detection, otherwise
//!   `0.01 * sum(1 + v_m / 0.3) - 1` over the explored free cells in view;
//! - collision: flat 3, subtracted;
//! - pheromone: rewards moving toward lower window sums through both a
//!   relative and an absolute term.

use crate::scalar::Scalar;

/// Reward per newly discovered free cell.
pub const EXPLORATION_PER_CELL: f64 = 0.5;
/// Re-exploration reward when the agent found a target this tick.
pub const FOUND_REWARD: f64 = 0.1;
/// Scale of the re-exploration sum.
pub const RE_EXPLORE_SCALE: f64 = 0.01;
/// Flat collision penalty magnitude.
pub const COLLISION_PENALTY: f64 = 3.0;
/// Below this the relative pheromone term is dropped to avoid the division
/// singularity.
pub const PHEROMONE_EPS: f64 = 1e-9;
/// Default weights of the relative and absolute pheromone terms.
pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_BETA: f64 = 0.1;

/// Tunable reward parameters; everything else is a fixed constant above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams<T> {
    pub alpha: T,
    pub beta: T,
    /// Extra reward added on a credited detection (0 = paper-faithful).
    pub target_found_bonus: T,
    /// Alternative reading of the re-exploration formula where the trailing
    /// `-1` is inside the 0.01 scale.
    pub alt_parenthesization: bool,
}

impl<T: Scalar> Default for RewardParams<T> {
    fn default() -> Self {
        RewardParams {
            alpha: T::of(DEFAULT_ALPHA),
            beta: T::of(DEFAULT_BETA),
            target_found_bonus: T::zero(),
            alt_parenthesization: false,
        }
    }
}

/// Per-agent, per-tick reward components. `collision` is stored as a
/// magnitude (3 or 0) and subtracted in the total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown<T> {
    pub exploration: T,
    pub re_exploration: T,
    pub collision: T,
    pub pheromone: T,
    pub total: T,
}

impl<T: Scalar> RewardBreakdown<T> {
    pub fn compose(exploration: T, re_exploration: T, collision: T, pheromone: T) -> Self {
        RewardBreakdown {
            exploration,
            re_exploration,
            collision,
            pheromone,
            total: exploration + re_exploration - collision + pheromone,
        }
    }

    pub fn zero() -> Self {
        Self::compose(T::zero(), T::zero(), T::zero(), T::zero())
    }
}

/// `0.5 * n_e` where `n_e` counts free cells newly seen by the agent itself.
pub fn exploration_reward<T: Scalar>(newly_seen_free: usize) -> T {
    T::of(EXPLORATION_PER_CELL) * T::of(newly_seen_free as f64)
}

/// Re-exploration reward over the marks of explored free cells in view.
pub fn re_exploration_reward<T: Scalar>(marks: &[T], found: bool, alt_parenthesization: bool) -> T {
    if found {
        return T::of(FOUND_REWARD);
    }
    let mark_max = T::of(crate::perception::MARK_MAX);
    let sum: T = marks.iter().map(|&m| T::one() + m / mark_max).sum();
    if alt_parenthesization {
        T::of(RE_EXPLORE_SCALE) * (sum - T::one())
    } else {
        T::of(RE_EXPLORE_SCALE) * sum - T::one()
    }
}

/// Collision penalty magnitude (subtracted from the total).
pub fn collision_penalty<T: Scalar>(collided: bool) -> T {
    if collided {
        T::of(COLLISION_PENALTY)
    } else {
        T::zero()
    }
}

/// Pheromone inverse-guidance reward from the perceptual window sums before
/// (`i_prev`) and after (`i_curr`) the move, both measured against the same
/// post-update field snapshot. The relative term is dropped when `i_prev`
/// is (numerically) zero.
pub fn pheromone_reward<T: Scalar>(i_prev: T, i_curr: T, alpha: T, beta: T) -> T {
    let diff = i_prev - i_curr;
    if i_prev > T::of(PHEROMONE_EPS) {
        alpha * diff / i_prev + beta * diff
    } else {
        beta * diff
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exploration_is_half_per_cell() {
        assert_eq!(exploration_reward::<f64>(4), 2.0);
        assert_eq!(exploration_reward::<f64>(0), 0.0);
        assert_eq!(exploration_reward::<f64>(11), 5.5);
    }

    #[test]
    fn found_branch_overrides_sum() {
        let marks = vec![0.3; 50];
        assert_eq!(re_exploration_reward(&marks, true, false), 0.1);
    }

    #[test]
    fn fresh_marks_are_neutral_at_100_cells() {
        let marks = vec![0.0f64; 100];
        let r = re_exploration_reward(&marks, false, false);
        assert!((r - 0.0).abs() < 1e-12);
    }

    #[test]
    fn saturated_marks_at_100_cells() {
        let marks = vec![0.3f64; 100];
        let r = re_exploration_reward(&marks, false, false);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_view_floors_at_minus_one() {
        let r = re_exploration_reward::<f64>(&[], false, false);
        assert_eq!(r, -1.0);
    }

    #[test]
    fn alt_parenthesization_moves_the_offset() {
        let marks = vec![0.0f64; 100];
        let r = re_exploration_reward(&marks, false, true);
        // 0.01 * (100 - 1) = 0.99
        assert!((r - 0.99).abs() < 1e-12);
    }

    #[test]
    fn collision_penalty_is_flat_per_tick() {
        assert_eq!(collision_penalty::<f64>(true), 3.0);
        assert_eq!(collision_penalty::<f64>(false), 0.0);
        // Two consecutive collisions are assessed independently.
        let two_ticks = collision_penalty::<f64>(true) + collision_penalty::<f64>(true);
        assert_eq!(two_ticks, 6.0);
    }

    #[test]
    fn pheromone_reward_worked_example() {
        let r: f64 = pheromone_reward(10.0, 8.0, 0.1, 0.1);
        // 0.1 * 2/10 + 0.1 * 2 = 0.22
        assert!((r - 0.22).abs() < 1e-12);
    }

    #[test]
    fn no_change_no_reward() {
        assert_eq!(pheromone_reward(5.0, 5.0, 0.1, 0.1), 0.0);
    }

    #[test]
    fn singularity_drops_relative_term() {
        let r: f64 = pheromone_reward(0.0, 1.0, 0.1, 0.1);
        assert!((r + 0.1).abs() < 1e-12);
    }

    #[test]
    fn breakdown_recomposes_exactly() {
        let b = RewardBreakdown::compose(2.0, -0.5, 3.0, 0.22);
        assert_eq!(b.total, 2.0 + (-0.5) - 3.0 + 0.22);
    }

    #[test]
    fn exploration_additive_over_disjoint_sets() {
        let a: f64 = exploration_reward(7);
        let b: f64 = exploration_reward(5);
        assert_eq!(a + b, exploration_reward::<f64>(12));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(256))]

            /// Sign property: moving toward strictly lower pheromone gives a
            /// strictly positive reward and vice versa (for i_prev > 0).
            #[test]
            fn sign_property(i_prev in 1e-6f64..500.0, i_curr in 0.0f64..500.0) {
                let r = pheromone_reward(i_prev, i_curr, 0.1, 0.1);
                if i_curr < i_prev {
                    prop_assert!(r > 0.0);
                } else if i_curr > i_prev {
                    prop_assert!(r < 0.0);
                } else {
                    prop_assert_eq!(r, 0.0);
                }
            }

            #[test]
            fn re_exploration_bounded_below(marks in proptest::collection::vec(0.0f64..=0.3, 0..200)) {
                let r = re_exploration_reward(&marks, false, false);
                prop_assert!(r >= -1.0);
            }
        }
    }
}
