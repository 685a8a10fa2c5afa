//! Trajectory storage and return / advantage computation.

use piloc_core::perception::ObservationStack;
use piloc_core::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BufferError {
    #[error("trajectory arrays are misaligned: {0}")]
    Misaligned(String),
    #[error("stored log-probability {0} is not finite and non-positive")]
    BadLogProb(f64),
}

/// One agent's episode slice: aligned per-step arrays plus how the episode
/// ended. `bootstrap` carries `V(s_T)` for truncated (step-limit) episodes
/// and is `None` for terminal ones.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub observations: Vec<ObservationStack<T>>,
    pub actions: Vec<usize>,
    pub log_probs_old: Vec<T>,
    pub values_old: Vec<T>,
    pub rewards: Vec<T>,
    pub bootstrap: Option<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn validate(&self) -> Result<(), BufferError> {
        let n = self.rewards.len();
        if self.observations.len() != n
            || self.actions.len() != n
            || self.log_probs_old.len() != n
            || self.values_old.len() != n
        {
            return Err(BufferError::Misaligned(format!(
                "obs {} actions {} log_probs {} values {} rewards {}",
                self.observations.len(),
                self.actions.len(),
                self.log_probs_old.len(),
                self.values_old.len(),
                n
            )));
        }
        for &lp in &self.log_probs_old {
            if !lp.is_finite() || lp > T::zero() {
                return Err(BufferError::BadLogProb(lp.to_f64_lossy()));
            }
        }
        Ok(())
    }
}

/// All trajectories of one rollout wave.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer<T> {
    pub trajectories: Vec<Trajectory<T>>,
}

impl<T: Scalar> RolloutBuffer<T> {
    pub fn new() -> Self {
        RolloutBuffer {
            trajectories: Vec::new(),
        }
    }

    pub fn push(&mut self, t: Trajectory<T>) {
        self.trajectories.push(t);
    }

    /// Total step count across trajectories.
    pub fn len(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<(), BufferError> {
        for t in &self.trajectories {
            t.validate()?;
        }
        Ok(())
    }
}

/// Discounted returns within one trajectory: `R_t = r_t + gamma * R_{t+1}`,
/// seeded with the bootstrap value on truncation and zero on termination.
pub fn discounted_returns<T: Scalar>(rewards: &[T], gamma: T, bootstrap: Option<T>) -> Vec<T> {
    let mut returns = vec![T::zero(); rewards.len()];
    let mut acc = bootstrap.unwrap_or_else(T::zero);
    for (i, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        returns[i] = acc;
    }
    returns
}

/// Raw advantages `R_t - V(s_t)`.
pub fn raw_advantages<T: Scalar>(returns: &[T], values: &[T]) -> Vec<T> {
    assert_eq!(returns.len(), values.len());
    returns
        .iter()
        .zip(values)
        .map(|(&r, &v)| r - v)
        .collect()
}

/// Generalized advantage estimation (optional alternative to the
/// full-horizon baseline). `bootstrap` is `V(s_T)` on truncation, zero
/// otherwise.
pub fn gae_advantages<T: Scalar>(
    rewards: &[T],
    values: &[T],
    gamma: T,
    lambda: T,
    bootstrap: Option<T>,
) -> Vec<T> {
    assert_eq!(rewards.len(), values.len());
    let n = rewards.len();
    let mut adv = vec![T::zero(); n];
    let mut next_value = bootstrap.unwrap_or_else(T::zero);
    let mut acc = T::zero();
    for i in (0..n).rev() {
        let delta = rewards[i] + gamma * next_value - values[i];
        acc = delta + gamma * lambda * acc;
        adv[i] = acc;
        next_value = values[i];
    }
    adv
}

/// Normalize in place to zero mean and unit (population) standard
/// deviation, with a small std floor. Returns `(mean, std)`.
pub fn normalize<T: Scalar>(values: &mut [T]) -> (T, T) {
    let n = T::of(values.len() as f64);
    let mean = values.iter().cloned().sum::<T>() / n;
    let var = values
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<T>()
        / n;
    let std = var.sqrt().max(T::of(1e-8));
    for v in values.iter_mut() {
        *v = (*v - mean) / std;
    }
    (mean, std)
}
