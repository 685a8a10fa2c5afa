//! Batch evaluation statistics: success rate, average steps, step variance
//! over successes, and average targets obtained.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Outcome of one evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub steps: usize,
    pub targets_found: usize,
    pub targets_total: usize,
    /// Sum of per-agent total rewards over the episode.
    pub reward_sum: f64,
    /// Ticks on which the fallback controlled at least one agent.
    pub fallback_ticks: usize,
}

/// Aggregated metrics over a batch of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    /// Fraction of episodes in which every target was found.
    pub success_rate: f64,
    /// Mean steps; by default over all episodes with failures counted at
    /// the step limit they ran to.
    pub avg_steps: f64,
    /// Population variance of steps over successful episodes; absent with
    /// fewer than two successes.
    pub step_variance: Option<f64>,
    /// Mean targets found per episode, failed episodes included.
    pub avg_targets: f64,
    pub episodes: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("cannot aggregate an empty batch")]
    EmptyBatch,
    #[error("averaging steps over successes requires at least one success")]
    NoSuccesses,
}

/// Aggregate a batch. `steps_over_all` selects whether average steps counts
/// every episode (default, failures at their cap) or successes only.
pub fn aggregate(results: &[EpisodeResult], steps_over_all: bool) -> Result<BatchMetrics, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::EmptyBatch);
    }
    let n = results.len() as f64;
    let successes: Vec<&EpisodeResult> = results.iter().filter(|r| r.success).collect();
    let success_rate = successes.len() as f64 / n;
    let avg_steps = if steps_over_all {
        results.iter().map(|r| r.steps as f64).sum::<f64>() / n
    } else {
        if successes.is_empty() {
            return Err(MetricsError::NoSuccesses);
        }
        successes.iter().map(|r| r.steps as f64).sum::<f64>() / successes.len() as f64
    };
    let step_variance = if successes.len() >= 2 {
        let m = successes.iter().map(|r| r.steps as f64).sum::<f64>() / successes.len() as f64;
        Some(
            successes
                .iter()
                .map(|r| (r.steps as f64 - m).powi(2))
                .sum::<f64>()
                / successes.len() as f64,
        )
    } else {
        None
    };
    let avg_targets = results.iter().map(|r| r.targets_found as f64).sum::<f64>() / n;
    Ok(BatchMetrics {
        success_rate,
        avg_steps,
        step_variance,
        avg_targets,
        episodes: results.len(),
    })
}
