//! Line-delimited episode replay logs.
//!
//! One JSON record per line: a header with the map and effective episode
//! parameters, one record per tick, and a final result record. Output is
//! byte-deterministic for identical runs, so logs can be diffed and
//! checksummed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::EpisodeConfig;
use crate::metrics::EpisodeResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub map_text: String,
    pub seed: u64,
    pub policy: String,
    pub num_agents: usize,
    pub num_targets: usize,
    pub perception_radius: usize,
    pub comm_range: u32,
    pub pheromone_window: usize,
    pub step_limit: usize,
    pub pheromone_enabled: bool,
    pub comms_enabled: bool,
    pub fallback_enabled: bool,
    /// Field parameters, letting renderers reconstruct the pheromone field
    /// from the recorded agent positions.
    pub pheromone_max: f64,
    pub evaporation_rate: f64,
}

impl ReplayHeader {
    pub fn new(map_text: String, seed: u64, policy: &str, config: &EpisodeConfig) -> Self {
        ReplayHeader {
            map_text,
            seed,
            policy: policy.to_string(),
            num_agents: config.num_agents,
            num_targets: config.num_targets,
            perception_radius: config.perception_radius,
            comm_range: config.comm_range,
            pheromone_window: config.pheromone_window,
            step_limit: config.step_limit,
            pheromone_enabled: config.pheromone_enabled,
            comms_enabled: config.comms_enabled,
            fallback_enabled: config.fallback_enabled,
            pheromone_max: config.pheromone_max,
            evaporation_rate: config.evaporation_rate,
        }
    }
}

/// Per-agent reward components for one tick, in f64 regardless of the
/// simulation scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub exploration: f64,
    pub re_exploration: f64,
    pub collision: f64,
    pub pheromone: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: usize,
    /// Action indices, one per agent.
    pub actions: Vec<usize>,
    /// Agent positions after moving, as `[x, y]`.
    pub agents: Vec<(usize, usize)>,
    /// Live target positions after this tick's removals.
    pub targets: Vec<(usize, usize)>,
    pub rewards: Vec<RewardRecord>,
    /// `(agent, target index before removal)` detections.
    pub detections: Vec<(usize, usize)>,
    /// Communication groups (size >= 2) that merged this tick.
    pub comm_groups: Vec<Vec<usize>>,
    /// Pheromone window sums `(previous, current)` per agent.
    pub window_sums: Vec<(f64, f64)>,
    /// Per agent: did the fallback controller pick this action?
    pub fallback: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ReplayRecord {
    Header(ReplayHeader),
    Tick(TickRecord),
    Result(EpisodeResult),
}

/// A complete episode log.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayLog {
    pub header: ReplayHeader,
    pub ticks: Vec<TickRecord>,
    pub result: EpisodeResult,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("line {0}: {1}")]
    Malformed(usize, serde_json::Error),
    #[error("log must start with a header record")]
    MissingHeader,
    #[error("log must end with a result record")]
    MissingResult,
    #[error("unexpected record order at line {0}")]
    BadOrder(usize),
}

impl ReplayLog {
    /// Serialize as one JSON record per line.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        let header = ReplayRecord::Header(self.header.clone());
        out.push_str(&serde_json::to_string(&header).expect("serializable"));
        out.push('\n');
        for tick in &self.ticks {
            let rec = ReplayRecord::Tick(tick.clone());
            out.push_str(&serde_json::to_string(&rec).expect("serializable"));
            out.push('\n');
        }
        let result = ReplayRecord::Result(self.result.clone());
        out.push_str(&serde_json::to_string(&result).expect("serializable"));
        out.push('\n');
        out
    }

    pub fn parse(text: &str) -> Result<ReplayLog, ReplayError> {
        let mut header = None;
        let mut ticks = Vec::new();
        let mut result = None;
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let rec: ReplayRecord =
                serde_json::from_str(line).map_err(|e| ReplayError::Malformed(i + 1, e))?;
            match rec {
                ReplayRecord::Header(h) => {
                    if header.is_some() || !ticks.is_empty() {
                        return Err(ReplayError::BadOrder(i + 1));
                    }
                    header = Some(h);
                }
                ReplayRecord::Tick(t) => {
                    if header.is_none() || result.is_some() {
                        return Err(ReplayError::BadOrder(i + 1));
                    }
                    ticks.push(t);
                }
                ReplayRecord::Result(r) => {
                    if header.is_none() || result.is_some() {
                        return Err(ReplayError::BadOrder(i + 1));
                    }
                    result = Some(r);
                }
            }
        }
        Ok(ReplayLog {
            header: header.ok_or(ReplayError::MissingHeader)?,
            ticks,
            result: result.ok_or(ReplayError::MissingResult)?,
        })
    }

    /// Recompute the episode result from the tick records alone; must equal
    /// the stored result exactly.
    pub fn recompute_result(&self) -> EpisodeResult {
        let steps = self.ticks.last().map_or(0, |t| t.tick);
        let targets_found: usize = self.ticks.iter().map(|t| t.detections.len()).sum();
        let reward_sum: f64 = self
            .ticks
            .iter()
            .flat_map(|t| t.rewards.iter().map(|r| r.total))
            .sum();
        let fallback_ticks = self
            .ticks
            .iter()
            .filter(|t| t.fallback.iter().any(|&f| f))
            .count();
        EpisodeResult {
            success: targets_found == self.header.num_targets,
            steps,
            targets_found,
            targets_total: self.header.num_targets,
            reward_sum,
            fallback_ticks,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_log() -> ReplayLog {
        let config = EpisodeConfig {
            num_agents: 1,
            num_targets: 1,
            ..EpisodeConfig::default()
        };
        ReplayLog {
            header: ReplayHeader::new("5 5\n.....\n.....\n.....\n.....\n.....\n".into(), 7, "random", &config),
            ticks: vec![TickRecord {
                tick: 1,
                actions: vec![2],
                agents: vec![(1, 0)],
                targets: vec![],
                rewards: vec![RewardRecord {
                    exploration: 0.5,
                    re_exploration: 0.1,
                    collision: 0.0,
                    pheromone: 0.0,
                    total: 0.6,
                }],
                detections: vec![(0, 0)],
                comm_groups: vec![],
                window_sums: vec![(0.0, 0.0)],
                fallback: vec![false],
            }],
            result: EpisodeResult {
                success: true,
                steps: 1,
                targets_found: 1,
                targets_total: 1,
                reward_sum: 0.6,
                fallback_ticks: 0,
            },
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let log = tiny_log();
        let text = log.to_lines();
        let back = ReplayLog::parse(&text).unwrap();
        assert_eq!(back, log);
        assert_eq!(back.to_lines(), text);
    }

    #[test]
    fn recompute_matches_stored_result() {
        let log = tiny_log();
        assert_eq!(log.recompute_result(), log.result);
    }

    #[test]
    fn parse_rejects_missing_header() {
        let log = tiny_log();
        let text = log.to_lines();
        let without_header: String = text.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            ReplayLog::parse(&without_header),
            Err(ReplayError::BadOrder(_)) | Err(ReplayError::MissingHeader)
        ));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(matches!(
            ReplayLog::parse("not json\n"),
            Err(ReplayError::Malformed(1, _))
        ));
    }
}
