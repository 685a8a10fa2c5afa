//! Step-limit curriculum: grow the per-episode cap when returns plateau.
//!
//! The best mean return is tracked per level. When it fails to improve for
//! `patience` consecutive rollout waves the limit grows by `increment`;
//! once the cap itself plateaus, training is finished.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    pub start: usize,
    pub increment: usize,
    pub cap: usize,
    /// Consecutive non-improving waves before advancing.
    pub patience: usize,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            start: 10,
            increment: 10,
            cap: 260,
            patience: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurriculumEvent {
    /// Return improved; best updated.
    Improved,
    /// No improvement yet, patience not exhausted.
    NoImprovement,
    /// Patience exhausted; the step limit grew.
    Advanced { new_limit: usize },
    /// Patience exhausted at the cap; training is over.
    Finished,
}

#[derive(Debug, Clone)]
pub struct Curriculum {
    config: CurriculumConfig,
    step_limit: usize,
    best_return: f64,
    streak: usize,
    finished: bool,
}

impl Curriculum {
    pub fn new(config: CurriculumConfig) -> Self {
        Curriculum {
            step_limit: config.start.min(config.cap),
            config,
            best_return: f64::NEG_INFINITY,
            streak: 0,
            finished: false,
        }
    }

    pub fn step_limit(&self) -> usize {
        self.step_limit
    }

    pub fn finished(&self) -> bool {
        self.finished
    }

    /// Feed one rollout wave's mean episode return.
    pub fn record_wave(&mut self, mean_return: f64) -> CurriculumEvent {
        assert!(!self.finished, "curriculum already finished");
        if mean_return > self.best_return {
            self.best_return = mean_return;
            self.streak = 0;
            return CurriculumEvent::Improved;
        }
        self.streak += 1;
        if self.streak < self.config.patience {
            return CurriculumEvent::NoImprovement;
        }
        if self.step_limit >= self.config.cap {
            self.finished = true;
            return CurriculumEvent::Finished;
        }
        self.step_limit = (self.step_limit + self.config.increment).min(self.config.cap);
        self.best_return = f64::NEG_INFINITY;
        self.streak = 0;
        CurriculumEvent::Advanced {
            new_limit: self.step_limit,
        }
    }
}
