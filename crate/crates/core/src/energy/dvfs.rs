use serde::{Deserialize, Serialize};

use crate::models::DvfsHook;

/// Saturating frequency-level state machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DvfsState {
    level: usize,
    levels: usize,
    default_level: usize,
    /// Number of `step` calls since construction.
    steps: u64,
}

impl DvfsState {
    /// Panics if `levels == 0` or `default_level >= levels`.
    pub fn new(levels: usize, default_level: usize) -> Self {
        assert!(
            levels > 0 && default_level < levels,
            "default level out of range"
        );
        Self {
            level: default_level,
            levels,
            default_level,
            steps: 0,
        }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn default_level(&self) -> usize {
        self.default_level
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// `+1` raises, `-1` lowers (both saturating), `0` resets to the default.
    pub fn step(&mut self, delta: i32) {
        self.steps += 1;
        self.level = match delta.signum() {
            1 => (self.level + 1).min(self.levels - 1),
            -1 => self.level.saturating_sub(1),
            _ => self.default_level,
        };
    }

    pub fn apply(&mut self, hook: DvfsHook) {
        self.step(hook.delta());
    }

    /// Returns to the default level without counting a step.
    pub fn restart(&mut self) {
        self.level = self.default_level;
    }
}
