//! Simulated device resources: DVFS levels, energy and time models, and a
//! page cache driven by model access traces.
//!
//! Energy over a round is the discretized integral
//!
//! ```text
//! e = Σ_seg f_CPU(level) · Ū · dt + (Σ_j e_j) · T
//! ```
//!
//! and time is `T = A · w · F / speedup(level) + B` with `F` the operation
//! count reported by the model.

mod dvfs;
mod lru;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::models::{ModelKind, OpReport};

pub use dvfs::DvfsState;
pub use lru::{Access, CacheCounters, ThetaLruCache};
pub use trace::{model_access_trace, write_energy_trace, EnergyRecord, DEFAULT_BLOCK};

/// Relative frequency steps used by the preset profiles.
pub const PRESET_STEPS: [f64; 5] = [0.4, 0.55, 0.7, 0.85, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqLevel {
    pub ghz: f64,
    /// Energy units per utilization-second.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticDraw {
    pub name: String,
    /// Energy units per second.
    pub draw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub cores: u32,
    /// Strictly increasing in frequency.
    pub freq_levels: Vec<FreqLevel>,
    pub default_level: usize,
    #[serde(default)]
    pub static_draws: Vec<StaticDraw>,
    /// Milliseconds per operation at the default level.
    pub a_ms_per_op: f64,
    /// Fixed per-round overhead in milliseconds.
    pub b_ms: f64,
    pub page_capacity: usize,
}

/// Constant-level stretch of a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub level: usize,
    pub utilization: f64,
    pub duration_s: f64,
}

impl DeviceProfile {
    /// Profile with cubic power scaling up to `max_ghz`:
    /// `coefficient = 0.25 · cores · (f / f_max)³`.
    pub fn cubic(name: &str, cores: u32, max_ghz: f64) -> Self {
        let freq_levels = PRESET_STEPS
            .iter()
            .map(|s| FreqLevel {
                ghz: s * max_ghz,
                coefficient: 0.25 * f64::from(cores) * s.powi(3),
            })
            .collect::<Vec<_>>();
        let default_level = 2;
        let default_ghz = freq_levels[default_level].ghz;
        Self {
            name: name.to_string(),
            cores,
            freq_levels,
            default_level,
            static_draws: vec![
                StaticDraw {
                    name: "screen".into(),
                    draw: 0.3,
                },
                StaticDraw {
                    name: "radio".into(),
                    draw: 0.2,
                },
            ],
            a_ms_per_op: 0.002 / default_ghz,
            b_ms: 5.0,
            page_capacity: 256,
        }
    }

    /// The five handsets of the evaluation table.
    pub fn presets() -> Vec<DeviceProfile> {
        vec![
            Self::cubic("Honor", 8, 2.11),
            Self::cubic("Lenovo", 4, 1.04),
            Self::cubic("ZTE", 4, 1.09),
            Self::cubic("Mi", 6, 1.44),
            Self::cubic("Nexus", 4, 2.65),
        ]
    }

    pub fn preset(name: &str) -> Option<DeviceProfile> {
        Self::presets()
            .into_iter()
            .find(|p| p.name.eq_ignore_ascii_case(name))
    }

    /// Parses a JSON array of profiles.
    pub fn load_all(text: &str) -> Result<Vec<DeviceProfile>, ConfigError> {
        let profiles: Vec<DeviceProfile> =
            serde_json::from_str(text).map_err(|e| ConfigError::new("profiles", e.to_string()))?;
        for p in &profiles {
            p.validate()?;
        }
        Ok(profiles)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = |msg: String| ConfigError::new(format!("profiles.{}", self.name), msg);
        if self.freq_levels.is_empty() {
            return Err(field("no frequency levels".into()));
        }
        if self.default_level >= self.freq_levels.len() {
            return Err(field(format!(
                "default level {} out of range",
                self.default_level
            )));
        }
        if self
            .freq_levels
            .iter()
            .any(|l| !(l.ghz > 0.0) || !(l.coefficient >= 0.0))
        {
            return Err(field(
                "frequencies must be positive and coefficients non-negative".into(),
            ));
        }
        for w in self.freq_levels.windows(2) {
            if w[1].ghz <= w[0].ghz {
                return Err(field("frequencies must be strictly increasing".into()));
            }
            if w[1].coefficient < w[0].coefficient {
                return Err(field("coefficients must be non-decreasing".into()));
            }
        }
        if !(self.a_ms_per_op >= 0.0) || !(self.b_ms >= 0.0) {
            return Err(field("A and B must be non-negative".into()));
        }
        if self.static_draws.iter().any(|s| !(s.draw >= 0.0)) {
            return Err(field("static draws must be non-negative".into()));
        }
        if self.page_capacity == 0 {
            return Err(field("page capacity must be positive".into()));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.freq_levels.len()
    }

    /// `freq(level) / freq(default)`.
    pub fn speedup(&self, level: usize) -> f64 {
        self.freq_levels[level].ghz / self.freq_levels[self.default_level].ghz
    }

    /// Sum of static component draws.
    pub fn static_draw(&self) -> f64 {
        self.static_draws.iter().map(|s| s.draw).sum()
    }

    /// `A · w · F / speedup(level) + B`, in milliseconds.
    pub fn training_time(&self, ops: u64, weight: f64, level: usize) -> f64 {
        self.compute_time(ops, weight, level) + self.b_ms
    }

    fn compute_time(&self, ops: u64, weight: f64, level: usize) -> f64 {
        self.a_ms_per_op * weight * ops as f64 / self.speedup(level)
    }

    /// Discretized energy over `segments`.
    pub fn round_energy(&self, segments: &[Segment]) -> f64 {
        let dynamic: f64 = segments
            .iter()
            .map(|s| self.freq_levels[s.level].coefficient * s.utilization * s.duration_s)
            .sum();
        let total: f64 = segments.iter().map(|s| s.duration_s).sum();
        dynamic + self.static_draw() * total
    }

    pub fn dvfs(&self) -> DvfsState {
        DvfsState::new(self.levels(), self.default_level)
    }
}

/// Accumulates time, energy and paging for one local step.
///
/// Each charged report runs at the current level; its hooks are applied
/// afterwards, so they govern the next report.
#[derive(Debug, Clone)]
pub struct EnergyMeter<'a> {
    profile: &'a DeviceProfile,
    weight: f64,
    utilization: f64,
    dvfs: DvfsState,
    cache: ThetaLruCache,
    block: u64,
    segments: Vec<Segment>,
    levels: Vec<usize>,
    ops: u64,
    hooks: u64,
}

/// Totals for one local step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCost {
    pub time_ms: f64,
    pub energy: f64,
    pub ops: u64,
    pub levels: Vec<usize>,
    pub hooks: u64,
    pub dvfs_steps: u64,
    pub page_faults: u64,
    pub page_swaps: u64,
}

impl<'a> EnergyMeter<'a> {
    pub fn new(
        profile: &'a DeviceProfile,
        weight: f64,
        lru_theta: f64,
    ) -> Result<Self, ConfigError> {
        profile.validate()?;
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(ConfigError::new(
                "priority_weight",
                format!("must be positive, got {weight}"),
            ));
        }
        let dvfs = profile.dvfs();
        Ok(Self {
            profile,
            weight,
            utilization: 1.0,
            levels: vec![dvfs.level()],
            dvfs,
            cache: ThetaLruCache::new(profile.page_capacity, lru_theta)?,
            block: DEFAULT_BLOCK,
            segments: Vec::new(),
            ops: 0,
            hooks: 0,
        })
    }

    pub fn level(&self) -> usize {
        self.dvfs.level()
    }

    pub fn charge(&mut self, kind: ModelKind, report: &OpReport) {
        let level = self.dvfs.level();
        let ms = self.profile.compute_time(report.ops, self.weight, level);
        self.segments.push(Segment {
            level,
            utilization: self.utilization,
            duration_s: ms / 1000.0,
        });
        self.ops += report.ops;
        for page in model_access_trace(kind, report, self.block) {
            self.cache.access(page);
        }
        for &h in &report.hooks {
            self.dvfs.apply(h);
            self.hooks += 1;
            if self.levels.last() != Some(&self.dvfs.level()) {
                self.levels.push(self.dvfs.level());
            }
        }
    }

    /// Adds the fixed overhead `B` at the current level and returns totals.
    pub fn finish(mut self) -> StepCost {
        self.segments.push(Segment {
            level: self.dvfs.level(),
            utilization: self.utilization,
            duration_s: self.profile.b_ms / 1000.0,
        });
        let time_ms = self.segments.iter().map(|s| s.duration_s).sum::<f64>() * 1000.0;
        let counters = self.cache.counters();
        StepCost {
            time_ms,
            energy: self.profile.round_energy(&self.segments),
            ops: self.ops,
            levels: self.levels,
            hooks: self.hooks,
            dvfs_steps: self.dvfs.steps(),
            page_faults: counters.faults,
            page_swaps: counters.swaps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::DvfsHook;

    fn simple(a: f64, b: f64) -> DeviceProfile {
        DeviceProfile {
            name: "t".into(),
            cores: 1,
            freq_levels: vec![
                FreqLevel {
                    ghz: 1.0,
                    coefficient: 1.0,
                },
                FreqLevel {
                    ghz: 2.0,
                    coefficient: 8.0,
                },
            ],
            default_level: 0,
            static_draws: vec![StaticDraw {
                name: "s".into(),
                draw: 0.1,
            }],
            a_ms_per_op: a,
            b_ms: b,
            page_capacity: 4,
        }
    }

    #[test]
    fn zero_ops_costs_intercept() {
        assert_eq!(simple(2.0, 3.0).training_time(0, 1.0, 0), 3.0);
    }

    #[test]
    fn linear_time_model() {
        assert_eq!(simple(2.0, 3.0).training_time(10, 1.0, 0), 23.0);
    }

    #[test]
    fn doubling_frequency_halves_compute() {
        let p = simple(2.0, 3.0);
        let base = p.training_time(10, 1.0, 0) - p.b_ms;
        let fast = p.training_time(10, 1.0, 1) - p.b_ms;
        assert!((base - 2.0 * fast).abs() < 1e-12);
    }

    #[test]
    fn energy_of_one_segment() {
        let p = simple(1.0, 0.0);
        let e = p.round_energy(&[Segment {
            level: 0,
            utilization: 0.5,
            duration_s: 10.0,
        }]);
        assert!((e - 6.0).abs() < 1e-12);
    }

    #[test]
    fn idle_without_static_is_free() {
        let mut p = simple(1.0, 0.0);
        p.static_draws.clear();
        assert_eq!(
            p.round_energy(&[Segment {
                level: 1,
                utilization: 0.0,
                duration_s: 4.0
            }]),
            0.0
        );
    }

    #[test]
    fn splitting_a_segment_is_neutral() {
        let p = simple(1.0, 0.0);
        let whole = p.round_energy(&[Segment {
            level: 1,
            utilization: 0.7,
            duration_s: 3.0,
        }]);
        let half = Segment {
            level: 1,
            utilization: 0.7,
            duration_s: 1.5,
        };
        assert!((whole - p.round_energy(&[half, half])).abs() < 1e-12);
    }

    #[test]
    fn presets_are_valid() {
        let presets = DeviceProfile::presets();
        assert_eq!(presets.len(), 5);
        for p in &presets {
            p.validate().unwrap();
        }
        let nexus = DeviceProfile::preset("nexus").unwrap();
        assert_eq!(nexus.freq_levels.last().unwrap().ghz, 2.65);
        assert_eq!(nexus.cores, 4);
    }

    #[test]
    fn profiles_round_trip_through_json() {
        let text = serde_json::to_string(&DeviceProfile::presets()).unwrap();
        assert_eq!(
            DeviceProfile::load_all(&text).unwrap(),
            DeviceProfile::presets()
        );
    }

    #[test]
    fn meter_counts_every_hook() {
        let p = DeviceProfile::preset("Honor").unwrap();
        let mut m = EnergyMeter::new(&p, 1.0, 0.3).unwrap();
        let rep = OpReport {
            ops: 100,
            hooks: vec![
                DvfsHook::Up,
                DvfsHook::Up,
                DvfsHook::Up,
                DvfsHook::Down,
                DvfsHook::Reset,
            ],
            touched: vec![],
        };
        m.charge(ModelKind::Ppr, &rep);
        let cost = m.finish();
        assert_eq!(cost.hooks, 5);
        assert_eq!(cost.dvfs_steps, 5);
        assert_eq!(cost.levels, vec![2, 3, 4, 3, 2]);
        assert!((cost.time_ms - p.training_time(100, 1.0, 2)).abs() < 1e-9);
    }
}
