//! Experiment configuration.
//!
//! The file is TOML restricted to flat `key = value` pairs under
//! `[section]` headers (or the equivalent `section.key = value` form).
//! Unknown sections or keys are rejected, and every error reports the line
//! it refers to.
//!
//! ```toml
//! seed = 7
//!
//! [source]
//! model = "pump"
//! pump_waist_x = 356e-6
//!
//! [grid]
//! n = 64
//!
//! [sampler]
//! alpha = 0.002
//! iterative_passes = 20
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{CountingNoise, DetectorConfig, EfficiencyModel, DEFAULT_SINGLES_RATE};
use crate::sampler::{IterativeStop, SamplerParams};
use crate::source::{Component, ComponentGrids, GridSpec, SourceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SubtractMode {
    On,
    Off,
    Both,
}

impl SubtractMode {
    /// Subtraction flags to evaluate, raw first.
    pub fn flags(self) -> &'static [bool] {
        match self {
            SubtractMode::On => &[true],
            SubtractMode::Off => &[false],
            SubtractMode::Both => &[false, true],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyChoice {
    Propagation,
    MonteCarlo,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// Pure state from pump waist and crystal parameters.
    Pump,
    /// Pure state from the four position widths.
    Pure,
    /// All eight widths given explicitly.
    Widths,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub model: SourceKind,
    pub total_rate: f64,
    pub pump_waist_x: f64,
    pub pump_waist_y: f64,
    pub crystal_length: f64,
    pub pump_wavelength: f64,
    pub pump_index: f64,
    pub sigma_sum_x: Option<f64>,
    pub sigma_diff_x: Option<f64>,
    pub sigma_sum_y: Option<f64>,
    pub sigma_diff_y: Option<f64>,
    pub k_sigma_sum_x: Option<f64>,
    pub k_sigma_diff_x: Option<f64>,
    pub k_sigma_sum_y: Option<f64>,
    pub k_sigma_diff_y: Option<f64>,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            model: SourceKind::Pump,
            total_rate: 26_400.0,
            pump_waist_x: 356e-6,
            pump_waist_y: 334e-6,
            crystal_length: 3e-3,
            pump_wavelength: 405e-9,
            pump_index: 1.87,
            sigma_sum_x: None,
            sigma_diff_x: None,
            sigma_sum_y: None,
            sigma_diff_y: None,
            k_sigma_sum_x: None,
            k_sigma_diff_x: None,
            k_sigma_sum_y: None,
            k_sigma_diff_y: None,
        }
    }
}

/// Grid resolution and optional full extents (m for position, rad/m for
/// momentum). Missing extents default to eight times the broad width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub position_extent_x: Option<f64>,
    pub position_extent_y: Option<f64>,
    pub momentum_extent_x: Option<f64>,
    pub momentum_extent_y: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n: 512,
            position_extent_x: None,
            position_extent_y: None,
            momentum_extent_x: None,
            momentum_extent_y: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub acquisition_time: f64,
    pub coincidence_window: f64,
    pub accidental_offset: f64,
    pub singles_rate_a: f64,
    pub singles_rate_b: f64,
    pub efficiency_model: EfficiencyModel,
    pub noise: CountingNoise,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorConfig::default();
        Self {
            acquisition_time: d.acquisition_time,
            coincidence_window: d.coincidence_window,
            accidental_offset: d.accidental_offset,
            singles_rate_a: DEFAULT_SINGLES_RATE,
            singles_rate_b: DEFAULT_SINGLES_RATE,
            efficiency_model: d.efficiency_model,
            noise: d.noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub max_depth: Option<u32>,
    pub max_partition_passes: usize,
    pub total_duration: f64,
    pub include_total_uncertainty: bool,
    /// Uniform passes in the iterative phase. Ignored when
    /// `model_time_budget` is set.
    pub iterative_passes: usize,
    /// Per-tree model-time budget in seconds.
    pub model_time_budget: Option<f64>,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let p = SamplerParams::default();
        Self {
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma_frac,
            max_depth: p.max_depth,
            max_partition_passes: p.max_partition_passes,
            total_duration: p.total_duration,
            include_total_uncertainty: p.include_total_uncertainty,
            iterative_passes: 20,
            model_time_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub subtract: SubtractMode,
    pub uncertainty: UncertaintyChoice,
    pub mc_trials: usize,
    /// Also compute the exact-discretization witness.
    pub oracle: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            subtract: SubtractMode::Both,
            uncertainty: UncertaintyChoice::Both,
            mc_trials: 100,
            oracle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Records per leaf at each `sweep-time` checkpoint.
    pub checkpoints: Vec<usize>,
    /// Maximum resolutions for `sweep-resolution`.
    pub resolutions: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            checkpoints: vec![1, 2, 4, 8, 16, 32, 64],
            resolutions: vec![16, 32, 64, 128, 256, 512],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed for every random stream.
    pub seed: u64,
    pub source: SourceSection,
    pub grid: GridSection,
    pub detector: DetectorSection,
    pub sampler: SamplerSection,
    pub analysis: AnalysisSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: DetectorConfig::default().rng_seed,
            source: SourceSection::default(),
            grid: GridSection::default(),
            detector: DetectorSection::default(),
            sampler: SamplerSection::default(),
            analysis: AnalysisSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// A validation failure tied to a config key.
struct Invalid {
    section: &'static str,
    key: &'static str,
    message: String,
}

fn invalid(section: &'static str, key: &'static str, message: impl Into<String>) -> Invalid {
    Invalid {
        section,
        key,
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.check().map_err(|inv| Error::Config {
            line: locate_key(text, inv.section, inv.key),
            message: if inv.section.is_empty() {
                format!("{}: {}", inv.key, inv.message)
            } else {
                format!("{}.{}: {}", inv.section, inv.key, inv.message)
            },
        })?;
        Ok(cfg)
    }

    /// Runs every module's precondition check.
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|inv| Error::Config {
            line: None,
            message: format!("{}.{}: {}", inv.section, inv.key, inv.message),
        })
    }

    fn check(&self) -> std::result::Result<(), Invalid> {
        let s = &self.sampler;
        if !(0.0..=1.0).contains(&s.alpha) {
            return Err(invalid("sampler", "alpha", format!("must lie in [0, 1], got {}", s.alpha)));
        }
        if !(s.beta.is_finite() && s.beta > 0.0) {
            return Err(invalid("sampler", "beta", "must be positive"));
        }
        if !(s.gamma > 0.0 && s.gamma <= 1.0) {
            return Err(invalid("sampler", "gamma", "must lie in (0, 1]"));
        }
        if !(s.total_duration.is_finite() && s.total_duration > 0.0) {
            return Err(invalid("sampler", "total_duration", "must be positive"));
        }
        if s.max_partition_passes == 0 {
            return Err(invalid("sampler", "max_partition_passes", "must be at least 1"));
        }
        if let Some(b) = s.model_time_budget {
            if !(b.is_finite() && b > 0.0) {
                return Err(invalid("sampler", "model_time_budget", "must be positive"));
            }
        }
        let n = self.grid.n;
        if n < 2 || !n.is_power_of_two() || n > 4096 {
            return Err(invalid("grid", "n", format!("must be a power of two in [2, 4096], got {n}")));
        }
        for (key, v) in [
            ("position_extent_x", self.grid.position_extent_x),
            ("position_extent_y", self.grid.position_extent_y),
            ("momentum_extent_x", self.grid.momentum_extent_x),
            ("momentum_extent_y", self.grid.momentum_extent_y),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid("grid", key, "must be positive"));
                }
            }
        }
        let d = &self.detector;
        for (key, v) in [
            ("acquisition_time", d.acquisition_time),
            ("coincidence_window", d.coincidence_window),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid("detector", key, "must be positive"));
            }
        }
        for (key, v) in [
            ("accidental_offset", d.accidental_offset),
            ("singles_rate_a", d.singles_rate_a),
            ("singles_rate_b", d.singles_rate_b),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid("detector", key, "must be non-negative"));
            }
        }
        let a = &self.analysis;
        if a.mc_trials < 2 && a.uncertainty != UncertaintyChoice::Propagation {
            return Err(invalid("analysis", "mc_trials", "must be at least 2"));
        }
        if self.sweep.checkpoints.is_empty() || self.sweep.checkpoints.contains(&0) {
            return Err(invalid("sweep", "checkpoints", "must be a non-empty list of positive counts"));
        }
        if self.sweep.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("sweep", "checkpoints", "must be strictly increasing"));
        }
        if self.sweep.resolutions.is_empty()
            || self
                .sweep
                .resolutions
                .iter()
                .any(|&r| r < 2 || !r.is_power_of_two() || r > 4096)
        {
            return Err(invalid("sweep", "resolutions", "must be powers of two in [2, 4096]"));
        }
        self.check_source()?;
        Ok(())
    }

    fn check_source(&self) -> std::result::Result<(), Invalid> {
        let s = &self.source;
        if !(s.total_rate.is_finite() && s.total_rate >= 0.0) {
            return Err(invalid("source", "total_rate", "must be non-negative"));
        }
        let need = |key: &'static str, v: Option<f64>| {
            v.ok_or_else(|| invalid("source", key, format!("required for model = {:?}", s.model)))
        };
        match s.model {
            SourceKind::Pump => {
                for (key, v) in [
                    ("pump_waist_x", s.pump_waist_x),
                    ("pump_waist_y", s.pump_waist_y),
                    ("crystal_length", s.crystal_length),
                    ("pump_wavelength", s.pump_wavelength),
                    ("pump_index", s.pump_index),
                ] {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(invalid("source", key, "must be positive"));
                    }
                }
            }
            SourceKind::Pure | SourceKind::Widths => {
                need("sigma_sum_x", s.sigma_sum_x)?;
                need("sigma_diff_x", s.sigma_diff_x)?;
                need("sigma_sum_y", s.sigma_sum_y)?;
                need("sigma_diff_y", s.sigma_diff_y)?;
                if s.model == SourceKind::Widths {
                    need("k_sigma_sum_x", s.k_sigma_sum_x)?;
                    need("k_sigma_diff_x", s.k_sigma_diff_x)?;
                    need("k_sigma_sum_y", s.k_sigma_sum_y)?;
                    need("k_sigma_diff_y", s.k_sigma_diff_y)?;
                }
            }
        }
        self.source_model()
            .map(|_| ())
            .map_err(|e| invalid("source", "model", e.to_string()))
    }

    pub fn source_model(&self) -> Result<SourceModel> {
        let s = &self.source;
        let get = |v: Option<f64>| v.unwrap_or(f64::NAN);
        match s.model {
            SourceKind::Pump => SourceModel::from_pump(
                s.pump_waist_x,
                s.pump_waist_y,
                s.crystal_length,
                s.pump_wavelength,
                s.pump_index,
                s.total_rate,
            ),
            SourceKind::Pure => SourceModel::pure_state(
                get(s.sigma_sum_x),
                get(s.sigma_diff_x),
                get(s.sigma_sum_y),
                get(s.sigma_diff_y),
                s.total_rate,
            ),
            SourceKind::Widths => SourceModel::new(
                get(s.sigma_sum_x),
                get(s.sigma_diff_x),
                get(s.sigma_sum_y),
                get(s.sigma_diff_y),
                get(s.k_sigma_sum_x),
                get(s.k_sigma_diff_x),
                get(s.k_sigma_sum_y),
                get(s.k_sigma_diff_y),
                s.total_rate,
            ),
        }
    }

    /// Grids at resolution `n` using the configured (or default) extents.
    pub fn grids(&self, source: &SourceModel, n: usize) -> Result<Vec<ComponentGrids>> {
        let g = &self.grid;
        source
            .default_grids(n)?
            .into_iter()
            .map(|d| {
                let (pe, ke) = match d.component {
                    Component::X => (g.position_extent_x, g.momentum_extent_x),
                    Component::Y => (g.position_extent_y, g.momentum_extent_y),
                };
                Ok(ComponentGrids {
                    component: d.component,
                    position: GridSpec::new(n, pe.unwrap_or(d.position.extent()))?,
                    momentum: GridSpec::new(n, ke.unwrap_or(d.momentum.extent()))?,
                })
            })
            .collect()
    }

    pub fn detector(&self) -> DetectorConfig {
        let d = &self.detector;
        DetectorConfig {
            acquisition_time: d.acquisition_time,
            coincidence_window: d.coincidence_window,
            accidental_offset: d.accidental_offset,
            singles_rate_a: d.singles_rate_a,
            singles_rate_b: d.singles_rate_b,
            efficiency_model: d.efficiency_model,
            noise: d.noise,
            rng_seed: self.seed,
        }
    }

    pub fn sampler_params(&self) -> SamplerParams {
        let s = &self.sampler;
        SamplerParams {
            alpha: s.alpha,
            beta: s.beta,
            gamma_frac: s.gamma,
            max_depth: s.max_depth,
            max_partition_passes: s.max_partition_passes,
            iterative: match s.model_time_budget {
                Some(b) => IterativeStop::ModelTime(b),
                None => IterativeStop::Passes(s.iterative_passes),
            },
            total_duration: s.total_duration,
            include_total_uncertainty: s.include_total_uncertainty,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]` (or of `section.key` / a top-level
/// `key` when `section` is empty).
fn locate_key(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        let lhs = lhs.trim();
        let full = if current.is_empty() {
            lhs.to_string()
        } else {
            format!("{current}.{lhs}")
        };
        let want = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        if full == want {
            return Some(i + 1);
        }
    }
    None
}
