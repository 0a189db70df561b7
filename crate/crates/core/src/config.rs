//! Scenario configuration (TOML). Every field has a default, so an empty
//! file is a complete configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::comb::{PhaseMatchingSpec, SqueezingParams};
use crate::error::{Error, Result};
use crate::gaussian_state::PixelWeighting;
use crate::measurement::SamplingParams;
use crate::reconstruction::{BootstrapMode, BootstrapSettings, ModeOrdering};

/// Effective averaging number `ν` of the default estimator model. With 1000
/// points per interval it puts the bootstrap spread of the off-diagonal
/// eigenbasis elements near 0.03 for the default scenario (the spread
/// scales as `1/√ν`; 0.0101 was measured at `ν = 40`).
pub const CALIBRATED_EFFECTIVE_AVERAGES: f64 = 4.5;

/// Gaussian phase-matching width (Hz) for which supermode 0 is 8.3 times
/// broader (intensity FWHM) than a 120 fs transform-limited seed, given a
/// 120 fs pump: `2·(8.3·Δν)²/Δν` with `Δν = 0.441/120 fs`.
pub const CALIBRATED_PHASE_MATCHING_WIDTH_HZ: f64 = 5.063_415e14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub grid: GridConfig,
    pub pump: PumpConfig,
    pub phase_matching: PhaseMatchingSpec,
    pub cavity: CavityConfig,
    pub detection: DetectionConfig,
    pub mean_field: MeanFieldConfig,
    pub partition: PartitionConfig,
    pub sampling: SamplingConfig,
    pub bootstrap: BootstrapConfig,
    pub report: ReportConfig,
    pub output_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            pump: PumpConfig::default(),
            phase_matching: PhaseMatchingSpec::Gaussian {
                width_hz: CALIBRATED_PHASE_MATCHING_WIDTH_HZ,
            },
            cavity: CavityConfig::default(),
            detection: DetectionConfig::default(),
            mean_field: MeanFieldConfig::default(),
            partition: PartitionConfig::default(),
            sampling: SamplingConfig::default(),
            bootstrap: BootstrapConfig::default(),
            report: ReportConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub center_wavelength_nm: f64,
    /// Laser repetition rate (Hz).
    pub repetition_rate_hz: f64,
    /// Physical comb teeth merged into one simulated tooth; the simulated
    /// spacing is `teeth_per_bin · repetition_rate_hz`.
    pub teeth_per_bin: u32,
    pub tooth_count: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            center_wavelength_nm: 795.0,
            repetition_rate_hz: 76e6,
            teeth_per_bin: 2400,
            tooth_count: 1001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PumpConfig {
    pub pulse_fwhm_fs: f64,
    pub center_offset_hz: f64,
    /// Normalized pump amplitude of supermode 0, in `[0, 1)`.
    pub pump_ratio: f64,
}

impl Default for PumpConfig {
    fn default() -> Self {
        Self {
            pulse_fwhm_fs: 120.0,
            center_offset_hz: 0.0,
            pump_ratio: 0.12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CavityConfig {
    pub escape_efficiency: f64,
    pub analysis_frequency_hz: f64,
    /// Cavity half-width at half maximum (Hz).
    pub bandwidth_hz: f64,
    /// Number of supermodes carrying squeezing; the rest of the comb is vacuum.
    pub supermodes: usize,
    /// Classical excess noise added to the amplitude variance of each supermode.
    pub excess_noise: Vec<f64>,
    /// Amplitude-quadrature variances per supermode, replacing the
    /// below-threshold formula when set.
    pub amplitude_variances: Option<Vec<f64>>,
}

impl Default for CavityConfig {
    fn default() -> Self {
        Self {
            escape_efficiency: 0.9,
            analysis_frequency_hz: 1.5e6,
            bandwidth_hz: 2.5e6,
            supermodes: 3,
            excess_noise: Vec::new(),
            amplitude_variances: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    pub efficiency: f64,
    pub pixel_weighting: PixelWeighting,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            efficiency: 0.9,
            pixel_weighting: PixelWeighting::MeanField,
        }
    }
}

/// Spectral profile of the classical mean field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanFieldProfile {
    /// Gaussian whose intensity FWHM is `width_ratio` times that of supermode 0.
    Gaussian,
    /// Transform-limited seed pulse of duration `seed_pulse_fwhm_fs`.
    Seed,
    /// The supermode-0 profile itself.
    Supermode0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanFieldConfig {
    pub profile: MeanFieldProfile,
    pub width_ratio: f64,
    /// Seed pulse duration; sets the `seed` profile and the reported
    /// supermode-0 to seed width ratio.
    pub seed_pulse_fwhm_fs: f64,
    /// Total photon number per sample window.
    pub total_flux: f64,
}

impl Default for MeanFieldConfig {
    fn default() -> Self {
        Self {
            profile: MeanFieldProfile::Gaussian,
            width_ratio: 1.0,
            seed_pulse_fwhm_fs: 120.0,
            total_flux: 1.0e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionConfig {
    pub pixels: usize,
    pub resolution_nm: f64,
    /// Allowed deviation of each pixel's power share from `1/pixels`
    /// (absolute fraction of the total).
    pub power_tolerance: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            pixels: 4,
            resolution_nm: 1.8,
            power_tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub points_per_interval: usize,
    /// `ν`; `inf` disables estimator noise.
    pub effective_averages: f64,
    pub dark_noise_offset: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            points_per_interval: 1000,
            effective_averages: CALIBRATED_EFFECTIVE_AVERAGES,
            dark_noise_offset: 0.0,
            seed: 1,
        }
    }
}

impl SamplingConfig {
    pub fn params(&self) -> SamplingParams {
        SamplingParams {
            points_per_interval: self.points_per_interval,
            effective_averages: self.effective_averages,
            dark_noise_offset: self.dark_noise_offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
    pub mode: BootstrapMode,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 10_000,
            seed: 2,
            mode: BootstrapMode::PerPoint,
        }
    }
}

impl BootstrapConfig {
    pub fn settings(&self) -> BootstrapSettings {
        BootstrapSettings {
            resamples: self.resamples,
            seed: self.seed,
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    pub ordering: ModeOrdering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    /// Unknown keys are an error.
    #[default]
    Strict,
    /// Unknown keys are logged and ignored.
    Lenient,
}

fn field_error(field: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {reason}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field_error(field, format!("must be positive, got {v}")))
    }
}

fn unit_interval(field: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(field_error(field, format!("must be in [0, 1], got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        positive("grid.center_wavelength_nm", self.grid.center_wavelength_nm)?;
        positive("grid.repetition_rate_hz", self.grid.repetition_rate_hz)?;
        if self.grid.teeth_per_bin == 0 {
            return Err(field_error("grid.teeth_per_bin", "must be at least 1"));
        }
        if self.grid.tooth_count < 3 || self.grid.tooth_count.is_multiple_of(2) {
            return Err(field_error(
                "grid.tooth_count",
                format!("must be odd and at least 3, got {}", self.grid.tooth_count),
            ));
        }
        positive("pump.pulse_fwhm_fs", self.pump.pulse_fwhm_fs)?;
        if !self.pump.center_offset_hz.is_finite() {
            return Err(field_error("pump.center_offset_hz", "must be finite"));
        }
        if !(self.pump.pump_ratio >= 0.0 && self.pump.pump_ratio < 1.0) {
            return Err(field_error(
                "pump.pump_ratio",
                format!("must be in [0, 1), got {}", self.pump.pump_ratio),
            ));
        }
        self.phase_matching
            .validate()
            .map_err(|e| field_error("phase_matching", e))?;
        if !(self.cavity.escape_efficiency > 0.0 && self.cavity.escape_efficiency <= 1.0) {
            return Err(field_error(
                "cavity.escape_efficiency",
                format!("must be in (0, 1], got {}", self.cavity.escape_efficiency),
            ));
        }
        if !(self.cavity.analysis_frequency_hz.is_finite()
            && self.cavity.analysis_frequency_hz >= 0.0)
        {
            return Err(field_error(
                "cavity.analysis_frequency_hz",
                "must be non-negative",
            ));
        }
        positive("cavity.bandwidth_hz", self.cavity.bandwidth_hz)?;
        if self.cavity.supermodes == 0 || self.cavity.supermodes > self.grid.tooth_count {
            return Err(field_error(
                "cavity.supermodes",
                format!(
                    "must be in 1..={}, got {}",
                    self.grid.tooth_count, self.cavity.supermodes
                ),
            ));
        }
        if self.cavity.excess_noise.len() > self.cavity.supermodes {
            return Err(field_error(
                "cavity.excess_noise",
                "more entries than supermodes",
            ));
        }
        if self
            .cavity
            .excess_noise
            .iter()
            .any(|e| !(e.is_finite() && *e >= 0.0))
        {
            return Err(field_error(
                "cavity.excess_noise",
                "entries must be non-negative",
            ));
        }
        if let Some(vars) = &self.cavity.amplitude_variances {
            if vars.len() != self.cavity.supermodes {
                return Err(field_error(
                    "cavity.amplitude_variances",
                    format!(
                        "{} entries for {} supermodes",
                        vars.len(),
                        self.cavity.supermodes
                    ),
                ));
            }
            for (k, &s) in vars.iter().enumerate() {
                let ok = s.is_finite() && s > 0.0 && if k % 2 == 0 { s <= 1.0 } else { s >= 1.0 };
                if !ok {
                    return Err(field_error(
                        "cavity.amplitude_variances",
                        format!("entry {k} = {s}: even modes need (0, 1], odd modes >= 1"),
                    ));
                }
            }
        }
        unit_interval("detection.efficiency", self.detection.efficiency)?;
        positive("mean_field.width_ratio", self.mean_field.width_ratio)?;
        positive(
            "mean_field.seed_pulse_fwhm_fs",
            self.mean_field.seed_pulse_fwhm_fs,
        )?;
        positive("mean_field.total_flux", self.mean_field.total_flux)?;
        if self.partition.pixels == 0 || self.partition.pixels > self.grid.tooth_count {
            return Err(field_error(
                "partition.pixels",
                "must be between 1 and the tooth count",
            ));
        }
        if !(self.partition.resolution_nm.is_finite() && self.partition.resolution_nm >= 0.0) {
            return Err(field_error(
                "partition.resolution_nm",
                "must be non-negative",
            ));
        }
        unit_interval("partition.power_tolerance", self.partition.power_tolerance)?;
        if self.sampling.points_per_interval < 2 {
            return Err(field_error(
                "sampling.points_per_interval",
                "must be at least 2",
            ));
        }
        if !(self.sampling.effective_averages > 0.0) {
            return Err(field_error(
                "sampling.effective_averages",
                "must be positive or inf",
            ));
        }
        if !(self.sampling.dark_noise_offset.is_finite() && self.sampling.dark_noise_offset >= 0.0)
        {
            return Err(field_error(
                "sampling.dark_noise_offset",
                "must be non-negative",
            ));
        }
        if self.bootstrap.resamples < crate::reconstruction::MIN_RESAMPLES {
            return Err(field_error(
                "bootstrap.resamples",
                format!("must be at least {}", crate::reconstruction::MIN_RESAMPLES),
            ));
        }
        Ok(())
    }

    pub fn squeezing(&self) -> SqueezingParams {
        SqueezingParams {
            pump_ratio: self.pump.pump_ratio,
            escape_efficiency: self.cavity.escape_efficiency,
            analysis_frequency: self.cavity.analysis_frequency_hz,
            cavity_bandwidth: self.cavity.bandwidth_hz,
        }
    }

    /// Parse TOML text, apply defaults and validate.
    pub fn from_toml_str(text: &str, strictness: Strictness) -> Result<Self> {
        let mut ignored = Vec::new();
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let config: ScenarioConfig =
            serde_ignored::deserialize(de, |path| ignored.push(path.to_string()))
                .map_err(|e| Error::Config(e.to_string()))?;
        if !ignored.is_empty() {
            match strictness {
                Strictness::Strict => {
                    return Err(Error::Config(format!(
                        "unknown keys: {}",
                        ignored.join(", ")
                    )));
                }
                Strictness::Lenient => {
                    for key in &ignored {
                        log::warn!("ignoring unknown configuration key `{key}`");
                    }
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }
}

/// Read, validate and default-fill a scenario file. Unknown keys are rejected.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    load_config_with(path, Strictness::Strict)
}

pub fn load_config_with(path: &Path, strictness: Strictness) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(format!("configuration file {}", path.display()))
        } else {
            Error::io(path, e)
        }
    })?;
    ScenarioConfig::from_toml_str(&text, strictness).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}
