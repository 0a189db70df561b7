//! Stage orchestration: design → simulate → reconstruct → bootstrap. Each
//! stage reads its inputs from the previous stage's files when run alone.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comb::{
    build_grid, coupling_matrix, decompose_supermodes, gaussian_kernel_rates,
    gaussian_pump_spectrum, gaussian_spectrum, mehler_parameters, squeezing_values,
    transform_limited_bandwidth, PhaseMatchingSpec, SpectralAmplitude, SpectralAxis, SpectrumLabel,
    SupermodeSet,
};
use crate::config::{MeanFieldProfile, ScenarioConfig};
use crate::error::{Error, Result};
use crate::gaussian_state::{
    add_excess_noise, apply_loss, assemble_x_covariance, photon_covariance_forward, pixel_reduce,
    MeanField, QuadratureCovariance,
};
use crate::io::{self, PartitionFile, SCHEMA_VERSION};
use crate::measurement::{
    partition_equal_power, simulate_records, MeasurementRecord, PixelPartition,
};
use crate::reconstruction::{
    bootstrap, correlation_matrix, eigen_analysis, noise_reduction_db, quadrature_covariance,
    solve_photon_covariance, EigenmodeReport, PhotonCovariance,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const SUPERMODES_FILE: &str = "supermodes.csv";
pub const DESIGN_FILE: &str = "design.json";
pub const PARTITION_FILE: &str = "partition.json";
pub const COVARIANCE_FILE: &str = "covariance.csv";
pub const RECORDS_FILE: &str = "records.csv";
pub const REPORT_FILE: &str = "report.json";
pub const EIGENMODES_FILE: &str = "eigenmodes.csv";
pub const PROFILES_FILE: &str = "profiles.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Design,
    Simulate,
    Reconstruct,
    Bootstrap,
}

impl Stage {
    pub const ALL: [Stage; 4] = [
        Stage::Design,
        Stage::Simulate,
        Stage::Reconstruct,
        Stage::Bootstrap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Design => "design",
            Stage::Simulate => "simulate",
            Stage::Reconstruct => "reconstruct",
            Stage::Bootstrap => "bootstrap",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown stage `{s}` (expected design, simulate, reconstruct or bootstrap)"
                ))
            })
    }
}

/// Parse a comma-separated stage list.
pub fn parse_stages(list: &str) -> Result<Vec<Stage>> {
    let mut stages: Vec<Stage> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if stages.is_empty() {
        return Err(Error::Config("empty stage list".into()));
    }
    stages.sort();
    stages.dedup();
    Ok(stages)
}

/// Analytic expectation for a jointly Gaussian coupling kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteGaussianPrediction {
    /// Mode 0 is `exp(-(ℓ/width)²/2)` in tooth units.
    pub width_teeth: f64,
    /// `Λ_{k+1}/Λ_k`.
    pub eigenvalue_ratio: f64,
    pub mode0_fwhm_hz: f64,
}

/// Contents of `design.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub schema: String,
    pub version: u64,
    pub center_wavelength_nm: f64,
    pub tooth_spacing_hz: f64,
    pub tooth_count: usize,
    pub pump_bandwidth_hz: f64,
    pub phase_matching: PhaseMatchingSpec,
    pub coupling_eigenvalues: Vec<f64>,
    pub amplitude_variances: Vec<f64>,
    pub squeezed_variances: Vec<f64>,
    pub antisqueezed_variances: Vec<f64>,
    pub mode_fwhm_hz: Vec<Option<f64>>,
    pub seed_bandwidth_hz: f64,
    /// Supermode-0 intensity FWHM divided by the seed's.
    pub supermode0_to_seed_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hermite_gaussian: Option<HermiteGaussianPrediction>,
}

/// Build the comb, diagonalize the coupling and assign squeezing.
pub fn design(config: &ScenarioConfig) -> Result<(SupermodeSet, DesignSummary)> {
    config.validate()?;
    let g = &config.grid;
    let grid = build_grid(
        g.center_wavelength_nm * 1e-9,
        g.repetition_rate_hz * g.teeth_per_bin as f64,
        g.tooth_count,
    )?;
    let pump = gaussian_pump_spectrum(
        &grid,
        config.pump.pulse_fwhm_fs * 1e-15,
        config.pump.center_offset_hz,
    )?;
    if pump.is_undersampled() {
        log::warn!("pump bandwidth is narrower than the tooth spacing");
    }
    let coupling = coupling_matrix(&grid, &pump, &config.phase_matching)?;
    let modes = decompose_supermodes(&coupling, config.cavity.supermodes)?;
    let modes = match &config.cavity.amplitude_variances {
        Some(vars) => modes.with_amplitude_variances(vars.clone())?,
        None => squeezing_values(&modes, &config.squeezing())?,
    };

    let pump_bandwidth = transform_limited_bandwidth(config.pump.pulse_fwhm_fs * 1e-15);
    let seed_bandwidth = transform_limited_bandwidth(config.mean_field.seed_pulse_fwhm_fs * 1e-15);
    let mode_fwhm: Vec<Option<f64>> = (0..modes.len()).map(|k| modes.mode_fwhm_hz(k)).collect();
    let hermite_gaussian = match config.phase_matching {
        PhaseMatchingSpec::Gaussian { width_hz } if config.pump.center_offset_hz == 0.0 => {
            let (a, b) = gaussian_kernel_rates(&grid, pump_bandwidth, width_hz);
            let (width, ratio) = mehler_parameters(a, b);
            Some(HermiteGaussianPrediction {
                width_teeth: width,
                eigenvalue_ratio: ratio,
                mode0_fwhm_hz: (pump_bandwidth * width_hz / 2.0).sqrt(),
            })
        }
        _ => None,
    };
    let summary = DesignSummary {
        schema: "spopo-design".into(),
        version: SCHEMA_VERSION,
        center_wavelength_nm: grid.center_wavelength() * 1e9,
        tooth_spacing_hz: grid.spacing_hz(),
        tooth_count: grid.tooth_count(),
        pump_bandwidth_hz: pump_bandwidth,
        phase_matching: config.phase_matching,
        coupling_eigenvalues: modes.coupling_eigenvalues().to_vec(),
        amplitude_variances: modes.amplitude_variances().to_vec(),
        squeezed_variances: modes.squeezed_variances().to_vec(),
        antisqueezed_variances: modes.antisqueezed_variances().to_vec(),
        supermode0_to_seed_ratio: mode_fwhm[0].map(|w| w / seed_bandwidth),
        mode_fwhm_hz: mode_fwhm,
        seed_bandwidth_hz: seed_bandwidth,
        hermite_gaussian,
    };
    Ok((modes, summary))
}

/// Tooth-basis mean field and the spectrum used to place the pixel boundaries.
pub fn mean_field_spectrum(
    config: &ScenarioConfig,
    modes: &SupermodeSet,
) -> Result<SpectralAmplitude> {
    let grid = modes.grid();
    match config.mean_field.profile {
        MeanFieldProfile::Gaussian => {
            let fwhm0 = modes.mode_fwhm_hz(0).ok_or_else(|| {
                Error::Numerical("supermode 0 has no measurable FWHM on this grid".into())
            })?;
            gaussian_spectrum(
                grid,
                SpectralAxis::Signal,
                config.mean_field.width_ratio * fwhm0,
                0.0,
                Some(SpectrumLabel::MeanField),
            )
        }
        MeanFieldProfile::Seed => gaussian_spectrum(
            grid,
            SpectralAxis::Signal,
            transform_limited_bandwidth(config.mean_field.seed_pulse_fwhm_fs * 1e-15),
            0.0,
            Some(SpectrumLabel::Seed),
        ),
        MeanFieldProfile::Supermode0 => SpectralAmplitude::new(
            *grid,
            SpectralAxis::Signal,
            modes.mode(0).iter().map(|a| a.abs()).collect(),
            Some(SpectrumLabel::MeanField),
        )?
        .normalize(),
    }
}

/// Forward model output for one scenario.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub mean_field: MeanField,
    pub partition: PixelPartition,
    pub pixel_covariance: QuadratureCovariance,
    pub pixel_mean: MeanField,
    pub photons: PhotonCovariance,
}

/// Covariance assembly, losses, pixel partition and reduction. Sampling is
/// separate (`simulate_records`) so one forward model can feed many seeds.
pub fn forward_model(config: &ScenarioConfig, modes: &SupermodeSet) -> Result<Simulation> {
    config.validate()?;
    let spectrum = mean_field_spectrum(config, modes)?;
    let mean_field = MeanField::from_spectrum(&spectrum, config.mean_field.total_flux)?;
    let v = assemble_x_covariance(modes)?;
    let v = add_excess_noise(&v, modes, &config.cavity.excess_noise)?;
    let v = apply_loss(&v, config.detection.efficiency)?;
    let partition = partition_equal_power(
        &spectrum,
        config.partition.pixels,
        config.partition.resolution_nm * 1e-9,
        config.partition.power_tolerance,
    )
    .map_err(|e| Error::Config(format!("partition: {e}")))?;
    let (pixel_covariance, pixel_mean) = pixel_reduce(
        &v,
        &mean_field,
        &partition,
        config.detection.pixel_weighting,
    )?;
    let photons = photon_covariance_forward(&pixel_covariance, &pixel_mean)?;
    Ok(Simulation {
        mean_field,
        partition,
        pixel_covariance,
        pixel_mean,
        photons,
    })
}

pub fn simulate(config: &ScenarioConfig, sim: &Simulation) -> Result<Vec<MeasurementRecord>> {
    simulate_records(
        &sim.photons,
        &config.sampling.params(),
        config.sampling.seed,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub id: String,
    pub points: usize,
    pub noise_mean: f64,
    pub shot_mean: f64,
    pub nin: f64,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema: String,
    pub version: u64,
    pub pixels: usize,
    pub intervals: Vec<IntervalSummary>,
    pub mean_photons: Vec<f64>,
    pub photon_covariance: Vec<Vec<f64>>,
    /// `C(i, j)`.
    pub correlation: Vec<Vec<f64>>,
    /// `V(i, j)` in the pixel basis.
    pub quadrature_covariance: Vec<Vec<f64>>,
    pub full_beam_nin: f64,
    pub full_beam_noise_reduction_db: f64,
    pub eigenmodes: EigenmodeReport,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Number of pixels implied by a complete interval set.
pub fn pixel_count(records: &[MeasurementRecord]) -> Result<usize> {
    let m = records
        .iter()
        .map(|r| r.interval().last() + 1)
        .max()
        .ok_or_else(|| Error::MissingInput("no measurement records".into()))?;
    Ok(m)
}

/// Point estimate: interval means → photon covariance → C, V → eigenmodes.
pub fn reconstruct(
    config: &ScenarioConfig,
    records: &[MeasurementRecord],
) -> Result<AnalysisReport> {
    let pixels = pixel_count(records)?;
    let photons = solve_photon_covariance(records, pixels)?;
    let v = quadrature_covariance(&photons)?;
    let c = correlation_matrix(&photons);
    let eigenmodes = eigen_analysis(&v, &photons.mean_field()?, config.report.ordering)?;
    let intervals = crate::reconstruction::arrange_records(records, pixels)?
        .into_iter()
        .map(|r| {
            let means = r.means();
            IntervalSummary {
                id: r.interval().to_string(),
                points: r.sample_count(),
                noise_mean: means.noise,
                shot_mean: means.shot,
                nin: means.normalized_noise(),
            }
        })
        .collect();
    let full = photons.full_beam_nin();
    Ok(AnalysisReport {
        schema: "spopo-report".into(),
        version: SCHEMA_VERSION,
        pixels,
        intervals,
        mean_photons: photons.mean_photons().to_vec(),
        photon_covariance: rows(photons.covariance()),
        correlation: rows(c.matrix()),
        quadrature_covariance: rows(v.matrix()),
        full_beam_nin: full,
        full_beam_noise_reduction_db: if full > 0.0 {
            noise_reduction_db(full)?
        } else {
            f64::NAN
        },
        eigenmodes,
    })
}

/// Attach bootstrap intervals and verdicts to a point estimate.
pub fn add_bootstrap(
    config: &ScenarioConfig,
    records: &[MeasurementRecord],
    mut report: AnalysisReport,
) -> Result<AnalysisReport> {
    report.eigenmodes = bootstrap(
        records,
        report.pixels,
        &report.eigenmodes,
        &config.bootstrap.settings(),
    )?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Contents of `manifest.json`, the only artifact carrying a timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub version: u64,
    pub tool_version: String,
    pub created_unix_s: u64,
    pub stages: Vec<Stage>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn artifact(&self, file: &str) -> Option<&ArtifactEntry> {
        self.artifacts.iter().find(|a| a.file == file)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub manifest: Manifest,
    /// Present when a reconstruct or bootstrap stage ran.
    pub report: Option<AnalysisReport>,
}

/// Where stages read their inputs when an earlier stage is not part of the run.
#[derive(Debug, Clone, Default)]
pub struct PipelineInputs {
    /// Records to reconstruct instead of `<out>/records.csv`.
    pub records: Option<PathBuf>,
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Writer<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) {
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
    }
}

/// Run `stages` (in pipeline order) writing artifacts into `out_dir`, then
/// write `manifest.json` listing each artifact with its SHA-256.
pub fn run_pipeline(
    config: &ScenarioConfig,
    stages: &[Stage],
    out_dir: &Path,
    inputs: &PipelineInputs,
) -> Result<PipelineOutcome> {
    config.validate()?;
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    if stages.is_empty() {
        return Err(Error::Config("no stages selected".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut w = Writer {
        dir: out_dir,
        written: Vec::new(),
    };
    let has = |s: Stage| stages.contains(&s);

    io::write_bytes(&w.path(CONFIG_FILE), config.to_toml_string()?.as_bytes())?;
    w.record(CONFIG_FILE);

    let mut modes = None;
    if has(Stage::Design) {
        log::info!(
            "design: {} teeth, {} supermodes",
            config.grid.tooth_count,
            config.cavity.supermodes
        );
        let (set, summary) = design(config)?;
        io::write_supermodes_csv(&w.path(SUPERMODES_FILE), &set)?;
        w.record(SUPERMODES_FILE);
        io::write_json(&w.path(DESIGN_FILE), &summary)?;
        w.record(DESIGN_FILE);
        modes = Some(set);
    }

    let mut records = None;
    let mut final_report = None;
    if has(Stage::Simulate) {
        let set = match modes.take() {
            Some(set) => set,
            None => io::read_supermodes_csv(&w.path(SUPERMODES_FILE))?,
        };
        log::info!(
            "simulate: {} pixels, {} points per interval",
            config.partition.pixels,
            config.sampling.points_per_interval
        );
        let sim = forward_model(config, &set)?;
        let recs = simulate(config, &sim)?;
        io::write_covariance_csv(
            &w.path(COVARIANCE_FILE),
            &sim.pixel_covariance,
            &sim.pixel_mean,
        )?;
        w.record(COVARIANCE_FILE);
        let partition = PartitionFile::new(
            &sim.partition,
            &sim.mean_field,
            config.detection.pixel_weighting,
        )?;
        io::write_json(&w.path(PARTITION_FILE), &partition)?;
        w.record(PARTITION_FILE);
        io::write_records_csv(&w.path(RECORDS_FILE), &recs)?;
        w.record(RECORDS_FILE);
        records = Some(recs);
    }

    if has(Stage::Reconstruct) || has(Stage::Bootstrap) {
        let recs = match records.take() {
            Some(recs) => recs,
            None => {
                let path = inputs
                    .records
                    .clone()
                    .unwrap_or_else(|| w.path(RECORDS_FILE));
                io::read_records_csv(&path)?
            }
        };
        log::info!("reconstruct: {} intervals", recs.len());
        let mut report = reconstruct(config, &recs)?;
        if has(Stage::Bootstrap) {
            log::info!("bootstrap: {} resamples", config.bootstrap.resamples);
            report = add_bootstrap(config, &recs, report)?;
        }
        io::write_json(&w.path(REPORT_FILE), &report)?;
        w.record(REPORT_FILE);

        let partition_path = w.path(PARTITION_FILE);
        let partition = if inputs.records.is_none() && partition_path.exists() {
            Some(io::read_partition_json(&partition_path)?)
                .filter(|p| p.ranges.len() == report.pixels)
        } else {
            None
        };
        io::write_eigenmodes_csv(
            &w.path(EIGENMODES_FILE),
            &report.eigenmodes,
            partition
                .as_ref()
                .map(|p| p.pixel_wavelengths_nm.as_slice()),
        )?;
        w.record(EIGENMODES_FILE);
        if let Some(p) = &partition {
            io::write_profiles_csv(&w.path(PROFILES_FILE), &report.eigenmodes, p)?;
            w.record(PROFILES_FILE);
        }
        final_report = Some(report);
    }

    let artifacts = w
        .written
        .iter()
        .map(|name| {
            let path = w.path(name);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            Ok(ArtifactEntry {
                file: name.clone(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        schema: "spopo-manifest".into(),
        version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        created_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        stages,
        artifacts,
    };
    io::write_json(&w.path(MANIFEST_FILE), &manifest)?;
    Ok(PipelineOutcome {
        manifest,
        report: final_report,
    })
}
