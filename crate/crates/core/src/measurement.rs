//! Equal-power pixel partition, the contiguous measurement intervals, and
//! finite-sample variance records.

use std::f64::consts::LN_2;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::comb::{FrequencyGrid, SpectralAmplitude, SpectralAxis, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::reconstruction::PhotonCovariance;

/// Contiguous tooth ranges, one per pixel, covering the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelPartition {
    grid: FrequencyGrid,
    ranges: Vec<Range<usize>>,
    resolution: f64,
    power_fractions: Option<Vec<f64>>,
}

impl PixelPartition {
    /// Partition from explicit tooth-position ranges. `resolution` is the
    /// spectrometer resolution in meters.
    pub fn from_ranges(
        grid: FrequencyGrid,
        ranges: Vec<Range<usize>>,
        resolution: f64,
    ) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::invalid("pixel partition", "no pixels"));
        }
        if !(resolution.is_finite() && resolution >= 0.0) {
            return Err(Error::invalid(
                "resolution",
                format!("must be non-negative, got {resolution}"),
            ));
        }
        let mut cursor = 0;
        for (i, r) in ranges.iter().enumerate() {
            if r.start != cursor || r.end <= r.start {
                return Err(Error::invalid(
                    "pixel partition",
                    format!(
                        "pixel {} range {r:?} is empty or not contiguous with the previous pixel",
                        i + 1
                    ),
                ));
            }
            cursor = r.end;
        }
        if cursor != grid.tooth_count() {
            return Err(Error::invalid(
                "pixel partition",
                format!("ranges cover {cursor} of {} teeth", grid.tooth_count()),
            ));
        }
        Ok(Self {
            grid,
            ranges,
            resolution,
            power_fractions: None,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn pixel_count(&self) -> usize {
        self.ranges.len()
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Fraction of the raw spectral power in each pixel, when the partition
    /// was built from a spectrum.
    pub fn power_fractions(&self) -> Option<&[f64]> {
        self.power_fractions.as_deref()
    }

    /// Standard deviation, in teeth, of the Gaussian resolution kernel.
    pub fn resolution_sigma_teeth(&self) -> f64 {
        resolution_sigma_teeth(&self.grid, self.resolution)
    }
}

/// Standard deviation, in teeth, of a Gaussian with wavelength FWHM
/// `resolution` (m) at the grid center.
pub fn resolution_sigma_teeth(grid: &FrequencyGrid, resolution: f64) -> f64 {
    let lambda = grid.center_wavelength();
    let fwhm_hz = SPEED_OF_LIGHT * resolution / (lambda * lambda);
    fwhm_hz / (2.0 * (2.0 * LN_2).sqrt()) / grid.spacing_hz()
}

/// Convolve `values` with a unit-area Gaussian of standard deviation `sigma`
/// samples; zero outside the range.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    if sigma < 1e-3 {
        return values.to_vec();
    }
    let reach = (6.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let n = values.len() as i64;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (k, w) in (-reach..=reach).zip(&kernel) {
                let j = i - k;
                if (0..n).contains(&j) {
                    acc += w * values[j as usize];
                }
            }
            acc / total
        })
        .collect()
}

/// Split the grid into `pixels` contiguous ranges of equal power in the
/// resolution-smoothed spectrum. Each boundary snaps to the tooth edge that
/// minimizes the cumulative-power error (ties go to the lower edge).
///
/// The raw per-pixel power must equal `1/pixels` of the total within
/// `tolerance` (absolute fraction of the total power).
pub fn partition_equal_power(
    spectrum: &SpectralAmplitude,
    pixels: usize,
    resolution: f64,
    tolerance: f64,
) -> Result<PixelPartition> {
    if spectrum.axis() != SpectralAxis::Signal {
        return Err(Error::invalid(
            "pixel partition",
            "spectrum must be on the signal axis",
        ));
    }
    let grid = *spectrum.grid();
    let n = grid.tooth_count();
    if pixels == 0 || pixels > n {
        return Err(Error::invalid(
            "pixel count",
            format!("must be in 1..={n}, got {pixels}"),
        ));
    }
    let raw = spectrum.intensities();
    let raw_total: f64 = raw.iter().sum();
    if raw_total <= 0.0 {
        return Err(Error::invalid("pixel partition", "spectrum has zero power"));
    }
    let smoothed = gaussian_smooth(&raw, resolution_sigma_teeth(&grid, resolution));
    let total: f64 = smoothed.iter().sum();

    // cumulative[c] = power in teeth [0, c)
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for p in &smoothed {
        cumulative.push(cumulative.last().unwrap() + p);
    }

    let mut cuts = vec![0usize];
    for j in 1..pixels {
        let target = total * j as f64 / pixels as f64;
        let lower = cuts.last().unwrap() + 1;
        let upper = n - (pixels - j);
        let best = (lower..=upper)
            .min_by(|&a, &b| {
                (cumulative[a] - target)
                    .abs()
                    .total_cmp(&(cumulative[b] - target).abs())
            })
            .ok_or_else(|| {
                Error::invalid("pixel partition", "too few teeth for the pixel count")
            })?;
        cuts.push(best);
    }
    cuts.push(n);
    let ranges: Vec<Range<usize>> = cuts.windows(2).map(|w| w[0]..w[1]).collect();

    let fractions: Vec<f64> = ranges
        .iter()
        .map(|r| raw[r.clone()].iter().sum::<f64>() / raw_total)
        .collect();
    let share = 1.0 / pixels as f64;
    if let Some((i, f)) = fractions
        .iter()
        .enumerate()
        .find(|(_, f)| (*f - share).abs() > tolerance)
    {
        return Err(Error::invalid(
            "pixel partition",
            format!(
                "pixel {} holds {:.4} of the power, outside {share:.4} ± {tolerance}",
                i + 1,
                f
            ),
        ));
    }
    let mut partition = PixelPartition::from_ranges(grid, ranges, resolution)?;
    partition.power_fractions = Some(fractions);
    Ok(partition)
}

/// A contiguous run of pixels, stored 0-based and inclusive. Displays
/// 1-based: `"2"` for a single pixel, `"1-3"` for pixels 1 through 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    first: usize,
    last: usize,
}

impl Interval {
    pub fn new(first: usize, last: usize) -> Result<Self> {
        if last < first {
            return Err(Error::invalid(
                "interval",
                format!("last pixel {last} precedes first {first}"),
            ));
        }
        Ok(Self { first, last })
    }

    pub fn single(pixel: usize) -> Self {
        Self {
            first: pixel,
            last: pixel,
        }
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn last(&self) -> usize {
        self.last
    }

    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pixels(&self) -> Range<usize> {
        self.first..self.last + 1
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.first == self.last {
            write!(f, "{}", self.first + 1)
        } else {
            write!(f, "{}-{}", self.first + 1, self.last + 1)
        }
    }
}

impl FromStr for Interval {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| -> Result<usize> {
            match t.trim().parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(Error::invalid("interval id", format!("cannot parse {s:?}"))),
            }
        };
        match s.split_once('-') {
            None => Ok(Interval::single(parse(s)?)),
            Some((a, b)) => Interval::new(parse(a)?, parse(b)?),
        }
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All contiguous pixel runs: singletons first, then pairs, and so on up to
/// the full span; `M(M+1)/2` intervals.
pub fn enumerate_intervals(pixels: usize) -> Vec<Interval> {
    (1..=pixels)
        .flat_map(|len| {
            (0..=pixels - len).map(move |first| Interval {
                first,
                last: first + len - 1,
            })
        })
        .collect()
}

/// Expected photon-number variance of an interval and its shot-noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePair {
    pub noise: f64,
    pub shot: f64,
}

impl VariancePair {
    pub fn normalized_noise(&self) -> f64 {
        self.noise / self.shot
    }
}

/// `noise = Σ_{i,j ∈ I} cov(n_i, n_j)`, `shot = Σ_{i ∈ I} ⟨n_i⟩`.
pub fn interval_variance_expectation(
    photons: &PhotonCovariance,
    interval: Interval,
) -> Result<VariancePair> {
    if interval.last() >= photons.dimension() {
        return Err(Error::invalid(
            "interval",
            format!("{interval} exceeds {} pixels", photons.dimension()),
        ));
    }
    let cov = photons.covariance();
    let mut noise = 0.0;
    for i in interval.pixels() {
        for j in interval.pixels() {
            noise += cov[(i, j)];
        }
    }
    let shot = interval.pixels().map(|i| photons.mean_photons()[i]).sum();
    Ok(VariancePair { noise, shot })
}

/// Successive intensity-noise and shot-noise variance estimates for one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    interval: Interval,
    noise_samples: Vec<f64>,
    shot_samples: Vec<f64>,
}

impl MeasurementRecord {
    pub fn new(
        interval: Interval,
        noise_samples: Vec<f64>,
        shot_samples: Vec<f64>,
    ) -> Result<Self> {
        if noise_samples.len() != shot_samples.len() {
            return Err(Error::invalid(
                "measurement record",
                format!(
                    "interval {interval}: {} noise samples but {} shot samples",
                    noise_samples.len(),
                    shot_samples.len()
                ),
            ));
        }
        if noise_samples.is_empty() {
            return Err(Error::invalid(
                "measurement record",
                format!("interval {interval} has no samples"),
            ));
        }
        if noise_samples
            .iter()
            .chain(&shot_samples)
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::invalid(
                "measurement record",
                format!("interval {interval}: variance samples must be positive"),
            ));
        }
        Ok(Self {
            interval,
            noise_samples,
            shot_samples,
        })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn noise_samples(&self) -> &[f64] {
        &self.noise_samples
    }

    pub fn shot_samples(&self) -> &[f64] {
        &self.shot_samples
    }

    pub fn sample_count(&self) -> usize {
        self.noise_samples.len()
    }

    pub fn means(&self) -> VariancePair {
        let n = self.sample_count() as f64;
        VariancePair {
            noise: self.noise_samples.iter().sum::<f64>() / n,
            shot: self.shot_samples.iter().sum::<f64>() / n,
        }
    }
}

/// Estimator model for the per-point variance samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    pub points_per_interval: usize,
    /// Effective number of averaged periodogram values per point, `ν`.
    /// Each point is `expectation · χ²_ν / ν`; infinity disables estimator noise.
    pub effective_averages: f64,
    /// Additive detector dark-noise variance, applied to both noise and shot levels.
    #[serde(default)]
    pub dark_noise_offset: f64,
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_interval < 2 {
            return Err(Error::invalid(
                "points_per_interval",
                format!("must be at least 2, got {}", self.points_per_interval),
            ));
        }
        if !(self.effective_averages > 0.0) {
            return Err(Error::invalid(
                "effective_averages",
                format!("must be positive (or inf), got {}", self.effective_averages),
            ));
        }
        if !(self.dark_noise_offset.is_finite() && self.dark_noise_offset >= 0.0) {
            return Err(Error::invalid(
                "dark_noise_offset",
                format!("must be non-negative, got {}", self.dark_noise_offset),
            ));
        }
        Ok(())
    }
}

/// Per-interval seed: `splitmix64(master + splitmix64(index))`.
pub fn interval_seed(master_seed: u64, index: usize) -> u64 {
    splitmix64(master_seed.wrapping_add(splitmix64(index as u64)))
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_samples(expectation: f64, count: usize, nu: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if nu.is_infinite() {
        return Ok(vec![expectation; count]);
    }
    let chi =
        ChiSquared::new(nu).map_err(|e| Error::invalid("effective_averages", e.to_string()))?;
    Ok((0..count)
        .map(|_| loop {
            let v = expectation * chi.sample(rng) / nu;
            if v > 0.0 {
                break v;
            }
        })
        .collect())
}

/// Draw `sample_count` noise and shot estimates around `expectation`.
/// Noise and shot use streams 0 and 1 of a ChaCha8 generator seeded with `seed`.
pub fn simulate_variance_samples(
    interval: Interval,
    expectation: VariancePair,
    sample_count: usize,
    effective_averages: f64,
    seed: u64,
) -> Result<MeasurementRecord> {
    if sample_count < 2 {
        return Err(Error::invalid(
            "sample_count",
            format!("must be at least 2, got {sample_count}"),
        ));
    }
    if !(expectation.noise > 0.0 && expectation.shot > 0.0) {
        return Err(Error::invalid(
            "expectation",
            format!("interval {interval}: expected variances must be positive"),
        ));
    }
    if !(effective_averages > 0.0) {
        return Err(Error::invalid(
            "effective_averages",
            format!("must be positive, got {effective_averages}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let noise = draw_samples(
        expectation.noise,
        sample_count,
        effective_averages,
        &mut rng,
    )?;
    rng.set_stream(1);
    rng.set_word_pos(0);
    let shot = draw_samples(expectation.shot, sample_count, effective_averages, &mut rng)?;
    MeasurementRecord::new(interval, noise, shot)
}

/// Records for all contiguous intervals of the photon covariance, each drawn
/// from its own seed stream (`interval_seed`).
pub fn simulate_records(
    photons: &PhotonCovariance,
    sampling: &SamplingParams,
    master_seed: u64,
) -> Result<Vec<MeasurementRecord>> {
    sampling.validate()?;
    let intervals = enumerate_intervals(photons.dimension());
    intervals
        .par_iter()
        .enumerate()
        .map(|(idx, &interval)| {
            let mut expectation = interval_variance_expectation(photons, interval)?;
            expectation.noise += sampling.dark_noise_offset;
            expectation.shot += sampling.dark_noise_offset;
            simulate_variance_samples(
                interval,
                expectation,
                sampling.points_per_interval,
                sampling.effective_averages,
                interval_seed(master_seed, idx),
            )
        })
        .collect()
}
