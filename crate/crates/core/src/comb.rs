//! Frequency comb grid, pump and seed spectra, the parametric coupling
//! matrix, and its decomposition into supermodes.
//!
//! Signal teeth sit at `ω_ℓ = ω_0 + ℓ·ω_r` for `ℓ ∈ [-h, h]`, `h = (N-1)/2`.
//! A pump tooth `n` (at `2ω_0 + n·ω_r`) couples every signal pair with
//! `ℓ + m = n`, so the pump comb spans `n ∈ [-2h, 2h]`.

use std::f64::consts::{LN_2, TAU};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Time-bandwidth product of a transform-limited Gaussian pulse
/// (intensity FWHM in time times intensity FWHM in frequency).
pub const GAUSSIAN_TIME_BANDWIDTH: f64 = 0.441;

/// Tolerance on `UᵀU = I` for supermode matrices.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Spectral intensity FWHM (Hz) of a transform-limited Gaussian pulse.
pub fn transform_limited_bandwidth(pulse_fwhm_s: f64) -> f64 {
    GAUSSIAN_TIME_BANDWIDTH / pulse_fwhm_s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    center_frequency: f64,
    repetition_rate: f64,
    tooth_count: usize,
}

impl FrequencyGrid {
    /// Build a grid from angular frequencies (rad/s).
    pub fn new(center_frequency: f64, repetition_rate: f64, tooth_count: usize) -> Result<Self> {
        if tooth_count < 3 || tooth_count.is_multiple_of(2) {
            return Err(Error::invalid(
                "tooth_count",
                format!("must be odd and at least 3, got {tooth_count}"),
            ));
        }
        if !(center_frequency.is_finite() && center_frequency > 0.0) {
            return Err(Error::invalid(
                "center_frequency",
                format!("must be positive, got {center_frequency}"),
            ));
        }
        if !(repetition_rate.is_finite() && repetition_rate > 0.0) {
            return Err(Error::invalid(
                "repetition_rate",
                format!("must be positive, got {repetition_rate}"),
            ));
        }
        let half = ((tooth_count - 1) / 2) as f64;
        if center_frequency - half * repetition_rate <= 0.0 {
            return Err(Error::invalid(
                "grid",
                "lowest tooth frequency would be nonpositive".to_string(),
            ));
        }
        Ok(Self {
            center_frequency,
            repetition_rate,
            tooth_count,
        })
    }

    pub fn center_frequency(&self) -> f64 {
        self.center_frequency
    }

    pub fn repetition_rate(&self) -> f64 {
        self.repetition_rate
    }

    pub fn tooth_count(&self) -> usize {
        self.tooth_count
    }

    /// `h = (N-1)/2`; tooth indices run over `[-h, h]`.
    pub fn half_width(&self) -> i64 {
        ((self.tooth_count - 1) / 2) as i64
    }

    /// Tooth spacing in Hz.
    pub fn spacing_hz(&self) -> f64 {
        self.repetition_rate / TAU
    }

    /// Tooth index of the tooth stored at `position` (0-based).
    pub fn tooth_index(&self, position: usize) -> i64 {
        position as i64 - self.half_width()
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        let h = self.half_width();
        -h..=h
    }

    pub fn tooth_frequency(&self, index: i64) -> f64 {
        self.center_frequency + index as f64 * self.repetition_rate
    }

    pub fn pump_frequency(&self, index: i64) -> f64 {
        2.0 * self.center_frequency + index as f64 * self.repetition_rate
    }

    pub fn tooth_wavelength(&self, index: i64) -> f64 {
        TAU * SPEED_OF_LIGHT / self.tooth_frequency(index)
    }

    pub fn center_wavelength(&self) -> f64 {
        TAU * SPEED_OF_LIGHT / self.center_frequency
    }

    pub fn pump_tooth_count(&self) -> usize {
        2 * self.tooth_count - 1
    }
}

/// Build a grid from a center wavelength (m), repetition rate (Hz) and tooth count.
pub fn build_grid(
    center_wavelength: f64,
    repetition_rate: f64,
    tooth_count: usize,
) -> Result<FrequencyGrid> {
    if !(center_wavelength.is_finite() && center_wavelength > 0.0) {
        return Err(Error::invalid(
            "center_wavelength",
            format!("must be positive, got {center_wavelength}"),
        ));
    }
    if !(repetition_rate.is_finite() && repetition_rate > 0.0) {
        return Err(Error::invalid(
            "repetition_rate",
            format!("must be positive, got {repetition_rate}"),
        ));
    }
    FrequencyGrid::new(
        TAU * SPEED_OF_LIGHT / center_wavelength,
        TAU * repetition_rate,
        tooth_count,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralAxis {
    /// Signal comb, `N` teeth indexed `[-h, h]`.
    Signal,
    /// Pump comb, `2N-1` teeth indexed `[-2h, 2h]`.
    Pump,
}

impl SpectralAxis {
    pub fn len(self, grid: &FrequencyGrid) -> usize {
        match self {
            SpectralAxis::Signal => grid.tooth_count(),
            SpectralAxis::Pump => grid.pump_tooth_count(),
        }
    }

    /// Offset between storage position and tooth index on this axis.
    pub fn half_width(self, grid: &FrequencyGrid) -> i64 {
        match self {
            SpectralAxis::Signal => grid.half_width(),
            SpectralAxis::Pump => 2 * grid.half_width(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumLabel {
    Pump,
    Seed,
    MeanField,
}

/// Real, non-negative spectral amplitude over one of the grid's axes.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralAmplitude {
    grid: FrequencyGrid,
    axis: SpectralAxis,
    amplitudes: Vec<f64>,
    label: Option<SpectrumLabel>,
    normalized: bool,
    undersampled: bool,
}

impl SpectralAmplitude {
    pub fn new(
        grid: FrequencyGrid,
        axis: SpectralAxis,
        amplitudes: Vec<f64>,
        label: Option<SpectrumLabel>,
    ) -> Result<Self> {
        let expected = axis.len(&grid);
        if amplitudes.len() != expected {
            return Err(Error::invalid(
                "spectral amplitude",
                format!(
                    "length {} does not match axis length {expected}",
                    amplitudes.len()
                ),
            ));
        }
        if let Some(bad) = amplitudes.iter().find(|a| !a.is_finite() || **a < 0.0) {
            return Err(Error::invalid(
                "spectral amplitude",
                format!("entries must be finite and non-negative, found {bad}"),
            ));
        }
        Ok(Self {
            grid,
            axis,
            amplitudes,
            label,
            normalized: false,
            undersampled: false,
        })
    }

    /// Rescale so the squared amplitudes sum to one.
    pub fn normalize(mut self) -> Result<Self> {
        let power = self.power();
        if power <= 0.0 {
            return Err(Error::invalid("spectral amplitude", "zero total power"));
        }
        let scale = power.sqrt().recip();
        self.amplitudes.iter_mut().for_each(|a| *a *= scale);
        self.normalized = true;
        Ok(self)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn axis(&self) -> SpectralAxis {
        self.axis
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn label(&self) -> Option<SpectrumLabel> {
        self.label
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Set when the spectral FWHM is narrower than one tooth spacing.
    pub fn is_undersampled(&self) -> bool {
        self.undersampled
    }

    pub fn power(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a).collect()
    }

    /// Amplitude at tooth `index` of this axis; zero outside the axis.
    pub fn at(&self, index: i64) -> f64 {
        let pos = index + self.axis.half_width(&self.grid);
        if pos < 0 || pos as usize >= self.amplitudes.len() {
            0.0
        } else {
            self.amplitudes[pos as usize]
        }
    }

    /// Intensity FWHM in Hz, measured on the sampled profile.
    pub fn intensity_fwhm_hz(&self) -> Option<f64> {
        intensity_fwhm(&self.intensities()).map(|w| w * self.grid.spacing_hz())
    }
}

/// Normalized Gaussian amplitude on `axis` with the given spectral intensity
/// FWHM and center offset, both in Hz.
pub fn gaussian_spectrum(
    grid: &FrequencyGrid,
    axis: SpectralAxis,
    intensity_fwhm_hz: f64,
    center_offset_hz: f64,
    label: Option<SpectrumLabel>,
) -> Result<SpectralAmplitude> {
    if !(intensity_fwhm_hz > 0.0) {
        return Err(Error::invalid(
            "spectral fwhm",
            format!("must be positive, got {intensity_fwhm_hz}"),
        ));
    }
    let spacing = grid.spacing_hz();
    let half = axis.half_width(grid);
    // |A|² = exp(-4 ln2 (ν/Δν)²) has intensity FWHM Δν.
    let amplitudes = (-half..=half)
        .map(|n| {
            let detuning = (n as f64 * spacing - center_offset_hz) / intensity_fwhm_hz;
            (-2.0 * LN_2 * detuning * detuning).exp()
        })
        .collect();
    let mut spectrum = SpectralAmplitude::new(*grid, axis, amplitudes, label)?.normalize()?;
    spectrum.undersampled = intensity_fwhm_hz < spacing;
    Ok(spectrum)
}

/// Transform-limited Gaussian pump on the pump axis for a pulse of the given
/// intensity FWHM (s), offset from `2ω_0` by `center_offset_hz`.
pub fn gaussian_pump_spectrum(
    grid: &FrequencyGrid,
    pulse_fwhm: f64,
    center_offset_hz: f64,
) -> Result<SpectralAmplitude> {
    if !(pulse_fwhm.is_finite() && pulse_fwhm > 0.0) {
        return Err(Error::invalid(
            "pulse_fwhm",
            format!("must be positive, got {pulse_fwhm}"),
        ));
    }
    gaussian_spectrum(
        grid,
        SpectralAxis::Pump,
        transform_limited_bandwidth(pulse_fwhm),
        center_offset_hz,
        Some(SpectrumLabel::Pump),
    )
}

/// FWHM, in samples, of a sampled intensity profile. Half-maximum crossings
/// are located by linear interpolation. `None` if the profile is empty, all
/// zero, or does not fall to half maximum on both sides.
pub fn intensity_fwhm(intensity: &[f64]) -> Option<f64> {
    let (peak_pos, &peak) = intensity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if !(peak > 0.0) {
        return None;
    }
    let half = 0.5 * peak;
    let left = (0..peak_pos)
        .rev()
        .find(|&i| intensity[i] < half)
        .map(|i| {
            let (a, b) = (intensity[i], intensity[i + 1]);
            i as f64 + (half - a) / (b - a)
        })?;
    let right = (peak_pos + 1..intensity.len())
        .find(|&i| intensity[i] < half)
        .map(|i| {
            let (a, b) = (intensity[i - 1], intensity[i]);
            (i - 1) as f64 + (a - half) / (a - b)
        })?;
    Some(right - left)
}

/// Phase-matching envelope as a function of the signal-frequency difference
/// `Δν = (ℓ - m)·f_r`. `width_hz` is the FWHM of `|f|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseMatchingSpec {
    Flat,
    Gaussian { width_hz: f64 },
    Sinc { width_hz: f64 },
}

/// Half-maximum argument of `sinc²`: `sinc²(x) = 1/2` at `x ≈ 1.391557`.
const SINC_SQUARED_HALF_POINT: f64 = 1.391_557_378_251_36;

impl PhaseMatchingSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PhaseMatchingSpec::Flat => Ok(()),
            PhaseMatchingSpec::Gaussian { width_hz } | PhaseMatchingSpec::Sinc { width_hz } => {
                if width_hz.is_finite() && width_hz > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "phase_matching.width_hz",
                        format!("must be positive, got {width_hz}"),
                    ))
                }
            }
        }
    }

    pub fn envelope(&self, detuning_hz: f64) -> f64 {
        match *self {
            PhaseMatchingSpec::Flat => 1.0,
            PhaseMatchingSpec::Gaussian { width_hz } => {
                let x = detuning_hz / width_hz;
                (-2.0 * LN_2 * x * x).exp()
            }
            PhaseMatchingSpec::Sinc { width_hz } => {
                let x = 2.0 * SINC_SQUARED_HALF_POINT * detuning_hz / width_hz;
                if x.abs() < 1e-8 {
                    1.0
                } else {
                    x.sin() / x
                }
            }
        }
    }
}

/// Symmetric coupling `L(ℓ, m)` between signal teeth.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    grid: FrequencyGrid,
    matrix: DMatrix<f64>,
}

impl CouplingMatrix {
    pub fn new(grid: FrequencyGrid, matrix: DMatrix<f64>) -> Result<Self> {
        let n = grid.tooth_count();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::invalid(
                "coupling matrix",
                format!(
                    "expected {n}x{n}, got {}x{}",
                    matrix.nrows(),
                    matrix.ncols()
                ),
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coupling matrix", "non-finite entry"));
        }
        if matrix.iter().all(|v| *v == 0.0) {
            return Err(Error::invalid("coupling matrix", "all entries are zero"));
        }
        for i in 0..n {
            for j in 0..i {
                if matrix[(i, j)] != matrix[(j, i)] {
                    return Err(Error::invalid(
                        "coupling matrix",
                        format!("not symmetric at ({i}, {j})"),
                    ));
                }
            }
        }
        Ok(Self { grid, matrix })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Entry by tooth indices `ℓ, m ∈ [-h, h]`.
    pub fn at(&self, l: i64, m: i64) -> f64 {
        let h = self.grid.half_width();
        self.matrix[((l + h) as usize, (m + h) as usize)]
    }
}

/// `L(ℓ, m) = pump(ℓ + m) · f_pm((ℓ - m)·f_r)`.
pub fn coupling_matrix(
    grid: &FrequencyGrid,
    pump: &SpectralAmplitude,
    phase_matching: &PhaseMatchingSpec,
) -> Result<CouplingMatrix> {
    if pump.grid() != grid || pump.axis() != SpectralAxis::Pump {
        return Err(Error::invalid(
            "pump spectrum",
            "must be defined on the pump comb of the same grid",
        ));
    }
    phase_matching.validate()?;
    let n = grid.tooth_count();
    let h = grid.half_width();
    let spacing = grid.spacing_hz();
    // the envelope only depends on |ℓ - m|
    let envelope: Vec<f64> = (0..n)
        .map(|d| phase_matching.envelope(d as f64 * spacing))
        .collect();
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let l = i as i64 - h;
            let m = j as i64 - h;
            let value = pump.at(l + m) * envelope[j - i];
            matrix[(i, j)] = value;
            matrix[(j, i)] = value;
        }
    }
    CouplingMatrix::new(*grid, matrix)
}

/// Orthonormal spectral eigenmodes of the coupling, with their coupling
/// eigenvalues and amplitude-quadrature variances.
#[derive(Debug, Clone, PartialEq)]
pub struct SupermodeSet {
    grid: FrequencyGrid,
    modes: DMatrix<f64>,
    coupling_eigenvalues: Vec<f64>,
    squeezed_variances: Vec<f64>,
    antisqueezed_variances: Vec<f64>,
    amplitude_variances: Vec<f64>,
}

impl SupermodeSet {
    /// Supermodes in the vacuum state (all variances one).
    pub fn new(
        grid: FrequencyGrid,
        modes: DMatrix<f64>,
        coupling_eigenvalues: Vec<f64>,
    ) -> Result<Self> {
        let k = modes.ncols();
        if modes.nrows() != grid.tooth_count() {
            return Err(Error::invalid(
                "supermodes",
                format!(
                    "mode length {} does not match tooth count {}",
                    modes.nrows(),
                    grid.tooth_count()
                ),
            ));
        }
        if k == 0 || coupling_eigenvalues.len() != k {
            return Err(Error::invalid(
                "supermodes",
                format!("{k} modes but {} eigenvalues", coupling_eigenvalues.len()),
            ));
        }
        let err = orthonormality_error(&modes);
        if !(err < ORTHONORMALITY_TOL) {
            return Err(Error::invalid(
                "supermodes",
                format!("columns not orthonormal (max |UᵀU - I| = {err:e})"),
            ));
        }
        if coupling_eigenvalues
            .windows(2)
            .any(|w| w[1].abs() > w[0].abs())
        {
            return Err(Error::invalid(
                "supermodes",
                "coupling eigenvalue magnitudes must be non-increasing",
            ));
        }
        Ok(Self {
            grid,
            modes,
            coupling_eigenvalues,
            squeezed_variances: vec![1.0; k],
            antisqueezed_variances: vec![1.0; k],
            amplitude_variances: vec![1.0; k],
        })
    }

    /// Assign amplitude-quadrature variances directly. Even-indexed modes must
    /// have variance ≤ 1 and odd-indexed ≥ 1.
    pub fn with_amplitude_variances(mut self, variances: Vec<f64>) -> Result<Self> {
        if variances.len() != self.len() {
            return Err(Error::invalid(
                "amplitude variances",
                format!("expected {} values, got {}", self.len(), variances.len()),
            ));
        }
        for (k, &s) in variances.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid(
                    "amplitude variances",
                    format!("mode {k}: variance must be positive, got {s}"),
                ));
            }
            let parity_ok = if k % 2 == 0 { s <= 1.0 } else { s >= 1.0 };
            if !parity_ok {
                return Err(Error::invalid(
                    "amplitude variances",
                    format!(
                        "mode {k}: variance {s} violates the even-squeezed/odd-anti-squeezed rule"
                    ),
                ));
            }
        }
        self.squeezed_variances = variances.iter().map(|&s| s.min(1.0 / s)).collect();
        self.antisqueezed_variances = variances.iter().map(|&s| s.max(1.0 / s)).collect();
        self.amplitude_variances = variances;
        Ok(self)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    /// `N × K` matrix whose columns are the supermodes.
    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coupling_eigenvalues(&self) -> &[f64] {
        &self.coupling_eigenvalues
    }

    pub fn amplitude_variances(&self) -> &[f64] {
        &self.amplitude_variances
    }

    pub fn squeezed_variances(&self) -> &[f64] {
        &self.squeezed_variances
    }

    pub fn antisqueezed_variances(&self) -> &[f64] {
        &self.antisqueezed_variances
    }

    pub fn mode(&self, k: usize) -> Vec<f64> {
        self.modes.column(k).iter().copied().collect()
    }

    /// Intensity FWHM of mode `k` in Hz.
    pub fn mode_fwhm_hz(&self, k: usize) -> Option<f64> {
        let intensity: Vec<f64> = self.modes.column(k).iter().map(|a| a * a).collect();
        intensity_fwhm(&intensity).map(|w| w * self.grid.spacing_hz())
    }

    /// Keep the first `k` modes.
    pub fn truncate(mut self, k: usize) -> Result<Self> {
        if k == 0 || k > self.len() {
            return Err(Error::invalid(
                "supermode count",
                format!("must be in 1..={}, got {k}", self.len()),
            ));
        }
        self.modes = self.modes.columns(0, k).into_owned();
        self.coupling_eigenvalues.truncate(k);
        self.squeezed_variances.truncate(k);
        self.antisqueezed_variances.truncate(k);
        self.amplitude_variances.truncate(k);
        Ok(self)
    }

    pub(crate) fn from_parts(
        grid: FrequencyGrid,
        modes: DMatrix<f64>,
        coupling_eigenvalues: Vec<f64>,
        squeezed: Vec<f64>,
        antisqueezed: Vec<f64>,
        amplitude: Vec<f64>,
    ) -> Result<Self> {
        let mut set =
            Self::new(grid, modes, coupling_eigenvalues)?.with_amplitude_variances(amplitude)?;
        if squeezed.len() != set.len() || antisqueezed.len() != set.len() {
            return Err(Error::invalid(
                "supermodes",
                "variance vector lengths differ",
            ));
        }
        set.squeezed_variances = squeezed;
        set.antisqueezed_variances = antisqueezed;
        Ok(set)
    }
}

/// `max |UᵀU - I|` over all entries.
pub fn orthonormality_error(modes: &DMatrix<f64>) -> f64 {
    let gram = modes.transpose() * modes;
    let k = gram.nrows();
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Flip `v` so that its first component of non-negligible magnitude is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-3 * max) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Full symmetric eigendecomposition, returning `(eigenvalues, eigenvectors)`
/// with eigenvectors as columns, in the solver's native order.
pub(crate) fn symmetric_eigen(matrix: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = matrix.nrows();
    let eig = SymmetricEigen::try_new(matrix.clone(), f64::EPSILON, 1000 * n.max(1)).ok_or_else(
        || Error::Numerical(format!("symmetric eigensolver did not converge ({n}x{n})")),
    )?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "eigensolver produced non-finite eigenvalues".into(),
        ));
    }
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

/// `L(a, b) == L(n-1-a, n-1-b)` for every entry, bit for bit.
fn is_reflection_symmetric(matrix: &DMatrix<f64>) -> bool {
    let n = matrix.nrows();
    (0..n).all(|a| (0..n).all(|b| matrix[(a, b)] == matrix[(n - 1 - a, n - 1 - b)]))
}

/// Eigendecomposition of a reflection-symmetric matrix (odd size) through
/// its even and odd parity blocks, returned in the full tooth basis.
fn parity_block_eigen(matrix: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = matrix.nrows();
    let h = (n - 1) / 2;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    // Basis vector i of a block: even e_0 = δ_c, e_i = (δ_{c+i} + δ_{c-i})/√2;
    // odd o_i = (δ_{c+i} - δ_{c-i})/√2 for i ≥ 1.
    let support = |i: usize, sign: f64| -> Vec<(usize, f64)> {
        if i == 0 {
            vec![(h, 1.0)]
        } else {
            vec![(h + i, r), (h - i, sign * r)]
        }
    };
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    let mut col = 0;
    for (sign, first) in [(1.0, 0usize), (-1.0, 1usize)] {
        let size = h + 1 - first;
        let block = DMatrix::from_fn(size, size, |i, j| {
            let (si, sj) = (support(i + first, sign), support(j + first, sign));
            si.iter()
                .map(|&(a, wa)| {
                    sj.iter()
                        .map(|&(b, wb)| wa * wb * matrix[(a, b)])
                        .sum::<f64>()
                })
                .sum()
        });
        let (block_values, block_vectors) = symmetric_eigen(&block)?;
        for (k, value) in block_values.into_iter().enumerate() {
            for i in 0..size {
                for (a, w) in support(i + first, sign) {
                    vectors[(a, col)] += w * block_vectors[(i, k)];
                }
            }
            values.push(value);
            col += 1;
        }
    }
    Ok((values, vectors))
}

/// Eigendecompose the coupling and keep the `k_max` modes of largest |Λ|.
/// Reflection-symmetric couplings (centered pump) are solved in parity
/// blocks, which also makes every mode exactly even or odd.
pub fn decompose_supermodes(coupling: &CouplingMatrix, k_max: usize) -> Result<SupermodeSet> {
    let n = coupling.grid().tooth_count();
    if k_max == 0 || k_max > n {
        return Err(Error::invalid(
            "k_max",
            format!("must be in 1..={n}, got {k_max}"),
        ));
    }
    let matrix = coupling.matrix();
    let (values, vectors) = if is_reflection_symmetric(matrix) {
        parity_block_eigen(matrix)?
    } else {
        symmetric_eigen(matrix)?
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    order.truncate(k_max);

    let mut modes = DMatrix::zeros(n, k_max);
    let mut eigenvalues = Vec::with_capacity(k_max);
    for (col, &idx) in order.iter().enumerate() {
        let mut v: Vec<f64> = vectors.column(idx).iter().copied().collect();
        fix_sign(&mut v);
        modes.set_column(col, &nalgebra::DVector::from_vec(v));
        eigenvalues.push(values[idx]);
    }
    SupermodeSet::new(*coupling.grid(), modes, eigenvalues)
}

/// Below-threshold cavity parameters for assigning squeezing to supermodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezingParams {
    /// Normalized pump amplitude of mode 0, `σ_0 ∈ [0, 1)`.
    pub pump_ratio: f64,
    pub escape_efficiency: f64,
    /// Noise analysis frequency (Hz).
    pub analysis_frequency: f64,
    /// Cavity half-width at half maximum (Hz).
    pub cavity_bandwidth: f64,
}

impl SqueezingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.pump_ratio >= 0.0 && self.pump_ratio < 1.0) {
            return Err(Error::invalid(
                "pump_ratio",
                format!(
                    "must be in [0, 1) (below threshold), got {}",
                    self.pump_ratio
                ),
            ));
        }
        if !(self.escape_efficiency > 0.0 && self.escape_efficiency <= 1.0) {
            return Err(Error::invalid(
                "escape_efficiency",
                format!("must be in (0, 1], got {}", self.escape_efficiency),
            ));
        }
        if !(self.analysis_frequency.is_finite() && self.analysis_frequency >= 0.0) {
            return Err(Error::invalid(
                "analysis_frequency",
                format!("must be non-negative, got {}", self.analysis_frequency),
            ));
        }
        if !(self.cavity_bandwidth.is_finite() && self.cavity_bandwidth > 0.0) {
            return Err(Error::invalid(
                "cavity_bandwidth",
                format!("must be positive, got {}", self.cavity_bandwidth),
            ));
        }
        Ok(())
    }
}

/// Squeezed and anti-squeezed quadrature variances of one below-threshold
/// mode with normalized pump `sigma`, escape efficiency `eta` and reduced
/// analysis frequency `omega`.
pub fn opo_quadrature_variances(sigma: f64, eta: f64, omega: f64) -> (f64, f64) {
    let w2 = omega * omega;
    let squeezed = 1.0 - eta * 4.0 * sigma / ((1.0 + sigma).powi(2) + w2);
    let anti = 1.0 + eta * 4.0 * sigma / ((1.0 - sigma).powi(2) + w2);
    (squeezed, anti)
}

/// Assign amplitude-quadrature variances: mode `k` sees `σ_k = r·|Λ_k|/|Λ_0|`;
/// even modes are squeezed in amplitude, odd modes anti-squeezed.
pub fn squeezing_values(modes: &SupermodeSet, params: &SqueezingParams) -> Result<SupermodeSet> {
    params.validate()?;
    let lead = modes.coupling_eigenvalues()[0].abs();
    if lead == 0.0 {
        return Err(Error::Numerical(
            "leading coupling eigenvalue is zero".into(),
        ));
    }
    let omega = params.analysis_frequency / params.cavity_bandwidth;
    let mut squeezed = Vec::with_capacity(modes.len());
    let mut anti = Vec::with_capacity(modes.len());
    let mut amplitude = Vec::with_capacity(modes.len());
    for (k, lambda) in modes.coupling_eigenvalues().iter().enumerate() {
        let sigma = params.pump_ratio * lambda.abs() / lead;
        let (s, a) = opo_quadrature_variances(sigma, params.escape_efficiency, omega);
        squeezed.push(s);
        anti.push(a);
        amplitude.push(if k % 2 == 0 { s } else { a });
    }
    let mut out = modes.clone();
    out.squeezed_variances = squeezed;
    out.antisqueezed_variances = anti;
    out.amplitude_variances = amplitude;
    Ok(out)
}

/// Shape of a Hermite-Gaussian-like supermode for a jointly Gaussian kernel
/// `exp(-a·(ℓ+m)² - b·(ℓ-m)²)`: returns `(width, ratio)` where the modes are
/// `ψ_k(ℓ / width)` and `Λ_{k+1}/Λ_k = ratio`.
pub fn mehler_parameters(sum_rate: f64, difference_rate: f64) -> (f64, f64) {
    let width = (4.0 * (sum_rate * difference_rate).sqrt()).recip().sqrt();
    let (sa, sb) = (sum_rate.sqrt(), difference_rate.sqrt());
    (width, (sb - sa) / (sb + sa))
}

/// Exponent rates `(a, b)` in tooth units of the kernel produced by a Gaussian
/// pump of intensity FWHM `pump_fwhm_hz` and Gaussian phase matching of width
/// `pm_width_hz` on `grid`.
pub fn gaussian_kernel_rates(
    grid: &FrequencyGrid,
    pump_fwhm_hz: f64,
    pm_width_hz: f64,
) -> (f64, f64) {
    let f = grid.spacing_hz();
    (
        2.0 * LN_2 * (f / pump_fwhm_hz).powi(2),
        2.0 * LN_2 * (f / pm_width_hz).powi(2),
    )
}

/// Gaussian phase-matching width (Hz) giving supermode 0 an intensity FWHM of
/// `target_fwhm_hz` for a Gaussian pump of intensity FWHM `pump_fwhm_hz`
/// (continuum limit: `FWHM_0² = pump_fwhm · width / 2`).
pub fn phase_matching_width_for_mode_fwhm(pump_fwhm_hz: f64, target_fwhm_hz: f64) -> f64 {
    2.0 * target_fwhm_hz * target_fwhm_hz / pump_fwhm_hz
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> FrequencyGrid {
        build_grid(795e-9, 76e6, n).unwrap()
    }

    #[test]
    fn grid_from_laser_parameters() {
        let g = grid(1001);
        assert_relative_eq!(
            g.center_frequency(),
            TAU * SPEED_OF_LIGHT / 795e-9,
            max_relative = 1e-15
        );
        assert_relative_eq!(g.center_frequency(), 2.369e15, max_relative = 1e-3);
        assert_relative_eq!(g.repetition_rate(), TAU * 76e6, max_relative = 1e-15);
        assert_eq!(g.tooth_frequency(0), g.center_frequency());
        assert_eq!(g.half_width(), 500);
    }

    #[test]
    fn minimal_grid_has_three_teeth() {
        let g = grid(3);
        let freqs: Vec<f64> = g.indices().map(|l| g.tooth_frequency(l)).collect();
        let (w0, wr) = (g.center_frequency(), g.repetition_rate());
        assert_eq!(freqs, vec![w0 - wr, w0, w0 + wr]);
    }

    #[test]
    fn grid_rejects_bad_counts_and_values() {
        assert!(build_grid(795e-9, 76e6, 1000).is_err());
        assert!(build_grid(795e-9, 76e6, 1).is_err());
        assert!(build_grid(-795e-9, 76e6, 11).is_err());
        assert!(build_grid(795e-9, 0.0, 11).is_err());
        // spacing so large the lowest tooth is below zero
        assert!(FrequencyGrid::new(1.0, 1.0, 5).is_err());
    }

    #[test]
    fn pump_bandwidth_for_120_fs() {
        assert_relative_eq!(
            transform_limited_bandwidth(120e-15),
            3.674e12,
            max_relative = 1e-3
        );
        let g = build_grid(795e-9, 20e9, 1001).unwrap();
        let pump = gaussian_pump_spectrum(&g, 120e-15, 0.0).unwrap();
        let fwhm = pump.intensity_fwhm_hz().unwrap();
        assert_relative_eq!(fwhm, 0.441 / 120e-15, max_relative = 1e-3);
        assert!(!pump.is_undersampled());
    }

    #[test]
    fn centered_pump_is_symmetric_and_peaked() {
        let g = build_grid(795e-9, 50e9, 101).unwrap();
        let pump = gaussian_pump_spectrum(&g, 120e-15, 0.0).unwrap();
        let amps = pump.amplitudes();
        let peak = amps.iter().cloned().fold(0.0, f64::max);
        assert_eq!(pump.at(0), peak);
        for n in 0..=200 {
            assert_eq!(pump.at(n), pump.at(-n));
        }
        assert_relative_eq!(pump.power(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn flat_limit_is_uniform() {
        let g = grid(11);
        let s = gaussian_spectrum(&g, SpectralAxis::Signal, 1e40, 0.0, None).unwrap();
        for a in s.amplitudes() {
            assert_relative_eq!(*a, 1.0 / 11f64.sqrt(), max_relative = 1e-12);
        }
        let p = gaussian_pump_spectrum(&g, 1e-40, 0.0).unwrap();
        for a in p.amplitudes() {
            assert_relative_eq!(*a, 1.0 / 21f64.sqrt(), max_relative = 1e-12);
        }
    }

    #[test]
    fn narrow_spectrum_is_flagged_undersampled() {
        let g = grid(11);
        // 120 fs bandwidth is far wider than 76 MHz, so use a long pulse
        let p = gaussian_pump_spectrum(&g, 1e-6, 0.0).unwrap();
        assert!(p.is_undersampled());
    }

    #[test]
    fn flat_phase_matching_gives_hankel_structure() {
        let g = build_grid(795e-9, 100e9, 31).unwrap();
        let pump = gaussian_pump_spectrum(&g, 120e-15, 0.0).unwrap();
        let l = coupling_matrix(&g, &pump, &PhaseMatchingSpec::Flat).unwrap();
        for a in -15..=15i64 {
            for b in -15..=15i64 {
                let s = a + b;
                for c in (-15..=15i64).filter(|c| (s - c).abs() <= 15) {
                    assert_eq!(l.at(a, b), l.at(c, s - c));
                }
            }
        }
    }

    #[test]
    fn coupling_three_tooth_flat_oracle() {
        let g = grid(3);
        let amps = vec![1.0 / 3f64.sqrt(); g.pump_tooth_count()];
        let pump = SpectralAmplitude::new(g, SpectralAxis::Pump, amps, None).unwrap();
        let l = coupling_matrix(&g, &pump, &PhaseMatchingSpec::Flat).unwrap();
        for v in l.matrix().iter() {
            assert_relative_eq!(*v, 1.0 / 3f64.sqrt(), max_relative = 1e-15);
        }
    }

    #[test]
    fn coupling_rejects_signal_axis_pump() {
        let g = grid(5);
        let seed = gaussian_spectrum(&g, SpectralAxis::Signal, 1e9, 0.0, None).unwrap();
        assert!(coupling_matrix(&g, &seed, &PhaseMatchingSpec::Flat).is_err());
        let other = grid(7);
        let pump = gaussian_pump_spectrum(&other, 120e-15, 0.0).unwrap();
        assert!(coupling_matrix(&g, &pump, &PhaseMatchingSpec::Flat).is_err());
    }

    #[test]
    fn sinc_envelope_half_power_at_half_width() {
        let pm = PhaseMatchingSpec::Sinc { width_hz: 10.0 };
        assert_relative_eq!(pm.envelope(5.0).powi(2), 0.5, max_relative = 1e-9);
        assert_eq!(pm.envelope(0.0), 1.0);
        let pm = PhaseMatchingSpec::Gaussian { width_hz: 10.0 };
        assert_relative_eq!(pm.envelope(5.0).powi(2), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn rank_one_coupling() {
        let g = grid(7);
        let v = nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0]).normalize();
        let l = CouplingMatrix::new(g, &v * v.transpose() * 2.5).unwrap();
        let modes = decompose_supermodes(&l, 7).unwrap();
        assert_relative_eq!(modes.coupling_eigenvalues()[0], 2.5, max_relative = 1e-12);
        for lam in &modes.coupling_eigenvalues()[1..] {
            assert!(lam.abs() < 1e-12);
        }
        let overlap: f64 = modes.modes().column(0).dot(&v);
        assert_relative_eq!(overlap.abs(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn diagonal_coupling_gives_basis_vectors() {
        let g = grid(5);
        let d = [0.5, -3.0, 2.0, 1.0, -0.1];
        let l = CouplingMatrix::new(
            g,
            DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&d)),
        )
        .unwrap();
        let modes = decompose_supermodes(&l, 5).unwrap();
        assert_eq!(modes.coupling_eigenvalues(), &[-3.0, 2.0, 1.0, 0.5, -0.1]);
        let expected_pos = [1, 2, 3, 0, 4];
        for (k, &pos) in expected_pos.iter().enumerate() {
            assert_relative_eq!(modes.modes()[(pos, k)], 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn decomposition_reconstructs_coupling() {
        let g = build_grid(795e-9, 200e9, 61).unwrap();
        let pump = gaussian_pump_spectrum(&g, 120e-15, 0.0).unwrap();
        let pm = PhaseMatchingSpec::Sinc { width_hz: 8e12 };
        let l = coupling_matrix(&g, &pump, &pm).unwrap();
        let modes = decompose_supermodes(&l, 61).unwrap();
        assert!(orthonormality_error(modes.modes()) < 1e-10);
        let u = modes.modes();
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            modes.coupling_eigenvalues(),
        ));
        let rebuilt = u * lambda * u.transpose();
        let err = (rebuilt - l.matrix()).abs().max();
        assert!(err < 1e-8, "reconstruction error {err}");
    }

    #[test]
    fn offset_pump_uses_full_solver() {
        let g = build_grid(795e-9, 200e9, 61).unwrap();
        let pump = gaussian_pump_spectrum(&g, 120e-15, 450e9).unwrap();
        let l =
            coupling_matrix(&g, &pump, &PhaseMatchingSpec::Gaussian { width_hz: 6e12 }).unwrap();
        assert!(!is_reflection_symmetric(l.matrix()));
        let modes = decompose_supermodes(&l, 61).unwrap();
        assert!(orthonormality_error(modes.modes()) < 1e-10);
        let u = modes.modes();
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            modes.coupling_eigenvalues(),
        ));
        assert!((u * lambda * u.transpose() - l.matrix()).abs().max() < 1e-8);
    }

    #[test]
    fn parity_blocks_match_full_solver() {
        let g = build_grid(795e-9, 150e9, 81).unwrap();
        let pump = gaussian_pump_spectrum(&g, 100e-15, 0.0).unwrap();
        let l =
            coupling_matrix(&g, &pump, &PhaseMatchingSpec::Gaussian { width_hz: 5e12 }).unwrap();
        assert!(is_reflection_symmetric(l.matrix()));
        let (mut full, _) = symmetric_eigen(l.matrix()).unwrap();
        let (mut blocks, vectors) = parity_block_eigen(l.matrix()).unwrap();
        full.sort_by(f64::total_cmp);
        blocks.sort_by(f64::total_cmp);
        for (a, b) in full.iter().zip(&blocks) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!(orthonormality_error(&vectors) < 1e-12);
        let modes = decompose_supermodes(&l, 4).unwrap();
        for k in 0..4 {
            let v = modes.mode(k);
            let parity = if k % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..v.len() {
                assert_eq!(v[i], parity * v[v.len() - 1 - i], "mode {k} tooth {i}");
            }
        }
    }

    #[test]
    fn k_max_out_of_range() {
        let g = grid(5);
        let l = CouplingMatrix::new(g, DMatrix::identity(5, 5)).unwrap();
        assert!(decompose_supermodes(&l, 0).is_err());
        assert!(decompose_supermodes(&l, 6).is_err());
    }

    #[test]
    fn squeezing_formula_oracle() {
        let (s, a) = opo_quadrature_variances(0.5, 1.0, 0.0);
        assert_relative_eq!(s, 1.0 - 4.0 * 0.5 / 2.25, max_relative = 1e-15);
        assert_relative_eq!(s, 0.111, epsilon = 1e-3);
        assert_relative_eq!(s * a, 1.0, max_relative = 1e-12);
    }

    fn three_mode_set() -> SupermodeSet {
        let g = grid(5);
        let l = CouplingMatrix::new(
            g,
            DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[
                1.0, -0.8, 0.6, -0.4, 0.2,
            ])),
        )
        .unwrap();
        decompose_supermodes(&l, 5).unwrap()
    }

    #[test]
    fn zero_pump_is_vacuum() {
        let params = SqueezingParams {
            pump_ratio: 0.0,
            escape_efficiency: 0.9,
            analysis_frequency: 1.5e6,
            cavity_bandwidth: 2.5e6,
        };
        let set = squeezing_values(&three_mode_set(), &params).unwrap();
        assert!(set.amplitude_variances().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn finite_analysis_frequency_reduces_squeezing() {
        let base = SqueezingParams {
            pump_ratio: 0.5,
            escape_efficiency: 0.9,
            analysis_frequency: 0.0,
            cavity_bandwidth: 2.5e6,
        };
        let at_dc = squeezing_values(&three_mode_set(), &base).unwrap();
        let at_1_5 = squeezing_values(
            &three_mode_set(),
            &SqueezingParams {
                analysis_frequency: 1.5e6,
                ..base
            },
        )
        .unwrap();
        assert!(at_1_5.squeezed_variances()[0] > at_dc.squeezed_variances()[0]);
    }

    #[test]
    fn squeezing_parity_and_monotonicity() {
        let params = SqueezingParams {
            pump_ratio: 0.7,
            escape_efficiency: 0.8,
            analysis_frequency: 1.5e6,
            cavity_bandwidth: 2.5e6,
        };
        let set = squeezing_values(&three_mode_set(), &params).unwrap();
        for (k, &s) in set.amplitude_variances().iter().enumerate() {
            assert!(s > 0.0);
            if k % 2 == 0 {
                assert!(s <= 1.0);
            } else {
                assert!(s >= 1.0);
            }
        }
        assert!(set.squeezed_variances().windows(2).all(|w| w[1] >= w[0]));
        for (s, a) in set
            .squeezed_variances()
            .iter()
            .zip(set.antisqueezed_variances())
        {
            assert!(s * a >= 1.0);
        }
    }

    #[test]
    fn above_threshold_rejected() {
        let params = SqueezingParams {
            pump_ratio: 1.0,
            escape_efficiency: 1.0,
            analysis_frequency: 0.0,
            cavity_bandwidth: 1.0,
        };
        assert!(squeezing_values(&three_mode_set(), &params).is_err());
    }

    #[test]
    fn fwhm_of_sampled_gaussian() {
        let sigma = 20.0f64;
        let profile: Vec<f64> = (-200..=200)
            .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
            .collect();
        let w = intensity_fwhm(&profile).unwrap();
        assert_relative_eq!(w, 2.0 * (2.0 * LN_2).sqrt() * sigma, max_relative = 1e-3);
        assert!(intensity_fwhm(&[1.0, 1.0, 1.0]).is_none());
    }
}
