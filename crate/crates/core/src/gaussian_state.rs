//! Amplitude-quadrature covariance of the comb in the tooth basis, loss, and
//! reduction to the pixel basis seen by the detectors.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::comb::{
    orthonormality_error, SpectralAmplitude, SpectralAxis, SupermodeSet, ORTHONORMALITY_TOL,
};
use crate::error::{Error, Result};
use crate::measurement::PixelPartition;
use crate::reconstruction::PhotonCovariance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Tooth,
    Pixel,
}

/// `V(i, j) = ½⟨δx_i δx_j + δx_j δx_i⟩` with `x = a + a†`; vacuum is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureCovariance {
    basis: Basis,
    matrix: DMatrix<f64>,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl QuadratureCovariance {
    /// Validates squareness, symmetry (1e-12, relative to the largest entry
    /// when that exceeds one) and positive definiteness.
    pub fn new(basis: Basis, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::invalid(
                "covariance",
                format!(
                    "must be square and nonempty, got {}x{}",
                    matrix.nrows(),
                    matrix.ncols()
                ),
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("covariance", "non-finite entry"));
        }
        let asym = symmetry_error(&matrix);
        let scale = matrix.abs().max().max(1.0);
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::invalid(
                "covariance",
                format!("not symmetric (max asymmetry {asym:e})"),
            ));
        }
        if Cholesky::new(matrix.clone()).is_none() {
            return Err(Error::invalid("covariance", "not positive definite"));
        }
        Ok(Self { basis, matrix })
    }

    pub fn identity(basis: Basis, dimension: usize) -> Self {
        Self {
            basis,
            matrix: DMatrix::identity(dimension, dimension),
        }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

pub(crate) fn symmetry_error(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Classical mean amplitudes `⟨x_i⟩` with a global photon-flux scale.
/// Photon numbers are `⟨n_i⟩ = flux · ⟨x_i⟩² / Σ⟨x⟩²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    basis: Basis,
    amplitudes: Vec<f64>,
    total_flux: f64,
}

impl MeanField {
    pub fn new(basis: Basis, amplitudes: Vec<f64>, total_flux: f64) -> Result<Self> {
        if amplitudes.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::invalid(
                "mean field",
                "amplitudes must be finite and non-negative",
            ));
        }
        if !amplitudes.iter().any(|a| *a > 0.0) {
            return Err(Error::invalid(
                "mean field",
                "at least one amplitude must be nonzero",
            ));
        }
        if !(total_flux.is_finite() && total_flux > 0.0) {
            return Err(Error::invalid(
                "mean field",
                format!("total flux must be positive, got {total_flux}"),
            ));
        }
        Ok(Self {
            basis,
            amplitudes,
            total_flux,
        })
    }

    /// Tooth-basis mean field from a signal-axis spectrum.
    pub fn from_spectrum(spectrum: &SpectralAmplitude, total_flux: f64) -> Result<Self> {
        if spectrum.axis() != SpectralAxis::Signal {
            return Err(Error::invalid(
                "mean field",
                "spectrum must be on the signal axis",
            ));
        }
        Self::new(Basis::Tooth, spectrum.amplitudes().to_vec(), total_flux)
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn total_flux(&self) -> f64 {
        self.total_flux
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn photon_numbers(&self) -> Vec<f64> {
        let norm: f64 = self.amplitudes.iter().map(|a| a * a).sum();
        self.amplitudes
            .iter()
            .map(|a| self.total_flux * a * a / norm)
            .collect()
    }
}

/// `V = U·diag(s)·Uᵀ + (I - U·Uᵀ)`: supermodes carry their amplitude
/// variance, the orthogonal complement is vacuum.
pub fn assemble_x_covariance(modes: &SupermodeSet) -> Result<QuadratureCovariance> {
    let u = modes.modes();
    let err = orthonormality_error(u);
    if !(err < ORTHONORMALITY_TOL) {
        return Err(Error::invalid(
            "supermodes",
            format!("columns not orthonormal (max |UᵀU - I| = {err:e})"),
        ));
    }
    let deviations: Vec<f64> = modes
        .amplitude_variances()
        .iter()
        .map(|s| s - 1.0)
        .collect();
    let n = u.nrows();
    let mut v = DMatrix::identity(n, n) + low_rank(u, &deviations);
    symmetrize(&mut v);
    QuadratureCovariance::new(Basis::Tooth, v)
}

/// `U·diag(d)·Uᵀ`.
fn low_rank(u: &DMatrix<f64>, diag: &[f64]) -> DMatrix<f64> {
    let mut scaled = u.clone();
    for (k, d) in diag.iter().enumerate() {
        scaled.column_mut(k).scale_mut(*d);
    }
    scaled * u.transpose()
}

/// Add classical excess noise `e_k ≥ 0` to the amplitude quadrature of each
/// supermode (`V + U·diag(e)·Uᵀ`). Missing entries count as zero.
pub fn add_excess_noise(
    v: &QuadratureCovariance,
    modes: &SupermodeSet,
    excess: &[f64],
) -> Result<QuadratureCovariance> {
    if v.basis() != Basis::Tooth || v.dimension() != modes.grid().tooth_count() {
        return Err(Error::invalid(
            "excess noise",
            "covariance must be in the tooth basis of the supermode grid",
        ));
    }
    if excess.len() > modes.len() {
        return Err(Error::invalid(
            "excess noise",
            format!(
                "{} values given for {} supermodes",
                excess.len(),
                modes.len()
            ),
        ));
    }
    if excess.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::invalid(
            "excess noise",
            "values must be finite and non-negative",
        ));
    }
    if excess.iter().all(|e| *e == 0.0) {
        return Ok(v.clone());
    }
    let mut padded = excess.to_vec();
    padded.resize(modes.len(), 0.0);
    let mut m = v.matrix() + low_rank(modes.modes(), &padded);
    symmetrize(&mut m);
    QuadratureCovariance::new(Basis::Tooth, m)
}

/// Beam-splitter loss: `V' = η·V + (1 - η)·I`.
pub fn apply_loss(v: &QuadratureCovariance, efficiency: f64) -> Result<QuadratureCovariance> {
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(Error::invalid(
            "efficiency",
            format!("must be in [0, 1], got {efficiency}"),
        ));
    }
    let n = v.dimension();
    let m = v.matrix() * efficiency + DMatrix::identity(n, n) * (1.0 - efficiency);
    QuadratureCovariance::new(v.basis(), m)
}

/// How each pixel's detection mode weights the teeth it contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelWeighting {
    /// Teeth weighted by their mean-field amplitude.
    #[default]
    MeanField,
    Uniform,
}

/// Normalized detection-mode vectors `d_i` over the teeth of each pixel,
/// stored as `(first tooth position, weights)`.
pub fn detection_modes(
    mean: &MeanField,
    partition: &PixelPartition,
    weighting: PixelWeighting,
) -> Result<Vec<(usize, Vec<f64>)>> {
    if mean.basis() != Basis::Tooth || mean.len() != partition.grid().tooth_count() {
        return Err(Error::invalid(
            "mean field",
            "must be in the tooth basis of the partition grid",
        ));
    }
    let x = mean.amplitudes();
    partition
        .ranges()
        .iter()
        .enumerate()
        .map(|(i, range)| {
            let slice = &x[range.clone()];
            let norm = slice.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::invalid(
                    "pixel partition",
                    format!("pixel {} has zero mean power", i + 1),
                ));
            }
            let weights = match weighting {
                PixelWeighting::MeanField => slice.iter().map(|a| a / norm).collect(),
                PixelWeighting::Uniform => vec![(slice.len() as f64).sqrt().recip(); slice.len()],
            };
            Ok((range.start, weights))
        })
        .collect()
}

/// Project a tooth-basis covariance and mean field onto the pixel detection
/// modes: `V_pixel(i, j) = d_iᵀ·V·d_j`, `⟨x_i⟩ = ‖⟨x⟩ restricted to pixel i‖`.
pub fn pixel_reduce(
    v: &QuadratureCovariance,
    mean: &MeanField,
    partition: &PixelPartition,
    weighting: PixelWeighting,
) -> Result<(QuadratureCovariance, MeanField)> {
    if v.basis() != Basis::Tooth || v.dimension() != mean.len() {
        return Err(Error::invalid(
            "covariance",
            "must be in the tooth basis matching the mean field",
        ));
    }
    let modes = detection_modes(mean, partition, weighting)?;
    let m = modes.len();
    let full = v.matrix();
    let mut reduced = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let (si, ref di) = modes[i];
            let (sj, ref dj) = modes[j];
            let mut acc = 0.0;
            for (a, wa) in di.iter().enumerate() {
                let row = si + a;
                let mut inner = 0.0;
                for (b, wb) in dj.iter().enumerate() {
                    inner += full[(row, sj + b)] * wb;
                }
                acc += wa * inner;
            }
            reduced[(i, j)] = acc;
            reduced[(j, i)] = acc;
        }
    }
    let x = mean.amplitudes();
    let pixel_mean: Vec<f64> = partition
        .ranges()
        .iter()
        .map(|r| x[r.clone()].iter().map(|a| a * a).sum::<f64>().sqrt())
        .collect();
    Ok((
        QuadratureCovariance::new(Basis::Pixel, reduced)?,
        MeanField::new(Basis::Pixel, pixel_mean, mean.total_flux())?,
    ))
}

/// `cov(n_i, n_j) = ⟨x_i⟩⟨x_j⟩·V(i, j)` with `⟨x_i⟩²` scaled to photon numbers.
pub fn photon_covariance_forward(
    v: &QuadratureCovariance,
    mean: &MeanField,
) -> Result<PhotonCovariance> {
    if v.basis() != Basis::Pixel || mean.basis() != Basis::Pixel {
        return Err(Error::invalid(
            "photon covariance",
            "inputs must be in the pixel basis",
        ));
    }
    if v.dimension() != mean.len() {
        return Err(Error::invalid(
            "photon covariance",
            format!(
                "covariance dimension {} but {} pixel means",
                v.dimension(),
                mean.len()
            ),
        ));
    }
    let photons = mean.photon_numbers();
    if photons.iter().any(|n| *n <= 0.0) {
        return Err(Error::invalid(
            "photon covariance",
            "every pixel needs positive mean power",
        ));
    }
    let amp: Vec<f64> = photons.iter().map(|n| n.sqrt()).collect();
    let m = v.dimension();
    let cov = DMatrix::from_fn(m, m, |i, j| amp[i] * amp[j] * v.matrix()[(i, j)]);
    PhotonCovariance::new(cov, photons)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comb::{build_grid, decompose_supermodes, CouplingMatrix};
    use crate::measurement::PixelPartition;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
        let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Supermode set whose single mode is `v` (normalized), with variance `s`.
    fn single_mode(v: &[f64], s: f64) -> SupermodeSet {
        let n = v.len();
        let grid = build_grid(795e-9, 1e11, n).unwrap();
        let u = DVector::from_row_slice(v).normalize();
        let l = CouplingMatrix::new(grid, &u * u.transpose()).unwrap();
        decompose_supermodes(&l, 1)
            .unwrap()
            .with_amplitude_variances(vec![s])
            .unwrap()
    }

    #[test]
    fn vacuum_modes_give_identity() {
        let set = single_mode(&[1.0, 2.0, 1.0, 0.5, 0.1], 1.0);
        let v = assemble_x_covariance(&set).unwrap();
        assert_relative_eq!(v.matrix(), &DMatrix::identity(5, 5), epsilon = 1e-15);
    }

    #[test]
    fn single_squeezed_mode_spectrum() {
        let raw = [1.0, 2.0, 3.0, 2.0, 1.0];
        let set = single_mode(&raw, 0.5);
        let v = assemble_x_covariance(&set).unwrap();
        let ev = eigenvalues(v.matrix());
        assert_relative_eq!(ev[0], 0.5, epsilon = 1e-12);
        for e in &ev[1..] {
            assert_relative_eq!(*e, 1.0, epsilon = 1e-12);
        }
        let u = DVector::from_row_slice(&raw).normalize();
        assert_relative_eq!((v.matrix() * &u - &u * 0.5).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_identity() {
        let grid = build_grid(795e-9, 1e11, 9).unwrap();
        let d: Vec<f64> = (0..9).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let l = CouplingMatrix::new(grid, DMatrix::from_diagonal(&DVector::from_vec(d))).unwrap();
        let s = vec![0.4, 1.7, 0.6, 1.2];
        let set = decompose_supermodes(&l, 4)
            .unwrap()
            .with_amplitude_variances(s.clone())
            .unwrap();
        let v = assemble_x_covariance(&set).unwrap();
        let expected = 9.0 + s.iter().map(|x| x - 1.0).sum::<f64>();
        assert_relative_eq!(v.matrix().trace(), expected, epsilon = 1e-12);
    }

    #[test]
    fn loss_limits_and_scalar_map() {
        let set = single_mode(&[1.0, 1.0, 1.0], 0.5);
        let v = assemble_x_covariance(&set).unwrap();
        assert_eq!(apply_loss(&v, 1.0).unwrap().matrix(), v.matrix());
        assert_relative_eq!(
            apply_loss(&v, 0.0).unwrap().matrix(),
            &DMatrix::identity(3, 3),
            epsilon = 0.0
        );
        let lossy = apply_loss(&v, 0.9).unwrap();
        assert_relative_eq!(eigenvalues(lossy.matrix())[0], 0.55, epsilon = 1e-12);
        assert!(apply_loss(&v, 1.1).is_err());
        assert!(apply_loss(&v, -0.1).is_err());
    }

    #[test]
    fn excess_noise_raises_mode_variance() {
        let set = single_mode(&[1.0, 2.0, 1.0], 0.5);
        let v = assemble_x_covariance(&set).unwrap();
        let noisy = add_excess_noise(&v, &set, &[0.25]).unwrap();
        assert_relative_eq!(eigenvalues(noisy.matrix())[0], 0.75, epsilon = 1e-12);
        assert!(add_excess_noise(&v, &set, &[-0.1]).is_err());
    }

    #[test]
    fn covariance_validation() {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.1;
        assert!(QuadratureCovariance::new(Basis::Pixel, m).is_err());
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5, 1.0]));
        assert!(QuadratureCovariance::new(Basis::Pixel, m).is_err());
    }

    fn equal_power_setup() -> (MeanField, PixelPartition) {
        // 12 teeth, 4 pixels of 3 teeth, each pixel holding the same power
        let grid = build_grid(795e-9, 1e11, 13).unwrap();
        let x = vec![
            0.1, 0.3, 0.5, 0.2, 0.4, 0.3, 0.5, 0.1, 0.3, 0.3, 0.4, 0.1, 0.2,
        ];
        // pixel powers: [0.35, 0.29, 0.35, 0.26, ...] rebalanced below
        let ranges = vec![0..3, 3..6, 6..9, 9..13];
        let mut x = x;
        for r in &ranges {
            let p: f64 = x[r.clone()].iter().map(|a| a * a).sum();
            for a in &mut x[r.clone()] {
                *a /= p.sqrt();
            }
        }
        let part = PixelPartition::from_ranges(grid, ranges, 1.8e-9).unwrap();
        (MeanField::new(Basis::Tooth, x, 1.0e6).unwrap(), part)
    }

    #[test]
    fn vacuum_reduces_to_identity_exactly() {
        let (mean, part) = equal_power_setup();
        let v = QuadratureCovariance::identity(Basis::Tooth, 13);
        for w in [PixelWeighting::MeanField, PixelWeighting::Uniform] {
            let (vp, _) = pixel_reduce(&v, &mean, &part, w).unwrap();
            assert_relative_eq!(vp.matrix(), &DMatrix::identity(4, 4), epsilon = 1e-15);
        }
    }

    #[test]
    fn rank_one_projection_oracle() {
        let (mean, part) = equal_power_setup();
        let s = 0.6;
        let set = single_mode(mean.amplitudes(), s);
        let v = assemble_x_covariance(&set).unwrap();
        let (vp, mp) = pixel_reduce(&v, &mean, &part, PixelWeighting::MeanField).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 } + (s - 1.0) / 4.0;
                assert_relative_eq!(vp.matrix()[(i, j)], expected, epsilon = 1e-12);
            }
        }
        for a in mp.amplitudes() {
            assert_relative_eq!(*a, 1.0, epsilon = 1e-12);
        }

        let photons = photon_covariance_forward(&vp, &mp).unwrap();
        let cov = photons.covariance();
        let off = cov[(0, 1)];
        for i in 0..4 {
            assert_relative_eq!(cov[(i, i)], cov[(0, 0)], max_relative = 1e-12);
            for j in 0..4 {
                if i != j {
                    assert_relative_eq!(cov[(i, j)], off, max_relative = 1e-12);
                }
            }
        }
        // full-beam NIN equals the mode's variance when the mode is the mean field
        let nin = cov.sum() / photons.mean_photons().iter().sum::<f64>();
        assert_relative_eq!(nin, s, max_relative = 1e-12);
    }

    #[test]
    fn coherent_state_is_shot_limited() {
        let v = QuadratureCovariance::identity(Basis::Pixel, 3);
        let mean = MeanField::new(Basis::Pixel, vec![1.0, 2.0, 3.0], 14.0).unwrap();
        let photons = photon_covariance_forward(&v, &mean).unwrap();
        let expected = [1.0, 4.0, 9.0];
        for i in 0..3 {
            assert_relative_eq!(
                photons.covariance()[(i, i)],
                expected[i],
                max_relative = 1e-12
            );
            assert_relative_eq!(
                photons.shot_variances()[i],
                expected[i],
                max_relative = 1e-12
            );
            for j in 0..3 {
                if i != j {
                    assert_eq!(photons.covariance()[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_power_pixel_rejected() {
        let grid = build_grid(795e-9, 1e11, 5).unwrap();
        let mean = MeanField::new(Basis::Tooth, vec![0.0, 0.0, 1.0, 1.0, 1.0], 1.0).unwrap();
        let part = PixelPartition::from_ranges(grid, vec![0..2, 2..5], 1.8e-9).unwrap();
        let v = QuadratureCovariance::identity(Basis::Tooth, 5);
        assert!(pixel_reduce(&v, &mean, &part, PixelWeighting::MeanField).is_err());
    }
}
