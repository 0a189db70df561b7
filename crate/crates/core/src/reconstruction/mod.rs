//! Recovery of the pixel photon-number covariance from interval variances,
//! the normalized correlation and quadrature-covariance matrices, their
//! eigen-analysis, and bootstrap uncertainties.

mod bootstrap;

pub use bootstrap::{bootstrap, BootstrapMode, BootstrapSettings, BootstrapSummary, MIN_RESAMPLES};

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::comb::symmetric_eigen;
use crate::error::{Error, Result};
use crate::gaussian_state::{symmetry_error, Basis, MeanField, QuadratureCovariance};
use crate::measurement::{enumerate_intervals, Interval, MeasurementRecord};

/// Photon-number covariance between pixels with the mean photon numbers
/// (which are also the shot-noise variances).
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonCovariance {
    covariance: DMatrix<f64>,
    mean_photons: Vec<f64>,
}

impl PhotonCovariance {
    pub fn new(covariance: DMatrix<f64>, mean_photons: Vec<f64>) -> Result<Self> {
        let m = mean_photons.len();
        if m == 0 || covariance.nrows() != m || covariance.ncols() != m {
            return Err(Error::invalid(
                "photon covariance",
                format!(
                    "{}x{} matrix with {m} mean values",
                    covariance.nrows(),
                    covariance.ncols()
                ),
            ));
        }
        if covariance
            .iter()
            .chain(&mean_photons)
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("photon covariance", "non-finite entry"));
        }
        let scale = covariance.abs().max().max(f64::MIN_POSITIVE);
        if symmetry_error(&covariance) > 1e-12 * scale {
            return Err(Error::invalid("photon covariance", "not symmetric"));
        }
        if (0..m).any(|i| covariance[(i, i)] <= 0.0) {
            return Err(Error::invalid(
                "photon covariance",
                "variances must be positive",
            ));
        }
        if mean_photons.iter().any(|n| *n <= 0.0) {
            return Err(Error::invalid(
                "photon covariance",
                "mean photon numbers must be positive",
            ));
        }
        Ok(Self {
            covariance,
            mean_photons,
        })
    }

    pub fn dimension(&self) -> usize {
        self.mean_photons.len()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn mean_photons(&self) -> &[f64] {
        &self.mean_photons
    }

    /// `Δn²_shot,i = ⟨n_i⟩`.
    pub fn shot_variances(&self) -> &[f64] {
        &self.mean_photons
    }

    /// Pixel-basis mean field with `⟨x_i⟩ = √⟨n_i⟩`.
    pub fn mean_field(&self) -> Result<MeanField> {
        MeanField::new(
            Basis::Pixel,
            self.mean_photons.iter().map(|n| n.sqrt()).collect(),
            self.mean_photons.iter().sum(),
        )
    }

    /// Normalized intensity noise of the whole beam, `Σ cov / Σ⟨n⟩`.
    pub fn full_beam_nin(&self) -> f64 {
        self.covariance.sum() / self.mean_photons.iter().sum::<f64>()
    }
}

/// Position of the contiguous interval `[first, last]` in
/// `enumerate_intervals(pixels)` order.
pub(crate) fn interval_index(pixels: usize, first: usize, last: usize) -> usize {
    let len = last - first + 1;
    // intervals of length l number pixels - l + 1
    let before: usize = (1..len).map(|l| pixels - l + 1).sum();
    before + first
}

/// Invert `S(a, b) = Σ_{i,j ∈ [a,b]} cov(i, j)` by inclusion-exclusion.
/// `noise` holds interval sums in `enumerate_intervals` order.
pub(crate) fn covariance_from_interval_sums(pixels: usize, noise: &[f64]) -> DMatrix<f64> {
    let s = |a: usize, b: usize| -> f64 {
        if a > b {
            0.0
        } else {
            noise[interval_index(pixels, a, b)]
        }
    };
    let mut cov = DMatrix::zeros(pixels, pixels);
    for a in 0..pixels {
        cov[(a, a)] = s(a, a);
        for b in a + 1..pixels {
            let inner = if a < b - 1 { s(a + 1, b - 1) } else { 0.0 };
            let value = 0.5 * (s(a, b) - s(a + 1, b) - s(a, b - 1) + inner);
            cov[(a, b)] = value;
            cov[(b, a)] = value;
        }
    }
    cov
}

/// Order records by `enumerate_intervals(pixels)`, failing on a missing,
/// duplicated or out-of-range interval.
pub fn arrange_records(
    records: &[MeasurementRecord],
    pixels: usize,
) -> Result<Vec<&MeasurementRecord>> {
    if pixels < 1 {
        return Err(Error::invalid("pixel count", "must be at least 1"));
    }
    let mut by_interval: HashMap<Interval, &MeasurementRecord> = HashMap::new();
    for r in records {
        if r.interval().last() >= pixels {
            return Err(Error::invalid(
                "measurement records",
                format!("interval {} exceeds {pixels} pixels", r.interval()),
            ));
        }
        if by_interval.insert(r.interval(), r).is_some() {
            return Err(Error::invalid(
                "measurement records",
                format!("interval {} appears more than once", r.interval()),
            ));
        }
    }
    enumerate_intervals(pixels)
        .into_iter()
        .map(|i| {
            by_interval.get(&i).copied().ok_or_else(|| {
                Error::MissingInput(format!("no measurement record for interval {i}"))
            })
        })
        .collect()
}

/// Photon covariance from per-interval mean noise levels (in
/// `enumerate_intervals` order) and singleton shot levels.
pub(crate) fn photon_covariance_from_means(
    pixels: usize,
    noise_means: &[f64],
    singleton_shots: &[f64],
) -> Result<PhotonCovariance> {
    let cov = covariance_from_interval_sums(pixels, noise_means);
    PhotonCovariance::new(cov, singleton_shots.to_vec())
}

/// Solve interval variances for the pixel photon covariance. Requires a
/// record for every contiguous interval of `pixels` pixels.
pub fn solve_photon_covariance(
    records: &[MeasurementRecord],
    pixels: usize,
) -> Result<PhotonCovariance> {
    if pixels < 2 {
        return Err(Error::invalid(
            "pixel count",
            format!("must be at least 2, got {pixels}"),
        ));
    }
    let arranged = arrange_records(records, pixels)?;
    let means: Vec<_> = arranged.iter().map(|r| r.means()).collect();
    let noise: Vec<f64> = means.iter().map(|m| m.noise).collect();
    let shots: Vec<f64> = means[..pixels].iter().map(|m| m.shot).collect();
    photon_covariance_from_means(pixels, &noise, &shots)
}

/// Interval noise sums recomputed from a covariance, in `enumerate_intervals` order.
pub fn resum_intervals(photons: &PhotonCovariance) -> Vec<f64> {
    let cov = photons.covariance();
    enumerate_intervals(photons.dimension())
        .into_iter()
        .map(|iv| {
            let mut acc = 0.0;
            for i in iv.pixels() {
                for j in iv.pixels() {
                    acc += cov[(i, j)];
                }
            }
            acc
        })
        .collect()
}

/// Normalized photon-number correlations; zero for a shot-limited beam.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    matrix: DMatrix<f64>,
}

impl CorrelationMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }
}

pub(crate) fn correlation_entries(cov: &DMatrix<f64>, shots: &[f64]) -> DMatrix<f64> {
    let m = shots.len();
    DMatrix::from_fn(m, m, |i, j| {
        let base = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
        if i == j {
            base - shots[i] / cov[(i, i)]
        } else {
            base
        }
    })
}

/// `C(i,j) = cov(n_i,n_j)/√(Δn_i²Δn_j²) − δ_ij·Δn²_shot,i/Δn_i²`.
pub fn correlation_matrix(photons: &PhotonCovariance) -> CorrelationMatrix {
    CorrelationMatrix {
        matrix: correlation_entries(photons.covariance(), photons.shot_variances()),
    }
}

pub(crate) fn quadrature_entries(cov: &DMatrix<f64>, shots: &[f64]) -> DMatrix<f64> {
    let m = shots.len();
    DMatrix::from_fn(m, m, |i, j| cov[(i, j)] / (shots[i] * shots[j]).sqrt())
}

/// `V(i,j) = cov(n_i,n_j)/√(Δn²_shot,i·Δn²_shot,j)`.
pub fn quadrature_covariance(photons: &PhotonCovariance) -> Result<QuadratureCovariance> {
    let v = quadrature_entries(photons.covariance(), photons.shot_variances());
    QuadratureCovariance::new(Basis::Pixel, v).map_err(|e| match e {
        Error::InvalidInput { reason, .. } => {
            Error::Numerical(format!("reconstructed quadrature covariance: {reason}"))
        }
        other => other,
    })
}

/// `10·log10(nin)`; negative values are noise reduction.
pub fn nin_to_db(nin: f64) -> Result<f64> {
    if !(nin.is_finite() && nin > 0.0) {
        return Err(Error::invalid(
            "normalized intensity noise",
            format!("must be positive, got {nin}"),
        ));
    }
    Ok(10.0 * nin.log10())
}

/// Noise reduction in dB below the shot-noise level (positive when squeezed).
pub fn noise_reduction_db(nin: f64) -> Result<f64> {
    nin_to_db(nin).map(|db| -db)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeOrdering {
    /// Descending share of the optical power.
    #[default]
    PowerFraction,
    /// Ascending eigenvalue.
    Eigenvalue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Squeezed,
    ExcessNoise,
    ConsistentWithVacuum,
}

/// Bootstrap statistics of one eigenmode's normalized intensity noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvalueInterval {
    pub mean: f64,
    pub spread: f64,
    pub lower: f64,
    pub upper: f64,
}

impl EigenvalueInterval {
    /// `mean ± 2·spread`.
    pub fn from_moments(mean: f64, spread: f64) -> Self {
        Self {
            mean,
            spread,
            lower: mean - 2.0 * spread,
            upper: mean + 2.0 * spread,
        }
    }

    /// Bounds within `VERDICT_TOL` of 1 count as touching the vacuum level,
    /// so rounding in a noiseless reconstruction does not produce a verdict.
    pub fn verdict(&self) -> Verdict {
        if self.upper < 1.0 - VERDICT_TOL {
            Verdict::Squeezed
        } else if self.lower > 1.0 + VERDICT_TOL {
            Verdict::ExcessNoise
        } else {
            Verdict::ConsistentWithVacuum
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenmode {
    /// `S1`, `S2`, ... in report order.
    pub label: String,
    /// Normalized intensity noise (eigenvalue of V).
    pub nin: f64,
    pub nin_db: f64,
    pub power_fraction: f64,
    /// Components over pixels; first nonzero component positive.
    pub vector: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<EigenvalueInterval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenmodeReport {
    pub ordering: ModeOrdering,
    pub modes: Vec<Eigenmode>,
    /// Groups of report indices whose eigenvalues agree within 1e-8; their
    /// eigenvectors are not individually meaningful.
    pub degenerate_groups: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSummary>,
}

impl EigenmodeReport {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.nin).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate_groups.is_empty()
    }

    /// Eigenvectors as columns, in report order.
    pub fn basis(&self) -> DMatrix<f64> {
        let m = self.modes.len();
        DMatrix::from_fn(m, m, |i, k| self.modes[k].vector[i])
    }
}

pub const DEGENERACY_TOL: f64 = 1e-8;

pub const VERDICT_TOL: f64 = 1e-9;

/// Diagonalize the pixel covariance: eigenvalues are the modes' normalized
/// intensity noise; power fraction is `(S·⟨x⟩)²/‖⟨x⟩‖²`.
pub fn eigen_analysis(
    v: &QuadratureCovariance,
    mean: &MeanField,
    ordering: ModeOrdering,
) -> Result<EigenmodeReport> {
    let matrix = v.matrix();
    let m = v.dimension();
    if v.basis() != Basis::Pixel || mean.basis() != Basis::Pixel || mean.len() != m {
        return Err(Error::invalid(
            "eigen analysis",
            "covariance and mean field must share the pixel basis",
        ));
    }
    if symmetry_error(matrix) > 1e-12 * matrix.abs().max().max(1.0) {
        return Err(Error::invalid(
            "eigen analysis",
            "covariance is not symmetric",
        ));
    }
    let (values, vectors) = symmetric_eigen(matrix)?;
    let x = DVector::from_row_slice(mean.amplitudes());
    let x_norm2 = x.norm_squared();

    let mut modes: Vec<Eigenmode> = (0..m)
        .map(|k| {
            let mut vec: Vec<f64> = vectors.column(k).iter().copied().collect();
            let max = vec.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if let Some(first) = vec.iter().find(|c| c.abs() > 1e-12 * max) {
                if *first < 0.0 {
                    vec.iter_mut().for_each(|c| *c = -*c);
                }
            }
            let proj: f64 = vec.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            Ok(Eigenmode {
                label: String::new(),
                nin: values[k],
                nin_db: if values[k] > 0.0 {
                    nin_to_db(values[k])?
                } else {
                    f64::NAN
                },
                power_fraction: proj * proj / x_norm2,
                vector: vec,
                bootstrap: None,
                verdict: None,
            })
        })
        .collect::<Result<_>>()?;

    match ordering {
        ModeOrdering::PowerFraction => modes.sort_by(|a, b| {
            b.power_fraction
                .total_cmp(&a.power_fraction)
                .then(a.nin.total_cmp(&b.nin))
        }),
        ModeOrdering::Eigenvalue => modes.sort_by(|a, b| a.nin.total_cmp(&b.nin)),
    }
    for (k, mode) in modes.iter_mut().enumerate() {
        mode.label = format!("S{}", k + 1);
    }

    let mut degenerate_groups: Vec<Vec<usize>> = Vec::new();
    let mut by_value: Vec<usize> = (0..m).collect();
    by_value.sort_by(|&a, &b| modes[a].nin.total_cmp(&modes[b].nin));
    let mut current = vec![by_value[0]];
    for w in by_value.windows(2) {
        if (modes[w[1]].nin - modes[w[0]].nin).abs() <= DEGENERACY_TOL {
            current.push(w[1]);
        } else {
            if current.len() > 1 {
                current.sort_unstable();
                degenerate_groups.push(std::mem::take(&mut current));
            }
            current = vec![w[1]];
        }
    }
    if current.len() > 1 {
        current.sort_unstable();
        degenerate_groups.push(current);
    }

    Ok(EigenmodeReport {
        ordering,
        modes,
        degenerate_groups,
        bootstrap: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{interval_variance_expectation, MeasurementRecord};
    use approx::assert_relative_eq;

    fn records_from(photons: &PhotonCovariance) -> Vec<MeasurementRecord> {
        enumerate_intervals(photons.dimension())
            .into_iter()
            .map(|iv| {
                let e = interval_variance_expectation(photons, iv).unwrap();
                MeasurementRecord::new(iv, vec![e.noise; 3], vec![e.shot; 3]).unwrap()
            })
            .collect()
    }

    #[test]
    fn two_pixel_inclusion_exclusion() {
        let records = vec![
            MeasurementRecord::new(Interval::single(0), vec![1.0, 1.0], vec![1.0, 1.0]).unwrap(),
            MeasurementRecord::new(Interval::single(1), vec![1.0, 1.0], vec![1.0, 1.0]).unwrap(),
            MeasurementRecord::new(Interval::new(0, 1).unwrap(), vec![4.0, 4.0], vec![2.0, 2.0])
                .unwrap(),
        ];
        let p = solve_photon_covariance(&records, 2).unwrap();
        assert_eq!(p.covariance()[(0, 1)], 1.0);
        assert_eq!(p.covariance()[(1, 0)], 1.0);
    }

    #[test]
    fn interval_index_matches_enumeration() {
        for m in 1..8 {
            for (k, iv) in enumerate_intervals(m).iter().enumerate() {
                assert_eq!(interval_index(m, iv.first(), iv.last()), k);
            }
        }
    }

    #[test]
    fn exact_recovery_of_known_covariance() {
        let cov = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, -0.1, 0.05, -0.2, //
                -0.1, 0.9, -0.03, 0.02, //
                0.05, -0.03, 1.2, -0.07, //
                -0.2, 0.02, -0.07, 0.8,
            ],
        ) * 250.0;
        let photons = PhotonCovariance::new(cov.clone(), vec![240.0, 260.0, 250.0, 255.0]).unwrap();
        let solved = solve_photon_covariance(&records_from(&photons), 4).unwrap();
        assert!((solved.covariance() - &cov).abs().max() < 1e-9);
        assert_eq!(solved.mean_photons(), photons.mean_photons());
        let resummed = resum_intervals(&solved);
        for (a, b) in resummed.iter().zip(resum_intervals(&photons)) {
            assert_relative_eq!(*a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn missing_interval_is_named() {
        let photons = PhotonCovariance::new(DMatrix::identity(3, 3), vec![1.0; 3]).unwrap();
        let mut records = records_from(&photons);
        records.retain(|r| r.interval().to_string() != "1-3");
        match solve_photon_covariance(&records, 3) {
            Err(Error::MissingInput(msg)) => assert!(msg.contains("1-3"), "{msg}"),
            other => panic!("expected missing input, got {other:?}"),
        }
    }

    #[test]
    fn coherent_state_correlations_vanish() {
        let photons = PhotonCovariance::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 5.0, 7.0])),
            vec![3.0, 5.0, 7.0],
        )
        .unwrap();
        let c = correlation_matrix(&photons);
        assert!(c.matrix().iter().all(|v| v.abs() < 1e-15));
        let v = quadrature_covariance(&photons).unwrap();
        assert_relative_eq!(v.matrix(), &DMatrix::identity(3, 3), epsilon = 1e-15);
    }

    #[test]
    fn single_mode_correlations_are_uniform() {
        // V = I + u·J with equal pixel powers
        let sigma = 0.865;
        let u = (sigma - 1.0) / 4.0;
        let n = 1000.0;
        let cov = DMatrix::from_fn(4, 4, |i, j| n * (if i == j { 1.0 } else { 0.0 } + u));
        let photons = PhotonCovariance::new(cov, vec![n; 4]).unwrap();
        let c = correlation_matrix(&photons);
        for v in c.matrix().iter() {
            assert_relative_eq!(*v, u / (1.0 + u), max_relative = 1e-12);
        }
        assert_relative_eq!(u / (1.0 + u), -0.035, epsilon = 1e-3);
        assert_relative_eq!(photons.full_beam_nin(), sigma, max_relative = 1e-12);
        let v = quadrature_covariance(&photons).unwrap();
        for i in 0..4 {
            assert_relative_eq!(v.matrix()[(i, i)], 1.0 + u, max_relative = 1e-12);
        }
    }

    #[test]
    fn db_conversion() {
        assert_relative_eq!(nin_to_db(0.76).unwrap(), -1.19, epsilon = 5e-3);
        assert_relative_eq!(noise_reduction_db(0.76).unwrap(), 1.19, epsilon = 5e-3);
        assert_eq!(nin_to_db(1.0).unwrap(), 0.0);
        assert_relative_eq!(nin_to_db(0.5).unwrap(), -3.0103, epsilon = 1e-4);
        assert!(nin_to_db(0.0).is_err());
        assert!(nin_to_db(-1.0).is_err());
    }

    fn pixel_mean(m: usize) -> MeanField {
        MeanField::new(Basis::Pixel, vec![1.0; m], m as f64).unwrap()
    }

    #[test]
    fn identity_is_flagged_degenerate() {
        let v = QuadratureCovariance::identity(Basis::Pixel, 4);
        let report = eigen_analysis(&v, &pixel_mean(4), ModeOrdering::PowerFraction).unwrap();
        assert!(report.eigenvalues().iter().all(|e| (e - 1.0).abs() < 1e-12));
        assert_eq!(report.degenerate_groups, vec![vec![0, 1, 2, 3]]);
        let total: f64 = report.modes.iter().map(|m| m.power_fraction).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn spectral_synthesis_recovers_eigenvalues() {
        let target = [0.8, 1.3, 0.9, 1.0];
        // rotate a diagonal matrix by an orthogonal basis
        let q = DMatrix::from_fn(4, 4, |i, j| ((i * 3 + j * 5 + 1) as f64).sin())
            .qr()
            .q();
        let v = &q * DMatrix::from_diagonal(&DVector::from_row_slice(&target)) * q.transpose();
        let mut v = v.clone();
        for i in 0..4 {
            for j in 0..i {
                v[(i, j)] = v[(j, i)];
            }
        }
        let v = QuadratureCovariance::new(Basis::Pixel, v).unwrap();
        let report = eigen_analysis(&v, &pixel_mean(4), ModeOrdering::Eigenvalue).unwrap();
        let mut expected = target.to_vec();
        expected.sort_by(f64::total_cmp);
        for (a, b) in report.eigenvalues().iter().zip(&expected) {
            assert_relative_eq!(*a, *b, epsilon = 1e-10);
        }
        let s = report.basis();
        assert!(
            ((s.transpose() * &s) - DMatrix::<f64>::identity(4, 4))
                .abs()
                .max()
                < 1e-10
        );
        for mode in &report.modes {
            let first = mode.vector.iter().find(|c| c.abs() > 1e-12).unwrap();
            assert!(*first > 0.0);
        }
        assert!(!report.is_degenerate());
    }

    #[test]
    fn power_ordering_puts_mean_field_mode_first() {
        let u = -0.1;
        let v = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.0 } + u);
        let v = QuadratureCovariance::new(Basis::Pixel, v).unwrap();
        let report = eigen_analysis(&v, &pixel_mean(4), ModeOrdering::PowerFraction).unwrap();
        assert_relative_eq!(report.modes[0].power_fraction, 1.0, epsilon = 1e-12);
        assert_relative_eq!(report.modes[0].nin, 1.0 + 4.0 * u, epsilon = 1e-12);
        assert_eq!(report.modes[0].label, "S1");
        // remaining three eigenvalues are degenerate at 1
        assert_eq!(report.degenerate_groups, vec![vec![1, 2, 3]]);
    }

    #[test]
    fn verdicts_from_intervals() {
        assert_eq!(
            EigenvalueInterval::from_moments(0.8, 0.05).verdict(),
            Verdict::Squeezed
        );
        assert_eq!(
            EigenvalueInterval::from_moments(1.3, 0.1).verdict(),
            Verdict::ExcessNoise
        );
        assert_eq!(
            EigenvalueInterval::from_moments(0.97, 0.02).verdict(),
            Verdict::ConsistentWithVacuum
        );
        for mean in [1.0 - 1e-15, 1.0, 1.0 + 1e-15] {
            assert_eq!(
                EigenvalueInterval::from_moments(mean, 0.0).verdict(),
                Verdict::ConsistentWithVacuum
            );
        }
    }
}
