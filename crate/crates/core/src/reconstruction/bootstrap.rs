use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    arrange_records, correlation_entries, covariance_from_interval_sums, quadrature_entries,
    EigenmodeReport, EigenvalueInterval,
};
use crate::error::{Error, Result};
use crate::measurement::MeasurementRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMode {
    /// Resample each interval's data points with replacement and re-average.
    #[default]
    PerPoint,
    /// Each interval contributes one randomly picked data point per resample.
    Element,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSettings {
    pub resamples: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: BootstrapMode,
}

pub const MIN_RESAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    pub seed: u64,
    pub mode: BootstrapMode,
    /// Average over the upper-triangle elements of their bootstrap means in the eigenbasis.
    pub off_diagonal_mean: f64,
    /// Root-mean-square of the per-element bootstrap spreads over the upper triangle.
    pub off_diagonal_spread: f64,
    /// Element-wise mean of the resampled covariance rotated into the eigenbasis.
    pub rotated_mean: Vec<Vec<f64>>,
    pub rotated_spread: Vec<Vec<f64>>,
    /// Element-wise mean and spread of the resampled correlation matrix.
    pub correlation_mean: Vec<Vec<f64>>,
    pub correlation_spread: Vec<Vec<f64>>,
}

/// Mean and sample standard deviation, computed on data shifted by the first
/// value so that constant input gives exactly zero spread.
fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut iter = values.clone();
    let Some(shift) = iter.next() else {
        return (f64::NAN, f64::NAN);
    };
    let (mut n, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
    for v in values {
        let d = v - shift;
        n += 1;
        sum += d;
        sum_sq += d * d;
    }
    let mean = shift + sum / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - sum * sum / n as f64) / (n - 1) as f64).max(0.0);
    (mean, var.sqrt())
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Resample the measurement data, re-solve each resample for the quadrature
/// covariance, rotate it into the report's eigenbasis, and attach the spread
/// of every element. Eigenvalue intervals are `mean ± 2·spread` of the
/// rotated diagonal.
///
/// Resample `r` draws from stream `r` of a ChaCha8 generator seeded with
/// `settings.seed`; results do not depend on thread scheduling.
pub fn bootstrap(
    records: &[MeasurementRecord],
    pixels: usize,
    report: &EigenmodeReport,
    settings: &BootstrapSettings,
) -> Result<EigenmodeReport> {
    if settings.resamples < MIN_RESAMPLES {
        return Err(Error::invalid(
            "bootstrap resamples",
            format!(
                "must be at least {MIN_RESAMPLES}, got {}",
                settings.resamples
            ),
        ));
    }
    if report.modes.len() != pixels {
        return Err(Error::invalid(
            "bootstrap",
            format!(
                "report has {} modes for {pixels} pixels",
                report.modes.len()
            ),
        ));
    }
    let arranged = arrange_records(records, pixels)?;
    if let Some(r) = arranged.iter().find(|r| r.sample_count() < 2) {
        return Err(Error::invalid(
            "bootstrap",
            format!("interval {} has fewer than 2 samples", r.interval()),
        ));
    }
    let basis = report.basis();
    let basis_t = basis.transpose();

    let draws: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..settings.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream(r as u64);
            let mut noise = Vec::with_capacity(arranged.len());
            let mut shot = Vec::with_capacity(arranged.len());
            for rec in &arranged {
                let n = rec.sample_count();
                let (ns, ss) = (rec.noise_samples(), rec.shot_samples());
                match settings.mode {
                    BootstrapMode::PerPoint => {
                        let (mut a, mut b) = (0.0, 0.0);
                        for _ in 0..n {
                            let k = rng.random_range(0..n);
                            a += ns[k];
                            b += ss[k];
                        }
                        noise.push(a / n as f64);
                        shot.push(b / n as f64);
                    }
                    BootstrapMode::Element => {
                        let k = rng.random_range(0..n);
                        noise.push(ns[k]);
                        shot.push(ss[k]);
                    }
                }
            }
            let cov = covariance_from_interval_sums(pixels, &noise);
            let shots = &shot[..pixels];
            let v = quadrature_entries(&cov, shots);
            (&basis_t * v * &basis, correlation_entries(&cov, shots))
        })
        .collect();

    let element = |which: usize, i: usize, j: usize| {
        draws
            .iter()
            .map(move |d| if which == 0 { d.0[(i, j)] } else { d.1[(i, j)] })
    };
    let mut rotated_mean = DMatrix::zeros(pixels, pixels);
    let mut rotated_spread = DMatrix::zeros(pixels, pixels);
    let mut correlation_mean = DMatrix::zeros(pixels, pixels);
    let mut correlation_spread = DMatrix::zeros(pixels, pixels);
    for i in 0..pixels {
        for j in 0..pixels {
            let (m, s) = moments(element(0, i, j));
            rotated_mean[(i, j)] = m;
            rotated_spread[(i, j)] = s;
            let (m, s) = moments(element(1, i, j));
            correlation_mean[(i, j)] = m;
            correlation_spread[(i, j)] = s;
        }
    }
    let upper_pairs: Vec<(usize, usize)> = (0..pixels)
        .flat_map(|i| (i + 1..pixels).map(move |j| (i, j)))
        .collect();
    let (off_mean, off_spread) = if upper_pairs.is_empty() {
        (0.0, 0.0)
    } else {
        let n = upper_pairs.len() as f64;
        let mean = upper_pairs
            .iter()
            .map(|&(i, j)| rotated_mean[(i, j)])
            .sum::<f64>()
            / n;
        let ms = upper_pairs
            .iter()
            .map(|&(i, j)| rotated_spread[(i, j)].powi(2))
            .sum::<f64>()
            / n;
        (mean, ms.sqrt())
    };

    let mut out = report.clone();
    for (k, mode) in out.modes.iter_mut().enumerate() {
        let interval =
            EigenvalueInterval::from_moments(rotated_mean[(k, k)], rotated_spread[(k, k)]);
        mode.verdict = Some(interval.verdict());
        mode.bootstrap = Some(interval);
    }
    out.bootstrap = Some(BootstrapSummary {
        resamples: settings.resamples,
        seed: settings.seed,
        mode: settings.mode,
        off_diagonal_mean: off_mean,
        off_diagonal_spread: off_spread,
        rotated_mean: to_rows(&rotated_mean),
        rotated_spread: to_rows(&rotated_spread),
        correlation_mean: to_rows(&correlation_mean),
        correlation_spread: to_rows(&correlation_spread),
    });
    Ok(out)
}
