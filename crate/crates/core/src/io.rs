//! File formats. Every CSV starts with a one-line JSON header carrying a
//! `schema` name and `version`; readers reject any other schema or version.
//! Floats are written in shortest round-trip form, so write-then-read is exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::comb::{FrequencyGrid, SupermodeSet};
use crate::error::{Error, Result};
use crate::gaussian_state::{
    detection_modes, Basis, MeanField, PixelWeighting, QuadratureCovariance,
};
use crate::measurement::{Interval, MeasurementRecord, PixelPartition};
use crate::reconstruction::EigenmodeReport;

pub const SCHEMA_VERSION: u64 = 1;
pub const SUPERMODES_SCHEMA: &str = "spopo-supermodes";
pub const COVARIANCE_SCHEMA: &str = "spopo-covariance";
pub const RECORDS_SCHEMA: &str = "spopo-records";
pub const EIGENMODES_SCHEMA: &str = "spopo-eigenmodes";
pub const PROFILES_SCHEMA: &str = "spopo-profiles";
pub const PARTITION_SCHEMA: &str = "spopo-partition";

const VARIANCE_ROWS: [&str; 4] = [
    "coupling_eigenvalue",
    "amplitude_variance",
    "squeezed_variance",
    "antisqueezed_variance",
];

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f64(path: &Path, line: usize, field: &str, text: &str) -> Result<f64> {
    text.trim().parse::<f64>().map_err(|_| {
        Error::format(
            path,
            format!("line {line}: {field} `{text}` is not a number"),
        )
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.display().to_string())
        } else {
            Error::io(path, e)
        }
    })
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Header line plus CSV rows, written as one file.
fn write_csv(path: &Path, header: &Value, columns: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = serde_json::to_string(header).expect("header serializes");
    out.push('\n');
    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::format(path, e.to_string());
    writer.write_record(columns).map_err(csv_err)?;
    for row in rows {
        writer.write_record(row).map_err(csv_err)?;
    }
    let body = writer
        .into_inner()
        .map_err(|e| Error::format(path, e.to_string()))?;
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    write_bytes(path, out.as_bytes())
}

struct CsvFile {
    header: serde_json::Map<String, Value>,
    columns: Vec<String>,
    /// `(line number, fields)`.
    rows: Vec<(usize, Vec<String>)>,
}

fn read_csv(path: &Path, schema: &str) -> Result<CsvFile> {
    let text = read_text(path)?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let header: Value = serde_json::from_str(first.trim_end_matches('\r'))
        .map_err(|e| Error::format(path, format!("line 1: header is not JSON ({e})")))?;
    let header = match header {
        Value::Object(map) => map,
        _ => return Err(Error::format(path, "line 1: header must be a JSON object")),
    };
    match header.get("schema").and_then(Value::as_str) {
        Some(s) if s == schema => {}
        Some(s) => {
            return Err(Error::format(
                path,
                format!("schema `{s}`, expected `{schema}`"),
            ))
        }
        None => return Err(Error::format(path, "header has no schema field")),
    }
    match header.get("version").and_then(Value::as_u64) {
        Some(SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(Error::format(
                path,
                format!("schema version {v}, this build reads version {SCHEMA_VERSION}"),
            ))
        }
        None => return Err(Error::format(path, "header has no version field")),
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(rest.as_bytes());
    let columns: Vec<String> = reader
        .headers()
        .map_err(|e| Error::format(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        // line 1 is the JSON header, line 2 the column names
        rows.push((k + 3, record.iter().map(str::to_string).collect()));
    }
    Ok(CsvFile {
        header,
        columns,
        rows,
    })
}

fn header_f64(path: &Path, header: &serde_json::Map<String, Value>, key: &str) -> Result<f64> {
    header.get(key).and_then(Value::as_f64).ok_or_else(|| {
        Error::format(
            path,
            format!("header field `{key}` missing or not a number"),
        )
    })
}

fn header_usize(path: &Path, header: &serde_json::Map<String, Value>, key: &str) -> Result<usize> {
    header
        .get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| {
            Error::format(
                path,
                format!("header field `{key}` missing or not an integer"),
            )
        })
}

fn expect_columns(path: &Path, found: &[String], expected: &[String]) -> Result<()> {
    if found != expected {
        return Err(Error::format(
            path,
            format!("columns {found:?}, expected {expected:?}"),
        ));
    }
    Ok(())
}

/// One column per supermode; the first four rows hold `Λ_k` and the
/// variances, the remaining rows the amplitude on each tooth.
pub fn write_supermodes_csv(path: &Path, set: &SupermodeSet) -> Result<()> {
    let grid = set.grid();
    let k = set.len();
    let header = json!({
        "schema": SUPERMODES_SCHEMA,
        "version": SCHEMA_VERSION,
        "center_frequency_rad_s": grid.center_frequency(),
        "repetition_rate_rad_s": grid.repetition_rate(),
        "tooth_count": grid.tooth_count(),
        "modes": k,
    });
    let mut columns = vec!["row".to_string()];
    columns.extend((1..=k).map(|i| format!("mode_{i}")));
    let mut rows = Vec::with_capacity(grid.tooth_count() + 4);
    let summaries = [
        set.coupling_eigenvalues(),
        set.amplitude_variances(),
        set.squeezed_variances(),
        set.antisqueezed_variances(),
    ];
    for (name, values) in VARIANCE_ROWS.iter().zip(summaries) {
        let mut row = vec![name.to_string()];
        row.extend(values.iter().map(|v| fmt_f64(*v)));
        rows.push(row);
    }
    let modes = set.modes();
    for (pos, l) in grid.indices().enumerate() {
        let mut row = vec![l.to_string()];
        row.extend((0..k).map(|c| fmt_f64(modes[(pos, c)])));
        rows.push(row);
    }
    write_csv(path, &header, &columns, &rows)
}

pub fn read_supermodes_csv(path: &Path) -> Result<SupermodeSet> {
    let file = read_csv(path, SUPERMODES_SCHEMA)?;
    let grid = FrequencyGrid::new(
        header_f64(path, &file.header, "center_frequency_rad_s")?,
        header_f64(path, &file.header, "repetition_rate_rad_s")?,
        header_usize(path, &file.header, "tooth_count")?,
    )
    .map_err(|e| Error::format(path, e.to_string()))?;
    let k = header_usize(path, &file.header, "modes")?;
    let mut expected = vec!["row".to_string()];
    expected.extend((1..=k).map(|i| format!("mode_{i}")));
    expect_columns(path, &file.columns, &expected)?;
    let n = grid.tooth_count();
    if file.rows.len() != n + 4 {
        return Err(Error::format(
            path,
            format!("{} data rows, expected {}", file.rows.len(), n + 4),
        ));
    }
    let mut summaries: Vec<Vec<f64>> = Vec::with_capacity(4);
    for (name, (line, row)) in VARIANCE_ROWS.iter().zip(&file.rows) {
        if row[0] != *name {
            return Err(Error::format(
                path,
                format!("line {line}: expected row `{name}`, found `{}`", row[0]),
            ));
        }
        summaries.push(
            row[1..]
                .iter()
                .map(|t| parse_f64(path, *line, name, t))
                .collect::<Result<_>>()?,
        );
    }
    let mut modes = DMatrix::zeros(n, k);
    for ((pos, l), (line, row)) in grid.indices().enumerate().zip(&file.rows[4..]) {
        if row[0] != l.to_string() {
            return Err(Error::format(
                path,
                format!("line {line}: expected tooth {l}, found `{}`", row[0]),
            ));
        }
        for c in 0..k {
            modes[(pos, c)] = parse_f64(path, *line, "amplitude", &row[c + 1])?;
        }
    }
    let mut it = summaries.into_iter();
    let (lambda, amp, sq, anti) = (
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    );
    SupermodeSet::from_parts(grid, modes, lambda, sq, anti, amp)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Pixel-basis covariance and mean field: columns `mean_x, v1 … vM`.
pub fn write_covariance_csv(path: &Path, v: &QuadratureCovariance, mean: &MeanField) -> Result<()> {
    let m = v.dimension();
    if mean.len() != m || mean.basis() != v.basis() {
        return Err(Error::invalid(
            "covariance export",
            "mean field does not match the covariance",
        ));
    }
    let header = json!({
        "schema": COVARIANCE_SCHEMA,
        "version": SCHEMA_VERSION,
        "basis": v.basis(),
        "dimension": m,
        "flux_scale": mean.total_flux(),
    });
    let mut columns = vec!["mean_x".to_string()];
    columns.extend((1..=m).map(|i| format!("v{i}")));
    let rows: Vec<Vec<String>> = (0..m)
        .map(|i| {
            let mut row = vec![fmt_f64(mean.amplitudes()[i])];
            row.extend((0..m).map(|j| fmt_f64(v.matrix()[(i, j)])));
            row
        })
        .collect();
    write_csv(path, &header, &columns, &rows)
}

pub fn read_covariance_csv(path: &Path) -> Result<(QuadratureCovariance, MeanField)> {
    let file = read_csv(path, COVARIANCE_SCHEMA)?;
    let m = header_usize(path, &file.header, "dimension")?;
    let flux = header_f64(path, &file.header, "flux_scale")?;
    let basis: Basis = file
        .header
        .get("basis")
        .cloned()
        .and_then(|b| serde_json::from_value(b).ok())
        .ok_or_else(|| Error::format(path, "header field `basis` missing or invalid"))?;
    let mut expected = vec!["mean_x".to_string()];
    expected.extend((1..=m).map(|i| format!("v{i}")));
    expect_columns(path, &file.columns, &expected)?;
    if file.rows.len() != m {
        return Err(Error::format(
            path,
            format!("{} rows for dimension {m}", file.rows.len()),
        ));
    }
    let mut matrix = DMatrix::zeros(m, m);
    let mut mean = Vec::with_capacity(m);
    for (i, (line, row)) in file.rows.iter().enumerate() {
        mean.push(parse_f64(path, *line, "mean_x", &row[0])?);
        for j in 0..m {
            matrix[(i, j)] = parse_f64(path, *line, "covariance", &row[j + 1])?;
        }
    }
    let bad = |e: Error| Error::format(path, e.to_string());
    Ok((
        QuadratureCovariance::new(basis, matrix).map_err(bad)?,
        MeanField::new(basis, mean, flux).map_err(bad)?,
    ))
}

const RECORD_COLUMNS: [&str; 4] = ["interval_id", "point_index", "noise_sample", "shot_sample"];

/// One row per data point, intervals in the given order.
pub fn write_records_csv(path: &Path, records: &[MeasurementRecord]) -> Result<()> {
    let header = json!({ "schema": RECORDS_SCHEMA, "version": SCHEMA_VERSION });
    let columns: Vec<String> = RECORD_COLUMNS.iter().map(|c| c.to_string()).collect();
    let mut rows = Vec::with_capacity(records.iter().map(|r| r.sample_count()).sum());
    for rec in records {
        let id = rec.interval().to_string();
        for (k, (n, s)) in rec
            .noise_samples()
            .iter()
            .zip(rec.shot_samples())
            .enumerate()
        {
            rows.push(vec![id.clone(), k.to_string(), fmt_f64(*n), fmt_f64(*s)]);
        }
    }
    write_csv(path, &header, &columns, &rows)
}

/// Records grouped by interval (in order of first appearance) with points
/// sorted by `point_index`, which must run `0..n` without gaps.
pub fn read_records_csv(path: &Path) -> Result<Vec<MeasurementRecord>> {
    let file = read_csv(path, RECORDS_SCHEMA)?;
    let expected: Vec<String> = RECORD_COLUMNS.iter().map(|c| c.to_string()).collect();
    expect_columns(path, &file.columns, &expected)?;
    let mut order: Vec<Interval> = Vec::new();
    let mut points: BTreeMap<Interval, BTreeMap<usize, (f64, f64)>> = BTreeMap::new();
    for (line, row) in &file.rows {
        let interval: Interval = row[0]
            .parse()
            .map_err(|e: Error| Error::format(path, format!("line {line}: {e}")))?;
        let index: usize = row[1].parse().map_err(|_| {
            Error::format(
                path,
                format!("line {line}: point_index `{}` is not an integer", row[1]),
            )
        })?;
        let noise = parse_f64(path, *line, "noise_sample", &row[2])?;
        let shot = parse_f64(path, *line, "shot_sample", &row[3])?;
        let entry = points.entry(interval).or_insert_with(|| {
            order.push(interval);
            BTreeMap::new()
        });
        if entry.insert(index, (noise, shot)).is_some() {
            return Err(Error::format(
                path,
                format!("line {line}: duplicate point {index} for interval {interval}"),
            ));
        }
    }
    if order.is_empty() {
        return Err(Error::format(path, "no records"));
    }
    order
        .into_iter()
        .map(|interval| {
            let pts = &points[&interval];
            if pts.keys().enumerate().any(|(k, &idx)| k != idx) {
                return Err(Error::format(
                    path,
                    format!(
                        "interval {interval}: point_index must run 0..{} without gaps",
                        pts.len()
                    ),
                ));
            }
            let (noise, shot) = pts.values().copied().unzip();
            MeasurementRecord::new(interval, noise, shot)
                .map_err(|e| Error::format(path, e.to_string()))
        })
        .collect()
}

/// Everything needed to map pixel-basis vectors back onto comb teeth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub schema: String,
    pub version: u64,
    /// Angular frequency of tooth 0 (rad/s).
    pub center_frequency_rad_s: f64,
    /// Angular tooth spacing (rad/s).
    pub repetition_rate_rad_s: f64,
    pub tooth_count: usize,
    pub resolution_m: f64,
    pub weighting: PixelWeighting,
    /// Half-open tooth-position ranges `[start, end)` per pixel.
    pub ranges: Vec<[usize; 2]>,
    pub power_fractions: Vec<f64>,
    /// Center wavelength of each pixel (nm), power weighted.
    pub pixel_wavelengths_nm: Vec<f64>,
    /// Tooth-basis mean-field amplitudes.
    pub mean_field: Vec<f64>,
    pub total_flux: f64,
}

impl PartitionFile {
    pub fn new(
        partition: &PixelPartition,
        mean: &MeanField,
        weighting: PixelWeighting,
    ) -> Result<Self> {
        let grid = partition.grid();
        let x = mean.amplitudes();
        if mean.basis() != Basis::Tooth || x.len() != grid.tooth_count() {
            return Err(Error::invalid(
                "partition export",
                "mean field must be on the partition's teeth",
            ));
        }
        let total: f64 = x.iter().map(|a| a * a).sum();
        let positions: Vec<i64> = grid.indices().collect();
        let (fractions, wavelengths) = partition
            .ranges()
            .iter()
            .map(|r| {
                let power: f64 = x[r.clone()].iter().map(|a| a * a).sum();
                let centroid: f64 = r
                    .clone()
                    .map(|p| x[p] * x[p] * grid.tooth_wavelength(positions[p]))
                    .sum::<f64>()
                    / power.max(f64::MIN_POSITIVE);
                (power / total, centroid * 1e9)
            })
            .unzip();
        Ok(Self {
            schema: PARTITION_SCHEMA.to_string(),
            version: SCHEMA_VERSION,
            center_frequency_rad_s: grid.center_frequency(),
            repetition_rate_rad_s: grid.repetition_rate(),
            tooth_count: grid.tooth_count(),
            resolution_m: partition.resolution(),
            weighting,
            ranges: partition
                .ranges()
                .iter()
                .map(|r| [r.start, r.end])
                .collect(),
            power_fractions: fractions,
            pixel_wavelengths_nm: wavelengths,
            mean_field: x.to_vec(),
            total_flux: mean.total_flux(),
        })
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(
            self.center_frequency_rad_s,
            self.repetition_rate_rad_s,
            self.tooth_count,
        )
    }

    pub fn partition(&self) -> Result<PixelPartition> {
        let ranges: Vec<Range<usize>> = self.ranges.iter().map(|r| r[0]..r[1]).collect();
        PixelPartition::from_ranges(self.grid()?, ranges, self.resolution_m)
    }

    pub fn mean(&self) -> Result<MeanField> {
        MeanField::new(Basis::Tooth, self.mean_field.clone(), self.total_flux)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_partition_json(path: &Path) -> Result<PartitionFile> {
    let file: PartitionFile = read_json(path)?;
    if file.schema != PARTITION_SCHEMA || file.version != SCHEMA_VERSION {
        return Err(Error::format(
            path,
            format!(
                "schema `{}` version {}, expected `{PARTITION_SCHEMA}` version {SCHEMA_VERSION}",
                file.schema, file.version
            ),
        ));
    }
    Ok(file)
}

/// Pixel-level eigenvectors: one row per pixel, one column per mode.
pub fn write_eigenmodes_csv(
    path: &Path,
    report: &EigenmodeReport,
    pixel_wavelengths_nm: Option<&[f64]>,
) -> Result<()> {
    let m = report.modes.len();
    let header = json!({
        "schema": EIGENMODES_SCHEMA,
        "version": SCHEMA_VERSION,
        "ordering": report.ordering,
        "nin": report.eigenvalues(),
    });
    let mut columns = vec!["pixel".to_string(), "wavelength_nm".to_string()];
    columns.extend(report.modes.iter().map(|mode| mode.label.clone()));
    let rows: Vec<Vec<String>> = (0..m)
        .map(|i| {
            let mut row = vec![
                (i + 1).to_string(),
                pixel_wavelengths_nm
                    .map(|w| fmt_f64(w[i]))
                    .unwrap_or_default(),
            ];
            row.extend(report.modes.iter().map(|mode| fmt_f64(mode.vector[i])));
            row
        })
        .collect();
    write_csv(path, &header, &columns, &rows)
}

/// Spectral profiles of the eigenmodes: mode `S_k` on tooth `t` is
/// `Σ_i S_k(i)·d_i(t)` with `d_i` the pixel detection modes.
pub fn write_profiles_csv(
    path: &Path,
    report: &EigenmodeReport,
    partition: &PartitionFile,
) -> Result<()> {
    let grid = partition.grid()?;
    let pp = partition.partition()?;
    let mean = partition.mean()?;
    let detection = detection_modes(&mean, &pp, partition.weighting)?;
    if detection.len() != report.modes.len() {
        return Err(Error::invalid(
            "eigenmode profiles",
            format!(
                "{} pixels in the partition, {} modes in the report",
                detection.len(),
                report.modes.len()
            ),
        ));
    }
    let n = grid.tooth_count();
    let mut profiles = vec![vec![0.0; n]; report.modes.len()];
    for (k, mode) in report.modes.iter().enumerate() {
        for (i, (start, weights)) in detection.iter().enumerate() {
            for (a, w) in weights.iter().enumerate() {
                profiles[k][start + a] += mode.vector[i] * w;
            }
        }
    }
    let header = json!({
        "schema": PROFILES_SCHEMA,
        "version": SCHEMA_VERSION,
        "ordering": report.ordering,
    });
    let mut columns = vec!["wavelength_nm".to_string(), "mean_field".to_string()];
    columns.extend(report.modes.iter().map(|mode| mode.label.clone()));
    let norm = mean.amplitudes().iter().map(|a| a * a).sum::<f64>().sqrt();
    let rows: Vec<Vec<String>> = grid
        .indices()
        .enumerate()
        .map(|(t, l)| {
            let mut row = vec![
                fmt_f64(grid.tooth_wavelength(l) * 1e9),
                fmt_f64(mean.amplitudes()[t] / norm),
            ];
            row.extend(profiles.iter().map(|p| fmt_f64(p[t])));
            row
        })
        .collect();
    write_csv(path, &header, &columns, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comb::{
        build_grid, coupling_matrix, decompose_supermodes, gaussian_pump_spectrum, squeezing_values,
    };
    use crate::comb::{PhaseMatchingSpec, SqueezingParams};

    fn supermodes() -> SupermodeSet {
        let grid = build_grid(795e-9, 76e6 * 2400.0, 101).unwrap();
        let pump = gaussian_pump_spectrum(&grid, 120e-15, 0.0).unwrap();
        let l = coupling_matrix(
            &grid,
            &pump,
            &PhaseMatchingSpec::Gaussian { width_hz: 5e14 },
        )
        .unwrap();
        let set = decompose_supermodes(&l, 4).unwrap();
        let params = SqueezingParams {
            pump_ratio: 0.4,
            escape_efficiency: 0.9,
            analysis_frequency: 1.5e6,
            cavity_bandwidth: 2.5e6,
        };
        squeezing_values(&set, &params).unwrap()
    }

    #[test]
    fn supermodes_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("supermodes.csv");
        let set = supermodes();
        write_supermodes_csv(&path, &set).unwrap();
        assert_eq!(read_supermodes_csv(&path).unwrap(), set);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("row,mode_1,mode_2"));
        assert!(text
            .lines()
            .nth(2)
            .unwrap()
            .starts_with("coupling_eigenvalue,"));
    }

    #[test]
    fn covariance_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("covariance.csv");
        let m =
            DMatrix::from_row_slice(3, 3, &[1.0, 0.1, -0.05, 0.1, 0.8, 1e-17, -0.05, 1e-17, 1.3]);
        let v = QuadratureCovariance::new(Basis::Pixel, m).unwrap();
        let mean = MeanField::new(Basis::Pixel, vec![0.3, 0.5, 1.0 / 3.0], 1.0e6).unwrap();
        write_covariance_csv(&path, &v, &mean).unwrap();
        let (v2, mean2) = read_covariance_csv(&path).unwrap();
        assert_eq!(v2, v);
        assert_eq!(mean2, mean);
        let first = fs::read_to_string(&path)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        let header: Value = serde_json::from_str(&first).unwrap();
        assert_eq!(header["basis"], "pixel");
        assert_eq!(header["dimension"], 3);
    }

    fn records() -> Vec<MeasurementRecord> {
        crate::measurement::enumerate_intervals(2)
            .into_iter()
            .enumerate()
            .map(|(k, iv)| {
                let base = k as f64 + 1.0;
                MeasurementRecord::new(iv, vec![base, base + 0.1, base + 0.2], vec![2.0, 2.1, 1.9])
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn records_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        write_records_csv(&path, &records()).unwrap();
        assert_eq!(read_records_csv(&path).unwrap(), records());
    }

    #[test]
    fn records_accept_shuffled_points() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        fs::write(
            &path,
            "{\"schema\":\"spopo-records\",\"version\":1}\n\
             interval_id,point_index,noise_sample,shot_sample\n\
             1,1,2.0,1.0\n1,0,3.0,1.5\n",
        )
        .unwrap();
        let recs = read_records_csv(&path).unwrap();
        assert_eq!(recs[0].noise_samples(), &[3.0, 2.0]);
        assert_eq!(recs[0].shot_samples(), &[1.5, 1.0]);
    }

    #[test]
    fn schema_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let body = "interval_id,point_index,noise_sample,shot_sample\n1,0,1.0,1.0\n";
        for header in [
            "{\"schema\":\"spopo-records\",\"version\":2}",
            "{\"schema\":\"spopo-covariance\",\"version\":1}",
            "{\"version\":1}",
            "interval_id,point_index",
        ] {
            fs::write(&path, format!("{header}\n{body}")).unwrap();
            let err = read_records_csv(&path).unwrap_err();
            assert!(matches!(err, Error::Format { .. }), "{header}: {err:?}");
            assert_eq!(err.exit_code(), 3);
        }
        fs::write(
            &path,
            "{\"schema\":\"spopo-records\",\"version\":1}\na,b\n1,2\n",
        )
        .unwrap();
        assert!(matches!(read_records_csv(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn malformed_records_are_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let head = "{\"schema\":\"spopo-records\",\"version\":1}\ninterval_id,point_index,noise_sample,shot_sample\n";
        for (rows, needle) in [
            ("1,0,1.0,1.0\n1,0,1.0,1.0\n", "duplicate"),
            ("1,0,1.0,1.0\n1,2,1.0,1.0\n", "without gaps"),
            ("1,0,x,1.0\n", "line 3"),
            ("0,0,1.0,1.0\n", "line 3"),
        ] {
            fs::write(&path, format!("{head}{rows}")).unwrap();
            let err = read_records_csv(&path).unwrap_err().to_string();
            assert!(err.contains(needle), "{rows}: {err}");
        }
    }

    #[test]
    fn missing_file_is_missing_input() {
        let err = read_records_csv(Path::new("/nonexistent/records.csv")).unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn float_format_is_exact_and_compact() {
        for v in [
            0.1,
            1e-20,
            1.0 / 3.0,
            123456789.123,
            -5e300,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            assert!(s.len() < 30, "{s}");
        }
    }
}
