//! On-disk formats: CSV tables plus JSON sidecars.
//!
//! Floats are written with Rust's shortest round-trip representation, so
//! reading a file back reproduces the written values bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec, PointSet};
use crate::operator::FittedOperator;
use crate::sde::PairedDataset;
use crate::tube::AmbiguityTube;

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn parse(path: &Path, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: format!("bad number {s:?}: {e}"),
    })
}

fn parse_usize(path: &Path, s: &str) -> Result<usize> {
    s.trim().parse::<usize>().map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: format!("bad integer {s:?}: {e}"),
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<fs::File>, want: &[&str]) -> Result<()> {
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected header {want:?}, found {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Sidecar record describing how a dataset was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub model: String,
    pub lag: f64,
    pub seed: u64,
    pub dt: f64,
    pub m: usize,
    pub dim: usize,
}

/// `<stem>.json` next to a CSV file.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `x_0..x_{d-1},y_0..y_{d-1}` rows plus the JSON sidecar.
pub fn write_dataset(path: &Path, data: &PairedDataset, meta: &DatasetMeta) -> Result<()> {
    let d = data.dim();
    let mut w = writer(path)?;
    let header: Vec<String> = (0..d).map(|i| format!("x_{i}")).chain((0..d).map(|i| format!("y_{i}"))).collect();
    w.write_record(&header)?;
    for (x, y) in data.x.rows().zip(data.y.rows()) {
        w.write_record(x.iter().chain(y).map(|v| fmt(*v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    write_json(&sidecar_path(path), meta)
}

pub fn read_dataset(path: &Path) -> Result<(PairedDataset, DatasetMeta)> {
    let meta: DatasetMeta = read_json(&sidecar_path(path))?;
    let mut rdr = reader(path)?;
    let d = meta.dim;
    let want: Vec<String> = (0..d).map(|i| format!("x_{i}")).chain((0..d).map(|i| format!("y_{i}"))).collect();
    check_header(path, &mut rdr, &want.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 * d {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("row has {} fields, expected {}", rec.len(), 2 * d),
            });
        }
        for (i, field) in rec.iter().enumerate() {
            let v = parse(path, field)?;
            if i < d {
                xs.push(v)
            } else {
                ys.push(v)
            }
        }
    }
    let data = PairedDataset::new(PointSet::new(xs, d)?, PointSet::new(ys, d)?, meta.lag, meta.seed)?;
    if data.len() != meta.m {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("sidecar says m = {}, file has {} rows", meta.m, data.len()),
        });
    }
    Ok((data, meta))
}

/// One-column CSV `deviation`.
pub fn write_deviations(path: &Path, deviations: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["deviation"])?;
    for d in deviations {
        w.write_record([fmt(*d)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_deviations(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["deviation"])?;
    rdr.records().map(|r| parse(path, &r?[0])).collect()
}

/// Summary record of one bootstrap run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRecord {
    pub m: usize,
    pub m_b: usize,
    pub alpha: f64,
    pub delta: f64,
    pub deviations_csv_path: String,
    pub seed: u64,
}

/// `m,delta` rows of a convergence study.
pub fn write_rate_table(path: &Path, rows: &[(usize, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["m", "delta"])?;
    for (m, d) in rows {
        w.write_record([m.to_string(), fmt(*d)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rate_table(path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["m", "delta"])?;
    rdr.records()
        .map(|r| {
            let r = r?;
            Ok((parse_usize(path, &r[0])?, parse(path, &r[1])?))
        })
        .collect()
}

/// `m,delta,oracle_mmd` rows.
pub fn write_oracle_table(path: &Path, rows: &[(usize, f64, f64)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["m", "delta", "oracle_mmd"])?;
    for (m, d, o) in rows {
        w.write_record([m.to_string(), fmt(*d), fmt(*o)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_oracle_table(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["m", "delta", "oracle_mmd"])?;
    rdr.records()
        .map(|r| {
            let r = r?;
            Ok((parse_usize(path, &r[0])?, parse(path, &r[1])?, parse(path, &r[2])?))
        })
        .collect()
}

/// A row of the tube radius table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeRow {
    pub t: usize,
    pub radius: f64,
    pub embedding_norm: f64,
}

/// A row of the per-step weight table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRow {
    pub t: usize,
    pub anchor_index: usize,
    pub weight: f64,
}

pub fn tube_rows(tube: &AmbiguityTube) -> Vec<TubeRow> {
    tube.steps
        .iter()
        .enumerate()
        .map(|(t, s)| TubeRow {
            t,
            radius: s.radius,
            embedding_norm: s.norm,
        })
        .collect()
}

pub fn weight_rows(tube: &AmbiguityTube) -> Vec<WeightRow> {
    tube.steps
        .iter()
        .enumerate()
        .flat_map(|(t, s)| {
            s.embedding.weights().iter().enumerate().map(move |(anchor_index, &weight)| WeightRow {
                t,
                anchor_index,
                weight,
            })
        })
        .collect()
}

/// `t,radius,embedding_norm`.
pub fn write_tube_csv(path: &Path, rows: &[TubeRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "radius", "embedding_norm"])?;
    for r in rows {
        w.write_record([r.t.to_string(), fmt(r.radius), fmt(r.embedding_norm)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tube_csv(path: &Path) -> Result<Vec<TubeRow>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["t", "radius", "embedding_norm"])?;
    rdr.records()
        .map(|r| {
            let r = r?;
            Ok(TubeRow {
                t: parse_usize(path, &r[0])?,
                radius: parse(path, &r[1])?,
                embedding_norm: parse(path, &r[2])?,
            })
        })
        .collect()
}

/// `t,anchor_index,weight`.
pub fn write_weights_csv(path: &Path, rows: &[WeightRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["t", "anchor_index", "weight"])?;
    for r in rows {
        w.write_record([r.t.to_string(), r.anchor_index.to_string(), fmt(r.weight)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_weights_csv(path: &Path) -> Result<Vec<WeightRow>> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["t", "anchor_index", "weight"])?;
    rdr.records()
        .map(|r| {
            let r = r?;
            Ok(WeightRow {
                t: parse_usize(path, &r[0])?,
                anchor_index: parse_usize(path, &r[1])?,
                weight: parse(path, &r[2])?,
            })
        })
        .collect()
}

/// Operators are stored as a reference to their training data plus the
/// fit parameters, and refit on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorCheckpoint {
    pub dataset_csv: String,
    pub lambda: f64,
    pub bandwidth: f64,
    pub kernel_family: KernelFamily,
}

impl OperatorCheckpoint {
    pub fn new(dataset_csv: impl Into<String>, op: &FittedOperator) -> Self {
        Self {
            dataset_csv: dataset_csv.into(),
            lambda: op.lambda(),
            bandwidth: op.spec().bandwidth,
            kernel_family: op.spec().family,
        }
    }

    /// Refit from the referenced dataset. Relative dataset paths are resolved
    /// against the checkpoint's directory.
    pub fn load(path: &Path) -> Result<(FittedOperator, PairedDataset)> {
        let ckpt: OperatorCheckpoint = read_json(path)?;
        let mut csv_path = PathBuf::from(&ckpt.dataset_csv);
        if csv_path.is_relative() {
            if let Some(dir) = path.parent() {
                csv_path = dir.join(csv_path);
            }
        }
        let (data, _) = read_dataset(&csv_path)?;
        let spec = match ckpt.kernel_family {
            KernelFamily::GaussianRbf => KernelSpec::gaussian_rbf(ckpt.bandwidth)?,
        };
        let op = FittedOperator::fit(&data, ckpt.lambda, spec)?;
        Ok((op, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{simulate_pairs, InitialDistribution, PairSimulation, SdeModel};
    use proptest::prelude::*;

    fn data(dim: usize) -> PairedDataset {
        let model = SdeModel::ornstein_uhlenbeck(1.0, 1.0).unwrap();
        let init = InitialDistribution::Gaussian { mean: 0.5, variance: 2.0 };
        simulate_pairs(&PairSimulation { model: &model, initial: &init, dim, lag: 0.1, m: 17, dt: 1e-3, seed: 1 }).unwrap()
    }

    fn meta(d: &PairedDataset) -> DatasetMeta {
        DatasetMeta { model: "ou".into(), lag: d.lag, seed: d.seed, dt: 1e-3, m: d.len(), dim: d.dim() }
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for dim in [1, 3] {
            let d = data(dim);
            let path = dir.path().join(format!("d{dim}.csv"));
            write_dataset(&path, &d, &meta(&d)).unwrap();
            let (back, m) = read_dataset(&path).unwrap();
            assert_eq!(back, d);
            assert_eq!(m, meta(&d));
        }
        let text = fs::read_to_string(dir.path().join("d3.csv")).unwrap();
        assert!(text.starts_with("x_0,x_1,x_2,y_0,y_1,y_2\n"));
    }

    #[test]
    fn bad_files_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,radius\n0,1\n").unwrap();
        assert!(matches!(read_tube_csv(&path), Err(Error::Format { .. })));
        assert!(matches!(read_deviations(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn checkpoint_refits_identically() {
        let dir = tempfile::tempdir().unwrap();
        let d = data(1);
        write_dataset(&dir.path().join("train.csv"), &d, &meta(&d)).unwrap();
        let op = FittedOperator::fit(&d, 0.01, KernelSpec::gaussian_rbf(1.2).unwrap()).unwrap();
        let ckpt_path = dir.path().join("op.json");
        write_json(&ckpt_path, &OperatorCheckpoint::new("train.csv", &op)).unwrap();
        let (back, _) = OperatorCheckpoint::load(&ckpt_path).unwrap();
        assert_eq!(back.operator_norm(), op.operator_norm());
    }

    proptest! {
        #[test]
        fn float_tables_round_trip(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 1..40)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("dev.csv");
            write_deviations(&p, &values).unwrap();
            prop_assert_eq!(read_deviations(&p).unwrap(), values.clone());
            let rows: Vec<TubeRow> = values.iter().enumerate().map(|(t, v)| TubeRow { t, radius: *v, embedding_norm: -v }).collect();
            let p = dir.path().join("tube.csv");
            write_tube_csv(&p, &rows).unwrap();
            prop_assert_eq!(read_tube_csv(&p).unwrap(), rows);
        }
    }
}
