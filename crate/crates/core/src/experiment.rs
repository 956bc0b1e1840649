//! Reproducible experiment commands. Each command is a function of the
//! configuration alone and writes its artifacts into `output_dir`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_operator, BootstrapSummary};
use crate::concentration::{bernstein_bound, BernsteinInputs, MomentEstimates, RBF_MOMENT_CONSTANT};
use crate::config::{BoundSource, ExperimentConfig, UNPUBLISHED_DEFAULTS};
use crate::error::{Error, Result};
use crate::io::{self, BootstrapRecord, DatasetMeta, OperatorCheckpoint};
use crate::kernels::{embed_sample, embed_sample_arc, mmd, KernelSpec};
use crate::operator::{FittedOperator, OperatorNorms};
use crate::plot::{line_plot, Axes};
use crate::rng::domain;
use crate::sde::{simulate_pairs, simulate_pairs_in_domain, PairSimulation, PairedDataset};
use crate::tube::{closed_form_bound_computable, propagate_tube, AmbiguityTube};

pub const DATASET_CSV: &str = "dataset.csv";
pub const DEVIATIONS_CSV: &str = "deviations.csv";
pub const BOOTSTRAP_JSON: &str = "bootstrap.json";
pub const RATE_CSV: &str = "rate.csv";
pub const RATE_JSON: &str = "rate.json";
pub const ORACLE_CSV: &str = "oracle.csv";
pub const TUBE_CSV: &str = "tube.csv";
pub const TUBE_WEIGHTS_CSV: &str = "tube_weights.csv";
pub const TUBE_JSON: &str = "tube.json";
pub const OPERATOR_JSON: &str = "operator.json";

fn out(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn meta(cfg: &ExperimentConfig, data: &PairedDataset) -> DatasetMeta {
    let model = match cfg.model {
        crate::config::ModelConfig::Ou { .. } => "ou",
        crate::config::ModelConfig::Langevin { .. } => "langevin",
    };
    DatasetMeta {
        model: model.to_string(),
        lag: data.lag,
        seed: data.seed,
        dt: cfg.dt,
        m: data.len(),
        dim: data.dim(),
    }
}

/// Simulate `m` training pairs as configured.
pub fn simulate(cfg: &ExperimentConfig, m: usize) -> Result<PairedDataset> {
    let model = cfg.model.build()?;
    simulate_pairs(&PairSimulation {
        model: &model,
        initial: &cfg.initial,
        dim: cfg.dim,
        lag: cfg.lag,
        m,
        dt: cfg.dt,
        seed: cfg.seed,
    })
}

/// The configured dataset file if set, otherwise a fresh simulation of
/// `cfg.m` pairs.
pub fn load_or_simulate(cfg: &ExperimentConfig) -> Result<PairedDataset> {
    match &cfg.dataset {
        Some(path) => Ok(io::read_dataset(path)?.0),
        None => simulate(cfg, cfg.m),
    }
}

pub fn resolve_bandwidth(cfg: &ExperimentConfig, data: &PairedDataset) -> Result<KernelSpec> {
    cfg.bandwidth.resolve(&data.x)
}

/// Writes the dataset CSV and its JSON sidecar.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let data = simulate(cfg, cfg.m)?;
    let path = out(cfg, DATASET_CSV);
    io::write_dataset(&path, &data, &meta(cfg, &data))?;
    Ok(path)
}

/// Fits the operator, bootstraps its deviation and writes the sorted
/// deviations plus a summary record.
pub fn cmd_bootstrap(cfg: &ExperimentConfig) -> Result<BootstrapRecord> {
    cfg.validate()?;
    let data = load_or_simulate(cfg)?;
    let spec = resolve_bandwidth(cfg, &data)?;
    let op = FittedOperator::fit(&data, cfg.lambda, spec)?;
    let summary = bootstrap_operator(&op, cfg.m_b, cfg.alpha_conf, cfg.seed)?;
    io::write_deviations(&out(cfg, DEVIATIONS_CSV), &summary.deviations)?;
    let record = BootstrapRecord {
        m: summary.m,
        m_b: summary.replicates(),
        alpha: cfg.alpha_conf,
        delta: summary.quantile_delta,
        deviations_csv_path: DEVIATIONS_CSV.to_string(),
        seed: cfg.seed,
    };
    io::write_json(&out(cfg, BOOTSTRAP_JSON), &record)?;
    Ok(record)
}

/// Ordinary least-squares fit of `log delta = intercept + slope log m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    /// Set when the data admit no meaningful fit; slope is then 0.
    pub degenerate: bool,
    pub warning: Option<String>,
}

impl PowerLawFit {
    fn degenerate(reason: impl Into<String>) -> Self {
        Self {
            slope: 0.0,
            intercept: 0.0,
            degenerate: true,
            warning: Some(reason.into()),
        }
    }
}

pub fn fit_power_law(rows: &[(usize, f64)]) -> Result<PowerLawFit> {
    if rows.len() < 3 {
        return Err(Error::invalid("m_list", format!("need at least 3 sizes, got {}", rows.len())));
    }
    if rows.iter().any(|&(_, d)| !(d > 0.0 && d.is_finite())) {
        return Ok(PowerLawFit::degenerate("nonpositive or non-finite delta, log-log fit undefined"));
    }
    let first = rows[0].1;
    if rows.iter().all(|&(_, d)| d == first) {
        return Ok(PowerLawFit::degenerate("all delta values are equal"));
    }
    let n = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|&(m, _)| (m as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|&(_, d)| d.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Ok(PowerLawFit::degenerate("all m values are equal"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(PowerLawFit {
        slope,
        intercept: my - slope * mx,
        degenerate: false,
        warning: None,
    })
}

/// One row of a training-size sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub m: usize,
    pub bootstrap: BootstrapSummary,
    pub oracle_mmd: Option<f64>,
}

/// Bootstrap (and optionally the oracle deviation) for every `m` in
/// `cfg.m_list`. Datasets are nested prefixes of one simulation and share
/// a bandwidth resolved on the largest one.
pub fn sweep(cfg: &ExperimentConfig, with_oracle: bool) -> Result<Vec<SweepRow>> {
    let m_max = *cfg.m_list.iter().max().ok_or(Error::Empty("m_list"))?;
    let full = match &cfg.dataset {
        Some(path) => {
            let data = io::read_dataset(path)?.0;
            if data.len() < m_max {
                return Err(Error::invalid("m_list", format!("dataset has {} pairs, sweep needs {m_max}", data.len())));
            }
            data
        }
        None => simulate(cfg, m_max)?,
    };
    let spec = resolve_bandwidth(cfg, &full)?;
    let fresh = if with_oracle { Some(oracle_pairs(cfg)?) } else { None };
    cfg.m_list
        .iter()
        .map(|&m| {
            let idx: Vec<usize> = (0..m).collect();
            let op = FittedOperator::fit(&full.select(&idx), cfg.lambda, spec)?;
            let bootstrap = bootstrap_operator(&op, cfg.m_b, cfg.alpha_conf, cfg.seed)?;
            let oracle_mmd = fresh.as_ref().map(|pairs| oracle_deviation(&op, pairs)).transpose()?;
            Ok(SweepRow { m, bootstrap, oracle_mmd })
        })
        .collect()
}

/// `cfg.oracle.trials` independent batches of `cfg.oracle.samples` fresh
/// pairs, drawn from a stream disjoint from the training data.
pub fn oracle_pairs(cfg: &ExperimentConfig) -> Result<Vec<PairedDataset>> {
    let model = cfg.model.build()?;
    if model.ou_parameters().is_none() {
        return Err(Error::invalid("model", "oracle comparison needs the OU model"));
    }
    let m = cfg.oracle.samples;
    let all = simulate_pairs_in_domain(
        &PairSimulation {
            model: &model,
            initial: &cfg.initial,
            dim: cfg.dim,
            lag: cfg.lag,
            m: m * cfg.oracle.trials,
            dt: cfg.dt,
            seed: cfg.seed,
        },
        domain::ORACLE,
    )?;
    Ok((0..cfg.oracle.trials)
        .map(|t| all.select(&(t * m..(t + 1) * m).collect::<Vec<_>>()))
        .collect())
}

/// Mean over batches of `mmd(embed(Y'), pushforward(embed(X')))`.
pub fn oracle_deviation(op: &FittedOperator, batches: &[PairedDataset]) -> Result<f64> {
    let mut total = 0.0;
    for pairs in batches {
        let target = embed_sample_arc(pairs.y.clone())?;
        let pushed = op.pushforward(&embed_sample_arc(pairs.x.clone())?)?;
        total += mmd(&target, &pushed, op.spec())?;
    }
    Ok(total / batches.len() as f64)
}

fn write_rate(cfg: &ExperimentConfig, rows: &[(usize, f64)]) -> Result<PowerLawFit> {
    let fit = fit_power_law(rows)?;
    io::write_rate_table(&out(cfg, RATE_CSV), rows)?;
    io::write_json(&out(cfg, RATE_JSON), &fit)?;
    if cfg.svg {
        let pts: Vec<(f64, f64)> = rows.iter().map(|&(m, d)| (m as f64, d)).collect();
        write_svg(&out(cfg, "rate.svg"), &line_plot("bootstrap quantile vs m", "m", "delta", &pts, Axes::LogLog))?;
    }
    Ok(fit)
}

/// Bootstrap quantile per training size and the log-log slope.
pub fn cmd_rate(cfg: &ExperimentConfig) -> Result<(Vec<(usize, f64)>, PowerLawFit)> {
    cfg.validate()?;
    if cfg.m_list.len() < 3 {
        return Err(Error::invalid("m_list", "need at least 3 sizes"));
    }
    let rows: Vec<(usize, f64)> = sweep(cfg, false)?.iter().map(|r| (r.m, r.bootstrap.quantile_delta)).collect();
    let fit = write_rate(cfg, &rows)?;
    Ok((rows, fit))
}

/// Refit the slope of an existing `m,delta` table.
pub fn cmd_rate_from_table(cfg: &ExperimentConfig, table: &Path) -> Result<(Vec<(usize, f64)>, PowerLawFit)> {
    let rows = io::read_rate_table(table)?;
    let fit = write_rate(cfg, &rows)?;
    Ok((rows, fit))
}

/// `m, delta, oracle_mmd` for every `m` in the sweep.
pub fn cmd_oracle_compare(cfg: &ExperimentConfig) -> Result<Vec<(usize, f64, f64)>> {
    cfg.validate()?;
    let rows = oracle_rows(&sweep(cfg, true)?);
    io::write_oracle_table(&out(cfg, ORACLE_CSV), &rows)?;
    Ok(rows)
}

fn oracle_rows(sweep: &[SweepRow]) -> Vec<(usize, f64, f64)> {
    sweep
        .iter()
        .map(|r| (r.m, r.bootstrap.quantile_delta, r.oracle_mmd.unwrap_or(f64::NAN)))
        .collect()
}

/// Metadata written next to the tube tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeReport {
    pub e_norm: f64,
    pub f_norm: f64,
    /// `bootstrap`, `bernstein` or `zero`.
    pub f_source: String,
    pub lag: f64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub rho0: f64,
    pub lambda: f64,
    pub bandwidth: f64,
    pub m: usize,
    pub seed: u64,
    /// Physical time `t * lag` of each step index.
    pub physical_time: Vec<f64>,
    pub final_radius: f64,
    /// Unrolled series evaluated on the recorded embedding norms.
    pub closed_form_final_radius: f64,
    pub unpublished_defaults: Vec<String>,
}

/// The model-error term `F` selected by the configuration.
pub fn model_error(cfg: &ExperimentConfig, data: &PairedDataset, op: &FittedOperator) -> Result<(f64, &'static str)> {
    if cfg.zero_model_error {
        return Ok((0.0, "zero"));
    }
    match cfg.bound {
        BoundSource::Bootstrap => {
            let summary = bootstrap_operator(op, cfg.m_b, cfg.alpha_conf, cfg.seed)?;
            Ok((summary.quantile_delta, "bootstrap"))
        }
        BoundSource::Bernstein => {
            let lagged = MomentEstimates::estimate(data, op.spec());
            let lag_zero = MomentEstimates::estimate_lag_zero(data, op.spec());
            let f = bernstein_bound(&BernsteinInputs {
                lambda: cfg.lambda,
                m: data.len(),
                delta_conf: cfg.alpha_conf,
                sigma_t: lagged.sigma_t,
                sigma_0: lag_zero.sigma_t,
                hs_norm_cyx: lagged.hs_norm_cxy,
                l: RBF_MOMENT_CONSTANT,
            })?;
            Ok((f, "bernstein"))
        }
    }
}

/// Fit, bound and propagate the empirical initial embedding for `T` steps.
pub fn cmd_tube(cfg: &ExperimentConfig) -> Result<(AmbiguityTube, TubeReport)> {
    cfg.validate()?;
    let data = load_or_simulate(cfg)?;
    let dataset_name = match &cfg.dataset {
        Some(path) => path.to_string_lossy().into_owned(),
        None => {
            io::write_dataset(&out(cfg, DATASET_CSV), &data, &meta(cfg, &data))?;
            DATASET_CSV.to_string()
        }
    };
    let spec = resolve_bandwidth(cfg, &data)?;
    let op = FittedOperator::fit(&data, cfg.lambda, spec)?;
    io::write_json(&out(cfg, OPERATOR_JSON), &OperatorCheckpoint::new(dataset_name, &op))?;
    let e = op.operator_norm();
    let (f, source) = model_error(cfg, &data, &op)?;
    let initial = embed_sample(op.x_train().clone())?;
    let tube = propagate_tube(&op, &initial, cfg.rho0, cfg.horizon, OperatorNorms::new(e, f)?)?;
    let norms = tube.embedding_norms();
    let report = TubeReport {
        e_norm: e,
        f_norm: f,
        f_source: source.to_string(),
        lag: cfg.lag,
        horizon: cfg.horizon,
        rho0: cfg.rho0,
        lambda: cfg.lambda,
        bandwidth: spec.bandwidth,
        m: data.len(),
        seed: cfg.seed,
        physical_time: (0..=cfg.horizon).map(|t| t as f64 * cfg.lag).collect(),
        final_radius: tube.steps[cfg.horizon].radius,
        closed_form_final_radius: closed_form_bound_computable(e, f, cfg.rho0, &norms, cfg.horizon)?,
        unpublished_defaults: UNPUBLISHED_DEFAULTS.iter().map(|s| s.to_string()).collect(),
    };
    io::write_tube_csv(&out(cfg, TUBE_CSV), &io::tube_rows(&tube))?;
    io::write_weights_csv(&out(cfg, TUBE_WEIGHTS_CSV), &io::weight_rows(&tube))?;
    io::write_json(&out(cfg, TUBE_JSON), &report)?;
    if cfg.svg {
        let pts: Vec<(f64, f64)> = tube.radii().iter().enumerate().map(|(t, &r)| (t as f64, r)).collect();
        write_svg(&out(cfg, "tube.svg"), &line_plot("ambiguity radius", "t", "radius", &pts, Axes::Linear))?;
    }
    Ok((tube, report))
}

/// Everything `reproduce-ou` produced.
#[derive(Debug, Clone)]
pub struct Reproduction {
    pub tube: TubeReport,
    pub rate: PowerLawFit,
    pub oracle: Vec<(usize, f64, f64)>,
}

/// The OU study end to end: tube, convergence rate and oracle comparison,
/// the latter two sharing one sweep.
pub fn cmd_reproduce_ou(cfg: &ExperimentConfig) -> Result<Reproduction> {
    cfg.validate()?;
    if cfg.model.build()?.ou_parameters().is_none() {
        return Err(Error::invalid("model", "reproduce-ou needs the OU model"));
    }
    if cfg.m_list.len() < 3 {
        return Err(Error::invalid("m_list", "need at least 3 sizes"));
    }
    let (_, tube) = cmd_tube(cfg)?;
    let rows = sweep(cfg, true)?;
    let rate_rows: Vec<(usize, f64)> = rows.iter().map(|r| (r.m, r.bootstrap.quantile_delta)).collect();
    let rate = write_rate(cfg, &rate_rows)?;
    let oracle = oracle_rows(&rows);
    io::write_oracle_table(&out(cfg, ORACLE_CSV), &oracle)?;
    Ok(Reproduction { tube, rate, oracle })
}

fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
