//! Runs configured experiments and writes their artifacts.
//!
//! `run` writes, per seed, `objective.csv`, `utilization.csv`,
//! `recovery.csv` (synthetic data only), `generators.simx` and
//! `dictionary.simx`, plus one `summary.json` for the whole run. Only the
//! summary carries wall-clock timings, so every CSV is reproducible
//! bit for bit from the seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{Algorithm, DatasetSpec, ExperimentConfig, SweepParam};
use crate::circulant::cdla_fit;
use crate::data::{
    ecg_segments, gen_synthetic, image_patches, procedural_images, remove_dc, synthetic_ecg, GroundTruth,
    SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::io::{read_csv_matrix, read_pgm_dir, read_signal, read_simx, write_simx};
use crate::learn::{EarlyStop, Event, FitConfig, FitReport, IterationRecord, PhaseTimings};
use crate::matrix::Matrix;
use crate::metrics::{metric_epsilon, metric_recovery, Recovery};
use crate::sparse::{ShiftMask, SparseCode};
use crate::ucirc::{ucdla_block_fit, ucirc_fit};
use crate::uconv::uconv_fit;
use crate::wavelet::wdla_fit;

/// Largest accepted gap between the last traced ε and ε recomputed from the
/// returned dictionary and code, in percentage points.
pub const EPSILON_CHECK_TOL: f64 = 1e-10;

pub struct Dataset {
    pub y: Matrix<f64>,
    pub truth: Option<GroundTruth<f64>>,
}

/// Loads or generates the training matrix for one seed.
pub fn load_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    let y = match spec {
        DatasetSpec::Synthetic { spec, fixed_seed, .. } => {
            let s = spec.clone().with_seed(fixed_seed.unwrap_or(seed));
            let (y, truth) = gen_synthetic(&s)?;
            return Ok(Dataset {
                y,
                truth: Some(truth),
            });
        }
        DatasetSpec::Ecg {
            path,
            segment,
            length,
        } => {
            let signal: Vec<f64> = match path {
                Some(p) => read_signal(p)?,
                None => synthetic_ecg(*length, seed),
            };
            ecg_segments(&signal, *segment)?
        }
        DatasetSpec::Images {
            dir,
            patch,
            count,
            size,
        } => {
            let images: Vec<Matrix<f64>> = match dir {
                Some(d) => read_pgm_dir(d)?,
                None => procedural_images(*count, *size, seed),
            };
            let mut cols: Vec<Vec<f64>> = Vec::new();
            for img in &images {
                let (m, _) = image_patches(img, *patch)?;
                cols.extend(m.columns().map(<[f64]>::to_vec));
            }
            Matrix::from_columns(patch * patch, &cols)?
        }
        DatasetSpec::Matrix { path } => match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("simx") => read_simx(path)?,
            _ => read_csv_matrix(path)?,
        },
    };
    if y.cols() == 0 || y.rows() == 0 {
        return Err(Error::Size("dataset is empty".into()));
    }
    Ok(Dataset { y, truth: None })
}

/// A fitted model reduced to what the reports need.
pub struct Learned {
    /// Dense dictionary the code refers to.
    pub dictionary: Matrix<f64>,
    /// Circulant generators or convolution kernels, one per column; for a
    /// wavelet cascade, the stage filters `g` then `h`.
    pub generators: Matrix<f64>,
    /// Length-`p` generators compared against ground truth, if the family
    /// has any.
    pub recovery_generators: Option<Vec<Vec<f64>>>,
    pub code: SparseCode<f64>,
    pub report: FitReport,
    pub blocks: usize,
    pub atoms_per_block: usize,
    pub parameter_count: usize,
    /// Whether the learner removed column means before fitting.
    pub centered: bool,
}

pub fn fit_config(cfg: &ExperimentConfig, algorithm: Algorithm, p: usize, seed: u64) -> Result<FitConfig> {
    let mut fc = FitConfig::new(cfg.effective_sparsity(), cfg.iterations).with_seed(seed);
    fc.early_stop = cfg.early_stop.then(EarlyStop::default);
    fc.duplicate_threshold = cfg.duplicate_threshold;
    if let Some(q) = cfg.mask_shifts {
        fc.mask = Some(ShiftMask::first_shifts(cfg.effective_blocks(algorithm), p, q)?);
    }
    Ok(fc)
}

/// Fits one algorithm to `y`.
pub fn fit_algorithm(
    cfg: &ExperimentConfig,
    algorithm: Algorithm,
    y: &Matrix<f64>,
    seed: u64,
) -> Result<Learned> {
    let p = y.rows();
    cfg.validate_for(algorithm, p)?;
    let fc = fit_config(cfg, algorithm, p, seed)?;
    let blocks = cfg.effective_blocks(algorithm);
    let columns = |gens: &[Vec<f64>]| Matrix::from_columns(gens.first().map_or(0, Vec::len), gens);
    Ok(match algorithm {
        Algorithm::Cdla => {
            let st = cdla_fit(y, &fc)?;
            let gens = vec![st.generator];
            Learned {
                dictionary: crate::ucirc::UnionCirculantDict::new(gens.clone())?.to_dense(),
                generators: columns(&gens)?,
                recovery_generators: Some(gens),
                code: st.code,
                report: st.report,
                blocks: 1,
                atoms_per_block: p,
                parameter_count: p,
                centered: true,
            }
        }
        Algorithm::Ucirc | Algorithm::UcdlaBlock => {
            let fit = if algorithm == Algorithm::Ucirc {
                ucirc_fit(y, blocks, &fc)?
            } else {
                ucdla_block_fit(y, blocks, &fc)?
            };
            let gens = fit.dict.generators();
            Learned {
                dictionary: fit.dict.to_dense(),
                generators: columns(&gens)?,
                recovery_generators: Some(gens),
                code: fit.code,
                report: fit.report,
                blocks,
                atoms_per_block: p,
                parameter_count: blocks * p,
                centered: true,
            }
        }
        Algorithm::Uconv => {
            let n = cfg.support.expect("validated");
            let fit = uconv_fit(y, blocks, n, &fc)?;
            Learned {
                dictionary: fit.dict.to_dense(),
                generators: columns(fit.dict.kernels())?,
                recovery_generators: Some(fit.dict.generators()),
                parameter_count: fit.dict.parameter_count(),
                code: fit.code,
                report: fit.report,
                blocks,
                atoms_per_block: p,
                centered: true,
            }
        }
        Algorithm::Wdla => {
            let (n, m) = (cfg.support.expect("validated"), cfg.stages.expect("validated"));
            let fit = wdla_fit(y, m, n, cfg.init.wavelet(), &fc)?;
            let filters: Vec<Vec<f64>> = fit
                .dict
                .stages()
                .iter()
                .flat_map(|st| [st.g().to_vec(), st.h().to_vec()])
                .collect();
            Learned {
                dictionary: fit.dict.dictionary(),
                generators: columns(&filters)?,
                recovery_generators: None,
                parameter_count: fit.dict.parameter_count(),
                code: fit.code,
                report: fit.report,
                blocks: 1,
                atoms_per_block: p,
                centered: false,
            }
        }
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub signal_len: usize,
    pub signals: usize,
    pub blocks: usize,
    pub sparsity: usize,
    pub parameter_count: usize,
    pub iterations: usize,
    pub stopped_early: bool,
    pub final_epsilon: f64,
    /// ε recomputed from the saved dictionary and code.
    pub recomputed_epsilon: f64,
    pub recovery: Option<Recovery>,
    pub recovery_threshold: f64,
    pub utilization: Vec<usize>,
    pub records: Vec<IterationRecord>,
    pub events: Vec<Event>,
    pub timings: PhaseTimings,
    pub total_secs: f64,
}

impl RunReport {
    /// Summarizes a fit and checks that the traced ε matches the dictionary
    /// and code actually returned.
    pub fn new(
        cfg: &ExperimentConfig,
        algorithm: Algorithm,
        seed: u64,
        data: &Dataset,
        learned: &Learned,
        total_secs: f64,
    ) -> Result<Self> {
        let final_epsilon = learned
            .report
            .final_epsilon()
            .ok_or_else(|| Error::Contract("fit recorded no iterations".into()))?;
        let recomputed_epsilon = if learned.centered {
            metric_epsilon(&remove_dc(&data.y).0, &learned.dictionary, &learned.code)?
        } else {
            metric_epsilon(&data.y, &learned.dictionary, &learned.code)?
        };
        if (final_epsilon - recomputed_epsilon).abs() > EPSILON_CHECK_TOL {
            return Err(Error::Divergence(format!(
                "traced ε {final_epsilon} disagrees with recomputed ε {recomputed_epsilon}"
            )));
        }
        let recovery = match (&data.truth, &learned.recovery_generators) {
            (Some(t), Some(g)) => Some(metric_recovery(g, &t.kernels, cfg.recovery_threshold)),
            _ => None,
        };
        Ok(Self {
            algorithm,
            seed,
            signal_len: data.y.rows(),
            signals: data.y.cols(),
            blocks: learned.blocks,
            sparsity: cfg.effective_sparsity(),
            parameter_count: learned.parameter_count,
            iterations: learned.report.records.len(),
            stopped_early: learned.report.stopped_early(),
            final_epsilon,
            recomputed_epsilon,
            recovery,
            recovery_threshold: cfg.recovery_threshold,
            utilization: learned.code.row_counts(),
            records: learned.report.records.clone(),
            events: learned.report.events.clone(),
            timings: learned.report.timings,
            total_secs,
        })
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    command: &'static str,
    config: &'a ExperimentConfig,
    runs: &'a [RunReport],
}

fn run_dir(cfg: &ExperimentConfig, algorithm: Algorithm, seed: u64) -> PathBuf {
    if cfg.algorithms.len() > 1 {
        cfg.output_dir.join(format!("{algorithm}-seed-{seed}"))
    } else {
        cfg.output_dir.join(format!("seed-{seed}"))
    }
}

/// Fits every configured algorithm for every seed and writes the artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let data = load_dataset(&cfg.dataset, seed)?;
        for &algorithm in &cfg.algorithms {
            let t = Instant::now();
            let learned = fit_algorithm(cfg, algorithm, &data.y, seed)?;
            let secs = t.elapsed().as_secs_f64();
            let report = RunReport::new(cfg, algorithm, seed, &data, &learned, secs)?;
            let dir = run_dir(cfg, algorithm, seed);
            fs::create_dir_all(&dir)?;
            write_run_files(&dir, &report, &learned)?;
            runs.push(report);
        }
    }
    write_json(
        &cfg.output_dir.join("summary.json"),
        &RunSummary {
            command: "run",
            config: cfg,
            runs: &runs,
        },
    )?;
    Ok(runs)
}

fn write_run_files(dir: &Path, report: &RunReport, learned: &Learned) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("objective.csv"))?;
    w.write_record([
        "iteration",
        "before_update",
        "after_update",
        "after_coding",
        "epsilon",
    ])?;
    for r in &report.records {
        w.write_record([
            r.iteration.to_string(),
            r.before_update.to_string(),
            r.after_update.to_string(),
            r.after_coding.to_string(),
            r.epsilon.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("utilization.csv"))?;
    w.write_record(["block", "atom", "count"])?;
    for (i, c) in report.utilization.iter().enumerate() {
        w.write_record([
            (i / learned.atoms_per_block).to_string(),
            (i % learned.atoms_per_block).to_string(),
            c.to_string(),
        ])?;
    }
    w.flush()?;

    if let Some(rec) = &report.recovery {
        let mut w = csv::Writer::from_path(dir.join("recovery.csv"))?;
        w.write_record(["kernel", "correlation", "recovered"])?;
        for (k, c) in rec.correlations.iter().enumerate() {
            let hit = *c >= report.recovery_threshold;
            w.write_record([k.to_string(), c.to_string(), u8::from(hit).to_string()])?;
        }
        w.flush()?;
    }

    write_simx(&dir.join("generators.simx"), &learned.generators)?;
    write_simx(&dir.join("dictionary.simx"), &learned.dictionary)?;
    Ok(())
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let file = fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub epsilon: f64,
    pub recovery: Option<f64>,
    pub iterations: usize,
    pub dictionary_secs: f64,
    pub coding_secs: f64,
    pub total_secs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepAggregate {
    pub value: f64,
    pub algorithm: Algorithm,
    pub mean_epsilon: f64,
    pub mean_recovery: Option<f64>,
    pub mean_secs: f64,
    /// Mean time relative to the first listed algorithm at the same value.
    pub time_ratio: f64,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    command: &'static str,
    config: &'a ExperimentConfig,
    aggregates: &'a [SweepAggregate],
}

/// Copy of `cfg` with the swept parameter set to `value`.
pub fn with_sweep_value(cfg: &ExperimentConfig, param: SweepParam, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    let int = value as usize;
    match param {
        SweepParam::Snr => match &mut c.dataset {
            DatasetSpec::Synthetic { spec, .. } => spec.snr_db = Some(value),
            _ => return Err(Error::Config("an SNR sweep needs a synthetic dataset".into())),
        },
        SweepParam::Sparsity => c.sparsity = Some(int),
        SweepParam::Support => c.support = Some(int),
        SweepParam::Blocks => c.blocks = Some(int),
    }
    c.sweep = None;
    Ok(c)
}

/// Runs every (value, algorithm, seed) combination of the configured sweep.
/// Writes `sweep.csv`, `timing.csv` and `summary.json`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<(Vec<SweepPoint>, Vec<SweepAggregate>)> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("no sweep configured (set `sweep.param` and `sweep.values`)".into()))?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut points = Vec::new();
    for &value in &sweep.values {
        let c = with_sweep_value(cfg, sweep.param, value)?;
        c.validate()?;
        for &seed in &c.seeds {
            let data = load_dataset(&c.dataset, seed)?;
            for &algorithm in &c.algorithms {
                let t = Instant::now();
                let learned = fit_algorithm(&c, algorithm, &data.y, seed)?;
                let secs = t.elapsed().as_secs_f64();
                let r = RunReport::new(&c, algorithm, seed, &data, &learned, secs)?;
                points.push(SweepPoint {
                    value,
                    algorithm,
                    seed,
                    epsilon: r.final_epsilon,
                    recovery: r.recovery.as_ref().map(|x| x.rate),
                    iterations: r.iterations,
                    dictionary_secs: r.timings.dictionary_secs,
                    coding_secs: r.timings.coding_secs,
                    total_secs: secs,
                });
            }
        }
    }
    let aggregates = aggregate(&points, &sweep.values, &cfg.algorithms);

    let name = sweep.param.name();
    let mut w = csv::Writer::from_path(cfg.output_dir.join("sweep.csv"))?;
    w.write_record([name, "algorithm", "seed", "epsilon", "recovery", "iterations"])?;
    for p in &points {
        w.write_record([
            p.value.to_string(),
            p.algorithm.to_string(),
            p.seed.to_string(),
            p.epsilon.to_string(),
            p.recovery.map_or(String::new(), |r| r.to_string()),
            p.iterations.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(cfg.output_dir.join("timing.csv"))?;
    w.write_record([
        name,
        "algorithm",
        "seed",
        "dictionary_secs",
        "coding_secs",
        "total_secs",
    ])?;
    for p in &points {
        w.write_record([
            p.value.to_string(),
            p.algorithm.to_string(),
            p.seed.to_string(),
            p.dictionary_secs.to_string(),
            p.coding_secs.to_string(),
            p.total_secs.to_string(),
        ])?;
    }
    w.flush()?;

    write_json(
        &cfg.output_dir.join("summary.json"),
        &SweepSummary {
            command: "sweep",
            config: cfg,
            aggregates: &aggregates,
        },
    )?;
    Ok((points, aggregates))
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn aggregate(points: &[SweepPoint], values: &[f64], algorithms: &[Algorithm]) -> Vec<SweepAggregate> {
    let mut out = Vec::new();
    for &value in values {
        let at = |a: Algorithm| {
            points
                .iter()
                .filter(move |p| p.value == value && p.algorithm == a)
        };
        let base = mean(at(algorithms[0]).map(|p| p.total_secs)).unwrap_or(0.0);
        for &a in algorithms {
            let secs = mean(at(a).map(|p| p.total_secs)).unwrap_or(0.0);
            out.push(SweepAggregate {
                value,
                algorithm: a,
                mean_epsilon: mean(at(a).map(|p| p.epsilon)).unwrap_or(f64::NAN),
                mean_recovery: mean(at(a).filter_map(|p| p.recovery)),
                mean_secs: secs,
                time_ratio: if base > 0.0 { secs / base } else { f64::NAN },
            });
        }
    }
    out
}

/// Writes a synthetic dataset: `Y.simx`, `kernels.simx` (one kernel per
/// column) and `occurrences.csv`.
pub fn write_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<()> {
    let (y, truth) = gen_synthetic::<f64>(spec)?;
    fs::create_dir_all(dir)?;
    write_simx(&dir.join("Y.simx"), &y)?;
    write_simx(
        &dir.join("kernels.simx"),
        &Matrix::from_columns(spec.n, &truth.kernels)?,
    )?;
    let mut w = csv::Writer::from_path(dir.join("occurrences.csv"))?;
    w.write_record(["column", "kernel", "shift", "coefficient"])?;
    for (j, col) in truth.columns.iter().enumerate() {
        for o in col {
            w.write_record([
                j.to_string(),
                o.kernel.to_string(),
                o.shift.to_string(),
                o.coefficient.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
