//! Settings and reports shared by the alternating learners.

use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{normalize, Matrix};
use crate::scalar::Real;
use crate::solvers::SolverConfig;
use crate::sparse::ShiftMask;

/// Stop when the objective after coding improved by less than `tol`
/// (relative) over the last `window` iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EarlyStop {
    pub tol: f64,
    pub window: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            window: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    /// Nonzeros per code column.
    pub sparsity: usize,
    /// Iteration cap `K`.
    pub iterations: usize,
    pub seed: u64,
    pub early_stop: Option<EarlyStop>,
    /// A block whose code energy is below this fraction of the largest block
    /// energy is treated as unused and re-initialized.
    pub rescue_threshold: f64,
    /// Two blocks whose generators correlate at least this much (up to a
    /// cyclic shift and sign) count as duplicates; the less used one is
    /// re-initialized like an unused block.
    pub duplicate_threshold: Option<f64>,
    pub mask: Option<ShiftMask>,
    pub solver: SolverConfig,
}

impl FitConfig {
    pub fn new(sparsity: usize, iterations: usize) -> Self {
        Self {
            sparsity,
            iterations,
            seed: 0,
            early_stop: Some(EarlyStop::default()),
            rescue_threshold: 1e-6,
            duplicate_threshold: Some(0.95),
            mask: None,
            solver: SolverConfig::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn without_early_stop(mut self) -> Self {
        self.early_stop = None;
        self
    }

    pub(crate) fn validate(&self, signal_len: usize) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iteration count K must be at least 1".into()));
        }
        if self.sparsity < 1 || self.sparsity > signal_len {
            return Err(Error::Config(format!(
                "sparsity s = {} must lie in 1..={signal_len}",
                self.sparsity
            )));
        }
        Ok(())
    }
}

/// Objective `‖Y − DX‖²_F` around one iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub before_update: f64,
    pub after_update: f64,
    pub after_coding: f64,
    /// Relative error in percent after coding.
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// Frequency bins whose code rows vanished; their eigenvalues were set to zero.
    ZeroBins {
        iteration: usize,
        block: Option<usize>,
        bins: usize,
    },
    /// A singular normal-equation system was shifted by `ridge`.
    Ridge {
        iteration: usize,
        stage: Option<usize>,
        ridge: f64,
    },
    /// An unused block was re-initialized.
    Rescue {
        iteration: usize,
        block: usize,
    },
    /// A block duplicating another one was re-initialized.
    Duplicate {
        iteration: usize,
        block: usize,
        of: usize,
    },
    /// An update produced an all-zero kernel; the previous one was kept.
    ZeroKernel {
        iteration: usize,
        block: usize,
    },
    CgNotConverged {
        iteration: usize,
    },
    EarlyStop {
        iteration: usize,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub dictionary_secs: f64,
    pub coding_secs: f64,
}

impl PhaseTimings {
    pub(crate) fn add_dictionary(&mut self, d: Duration) {
        self.dictionary_secs += d.as_secs_f64();
    }

    pub(crate) fn add_coding(&mut self, d: Duration) {
        self.coding_secs += d.as_secs_f64();
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FitReport {
    pub records: Vec<IterationRecord>,
    pub events: Vec<Event>,
    pub timings: PhaseTimings,
    /// Squared Frobenius norm of the (centered) training data.
    pub data_energy: f64,
}

impl FitReport {
    pub(crate) fn new(data_energy: f64) -> Self {
        Self {
            data_energy,
            ..Self::default()
        }
    }

    /// Objective after each coding step.
    pub fn objective_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.after_coding).collect()
    }

    pub fn final_epsilon(&self) -> Option<f64> {
        self.records.last().map(|r| r.epsilon)
    }

    pub fn stopped_early(&self) -> bool {
        self.events.iter().any(|e| matches!(e, Event::EarlyStop { .. }))
    }

    pub(crate) fn push(&mut self, iteration: usize, before: f64, after: f64, coded: f64) {
        let epsilon = if self.data_energy > 0.0 {
            100.0 * coded / self.data_energy
        } else {
            0.0
        };
        self.records.push(IterationRecord {
            iteration,
            before_update: before,
            after_update: after,
            after_coding: coded,
            epsilon,
        });
    }

    /// Records an early stop if the configured criterion is met.
    pub(crate) fn should_stop(&mut self, rule: Option<EarlyStop>) -> bool {
        let Some(rule) = rule else { return false };
        let r = &self.records;
        if rule.window == 0 || r.len() <= rule.window {
            return false;
        }
        let old = r[r.len() - 1 - rule.window].after_coding;
        let new = r[r.len() - 1].after_coding;
        if (old - new).abs() < rule.tol * old.abs() {
            let iteration = r[r.len() - 1].iteration;
            self.events.push(Event::EarlyStop { iteration });
            true
        } else {
            false
        }
    }
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn gaussian_vector<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    (0..n)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            T::lit(v)
        })
        .collect()
}

/// Seeded random unit vector.
pub(crate) fn random_unit<T: Real>(rng: &mut ChaCha8Rng, n: usize) -> Vec<T> {
    loop {
        let mut v = gaussian_vector(rng, n);
        if normalize(&mut v) > T::zero() {
            return v;
        }
    }
}

/// Subtracts the mean of every column.
pub(crate) fn center_columns<T: Real>(y: &Matrix<T>) -> (Matrix<T>, Vec<T>) {
    let mut out = y.clone();
    let n = T::from_usize_lossy(y.rows().max(1));
    let means = out
        .columns_mut()
        .map(|col| {
            let mean = col.iter().copied().sum::<T>() / n;
            for v in col.iter_mut() {
                *v -= mean;
            }
            mean
        })
        .collect();
    (out, means)
}
