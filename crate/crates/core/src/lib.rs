//! Structured dictionary learning: unions of circulants, unions of
//! convolutions and learned wavelet cascades, with fast spectral and
//! Toeplitz solvers, orthogonal matching pursuit and an experiment runner.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! `*F64` and `*F32` aliases below name the concrete instantiations.

// `!(a > b)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circulant;
pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod learn;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod scalar;
pub mod solvers;
pub mod sparse;
pub mod spectral;
pub mod ucirc;
pub mod uconv;
pub mod wavelet;

pub use error::{Error, Result};
pub use learn::{EarlyStop, Event, FitConfig, FitReport, IterationRecord};
pub use matrix::Matrix;
pub use scalar::Real;
pub use sparse::{ShiftMask, SparseCode};
pub use spectral::{CirculantOperator, Fourier, Spectrum};
pub use ucirc::UnionCirculantDict;
pub use uconv::UnionConvDict;
pub use wavelet::{WaveletDict, WaveletInit};

pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type SparseCodeF64 = SparseCode<f64>;
pub type SparseCodeF32 = SparseCode<f32>;
pub type SpectrumF64 = Spectrum<f64>;
pub type SpectrumF32 = Spectrum<f32>;
pub type UnionCirculantDictF64 = UnionCirculantDict<f64>;
pub type UnionCirculantDictF32 = UnionCirculantDict<f32>;
pub type UnionConvDictF64 = UnionConvDict<f64>;
pub type UnionConvDictF32 = UnionConvDict<f32>;
pub type WaveletDictF64 = WaveletDict<f64>;
pub type WaveletDictF32 = WaveletDict<f32>;
