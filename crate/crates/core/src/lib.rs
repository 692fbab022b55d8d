//! Active Masks: skewed majority-vote dynamics on finite grids.
//!
//! Each iteration relabels every pixel with the smallest label maximizing
//! `(A μ_m)(n) + R_m(n)`, where `μ_m` is the indicator of label `m`, `A` is a
//! linear voting operator and `R_m` are additive skew fields. The crate
//! provides the update rule and trajectory/cycle analysis ([`automaton`]),
//! the voting operators ([`operators`]), spectral certification of
//! convolution filters ([`spectral`]), brute-force verification of the
//! convergence guarantees on tiny domains ([`verify`]), image-driven skews
//! ([`skew`]) and file I/O plus the segmentation pipeline ([`io`]).
//!
//! Pixels are addressed row-major with the first axis slowest. Labels are
//! 1-based everywhere, including serialized output.

pub mod automaton;
pub mod domain;
pub mod error;
pub mod io;
pub mod operators;
pub mod skew;
pub mod spectral;
pub mod verify;

pub use automaton::{
    iterate_voting, run, step, tca_step, to_tca, AmConfig, CycleReport, DetectMode,
    IterationMetrics, SkewStack, TcaParams,
};
pub use domain::{Boundary, DomainSpec, Label, LabelField, RealField};
pub use error::{Error, Result};
pub use operators::{DenseMatrix, QuasiFactorization, VotingOperator};
pub use skew::{background_skew, zero_skew, ImageField, SoftThresholdSpec};
pub use spectral::{
    analyze_filter, dft, periodized_gaussian, sampled_gaussian, CenteredTaps, Filter,
    GaussianSpec, GuaranteeTier, SpectrumReport,
};
