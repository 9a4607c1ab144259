//! Stochastic-optimization experiment bench: SGD and sliding-window SGD
//! with biased and unbiased gradient estimators, asymptotic-normality
//! (Fabian) predictions of the iterate MSE, and replicated Monte Carlo
//! experiments with deterministic CSV, gnuplot and JSON outputs.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod fabian;
pub mod harness;
pub mod linalg;
pub mod noise;
pub mod optimizers;
pub mod params;
pub mod problems;
pub mod stream;

pub use error::{Error, Result};
pub use estimators::{EstimatorKind, WindowBuffer};
pub use noise::{NoiseDraw, NoiseModel};
pub use optimizers::{Algorithm, OptimizerConfig, Trajectory};
pub use params::{GainSequence, ParamVector};
pub use problems::{Problem, QuadraticProblem, ScoreWeight, SimpleExample1D, SkewedQuartic};
pub use stream::{derive_stream, RngStreamSpec, Stream};
