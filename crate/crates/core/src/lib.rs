//! Physics-informed neural-network training with a PDE-aware optimizer.
//!
//! The crate trains small tanh networks to satisfy one-dimensional
//! benchmark PDEs (viscous Burgers, Allen-Cahn, Korteweg-de Vries) by
//! minimizing a composite of initial-condition, boundary-condition and
//! equation-residual losses over sampled collocation points. Its centre
//! piece is an optimizer whose second-moment accumulator is fed by
//! *per-sample* residual gradients rather than the batch mean, damping
//! parameters whose physics signal disagrees across collocation points.
//!
//! Layout:
//!
//! * [`autodiff`]: truncated bivariate Taylor jets pushed through the
//!   network (forward) with a reverse sweep over jets for parameter
//!   gradients of derivative-dependent scalars.
//! * [`model`]: MLP description, deterministic initialization,
//!   checkpoint files.
//! * [`pde`]: benchmark definitions, residuals, collocation sampling,
//!   composite loss.
//! * [`optim`]: Adam baseline and the per-sample-variance optimizer.
//! * [`refsolve`]: finite-difference reference solvers and field files.
//! * [`metrics`]: error norms, loss-curve smoothness, gradient
//!   alignment diagnostics.
//! * [`harness`]: experiment configs, presets, training loop, grid
//!   search, evaluation and comparison plumbing.
//!
//! Determinism is a contract: a fixed (config, seed) pair reproduces
//! every artifact byte-for-byte (wall-clock fields aside) regardless of
//! worker-thread count.

pub mod autodiff;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod pde;
pub mod reduce;
pub mod refsolve;

pub use error::{Error, Result};
pub use harness::{ExperimentConfig, RunRecord};
pub use metrics::{LossHistory, LossRecord};
pub use model::{ModelSpec, ParameterVector};
pub use pde::{PdeKind, PdeSpec};
pub use refsolve::{Grid, SolutionField};
