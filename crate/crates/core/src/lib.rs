//! Reconstruction of 2D NMR relaxation maps (T1-T2, T2-T2, D-T2) from
//! separable multi-exponential decay data.
//!
//! The inverse problem
//!
//! ```text
//! min_f ‖K f − s‖² + ω1·Σᵢ λᵢ (L f)ᵢ² + ω2·α‖f‖₁,     K = K2 ⊗ K1
//! ```
//!
//! is solved by FISTA, with the local smoothing parameters `λᵢ` and the
//! sparsity parameter `α` re-tuned between solves by the uniform-penalty
//! rule. See [`inversion::invert`] for the full pipeline.

pub mod diagnostics;
pub mod error;
pub mod io;
pub mod inversion;
pub mod kernels;
pub mod operator;
pub mod plot;
pub mod regularizer;
pub mod solver;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};
pub use inversion::{invert, resolve_weights, InversionConfig, InversionResult};
pub use kernels::{build_kernel_pair, make_log_grid, AcquisitionTimes, KernelKind, RelaxationGrid, SeparableKernel};
pub use operator::KroneckerOperator;
pub use diagnostics::{analyze, Analysis};
pub use io::{load_input, write_outputs, InputData, ParsedConfig};
