//! Numerical toolkit for branching random walks with shift-invariant
//! reproduction: every particle of type `i` spawns children at types
//! `i + k - 1`, with a count distribution that depends only on the
//! displacement `k`.
//!
//! The crate computes the global extinction probability `q` and the survival
//! decay rate `gamma`, constructs non-trivial fixed points of the offspring
//! generating operator by a backward prepend ladder with norm-crossing
//! selection, derives countable strictly ordered families from any fixed point,
//! and cross-validates everything against Monte Carlo simulation of the
//! process.
//!
//! Modules follow the pipeline:
//! - [`law`]: parse/validate offspring laws, moment data, model assumptions;
//! - [`roots`]: the three bracketed scalar solves (`q`, `gamma`, prepend);
//! - [`genfun`]: operator evaluation, residual/ratio diagnostics, the Joffe
//!   decomposition check;
//! - [`construct`]: the ladder, the norm-crossing scan, fixed-point candidates
//!   and families;
//! - [`simulate`]: generation-based Monte Carlo with deterministic per-trial
//!   streams (rayon-parallel behind the `parallel` feature, on by default);
//! - [`verify`]: the bundled property suite behind the `verify` CLI command.
//!
//! ```
//! use shiftbp::{law, roots, samples};
//!
//! let reference = samples::supercritical_example();
//! let summary = law::moments(&reference);
//! assert!((roots::solve_q(&summary).value - 0.6).abs() < 1e-10);
//! assert!((roots::solve_gamma(&summary).unwrap().value - 0.8).abs() < 1e-10);
//! ```

pub mod construct;
pub mod genfun;
pub mod law;
mod quad;
pub mod roots;
pub mod samples;
pub mod simulate;
pub mod verify;

pub use construct::{Candidate, CandidateDocument, ConstructParams, Direction, Supercritical};
pub use genfun::UVector;
pub use law::{load_law, load_law_file, moments, OffspringLaw};
pub use simulate::{ExtinctionEstimate, SimConfig, TypesetSpec};
