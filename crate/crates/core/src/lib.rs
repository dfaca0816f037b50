//! Inertial Bregman proximal gradient (iBPG) for problems
//!
//! ```text
//! minimize Ψ(x) = f(x) + g(x),   x ∈ ℝ^d
//! ```
//!
//! where `f` is smooth relative to a kernel `h` (there is `L` with
//! `|f(x) − f(y) − ⟨∇f(y), x − y⟩| ≤ L·D_h(x, y)`) and `g` is proper and lower
//! semicontinuous, possibly nonconvex.
//!
//! Besides the iteration itself the crate turns the descent and convergence
//! inequalities that govern the method into checks on solver traces
//! ([`diagnostics`]), and ships brute-force references ([`oracle`]) for the
//! closed-form subproblem solutions.
//!
//! ```
//! use ibpg::{instances, CompositeProblem, Kernel, NonsmoothPart, ParameterSchedule, StopRule};
//!
//! let inst = instances::quadratic_inverse(30, 10, 7).unwrap();
//! let problem =
//!     CompositeProblem::new(inst.smooth, NonsmoothPart::Zero, Kernel::quartic(10).unwrap()).unwrap();
//! let schedule = ParameterSchedule::default_for(problem.smad_constant(), 1.0);
//! let stop = StopRule { max_iter: 200, ..StopRule::default() };
//! let out = ibpg::run(&problem, &schedule, instances::standard_normal(10, 0), &stop).unwrap();
//! let checks = ibpg::diagnostics::standard_checks(&out, &problem, &schedule).unwrap();
//! assert!(checks.iter().all(|c| c.passed));
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
mod cubic;
pub mod diagnostics;
pub mod error;
pub mod instances;
pub mod kernels;
pub mod oracle;
pub mod par;
pub mod problems;
pub mod solver;

pub use cubic::radial_root;
pub use diagnostics::DiagnosticReport;
pub use error::{Error, Result};
pub use kernels::{Kernel, KernelKind};
pub use problems::{bregman_prox, CompositeProblem, NonsmoothPart, SmoothKind, SmoothPart};
pub use solver::{
    ibpg_step, lyapunov, run, stationarity_residual, validate_parameters, MWindow,
    ParameterSchedule, RunResult, SolverState, StepRule, StopRule, Termination, TraceRecord,
};
