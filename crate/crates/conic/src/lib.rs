//! Solver-agnostic conic programs for the market models.
//!
//! A [`ConicProgram`] is a minimisation problem over bounded variables with
//! linear rows, second-order cones `‖x_J‖₂ ≤ x_k`, rotated cones
//! `2·x_a·x_b ≥ ‖x_J‖₂²` and an optional set of binary variables.
//!
//! * [`solve_continuous`] solves the continuous problem through the default
//!   interior-point backend ([`ClarabelBackend`]).
//! * [`solve_mixed`] runs best-first branch-and-bound over the binaries.
//! * [`linearize_product`] and [`audit_bigm`] implement the big-M encoding of
//!   binary × continuous products.
//! * [`text`] provides a canonical plain-text dump that round-trips bit-exactly.

pub mod backend;
pub mod bnb;
pub mod config;
pub mod error;
pub mod linearize;
pub mod program;
pub mod solution;
pub mod text;

pub use backend::{ClarabelBackend, ContinuousSolver};
pub use bnb::{solve_mixed, solve_mixed_with, IntegralRefiner, NodeRecord};
pub use config::SolverConfig;
pub use error::ConicError;
pub use linearize::{audit_bigm, linearize_product, BigMAudit, BigMIssue, ProductLink};
pub use program::{ConicProgram, RotatedCone, Row, SecondOrderCone, Sense, Var};
pub use solution::{Solution, SolveStats, Status};

/// Solve `program` with the default backend, ignoring integrality marks.
pub fn solve_continuous(program: &ConicProgram, cfg: &SolverConfig) -> Solution {
    ClarabelBackend.solve(program, cfg)
}
