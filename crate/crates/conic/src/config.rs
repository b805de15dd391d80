use crate::ConicError;

/// Tolerances and limits shared by the continuous backend, branch-and-bound
/// and the Benders loop built on top of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Scaled primal feasibility residual accepted for an `Optimal` status.
    pub feas_tol: f64,
    /// Relative optimality gap for branch-and-bound pruning.
    pub rel_gap: f64,
    /// Termination tolerance of the Benders loop.
    pub benders_epsilon: f64,
    /// Global big-M override; `None` derives M per product from model bounds.
    pub big_m: Option<f64>,
    /// Lower bound on the Benders master objective.
    pub mu_min: f64,
    /// Maximum number of branch-and-bound nodes.
    pub node_limit: usize,
    /// Wall-clock limit in seconds, applied per solve.
    pub time_limit: Option<f64>,
    /// Interior-point iteration limit.
    pub max_iter: u32,
    pub seed: u64,
    /// Keep a per-node trace in [`crate::SolveStats::node_log`].
    pub record_nodes: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            feas_tol: 1e-8,
            rel_gap: 1e-6,
            benders_epsilon: 1e-6,
            big_m: None,
            mu_min: -1e9,
            node_limit: 100_000,
            time_limit: None,
            max_iter: 200,
            seed: 0,
            record_nodes: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ConicError> {
        let positive =
            [("feas_tol", self.feas_tol), ("rel_gap", self.rel_gap), ("benders_epsilon", self.benders_epsilon)];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConicError::InvalidConfig(format!("{name} must be positive, got {value}")));
            }
        }
        if let Some(m) = self.big_m {
            if !(m > 0.0 && m.is_finite()) {
                return Err(ConicError::InvalidConfig(format!("big_m must be positive, got {m}")));
            }
        }
        if let Some(t) = self.time_limit {
            if t.is_nan() || t <= 0.0 {
                return Err(ConicError::InvalidConfig(format!("time_limit must be positive, got {t}")));
            }
        }
        if !self.mu_min.is_finite() {
            return Err(ConicError::InvalidConfig("mu_min must be finite".into()));
        }
        Ok(())
    }
}
