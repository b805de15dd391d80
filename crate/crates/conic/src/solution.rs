use crate::bnb::NodeRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
    NumericalFailure,
}

impl Status {
    pub fn is_optimal(self) -> bool {
        self == Status::Optimal
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::IterLimit => "iteration limit",
            Status::NumericalFailure => "numerical failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    /// Interior-point iterations, summed over all nodes for mixed solves.
    pub iterations: u64,
    /// Branch-and-bound nodes processed (1 for continuous solves).
    pub nodes: usize,
    pub seconds: f64,
    /// Scaled primal residual of the returned point.
    pub max_residual: f64,
    /// Raw status string reported by the backend.
    pub backend_status: String,
    pub node_log: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: Status,
    /// Primal values; for `IterLimit` from branch-and-bound this is the best
    /// incumbent (empty if none was found).
    pub x: Vec<f64>,
    /// Objective in the program's minimisation sense (NaN without a point).
    pub objective: f64,
    /// Nonnegative multipliers of inequality rows and signed multipliers of
    /// equality rows, indexed like [`crate::ConicProgram::rows`]. Only set by
    /// continuous solves.
    pub row_duals: Option<Vec<f64>>,
    pub stats: SolveStats,
}

impl Solution {
    pub fn failed(status: Status, detail: impl Into<String>) -> Self {
        Solution {
            status,
            x: Vec::new(),
            objective: f64::NAN,
            row_duals: None,
            stats: SolveStats { backend_status: detail.into(), ..Default::default() },
        }
    }

    pub fn has_point(&self) -> bool {
        !self.x.is_empty() && self.objective.is_finite()
    }
}
