//! Cooperative energy and data trading among prosumers.
//!
//! A coalition's payoff is the optimum of a robust dispatch problem in which
//! renewable uncertainty is described by an ellipsoid whose budget shrinks as
//! members pool their data. The crate computes those payoffs and divides the
//! grand coalition's payoff with the Shapley value, the nucleolus or a least
//! core allocation found by constraint generation.

pub mod coalition;
pub mod dispatch;
pub mod error;
pub mod imputation;
pub mod model;
pub mod report;
pub mod scenario;
pub mod synthetic;
pub mod uncertainty;

pub use coalition::{enumerate_coalitions, Coalition, ENUMERATION_LIMIT};
pub use dispatch::{
    build_counterpart, recourse_response, solve_dispatch, verify_robust_feasibility, CharacteristicFunction,
    CoalitionValue, DispatchMode, Market, RobustCounterpart,
};
pub use error::{Error, ErrorKind, Issue, Result};
pub use model::{evaluate_payoff, DispatchSchedule, Scenario};
pub use scenario::{load_scenario, parse_scenario};
