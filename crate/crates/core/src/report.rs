//! Case studies and tabular reports built on the dispatch and imputation layers.
//!
//! All numbers are written with a fixed number of decimals so that reruns on
//! the same scenario produce identical text.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use coopgrid_conic::SolverConfig;
use serde::Serialize;

use crate::coalition::Coalition;
use crate::dispatch::{
    solve_dispatch, verify_robust_feasibility, CharacteristicFunction, DispatchMode, Market, VerificationReport,
};
use crate::error::{Error, Result};
use crate::imputation::{
    check_core, leastcore_benders, nucleolus, shapley, AttributionGame, BendersConfig, CharacteristicOracle,
    EnumerationSearch, LeastCore, MaxExcess, MembershipSearch, Method, MisocpSearch, RadiusEncoding, CORE_TOL,
    SHAPLEY_LIMIT,
};
use crate::model::{payoff_breakdown, PayoffBreakdown, Scenario};

fn num(x: f64) -> String {
    // avoid "-0.000000" in reports
    let s = format!("{x:.6}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// One column of the case comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseSummary {
    pub mode: DispatchMode,
    /// Uncertainty set used, e.g. `box` or `ellipsoid(r=1.6)`.
    pub set: String,
    pub total_payoff: f64,
    pub energy_purchase_cost: f64,
    pub energy_sale_revenue: f64,
    pub operator_reserve_up_cost: f64,
    pub operator_reserve_down_cost: f64,
    /// Reserve bought from the operator, summed over periods.
    pub operator_reserve_up: f64,
    pub operator_reserve_down: f64,
    /// Stand-alone values for the isolated case, a least-core allocation of
    /// the case's game otherwise.
    pub prosumer_payoffs: Vec<f64>,
}

impl CaseSummary {
    pub fn label(&self) -> &'static str {
        match self.mode {
            DispatchMode::Isolated => "I",
            DispatchMode::ElectricityOnly => "II",
            DispatchMode::JointData => "III",
        }
    }
}

/// Outcome of one case; failures do not stop the other cases.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CaseOutcome {
    Solved(CaseSummary),
    Failed { mode: DispatchMode, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CasesReport {
    pub scenario: String,
    pub prosumers: Vec<String>,
    pub cases: Vec<CaseOutcome>,
}

impl CasesReport {
    pub fn case(&self, mode: DispatchMode) -> Option<&CaseSummary> {
        self.cases.iter().find_map(|c| match c {
            CaseOutcome::Solved(s) if s.mode == mode => Some(s),
            _ => None,
        })
    }

    pub fn failures(&self) -> usize {
        self.cases.iter().filter(|c| matches!(c, CaseOutcome::Failed { .. })).count()
    }

    /// Case table with one row per case.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "case,mode,set,total_payoff,energy_purchase_cost,energy_sale_revenue,operator_reserve_up_cost,operator_reserve_down_cost",
        );
        for id in &self.prosumers {
            let _ = write!(out, ",payoff_{id}");
        }
        out.push_str(",status\n");
        for c in &self.cases {
            match c {
                CaseOutcome::Solved(s) => {
                    let _ = write!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        s.label(),
                        s.mode,
                        s.set,
                        num(s.total_payoff),
                        num(s.energy_purchase_cost),
                        num(s.energy_sale_revenue),
                        num(s.operator_reserve_up_cost),
                        num(s.operator_reserve_down_cost)
                    );
                    for p in &s.prosumer_payoffs {
                        let _ = write!(out, ",{}", num(*p));
                    }
                    out.push_str(",ok\n");
                }
                CaseOutcome::Failed { mode, error } => {
                    let _ = write!(out, ",{mode},,,,,,");
                    out.push_str(&",".repeat(self.prosumers.len()));
                    let _ = writeln!(out, ",\"{}\"", error.replace('"', "'"));
                }
            }
        }
        out
    }
}

fn summarize(
    mode: DispatchMode,
    set: String,
    total: f64,
    parts: &PayoffBreakdown,
    reserve: (f64, f64),
    prosumer_payoffs: Vec<f64>,
) -> CaseSummary {
    CaseSummary {
        mode,
        set,
        total_payoff: total,
        energy_purchase_cost: parts.energy_purchases,
        energy_sale_revenue: parts.energy_sales,
        operator_reserve_up_cost: parts.operator_reserve_up_cost,
        operator_reserve_down_cost: parts.operator_reserve_down_cost,
        operator_reserve_up: reserve.0,
        operator_reserve_down: reserve.1,
        prosumer_payoffs,
    }
}

fn isolated_case(m: &Market, cfg: &SolverConfig) -> Result<CaseSummary> {
    let s = m.scenario();
    let mut parts = PayoffBreakdown::default();
    let mut reserve = (0.0, 0.0);
    let mut payoffs = Vec::with_capacity(s.num_prosumers());
    for i in 0..s.num_prosumers() {
        let c = Coalition::singleton(i);
        let v = solve_dispatch(m, c, DispatchMode::Isolated, cfg)?;
        parts.add(&payoff_breakdown(s, c, &v.schedule)?);
        reserve.0 += v.schedule.operator_reserve_up[i].iter().sum::<f64>();
        reserve.1 += v.schedule.operator_reserve_down[i].iter().sum::<f64>();
        payoffs.push(v.value);
    }
    Ok(summarize(DispatchMode::Isolated, "box".into(), payoffs.iter().sum(), &parts, reserve, payoffs))
}

fn grand_case(m: &Arc<Market>, mode: DispatchMode, cfg: &SolverConfig) -> Result<CaseSummary> {
    let s = m.scenario();
    let cf = CharacteristicFunction::new(m.clone(), mode, cfg.clone());
    let grand = s.grand();
    let v = cf.solve(grand)?;
    let parts = payoff_breakdown(s, grand, &v.schedule)?;
    let sum = |rows: &[Vec<f64>]| rows.iter().flatten().sum::<f64>();
    let reserve = (sum(&v.schedule.operator_reserve_up), sum(&v.schedule.operator_reserve_down));
    let payoffs = if s.num_prosumers() < 2 {
        vec![v.value]
    } else {
        let lc = leastcore_benders(&cf, &MembershipSearch::new(&cf), &BendersConfig::from_solver(cfg))?;
        lc.x
    };
    Ok(summarize(mode, v.set.choice.to_string(), v.value, &parts, reserve, payoffs))
}

/// Stand-alone operation, coalition trading without data, and trading with
/// pooled data, each for the whole market.
pub fn run_cases(m: &Arc<Market>, cfg: &SolverConfig) -> CasesReport {
    let s = m.scenario();
    let mut cases = Vec::with_capacity(3);
    for mode in DispatchMode::ALL {
        let r = match mode {
            DispatchMode::Isolated => isolated_case(m, cfg),
            _ => grand_case(m, mode, cfg),
        };
        cases.push(match r {
            Ok(c) => CaseOutcome::Solved(c),
            Err(e) => {
                log::error!("case {mode} failed: {e}");
                CaseOutcome::Failed { mode, error: e.to_string() }
            }
        });
    }
    CasesReport { scenario: s.name.clone(), prosumers: s.prosumers.iter().map(|p| p.id.clone()).collect(), cases }
}

/// How the least-core subproblem finds the coalition with the largest excess.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SearchKind {
    /// Best-first search over membership decisions.
    #[default]
    Membership,
    /// Every proper coalition.
    Enumeration,
    /// Mixed-binary conic subproblem with exact radius re-evaluation.
    Misocp,
}

impl std::str::FromStr for SearchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "membership" => Ok(SearchKind::Membership),
            "enumeration" => Ok(SearchKind::Enumeration),
            "misocp" => Ok(SearchKind::Misocp),
            _ => Err(Error::InvalidArgument(format!("unknown search `{s}` (membership, enumeration, misocp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImputationOptions {
    /// Divide by energy contributions only: proper coalitions are valued
    /// without data reductions.
    pub electricity_only_attribution: bool,
    pub search: SearchKind,
    pub benders: BendersConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImputationReport {
    pub scenario: String,
    pub method: Method,
    /// `edt` (energy and data) or `et` (energy only).
    pub attribution: &'static str,
    pub prosumers: Vec<String>,
    pub x: Vec<f64>,
    pub grand_value: f64,
    /// Coalitions with positive excess, largest first; `None` above the
    /// enumeration limit.
    pub core_violations: Option<Vec<(Coalition, f64)>>,
    pub least_core: Option<LeastCore>,
    pub seconds: f64,
}

impl ImputationReport {
    /// Allocation table with one row per prosumer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("prosumer,payoff\n");
        for (id, v) in self.prosumers.iter().zip(&self.x) {
            let _ = writeln!(out, "{id},{}", num(*v));
        }
        let _ = writeln!(out, "total,{}", num(self.x.iter().sum()));
        out
    }

    /// Coalitions whose excess is positive under the allocation.
    pub fn violations_csv(&self) -> String {
        let mut out = String::from("coalition,excess\n");
        for (c, e) in self.core_violations.iter().flatten() {
            let _ = writeln!(out, "\"{c}\",{}", num(*e));
        }
        out
    }
}

fn search_for<'a>(
    kind: SearchKind,
    game: &'a dyn CharacteristicOracle,
    cf: &'a CharacteristicFunction,
    attribution: bool,
) -> Result<Box<dyn MaxExcess + 'a>> {
    Ok(match kind {
        SearchKind::Membership => Box::new(MembershipSearch::new(game)),
        SearchKind::Enumeration => Box::new(EnumerationSearch::new(game)),
        SearchKind::Misocp if attribution => {
            return Err(Error::InvalidArgument("the conic subproblem does not support energy-only attribution".into()))
        }
        SearchKind::Misocp => Box::new(MisocpSearch::new(cf, RadiusEncoding::Exact)),
    })
}

/// Divides the grand coalition's pooled-data payoff with `method`.
pub fn run_imputation(
    m: &Arc<Market>,
    method: Method,
    opts: &ImputationOptions,
    cfg: &SolverConfig,
) -> Result<ImputationReport> {
    let s = m.scenario();
    let start = Instant::now();
    let cf = CharacteristicFunction::new(m.clone(), DispatchMode::JointData, cfg.clone());
    let attribution;
    let game: Box<dyn CharacteristicOracle> = if opts.electricity_only_attribution {
        attribution = "et";
        Box::new(AttributionGame::new(cf.clone())?)
    } else {
        attribution = "edt";
        Box::new(cf.clone())
    };
    let game = game.as_ref();
    let mut least_core = None;
    let x = match method {
        Method::Shapley => shapley(game)?,
        Method::Nucleolus => nucleolus(game)?,
        Method::LeastCore => {
            let search = search_for(opts.search, game, &cf, opts.electricity_only_attribution)?;
            let lc = leastcore_benders(game, search.as_ref(), &opts.benders)?;
            let x = lc.x.clone();
            least_core = Some(lc);
            x
        }
    };
    let core_violations = if game.players() <= SHAPLEY_LIMIT { Some(check_core(game, &x, CORE_TOL)?) } else { None };
    Ok(ImputationReport {
        scenario: s.name.clone(),
        method,
        attribution,
        prosumers: s.prosumers.iter().map(|p| p.id.clone()).collect(),
        grand_value: game.value(s.grand())?,
        x,
        core_violations,
        least_core,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Value of pooled data at one tariff level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub multiplier: f64,
    pub electricity_only: f64,
    pub joint_data: f64,
    /// `joint_data − electricity_only`.
    pub data_value: f64,
}

/// Scales every tariff price by each multiplier and compares the grand
/// coalition with and without pooled data.
pub fn run_sweep(s: &Scenario, multipliers: &[f64], cfg: &SolverConfig) -> Result<Vec<SweepRow>> {
    if let Some(&bad) = multipliers.iter().find(|&&k| !(k > 0.0 && k.is_finite())) {
        return Err(Error::InvalidArgument(format!("price multipliers must be positive, got {bad}")));
    }
    let mut rows = Vec::with_capacity(multipliers.len());
    for &k in multipliers {
        let m = Market::new(s.with_scaled_tariff(k))?;
        let grand = s.grand();
        let ii = solve_dispatch(&m, grand, DispatchMode::ElectricityOnly, cfg)?.value;
        let iii = solve_dispatch(&m, grand, DispatchMode::JointData, cfg)?.value;
        rows.push(SweepRow { multiplier: k, electricity_only: ii, joint_data: iii, data_value: iii - ii });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("multiplier,electricity_only,joint_data,data_value\n");
    for r in rows {
        let _ =
            writeln!(out, "{},{},{},{}", r.multiplier, num(r.electricity_only), num(r.joint_data), num(r.data_value));
    }
    out
}

/// Solves `c` under `mode` and samples its uncertainty set.
pub fn run_verify(
    m: &Market,
    c: Coalition,
    mode: DispatchMode,
    samples: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<VerificationReport> {
    let v = solve_dispatch(m, c, mode, cfg)?;
    verify_robust_feasibility(m, &v, samples, seed)
}

pub fn verification_text(r: &VerificationReport) -> String {
    format!(
        "coalition {}\nsamples {}\nmax_violation {:.3e}\nviolating_samples {}\nmax_balance_residual {:.3e}\nschedule_violation {:.3e}\nresult {}\n",
        r.coalition,
        r.samples,
        r.max_violation,
        r.violating_samples,
        r.max_balance_residual,
        r.schedule_violation,
        if r.passed() { "pass" } else { "fail" }
    )
}
