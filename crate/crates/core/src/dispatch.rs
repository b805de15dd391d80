//! Robust dispatch of one coalition.
//!
//! Renewable deviations are absorbed by an affine policy: every flexible
//! load, machine and the operator take a fixed share of the coalition's total
//! deviation `D_t`. The worst case over the uncertainty set of `share · D_t`
//! must fit inside the reserve each participant holds, which gives one linear
//! row per share and direction once the set's support values are known.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use coopgrid_conic::{solve_continuous, ConicProgram, Sense, SolverConfig, Status, Var};
use nalgebra::DVector;
use parking_lot::RwLock;
use rayon::prelude::*;
use serde::Serialize;

use crate::coalition::Coalition;
use crate::error::{Error, Result};
use crate::model::{evaluate_payoff, DispatchSchedule, ElectricityOnlySet, EllipsoidLayout, Scenario};
use crate::scenario::fingerprint;
use crate::uncertainty::{
    sample_box, sample_ellipsoid, support_components, DataContribution, EllipsoidSet, SampleMode,
};

/// Recourse bounds are checked with this absolute slack.
pub const RECOURSE_TOL: f64 = 1e-6;

/// Which uncertainty set a coalition faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispatchMode {
    /// Stand-alone prosumers facing their own boxes.
    Isolated,
    /// Coalitions trade energy but keep their data private.
    ElectricityOnly,
    /// Coalitions trade energy and pool data, shrinking the ellipsoid budget.
    JointData,
}

impl DispatchMode {
    pub const ALL: [DispatchMode; 3] = [DispatchMode::Isolated, DispatchMode::ElectricityOnly, DispatchMode::JointData];

    pub fn as_str(self) -> &'static str {
        match self {
            DispatchMode::Isolated => "isolated",
            DispatchMode::ElectricityOnly => "electricity-only",
            DispatchMode::JointData => "joint-data",
        }
    }
}

impl fmt::Display for DispatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DispatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DispatchMode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown mode `{s}` (isolated, electricity-only, joint-data)"))
        })
    }
}

/// A validated scenario with its uncertainty data prepared once.
#[derive(Debug, Clone)]
pub struct Market {
    scenario: Scenario,
    data: DataContribution,
    /// Ellipsoids at the historical budget.
    ellipsoids: Option<Vec<EllipsoidSet>>,
    owners: Vec<usize>,
    fingerprint: String,
    sell_cap: Vec<f64>,
    buy_cap: Vec<f64>,
    reserve_cap: Vec<f64>,
}

impl Market {
    pub fn new(scenario: Scenario) -> Result<Market> {
        scenario.check()?;
        let data = scenario.data_contribution()?;
        let ellipsoids = scenario.ellipsoids(data.historical)?;
        let owners = scenario.drg_owners();
        let t = scenario.periods();
        let mut market = Market {
            fingerprint: fingerprint(&scenario),
            scenario,
            data,
            ellipsoids,
            owners,
            sell_cap: vec![0.0; t],
            buy_cap: vec![0.0; t],
            reserve_cap: vec![0.0; t],
        };
        market.compute_caps()?;
        Ok(market)
    }

    /// Bounds that hold at some optimum of every coalition's problem:
    /// a prosumer never sells more than everyone can produce, never buys more
    /// than everyone can consume, and no reserve exceeds the sum of the
    /// per-renewable worst cases.
    fn compute_caps(&mut self) -> Result<()> {
        let s = &self.scenario;
        let d = self.owners.len();
        for t in 0..s.periods() {
            let mut sell = 0.0;
            let mut buy = 0.0;
            for (i, p) in s.prosumers.iter().enumerate() {
                sell += p.machines.iter().map(|m| m.capacity).sum::<f64>() + s.forecast(i, t).max(0.0);
                buy += p.load_max[t];
            }
            let boxes = s.period_box(t);
            let mut reserve = 0.0;
            for j in 0..d {
                let mut worst = boxes.half_widths[j];
                if let Some(sets) = &self.ellipsoids {
                    let (k, coord) = self.coordinate(t, j);
                    let e = &sets[k];
                    let mut a = DVector::zeros(e.dim());
                    a[coord] = 1.0;
                    let (lin, norm) = support_components(&a, e)?;
                    let radius = self.data.historical.sqrt() * norm;
                    worst = worst.max(lin.abs() + radius);
                }
                reserve += worst;
            }
            self.sell_cap[t] = sell + reserve;
            self.buy_cap[t] = buy + reserve;
            self.reserve_cap[t] = reserve;
        }
        Ok(())
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn data(&self) -> &DataContribution {
        &self.data
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn ellipsoids(&self) -> Option<&[EllipsoidSet]> {
        self.ellipsoids.as_deref()
    }

    pub fn drg_owners(&self) -> &[usize] {
        &self.owners
    }

    pub fn num_prosumers(&self) -> usize {
        self.scenario.num_prosumers()
    }

    /// Same market without data-sharing reductions.
    pub fn without_contributions(&self) -> Result<Market> {
        Market::new(self.scenario.without_contributions())
    }

    /// Ellipsoid index and coordinate of renewable `j` in period `t`.
    pub fn coordinate(&self, t: usize, j: usize) -> (usize, usize) {
        match self.scenario.layout() {
            Some(EllipsoidLayout::SpaceTime) => (0, t * self.owners.len() + j),
            _ => (t, j),
        }
    }

    pub(crate) fn sell_cap(&self, t: usize) -> f64 {
        self.sell_cap[t]
    }

    pub(crate) fn buy_cap(&self, t: usize) -> f64 {
        self.buy_cap[t]
    }

    pub(crate) fn reserve_cap(&self, t: usize) -> f64 {
        self.reserve_cap[t]
    }

    /// Global indices of the renewables owned by members of `c`.
    pub fn member_drgs(&self, c: Coalition) -> Vec<usize> {
        (0..self.owners.len()).filter(|&j| c.contains(self.owners[j])).collect()
    }

    /// The set faced by `c` under `mode`, with its per-period support values.
    pub fn uncertainty(&self, c: Coalition, mode: DispatchMode) -> Result<CoalitionSet> {
        let s = &self.scenario;
        let choice = match mode {
            DispatchMode::Isolated => {
                if c.len() != 1 {
                    return Err(Error::ModeMismatch(format!(
                        "isolated dispatch applies to single prosumers, got coalition {c}"
                    )));
                }
                SetChoice::Box
            }
            DispatchMode::ElectricityOnly => match (s.config.electricity_only_set, &self.ellipsoids) {
                (ElectricityOnlySet::Historical, Some(_)) => SetChoice::Ellipsoid { budget: self.data.historical },
                _ => SetChoice::Box,
            },
            DispatchMode::JointData => match &self.ellipsoids {
                Some(_) => SetChoice::Ellipsoid { budget: self.data.effective_budget(c) },
                None => SetChoice::Box,
            },
        };
        let drgs = self.member_drgs(c);
        let t_len = s.periods();
        let mut up = vec![0.0; t_len];
        let mut down = vec![0.0; t_len];
        for t in 0..t_len {
            match choice {
                SetChoice::Box => {
                    let b = s.period_box(t);
                    let w: f64 = drgs.iter().map(|&j| b.half_widths[j]).sum();
                    up[t] = w;
                    down[t] = w;
                }
                SetChoice::Ellipsoid { budget } => {
                    if drgs.is_empty() {
                        continue;
                    }
                    let sets = self.ellipsoids.as_ref().expect("ellipsoid choice implies ellipsoids");
                    let a = self.direction(t, &drgs);
                    let (lin, norm) = support_components(&a, &sets[self.coordinate(t, 0).0])?;
                    let radius = budget.sqrt() * norm;
                    up[t] = lin + radius;
                    down[t] = radius - lin;
                }
            }
        }
        Ok(CoalitionSet { choice, has_drg: !drgs.is_empty(), up, down })
    }

    /// Indicator of the given renewables in period `t`, in ellipsoid coordinates.
    pub fn direction(&self, t: usize, drgs: &[usize]) -> DVector<f64> {
        let sets = self.ellipsoids.as_ref().expect("scenario has ellipsoids");
        let (k, _) = self.coordinate(t, 0);
        let mut a = DVector::zeros(sets[k].dim());
        for &j in drgs {
            a[self.coordinate(t, j).1] = 1.0;
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetChoice {
    Box,
    Ellipsoid { budget: f64 },
}

impl fmt::Display for SetChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetChoice::Box => f.write_str("box"),
            SetChoice::Ellipsoid { budget } => write!(f, "ellipsoid(r={budget})"),
        }
    }
}

/// Uncertainty faced by a coalition, reduced to the worst total deviation
/// in each direction per period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalitionSet {
    pub choice: SetChoice,
    pub has_drg: bool,
    /// `max D_t` over the set.
    pub up: Vec<f64>,
    /// `max −D_t` over the set.
    pub down: Vec<f64>,
}

/// Program variables of one member.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberVars {
    pub prosumer: usize,
    pub load: Vec<Var>,
    pub sold: Vec<Var>,
    pub bought: Vec<Var>,
    pub load_up: Vec<Var>,
    pub load_down: Vec<Var>,
    pub operator_up: Vec<Var>,
    pub operator_down: Vec<Var>,
    pub generation: Vec<Vec<Var>>,
    pub machine_up: Vec<Vec<Var>>,
    pub machine_down: Vec<Vec<Var>>,
    /// One entry, or one per period with per-period coefficients.
    pub load_share: Vec<Var>,
    pub operator_share: Vec<Var>,
    pub machine_share: Vec<Vec<Var>>,
    pub utility_epigraph: Vec<Option<Var>>,
    pub cost_epigraph: Vec<Vec<Option<Var>>>,
}

fn at(v: &[Var], t: usize) -> Var {
    if v.len() == 1 {
        v[0]
    } else {
        v[t]
    }
}

impl MemberVars {
    /// Every variable that maps to a schedule entry.
    pub fn schedule_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for v in [
            &self.load,
            &self.sold,
            &self.bought,
            &self.load_up,
            &self.load_down,
            &self.operator_up,
            &self.operator_down,
        ] {
            out.extend_from_slice(v);
        }
        for v in self.generation.iter().chain(&self.machine_up).chain(&self.machine_down).chain(&self.machine_share) {
            out.extend_from_slice(v);
        }
        out.extend_from_slice(&self.load_share);
        out.extend_from_slice(&self.operator_share);
        out
    }
}

/// The robust counterpart of one coalition's dispatch problem, written as a
/// minimisation of minus the coalition payoff.
#[derive(Debug, Clone)]
pub struct RobustCounterpart {
    pub coalition: Coalition,
    pub mode: DispatchMode,
    pub program: ConicProgram,
    pub members: Vec<MemberVars>,
    pub set: CoalitionSet,
}

/// Adds the variables, local rows and objective terms of prosumer `i`.
/// The caller adds balance, share and robust rows.
pub(crate) fn add_member(p: &mut ConicProgram, m: &Market, i: usize, half: Var) -> MemberVars {
    let s = m.scenario();
    let pr = &s.prosumers[i];
    let tar = &s.tariff;
    let t_len = s.periods();
    let shares = if s.config.per_period_coefficients { t_len } else { 1 };
    let mut mv = MemberVars {
        prosumer: i,
        load: Vec::new(),
        sold: Vec::new(),
        bought: Vec::new(),
        load_up: Vec::new(),
        load_down: Vec::new(),
        operator_up: Vec::new(),
        operator_down: Vec::new(),
        generation: vec![Vec::new(); pr.machines.len()],
        machine_up: vec![Vec::new(); pr.machines.len()],
        machine_down: vec![Vec::new(); pr.machines.len()],
        load_share: (0..shares).map(|_| p.add_var(0.0, 1.0)).collect(),
        operator_share: (0..shares).map(|_| p.add_var(0.0, 1.0)).collect(),
        machine_share: pr.machines.iter().map(|_| (0..shares).map(|_| p.add_var(0.0, 1.0)).collect()).collect(),
        utility_epigraph: Vec::new(),
        cost_epigraph: vec![Vec::new(); pr.machines.len()],
    };
    for t in 0..t_len {
        let (lo, hi) = (pr.load_min[t], pr.load_max[t]);
        let pd = p.add_var(0.0, hi);
        p.add_objective(pd, -pr.utility_linear[t]);
        let epi = if pr.utility_quadratic[t] > 0.0 {
            let u = p.add_var(0.0, hi * hi);
            p.add_objective(u, pr.utility_quadratic[t]);
            p.add_rotated(u, half, vec![pd]);
            Some(u)
        } else {
            None
        };
        let exchange = pr.exchange_cap.unwrap_or(f64::INFINITY);
        let ps = p.add_var(0.0, exchange.min(m.sell_cap(t)));
        let pb = p.add_var(0.0, exchange.min(m.buy_cap(t)));
        p.add_objective(ps, -tar.sell_price[t]);
        p.add_objective(pb, tar.buy_price[t]);
        let rd_up = p.add_var(0.0, hi);
        let rd_dw = p.add_var(0.0, hi);
        p.add_objective(rd_up, pr.load_reserve_up_price[t]);
        p.add_objective(rd_dw, pr.load_reserve_down_price[t]);
        let rm_up = p.add_var(0.0, m.reserve_cap(t));
        let rm_dw = p.add_var(0.0, m.reserve_cap(t));
        p.add_objective(rm_up, tar.reserve_up_price[t]);
        p.add_objective(rm_dw, tar.reserve_down_price[t]);
        p.add_row("load_up", vec![(pd, 1.0), (rd_up, 1.0)], Sense::Le, hi);
        p.add_row("load_down", vec![(pd, 1.0), (rd_dw, -1.0)], Sense::Ge, lo);
        mv.load.push(pd);
        mv.utility_epigraph.push(epi);
        mv.sold.push(ps);
        mv.bought.push(pb);
        mv.load_up.push(rd_up);
        mv.load_down.push(rd_dw);
        mv.operator_up.push(rm_up);
        mv.operator_down.push(rm_dw);
        for (k, mt) in pr.machines.iter().enumerate() {
            let pg = p.add_var(0.0, mt.capacity);
            p.add_objective(pg, mt.cost_linear);
            p.add_offset(mt.cost_fixed);
            let epi = if mt.cost_quadratic > 0.0 {
                let u = p.add_var(0.0, mt.capacity * mt.capacity);
                p.add_objective(u, mt.cost_quadratic);
                p.add_rotated(u, half, vec![pg]);
                Some(u)
            } else {
                None
            };
            let rg_up = p.add_var(0.0, mt.capacity);
            let rg_dw = p.add_var(0.0, mt.capacity);
            p.add_objective(rg_up, mt.reserve_up_price[t]);
            p.add_objective(rg_dw, mt.reserve_down_price[t]);
            p.add_row("machine_up", vec![(pg, 1.0), (rg_up, 1.0)], Sense::Le, mt.capacity);
            p.add_row("machine_down", vec![(pg, 1.0), (rg_dw, -1.0)], Sense::Ge, 0.0);
            mv.generation[k].push(pg);
            mv.cost_epigraph[k].push(epi);
            mv.machine_up[k].push(rg_up);
            mv.machine_down[k].push(rg_dw);
        }
    }
    mv
}

/// `(share, reserve up, reserve down)` triples of a member in period `t`.
pub(crate) fn share_triples(mv: &MemberVars, t: usize) -> Vec<(&'static str, Var, Var, Var)> {
    let mut out = vec![("load", at(&mv.load_share, t), mv.load_up[t], mv.load_down[t])];
    for k in 0..mv.generation.len() {
        out.push(("machine", at(&mv.machine_share[k], t), mv.machine_up[k][t], mv.machine_down[k][t]));
    }
    out.push(("operator", at(&mv.operator_share, t), mv.operator_up[t], mv.operator_down[t]));
    out
}

/// Builds the robust counterpart of `c` under `mode`.
pub fn build_counterpart(m: &Market, c: Coalition, mode: DispatchMode) -> Result<RobustCounterpart> {
    let s = m.scenario();
    if c.is_empty() {
        return Err(Error::EmptyCoalition);
    }
    if !c.is_subset_of(s.grand()) {
        return Err(Error::InvalidArgument(format!("coalition {c} names prosumers outside 1..={}", s.num_prosumers())));
    }
    let set = m.uncertainty(c, mode)?;
    let mut p = ConicProgram::new();
    let half = p.add_var(0.5, 0.5);
    let members: Vec<MemberVars> = c.members().map(|i| add_member(&mut p, m, i, half)).collect();
    let t_len = s.periods();

    for t in 0..t_len {
        let mut terms = Vec::new();
        let mut rhs = 0.0;
        for mv in &members {
            terms.push((mv.load[t], 1.0));
            terms.push((mv.sold[t], 1.0));
            terms.push((mv.bought[t], -1.0));
            for g in &mv.generation {
                terms.push((g[t], -1.0));
            }
            rhs += s.forecast(mv.prosumer, t);
        }
        p.add_row("balance", terms, Sense::Eq, rhs);
    }

    let share_periods = if s.config.per_period_coefficients { t_len } else { 1 };
    for t in 0..share_periods {
        let terms = members.iter().flat_map(|mv| share_triples(mv, t)).map(|(_, g, _, _)| (g, 1.0)).collect();
        p.add_row("share", terms, Sense::Eq, 1.0);
    }

    if set.has_drg {
        for t in 0..t_len {
            for mv in &members {
                for (what, g, up, dw) in share_triples(mv, t) {
                    p.add_row(&format!("robust_{what}_up"), vec![(g, set.up[t]), (up, -1.0)], Sense::Le, 0.0);
                    p.add_row(&format!("robust_{what}_down"), vec![(g, set.down[t]), (dw, -1.0)], Sense::Le, 0.0);
                }
            }
        }
    }
    Ok(RobustCounterpart { coalition: c, mode, program: p, members, set })
}

impl RobustCounterpart {
    /// Number of robust rows the builder emits for this coalition.
    pub fn expected_robust_rows(&self, s: &Scenario) -> usize {
        if !self.set.has_drg {
            return 0;
        }
        let per_period: usize = self.members.iter().map(|mv| 2 + s.prosumers[mv.prosumer].machines.len()).sum();
        2 * s.periods() * per_period
    }

    /// Every variable that maps to a schedule entry, member by member.
    pub fn schedule_vars(&self) -> Vec<Var> {
        self.members.iter().flat_map(|mv| mv.schedule_vars()).collect()
    }

    /// Reads a schedule off a primal point.
    pub fn schedule(&self, s: &Scenario, x: &[f64]) -> DispatchSchedule {
        let mut out = DispatchSchedule::zeros(s, self.coalition);
        let val = |v: Var| x[v.index()];
        for mv in &self.members {
            let i = mv.prosumer;
            for t in 0..s.periods() {
                out.load[i][t] = val(mv.load[t]);
                out.sold[i][t] = val(mv.sold[t]);
                out.bought[i][t] = val(mv.bought[t]);
                out.load_reserve_up[i][t] = val(mv.load_up[t]);
                out.load_reserve_down[i][t] = val(mv.load_down[t]);
                out.operator_reserve_up[i][t] = val(mv.operator_up[t]);
                out.operator_reserve_down[i][t] = val(mv.operator_down[t]);
                out.load_share[i][t] = val(at(&mv.load_share, t));
                out.operator_share[i][t] = val(at(&mv.operator_share, t));
                for k in 0..mv.generation.len() {
                    out.generation[i][k][t] = val(mv.generation[k][t]);
                    out.machine_reserve_up[i][k][t] = val(mv.machine_up[k][t]);
                    out.machine_reserve_down[i][k][t] = val(mv.machine_down[k][t]);
                    out.machine_share[i][k][t] = val(at(&mv.machine_share[k], t));
                }
            }
        }
        out
    }
}

/// Optimal dispatch of one coalition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalitionValue {
    pub coalition: Coalition,
    pub mode: DispatchMode,
    /// Optimal coalition payoff `U(C)`.
    pub value: f64,
    pub schedule: DispatchSchedule,
    pub set: CoalitionSet,
    pub iterations: u64,
    #[serde(skip)]
    pub seconds: f64,
}

/// Solves the robust dispatch of `c` under `mode`.
pub fn solve_dispatch(m: &Market, c: Coalition, mode: DispatchMode, cfg: &SolverConfig) -> Result<CoalitionValue> {
    let rc = build_counterpart(m, c, mode)?;
    let sol = solve_continuous(&rc.program, cfg);
    match sol.status {
        Status::Optimal => {
            let schedule = rc.schedule(m.scenario(), &sol.x);
            log::debug!("coalition {c} ({mode}): value {:.6} in {} iterations", -sol.objective, sol.stats.iterations);
            Ok(CoalitionValue {
                coalition: c,
                mode,
                value: -sol.objective,
                schedule,
                set: rc.set,
                iterations: sol.stats.iterations,
                seconds: sol.stats.seconds,
            })
        }
        Status::Infeasible => Err(Error::Infeasible { coalition: c, cause: diagnose(&rc, cfg) }),
        Status::Unbounded => Err(Error::Unbounded { coalition: c }),
        status => Err(Error::SolverFailure {
            status,
            detail: format!("coalition {c} ({mode}): {}", sol.stats.backend_status),
        }),
    }
}

/// Names the first constraint group whose removal restores feasibility.
fn diagnose(rc: &RobustCounterpart, cfg: &SolverConfig) -> String {
    let groups: [(&str, &str); 3] = [
        ("robust_", "members and operator cannot hold enough reserve for the worst-case renewable deviation"),
        ("balance", "power balance cannot be met within load bounds, machine capacity and exchange caps"),
        ("load_", "load reserve rows conflict with the load bounds"),
    ];
    for (prefix, cause) in groups {
        let mut p = rc.program.clone();
        p.retain_rows(|r| !r.label.starts_with(prefix));
        if solve_continuous(&p, cfg).status == Status::Optimal {
            return cause.to_string();
        }
    }
    "no single constraint group explains the infeasibility".to_string()
}

/// Responses of the affine policy to realised deviations, all measured as
/// absorption of surplus: extra load, reduced machine output and energy
/// handed to the operator. Indexed `[prosumer][period]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recourse {
    pub load: Vec<Vec<f64>>,
    pub machine: Vec<Vec<Vec<f64>>>,
    pub operator: Vec<Vec<f64>>,
    /// Total deviation per period.
    pub totals: Vec<f64>,
}

impl Recourse {
    /// `D_t` minus everything absorbed, per period.
    pub fn balance_residuals(&self) -> Vec<f64> {
        (0..self.totals.len())
            .map(|t| {
                let absorbed: f64 = self.load.iter().map(|v| v[t]).sum::<f64>()
                    + self.machine.iter().flatten().map(|v| v[t]).sum::<f64>()
                    + self.operator.iter().map(|v| v[t]).sum::<f64>();
                self.totals[t] - absorbed
            })
            .collect()
    }
}

/// Applies the schedule's sharing coefficients to `deviations[t]`, the
/// realised deviations of the coalition's renewables in period `t`.
pub fn recourse_response(m: &Market, sched: &DispatchSchedule, deviations: &[Vec<f64>]) -> Result<Recourse> {
    let s = m.scenario();
    let t_len = s.periods();
    if deviations.len() != t_len {
        return Err(Error::DimensionMismatch {
            what: "deviation periods".into(),
            expected: t_len,
            found: deviations.len(),
        });
    }
    let count = m.member_drgs(sched.coalition).len();
    if let Some(bad) = deviations.iter().find(|d| d.len() != count) {
        return Err(Error::DimensionMismatch {
            what: "member renewable deviations".into(),
            expected: count,
            found: bad.len(),
        });
    }
    let totals: Vec<f64> = deviations.iter().map(|d| d.iter().sum()).collect();
    Ok(recourse_for_totals(s, sched, &totals))
}

/// [`recourse_response`] for already aggregated deviations.
pub fn recourse_for_totals(s: &Scenario, sched: &DispatchSchedule, totals: &[f64]) -> Recourse {
    let mut r = Recourse {
        load: vec![vec![0.0; totals.len()]; s.num_prosumers()],
        machine: s.prosumers.iter().map(|p| vec![vec![0.0; totals.len()]; p.machines.len()]).collect(),
        operator: vec![vec![0.0; totals.len()]; s.num_prosumers()],
        totals: totals.to_vec(),
    };
    for i in sched.coalition.members() {
        for (t, &d) in totals.iter().enumerate() {
            r.load[i][t] = sched.load_share[i][t] * d;
            r.operator[i][t] = sched.operator_share[i][t] * d;
            for k in 0..r.machine[i].len() {
                r.machine[i][k][t] = sched.machine_share[i][k][t] * d;
            }
        }
    }
    r
}

/// Outcome of [`verify_robust_feasibility`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub coalition: Coalition,
    pub samples: usize,
    /// Largest amount by which any recourse exceeded its reserve.
    pub max_violation: f64,
    /// Samples with a violation above [`RECOURSE_TOL`].
    pub violating_samples: usize,
    pub max_balance_residual: f64,
    /// Largest violation of the deterministic constraints, recomputed from
    /// scenario data.
    pub schedule_violation: f64,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.violating_samples == 0
            && self.max_balance_residual <= RECOURSE_TOL
            && self.schedule_violation <= RECOURSE_TOL
    }
}

/// Total member deviation per period for `n` points of the coalition's set.
/// The first two samples are the set's extreme points in each direction; the
/// rest lie on the boundary.
pub fn sample_totals(m: &Market, c: Coalition, set: &CoalitionSet, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let s = m.scenario();
    let t_len = s.periods();
    let drgs = m.member_drgs(c);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(n + 2);
    out.push(set.up.clone());
    out.push(set.down.iter().map(|d| -d).collect());
    if drgs.is_empty() {
        out.extend(std::iter::repeat_n(vec![0.0; t_len], n));
        return Ok(out);
    }
    let mut rows = vec![vec![0.0; t_len]; n];
    match set.choice {
        SetChoice::Box => {
            for t in 0..t_len {
                let pts = sample_box(&s.period_box(t), n, seed.wrapping_add(t as u64));
                for (row, pt) in rows.iter_mut().zip(&pts) {
                    row[t] = drgs.iter().map(|&j| pt[j]).sum();
                }
            }
        }
        SetChoice::Ellipsoid { budget } => {
            let sets = m.ellipsoids().expect("ellipsoid choice implies ellipsoids");
            let scaled: Vec<EllipsoidSet> = sets.iter().map(|e| e.with_budget(budget)).collect::<Result<_>>()?;
            let draws: Vec<Vec<DVector<f64>>> = scaled
                .iter()
                .enumerate()
                .map(|(k, e)| sample_ellipsoid(e, n, seed.wrapping_add(k as u64), SampleMode::Boundary))
                .collect();
            for t in 0..t_len {
                let (set_index, _) = m.coordinate(t, 0);
                for k in 0..n {
                    let pt = &draws[set_index][k];
                    rows[k][t] = drgs.iter().map(|&j| pt[m.coordinate(t, j).1]).sum();
                }
            }
        }
    }
    out.extend(rows);
    Ok(out)
}

/// Largest violation of the deterministic dispatch constraints, recomputed
/// from scenario data rather than program rows.
pub fn schedule_violation(s: &Scenario, sched: &DispatchSchedule) -> f64 {
    let c = sched.coalition;
    let mut worst: f64 = 0.0;
    let mut bump = |v: f64| worst = worst.max(v);
    for t in 0..s.periods() {
        let mut balance = 0.0;
        let mut share = 0.0;
        for i in c.members() {
            let p = &s.prosumers[i];
            let pd = sched.load[i][t];
            bump(pd + sched.load_reserve_up[i][t] - p.load_max[t]);
            bump(p.load_min[t] - (pd - sched.load_reserve_down[i][t]));
            balance += pd + sched.sold[i][t] - sched.bought[i][t] - s.forecast(i, t);
            share += sched.load_share[i][t] + sched.operator_share[i][t];
            if let Some(cap) = p.exchange_cap {
                bump(sched.sold[i][t] - cap);
                bump(sched.bought[i][t] - cap);
            }
            for (k, mt) in p.machines.iter().enumerate() {
                let pg = sched.generation[i][k][t];
                bump(pg + sched.machine_reserve_up[i][k][t] - mt.capacity);
                bump(sched.machine_reserve_down[i][k][t] - pg);
                balance -= pg;
                share += sched.machine_share[i][k][t];
            }
            for v in [
                pd,
                sched.sold[i][t],
                sched.bought[i][t],
                sched.load_reserve_up[i][t],
                sched.load_reserve_down[i][t],
                sched.operator_reserve_up[i][t],
                sched.operator_reserve_down[i][t],
            ] {
                bump(-v);
            }
        }
        bump(balance.abs());
        bump((share - 1.0).abs());
    }
    worst
}

/// Samples the coalition's uncertainty set and checks that every recourse
/// stays within the reserves of `value.schedule`.
pub fn verify_robust_feasibility(
    m: &Market,
    value: &CoalitionValue,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let s = m.scenario();
    let sched = &value.schedule;
    let totals = sample_totals(m, value.coalition, &value.set, samples, seed)?;
    let mut report = VerificationReport {
        coalition: value.coalition,
        samples: totals.len(),
        max_violation: 0.0,
        violating_samples: 0,
        max_balance_residual: 0.0,
        schedule_violation: schedule_violation(s, sched),
    };
    for sample in &totals {
        let r = recourse_for_totals(s, sched, sample);
        let mut worst: f64 = 0.0;
        for i in value.coalition.members() {
            for t in 0..s.periods() {
                let mut check = |x: f64, up: f64, down: f64| worst = worst.max(x - up).max(-down - x);
                check(r.load[i][t], sched.load_reserve_up[i][t], sched.load_reserve_down[i][t]);
                check(r.operator[i][t], sched.operator_reserve_up[i][t], sched.operator_reserve_down[i][t]);
                for k in 0..r.machine[i].len() {
                    check(r.machine[i][k][t], sched.machine_reserve_up[i][k][t], sched.machine_reserve_down[i][k][t]);
                }
            }
        }
        report.max_violation = report.max_violation.max(worst);
        if worst > RECOURSE_TOL {
            report.violating_samples += 1;
        }
        let res = r.balance_residuals().iter().fold(0.0f64, |a, b| a.max(b.abs()));
        report.max_balance_residual = report.max_balance_residual.max(res);
    }
    Ok(report)
}

/// `|value − payoff(schedule)|` relative to `1 + |value|`.
pub fn value_consistency(m: &Market, v: &CoalitionValue) -> Result<f64> {
    let direct = evaluate_payoff(m.scenario(), v.coalition, &v.schedule)?;
    Ok((direct - v.value).abs() / (1.0 + v.value.abs()))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    fingerprint: String,
    coalition: u64,
    mode: DispatchMode,
}

/// Solved coalitions shared between callers, keyed by scenario fingerprint,
/// coalition and mode.
#[derive(Debug, Default)]
pub struct ValueCache {
    inner: RwLock<HashMap<CacheKey, Arc<CoalitionValue>>>,
}

impl ValueCache {
    pub fn new() -> ValueCache {
        ValueCache::default()
    }

    pub fn len(&self) -> usize {
        self.inner.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The coalition payoff `U(C)` as a memoised characteristic function.
#[derive(Debug, Clone)]
pub struct CharacteristicFunction {
    market: Arc<Market>,
    mode: DispatchMode,
    cfg: SolverConfig,
    cache: Arc<ValueCache>,
    solves: Arc<AtomicUsize>,
}

impl CharacteristicFunction {
    pub fn new(market: Arc<Market>, mode: DispatchMode, cfg: SolverConfig) -> CharacteristicFunction {
        CharacteristicFunction::with_cache(market, mode, cfg, Arc::new(ValueCache::new()))
    }

    pub fn with_cache(
        market: Arc<Market>,
        mode: DispatchMode,
        cfg: SolverConfig,
        cache: Arc<ValueCache>,
    ) -> CharacteristicFunction {
        CharacteristicFunction { market, mode, cfg, cache, solves: Arc::new(AtomicUsize::new(0)) }
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn mode(&self) -> DispatchMode {
        self.mode
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn players(&self) -> usize {
        self.market.num_prosumers()
    }

    /// Dispatch problems actually solved (cache misses).
    pub fn solves(&self) -> usize {
        self.solves.load(Ordering::Relaxed)
    }

    fn key(&self, c: Coalition) -> CacheKey {
        CacheKey { fingerprint: self.market.fingerprint().to_string(), coalition: c.bits(), mode: self.mode }
    }

    /// Solved dispatch of `c`, from the cache when available.
    pub fn solve(&self, c: Coalition) -> Result<Arc<CoalitionValue>> {
        let key = self.key(c);
        if let Some(v) = self.cache.inner.read().get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(solve_dispatch(&self.market, c, self.mode, &self.cfg)?);
        self.solves.fetch_add(1, Ordering::Relaxed);
        self.cache.inner.write().entry(key).or_insert_with(|| v.clone());
        Ok(v)
    }

    /// `U(C)`, with `U(∅) = 0`.
    pub fn value(&self, c: Coalition) -> Result<f64> {
        if c.is_empty() {
            return Ok(0.0);
        }
        Ok(self.solve(c)?.value)
    }

    /// Solves the uncached coalitions of `cs` in parallel.
    pub fn prefetch(&self, cs: &[Coalition]) -> Result<()> {
        let missing: Vec<Coalition> = {
            let cache = self.cache.inner.read();
            cs.iter().copied().filter(|c| !c.is_empty() && !cache.contains_key(&self.key(*c))).collect()
        };
        missing.par_iter().map(|&c| self.solve(c).map(|_| ())).collect::<Result<Vec<()>>>()?;
        Ok(())
    }
}
