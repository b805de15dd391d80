//! Single-shot max-excess subproblem as a mixed-binary conic program.
//!
//! Every prosumer's dispatch block is always present; a membership binary
//! `I_i` switches its contribution on. Objective terms, balance terms and
//! reserve shares enter through big-M products `I_i · p`, and the data
//! reductions through `z_S = Π_{i∈S} I_i`. The ellipsoid radius `√r(I)` is
//! concave in the shared reduction `s = Σ k_S z_S`, so it is replaced by a
//! linear function of `s`:
//!
//! * [`RadiusEncoding::Conservative`] uses the tangent at `s = 0`, which
//!   over-estimates the radius (over-robust, payoffs under-estimated);
//! * [`RadiusEncoding::Exact`] uses the chord over `[0, Σ k_S]`, a
//!   relaxation, and re-evaluates every integral pattern with the exact
//!   budget through the characteristic function.

use std::collections::HashMap;

use coopgrid_conic::{
    audit_bigm, linearize_product, solve_continuous, solve_mixed_with, BigMAudit, ClarabelBackend, ConicProgram,
    IntegralRefiner, ProductLink, Sense, Solution, SolverConfig, Status, Var,
};
use nalgebra::DVector;
use serde::Serialize;

use crate::coalition::Coalition;
use crate::dispatch::{add_member, share_triples, CharacteristicFunction, DispatchMode, Market, MemberVars, SetChoice};
use crate::error::{Error, Result};
use crate::imputation::{ExcessResult, MaxExcess};

/// Headroom applied to implied bounds when sizing big-M constants.
pub const BIG_M_FACTOR: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusEncoding {
    /// Tangent upper bound on the radius; labelled conservative in reports.
    Conservative,
    /// Chord relaxation plus exact re-evaluation of integral patterns.
    Exact,
}

/// The assembled subproblem for a fixed allocation `x`.
#[derive(Debug, Clone)]
pub struct SubproblemModel {
    pub program: ConicProgram,
    pub membership: Vec<Var>,
    pub links: Vec<ProductLink>,
    pub members: Vec<MemberVars>,
    pub encoding: RadiusEncoding,
    /// Per reduction term: the AND variable and its group.
    pub groups: Vec<(Var, Coalition)>,
}

enum Radius {
    /// Box sets: linear support.
    Box,
    /// Fixed budget.
    Fixed(f64),
    /// `√k_h − κ·Σ k_S z_S`.
    Linear { root: f64, kappa: f64 },
}

impl SubproblemModel {
    pub fn build(
        m: &Market,
        mode: DispatchMode,
        x: &[f64],
        encoding: RadiusEncoding,
        big_m: Option<f64>,
    ) -> Result<Self> {
        let s = m.scenario();
        let n = s.num_prosumers();
        if x.len() != n {
            return Err(Error::DimensionMismatch { what: "imputation".into(), expected: n, found: x.len() });
        }
        if n < 2 {
            return Err(Error::InvalidArgument("the subproblem needs at least two prosumers".into()));
        }
        let t_len = s.periods();
        let data = m.data();
        let radius = match mode {
            DispatchMode::Isolated => {
                return Err(Error::ModeMismatch("isolated dispatch has no coalition subproblem".into()));
            }
            _ => match m.uncertainty(Coalition::singleton(0), mode)?.choice {
                SetChoice::Box => Radius::Box,
                SetChoice::Ellipsoid { .. } if mode == DispatchMode::ElectricityOnly || data.terms.is_empty() => {
                    Radius::Fixed(data.historical.sqrt())
                }
                SetChoice::Ellipsoid { .. } => {
                    let root = data.historical.sqrt();
                    let s_max: f64 = data.terms.iter().map(|(_, k)| k).sum();
                    let kappa = match encoding {
                        RadiusEncoding::Conservative => 0.5 / root,
                        RadiusEncoding::Exact => (root - data.minimum_budget().sqrt()) / s_max,
                    };
                    Radius::Linear { root, kappa }
                }
            },
        };

        let mut p = ConicProgram::new();
        let mut links = Vec::new();
        let bound = |ub: f64| big_m.unwrap_or(BIG_M_FACTOR * ub.max(1e-9));
        let half = p.add_var(0.5, 0.5);
        let membership: Vec<Var> = (0..n).map(|_| p.add_binary()).collect();
        let members: Vec<MemberVars> = (0..n).map(|i| add_member(&mut p, m, i, half)).collect();

        // product I_i · v for every member variable, by variable index
        let mut product: Vec<Option<Var>> = vec![None; p.num_vars()];
        let mut link = |p: &mut ConicProgram, links: &mut Vec<ProductLink>, i: usize, v: Var, label: &str| -> Var {
            if let Some(w) = product[v.index()] {
                return w;
            }
            let ub = p.bounds(v).1;
            let l = linearize_product(p, membership[i], v, bound(ub), label);
            links.push(l);
            product[v.index()] = Some(l.product);
            l.product
        };

        // objective terms move onto the products; fixed costs onto I_i
        let fixed_cost: Vec<f64> = s
            .prosumers
            .iter()
            .map(|pr| pr.machines.iter().map(|mt| mt.cost_fixed).sum::<f64>() * t_len as f64)
            .collect();
        p.set_offset(0.0);
        for (i, mv) in members.iter().enumerate() {
            p.add_objective(membership[i], fixed_cost[i] + x[i]);
            let mut vars = mv.schedule_vars();
            vars.extend(mv.utility_epigraph.iter().flatten());
            vars.extend(mv.cost_epigraph.iter().flatten().flatten());
            for v in vars {
                let c = p.objective()[v.index()];
                if c != 0.0 {
                    p.set_objective(v, 0.0);
                    let w = link(&mut p, &mut links, i, v, "objective_product");
                    p.add_objective(w, c);
                }
            }
        }

        // balance over members
        for t in 0..t_len {
            let mut terms = Vec::new();
            for (i, mv) in members.iter().enumerate() {
                terms.push((link(&mut p, &mut links, i, mv.load[t], "balance_product"), 1.0));
                terms.push((link(&mut p, &mut links, i, mv.sold[t], "balance_product"), 1.0));
                terms.push((link(&mut p, &mut links, i, mv.bought[t], "balance_product"), -1.0));
                for g in &mv.generation {
                    terms.push((link(&mut p, &mut links, i, g[t], "balance_product"), -1.0));
                }
                terms.push((membership[i], -s.forecast(i, t)));
            }
            p.add_row("balance", terms, Sense::Eq, 0.0);
        }

        // shares over members
        let share_periods = if s.config.per_period_coefficients { t_len } else { 1 };
        for t in 0..share_periods {
            let mut terms = Vec::new();
            for (i, mv) in members.iter().enumerate() {
                for (_, g, _, _) in share_triples(mv, t) {
                    terms.push((link(&mut p, &mut links, i, g, "share_product"), 1.0));
                }
            }
            p.add_row("share", terms, Sense::Eq, 1.0);
        }

        p.add_row("cardinality", membership.iter().map(|&v| (v, 1.0)).collect(), Sense::Ge, 1.0);
        p.add_row("cardinality", membership.iter().map(|&v| (v, 1.0)).collect(), Sense::Le, (n - 1) as f64);

        // z_S = AND of the group's memberships
        let mut groups = Vec::new();
        if let Radius::Linear { .. } = radius {
            for &(c, _) in &data.terms {
                let z = p.add_var(0.0, 1.0);
                for i in c.members() {
                    p.add_row("group_and", vec![(z, 1.0), (membership[i], -1.0)], Sense::Le, 0.0);
                }
                let mut terms: Vec<_> = c.members().map(|i| (membership[i], -1.0)).collect();
                terms.push((z, 1.0));
                p.add_row("group_and", terms, Sense::Ge, 1.0 - c.len() as f64);
                groups.push((z, c));
            }
        }

        // robust rows
        let owners = m.drg_owners();
        let holders: Vec<usize> = (0..n).filter(|&k| owners.contains(&k)).collect();
        let mut cross: Vec<Vec<Option<Var>>> = vec![vec![None; n]; p.num_vars()];
        let mut radius_products: HashMap<(usize, usize), Var> = HashMap::new();
        for t in 0..t_len {
            for mv in &members {
                for (what, g, up, dw) in share_triples(mv, t) {
                    // q_k = I_k · Γ for every renewable holder k
                    let mut q = Vec::with_capacity(holders.len());
                    for &k in &holders {
                        let v = match cross[g.index()][k] {
                            Some(v) => v,
                            None => {
                                let l = linearize_product(&mut p, membership[k], g, bound(1.0), "share_cross");
                                links.push(l);
                                cross[g.index()][k] = Some(l.product);
                                l.product
                            }
                        };
                        q.push((k, v));
                    }
                    if q.is_empty() {
                        continue;
                    }
                    let label_up = format!("robust_{what}_up");
                    let label_dw = format!("robust_{what}_down");
                    match radius {
                        Radius::Box => {
                            let b = s.period_box(t);
                            let width = |k: usize| -> f64 {
                                (0..owners.len()).filter(|&j| owners[j] == k).map(|j| b.half_widths[j]).sum()
                            };
                            let mut terms: Vec<_> = q.iter().map(|&(k, v)| (v, width(k))).collect();
                            terms.push((up, -1.0));
                            p.add_row(&label_up, terms.clone(), Sense::Le, 0.0);
                            terms.pop();
                            terms.push((dw, -1.0));
                            p.add_row(&label_dw, terms, Sense::Le, 0.0);
                        }
                        Radius::Fixed(_) | Radius::Linear { .. } => {
                            let sets = m.ellipsoids().expect("ellipsoid radius implies ellipsoids");
                            let e = &sets[m.coordinate(t, 0).0];
                            // columns: U⁻ᵀ applied to each holder's renewable indicator
                            let columns: Vec<DVector<f64>> = q
                                .iter()
                                .map(|&(k, _)| {
                                    let drgs: Vec<usize> = (0..owners.len()).filter(|&j| owners[j] == k).collect();
                                    e.factor().solve_transpose(&m.direction(t, &drgs))
                                })
                                .collect();
                            let centre: Vec<f64> = q
                                .iter()
                                .map(|&(k, _)| {
                                    let drgs: Vec<usize> = (0..owners.len()).filter(|&j| owners[j] == k).collect();
                                    m.direction(t, &drgs).dot(e.center())
                                })
                                .collect();
                            // scaled direction w = ρ(s)·q, written through products with z_S
                            let mut scaled: Vec<Vec<(Var, f64)>> = Vec::with_capacity(q.len());
                            for &(_, v) in &q {
                                let mut terms = Vec::new();
                                match radius {
                                    Radius::Fixed(root) => terms.push((v, root)),
                                    Radius::Linear { root, kappa } => {
                                        terms.push((v, root));
                                        for (gi, &(z, _)) in groups.iter().enumerate() {
                                            let w = *radius_products.entry((v.index(), gi)).or_insert_with(|| {
                                                let l = linearize_product(&mut p, z, v, bound(1.0), "radius_product");
                                                links.push(l);
                                                l.product
                                            });
                                            terms.push((w, -kappa * data.terms[gi].1));
                                        }
                                    }
                                    Radius::Box => unreachable!(),
                                }
                                scaled.push(terms);
                            }
                            let dim = e.dim();
                            let tail: Vec<Var> = (0..dim).map(|_| p.add_free_var()).collect();
                            for (r, &y) in tail.iter().enumerate() {
                                let mut terms = vec![(y, -1.0)];
                                for (col, sc) in columns.iter().zip(&scaled) {
                                    if col[r] != 0.0 {
                                        terms.extend(sc.iter().map(|&(v, a)| (v, a * col[r])));
                                    }
                                }
                                p.add_row("robust_tail", terms, Sense::Eq, 0.0);
                            }
                            for (label, reserve, sign) in [(&label_up, up, 1.0), (&label_dw, dw, -1.0)] {
                                let head = p.add_var(0.0, f64::INFINITY);
                                let mut terms = vec![(head, 1.0), (reserve, -1.0)];
                                terms.extend(q.iter().zip(&centre).map(|(&(_, v), c)| (v, sign * c)));
                                p.add_row(label, terms, Sense::Eq, 0.0);
                                p.add_soc(head, tail.clone());
                            }
                        }
                    }
                }
            }
        }
        Ok(SubproblemModel { program: p, membership, links, members, encoding, groups })
    }

    /// Coalition encoded by a binary pattern in [`ConicProgram::binaries`] order.
    pub fn coalition_of(&self, values: &[f64]) -> Coalition {
        Coalition::from_members((0..self.membership.len()).filter(|&i| values[self.membership[i].index()] > 0.5))
    }

    /// Solves the model with memberships (and the group indicators they
    /// imply) fixed to `c` and audits every
    /// big-M product at that point.
    pub fn audit_at(&self, c: Coalition, cfg: &SolverConfig) -> Result<(Solution, BigMAudit)> {
        let mut p = self.program.clone();
        for (i, &v) in self.membership.iter().enumerate() {
            p.fix(v, if c.contains(i) { 1.0 } else { 0.0 });
        }
        for &(z, group) in &self.groups {
            p.fix(z, if group.is_subset_of(c) { 1.0 } else { 0.0 });
        }
        p.relax_integrality();
        let sol = solve_continuous(&p, cfg);
        if sol.status != Status::Optimal {
            return Err(Error::SolverFailure { status: sol.status, detail: format!("subproblem at {c}") });
        }
        let audit = audit_bigm(&sol.x, &self.links);
        Ok((sol, audit))
    }
}

struct ExactPatterns<'a> {
    cf: &'a CharacteristicFunction,
    x: &'a [f64],
    n: usize,
}

impl IntegralRefiner for ExactPatterns<'_> {
    fn refine(&self, pattern: &[bool]) -> Option<Solution> {
        let c = Coalition::from_members((0..self.n).filter(|&i| pattern[i]));
        if !c.is_proper(self.n) {
            return None;
        }
        let value = self.cf.value(c).ok()?;
        let mut sol = Solution::failed(Status::Optimal, "exact pattern");
        sol.objective = -(value - c.sum(self.x));
        sol.x = pattern.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Some(sol)
    }
}

/// Max-excess search through [`SubproblemModel`] and branch-and-bound.
pub struct MisocpSearch<'a> {
    cf: &'a CharacteristicFunction,
    encoding: RadiusEncoding,
    cfg: SolverConfig,
}

impl<'a> MisocpSearch<'a> {
    pub fn new(cf: &'a CharacteristicFunction, encoding: RadiusEncoding) -> Self {
        let cfg = SolverConfig { rel_gap: 1e-10, ..cf.config().clone() };
        MisocpSearch { cf, encoding, cfg }
    }

    pub fn model(&self, x: &[f64]) -> Result<SubproblemModel> {
        SubproblemModel::build(self.cf.market(), self.cf.mode(), x, self.encoding, self.cfg.big_m)
    }
}

impl MaxExcess for MisocpSearch<'_> {
    fn max_excess(&self, x: &[f64]) -> Result<ExcessResult> {
        let model = self.model(x)?;
        let n = x.len();
        let refiner = ExactPatterns { cf: self.cf, x, n };
        let refiner: Option<&dyn IntegralRefiner> = match self.encoding {
            RadiusEncoding::Exact => Some(&refiner),
            RadiusEncoding::Conservative => None,
        };
        let sol = solve_mixed_with(&ClarabelBackend, &model.program, &self.cfg, refiner);
        if !sol.has_point() {
            return Err(Error::SolverFailure { status: sol.status, detail: "max-excess subproblem".into() });
        }
        let c = match self.encoding {
            RadiusEncoding::Exact => Coalition::from_members((0..n).filter(|&i| sol.x[i] > 0.5)),
            RadiusEncoding::Conservative => model.coalition_of(&sol.x),
        };
        let value = self.cf.value(c)?;
        Ok(ExcessResult {
            coalition: c,
            excess: value - c.sum(x),
            value,
            nodes: sol.stats.nodes,
            evaluations: sol.stats.nodes,
            complete: sol.status == Status::Optimal,
        })
    }
}
