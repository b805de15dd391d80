//! Scenario data, dispatch schedules and payoff arithmetic.
//!
//! Money is in abstract currency units, power in MW. Periods are one hour,
//! so energy and power coincide numerically; `period_hours` is informational.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize};

use crate::coalition::{Coalition, MAX_PLAYERS};
use crate::error::{Error, Issue, Result};
use crate::uncertainty::{cholesky, symmetry_error, BoxSet, DataContribution, EllipsoidSet};

pub const SCHEMA_VERSION: u32 = 1;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub periods: usize,
    #[serde(default = "one")]
    pub period_hours: f64,
}

/// Microturbine with cost `a·p² + b·p + c` per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MachineSpec {
    pub capacity: f64,
    pub cost_quadratic: f64,
    pub cost_linear: f64,
    /// Incurred every period; there is no on/off decision.
    pub cost_fixed: f64,
    pub reserve_up_price: Vec<f64>,
    pub reserve_down_price: Vec<f64>,
}

/// Distributed renewable generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrgSpec {
    pub forecast: Vec<f64>,
    /// Half-width of the per-period box around the forecast.
    pub max_deviation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProsumerSpec {
    pub id: String,
    pub load_min: Vec<f64>,
    pub load_max: Vec<f64>,
    /// Utility of served load is `λ·p − β·p²`; this is λ.
    pub utility_linear: Vec<f64>,
    /// β in `λ·p − β·p²`.
    pub utility_quadratic: Vec<f64>,
    pub load_reserve_up_price: Vec<f64>,
    pub load_reserve_down_price: Vec<f64>,
    #[serde(default)]
    pub machines: Vec<MachineSpec>,
    #[serde(default)]
    pub renewables: Vec<DrgSpec>,
    /// Optional cap on energy sold to or bought from the operator per period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange_cap: Option<f64>,
}

/// Prices offered by the market operator, one per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffSchedule {
    pub buy_price: Vec<f64>,
    pub sell_price: Vec<f64>,
    pub reserve_up_price: Vec<f64>,
    pub reserve_down_price: Vec<f64>,
}

impl TariffSchedule {
    pub fn scaled(&self, factor: f64) -> TariffSchedule {
        let s = |v: &[f64]| v.iter().map(|p| p * factor).collect();
        TariffSchedule {
            buy_price: s(&self.buy_price),
            sell_price: s(&self.sell_price),
            reserve_up_price: s(&self.reserve_up_price),
            reserve_down_price: s(&self.reserve_down_price),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EllipsoidLayout {
    /// One ellipsoid per period over that period's renewable deviations.
    #[default]
    PerPeriod,
    /// A single ellipsoid over all periods (period-major ordering).
    SpaceTime,
}

/// A symmetric matrix read from a row-major array of rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SquareMatrix(pub Vec<Vec<f64>>);

impl<'de> Deserialize<'de> for SquareMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(serde::de::Error::custom(format!(
                "matrix is not square: {n} rows but a row of length {}",
                bad.len()
            )));
        }
        Ok(SquareMatrix(rows))
    }
}

impl SquareMatrix {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.0.len();
        DMatrix::from_fn(n, n, |i, j| self.0[i][j])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipsoidSpec {
    pub center: Vec<f64>,
    pub shape: SquareMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields, try_from = "RawUncertainty")]
pub enum UncertaintyModel {
    /// Only the per-renewable boxes are known.
    Box,
    /// Ellipsoids from shared historical data; budgets come from
    /// [`Contributions`].
    Ellipsoid {
        #[serde(default)]
        layout: EllipsoidLayout,
        sets: Vec<EllipsoidSpec>,
    },
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum UncertaintyKind {
    Box,
    Ellipsoid,
}

// Read as a plain struct so parse errors keep the path into `sets`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUncertainty {
    kind: UncertaintyKind,
    layout: Option<EllipsoidLayout>,
    sets: Option<Vec<EllipsoidSpec>>,
}

impl TryFrom<RawUncertainty> for UncertaintyModel {
    type Error = String;

    fn try_from(raw: RawUncertainty) -> std::result::Result<Self, String> {
        match raw.kind {
            UncertaintyKind::Box if raw.layout.is_some() || raw.sets.is_some() => {
                Err("box uncertainty takes no `layout` or `sets`".into())
            }
            UncertaintyKind::Box => Ok(UncertaintyModel::Box),
            UncertaintyKind::Ellipsoid => Ok(UncertaintyModel::Ellipsoid {
                layout: raw.layout.unwrap_or_default(),
                sets: raw.sets.ok_or("ellipsoid uncertainty needs `sets`")?,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContributionTerm {
    /// Prosumer ids whose joint participation unlocks the reduction.
    pub members: Vec<String>,
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contributions {
    pub historical_budget: f64,
    #[serde(default)]
    pub terms: Vec<ContributionTerm>,
}

/// Uncertainty set used when coalitions trade electricity but not data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ElectricityOnlySet {
    /// Per-renewable boxes.
    #[default]
    Box,
    /// The historical ellipsoid with the full historical budget.
    Historical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub electricity_only_set: ElectricityOnlySet,
    /// Let reserve-sharing coefficients vary by period.
    #[serde(default)]
    pub per_period_coefficients: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub time: TimeGrid,
    pub prosumers: Vec<ProsumerSpec>,
    pub tariff: TariffSchedule,
    pub uncertainty: UncertaintyModel,
    pub contributions: Contributions,
    #[serde(default)]
    pub config: ScenarioConfig,
}

/// Outcome of [`Scenario::validate`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

struct Checker<'a> {
    t: usize,
    report: &'a mut ValidationReport,
}

impl Checker<'_> {
    fn series(&mut self, field: &str, v: &[f64]) {
        if v.len() != self.t {
            self.report.issues.push(Issue::DimensionMismatch { field: field.into(), expected: self.t, found: v.len() });
        }
        self.values(field, v);
    }

    fn values(&mut self, field: &str, v: &[f64]) {
        if v.iter().any(|x| !x.is_finite()) {
            self.report.issues.push(Issue::NotFinite { field: field.into() });
        } else if let Some(&x) = v.iter().find(|x| **x < 0.0) {
            self.report.issues.push(Issue::Negative { field: field.into(), value: x });
        }
    }

    fn scalar(&mut self, field: &str, x: f64) {
        self.values(field, &[x]);
    }
}

impl Scenario {
    pub fn num_prosumers(&self) -> usize {
        self.prosumers.len()
    }

    pub fn periods(&self) -> usize {
        self.time.periods
    }

    pub fn grand(&self) -> Coalition {
        Coalition::grand(self.num_prosumers())
    }

    /// Total number of renewables across all prosumers.
    pub fn num_drgs(&self) -> usize {
        self.prosumers.iter().map(|p| p.renewables.len()).sum()
    }

    /// Owner of each renewable in global order (prosumer-major).
    pub fn drg_owners(&self) -> Vec<usize> {
        self.prosumers.iter().enumerate().flat_map(|(i, p)| std::iter::repeat_n(i, p.renewables.len())).collect()
    }

    /// Global index of each renewable's first entry per prosumer.
    pub fn drg_offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.prosumers.len());
        let mut k = 0;
        for p in &self.prosumers {
            out.push(k);
            k += p.renewables.len();
        }
        out
    }

    pub fn prosumer_index(&self, id: &str) -> Option<usize> {
        self.prosumers.iter().position(|p| p.id == id)
    }

    /// Contribution terms with member ids resolved to coalitions.
    pub fn data_contribution(&self) -> Result<DataContribution> {
        let mut terms = Vec::with_capacity(self.contributions.terms.len());
        for term in &self.contributions.terms {
            let mut c = Coalition::EMPTY;
            for id in &term.members {
                let i = self
                    .prosumer_index(id)
                    .ok_or_else(|| Error::Validation(vec![Issue::UnknownProsumer { id: id.clone() }]))?;
                c = c.with(i);
            }
            terms.push((c, term.reduction));
        }
        Ok(DataContribution::new(self.contributions.historical_budget, terms))
    }

    /// Per-renewable box for period `t`.
    pub fn period_box(&self, t: usize) -> BoxSet {
        let w: Vec<f64> =
            self.prosumers.iter().flat_map(|p| p.renewables.iter().map(move |r| r.max_deviation[t])).collect();
        BoxSet { half_widths: DVector::from_vec(w) }
    }

    /// Ellipsoids with the given budget, or `None` for box-only scenarios.
    pub fn ellipsoids(&self, budget: f64) -> Result<Option<Vec<EllipsoidSet>>> {
        match &self.uncertainty {
            UncertaintyModel::Box => Ok(None),
            UncertaintyModel::Ellipsoid { sets, .. } => sets
                .iter()
                .map(|s| EllipsoidSet::new(DVector::from_vec(s.center.clone()), s.shape.to_matrix(), budget))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn layout(&self) -> Option<EllipsoidLayout> {
        match &self.uncertainty {
            UncertaintyModel::Box => None,
            UncertaintyModel::Ellipsoid { layout, .. } => Some(*layout),
        }
    }

    /// Forecast renewable output of prosumer `i` in period `t`.
    pub fn forecast(&self, i: usize, t: usize) -> f64 {
        self.prosumers[i].renewables.iter().map(|r| r.forecast[t]).sum()
    }

    /// Copy with every operator price multiplied by `factor`.
    pub fn with_scaled_tariff(&self, factor: f64) -> Scenario {
        Scenario { tariff: self.tariff.scaled(factor), ..self.clone() }
    }

    /// Copy without data-sharing reductions.
    pub fn without_contributions(&self) -> Scenario {
        let mut s = self.clone();
        s.contributions.terms.clear();
        s
    }

    /// Checks every structural and numerical invariant.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let t = self.time.periods;
        if t == 0 {
            report.issues.push(Issue::Invalid { field: "time.periods".into(), message: "must be at least 1".into() });
        }
        if self.version != SCHEMA_VERSION {
            report.issues.push(Issue::Invalid {
                field: "version".into(),
                message: format!("unsupported version {} (expected {SCHEMA_VERSION})", self.version),
            });
        }
        let n = self.prosumers.len();
        if n == 0 {
            report.issues.push(Issue::Invalid {
                field: "prosumers".into(),
                message: "at least one prosumer is required".into(),
            });
        }
        if n > MAX_PLAYERS {
            report.issues.push(Issue::Invalid {
                field: "prosumers".into(),
                message: format!("at most {MAX_PLAYERS} prosumers are supported"),
            });
        }
        let mut c = Checker { t, report: &mut report };
        for (i, p) in self.prosumers.iter().enumerate() {
            let f = |name: &str| format!("prosumers[{i}].{name}");
            c.series(&f("load_min"), &p.load_min);
            c.series(&f("load_max"), &p.load_max);
            c.series(&f("utility_linear"), &p.utility_linear);
            c.series(&f("utility_quadratic"), &p.utility_quadratic);
            c.series(&f("load_reserve_up_price"), &p.load_reserve_up_price);
            c.series(&f("load_reserve_down_price"), &p.load_reserve_down_price);
            if let Some(cap) = p.exchange_cap {
                c.scalar(&f("exchange_cap"), cap);
            }
            for (m, mt) in p.machines.iter().enumerate() {
                let g = |name: &str| format!("prosumers[{i}].machines[{m}].{name}");
                c.scalar(&g("capacity"), mt.capacity);
                c.scalar(&g("cost_quadratic"), mt.cost_quadratic);
                if !mt.cost_linear.is_finite() || !mt.cost_fixed.is_finite() {
                    c.report.issues.push(Issue::NotFinite { field: g("cost") });
                }
                c.series(&g("reserve_up_price"), &mt.reserve_up_price);
                c.series(&g("reserve_down_price"), &mt.reserve_down_price);
            }
            for (w, r) in p.renewables.iter().enumerate() {
                let g = |name: &str| format!("prosumers[{i}].renewables[{w}].{name}");
                c.series(&g("forecast"), &r.forecast);
                c.series(&g("max_deviation"), &r.max_deviation);
            }
            if p.load_min.len() == t && p.load_max.len() == t {
                for k in 0..t {
                    if p.load_min[k] > p.load_max[k] {
                        c.report.issues.push(Issue::BoundsInverted {
                            prosumer: p.id.clone(),
                            period: k,
                            lower: p.load_min[k],
                            upper: p.load_max[k],
                        });
                    }
                }
            }
            if self.prosumers[..i].iter().any(|q| q.id == p.id) {
                c.report.issues.push(Issue::DuplicateProsumer { id: p.id.clone() });
            }
        }
        let tariff = &self.tariff;
        c.series("tariff.buy_price", &tariff.buy_price);
        c.series("tariff.sell_price", &tariff.sell_price);
        c.series("tariff.reserve_up_price", &tariff.reserve_up_price);
        c.series("tariff.reserve_down_price", &tariff.reserve_down_price);
        if tariff.buy_price.len() == t && tariff.sell_price.len() == t {
            for k in 0..t {
                if tariff.sell_price[k] > tariff.buy_price[k] {
                    c.report.issues.push(Issue::TariffArbitrage {
                        period: k,
                        buy: tariff.buy_price[k],
                        sell: tariff.sell_price[k],
                    });
                }
            }
        }

        // uncertainty sets
        let d = self.num_drgs();
        if let UncertaintyModel::Ellipsoid { layout, sets } = &self.uncertainty {
            let (count, dim) = match layout {
                EllipsoidLayout::PerPeriod => (t, d),
                EllipsoidLayout::SpaceTime => (1, d * t),
            };
            if sets.len() != count {
                c.report.issues.push(Issue::DimensionMismatch {
                    field: "uncertainty.sets".into(),
                    expected: count,
                    found: sets.len(),
                });
            }
            for (k, s) in sets.iter().enumerate() {
                if s.center.len() != dim {
                    c.report.issues.push(Issue::DimensionMismatch {
                        field: format!("uncertainty.sets[{k}].center"),
                        expected: dim,
                        found: s.center.len(),
                    });
                }
                if s.center.iter().any(|x| !x.is_finite()) {
                    c.report.issues.push(Issue::NotFinite { field: format!("uncertainty.sets[{k}].center") });
                }
                if s.shape.0.len() != dim {
                    c.report.issues.push(Issue::DimensionMismatch {
                        field: format!("uncertainty.sets[{k}].shape"),
                        expected: dim,
                        found: s.shape.0.len(),
                    });
                    continue;
                }
                let q = s.shape.to_matrix();
                if q.iter().any(|x| !x.is_finite()) {
                    c.report.issues.push(Issue::NotFinite { field: format!("uncertainty.sets[{k}].shape") });
                    continue;
                }
                let asym = symmetry_error(&q);
                if asym > 1e-10 * (1.0 + q.amax()) {
                    c.report.issues.push(Issue::AsymmetricShape { set: k, error: asym });
                } else if dim > 0 {
                    if let Err(Error::NotPositiveDefinite { pivot }) = cholesky(&q) {
                        c.report.issues.push(Issue::NonPositiveDefiniteShape { set: k, pivot });
                    }
                }
            }
        }

        // data contributions
        let k_h = self.contributions.historical_budget;
        if !(k_h > 0.0 && k_h.is_finite()) {
            c.report.issues.push(Issue::Invalid {
                field: "contributions.historical_budget".into(),
                message: format!("must be positive, found {k_h}"),
            });
        }
        let mut total = 0.0;
        for (k, term) in self.contributions.terms.iter().enumerate() {
            c.scalar(&format!("contributions.terms[{k}].reduction"), term.reduction);
            total += term.reduction;
            if term.members.is_empty() {
                c.report.issues.push(Issue::Invalid {
                    field: format!("contributions.terms[{k}].members"),
                    message: "must name at least one prosumer".into(),
                });
            }
            for id in &term.members {
                if self.prosumer_index(id).is_none() {
                    c.report.issues.push(Issue::UnknownProsumer { id: id.clone() });
                }
            }
        }
        if k_h > 0.0 && k_h - total <= 0.0 {
            c.report.issues.push(Issue::EmptyBudget { budget: k_h - total });
        }
        if self.contributions.terms.len() > 2 * n.max(1) {
            c.report.warnings.push(format!(
                "{} contribution terms for {n} prosumers; budget evaluation cost grows with the term count",
                self.contributions.terms.len()
            ));
        }
        report
    }

    /// [`Scenario::validate`] as a `Result`.
    pub fn check(&self) -> Result<()> {
        let report = self.validate();
        if report.is_ok() {
            Ok(())
        } else {
            Err(Error::Validation(report.issues))
        }
    }
}

/// Dispatch decisions for one coalition. Arrays are indexed by prosumer
/// (all `N`, zeros for non-members), machine and period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchSchedule {
    pub coalition: Coalition,
    pub load: Vec<Vec<f64>>,
    pub generation: Vec<Vec<Vec<f64>>>,
    pub sold: Vec<Vec<f64>>,
    pub bought: Vec<Vec<f64>>,
    pub load_reserve_up: Vec<Vec<f64>>,
    pub load_reserve_down: Vec<Vec<f64>>,
    pub machine_reserve_up: Vec<Vec<Vec<f64>>>,
    pub machine_reserve_down: Vec<Vec<Vec<f64>>>,
    pub operator_reserve_up: Vec<Vec<f64>>,
    pub operator_reserve_down: Vec<Vec<f64>>,
    /// Reserve-sharing coefficients per period (constant over periods unless
    /// per-period coefficients are enabled).
    pub load_share: Vec<Vec<f64>>,
    pub machine_share: Vec<Vec<Vec<f64>>>,
    pub operator_share: Vec<Vec<f64>>,
}

impl DispatchSchedule {
    /// All-zero schedule shaped for `s`.
    pub fn zeros(s: &Scenario, coalition: Coalition) -> DispatchSchedule {
        let t = s.periods();
        let per = || vec![vec![0.0; t]; s.num_prosumers()];
        let per_mt = || s.prosumers.iter().map(|p| vec![vec![0.0; t]; p.machines.len()]).collect::<Vec<_>>();
        DispatchSchedule {
            coalition,
            load: per(),
            generation: per_mt(),
            sold: per(),
            bought: per(),
            load_reserve_up: per(),
            load_reserve_down: per(),
            machine_reserve_up: per_mt(),
            machine_reserve_down: per_mt(),
            operator_reserve_up: per(),
            operator_reserve_down: per(),
            load_share: per(),
            machine_share: per_mt(),
            operator_share: per(),
        }
    }

    fn check_shape(&self, s: &Scenario) -> Result<()> {
        let t = s.periods();
        let n = s.num_prosumers();
        let mismatch = |what: &str, expected: usize, found: usize| Error::DimensionMismatch {
            what: format!("schedule {what}"),
            expected,
            found,
        };
        let flat = [
            ("load", &self.load),
            ("sold", &self.sold),
            ("bought", &self.bought),
            ("load_reserve_up", &self.load_reserve_up),
            ("load_reserve_down", &self.load_reserve_down),
            ("operator_reserve_up", &self.operator_reserve_up),
            ("operator_reserve_down", &self.operator_reserve_down),
            ("load_share", &self.load_share),
            ("operator_share", &self.operator_share),
        ];
        for (name, v) in flat {
            if v.len() != n {
                return Err(mismatch(name, n, v.len()));
            }
            if let Some(row) = v.iter().find(|r| r.len() != t) {
                return Err(mismatch(name, t, row.len()));
            }
        }
        let nested = [
            ("generation", &self.generation),
            ("machine_reserve_up", &self.machine_reserve_up),
            ("machine_reserve_down", &self.machine_reserve_down),
            ("machine_share", &self.machine_share),
        ];
        for (name, v) in nested {
            if v.len() != n {
                return Err(mismatch(name, n, v.len()));
            }
            for (i, p) in s.prosumers.iter().enumerate() {
                if v[i].len() != p.machines.len() {
                    return Err(mismatch(name, p.machines.len(), v[i].len()));
                }
                if let Some(row) = v[i].iter().find(|r| r.len() != t) {
                    return Err(mismatch(name, t, row.len()));
                }
            }
        }
        Ok(())
    }
}

/// Payoff decomposition for one prosumer under a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PayoffBreakdown {
    pub utility: f64,
    pub generation_cost: f64,
    pub energy_sales: f64,
    pub energy_purchases: f64,
    pub operator_reserve_up_cost: f64,
    pub operator_reserve_down_cost: f64,
    /// Reserve paid to own loads and machines.
    pub internal_reserve_cost: f64,
}

impl PayoffBreakdown {
    pub fn total(&self) -> f64 {
        self.utility - self.generation_cost + self.energy_sales
            - self.energy_purchases
            - self.operator_reserve_up_cost
            - self.operator_reserve_down_cost
            - self.internal_reserve_cost
    }

    pub fn add(&mut self, o: &PayoffBreakdown) {
        self.utility += o.utility;
        self.generation_cost += o.generation_cost;
        self.energy_sales += o.energy_sales;
        self.energy_purchases += o.energy_purchases;
        self.operator_reserve_up_cost += o.operator_reserve_up_cost;
        self.operator_reserve_down_cost += o.operator_reserve_down_cost;
        self.internal_reserve_cost += o.internal_reserve_cost;
    }
}

/// Payoff terms of prosumer `i` summed over periods.
pub fn prosumer_payoff(s: &Scenario, i: usize, sched: &DispatchSchedule) -> PayoffBreakdown {
    let p = &s.prosumers[i];
    let tar = &s.tariff;
    let mut b = PayoffBreakdown::default();
    for t in 0..s.periods() {
        let pd = sched.load[i][t];
        b.utility += p.utility_linear[t] * pd - p.utility_quadratic[t] * pd * pd;
        for (m, mt) in p.machines.iter().enumerate() {
            let pg = sched.generation[i][m][t];
            b.generation_cost += mt.cost_quadratic * pg * pg + mt.cost_linear * pg + mt.cost_fixed;
            b.internal_reserve_cost += mt.reserve_up_price[t] * sched.machine_reserve_up[i][m][t]
                + mt.reserve_down_price[t] * sched.machine_reserve_down[i][m][t];
        }
        b.energy_sales += tar.sell_price[t] * sched.sold[i][t];
        b.energy_purchases += tar.buy_price[t] * sched.bought[i][t];
        b.operator_reserve_up_cost += tar.reserve_up_price[t] * sched.operator_reserve_up[i][t];
        b.operator_reserve_down_cost += tar.reserve_down_price[t] * sched.operator_reserve_down[i][t];
        b.internal_reserve_cost += p.load_reserve_up_price[t] * sched.load_reserve_up[i][t]
            + p.load_reserve_down_price[t] * sched.load_reserve_down[i][t];
    }
    b
}

/// Summed payoff terms over the members of `c`.
pub fn payoff_breakdown(s: &Scenario, c: Coalition, sched: &DispatchSchedule) -> Result<PayoffBreakdown> {
    sched.check_shape(s)?;
    if !c.is_subset_of(s.grand()) {
        return Err(Error::DimensionMismatch {
            what: "coalition members".into(),
            expected: s.num_prosumers(),
            found: c.members().last().map_or(0, |i| i + 1),
        });
    }
    let mut total = PayoffBreakdown::default();
    for i in c.members() {
        total.add(&prosumer_payoff(s, i, sched));
    }
    Ok(total)
}

/// Total payoff of the members of `c` under a fixed schedule: energy revenue
/// and utility minus generation and reserve costs.
pub fn evaluate_payoff(s: &Scenario, c: Coalition, sched: &DispatchSchedule) -> Result<f64> {
    Ok(payoff_breakdown(s, c, sched)?.total())
}
