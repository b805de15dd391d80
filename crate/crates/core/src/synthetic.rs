//! Seeded random scenarios.
//!
//! Generated markets share one temporal scale across their uncertainty
//! descriptions: the box half-widths in period `t` are `s_t · b` and the
//! per-period ellipsoid shapes are `Q / s_t²`, all centred at zero, and
//! machines carry no fixed cost. Under that structure the cooperative game is
//! superadditive with a nonempty core, which the test suite relies on.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{
    ContributionTerm, Contributions, DrgSpec, EllipsoidLayout, EllipsoidSpec, MachineSpec, ProsumerSpec, Scenario,
    ScenarioConfig, SquareMatrix, TariffSchedule, TimeGrid, UncertaintyModel, SCHEMA_VERSION,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOptions {
    pub prosumers: usize,
    pub periods: usize,
    pub seed: u64,
    /// Every `k`-th prosumer gets a machine (0 disables machines).
    pub machine_every: usize,
    /// Use per-prosumer boxes only, without ellipsoids.
    pub box_only: bool,
    pub historical_budget: f64,
    /// Fraction of the historical budget removed when everyone shares data.
    pub total_reduction: f64,
    /// Also add reductions for adjacent pairs.
    pub pair_terms: bool,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            prosumers: 4,
            periods: 4,
            seed: 1,
            machine_every: 2,
            box_only: false,
            historical_budget: 1.0,
            total_reduction: 0.6,
            pair_terms: true,
        }
    }
}

fn profile(t: usize, periods: usize, phase: f64) -> f64 {
    let x = (t as f64 + 0.5) / periods as f64;
    1.0 + 0.3 * (std::f64::consts::TAU * (x + phase)).sin()
}

fn round(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Random scenario with the structure described in the module docs.
pub fn generate(opts: &SyntheticOptions) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = opts.prosumers;
    let t_len = opts.periods;
    let scale: Vec<f64> = (0..t_len).map(|t| round(0.6 + 0.8 * profile(t, t_len, 0.25) / 1.3)).collect();

    let mut prosumers = Vec::with_capacity(n);
    for i in 0..n {
        let size = rng.gen_range(2.0..5.0);
        let phase = rng.gen_range(0.0..1.0);
        let load_max: Vec<f64> = (0..t_len).map(|t| round(size * profile(t, t_len, phase))).collect();
        let load_min = load_max.iter().map(|x| round(0.5 * x)).collect();
        let lambda = rng.gen_range(18.0..26.0);
        let beta = round(rng.gen_range(0.4..1.0) / size);
        let reserve = rng.gen_range(1.0..2.5);
        let mut machines = Vec::new();
        if opts.machine_every > 0 && i % opts.machine_every == 0 {
            let cap = round(rng.gen_range(1.5..4.0));
            let price = rng.gen_range(1.5..3.0);
            machines.push(MachineSpec {
                capacity: cap,
                cost_quadratic: round(rng.gen_range(0.2..0.8)),
                cost_linear: round(rng.gen_range(4.0..9.0)),
                cost_fixed: 0.0,
                reserve_up_price: vec![round(price); t_len],
                reserve_down_price: vec![round(0.8 * price); t_len],
            });
        }
        let peak = rng.gen_range(1.0..3.0);
        let width = rng.gen_range(0.15..0.35) * peak;
        let forecast = (0..t_len).map(|t| round(peak * profile(t, t_len, 0.75).max(0.0))).collect();
        let max_deviation = scale.iter().map(|s| width * s).collect();
        prosumers.push(ProsumerSpec {
            id: format!("p{}", i + 1),
            load_min,
            load_max,
            utility_linear: vec![round(lambda); t_len],
            utility_quadratic: vec![beta; t_len],
            load_reserve_up_price: vec![round(reserve); t_len],
            load_reserve_down_price: vec![round(0.8 * reserve); t_len],
            machines,
            renewables: vec![DrgSpec { forecast, max_deviation }],
            exchange_cap: None,
        });
    }

    let buy: Vec<f64> = (0..t_len).map(|t| round(12.0 + 6.0 * profile(t, t_len, 0.1))).collect();
    let tariff = TariffSchedule {
        sell_price: buy.iter().map(|b| round(0.35 * b)).collect(),
        buy_price: buy,
        reserve_up_price: vec![8.0; t_len],
        reserve_down_price: vec![6.0; t_len],
    };

    let uncertainty = if opts.box_only {
        UncertaintyModel::Box
    } else {
        // correlation with a common factor, scaled by the base widths
        let widths: Vec<f64> = prosumers.iter().map(|p| p.renewables[0].max_deviation[0] / scale[0]).collect();
        let loading: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..0.7)).collect();
        let cov = DMatrix::from_fn(n, n, |a, b| {
            let rho = if a == b { 1.0 } else { loading[a] * loading[b] };
            rho * widths[a] * widths[b]
        });
        let base = cov.try_inverse().expect("covariance is positive definite");
        let sets = scale
            .iter()
            .map(|s| {
                let q = &base / (s * s);
                let rows = (0..n).map(|a| (0..n).map(|b| 0.5 * (q[(a, b)] + q[(b, a)])).collect()).collect();
                EllipsoidSpec { center: vec![0.0; n], shape: SquareMatrix(rows) }
            })
            .collect();
        UncertaintyModel::Ellipsoid { layout: EllipsoidLayout::PerPeriod, sets }
    };

    let k_h = opts.historical_budget;
    let mut terms = Vec::new();
    if !opts.box_only && opts.total_reduction > 0.0 {
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
        let pairs = if opts.pair_terms && n > 1 { n - 1 } else { 0 };
        let pair_weights: Vec<f64> = (0..pairs).map(|_| rng.gen_range(0.2..0.6)).collect();
        let total: f64 = weights.iter().chain(&pair_weights).sum();
        let unit = opts.total_reduction * k_h / total;
        for (i, w) in weights.iter().enumerate() {
            terms.push(ContributionTerm { members: vec![format!("p{}", i + 1)], reduction: round(w * unit * 0.999) });
        }
        for (i, w) in pair_weights.iter().enumerate() {
            terms.push(ContributionTerm {
                members: vec![format!("p{}", i + 1), format!("p{}", i + 2)],
                reduction: round(w * unit * 0.999),
            });
        }
    }

    Scenario {
        version: SCHEMA_VERSION,
        name: format!("synthetic-{n}x{t_len}-{}", opts.seed),
        seed: opts.seed,
        time: TimeGrid { periods: t_len, period_hours: 1.0 },
        prosumers,
        tariff,
        uncertainty,
        contributions: Contributions { historical_budget: k_h, terms },
        config: ScenarioConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_scenarios_validate_and_repeat() {
        for seed in 0..5 {
            let opts = SyntheticOptions { seed, prosumers: 5, periods: 6, ..Default::default() };
            let s = generate(&opts);
            assert!(s.validate().is_ok(), "{:?}", s.validate());
            assert_eq!(s, generate(&opts));
        }
        let s = generate(&SyntheticOptions { box_only: true, ..Default::default() });
        assert!(s.validate().is_ok());
    }
}
