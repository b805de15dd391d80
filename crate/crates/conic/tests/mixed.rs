use coopgrid_conic::bnb::NodeOutcome;
use coopgrid_conic::{solve_continuous, solve_mixed, ConicProgram, Sense, SolverConfig, Status, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random MISOCP: binaries switch continuous "units" on, each unit has a
/// quadratic cost via a rotated cone, a demand row must be met, and an
/// overall SOC limits the joint output vector.
fn random_instance(seed: u64, nb: usize) -> (ConicProgram, Vec<Var>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ConicProgram::new();
    let half = p.add_var(0.5, 0.5);
    let mut ys = Vec::new();
    let mut outs = Vec::new();
    let mut demand_terms = Vec::new();
    for k in 0..nb {
        let y = p.add_binary();
        let x = p.add_var(0.0, f64::INFINITY);
        let cap = rng.gen_range(0.5..2.0);
        p.add_row(&format!("cap{k}"), vec![(x, 1.0), (y, -cap)], Sense::Le, 0.0);
        let s = p.add_var(0.0, f64::INFINITY);
        p.add_rotated(s, half, vec![x]);
        p.set_objective(s, rng.gen_range(0.1..1.0));
        p.set_objective(x, rng.gen_range(-1.0..0.5));
        p.set_objective(y, rng.gen_range(0.0..1.5));
        demand_terms.push((x, 1.0));
        ys.push(y);
        outs.push(x);
    }
    p.add_row("demand", demand_terms, Sense::Ge, rng.gen_range(1.0..3.0));
    let t = p.add_var(rng.gen_range(2.0..4.0), rng.gen_range(4.0..6.0));
    p.add_soc(t, outs);
    p.set_objective(t, 0.05);
    (p, ys)
}

fn enumerate(p: &ConicProgram, ys: &[Var]) -> Option<f64> {
    let cfg = SolverConfig::default();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << ys.len()) {
        let mut q = p.clone();
        q.relax_integrality();
        for (k, &y) in ys.iter().enumerate() {
            q.fix(y, ((mask >> k) & 1) as f64);
        }
        let s = solve_continuous(&q, &cfg);
        if s.status == Status::Optimal {
            best = Some(best.map_or(s.objective, |b: f64| b.min(s.objective)));
        }
    }
    best
}

#[test]
fn matches_exhaustive_enumeration_on_random_8_binary_instances() {
    for seed in 0..6 {
        let (p, ys) = random_instance(seed, 8);
        let oracle = enumerate(&p, &ys).expect("instance feasible");
        let s = solve_mixed(&p, &SolverConfig::default());
        assert_eq!(s.status, Status::Optimal, "seed {seed}");
        assert!(
            (s.objective - oracle).abs() <= 1e-6 * (1.0 + oracle.abs()),
            "seed {seed}: {} vs {oracle}",
            s.objective
        );
        for &y in &ys {
            let v = s.x[y.0];
            assert!(v.abs() < 1e-6 || (v - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn node_bounds_never_exceed_descendant_optima() {
    let (p, ys) = random_instance(11, 6);
    let cfg = SolverConfig { record_nodes: true, ..Default::default() };
    let s = solve_mixed(&p, &cfg);
    assert_eq!(s.status, Status::Optimal);
    let log = &s.stats.node_log;
    assert_eq!(log.len(), s.stats.nodes);
    // For each solved node, the best integral objective in its subtree (found
    // by enumerating every completion of its fixings) bounds it from above.
    for rec in log.iter().filter(|r| r.bound.is_finite()) {
        let mut fixed: Vec<(Var, bool)> = Vec::new();
        let mut cur = Some(rec.id);
        while let Some(id) = cur {
            let r = log.iter().find(|r| r.id == id).unwrap();
            if let Some(b) = r.branch {
                fixed.push(b);
            }
            cur = r.parent;
        }
        let free: Vec<Var> = ys.iter().copied().filter(|y| !fixed.iter().any(|(v, _)| v == y)).collect();
        let mut q = p.clone();
        for &(v, on) in &fixed {
            q.fix(v, if on { 1.0 } else { 0.0 });
        }
        if let Some(best) = enumerate(&q, &free) {
            assert!(rec.bound <= best + 1e-9 * (1.0 + best.abs()) + 1e-7, "node {}: {} > {best}", rec.id, rec.bound);
        }
    }
    assert!(log.iter().any(|r| r.outcome == NodeOutcome::Integral));
}

#[test]
fn fully_fixed_binaries_take_a_single_node() {
    let (mut p, ys) = random_instance(3, 5);
    for (k, &y) in ys.iter().enumerate() {
        let v = (k % 2) as f64;
        p.set_bounds(y, v, v);
    }
    let mixed = solve_mixed(&p, &SolverConfig::default());
    let mut relaxed = p.clone();
    relaxed.relax_integrality();
    let cont = solve_continuous(&relaxed, &SolverConfig::default());
    assert_eq!(mixed.stats.nodes, 1);
    assert_eq!(mixed.status, Status::Optimal);
    assert!((mixed.objective - cont.objective).abs() < 1e-9);
}

#[test]
fn identical_inputs_give_identical_trees() {
    let (p, _) = random_instance(5, 7);
    let cfg = SolverConfig { record_nodes: true, ..Default::default() };
    let a = solve_mixed(&p, &cfg);
    let b = solve_mixed(&p, &cfg);
    assert_eq!(a.x, b.x);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    let strip = |s: &coopgrid_conic::Solution| {
        s.stats.node_log.iter().map(|r| (r.id, r.parent, r.branch, r.bound.to_bits(), r.outcome)).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn unbounded_root_is_reported() {
    let mut p = ConicProgram::new();
    let y = p.add_binary();
    let x = p.add_free_var();
    p.set_objective(x, -1.0);
    p.set_objective(y, 1.0);
    assert_eq!(solve_mixed(&p, &SolverConfig::default()).status, Status::Unbounded);
}
