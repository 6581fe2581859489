use korovkin_core::analysis::{
    check_axioms, check_monotonicity, check_sublinearity, convergence_scan, operator_norm, CheckConfig,
    ConvergenceMode,
};
use korovkin_core::gridfn::{sample, Domain, FunctionSpec, Grid, GridFunction};
use korovkin_core::{Capacity, OperatorSpec, Witness};

fn tagged_operators() -> Vec<OperatorSpec> {
    vec![
        OperatorSpec::bk1(12),
        OperatorSpec::bkc1(9, Capacity::sqrt()),
        OperatorSpec::bkc1(7, "table:0,0;0.5,0.8;1,1".parse().unwrap()),
        OperatorSpec::bkc2(4, Capacity::sqrt()),
        OperatorSpec::szasz(6, Capacity::lebesgue()),
        OperatorSpec::szasz(6, Capacity::sqrt()),
        OperatorSpec::slide(-0.05, 0.15),
        OperatorSpec::maximal(),
        OperatorSpec::cesaro(OperatorSpec::bkc1(1, Capacity::sqrt()), 5),
    ]
}

#[test]
fn weakly_nonlinear_operators_pass_their_axioms() {
    let cfg = CheckConfig::new(40, 21);
    for op in tagged_operators() {
        assert!(op.is_weakly_nonlinear_monotone(), "{op}");
        for r in check_axioms(&op, &op.default_domain(), &cfg).unwrap() {
            assert!(r.pass && r.worst_margin <= 1e-9, "{op} {}: {}", r.property, r.worst_margin);
        }
    }
}

#[test]
fn untagged_operators_are_caught() {
    let cfg = CheckConfig::new(40, 21);
    for op in [OperatorSpec::perturb_sq(2), OperatorSpec::slide_trunc(-0.1, 0.1)] {
        assert!(!op.is_weakly_nonlinear_monotone());
        let failed = check_axioms(&op, &op.default_domain(), &cfg).unwrap().iter().any(|r| !r.pass);
        assert!(failed, "{op}");
    }
}

#[test]
fn norm_lower_bound_never_exceeds_t_one() {
    let cfg = CheckConfig::new(30, 2);
    for op in tagged_operators() {
        let r = operator_norm(&op, &op.default_domain(), true, &cfg).unwrap();
        assert!(r.random_lower_bound <= r.t_one_sup + 1e-9, "{op}: {} > {}", r.random_lower_bound, r.t_one_sup);
        assert!(r.krein.pass, "{op}");
    }
}

#[test]
fn witnesses_replay_through_text_forms() {
    let op = OperatorSpec::bkc1(6, "pow:2".parse().unwrap());
    let d = op.default_domain();
    let r = check_sublinearity(&op, &d, &CheckConfig::new(100, 9)).unwrap();
    let w = r.witness.expect("power 2 is not subadditive");
    let replay = Witness::parse_summary(&w.summary()).unwrap();
    assert_eq!(replay, w);

    let f = sample(replay.get("f").unwrap(), &d).unwrap();
    let g = sample(replay.get("g").unwrap(), &d).unwrap();
    let a = replay.alpha.unwrap();
    let sub = op.apply(&f.plus(&g).unwrap()).unwrap().minus(&op.apply(&f).unwrap().plus(&op.apply(&g).unwrap()).unwrap()).unwrap();
    let hom = op.apply(&f.scale(a)).unwrap().minus(&op.apply(&f).unwrap().scale(a)).unwrap();
    let margin = sub.values().iter().copied().chain(hom.values().iter().map(|v| v.abs())).fold(f64::MIN, f64::max);
    assert_eq!(margin, w.margin);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let op = OperatorSpec::bkc1(11, Capacity::sqrt());
    let d = op.default_domain();
    let run = || {
        let m = check_monotonicity(&op, &d, &CheckConfig::new(30, 5)).unwrap();
        let s = convergence_scan(&op, &"step:0.3@1,-1".parse().unwrap(), &d, &[5, 20, 80], ConvergenceMode::Lp { p: 2.0 })
            .unwrap();
        (m, s)
    };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(run);
    assert_eq!(one, many);
}

#[test]
fn cesaro_mean_is_preserved_average() {
    let g = Grid::unit(600).unwrap();
    let f = sample(&FunctionSpec::Cosine, &Domain::Line(g)).unwrap();
    let c = OperatorSpec::cesaro(OperatorSpec::bk1(1), 4).apply(&f).unwrap();
    let mut mean = vec![0.0; 600];
    for k in 1..=4 {
        let v = OperatorSpec::bk1(k).apply(&f).unwrap();
        for (m, x) in mean.iter_mut().zip(v.values()) {
            *m += x / 4.0;
        }
    }
    for (a, b) in c.values().iter().zip(&mean) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn operators_accept_arbitrary_grids() {
    // 97 cells never line up with 11 windows
    let d = Domain::Line(Grid::unit(97).unwrap());
    let one = GridFunction::constant(d, 1.0);
    let out = OperatorSpec::bkc1(10, Capacity::sqrt()).apply(&one).unwrap();
    assert!(out.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
}
