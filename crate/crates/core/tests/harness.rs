use factedit_core::harness::{
    build_exact_kernel, detailed_balance_violation, empirical_distribution_check, selfcheck, stationarity_residual,
    BuiltinSpace, SelfCheckOptions, DEFAULT_MAX_ENTRIES,
};
use factedit_core::proposal::KernelMutation;

#[test]
fn default_selfcheck_passes() {
    let report = selfcheck(&SelfCheckOptions::default()).unwrap();
    for s in &report.spaces {
        assert!(s.passed, "{s:?}");
        assert!(s.tv.unwrap() <= 0.05, "{s:?}");
    }
    assert!(report.mutations.iter().all(|m| m.detected));
    assert_eq!(report.mutations.len(), 3);
    assert!(report.passed);
}

#[test]
fn mutated_kernel_fails_selfcheck() {
    for m in [
        KernelMutation::CorruptReverse,
        KernelMutation::DropAlpha,
        KernelMutation::StaleReverseP1,
    ] {
        let opts = SelfCheckOptions {
            spaces: vec![BuiltinSpace::Small],
            empirical_steps: 0,
            mutation: Some(m),
            mutation_tests: false,
            ..Default::default()
        };
        let report = selfcheck(&opts).unwrap();
        assert!(!report.passed, "{m:?} went unnoticed");
        assert!(report.spaces[0].residual > 1e-3);
    }
}

#[test]
fn longer_chains_get_closer() {
    let model = BuiltinSpace::Small.model();
    let mean = |steps: usize| {
        (0..20)
            .map(|s| empirical_distribution_check(&model, steps, s).unwrap())
            .sum::<f64>()
            / 20.0
    };
    let short = mean(1_000);
    let long = mean(100_000);
    assert!(short > long, "short {short} long {long}");
    assert!(long <= 0.05);
}

#[test]
fn exact_kernel_is_deterministic() {
    let model = BuiltinSpace::Full.model();
    let a = build_exact_kernel(&model, DEFAULT_MAX_ENTRIES).unwrap();
    let b = build_exact_kernel(&model, DEFAULT_MAX_ENTRIES).unwrap();
    assert_eq!(a, b);
    let e = model.energies().unwrap();
    assert!(stationarity_residual(&a, &e) <= 1e-6);
    assert!(detailed_balance_violation(&a, &e) <= 1e-9);
}
