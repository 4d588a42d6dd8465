use lorentz_core::dynamics::{SimulationParams, StepControl};
use lorentz_core::ensemble::{self, CutoffMode, EnsembleSpec, LawReference, PdeResolution, SmoothObservable};

fn spec(n: usize, eps: Vec<f64>, seed: u64) -> EnsembleSpec {
    let mut base = SimulationParams::new(eps[0], 0.25, 1.0, 1.0, 0);
    base.step = StepControl::ensemble();
    EnsembleSpec::new(base, n, eps, vec![0.25], vec![0.5, 1.0], seed)
}

#[test]
fn exclusion_accounting_is_consistent() {
    let mut s = spec(400, vec![3e-2], 1);
    s.base.potential = lorentz_core::PotentialModel::default_with_amplitude(2.0);
    let c = &ensemble::run_sweep(&s, None).unwrap()[0];
    assert_eq!(c.included + c.excluded, c.n_traj);
    assert_eq!(c.records.len(), c.n_traj);
    assert_eq!(c.records.iter().filter(|r| r.excluded()).count(), c.excluded);
    assert!(c.triggered_phi_a.max(c.triggered_k).max(c.triggered_v) <= c.excluded);
    assert!(c.triggered_phi_a + c.triggered_k + c.triggered_v >= c.excluded);
    assert!(c.excluded > 0, "the strong coupling should trigger some cutoffs");
    for r in c.records.iter().filter(|r| r.excluded()) {
        let tau = r.tau.unwrap();
        assert!(r.tau_phi_a || r.tau_k || r.tau_v);
        assert!(tau <= 1.0 && r.final_state.t <= tau + 1e-12);
    }
    assert_eq!(c.included_angles(1.0).len(), c.included);
    assert_eq!(c.stopped_angles(1.0).len(), c.n_traj);
}

#[test]
fn disabled_cutoffs_exclude_nothing() {
    let mut s = spec(200, vec![3e-2], 1);
    s.base.potential = lorentz_core::PotentialModel::default_with_amplitude(2.0);
    s.cutoffs = CutoffMode::Disabled;
    let c = &ensemble::run_sweep(&s, None).unwrap()[0];
    assert_eq!(c.excluded, 0);
}

#[test]
fn standard_error_scales_like_inverse_root_n() {
    // same master seed: the smaller ensemble is a prefix of the larger one
    let run = |n: usize| {
        let s = spec(n, vec![1e-3], 2);
        let cells = ensemble::run_sweep(&s, None).unwrap();
        let z = ensemble::mc_zeta(&cells[0], &s.times).unwrap();
        let e = ensemble::expectation_report(&s, &cells, &SmoothObservable::cos_angle(), z.value, &PdeResolution::default()).unwrap();
        (z.fit_se, e.cells[0].mc.se, cells[0].records[..10].to_vec())
    };
    let (a, b) = (run(500), run(2000));
    assert_eq!(a.2, b.2);
    for (x, y) in [(a.0, b.0), (a.1, b.1)] {
        let r = y / x;
        assert!((0.4..=0.6).contains(&r), "{r}");
    }
}

#[test]
fn constant_observable_has_expectation_one() {
    let s = spec(200, vec![1e-2, 5e-3], 4);
    let cells = ensemble::run_sweep(&s, None).unwrap();
    let rep = ensemble::expectation_report(&s, &cells, &SmoothObservable::one(), 1.4, &PdeResolution::default()).unwrap();
    assert!((rep.pde_value - 1.0).abs() < 1e-12, "{}", rep.pde_value);
    for c in &rep.cells {
        assert!((c.mc.mean - 1.0).abs() < 1e-12 && c.mc.se < 1e-12);
    }
}

#[test]
fn cos_angle_expectation_matches_heat_kernel() {
    // E[cos θ(t)] = e^{−ζt} for θ(0) = 0
    let (z, t) = (0.8, 1.0);
    let (v, err) = ensemble::landau_expectation(&SmoothObservable::cos_angle(), lorentz_core::Vec2::ZERO, 0.0, z, t, &PdeResolution::default()).unwrap();
    assert!((v - (-z * t).exp()).abs() < 1e-9, "{v}");
    assert!(err < 1e-9);
    let s = spec(1000, vec![1e-2], 5);
    let cells = ensemble::run_sweep(&s, None).unwrap();
    let zeta = ensemble::mc_zeta(&cells[0], &s.times).unwrap().value;
    let rep = ensemble::expectation_report(&s, &cells, &SmoothObservable::cos_angle(), zeta, &PdeResolution::default()).unwrap();
    let c = &rep.cells[0];
    assert!(c.difference.abs() < 3.0 * c.combined_error + 0.02, "{} ± {}", c.difference, c.combined_error);
}

#[test]
fn increments_are_uncorrelated() {
    let s = spec(2000, vec![1e-2, 5e-3, 2e-3], 6);
    let cells = ensemble::run_sweep(&s, None).unwrap();
    let rep = ensemble::law_report(&s, &cells, LawReference::SmallestEpsMc).unwrap();
    for c in rep.cells.iter().filter(|c| c.t == 1.0) {
        let r = c.increment_correlation.unwrap();
        assert!(r.abs() < 3.0 / (c.n_included as f64).sqrt(), "ε={}: {r}", c.eps);
    }
    assert!(rep.zeta_ref > 0.0);
}

#[test]
fn law_needs_three_eps() {
    let s = spec(10, vec![1e-2, 5e-3], 7);
    let cells = ensemble::run_sweep(&s, None).unwrap();
    assert!(ensemble::law_report(&s, &cells, LawReference::Fixed { zeta: 1.0 }).is_err());
}
