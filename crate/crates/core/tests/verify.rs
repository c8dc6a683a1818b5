use nalgebra::DMatrix;

use robinsync::algebra::{
    biorthogonal_family, build_control_matrix, kernel_basis, BiorthogonalFamily, ControlMatrixMode, CouplingSpec,
    GroupPartition,
};
use robinsync::control::{SyncSynthesizer, SynthesisConfig};
use robinsync::sim::{simulate, BoxDomain, State, SystemInstance};
use robinsync::verify::{
    compare_state_independence, decoupled_coefficients, estimate_check, extract_sync_state, noncontrollability_probe,
    solve_decoupled_states, verify_synchronization, ProbeConfig,
};

fn bump(x: f64, a: f64, b: f64) -> f64 {
    if x <= a || x >= b {
        0.0
    } else {
        (std::f64::consts::PI * (x - a) / (b - a)).sin().powi(2)
    }
}

fn pair(a: [f64; 4], d: DMatrix<f64>, nodes: usize) -> SystemInstance {
    let c = CouplingSpec::new(DMatrix::from_row_slice(2, 2, &a), DMatrix::zeros(2, 2), d).unwrap();
    SystemInstance::new(c, BoxDomain::interval(1.0, nodes).unwrap()).unwrap()
}

fn one_group() -> GroupPartition {
    GroupPartition::new(vec![0, 2]).unwrap()
}

fn family_d(part: &GroupPartition) -> DMatrix<f64> {
    let fam = BiorthogonalFamily::canonical(&kernel_basis(part));
    build_control_matrix(part, ControlMatrixMode::FromFamily(&fam)).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn synchronized_data_needs_no_control() {
    let part = one_group();
    let sys = pair([1.5, -1.5, -1.5, 1.5], family_d(&part), 40);
    let init = State::from_fn(&sys.domain, 2, |_, x| bump(x[0], 0.2, 0.8), |_, _| 0.0);
    let res = SyncSynthesizer::new(&sys, &part, &SynthesisConfig::default())
        .unwrap()
        .solve(&init)
        .unwrap();
    assert!(res.control.values.iter().all(|&v| v == 0.0));
    let rep = verify_synchronization(&sys, &part, &init, &res, 1.5 * res.horizon, 5).unwrap();
    assert!(rep.sync_error <= 1e-10, "{}", rep.sync_error);
}

#[test]
fn negated_control_fails_the_report() {
    let part = one_group();
    let sys = pair([1.5, -1.5, -1.5, 1.5], family_d(&part), 60);
    let init = State::from_fn(
        &sys.domain,
        2,
        |k, x| if k == 0 { bump(x[0], 0.1, 0.6) } else { 0.0 },
        |_, _| 0.0,
    );
    let mut res = SyncSynthesizer::new(&sys, &part, &SynthesisConfig::default())
        .unwrap()
        .solve(&init)
        .unwrap();
    let good = verify_synchronization(&sys, &part, &init, &res, 1.5 * res.horizon, 1).unwrap();
    assert!(good.all_pass(), "{}", good.to_key_value());
    assert!(good.comparison_errors["reconstruction"] <= 1e-3);
    res.control = res.control.scaled(-1.0);
    let bad = verify_synchronization(&sys, &part, &init, &res, 1.5 * res.horizon, 1).unwrap();
    assert!(bad.sync_error > 1e-1, "{}", bad.sync_error);
    assert!(!bad.all_pass());
    assert_eq!(bad.pass, bad.recompute_pass());
    assert!(bad.comparison_errors.values().all(|v| v.is_finite() && *v >= 0.0));
    assert!(bad.sync_csv().starts_with("t,sync_error\n"));
}

#[test]
fn extraction_reads_group_values() {
    let part = GroupPartition::new(vec![0, 2, 4]).unwrap();
    let basis = kernel_basis(&part);
    let fam = BiorthogonalFamily::canonical(&basis);
    let c = CouplingSpec::new(DMatrix::zeros(4, 4), DMatrix::zeros(4, 4), DMatrix::zeros(4, 0)).unwrap();
    let sys = SystemInstance::new(c, BoxDomain::interval(1.0, 30).unwrap()).unwrap();
    let grid = sys.time_grid(0.5, None).unwrap();

    // U = e_1 v
    let init = State::from_fn(&sys.domain, 4, |k, x| if k < 2 { x[0].cos() } else { 0.0 }, |_, _| 0.0);
    let tr = simulate(&sys, &init, None, grid, 3).unwrap();
    for (s, u) in tr.states.iter().zip(extract_sync_state(&tr, &fam).unwrap()) {
        assert!(max_abs_diff(u.u_comp(0), s.u_comp(0)) < 1e-14);
        assert!(u.u_comp(1).iter().all(|v| v.abs() < 1e-14));
    }

    // U in the range of C_p^T: all u_r vanish
    let init = State::from_fn(&sys.domain, 4, |k, x| [1.0, -1.0, 2.0, -2.0][k] * x[0], |_, _| 0.0);
    let tr = simulate(&sys, &init, None, grid, 3).unwrap();
    for u in extract_sync_state(&tr, &fam).unwrap() {
        assert!(u.u.iter().chain(&u.v).all(|v| v.abs() < 1e-14));
    }
}

#[test]
fn decoupled_states_match_scalar_runs() {
    let dom = BoxDomain::interval(1.0, 40).unwrap();
    let c = CouplingSpec::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]),
        DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let full = SystemInstance::new(c.clone(), dom.clone()).unwrap();
    let grid = full.time_grid(1.0, None).unwrap();
    let init = State::from_fn(
        &dom,
        2,
        |k, x| bump(x[0], 0.1 * k as f64, 0.7 + 0.2 * k as f64),
        |_, x| x[0],
    );
    let phi = solve_decoupled_states(&full, &c.a, &c.b, &init, grid, usize::MAX).unwrap();
    for k in 0..2 {
        let sc = CouplingSpec::new(
            DMatrix::from_element(1, 1, c.a[(k, k)]),
            DMatrix::from_element(1, 1, c.b[(k, k)]),
            DMatrix::zeros(1, 0),
        )
        .unwrap();
        let sys = SystemInstance::new(sc, dom.clone()).unwrap();
        let one = State::from_parts(1, 40, init.u_comp(k).to_vec(), init.v_comp(k).to_vec()).unwrap();
        let tr = simulate(&sys, &one, None, grid, usize::MAX).unwrap();
        assert!(max_abs_diff(tr.final_state().u_comp(0), phi.final_state().u_comp(k)) <= 1e-12);
    }
}

/// With an invariant `V` the extracted states obey the decoupled system; with a
/// generic `A` they do not.
#[test]
fn extracted_states_follow_decoupled_system_only_when_invariant() {
    let part = one_group();
    let basis = kernel_basis(&part);
    let gap = |a: [f64; 4]| {
        let sys = pair(a, family_d(&part), 61);
        let fam = biorthogonal_family(sys.certificate(), &basis).unwrap();
        let init = State::from_fn(
            &sys.domain,
            2,
            |k, x| {
                if k == 0 {
                    bump(x[0], 0.1, 0.6)
                } else {
                    -bump(x[0], 0.3, 0.9)
                }
            },
            |_, _| 0.0,
        );
        let res = SyncSynthesizer::new(&sys, &part, &SynthesisConfig::default())
            .unwrap()
            .solve(&init)
            .unwrap();
        let rep = verify_synchronization(&sys, &part, &init, &res, 1.5 * res.horizon, 1).unwrap();
        let (alpha, beta) = decoupled_coefficients(&sys, &part, 1e-9).unwrap();
        let proj = init.map_components(&fam.vectors.transpose()).unwrap();
        let grid = robinsync::sim::TimeGrid {
            dt: res.grid.dt,
            steps: rep.state_traces.len() - 1,
        };
        let phi = solve_decoupled_states(&sys, &alpha, &beta, &proj, grid, 1).unwrap();
        let scale = phi
            .states
            .iter()
            .map(|s| s.u.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .fold(0.0, f64::max);
        rep.state_traces
            .iter()
            .zip(&phi.states)
            .filter(|(u, _)| u.t >= res.horizon)
            .map(|(u, p)| max_abs_diff(&u.u, &p.u))
            .fold(0.0, f64::max)
            / scale
    };
    assert!(gap([1.5, -1.5, -1.5, 1.5]) <= 1e-3);
    assert!(gap([1.0, 1.0, 0.0, 2.0]) > 1e-2);
}

#[test]
fn identical_configs_give_zero_discrepancy() {
    let part = one_group();
    let sys = pair([1.0, 1.0, 0.0, 2.0], family_d(&part), 30);
    let fam = biorthogonal_family(sys.certificate(), &kernel_basis(&part)).unwrap();
    let init = State::from_fn(
        &sys.domain,
        2,
        |k, x| (k as f64 + 1.0) * bump(x[0], 0.2, 0.8),
        |_, _| 0.0,
    );
    let cfg = SynthesisConfig::default();
    let rep = compare_state_independence(&sys, &part, &fam, &init, (&cfg, &cfg), 6.0, 1e-9).unwrap();
    assert_eq!(rep.discrepancy, 0.0);
    assert!(!rep.certified);
}

#[test]
fn estimate_is_linear_and_vanishes_on_synchronized_data() {
    let part = one_group();
    let sys = pair([1.0, 1.0, 0.0, 2.0], family_d(&part), 41);
    let fam = biorthogonal_family(sys.certificate(), &kernel_basis(&part)).unwrap();
    let sync = State::from_fn(&sys.domain, 2, |_, x| bump(x[0], 0.2, 0.7), |_, _| 0.0);
    let tr = State::from_fn(
        &sys.domain,
        2,
        |k, x| if k == 0 { 1.0 } else { -1.0 } * bump(x[0], 0.3, 0.8),
        |_, _| 0.0,
    );
    let rep = estimate_check(&sys, &part, &fam, &sync, &tr, &[1.0, 2.0], &SynthesisConfig::default()).unwrap();
    assert!(rep.zero_lhs <= 1e-10);
    let (a, b) = (&rep.points[0], &rep.points[1]);
    assert!((b.lhs / a.lhs - 2.0).abs() <= 0.2);
    assert!(rep.to_csv().lines().count() == 3);
}

#[test]
fn probe_without_controls_keeps_the_free_norm() {
    let c = CouplingSpec::with_any_rank(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), DMatrix::zeros(2, 0)).unwrap();
    let sys = SystemInstance::new(c, BoxDomain::interval(1.0, 17).unwrap()).unwrap();
    let cfg = ProbeConfig {
        levels: vec![9, 17],
        ..ProbeConfig::default()
    };
    let rep = noncontrollability_probe(&sys, None, &cfg).unwrap();
    assert!(rep.special_data);
    for l in &rep.levels {
        assert_eq!(l.residual, l.free_norm);
        assert!(l.free_norm > 0.0);
        assert_eq!(l.sigma_min, 0.0);
    }
    assert!(rep.to_csv().starts_with("level,nodes,sigma_min"));
}
