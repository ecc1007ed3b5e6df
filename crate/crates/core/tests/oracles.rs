//! Derived quantities against independent oracles: a dense symmetric
//! eigensolver, explicit propagator matrices and finite differences.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dispersal::evolve::{build_supersolution, logistic_steady_state, propagate, propagator_norm, Logistic, WindowSpec};
use dispersal::spectral::{
    dichotomy_probe, estimate_lambda_pe, lyapunov_top, principal_eigen_autonomous, Dichotomy, LyapunovOptions,
    PeOptions,
};
use dispersal::verify::{verify, Scenario};
use dispersal::{APField, DiscreteOperator, Grid, Kernel, Profile, RunConfig, SpaceProfileKind, Verdict};

fn gauss() -> Kernel {
    Kernel::gaussian(1.0, 1, 1.0, 4.0).unwrap()
}

fn random_vec(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Largest eigenvalue of `K + diag(a)` for a symmetric operator.
fn dense_top_eigenvalue(op: &DiscreteOperator, a: &[f64]) -> f64 {
    let n = op.len();
    let m = DMatrix::from_fn(n, n, |i, j| op.entry(i, j) + if i == j { a[i] } else { 0.0 });
    SymmetricEigen::new(m).eigenvalues.max()
}

#[test]
fn perron_matches_dense_eigensolver_on_torus_and_box() {
    for (seed, grid) in [
        (1, Grid::ring(16.0, 64).unwrap()),
        (2, Grid::interval(0.0, 4.0, 64).unwrap()),
    ] {
        let op = DiscreteOperator::assemble(&gauss(), &grid).unwrap();
        let a = random_vec(seed, op.len(), -1.0, 1.0);
        let p = principal_eigen_autonomous(&op, &a).unwrap();
        let oracle = dense_top_eigenvalue(&op, &a);
        assert!((p.value - oracle).abs() < 1e-8, "{} vs {oracle}", p.value);
        assert!(p.cw_lower <= p.value && p.value <= p.cw_upper);
        assert!(p.cw_upper - p.cw_lower <= 1e-8);
        assert!(p.vector.iter().all(|&v| v > 0.0));
    }
}

#[test]
fn lyapunov_of_stationary_coefficient_is_perron_value() {
    let grid = Grid::ring(16.0, 64).unwrap();
    let op = DiscreteOperator::assemble(&gauss(), &grid).unwrap();
    let c0 = random_vec(3, op.len(), -0.5, 0.5);
    let a = APField::stationary(Profile::nodal(&grid, c0.clone()).unwrap(), SpaceProfileKind::SmoothBounded).unwrap();
    let est = lyapunov_top(&op, &a, &vec![1.0; op.len()], &LyapunovOptions::default()).unwrap();
    let oracle = dense_top_eigenvalue(&op, &c0);
    assert!((est.lambda_pl - oracle).abs() < 1e-3, "{} vs {oracle}", est.lambda_pl);
}

#[test]
fn propagator_norm_is_max_row_sum_of_explicit_matrix() {
    let grid = Grid::ring(16.0, 64).unwrap();
    let op = DiscreteOperator::assemble(&gauss(), &grid).unwrap();
    let c0 = random_vec(4, op.len(), -1.0, 1.0);
    let base = Profile::nodal(&grid, c0).unwrap();
    let a = APField::new(
        base,
        vec![dispersal::Mode {
            amp: Profile::constant(0.5),
            omega: 1.0,
            theta: 0.0,
        }],
        SpaceProfileKind::SmoothBounded,
    )
    .unwrap();
    let dt = 0.01;
    let (s, t) = (0.0, 2.0);
    let n = op.len();
    let mut m = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = propagate(&op, &a, s, t, &e, dt).unwrap();
        for (row, v) in m.iter_mut().zip(&col.u) {
            row[j] = v * col.log_offset.exp();
        }
    }
    let oracle = m.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let norm = propagator_norm(&op, &a, s, t, Some(dt)).unwrap().norm.unwrap();
    assert!((norm - oracle).abs() <= 1e-8 * oracle, "{norm} vs {oracle}");
}

#[test]
fn closed_form_scalar_solution() {
    let op = DiscreteOperator::assemble(&gauss(), &Grid::ring(16.0, 256).unwrap()).unwrap();
    let a = APField::homogeneous(0.0, &[(1.0, 1.0, -std::f64::consts::FRAC_PI_2)]).unwrap();
    let m = op.row_sums()[0];
    let (s, t) = (0.5, 6.0);
    let u = propagate(&op, &a, s, t, &vec![1.0; op.len()], 0.01).unwrap();
    let exact = (m * (t - s) + s.cos() - t.cos()).exp();
    for v in &u.u {
        assert!((v * u.log_offset.exp() - exact).abs() < 1e-6 * exact);
    }
}

#[test]
fn supersolution_above_threshold_matches_scalar_quadrature() {
    let op = DiscreteOperator::assemble(&gauss(), &Grid::ring(16.0, 64).unwrap()).unwrap();
    let modes = [(1.0, 1.0, 0.0), (1.0, 2f64.sqrt(), 0.0)];
    let a = APField::homogeneous(0.0, &modes).unwrap();
    let m = op.row_sums()[0];
    let l = lyapunov_top(&op, &a, &vec![1.0; op.len()], &LyapunovOptions::default()).unwrap().lambda_pl;
    let lambda = l + 0.5;
    let horizon = 200.0;
    let sup = build_supersolution(&op, &a, lambda, horizon, WindowSpec::for_field(&a)).unwrap();
    assert!(sup.inf_phi > 0.0);
    assert!(sup.residual_max <= -1.0 + 1e-3, "{}", sup.residual_max);
    assert!(sup.feasible());

    // φ(t) = ∫_{−H}^t exp((m − λ)(t − s) + A(t) − A(s)) ds with A' = a
    let big_a = |t: f64| modes.iter().map(|&(c, w, th)| c / w * (w * t + th).sin()).sum::<f64>();
    let oracle = |t: f64| {
        let lo = sup.window.0 - horizon;
        let steps = 2 * ((t - lo) / 2e-3).ceil() as usize;
        let h = (t - lo) / steps as f64;
        let f = |s: f64| ((m - lambda) * (t - s) + big_a(t) - big_a(s)).exp();
        // Simpson
        let mut acc = f(lo) + f(t);
        for k in 1..steps {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(lo + k as f64 * h);
        }
        acc * h / 3.0
    };
    let stride = (sup.times.len() / 5).max(1);
    for k in (0..sup.times.len()).step_by(stride) {
        let want = oracle(sup.times[k]);
        let got = sup.phi[k][0];
        assert!((got - want).abs() <= 1e-6 * want, "t={} {got} vs {want}", sup.times[k]);
    }
}

#[test]
fn logistic_residual_on_random_box() {
    let op = DiscreteOperator::assemble(&gauss(), &Grid::interval(0.0, 4.0, 64).unwrap()).unwrap();
    let a = random_vec(5, op.len(), 0.0, 1.0);
    let b = vec![1.0; op.len()];
    match logistic_steady_state(&op, &a, &b).unwrap() {
        Logistic::Steady { phi, .. } => {
            let k = op.apply(&phi).unwrap();
            let r = (0..phi.len())
                .map(|i| (k[i] + phi[i] * (a[i] - phi[i])).abs())
                .fold(0.0, f64::max);
            assert!(r <= 1e-8, "{r}");
            assert!(phi.iter().all(|&v| v > 0.0));
        }
        Logistic::Extinct { perron } => panic!("unexpected extinction at {perron}"),
    }
}

#[test]
fn dichotomy_probe_at_threshold_is_inconclusive() {
    let op = DiscreteOperator::assemble(&gauss(), &Grid::ring(16.0, 64).unwrap()).unwrap();
    let a = APField::homogeneous(0.0, &[(1.0, 1.0, 0.0)]).unwrap();
    let l = lyapunov_top(&op, &a, &vec![1.0; op.len()], &LyapunovOptions::default()).unwrap().lambda_pl;
    assert_eq!(dichotomy_probe(&op, &a, l, 200.0, None).unwrap().verdict, Dichotomy::Inconclusive);
    assert_eq!(dichotomy_probe(&op, &a, l + 0.1, 200.0, None).unwrap().verdict, Dichotomy::Decay);
    assert_eq!(dichotomy_probe(&op, &a, l - 0.1, 200.0, None).unwrap().verdict, Dichotomy::Growth);
}

#[test]
fn approximant_bounds_increase_toward_lyapunov_exponent() {
    let grid = Grid::ring(6.0 * std::f64::consts::PI, 32).unwrap();
    let op = DiscreteOperator::assemble(&gauss(), &grid).unwrap();
    let cos_x = Profile::parse("cos(x)").unwrap();
    let mode = |omega: f64| dispersal::Mode {
        amp: cos_x.clone(),
        omega,
        theta: 0.0,
    };
    let a = APField::new(
        Profile::constant(0.0),
        vec![mode(1.0), mode(2f64.sqrt())],
        SpaceProfileKind::SmoothBounded,
    )
    .unwrap();
    let pe = estimate_lambda_pe(&op, &a, &PeOptions::default()).unwrap();
    let qs: Vec<u32> = pe.bounds.iter().filter_map(|b| b.q).collect();
    assert_eq!(qs, vec![5, 29, 99]);
    let bounds: Vec<f64> = pe.bounds.iter().map(|b| b.bound).collect();
    assert!(bounds.windows(2).all(|w| w[0] <= w[1] + 1e-9), "{bounds:?}");
    let l = lyapunov_top(&op, &a, &vec![1.0; op.len()], &LyapunovOptions::with_horizon(1000.0))
        .unwrap()
        .lambda_pl;
    assert!(pe.lambda_pe_lower <= l + 5e-3);
    assert!(l - pe.lambda_pe_lower <= 3e-2, "{} vs {l}", pe.lambda_pe_lower);
}

#[test]
fn shipped_scenarios_pass_their_declared_checks() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut checked = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let cfg = RunConfig::load(&entry.unwrap().path()).unwrap();
        let Some(id) = cfg.verify.as_ref().and_then(|v| v.theorem) else {
            continue;
        };
        let sc = Scenario::new(cfg).unwrap();
        let r = verify(id, &sc).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{:?} {id}: {:?}", sc.config.name, r.failing().collect::<Vec<_>>());
        checked += 1;
    }
    assert!(checked >= 8);
}
