mod common;

use approx::assert_relative_eq;
use common::{fd_gradient, fd_hessian, loglik_naive, random_path, random_vector, rng};
use nalgebra::DVector;
use rand::Rng;
use sparse_diff::model::{
    generate_covariates, simulate, simulate_recorded, Drift, ModelSpec,
};
use sparse_diff::quasi_lik::{
    epsilon_n, g_function, hessian, j_matrix, log_quasi_likelihood, nu_factor, nu_factor_by_grid,
    score, score_decomposition, score_report,
};
use sparse_diff::stats::median;

#[test]
fn loglik_matches_term_by_term_sum() {
    let mut rng = rng(11);
    for _ in 0..20 {
        let n = rng.random_range(1..=40);
        let p = rng.random_range(1..=6);
        let path = random_path(&mut rng, n, p);
        let theta = random_vector(&mut rng, p, -1.0, 1.0);
        for (drift, f) in [
            (Drift::Zero, Box::new(|_: f64| 0.0) as Box<dyn Fn(f64) -> f64>),
            (Drift::Linear { lambda: 0.7 }, Box::new(|x: f64| -0.7 * x)),
            (Drift::Tanh { a: 1.3 }, Box::new(|x: f64| 1.3 * x.tanh())),
        ] {
            let lib = log_quasi_likelihood(&path, &theta, drift).unwrap();
            let naive = loglik_naive(&path, &theta, f);
            assert_relative_eq!(lib, naive, max_relative = 1e-12, epsilon = 1e-10);
        }
    }
}

#[test]
fn score_and_hessian_match_finite_differences() {
    let mut rng = rng(12);
    let mut worst = (0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let n = rng.random_range(2..=50);
        let p = rng.random_range(1..=10);
        let path = random_path(&mut rng, n, p);
        let theta = random_vector(&mut rng, p, -1.0, 1.0);
        let l = |t: &DVector<f64>| log_quasi_likelihood(&path, t, Drift::Zero).unwrap();
        let grad = fd_gradient(l, &theta, 1e-6) / n as f64;
        let hess = fd_hessian(l, &theta, 1e-4) / n as f64;
        let psi = score(&path, &theta, Drift::Zero).unwrap();
        let v = hessian(&path, &theta, Drift::Zero).unwrap();
        worst.0 = worst.0.max((&psi - grad).amax());
        worst.1 = worst.1.max((&v + hess).amax());
    }
    assert!(worst.0 < 1e-5, "score vs FD: {}", worst.0);
    assert!(worst.1 < 1e-4, "hessian vs FD²: {}", worst.1);
}

#[test]
fn v_and_j_are_symmetric_psd() {
    let mut rng = rng(13);
    for _ in 0..50 {
        let n = rng.random_range(2..=60);
        let p = rng.random_range(1..=8);
        let path = random_path(&mut rng, n, p);
        let theta = random_vector(&mut rng, p, -1.0, 1.0);
        let report = score_report(&path, &theta, Drift::Zero).unwrap();
        for m in [&report.v_matrix, &report.j_matrix] {
            assert_eq!(m, &m.transpose());
            let min = m.clone().symmetric_eigen().eigenvalues.min();
            assert!(min >= -1e-10 * m.trace().max(1.0), "min eigenvalue {min}");
        }
        assert_eq!(
            report.epsilon_n,
            (&report.v_matrix - &report.j_matrix).amax()
        );
    }
}

#[test]
fn epsilon_vanishes_when_squared_increments_equal_delta() {
    let n = 25;
    let delta = 1.0 / n as f64;
    let x: Vec<f64> = (0..=n)
        .map(|k| if k % 2 == 0 { 0.0 } else { delta.sqrt() })
        .collect();
    let mut rng = rng(14);
    let z = nalgebra::DMatrix::from_fn(3, n + 1, |_, _| rng.random_range(-1.0..1.0));
    let path = sparse_diff::ObservedPath::new(x, z).unwrap();
    let eps = epsilon_n(&path, &DVector::zeros(3)).unwrap();
    assert!(eps < 1e-13, "{eps}");
}

fn decomposition_case(seed: u64, drift: Drift, theta0: DVector<f64>) -> (f64, f64, f64) {
    let spec = ModelSpec::new(60, theta0)
        .with_drift(drift)
        .with_substeps(20)
        .with_x0(0.5);
    let cov = generate_covariates(&spec, seed).unwrap();
    let record = simulate_recorded(&spec, &cov, seed ^ 0xabc).unwrap();
    let parts = score_decomposition(&record, drift).unwrap();
    let psi = score(&record.observed, &record.spec.theta0, drift).unwrap();
    let tol = 1.0 + psi.amax();
    let abc = (&parts.a + &parts.b + &parts.c - &psi).amax() / tol;
    let de = (&parts.d + &parts.e - &parts.c).amax() / tol;
    (abc, de, parts.d.amax())
}

#[test]
fn score_decomposition_identities() {
    let mut rng = rng(15);
    for i in 0..50 {
        let p = rng.random_range(1..=6);
        let theta0 = random_vector(&mut rng, p, -1.0, 1.0);
        let drift = match i % 3 {
            0 => Drift::Zero,
            1 => Drift::Linear { lambda: 1.5 },
            _ => Drift::Tanh { a: -2.0 },
        };
        let (abc, de, _) = decomposition_case(i, drift, theta0);
        assert!(abc < 1e-8, "instance {i}: a+b+c off by {abc}");
        assert!(de < 1e-8, "instance {i}: d+e off by {de}");
    }
}

#[test]
fn decomposition_special_cases() {
    let spec = ModelSpec::new(40, DVector::from_vec(vec![0.5, -0.3])).with_substeps(10);
    let cov = generate_covariates(&spec, 3).unwrap();
    let record = simulate_recorded(&spec, &cov, 4).unwrap();
    let parts = score_decomposition(&record, Drift::Zero).unwrap();
    assert_eq!(parts.a, DVector::zeros(2));
    assert_eq!(parts.b, DVector::zeros(2));

    let (_, _, d) = decomposition_case(5, Drift::Linear { lambda: 1.0 }, DVector::zeros(4));
    assert_eq!(d, 0.0);

    let plain = record.clone().discard_fine();
    assert!(score_decomposition(&plain, Drift::Zero).is_err());
}

#[test]
fn g_and_nu_values() {
    assert_eq!(g_function(0.0).unwrap(), 2.0);
    assert_relative_eq!(nu_factor(1.0).unwrap(), 1.0 - (-2.0f64).exp(), epsilon = 1e-15);
    assert_relative_eq!(nu_factor(1.0).unwrap(), 0.8646647167633873, epsilon = 1e-15);
    let grid = nu_factor_by_grid(1.0, 10_001).unwrap();
    assert_relative_eq!(grid, nu_factor(1.0).unwrap(), epsilon = 1e-15);
    for i in 0..=2000 {
        let x = -10.0 + i as f64 * 0.01;
        assert!(g_function(x).unwrap() > 0.0);
    }
}

/// `(ν/2) hᵀV(θ_a)h ≤ hᵀ[ψ(θ_b) − ψ(θ_a)]` with `h = θ_a − θ_b`.
#[test]
fn restricted_convexity_inequality() {
    let mut rng = rng(16);
    let mut violations = 0;
    for i in 0..100 {
        let p = rng.random_range(1..=8);
        let theta0 = random_vector(&mut rng, p, -1.0, 1.0);
        let budget = theta0.lp_norm(1);
        let cov_bound = rng.random_range(0.5..1.5);
        let spec = ModelSpec::new(rng.random_range(20..=120), theta0).with_cov_bound(cov_bound);
        let path = simulate(&spec, 100 + i).unwrap();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let v = random_vector(rng, p, -1.0, 1.0);
            let scale = rng.random_range(0.0..=1.0) * budget / v.lp_norm(1);
            v * scale
        };
        let ta = draw(&mut rng);
        let tb = draw(&mut rng);
        let radius = 2.0 * cov_bound * ta.lp_norm(1).max(tb.lp_norm(1));
        let nu = nu_factor(radius).unwrap();
        let h = &ta - &tb;
        let v = hessian(&path, &ta, Drift::Zero).unwrap();
        let lhs = 0.5 * nu * h.dot(&(&v * &h));
        let rhs = h.dot(
            &(score(&path, &tb, Drift::Zero).unwrap() - score(&path, &ta, Drift::Zero).unwrap()),
        );
        if lhs > rhs + 1e-10 {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn j_matrix_hand_values() {
    let z = nalgebra::DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 7.0, 0.0, 1.0, 7.0]);
    let path = sparse_diff::ObservedPath::new(vec![0.0, 0.1, 0.2], z).unwrap();
    assert_relative_eq!(j_matrix(&path).unwrap(), nalgebra::DMatrix::identity(2, 2));
}

#[test]
fn epsilon_medians_decrease_with_n() {
    let p = 20;
    let mut theta0 = DVector::zeros(p);
    theta0[0] = 1.0;
    theta0[1] = -1.0;
    let medians: Vec<f64> = [100usize, 400, 1600]
        .iter()
        .map(|&n| {
            let spec = ModelSpec::new(n, theta0.clone());
            let eps: Vec<f64> = (0..50)
                .map(|r| {
                    let path = simulate(&spec, 9000 + r).unwrap();
                    epsilon_n(&path, &theta0).unwrap()
                })
                .collect();
            median(&eps)
        })
        .collect();
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
}
