use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use qsd_core::io::{read_distribution_csv, read_json, to_json_string, write_distribution_csv};
use qsd_core::model::{verhulst_rates, BirthDeathRates, VerhulstParams};
use qsd_core::qsd::*;

fn sis(n: usize, r0: f64) -> BirthDeathRates {
    verhulst_rates(&VerhulstParams::sis(n, r0).unwrap()).unwrap()
}

fn cumulants(r: &BirthDeathRates, order: usize) -> Vec<f64> {
    cumulants_from_distribution(&solve_qsd(r, DEFAULT_TOL).unwrap(), order).unwrap().kappa
}

/// Left Perron vector of the sub-generator on `{1..N}` by a dense
/// eigen-decomposition of its transpose.
fn dense_qsd(r: &BirthDeathRates) -> Vec<f64> {
    let n = r.max_state();
    let mut g = DMatrix::<f64>::zeros(n, n);
    for k in 1..=n {
        let i = k - 1;
        g[(i, i)] = -(r.birth[k] + r.death[k]);
        if k < n {
            g[(i, i + 1)] = r.birth[k];
        }
        if k > 1 {
            g[(i, i - 1)] = r.death[k];
        }
    }
    // For a tridiagonal generator with positive off-diagonals the spectrum is
    // real, so the symmetric-similar transform gives an exact eigen problem.
    let mut d = vec![1.0; n];
    for i in 1..n {
        d[i] = d[i - 1] * (g[(i - 1, i)] / g[(i, i - 1)]).sqrt();
    }
    let mut s = g.clone();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = g[(i, j)] * d[i] / d[j];
        }
    }
    let s = (s.clone() + s.transpose()) * 0.5;
    let eig = s.symmetric_eigen();
    let top = (0..n).max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).unwrap();
    let v = eig.eigenvectors.column(top);
    // Left vector of g: q_i proportional to v_i d_i.
    let mut q: Vec<f64> = (0..n).map(|i| v[i] * d[i]).collect();
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= total);
    q
}

#[test]
fn single_state() {
    let r = BirthDeathRates::new(vec![0.0, 0.0], vec![0.0, 3.0]).unwrap();
    assert_eq!(solve_qsd(&r, 1e-12).unwrap().probs(), &[1.0]);
}

#[test]
fn matches_dense_eigenvector() {
    for (n, r0) in [(30, 2.0), (40, 0.4), (25, 1.0), (60, 3.5)] {
        let r = sis(n, r0);
        let q = solve_qsd(&r, 1e-13).unwrap();
        let oracle = dense_qsd(&r);
        for (a, b) in q.probs().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10, "N={n} R0={r0}: {a} vs {b}");
        }
    }
}

#[test]
fn fixed_point_and_inverse_iteration_agree() {
    let r = sis(200, 1.3);
    let solve = |method| {
        solve_qsd_with(&r, &QsdOptions { method, ..QsdOptions::default() }).unwrap()
    };
    let a = solve(QsdMethod::FixedPoint);
    let b = solve(QsdMethod::InverseIteration);
    assert_eq!(a.method, QsdMethod::FixedPoint);
    assert_eq!(b.method, QsdMethod::InverseIteration);
    assert_relative_eq!(a.killing_rate, b.killing_rate, max_relative = 1e-9);
    for (x, y) in a.distribution.probs().iter().zip(b.distribution.probs()) {
        assert!((x - y).abs() <= 1e-11);
    }
}

#[test]
fn table_values_at_r0_2() {
    let k = cumulants(&sis(100, 2.0), 1);
    assert!((k[0] - 48.9305).abs() <= 0.001, "{}", k[0]);

    let k = cumulants(&sis(200, 2.0), 4);
    for (v, printed, unit) in [(k[0], 99.0, 0.1), (k[1], 102.0, 1.0), (k[2], -107.0, 1.0), (k[3], 133.0, 1.0)] {
        assert!((v - printed).abs() <= unit, "{v} vs {printed}");
    }
}

#[test]
fn moment_examples() {
    let uniform = Distribution::new(vec![1.0 / 3.0; 3]).unwrap();
    let m = raw_moments(&uniform, 3).unwrap();
    for (a, b) in m.iter().zip([2.0, 14.0 / 3.0, 12.0]) {
        assert_relative_eq!(*a, b, max_relative = 1e-14);
    }
    let k = cumulants_from_distribution(&uniform, 2).unwrap();
    assert_relative_eq!(k.get(1), 2.0, max_relative = 1e-14);
    assert_relative_eq!(k.get(2), 2.0 / 3.0, max_relative = 1e-13);

    let point = Distribution::point_mass(5).unwrap();
    assert_eq!(raw_moments(&point, 3).unwrap(), vec![5.0, 25.0, 125.0]);
    assert_eq!(cumulants_from_distribution(&Distribution::point_mass(7).unwrap(), 4).unwrap().kappa, vec![7.0, 0.0, 0.0, 0.0]);

    let two = Distribution::new(vec![0.5, 0.5]).unwrap();
    assert_eq!(raw_moments(&two, 3).unwrap(), vec![1.5, 2.5, 4.5]);
    assert_eq!(cumulants_from_distribution(&two, 4).unwrap().kappa, vec![1.5, 0.25, 0.0, -0.125]);

    assert!(raw_moments(&two, 0).is_err());
    assert!(raw_moments(&two, 9).is_err());
    assert!(cumulants_from_distribution(&two, 5).is_err());
}

#[test]
fn cumulant_to_raw_examples() {
    let to_raw = |k: Vec<f64>| cumulants_to_raw_moments(&CumulantSet { kappa: k }).unwrap().mu_bar;
    let m = to_raw(vec![2.0, 2.0 / 3.0, 0.0]);
    for (a, b) in m.iter().zip([2.0, 14.0 / 3.0, 12.0]) {
        assert_relative_eq!(*a, b, max_relative = 1e-14);
    }
    assert_eq!(to_raw(vec![0.0, 1.0, 0.0]), [0.0, 1.0, 0.0]);
    assert_eq!(to_raw(vec![1.0, 0.0, 0.0]), [1.0, 1.0, 1.0]);
    assert!(cumulants_to_raw_moments(&CumulantSet { kappa: vec![1.0, 2.0] }).is_err());
}

// The 5% and 10% bands hold for the low cumulants only. The printed table
// itself has kappa_4 moving by 20% below threshold (6.64 -> 7.98) and
// kappa_4 / N moving from 0.95 to 0.57 above it, so the higher cumulants are
// checked for the order law itself: bounded below threshold, and kappa / N
// settling above it.
#[test]
fn order_one_below_threshold() {
    let a = cumulants(&sis(100, 0.4), 4);
    let b = cumulants(&sis(400, 0.4), 4);
    assert!(((b[0] - a[0]) / a[0]).abs() < 0.05, "kappa1 {} vs {}", a[0], b[0]);
    for (x, y) in a.iter().zip(&b) {
        assert!((y / x) < 1.25 && (y / x) > 0.8, "{x} vs {y}");
    }
}

#[test]
fn order_n_above_threshold() {
    let per_n: Vec<Vec<f64>> = [100, 200, 400]
        .iter()
        .map(|&n| cumulants(&sis(n, 2.0), 4).iter().map(|k| k / n as f64).collect())
        .collect();
    for i in 0..4 {
        let vals: Vec<f64> = per_n.iter().map(|v| v[i]).collect();
        if i < 2 {
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(hi - lo <= 0.1 * lo.abs(), "kappa{}/N: {vals:?}", i + 1);
        }
        assert!((vals[2] - vals[1]).abs() < (vals[1] - vals[0]).abs(), "kappa{}/N: {vals:?}", i + 1);
        assert!(vals.iter().all(|v| v.signum() == vals[0].signum()));
    }
}

#[test]
fn square_root_scaling_at_threshold() {
    let ks: Vec<Vec<f64>> = [100, 200, 400].iter().map(|&n| cumulants(&sis(n, 1.0), 4)).collect();
    for w in ks.windows(2) {
        for i in 0..4 {
            let ratio = w[1][i] / w[0][i];
            let expected = 2f64.powf((i + 1) as f64 / 2.0);
            assert!((ratio / expected - 1.0).abs() <= 0.15, "kappa{}: ratio {ratio}, expected {expected}", i + 1);
        }
    }
}

#[test]
fn serialization_round_trips() {
    let q = solve_qsd(&sis(50, 1.5), DEFAULT_TOL).unwrap();
    let mut buf = Vec::new();
    write_distribution_csv(&q, &mut buf).unwrap();
    assert_eq!(read_distribution_csv(buf.as_slice()).unwrap(), q);
    let json = to_json_string("distribution", &q).unwrap();
    assert_eq!(read_json::<Distribution>("distribution", json.as_bytes()).unwrap(), q);

    let k = cumulants_from_distribution(&q, 4).unwrap();
    let json = to_json_string("cumulants", &k).unwrap();
    assert_eq!(read_json::<CumulantSet>("cumulants", json.as_bytes()).unwrap(), k);
}

#[test]
fn invalid_inputs() {
    assert!(Distribution::new(vec![0.5, 0.6]).is_err());
    assert!(Distribution::new(vec![-0.1, 1.1]).is_err());
    assert!(Distribution::new(vec![]).is_err());
    assert!(solve_qsd(&sis(10, 2.0), 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn qsd_normalized_positive_and_eigen(n in 1usize..400, r0 in 0.1f64..6.0, alpha in 0.0f64..4.0, mu in 0.05f64..20.0) {
        let r = verhulst_rates(&VerhulstParams::new(n, r0, alpha, mu).unwrap()).unwrap();
        let sol = solve_qsd_with(&r, &QsdOptions::default()).unwrap();
        let q = sol.distribution.probs();
        prop_assert_eq!(q.len(), n);
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(q.iter().all(|&v| v >= 0.0));
        prop_assert!(eigen_residual(&r, q) <= DEFAULT_TOL * r.max_total_rate());
        let k = cumulants_from_distribution(&sol.distribution, 2).unwrap();
        prop_assert!(k.get(2) >= 0.0);
    }

    #[test]
    fn round_trip_random_distributions(w in proptest::collection::vec(0.0f64..1.0, 1..80)) {
        prop_assume!(w.iter().sum::<f64>() > 1e-6);
        let d = Distribution::from_weights(w).unwrap();
        let raw = raw_moments(&d, 3).unwrap();
        let via = cumulants_to_raw_moments(&cumulants_from_distribution(&d, 3).unwrap()).unwrap();
        for (a, b) in raw.iter().zip(via.mu_bar) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs());
        }
        prop_assert!(raw[1] >= raw[0] * raw[0] * (1.0 - 1e-14));
    }

    #[test]
    fn mu_invariance(n in 1usize..300, r0 in 0.1f64..5.0, alpha in 0.0f64..3.0) {
        let p = VerhulstParams::new(n, r0, alpha, 1.0).unwrap();
        let a = solve_qsd(&verhulst_rates(&p).unwrap(), DEFAULT_TOL).unwrap();
        let b = solve_qsd(&verhulst_rates(&p.with_mu(7.0)).unwrap(), DEFAULT_TOL).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}
