use approx::assert_relative_eq;
use proptest::prelude::*;

use qsd_core::closure::*;
use qsd_core::dynamics::{closed_rhs, Stability};
use qsd_core::io::{read_json, to_json_string};
use qsd_core::model::{verhulst_rates, VerhulstParams};
use qsd_core::qsd::{cumulants_from_distribution, solve_qsd};
use qsd_core::Error;

fn exact(p: &VerhulstParams) -> Vec<f64> {
    cumulants_from_distribution(&solve_qsd(&verhulst_rates(p).unwrap(), 1e-12).unwrap(), 3)
        .unwrap()
        .kappa
}

#[test]
fn matis_kiffe_examples() {
    let p = VerhulstParams::sis(100, 2.0).unwrap();
    let mk = matis_kiffe_two_cumulant(&p).unwrap();
    assert_relative_eq!(mk.gamma1, 0.91652, max_relative = 1e-5);
    // (3 + sqrt(0.84)) * 100 / 8 = 48.95644; quoted as 48.957.
    assert!((mk.kappa1 - 48.957).abs() <= 1e-3);
    assert_relative_eq!(mk.kappa1, (3.0 + 0.84f64.sqrt()) * 12.5, max_relative = 1e-15);
    assert!((mk.kappa2 - 51.09).abs() <= 5e-3);

    let err = matis_kiffe_two_cumulant(&VerhulstParams::sis(100, 1.1).unwrap()).unwrap_err();
    assert!(matches!(err, Error::ClosureBreakdown { discriminant } if discriminant < 0.0));
    assert!(err.to_string().contains("closure breaks down"));

    let big = VerhulstParams::sis(10_000_000, 2.0).unwrap();
    assert!((matis_kiffe_two_cumulant(&big).unwrap().kappa1 / 1e7 - 0.5).abs() < 1e-6);
}

#[test]
fn matis_kiffe_approaches_leading_order() {
    let mut last = (f64::INFINITY, f64::INFINITY);
    for n in [100, 200, 400, 800, 1600] {
        let mk = matis_kiffe_two_cumulant(&VerhulstParams::sis(n, 2.0).unwrap()).unwrap();
        let gap = ((mk.kappa1 / n as f64 - 0.5).abs(), (mk.kappa2 / n as f64 - 0.5).abs());
        assert!(gap.0 < last.0 && gap.1 < last.1, "N={n}: {gap:?} after {last:?}");
        last = gap;
    }
}

#[test]
fn elimination_polynomial_shape() {
    let p = VerhulstParams::new(300, 2.5, 0.5, 1.0).unwrap();
    let [_, _, c] = elimination_polynomials(&p);
    assert_eq!(c.degree(), 4);
    assert_eq!(c.eval(0.0), 0.0);
    assert_relative_eq!(c.c[4], -18.0 * 3.0 / 300.0, max_relative = 1e-12);
}

#[test]
fn stationary_closure_example() {
    let p = VerhulstParams::sis(100, 2.0).unwrap();
    let sol = cumulant_neglect_stationary(&p).unwrap();
    assert!((sol.kappa[0] - 48.9305).abs() <= 0.15);
    assert!((sol.kappa[1] - 52.3).abs() <= 1.0);
    assert!(sol.all_roots.len() <= 4);
    assert_eq!(sol.stability, Stability::Stable);
    assert!(sol.residual <= 1e-9 * p.mu * p.n_f64());

    // The origin is a root but never accepted.
    let origin = sol.candidates.iter().find(|r| r.re.abs() < 1e-9).expect("origin among the roots");
    assert!(!origin.admissible);
    assert_ne!(sol.accepted_index, sol.candidates.iter().position(|r| r.re.abs() < 1e-9).unwrap());

    let point = sol.accepted_point(&p);
    assert_eq!(point.stability, Stability::Stable);
}

#[test]
fn select_nonspurious_examples() {
    let p = VerhulstParams::sis(100, 2.0).unwrap();
    let err = select_nonspurious(&[[0.0, 0.0, 0.0]], &p).unwrap_err();
    assert!(matches!(err, Error::NoAdmissibleRoot(_)));
    assert!(select_nonspurious(&[], &p).is_err());

    let sol = cumulant_neglect_stationary(&p).unwrap();
    let reals: Vec<[f64; 3]> = sol.candidates.iter().filter_map(|r| r.kappa).collect();
    let again = select_nonspurious(&reals, &p).unwrap();
    assert_eq!(again.kappa, sol.kappa);

    // Offering the accepted root twice is ambiguous, not silently resolved.
    let dup = select_nonspurious(&[sol.kappa, sol.kappa], &p).unwrap_err();
    assert!(matches!(dup, Error::AmbiguousRoots(_)));

    let p = VerhulstParams::new(400, 4.0, 1.0, 1.0).unwrap();
    let sol = cumulant_neglect_stationary(&p).unwrap();
    let stable = sol
        .candidates
        .iter()
        .filter(|r| r.admissible && r.stability == Some(Stability::Stable))
        .count();
    assert_eq!(stable, 1);
}

#[test]
fn multistart_finds_the_accepted_root() {
    let p = VerhulstParams::new(200, 3.0, 0.5, 1.0).unwrap();
    let sol = cumulant_neglect_stationary(&p).unwrap();
    let starts = multistart_roots(&p);
    assert!(starts.iter().any(|k| (k[0] - sol.kappa[0]).abs() < 1e-6 * p.n_f64()));
}

#[test]
fn closure_stays_order_one_from_exact() {
    let mut last = [f64::INFINITY; 3];
    for n in [100, 200, 400, 800, 1600] {
        let p = VerhulstParams::sis(n, 2.0).unwrap();
        let sol = cumulant_neglect_stationary(&p).unwrap();
        let e = exact(&p);
        for i in 0..3 {
            let gap = (e[i] - sol.kappa[i]).abs();
            assert!(gap <= 3.0 && gap < last[i], "N={n} kappa{}: {gap}", i + 1);
            last[i] = gap;
        }
    }
}

#[test]
fn residual_certificate_on_grid() {
    for r0 in [1.5, 2.0, 4.0] {
        for alpha in [0.0, 1.0] {
            for n in [100, 400] {
                let p = VerhulstParams::new(n, r0, alpha, 1.0).unwrap();
                match cumulant_neglect_stationary(&p) {
                    Ok(sol) => {
                        let r = closed_rhs(&p, sol.kappa, 0.0);
                        assert!(r.iter().all(|v| v.abs() <= 1e-9 * p.n_f64()), "({r0}, {alpha}, {n}): {r:?}");
                        assert!(sol.kappa[0] > 0.0 && sol.kappa[0] < p.n_f64());
                    }
                    Err(e) => {
                        assert_eq!((r0, alpha, n), (1.5, 1.0, 100), "{e}");
                        let msg = e.to_string();
                        assert!(msg.contains("complex") && msg.contains("unstable"), "{msg}");
                    }
                }
            }
        }
    }
}

#[test]
fn solution_json_keeps_rejected_candidates() {
    let p = VerhulstParams::sis(100, 2.0).unwrap();
    let sol = cumulant_neglect_stationary(&p).unwrap();
    let json = to_json_string("closure", &sol).unwrap();
    assert!(json.contains("\"unstable\""));
    assert!(json.contains("\"stable\""));
    assert_eq!(read_json::<ClosureSolution>("closure", json.as_bytes()).unwrap(), sol);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matis_kiffe_matches_root_finding(n in 50usize..5000, r0 in 1.2f64..8.0, alpha in 0.0f64..4.0) {
        let p = VerhulstParams::new(n, r0, alpha, 1.0).unwrap();
        let disc = (r0 - 1.0).powi(2) - 8.0 * (alpha + 1.0) * r0 / n as f64;
        prop_assume!(disc > 0.05 * (r0 - 1.0).powi(2));
        let mk = matis_kiffe_two_cumulant(&p).unwrap();
        let nw = two_cumulant_newton(&p).unwrap();
        prop_assert!((mk.kappa1 - nw[0]).abs() <= 1e-9 * nw[0].abs(), "{} vs {}", mk.kappa1, nw[0]);
        prop_assert!((mk.kappa2 - nw[1]).abs() <= 1e-9 * nw[1].abs(), "{} vs {}", mk.kappa2, nw[1]);
        prop_assert!(mk.gamma1 >= 0.0 && mk.kappa1 > 0.0);
    }

    #[test]
    fn accepted_root_invariants(n in 100usize..2000, r0 in 1.8f64..6.0, alpha in 0.0f64..2.0) {
        let p = VerhulstParams::new(n, r0, alpha, 1.0).unwrap();
        let sol = cumulant_neglect_stationary(&p).unwrap();
        prop_assert!(sol.all_roots.len() <= 4);
        prop_assert!(sol.kappa[0] > 0.0 && sol.kappa[0] < n as f64);
        prop_assert_eq!(sol.stability, Stability::Stable);
        prop_assert!(sol.residual <= 1e-9 * n as f64);
    }
}
