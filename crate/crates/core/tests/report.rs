use qsd_core::config::{load_config, ModelConfig};
use qsd_core::io::{read_json, to_json_string};
use qsd_core::model::{SirParams, VerhulstParams};
use qsd_core::report::*;

fn cell<'a>(t: &'a TableReport, r0: f64, quantity: &str, n: usize) -> &'a TableCell {
    t.cells
        .iter()
        .find(|c| c.r0 == r0 && c.quantity == quantity && c.n == n)
        .unwrap_or_else(|| panic!("no cell ({r0}, {quantity}, {n})"))
}

#[test]
fn table_cells() {
    let t1 = reproduce_table(1).unwrap();
    assert_eq!(t1.cells.len(), 36);
    let c = cell(&t1, 2.0, "kappa1", 400);
    assert!((c.value - 199.0).abs() <= 0.5 && c.pass);

    let t2 = reproduce_table(2).unwrap();
    assert_eq!(t2.cells.len(), 9);
    assert!((cell(&t2, 2.0, "kappa2", 200).value - 0.15).abs() <= 0.01);

    let t3 = reproduce_table(3).unwrap();
    assert!((cell(&t3, 2.0, "mu_bar3", 400).value + 23.0).abs() <= 0.5);

    // Rows come out in a fixed order whatever the scheduling.
    let again = reproduce_table(3).unwrap();
    assert_eq!(t3, again);
}

#[test]
fn table_csv_round_trip() {
    let t = reproduce_table(2).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("#schema_version=1 kind=table\n"));
    assert_eq!(TableReport::read_csv(buf.as_slice()).unwrap(), t);

    let json = to_json_string("table", &t).unwrap();
    assert_eq!(read_json::<TableReport>("table", json.as_bytes()).unwrap(), t);
}

#[test]
fn scaling_ratios() {
    let p = VerhulstParams::sis(100, 2.0).unwrap();
    let r = error_scaling_report(&p, &[100, 200, 400]).unwrap();
    let ratio = |q: &str, n: usize| r.row(q, n).unwrap().ratio;
    let near = |got: f64, want: f64, tol: f64| assert!((got - want).abs() <= tol, "{got} vs {want}");
    near(ratio("kappa1", 100), 4.5, 0.3);
    near(ratio("kappa1", 200), 4.2, 0.3);
    near(ratio("kappa2", 100), 2.2, 0.15);
    near(ratio("kappa2", 200), 2.2, 0.15);
    near(ratio("kappa3", 100), 1.19, 0.05);
    near(ratio("kappa3", 200), 1.08, 0.05);
    for q in ["kappa1", "kappa2", "kappa3"] {
        assert!(r.row(q, 100).unwrap().pass && r.row(q, 200).unwrap().pass);
    }
    let json = to_json_string("scaling", &r).unwrap();
    assert_eq!(read_json::<ScalingReport>("scaling", json.as_bytes()).unwrap(), r);
}

#[test]
fn comparison_above_threshold() {
    let r = compare_methods(&VerhulstParams::sis(100, 2.0).unwrap()).unwrap();
    assert!((r.exact.kappa[1] - 52.3).abs() <= 0.05);
    let a = r.asymptotic.computed().unwrap();
    assert_eq!(a.kappa[1], 52.0);
    let mk = r.matis_kiffe.computed().unwrap();
    assert!((mk.kappa2 - 51.09).abs() <= 0.005);
    assert!(r.closure.computed().is_some());
    assert_eq!(r.closure_candidates.len(), 4);
    assert!(r.meta.mu_invariance_gap <= MU_INVARIANCE_TOL);
    assert!(r.pass());

    for e in r.errors() {
        assert_eq!(e.error, e.exact - e.approx);
    }
    let k2 = r.errors().into_iter().find(|e| e.quantity == "kappa2" && e.method == "asymptotic").unwrap();
    assert_eq!(k2.exact, r.exact.kappa[1]);

    let json = to_json_string("compare", &r).unwrap();
    assert_eq!(read_json::<ComparisonRecord>("compare", json.as_bytes()).unwrap(), r);
}

#[test]
fn comparison_near_and_below_threshold() {
    let r = compare_methods(&VerhulstParams::sis(100, 1.1).unwrap()).unwrap();
    assert!(matches!(&r.matis_kiffe, Outcome::Failed(m) if m.contains("closure breaks down")));
    assert!(r.asymptotic.computed().is_some());

    let r = compare_methods(&VerhulstParams::sis(100, 0.4).unwrap()).unwrap();
    assert!((r.exact.kappa[0] - 1.64).abs() <= 0.005);
    assert!(matches!(r.asymptotic, Outcome::NotApplicable(_)));
    assert!(matches!(r.matis_kiffe, Outcome::NotApplicable(_)));
    assert!(matches!(r.closure, Outcome::NotApplicable(_)));
    assert!(r.errors().is_empty());

    let json = to_json_string("compare", &r).unwrap();
    assert!(json.contains("\"not-applicable\""));
    assert_eq!(read_json::<ComparisonRecord>("compare", json.as_bytes()).unwrap(), r);
}

#[test]
fn sir_comparison() {
    let r = sir_report(&SirParams::new(40, 2.0, 2.0, 1.0).unwrap()).unwrap();
    // N/R0 + alpha/(R0-1), (R0-1)N/(alpha R0) - 1/(R0-1), (R0+alpha)N/R0^2,
    // -N/R0, (R0^2 + alpha(R0-1))N/(alpha R0^2).
    assert_eq!(r.two_term.first_and_second(), [22.0, 9.0, 40.0, -20.0, 30.0]);
    assert!(r.meta.boundary_mass <= 1e-8);
    assert!(r.meta.generator.states > 0);
    assert_eq!(r.errors().len(), 10);
    for e in r.errors() {
        assert_eq!(e.error, e.exact - e.approx);
    }
    let json = to_json_string("sir", &r).unwrap();
    assert_eq!(read_json::<SirComparisonRecord>("sir", json.as_bytes()).unwrap(), r);

    let r80 = sir_report(&SirParams::new(80, 2.0, 2.0, 1.0).unwrap()).unwrap();
    let gap = |r: &SirComparisonRecord| (r.exact.k10 - r.two_term.k10).abs();
    assert!(gap(&r80) < gap(&r));

    assert!(sir_report(&SirParams::new(40, 0.9, 2.0, 1.0).unwrap()).is_err());
}

#[test]
fn config_file_drives_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "N = 200\nR0 = 2.5\nalpha = 0.5\n").unwrap();
    let ModelConfig::Verhulst(p) = load_config(&path).unwrap() else { panic!("expected Verhulst") };
    assert_eq!((p.n, p.r0, p.alpha, p.mu), (200, 2.5, 0.5, 1.0));

    std::fs::write(&path, "model = \"sir\"\nN = 40\nR0 = 2\nalpha = 2\n").unwrap();
    assert!(matches!(load_config(&path).unwrap(), ModelConfig::Sir(_)));
    assert!(load_config(dir.path().join("missing.toml")).is_err());
}
