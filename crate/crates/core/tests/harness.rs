use plmc_core::harness::{run_convergence, run_verify, ExperimentSpec, VerifyOverrides};

#[test]
fn desk_scale_errors_shrink_with_h() {
    let report = run_convergence(&ExperimentSpec::convergence()).unwrap();
    for phi in ["PHI1", "EXP_NEG_NORM", "PHI2", "ATAN_NORM"] {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.phi == phi).collect();
        assert_eq!(rows.len(), 5);
        let mut inversions = 0;
        for w in rows.windows(2) {
            let (a, b) = (w[0].abs_error.unwrap(), w[1].abs_error.unwrap());
            if b > a {
                inversions += 1;
                let combined = w[0].std_error.hypot(w[1].std_error);
                assert!(b - a <= 2.0 * combined, "{phi}: {a} -> {b} exceeds 2 SE ({combined})");
            }
        }
        assert!(inversions <= 1, "{phi}: {inversions} inversions");
    }
    assert!(!report.divergence_failed());
}

#[test]
fn corrupted_contractivity_constant_fails_verify() {
    let o = VerifyOverrides { atilde2: Some(50.0), ..Default::default() };
    let report = run_verify(&ExperimentSpec::verify(), &o).unwrap();
    let c = report.checks.iter().find(|c| c.id == "contractivity_at_infinity").unwrap();
    assert!(!c.pass);
    assert!(c.worst_margin > 0.0);
    assert!(!report.checks_passed());
}

#[test]
fn default_verify_passes() {
    let report = run_verify(&ExperimentSpec::verify(), &VerifyOverrides::default()).unwrap();
    for c in &report.checks {
        assert!(c.pass, "{c:?}");
    }
    let csv = report.to_csv();
    assert!(csv.lines().any(|l| l.starts_with("CHECK,ou_one_sided_lipschitz,")));
}
