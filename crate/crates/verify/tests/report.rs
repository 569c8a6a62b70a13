use probattn_verify::{run, run_suite, Report, VerifyOptions, SUITE_NAMES};

#[test]
fn default_run_passes() {
    let report = run(&VerifyOptions::default());
    for s in &report.suites {
        println!(
            "{:<20} passed={} cases={} max_error={:.3e} tol={:e} {:.2}s {:?}",
            s.name, s.passed, s.cases, s.max_error, s.tolerance, s.elapsed_s, s.failures
        );
    }
    assert_eq!(report.suites.len(), SUITE_NAMES.len());
    assert!(report.passed);
}

#[test]
fn perturbed_outputs_fail_every_suite() {
    let opts = VerifyOptions {
        perturb: 1e-3,
        ..VerifyOptions::default()
    };
    for name in SUITE_NAMES {
        let r = run_suite(name, &opts);
        assert!(!r.passed, "{name} passed with perturbed outputs");
        assert!(!r.failures.is_empty());
    }
}

#[test]
fn other_seeds_pass() {
    for seed in [1, 77, 123_456_789] {
        let report = run(&VerifyOptions {
            seed,
            ..VerifyOptions::default()
        });
        let failed: Vec<_> = report.suites.iter().filter(|s| !s.passed).map(|s| (&s.name, &s.failures)).collect();
        assert!(failed.is_empty(), "seed {seed}: {failed:?}");
    }
}

#[test]
fn report_round_trips_through_json() {
    let report = run(&VerifyOptions {
        only: vec!["core_formulas".into(), "position".into()],
        ..VerifyOptions::default()
    });
    assert_eq!(report.suites.len(), 2);
    let json = serde_json::to_string(&report).unwrap();
    let back: Report = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    for key in ["seed", "perturb", "passed", "suites"] {
        assert!(value.get(key).is_some(), "missing {key}");
    }
    for key in ["name", "passed", "cases", "max_error", "tolerance", "elapsed_s", "covers", "failures"] {
        assert!(value["suites"][0].get(key).is_some(), "missing suite field {key}");
    }
    assert!(report.coverage().iter().any(|(_, suite)| suite == "position_formulas"));
}

#[test]
fn unknown_option_fields_are_rejected() {
    assert!(serde_json::from_str::<VerifyOptions>(r#"{"seed": 3, "bogus": 1}"#).is_err());
    let opts: VerifyOptions = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
    assert_eq!(opts.max_n, VerifyOptions::default().max_n);
}

#[test]
fn unknown_suite_fails() {
    let r = run_suite("nonexistent", &VerifyOptions::default());
    assert!(!r.passed);
}
