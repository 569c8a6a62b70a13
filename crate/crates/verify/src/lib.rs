//! Numerical verification of the probabilistic attention core against
//! independent extended-precision oracles, EM monotonicity checks and
//! structural invariants.

pub mod dd;
pub mod instances;
pub mod oracle;
mod suites;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use dd::Dd;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Relative perturbation applied to every checked implementation output;
    /// a negative control that must make verification fail.
    pub perturb: f64,
    /// Largest unit count, query and value dimension of random instances.
    pub max_n: usize,
    pub max_d: usize,
    pub max_m: usize,
    /// Restrict the run to suites whose name contains one of these.
    pub only: Vec<String>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 20_240_611,
            perturb: 0.0,
            max_n: 16,
            max_d: 8,
            max_m: 4,
            only: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub elapsed_s: f64,
    pub time_limit_s: Option<f64>,
    /// Invariants exercised by the suite.
    pub covers: Vec<String>,
    /// The first few failing cases.
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub perturb: f64,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

impl Report {
    pub fn coverage(&self) -> Vec<(String, String)> {
        self.suites
            .iter()
            .flat_map(|s| s.covers.iter().map(move |c| (c.clone(), s.name.clone())))
            .collect()
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }
}

pub const SUITE_NAMES: [&str; 7] = [
    "core_formulas",
    "beta_limit",
    "em_monotonicity",
    "grid_search",
    "adaptation_formulas",
    "position_formulas",
    "invariants",
];

pub fn run(opts: &VerifyOptions) -> Report {
    let selected = |name: &str| opts.only.is_empty() || opts.only.iter().any(|o| name.contains(o.as_str()));
    let mut suites = Vec::new();
    for name in SUITE_NAMES {
        if selected(name) {
            suites.push(run_suite(name, opts));
        }
    }
    Report {
        seed: opts.seed,
        perturb: opts.perturb,
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}

pub fn run_suite(name: &str, opts: &VerifyOptions) -> SuiteResult {
    let mut check = Check::new(name, opts);
    let outcome = match name {
        "core_formulas" => suites::core::formulas(&mut check),
        "beta_limit" => suites::core::beta_limit(&mut check),
        "em_monotonicity" => suites::adaptation::monotonicity(&mut check),
        "grid_search" => suites::core::grid_search(&mut check),
        "adaptation_formulas" => suites::adaptation::formulas(&mut check),
        "position_formulas" => suites::position::formulas(&mut check),
        "invariants" => suites::invariants::run(&mut check),
        other => Err(probattn::Error::InvalidConfig(format!("unknown suite {other}"))),
    };
    if let Err(e) = outcome {
        check.fail(format!("error: {e}"));
    }
    check.finish()
}

/// Error measure for a comparison.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Metric {
    Abs,
    /// `|got - want| / max(|want|, 1)`.
    Rel,
}

/// Accumulates comparisons for one suite.
pub(crate) struct Check<'a> {
    name: String,
    opts: &'a VerifyOptions,
    tolerance: f64,
    time_limit: Option<f64>,
    cases: usize,
    max_error: f64,
    failed: bool,
    failures: Vec<String>,
    covers: Vec<String>,
    start: Instant,
}

const MAX_REPORTED_FAILURES: usize = 5;

impl<'a> Check<'a> {
    fn new(name: &str, opts: &'a VerifyOptions) -> Self {
        Check {
            name: name.to_string(),
            opts,
            tolerance: 0.0,
            time_limit: None,
            cases: 0,
            max_error: 0.0,
            failed: false,
            failures: Vec::new(),
            covers: Vec::new(),
            start: Instant::now(),
        }
    }

    pub(crate) fn opts(&self) -> &VerifyOptions {
        self.opts
    }

    pub(crate) fn set_tolerance(&mut self, tol: f64) {
        self.tolerance = tol;
    }

    pub(crate) fn set_time_limit(&mut self, seconds: f64) {
        self.time_limit = Some(seconds);
    }

    pub(crate) fn covers(&mut self, what: &str) {
        self.covers.push(what.to_string());
    }

    pub(crate) fn case(&mut self) {
        self.cases += 1;
    }

    /// The implementation's value as seen by the checks.
    pub(crate) fn observe(&self, x: f64) -> f64 {
        x * (1.0 + self.opts.perturb)
    }

    pub(crate) fn fail(&mut self, msg: String) {
        self.failed = true;
        if self.failures.len() < MAX_REPORTED_FAILURES {
            self.failures.push(msg);
        }
    }

    /// Records an error value against a tolerance.
    pub(crate) fn error(&mut self, label: &dyn Fn() -> String, err: f64, tol: f64) {
        if err.is_nan() || err > self.max_error {
            self.max_error = if err.is_nan() { f64::INFINITY } else { err };
        }
        if !(err <= tol) {
            self.fail(format!("{}: error {err:e} > {tol:e}", label()));
        }
    }

    pub(crate) fn compare(&mut self, label: &dyn Fn() -> String, got: f64, want: f64, metric: Metric) {
        let tol = self.tolerance;
        self.compare_tol(label, got, want, metric, tol);
    }

    pub(crate) fn compare_tol(&mut self, label: &dyn Fn() -> String, got: f64, want: f64, metric: Metric, tol: f64) {
        let got = self.observe(got);
        let diff = (got - want).abs();
        let err = match metric {
            Metric::Abs => diff,
            Metric::Rel => diff / want.abs().max(1.0),
        };
        let err = if got == want { 0.0 } else { err };
        self.error(label, err, tol);
    }

    pub(crate) fn compare_all(&mut self, label: &dyn Fn() -> String, got: &[f64], want: &[f64], metric: Metric) {
        if got.len() != want.len() {
            self.fail(format!("{}: length {} != {}", label(), got.len(), want.len()));
            return;
        }
        for (k, (g, w)) in got.iter().zip(want).enumerate() {
            self.compare(&|| format!("{}[{k}]", label()), *g, *w, metric);
        }
    }

    pub(crate) fn compare_rows(&mut self, label: &dyn Fn() -> String, got: &[Vec<f64>], want: &[Vec<f64>], metric: Metric) {
        if got.len() != want.len() {
            self.fail(format!("{}: {} rows != {}", label(), got.len(), want.len()));
            return;
        }
        for (i, (g, w)) in got.iter().zip(want).enumerate() {
            self.compare_all(&|| format!("{} row {i}", label()), g, w, metric);
        }
    }

    pub(crate) fn check(&mut self, label: &dyn Fn() -> String, ok: bool) {
        if !ok {
            self.fail(label());
        }
    }

    fn finish(self) -> SuiteResult {
        let elapsed = self.start.elapsed().as_secs_f64();
        let mut failures = self.failures;
        let mut passed = !self.failed;
        if let Some(limit) = self.time_limit {
            if elapsed >= limit {
                passed = false;
                failures.push(format!("runtime {elapsed:.2}s exceeds {limit}s"));
            }
        }
        SuiteResult {
            name: self.name,
            passed,
            cases: self.cases,
            max_error: self.max_error,
            tolerance: self.tolerance,
            elapsed_s: elapsed,
            time_limit_s: self.time_limit,
            covers: self.covers,
            failures,
        }
    }
}
