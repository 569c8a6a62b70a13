//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use probattn::playground::{evaluate_curve, generate_dataset, suite_config, Curve, DatasetItem};
use probattn_verify::{run_suite, SuiteResult, VerifyOptions};

const DATASET_SEED: u64 = 2024;
const EVAL_SEED: u64 = 7;
const SUITE_SIZE: usize = 64;
const SUITE_ITEMS: usize = 20;
const CLICKS: usize = 10;
const TRIALS: usize = 5;
const KEY_ADAPTATION_MARGIN: f64 = 0.05;
const CURVE_TIME_LIMIT_S: f64 = 300.0;

struct Outcome {
    failed: usize,
}

impl Outcome {
    fn line(&mut self, name: &str, passed: bool, detail: String) {
        if !passed {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    }

    fn suite(&mut self, name: &str, suite: &str) {
        let r: SuiteResult = run_suite(suite, &VerifyOptions::default());
        let limit = r.time_limit_s.map(|t| format!(" limit={t}s")).unwrap_or_default();
        let mut detail = format!(
            "{} cases, max error {:.2e} (tol {:.0e}), {:.2}s{limit}",
            r.cases, r.max_error, r.tolerance, r.elapsed_s
        );
        if let Some(f) = r.failures.first() {
            detail.push_str(&format!("; first failure: {f}"));
        }
        self.line(name, r.passed, detail);
    }
}

fn curve(items: &[DatasetItem], ka: bool, vp: bool, shifted: bool) -> Curve {
    evaluate_curve(items, &suite_config(ka, vp, shifted), CLICKS, TRIALS, EVAL_SEED).expect("curve evaluates")
}

fn iou(c: &Curve, clicks: usize) -> f64 {
    c.at(clicks).expect("click count in range").mean_iou
}

fn fmt(c: &Curve, range: std::ops::RangeInclusive<usize>) -> String {
    range.map(|k| format!("{:.3}", iou(c, k))).collect::<Vec<_>>().join(" ")
}

fn bench_csv(bin: &Path, manifest: &Path, out: &Path, jobs: &str) -> Result<Vec<u8>, String> {
    let status = Command::new(bin)
        .args(["bench", "--max-clicks", "4", "--trials", "2", "--seed", "11", "--jobs", jobs])
        .arg("--manifest")
        .arg(manifest)
        .arg("--out")
        .arg(out)
        .env("PROBATTN_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    std::fs::read(out).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let mut out = Outcome { failed: 0 };

    out.suite("beta_to_zero_equivalence", "beta_limit");
    out.suite("em_monotonicity", "em_monotonicity");
    out.suite("grid_search_oracle", "grid_search");
    out.suite("adaptation_formula_oracles", "adaptation_formulas");
    out.suite("position_embedding_oracle", "position_formulas");

    let items = generate_dataset(SUITE_ITEMS, SUITE_SIZE, DATASET_SEED).expect("synthetic suite");

    let start = Instant::now();
    let vp5 = curve(&items, false, true, false);
    let vp0 = curve(&items, false, false, false);
    let elapsed = start.elapsed().as_secs_f64();
    let beats = (1..=CLICKS).all(|k| iou(&vp5, k) > iou(&vp0, k));
    out.line(
        "value_propagation_curve",
        beats && elapsed < CURVE_TIME_LIMIT_S,
        format!(
            "value_iters=5 [{}] vs value_iters=0 [{}] at clicks 1..{CLICKS}, {elapsed:.1}s (limit {CURVE_TIME_LIMIT_S}s)",
            fmt(&vp5, 1..=CLICKS),
            fmt(&vp0, 1..=CLICKS)
        ),
    );

    let none = curve(&items, false, false, true);
    let ka = curve(&items, true, false, true);
    let vp = curve(&items, false, true, true);
    let both = curve(&items, true, true, true);
    let gain = iou(&ka, 0) - iou(&none, 0);
    out.line(
        "key_adaptation_under_shift",
        gain >= KEY_ADAPTATION_MARGIN,
        format!(
            "0-click IoU {:.4} with adaptation vs {:.4} without, gain {gain:.4} (need >= {KEY_ADAPTATION_MARGIN})",
            iou(&ka, 0),
            iou(&none, 0)
        ),
    );

    let ka_first = iou(&ka, 0) > iou(&vp, 0);
    let vp_later = (5..=CLICKS).all(|k| iou(&vp, k) > iou(&ka, k));
    let dominates = [0, CLICKS]
        .iter()
        .all(|&k| iou(&both, k) >= iou(&ka, k) && iou(&both, k) >= iou(&vp, k));
    out.line(
        "combined_regime_trend",
        ka_first && vp_later && dominates,
        format!(
            "KA [{}] VP [{}] KA+VP [{}] over clicks 0..{CLICKS}",
            fmt(&ka, 0..=CLICKS),
            fmt(&vp, 0..=CLICKS),
            fmt(&both, 0..=CLICKS)
        ),
    );

    let dir = tempfile::tempdir().expect("temp dir");
    let manifest = probattn::playground::write_dataset(dir.path().join("data"), 4, 48, 5).expect("dataset written");
    let bin = Path::new(env!("CARGO_BIN_EXE_probattn"));
    let runs = [
        bench_csv(bin, &manifest, &dir.path().join("a.csv"), "2"),
        bench_csv(bin, &manifest, &dir.path().join("b.csv"), "2"),
        bench_csv(bin, &manifest, &dir.path().join("c.csv"), "1"),
    ];
    match runs {
        [Ok(a), Ok(b), Ok(c)] => out.line(
            "bench_determinism",
            a == b && a == c,
            format!("{} CSV bytes; identical across two runs: {}, across worker counts: {}", a.len(), a == b, a == c),
        ),
        runs => {
            let err = runs.into_iter().find_map(|r| r.err()).unwrap_or_default();
            out.line("bench_determinism", false, format!("bench failed: {err}"));
        }
    }

    if out.failed == 0 {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{} acceptance criteria failed", out.failed);
        ExitCode::FAILURE
    }
}
