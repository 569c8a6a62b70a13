use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use probattn::playground::{Manifest, Mask};
use probattn_cli::RunManifest;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_probattn"));
    c.env("PROBATTN_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, count: usize, size: usize, seed: u64) -> PathBuf {
    let o = run(&["gen-synth", "--count", &count.to_string(), "--size", &size.to_string(), "--seed", &seed.to_string(), "--out-dir", s(dir)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(stdout(&o).trim())
}

fn sorted_keys(v: &Value) -> Vec<String> {
    let mut keys: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    keys
}

#[test]
fn verify_passes_and_lists_coverage() {
    let o = run(&["verify"]);
    let text = stdout(&o);
    assert_eq!(code(&o), 0, "{text}");
    for name in probattn_verify::SUITE_NAMES {
        assert!(text.lines().any(|l| l.starts_with("PASS") && l.contains(name)), "{name} missing:\n{text}");
    }
    assert!(text.contains("coverage:"));
}

#[test]
fn verify_perturbation_fails() {
    let o = run(&["verify", "--perturb", "1e-3", "--only", "formulas"]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(stdout(&o).lines().any(|l| l.starts_with("FAIL")));
}

#[test]
fn verify_json_report_matches_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = run(&["verify", "--report", "json", "--only", "invariants", "--only", "position", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let printed: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(printed, written);
    let golden: Value = serde_json::from_str(include_str!("fixtures/report_schema.json")).unwrap();
    let report_keys: Vec<String> = serde_json::from_value(golden["report"].clone()).unwrap();
    let suite_keys: Vec<String> = serde_json::from_value(golden["suite"].clone()).unwrap();
    assert_eq!(sorted_keys(&printed), report_keys);
    let suites = printed["suites"].as_array().unwrap();
    assert_eq!(suites.len(), 2);
    for suite in suites {
        assert_eq!(sorted_keys(suite), suite_keys);
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["verify", "--no-such-flag"])), 2);
    assert_eq!(code(&run(&["verify", "--only", "nothing_matches"])), 2);
    assert_eq!(code(&run(&["verify", "--perturb", "-1"])), 2);
    assert_eq!(code(&run(&["gen-synth", "--size", "31", "--out-dir", "/tmp/unused"])), 2);
    assert_eq!(code(&run(&[])), 2);
}

#[test]
fn gen_synth_writes_connected_targets() {
    let dir = tempfile::tempdir().unwrap();
    let path = gen(&dir.path().join("one"), 1, 40, 3);
    let manifest = Manifest::read(&path).unwrap();
    assert_eq!(manifest.items.len(), 1);
    let root = path.parent().unwrap();
    let entry = &manifest.items[0];
    assert!(root.join(&entry.image).is_file());
    let mask = Mask::open(root.join(&entry.mask)).unwrap();

    // flood fill from the first foreground pixel must reach every foreground pixel
    let (h, w) = (mask.height(), mask.width());
    let start = mask.data().iter().position(|&b| b).unwrap();
    let mut seen = vec![false; h * w];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(p) = stack.pop() {
        let (r, c) = (p / w, p % w);
        let mut next = Vec::new();
        if r > 0 {
            next.push(p - w);
        }
        if r + 1 < h {
            next.push(p + w);
        }
        if c > 0 {
            next.push(p - 1);
        }
        if c + 1 < w {
            next.push(p + 1);
        }
        for q in next {
            if mask.data()[q] && !seen[q] {
                seen[q] = true;
                stack.push(q);
            }
        }
    }
    assert_eq!(seen.iter().filter(|&&b| b).count(), mask.count());
    let rows: Vec<usize> = (0..h * w).filter(|&i| mask.data()[i]).map(|i| i / w).collect();
    assert_eq!(entry.bbox.top, *rows.iter().min().unwrap());
    assert_eq!(entry.bbox.bottom, rows.iter().max().unwrap() + 1);

    let again = gen(&dir.path().join("two"), 1, 40, 3);
    for name in ["synth_0000.png", "synth_0000_mask.png", "manifest.json"] {
        assert_eq!(
            std::fs::read(root.join(name)).unwrap(),
            std::fs::read(again.parent().unwrap().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn bench_single_trial_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(&dir.path().join("data"), 2, 40, 1);
    let out = dir.path().join("runs/one.csv");
    let o = run(&["bench", "--manifest", s(&data), "--max-clicks", "3", "--trials", "1", "--seed", "4", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("clicks,mean_iou,stderr,trials"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0], k.to_string());
        assert_eq!(row[2], "0");
        assert_eq!(row[3], "1");
    }

    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("runs/one.manifest.json")).unwrap()).unwrap();
    for p in [&manifest.dataset_manifest, &manifest.csv, &manifest.curve_json] {
        assert!(p.is_absolute() && p.is_file(), "{}", p.display());
    }
    assert_eq!((manifest.config.seed, manifest.config.trials, manifest.config.max_clicks), (4, 1, 3));
    assert_eq!(manifest.items, 2);
    let curve: probattn::playground::Curve =
        serde_json::from_str(&std::fs::read_to_string(&manifest.curve_json).unwrap()).unwrap();
    assert_eq!(curve.to_csv(), csv);
}

#[test]
fn bench_ablation_pair_from_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(&dir.path().join("data"), 3, 48, 2);
    let mut csvs = Vec::new();
    for iters in [0, 5] {
        let cfg = dir.path().join(format!("vp{iters}.json"));
        let body = format!(r#"{{"max_clicks": 2, "trials": 7, "seed": 1, "session": {{"adaptation": {{"value_iters": {iters}}}}}}}"#);
        std::fs::write(&cfg, body).unwrap();
        let out = dir.path().join(format!("vp{iters}.csv"));
        let o = run(&["bench", "--manifest", s(&data), "--config", s(&cfg), "--trials", "2", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let m: RunManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("vp{iters}.manifest.json"))).unwrap())
                .unwrap();
        assert_eq!(m.config.trials, 2, "flag overrides file");
        assert_eq!(m.config.max_clicks, 2);
        assert_eq!(m.config.session.adaptation.value_iters, iters);
        csvs.push(std::fs::read_to_string(&out).unwrap());
    }
    // zero clicks involve no propagation
    assert_eq!(csvs[0].lines().nth(1), csvs[1].lines().nth(1));
    assert_ne!(csvs[0], csvs[1]);
}

#[test]
fn bench_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&run(&["bench", "--manifest", s(&missing), "--out", s(&out)])), 3);
    let data = gen(&dir.path().join("data"), 1, 32, 0);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"session": {"adaptation": {"theta_mu": -1}}}"#).unwrap();
    assert_eq!(code(&run(&["bench", "--manifest", s(&data), "--config", s(&bad), "--out", s(&out)])), 2);
    std::fs::write(&bad, r#"{"trails": 1}"#).unwrap();
    assert_eq!(code(&run(&["bench", "--manifest", s(&data), "--config", s(&bad), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["bench", "--manifest", s(&data), "--trials", "0", "--out", s(&out)])), 2);
    assert!(!out.exists());
}

fn http_get(addr: &str, path: &str) -> String {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    response
}

#[cfg(unix)]
#[test]
fn serve_answers_and_stops_on_sigint() {
    let mut child = bin()
        .args(["serve", "--port", "0", "--seed", "1"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect("address line").to_string();

    let health = http_get(&addr, "/api/healthz");
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(health.contains(r#"{"status":"ok"}"#));
    let missing = http_get(&addr, "/api/session/00000000000000000000000000000000");
    assert!(missing.starts_with("HTTP/1.1 404"), "{missing}");

    let busy = run(&["serve", "--port", addr.rsplit(':').next().unwrap()]);
    assert_eq!(code(&busy), 3);

    let killed = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    assert_eq!(child.wait().unwrap().code(), Some(0));
}
