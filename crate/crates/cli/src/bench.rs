use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use probattn::playground::{evaluate_curve, load_dataset, Curve, SessionConfig};
use serde::{Deserialize, Serialize};

use crate::{read_json, write_file, BenchArgs, CliError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub session: SessionConfig,
    pub max_clicks: usize,
    pub trials: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            session: SessionConfig::default(),
            max_clicks: 20,
            trials: 5,
            seed: 0,
        }
    }
}

/// Record of one bench run. Paths are absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset_manifest: PathBuf,
    pub csv: PathBuf,
    pub curve_json: PathBuf,
    pub config: BenchConfig,
    pub jobs: Option<usize>,
    pub items: usize,
    pub failures: usize,
    pub started_unix_s: f64,
    pub elapsed_s: f64,
    pub version: String,
}

/// Sibling of `out` with the same stem and a new suffix.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "bench".into());
    out.with_file_name(format!("{stem}{suffix}"))
}

fn absolute(path: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(path).map_err(|e| CliError::io(path, e))
}

pub fn run(args: BenchArgs) -> Result<RunManifest, CliError> {
    let mut config: BenchConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => BenchConfig::default(),
    };
    if let Some(v) = args.max_clicks {
        config.max_clicks = v;
    }
    if let Some(v) = args.trials {
        config.trials = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if config.trials == 0 {
        return Err(CliError::Usage("trials must be at least 1".into()));
    }
    if args.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    config
        .session
        .validate()
        .map_err(|e| CliError::Usage(format!("session config: {e}")))?;

    let items = load_dataset(&args.manifest).map_err(|e| CliError::engine(&args.manifest, e))?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = args.jobs {
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let curve: Curve = pool
        .install(|| evaluate_curve(&items, &config.session, config.max_clicks, config.trials, config.seed))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let elapsed = clock.elapsed().as_secs_f64();

    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let curve_json = sibling(&args.out, ".json");
    let manifest_path = sibling(&args.out, ".manifest.json");
    write_file(&args.out, curve.to_csv())?;
    write_file(&curve_json, serde_json::to_string_pretty(&curve).expect("curve serializes") + "\n")?;
    let manifest = RunManifest {
        dataset_manifest: absolute(&args.manifest)?,
        csv: absolute(&args.out)?,
        curve_json: absolute(&curve_json)?,
        config,
        jobs: args.jobs,
        items: items.len(),
        failures: curve.failures.len(),
        started_unix_s: started,
        elapsed_s: elapsed,
        version: env!("CARGO_PKG_VERSION").into(),
    };
    write_file(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
    for p in &curve.points {
        println!("{:>3} clicks  mean IoU {:.4} ± {:.4}", p.clicks, p.mean_iou, p.stderr);
    }
    println!("wrote {}", args.out.display());
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn siblings_share_the_stem() {
        let out = Path::new("runs/vp5.csv");
        assert_eq!(sibling(out, ".json"), Path::new("runs/vp5.json"));
        assert_eq!(sibling(out, ".manifest.json"), Path::new("runs/vp5.manifest.json"));
    }

    #[test]
    fn config_rejects_unknown_fields() {
        assert!(serde_json::from_str::<BenchConfig>(r#"{"trails": 3}"#).is_err());
        let cfg: BenchConfig = serde_json::from_str(r#"{"trials": 3, "session": {"adaptation": {"value_iters": 0}}}"#).unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.session.adaptation.value_iters, 0);
    }
}
