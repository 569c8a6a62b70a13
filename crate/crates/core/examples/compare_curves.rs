//! Prints IoU-vs-clicks curves for a few configurations on a synthetic suite.
//!
//! Usage: compare_curves [config.json ...]; each file holds a session config.
//! Without arguments the default configuration is compared with and without
//! value propagation.

use std::time::Instant;

use probattn::playground::{evaluate_curve, generate_dataset, suite_config, SessionConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let count: usize = std::env::var("COUNT").ok().map_or(Ok(20), |s| s.parse())?;
    let size: usize = std::env::var("SIZE").ok().map_or(Ok(64), |s| s.parse())?;
    let clicks: usize = std::env::var("CLICKS").ok().map_or(Ok(10), |s| s.parse())?;
    let trials: usize = std::env::var("TRIALS").ok().map_or(Ok(5), |s| s.parse())?;
    let items = generate_dataset(count, size, 2024)?;
    let mut configs: Vec<(String, SessionConfig)> = Vec::new();
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() {
        configs.push(("value_iters=5".into(), suite_config(false, true, false)));
        configs.push(("value_iters=0".into(), suite_config(false, false, false)));
    } else {
        for path in args {
            let cfg: SessionConfig = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            configs.push((path, cfg));
        }
    }
    for (name, cfg) in configs {
        let start = Instant::now();
        let curve = evaluate_curve(&items, &cfg, clicks, trials, 7)?;
        let ious: Vec<String> = curve.points.iter().map(|p| format!("{:.3}", p.mean_iou)).collect();
        println!("{name:<40} {:>6.1}s  {}", start.elapsed().as_secs_f64(), ious.join(" "));
    }
    Ok(())
}
