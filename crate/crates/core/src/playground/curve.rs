//! Mean IoU as a function of the number of simulated clicks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::annotator::{simulate_annotator, AnnotatorAction};
use super::dataset::DatasetItem;
use super::image::BBox;
use super::session::{init_session, SessionConfig};

/// Corner noise as a fraction of the box side.
pub const BBOX_NOISE: f64 = 0.05;

/// Click radius for the 64-pixel synthetic suite.
pub const SUITE_CLICK_RADIUS: usize = 3;
/// Offset added to queries in the shifted synthetic suite.
pub const SUITE_QUERY_SHIFT: [f64; 5] = [2.2, 2.2, 0.0, 0.0, 0.0];
pub const SUITE_KEY_ITERS: usize = 1;
pub const SUITE_VALUE_ITERS: usize = 5;

/// Session configuration for the synthetic suite with key adaptation and
/// value propagation switched on or off.
pub fn suite_config(key_adaptation: bool, value_propagation: bool, shifted: bool) -> SessionConfig {
    let mut cfg = SessionConfig {
        click_radius: SUITE_CLICK_RADIUS,
        query_shift: shifted.then(|| SUITE_QUERY_SHIFT.to_vec()),
        ..SessionConfig::default()
    };
    cfg.adaptation.theta_xi = 0.0;
    cfg.adaptation.key_iters = if key_adaptation { SUITE_KEY_ITERS } else { 0 };
    cfg.adaptation.value_iters = if value_propagation { SUITE_VALUE_ITERS } else { 0 };
    cfg
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub clicks: usize,
    pub mean_iou: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    /// `(trial, item name, error)` for items that failed and were left out.
    pub failures: Vec<(usize, String, String)>,
}

impl Curve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("clicks,mean_iou,stderr,trials\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.clicks, p.mean_iou, p.stderr, p.trials));
        }
        out
    }

    pub fn at(&self, clicks: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.clicks == clicks)
    }
}

/// Moves every corner by an independent uniform offset of up to `frac` of the
/// box side, clamped to the image and kept non-empty.
pub fn perturb_bbox(bbox: BBox, height: usize, width: usize, frac: f64, rng: &mut impl Rng) -> BBox {
    let mut jitter = |v: usize, side: usize, limit: usize| {
        let amp = frac * side as f64;
        let off = if amp > 0.0 { rng.random_range(-amp..=amp) } else { 0.0 };
        ((v as f64 + off).round().max(0.0) as usize).min(limit)
    };
    let (bh, bw) = (bbox.height(), bbox.width());
    let top = jitter(bbox.top, bh, height - 1);
    let left = jitter(bbox.left, bw, width - 1);
    let bottom = jitter(bbox.bottom, bh, height).max(top + 1);
    let right = jitter(bbox.right, bw, width).max(left + 1);
    BBox {
        top,
        left,
        bottom,
        right,
    }
}

/// IoU after 0..=max_clicks simulated clicks for one item and box. Once the
/// annotator reports no error left, the last IoU is carried forward.
pub fn run_item(item: &DatasetItem, bbox: BBox, cfg: &SessionConfig, max_clicks: usize) -> Result<Vec<f64>> {
    let mut session = init_session(&item.image, Some(&item.gt), Some(bbox), cfg)?;
    let gt = session.ground_truth().cloned().expect("session has ground truth");
    let mut ious = vec![session.iou().expect("ground truth present")];
    for _ in 0..max_clicks {
        match simulate_annotator(session.predict_mask(), &gt, cfg.click_radius)? {
            AnnotatorAction::Done => {
                let last = *ious.last().expect("non-empty");
                ious.resize(max_clicks + 1, last);
                break;
            }
            AnnotatorAction::Click(click) => {
                session.apply_click(click)?;
                ious.push(session.iou().expect("ground truth present"));
            }
        }
    }
    Ok(ious)
}

/// Runs `trials` passes over `items`, each with freshly perturbed boxes, and
/// reports per click count the mean over trials of the per-trial mean IoU and
/// its standard error. Items that fail are logged and skipped.
pub fn evaluate_curve(
    items: &[DatasetItem],
    cfg: &SessionConfig,
    max_clicks: usize,
    trials: usize,
    seed: u64,
) -> Result<Curve> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    if items.is_empty() {
        return Err(Error::InvalidConfig("dataset is empty".into()));
    }
    cfg.validate()?;
    let tasks: Vec<(usize, usize)> = (0..trials).flat_map(|t| (0..items.len()).map(move |k| (t, k))).collect();
    let results: Vec<Result<Vec<f64>>> = tasks
        .par_iter()
        .map(|&(t, k)| {
            let item = &items[k];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((t as u64) << 32) | k as u64);
            let (h, w) = (item.image.height(), item.image.width());
            let bbox = perturb_bbox(item.bbox, h, w, BBOX_NOISE, &mut rng);
            run_item(item, bbox, cfg, max_clicks)
        })
        .collect();

    let mut failures = Vec::new();
    let mut trial_means = vec![Vec::with_capacity(trials); max_clicks + 1];
    for t in 0..trials {
        let mut sums = vec![0.0; max_clicks + 1];
        let mut ok = 0usize;
        for (k, item) in items.iter().enumerate() {
            match &results[t * items.len() + k] {
                Ok(ious) => {
                    ok += 1;
                    for (s, v) in sums.iter_mut().zip(ious) {
                        *s += v;
                    }
                }
                Err(e) => {
                    tracing::warn!(trial = t, item = %item.name, error = %e, "item skipped");
                    failures.push((t, item.name.clone(), e.to_string()));
                }
            }
        }
        if ok == 0 {
            return Err(Error::InvalidConfig(format!("every item failed in trial {t}")));
        }
        for (c, s) in sums.into_iter().enumerate() {
            trial_means[c].push(s / ok as f64);
        }
    }
    let points = trial_means
        .into_iter()
        .enumerate()
        .map(|(clicks, means)| {
            let t = means.len() as f64;
            let mean = means.iter().sum::<f64>() / t;
            let stderr = if means.len() > 1 {
                let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (t - 1.0);
                (var / t).sqrt()
            } else {
                0.0
            };
            CurvePoint {
                clicks,
                mean_iou: mean,
                stderr,
                trials,
            }
        })
        .collect();
    Ok(Curve { points, failures })
}
