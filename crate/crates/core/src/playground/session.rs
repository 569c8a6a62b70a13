//! Interactive segmentation session: one mixture unit per pixel, scalar logit values.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adaptation::{adapt, AdaptationConfig, Anchor, FixedValues, UnitFlag};
use crate::attention::{mixture_readout, ReadoutWeights};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{MixtureModel, PriorSpec, QueryBatch};
use crate::position::GridShape;

use super::annotator::{ClickEvent, DEFAULT_CLICK_RADIUS};
use super::features::{extract_features, FeatureConfig, FEATURE_DIM};
use super::image::{fit_within, BBox, ImageTensor, Mask};
use super::metrics::iou;

/// Sessions whose readout support exceeds this many pairs recompute it per click.
const MAX_CACHED_WEIGHTS: usize = 1 << 22;

/// Prior over pixels used by a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SessionPrior {
    Uniform,
    /// `π_ij ∝ exp(-‖p_i - p_j‖ / scale)` over the window of Chebyshev radius
    /// `radius` (all pixels when absent).
    GridDistance { scale: f64, radius: Option<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub features: FeatureConfig,
    pub adaptation: AdaptationConfig,
    /// Key precision; `1/√d` when absent.
    pub alpha: Option<f64>,
    /// Value precision of every pixel.
    pub beta: f64,
    /// Initial logit magnitude inside (positive) and outside (negative) the box.
    pub bbox_logit: f64,
    /// Logit magnitude fixed by a click.
    pub fixed_logit: f64,
    pub click_radius: usize,
    pub prior: SessionPrior,
    /// Offset added to every query feature, simulating a shift between the
    /// features keys were built from and the features observed at inference.
    pub query_shift: Option<Vec<f64>>,
    /// Larger images are downsampled to fit.
    pub max_side: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            features: FeatureConfig::default(),
            adaptation: AdaptationConfig {
                theta_mu: 0.1,
                value_iters: 5,
                anchor: Anchor::Initial,
                ..AdaptationConfig::default()
            },
            alpha: None,
            beta: 0.3,
            bbox_logit: 1.0,
            fixed_logit: 4.0,
            click_radius: DEFAULT_CLICK_RADIUS,
            prior: SessionPrior::GridDistance {
                scale: 8.0,
                radius: Some(10),
            },
            query_shift: None,
            max_side: 128,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.adaptation.validate()?;
        if self.adaptation.prior_iters > 0 {
            return Err(Error::InvalidConfig(
                "prior_iters is not supported in segmentation sessions".into(),
            ));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidConfig(format!("alpha must be positive, got {a}")));
            }
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be non-negative, got {}", self.beta)));
        }
        for (name, v) in [("bbox_logit", self.bbox_logit), ("fixed_logit", self.fixed_logit)] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        if let SessionPrior::GridDistance { scale, .. } = self.prior {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(Error::InvalidConfig(format!("prior scale must be positive, got {scale}")));
            }
        }
        if let Some(shift) = &self.query_shift {
            if shift.len() != FEATURE_DIM || shift.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "query_shift must hold {FEATURE_DIM} finite numbers"
                )));
            }
        }
        if self.max_side < 8 {
            return Err(Error::InvalidConfig("max_side must be at least 8".into()));
        }
        Ok(())
    }

    pub fn key_precision(&self) -> f64 {
        self.alpha.unwrap_or(1.0 / (FEATURE_DIM as f64).sqrt())
    }
}

/// Inputs from which a session is rebuilt deterministically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub image: ImageTensor,
    pub gt: Option<Mask>,
    pub bbox: Option<BBox>,
    pub config: SessionConfig,
    pub clicks: Vec<ClickEvent>,
    pub original_height: usize,
    pub original_width: usize,
}

#[derive(Clone, Debug)]
pub struct SegmentationSession {
    image: ImageTensor,
    gt: Option<Mask>,
    bbox: Option<BBox>,
    config: SessionConfig,
    original: (usize, usize),
    queries: QueryBatch,
    base: MixtureModel,
    model: MixtureModel,
    clicks: Vec<ClickEvent>,
    fixed: BTreeMap<usize, f64>,
    readout: Vec<f64>,
    weights: Option<Arc<ReadoutWeights>>,
    mask: Mask,
    flags: Vec<UnitFlag>,
    iou_history: Vec<f64>,
}

/// Starts a session. `bbox` is in the coordinates of `image`; images larger
/// than `cfg.max_side` are downsampled together with `gt` and `bbox`.
pub fn init_session(
    image: &ImageTensor,
    gt: Option<&Mask>,
    bbox: Option<BBox>,
    cfg: &SessionConfig,
) -> Result<SegmentationSession> {
    cfg.validate()?;
    let (h0, w0) = (image.height(), image.width());
    if let Some(g) = gt {
        if (g.height(), g.width()) != (h0, w0) {
            return Err(Error::ShapeMismatch(format!(
                "ground truth {}x{} does not match image {h0}x{w0}",
                g.height(),
                g.width()
            )));
        }
    }
    if let Some(b) = bbox {
        b.check_within(h0, w0)?;
    }
    let (h, w) = fit_within(h0, w0, cfg.max_side);
    let (image, gt, bbox) = if (h, w) == (h0, w0) {
        (image.clone(), gt.cloned(), bbox)
    } else {
        (
            image.resized(h, w)?,
            gt.map(|g| g.resized(h, w)),
            bbox.map(|b| b.rescaled(h0, w0, h, w)),
        )
    };
    build(image, gt, bbox, cfg.clone(), (h0, w0))
}

fn build(
    image: ImageTensor,
    gt: Option<Mask>,
    bbox: Option<BBox>,
    config: SessionConfig,
    original: (usize, usize),
) -> Result<SegmentationSession> {
    let (h, w) = (image.height(), image.width());
    let n = h * w;
    let features = extract_features(&image, &config.features)?;
    let mut queries = features.clone();
    if let Some(shift) = &config.query_shift {
        for i in 0..n {
            for (q, s) in queries.row_mut(i).iter_mut().zip(shift) {
                *q += s;
            }
        }
    }
    let queries = QueryBatch::new(queries);
    let mut mu0 = Matrix::zeros(n, 1);
    if let Some(b) = bbox {
        for r in 0..h {
            for c in 0..w {
                let sign = if b.contains(r, c) { 1.0 } else { -1.0 };
                mu0.set(r * w + c, 0, sign * config.bbox_logit);
            }
        }
    }
    let grid = GridShape::new(h, w)?;
    let prior = match config.prior {
        SessionPrior::Uniform => PriorSpec::Uniform,
        SessionPrior::GridDistance {
            scale,
            radius: Some(r),
        } => PriorSpec::local_grid_distance(grid, scale, r)?,
        SessionPrior::GridDistance { scale, radius: None } => PriorSpec::grid_distance(grid, scale)?,
    };
    let model = MixtureModel::new(
        features,
        vec![config.key_precision(); n],
        mu0,
        vec![config.beta; n],
        prior,
    )?;
    let mut flags = Vec::new();
    let key_side = &config.adaptation;
    let base = if key_side.key_iters > 0 || key_side.alpha_iters > 0 {
        let cfg = AdaptationConfig {
            value_iters: 0,
            beta_iters: 0,
            ..key_side.clone()
        };
        let adapted = adapt(&model, &queries, None, &cfg)?;
        flags = adapted.flags;
        adapted.model
    } else {
        model
    };
    let mut session = SegmentationSession {
        mask: Mask::empty(h, w),
        image,
        gt,
        bbox,
        config,
        original,
        queries,
        model: base.clone(),
        base,
        clicks: Vec::new(),
        fixed: BTreeMap::new(),
        readout: Vec::new(),
        weights: None,
        flags,
        iou_history: Vec::new(),
    };
    session.weights = ReadoutWeights::build(&session.queries, &session.base, MAX_CACHED_WEIGHTS)?.map(Arc::new);
    session.recompute()?;
    Ok(session)
}

impl SegmentationSession {
    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    /// Size of the image the session was created from, before downsampling.
    pub fn original_size(&self) -> (usize, usize) {
        self.original
    }

    pub fn image(&self) -> &ImageTensor {
        &self.image
    }

    pub fn ground_truth(&self) -> Option<&Mask> {
        self.gt.as_ref()
    }

    pub fn bbox(&self) -> Option<BBox> {
        self.bbox
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn clicks(&self) -> &[ClickEvent] {
        &self.clicks
    }

    pub fn queries(&self) -> &QueryBatch {
        &self.queries
    }

    /// Model after key-side adaptation, before any click.
    pub fn initial_model(&self) -> &MixtureModel {
        &self.base
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    /// Per-pixel logits the mask is thresholded from.
    pub fn readout(&self) -> &[f64] {
        &self.readout
    }

    pub fn fixed_values(&self) -> &BTreeMap<usize, f64> {
        &self.fixed
    }

    pub fn flags(&self) -> &[UnitFlag] {
        &self.flags
    }

    /// IoU against the ground truth before any click and after each click.
    pub fn iou_history(&self) -> &[f64] {
        &self.iou_history
    }

    pub fn iou(&self) -> Option<f64> {
        self.iou_history.last().copied()
    }

    /// Foreground iff the pixel's readout logit is positive.
    pub fn predict_mask(&self) -> &Mask {
        &self.mask
    }

    /// Fixes the click disk to `±fixed_logit` (later clicks overwrite earlier
    /// ones), propagates, and recomputes the mask.
    pub fn apply_click(&mut self, click: ClickEvent) -> Result<()> {
        click.check_within(self.height(), self.width())?;
        self.fix_disk(&click);
        self.clicks.push(click);
        self.recompute()
    }

    /// Removes the last click and recomputes from the remaining ones.
    pub fn undo(&mut self) -> Result<()> {
        if self.clicks.pop().is_none() {
            return Err(Error::NothingToUndo);
        }
        self.iou_history.truncate(self.clicks.len());
        self.refix();
        self.recompute()
    }

    /// Replaces the configuration. With `replay` the clicks are re-run under
    /// the new configuration; otherwise the mask is kept until the next click.
    pub fn set_config(&mut self, config: SessionConfig, replay: bool) -> Result<()> {
        config.validate()?;
        let mut next = build(
            self.image.clone(),
            self.gt.clone(),
            self.bbox,
            config,
            self.original,
        )?;
        next.clicks = self.clicks.clone();
        next.refix();
        if replay {
            next.recompute_with_history()?;
        } else {
            next.readout = self.readout.clone();
            next.mask = self.mask.clone();
            next.model = self.model.clone();
            next.iou_history = self.iou_history.clone();
        }
        *self = next;
        Ok(())
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            image: self.image.clone(),
            gt: self.gt.clone(),
            bbox: self.bbox,
            config: self.config.clone(),
            clicks: self.clicks.clone(),
            original_height: self.original.0,
            original_width: self.original.1,
        }
    }

    pub fn restore(snapshot: &SessionSnapshot) -> Result<Self> {
        snapshot.config.validate()?;
        let mut session = build(
            snapshot.image.clone(),
            snapshot.gt.clone(),
            snapshot.bbox,
            snapshot.config.clone(),
            (snapshot.original_height, snapshot.original_width),
        )?;
        for &click in &snapshot.clicks {
            session.apply_click(click)?;
        }
        Ok(session)
    }

    fn fix_disk(&mut self, click: &ClickEvent) {
        let value = click.polarity.sign() * self.config.fixed_logit;
        let w = self.width();
        for (r, c) in click.disk(self.height(), w) {
            self.fixed.insert(r * w + c, value);
        }
    }

    fn refix(&mut self) {
        self.fixed.clear();
        for click in self.clicks.clone() {
            self.fix_disk(&click);
        }
    }

    /// Recomputes the state after every prefix of the click history, so the
    /// IoU history matches an interactive run.
    fn recompute_with_history(&mut self) -> Result<()> {
        let clicks = std::mem::take(&mut self.clicks);
        self.fixed.clear();
        self.iou_history.clear();
        self.recompute()?;
        for click in clicks {
            self.apply_click(click)?;
        }
        Ok(())
    }

    fn recompute(&mut self) -> Result<()> {
        let cfg = &self.config.adaptation;
        let propagate = cfg.value_iters > 0 || cfg.beta_iters > 0;
        self.model = if propagate && !self.fixed.is_empty() {
            let indices: Vec<usize> = self.fixed.keys().copied().collect();
            let values = Matrix::from_vec(indices.len(), 1, self.fixed.values().copied().collect())?;
            let fixed = FixedValues::new(indices, values)?;
            let cfg = AdaptationConfig {
                key_iters: 0,
                alpha_iters: 0,
                ..cfg.clone()
            };
            adapt(&self.base, &self.queries, Some(&fixed), &cfg)?.model
        } else {
            self.base.clone()
        };
        let readout = match &self.weights {
            Some(w) => w.apply(self.model.value_means()),
            None => mixture_readout(&self.queries, &self.model)?.into_matrix(),
        };
        self.readout = readout.into_vec();
        for (&i, &v) in &self.fixed {
            self.readout[i] = v;
        }
        let mask = self.readout.iter().map(|&v| v > 0.0).collect();
        self.mask = Mask::new(self.height(), self.width(), mask)?;
        if let Some(gt) = &self.gt {
            self.iou_history.push(iou(&self.mask, gt)?);
        }
        Ok(())
    }
}
