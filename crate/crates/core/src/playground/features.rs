use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::image::ImageTensor;

/// Feature dimension: three color channels and two coordinates.
pub const FEATURE_DIM: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    /// Multiplier applied to CIELAB coordinates.
    pub color_scale: f64,
    /// Multiplier applied to `(row/H, col/W)`.
    pub coord_scale: f64,
    /// Half-width of the box filter applied to the color channels.
    pub smoothing_radius: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            color_scale: 0.08,
            coord_scale: 4.0,
            smoothing_radius: 1,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.color_scale > 0.0 && self.color_scale.is_finite()) {
            return Err(Error::InvalidConfig("color_scale must be positive".into()));
        }
        if !(self.coord_scale >= 0.0 && self.coord_scale.is_finite()) {
            return Err(Error::InvalidConfig("coord_scale must be non-negative".into()));
        }
        Ok(())
    }
}

/// sRGB (D65) to CIELAB.
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| {
        let c = c as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    });
    let x = 0.4124564 * lin[0] + 0.3575761 * lin[1] + 0.1804375 * lin[2];
    let y = 0.2126729 * lin[0] + 0.7151522 * lin[1] + 0.0721750 * lin[2];
    let z = 0.0193339 * lin[0] + 0.1191920 * lin[1] + 0.9503041 * lin[2];
    let f = |t: f64| {
        const EPS: f64 = 216.0 / 24389.0;
        const KAPPA: f64 = 24389.0 / 27.0;
        if t > EPS {
            t.cbrt()
        } else {
            (KAPPA * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.95047), f(y), f(z / 1.08883));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Per-pixel features, one row per pixel in row-major order.
pub fn extract_features(image: &ImageTensor, cfg: &FeatureConfig) -> Result<Matrix> {
    cfg.validate()?;
    let (h, w) = (image.height(), image.width());
    let lab: Vec<[f64; 3]> = image.pixels().iter().map(|&p| srgb_to_lab(p)).collect();
    let smoothed = box_blur(&lab, h, w, cfg.smoothing_radius);
    let mut out = Matrix::zeros(h * w, FEATURE_DIM);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            let row = out.row_mut(i);
            for k in 0..3 {
                row[k] = smoothed[i][k] * cfg.color_scale;
            }
            row[3] = r as f64 / h as f64 * cfg.coord_scale;
            row[4] = c as f64 / w as f64 * cfg.coord_scale;
        }
    }
    Ok(out)
}

/// Mean over the clipped `(2r+1)²` window, via a summed-area table.
fn box_blur(src: &[[f64; 3]], h: usize, w: usize, r: usize) -> Vec<[f64; 3]> {
    if r == 0 {
        return src.to_vec();
    }
    let stride = w + 1;
    let mut sat = vec![[0.0f64; 3]; (h + 1) * stride];
    for y in 0..h {
        let mut row = [0.0; 3];
        for x in 0..w {
            for k in 0..3 {
                row[k] += src[y * w + x][k];
                sat[(y + 1) * stride + x + 1][k] = sat[y * stride + x + 1][k] + row[k];
            }
        }
    }
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            let mut px = [0.0; 3];
            for k in 0..3 {
                let s = sat[y1 * stride + x1][k] - sat[y0 * stride + x1][k] - sat[y1 * stride + x0][k]
                    + sat[y0 * stride + x0][k];
                px[k] = s / count;
            }
            out.push(px);
        }
    }
    out
}
