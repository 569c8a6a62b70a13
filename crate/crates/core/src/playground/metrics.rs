use crate::error::{Error, Result};

use super::image::Mask;

/// Intersection over union; 1 when both masks are empty.
pub fn iou(mask: &Mask, gt: &Mask) -> Result<f64> {
    if (mask.height(), mask.width()) != (gt.height(), gt.width()) {
        return Err(Error::ShapeMismatch(format!(
            "mask {}x{} vs ground truth {}x{}",
            mask.height(),
            mask.width(),
            gt.height(),
            gt.width()
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in mask.data().iter().zip(gt.data()) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
