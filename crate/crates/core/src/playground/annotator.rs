//! Simulated annotator: clicks the deepest point of the largest error region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::image::Mask;

pub const DEFAULT_CLICK_RADIUS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }
}

fn default_radius() -> usize {
    DEFAULT_CLICK_RADIUS
}

/// A click fixing every pixel within `radius` of `(row, col)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClickEvent {
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
    #[serde(default = "default_radius")]
    pub radius: usize,
}

impl ClickEvent {
    pub fn new(row: usize, col: usize, polarity: Polarity) -> Self {
        ClickEvent {
            row,
            col,
            polarity,
            radius: DEFAULT_CLICK_RADIUS,
        }
    }

    pub fn check_within(&self, height: usize, width: usize) -> Result<()> {
        if self.row >= height || self.col >= width {
            return Err(Error::OutOfBounds {
                row: self.row,
                col: self.col,
                height,
                width,
            });
        }
        Ok(())
    }

    /// Pixels of the disk, clipped to the image, in row-major order.
    pub fn disk(&self, height: usize, width: usize) -> Vec<(usize, usize)> {
        let r = self.radius as isize;
        let mut out = Vec::new();
        for dr in -r..=r {
            for dc in -r..=r {
                if dr * dr + dc * dc > r * r {
                    continue;
                }
                let (y, x) = (self.row as isize + dr, self.col as isize + dc);
                if y >= 0 && x >= 0 && (y as usize) < height && (x as usize) < width {
                    out.push((y as usize, x as usize));
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AnnotatorAction {
    Click(ClickEvent),
    /// The prediction already matches the ground truth.
    Done,
}

/// Picks the error region (false negatives or false positives) with the larger
/// total area, preferring false negatives on ties, then its largest 4-connected
/// component (earliest in row-major order on ties), and clicks the component
/// pixel farthest from the component boundary (image borders count as
/// boundary; earliest in row-major order on ties).
pub fn simulate_annotator(mask: &Mask, gt: &Mask, radius: usize) -> Result<AnnotatorAction> {
    let (h, w) = (gt.height(), gt.width());
    if (mask.height(), mask.width()) != (h, w) {
        return Err(Error::ShapeMismatch("mask and ground truth differ in size".into()));
    }
    let fneg: Vec<bool> = mask.data().iter().zip(gt.data()).map(|(&m, &g)| g && !m).collect();
    let fpos: Vec<bool> = mask.data().iter().zip(gt.data()).map(|(&m, &g)| m && !g).collect();
    let (nf, np) = (count(&fneg), count(&fpos));
    if nf == 0 && np == 0 {
        return Ok(AnnotatorAction::Done);
    }
    let (region, polarity) = if nf >= np {
        (fneg, Polarity::Positive)
    } else {
        (fpos, Polarity::Negative)
    };
    let component = largest_component(&region, h, w);
    let dist = squared_distance_transform(&component, h, w);
    let mut best = 0;
    for (i, &dv) in dist.iter().enumerate() {
        if component[i] && dv > dist[best] {
            best = i;
        }
    }
    if !component[best] {
        best = component.iter().position(|&b| b).expect("component is non-empty");
    }
    Ok(AnnotatorAction::Click(ClickEvent {
        row: best / w,
        col: best % w,
        polarity,
        radius,
    }))
}

fn count(xs: &[bool]) -> usize {
    xs.iter().filter(|&&b| b).count()
}

/// Largest 4-connected component of `region`, as a membership mask.
pub(crate) fn largest_component(region: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut label = vec![usize::MAX; h * w];
    let mut best: Option<(usize, usize)> = None;
    let mut stack = Vec::new();
    let mut next = 0;
    for start in 0..h * w {
        if !region[start] || label[start] != usize::MAX {
            continue;
        }
        let id = next;
        next += 1;
        label[start] = id;
        stack.push(start);
        let mut size = 0;
        while let Some(p) = stack.pop() {
            size += 1;
            let (r, c) = (p / w, p % w);
            let mut visit = |q: usize| {
                if region[q] && label[q] == usize::MAX {
                    label[q] = id;
                    stack.push(q);
                }
            };
            if r > 0 {
                visit(p - w);
            }
            if r + 1 < h {
                visit(p + w);
            }
            if c > 0 {
                visit(p - 1);
            }
            if c + 1 < w {
                visit(p + 1);
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((id, size));
        }
    }
    let id = best.map(|(id, _)| id);
    label.iter().map(|&l| Some(l) == id).collect()
}

/// Squared Euclidean distance from each pixel to the nearest pixel outside
/// `inside`, treating everything beyond the image as outside.
pub(crate) fn squared_distance_transform(inside: &[bool], h: usize, w: usize) -> Vec<f64> {
    const INF: f64 = 1e20;
    let (ph, pw) = (h + 2, w + 2);
    let mut grid = vec![0.0; ph * pw];
    for r in 0..h {
        for c in 0..w {
            if inside[r * w + c] {
                grid[(r + 1) * pw + c + 1] = INF;
            }
        }
    }
    let mut line = Vec::new();
    let mut out = Vec::new();
    for c in 0..pw {
        line.clear();
        line.extend((0..ph).map(|r| grid[r * pw + c]));
        edt_1d(&line, &mut out);
        for r in 0..ph {
            grid[r * pw + c] = out[r];
        }
    }
    for r in 0..ph {
        line.clear();
        line.extend_from_slice(&grid[r * pw..(r + 1) * pw]);
        edt_1d(&line, &mut out);
        grid[r * pw..(r + 1) * pw].copy_from_slice(&out);
    }
    let mut result = Vec::with_capacity(h * w);
    for r in 0..h {
        result.extend_from_slice(&grid[(r + 1) * pw + 1..(r + 1) * pw + 1 + w]);
    }
    result
}

/// Lower envelope of parabolas (Felzenszwalb and Huttenlocher).
fn edt_1d(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, 0.0);
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let inter = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * q as f64 - 2.0 * p as f64)
    };
    for q in 1..n {
        let mut s = inter(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = inter(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        out[q] = d * d + f[v[k]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_gt(h: usize, w: usize, top: usize, left: usize, side: usize) -> Mask {
        let mut m = Mask::empty(h, w);
        for r in top..top + side {
            for c in left..left + side {
                m.set(r, c, true);
            }
        }
        m
    }

    #[test]
    fn perfect_mask_is_done() {
        let gt = square_gt(16, 16, 3, 3, 5);
        assert_eq!(simulate_annotator(&gt, &gt, 8).unwrap(), AnnotatorAction::Done);
    }

    #[test]
    fn clicks_square_center() {
        let gt = square_gt(20, 20, 4, 6, 7);
        let AnnotatorAction::Click(c) = simulate_annotator(&Mask::empty(20, 20), &gt, 8).unwrap() else {
            panic!("expected a click");
        };
        assert_eq!((c.row, c.col, c.polarity), (7, 9, Polarity::Positive));
    }

    #[test]
    fn false_positive_gets_negative_click() {
        let gt = Mask::empty(12, 12);
        let pred = square_gt(12, 12, 2, 2, 3);
        let AnnotatorAction::Click(c) = simulate_annotator(&pred, &gt, 8).unwrap() else {
            panic!("expected a click");
        };
        assert_eq!((c.row, c.col, c.polarity), (3, 3, Polarity::Negative));
    }

    #[test]
    fn brute_force_distance_transform() {
        let (h, w) = (7, 9);
        let inside: Vec<bool> = (0..h * w).map(|i| (i * 7 + i / 3) % 5 != 0).collect();
        let fast = squared_distance_transform(&inside, h, w);
        for r in 0..h {
            for c in 0..w {
                let mut best = f64::INFINITY;
                for rr in -1..=h as isize {
                    for cc in -1..=w as isize {
                        let outside = rr < 0
                            || cc < 0
                            || rr >= h as isize
                            || cc >= w as isize
                            || !inside[rr as usize * w + cc as usize];
                        if outside {
                            let d = (rr - r as isize).pow(2) + (cc - c as isize).pow(2);
                            best = best.min(d as f64);
                        }
                    }
                }
                let expect = if inside[r * w + c] { best } else { 0.0 };
                assert_eq!(fast[r * w + c], expect, "at ({r}, {c})");
            }
        }
    }

    #[test]
    fn disk_is_clipped() {
        let click = ClickEvent::new(0, 0, Polarity::Positive);
        let disk = click.disk(20, 20);
        assert!(disk.iter().all(|&(r, c)| r * r + c * c <= 64));
        assert_eq!(disk.len(), (0..=8usize).map(|r| (64 - r * r).isqrt() + 1).sum::<usize>());
    }
}
