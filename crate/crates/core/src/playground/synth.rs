//! Synthetic segmentation scenes: a few flat shapes on a textured background,
//! the last-drawn shape being the target object.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::annotator::largest_component;
use super::dataset::{DatasetItem, Manifest, ManifestEntry};
use super::image::{BBox, ImageTensor, Mask};

pub const MIN_SYNTH_SIZE: usize = 32;

#[derive(Clone, Copy, Debug)]
enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
    Rect { top: f64, left: f64, bottom: f64, right: f64 },
    Triangle([(f64, f64); 3]),
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, size: usize) -> Shape {
        let s = size as f64;
        let (min, max) = (s * 0.15, s * 0.35);
        let cy = rng.random_range(s * 0.25..s * 0.75);
        let cx = rng.random_range(s * 0.25..s * 0.75);
        let ry = rng.random_range(min..max);
        let rx = rng.random_range(min..max);
        match rng.random_range(0..3) {
            0 => Shape::Ellipse { cy, cx, ry, rx },
            1 => Shape::Rect {
                top: cy - ry,
                left: cx - rx,
                bottom: cy + ry,
                right: cx + rx,
            },
            _ => {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                let step = std::f64::consts::TAU / 3.0;
                let v = |k: f64| (cy + ry * 1.3 * (a + k * step).sin(), cx + rx * 1.3 * (a + k * step).cos());
                Shape::Triangle([v(0.0), v(1.0), v(2.0)])
            }
        }
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Ellipse { cy, cx, ry, rx } => ((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2) <= 1.0,
            Shape::Rect {
                top,
                left,
                bottom,
                right,
            } => y >= top && y < bottom && x >= left && x < right,
            Shape::Triangle(p) => {
                let side = |a: (f64, f64), b: (f64, f64)| (b.1 - a.1) * (y - a.0) - (b.0 - a.0) * (x - a.1);
                let (d0, d1, d2) = (side(p[0], p[1]), side(p[1], p[2]), side(p[2], p[0]));
                (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
            }
        }
    }
}

fn color_distance(a: [u8; 3], b: [u8; 3]) -> f64 {
    a.iter()
        .zip(&b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn random_color(rng: &mut ChaCha8Rng, avoid: &[[u8; 3]], min_distance: f64) -> [u8; 3] {
    loop {
        let c = [rng.random(), rng.random(), rng.random()];
        if avoid.iter().all(|&a| color_distance(a, c) >= min_distance) {
            return c;
        }
    }
}

fn jitter(c: [u8; 3], amount: i32, rng: &mut ChaCha8Rng) -> [u8; 3] {
    c.map(|v| (v as i32 + rng.random_range(-amount..=amount)).clamp(0, 255) as u8)
}

/// One scene of `size × size` pixels.
pub fn generate_scene(size: usize, rng: &mut ChaCha8Rng) -> Result<(ImageTensor, Mask, BBox)> {
    if size < MIN_SYNTH_SIZE {
        return Err(Error::InvalidConfig(format!("synthetic images need size >= {MIN_SYNTH_SIZE}")));
    }
    loop {
        let background = random_color(rng, &[], 0.0);
        let second = random_color(rng, &[background], 40.0);
        let period = rng.random_range(6.0..16.0);
        let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let mut img = ImageTensor::filled(size, size, background)?;
        for y in 0..size {
            for x in 0..size {
                let t = (y as f64 * angle.sin() + x as f64 * angle.cos()) / period;
                let mix = 0.5 + 0.5 * (t * std::f64::consts::TAU).sin();
                let base: [u8; 3] = std::array::from_fn(|k| {
                    (background[k] as f64 * (1.0 - 0.35 * mix) + second[k] as f64 * 0.35 * mix).round() as u8
                });
                img.set(y, x, jitter(base, 12, rng));
            }
        }
        let count = rng.random_range(2..=4);
        let mut used = vec![background];
        let mut target = Mask::empty(size, size);
        for k in 0..count {
            let shape = Shape::random(rng, size);
            let color = random_color(rng, &used, 90.0);
            used.push(color);
            let last = k + 1 == count;
            for y in 0..size {
                for x in 0..size {
                    if shape.contains(y as f64 + 0.5, x as f64 + 0.5) {
                        img.set(y, x, jitter(color, 6, rng));
                        if last {
                            target.set(y, x, true);
                        }
                    }
                }
            }
        }
        let area = target.count();
        let connected = largest_component(target.data(), size, size).iter().filter(|&&b| b).count() == area;
        if area * 50 < size * size || !connected {
            continue;
        }
        let bbox = BBox::around(&target).expect("target is non-empty");
        return Ok((img, target, bbox));
    }
}

/// `count` scenes from one seed.
pub fn generate_dataset(count: usize, size: usize, seed: u64) -> Result<Vec<DatasetItem>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let (image, gt, bbox) = generate_scene(size, &mut rng)?;
            Ok(DatasetItem {
                name: format!("synth_{k:04}"),
                image,
                gt,
                bbox,
            })
        })
        .collect()
}

/// Writes images, masks and `manifest.json` into `out_dir`; returns the manifest path.
pub fn write_dataset(out_dir: impl AsRef<Path>, count: usize, size: usize, seed: u64) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let items = generate_dataset(count, size, seed)?;
    let mut entries = Vec::with_capacity(items.len());
    for item in &items {
        let image = PathBuf::from(format!("{}.png", item.name));
        let mask = PathBuf::from(format!("{}_mask.png", item.name));
        item.image.save_png(out_dir.join(&image))?;
        item.gt.save_png(out_dir.join(&mask))?;
        entries.push(ManifestEntry {
            name: item.name.clone(),
            image,
            mask,
            bbox: item.bbox,
        });
    }
    let path = out_dir.join("manifest.json");
    Manifest {
        items: entries,
        seed: Some(seed),
        size: Some(size),
    }
    .write(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_are_connected() {
        for item in generate_dataset(12, 48, 7).unwrap() {
            let comp = largest_component(item.gt.data(), 48, 48);
            assert_eq!(comp.iter().filter(|&&b| b).count(), item.gt.count(), "{}", item.name);
            assert_eq!(BBox::around(&item.gt), Some(item.bbox));
        }
    }

    #[test]
    fn same_seed_same_scenes() {
        assert_eq!(generate_dataset(2, 32, 3).unwrap(), generate_dataset(2, 32, 3).unwrap());
        assert_ne!(generate_dataset(1, 32, 3).unwrap(), generate_dataset(1, 32, 4).unwrap());
    }

    #[test]
    fn rejects_small_size() {
        assert!(generate_dataset(1, 31, 0).is_err());
    }
}
