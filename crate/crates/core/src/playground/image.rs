use std::path::Path;

use image::{GrayImage, ImageFormat, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest accepted image side.
pub const MIN_SIDE: usize = 8;

/// 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    pixels: Vec<[u8; 3]>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::Image(format!(
                "image must be at least {MIN_SIDE}x{MIN_SIDE}, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::DimensionMismatch {
                what: "pixel count",
                expected: height * width,
                got: pixels.len(),
            });
        }
        Ok(ImageTensor {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, color: [u8; 3]) -> Result<Self> {
        ImageTensor::new(height, width, vec![color; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        self.pixels[row * self.width + col] = rgb;
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_rgb8();
        ImageTensor::from_rgb(&img)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        ImageTensor::decode(&std::fs::read(path)?)
    }

    fn from_rgb(img: &RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        ImageTensor::new(h as usize, w as usize, img.pixels().map(|p| p.0).collect())
    }

    pub fn to_rgb(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Rgb(self.get(y as usize, x as usize))
        })
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_rgb().write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    /// Area-average downsampling to `height × width`.
    pub fn resized(&self, height: usize, width: usize) -> Result<Self> {
        let mut pixels = Vec::with_capacity(height * width);
        for oy in 0..height {
            let (y0, y1) = source_span(oy, height, self.height);
            for ox in 0..width {
                let (x0, x1) = source_span(ox, width, self.width);
                let mut acc = [0u32; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = self.get(y, x);
                        for c in 0..3 {
                            acc[c] += p[c] as u32;
                        }
                    }
                }
                let count = ((y1 - y0) * (x1 - x0)) as u32;
                pixels.push(acc.map(|a| ((a + count / 2) / count) as u8));
            }
        }
        ImageTensor::new(height, width, pixels)
    }
}

fn source_span(o: usize, out_len: usize, in_len: usize) -> (usize, usize) {
    let start = o * in_len / out_len;
    let end = ((o + 1) * in_len / out_len).max(start + 1);
    (start, end)
}

/// Dimensions after shrinking so that neither side exceeds `max_side`.
pub fn fit_within(height: usize, width: usize, max_side: usize) -> (usize, usize) {
    let longest = height.max(width);
    if longest <= max_side {
        return (height, width);
    }
    let scale = max_side as f64 / longest as f64;
    let fit = |s: usize| ((s as f64 * scale).round() as usize).max(1);
    (fit(height), fit(width))
}

/// Binary H×W mask.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                what: "mask cells",
                expected: height * width,
                got: data.len(),
            });
        }
        Ok(Mask {
            height,
            width,
            data,
        })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.data[row * self.width + col] = on;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Foreground iff the stored channel value is at least 128.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes)?.to_luma8();
        let (w, h) = img.dimensions();
        Mask::new(h as usize, w as usize, img.pixels().map(|p| p.0[0] >= 128).collect())
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Mask::decode(&std::fs::read(path)?)
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let img = GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([if self.get(y as usize, x as usize) { 255 } else { 0 }])
        });
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    /// Nearest-neighbour resampling.
    pub fn resized(&self, height: usize, width: usize) -> Mask {
        let mut data = Vec::with_capacity(height * width);
        for oy in 0..height {
            let y = ((2 * oy + 1) * self.height / (2 * height)).min(self.height - 1);
            for ox in 0..width {
                let x = ((2 * ox + 1) * self.width / (2 * width)).min(self.width - 1);
                data.push(self.get(y, x));
            }
        }
        Mask {
            height,
            width,
            data,
        }
    }

    /// Per-row run lengths, each row starting with a (possibly empty) background run.
    pub fn to_rle(&self) -> Vec<Vec<u32>> {
        (0..self.height)
            .map(|r| {
                let row = &self.data[r * self.width..(r + 1) * self.width];
                let mut runs = Vec::new();
                let mut current = false;
                let mut len = 0u32;
                for &cell in row {
                    if cell == current {
                        len += 1;
                    } else {
                        runs.push(len);
                        current = cell;
                        len = 1;
                    }
                }
                runs.push(len);
                runs
            })
            .collect()
    }

    pub fn from_rle(height: usize, width: usize, rows: &[Vec<u32>]) -> Result<Self> {
        if rows.len() != height {
            return Err(Error::DimensionMismatch {
                what: "RLE rows",
                expected: height,
                got: rows.len(),
            });
        }
        let mut data = Vec::with_capacity(height * width);
        for runs in rows {
            let mut on = false;
            let start = data.len();
            for &len in runs {
                data.extend(std::iter::repeat_n(on, len as usize));
                on = !on;
            }
            if data.len() - start != width {
                return Err(Error::DimensionMismatch {
                    what: "RLE row length",
                    expected: width,
                    got: data.len() - start,
                });
            }
        }
        Mask::new(height, width, data)
    }
}

/// Axis-aligned rectangle with half-open bounds `[top, bottom) × [left, right)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl BBox {
    pub fn new(top: usize, left: usize, bottom: usize, right: usize) -> Result<Self> {
        if top >= bottom || left >= right {
            return Err(Error::InvalidBBox(format!(
                "empty box: rows {top}..{bottom}, cols {left}..{right}"
            )));
        }
        Ok(BBox {
            top,
            left,
            bottom,
            right,
        })
    }

    pub fn check_within(&self, height: usize, width: usize) -> Result<()> {
        if self.top >= self.bottom || self.left >= self.right {
            return Err(Error::InvalidBBox("box is empty".into()));
        }
        if self.bottom > height || self.right > width {
            return Err(Error::InvalidBBox(format!(
                "box rows {}..{}, cols {}..{} exceed a {height}x{width} image",
                self.top, self.bottom, self.left, self.right
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.bottom).contains(&row) && (self.left..self.right).contains(&col)
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top
    }

    pub fn width(&self) -> usize {
        self.right - self.left
    }

    /// Tight box around the foreground of `mask`, if any.
    pub fn around(mask: &Mask) -> Option<BBox> {
        let mut b: Option<BBox> = None;
        for r in 0..mask.height() {
            for c in 0..mask.width() {
                if mask.get(r, c) {
                    let e = b.get_or_insert(BBox {
                        top: r,
                        left: c,
                        bottom: r + 1,
                        right: c + 1,
                    });
                    e.top = e.top.min(r);
                    e.left = e.left.min(c);
                    e.bottom = e.bottom.max(r + 1);
                    e.right = e.right.max(c + 1);
                }
            }
        }
        b
    }

    /// The box mapped from a `from_h × from_w` image onto a `to_h × to_w` one.
    pub fn rescaled(&self, from_h: usize, from_w: usize, to_h: usize, to_w: usize) -> BBox {
        let lo = |v: usize, from: usize, to: usize| v * to / from;
        let hi = |v: usize, from: usize, to: usize| (v * to).div_ceil(from);
        let top = lo(self.top, from_h, to_h).min(to_h - 1);
        let left = lo(self.left, from_w, to_w).min(to_w - 1);
        BBox {
            top,
            left,
            bottom: hi(self.bottom, from_h, to_h).clamp(top + 1, to_h),
            right: hi(self.right, from_w, to_w).clamp(left + 1, to_w),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rle_round_trip_and_leading_background() {
        let mask = Mask::new(2, 4, vec![true, true, false, true, false, false, false, false]).unwrap();
        let rle = mask.to_rle();
        assert_eq!(rle, vec![vec![0, 2, 1, 1], vec![4]]);
        assert_eq!(Mask::from_rle(2, 4, &rle).unwrap(), mask);
        assert!(Mask::from_rle(2, 4, &[vec![3], vec![4]]).is_err());
    }

    #[test]
    fn png_round_trip() {
        let mut img = ImageTensor::filled(8, 9, [10, 20, 30]).unwrap();
        img.set(3, 4, [255, 0, 7]);
        let back = ImageTensor::decode(&img.encode_png().unwrap()).unwrap();
        assert_eq!(back, img);
        let mut mask = Mask::empty(8, 9);
        mask.set(2, 2, true);
        assert_eq!(Mask::decode(&mask.encode_png().unwrap()).unwrap(), mask);
    }

    #[test]
    fn tiny_images_rejected() {
        assert!(ImageTensor::filled(7, 20, [0; 3]).is_err());
    }

    #[test]
    fn area_average_halves() {
        let mut img = ImageTensor::filled(8, 8, [0; 3]).unwrap();
        img.set(0, 0, [200, 100, 40]);
        let small = img.resized(4, 4);
        assert!(small.is_err());
        let mut big = ImageTensor::filled(16, 16, [0; 3]).unwrap();
        big.set(0, 0, [200, 100, 40]);
        let half = big.resized(8, 8).unwrap();
        assert_eq!(half.get(0, 0), [50, 25, 10]);
        assert_eq!(half.get(1, 1), [0, 0, 0]);
    }

    #[test]
    fn fit_within_keeps_aspect() {
        assert_eq!(fit_within(100, 50, 128), (100, 50));
        assert_eq!(fit_within(256, 128, 128), (128, 64));
    }

    #[test]
    fn bbox_validation_and_rescale() {
        assert!(BBox::new(3, 3, 3, 5).is_err());
        let b = BBox::new(10, 20, 30, 40).unwrap();
        assert!(b.check_within(30, 40).is_ok());
        assert!(b.check_within(29, 40).is_err());
        assert_eq!(b.rescaled(40, 80, 20, 40), BBox::new(5, 10, 15, 20).unwrap());
    }
}
