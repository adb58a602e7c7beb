//! Pixel-space face cropping and PadAug boundary augmentation.

mod padaug;
pub mod ppm;

pub use padaug::{apply_pad_plan, bar_thickness, padaug, plan_padaug, Bar, PadAugConfig, PadPlan, Side};

use crate::error::{validation_err, Result};

/// Row-major 8-bit RGB image.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RasterImage({}x{})", self.width, self.height)
    }
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(validation_err!("image dimensions must be positive, got {width}x{height}"));
        }
        if pixels.len() != width * height * 3 {
            return Err(validation_err!("{} bytes for a {width}x{height} RGB image", pixels.len()));
        }
        Ok(RasterImage { width, height, pixels })
    }

    pub fn black(width: usize, height: usize) -> Self {
        RasterImage { width, height, pixels: vec![0; width * height * 3] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> [u8; 3]) -> Self {
        let mut img = RasterImage::black(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Channel value, black outside the image.
    fn sample(&self, x: isize, y: isize, ch: usize) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return 0.0;
        }
        f64::from(self.pixels[3 * (y as usize * self.width + x as usize) + ch])
    }
}

/// Square face box in pixel coordinates. Pixel `(i, j)` covers `[i, i+1) × [j, j+1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceBox {
    pub cx: f64,
    pub cy: f64,
    pub side: f64,
}

/// Crops the square of side `scale · side` around the box center and resizes
/// it to `out_side × out_side`.
///
/// Sampling is bilinear at half-pixel centers; any source pixel outside the
/// image reads as black. Channel values are rounded half up.
pub fn crop_scaled(img: &RasterImage, face: &FaceBox, scale: f64, out_side: usize) -> Result<RasterImage> {
    if !(face.side.is_finite() && face.side > 0.0) {
        return Err(validation_err!("face box side must be positive, got {}", face.side));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(validation_err!("crop scale must be positive, got {scale}"));
    }
    if out_side == 0 {
        return Err(validation_err!("output side must be at least 1"));
    }
    if !(face.cx.is_finite() && face.cy.is_finite()) {
        return Err(validation_err!("face box center must be finite"));
    }
    let side = scale * face.side;
    let step = side / out_side as f64;
    let x0 = face.cx - side / 2.0;
    let y0 = face.cy - side / 2.0;
    let mut out = RasterImage::black(out_side, out_side);
    for j in 0..out_side {
        // continuous coordinate relative to pixel centers
        let sy = y0 + (j as f64 + 0.5) * step - 0.5;
        let fy = sy.floor();
        let ty = sy - fy;
        let yi = fy as isize;
        for i in 0..out_side {
            let sx = x0 + (i as f64 + 0.5) * step - 0.5;
            let fx = sx.floor();
            let tx = sx - fx;
            let xi = fx as isize;
            let mut rgb = [0u8; 3];
            for (ch, v) in rgb.iter_mut().enumerate() {
                let top = (1.0 - tx) * img.sample(xi, yi, ch) + tx * img.sample(xi + 1, yi, ch);
                let bot = (1.0 - tx) * img.sample(xi, yi + 1, ch) + tx * img.sample(xi + 1, yi + 1, ch);
                let val = (1.0 - ty) * top + ty * bot;
                *v = (val + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
            out.set(i, j, rgb);
        }
    }
    Ok(out)
}

/// Crops at every scale in `scales`, in order.
pub fn multiscale_crops(img: &RasterImage, face: &FaceBox, scales: &[f64], out_side: usize) -> Result<Vec<RasterImage>> {
    scales.iter().map(|&s| crop_scaled(img, face, s, out_side)).collect()
}
