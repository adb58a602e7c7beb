use std::fmt;
use std::str::FromStr;

use super::RasterImage;
use crate::error::{validation_err, Error, Result};
use crate::ndmath::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Top, Side::Bottom];

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Top => "top",
            Side::Bottom => "bottom",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Side::ALL.iter().copied().find(|k| k.name() == s).ok_or_else(|| validation_err!("unknown side {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PadAugConfig {
    pub probability: f64,
    pub sides: Vec<Side>,
    /// Bar thickness as a fraction of the padded dimension, drawn uniformly.
    pub fraction_range: (f64, f64),
    pub max_sides_per_sample: usize,
    /// Maximum content shift in pixels, away from the padded edge.
    pub jitter: usize,
}

impl Default for PadAugConfig {
    fn default() -> Self {
        PadAugConfig {
            probability: 0.5,
            sides: Side::ALL.to_vec(),
            fraction_range: (0.05, 0.25),
            max_sides_per_sample: 2,
            jitter: 2,
        }
    }
}

impl PadAugConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(validation_err!("pad probability {} outside [0,1]", self.probability));
        }
        let (lo, hi) = self.fraction_range;
        if !(lo > 0.0 && lo <= hi && hi < 0.5) {
            return Err(validation_err!("fraction range ({lo}, {hi}) must satisfy 0 < lo <= hi < 0.5"));
        }
        if !(1..=2).contains(&self.max_sides_per_sample) {
            return Err(validation_err!("max sides per sample must be 1 or 2, got {}", self.max_sides_per_sample));
        }
        if self.sides.is_empty() {
            return Err(validation_err!("at least one side must be enabled"));
        }
        let mut s = self.sides.clone();
        s.sort();
        s.dedup();
        if s.len() != self.sides.len() {
            return Err(validation_err!("duplicate side in pad configuration"));
        }
        Ok(())
    }
}

/// One black bar: thickness in pixels and how far the content moves first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bar {
    pub side: Side,
    pub thickness: usize,
    pub shift: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PadPlan {
    pub bars: Vec<Bar>,
}

fn side_dim(side: Side, width: usize, height: usize) -> usize {
    match side {
        Side::Left | Side::Right => width,
        Side::Top | Side::Bottom => height,
    }
}

/// Bar thickness for a fraction of the padded dimension, rounded to nearest.
pub fn bar_thickness(fraction: f64, dim: usize) -> usize {
    ((fraction * dim as f64).round() as usize).min(dim)
}

/// Draws the random part of PadAug. `None` means the image is left as is.
pub fn plan_padaug(width: usize, height: usize, cfg: &PadAugConfig, rng: &mut Rng) -> Result<Option<PadPlan>> {
    cfg.validate()?;
    if !rng.bernoulli(cfg.probability) {
        return Ok(None);
    }
    let max = cfg.max_sides_per_sample.min(cfg.sides.len());
    let n = 1 + rng.below(max);
    let mut sides = cfg.sides.clone();
    rng.shuffle(&mut sides);
    let (lo, hi) = cfg.fraction_range;
    let bars = sides[..n]
        .iter()
        .map(|&side| {
            let thickness = bar_thickness(rng.uniform_range(lo, hi), side_dim(side, width, height));
            let shift = rng.below(cfg.jitter.min(thickness) + 1);
            Bar { side, thickness, shift }
        })
        .collect();
    Ok(Some(PadPlan { bars }))
}

/// Shifts content away from each padded edge, then blackens every bar.
pub fn apply_pad_plan(img: &RasterImage, plan: &PadPlan) -> RasterImage {
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for bar in &plan.bars {
        if bar.shift == 0 {
            continue;
        }
        let src = out.clone();
        let s = bar.shift as isize;
        let (dx, dy) = match bar.side {
            Side::Left => (s, 0),
            Side::Right => (-s, 0),
            Side::Top => (0, s),
            Side::Bottom => (0, -s),
        };
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = (x as isize - dx, y as isize - dy);
                let rgb = if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                    src.get(sx as usize, sy as usize)
                } else {
                    [0; 3]
                };
                out.set(x, y, rgb);
            }
        }
    }
    for bar in &plan.bars {
        let t = bar.thickness;
        for y in 0..h {
            for x in 0..w {
                let inside = match bar.side {
                    Side::Left => x < t,
                    Side::Right => x + t >= w,
                    Side::Top => y < t,
                    Side::Bottom => y + t >= h,
                };
                if inside {
                    out.set(x, y, [0; 3]);
                }
            }
        }
    }
    out
}

pub fn padaug(img: &RasterImage, cfg: &PadAugConfig, rng: &mut Rng) -> Result<RasterImage> {
    Ok(match plan_padaug(img.width(), img.height(), cfg, rng)? {
        Some(plan) => apply_pad_plan(img, &plan),
        None => img.clone(),
    })
}
