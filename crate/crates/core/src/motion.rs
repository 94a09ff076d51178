//! Block-motion features.
//!
//! A [`MotionFrame`] is a grid of blocks, each carrying a motion density and
//! an 8-bin direction histogram. Frames come either from
//! [`extract_motion`] on consecutive grayscale images or directly from the
//! feature-mode simulator.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pgm::GrayImage;

/// Number of quantized motion directions (0°, 45°, ..., 315°).
pub const DIRECTIONS: usize = 8;

/// Largest single-axis Sobel response on 8-bit input (4 * 255).
const SOBEL_FULL_SCALE: f64 = 1020.0;

pub const MS_PER_MINUTE: u64 = 60_000;

/// Pixel-mode extraction settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionParams {
    pub block_size: usize,
    /// Smallest luminance difference counted as motion.
    pub noise_floor: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            block_size: 16,
            noise_floor: 8.0,
        }
    }
}

impl MotionParams {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return Err(Error::param("block_size must be positive"));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::param(format!("noise_floor must be >= 0, got {}", self.noise_floor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    pub timestamp_ms: u64,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, timestamp_ms: u64) -> Result<Self> {
        let img = GrayImage::new(width, height, pixels)?;
        Ok(Self::from_image(img, timestamp_ms))
    }

    pub fn from_image(img: GrayImage, timestamp_ms: u64) -> Self {
        Self {
            width: img.width,
            height: img.height,
            pixels: img.pixels,
            timestamp_ms,
        }
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.pixels.clone(),
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Motion features of one block.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionBlock {
    pub density: f64,
    pub dir_hist: [f64; DIRECTIONS],
}

impl MotionBlock {
    pub const ZERO: MotionBlock = MotionBlock {
        density: 0.0,
        dir_hist: [0.0; DIRECTIONS],
    };

    /// Applies `f` to every component (density and each bin).
    #[inline]
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> MotionBlock {
        let mut dir_hist = [0.0; DIRECTIONS];
        for (o, &h) in dir_hist.iter_mut().zip(&self.dir_hist) {
            *o = f(h);
        }
        MotionBlock {
            density: f(self.density),
            dir_hist,
        }
    }

    /// Combines two blocks component by component.
    #[inline]
    pub fn zip_with(&self, other: &MotionBlock, mut f: impl FnMut(f64, f64) -> f64) -> MotionBlock {
        let mut dir_hist = [0.0; DIRECTIONS];
        for ((o, &a), &b) in dir_hist.iter_mut().zip(&self.dir_hist).zip(&other.dir_hist) {
            *o = f(a, b);
        }
        MotionBlock {
            density: f(self.density, other.density),
            dir_hist,
        }
    }

    pub fn components(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.density).chain(self.dir_hist.iter().copied())
    }

    /// Dominant direction bin; ties go to the lowest index. `None` when the
    /// histogram is empty.
    pub fn dominant_direction(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &h) in self.dir_hist.iter().enumerate() {
            if h > 0.0 && best.is_none_or(|(_, b)| h > b) {
                best = Some((i, h));
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Motion image of `grid_w * grid_h` blocks at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionFrame {
    pub grid_w: usize,
    pub grid_h: usize,
    pub blocks: Vec<MotionBlock>,
    pub timestamp_ms: u64,
}

impl MotionFrame {
    pub fn zeros(grid_w: usize, grid_h: usize, timestamp_ms: u64) -> Self {
        Self {
            grid_w,
            grid_h,
            blocks: vec![MotionBlock::ZERO; grid_w * grid_h],
            timestamp_ms,
        }
    }

    pub fn new(grid_w: usize, grid_h: usize, blocks: Vec<MotionBlock>, timestamp_ms: u64) -> Result<Self> {
        if grid_w == 0 || grid_h == 0 {
            return Err(Error::param("grid dimensions must be positive"));
        }
        if blocks.len() != grid_w * grid_h {
            return Err(Error::rejected(format!(
                "{} blocks for a {}x{} grid",
                blocks.len(),
                grid_w,
                grid_h
            )));
        }
        Ok(Self {
            grid_w,
            grid_h,
            blocks,
            timestamp_ms,
        })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn same_grid(&self, other: &MotionFrame) -> bool {
        self.grid_w == other.grid_w && self.grid_h == other.grid_h
    }

    pub fn check_grid(&self, other: &MotionFrame) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::rejected(format!(
                "grid mismatch: {}x{} vs {}x{}",
                self.grid_w, self.grid_h, other.grid_w, other.grid_h
            )))
        }
    }

    pub fn block(&self, bx: usize, by: usize) -> &MotionBlock {
        &self.blocks[by * self.grid_w + bx]
    }

    /// Mean block density, the scalar activity of the frame.
    pub fn mean_density(&self) -> f64 {
        if self.blocks.is_empty() {
            return 0.0;
        }
        self.blocks.iter().map(|b| b.density).sum::<f64>() / self.blocks.len() as f64
    }

    /// Mean density over a subset of block indices (all blocks when `None`).
    pub fn mean_density_over(&self, region: Option<&[usize]>) -> f64 {
        match region {
            None => self.mean_density(),
            Some([]) => 0.0,
            Some(idx) => idx.iter().map(|&i| self.blocks[i].density).sum::<f64>() / idx.len() as f64,
        }
    }

    pub fn map(&self, f: impl Fn(&MotionBlock) -> MotionBlock) -> MotionFrame {
        MotionFrame {
            grid_w: self.grid_w,
            grid_h: self.grid_h,
            blocks: self.blocks.iter().map(f).collect(),
            timestamp_ms: self.timestamp_ms,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.components().all(f64::is_finite))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&WireFrame::from_frame(self, None)).expect("frame serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let wire: WireFrame = serde_json::from_str(line)?;
        wire.into_frame()
    }
}

/// JSON-lines record: `{"t":..,"gw":..,"gh":..,"blocks":[[d,[h0..h7]],..]}`
/// with an optional trailing `"band"` tag. Field order is fixed by the
/// struct declaration order.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct WireFrame {
    pub t: u64,
    pub gw: usize,
    pub gh: usize,
    pub blocks: Vec<(f64, [f64; DIRECTIONS])>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<String>,
}

impl WireFrame {
    pub(crate) fn from_frame(frame: &MotionFrame, band: Option<&str>) -> Self {
        Self {
            t: frame.timestamp_ms,
            gw: frame.grid_w,
            gh: frame.grid_h,
            blocks: frame.blocks.iter().map(|b| (b.density, b.dir_hist)).collect(),
            band: band.map(str::to_owned),
        }
    }

    pub(crate) fn into_frame(self) -> Result<MotionFrame> {
        let blocks = self
            .blocks
            .into_iter()
            .map(|(density, dir_hist)| MotionBlock { density, dir_hist })
            .collect();
        MotionFrame::new(self.gw, self.gh, blocks, self.t)
    }
}

pub fn write_jsonl<'a, W: Write>(mut w: W, frames: impl IntoIterator<Item = &'a MotionFrame>) -> std::io::Result<()> {
    for f in frames {
        writeln!(w, "{}", f.to_json_line())?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<MotionFrame>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::InvalidInput(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(MotionFrame::from_json_line(&line)?);
    }
    Ok(out)
}

/// Quantizes an angle (radians, counter-clockwise from +x) to one of the
/// eight direction bins.
pub fn direction_bin(angle: f64) -> usize {
    let step = PI / 4.0;
    let k = (angle / step).round() as i64;
    k.rem_euclid(DIRECTIONS as i64) as usize
}

/// Block-motion features between two frames.
///
/// Per pixel, the absolute difference `d = |curr - prev|` counts as motion
/// when it reaches `noise_floor`. Its contribution is `d * (1 + g / 1020)`
/// where `g` is the Sobel gradient magnitude of the mean of both frames.
/// The contribution also lands in the histogram bin of the normal-flow
/// direction `-(curr - prev) * grad`, so a bright object moving right
/// votes for 0°. Angles are measured with screen-up as +90°. Both density
/// and histogram are averaged over the block's actual pixel count.
pub fn extract_motion(prev: &GrayFrame, curr: &GrayFrame, block_size: usize, noise_floor: f64) -> Result<MotionFrame> {
    if block_size == 0 {
        return Err(Error::param("block_size must be positive"));
    }
    if !(noise_floor >= 0.0) {
        return Err(Error::param(format!("noise_floor must be >= 0, got {noise_floor}")));
    }
    if prev.width != curr.width || prev.height != curr.height {
        return Err(Error::rejected(format!(
            "frame dimensions differ: {}x{} vs {}x{}",
            prev.width, prev.height, curr.width, curr.height
        )));
    }
    let (w, h) = (curr.width, curr.height);
    if w == 0 || h == 0 || curr.pixels.len() != w * h || prev.pixels.len() != w * h {
        return Err(Error::rejected("malformed frame buffer"));
    }
    let grid_w = w.div_ceil(block_size);
    let grid_h = h.div_ceil(block_size);

    let mean: Vec<f64> = prev
        .pixels
        .iter()
        .zip(&curr.pixels)
        .map(|(&a, &b)| (a as f64 + b as f64) * 0.5)
        .collect();
    let m = |x: isize, y: isize| -> f64 {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        mean[yc * w + xc]
    };

    let mut blocks = vec![MotionBlock::ZERO; grid_w * grid_h];
    for y in 0..h {
        for x in 0..w {
            let c = curr.at(x, y) as f64;
            let p = prev.at(x, y) as f64;
            let dt = c - p;
            let d = dt.abs();
            if d == 0.0 || d < noise_floor {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            let gx = (m(xi + 1, yi - 1) + 2.0 * m(xi + 1, yi) + m(xi + 1, yi + 1))
                - (m(xi - 1, yi - 1) + 2.0 * m(xi - 1, yi) + m(xi - 1, yi + 1));
            // image rows grow downwards
            let gy = (m(xi - 1, yi + 1) + 2.0 * m(xi, yi + 1) + m(xi + 1, yi + 1))
                - (m(xi - 1, yi - 1) + 2.0 * m(xi, yi - 1) + m(xi + 1, yi - 1));
            let g = gx.hypot(gy);
            let contribution = d * (1.0 + g / SOBEL_FULL_SCALE);

            let blk = &mut blocks[(y / block_size) * grid_w + x / block_size];
            blk.density += contribution;
            if g > 0.0 {
                let vx = -dt * gx;
                let vy = -dt * gy;
                blk.dir_hist[direction_bin((-vy).atan2(vx))] += contribution;
            }
        }
    }

    for by in 0..grid_h {
        let bh = (h - by * block_size).min(block_size);
        for bx in 0..grid_w {
            let bw = (w - bx * block_size).min(block_size);
            let n = (bw * bh) as f64;
            let blk = &mut blocks[by * grid_w + bx];
            *blk = blk.map(|v| v / n);
        }
    }

    MotionFrame::new(grid_w, grid_h, blocks, curr.timestamp_ms)
}

/// Per-block arithmetic mean of a run of frames, stamped with the minute
/// boundary of the earliest frame.
pub fn aggregate_minute(frames: &[MotionFrame]) -> Result<MotionFrame> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot aggregate an empty frame sequence".into()))?;
    let mut acc = MinuteAccumulator::new(first.grid_w, first.grid_h);
    for f in frames {
        acc.push(f)?;
    }
    Ok(acc.finish().expect("non-empty"))
}

/// Streaming form of [`aggregate_minute`].
#[derive(Debug, Clone)]
pub struct MinuteAccumulator {
    grid_w: usize,
    grid_h: usize,
    sums: Vec<MotionBlock>,
    count: usize,
    first_ms: u64,
}

impl MinuteAccumulator {
    pub fn new(grid_w: usize, grid_h: usize) -> Self {
        Self {
            grid_w,
            grid_h,
            sums: vec![MotionBlock::ZERO; grid_w * grid_h],
            count: 0,
            first_ms: u64::MAX,
        }
    }

    pub fn push(&mut self, frame: &MotionFrame) -> Result<()> {
        if frame.grid_w != self.grid_w || frame.grid_h != self.grid_h {
            return Err(Error::rejected(format!(
                "grid mismatch: {}x{} vs {}x{}",
                frame.grid_w, frame.grid_h, self.grid_w, self.grid_h
            )));
        }
        for (s, b) in self.sums.iter_mut().zip(&frame.blocks) {
            *s = s.zip_with(b, |a, v| a + v);
        }
        self.count += 1;
        self.first_ms = self.first_ms.min(frame.timestamp_ms);
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Returns the mean frame and resets, or `None` when nothing was pushed.
    pub fn finish(&mut self) -> Option<MotionFrame> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        let blocks = self.sums.iter().map(|s| s.map(|v| v / n)).collect();
        let t = self.first_ms - self.first_ms % MS_PER_MINUTE;
        *self = Self::new(self.grid_w, self.grid_h);
        Some(MotionFrame {
            grid_w: self.grid_w,
            grid_h: self.grid_h,
            blocks,
            timestamp_ms: t,
        })
    }
}
