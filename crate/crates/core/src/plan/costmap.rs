//! Occupancy cost maps with a dynamic activity layer.
//!
//! Cells hold traversal costs: 0 free, 254 lethal, 255 unknown. The activity
//! layer is rasterized from per-block densities mapped through a per-camera
//! homography, and the exported map is the element-wise max of both layers.
//! Files follow the map-server layout: a P5 PGM whose pixel values are the
//! cell costs (`negate: 1`) and a YAML sidecar.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::MotionFrame;
use crate::pgm::GrayImage;

pub const FREE: u8 = 0;
pub const LETHAL: u8 = 254;
pub const UNKNOWN: u8 = 255;

pub const OCCUPIED_THRESH: f64 = 0.65;
pub const FREE_THRESH: f64 = 0.196;

/// Row-major 3x3 projective map from block-grid coordinates to world
/// meters. Block `(bx, by)` has its center at `(bx + 0.5, by + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Homography(pub [[f64; 3]; 3]);

impl Homography {
    pub const IDENTITY: Homography = Homography([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// `x = sx * u + tx`, `y = sy * v + ty`.
    pub fn affine(sx: f64, sy: f64, tx: f64, ty: f64) -> Self {
        Homography([[sx, 0.0, tx], [0.0, sy, ty], [0.0, 0.0, 1.0]])
    }

    pub fn apply(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let h = &self.0;
        let w = h[2][0] * u + h[2][1] * v + h[2][2];
        if w.abs() < 1e-12 || !w.is_finite() {
            return None;
        }
        let x = (h[0][0] * u + h[0][1] * v + h[0][2]) / w;
        let y = (h[1][0] * u + h[1][1] * v + h[1][2]) / w;
        (x.is_finite() && y.is_finite()).then_some((x, y))
    }

    pub fn block_center(&self, bx: usize, by: usize) -> Option<(f64, f64)> {
        self.apply(bx as f64 + 0.5, by as f64 + 0.5)
    }
}

/// Static occupancy grid. `cells` is row-major with row 0 at the bottom
/// (smallest world y), matching the map origin convention.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: [f64; 2],
    pub cells: Vec<u8>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: [f64; 2], fill: u8) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("map dimensions must be positive"));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::param(format!("map resolution must be positive, got {resolution}")));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
            cells: vec![fill; width * height],
        })
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: u8) {
        self.cells[row * self.width + col] = v;
    }

    /// Cell containing a world point, or `None` outside the map.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.origin[0]) / self.resolution).floor();
        let r = ((y - self.origin[1]) / self.resolution).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some((c as usize, r as usize))
    }

    pub fn to_image(&self) -> GrayImage {
        let mut pixels = Vec::with_capacity(self.cells.len());
        for row in (0..self.height).rev() {
            pixels.extend_from_slice(&self.cells[row * self.width..(row + 1) * self.width]);
        }
        GrayImage {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    pub fn from_image(img: &GrayImage, resolution: f64, origin: [f64; 2]) -> Result<Self> {
        let mut grid = Self::new(img.width, img.height, resolution, origin, FREE)?;
        for row in 0..img.height {
            let src = (img.height - 1 - row) * img.width;
            grid.cells[row * img.width..(row + 1) * img.width].copy_from_slice(&img.pixels[src..src + img.width]);
        }
        Ok(grid)
    }

    pub fn yaml(&self, image_name: &str) -> String {
        format!(
            "image: {image_name}\nresolution: {:?}\norigin: [{:?}, {:?}, 0.0]\nnegate: 1\noccupied_thresh: {OCCUPIED_THRESH}\nfree_thresh: {FREE_THRESH}\n",
            self.resolution, self.origin[0], self.origin[1]
        )
    }

    /// Writes `<stem>.pgm` and `<stem>.yaml` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        let pgm = dir.join(format!("{stem}.pgm"));
        self.to_image().write(&pgm)?;
        let yaml = dir.join(format!("{stem}.yaml"));
        fs::write(&yaml, self.yaml(&format!("{stem}.pgm"))).map_err(|e| Error::io(&yaml, e))
    }

    /// Reads a map from its YAML file; the image path is relative to it.
    pub fn read(yaml_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(yaml_path).map_err(|e| Error::io(yaml_path, e))?;
        let meta: MapMeta = serde_yaml::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", yaml_path.display())))?;
        if meta.origin.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "{}: origin must have three entries",
                yaml_path.display()
            )));
        }
        if meta.negate != 1 {
            return Err(Error::InvalidInput(format!(
                "{}: only negate: 1 maps are supported",
                yaml_path.display()
            )));
        }
        let base = yaml_path.parent().unwrap_or(Path::new("."));
        let img = GrayImage::read(&base.join(&meta.image))?;
        Self::from_image(&img, meta.resolution, [meta.origin[0], meta.origin[1]])
    }
}

#[derive(Debug, Deserialize)]
struct MapMeta {
    image: String,
    resolution: f64,
    origin: Vec<f64>,
    negate: u8,
    #[allow(dead_code)]
    occupied_thresh: f64,
    #[allow(dead_code)]
    free_thresh: f64,
}

/// How block densities become activity costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActivityScale {
    /// Cost units per unit of density.
    pub cost_per_density: f64,
    /// Blocks at or below this density are ignored.
    pub min_density: f64,
}

impl Default for ActivityScale {
    fn default() -> Self {
        Self {
            cost_per_density: 254.0,
            min_density: 0.0,
        }
    }
}

impl ActivityScale {
    /// Cost of one block: at least 1 for any counted density, capped at
    /// lethal.
    pub fn cost(&self, density: f64) -> u8 {
        if !(density > self.min_density) {
            return FREE;
        }
        (density * self.cost_per_density).round().clamp(1.0, LETHAL as f64) as u8
    }
}

/// One camera's contribution to the activity layer.
#[derive(Debug, Clone)]
pub struct CameraView<'a> {
    pub homography: Homography,
    pub activity: &'a MotionFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub static_layer: OccupancyGrid,
    pub activity: Vec<u8>,
    /// Active blocks that mapped outside the map.
    pub skipped_blocks: usize,
}

impl CostMap {
    pub fn new(static_layer: OccupancyGrid) -> Self {
        let n = static_layer.cells.len();
        Self {
            static_layer,
            activity: vec![FREE; n],
            skipped_blocks: 0,
        }
    }

    /// Splats each active block into the cell under its mapped center,
    /// keeping the max where blocks share a cell.
    pub fn splat(&mut self, view: &CameraView<'_>, scale: &ActivityScale) {
        let f = view.activity;
        for by in 0..f.grid_h {
            for bx in 0..f.grid_w {
                let c = scale.cost(f.block(bx, by).density);
                if c == FREE {
                    continue;
                }
                let cell = view
                    .homography
                    .block_center(bx, by)
                    .and_then(|(x, y)| self.static_layer.world_to_cell(x, y));
                match cell {
                    Some((col, row)) => {
                        let i = row * self.static_layer.width + col;
                        self.activity[i] = self.activity[i].max(c);
                    }
                    None => self.skipped_blocks += 1,
                }
            }
        }
    }

    pub fn combined(&self) -> OccupancyGrid {
        let mut out = self.static_layer.clone();
        for (o, &a) in out.cells.iter_mut().zip(&self.activity) {
            *o = (*o).max(a);
        }
        out
    }
}

/// Rasterizes every camera's activity over `static_map` and returns the
/// combined grid plus the number of skipped blocks.
pub fn export_costmap(static_map: &OccupancyGrid, views: &[CameraView<'_>], scale: &ActivityScale) -> Result<(OccupancyGrid, usize)> {
    if !(scale.cost_per_density > 0.0) {
        return Err(Error::param("cost_per_density must be positive"));
    }
    let mut map = CostMap::new(static_map.clone());
    for v in views {
        map.splat(v, scale);
    }
    Ok((map.combined(), map.skipped_blocks))
}
