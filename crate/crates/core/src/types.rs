//! Shared domain types: sensor description, frames, maps, boxes and records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and timing of a thermopile array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub width_px: usize,
    pub height_px: usize,
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    pub frame_rate_hz: f64,
    pub noise_sigma_c: f64,
}

impl Default for SensorSpec {
    /// MLX90640BAA: 32x24 elements, 110x75 degree field of view, 16 Hz.
    fn default() -> Self {
        Self {
            width_px: 32,
            height_px: 24,
            fov_h_deg: 110.0,
            fov_v_deg: 75.0,
            frame_rate_hz: 16.0,
            noise_sigma_c: 1.5,
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::Validation(format!(
                "sensor dimensions must be positive, got {}x{}",
                self.width_px, self.height_px
            )));
        }
        for (axis, fov) in [("horizontal", self.fov_h_deg), ("vertical", self.fov_v_deg)] {
            if !(fov > 0.0 && fov < 180.0) {
                return Err(Error::Validation(format!(
                    "{axis} field of view must lie in (0, 180) degrees, got {fov}"
                )));
            }
        }
        if !(self.frame_rate_hz > 0.0) {
            return Err(Error::Validation(format!(
                "frame rate must be positive, got {}",
                self.frame_rate_hz
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width_px * self.height_px
    }
}

/// Row-major 2D buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "grid {}x{} needs {} cells, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

/// Which half of the chessboard readout a frame carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subpage {
    /// Cells with even `row + col` are valid; odd cells are missing.
    A,
    /// Cells with odd `row + col` are valid; even cells are missing.
    B,
    Full,
}

impl Subpage {
    /// Whether the cell at `(x, y)` is expected to be missing on this subpage.
    pub fn is_missing_cell(self, x: usize, y: usize) -> bool {
        match self {
            Subpage::A => (x + y) % 2 == 1,
            Subpage::B => (x + y) % 2 == 0,
            Subpage::Full => false,
        }
    }
}

/// One sensor-resolution readout in degrees Celsius. Missing cells are NaN.
#[derive(Debug, Clone)]
pub struct RawFrame {
    spec: SensorSpec,
    values: Vec<f32>,
    timestamp: f64,
    subpage: Subpage,
}

impl RawFrame {
    pub fn new(spec: SensorSpec, values: Vec<f32>, timestamp: f64, subpage: Subpage) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.pixel_count() {
            return Err(Error::DimensionMismatch(format!(
                "frame for {}x{} sensor needs {} values, got {}",
                spec.width_px,
                spec.height_px,
                spec.pixel_count(),
                values.len()
            )));
        }
        if subpage != Subpage::Full {
            for y in 0..spec.height_px {
                for x in 0..spec.width_px {
                    let v = values[y * spec.width_px + x];
                    if v.is_nan() && !subpage.is_missing_cell(x, y) {
                        return Err(Error::InvalidPattern(format!(
                            "cell ({x}, {y}) missing outside the {subpage:?} chessboard parity"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            spec,
            values,
            timestamp,
            subpage,
        })
    }

    pub fn spec(&self) -> &SensorSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn subpage(&self) -> Subpage {
        self.subpage
    }

    pub fn width(&self) -> usize {
        self.spec.width_px
    }

    pub fn height(&self) -> usize {
        self.spec.height_px
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.spec.width_px + x]
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }
}

/// Bit-level equality, except that every NaN equals every other NaN.
impl PartialEq for RawFrame {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.timestamp.to_bits() == other.timestamp.to_bits()
            && self.subpage == other.subpage
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits())
    }
}

/// Up-sampled temperature field used for ranging.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureMap {
    grid: Grid<f64>,
    scale: usize,
}

impl TemperatureMap {
    pub fn new(grid: Grid<f64>, scale: usize) -> Result<Self> {
        if scale == 0 {
            return Err(Error::Validation("scale must be at least 1".into()));
        }
        Ok(Self { grid, scale })
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.grid
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        *self.grid.get(x, y)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.grid
            .as_slice()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// 8-bit grayscale rendering of a temperature map, used for detection and tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    grid: Grid<u8>,
}

impl GrayFrame {
    pub fn new(grid: Grid<u8>) -> Self {
        Self { grid }
    }

    pub fn grid(&self) -> &Grid<u8> {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        *self.grid.get(x, y)
    }
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)` in interpolated-map coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

impl BBox {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::Validation(format!(
                "bbox ({x0}, {y0}, {x1}, {y1}) must satisfy x0 < x1 and y0 < y1"
            )));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Builds a box and checks that it fits a `width x height` frame.
    pub fn within(x0: u32, y0: u32, x1: u32, y1: u32, width: usize, height: usize) -> Result<Self> {
        let b = Self::new(x0, y0, x1, y1)?;
        if !b.fits(width, height) {
            return Err(Error::Validation(format!(
                "bbox ({x0}, {y0}, {x1}, {y1}) exceeds {width}x{height} frame"
            )));
        }
        Ok(b)
    }

    /// Rounds a continuous rectangle outward and clips it to the frame.
    pub fn from_f64_clipped(
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        width: usize,
        height: usize,
    ) -> Option<Self> {
        let cx0 = x0.floor().max(0.0);
        let cy0 = y0.floor().max(0.0);
        let cx1 = x1.ceil().min(width as f64);
        let cy1 = y1.ceil().min(height as f64);
        if !(cx0 < cx1 && cy0 < cy1) {
            return None;
        }
        Self::new(cx0 as u32, cy0 as u32, cx1 as u32, cy1 as u32).ok()
    }

    pub fn x0(&self) -> u32 {
        self.x0
    }
    pub fn y0(&self) -> u32 {
        self.y0
    }
    pub fn x1(&self) -> u32 {
        self.x1
    }
    pub fn y1(&self) -> u32 {
        self.y1
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x0 as f64 + self.x1 as f64) * 0.5,
            (self.y0 as f64 + self.y1 as f64) * 0.5,
        )
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.x1 as usize <= width && self.y1 as usize <= height
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        BBox::new(x0, y0, x1, y1).ok()
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn with_rows(&self, y0: u32, y1: u32) -> Result<BBox> {
        BBox::new(self.x0, y0, self.x1, y1)
    }

    pub fn with_cols(&self, x0: u32, x1: u32) -> Result<BBox> {
        BBox::new(x0, self.y0, x1, self.y1)
    }

    /// The same region on a pixel grid expanded by `to` instead of `from`,
    /// grown outward to whole pixels.
    pub fn rescale(&self, from: usize, to: usize) -> BBox {
        if from == to || from == 0 || to == 0 {
            return *self;
        }
        let k = to as f64 / from as f64;
        let x0 = (self.x0 as f64 * k).floor() as u32;
        let y0 = (self.y0 as f64 * k).floor() as u32;
        let x1 = ((self.x1 as f64 * k).ceil() as u32).max(x0 + 1);
        let y1 = ((self.y1 as f64 * k).ceil() as u32).max(y0 + 1);
        BBox { x0, y0, x1, y1 }
    }
}

impl TryFrom<[u32; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [u32; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// A detected region plus the temperature patch underneath it.
#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    bbox: BBox,
    patch: Grid<f64>,
    center: (f64, f64),
}

impl Roi {
    /// Copies the patch under `bbox` out of `map`; the center is normalized by the map size.
    pub fn from_map(map: &TemperatureMap, bbox: BBox) -> Result<Self> {
        if !bbox.fits(map.width(), map.height()) {
            return Err(Error::Validation(format!(
                "roi {:?} exceeds {}x{} map",
                <[u32; 4]>::from(bbox),
                map.width(),
                map.height()
            )));
        }
        let patch = Grid::from_fn(bbox.width() as usize, bbox.height() as usize, |x, y| {
            map.get(bbox.x0 as usize + x, bbox.y0 as usize + y)
        });
        let (cx, cy) = bbox.center();
        Ok(Self {
            bbox,
            patch,
            center: (cx / map.width() as f64, cy / map.height() as f64),
        })
    }

    /// Builds an ROI from an explicit patch; `frame_size` normalizes the center.
    pub fn from_patch(bbox: BBox, patch: Grid<f64>, frame_size: (usize, usize)) -> Result<Self> {
        if patch.width() != bbox.width() as usize || patch.height() != bbox.height() as usize {
            return Err(Error::DimensionMismatch(format!(
                "patch {}x{} does not match bbox {}x{}",
                patch.width(),
                patch.height(),
                bbox.width(),
                bbox.height()
            )));
        }
        if !bbox.fits(frame_size.0, frame_size.1) {
            return Err(Error::Validation("roi bbox exceeds frame".into()));
        }
        let (cx, cy) = bbox.center();
        Ok(Self {
            bbox,
            patch,
            center: (cx / frame_size.0 as f64, cy / frame_size.1 as f64),
        })
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn patch(&self) -> &Grid<f64> {
        &self.patch
    }

    pub fn center(&self) -> (f64, f64) {
        self.center
    }
}

/// Ground truth for one target in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTruth {
    pub id: u32,
    pub bbox: BBox,
    pub range_m: f64,
    pub real_height_m: f64,
}

pub const LABEL_SCHEMA_VERSION: u32 = 1;

fn label_version() -> u32 {
    LABEL_SCHEMA_VERSION
}

fn default_label_scale() -> usize {
    20
}

/// One line of a label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    #[serde(default = "label_version")]
    pub version: u32,
    pub frame_index: u64,
    /// Expansion factor of the pixel grid the boxes are expressed in.
    #[serde(default = "default_label_scale")]
    pub scale: usize,
    pub targets: Vec<TargetTruth>,
}

impl GroundTruthRecord {
    pub fn new(frame_index: u64, scale: usize, targets: Vec<TargetTruth>) -> Self {
        Self {
            version: LABEL_SCHEMA_VERSION,
            frame_index,
            scale,
            targets,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in &self.targets {
            if !(t.range_m > 0.0) || !t.range_m.is_finite() {
                return Err(Error::Validation(format!(
                    "frame {} target {}: range_m must be positive, got {}",
                    self.frame_index, t.id, t.range_m
                )));
            }
        }
        Ok(())
    }
}

/// One user reported by the pipeline in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub track_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothed_range_m: Option<f64>,
    /// Correlation peak of the track's tracker, 1.0 when confirmed by a detection.
    #[serde(default = "one")]
    pub confidence: f64,
}

fn one() -> f64 {
    1.0
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        for r in [self.range_m, self.smoothed_range_m].into_iter().flatten() {
            if !(r > 0.0) {
                return Err(Error::Validation(format!(
                    "track {}: range must be positive, got {r}",
                    self.track_id
                )));
            }
        }
        Ok(())
    }

    /// Range used downstream: the smoothed value when present.
    pub fn best_range(&self) -> Option<f64> {
        self.smoothed_range_m.or(self.range_m)
    }
}

pub const DETECTION_SCHEMA_VERSION: u32 = 1;

fn detection_version() -> u32 {
    DETECTION_SCHEMA_VERSION
}

/// One line of a detections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDetections {
    #[serde(default = "detection_version")]
    pub version: u32,
    pub frame_index: u64,
    pub timestamp: f64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub scale: usize,
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    pub detections: Vec<Detection>,
}
