//! Case studies built on the detection stream: fall detection from real body
//! height, and occupancy counting with ground-plane heatmaps.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::FrameDetections;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub focal_px: f64,
}

impl CameraIntrinsics {
    /// Vertical pinhole focal length for a frame `height_px` tall.
    pub fn from_fov(height_px: f64, fov_v_deg: f64) -> Result<Self> {
        let f = height_px * 0.5 / (fov_v_deg.to_radians() * 0.5).tan();
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::Validation("focal length must be positive".into()));
        }
        Ok(Self { focal_px: f })
    }
}

/// Metric height of something `h_px` tall in the image at range `r_m`.
pub fn real_height(h_px: f64, r_m: f64, intr: &CameraIntrinsics) -> f64 {
    h_px * r_m / intr.focal_px
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FallConfig {
    /// Speed of descent (m/s) the smoothed height must exceed.
    pub v_fall: f64,
    pub min_frames: usize,
    pub min_drop_m: f64,
    pub window_s: f64,
    /// Trailing moving-average length applied before differentiation.
    pub smoothing_frames: usize,
}

impl Default for FallConfig {
    fn default() -> Self {
        Self {
            v_fall: 1.0,
            min_frames: 2,
            min_drop_m: 0.6,
            window_s: 1.0,
            smoothing_frames: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallEvent {
    pub t: f64,
    pub track_id: u64,
    #[serde(rename = "type")]
    pub kind: FallKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FallKind {
    Fall,
}

/// Times at which a height history `(t, height_m)` shows a fall.
///
/// A fall needs the smoothed height to descend faster than `v_fall` for at least
/// `min_frames` consecutive samples inside the trailing window, while the drop
/// from the window's highest point reaches `min_drop_m`. After firing, the rule
/// re-arms only once the drop condition has cleared.
pub fn detect_fall(history: &[(f64, f64)], config: &FallConfig) -> Vec<f64> {
    let n = history.len();
    if n < 2 {
        return Vec::new();
    }
    let k = config.smoothing_frames.max(1);
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = (i + 1).saturating_sub(k);
            history[lo..=i].iter().map(|p| p.1).sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect();
    let fast: Vec<bool> = (0..n)
        .map(|i| {
            if i == 0 {
                return false;
            }
            let dt = history[i].0 - history[i - 1].0;
            dt > 0.0 && (smooth[i] - smooth[i - 1]) / dt < -config.v_fall
        })
        .collect();

    let mut events = Vec::new();
    let mut armed = true;
    let mut start = 0;
    for i in 0..n {
        let t = history[i].0;
        while history[start].0 < t - config.window_s - 1e-9 {
            start += 1;
        }
        let peak = smooth[start..=i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dropped = peak - smooth[i] >= config.min_drop_m;
        let mut run = 0;
        let mut longest = 0;
        for &f in &fast[start..=i] {
            run = if f { run + 1 } else { 0 };
            longest = longest.max(run);
        }
        if !dropped {
            armed = true;
        } else if armed && longest >= config.min_frames.max(1) {
            events.push(t);
            armed = false;
        }
    }
    events
}

/// How per-frame heights are derived for fall detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightSource {
    /// Box height scaled by the estimated range.
    Real,
    /// Box height scaled by a fixed reference range, ignoring the estimate.
    InFrame { reference_range_m: f64 },
}

/// Per-track `(t, height)` series from a detection stream.
pub fn height_histories(frames: &[FrameDetections], source: HeightSource) -> Result<BTreeMap<u64, Vec<(f64, f64)>>> {
    let mut out: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for f in frames {
        let intr = CameraIntrinsics::from_fov(f.frame_height as f64, f.fov_v_deg)?;
        for d in &f.detections {
            let r = match source {
                HeightSource::Real => match d.best_range() {
                    Some(r) => r,
                    None => continue,
                },
                HeightSource::InFrame { reference_range_m } => reference_range_m,
            };
            out.entry(d.track_id)
                .or_default()
                .push((f.timestamp, real_height(d.bbox.height() as f64, r, &intr)));
        }
    }
    Ok(out)
}

/// Fall events over all tracks, ordered by time then track.
pub fn detect_falls(frames: &[FrameDetections], source: HeightSource, config: &FallConfig) -> Result<Vec<FallEvent>> {
    let mut events: Vec<FallEvent> = height_histories(frames, source)?
        .into_iter()
        .flat_map(|(id, h)| {
            detect_fall(&h, config).into_iter().map(move |t| FallEvent {
                t,
                track_id: id,
                kind: FallKind::Fall,
            })
        })
        .collect();
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.track_id.cmp(&b.track_id)));
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyCount {
    pub frame_index: u64,
    pub t: f64,
    pub count: usize,
}

/// Number of reported users in each frame.
pub fn occupancy(frames: &[FrameDetections]) -> Vec<OccupancyCount> {
    frames
        .iter()
        .map(|f| OccupancyCount {
            frame_index: f.frame_index,
            t: f.timestamp,
            count: f.detections.len(),
        })
        .collect()
}

/// Floor position `(lateral, forward)` in metres for a target at range `r_m`
/// whose box center sits at normalized column `x_norm`.
pub fn ground_point(x_norm: f64, r_m: f64, fov_h_deg: f64) -> (f64, f64) {
    let theta = (x_norm - 0.5) * fov_h_deg.to_radians();
    (r_m * theta.sin(), r_m * theta.cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapConfig {
    pub x_min_m: f64,
    pub x_max_m: f64,
    pub y_min_m: f64,
    pub y_max_m: f64,
    pub cell_size_m: f64,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            x_min_m: -4.0,
            x_max_m: 4.0,
            y_min_m: 0.0,
            y_max_m: 6.0,
            cell_size_m: 0.25,
        }
    }
}

/// Visit tallies on a floor grid. Row 0 is nearest the sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub cell_size_m: f64,
    pub x_min_m: f64,
    pub y_min_m: f64,
    pub nx: usize,
    pub ny: usize,
    pub counts: Vec<u64>,
}

impl OccupancyGrid {
    pub fn new(config: &HeatmapConfig) -> Result<Self> {
        let c = config.cell_size_m;
        if !(c > 0.0) || !(config.x_max_m > config.x_min_m) || !(config.y_max_m > config.y_min_m) {
            return Err(Error::Config("heatmap extents and cell size must be positive".into()));
        }
        let nx = ((config.x_max_m - config.x_min_m) / c).ceil() as usize;
        let ny = ((config.y_max_m - config.y_min_m) / c).ceil() as usize;
        Ok(Self {
            cell_size_m: c,
            x_min_m: config.x_min_m,
            y_min_m: config.y_min_m,
            nx,
            ny,
            counts: vec![0; nx * ny],
        })
    }

    /// Cell holding `(x, y)`; points outside the extents land in the nearest edge cell.
    pub fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let cx = ((x - self.x_min_m) / self.cell_size_m).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let cy = ((y - self.y_min_m) / self.cell_size_m).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (cx, cy)
    }

    pub fn add(&mut self, x: f64, y: f64) {
        let (cx, cy) = self.cell_of(x, y);
        self.counts[cy * self.nx + cx] += 1;
    }

    pub fn get(&self, cx: usize, cy: usize) -> u64 {
        self.counts[cy * self.nx + cx]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.counts.chunks(self.nx) {
            let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(","));
        }
        s
    }

    /// Binary greyscale image, farthest row at the top, scaled so the busiest cell is white.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        let mut out = format!("P5\n{} {}\n255\n", self.nx, self.ny).into_bytes();
        for row in self.counts.chunks(self.nx).rev() {
            out.extend(row.iter().map(|&c| ((c as f64 / max as f64) * 255.0).round() as u8));
        }
        out
    }
}

/// Tallies every ranged detection onto the floor grid. Detections without a
/// range estimate are skipped.
pub fn heatmap(frames: &[FrameDetections], config: &HeatmapConfig) -> Result<OccupancyGrid> {
    let mut grid = OccupancyGrid::new(config)?;
    for f in frames {
        for d in &f.detections {
            let Some(r) = d.best_range() else { continue };
            let x_norm = d.bbox.center().0 / f.frame_width as f64;
            let (x, y) = ground_point(x_norm, r, f.fov_h_deg);
            grid.add(x, y);
        }
    }
    Ok(grid)
}
