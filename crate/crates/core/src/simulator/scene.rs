//! Synthetic scenes: people as head and torso ellipses seen through the radiometric model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::radiometry::{attenuated_power, temperature_from_power, RadiometricParams};
use crate::error::{Error, Result};
use crate::types::{BBox, GroundTruthRecord, RawFrame, SensorSpec, Subpage, TargetTruth};

const HEAD_HEIGHT_M: f64 = 0.24;
const HEAD_WIDTH_M: f64 = 0.18;

/// Target pose at one instant. Poses between keyframes are linearly interpolated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    pub range_m: f64,
    pub azimuth_deg: f64,
    /// Elevation of the body's vertical center as seen from the sensor.
    pub elevation_deg: f64,
    /// Overrides the body height (crouching, sitting, lying).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_m: Option<f64>,
}

impl Keyframe {
    /// Pose of a person whose feet rest on the floor, seen by a sensor mounted
    /// `sensor_height_m` above it.
    pub fn grounded(t: f64, range_m: f64, azimuth_deg: f64, height_m: f64, sensor_height_m: f64) -> Self {
        let elevation = ((height_m * 0.5 - sensor_height_m) / range_m).atan().to_degrees();
        Self {
            t,
            range_m,
            azimuth_deg,
            elevation_deg: elevation,
            height_m: Some(height_m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    pub id: u32,
    pub trajectory: Vec<Keyframe>,
    /// Standing (width, height) in metres.
    pub body_size_m: (f64, f64),
    /// Fraction of the skin's excess power over ambient that clothing lets through.
    pub clothing_factor: f64,
    #[serde(default = "yes")]
    pub exposed_head: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubpageMode {
    #[default]
    Full,
    /// Even frames carry subpage A, odd frames subpage B.
    Alternating,
}

fn default_label_scale() -> usize {
    20
}

fn default_supersample() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    #[serde(default)]
    pub spec: SensorSpec,
    #[serde(default)]
    pub params: RadiometricParams,
    #[serde(default)]
    pub targets: Vec<TargetConfig>,
    #[serde(default)]
    pub noise_sigma_c: f64,
    #[serde(default)]
    pub border_bias_strength: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Expansion factor of the pixel grid used for ground-truth boxes.
    #[serde(default = "default_label_scale")]
    pub label_scale: usize,
    /// Sub-samples per pixel axis when integrating the scene over a detector element.
    #[serde(default = "default_supersample")]
    pub supersample: usize,
    #[serde(default)]
    pub subpage_mode: SubpageMode,
}

impl SceneConfig {
    pub fn empty(duration_s: f64, seed: u64) -> Self {
        Self {
            spec: SensorSpec::default(),
            params: RadiometricParams::default(),
            targets: Vec::new(),
            noise_sigma_c: 0.0,
            border_bias_strength: 0.0,
            duration_s,
            seed,
            label_scale: default_label_scale(),
            supersample: default_supersample(),
            subpage_mode: SubpageMode::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.params.validate()?;
        if !(self.noise_sigma_c >= 0.0) {
            return Err(Error::Validation("noise_sigma_c must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.border_bias_strength) {
            return Err(Error::Validation("border_bias_strength must lie in [0, 1]".into()));
        }
        if !(self.duration_s >= 0.0) {
            return Err(Error::Validation("duration_s must be non-negative".into()));
        }
        if self.label_scale == 0 || self.supersample == 0 {
            return Err(Error::Validation("label_scale and supersample must be positive".into()));
        }
        for t in &self.targets {
            if t.trajectory.is_empty() {
                return Err(Error::Validation(format!("target {} has no keyframes", t.id)));
            }
            if t.trajectory.windows(2).any(|w| !(w[0].t < w[1].t)) {
                return Err(Error::Validation(format!(
                    "target {} keyframes must have increasing times",
                    t.id
                )));
            }
            if t.trajectory.iter().any(|k| !(k.range_m > 0.0)) {
                return Err(Error::Validation(format!("target {} has a non-positive range", t.id)));
            }
            if !(0.0..=1.0).contains(&t.clothing_factor) {
                return Err(Error::Validation(format!(
                    "target {} clothing_factor must lie in [0, 1]",
                    t.id
                )));
            }
            if !(t.body_size_m.0 > 0.0 && t.body_size_m.1 > 0.0) {
                return Err(Error::Validation(format!("target {} body size must be positive", t.id)));
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.spec.frame_rate_hz).round() as usize
    }

    pub fn frame_time(&self, index: usize) -> f64 {
        index as f64 / self.spec.frame_rate_hz
    }
}

#[derive(Debug, Clone, Copy)]
struct Pose {
    range_m: f64,
    azimuth_rad: f64,
    elevation_rad: f64,
    height_m: f64,
}

fn pose_at(target: &TargetConfig, t: f64) -> Option<Pose> {
    let traj = &target.trajectory;
    let first = traj.first()?;
    let last = traj.last()?;
    const EPS: f64 = 1e-9;
    if t < first.t - EPS || t > last.t + EPS {
        return None;
    }
    let (a, b, w) = match traj.windows(2).find(|w| t <= w[1].t) {
        Some(w) => {
            let span = w[1].t - w[0].t;
            (w[0], w[1], ((t - w[0].t) / span).clamp(0.0, 1.0))
        }
        None => (*last, *last, 0.0),
    };
    let lerp = |x: f64, y: f64| x + (y - x) * w;
    let standing = target.body_size_m.1;
    Some(Pose {
        range_m: lerp(a.range_m, b.range_m),
        azimuth_rad: lerp(a.azimuth_deg, b.azimuth_deg).to_radians(),
        elevation_rad: lerp(a.elevation_deg, b.elevation_deg).to_radians(),
        height_m: lerp(a.height_m.unwrap_or(standing), b.height_m.unwrap_or(standing)),
    })
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    #[inline]
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.rx;
        let dy = (y - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        (self.cx - self.rx, self.cy - self.ry, self.cx + self.rx, self.cy + self.ry)
    }
}

/// A target laid out in sensor-pixel coordinates.
#[derive(Debug, Clone, Copy)]
struct Projected {
    id: u32,
    range_m: f64,
    height_m: f64,
    head: Ellipse,
    torso: Ellipse,
    head_power: f64,
    torso_power: f64,
}

impl Projected {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let (a0, b0, a1, b1) = self.head.bounds();
        let (c0, d0, c1, d1) = self.torso.bounds();
        (a0.min(c0), b0.min(d0), a1.max(c1), b1.max(d1))
    }
}

/// Pixel mapping used by the renderer: linear in azimuth, pinhole vertically.
#[derive(Debug, Clone, Copy)]
pub struct SensorGeometry {
    pub width: f64,
    pub height: f64,
    /// Pixels per radian of azimuth.
    pub px_per_rad_h: f64,
    /// Vertical focal length in pixels.
    pub focal_v: f64,
}

impl SensorGeometry {
    pub fn new(spec: &SensorSpec) -> Self {
        let width = spec.width_px as f64;
        let height = spec.height_px as f64;
        Self {
            width,
            height,
            px_per_rad_h: width / spec.fov_h_deg.to_radians(),
            focal_v: height * 0.5 / (spec.fov_v_deg.to_radians() * 0.5).tan(),
        }
    }

    pub fn column_of_azimuth(&self, azimuth_rad: f64) -> f64 {
        self.width * 0.5 + azimuth_rad * self.px_per_rad_h
    }

    pub fn row_of_elevation(&self, elevation_rad: f64) -> f64 {
        self.height * 0.5 - self.focal_v * elevation_rad.tan()
    }
}

fn project(scene: &SceneConfig, geom: &SensorGeometry, target: &TargetConfig, pose: Pose) -> Projected {
    let p = &scene.params;
    let r = pose.range_m;
    let cx = geom.column_of_azimuth(pose.azimuth_rad);
    let cy = geom.row_of_elevation(pose.elevation_rad);
    let width_m = target.body_size_m.0;
    let height_px = geom.focal_v * pose.height_m / r;
    let top = cy - height_px * 0.5;
    let bottom = cy + height_px * 0.5;

    let head_h_m = HEAD_HEIGHT_M.min(0.35 * pose.height_m);
    let head_w_m = HEAD_WIDTH_M.min(0.6 * width_m);
    let head_ry = geom.focal_v * head_h_m * 0.5 / r;
    let head = Ellipse {
        cx,
        cy: top + head_ry,
        rx: geom.px_per_rad_h * head_w_m * 0.5 / r,
        ry: head_ry,
    };
    let torso_top = top + 1.7 * head_ry;
    let torso = Ellipse {
        cx,
        cy: (torso_top + bottom) * 0.5,
        rx: geom.px_per_rad_h * width_m * 0.5 / r,
        ry: ((bottom - torso_top) * 0.5).max(head_ry * 0.5),
    };

    let skin = p.source_power();
    let ambient = p.ambient_power();
    let clothed = ambient + target.clothing_factor * (skin - ambient);
    Projected {
        id: target.id,
        range_m: r,
        height_m: pose.height_m,
        head,
        torso,
        head_power: if target.exposed_head { skin } else { clothed },
        torso_power: clothed,
    }
}

/// Renders the scene at time `t` (seconds) into one raw frame and its labels.
pub fn render_frame(scene: &SceneConfig, t: f64) -> Result<(RawFrame, GroundTruthRecord)> {
    let frame_index = (t * scene.spec.frame_rate_hz).round().max(0.0) as u64;
    render_indexed(scene, t, frame_index)
}

/// Renders frame `index` of the scene's regular frame clock.
pub fn render_index(scene: &SceneConfig, index: usize) -> Result<(RawFrame, GroundTruthRecord)> {
    render_indexed(scene, scene.frame_time(index), index as u64)
}

pub fn render_stream(scene: &SceneConfig) -> Result<(Vec<RawFrame>, Vec<GroundTruthRecord>)> {
    scene.validate()?;
    let (frames, labels) = (0..scene.frame_count())
        .map(|i| render_index(scene, i))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok((frames, labels))
}

fn render_indexed(scene: &SceneConfig, t: f64, frame_index: u64) -> Result<(RawFrame, GroundTruthRecord)> {
    scene.validate()?;
    if t < 0.0 || t > scene.duration_s + 1e-9 {
        return Err(Error::Precondition(format!(
            "time {t} outside scene duration [0, {}]",
            scene.duration_s
        )));
    }
    let spec = scene.spec;
    let geom = SensorGeometry::new(&spec);
    let (w, h) = (spec.width_px, spec.height_px);

    let mut visible: Vec<Projected> = scene
        .targets
        .iter()
        .filter_map(|tg| pose_at(tg, t).map(|pose| project(scene, &geom, tg, pose)))
        .collect();
    // Painter's order: the nearest body occludes the ones behind it.
    visible.sort_by(|a, b| a.range_m.total_cmp(&b.range_m).then(a.id.cmp(&b.id)));

    let params = &scene.params;
    let ambient = params.ambient_power();
    let n = scene.supersample;
    let inv_n = 1.0 / n as f64;
    let half_w = w as f64 * 0.5;
    let mut values = Vec::with_capacity(w * h);
    for py in 0..h {
        for px in 0..w {
            let mut acc = 0.0;
            for sy in 0..n {
                let y = py as f64 + (sy as f64 + 0.5) * inv_n;
                for sx in 0..n {
                    let x = px as f64 + (sx as f64 + 0.5) * inv_n;
                    let hit = visible.iter().find_map(|tg| {
                        if tg.head.contains(x, y) {
                            Some((tg.head_power, tg.range_m))
                        } else if tg.torso.contains(x, y) {
                            Some((tg.torso_power, tg.range_m))
                        } else {
                            None
                        }
                    });
                    acc += match hit {
                        Some((source, r)) => {
                            let bias = 1.0 + scene.border_bias_strength * ((x - half_w).abs() / half_w);
                            attenuated_power(source, ambient, params.gamma * bias, r)
                        }
                        None => ambient,
                    };
                }
            }
            values.push(temperature_from_power(acc * inv_n * inv_n));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    rng.set_stream(frame_index);
    let noise = Normal::new(0.0, scene.noise_sigma_c.max(0.0))
        .map_err(|e| Error::Validation(e.to_string()))?;
    let subpage = match scene.subpage_mode {
        SubpageMode::Full => Subpage::Full,
        SubpageMode::Alternating if frame_index % 2 == 0 => Subpage::A,
        SubpageMode::Alternating => Subpage::B,
    };
    let raw: Vec<f32> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let jitter = if scene.noise_sigma_c > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            if subpage.is_missing_cell(i % w, i / w) {
                f32::NAN
            } else {
                (v + jitter) as f32
            }
        })
        .collect();
    let frame = RawFrame::new(spec, raw, t, subpage)?;

    let s = scene.label_scale as f64;
    let targets = visible
        .iter()
        .filter_map(|tg| {
            let (x0, y0, x1, y1) = tg.bounds();
            let full = (x1 - x0) * (y1 - y0);
            let inside = ((x1.min(w as f64) - x0.max(0.0)).max(0.0)) * ((y1.min(h as f64) - y0.max(0.0)).max(0.0));
            if inside < 0.5 * full {
                return None;
            }
            let bbox = BBox::from_f64_clipped(
                x0 * s,
                y0 * s,
                x1 * s,
                y1 * s,
                w * scene.label_scale,
                h * scene.label_scale,
            )?;
            Some(TargetTruth {
                id: tg.id,
                bbox,
                range_m: tg.range_m,
                real_height_m: tg.height_m,
            })
        })
        .collect::<Vec<_>>();
    let mut targets = targets;
    targets.sort_by_key(|t| t.id);
    Ok((frame, GroundTruthRecord::new(frame_index, scene.label_scale, targets)))
}
