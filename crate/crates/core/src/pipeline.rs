//! Frame-by-frame detection, tracking and ranging.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::iou;
use crate::fusion::{associate, stacked_tracks, temporal_consistency, vertical_stack_split};
use crate::preprocess::{preprocess, DEFAULT_CUTOFF_C, DEFAULT_SCALE};
use crate::ranging::{kalman_update, make_feature, KalmanConfig, KalmanState, RangingModel, MIN_RANGE_M};
use crate::spatial::{detect, DetectorConfig};
use crate::tracker::{kcf_init, kcf_update, split_or_merge, Track, TrackerConfig};
use crate::types::{
    BBox, Detection, FrameDetections, GrayFrame, GroundTruthRecord, RawFrame, Roi, TemperatureMap, DETECTION_SCHEMA_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub scale: usize,
    pub cutoff_c: f64,
    pub detector: DetectorConfig,
    pub tracker: TrackerConfig,
    pub association_iou: f64,
    pub kalman: KalmanConfig,
    pub use_kalman: bool,
    /// Replace every ROI center by the frame center before ranging.
    pub neutral_center: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            scale: DEFAULT_SCALE,
            cutoff_c: DEFAULT_CUTOFF_C,
            detector: DetectorConfig::default(),
            tracker: TrackerConfig::default(),
            association_iou: 0.3,
            kalman: KalmanConfig::default(),
            use_kalman: true,
            neutral_center: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::Config("scale must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.association_iou) {
            return Err(Error::Config("association_iou must lie in [0, 1]".into()));
        }
        self.detector.validate()
    }
}

/// Everything the pipeline produced for one frame.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub detections: FrameDetections,
    pub rois: Vec<Roi>,
    /// Spatial detections before temporal filtering.
    pub raw_boxes: Vec<BBox>,
}

/// Stateful per-stream processor. Feed frames in time order.
pub struct Pipeline {
    config: PipelineConfig,
    model: Option<RangingModel>,
    tracks: Vec<Track>,
    next_id: u64,
    previous_raw: Option<Vec<BBox>>,
    pending: Vec<BBox>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, model: Option<RangingModel>) -> Result<Self> {
        config.validate()?;
        if let Some(m) = &model {
            m.validate()?;
        }
        Ok(Self {
            config,
            model,
            tracks: Vec::new(),
            next_id: 1,
            previous_raw: None,
            pending: Vec::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Runs one frame through conditioning, detection, tracking and ranging.
    pub fn process(&mut self, frame: &RawFrame, frame_index: u64) -> Result<FrameOutput> {
        let (map, gray) = preprocess(frame, self.config.scale, self.config.cutoff_c)?;
        let raw = detect(&map, &gray, &self.config.detector)?;
        self.step(frame, frame_index, &map, &gray, raw)
    }

    /// The tracking and ranging half of [`Pipeline::process`], for callers that
    /// already hold the conditioned frame and its spatial detections.
    pub fn step(
        &mut self,
        frame: &RawFrame,
        frame_index: u64,
        map: &TemperatureMap,
        gray: &GrayFrame,
        raw: Vec<BBox>,
    ) -> Result<FrameOutput> {
        let cfg = self.config;
        let t_cfg = cfg.tracker;
        let live: Vec<BBox> = self.tracks.iter().map(|t| t.bbox).collect();
        let survivors = temporal_consistency(&raw, self.previous_raw.as_deref(), &live);
        self.previous_raw = Some(raw.clone());

        for t in &mut self.tracks {
            kcf_update(t, gray);
            t.matched = false;
        }

        // A detection covering several stacked tracks is cut into one box per track.
        let track_boxes: Vec<BBox> = self.tracks.iter().map(|t| t.bbox).collect();
        let mut dets = Vec::with_capacity(survivors.len());
        for d in survivors {
            let stack = stacked_tracks(&d, &track_boxes, t_cfg.h_thr);
            if stack.len() >= 2 {
                dets.extend(vertical_stack_split(map, d, &stack));
            } else {
                dets.push(d);
            }
        }

        let assoc = associate(&dets, &track_boxes, cfg.association_iou);
        for &(di, ti) in &assoc.matches {
            let t = &mut self.tracks[ti];
            t.kcf.correct(gray, dets[di]);
            t.set_bbox(dets[di]);
            t.misses = 0;
            t.matched = true;
        }
        for &ti in &assoc.unmatched_tracks {
            self.tracks[ti].misses += 1;
        }
        self.tracks.retain(|t| t.misses <= t_cfg.miss_limit);

        // New identities need a detection seen on two consecutive frames.
        let mut next_pending = Vec::new();
        for &di in &assoc.unmatched_detections {
            let d = dets[di];
            let confirmed = self.pending.iter().any(|p| iou(&d, p) > 0.0);
            if confirmed && d.width() >= 2 && d.height() >= 2 {
                self.tracks.push(kcf_init(gray, d, self.next_id, &t_cfg.kcf)?);
                self.next_id += 1;
            } else {
                next_pending.push(d);
            }
        }
        self.pending = next_pending;

        self.tracks = split_or_merge(std::mem::take(&mut self.tracks), map, &t_cfg);

        let t_now = frame.timestamp();
        let dt_default = 1.0 / frame.spec().frame_rate_hz;
        let mut detections = Vec::new();
        let mut rois = Vec::new();
        for t in &mut self.tracks {
            if !(t.matched || t.last_peak >= t_cfg.peak_min) {
                continue;
            }
            let roi = Roi::from_map(map, t.bbox)?;
            let mut range_m = None;
            let mut smoothed = None;
            if let Some(model) = &self.model {
                if let Ok(mut feature) = make_feature(&roi, &model.features) {
                    if cfg.neutral_center {
                        feature.center = (0.5, 0.5);
                    }
                    let r = model.predict_feature(&feature)?;
                    range_m = Some(r);
                    if cfg.use_kalman {
                        let next = match (t.kalman, t.range_time) {
                            (Some(k), Some(prev)) => {
                                let dt = if t_now > prev { t_now - prev } else { dt_default };
                                kalman_update(&k, r, dt)?
                            }
                            _ => KalmanState::initial(r, &cfg.kalman),
                        };
                        t.kalman = Some(next);
                        t.range_time = Some(t_now);
                        smoothed = Some(next.range().max(MIN_RANGE_M));
                    }
                }
            }
            detections.push(Detection {
                bbox: t.bbox,
                track_id: t.id,
                range_m,
                smoothed_range_m: smoothed,
                confidence: if t.matched { 1.0 } else { t.last_peak.clamp(0.0, 1.0) },
            });
            rois.push(roi);
        }

        let spec = frame.spec();
        Ok(FrameOutput {
            detections: FrameDetections {
                version: DETECTION_SCHEMA_VERSION,
                frame_index,
                timestamp: t_now,
                frame_width: map.width(),
                frame_height: map.height(),
                scale: map.scale(),
                fov_h_deg: spec.fov_h_deg,
                fov_v_deg: spec.fov_v_deg,
                detections,
            },
            rois,
            raw_boxes: raw,
        })
    }
}

/// Runs a whole stream through a fresh pipeline.
pub fn run_stream(
    frames: &[RawFrame],
    config: PipelineConfig,
    model: Option<RangingModel>,
) -> Result<Vec<FrameDetections>> {
    let mut p = Pipeline::new(config, model)?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| p.process(f, i as u64).map(|o| o.detections))
        .collect()
}

/// Training examples from labeled frames: one ROI per visible truth box, cut
/// from the conditioned map, paired with the true range.
///
/// Boxes are rescaled from the label grid to the map grid and clipped to the frame.
pub fn truth_rois(
    frames: &[RawFrame],
    labels: &[GroundTruthRecord],
    scale: usize,
    cutoff_c: f64,
) -> Result<(Vec<Roi>, Vec<f64>)> {
    let by_index: BTreeMap<u64, &GroundTruthRecord> = labels.iter().map(|g| (g.frame_index, g)).collect();
    let mut rois = Vec::new();
    let mut ranges = Vec::new();
    for (i, frame) in frames.iter().enumerate() {
        let Some(rec) = by_index.get(&(i as u64)) else { continue };
        if rec.targets.is_empty() {
            continue;
        }
        let (map, _) = preprocess(frame, scale, cutoff_c)?;
        for t in &rec.targets {
            let b = t.bbox.rescale(rec.scale, scale);
            let x1 = b.x1().min(map.width() as u32);
            let y1 = b.y1().min(map.height() as u32);
            if x1 <= b.x0() + 1 || y1 <= b.y0() + 1 {
                continue;
            }
            rois.push(Roi::from_map(&map, BBox::new(b.x0(), b.y0(), x1, y1)?)?);
            ranges.push(t.range_m);
        }
    }
    Ok((rois, ranges))
}
