//! Combining per-frame detections with live tracks.

use crate::error::Result;
use crate::eval::iou;
use crate::tracker::{overlap_ratios, seam_row};
use crate::types::{BBox, Roi, TemperatureMap};

/// Keeps detections that overlap a detection from the previous frame or a live
/// track. With no previous frame everything passes.
pub fn temporal_consistency(current: &[BBox], previous: Option<&[BBox]>, tracks: &[BBox]) -> Vec<BBox> {
    let Some(previous) = previous else {
        return current.to_vec();
    };
    current
        .iter()
        .copied()
        .filter(|d| previous.iter().chain(tracks).any(|o| iou(d, o) > 0.0))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    /// `(detection index, track index)`.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_tracks: Vec<usize>,
}

/// Greedy IoU matching, highest first, requiring at least `threshold`.
pub fn associate(detections: &[BBox], tracks: &[BBox], threshold: f64) -> Association {
    let mut cands = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        for (j, t) in tracks.iter().enumerate() {
            let v = iou(d, t);
            if v >= threshold && v > 0.0 {
                cands.push((v, i, j));
            }
        }
    }
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; detections.len()];
    let mut used_t = vec![false; tracks.len()];
    let mut matches = Vec::new();
    for (_, i, j) in cands {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            matches.push((i, j));
        }
    }
    Association {
        matches,
        unmatched_detections: (0..detections.len()).filter(|&i| !used_d[i]).collect(),
        unmatched_tracks: (0..tracks.len()).filter(|&j| !used_t[j]).collect(),
    }
}

/// Splits one detection into a stack of boxes, one per track, cutting at the
/// coolest row between consecutive track centers.
///
/// Tracks are ordered by vertical center. With fewer than two tracks the
/// detection is returned unchanged.
pub fn vertical_stack_split(map: &TemperatureMap, detection: BBox, tracks: &[BBox]) -> Vec<BBox> {
    if tracks.len() < 2 {
        return vec![detection];
    }
    let mut centers: Vec<f64> = tracks.iter().map(|t| t.center().1).collect();
    centers.sort_by(f64::total_cmp);
    let cols = (detection.x0(), detection.x1());
    let mut cuts = Vec::new();
    let mut floor = detection.y0() + 1;
    for w in centers.windows(2) {
        let lo = (w[0].ceil() as u32).clamp(floor, detection.y1() - 1);
        let hi = (w[1].floor() as u32).clamp(lo, detection.y1() - 1);
        let row = seam_row(map, cols, (lo, hi));
        if row >= floor && row < detection.y1() {
            cuts.push(row);
            floor = row + 1;
        }
    }
    let mut bounds = vec![detection.y0()];
    bounds.extend(cuts);
    bounds.push(detection.y1());
    bounds
        .windows(2)
        .filter_map(|w| detection.with_rows(w[0], w[1]).ok())
        .collect()
}

/// Tracks that sit on top of one another inside `detection`: each overlaps the
/// detection horizontally by more than `h_thr`, and neighbours in vertical order
/// overlap each other horizontally by more than `h_thr` too.
pub fn stacked_tracks(detection: &BBox, tracks: &[BBox], h_thr: f64) -> Vec<BBox> {
    let mut hits: Vec<BBox> = tracks
        .iter()
        .copied()
        .filter(|t| iou(detection, t) > 0.0 && overlap_ratios(detection, t).horizontal > h_thr)
        .collect();
    hits.sort_by(|a, b| a.center().1.total_cmp(&b.center().1));
    let stacked = hits.len() >= 2
        && hits
            .windows(2)
            .all(|w| overlap_ratios(&w[0], &w[1]).horizontal > h_thr && w[0].center().1 < w[1].center().1);
    if stacked {
        hits
    } else {
        Vec::new()
    }
}

pub fn extract_rois(map: &TemperatureMap, boxes: &[BBox]) -> Result<Vec<Roi>> {
    boxes.iter().map(|b| Roi::from_map(map, *b)).collect()
}
