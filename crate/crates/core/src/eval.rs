//! Detection and ranging metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::types::{BBox, Detection, FrameDetections, GroundTruthRecord, TargetTruth};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_RANGE_BINS: [f64; 3] = [0.0, 3.0, 4.5];

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let Some(i) = a.intersection(b) else {
        return 0.0;
    };
    let inter = i.area() as f64;
    inter / (a.area() as f64 + b.area() as f64 - inter)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameMatch {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `(detection index, truth index, iou)`, in match order.
    pub pairs: Vec<(usize, usize, f64)>,
}

/// Greedy one-to-one matching, highest IoU first. Pairs below `iou_thr` never match.
/// Ties go to the lower detection index, then the lower truth index.
pub fn match_frame(detections: &[BBox], truths: &[BBox], iou_thr: f64) -> FrameMatch {
    let mut cands: Vec<(usize, usize, f64)> = Vec::new();
    for (i, d) in detections.iter().enumerate() {
        for (j, t) in truths.iter().enumerate() {
            let v = iou(d, t);
            if v >= iou_thr && v > 0.0 {
                cands.push((i, j, v));
            }
        }
    }
    cands.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_d = vec![false; detections.len()];
    let mut used_t = vec![false; truths.len()];
    let mut pairs = Vec::new();
    for (i, j, v) in cands {
        if !used_d[i] && !used_t[j] {
            used_d[i] = true;
            used_t[j] = true;
            pairs.push((i, j, v));
        }
    }
    FrameMatch {
        tp: pairs.len(),
        fp: detections.len() - pairs.len(),
        fn_: truths.len() - pairs.len(),
        pairs,
    }
}

/// `2TP / (2TP + FP + FN)`, equal to the harmonic mean of precision and recall.
/// Absent when there is nothing to score.
pub fn f1(tp: usize, fp: usize, fn_: usize) -> Option<f64> {
    let denom = 2 * tp + fp + fn_;
    (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
}

pub fn precision(tp: usize, fp: usize) -> Option<f64> {
    (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64)
}

pub fn recall(tp: usize, fn_: usize) -> Option<f64> {
    (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64)
}

/// A matched `(true range, estimated range)` pair in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangePair {
    pub truth: f64,
    pub estimate: f64,
}

pub fn mae(pairs: &[RangePair]) -> Option<f64> {
    (!pairs.is_empty())
        .then(|| pairs.iter().map(|p| (p.estimate - p.truth).abs()).sum::<f64>() / pairs.len() as f64)
}

pub fn relative_error(pairs: &[RangePair]) -> Option<f64> {
    (!pairs.is_empty()).then(|| {
        pairs
            .iter()
            .map(|p| (p.estimate - p.truth).abs() / p.truth)
            .sum::<f64>()
            / pairs.len() as f64
    })
}

pub fn rmse(pairs: &[RangePair]) -> Option<f64> {
    (!pairs.is_empty()).then(|| {
        (pairs.iter().map(|p| (p.estimate - p.truth).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeBin {
    /// Exclusive, except for the first bin which includes it.
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mae_m: Option<f64>,
    pub relative_error: Option<f64>,
}

/// Breakdown by true range; the first bin is closed `[lo, hi]`, later ones `(lo, hi]`.
pub fn range_bins(pairs: &[RangePair], edges: &[f64]) -> Vec<RangeBin> {
    edges
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let inside: Vec<RangePair> = pairs
                .iter()
                .copied()
                .filter(|p| (p.truth > w[0] || (i == 0 && p.truth >= w[0])) && p.truth <= w[1])
                .collect();
            RangeBin {
                lo: w[0],
                hi: w[1],
                count: inside.len(),
                mae_m: mae(&inside),
                relative_error: relative_error(&inside),
            }
        })
        .collect()
}

/// Nearest-rank percentile of `values` for `q` in `(0, 1]`.
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub quantile: f64,
    pub abs_error_m: f64,
}

/// Absolute-error CDF sampled every 5%.
pub fn error_cdf(pairs: &[RangePair]) -> Vec<CdfPoint> {
    let errs: Vec<f64> = pairs.iter().map(|p| (p.estimate - p.truth).abs()).collect();
    (1..=20)
        .filter_map(|i| {
            let q = i as f64 * 0.05;
            percentile(&errs, q).map(|e| CdfPoint {
                quantile: q,
                abs_error_m: e,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub frame_index: u64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub mae_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Wall-clock creation time in seconds since the Unix epoch; the only
    /// field that differs between identical runs.
    pub generated_at: Option<u64>,
    pub frames: usize,
    pub iou_threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub matched_ranges: usize,
    /// Uses the smoothed range when present, else the raw one.
    pub mae_m: Option<f64>,
    pub rmse_m: Option<f64>,
    pub relative_error: Option<f64>,
    pub raw_mae_m: Option<f64>,
    pub p80_abs_error_m: Option<f64>,
    pub bins: Vec<RangeBin>,
    pub cdf: Vec<CdfPoint>,
    #[serde(skip)]
    pub rows: Vec<FrameRow>,
}

/// Scores a detection stream against labels, frame by frame.
///
/// Frames present on only one side count as having no entries on the other.
/// Truth boxes are rescaled to the detection frame's pixel grid when the two differ.
pub fn evaluate(detections: &[FrameDetections], labels: &[GroundTruthRecord], iou_thr: f64) -> EvalReport {
    let det_by: BTreeMap<u64, &FrameDetections> = detections.iter().map(|d| (d.frame_index, d)).collect();
    let gt_by: BTreeMap<u64, &GroundTruthRecord> = labels.iter().map(|g| (g.frame_index, g)).collect();
    let mut frames: Vec<u64> = det_by.keys().chain(gt_by.keys()).copied().collect();
    frames.sort_unstable();
    frames.dedup();

    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut best_pairs = Vec::new();
    let mut raw_pairs = Vec::new();
    let mut rows = Vec::new();
    for &fi in &frames {
        let mut dets: Vec<&Detection> = det_by.get(&fi).map(|d| d.detections.iter().collect()).unwrap_or_default();
        dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then(a.bbox.x0().cmp(&b.bbox.x0())));
        let det_scale = det_by.get(&fi).map(|d| d.scale);
        let truths: Vec<&TargetTruth> = gt_by.get(&fi).map(|g| g.targets.iter().collect()).unwrap_or_default();
        let gt_scale = gt_by.get(&fi).map(|g| g.scale).unwrap_or(1);
        let truth_boxes: Vec<BBox> = truths
            .iter()
            .map(|t| t.bbox.rescale(gt_scale, det_scale.unwrap_or(gt_scale)))
            .collect();
        let det_boxes: Vec<BBox> = dets.iter().map(|d| d.bbox).collect();
        let m = match_frame(&det_boxes, &truth_boxes, iou_thr);
        tp += m.tp;
        fp += m.fp;
        fn_ += m.fn_;
        let mut frame_pairs = Vec::new();
        for &(di, ti, _) in &m.pairs {
            let truth = truths[ti].range_m;
            if let Some(est) = dets[di].best_range() {
                frame_pairs.push(RangePair { truth, estimate: est });
            }
            if let Some(est) = dets[di].range_m {
                raw_pairs.push(RangePair { truth, estimate: est });
            }
        }
        rows.push(FrameRow {
            frame_index: fi,
            tp: m.tp,
            fp: m.fp,
            fn_: m.fn_,
            mae_m: mae(&frame_pairs),
        });
        best_pairs.extend(frame_pairs);
    }
    let errs: Vec<f64> = best_pairs.iter().map(|p| (p.estimate - p.truth).abs()).collect();
    EvalReport {
        generated_at: None,
        frames: frames.len(),
        iou_threshold: iou_thr,
        tp,
        fp,
        fn_,
        precision: precision(tp, fp),
        recall: recall(tp, fn_),
        f1: f1(tp, fp, fn_),
        matched_ranges: best_pairs.len(),
        mae_m: mae(&best_pairs),
        rmse_m: rmse(&best_pairs),
        relative_error: relative_error(&best_pairs),
        raw_mae_m: mae(&raw_pairs),
        p80_abs_error_m: percentile(&errs, 0.8),
        bins: range_bins(&best_pairs, &DEFAULT_RANGE_BINS),
        cdf: error_cdf(&best_pairs),
        rows,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Per-frame rows as CSV with a header line.
pub fn rows_csv(rows: &[FrameRow]) -> String {
    let mut s = String::from("frame_index,tp,fp,fn,mae_m\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.frame_index, r.tp, r.fp, r.fn_, opt(r.mae_m));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x0: u32, y0: u32, x1: u32, y1: u32) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn iou_fixtures() {
        let a = b(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(20, 20, 30, 30)), 0.0);
        assert!((iou(&a, &b(5, 0, 15, 10)) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn matching_counts() {
        let m = match_frame(&[], &[], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 0, 0));
        let t = b(0, 0, 10, 10);
        // iou 0.6 with width 10 vs 10x... use a box covering 6 of 10 columns.
        let d = b(0, 0, 10, 6);
        assert!((iou(&d, &t) - 0.6).abs() < 1e-12);
        assert_eq!(match_frame(&[d], &[t], 0.5).tp, 1);
        let m = match_frame(&[t, d], &[t], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
        assert_eq!(m.pairs[0].0, 0);
    }

    #[test]
    fn f1_edges() {
        assert_eq!(f1(5, 0, 0), Some(1.0));
        assert_eq!(f1(0, 0, 3), Some(0.0));
        assert_eq!(f1(0, 0, 0), None);
        let p: f64 = 0.888;
        assert!((2.0 * p * p / (p + p) - p).abs() < 1e-12);
    }

    #[test]
    fn range_error_fixture() {
        let pairs = [
            RangePair { truth: 2.0, estimate: 2.1 },
            RangePair { truth: 3.0, estimate: 2.7 },
        ];
        assert!((mae(&pairs).unwrap() - 0.2).abs() < 1e-12);
        assert!((relative_error(&pairs).unwrap() - 0.075).abs() < 1e-12);
        assert_eq!(mae(&[]), None);
        let bins = range_bins(&pairs, &DEFAULT_RANGE_BINS);
        assert_eq!(bins[0].count, 2);
        assert_eq!(bins[1].count, 0);
        assert_eq!(bins[1].mae_m, None);
    }

    #[test]
    fn percentile_nearest_rank() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(percentile(&v, 0.8), Some(4.0));
        assert_eq!(percentile(&v, 1.0), Some(5.0));
        assert_eq!(percentile(&[], 0.5), None);
    }
}
