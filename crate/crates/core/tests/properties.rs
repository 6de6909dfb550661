use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thermal_ranging::applications::{detect_fall, heatmap, FallConfig, HeatmapConfig};
use thermal_ranging::eval::{iou, match_frame};
use thermal_ranging::gbrt::{fit, GbrtParams};
use thermal_ranging::preprocess::{clamp_cutoff, interpolate};
use thermal_ranging::ranging::{kalman_update, make_feature, FeatureConfig, KalmanConfig, KalmanState};
use thermal_ranging::spatial::{between_class_variance, multi_otsu};
use thermal_ranging::{BBox, Detection, FrameDetections, Grid, RawFrame, Roi, SensorSpec, Subpage};

fn small_spec(w: usize, h: usize) -> SensorSpec {
    SensorSpec {
        width_px: w,
        height_px: h,
        ..SensorSpec::default()
    }
}

fn frame_strategy() -> impl Strategy<Value = RawFrame> {
    (2usize..8, 2usize..6).prop_flat_map(|(w, h)| {
        prop::collection::vec(15.0f32..40.0, w * h)
            .prop_map(move |v| RawFrame::new(small_spec(w, h), v, 0.0, Subpage::Full).unwrap())
    })
}

fn bbox_strategy(limit: u32) -> impl Strategy<Value = BBox> {
    (0..limit - 1, 0..limit - 1, 1..limit, 1..limit).prop_map(move |(x, y, w, h)| {
        let x1 = (x + w).min(limit);
        let y1 = (y + h).min(limit);
        BBox::new(x, y, x1.max(x + 1), y1.max(y + 1)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interpolation_stays_within_input_range(frame in frame_strategy(), scale in 1usize..6) {
        let map = interpolate(&frame, scale).unwrap();
        let lo = frame.values().iter().copied().fold(f32::INFINITY, f32::min) as f64;
        let hi = frame.values().iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        prop_assert_eq!(map.width(), frame.width() * scale);
        prop_assert_eq!(map.height(), frame.height() * scale);
        for &v in map.grid().as_slice() {
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn clamping_twice_changes_nothing(frame in frame_strategy(), cutoff in 20.0f64..38.0) {
        let map = interpolate(&frame, 3).unwrap();
        let once = clamp_cutoff(&map, cutoff);
        prop_assert!(once.grid().as_slice().iter().all(|&v| v <= cutoff));
        prop_assert_eq!(clamp_cutoff(&once, cutoff), once);
    }

    #[test]
    fn otsu_beats_random_anchor_tuples(
        c in prop::collection::vec(0.0f64..10.0, 4..40),
        k in 2usize..4,
        seed in any::<u64>(),
    ) {
        let support = c.iter().filter(|&&v| v != 0.0).count();
        prop_assume!(support >= k);
        let best = multi_otsu(&c, k).unwrap();
        prop_assert_eq!(best.len(), k - 1);
        prop_assert!(best.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(best[0] > 0 && *best.last().unwrap() < c.len());
        let v_best = between_class_variance(&c, &best);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let mut a: Vec<usize> = Vec::new();
            while a.len() < k - 1 {
                let x = rng.random_range(1..c.len());
                if !a.contains(&x) {
                    a.push(x);
                }
            }
            a.sort_unstable();
            prop_assert!(between_class_variance(&c, &a) <= v_best + 1e-9 * v_best.abs().max(1.0));
        }
    }

    #[test]
    fn iou_is_symmetric_and_reflexive(a in bbox_strategy(64), b in bbox_strategy(64)) {
        prop_assert_eq!(iou(&a, &b), iou(&b, &a));
        prop_assert_eq!(iou(&a, &a), 1.0);
        let v = iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn matching_conserves_counts(
        dets in prop::collection::vec(bbox_strategy(40), 0..8),
        truths in prop::collection::vec(bbox_strategy(40), 0..8),
        thr in 0.1f64..0.9,
    ) {
        let m = match_frame(&dets, &truths, thr);
        prop_assert_eq!(m.tp + m.fp, dets.len());
        prop_assert_eq!(m.tp + m.fn_, truths.len());
        prop_assert_eq!(m.pairs.len(), m.tp);
        for &(_, _, v) in &m.pairs {
            prop_assert!(v >= thr);
        }
    }

    #[test]
    fn feature_shape_ignores_roi_size(w in 4usize..60, h in 2usize..80, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patch = Grid::from_fn(w, h, |_, _| rng.random_range(20.0..37.0));
        let roi = Roi::from_patch(BBox::new(0, 0, w as u32, h as u32).unwrap(), patch, (640, 480)).unwrap();
        for with_center in [true, false] {
            let cfg = FeatureConfig { with_center, ..FeatureConfig::default() };
            let f = make_feature(&roi, &cfg).unwrap();
            prop_assert_eq!(f.to_vec(with_center).len(), cfg.len());
            prop_assert!(f.tau.windows(2).all(|p| p[0] >= p[1]));
            prop_assert!((0.0..=1.0).contains(&f.center.0) && (0.0..=1.0).contains(&f.center.1));
        }
    }

    #[test]
    fn mirrored_patch_gives_the_same_tau(cols in 1usize..15, h in 2usize..40, seed in any::<u64>()) {
        // With four pooling columns the cell boundaries are mirror symmetric
        // only when the width divides evenly.
        let w = 4 * cols;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patch = Grid::from_fn(w, h, |_, _| rng.random_range(20.0..37.0));
        let mirrored = Grid::from_fn(w, h, |x, y| *patch.get(w - 1 - x, y));
        let bbox = BBox::new(0, 0, w as u32, h as u32).unwrap();
        let cfg = FeatureConfig::default();
        let a = make_feature(&Roi::from_patch(bbox, patch, (640, 480)).unwrap(), &cfg).unwrap();
        let b = make_feature(&Roi::from_patch(bbox, mirrored, (640, 480)).unwrap(), &cfg).unwrap();
        prop_assert_eq!(a.tau, b.tau);
    }

    #[test]
    fn kalman_covariance_stays_psd(
        z in prop::collection::vec(0.3f64..6.0, 1..60),
        dt in 0.01f64..0.5,
        q in 0.01f64..5.0,
        r in 0.001f64..2.0,
    ) {
        let cfg = KalmanConfig { process_noise: q, measurement_noise: r, ..KalmanConfig::default() };
        let mut s = KalmanState::initial(z[0], &cfg);
        for &m in &z[1..] {
            s = kalman_update(&s, m, dt).unwrap();
            let p = s.p;
            prop_assert_eq!(p[0][1], p[1][0]);
            prop_assert!(p[0][0] >= 0.0 && p[1][1] >= 0.0);
            prop_assert!(p[0][0] * p[1][1] - p[0][1] * p[1][0] >= -1e-9 * (p[0][0] * p[1][1]).max(1e-12));
            prop_assert!(s.range().is_finite());
        }
    }

    #[test]
    fn softer_fall_threshold_never_loses_events(
        steps in prop::collection::vec(-0.3f64..0.3, 10..80),
        v in 0.3f64..2.0,
        softer in 0.0f64..1.0,
    ) {
        let mut h = 1.7;
        let history: Vec<(f64, f64)> = steps
            .iter()
            .enumerate()
            .map(|(i, d)| {
                h = (h + d).clamp(0.2, 2.0);
                (i as f64 / 16.0, h)
            })
            .collect();
        let strict = FallConfig { v_fall: v, ..FallConfig::default() };
        let loose = FallConfig { v_fall: v * softer, ..FallConfig::default() };
        let a = detect_fall(&history, &strict);
        let b = detect_fall(&history, &loose);
        // Re-arming depends only on the drop, which both rules share, so each
        // strict event has a loose event no later than it.
        prop_assert!(b.len() >= a.len());
        for t in &a {
            prop_assert!(b.iter().any(|u| u <= t));
        }
    }

    #[test]
    fn heatmap_tallies_every_ranged_detection(
        per_frame in prop::collection::vec(prop::collection::vec((0u32..600, 0.2f64..8.0, any::<bool>()), 0..4), 0..12),
    ) {
        let mut ranged = 0u64;
        let frames: Vec<FrameDetections> = per_frame
            .iter()
            .enumerate()
            .map(|(i, dets)| FrameDetections {
                version: 1,
                frame_index: i as u64,
                timestamp: i as f64 / 16.0,
                frame_width: 640,
                frame_height: 480,
                scale: 20,
                fov_h_deg: 110.0,
                fov_v_deg: 75.0,
                detections: dets
                    .iter()
                    .enumerate()
                    .map(|(j, &(x, r, has))| {
                        ranged += has as u64;
                        Detection {
                            bbox: BBox::new(x, 100, x + 40, 300).unwrap(),
                            track_id: j as u64 + 1,
                            range_m: has.then_some(r),
                            smoothed_range_m: None,
                            confidence: 1.0,
                        }
                    })
                    .collect(),
            })
            .collect();
        let grid = heatmap(&frames, &HeatmapConfig::default()).unwrap();
        prop_assert_eq!(grid.total(), ranged);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn values_sharing_a_bin_predict_alike(seed in any::<u64>(), probe in 0usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| r[0] * 2.0 + r[1].sin() - 0.5 * r[2]).collect();
        let params = GbrtParams { n_bins: 16, max_iterations: 30, ..GbrtParams::default() };
        let model = fit(&x, &y, &params).unwrap();
        let base = &x[probe];
        let bins = model.bin(base).unwrap();
        for f in 0..3 {
            let edges = &model.bin_edges[f];
            let b = bins[f] as usize;
            // Extremes of the bin holding this value: (edge[b-1], edge[b]].
            let lo = if b == 0 { base[f] - 10.0 } else { edges[b - 1] + 1e-9 * edges[b - 1].abs().max(1.0) };
            let hi = if b == edges.len() { base[f] + 10.0 } else { edges[b] };
            for v in [lo, hi] {
                let mut moved = base.clone();
                moved[f] = v;
                prop_assert_eq!(model.bin(&moved).unwrap(), bins.clone());
                prop_assert_eq!(model.predict(&moved).unwrap(), model.predict(base).unwrap());
            }
        }
    }
}
