//! ROI features, range regression and per-track range smoothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbrt::{self, GbrtModel, GbrtParams};
use crate::types::Roi;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Floor applied to regressor output so reported ranges stay positive.
pub const MIN_RANGE_M: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub pool_rows: usize,
    pub pool_cols: usize,
    pub with_center: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            pool_rows: 2,
            pool_cols: 4,
            with_center: true,
        }
    }
}

impl FeatureConfig {
    pub fn len(&self) -> usize {
        self.pool_rows * self.pool_cols + if self.with_center { 2 } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sorted pooled maxima plus the normalized ROI center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangingFeature {
    pub tau: Vec<f64>,
    pub center: (f64, f64),
}

impl RangingFeature {
    pub fn to_vec(&self, with_center: bool) -> Vec<f64> {
        let mut v = self.tau.clone();
        if with_center {
            v.push(self.center.0);
            v.push(self.center.1);
        }
        v
    }
}

fn cell_bounds(n: usize, parts: usize) -> Vec<(usize, usize)> {
    let base = n / parts;
    (0..parts)
        .map(|i| (i * base, if i + 1 == parts { n } else { (i + 1) * base }))
        .collect()
}

/// Per-cell maxima over a `rows x cols` partition of the patch, row-major.
/// Leftover pixels on each axis go to the last cell.
pub fn roi_pool(roi: &Roi, rows: usize, cols: usize) -> Result<Vec<f64>> {
    let p = roi.patch();
    if rows == 0 || cols == 0 || p.height() < rows || p.width() < cols {
        return Err(Error::Validation(format!(
            "patch {}x{} is too small for a {rows}x{cols} pool",
            p.width(),
            p.height()
        )));
    }
    let rb = cell_bounds(p.height(), rows);
    let cb = cell_bounds(p.width(), cols);
    let mut out = Vec::with_capacity(rows * cols);
    for &(y0, y1) in &rb {
        for &(x0, x1) in &cb {
            let mut m = f64::NEG_INFINITY;
            for y in y0..y1 {
                for &v in &p.row(y)[x0..x1] {
                    m = m.max(v);
                }
            }
            out.push(m);
        }
    }
    Ok(out)
}

pub fn make_feature(roi: &Roi, config: &FeatureConfig) -> Result<RangingFeature> {
    let mut tau = roi_pool(roi, config.pool_rows, config.pool_cols)?;
    tau.sort_by(|a, b| b.total_cmp(a));
    Ok(RangingFeature {
        tau,
        center: roi.center(),
    })
}

/// A trained range regressor together with the feature layout it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangingModel {
    pub format_version: u32,
    pub features: FeatureConfig,
    pub gbrt: GbrtModel,
}

impl RangingModel {
    pub fn new(features: FeatureConfig, gbrt: GbrtModel) -> Result<Self> {
        let m = Self {
            format_version: MODEL_FORMAT_VERSION,
            features,
            gbrt,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.pool_rows == 0 || self.features.pool_cols == 0 {
            return Err(Error::Validation("pooling grid must be non-empty".into()));
        }
        if self.gbrt.n_features != self.features.len() {
            return Err(Error::Validation(format!(
                "regressor takes {} features but the feature layout has {}",
                self.gbrt.n_features,
                self.features.len()
            )));
        }
        self.gbrt.validate()
    }

    pub fn predict_feature(&self, feature: &RangingFeature) -> Result<f64> {
        let r = self.gbrt.predict(&feature.to_vec(self.features.with_center))?;
        Ok(r.max(MIN_RANGE_M))
    }
}

/// Unsmoothed range for one ROI.
pub fn estimate_range(model: &RangingModel, roi: &Roi) -> Result<f64> {
    model.predict_feature(&make_feature(roi, &model.features)?)
}

/// Fits a ranging model on ROIs with known ranges.
pub fn train(rois: &[Roi], ranges: &[f64], features: FeatureConfig, params: &GbrtParams) -> Result<RangingModel> {
    if rois.len() != ranges.len() {
        return Err(Error::Training("one range is needed per roi".into()));
    }
    let x = rois
        .iter()
        .map(|r| make_feature(r, &features).map(|f| f.to_vec(features.with_center)))
        .collect::<Result<Vec<_>>>()?;
    RangingModel::new(features, gbrt::fit(&x, ranges, params)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanConfig {
    pub process_noise: f64,
    pub measurement_noise: f64,
    pub initial_variance: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            process_noise: 0.5,
            measurement_noise: 0.1,
            initial_variance: 100.0,
        }
    }
}

/// Constant-velocity filter over (range, range rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanState {
    pub x: [f64; 2],
    pub p: [[f64; 2]; 2],
    pub q: f64,
    pub r: f64,
    /// Range gain of the last update.
    pub gain: f64,
}

impl KalmanState {
    /// Starts at `measurement` with zero rate and a wide prior.
    pub fn initial(measurement: f64, config: &KalmanConfig) -> Self {
        let v = config.initial_variance;
        Self {
            x: [measurement, 0.0],
            p: [[v, 0.0], [0.0, v]],
            q: config.process_noise,
            r: config.measurement_noise,
            gain: 1.0,
        }
    }

    pub fn range(&self) -> f64 {
        self.x[0]
    }

    pub fn rate(&self) -> f64 {
        self.x[1]
    }
}

/// One predict/correct cycle with a range measurement taken `dt` seconds after the last.
pub fn kalman_update(state: &KalmanState, measurement: f64, dt: f64) -> Result<KalmanState> {
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
    }
    let [r0, v0] = state.x;
    let p = state.p;
    let q = state.q;
    let (dt2, dt3, dt4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);

    // Predict: x = F x, P = F P F^T + Q.
    let x = [r0 + dt * v0, v0];
    let p00 = p[0][0] + dt * (p[1][0] + p[0][1]) + dt2 * p[1][1] + q * dt4 / 4.0;
    let p01 = p[0][1] + dt * p[1][1] + q * dt3 / 2.0;
    let p10 = p[1][0] + dt * p[1][1] + q * dt3 / 2.0;
    let p11 = p[1][1] + q * dt2;

    // Correct with H = [1, 0], Joseph form for a symmetric PSD result.
    let s = p00 + state.r;
    let k = if s > 0.0 { [p00 / s, p10 / s] } else { [1.0, 0.0] };
    let y = measurement - x[0];
    let xn = [x[0] + k[0] * y, x[1] + k[1] * y];
    let a = [[1.0 - k[0], 0.0], [-k[1], 1.0]];
    let pp = [[p00, p01], [p10, p11]];
    let mut ap = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            ap[i][j] = a[i][0] * pp[0][j] + a[i][1] * pp[1][j];
        }
    }
    let mut pn = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            pn[i][j] = ap[i][0] * a[j][0] + ap[i][1] * a[j][1] + k[i] * state.r * k[j];
        }
    }
    let off = 0.5 * (pn[0][1] + pn[1][0]);
    pn[0][1] = off;
    pn[1][0] = off;
    Ok(KalmanState {
        x: xn,
        p: pn,
        q,
        r: state.r,
        gain: k[0],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BBox, Grid};

    fn roi(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Roi {
        let b = BBox::new(0, 0, w as u32, h as u32).unwrap();
        Roi::from_patch(b, Grid::from_fn(w, h, f), (w, h)).unwrap()
    }

    #[test]
    fn uniform_patch_pools_flat() {
        let r = roi(9, 7, |_, _| 30.0);
        assert_eq!(roi_pool(&r, 2, 4).unwrap(), vec![30.0; 8]);
        let f = make_feature(&r, &FeatureConfig::default()).unwrap();
        assert_eq!(f.tau, vec![30.0; 8]);
        assert_eq!(f.to_vec(true).len(), 10);
    }

    #[test]
    fn single_hot_pixel_lands_in_its_cell() {
        // 8 wide, 4 high: cells are 2x2; (x=4, y=1) is in row 0, col 2.
        let r = roi(8, 4, |x, y| if (x, y) == (4, 1) { 36.0 } else { 25.0 });
        let p = roi_pool(&r, 2, 4).unwrap();
        assert_eq!(p.iter().filter(|&&v| v == 36.0).count(), 1);
        assert_eq!(p[2], 36.0);
    }

    #[test]
    fn remainder_goes_to_last_cell() {
        // 10 columns over 4 cells: widths 2, 2, 2, 4.
        let r = roi(10, 2, |x, _| x as f64);
        assert_eq!(roi_pool(&r, 1, 4).unwrap(), vec![1.0, 3.0, 5.0, 9.0]);
    }

    #[test]
    fn too_small_patch_is_rejected() {
        let r = roi(3, 2, |_, _| 0.0);
        assert!(roi_pool(&r, 2, 4).is_err());
    }

    #[test]
    fn model_layout_must_match() {
        let cfg = FeatureConfig::default();
        assert!(RangingModel::new(cfg, GbrtModel::constant(10, 2.0)).is_ok());
        assert!(RangingModel::new(cfg, GbrtModel::constant(8, 2.0)).is_err());
        let no_center = FeatureConfig { with_center: false, ..cfg };
        let m = RangingModel::new(no_center, GbrtModel::constant(8, 2.0)).unwrap();
        assert_eq!(estimate_range(&m, &roi(8, 4, |_, _| 30.0)).unwrap(), 2.0);
    }

    #[test]
    fn zero_noise_measurement_is_trusted() {
        let cfg = KalmanConfig {
            measurement_noise: 0.0,
            ..KalmanConfig::default()
        };
        let s = KalmanState::initial(1.0, &cfg);
        let s = kalman_update(&s, 3.0, 0.0625).unwrap();
        assert!((s.range() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn tracks_constant_velocity() {
        let cfg = KalmanConfig::default();
        let dt = 1.0 / 16.0;
        let v = -0.8;
        let mut s = KalmanState::initial(4.0, &cfg);
        for i in 1..=50 {
            s = kalman_update(&s, 4.0 + v * dt * i as f64, dt).unwrap();
        }
        assert!((s.rate() - v).abs() <= 0.05 * v.abs(), "rate {}", s.rate());
    }

    #[test]
    fn confident_state_barely_moves() {
        let mut s = KalmanState::initial(2.0, &KalmanConfig::default());
        s.q = 0.0;
        s.r = 1e3;
        s.p = [[1.0, 0.0], [0.0, 0.01]];
        let n = kalman_update(&s, 2.5, 0.0625).unwrap();
        assert!(n.gain < 0.1);
        assert!((n.range() - 2.0).abs() < 0.05);
    }

    #[test]
    fn covariance_stays_symmetric_psd() {
        let mut s = KalmanState::initial(2.0, &KalmanConfig::default());
        for i in 0..200 {
            s = kalman_update(&s, 2.0 + (i as f64 * 0.7).sin(), 0.0625).unwrap();
            assert_eq!(s.p[0][1], s.p[1][0]);
            assert!(s.p[0][0] >= 0.0 && s.p[1][1] >= 0.0);
            assert!(s.p[0][0] * s.p[1][1] - s.p[0][1] * s.p[1][0] >= -1e-12);
        }
        assert!(kalman_update(&s, 1.0, 0.0).is_err());
    }
}
