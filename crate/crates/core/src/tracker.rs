//! Kernelized correlation filter tracking on gray frames, plus the overlap rules
//! that split vertically stacked tracks and merge coincident ones.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranging::KalmanState;
use crate::types::{BBox, GrayFrame, TemperatureMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KcfParams {
    pub padding: f64,
    pub lambda: f64,
    pub interp_factor: f64,
    pub kernel_sigma: f64,
    pub output_sigma_factor: f64,
    /// Side of the square internal template, in samples.
    pub template_size: usize,
}

impl Default for KcfParams {
    fn default() -> Self {
        Self {
            padding: 1.5,
            lambda: 1e-4,
            interp_factor: 0.075,
            kernel_sigma: 0.2,
            output_sigma_factor: 0.125,
            template_size: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub kcf: KcfParams,
    pub h_thr: f64,
    pub v_thr: f64,
    pub peak_min: f64,
    pub miss_limit: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            kcf: KcfParams::default(),
            h_thr: 0.6,
            v_thr: 0.3,
            peak_min: 0.15,
            miss_limit: 8,
        }
    }
}

/// Square 2D FFT built from row and column passes.
#[derive(Clone)]
struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fft2({}x{})", self.n, self.n)
    }
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        fft.process(data);
        let mut col = vec![Complex64::default(); n];
        for x in 0..n {
            for y in 0..n {
                col[y] = data[y * n + x];
            }
            fft.process(&mut col);
            for y in 0..n {
                data[y * n + x] = col[y];
            }
        }
    }

    fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = real.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.run(&mut data, &self.forward);
        data
    }

    /// Real part of the inverse transform, normalized.
    fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.run(&mut spec, &self.inverse);
        let norm = 1.0 / (self.n * self.n) as f64;
        spec.into_iter().map(|c| c.re * norm).collect()
    }
}

/// A learned correlation filter and the geometry it was trained at.
#[derive(Debug, Clone)]
pub struct KcfModel {
    params: KcfParams,
    /// Target center in continuous gray-frame coordinates.
    center: (f64, f64),
    size: (f64, f64),
    x_hat: Vec<Complex64>,
    x_energy: f64,
    alpha_hat: Vec<Complex64>,
    y_hat: Vec<Complex64>,
    window: Vec<f64>,
    fft: Fft2,
}

impl KcfModel {
    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    pub fn size(&self) -> (f64, f64) {
        self.size
    }

    fn window_size(&self) -> (f64, f64) {
        let f = 1.0 + self.params.padding;
        (self.size.0 * f, self.size.1 * f)
    }

    /// Windowed, zero-centered template resampled from the padded search window.
    fn sample(&self, gray: &GrayFrame, center: (f64, f64)) -> Vec<f64> {
        let n = self.params.template_size;
        let (ww, wh) = self.window_size();
        let (sx, sy) = (ww / n as f64, wh / n as f64);
        let (gw, gh) = (gray.width(), gray.height());
        let half = n as f64 * 0.5;
        let mut out = Vec::with_capacity(n * n);
        for j in 0..n {
            let v = (center.1 + (j as f64 + 0.5 - half) * sy - 0.5).clamp(0.0, (gh - 1) as f64);
            let y0 = v.floor() as usize;
            let y1 = (y0 + 1).min(gh - 1);
            let ty = v - y0 as f64;
            for i in 0..n {
                let u = (center.0 + (i as f64 + 0.5 - half) * sx - 0.5).clamp(0.0, (gw - 1) as f64);
                let x0 = u.floor() as usize;
                let x1 = (x0 + 1).min(gw - 1);
                let tx = u - x0 as f64;
                let g = |x: usize, y: usize| gray.get(x, y) as f64;
                let top = g(x0, y0) + (g(x1, y0) - g(x0, y0)) * tx;
                let bot = g(x0, y1) + (g(x1, y1) - g(x0, y1)) * tx;
                let val = top + (bot - top) * ty;
                out.push((val / 255.0 - 0.5) * self.window[j * n + i]);
            }
        }
        out
    }

    /// Gaussian kernel correlation between the stored template and `z` at every cyclic shift.
    fn kernel_correlation(&self, x_hat: &[Complex64], x_energy: f64, z: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let z_hat = self.fft.forward(z);
        let z_energy: f64 = z.iter().map(|v| v * v).sum();
        let cross: Vec<Complex64> = x_hat.iter().zip(&z_hat).map(|(a, b)| a.conj() * b).collect();
        let xz = self.fft.inverse_real(cross);
        let count = z.len() as f64;
        let s2 = self.params.kernel_sigma * self.params.kernel_sigma;
        let k: Vec<f64> = xz
            .iter()
            .map(|&c| (-((x_energy + z_energy - 2.0 * c).max(0.0) / count) / s2).exp())
            .collect();
        (self.fft.forward(&k), z_hat)
    }

    fn train(&self, x: &[f64]) -> (Vec<Complex64>, f64, Vec<Complex64>) {
        let x_hat = self.fft.forward(x);
        let energy: f64 = x.iter().map(|v| v * v).sum();
        let (k_hat, _) = self.kernel_correlation(&x_hat, energy, x);
        let lambda = self.params.lambda;
        let alpha = self
            .y_hat
            .iter()
            .zip(&k_hat)
            .map(|(y, k)| y / (k + lambda))
            .collect();
        (x_hat, energy, alpha)
    }

    fn blend(&mut self, x_hat: Vec<Complex64>, alpha: Vec<Complex64>) {
        let eta = self.params.interp_factor;
        for (a, b) in self.x_hat.iter_mut().zip(x_hat) {
            *a = *a * (1.0 - eta) + b * eta;
        }
        for (a, b) in self.alpha_hat.iter_mut().zip(alpha) {
            *a = *a * (1.0 - eta) + b * eta;
        }
        // Energy of the blended template, recovered from the spectrum (Parseval).
        let n2 = self.x_hat.len() as f64;
        self.x_energy = self.x_hat.iter().map(|c| c.norm_sqr()).sum::<f64>() / n2;
    }

    /// Moves the model to a new box and blends in the appearance found there.
    pub fn correct(&mut self, gray: &GrayFrame, bbox: BBox) {
        self.center = bbox.center();
        self.size = (bbox.width() as f64, bbox.height() as f64);
        let x = self.sample(gray, self.center);
        let (x_hat, _, alpha) = self.train(&x);
        self.blend(x_hat, alpha);
    }
}

fn hann(n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / (n - 1) as f64).cos()))
        .collect();
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(w[i] * w[j]);
        }
    }
    out
}

/// Gaussian regression target peaked at zero shift, with cyclic wrap.
fn gaussian_target(n: usize, sigma: f64) -> Vec<f64> {
    let wrap = |i: usize| {
        let d = i as f64;
        if i > n / 2 {
            d - n as f64
        } else {
            d
        }
    };
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let (dx, dy) = (wrap(i), wrap(j));
            out.push((-0.5 * (dx * dx + dy * dy) / (sigma * sigma)).exp());
        }
    }
    out
}

/// Box of the given float geometry, rounded and clipped to the frame.
pub fn bbox_from_geometry(center: (f64, f64), size: (f64, f64), width: usize, height: usize) -> Option<BBox> {
    let x0 = (center.0 - size.0 * 0.5).round();
    let y0 = (center.1 - size.1 * 0.5).round();
    let x1 = x0 + size.0.round().max(1.0);
    let y1 = y0 + size.1.round().max(1.0);
    BBox::from_f64_clipped(x0, y0, x1, y1, width, height)
}

/// A persistent user identity.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub bbox: BBox,
    pub kcf: KcfModel,
    pub age: u32,
    pub misses: u32,
    pub last_peak: f64,
    pub kalman: Option<KalmanState>,
    /// Set on the frame the track was created or matched to a detection.
    pub matched: bool,
    /// Timestamp of the last range fed to `kalman`.
    pub range_time: Option<f64>,
}

impl Track {
    /// Moves the track to `bbox` without retraining the filter.
    pub fn set_bbox(&mut self, bbox: BBox) {
        self.bbox = bbox;
        self.kcf.center = bbox.center();
        self.kcf.size = (bbox.width() as f64, bbox.height() as f64);
    }
}

pub fn kcf_init(gray: &GrayFrame, bbox: BBox, id: u64, params: &KcfParams) -> Result<Track> {
    if !bbox.fits(gray.width(), gray.height()) {
        return Err(Error::Validation("tracking box exceeds the frame".into()));
    }
    if bbox.width() < 2 || bbox.height() < 2 {
        return Err(Error::Validation("tracking box must be at least 2x2".into()));
    }
    let n = params.template_size;
    if n < 4 {
        return Err(Error::Config("template_size must be at least 4".into()));
    }
    let target_px = n as f64 / (1.0 + params.padding);
    let sigma = params.output_sigma_factor * target_px;
    let fft = Fft2::new(n);
    let y_hat = fft.forward(&gaussian_target(n, sigma));
    let mut model = KcfModel {
        params: *params,
        center: bbox.center(),
        size: (bbox.width() as f64, bbox.height() as f64),
        x_hat: Vec::new(),
        x_energy: 0.0,
        alpha_hat: Vec::new(),
        y_hat,
        window: hann(n),
        fft,
    };
    let x = model.sample(gray, model.center);
    let (x_hat, energy, alpha) = model.train(&x);
    model.x_hat = x_hat;
    model.x_energy = energy;
    model.alpha_hat = alpha;
    Ok(Track {
        id,
        bbox,
        kcf: model,
        age: 0,
        misses: 0,
        last_peak: 1.0,
        kalman: None,
        matched: true,
        range_time: None,
    })
}

/// Sub-sample peak offset from three samples, in `[-0.5, 0.5]`.
///
/// Positive samples are fitted in the log domain, which is exact for a
/// Gaussian-shaped peak; otherwise a plain parabola is used.
fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let (left, mid, right) = if left > 0.0 && mid > 0.0 && right > 0.0 {
        (left.ln(), mid.ln(), right.ln())
    } else {
        (left, mid, right)
    };
    let denom = left - 2.0 * mid + right;
    if denom >= 0.0 {
        return 0.0;
    }
    let off = (0.5 * (left - right) / denom).clamp(-0.5, 0.5);
    if off.abs() < 1e-9 {
        0.0
    } else {
        off
    }
}

impl KcfModel {
    /// Peak response and the displacement of the target from `center`, in pixels.
    fn locate(&self, gray: &GrayFrame, center: (f64, f64)) -> (f64, (f64, f64)) {
        let n = self.params.template_size;
        let z = self.sample(gray, center);
        let (k_hat, _) = self.kernel_correlation(&self.x_hat, self.x_energy, &z);
        let resp_hat: Vec<Complex64> = k_hat.iter().zip(&self.alpha_hat).map(|(k, a)| k * a).collect();
        let resp = self.fft.inverse_real(resp_hat);

        let (mut best, mut peak) = (0, f64::NEG_INFINITY);
        for (i, &r) in resp.iter().enumerate() {
            if r > peak {
                peak = r;
                best = i;
            }
        }
        let (px, py) = (best % n, best / n);
        let at = |x: usize, y: usize| resp[(y % n) * n + (x % n)];
        let dx_sub = parabolic_offset(at(px + n - 1, py), peak, at(px + 1, py));
        let dy_sub = parabolic_offset(at(px, py + n - 1), peak, at(px, py + 1));
        let wrap = |p: usize| if p > n / 2 { p as f64 - n as f64 } else { p as f64 };
        let (ww, wh) = self.window_size();
        let shift = (
            (wrap(px) + dx_sub) * ww / n as f64,
            (wrap(py) + dy_sub) * wh / n as f64,
        );
        (peak, shift)
    }
}

/// Locates the target in `gray`, moves the track there and adapts the filter.
///
/// The search runs twice, the second time from the first estimate, since the
/// fixed cosine window pulls each estimate slightly toward zero shift.
/// Returns the new box and the peak correlation response.
pub fn kcf_update(track: &mut Track, gray: &GrayFrame) -> (BBox, f64) {
    let model = &mut track.kcf;
    let (gw, gh) = (gray.width() as f64, gray.height() as f64);
    let clamp = |c: (f64, f64)| (c.0.clamp(0.0, gw), c.1.clamp(0.0, gh));
    let (mut peak, shift) = model.locate(gray, model.center);
    if shift != (0.0, 0.0) {
        let first = clamp((model.center.0 + shift.0, model.center.1 + shift.1));
        let (p2, s2) = model.locate(gray, first);
        model.center = clamp((first.0 + s2.0, first.1 + s2.1));
        peak = p2;
    }

    let x = model.sample(gray, model.center);
    let (x_hat, _, alpha) = model.train(&x);
    model.blend(x_hat, alpha);

    if let Some(b) = bbox_from_geometry(model.center, model.size, gray.width(), gray.height()) {
        track.bbox = b;
    }
    track.last_peak = peak;
    track.age += 1;
    (track.bbox, peak)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapRatios {
    pub horizontal: f64,
    pub vertical: f64,
}

pub fn overlap_ratios(a: &BBox, b: &BBox) -> OverlapRatios {
    let axis = |a0: u32, a1: u32, b0: u32, b1: u32| {
        let inter = a1.min(b1).saturating_sub(a0.max(b0)) as f64;
        let ext = (a1 - a0).min(b1 - b0) as f64;
        inter / ext
    };
    OverlapRatios {
        horizontal: axis(a.x0(), a.x1(), b.x0(), b.x1()),
        vertical: axis(a.y0(), a.y1(), b.y0(), b.y1()),
    }
}

/// Row between the two centers whose summed temperature across `cols` is lowest.
/// Ties resolve to the upper row.
pub fn seam_row(map: &TemperatureMap, cols: (u32, u32), rows: (u32, u32)) -> u32 {
    let (r0, r1) = (rows.0.min(rows.1), rows.0.max(rows.1));
    let mut best = r0;
    let mut best_sum = f64::INFINITY;
    for y in r0..=r1.min(map.height() as u32 - 1) {
        let s: f64 = (cols.0..cols.1).map(|x| map.get(x as usize, y as usize)).sum();
        if s < best_sum {
            best_sum = s;
            best = y;
        }
    }
    best
}

fn stacked_split(map: &TemperatureMap, upper: BBox, lower: BBox) -> Option<(BBox, BBox)> {
    let cols = (upper.x0().max(lower.x0()), upper.x1().min(lower.x1()));
    if cols.0 >= cols.1 {
        return None;
    }
    let (_, cu) = upper.center();
    let (_, cl) = lower.center();
    let lo = (cu.ceil() as u32).max(lower.y0()).max(upper.y0() + 1);
    let hi = (cl.floor() as u32).min(upper.y1()).min(lower.y1() - 1);
    let row = if lo <= hi {
        seam_row(map, cols, (lo, hi))
    } else {
        lo.min(hi).max(upper.y0() + 1).min(lower.y1() - 1)
    };
    let a = upper.with_rows(upper.y0(), row.min(upper.y1())).ok()?;
    let b = lower.with_rows(row.max(lower.y0()), lower.y1()).ok()?;
    Some((a, b))
}

/// Applies the pairwise overlap rules until no pair triggers.
///
/// Horizontal overlap above `h_thr` with vertical overlap above `v_thr` merges
/// the pair into the lower (older) id; with vertical overlap below `v_thr` the
/// two boxes are re-cut at the coolest row between their centers.
pub fn split_or_merge(mut tracks: Vec<Track>, map: &TemperatureMap, config: &TrackerConfig) -> Vec<Track> {
    tracks.sort_by_key(|t| t.id);
    let limit = 4 * tracks.len() * tracks.len() + 4;
    for _ in 0..limit {
        let mut changed = false;
        'pairs: for i in 0..tracks.len() {
            for j in i + 1..tracks.len() {
                let (a, b) = (tracks[i].bbox, tracks[j].bbox);
                let r = overlap_ratios(&a, &b);
                if r.horizontal <= config.h_thr {
                    continue;
                }
                if r.vertical > config.v_thr {
                    let merged = a.union(&b);
                    let gone = tracks.remove(j);
                    let keep = &mut tracks[i];
                    keep.set_bbox(merged);
                    keep.matched |= gone.matched;
                    changed = true;
                    break 'pairs;
                }
                if r.vertical > 0.0 && r.vertical < config.v_thr {
                    let (ui, li) = if a.center().1 <= b.center().1 { (i, j) } else { (j, i) };
                    if let Some((u, l)) = stacked_split(map, tracks[ui].bbox, tracks[li].bbox) {
                        if u != tracks[ui].bbox || l != tracks[li].bbox {
                            tracks[ui].set_bbox(u);
                            tracks[li].set_bbox(l);
                            changed = true;
                            break 'pairs;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    tracks
}
