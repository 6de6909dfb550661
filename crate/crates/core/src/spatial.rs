//! Per-frame region extraction: adaptive binarization, connected components and
//! horizontal separation of side-by-side users.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BBox, GrayFrame, Grid, TemperatureMap};

pub type Mask = Grid<bool>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Adaptive-threshold window side; forced odd and clipped to the frame.
    pub kernel_size: usize,
    pub c_off: f64,
    /// Expected single-user width in sensor pixels.
    pub kappa: f64,
    /// Curved-cut wander per row, in interpolated pixels. `None` means two sensor pixels.
    pub d_max: Option<usize>,
    pub max_k: usize,
    /// An anchor survives only if the histogram valley under it is at most this
    /// fraction of the lower of the two neighbouring peaks.
    pub valley_ratio: f64,
    /// Foreground must also be this many °C above the frame's median
    /// temperature; 0 disables the check.
    pub min_contrast_c: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            kernel_size: 101,
            c_off: 2.0,
            kappa: 5.0,
            d_max: None,
            max_k: 4,
            valley_ratio: 0.6,
            min_contrast_c: 1.0,
        }
    }
}

impl DetectorConfig {
    pub fn min_area(&self, scale: usize) -> u64 {
        let side = self.kappa * scale as f64;
        (side * side / 4.0).round() as u64
    }

    pub fn user_width_px(&self, scale: usize) -> f64 {
        self.kappa * scale as f64
    }

    pub fn d_max_px(&self, scale: usize) -> usize {
        self.d_max.unwrap_or(2 * scale).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size < 3 {
            return Err(Error::Config("kernel_size must be at least 3".into()));
        }
        if !(self.kappa > 0.0) || self.max_k == 0 {
            return Err(Error::Config("kappa and max_k must be positive".into()));
        }
        if !(self.valley_ratio >= 0.0) {
            return Err(Error::Config("valley_ratio must be non-negative".into()));
        }
        if !(self.min_contrast_c >= 0.0) {
            return Err(Error::Config("min_contrast_c must be non-negative".into()));
        }
        Ok(())
    }
}

/// Normalized Gaussian taps for an odd window of side `s`.
pub fn gaussian_kernel(s: usize) -> Vec<f64> {
    let sigma = 0.3 * ((s as f64 - 1.0) * 0.5 - 1.0) + 0.8;
    let half = (s / 2) as f64;
    let raw: Vec<f64> = (0..s)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Gaussian-weighted local mean with replicated borders.
fn gaussian_blur(gray: &GrayFrame, s: usize) -> Vec<f64> {
    let (w, h) = (gray.width(), gray.height());
    let k = gaussian_kernel(s);
    let r = s / 2;
    let src = gray.grid().as_slice();

    let mut horiz = vec![0.0f64; w * h];
    let mut padded = vec![0.0f64; w + 2 * r];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, p) in padded.iter_mut().enumerate() {
            let x = i.saturating_sub(r).min(w - 1);
            *p = row[x] as f64;
        }
        let out = &mut horiz[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            *o = k.iter().zip(&padded[x..x + s]).map(|(a, b)| a * b).sum();
        }
    }

    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (j, &wt) in k.iter().enumerate() {
            let sy = (y + j).saturating_sub(r).min(h - 1);
            let srow = &horiz[sy * w..(sy + 1) * w];
            for (d, &v) in dst.iter_mut().zip(srow) {
                *d += wt * v;
            }
        }
    }
    out
}

/// Foreground where intensity exceeds the Gaussian local mean by more than `c_off`.
pub fn adaptive_mask(gray: &GrayFrame, s: usize, c_off: f64) -> Result<Mask> {
    let (w, h) = (gray.width(), gray.height());
    if s % 2 == 0 || s < 3 || s > w.min(h) {
        return Err(Error::Precondition(format!(
            "kernel size {s} must be odd and within [3, {}]",
            w.min(h)
        )));
    }
    let mean = gaussian_blur(gray, s);
    let data = gray
        .grid()
        .as_slice()
        .iter()
        .zip(&mean)
        .map(|(&g, &m)| g as f64 > m + c_off)
        .collect();
    Grid::from_vec(w, h, data)
}

/// A 4-connected foreground component.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub bbox: BBox,
    pub area: u64,
    /// Row-major membership over `bbox`.
    pub pixels: Grid<bool>,
}

impl Component {
    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        let (x0, y0) = (self.bbox.x0() as usize, self.bbox.y0() as usize);
        x >= x0
            && y >= y0
            && x < self.bbox.x1() as usize
            && y < self.bbox.y1() as usize
            && *self.pixels.get(x - x0, y - y0)
    }

    /// Marks background pockets enclosed by the component as members.
    ///
    /// Cells outside the frame count as walls, so a pocket closed off by the
    /// frame edge is filled too.
    pub fn fill_holes(&self, frame_w: usize, frame_h: usize) -> Component {
        let b = self.bbox;
        let x0 = (b.x0() as usize).saturating_sub(1);
        let y0 = (b.y0() as usize).saturating_sub(1);
        let x1 = (b.x1() as usize + 1).min(frame_w);
        let y1 = (b.y1() as usize + 1).min(frame_h);
        let (pw, ph) = (x1 - x0, y1 - y0);
        let mut outside = vec![false; pw * ph];
        let mut queue = VecDeque::new();
        let inside_box = |x: usize, y: usize| {
            x >= b.x0() as usize && x < b.x1() as usize && y >= b.y0() as usize && y < b.y1() as usize
        };
        for y in y0..y1 {
            for x in x0..x1 {
                if !inside_box(x, y) {
                    outside[(y - y0) * pw + (x - x0)] = true;
                    queue.push_back((x, y));
                }
            }
        }
        while let Some((x, y)) = queue.pop_front() {
            let mut visit = |nx: usize, ny: usize| {
                let i = (ny - y0) * pw + (nx - x0);
                if !outside[i] && !self.contains(nx, ny) {
                    outside[i] = true;
                    queue.push_back((nx, ny));
                }
            };
            if x > x0 {
                visit(x - 1, y);
            }
            if x + 1 < x1 {
                visit(x + 1, y);
            }
            if y > y0 {
                visit(x, y - 1);
            }
            if y + 1 < y1 {
                visit(x, y + 1);
            }
        }
        let (bx0, by0) = (b.x0() as usize, b.y0() as usize);
        let pixels = Grid::from_fn(b.width() as usize, b.height() as usize, |x, y| {
            !outside[(y + by0 - y0) * pw + (x + bx0 - x0)]
        });
        let area = pixels.as_slice().iter().filter(|&&p| p).count() as u64;
        Component {
            bbox: b,
            area,
            pixels,
        }
    }
}

/// 4-connected labelling; components with fewer than `min_area` pixels are dropped.
/// Sorted by `x0`, then `y0`.
pub fn label_components(mask: &Mask, min_area: u64) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let m = mask.as_slice();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    let mut members = Vec::new();
    for start in 0..w * h {
        if !m[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        members.clear();
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(i) = stack.pop() {
            members.push(i);
            let (x, y) = (i % w, i / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut push = |j: usize| {
                if m[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        if (members.len() as u64) < min_area {
            continue;
        }
        let bbox = BBox::new(x0 as u32, y0 as u32, x1 as u32 + 1, y1 as u32 + 1).expect("non-empty");
        let mut pixels = Grid::filled(x1 + 1 - x0, y1 + 1 - y0, false);
        for &i in &members {
            *pixels.get_mut(i % w - x0, i / w - y0) = true;
        }
        out.push(Component {
            bbox,
            area: members.len() as u64,
            pixels,
        });
    }
    out.sort_by_key(|c| (c.bbox.x0(), c.bbox.y0()));
    out
}

pub fn connected_components(mask: &Mask, min_area: u64) -> Vec<BBox> {
    label_components(mask, min_area).into_iter().map(|c| c.bbox).collect()
}

/// Per-column foreground temperature sums over a region.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnHistogram {
    pub sums: Vec<f64>,
    pub region: BBox,
}

impl ColumnHistogram {
    fn build(map: &TemperatureMap, region: BBox, fg: impl Fn(usize, usize) -> bool) -> Self {
        let sums = (region.x0()..region.x1())
            .map(|x| {
                (region.y0()..region.y1())
                    .filter(|&y| fg(x as usize, y as usize))
                    .map(|y| map.get(x as usize, y as usize))
                    .sum()
            })
            .collect();
        Self { sums, region }
    }

    pub fn support(&self) -> usize {
        self.sums.iter().filter(|&&c| c != 0.0).count()
    }
}

pub fn column_histogram(map: &TemperatureMap, region: BBox, mask: &Mask) -> Result<ColumnHistogram> {
    if !region.fits(map.width(), map.height())
        || mask.width() != map.width()
        || mask.height() != map.height()
    {
        return Err(Error::DimensionMismatch(
            "region and mask must lie within the temperature map".into(),
        ));
    }
    Ok(ColumnHistogram::build(map, region, |x, y| *mask.get(x, y)))
}

/// Multi-level Otsu over column positions weighted by `c`.
///
/// Returns `K - 1` anchors `0 < S_1 < ... < S_{K-1} < len`; segment `k` covers
/// columns `[S_{k-1}, S_k)`. Among maximizers, the lexicographically smallest
/// anchor tuple wins.
pub fn multi_otsu(c: &[f64], k: usize) -> Result<Vec<usize>> {
    let n = c.len();
    let support = c.iter().filter(|&&v| v != 0.0).count();
    if k == 0 || n < k || k > support {
        return Err(Error::InfeasibleK { k, support });
    }
    if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Validation("histogram must be finite and non-negative".into()));
    }
    if k == 1 {
        return Ok(Vec::new());
    }

    // Prefix sums of mass and first moment.
    let mut m = vec![0.0; n + 1];
    let mut s = vec![0.0; n + 1];
    for i in 0..n {
        m[i + 1] = m[i] + c[i];
        s[i + 1] = s[i] + i as f64 * c[i];
    }
    // Between-class objective contribution of columns [a, b).
    let seg = |a: usize, b: usize| {
        let mass = m[b] - m[a];
        if mass > 0.0 {
            let mom = s[b] - s[a];
            mom * mom / mass
        } else {
            0.0
        }
    };

    // suffix[j][i]: best value splitting columns [i, n) into j segments.
    let neg = f64::NEG_INFINITY;
    let mut suffix = vec![vec![neg; n + 1]; k + 1];
    for i in 0..n {
        suffix[1][i] = seg(i, n);
    }
    for j in 2..=k {
        for i in 0..=n - j {
            let mut best = neg;
            for cut in i + 1..=n - (j - 1) {
                let v = seg(i, cut) + suffix[j - 1][cut];
                if v > best {
                    best = v;
                }
            }
            suffix[j][i] = best;
        }
    }

    let optimum = suffix[k][0];
    let tol = 1e-12 * optimum.abs().max(f64::MIN_POSITIVE);
    let mut anchors = Vec::with_capacity(k - 1);
    let mut start = 0;
    let mut acc = 0.0;
    for remaining in (1..k).rev() {
        let cut = (start + 1..=n - remaining)
            .find(|&cut| acc + seg(start, cut) + suffix[remaining][cut] >= optimum - tol)
            .expect("optimum is attained by some cut");
        acc += seg(start, cut);
        anchors.push(cut);
        start = cut;
    }
    Ok(anchors)
}

/// The between-class variance of a histogram under the given anchors.
pub fn between_class_variance(c: &[f64], anchors: &[usize]) -> f64 {
    let total: f64 = c.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mu_g = c.iter().enumerate().map(|(i, v)| i as f64 * v).sum::<f64>() / total;
    let mut bounds = vec![0];
    bounds.extend_from_slice(anchors);
    bounds.push(c.len());
    bounds
        .windows(2)
        .map(|w| {
            let mass: f64 = c[w[0]..w[1]].iter().sum();
            if mass <= 0.0 {
                return 0.0;
            }
            let mu = (w[0]..w[1]).map(|i| i as f64 * c[i]).sum::<f64>() / mass;
            mass / total * (mu - mu_g).powi(2)
        })
        .sum()
}

pub fn choose_k(region: BBox, user_width_px: f64, max_k: usize) -> usize {
    let k = (region.width() as f64 / user_width_px).round() as usize;
    k.clamp(1, max_k.max(1))
}

/// Traces a cut from `anchor` down through `region`, one column per row.
///
/// Each row picks the column of smallest absolute horizontal gradient within
/// `d_max` of the previous row's pick (and of the anchor), preferring columns
/// where the profile is strictly convex, then flat. The raw trace is
/// median-filtered and then limited to one column of travel per row. A returned column `c` splits
/// the row into `[x0, c)` and `[c, x1)`.
pub fn refine_cut(map: &TemperatureMap, region: BBox, anchor: usize, d_max: usize) -> Result<Vec<usize>> {
    let (x0, x1) = (region.x0() as usize, region.x1() as usize);
    if !region.fits(map.width(), map.height()) {
        return Err(Error::DimensionMismatch("region exceeds the temperature map".into()));
    }
    if anchor <= x0 || anchor >= x1 {
        return Err(Error::Precondition(format!(
            "anchor column {anchor} must lie strictly inside ({x0}, {x1})"
        )));
    }
    let lo_bound = (x0 + 1).max(anchor.saturating_sub(d_max));
    let hi_bound = (x1 - 1).min(anchor + d_max);

    let mut raw = Vec::with_capacity(region.height() as usize);
    let mut prev = anchor;
    for y in region.y0() as usize..region.y1() as usize {
        let t = |x: usize| map.get(x, y);
        let grad = |x: usize| {
            if x == x0 {
                t(x + 1) - t(x)
            } else if x + 1 == x1 {
                t(x) - t(x - 1)
            } else {
                0.5 * (t(x + 1) - t(x - 1))
            }
        };
        // 2 = strictly convex, 1 = flat, 0 = concave. Saturated plateaus are
        // flat with zero gradient, so they must lose to a real valley.
        let convexity = |x: usize| {
            let right = if x + 1 < x1 { t(x + 1) } else { t(x) };
            let c = t(x - 1) - 2.0 * t(x) + right;
            if c > 1e-12 {
                2
            } else if c >= -1e-12 {
                1
            } else {
                0
            }
        };
        let lo = lo_bound.max(prev.saturating_sub(d_max));
        let hi = hi_bound.min(prev + d_max);
        let tier = (lo..=hi).map(convexity).max().unwrap_or(0);
        let mut best = prev;
        let mut best_key = (f64::INFINITY, usize::MAX);
        for x in lo..=hi {
            if convexity(x) < tier {
                continue;
            }
            let key = (grad(x).abs(), x.abs_diff(prev));
            if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 < best_key.1) {
                best_key = key;
                best = x;
            }
        }
        raw.push(best);
        prev = best;
    }
    Ok(lipschitz_envelope(&median_filter(&raw, 2)))
}

fn median_filter(v: &[usize], radius: usize) -> Vec<usize> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(v.len());
            let mut w: Vec<usize> = v[lo..hi].to_vec();
            w.sort_unstable();
            w[w.len() / 2]
        })
        .collect()
}

/// Largest sequence below `v` whose consecutive entries differ by at most one.
fn lipschitz_envelope(v: &[usize]) -> Vec<usize> {
    let mut out = v.to_vec();
    for i in 1..out.len() {
        out[i] = out[i].min(out[i - 1] + 1);
    }
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] = out[i].min(out[i + 1] + 1);
    }
    out
}

/// Anchors whose histogram valley is not markedly lower than both neighbouring peaks are dropped.
fn significant_anchors(c: &[f64], anchors: &[usize], ratio: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = anchors.to_vec();
    loop {
        let mut bounds = vec![0];
        bounds.extend_from_slice(&kept);
        bounds.push(c.len());
        let weakest = kept
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let left = &c[bounds[i]..a];
                let right = &c[a..bounds[i + 2]];
                let peak_l = left.iter().copied().fold(0.0, f64::max);
                let peak_r = right.iter().copied().fold(0.0, f64::max);
                let lo = a.saturating_sub(2).max(bounds[i]);
                let hi = (a + 2).min(bounds[i + 2]);
                let valley = c[lo..hi].iter().copied().fold(f64::INFINITY, f64::min);
                let peak = peak_l.min(peak_r);
                let depth = if peak > 0.0 { valley / peak } else { f64::INFINITY };
                (i, depth)
            })
            .filter(|&(_, d)| d > ratio)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match weakest {
            Some((i, _)) => {
                kept.remove(i);
            }
            None => return kept,
        }
    }
}

/// One component's split into users.
#[derive(Debug, Clone, PartialEq)]
pub struct Separation {
    pub component: BBox,
    pub anchors: Vec<usize>,
    /// Per anchor, the cut column for each row of the component.
    pub paths: Vec<Vec<usize>>,
    pub boxes: Vec<BBox>,
}

fn separate(
    map: &TemperatureMap,
    comp: &Component,
    config: &DetectorConfig,
) -> Result<Separation> {
    let scale = map.scale();
    let region = comp.bbox;
    let hist = ColumnHistogram::build(map, region, |x, y| comp.contains(x, y));
    // One segment more than the width rule suggests; anchors without a real
    // valley under them are dropped below.
    let k = (choose_k(region, config.user_width_px(scale), config.max_k) + 1)
        .min(config.max_k)
        .min(hist.support().max(1));
    let rel = multi_otsu(&hist.sums, k)?;
    let rel = significant_anchors(&hist.sums, &rel, config.valley_ratio);
    let x0 = region.x0() as usize;
    let anchors: Vec<usize> = rel.iter().map(|a| a + x0).collect();

    let d_max = config.d_max_px(scale);
    let mut paths = anchors
        .iter()
        .map(|&a| refine_cut(map, region, a, d_max))
        .collect::<Result<Vec<_>>>()?;
    // Keep paths strictly ordered row by row.
    for i in 1..paths.len() {
        let (done, rest) = paths.split_at_mut(i);
        for (cur, &left) in rest[0].iter_mut().zip(&done[i - 1]) {
            *cur = (*cur).max(left + 1);
        }
    }

    let min_area = config.min_area(scale);
    let rows = region.height() as usize;
    let y0 = region.y0() as usize;
    let x_end = region.x1() as usize;
    let mut boxes = Vec::new();
    // Shared column boundaries keep neighbouring boxes from overlapping.
    let split_cols: Vec<usize> = paths
        .iter()
        .map(|p| (p.iter().sum::<usize>() as f64 / p.len() as f64).round() as usize)
        .collect();
    for seg in 0..=paths.len() {
        let (mut bx0, mut by0, mut bx1, mut by1) = (usize::MAX, usize::MAX, 0, 0);
        let mut count = 0u64;
        for r in 0..rows {
            let lo = if seg == 0 { x0 } else { paths[seg - 1][r] };
            let hi = if seg == paths.len() { x_end } else { paths[seg][r] };
            for x in lo..hi.min(x_end) {
                if comp.contains(x, y0 + r) {
                    count += 1;
                    bx0 = bx0.min(x);
                    bx1 = bx1.max(x + 1);
                    by0 = by0.min(y0 + r);
                    by1 = by1.max(y0 + r + 1);
                }
            }
        }
        if count == 0 {
            continue;
        }
        if seg > 0 {
            bx0 = bx0.max(split_cols[seg - 1]);
        }
        if seg < paths.len() {
            bx1 = bx1.min(split_cols[seg]);
        }
        if bx0 >= bx1 {
            continue;
        }
        let b = BBox::new(bx0 as u32, by0 as u32, bx1 as u32, by1 as u32)?;
        if b.area() >= min_area {
            boxes.push(b);
        }
    }
    Ok(Separation {
        component: region,
        anchors,
        paths,
        boxes,
    })
}

/// Full per-frame detection with the intermediate separation results.
pub fn detect_detailed(
    map: &TemperatureMap,
    gray: &GrayFrame,
    config: &DetectorConfig,
) -> Result<Vec<Separation>> {
    let (w, h) = (map.width(), map.height());
    if gray.width() != w || gray.height() != h {
        return Err(Error::DimensionMismatch("map and gray frame differ in shape".into()));
    }
    let mut s = config.kernel_size.min(w.min(h));
    if s % 2 == 0 {
        s -= 1;
    }
    let mut mask = adaptive_mask(gray, s, config.c_off)?;
    if config.min_contrast_c > 0.0 {
        let floor = background_level(map) + config.min_contrast_c;
        for (m, &t) in mask.as_mut_slice().iter_mut().zip(map.grid().as_slice()) {
            *m = *m && t > floor;
        }
    }
    let min_area = config.min_area(map.scale());
    label_components(&mask, min_area)
        .iter()
        .map(|c| separate(map, &c.fill_holes(w, h), config))
        .collect()
}

/// Median temperature sampled once per sensor pixel.
pub fn background_level(map: &TemperatureMap) -> f64 {
    let step = map.scale().max(1);
    let off = step / 2;
    let mut v: Vec<f64> = (off..map.height())
        .step_by(step)
        .flat_map(|y| (off..map.width()).step_by(step).map(move |x| (x, y)))
        .map(|(x, y)| map.get(x, y))
        .collect();
    let mid = v.len() / 2;
    *v.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Boxes for every user region in the frame, sorted by `x0` then `y0`.
pub fn detect(map: &TemperatureMap, gray: &GrayFrame, config: &DetectorConfig) -> Result<Vec<BBox>> {
    let mut boxes: Vec<BBox> = detect_detailed(map, gray, config)?
        .into_iter()
        .flat_map(|s| s.boxes)
        .collect();
    boxes.sort_by_key(|b| (b.x0(), b.y0()));
    Ok(boxes)
}
