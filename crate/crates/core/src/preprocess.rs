//! Raw frame conditioning: chessboard fill, bilinear up-sampling, cutoff clamp and gray rescale.

use crate::error::{Error, Result};
use crate::types::{GrayFrame, Grid, RawFrame, Subpage, TemperatureMap};

pub const DEFAULT_SCALE: usize = 20;
pub const DEFAULT_CUTOFF_C: f64 = 37.0;

/// Replaces every missing cell by the mean of its valid 4-neighbours.
///
/// Frames flagged `Full` may still carry scattered NaNs; those are filled the
/// same way, repeating until none remain, provided at most half the cells are missing.
pub fn fill_chessboard(frame: &RawFrame) -> Result<RawFrame> {
    let (w, h) = (frame.width(), frame.height());
    let missing = frame.missing_count();
    if missing == 0 {
        return RawFrame::new(*frame.spec(), frame.values().to_vec(), frame.timestamp(), Subpage::Full);
    }
    if frame.subpage() == Subpage::Full && 2 * missing > w * h {
        return Err(Error::InvalidPattern(format!(
            "{missing} of {} cells missing without a chessboard parity",
            w * h
        )));
    }

    let mut values = frame.values().to_vec();
    loop {
        let mut next = values.clone();
        let mut remaining = 0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if !values[i].is_nan() {
                    continue;
                }
                let mut sum = 0.0f64;
                let mut n = 0u32;
                let mut take = |v: f32| {
                    if !v.is_nan() {
                        sum += v as f64;
                        n += 1;
                    }
                };
                if x > 0 {
                    take(values[i - 1]);
                }
                if x + 1 < w {
                    take(values[i + 1]);
                }
                if y > 0 {
                    take(values[i - w]);
                }
                if y + 1 < h {
                    take(values[i + w]);
                }
                if n > 0 {
                    next[i] = (sum / n as f64) as f32;
                } else {
                    remaining += 1;
                }
            }
        }
        if remaining == 0 {
            return RawFrame::new(*frame.spec(), next, frame.timestamp(), Subpage::Full);
        }
        if next.iter().filter(|v| v.is_nan()).count() == values.iter().filter(|v| v.is_nan()).count() {
            return Err(Error::InvalidPattern("frame has no valid cells to fill from".into()));
        }
        values = next;
    }
}

/// Source sample index pair and blend weight for each output coordinate.
fn bilinear_taps(n_in: usize, scale: usize) -> Vec<(usize, usize, f64)> {
    let s = scale as f64;
    let last = (n_in - 1) as f64;
    (0..n_in * scale)
        .map(|u| {
            let x = ((u as f64 + 0.5) / s - 0.5).clamp(0.0, last);
            let i0 = x.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, x - i0 as f64)
        })
        .collect()
}

/// Bilinear up-sampling by `scale` per axis with pixel-center alignment.
///
/// Missing cells must already be filled.
pub fn interpolate(frame: &RawFrame, scale: usize) -> Result<TemperatureMap> {
    if scale == 0 {
        return Err(Error::Validation("scale must be at least 1".into()));
    }
    if frame.missing_count() > 0 {
        return Err(Error::Precondition("interpolate requires a filled frame".into()));
    }
    let (w, h) = (frame.width(), frame.height());
    let cols = bilinear_taps(w, scale);
    let rows = bilinear_taps(h, scale);
    let src: Vec<f64> = frame.values().iter().map(|&v| v as f64).collect();

    // Horizontal pass on source rows first, then blend row pairs.
    let wide: Vec<Vec<f64>> = (0..h)
        .map(|y| {
            let row = &src[y * w..(y + 1) * w];
            cols.iter()
                .map(|&(a, b, t)| row[a] + (row[b] - row[a]) * t)
                .collect()
        })
        .collect();
    let out_w = w * scale;
    let mut data = Vec::with_capacity(out_w * h * scale);
    for &(a, b, t) in &rows {
        let (ra, rb) = (&wide[a], &wide[b]);
        data.extend(ra.iter().zip(rb).map(|(&p, &q)| p + (q - p) * t));
    }
    TemperatureMap::new(Grid::from_vec(out_w, h * scale, data)?, scale)
}

pub fn clamp_cutoff(map: &TemperatureMap, cutoff_c: f64) -> TemperatureMap {
    let grid = map.grid().map(|&v| v.min(cutoff_c));
    TemperatureMap::new(grid, map.scale()).expect("scale preserved")
}

/// Per-frame min/max rescale to `[0, 255]`, rounding half up.
pub fn to_gray(map: &TemperatureMap) -> GrayFrame {
    let (lo, hi) = map.min_max();
    let span = hi - lo;
    let grid = if span > 0.0 {
        let k = 255.0 / span;
        map.grid()
            .map(|&v| ((v - lo) * k + 0.5).floor().clamp(0.0, 255.0) as u8)
    } else {
        map.grid().map(|_| 0u8)
    };
    GrayFrame::new(grid)
}

/// The full conditioning chain. Returns the clamped temperature map and its gray rendition.
pub fn preprocess(frame: &RawFrame, scale: usize, cutoff_c: f64) -> Result<(TemperatureMap, GrayFrame)> {
    let filled = fill_chessboard(frame)?;
    let map = clamp_cutoff(&interpolate(&filled, scale)?, cutoff_c);
    let gray = to_gray(&map);
    Ok((map, gray))
}
