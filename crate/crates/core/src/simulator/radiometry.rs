//! Total-band radiometric model with exponential path attenuation.
//!
//! The source term is `eps * P(T_obj)`; along a path of length `r` it decays as
//! `exp(-gamma * r)` while the air fills in `(1 - exp(-gamma * r)) * P(T_amb)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stefan-Boltzmann constant, W m^-2 K^-4.
pub const STEFAN_BOLTZMANN: f64 = 5.670_374_419e-8;
pub const ABSOLUTE_ZERO_C: f64 = -273.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiometricParams {
    pub emissivity: f64,
    /// Attenuation coefficient, 1/m.
    pub gamma: f64,
    pub ambient_c: f64,
    pub skin_c: f64,
}

impl Default for RadiometricParams {
    fn default() -> Self {
        Self {
            emissivity: 0.98,
            gamma: 0.15,
            ambient_c: 25.0,
            skin_c: 34.0,
        }
    }
}

impl RadiometricParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.emissivity > 0.0 && self.emissivity <= 1.0) {
            return Err(Error::Validation(format!(
                "emissivity must lie in (0, 1], got {}",
                self.emissivity
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Validation(format!(
                "attenuation coefficient must be non-negative, got {}",
                self.gamma
            )));
        }
        for t in [self.ambient_c, self.skin_c] {
            if !(t > ABSOLUTE_ZERO_C) {
                return Err(Error::Validation(format!("temperature {t} below absolute zero")));
            }
        }
        Ok(())
    }

    /// Power leaving an exposed-skin surface, before any path loss.
    pub fn source_power(&self) -> f64 {
        self.emissivity * radiant_power(self.skin_c)
    }

    pub fn ambient_power(&self) -> f64 {
        radiant_power(self.ambient_c)
    }
}

/// Blackbody exitance at `t_c` degrees Celsius.
pub fn radiant_power(t_c: f64) -> f64 {
    let k = (t_c - ABSOLUTE_ZERO_C).max(0.0);
    let k2 = k * k;
    STEFAN_BOLTZMANN * k2 * k2
}

/// Inverse of [`radiant_power`].
pub fn temperature_from_power(power: f64) -> f64 {
    (power.max(0.0) / STEFAN_BOLTZMANN).sqrt().sqrt() + ABSOLUTE_ZERO_C
}

/// Received power from a source of power `source` after `r` metres of air.
pub fn attenuated_power(source: f64, ambient: f64, gamma: f64, r: f64) -> f64 {
    let transmitted = (-gamma * r).exp();
    let path = -(-gamma * r).exp_m1();
    transmitted * source + path * ambient
}

/// Temperature the sensor reports for exposed skin at range `r`.
pub fn apparent_temperature(params: &RadiometricParams, r: f64) -> f64 {
    temperature_from_power(attenuated_power(
        params.source_power(),
        params.ambient_power(),
        params.gamma,
        r,
    ))
}

/// Range at which exposed skin would read `apparent_c`.
///
/// Fails when the reading lies outside the image of [`apparent_temperature`]:
/// at or below ambient (infinite range) or above the zero-range reading.
pub fn invert_range(apparent_c: f64, params: &RadiometricParams) -> Result<f64> {
    if !(params.gamma > 0.0) {
        return Err(Error::Domain(format!(
            "range is unobservable with gamma = {}",
            params.gamma
        )));
    }
    let source = params.source_power();
    let ambient = params.ambient_power();
    let contrast = source - ambient;
    if !(contrast > 0.0) {
        return Err(Error::Domain(
            "target emits no more than the background; inversion undefined".into(),
        ));
    }
    let p = radiant_power(apparent_c);
    if !(p > ambient) {
        return Err(Error::Domain(format!(
            "reading {apparent_c} C is not warmer than ambient {} C",
            params.ambient_c
        )));
    }
    // (p - source) / contrast = exp(-gamma r) - 1, which lies in (-1, 0].
    let deficit = (p - source) / contrast;
    const SLACK: f64 = 1e-12;
    if deficit > SLACK {
        return Err(Error::Domain(format!(
            "reading {apparent_c} C exceeds the zero-range reading {} C",
            apparent_temperature(params, 0.0)
        )));
    }
    Ok((-deficit.min(0.0).ln_1p() / params.gamma).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_zero_emits_nothing() {
        assert_eq!(radiant_power(ABSOLUTE_ZERO_C), 0.0);
    }

    #[test]
    fn skin_power_matches_direct_evaluation() {
        let expected = STEFAN_BOLTZMANN * 307.15f64.powi(4);
        assert!((radiant_power(34.0) - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn lossless_limit_reports_true_temperature() {
        let p = RadiometricParams {
            emissivity: 1.0,
            gamma: 0.0,
            ..RadiometricParams::default()
        };
        for r in [0.0, 1.0, 5.0, 100.0] {
            assert!((apparent_temperature(&p, r) - p.skin_c).abs() < 1e-9);
        }
    }

    #[test]
    fn far_targets_fade_to_ambient() {
        let p = RadiometricParams::default();
        assert!((apparent_temperature(&p, 1000.0) - p.ambient_c).abs() < 1e-6);
    }

    #[test]
    fn fixture_at_two_metres() {
        let p = RadiometricParams::default();
        let t = apparent_temperature(&p, 2.0);
        // Independent evaluation of the blend in Kelvin.
        let src = 0.98 * 307.15f64.powi(4);
        let amb = 298.15f64.powi(4);
        let w = (-0.3f64).exp();
        let expected = (w * src + (1.0 - w) * amb).powf(0.25) - 273.15;
        assert!((t - expected).abs() < 1e-10, "{t} vs {expected}");
        assert!((invert_range(t, &p).unwrap() - 2.0).abs() < 1e-9 * 2.0);
        assert!(t > p.ambient_c && t < p.skin_c);
    }

    #[test]
    fn zero_range_and_ambient_edges() {
        let p = RadiometricParams::default();
        assert!(invert_range(apparent_temperature(&p, 0.0), &p).unwrap().abs() < 1e-9);
        assert!(matches!(invert_range(p.ambient_c, &p), Err(Error::Domain(_))));
        assert!(matches!(invert_range(p.skin_c + 5.0, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn round_trip_on_half_metre_grid() {
        let p = RadiometricParams::default();
        for i in 1..=10 {
            let r = 0.5 * i as f64;
            let back = invert_range(apparent_temperature(&p, r), &p).unwrap();
            assert!((back - r).abs() <= 1e-9 * r, "r={r} back={back}");
        }
    }

    #[test]
    fn strictly_decreasing_on_fine_grid() {
        let p = RadiometricParams::default();
        let mut prev = apparent_temperature(&p, 0.0);
        for i in 1..=600 {
            let t = apparent_temperature(&p, i as f64 * 0.01);
            assert!(t < prev);
            prev = t;
        }
    }
}
