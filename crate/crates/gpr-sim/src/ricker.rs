//! Ricker (Mexican-hat) source wavelet.
//!
//! The transmitted pulse is `r(t) = (1 - 2 pi^2 f^2 t^2) exp(-pi^2 f^2 t^2)`
//! for centre frequency `f`. The peak is `r(0) = 1`, the two side lobes reach
//! `-2 e^{-3/2}` at `t = +-sqrt(3/2) / (pi f)`, and the wavelet is even in
//! `t`. Sampling requires a rate above four times the centre frequency so the
//! side lobes stay resolved.

use crate::{Result, SimError};
use serde::{Deserialize, Serialize};

/// Sampling plan for a discretised Ricker wavelet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RickerConfig {
    /// Centre frequency in hertz.
    pub center_frequency_hz: f64,
    /// Time step between consecutive samples, in seconds.
    pub sample_interval_s: f64,
    /// Number of samples; the wavelet is centred on the middle sample.
    pub num_samples: usize,
}

impl RickerConfig {
    /// Checks positivity and the sampling-rate requirement
    /// `1 / sample_interval > 4 * center_frequency`.
    pub fn validate(&self) -> Result<()> {
        if !(self.center_frequency_hz > 0.0) || !self.center_frequency_hz.is_finite() {
            return Err(SimError::Config(format!(
                "center frequency must be positive and finite, got {}",
                self.center_frequency_hz
            )));
        }
        if !(self.sample_interval_s > 0.0) || !self.sample_interval_s.is_finite() {
            return Err(SimError::Config(format!(
                "sample interval must be positive and finite, got {}",
                self.sample_interval_s
            )));
        }
        if self.num_samples == 0 {
            return Err(SimError::Config("num_samples must be positive".into()));
        }
        let rate = 1.0 / self.sample_interval_s;
        if rate <= 4.0 * self.center_frequency_hz {
            return Err(SimError::Config(format!(
                "sample rate {:.3e} Hz must exceed 4x the centre frequency {:.3e} Hz",
                rate, self.center_frequency_hz
            )));
        }
        Ok(())
    }
}

/// Evaluates the Ricker wavelet with centre frequency `f_hz` at time `t_s`.
pub fn ricker(f_hz: f64, t_s: f64) -> f64 {
    let a = std::f64::consts::PI * f_hz * t_s;
    let a2 = a * a;
    (1.0 - 2.0 * a2) * (-a2).exp()
}

/// Samples the wavelet on the grid described by `cfg`, centred on sample
/// `num_samples / 2`.
pub fn sampled_wavelet(cfg: &RickerConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mid = (cfg.num_samples / 2) as f64;
    Ok((0..cfg.num_samples)
        .map(|i| ricker(cfg.center_frequency_hz, (i as f64 - mid) * cfg.sample_interval_s))
        .collect())
}

/// Half-width of the support used when rendering: beyond `1.5 / f` the
/// wavelet magnitude is below 3e-9 and is treated as zero.
pub fn support_halfwidth_s(f_hz: f64) -> f64 {
    1.5 / f_hz
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_is_one_at_zero() {
        for &f in &[2.0e8, 3.5e8, 1.0e9] {
            assert_eq!(ricker(f, 0.0), 1.0);
        }
    }

    #[test]
    fn minima_match_closed_form() {
        // Side lobes sit at t = +-sqrt(3/2)/(pi f) with value -2 e^{-3/2},
        // approximately -0.44626.
        let expected = -2.0 * (-1.5f64).exp();
        assert!((expected - (-0.44626)).abs() < 1e-5);
        for &f in &[2.0e8, 3.5e8] {
            let t = (1.5f64).sqrt() / (std::f64::consts::PI * f);
            for &s in &[-1.0, 1.0] {
                assert!((ricker(f, s * t) - expected).abs() < 1e-6);
            }
            // Neighbouring points are higher, so this is a true minimum.
            assert!(ricker(f, t * 1.01) > expected);
            assert!(ricker(f, t * 0.99) > expected);
        }
    }

    #[test]
    fn wavelet_is_even() {
        let f = 3.5e8;
        for i in 1..50 {
            let t = i as f64 * 1.0e-10;
            assert!((ricker(f, t) - ricker(f, -t)).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_requires_margin_over_nyquist() {
        let ok = RickerConfig {
            center_frequency_hz: 3.5e8,
            sample_interval_s: 0.4e-9,
            num_samples: 64,
        };
        ok.validate().unwrap();
        let too_slow = RickerConfig {
            sample_interval_s: 1.0e-9,
            ..ok
        };
        assert!(matches!(too_slow.validate(), Err(SimError::Config(_))));
        let bad_freq = RickerConfig {
            center_frequency_hz: 0.0,
            ..ok
        };
        assert!(bad_freq.validate().is_err());
    }

    #[test]
    fn sampled_wavelet_is_centred_and_symmetric() {
        let cfg = RickerConfig {
            center_frequency_hz: 2.0e8,
            sample_interval_s: 0.4e-9,
            num_samples: 65,
        };
        let w = sampled_wavelet(&cfg).unwrap();
        assert_eq!(w.len(), 65);
        assert_eq!(w[32], 1.0);
        for i in 0..32 {
            assert!((w[i] - w[64 - i]).abs() < 1e-15);
        }
    }
}
