//! Seeded channel realizations and the gain-to-noise ratio.
//!
//! Power gain follows a log-distance path loss with optional Rayleigh fading:
//!
//! ```text
//! |H|² = 10^(−(L0 + 10·α·log10 d) / 10) · F
//! ```
//!
//! where `F` is an exponential draw with unit mean (the power of a unit
//! Rayleigh envelope), or `1` without fading.
//!
//! # Random stream
//!
//! Draws come from PCG64 (XSL-RR 128/64 LCG, multiplier
//! `0x2360ed051fc65da44385df649fccf645`) created with `state = seed` and
//! `stream = 0x0a02bdbf7bb3c0a7ac28fa16a64abf96`. Each fading draw consumes
//! one `u64` word `w`: `u = (w >> 11) · 2⁻⁵³`, `F = −ln(1 − u)`. Pairs are
//! visited row-major (terminal outer, RAT inner), so a scenario with `L`
//! terminals is a prefix of the same seed's scenario with more terminals.

use rand_core::Rng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelMatrix, Matrix, Mmt};

pub const PCG_STREAM: u128 = 0x0a02_bdbf_7bb3_c0a7_ac28_fa16_a64a_bf96;

/// Thermal noise floor, −174 dBm/Hz.
pub const THERMAL_NOISE_PSD: f64 = 4e-21;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    None,
    Rayleigh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelModelParams {
    pub pathloss_exponent: f64,
    /// Loss at the 1 m reference distance, dB.
    pub reference_loss_db: f64,
    pub noise_psd_w_per_hz: f64,
    pub fading: Fading,
}

impl Default for ChannelModelParams {
    fn default() -> Self {
        ChannelModelParams {
            pathloss_exponent: 3.5,
            reference_loss_db: 30.0,
            noise_psd_w_per_hz: THERMAL_NOISE_PSD,
            fading: Fading::Rayleigh,
        }
    }
}

/// `c = |H|² / N`.
pub fn gain_to_noise_ratio(h_sq: f64, n_psd: f64) -> Result<f64> {
    if !(n_psd > 0.0) {
        return Err(Error::InvalidNoise(n_psd));
    }
    Ok(h_sq / n_psd)
}

/// Deterministic path loss at distance `d` metres, as a linear power gain.
pub fn path_gain(params: &ChannelModelParams, d: f64) -> f64 {
    let loss_db = params.reference_loss_db + 10.0 * params.pathloss_exponent * d.log10();
    10f64.powf(-loss_db / 10.0)
}

/// Portable uniform and exponential draws on top of PCG64.
pub struct FadingStream {
    rng: Pcg64,
}

impl FadingStream {
    pub fn new(seed: u64) -> Self {
        FadingStream {
            rng: Pcg64::new(seed as u128, PCG_STREAM),
        }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential with unit mean.
    pub fn next_exponential(&mut self) -> f64 {
        -(1.0 - self.next_uniform()).ln()
    }
}

pub fn generate_channel(
    mmts: &[Mmt],
    num_rats: usize,
    params: &ChannelModelParams,
    seed: u64,
) -> Result<ChannelMatrix> {
    if !(params.pathloss_exponent > 0.0) {
        return Err(Error::InvalidGeometry("pathloss_exponent must be > 0".into()));
    }
    if !(params.noise_psd_w_per_hz > 0.0) {
        return Err(Error::InvalidNoise(params.noise_psd_w_per_hz));
    }
    for (p, m) in mmts.iter().enumerate() {
        if m.distance_m.len() != num_rats {
            return Err(Error::InvalidGeometry(format!(
                "mmt[{p}] has {} distances for {num_rats} RATs",
                m.distance_m.len()
            )));
        }
        if m.distance_m.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidGeometry(format!("mmt[{p}] has a non-positive distance")));
        }
    }

    let mut stream = FadingStream::new(seed);
    let mut transfer = Matrix::zeros(mmts.len(), num_rats);
    for (p, m) in mmts.iter().enumerate() {
        for q in 0..num_rats {
            let fade = match params.fading {
                Fading::None => 1.0,
                Fading::Rayleigh => stream.next_exponential(),
            };
            transfer.set(p, q, path_gain(params, m.distance_m[q]) * fade);
        }
    }
    let noise = Matrix::filled(mmts.len(), num_rats, params.noise_psd_w_per_hz);
    ChannelMatrix::new(transfer, noise)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mmts_at(d: f64, l: usize, k: usize) -> Vec<Mmt> {
        vec![Mmt { max_power_w: 0.02, distance_m: vec![d; k] }; l]
    }

    fn no_fading() -> ChannelModelParams {
        ChannelModelParams {
            fading: Fading::None,
            ..Default::default()
        }
    }

    #[test]
    fn gain_to_noise_examples() {
        assert_eq!(gain_to_noise_ratio(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(gain_to_noise_ratio(1.0, 1.0).unwrap(), 1.0);
        let c = gain_to_noise_ratio(4e-10, 4e-21).unwrap();
        assert!((c - 1e11).abs() <= 1e11 * 1e-15);
        assert!(matches!(gain_to_noise_ratio(1.0, 0.0), Err(Error::InvalidNoise(_))));
        assert!(gain_to_noise_ratio(1.0, -1.0).is_err());
    }

    #[test]
    fn unit_distance_leaves_reference_loss() {
        let ch = generate_channel(&mmts_at(1.0, 1, 1), 1, &no_fading(), 0).unwrap();
        assert!((ch.transfer_power().get(0, 0) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn path_loss_at_200m_matches_high_precision_value() {
        // 1e-3 * 200^-3.5 evaluated at 40 digits.
        let expected = 8.838_834_764_831_844e-12;
        let ch = generate_channel(&mmts_at(200.0, 1, 1), 1, &no_fading(), 0).unwrap();
        let got = ch.transfer_power().get(0, 0);
        assert!(((got - expected) / expected).abs() < 1e-14, "{got}");
        let c = ch.gain(0, 0);
        assert_eq!(c, got / THERMAL_NOISE_PSD);
    }

    #[test]
    fn generation_is_deterministic() {
        let params = ChannelModelParams::default();
        let a = generate_channel(&mmts_at(200.0, 7, 3), 3, &params, 42).unwrap();
        let b = generate_channel(&mmts_at(200.0, 7, 3), 3, &params, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_channel(&mmts_at(200.0, 7, 3), 3, &params, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fewer_terminals_give_a_prefix() {
        let params = ChannelModelParams::default();
        let small = generate_channel(&mmts_at(200.0, 3, 2), 2, &params, 9).unwrap();
        let large = generate_channel(&mmts_at(200.0, 8, 2), 2, &params, 9).unwrap();
        for p in 0..3 {
            assert_eq!(small.gains().row(p), large.gains().row(p));
        }
    }

    #[test]
    fn rayleigh_draws_have_unit_mean() {
        let mut s = FadingStream::new(2024);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| s.next_exponential()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn generated_gains_positive_and_exact() {
        let ch = generate_channel(&mmts_at(150.0, 20, 2), 2, &ChannelModelParams::default(), 5).unwrap();
        for p in 0..20 {
            for q in 0..2 {
                let c = ch.gain(p, q);
                assert!(c > 0.0);
                assert_eq!(c, ch.transfer_power().get(p, q) / ch.noise_psd().get(p, q));
            }
        }
    }

    #[test]
    fn bad_geometry_rejected() {
        let params = ChannelModelParams::default();
        assert!(generate_channel(&mmts_at(0.0, 1, 1), 1, &params, 0).is_err());
        assert!(generate_channel(&mmts_at(1.0, 1, 2), 3, &params, 0).is_err());
    }
}
