//! Continuous wavelet transform with closed-form real mother wavelets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::conv::{correlate, Padding};
use crate::error::{Error, Result};
use crate::group::ScaleGrid;

/// Nominal sampled width of a mother wavelet at scale 1 (support radius 8).
pub const WAVELET_WIDTH: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MotherWavelet {
    /// Negative normalized second derivative of a Gaussian.
    #[default]
    MexicanHat,
    /// Normalized first derivative of a Gaussian.
    GaussianDerivative1,
}

impl MotherWavelet {
    pub fn eval(self, x: f64) -> f64 {
        let g = (-x * x / 2.0).exp();
        match self {
            MotherWavelet::MexicanHat => {
                2.0 / (3f64.sqrt() * PI.powf(0.25)) * (1.0 - x * x) * g
            }
            MotherWavelet::GaussianDerivative1 => -(2f64.sqrt() / PI.powf(0.25)) * x * g,
        }
    }

    /// Angular frequency of the spectral peak.
    pub fn peak_frequency(self) -> f64 {
        match self {
            MotherWavelet::MexicanHat => 2f64.sqrt(),
            MotherWavelet::GaussianDerivative1 => 1.0,
        }
    }

    /// Smallest scale whose peak period spans at least two samples.
    pub fn min_scale(self) -> f64 {
        2.0 * self.peak_frequency() / (2.0 * PI)
    }

    /// `ψ(z/s)` at integer taps `|z| ≤ ⌊s·17/2⌋`.
    pub fn sample(self, s: f64) -> Vec<f64> {
        let m = (s * WAVELET_WIDTH as f64 / 2.0 + 1e-9).floor() as i64;
        (-m..=m).map(|z| self.eval(z as f64 / s)).collect()
    }
}

/// `W[f](u, s) = Σ_z f((u+z) mod N) s^{-1/2} ψ(z/s)`: `[scale][time]`.
pub fn cwt(f: &[f64], mother: MotherWavelet, grid: &ScaleGrid) -> Result<Vec<Vec<f64>>> {
    let smin = grid.scales[0];
    if smin < mother.min_scale() {
        return Err(Error::contract(format!(
            "scale {smin} puts the wavelet's peak period below two samples (minimum scale {:.3})",
            mother.min_scale()
        )));
    }
    grid.scales
        .iter()
        .map(|&s| {
            let k: Vec<f64> = mother.sample(s).iter().map(|v| v / s.sqrt()).collect();
            if k.len() > f.len() {
                return Err(Error::contract(format!(
                    "wavelet at scale {s} spans {} samples, longer than the signal ({})",
                    k.len(),
                    f.len()
                )));
            }
            correlate(f, &k, Padding::Circular)
        })
        .collect()
}

pub fn scalogram(w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    w.iter().map(|r| r.iter().map(|v| v * v).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(f: impl Fn(f64) -> f64) -> f64 {
        let h = 1e-3;
        (-20_000..=20_000).map(|i| f(i as f64 * h) * h).sum()
    }

    #[test]
    fn mothers_are_zero_mean_and_unit_norm() {
        for m in [MotherWavelet::MexicanHat, MotherWavelet::GaussianDerivative1] {
            assert!(quad(|x| m.eval(x)).abs() < 1e-10, "{m:?}");
            assert!((quad(|x| m.eval(x).powi(2)) - 1.0).abs() < 1e-10, "{m:?}");
        }
    }

    #[test]
    fn matched_filter_peaks_at_its_scale_and_position() {
        let grid = ScaleGrid::dyadic(5).unwrap();
        let n = 512;
        let s0 = 4.0;
        let f: Vec<f64> = (0..n)
            .map(|z| MotherWavelet::MexicanHat.eval((z as f64 - 256.0) / s0) / s0.sqrt())
            .collect();
        let w = cwt(&f, MotherWavelet::MexicanHat, &grid).unwrap();
        let (mut best, mut at) = (0.0, (0, 0));
        for (j, row) in w.iter().enumerate() {
            for (u, v) in row.iter().enumerate() {
                if v.abs() > best {
                    best = v.abs();
                    at = (j, u);
                }
            }
        }
        assert_eq!(at, (2, 256));
    }

    #[test]
    fn zero_signal_and_linearity() {
        let grid = ScaleGrid::dyadic(4).unwrap();
        let z = cwt(&[0.0; 256], MotherWavelet::MexicanHat, &grid).unwrap();
        assert!(z.iter().flatten().all(|&v| v == 0.0));
        let f: Vec<f64> = (0..256).map(|i| ((i * 31) % 11) as f64 - 5.0).collect();
        let g: Vec<f64> = (0..256).map(|i| ((i * 7) % 5) as f64).collect();
        let mix: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let (wf, wg, wm) = (
            cwt(&f, MotherWavelet::MexicanHat, &grid).unwrap(),
            cwt(&g, MotherWavelet::MexicanHat, &grid).unwrap(),
            cwt(&mix, MotherWavelet::MexicanHat, &grid).unwrap(),
        );
        for j in 0..4 {
            for u in 0..256 {
                assert!((wm[j][u] - (2.0 * wf[j][u] - 0.5 * wg[j][u])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nyquist_floor_is_enforced() {
        let grid = ScaleGrid::exponential(2.0, -2, 2).unwrap();
        assert!(cwt(&[0.0; 256], MotherWavelet::MexicanHat, &grid).is_err());
    }
}
