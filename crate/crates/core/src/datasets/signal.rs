//! Closed-form signal models that can be evaluated at any real time, so that
//! translations and dilations are applied exactly rather than by resampling.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::GroupElement;

/// Largest admissible frequency, in cycles per sample.
pub const BAND_LIMIT: f64 = 0.4;

/// `a · exp(-(x-c)²/(2w²)) · cos(2πν(x-c) + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborAtom {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    /// Cycles per unit time.
    pub frequency: f64,
    pub phase: f64,
}

impl GaborAtom {
    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.center;
        self.amplitude
            * (-d * d / (2.0 * self.width * self.width)).exp()
            * (2.0 * PI * self.frequency * d + self.phase).cos()
    }

    /// Frequency below which essentially all energy lies (three spectral
    /// standard deviations above the carrier).
    pub fn effective_max_frequency(&self) -> f64 {
        self.frequency.abs() + 3.0 / (2.0 * PI * self.width)
    }
}

/// Sum of random sinusoids below `max_frequency`, generated from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub seed: u64,
    pub rms: f64,
    pub components: usize,
    pub max_frequency: f64,
    /// When set, frequencies are snapped to multiples of `1/period` so the
    /// noise is periodic.
    pub period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sinusoid {
    amplitude: f64,
    frequency: f64,
    phase: f64,
}

impl NoiseSpec {
    fn sinusoids(&self) -> Vec<Sinusoid> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let amp = self.rms * (2.0 / self.components.max(1) as f64).sqrt();
        (0..self.components)
            .map(|_| {
                let mut frequency = rng.random_range(0.0..self.max_frequency);
                if let Some(p) = self.period {
                    frequency = (frequency * p).round().max(1.0) / p;
                }
                Sinusoid {
                    amplitude: amp,
                    frequency,
                    phase: rng.random_range(0.0..2.0 * PI),
                }
            })
            .collect()
    }
}

/// A signal `x ↦ base(g⁻¹ ⊙ x)` where `base` is a sum of Gabor atoms plus
/// optional band-limited noise and `g` is the accumulated group action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub atoms: Vec<GaborAtom>,
    pub noise: Option<NoiseSpec>,
    pub frame: GroupElement,
    #[serde(skip)]
    noise_cache: Option<Vec<Sinusoid>>,
}

impl SignalModel {
    pub fn new(atoms: Vec<GaborAtom>) -> Self {
        SignalModel {
            atoms,
            noise: None,
            frame: GroupElement::IDENTITY,
            noise_cache: None,
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise_cache = Some(noise.sinusoids());
        self.noise = Some(noise);
        self
    }

    /// `L_g[self]`; composing actions composes frames: `L_{g1} L_{g2} = L_{g1 g2}`.
    pub fn transformed(&self, g: GroupElement) -> SignalModel {
        let mut m = self.clone();
        m.frame = g * self.frame;
        m
    }

    fn noise_at(&self, y: f64) -> f64 {
        let Some(spec) = &self.noise else { return 0.0 };
        let owned;
        let sins = match &self.noise_cache {
            Some(s) => s,
            None => {
                owned = spec.sinusoids();
                &owned
            }
        };
        sins.iter()
            .map(|s| s.amplitude * (2.0 * PI * s.frequency * y + s.phase).cos())
            .sum()
    }

    fn base(&self, y: f64) -> f64 {
        self.atoms.iter().map(|a| a.eval(y)).sum::<f64>() + self.noise_at(y)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.base(self.frame.inverse().act(x))
    }

    /// Evaluates the `period`-periodization of the atom part (images within
    /// three periods) plus the noise, which must itself be periodic.
    pub fn eval_periodic(&self, x: f64, period: f64) -> f64 {
        let y = self.frame.inverse().act(x);
        let p = period / self.frame.s;
        let mut v = 0.0;
        for k in -3..=3 {
            v += self.atoms.iter().map(|a| a.eval(y + k as f64 * p)).sum::<f64>();
        }
        v + self.noise_at(y)
    }

    /// Highest frequency content (cycles per unit time) after the frame's
    /// dilation.
    pub fn max_frequency(&self) -> f64 {
        let atoms = self
            .atoms
            .iter()
            .map(GaborAtom::effective_max_frequency)
            .fold(0.0, f64::max);
        let noise = self.noise.as_ref().map_or(0.0, |n| n.max_frequency);
        atoms.max(noise) / self.frame.s
    }

    fn check_band(&self, rate: f64) -> Result<()> {
        let f = self.max_frequency() / rate;
        if f > BAND_LIMIT {
            return Err(Error::contract(format!(
                "signal content reaches {f:.3} cycles/sample, above the {BAND_LIMIT} band limit"
            )));
        }
        Ok(())
    }
}

/// `s[z] = model(z / rate)` for `z = 0..n`.
pub fn sample_signal(model: &SignalModel, n: usize, rate: f64) -> Result<Vec<f64>> {
    model.check_band(rate)?;
    Ok((0..n).map(|z| model.eval(z as f64 / rate)).collect())
}

/// As [`sample_signal`] but with the model periodized over `n` samples.
pub fn sample_signal_periodic(model: &SignalModel, n: usize) -> Result<Vec<f64>> {
    model.check_band(1.0)?;
    Ok((0..n).map(|z| model.eval_periodic(z as f64, n as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(center: f64) -> GaborAtom {
        GaborAtom {
            amplitude: 1.3,
            center,
            width: 6.0,
            frequency: 0.07,
            phase: 0.4,
        }
    }

    #[test]
    fn zero_amplitude_is_silent() {
        let m = SignalModel::new(vec![GaborAtom {
            amplitude: 0.0,
            ..atom(10.0)
        }]);
        assert!(sample_signal(&m, 32, 1.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn periodic_shift_is_circular_shift() {
        let noise = NoiseSpec {
            seed: 4,
            rms: 0.2,
            components: 5,
            max_frequency: 0.3,
            period: Some(128.0),
        };
        let m = SignalModel::new(vec![atom(20.0), atom(120.0)]).with_noise(noise);
        let n = 128;
        let base = sample_signal_periodic(&m, n).unwrap();
        for t0 in [1i64, 7, 100] {
            let shifted = sample_signal_periodic(&m.transformed(GroupElement::translation(t0 as f64)), n)
                .unwrap();
            for z in 0..n {
                let src = (z as i64 - t0).rem_euclid(n as i64) as usize;
                assert!((shifted[z] - base[src]).abs() <= 1e-12, "t0={t0} z={z}");
            }
        }
    }

    #[test]
    fn gaussian_energy_matches_closed_form() {
        let w = 5.0;
        let m = SignalModel::new(vec![GaborAtom {
            amplitude: 1.0,
            center: 0.0,
            width: w,
            frequency: 0.0,
            phase: 0.0,
        }]);
        let h = 0.01;
        let energy: f64 = (-10_000..=10_000)
            .map(|i| m.eval(i as f64 * h).powi(2) * h)
            .sum();
        assert!((energy - w * PI.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn dilation_is_pointwise_exact() {
        let m = SignalModel::new(vec![atom(30.0)]);
        let d = m.transformed(GroupElement { u: 0.0, s: 2.0 });
        let s = sample_signal(&d, 128, 1.0).unwrap();
        for (z, v) in s.iter().enumerate() {
            assert!((v - m.eval(z as f64 / 2.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn action_composes_exactly() {
        let m = SignalModel::new(vec![atom(30.0), atom(-4.0)]);
        let g1 = GroupElement { u: 0.0, s: 2.0 };
        let g2 = GroupElement { u: 3.0, s: 1.0 };
        let nested = m.transformed(g2).transformed(g1);
        let composed = m.transformed(g1 * g2);
        for i in 0..256 {
            let x = i as f64 * 0.37 - 20.0;
            // L_{g1}[L_{g2} f](x) = f(g2⁻¹ g1⁻¹ x)
            let direct = m.eval(g2.inverse().act(g1.inverse().act(x)));
            assert!((nested.eval(x) - composed.eval(x)).abs() <= 1e-12);
            assert!((direct - composed.eval(x)).abs() <= 1e-12);
        }
        let imp = SignalModel::new(vec![GaborAtom {
            amplitude: 1.0,
            center: 0.0,
            width: 0.5,
            frequency: 0.0,
            phase: 0.0,
        }]);
        let moved = imp.transformed(GroupElement::translation(5.0));
        assert_eq!(moved.eval(5.0), 1.0);
    }

    #[test]
    fn band_limit_is_enforced() {
        let m = SignalModel::new(vec![GaborAtom {
            frequency: 0.39,
            ..atom(0.0)
        }]);
        assert!(sample_signal(&m, 8, 1.0).is_err());
        let slow = m.transformed(GroupElement { u: 0.0, s: 2.0 });
        assert!(sample_signal(&slow, 8, 1.0).is_ok());
    }
}
