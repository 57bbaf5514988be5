//! Short-time Fourier transform with a Hann window and circular boundary.
//!
//! `S[f](u, ξ_k) = Σ_{n=-L/2}^{L/2-1} f((u+n) mod N) w(n) e^{-iξ_k(u+n)}` with
//! `ξ_k = 2πk/L`. The phase is referenced to absolute time (not to the frame
//! start), which makes a shift of the input a shift of frames times the phase
//! factor `e^{-iξ t₀}`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hann window `cos²(πn/L)` for `n = -L/2 .. L/2-1`, scaled to unit L² norm.
pub fn hann(len: usize) -> Vec<f64> {
    let half = (len / 2) as f64;
    let raw: Vec<f64> = (0..len)
        .map(|i| {
            let n = i as f64 - half;
            (PI * n / len as f64).cos().powi(2)
        })
        .collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| v / norm).collect()
}

/// One STFT column at absolute time `u`, all `L` frequencies.
pub fn stft_at(f: &[f64], window: &[f64], u: i64) -> Vec<Complex64> {
    let n = f.len() as i64;
    let l = window.len();
    let half = (l / 2) as i64;
    (0..l)
        .map(|k| {
            window
                .iter()
                .enumerate()
                .map(|(i, &w)| {
                    let t = u + i as i64 - half;
                    let v = f[t.rem_euclid(n) as usize] * w;
                    // reduce the phase argument modulo L to keep it small
                    let ph = (k as i64 * t).rem_euclid(l as i64) as f64 * 2.0 * PI / l as f64;
                    Complex64::from_polar(v, -ph)
                })
                .sum()
        })
        .collect()
}

/// Frames at `u = 0, hop, 2·hop, ...`: `[frame][frequency]`.
pub fn stft(f: &[f64], win_len: usize, hop: usize) -> Result<Vec<Vec<Complex64>>> {
    if win_len == 0 || win_len > f.len() {
        return Err(Error::contract(format!(
            "window length {win_len} must be in 1..={}",
            f.len()
        )));
    }
    if hop == 0 {
        return Err(Error::contract("hop must be >= 1"));
    }
    let w = hann(win_len);
    Ok((0..f.len())
        .step_by(hop)
        .map(|u| stft_at(f, &w, u as i64))
        .collect())
}

pub fn spectrogram(s: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    s.iter()
        .map(|col| col.iter().map(|c| c.norm_sqr()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_has_unit_norm() {
        let w = hann(64);
        assert!((w.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[0] < 1e-30);
    }

    #[test]
    fn constant_signal_sits_in_dc_row() {
        let s = stft(&[1.0; 128], 32, 8).unwrap();
        for col in spectrogram(&s) {
            let dc = col[0];
            assert!(col.iter().skip(2).take(29).all(|&v| v < 1e-20 * dc.max(1.0) + 1e-20));
            assert!(dc > col[1]);
        }
    }

    #[test]
    fn shift_by_hop_shifts_frames_with_phase() {
        let n = 128;
        let f: Vec<f64> = (0..n).map(|i| ((i * i) % 17) as f64 - 8.0).collect();
        let hop = 4;
        let shifted: Vec<f64> = (0..n).map(|i| f[(i + n - hop) % n]).collect();
        let a = stft(&f, 32, hop).unwrap();
        let b = stft(&shifted, 32, hop).unwrap();
        for m in 1..a.len() {
            for k in 0..32 {
                let xi = 2.0 * PI * k as f64 / 32.0;
                let want = a[m - 1][k] * Complex64::from_polar(1.0, -xi * hop as f64);
                assert!((b[m][k] - want).norm() < 1e-10);
                assert!((b[m][k].norm_sqr() - a[m - 1][k].norm_sqr()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tone_peaks_at_its_bin() {
        let f: Vec<f64> = (0..256)
            .map(|t| (2.0 * PI * 5.0 * t as f64 / 64.0).cos())
            .collect();
        let spec = spectrogram(&stft(&f, 64, 16).unwrap());
        for col in spec {
            let best = (0..33).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
            assert_eq!(best, 5);
        }
    }

    #[test]
    fn window_longer_than_signal_is_rejected() {
        assert!(stft(&[0.0; 16], 32, 1).is_err());
    }
}
