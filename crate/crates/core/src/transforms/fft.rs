//! Radix-2 FFT with a direct-sum DFT for arbitrary lengths.
//!
//! Convention: `X[k] = Σ_n x[n] e^{-2πi kn/N}`; the inverse carries the `1/N`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::contract(format!(
            "fft length {n} is not a power of two; use dft() for arbitrary lengths"
        )));
    }
    Ok(())
}

fn transform(data: &mut [Complex64], inverse: bool) {
    let n = data.len();
    let bits = n.trailing_zeros();
    if n <= 1 {
        return;
    }
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // twiddles computed directly (not by repeated multiplication) to keep
        // rounding error at O(ε log N)
        let tw: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / len as f64))
            .collect();
        for chunk in data.chunks_mut(len) {
            let (a, b) = chunk.split_at_mut(half);
            for k in 0..half {
                let t = b[k] * tw[k];
                b[k] = a[k] - t;
                a[k] += t;
            }
        }
        len *= 2;
    }
}

pub fn fft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    check_pow2(x.len())?;
    let mut v = x.to_vec();
    transform(&mut v, false);
    Ok(v)
}

pub fn ifft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    check_pow2(x.len())?;
    let mut v = x.to_vec();
    transform(&mut v, true);
    let inv = 1.0 / x.len() as f64;
    for c in &mut v {
        *c *= inv;
    }
    Ok(v)
}

pub fn fft_real(x: &[f64]) -> Result<Vec<Complex64>> {
    let v: Vec<Complex64> = x.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    fft(&v)
}

/// O(N²) direct-sum DFT for any length.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter()
                .enumerate()
                .map(|(j, &v)| {
                    let ang = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
                    v * Complex64::from_polar(1.0, ang)
                })
                .sum()
        })
        .collect()
}

/// `max|a - b| / max|b|`.
pub fn max_rel_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
    let den = b.iter().fold(0.0f64, |m, y| m.max(y.norm()));
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn impulse_is_flat() {
        let mut x = vec![Complex64::new(0.0, 0.0); 8];
        x[0] = Complex64::new(1.0, 0.0);
        for v in fft(&x).unwrap() {
            assert_eq!(v, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn single_tone_hits_two_bins() {
        let x: Vec<f64> = (0..16)
            .map(|t| (2.0 * PI * 3.0 * t as f64 / 16.0).cos())
            .collect();
        let spec = fft_real(&x).unwrap();
        for (k, v) in spec.iter().enumerate() {
            if k == 3 || k == 13 {
                assert!((v.norm() - 8.0).abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12, "bin {k}");
            }
        }
    }

    #[test]
    fn matches_dft_and_inverts() {
        for m in 0..10 {
            let n = 1 << m;
            let x = random(n, m as u64);
            let f = fft(&x).unwrap();
            assert!(max_rel_diff(&f, &dft(&x)) <= 1e-10, "n={n}");
            assert!(max_rel_diff(&ifft(&f).unwrap(), &x) <= 1e-10);
        }
    }

    #[test]
    fn real_input_is_conjugate_symmetric() {
        let x: Vec<f64> = random(64, 5).iter().map(|c| c.re).collect();
        let f = fft_real(&x).unwrap();
        for k in 1..64 {
            assert!((f[k] - f[64 - k].conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn non_power_of_two_is_rejected() {
        assert!(matches!(fft(&random(12, 1)), Err(Error::Contract(_))));
        assert_eq!(dft(&random(12, 1)).len(), 12);
    }
}
