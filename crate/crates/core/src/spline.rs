//! Continuous B-spline filters that can be sampled at any scale.
//!
//! A filter is `ψ(x) = Σ_k c_k B^n((x - x_k)/σ)` with `K = N_ψ` knots
//! `x_k = k - (K-1)/2` and `σ = 1`, so at scale 1 there is one coefficient per
//! nominal tap. Sampling at scale `s` is a fixed linear map of the
//! coefficients; that map (the "sampling basis") depends only on `s`, the
//! sample spacing and the applied weight, never on the coefficients, so it can
//! be cached without any risk of going stale.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;

use crate::autodiff::{Reduce, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Centered cardinal B-spline `B^n(x)` for `n ≤ 3`.
pub fn bspline(x: f64, order: usize) -> Result<f64> {
    let a = x.abs();
    Ok(match order {
        0 => {
            if (-0.5..0.5).contains(&x) {
                1.0
            } else {
                0.0
            }
        }
        1 => (1.0 - a).max(0.0),
        2 => {
            if a < 0.5 {
                0.75 - a * a
            } else if a < 1.5 {
                0.5 * (1.5 - a) * (1.5 - a)
            } else {
                0.0
            }
        }
        3 => {
            if a < 1.0 {
                2.0 / 3.0 - a * a + 0.5 * a * a * a
            } else if a < 2.0 {
                (2.0 - a).powi(3) / 6.0
            } else {
                0.0
            }
        }
        _ => return Err(Error::contract(format!("unsupported B-spline order {order}"))),
    })
}

/// Half-width, in taps, of a filter of nominal width `n_psi` sampled at scale
/// `s` with sample spacing `spacing`: taps cover `|z| ≤ ⌊s N_ψ / 2⌋`.
pub fn half_width(s: f64, n_psi: usize, spacing: f64) -> usize {
    let h = (s * n_psi as f64 / 2.0 + 1e-9).floor();
    (h / spacing + 1e-9).floor() as usize
}

/// Geometry shared by every filter of a layer.
#[derive(Debug)]
pub struct SplineBasis {
    pub n_psi: usize,
    pub order: usize,
    pub sigma: f64,
    cache: Mutex<HashMap<(u64, u64, u64), Arc<Tensor>>>,
}

impl Clone for SplineBasis {
    fn clone(&self) -> Self {
        SplineBasis {
            n_psi: self.n_psi,
            order: self.order,
            sigma: self.sigma,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl SplineBasis {
    pub fn new(n_psi: usize, order: usize) -> Result<Self> {
        if n_psi == 0 || n_psi % 2 == 0 {
            return Err(Error::config("kernel", format!("nominal width must be odd, got {n_psi}")));
        }
        bspline(0.0, order)?;
        Ok(SplineBasis {
            n_psi,
            order,
            sigma: 1.0,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn num_coeffs(&self) -> usize {
        self.n_psi
    }

    pub fn knot(&self, k: usize) -> f64 {
        k as f64 - (self.n_psi as f64 - 1.0) / 2.0
    }

    /// Evaluates `Σ_k c_k B((x - x_k)/σ)`.
    pub fn eval(&self, coeffs: &[f64], x: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * bspline((x - self.knot(k)) / self.sigma, self.order).unwrap_or(0.0))
            .sum()
    }

    pub fn width(&self, s: f64, spacing: f64) -> usize {
        2 * half_width(s, self.n_psi, spacing) + 1
    }

    /// `[K, W]` matrix with entries `weight * B((z/s - x_k)/σ)`, taps
    /// `z = (n - m) * spacing`.
    pub fn matrix(&self, s: f64, spacing: f64, weight: f64) -> Result<Arc<Tensor>> {
        if s < 1.0 - 1e-12 {
            return Err(Error::contract(format!("filters cannot be sampled below scale 1 (s = {s})")));
        }
        let key = (s.to_bits(), spacing.to_bits(), weight.to_bits());
        if let Some(m) = self.cache.lock().expect("basis cache").get(&key) {
            return Ok(m.clone());
        }
        let m = half_width(s, self.n_psi, spacing);
        let w = 2 * m + 1;
        let k = self.num_coeffs();
        let mut data = vec![0.0; k * w];
        for ki in 0..k {
            for n in 0..w {
                let z = (n as f64 - m as f64) * spacing;
                data[ki * w + n] = weight * bspline((z / s - self.knot(ki)) / self.sigma, self.order)?;
            }
        }
        let t = Arc::new(Tensor::new(&[k, w], data)?);
        self.cache
            .lock()
            .expect("basis cache")
            .insert(key, t.clone());
        Ok(t)
    }
}

/// Learnable spline filter bank: coefficients `[cout, cin, K]` for a 1-D
/// filter or `[cout, cin, K_s, K]` for a group filter with `K_s` discrete
/// scale offsets.
#[derive(Debug, Clone)]
pub struct SplineFilter {
    pub coeffs: Tensor,
    pub basis: SplineBasis,
}

impl SplineFilter {
    pub fn new(coeffs: Tensor, basis: SplineBasis) -> Result<Self> {
        let r = coeffs.rank();
        if !(r == 3 || r == 4) || coeffs.dim(r - 1) != basis.num_coeffs() {
            return Err(Error::dim(
                "SplineFilter",
                "coeffs",
                format!("[cout, cin, (K_s,) {}]", basis.num_coeffs()),
                format!("{:?}", coeffs.shape()),
            ));
        }
        Ok(SplineFilter { coeffs, basis })
    }

    /// Uniform `±1/sqrt(fan_in)` initialization, fan-in taken at scale 1.
    pub fn init(shape: &[usize], basis: SplineBasis, rng: &mut impl Rng) -> Result<Self> {
        let fan_in: usize = shape[1..].iter().product();
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        SplineFilter::new(Tensor::new(shape, data)?, basis)
    }

    pub fn scale_extent(&self) -> usize {
        if self.coeffs.rank() == 4 {
            self.coeffs.dim(2)
        } else {
            1
        }
    }

    /// Samples `ψ(z/s)` at integer taps `|z| ≤ ⌊sN_ψ/2⌋`:
    /// `[..., 2⌊sN_ψ/2⌋+1]`.
    pub fn sample(&self, s: f64) -> Result<Tensor> {
        let basis = self.basis.matrix(s, 1.0, 1.0)?;
        let mut tape = Tape::new();
        let c = tape.constant(self.coeffs.clone());
        let v = tape.basis_expand(c, basis)?;
        Ok(tape.value(v).clone())
    }
}

/// Mean over the tap axis of a sampled kernel `[..., W]`.
pub fn filter_mean(kernel: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let k = tape.constant(kernel.clone());
    let m = tape.reduce_axis(k, kernel.rank() - 1, Reduce::Mean)?;
    Ok(tape.value(m).clone())
}

/// `Σ (mean of each sampled kernel)²` over the given kernel nodes.
pub fn kernel_mean_penalty(tape: &mut Tape, kernels: &[Var]) -> Result<Option<Var>> {
    let mut total: Option<Var> = None;
    for &k in kernels {
        let rank = tape.value(k).rank();
        let m = tape.reduce_axis(k, rank - 1, Reduce::Mean)?;
        let sq = tape.mul(m, m)?;
        let s = tape.sum(sq);
        total = Some(match total {
            Some(t) => tape.add(t, s)?,
            None => s,
        });
    }
    Ok(total)
}

/// Zero-mean wavelet penalty of spline filters, each sampled at scale 1.
pub fn wavelet_penalty(tape: &mut Tape, filters: &[(Var, &SplineBasis)]) -> Result<Option<Var>> {
    let mut kernels = Vec::with_capacity(filters.len());
    for (coeffs, basis) in filters {
        let m = basis.matrix(1.0, 1.0, 1.0)?;
        kernels.push(tape.basis_expand(*coeffs, m)?);
    }
    kernel_mean_penalty(tape, &kernels)
}
