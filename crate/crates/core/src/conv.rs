//! 1-D cross-correlation kernels shared by the tape, the layers and the
//! transform suite.
//!
//! Work is split over rayon so that each output element is produced by exactly
//! one task and every reduction runs in a fixed order; results are bitwise
//! independent of the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary handling of the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "pad")]
pub enum Padding {
    /// Zero padding with `p` samples on each side.
    Zero(usize),
    /// Periodic boundary; the kernel is centred (offset `k / 2`).
    Circular,
}

impl Padding {
    /// Zero padding of half the kernel width ("same" output length for odd
    /// kernels at stride 1).
    pub fn same(kernel: usize) -> Self {
        Padding::Zero(kernel / 2)
    }
}

/// Geometry of one correlation: input length, kernel width, stride, padding.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub t_in: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvGeometry {
    pub fn new(t_in: usize, k: usize, stride: usize, padding: Padding) -> Result<Self> {
        if stride == 0 {
            return Err(Error::contract("conv1d stride must be >= 1"));
        }
        if k == 0 {
            return Err(Error::dim("conv1d", "kernel", ">= 1", 0));
        }
        if t_in == 0 {
            return Err(Error::dim("conv1d", "time", ">= 1", 0));
        }
        if let Padding::Zero(p) = padding {
            if k > t_in + 2 * p {
                return Err(Error::dim(
                    "conv1d",
                    "kernel",
                    format!("<= time + 2p = {}", t_in + 2 * p),
                    k,
                ));
            }
        }
        Ok(ConvGeometry {
            t_in,
            k,
            stride,
            padding,
        })
    }

    pub fn t_out(&self) -> usize {
        match self.padding {
            Padding::Zero(p) => (self.t_in + 2 * p - self.k) / self.stride + 1,
            Padding::Circular => self.t_in.div_ceil(self.stride),
        }
    }

    /// Input offset of tap `tau` relative to `stride * t`.
    fn offset(&self, tau: usize) -> isize {
        match self.padding {
            Padding::Zero(p) => tau as isize - p as isize,
            Padding::Circular => tau as isize - (self.k / 2) as isize,
        }
    }

    /// Calls `f(out_start, in_start, len)` for each contiguous run that tap
    /// `tau` touches, for stride 1.
    #[inline]
    fn segments(&self, tau: usize, mut f: impl FnMut(usize, usize, usize)) {
        debug_assert_eq!(self.stride, 1);
        let t_out = self.t_out() as isize;
        let t_in = self.t_in as isize;
        let off = self.offset(tau);
        match self.padding {
            Padding::Zero(_) => {
                let lo = (-off).max(0);
                let hi = t_out.min(t_in - off);
                if hi > lo {
                    f(lo as usize, (lo + off) as usize, (hi - lo) as usize);
                }
            }
            Padding::Circular => {
                let o = off.rem_euclid(t_in) as usize;
                let n = self.t_in;
                f(0, o, n - o);
                if o > 0 {
                    f(n - o, 0, o);
                }
            }
        }
    }

    #[inline]
    fn index(&self, t: usize, tau: usize) -> Option<usize> {
        let i = (self.stride * t) as isize + self.offset(tau);
        match self.padding {
            Padding::Zero(_) => (0..self.t_in as isize).contains(&i).then_some(i as usize),
            Padding::Circular => Some(i.rem_euclid(self.t_in as isize) as usize),
        }
    }
}

/// `out[t] += sum_tau w[tau] * x[stride*t + tau - offset]`.
pub fn correlate_row(out: &mut [f64], x: &[f64], w: &[f64], g: &ConvGeometry) {
    if g.stride == 1 {
        for (tau, &wt) in w.iter().enumerate() {
            if wt == 0.0 {
                continue;
            }
            g.segments(tau, |o, i, n| {
                for (a, b) in out[o..o + n].iter_mut().zip(&x[i..i + n]) {
                    *a += wt * b;
                }
            });
        }
    } else {
        for (t, a) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (tau, &wt) in w.iter().enumerate() {
                if let Some(i) = g.index(t, tau) {
                    acc += wt * x[i];
                }
            }
            *a += acc;
        }
    }
}

/// Adjoint of [`correlate_row`] with respect to `x`: `gx[idx(t,tau)] += w[tau] * gy[t]`.
pub fn correlate_row_adjoint_x(gx: &mut [f64], gy: &[f64], w: &[f64], g: &ConvGeometry) {
    if g.stride == 1 {
        for (tau, &wt) in w.iter().enumerate() {
            if wt == 0.0 {
                continue;
            }
            g.segments(tau, |o, i, n| {
                for (a, b) in gx[i..i + n].iter_mut().zip(&gy[o..o + n]) {
                    *a += wt * b;
                }
            });
        }
    } else {
        for (t, &gt) in gy.iter().enumerate() {
            for (tau, &wt) in w.iter().enumerate() {
                if let Some(i) = g.index(t, tau) {
                    gx[i] += wt * gt;
                }
            }
        }
    }
}

/// Adjoint with respect to `w`: `gw[tau] += sum_t gy[t] * x[idx(t,tau)]`.
pub fn correlate_row_adjoint_w(gw: &mut [f64], gy: &[f64], x: &[f64], g: &ConvGeometry) {
    for (tau, acc) in gw.iter_mut().enumerate() {
        if g.stride == 1 {
            let mut s = 0.0;
            g.segments(tau, |o, i, n| {
                s += gy[o..o + n]
                    .iter()
                    .zip(&x[i..i + n])
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
            });
            *acc += s;
        } else {
            let mut s = 0.0;
            for (t, &gt) in gy.iter().enumerate() {
                if let Some(i) = g.index(t, tau) {
                    s += gt * x[i];
                }
            }
            *acc += s;
        }
    }
}

/// Batched multi-channel correlation.
///
/// `x`: `[batch, cin, t_in]`, `w`: `[cout, cin, k]`, returns `[batch, cout, t_out]`.
pub fn conv1d_forward(
    x: &[f64],
    w: &[f64],
    batch: usize,
    cin: usize,
    cout: usize,
    g: &ConvGeometry,
) -> Vec<f64> {
    let t_in = g.t_in;
    let t_out = g.t_out();
    let k = g.k;
    let mut out = vec![0.0; batch * cout * t_out];
    out.par_chunks_mut(t_out)
        .enumerate()
        .for_each(|(row, out_row)| {
            let b = row / cout;
            let o = row % cout;
            for c in 0..cin {
                let xr = &x[(b * cin + c) * t_in..][..t_in];
                let wr = &w[(o * cin + c) * k..][..k];
                correlate_row(out_row, xr, wr, g);
            }
        });
    out
}

/// Gradients of [`conv1d_forward`]: returns `(grad_x, grad_w)`.
pub fn conv1d_backward(
    gy: &[f64],
    x: &[f64],
    w: &[f64],
    batch: usize,
    cin: usize,
    cout: usize,
    g: &ConvGeometry,
) -> (Vec<f64>, Vec<f64>) {
    let t_in = g.t_in;
    let t_out = g.t_out();
    let k = g.k;
    let mut gx = vec![0.0; batch * cin * t_in];
    gx.par_chunks_mut(t_in).enumerate().for_each(|(row, gxr)| {
        let b = row / cin;
        let c = row % cin;
        for o in 0..cout {
            let gyr = &gy[(b * cout + o) * t_out..][..t_out];
            let wr = &w[(o * cin + c) * k..][..k];
            correlate_row_adjoint_x(gxr, gyr, wr, g);
        }
    });
    let mut gw = vec![0.0; cout * cin * k];
    gw.par_chunks_mut(k).enumerate().for_each(|(row, gwr)| {
        let o = row / cin;
        let c = row % cin;
        for b in 0..batch {
            let gyr = &gy[(b * cout + o) * t_out..][..t_out];
            let xr = &x[(b * cin + c) * t_in..][..t_in];
            correlate_row_adjoint_w(gwr, gyr, xr, g);
        }
    });
    (gx, gw)
}

/// Single-channel correlation of a signal with one kernel.
pub fn correlate(x: &[f64], w: &[f64], padding: Padding) -> Result<Vec<f64>> {
    let g = ConvGeometry::new(x.len(), w.len(), 1, padding)?;
    let mut out = vec![0.0; g.t_out()];
    correlate_row(&mut out, x, w, &g);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[f64], w: &[f64], stride: usize, padding: Padding) -> Vec<f64> {
        let n = x.len() as isize;
        let k = w.len();
        let (p, circ) = match padding {
            Padding::Zero(p) => (p as isize, false),
            Padding::Circular => ((k / 2) as isize, true),
        };
        let t_out = if circ {
            x.len().div_ceil(stride)
        } else {
            (x.len() + 2 * p as usize - k) / stride + 1
        };
        (0..t_out)
            .map(|t| {
                (0..k)
                    .map(|tau| {
                        let i = (stride * t) as isize + tau as isize - p;
                        let v = if circ {
                            x[i.rem_euclid(n) as usize]
                        } else if (0..n).contains(&i) {
                            x[i as usize]
                        } else {
                            0.0
                        };
                        v * w[tau]
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn hand_example() {
        let y = correlate(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0], Padding::Zero(0)).unwrap();
        assert_eq!(y, vec![3.0, 5.0, 7.0]);
    }

    #[test]
    fn matches_naive_over_geometries() {
        let x: Vec<f64> = (0..13).map(|i| ((i * 7 % 5) as f64) - 1.7).collect();
        let w = [0.3, -1.2, 0.5, 2.0];
        for stride in 1..4 {
            for padding in [Padding::Zero(0), Padding::Zero(2), Padding::Zero(5), Padding::Circular] {
                let g = ConvGeometry::new(x.len(), w.len(), stride, padding).unwrap();
                let mut out = vec![0.0; g.t_out()];
                correlate_row(&mut out, &x, &w, &g);
                let want = naive(&x, &w, stride, padding);
                assert_eq!(out.len(), want.len());
                for (a, b) in out.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12, "{stride} {padding:?}");
                }
            }
        }
    }

    #[test]
    fn adjoints_satisfy_inner_product_identity() {
        // <y, W x> == <W^T y, x> for both adjoints.
        let x: Vec<f64> = (0..11).map(|i| (i as f64 * 0.37).sin()).collect();
        let w = [0.4, -0.1, 0.9];
        for stride in 1..3 {
            for padding in [Padding::Zero(1), Padding::Circular] {
                let g = ConvGeometry::new(x.len(), w.len(), stride, padding).unwrap();
                let gy: Vec<f64> = (0..g.t_out()).map(|i| (i as f64 * 1.3).cos()).collect();
                let mut y = vec![0.0; g.t_out()];
                correlate_row(&mut y, &x, &w, &g);
                let lhs: f64 = y.iter().zip(&gy).map(|(a, b)| a * b).sum();
                let mut gx = vec![0.0; x.len()];
                correlate_row_adjoint_x(&mut gx, &gy, &w, &g);
                let rhs: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs).abs() < 1e-12);
                let mut gw = vec![0.0; w.len()];
                correlate_row_adjoint_w(&mut gw, &gy, &x, &g);
                let rhs_w: f64 = gw.iter().zip(&w).map(|(a, b)| a * b).sum();
                assert!((lhs - rhs_w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_wider_than_padded_input_is_rejected() {
        assert!(ConvGeometry::new(3, 6, 1, Padding::Zero(1)).is_err());
        assert!(ConvGeometry::new(3, 2, 0, Padding::Circular).is_err());
    }
}
