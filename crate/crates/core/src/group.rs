//! The dilation-translation group ℝ ⋊ ℝ⁺, its scale grids, and its action on
//! sampled functions over the group.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Spatial dimension of the base space; front factors are written as `1/s^D`.
pub const D: i32 = 1;

/// Element `(u, s)`: translation `u` (samples) and scale `s > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    pub u: f64,
    pub s: f64,
}

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement { u: 0.0, s: 1.0 };

    pub fn new(u: f64, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite() && u.is_finite()) {
            return Err(Error::contract(format!("invalid group element ({u}, {s})")));
        }
        Ok(GroupElement { u, s })
    }

    pub fn translation(u: f64) -> Self {
        GroupElement { u, s: 1.0 }
    }

    pub fn dilation(s: f64) -> Result<Self> {
        GroupElement::new(0.0, s)
    }

    /// `(u1 + s1 u2, s1 s2)`.
    pub fn product(self, other: GroupElement) -> GroupElement {
        GroupElement {
            u: self.u + self.s * other.u,
            s: self.s * other.s,
        }
    }

    pub fn inverse(self) -> GroupElement {
        GroupElement {
            u: -self.u / self.s,
            s: 1.0 / self.s,
        }
    }

    /// `g ⊙ x = s x + u`.
    pub fn act(self, x: f64) -> f64 {
        self.s * x + self.u
    }
}

impl std::ops::Mul for GroupElement {
    type Output = GroupElement;

    fn mul(self, rhs: GroupElement) -> GroupElement {
        self.product(rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridKind {
    Exponential { base: f64, j_min: i32, j_max: i32 },
    Linear { deltas: Vec<f64> },
}

/// Discrete scale axis with per-scale integration weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleGrid {
    pub kind: GridKind,
    pub scales: Vec<f64>,
    pub haar_weights: Vec<f64>,
}

impl ScaleGrid {
    /// `{b^j : j_min <= j <= j_max}`. The Haar density `1/s` cancels against
    /// the bin width `~s` of an exponential grid, so every weight is 1.
    pub fn exponential(base: f64, j_min: i32, j_max: i32) -> Result<Self> {
        if base.partial_cmp(&1.0) != Some(std::cmp::Ordering::Greater) || !base.is_finite() {
            return Err(Error::contract(format!("grid base must be > 1, got {base}")));
        }
        if j_min > j_max {
            return Err(Error::contract(format!("j_min {j_min} > j_max {j_max}")));
        }
        let scales: Vec<f64> = (j_min..=j_max).map(|j| base.powi(j)).collect();
        let haar_weights = vec![1.0; scales.len()];
        Ok(ScaleGrid {
            kind: GridKind::Exponential { base, j_min, j_max },
            scales,
            haar_weights,
        })
    }

    /// Dyadic grid `{1, 2, ..., 2^(n-1)}`.
    pub fn dyadic(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::contract("scale grid needs at least one scale"));
        }
        ScaleGrid::exponential(2.0, 0, n as i32 - 1)
    }

    /// Arbitrary increasing scales with Riemann weights `Δ_i / s_i`.
    pub fn linear(scales: Vec<f64>, deltas: Vec<f64>) -> Result<Self> {
        if scales.is_empty() || scales.len() != deltas.len() {
            return Err(Error::dim("ScaleGrid::linear", "deltas", scales.len(), deltas.len()));
        }
        if scales[0] <= 0.0 || scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::contract("linear grid scales must be positive and increasing"));
        }
        let haar_weights = scales.iter().zip(&deltas).map(|(s, d)| d / s).collect();
        Ok(ScaleGrid {
            kind: GridKind::Linear { deltas },
            scales,
            haar_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn base(&self) -> Option<f64> {
        match self.kind {
            GridKind::Exponential { base, .. } => Some(base),
            GridKind::Linear { .. } => None,
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self.kind, GridKind::Exponential { .. })
    }

    /// The first `n` scales of this grid.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::dim("ScaleGrid::truncated", "scales", format!("1..={}", self.len()), n));
        }
        match &self.kind {
            GridKind::Exponential { base, j_min, .. } => {
                ScaleGrid::exponential(*base, *j_min, j_min + n as i32 - 1)
            }
            GridKind::Linear { deltas } => {
                ScaleGrid::linear(self.scales[..n].to_vec(), deltas[..n].to_vec())
            }
        }
    }

    /// Integer `k` with `s == b^k`, if `s` lies on the grid's lattice.
    pub fn lattice_index(&self, s: f64) -> Option<i32> {
        let b = self.base()?;
        let k = (s.ln() / b.ln()).round();
        let on = (b.powi(k as i32) - s).abs() <= 1e-12 * s;
        on.then_some(k as i32)
    }
}

/// A sampled function on the group: `[batch, channels, scales, time]`.
///
/// Time samples sit at `x = t * spacing`; `valid[j]` is false for scale slots
/// that were vacated by a scale action and hold zero fill.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFeatureMap {
    pub data: Tensor,
    pub grid: ScaleGrid,
    pub spacing: f64,
    pub valid: Vec<bool>,
}

impl GroupFeatureMap {
    pub fn new(data: Tensor, grid: ScaleGrid, spacing: f64) -> Result<Self> {
        if data.rank() != 4 {
            return Err(Error::dim("GroupFeatureMap", "rank", 4, data.rank()));
        }
        if data.dim(2) != grid.len() {
            return Err(Error::dim("GroupFeatureMap", "scale", grid.len(), data.dim(2)));
        }
        if !(spacing > 0.0) {
            return Err(Error::contract("sample spacing must be positive"));
        }
        let valid = vec![true; grid.len()];
        Ok(GroupFeatureMap {
            data,
            grid,
            spacing,
            valid,
        })
    }

    pub fn truncated(&self) -> bool {
        self.valid.iter().any(|v| !v)
    }

    /// Max relative difference `max|a - b| / max|b|` over slots valid in both.
    pub fn rel_error(&self, reference: &GroupFeatureMap) -> Result<f64> {
        if self.data.shape() != reference.data.shape() {
            return Err(Error::dim(
                "rel_error",
                "shape",
                format!("{:?}", reference.data.shape()),
                format!("{:?}", self.data.shape()),
            ));
        }
        let sh = self.data.shape();
        let (s, t) = (sh[2], sh[3]);
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for (i, (a, b)) in self.data.data().iter().zip(reference.data.data()).enumerate() {
            let j = (i / t) % s;
            if self.valid[j] && reference.valid[j] {
                num = num.max((a - b).abs());
                den = den.max(b.abs());
            }
        }
        Ok(if den == 0.0 { num } else { num / den })
    }
}

/// Discrete left-regular action on a group map:
/// `L_{u,s}[F](x, s̄) = F((x - u)/s, s̄/s)`.
///
/// A dilation by `s = b^k` is represented exactly by re-labelling: scale
/// index `j` moves to `j + k` and the sample spacing is multiplied by `s`.
/// The translation must then be a whole number of (new) samples and is applied
/// circularly.
pub fn left_regular_rep_groupmap(g: GroupElement, f: &GroupFeatureMap) -> Result<GroupFeatureMap> {
    let k = f.grid.lattice_index(g.s).ok_or_else(|| {
        Error::contract(format!(
            "scale {} is not an integer power of the grid base {:?}",
            g.s,
            f.grid.base()
        ))
    })?;
    let spacing = f.spacing * g.s;
    let shift_f = g.u / spacing;
    let shift = shift_f.round();
    if (shift - shift_f).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "translation {} is not a whole number of samples at spacing {spacing}",
            g.u
        )));
    }
    let sh = f.data.shape();
    let (bc, s, t) = (sh[0] * sh[1], sh[2], sh[3]);
    let n = (shift as i64).rem_euclid(t as i64) as usize;
    let mut out = Tensor::zeros(sh);
    let mut valid = vec![false; s];
    for (j, v) in valid.iter_mut().enumerate() {
        let src = j as i64 - k as i64;
        if !(0..s as i64).contains(&src) {
            continue;
        }
        let src = src as usize;
        *v = f.valid[src];
        for r in 0..bc {
            let from = &f.data.data()[(r * s + src) * t..(r * s + src + 1) * t];
            let to = &mut out.data_mut()[(r * s + j) * t..(r * s + j + 1) * t];
            to[n..].copy_from_slice(&from[..t - n]);
            to[..n].copy_from_slice(&from[t - n..]);
        }
    }
    Ok(GroupFeatureMap {
        data: out,
        grid: f.grid.clone(),
        spacing,
        valid,
    })
}
