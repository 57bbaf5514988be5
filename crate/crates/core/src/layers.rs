//! Lifting, group and projection layers on the dilation-translation group.
//!
//! Filters are sampled on taps `z = nΔ`, `|z| ≤ ⌊sN_ψ/2⌋`, where `Δ` is the
//! sample spacing of the input, and weighted by `Δ/s^D`. With `Δ = 1` this is
//! the plain `1/s` front factor. Carrying `Δ` through lets a dilated map (same
//! samples, coarser spacing) be processed exactly, which is what makes the
//! discrete scale equivariance hold to machine precision.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Reduce, Tape, Var};
use crate::conv::Padding;
use crate::datasets::signal::{sample_signal, SignalModel};
use crate::error::{Error, Result};
use crate::group::{left_regular_rep_groupmap, GroupElement, GroupFeatureMap, GridKind, ScaleGrid, D};
use crate::spline::SplineFilter;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    /// Periodic boundary (exact translation equivariance).
    Circular,
    /// Zero padding of half the (scale-dependent) kernel width.
    #[default]
    Same,
}

impl PadMode {
    pub fn padding(self, width: usize) -> Padding {
        match self {
            PadMode::Circular => Padding::Circular,
            PadMode::Same => Padding::Zero(width / 2),
        }
    }
}

fn check_width(width: usize, t: usize, s: f64, pad: PadMode) -> Result<()> {
    let limit = match pad {
        PadMode::Circular => t,
        PadMode::Same => t + 2 * (width / 2),
    };
    if width > limit {
        return Err(Error::contract(format!(
            "kernel at scale {s} spans {width} samples but the input has only {t}; \
             restrict the grid to the set of sensible scales for this input length"
        )));
    }
    Ok(())
}

/// Maps `[batch, cin, time]` to `[batch, cout, scales, time']` by correlating
/// with every grid dilation of one spline filter bank.
#[derive(Debug, Clone)]
pub struct LiftingLayer {
    pub filter: SplineFilter,
    pub grid: ScaleGrid,
    pub stride: usize,
    pub padding: PadMode,
}

impl LiftingLayer {
    pub fn new(filter: SplineFilter, grid: ScaleGrid, stride: usize, padding: PadMode) -> Result<Self> {
        if filter.coeffs.rank() != 3 {
            return Err(Error::dim(
                "LiftingLayer",
                "coeffs",
                "[cout, cin, K]",
                format!("{:?}", filter.coeffs.shape()),
            ));
        }
        if stride == 0 {
            return Err(Error::config("stride", "must be >= 1"));
        }
        Ok(LiftingLayer {
            filter,
            grid,
            stride,
            padding,
        })
    }

    /// Front factor applied at scale index `i` (unit spacing): `1/s^D`.
    pub fn front_factor(&self, i: usize) -> f64 {
        self.grid.scales[i].powi(-D)
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, coeffs: Var, spacing: f64) -> Result<Var> {
        let t = tape.value(x).shape().get(2).copied().unwrap_or(0);
        let mut outs = Vec::with_capacity(self.grid.len());
        for &s in &self.grid.scales {
            let basis = self.filter.basis.matrix(s, spacing, spacing / s.powi(D))?;
            let width = basis.dim(1);
            check_width(width, t, s, self.padding)?;
            let k = tape.basis_expand(coeffs, basis)?;
            outs.push(tape.conv1d(x, k, self.stride, self.padding.padding(width))?);
        }
        tape.stack_scales(&outs)
    }

    pub fn apply(&self, x: &Tensor, spacing: f64) -> Result<Tensor> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let c = tape.constant(self.filter.coeffs.clone());
        let y = self.forward(&mut tape, xv, c, spacing)?;
        Ok(tape.value(y).clone())
    }
}

/// Lifting with explicitly supplied raw kernels `ψ(z/s_i)` (`[cout, cin, W_i]`
/// per scale), each weighted by `1/s_i`.
pub fn lift_sampled(x: &Tensor, kernels: &[Tensor], grid: &ScaleGrid, padding: PadMode) -> Result<Tensor> {
    if kernels.len() != grid.len() {
        return Err(Error::dim("lift_sampled", "scales", grid.len(), kernels.len()));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let t = x.shape().get(2).copied().unwrap_or(0);
    let mut outs = Vec::new();
    for (k, &s) in kernels.iter().zip(&grid.scales) {
        let width = k.shape().last().copied().unwrap_or(0);
        check_width(width, t, s, padding)?;
        let kv = tape.constant(k.scaled(s.powi(-D)));
        outs.push(tape.conv1d(xv, kv, 1, padding.padding(width))?);
    }
    let y = tape.stack_scales(&outs)?;
    Ok(tape.value(y).clone())
}

/// Correlation of a group map with a group filter
/// `[cout, cin, K_s, K]`: output scale `i` sums input scales `i..i+K_s`
/// (zero beyond the top of the grid), the x-axis dilated by `s_i`.
#[derive(Debug, Clone)]
pub struct GroupConvLayer {
    pub filter: SplineFilter,
    pub grid: ScaleGrid,
    pub out_scales: usize,
    pub stride: usize,
    pub padding: PadMode,
}

impl GroupConvLayer {
    pub fn new(
        filter: SplineFilter,
        grid: ScaleGrid,
        out_scales: usize,
        stride: usize,
        padding: PadMode,
    ) -> Result<Self> {
        if filter.coeffs.rank() != 4 {
            return Err(Error::dim(
                "GroupConvLayer",
                "coeffs",
                "[cout, cin, K_s, K]",
                format!("{:?}", filter.coeffs.shape()),
            ));
        }
        if filter.scale_extent() > grid.len() {
            return Err(Error::dim(
                "GroupConvLayer",
                "scale extent",
                format!("<= {} input scales", grid.len()),
                filter.scale_extent(),
            ));
        }
        if out_scales == 0 || out_scales > grid.len() {
            return Err(Error::config(
                "scales",
                format!("output scales must be in 1..={}, got {out_scales}", grid.len()),
            ));
        }
        if stride == 0 {
            return Err(Error::config("stride", "must be >= 1"));
        }
        Ok(GroupConvLayer {
            filter,
            grid,
            out_scales,
            stride,
            padding,
        })
    }

    pub fn out_grid(&self) -> Result<ScaleGrid> {
        self.grid.truncated(self.out_scales)
    }

    /// Per-offset weights `(window, front factor)` at output scale `i`
    /// (unit spacing). Their product is `1/s_i^D` on an exponential grid and
    /// `Δ_{i+j}/s_i^{D+1}` on a linear grid.
    fn weights(&self, i: usize) -> (Vec<f64>, f64) {
        let s = self.grid.scales[i];
        let ks = self.filter.scale_extent();
        let window = match &self.grid.kind {
            GridKind::Exponential { .. } => vec![1.0; ks],
            GridKind::Linear { deltas } => (0..ks)
                .map(|j| deltas.get(i + j).map_or(0.0, |d| d / s))
                .collect(),
        };
        (window, s.powi(-D))
    }

    /// Effective weight applied to each scale offset at output scale `i`.
    pub fn applied_weights(&self, i: usize) -> Vec<f64> {
        let (w, f) = self.weights(i);
        w.into_iter().map(|v| v * f).collect()
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, coeffs: Var, spacing: f64) -> Result<Var> {
        let sh = tape.value(x).shape().to_vec();
        if sh.len() != 4 {
            return Err(Error::dim("group_conv", "rank", 4, sh.len()));
        }
        if sh[2] != self.grid.len() {
            return Err(Error::dim("group_conv", "scale", self.grid.len(), sh[2]));
        }
        let cs = self.filter.coeffs.shape().to_vec();
        if sh[1] != cs[1] {
            return Err(Error::dim("group_conv", "cin", cs[1], sh[1]));
        }
        let flat = tape.reshape(coeffs, &[cs[0], cs[1] * cs[2], cs[3]])?;
        let mut outs = Vec::with_capacity(self.out_scales);
        for i in 0..self.out_scales {
            let s = self.grid.scales[i];
            let (window, front) = self.weights(i);
            let basis = self.filter.basis.matrix(s, spacing, spacing * front)?;
            let width = basis.dim(1);
            check_width(width, sh[3], s, self.padding)?;
            let xs = tape.scale_window(x, i, &window)?;
            let k = tape.basis_expand(flat, basis)?;
            outs.push(tape.conv1d(xs, k, self.stride, self.padding.padding(width))?);
        }
        tape.stack_scales(&outs)
    }

    pub fn apply(&self, x: &GroupFeatureMap) -> Result<GroupFeatureMap> {
        if x.grid.base() != self.grid.base() {
            return Err(Error::contract(format!(
                "grid base mismatch: layer {:?}, input {:?}",
                self.grid.base(),
                x.grid.base()
            )));
        }
        let mut tape = Tape::new();
        let xv = tape.constant(x.data.clone());
        let c = tape.constant(self.filter.coeffs.clone());
        let y = self.forward(&mut tape, xv, c, x.spacing)?;
        GroupFeatureMap::new(tape.value(y).clone(), self.out_grid()?, x.spacing * self.stride as f64)
    }
}

/// Pools over the scale axis of `[batch, ch, scales, time]`.
pub fn project_scales(tape: &mut Tape, x: Var, kind: Reduce) -> Result<Var> {
    tape.reduce_axis(x, 2, kind)
}

/// One stage of a pooling-free stack examined by [`equivariance_probe`].
#[derive(Debug, Clone)]
pub enum ProbeLayer {
    Lifting(LiftingLayer),
    Group(GroupConvLayer),
    Relu,
    Project(Reduce),
}

impl ProbeLayer {
    pub fn name(&self) -> &'static str {
        match self {
            ProbeLayer::Lifting(_) => "lifting",
            ProbeLayer::Group(_) => "group",
            ProbeLayer::Relu => "relu",
            ProbeLayer::Project(_) => "project",
        }
    }

    fn stride(&self) -> usize {
        match self {
            ProbeLayer::Lifting(l) => l.stride,
            ProbeLayer::Group(l) => l.stride,
            _ => 1,
        }
    }
}

/// Input to a probe.
#[derive(Debug, Clone)]
pub enum ProbeInput {
    /// Discrete samples `[batch, ch, time]` at unit spacing; the action is
    /// applied exactly by relabelling spacing and shifting circularly.
    Samples(Tensor),
    /// A closed-form model sampled at unit spacing before and after the
    /// action; outputs are compared on the interior of the coarser grid.
    Model { model: SignalModel, len: usize },
    /// A group map fed straight into the stack (which then must not start
    /// with a lifting layer).
    GroupMap(GroupFeatureMap),
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    /// Relative error after each stage.
    pub per_layer: Vec<(String, f64)>,
    pub max_rel_err: f64,
}

/// State of one side of the probe: either a signal or a group map.
#[derive(Clone)]
enum Repr {
    Signal { data: Tensor, spacing: f64 },
    Map(GroupFeatureMap),
}

fn run_stage(layer: &ProbeLayer, x: &Repr, pool_mask: Option<&[bool]>) -> Result<Repr> {
    match (layer, x) {
        (ProbeLayer::Lifting(l), Repr::Signal { data, spacing }) => {
            let y = l.apply(data, *spacing)?;
            Ok(Repr::Map(GroupFeatureMap::new(y, l.grid.clone(), *spacing)?))
        }
        (ProbeLayer::Group(l), Repr::Map(m)) => Ok(Repr::Map(l.apply(m)?)),
        (ProbeLayer::Relu, Repr::Map(m)) => {
            let mut out = m.clone();
            out.data = m.data.map(|v| v.max(0.0));
            Ok(Repr::Map(out))
        }
        (ProbeLayer::Relu, Repr::Signal { data, spacing }) => Ok(Repr::Signal {
            data: data.map(|v| v.max(0.0)),
            spacing: *spacing,
        }),
        (ProbeLayer::Project(kind), Repr::Map(m)) => {
            let sh = m.data.shape();
            let (bc, s, t) = (sh[0] * sh[1], sh[2], sh[3]);
            let mask: Vec<bool> = pool_mask.map_or_else(|| vec![true; s], |v| v.to_vec());
            let count = mask.iter().filter(|&&v| v).count().max(1) as f64;
            let mut out = vec![0.0; bc * t];
            for r in 0..bc {
                for ti in 0..t {
                    let vals = (0..s)
                        .filter(|&j| mask[j])
                        .map(|j| m.data.data()[(r * s + j) * t + ti]);
                    out[r * t + ti] = match kind {
                        Reduce::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                        Reduce::Mean => vals.sum::<f64>() / count,
                    };
                }
            }
            Ok(Repr::Signal {
                data: Tensor::new(&[sh[0], sh[1], t], out)?,
                spacing: m.spacing,
            })
        }
        (l, _) => Err(Error::contract(format!(
            "probe stage `{}` does not accept this input",
            l.name()
        ))),
    }
}

/// Applies `L_g` to a sampled signal by relabelling: spacing × s, circular
/// shift by `u / spacing'` samples.
fn rep_signal(g: GroupElement, data: &Tensor, spacing: f64) -> Result<(Tensor, f64)> {
    let sp = spacing * g.s;
    let shift_f = g.u / sp;
    if (shift_f - shift_f.round()).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "translation {} is not a whole number of samples at spacing {sp}",
            g.u
        )));
    }
    let t = *data.shape().last().unwrap_or(&1);
    let n = (shift_f.round() as i64).rem_euclid(t as i64) as usize;
    let rows = data.len() / t;
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        for i in 0..t {
            out[r * t + (i + n) % t] = data.data()[r * t + i];
        }
    }
    Ok((Tensor::new(data.shape(), out)?, sp))
}

/// Relative L2 error between `lhs` sampled at `lhs_spacing` and the
/// reference `rhs` at `rhs_spacing` (an integer multiple), over trusted
/// scale slots and (optionally) the interior of the time axis.
fn compare(
    lhs: &Tensor,
    lhs_spacing: f64,
    rhs: &Tensor,
    rhs_spacing: f64,
    slots: Option<&[bool]>,
    interior: bool,
) -> Result<f64> {
    let ratio = rhs_spacing / lhs_spacing;
    let r = ratio.round();
    if (ratio - r).abs() > 1e-9 || r < 1.0 {
        return Err(Error::contract("probe grids are not nested"));
    }
    let r = r as usize;
    let sh = lhs.shape();
    let rank = sh.len();
    let t_l = sh[rank - 1];
    let t_r = *rhs.shape().last().unwrap_or(&0);
    let s = if rank == 4 { sh[2] } else { 1 };
    let rows = rhs.len() / t_r;
    let edge = if interior { t_r.div_ceil(10) } else { 0 };
    let (mut num, mut den, mut count) = (0.0, 0.0, 0usize);
    for row in 0..rows {
        let slot = row % s;
        if slots.is_some_and(|m| !m[slot]) {
            continue;
        }
        for t in edge..t_r - edge {
            let tl = t * r;
            if tl >= t_l {
                continue;
            }
            let a = lhs.data()[row * t_l + tl];
            let b = rhs.data()[row * t_r + t];
            num += (a - b) * (a - b);
            den += b * b;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::contract("no samples survive the probe's validity masks"));
    }
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

/// Measures `‖Φ(L_g f) − L_g Φ(f)‖ / ‖L_g Φ(f)‖` after every stage of a
/// pooling-free stack. Scale slots that were vacated by the action, or whose
/// value depends on such slots through a group filter's scale window, are
/// excluded.
pub fn equivariance_probe(layers: &[ProbeLayer], g: GroupElement, input: &ProbeInput) -> Result<ProbeReport> {
    if let Some(l) = layers.iter().find(|l| l.stride() != 1) {
        return Err(Error::contract(format!(
            "`{}` layer has stride {}; equivariance is only exact for stride-1, pooling-free stacks",
            l.name(),
            l.stride()
        )));
    }
    let (mut lhs, mut rhs, analytic) = match input {
        ProbeInput::Samples(x) => {
            let (xs, sp) = rep_signal(g, x, 1.0)?;
            (
                Repr::Signal { data: xs, spacing: sp },
                Repr::Signal { data: x.clone(), spacing: 1.0 },
                false,
            )
        }
        ProbeInput::Model { model, len } => {
            let a = sample_signal(&model.transformed(g), *len, 1.0)?;
            let b = sample_signal(model, *len, 1.0)?;
            (
                Repr::Signal { data: Tensor::new(&[1, 1, *len], a)?, spacing: 1.0 },
                Repr::Signal { data: Tensor::new(&[1, 1, *len], b)?, spacing: 1.0 },
                true,
            )
        }
        ProbeInput::GroupMap(m) => {
            let r = left_regular_rep_groupmap(g, m)?;
            let mut lhs = r.clone();
            lhs.valid = vec![true; r.valid.len()];
            (Repr::Map(lhs), Repr::Map(m.clone()), false)
        }
    };
    let grid = layers.iter().find_map(|l| match l {
        ProbeLayer::Lifting(l) => Some(&l.grid),
        ProbeLayer::Group(l) => Some(&l.grid),
        _ => None,
    });
    let k = match grid {
        Some(grid) => grid
            .lattice_index(g.s)
            .ok_or_else(|| Error::contract(format!("scale {} is off the grid lattice", g.s)))?
            as i64,
        None => 0,
    };
    // trust[j]: LHS slot j is computed from inputs that agree with the
    // transformed reference.
    let mut trust: Option<Vec<bool>> = match &lhs {
        Repr::Map(m) => Some(vec![true; m.grid.len()]),
        Repr::Signal { .. } => None,
    };
    let mut per_layer = Vec::new();
    for layer in layers {
        // reference validity of the current (input) maps under the action
        let rhs_valid_in = match &rhs {
            Repr::Map(m) => Some(left_regular_rep_groupmap(
                GroupElement::dilation(g.s)?,
                &GroupFeatureMap { spacing: 1.0, ..m.clone() },
            )?
            .valid),
            Repr::Signal { .. } => None,
        };
        let pool_masks = match (layer, &trust, &rhs_valid_in) {
            (ProbeLayer::Project(_), Some(tr), Some(rv)) => {
                let lhs_mask: Vec<bool> = tr.iter().zip(rv).map(|(a, b)| *a && *b).collect();
                let s = lhs_mask.len() as i64;
                let rhs_mask: Vec<bool> = (0..s)
                    .map(|j| j + k >= 0 && j + k < s && lhs_mask[(j + k) as usize])
                    .collect();
                Some((lhs_mask, rhs_mask))
            }
            _ => None,
        };
        let new_lhs = run_stage(layer, &lhs, pool_masks.as_ref().map(|m| m.0.as_slice()))?;
        let new_rhs = run_stage(layer, &rhs, pool_masks.as_ref().map(|m| m.1.as_slice()))?;
        trust = match (layer, &new_lhs) {
            (ProbeLayer::Lifting(l), _) => Some(vec![true; l.grid.len()]),
            (ProbeLayer::Group(l), _) => {
                let tr = trust.clone().unwrap_or_default();
                let rv = rhs_valid_in.clone().unwrap_or_default();
                let s_in = l.grid.len() as i64;
                let ks = l.filter.scale_extent() as i64;
                Some(
                    (0..l.out_scales as i64)
                        .map(|i| {
                            (0..ks).all(|j| {
                                let m = i + j;
                                if m < s_in {
                                    tr[m as usize] && rv[m as usize]
                                } else {
                                    m - k >= s_in
                                }
                            })
                        })
                        .collect(),
                )
            }
            (_, Repr::Signal { .. }) => None,
            _ => trust,
        };
        let err = match (&new_lhs, &new_rhs) {
            (Repr::Map(a), Repr::Map(b)) => {
                let rb = left_regular_rep_groupmap(g, b)?;
                let mask: Vec<bool> = rb
                    .valid
                    .iter()
                    .zip(trust.as_deref().unwrap_or(&[]))
                    .map(|(x, y)| *x && *y)
                    .collect();
                compare(&a.data, a.spacing, &rb.data, rb.spacing, Some(&mask), analytic)?
            }
            (Repr::Signal { data: a, spacing: sa }, Repr::Signal { data: b, spacing: sb }) => {
                let (rb, sp) = rep_signal(GroupElement::translation(g.u), b, *sb * g.s)?;
                compare(a, *sa, &rb, sp, None, analytic)?
            }
            _ => return Err(Error::contract("probe sides diverged in kind")),
        };
        per_layer.push((layer.name().to_string(), err));
        lhs = new_lhs;
        rhs = new_rhs;
    }
    let max_rel_err = per_layer.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(ProbeReport {
        per_layer,
        max_rel_err,
    })
}
