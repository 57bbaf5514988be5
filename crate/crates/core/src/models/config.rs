//! Architecture descriptions, validation, shape inference and named presets.

use serde::{Deserialize, Serialize};

use crate::autodiff::Reduce;
use crate::error::{Error, Result};
use crate::layers::PadMode;
use crate::spline::half_width;
use crate::tensor::Precision;

fn one() -> usize {
    1
}

fn two() -> f64 {
    2.0
}

fn quadratic() -> usize {
    2
}

/// One entry of the layer table. Convolution-type layers with `stride > 1`
/// run at stride 1 and are followed by max pooling of the same size, which
/// keeps the convolution itself equivariant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Lifting {
        width: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    Group {
        width: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        /// Number of discrete scale offsets `K_s` of the filter.
        #[serde(default = "one")]
        scales: usize,
        /// Output scale count; defaults to `S_in - K_s + 1`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        out_scales: Option<usize>,
    },
    Conv {
        width: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    Pool {
        size: usize,
    },
    Batchnorm,
    Relu,
    /// conv-bn-relu, conv-bn, identity skip, relu. The first convolution has
    /// `scales` offsets, the second one.
    ResidualBlock {
        width: usize,
        kernel: usize,
        #[serde(default = "one")]
        scales: usize,
    },
    Dense {
        width: usize,
    },
    Dropout {
        rate: f64,
    },
    Project {
        #[serde(default)]
        reduce: Reduce,
    },
    GlobalAvgPool,
    GlobalMaxPool,
    Flatten,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Lifting { .. } => "lifting",
            LayerSpec::Group { .. } => "group",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Pool { .. } => "pool",
            LayerSpec::Batchnorm => "batchnorm",
            LayerSpec::Relu => "relu",
            LayerSpec::ResidualBlock { .. } => "residual-block",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Project { .. } => "project",
            LayerSpec::GlobalAvgPool => "global-avg-pool",
            LayerSpec::GlobalMaxPool => "global-max-pool",
            LayerSpec::Flatten => "flatten",
        }
    }

    fn is_learnable_conv(&self) -> bool {
        matches!(
            self,
            LayerSpec::Lifting { .. } | LayerSpec::Group { .. } | LayerSpec::Conv { .. } | LayerSpec::ResidualBlock { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Head {
    Softmax { classes: usize },
    SigmoidMultilabel { classes: usize },
}

impl Head {
    pub fn classes(self) -> usize {
        match self {
            Head::Softmax { classes } | Head::SigmoidMultilabel { classes } => classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub name: String,
    pub input_len: usize,
    #[serde(default = "one")]
    pub in_channels: usize,
    #[serde(default = "two")]
    pub grid_base: f64,
    /// Scale count of the lifting layer.
    #[serde(default = "one")]
    pub scales: usize,
    /// Weight of the zero-mean wavelet penalty.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub padding: PadMode,
    #[serde(default = "quadratic")]
    pub spline_order: usize,
    pub head: Head,
    pub layers: Vec<LayerSpec>,
}

/// Activation layout between layers (batch axis omitted).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Shape {
    Signal { c: usize, t: usize },
    Group { c: usize, s: usize, t: usize },
    Vector { n: usize },
}

impl Shape {
    fn channels(self) -> usize {
        match self {
            Shape::Signal { c, .. } | Shape::Group { c, .. } => c,
            Shape::Vector { n } => n,
        }
    }

    pub fn dims(self) -> Vec<usize> {
        match self {
            Shape::Signal { c, t } => vec![c, t],
            Shape::Group { c, s, t } => vec![c, s, t],
            Shape::Vector { n } => vec![n],
        }
    }
}

/// Resolved row of the layer table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerInfo {
    pub index: usize,
    pub kind: &'static str,
    pub output: Shape,
    /// Nominal kernel width (spline knots or taps).
    pub kernel: Option<usize>,
    /// Sampled kernel width at the largest scale the layer uses.
    pub max_width: Option<usize>,
    pub scale_extent: Option<usize>,
    pub params: usize,
}

impl LayerInfo {
    pub fn name(&self) -> String {
        format!("{}:{}", self.index, self.kind)
    }
}

fn field(i: usize, name: &str) -> String {
    format!("layers[{i}].{name}")
}

fn check_kernel(i: usize, kernel: usize) -> Result<()> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::config(field(i, "kernel"), format!("kernel width must be odd, got {kernel}")));
    }
    Ok(())
}

fn check_width(i: usize, width: usize) -> Result<()> {
    if width == 0 {
        return Err(Error::config(field(i, "width"), "must be >= 1"));
    }
    Ok(())
}

fn pooled(i: usize, t: usize, size: usize) -> Result<usize> {
    if size == 0 {
        return Err(Error::config(field(i, "stride"), "must be >= 1"));
    }
    if size > t {
        return Err(Error::config(
            field(i, "stride"),
            format!("pooling of {size} exceeds remaining length {t}"),
        ));
    }
    Ok(t / size)
}

impl ArchitectureConfig {
    pub fn is_wavelet_net(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, LayerSpec::Lifting { .. }))
    }

    fn scale_of(&self, j: usize) -> f64 {
        self.grid_base.powi(j as i32)
    }

    /// Validates the layer table and returns the resolved shapes and
    /// per-layer parameter counts.
    pub fn infer(&self) -> Result<Vec<LayerInfo>> {
        if self.input_len == 0 {
            return Err(Error::config("input_len", "must be positive"));
        }
        if self.in_channels == 0 {
            return Err(Error::config("in_channels", "must be >= 1"));
        }
        if !(self.grid_base > 1.0) {
            return Err(Error::config("grid_base", "must be > 1"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::config("lambda", "must be >= 0"));
        }
        if self.spline_order > 3 {
            return Err(Error::config("spline_order", "must be 0..=3"));
        }
        let wnet = self.is_wavelet_net();
        match self.layers.iter().find(|l| l.is_learnable_conv() || matches!(l, LayerSpec::Dense { .. })) {
            Some(LayerSpec::Lifting { .. }) => {}
            Some(LayerSpec::Conv { .. }) if !wnet => {}
            _ => {
                return Err(Error::config(
                    "layers",
                    "first learnable layer must be lifting (or conv for plain baselines)",
                ))
            }
        }
        if wnet {
            if self.scales == 0 {
                return Err(Error::config("scales", "lifting needs at least one scale"));
            }
            let projects: Vec<usize> = (0..self.layers.len())
                .filter(|&i| matches!(self.layers[i], LayerSpec::Project { .. }))
                .collect();
            if projects.len() != 1 {
                return Err(Error::config(
                    "layers",
                    format!("wavelet nets need exactly one project layer, found {}", projects.len()),
                ));
            }
            if let Some(d) = self.layers.iter().position(|l| matches!(l, LayerSpec::Dense { .. })) {
                if d < projects[0] {
                    return Err(Error::config(field(d, "kind"), "dense layer before project"));
                }
            }
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { width }) if *width == self.head.classes() => {}
            _ => {
                return Err(Error::config(
                    "head",
                    format!("last layer must be dense with {} outputs", self.head.classes()),
                ))
            }
        }

        let mut shape = Shape::Signal {
            c: self.in_channels,
            t: self.input_len,
        };
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut info = LayerInfo {
                index: i,
                kind: layer.kind(),
                output: shape,
                kernel: None,
                max_width: None,
                scale_extent: None,
                params: 0,
            };
            shape = match (*layer, shape) {
                (LayerSpec::Lifting { width, kernel, stride }, Shape::Signal { c, t }) => {
                    check_width(i, width)?;
                    check_kernel(i, kernel)?;
                    let w = 2 * half_width(self.scale_of(self.scales - 1), kernel, 1.0) + 1;
                    if self.padding == PadMode::Circular && w > t {
                        return Err(Error::config(
                            field(i, "kernel"),
                            format!("kernel spans {w} samples at the top scale but the input has {t}"),
                        ));
                    }
                    info.kernel = Some(kernel);
                    info.max_width = Some(w);
                    info.params = width * c * kernel;
                    Shape::Group {
                        c: width,
                        s: self.scales,
                        t: pooled(i, t, stride)?,
                    }
                }
                (
                    LayerSpec::Group {
                        width,
                        kernel,
                        stride,
                        scales,
                        out_scales,
                    },
                    Shape::Group { c, s, t },
                ) => {
                    check_width(i, width)?;
                    check_kernel(i, kernel)?;
                    if scales == 0 || scales > s {
                        return Err(Error::config(
                            field(i, "scales"),
                            format!("scale extent must be in 1..={s}, got {scales}"),
                        ));
                    }
                    let so = out_scales.unwrap_or(s + 1 - scales);
                    if so == 0 || so > s {
                        return Err(Error::config(field(i, "out_scales"), format!("must be in 1..={s}")));
                    }
                    info.kernel = Some(kernel);
                    info.scale_extent = Some(scales);
                    info.max_width = Some(2 * half_width(self.scale_of(so - 1), kernel, 1.0) + 1);
                    info.params = width * c * scales * kernel;
                    Shape::Group {
                        c: width,
                        s: so,
                        t: pooled(i, t, stride)?,
                    }
                }
                (LayerSpec::Conv { width, kernel, stride }, Shape::Signal { c, t }) if !wnet => {
                    check_width(i, width)?;
                    check_kernel(i, kernel)?;
                    info.kernel = Some(kernel);
                    info.max_width = Some(kernel);
                    info.params = width * c * kernel;
                    Shape::Signal {
                        c: width,
                        t: pooled(i, t, stride)?,
                    }
                }
                (LayerSpec::ResidualBlock { width, kernel, scales }, sh) => {
                    check_width(i, width)?;
                    check_kernel(i, kernel)?;
                    let c = sh.channels();
                    if c != width {
                        return Err(Error::config(
                            field(i, "width"),
                            format!("identity skip needs equal channels, input has {c}, block has {width}"),
                        ));
                    }
                    info.kernel = Some(kernel);
                    match sh {
                        Shape::Group { s, .. } => {
                            if scales != 1 {
                                return Err(Error::config(
                                    field(i, "scales"),
                                    format!("identity skip needs equal scale counts; {scales} offsets map {s} scales to {}", (s + 1).saturating_sub(scales)),
                                ));
                            }
                            info.scale_extent = Some(1);
                            info.max_width = Some(2 * half_width(self.scale_of(s - 1), kernel, 1.0) + 1);
                        }
                        Shape::Signal { .. } if !wnet => info.max_width = Some(kernel),
                        _ => {
                            return Err(Error::config(field(i, "kind"), "residual block needs a signal or group input"))
                        }
                    }
                    info.params = 2 * width * width * kernel + 4 * width;
                    sh
                }
                (LayerSpec::Pool { size }, Shape::Signal { c, t }) => Shape::Signal {
                    c,
                    t: pooled(i, t, size)?,
                },
                (LayerSpec::Pool { size }, Shape::Group { c, s, t }) => Shape::Group {
                    c,
                    s,
                    t: pooled(i, t, size)?,
                },
                (LayerSpec::Batchnorm, sh) => {
                    info.params = 2 * sh.channels();
                    sh
                }
                (LayerSpec::Relu, sh) => sh,
                (LayerSpec::Dropout { rate }, sh) => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::config(field(i, "rate"), "must be in [0, 1)"));
                    }
                    sh
                }
                (LayerSpec::Project { .. }, Shape::Group { c, t, .. }) => Shape::Signal { c, t },
                (LayerSpec::GlobalAvgPool | LayerSpec::GlobalMaxPool, Shape::Signal { c, .. }) => {
                    Shape::Vector { n: c }
                }
                (LayerSpec::Flatten, Shape::Signal { c, t }) => Shape::Vector { n: c * t },
                (LayerSpec::Flatten, Shape::Vector { n }) => Shape::Vector { n },
                (LayerSpec::Dense { width }, Shape::Vector { n }) => {
                    check_width(i, width)?;
                    info.params = n * width + width;
                    Shape::Vector { n: width }
                }
                (l, sh) => {
                    return Err(Error::config(
                        field(i, "kind"),
                        format!("`{}` cannot follow an activation of shape {:?}", l.kind(), sh),
                    ))
                }
            };
            info.output = shape;
            out.push(info);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.infer().map(|_| ())
    }

    pub fn num_parameters(&self) -> Result<usize> {
        Ok(self.infer()?.iter().map(|l| l.params).sum())
    }

    /// Scales every hidden width by `m` (rounded, at least 1). The output
    /// layer keeps its width.
    pub fn with_width_multiplier(&self, m: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::config("width_multiplier", format!("must be positive, got {m}")));
        }
        let scale = |w: usize| ((w as f64 * m).round() as usize).max(1);
        let mut cfg = self.clone();
        let last = cfg.layers.len().saturating_sub(1);
        for (i, l) in cfg.layers.iter_mut().enumerate() {
            match l {
                LayerSpec::Lifting { width, .. }
                | LayerSpec::Group { width, .. }
                | LayerSpec::Conv { width, .. }
                | LayerSpec::ResidualBlock { width, .. } => *width = scale(*width),
                LayerSpec::Dense { width } if i != last => *width = scale(*width),
                _ => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Narrow variant for quick experiments: widths × `m`, nominal kernels
    /// capped at 15, and input length `len`.
    pub fn desk_variant(&self, m: f64, len: usize) -> Result<Self> {
        let mut cfg = self.with_width_multiplier(m)?;
        for l in &mut cfg.layers {
            if let LayerSpec::Lifting { kernel, .. }
            | LayerSpec::Group { kernel, .. }
            | LayerSpec::Conv { kernel, .. }
            | LayerSpec::ResidualBlock { kernel, .. } = l
            {
                *kernel = (*kernel).min(15);
            }
        }
        cfg.input_len = len;
        cfg.name = format!("{}-desk", self.name);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ArchitectureConfig =
            toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// presets

pub const PRESETS: &[&str] = &[
    "w3", "w5", "w11", "w18", "w34", "w-1dcnn", "w3pow9", "m3", "m5", "m11", "m18", "m34", "m-net", "1dcnn",
    "3pow9", "desk-wnet", "desk-cnn",
];

fn bn_relu(v: &mut Vec<LayerSpec>) {
    v.push(LayerSpec::Batchnorm);
    v.push(LayerSpec::Relu);
}

fn group(width: usize, kernel: usize, scales: usize) -> LayerSpec {
    LayerSpec::Group {
        width,
        kernel,
        stride: 1,
        scales,
        out_scales: None,
    }
}

fn conv(width: usize, kernel: usize, stride: usize) -> LayerSpec {
    LayerSpec::Conv { width, kernel, stride }
}

/// Five-level layouts: lifting/first conv, then `(width, count)` per level,
/// each level followed by 4× pooling. In a wavelet net the first layer of
/// every level has 3 scale offsets and the rest one.
fn m_style(name: &str, first: usize, levels: &[(usize, usize)], residual: bool, wavelet: bool) -> ArchitectureConfig {
    let mut v = Vec::new();
    v.push(if wavelet {
        LayerSpec::Lifting {
            width: first,
            kernel: 79,
            stride: 4,
        }
    } else {
        conv(first, 79, 4)
    });
    bn_relu(&mut v);
    v.push(LayerSpec::Pool { size: 4 });
    let mut c = first;
    let layer = |width, ks| if wavelet { group(width, 3, ks) } else { conv(width, 3, 1) };
    for &(width, count) in levels {
        if residual {
            for b in 0..count {
                // a block that changes channels or scales cannot use an
                // identity skip; it becomes two plain layers
                if b == 0 && (wavelet || c != width) {
                    v.push(layer(width, 3));
                    bn_relu(&mut v);
                    v.push(layer(width, 1));
                    bn_relu(&mut v);
                } else {
                    v.push(LayerSpec::ResidualBlock {
                        width,
                        kernel: 3,
                        scales: 1,
                    });
                }
            }
        } else {
            for j in 0..count {
                v.push(layer(width, if j == 0 { 3 } else { 1 }));
                bn_relu(&mut v);
            }
        }
        v.push(LayerSpec::Pool { size: 4 });
        c = width;
    }
    if wavelet {
        v.push(LayerSpec::Project { reduce: Reduce::Max });
    }
    v.push(LayerSpec::GlobalAvgPool);
    v.push(LayerSpec::Dense { width: 10 });
    ArchitectureConfig {
        name: name.into(),
        input_len: 80200,
        in_channels: 1,
        grid_base: 2.0,
        scales: if wavelet { 9 } else { 1 },
        lambda: 0.0,
        precision: Precision::F64,
        padding: PadMode::Same,
        spline_order: 2,
        head: Head::Softmax { classes: 10 },
        layers: v,
    }
}

fn one_d_cnn(name: &str, wavelet: bool) -> ArchitectureConfig {
    let widths: [usize; 5] = if wavelet { [12, 24, 48, 96, 192] } else { [16, 32, 64, 128, 256] };
    let kernels = [63, 31, 15, 7, 3];
    let mut v = Vec::new();
    for i in 0..5 {
        v.push(if i == 0 && wavelet {
            LayerSpec::Lifting {
                width: widths[0],
                kernel: kernels[0],
                stride: 2,
            }
        } else if wavelet {
            LayerSpec::Group {
                width: widths[i],
                kernel: kernels[i],
                stride: 2,
                scales: 3,
                out_scales: None,
            }
        } else {
            conv(widths[i], kernels[i], 2)
        });
        bn_relu(&mut v);
        match i {
            0 | 1 => v.push(LayerSpec::Pool { size: 8 }),
            4 => v.push(LayerSpec::Pool { size: 5 }),
            _ => {}
        }
    }
    if wavelet {
        v.push(LayerSpec::Project { reduce: Reduce::Max });
    }
    v.push(LayerSpec::Flatten);
    for w in [96, 48] {
        v.push(LayerSpec::Dense { width: if wavelet { w } else { w * 4 / 3 } });
        v.push(LayerSpec::Relu);
        v.push(LayerSpec::Dropout { rate: 0.25 });
    }
    v.push(LayerSpec::Dense { width: 10 });
    ArchitectureConfig {
        name: name.into(),
        input_len: 64000,
        in_channels: 1,
        grid_base: 2.0,
        scales: if wavelet { 9 } else { 1 },
        lambda: 0.0,
        precision: Precision::F64,
        padding: PadMode::Same,
        spline_order: 2,
        head: Head::Softmax { classes: 10 },
        layers: v,
    }
}

fn sample_level(name: &str, wavelet: bool) -> ArchitectureConfig {
    let (widths, ks): ([usize; 10], [usize; 10]) = if wavelet {
        (
            [90, 90, 180, 180, 180, 180, 180, 180, 360, 360],
            [3, 1, 1, 3, 1, 1, 3, 1, 1, 3],
        )
    } else {
        ([128, 128, 256, 256, 256, 256, 256, 256, 512, 512], [1; 10])
    };
    let first = widths[0];
    let mut v = vec![if wavelet {
        LayerSpec::Lifting {
            width: first,
            kernel: 3,
            stride: 3,
        }
    } else {
        conv(first, 3, 3)
    }];
    bn_relu(&mut v);
    for i in 0..10 {
        v.push(if wavelet { group(widths[i], 3, ks[i]) } else { conv(widths[i], 3, 1) });
        bn_relu(&mut v);
        if i < 9 {
            v.push(LayerSpec::Pool { size: 3 });
        }
        // dropout after the 6th and 11th learnable layer
        if i == 4 || i == 9 {
            v.push(LayerSpec::Dropout { rate: 0.5 });
        }
    }
    if wavelet {
        v.push(LayerSpec::Project { reduce: Reduce::Max });
    }
    v.push(LayerSpec::Flatten);
    v.push(LayerSpec::Dense { width: 50 });
    ArchitectureConfig {
        name: name.into(),
        input_len: 59049,
        in_channels: 1,
        grid_base: 2.0,
        scales: if wavelet { 9 } else { 1 },
        lambda: 0.0,
        precision: Precision::F64,
        padding: PadMode::Same,
        spline_order: 2,
        head: Head::SigmoidMultilabel { classes: 50 },
        layers: v,
    }
}

fn desk(wavelet: bool) -> ArchitectureConfig {
    let mut v = Vec::new();
    if wavelet {
        v.push(LayerSpec::Lifting {
            width: 8,
            kernel: 15,
            stride: 4,
        });
        bn_relu(&mut v);
        v.push(LayerSpec::Group {
            width: 16,
            kernel: 3,
            stride: 2,
            scales: 2,
            out_scales: Some(5),
        });
        bn_relu(&mut v);
        v.push(group(16, 3, 1));
        bn_relu(&mut v);
        v.push(LayerSpec::Project { reduce: Reduce::Max });
    } else {
        v.push(conv(8, 15, 4));
        bn_relu(&mut v);
        v.push(conv(17, 5, 2));
        bn_relu(&mut v);
        v.push(conv(17, 3, 1));
        bn_relu(&mut v);
    }
    v.push(LayerSpec::GlobalMaxPool);
    v.push(LayerSpec::Dense { width: 4 });
    ArchitectureConfig {
        name: if wavelet { "desk-wnet" } else { "desk-cnn" }.into(),
        input_len: 512,
        in_channels: 1,
        grid_base: 2.0,
        scales: if wavelet { 5 } else { 1 },
        lambda: if wavelet { 10.0 } else { 0.0 },
        precision: Precision::F64,
        padding: PadMode::Same,
        spline_order: 2,
        head: Head::Softmax { classes: 4 },
        layers: v,
    }
}

/// Named layouts. A `-desk` suffix derives a narrow variant (widths × 0.1,
/// kernels ≤ 15, 8192 samples) of any full-size preset.
pub fn preset(name: &str) -> Result<ArchitectureConfig> {
    if let Some(base) = name.strip_suffix("-desk") {
        if base.starts_with("desk") {
            return Err(Error::config("preset", format!("unknown preset `{name}`")));
        }
        let full = preset(base)?;
        let len = if full.input_len == 80200 { 8192 } else { full.input_len };
        return full.desk_variant(0.1, len);
    }
    let cfg = match name {
        "w3" => m_style("w3", 150, &[(150, 1)], false, true),
        "w5" => m_style("w5", 74, &[(74, 1), (148, 1), (296, 1)], false, true),
        "w11" => m_style("w11", 51, &[(51, 2), (102, 2), (204, 3), (408, 2)], false, true),
        "w18" => m_style("w18", 57, &[(57, 4), (114, 4), (228, 4), (456, 4)], false, true),
        "w34" => m_style("w34", 45, &[(45, 3), (90, 4), (180, 6), (360, 3)], true, true),
        "m3" => m_style("m3", 256, &[(256, 1)], false, false),
        "m5" => m_style("m5", 128, &[(128, 1), (256, 1), (512, 1)], false, false),
        "m11" | "m-net" => m_style("m11", 64, &[(64, 2), (128, 2), (256, 3), (512, 2)], false, false),
        "m18" => m_style("m18", 64, &[(64, 4), (128, 4), (256, 4), (512, 4)], false, false),
        "m34" => m_style("m34", 48, &[(48, 3), (96, 4), (192, 6), (384, 3)], true, false),
        "w-1dcnn" => one_d_cnn("w-1dcnn", true),
        "1dcnn" => one_d_cnn("1dcnn", false),
        "w3pow9" => sample_level("w3pow9", true),
        "3pow9" => sample_level("3pow9", false),
        "desk-wnet" => desk(true),
        "desk-cnn" => desk(false),
        _ => return Err(Error::config("preset", format!("unknown preset `{name}`; known: {}", PRESETS.join(", ")))),
    };
    cfg.validate()?;
    Ok(cfg)
}
