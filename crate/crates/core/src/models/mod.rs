//! Executable models built from an [`ArchitectureConfig`].

mod config;

pub use config::{preset, ArchitectureConfig, Head, LayerInfo, LayerSpec, Shape, PRESETS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{BatchNormStats, Reduce, Tape, Var};
use crate::error::{Error, Result};
use crate::group::ScaleGrid;
use crate::layers::{GroupConvLayer, LiftingLayer, PadMode, ProbeLayer};
use crate::spline::{filter_mean, wavelet_penalty, SplineBasis, SplineFilter};
use crate::tensor::Tensor;

/// A named learnable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

#[derive(Debug, Clone)]
enum Node {
    Lifting { layer: LiftingLayer, coeffs: usize, pool: usize },
    Group { layer: GroupConvLayer, coeffs: usize, pool: usize },
    Conv { weight: usize, kernel: usize, pool: usize },
    Pool(usize),
    BatchNorm { gamma: usize, beta: usize, stats: usize },
    Relu,
    Residual { sub: Box<[Node; 4]> },
    Dense { weight: usize, bias: usize },
    Dropout(f64),
    Project(Reduce),
    GlobalPool(Reduce),
    Flatten,
}

/// Training-mode forward passes update batch statistics and draw dropout
/// masks; evaluation uses running statistics and no dropout.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

impl Mode<'_> {
    fn train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Output of a forward pass plus the activation after every layer, used to
/// locate the first non-finite value.
pub struct Forward {
    pub logits: Var,
    pub trace: Vec<(String, Var)>,
}

pub enum Targets {
    Classes(Vec<usize>),
    /// `[batch, classes]` in {0, 1}.
    MultiLabel(Tensor),
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCount {
    pub total: usize,
    pub per_layer: Vec<(String, usize)>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ArchitectureConfig,
    pub params: Vec<Param>,
    pub bn_stats: Vec<BatchNormStats>,
    info: Vec<LayerInfo>,
    nodes: Vec<Node>,
    /// `(param index, basis)` of every spline filter, for the penalty.
    splines: Vec<(usize, SplineBasis)>,
}

fn uniform(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-bound..bound)).collect())
}

struct Builder<'a> {
    cfg: &'a ArchitectureConfig,
    rng: ChaCha8Rng,
    params: Vec<Param>,
    bn: Vec<BatchNormStats>,
    splines: Vec<(usize, SplineBasis)>,
}

impl Builder<'_> {
    fn push(&mut self, name: String, value: Tensor) -> usize {
        self.params.push(Param { name, value });
        self.params.len() - 1
    }

    fn batch_norm(&mut self, name: &str, c: usize) -> Node {
        let gamma = self.push(format!("{name}.gamma"), Tensor::full(&[c], 1.0));
        let beta = self.push(format!("{name}.beta"), Tensor::zeros(&[c]));
        self.bn.push(BatchNormStats::new(c));
        Node::BatchNorm {
            gamma,
            beta,
            stats: self.bn.len() - 1,
        }
    }

    fn grid(&self, n: usize) -> Result<ScaleGrid> {
        ScaleGrid::exponential(self.cfg.grid_base, 0, n as i32 - 1)
    }

    fn spline(&mut self, name: &str, shape: &[usize], kernel: usize) -> Result<(SplineFilter, usize)> {
        let basis = SplineBasis::new(kernel, self.cfg.spline_order)?;
        let filter = SplineFilter::init(shape, basis.clone(), &mut self.rng)?;
        let idx = self.push(format!("{name}.coeffs"), filter.coeffs.clone());
        self.splines.push((idx, basis));
        Ok((filter, idx))
    }

    fn group(
        &mut self,
        name: &str,
        cin: usize,
        s_in: usize,
        width: usize,
        kernel: usize,
        ks: usize,
        s_out: usize,
        pool: usize,
    ) -> Result<Node> {
        let (filter, coeffs) = self.spline(name, &[width, cin, ks, kernel], kernel)?;
        let layer = GroupConvLayer::new(filter, self.grid(s_in)?, s_out, 1, self.cfg.padding)?;
        Ok(Node::Group { layer, coeffs, pool })
    }

    fn conv(&mut self, name: &str, cin: usize, width: usize, kernel: usize, pool: usize) -> Result<Node> {
        let bound = 1.0 / ((cin * kernel) as f64).sqrt();
        let w = uniform(&[width, cin, kernel], bound, &mut self.rng)?;
        let weight = self.push(format!("{name}.weight"), w);
        Ok(Node::Conv { weight, kernel, pool })
    }
}

impl Model {
    /// Builds the model with parameters drawn from `seed`; identical inputs
    /// give bitwise-identical parameters.
    pub fn build(config: &ArchitectureConfig, seed: u64) -> Result<Model> {
        let info = config.infer()?;
        let mut b = Builder {
            cfg: config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: Vec::new(),
            bn: Vec::new(),
            splines: Vec::new(),
        };
        let mut nodes = Vec::with_capacity(info.len());
        let mut prev = Shape::Signal {
            c: config.in_channels,
            t: config.input_len,
        };
        for (spec, li) in config.layers.iter().zip(&info) {
            let name = li.name();
            let node = match (*spec, prev) {
                (LayerSpec::Lifting { width, kernel, stride }, Shape::Signal { c, .. }) => {
                    let (filter, coeffs) = b.spline(&name, &[width, c, kernel], kernel)?;
                    let layer = LiftingLayer::new(filter, b.grid(config.scales)?, 1, config.padding)?;
                    Node::Lifting {
                        layer,
                        coeffs,
                        pool: stride,
                    }
                }
                (
                    LayerSpec::Group {
                        width,
                        kernel,
                        stride,
                        scales,
                        ..
                    },
                    Shape::Group { c, s, .. },
                ) => {
                    let Shape::Group { s: so, .. } = li.output else { unreachable!() };
                    b.group(&name, c, s, width, kernel, scales, so, stride)?
                }
                (LayerSpec::Conv { width, kernel, stride }, Shape::Signal { c, .. }) => {
                    b.conv(&name, c, width, kernel, stride)?
                }
                (LayerSpec::ResidualBlock { width, kernel, .. }, sh) => {
                    let (first, second) = match sh {
                        Shape::Group { c, s, .. } => (
                            b.group(&format!("{name}.a"), c, s, width, kernel, 1, s, 1)?,
                            b.group(&format!("{name}.b"), width, s, width, kernel, 1, s, 1)?,
                        ),
                        Shape::Signal { c, .. } => (
                            b.conv(&format!("{name}.a"), c, width, kernel, 1)?,
                            b.conv(&format!("{name}.b"), width, width, kernel, 1)?,
                        ),
                        Shape::Vector { .. } => unreachable!("rejected by validation"),
                    };
                    let bn1 = b.batch_norm(&format!("{name}.bn_a"), width);
                    let bn2 = b.batch_norm(&format!("{name}.bn_b"), width);
                    Node::Residual {
                        sub: Box::new([first, bn1, second, bn2]),
                    }
                }
                (LayerSpec::Pool { size }, _) => Node::Pool(size),
                (LayerSpec::Batchnorm, sh) => {
                    let c = match sh {
                        Shape::Signal { c, .. } | Shape::Group { c, .. } => c,
                        Shape::Vector { n } => n,
                    };
                    b.batch_norm(&name, c)
                }
                (LayerSpec::Relu, _) => Node::Relu,
                (LayerSpec::Dropout { rate }, _) => Node::Dropout(rate),
                (LayerSpec::Project { reduce }, _) => Node::Project(reduce),
                (LayerSpec::GlobalAvgPool, _) => Node::GlobalPool(Reduce::Mean),
                (LayerSpec::GlobalMaxPool, _) => Node::GlobalPool(Reduce::Max),
                (LayerSpec::Flatten, _) => Node::Flatten,
                (LayerSpec::Dense { width }, Shape::Vector { n }) => {
                    let bound = 1.0 / (n as f64).sqrt();
                    let w = uniform(&[width, n], bound, &mut b.rng)?;
                    let weight = b.push(format!("{name}.weight"), w);
                    let bv = uniform(&[width], bound, &mut b.rng)?;
                    let bias = b.push(format!("{name}.bias"), bv);
                    Node::Dense { weight, bias }
                }
                _ => unreachable!("layer table validated by infer"),
            };
            nodes.push(node);
            prev = li.output;
        }
        Ok(Model {
            config: config.clone(),
            params: b.params,
            bn_stats: b.bn,
            info,
            nodes,
            splines: b.splines,
        })
    }

    pub fn layer_info(&self) -> &[LayerInfo] {
        &self.info
    }

    pub fn count_parameters(&self) -> ParamCount {
        let mut per_layer: Vec<(String, usize)> = self.info.iter().map(|l| (l.name(), 0)).collect();
        for p in &self.params {
            let layer = p.name.split('.').next().unwrap_or_default();
            if let Some(row) = per_layer.iter_mut().find(|(n, _)| n == layer) {
                row.1 += p.value.len();
            }
        }
        ParamCount {
            total: self.params.iter().map(|p| p.value.len()).sum(),
            per_layer,
        }
    }

    /// Registers every parameter as a tape leaf, in `params` order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.param(p.value.clone())).collect()
    }

    fn run(
        &mut self,
        node: &Node,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        mode: &mut Mode,
    ) -> Result<Var> {
        let pool = |tape: &mut Tape, y: Var, p: usize| if p > 1 { tape.max_pool1d(y, p, p) } else { Ok(y) };
        match node {
            Node::Lifting { layer, coeffs, pool: p } => {
                let y = layer.forward(tape, x, vars[*coeffs], 1.0)?;
                pool(tape, y, *p)
            }
            Node::Group { layer, coeffs, pool: p } => {
                let y = layer.forward(tape, x, vars[*coeffs], 1.0)?;
                pool(tape, y, *p)
            }
            Node::Conv { weight, kernel, pool: p } => {
                let y = tape.conv1d(x, vars[*weight], 1, self.config.padding.padding(*kernel))?;
                pool(tape, y, *p)
            }
            Node::Pool(size) => tape.max_pool1d(x, *size, *size),
            Node::BatchNorm { gamma, beta, stats } => {
                let train = mode.train();
                tape.batch_norm(x, vars[*gamma], vars[*beta], &mut self.bn_stats[*stats], train)
            }
            Node::Relu => Ok(tape.relu(x)),
            Node::Residual { sub } => {
                let mut y = x;
                for (i, n) in sub.iter().enumerate() {
                    y = self.run(n, tape, vars, y, mode)?;
                    if i == 1 {
                        y = tape.relu(y);
                    }
                }
                let s = tape.add(y, x)?;
                Ok(tape.relu(s))
            }
            Node::Dense { weight, bias } => tape.affine(x, vars[*weight], vars[*bias]),
            Node::Dropout(p) => match mode {
                Mode::Train(rng) => tape.dropout(x, *p, *rng),
                Mode::Eval => Ok(x),
            },
            Node::Project(r) => tape.reduce_axis(x, 2, *r),
            Node::GlobalPool(r) => tape.reduce_axis(x, 2, *r),
            Node::Flatten => {
                let sh = tape.value(x).shape().to_vec();
                let rest: usize = sh[1..].iter().product();
                tape.reshape(x, &[sh[0], rest])
            }
        }
    }

    /// `x` is `[batch, in_channels, input_len]`.
    pub fn forward(&mut self, tape: &mut Tape, vars: &[Var], x: Var, mut mode: Mode) -> Result<Forward> {
        let sh = tape.value(x).shape().to_vec();
        if sh.len() != 3 {
            return Err(Error::dim("model", "rank", 3, sh.len()));
        }
        if sh[1] != self.config.in_channels {
            return Err(Error::dim("model", "channels", self.config.in_channels, sh[1]));
        }
        if sh[2] != self.config.input_len {
            return Err(Error::dim("model", "time", self.config.input_len, sh[2]));
        }
        if vars.len() != self.params.len() {
            return Err(Error::dim("model", "parameters", self.params.len(), vars.len()));
        }
        let nodes = std::mem::take(&mut self.nodes);
        let mut trace = Vec::with_capacity(nodes.len());
        let mut y = x;
        let mut result = Ok(());
        for (i, node) in nodes.iter().enumerate() {
            match self.run(node, tape, vars, y, &mut mode) {
                Ok(v) => {
                    y = v;
                    trace.push((self.info[i].name(), y));
                }
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        self.nodes = nodes;
        result?;
        Ok(Forward { logits: y, trace })
    }

    /// Task loss plus `λ · Σ (mean of each filter at scale 1)²` over spline
    /// filters. With `λ = 0` no penalty node is created.
    pub fn loss(&self, tape: &mut Tape, vars: &[Var], logits: Var, targets: &Targets, lambda: f64) -> Result<Var> {
        let data = match (self.config.head, targets) {
            (Head::Softmax { .. }, Targets::Classes(labels)) => tape.softmax_cross_entropy(logits, labels)?,
            (Head::SigmoidMultilabel { .. }, Targets::MultiLabel(t)) => tape.sigmoid_bce(logits, t)?,
            _ => return Err(Error::contract("targets do not match the model head")),
        };
        if lambda == 0.0 {
            return Ok(data);
        }
        let filters: Vec<(Var, &SplineBasis)> = self.splines.iter().map(|(i, b)| (vars[*i], b)).collect();
        match wavelet_penalty(tape, &filters)? {
            Some(p) => {
                let wp = tape.scale(p, lambda);
                tape.add(data, wp)
            }
            None => Ok(data),
        }
    }

    /// Name of the first layer whose output is non-finite, or `"loss"`.
    pub fn first_non_finite(tape: &Tape, fwd: &Forward) -> String {
        fwd.trace
            .iter()
            .find(|(_, v)| !tape.value(*v).all_finite())
            .map_or_else(|| "loss".to_string(), |(n, _)| n.clone())
    }

    /// Evaluation-mode logits for a batch.
    pub fn predict(&mut self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.register(&mut tape);
        let xv = tape.constant(x.clone());
        let f = self.forward(&mut tape, &vars, xv, Mode::Eval)?;
        Ok(tape.value(f.logits).clone())
    }

    /// Mean over every spline filter of `|mean of the filter sampled at scale 1|`.
    pub fn mean_abs_filter_average(&self) -> Result<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, basis) in &self.splines {
            let f = SplineFilter::new(self.params[*i].value.clone(), basis.clone())?;
            let m = filter_mean(&f.sample(1.0)?)?;
            sum += m.data().iter().map(|v| v.abs()).sum::<f64>();
            n += m.len();
        }
        if n == 0 {
            return Err(Error::contract("model has no spline filters"));
        }
        Ok(sum / n as f64)
    }

    /// Every spline filter with its current coefficients, the name of the
    /// coefficient parameter and the scale grid it is sampled on.
    pub fn spline_filters(&self) -> Vec<(String, SplineFilter, ScaleGrid)> {
        fn walk<'a>(nodes: impl Iterator<Item = &'a Node>, out: &mut Vec<(usize, SplineFilter, ScaleGrid)>) {
            for node in nodes {
                match node {
                    Node::Lifting { layer, coeffs, .. } => out.push((*coeffs, layer.filter.clone(), layer.grid.clone())),
                    Node::Group { layer, coeffs, .. } => out.push((*coeffs, layer.filter.clone(), layer.grid.clone())),
                    Node::Residual { sub } => walk(sub.iter(), out),
                    _ => {}
                }
            }
        }
        let mut found = Vec::new();
        walk(self.nodes.iter(), &mut found);
        found
            .into_iter()
            .map(|(i, mut f, g)| {
                f.coeffs = self.params[i].value.clone();
                (self.params[i].name.clone(), f, g)
            })
            .collect()
    }

    /// The first `n_conv` convolution-type layers with their ReLUs, with
    /// strides and pooling removed and circular padding, for
    /// [`equivariance_probe`](crate::layers::equivariance_probe).
    pub fn probe_stack(&self, n_conv: usize) -> Result<Vec<ProbeLayer>> {
        if !self.config.is_wavelet_net() {
            return Err(Error::contract("probe stacks need a wavelet net"));
        }
        let mut out = Vec::new();
        let mut convs = 0;
        for node in &self.nodes {
            match node {
                _ if convs == n_conv => break,
                Node::Lifting { layer, coeffs, .. } => {
                    let mut l = layer.clone();
                    l.filter.coeffs = self.params[*coeffs].value.clone();
                    l.padding = PadMode::Circular;
                    out.push(ProbeLayer::Lifting(l));
                    convs += 1;
                }
                Node::Group { layer, coeffs, .. } => {
                    let mut l = layer.clone();
                    l.filter.coeffs = self.params[*coeffs].value.clone();
                    l.padding = PadMode::Circular;
                    out.push(ProbeLayer::Group(l));
                    convs += 1;
                }
                Node::Relu => out.push(ProbeLayer::Relu),
                Node::Residual { .. } => break,
                Node::Project(r) => {
                    out.push(ProbeLayer::Project(*r));
                    break;
                }
                _ => {}
            }
        }
        Ok(out)
    }
}
