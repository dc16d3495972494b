//! The two fixed architectures (dense MLP and a two-stage CNN) with exact
//! per-sample forward and backward passes.
//!
//! Dense weights are stored input-major (`[fan_in, fan_out]`) so the forward
//! pass and the weight gradient both run as row-wise axpy updates and can skip
//! zero inputs.

use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::params::{Layout, ParameterVector, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" | "linear" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// A convolution (valid padding, stride 1) followed by 2x2 max-pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvStage {
    pub channels: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    Mlp {
        hidden: Vec<usize>,
        activation: Activation,
        bias: bool,
    },
    /// Two conv+pool stages, then one hidden dense layer and the output layer.
    Cnn {
        stages: [ConvStage; 2],
        hidden: usize,
        activation: Activation,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    input_shape: Vec<usize>,
    classes: usize,
    arch: Architecture,
}

impl ModelSpec {
    pub fn new(input_shape: Vec<usize>, classes: usize, arch: Architecture) -> Result<Self> {
        let spec = Self {
            input_shape,
            classes,
            arch,
        };
        spec.geometry()?;
        Ok(spec)
    }

    /// ReLU MLP with biases.
    pub fn mlp(input_shape: Vec<usize>, hidden: Vec<usize>, classes: usize) -> Result<Self> {
        Self::new(
            input_shape,
            classes,
            Architecture::Mlp {
                hidden,
                activation: Activation::Relu,
                bias: true,
            },
        )
    }

    /// The default CNN: 3x3 kernels with 8 then 16 channels, ReLU, and a
    /// hidden dense layer of the given width.
    pub fn cnn(input_shape: Vec<usize>, hidden: usize, classes: usize) -> Result<Self> {
        Self::new(
            input_shape,
            classes,
            Architecture::Cnn {
                stages: [
                    ConvStage {
                        channels: 8,
                        kernel: 3,
                    },
                    ConvStage {
                        channels: 16,
                        kernel: 3,
                    },
                ],
                hidden,
                activation: Activation::Relu,
            },
        )
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> Arc<Layout> {
        Arc::new(self.geometry().expect("validated at construction").layout)
    }

    pub fn param_count(&self) -> usize {
        self.layout().len()
    }

    /// Glorot-uniform weights from a seeded generator; zero biases.
    pub fn init_params(&self, seed: u64) -> ParameterVector {
        let layout = self.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; layout.len()];
        for seg in layout.segments() {
            if seg.role != Role::Weight {
                continue;
            }
            let (fan_in, fan_out) = match seg.shape.as_slice() {
                [i, o] => (*i, *o),
                [o, i, k1, k2] => (i * k1 * k2, o * k1 * k2),
                other => unreachable!("weight shape {other:?}"),
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for v in &mut values[seg.range()] {
                *v = dist.sample(&mut rng);
            }
        }
        ParameterVector::new(layout, values).expect("sized from layout")
    }

    pub(crate) fn geometry(&self) -> Result<Geometry> {
        if self.classes == 0 {
            return Err(Error::InvalidSpec("class count must be >= 1".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "input shape {:?} must be non-empty with positive dims",
                self.input_shape
            )));
        }
        match &self.arch {
            Architecture::Mlp { hidden, bias, .. } => {
                if hidden.contains(&0) {
                    return Err(Error::InvalidSpec("hidden widths must be >= 1".into()));
                }
                let mut widths = vec![self.input_len()];
                widths.extend(hidden);
                widths.push(self.classes);
                let mut entries = Vec::new();
                for (l, w) in widths.windows(2).enumerate() {
                    entries.push((l, Role::Weight, vec![w[0], w[1]]));
                    if *bias {
                        entries.push((l, Role::Bias, vec![w[1]]));
                    }
                }
                Ok(Geometry {
                    layout: Layout::packed(entries),
                    convs: Vec::new(),
                    dense_widths: widths,
                })
            }
            Architecture::Cnn { stages, hidden, .. } => {
                let [c, h, w] = self.input_shape.as_slice() else {
                    return Err(Error::InvalidSpec(format!(
                        "CNN input must be [channels, height, width], got {:?}",
                        self.input_shape
                    )));
                };
                if *hidden == 0 {
                    return Err(Error::InvalidSpec("hidden width must be >= 1".into()));
                }
                let mut convs = Vec::with_capacity(2);
                let (mut c, mut h, mut w) = (*c, *h, *w);
                let mut entries = Vec::new();
                for (l, stage) in stages.iter().enumerate() {
                    if stage.channels == 0 || stage.kernel == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "conv stage {l} needs positive channels and kernel"
                        )));
                    }
                    if stage.kernel > h || stage.kernel > w {
                        return Err(Error::InvalidSpec(format!(
                            "conv stage {l}: kernel {} exceeds input {h}x{w}",
                            stage.kernel
                        )));
                    }
                    let (oh, ow) = (h - stage.kernel + 1, w - stage.kernel + 1);
                    let (ph, pw) = (oh / 2, ow / 2);
                    if ph == 0 || pw == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "conv stage {l}: {oh}x{ow} output is too small to pool"
                        )));
                    }
                    entries.push((
                        l,
                        Role::Weight,
                        vec![stage.channels, c, stage.kernel, stage.kernel],
                    ));
                    entries.push((l, Role::Bias, vec![stage.channels]));
                    convs.push(ConvGeom {
                        in_c: c,
                        in_h: h,
                        in_w: w,
                        out_c: stage.channels,
                        k: stage.kernel,
                        out_h: oh,
                        out_w: ow,
                        pool_h: ph,
                        pool_w: pw,
                    });
                    (c, h, w) = (stage.channels, ph, pw);
                }
                let widths = vec![c * h * w, *hidden, self.classes];
                for (l, wd) in widths.windows(2).enumerate() {
                    entries.push((2 + l, Role::Weight, vec![wd[0], wd[1]]));
                    entries.push((2 + l, Role::Bias, vec![wd[1]]));
                }
                Ok(Geometry {
                    layout: Layout::packed(entries),
                    convs,
                    dense_widths: widths,
                })
            }
        }
    }

    pub(crate) fn activation(&self) -> Activation {
        match &self.arch {
            Architecture::Mlp { activation, .. } | Architecture::Cnn { activation, .. } => {
                *activation
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConvGeom {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    k: usize,
    out_h: usize,
    out_w: usize,
    pool_h: usize,
    pool_w: usize,
}

impl ConvGeom {
    fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    fn pool_len(&self) -> usize {
        self.out_c * self.pool_h * self.pool_w
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Geometry {
    layout: Layout,
    convs: Vec<ConvGeom>,
    /// Widths of the dense chain, starting with its input width.
    dense_widths: Vec<usize>,
}

/// Receives per-sample gradient contributions. Within one sample every
/// parameter index is written by at most one call, so a sink may apply a
/// nonlinear map (such as squaring) to what it receives.
pub(crate) trait GradSink {
    fn add_scaled(&mut self, offset: usize, scale: f64, values: &[f64]);
}

pub(crate) struct Accumulate<'a>(pub &'a mut [f64]);

impl GradSink for Accumulate<'_> {
    #[inline]
    fn add_scaled(&mut self, offset: usize, scale: f64, values: &[f64]) {
        let dst = &mut self.0[offset..offset + values.len()];
        for (d, v) in dst.iter_mut().zip(values) {
            *d += scale * v;
        }
    }
}

pub(crate) struct AccumulateSquares<'a>(pub &'a mut [f64]);

impl GradSink for AccumulateSquares<'_> {
    #[inline]
    fn add_scaled(&mut self, offset: usize, scale: f64, values: &[f64]) {
        let dst = &mut self.0[offset..offset + values.len()];
        for (d, v) in dst.iter_mut().zip(values) {
            let g = scale * v;
            *d += g * g;
        }
    }
}

#[derive(Default)]
struct ConvCache {
    z: Vec<f64>,
    a: Vec<f64>,
    argmax: Vec<usize>,
    pooled: Vec<f64>,
}

/// Per-sample activations kept for the backward pass.
pub(crate) struct Cache {
    /// Raw sample, kept only when the first layer is a convolution.
    input: Vec<f64>,
    convs: Vec<ConvCache>,
    /// Input of each dense layer.
    dense_in: Vec<Vec<f64>>,
    /// Pre-activation of each dense layer (the last one is the logits).
    dense_z: Vec<Vec<f64>>,
}

/// Borrowed view of a spec, its geometry, and raw parameter values.
pub(crate) struct Network<'a> {
    geom: Geometry,
    params: &'a [f64],
    activation: Activation,
    conv_offsets: Vec<(usize, usize)>,
    dense_offsets: Vec<(usize, Option<usize>)>,
}

impl<'a> Network<'a> {
    pub(crate) fn new(spec: &ModelSpec, params: &'a ParameterVector) -> Result<Self> {
        let geom = spec.geometry()?;
        if *params.layout().as_ref() != geom.layout {
            return Err(Error::LayoutMismatch(format!(
                "parameters ({} values) do not match the model layout ({} values)",
                params.len(),
                geom.layout.len()
            )));
        }
        let n_conv = geom.convs.len();
        let conv_offsets = (0..n_conv)
            .map(|l| {
                let w = geom.layout.segment(l, Role::Weight).expect("conv weight");
                let b = geom.layout.segment(l, Role::Bias).expect("conv bias");
                (w.offset, b.offset)
            })
            .collect();
        let dense_offsets = (0..geom.dense_widths.len() - 1)
            .map(|d| {
                let l = n_conv + d;
                let w = geom.layout.segment(l, Role::Weight).expect("dense weight");
                (
                    w.offset,
                    geom.layout.segment(l, Role::Bias).map(|b| b.offset),
                )
            })
            .collect();
        Ok(Self {
            geom,
            params: params.values(),
            activation: spec.activation(),
            conv_offsets,
            dense_offsets,
        })
    }

    pub(crate) fn new_cache(&self) -> Cache {
        Cache {
            input: Vec::new(),
            convs: self
                .geom
                .convs
                .iter()
                .map(|_| ConvCache::default())
                .collect(),
            dense_in: vec![Vec::new(); self.dense_offsets.len()],
            dense_z: vec![Vec::new(); self.dense_offsets.len()],
        }
    }

    /// Runs one sample forward and returns its logits.
    pub(crate) fn forward<'c>(&self, x: &[f64], cache: &'c mut Cache) -> &'c [f64] {
        let mut input: Vec<f64> = x.to_vec();
        if !self.geom.convs.is_empty() {
            cache.input.clear();
            cache.input.extend_from_slice(x);
        }
        for (l, g) in self.geom.convs.iter().enumerate() {
            let (w_off, b_off) = self.conv_offsets[l];
            let cc = &mut cache.convs[l];
            conv_forward(
                g,
                &input,
                &self.params[w_off..],
                &self.params[b_off..b_off + g.out_c],
                &mut cc.z,
            );
            cc.a.clear();
            cc.a.extend(cc.z.iter().map(|&z| self.activation.apply(z)));
            max_pool(g, &cc.a, &mut cc.pooled, &mut cc.argmax);
            input = cc.pooled.clone();
        }

        let last = self.dense_offsets.len() - 1;
        for (d, &(w_off, b_off)) in self.dense_offsets.iter().enumerate() {
            let (fan_in, fan_out) = (self.geom.dense_widths[d], self.geom.dense_widths[d + 1]);
            let z = &mut cache.dense_z[d];
            z.clear();
            match b_off {
                Some(b) => z.extend_from_slice(&self.params[b..b + fan_out]),
                None => z.resize(fan_out, 0.0),
            }
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &self.params[w_off + i * fan_out..w_off + (i + 1) * fan_out];
                for (zj, wij) in z.iter_mut().zip(row) {
                    *zj += xi * wij;
                }
            }
            let next: Vec<f64> = if d == last {
                Vec::new()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            debug_assert_eq!(input.len(), fan_in);
            cache.dense_in[d] = std::mem::replace(&mut input, next);
        }
        &cache.dense_z[last]
    }

    /// Backpropagates `dlogits` (the loss gradient w.r.t. the logits of the
    /// sample last passed through `forward` with this cache).
    pub(crate) fn backward(&self, cache: &Cache, dlogits: &[f64], sink: &mut impl GradSink) {
        let mut delta = dlogits.to_vec();
        let n_dense = self.dense_offsets.len();
        let has_convs = !self.geom.convs.is_empty();
        let mut dinput = Vec::new();
        for d in (0..n_dense).rev() {
            let (w_off, b_off) = self.dense_offsets[d];
            let fan_out = self.geom.dense_widths[d + 1];
            let input = &cache.dense_in[d];
            for (i, &xi) in input.iter().enumerate() {
                if xi != 0.0 {
                    sink.add_scaled(w_off + i * fan_out, xi, &delta);
                }
            }
            if let Some(b) = b_off {
                sink.add_scaled(b, 1.0, &delta);
            }
            if d == 0 && !has_convs {
                return;
            }
            dinput.clear();
            dinput.extend(input.iter().enumerate().map(|(i, _)| {
                let row = &self.params[w_off + i * fan_out..w_off + (i + 1) * fan_out];
                row.iter().zip(&delta).map(|(w, g)| w * g).sum::<f64>()
            }));
            if d > 0 {
                let z_prev = &cache.dense_z[d - 1];
                delta = dinput
                    .iter()
                    .zip(z_prev)
                    .zip(input)
                    .map(|((g, &z), &a)| g * self.activation.derivative(z, a))
                    .collect();
            } else {
                delta = std::mem::take(&mut dinput);
            }
        }

        // `delta` is now the gradient w.r.t. the last pooled feature map.
        let mut scratch = Vec::new();
        for l in (0..self.geom.convs.len()).rev() {
            let g = &self.geom.convs[l];
            let cc = &cache.convs[l];
            let mut dz = vec![0.0; g.out_len()];
            for (p, &src) in cc.argmax.iter().enumerate() {
                dz[src] += delta[p];
            }
            for (dzi, (&z, &a)) in dz.iter_mut().zip(cc.z.iter().zip(&cc.a)) {
                *dzi *= self.activation.derivative(z, a);
            }
            let input: &[f64] = if l == 0 {
                &cache.input
            } else {
                &cache.convs[l - 1].pooled
            };
            let (w_off, b_off) = self.conv_offsets[l];
            conv_weight_grad(g, input, &dz, &mut scratch);
            sink.add_scaled(w_off, 1.0, &scratch);
            let db: Vec<f64> = dz
                .chunks(g.out_h * g.out_w)
                .map(|c| c.iter().sum())
                .collect();
            sink.add_scaled(b_off, 1.0, &db);
            if l > 0 {
                delta = conv_input_grad(g, &self.params[w_off..], &dz);
            }
        }
    }
}

fn conv_forward(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64], z: &mut Vec<f64>) {
    let k = g.k;
    z.clear();
    z.resize(g.out_len(), 0.0);
    for oc in 0..g.out_c {
        let plane = &mut z[oc * g.out_h * g.out_w..(oc + 1) * g.out_h * g.out_w];
        plane.iter_mut().for_each(|v| *v = b[oc]);
        for ic in 0..g.in_c {
            let xin = &x[ic * g.in_h * g.in_w..(ic + 1) * g.in_h * g.in_w];
            for di in 0..k {
                for dj in 0..k {
                    let wv = w[((oc * g.in_c + ic) * k + di) * k + dj];
                    for i in 0..g.out_h {
                        let xrow = &xin[(i + di) * g.in_w + dj..(i + di) * g.in_w + dj + g.out_w];
                        let zrow = &mut plane[i * g.out_w..(i + 1) * g.out_w];
                        for (zv, xv) in zrow.iter_mut().zip(xrow) {
                            *zv += wv * xv;
                        }
                    }
                }
            }
        }
    }
}

fn conv_weight_grad(g: &ConvGeom, x: &[f64], dz: &[f64], out: &mut Vec<f64>) {
    let k = g.k;
    out.clear();
    out.resize(g.out_c * g.in_c * k * k, 0.0);
    for oc in 0..g.out_c {
        let dplane = &dz[oc * g.out_h * g.out_w..(oc + 1) * g.out_h * g.out_w];
        for ic in 0..g.in_c {
            let xin = &x[ic * g.in_h * g.in_w..(ic + 1) * g.in_h * g.in_w];
            for di in 0..k {
                for dj in 0..k {
                    let mut acc = 0.0;
                    for i in 0..g.out_h {
                        let xrow = &xin[(i + di) * g.in_w + dj..(i + di) * g.in_w + dj + g.out_w];
                        let drow = &dplane[i * g.out_w..(i + 1) * g.out_w];
                        acc += xrow.iter().zip(drow).map(|(a, b)| a * b).sum::<f64>();
                    }
                    out[((oc * g.in_c + ic) * k + di) * k + dj] = acc;
                }
            }
        }
    }
}

fn conv_input_grad(g: &ConvGeom, w: &[f64], dz: &[f64]) -> Vec<f64> {
    let k = g.k;
    let mut dx = vec![0.0; g.in_c * g.in_h * g.in_w];
    for oc in 0..g.out_c {
        let dplane = &dz[oc * g.out_h * g.out_w..(oc + 1) * g.out_h * g.out_w];
        for ic in 0..g.in_c {
            let dxin = &mut dx[ic * g.in_h * g.in_w..(ic + 1) * g.in_h * g.in_w];
            for di in 0..k {
                for dj in 0..k {
                    let wv = w[((oc * g.in_c + ic) * k + di) * k + dj];
                    for i in 0..g.out_h {
                        let drow = &dplane[i * g.out_w..(i + 1) * g.out_w];
                        let xrow =
                            &mut dxin[(i + di) * g.in_w + dj..(i + di) * g.in_w + dj + g.out_w];
                        for (xv, dv) in xrow.iter_mut().zip(drow) {
                            *xv += wv * dv;
                        }
                    }
                }
            }
        }
    }
    dx
}

/// 2x2 stride-2 max-pool; ties go to the first position in row-major order.
fn max_pool(g: &ConvGeom, a: &[f64], pooled: &mut Vec<f64>, argmax: &mut Vec<usize>) {
    pooled.clear();
    argmax.clear();
    pooled.reserve(g.pool_len());
    argmax.reserve(g.pool_len());
    for c in 0..g.out_c {
        let base = c * g.out_h * g.out_w;
        for i in 0..g.pool_h {
            for j in 0..g.pool_w {
                let mut best = base + 2 * i * g.out_w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * g.out_w + 2 * j + dj;
                    if a[idx] > a[best] {
                        best = idx;
                    }
                }
                pooled.push(a[best]);
                argmax.push(best);
            }
        }
    }
}
