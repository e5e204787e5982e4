//! Layer vocabulary of the custom architectures, with hand-written forward and
//! backward passes.
//!
//! A [`Layer`] owns only its parameters. Forward passes that will be
//! differentiated return a [`Cache`] which the caller hands back to
//! [`Layer::backward`]; inference passes keep nothing, so a layer with frozen
//! weights can serve concurrent forwards.

mod activation;
mod conv;
mod dense;
mod pool;
mod se;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{Dims, Float, Rng, Tensor};

pub use pool::{BLUR_KERNEL_1D, BLUR_NORM};
pub(crate) use activation::softmax_in_place as activation_softmax_in_place;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    /// 3×3 convolution, padding 1.
    Conv3,
    /// Depth-wise separable: per-channel 3×3 then 1×1 point-wise.
    ConvDW,
    /// 1×1 convolution.
    PointwiseConv,
    ReLU,
    /// 2×2 / stride-2 max pooling (ceil mode).
    MaxPool2,
    /// Binomial blur then stride-2 subsampling.
    BlurPool2,
    /// Global average pooling.
    GAP,
    SqueezeExcite,
    /// Affine map on the flattened `c·h·w` features.
    Dense,
    Softmax,
}

impl LayerKind {
    pub const ALL: [LayerKind; 10] = [
        LayerKind::Conv3,
        LayerKind::ConvDW,
        LayerKind::PointwiseConv,
        LayerKind::ReLU,
        LayerKind::MaxPool2,
        LayerKind::BlurPool2,
        LayerKind::GAP,
        LayerKind::SqueezeExcite,
        LayerKind::Dense,
        LayerKind::Softmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv3 => "Conv3",
            LayerKind::ConvDW => "ConvDW",
            LayerKind::PointwiseConv => "PointwiseConv",
            LayerKind::ReLU => "ReLU",
            LayerKind::MaxPool2 => "MaxPool2",
            LayerKind::BlurPool2 => "BlurPool2",
            LayerKind::GAP => "GAP",
            LayerKind::SqueezeExcite => "SqueezeExcite",
            LayerKind::Dense => "Dense",
            LayerKind::Softmax => "Softmax",
        }
    }

    /// Counted as a convolutional layer in architecture summaries.
    pub fn is_conv(self) -> bool {
        matches!(self, LayerKind::Conv3 | LayerKind::ConvDW)
    }

    pub fn is_pool(self) -> bool {
        matches!(self, LayerKind::MaxPool2 | LayerKind::BlurPool2)
    }

    fn passes_channels_through(self) -> bool {
        matches!(
            self,
            LayerKind::ReLU
                | LayerKind::MaxPool2
                | LayerKind::BlurPool2
                | LayerKind::GAP
                | LayerKind::SqueezeExcite
                | LayerKind::Softmax
        )
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidSpec(format!("unknown layer kind `{s}`")))
    }
}

/// Declarative description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    /// Hidden width divisor; only meaningful for [`LayerKind::SqueezeExcite`].
    pub se_reduction: usize,
}

impl LayerSpec {
    fn new(kind: LayerKind, in_channels: usize, out_channels: usize) -> Self {
        LayerSpec { kind, in_channels, out_channels, stride: 1, se_reduction: 1 }
    }

    pub fn conv3(in_channels: usize, out_channels: usize) -> Self {
        Self::new(LayerKind::Conv3, in_channels, out_channels)
    }

    pub fn conv_dw(in_channels: usize, out_channels: usize) -> Self {
        Self::new(LayerKind::ConvDW, in_channels, out_channels)
    }

    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self::new(LayerKind::PointwiseConv, in_channels, out_channels)
    }

    pub fn relu(channels: usize) -> Self {
        Self::new(LayerKind::ReLU, channels, channels)
    }

    pub fn max_pool2(channels: usize) -> Self {
        Self::new(LayerKind::MaxPool2, channels, channels)
    }

    pub fn blur_pool2(channels: usize) -> Self {
        Self::new(LayerKind::BlurPool2, channels, channels)
    }

    pub fn gap(channels: usize) -> Self {
        Self::new(LayerKind::GAP, channels, channels)
    }

    pub fn squeeze_excite(channels: usize, reduction: usize) -> Self {
        LayerSpec { se_reduction: reduction, ..Self::new(LayerKind::SqueezeExcite, channels, channels) }
    }

    /// Dense layer over `features` flattened inputs.
    pub fn dense(features: usize, outputs: usize) -> Self {
        Self::new(LayerKind::Dense, features, outputs)
    }

    pub fn softmax(classes: usize) -> Self {
        Self::new(LayerKind::Softmax, classes, classes)
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(format!("{}: {msg}", self.kind)));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be >= 1".into());
        }
        if self.stride != 1 && self.stride != 2 {
            return bad(format!("stride must be 1 or 2, got {}", self.stride));
        }
        if self.stride != 1 && !self.kind.is_conv() {
            return bad("only Conv3 and ConvDW take a stride".into());
        }
        if self.kind.passes_channels_through() && self.in_channels != self.out_channels {
            return bad(format!(
                "in/out channels must match ({} vs {})",
                self.in_channels, self.out_channels
            ));
        }
        if self.kind == LayerKind::SqueezeExcite && self.se_reduction == 0 {
            return bad("reduction must be >= 1".into());
        }
        Ok(())
    }

    /// Hidden width of a squeeze-and-excite block (`c / reduction`, at least 1).
    pub fn se_hidden(&self) -> usize {
        (self.in_channels / self.se_reduction.max(1)).max(1)
    }

    /// Named parameter tensors in storage order.
    pub fn param_shapes(&self) -> Vec<(&'static str, Dims)> {
        let (cin, cout) = (self.in_channels, self.out_channels);
        let bias = |c| Dims::of(1, 1, 1, c);
        match self.kind {
            LayerKind::Conv3 => vec![("weight", Dims::of(cout, cin, 3, 3)), ("bias", bias(cout))],
            LayerKind::ConvDW => vec![
                ("dw_weight", Dims::of(cin, 1, 3, 3)),
                ("dw_bias", bias(cin)),
                ("pw_weight", Dims::of(cout, cin, 1, 1)),
                ("pw_bias", bias(cout)),
            ],
            LayerKind::PointwiseConv => {
                vec![("weight", Dims::of(cout, cin, 1, 1)), ("bias", bias(cout))]
            }
            LayerKind::SqueezeExcite => {
                let hidden = self.se_hidden();
                vec![
                    ("fc1_weight", Dims::of(1, 1, hidden, cin)),
                    ("fc1_bias", bias(hidden)),
                    ("fc2_weight", Dims::of(1, 1, cin, hidden)),
                    ("fc2_bias", bias(cin)),
                ]
            }
            LayerKind::Dense => vec![("weight", Dims::of(1, 1, cout, cin)), ("bias", bias(cout))],
            LayerKind::ReLU
            | LayerKind::MaxPool2
            | LayerKind::BlurPool2
            | LayerKind::GAP
            | LayerKind::Softmax => Vec::new(),
        }
    }

    /// Fan-in of each parameter tensor, used for He initialization.
    /// `(fan_in, gain)` per parameter; zero fan-in marks a bias. Gain 2
    /// for weights whose output goes through a ReLU, 1 otherwise.
    fn init_scales(&self) -> Vec<(usize, f64)> {
        let cin = self.in_channels;
        let bias = (0, 0.0);
        match self.kind {
            LayerKind::Conv3 => vec![(9 * cin, 2.0), bias],
            LayerKind::ConvDW => vec![(9, 1.0), bias, (cin, 2.0), bias],
            LayerKind::PointwiseConv => vec![(cin, 2.0), bias],
            LayerKind::Dense => vec![(cin, 1.0), bias],
            LayerKind::SqueezeExcite => vec![(cin, 2.0), bias, (self.se_hidden(), 1.0), bias],
            _ => Vec::new(),
        }
    }

    /// Closed-form trainable parameter count.
    pub fn param_count(&self) -> usize {
        let (cin, cout) = (self.in_channels, self.out_channels);
        match self.kind {
            LayerKind::Conv3 => 9 * cin * cout + cout,
            LayerKind::ConvDW => 9 * cin + cin + cin * cout + cout,
            LayerKind::PointwiseConv => cin * cout + cout,
            LayerKind::SqueezeExcite => {
                let hidden = self.se_hidden();
                2 * cin * hidden + hidden + cin
            }
            LayerKind::Dense => cin * cout + cout,
            LayerKind::ReLU
            | LayerKind::MaxPool2
            | LayerKind::BlurPool2
            | LayerKind::GAP
            | LayerKind::Softmax => 0,
        }
    }

    /// Output dims for a given input, or an error if the input does not fit.
    pub fn output_dims(&self, input: Dims) -> Result<Dims> {
        let expected = self.in_channels;
        let got = match self.kind {
            LayerKind::Dense | LayerKind::Softmax => input.sample_len(),
            _ => input.c,
        };
        if got != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} expects {expected} input {}, got {got} (input {input})",
                self.kind,
                if matches!(self.kind, LayerKind::Dense | LayerKind::Softmax) {
                    "features"
                } else {
                    "channels"
                }
            )));
        }
        let s = self.stride;
        let down = |v: usize, by: usize| v.div_ceil(by);
        Ok(match self.kind {
            LayerKind::Conv3 | LayerKind::ConvDW => {
                Dims::of(input.n, self.out_channels, down(input.h, s), down(input.w, s))
            }
            LayerKind::PointwiseConv => Dims::of(input.n, self.out_channels, input.h, input.w),
            LayerKind::MaxPool2 => Dims::of(input.n, input.c, down(input.h, 2), down(input.w, 2)),
            LayerKind::BlurPool2 => {
                if input.h < 2 || input.w < 2 {
                    return Err(Error::ShapeMismatch(format!(
                        "BlurPool2 needs spatial dims >= 2, got {input}"
                    )));
                }
                Dims::of(input.n, input.c, down(input.h, 2), down(input.w, 2))
            }
            LayerKind::GAP => Dims::of(input.n, input.c, 1, 1),
            LayerKind::Dense => Dims::of(input.n, self.out_channels, 1, 1),
            LayerKind::ReLU | LayerKind::SqueezeExcite | LayerKind::Softmax => input,
        })
    }
}

/// Per-pass state saved by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    /// Produced by inference-only passes; cannot be differentiated.
    Empty,
    Input(Tensor<T>),
    /// Input dims only, for layers whose gradient does not depend on values.
    Shape(Dims),
    MaxPool { input_dims: Dims, argmax: Vec<usize> },
    DepthwiseSeparable { input: Tensor<T>, mid: Tensor<T> },
    SqueezeExcite { input: Tensor<T>, squeezed: Vec<T>, hidden_pre: Vec<T>, gate: Vec<T> },
    Softmax { output: Tensor<T> },
}

/// A layer and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T = f32> {
    spec: LayerSpec,
    params: Vec<Tensor<T>>,
}

impl<T: Float> Layer<T> {
    /// Zero biases; normal weights with `std = sqrt(gain / fan_in)`, where
    /// gain is 2 (He) before a ReLU and 1 before the unrectified depthwise
    /// output, the classifier logits and the SE gate.
    pub fn new(spec: LayerSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let params = spec
            .param_shapes()
            .into_iter()
            .zip(spec.init_scales())
            .map(|((_, dims), (fan_in, gain))| {
                let mut t = Tensor::alloc(dims);
                if fan_in > 0 {
                    let std = (gain / fan_in as f64).sqrt();
                    for v in t.data_mut() {
                        *v = T::from_f64(std * rng.standard_normal());
                    }
                }
                t
            })
            .collect();
        Ok(Layer { spec, params })
    }

    pub fn with_params(spec: LayerSpec, params: Vec<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::InvalidSpec(format!(
                "{} takes {} parameter tensors, got {}",
                spec.kind,
                shapes.len(),
                params.len()
            )));
        }
        for ((name, dims), p) in shapes.iter().zip(&params) {
            if p.dims() != *dims {
                return Err(Error::ShapeMismatch(format!(
                    "{} {name}: expected {dims}, got {}",
                    spec.kind,
                    p.dims()
                )));
            }
        }
        let layer = Layer { spec, params };
        debug_assert_eq!(layer.num_params(), spec.param_count());
        Ok(layer)
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn kind(&self) -> LayerKind {
        self.spec.kind
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Parameter count by enumerating the stored tensors.
    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Float>(&self) -> Layer<U> {
        Layer { spec: self.spec, params: self.params.iter().map(Tensor::cast).collect() }
    }

    /// Inference forward pass.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x, false).map(|(y, _)| y)
    }

    /// Forward pass that keeps what [`Layer::backward`] needs.
    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Cache<T>)> {
        self.run(x, true)
    }

    fn run(&self, x: &Tensor<T>, keep: bool) -> Result<(Tensor<T>, Cache<T>)> {
        let out_dims = self.spec.output_dims(x.dims())?;
        let p = &self.params;
        let keep_input = |x: &Tensor<T>| if keep { Cache::Input(x.clone()) } else { Cache::Empty };
        let (y, cache) = match self.spec.kind {
            LayerKind::Conv3 => {
                (conv::conv3x3(x, &p[0], &p[1], self.spec.stride, out_dims), keep_input(x))
            }
            LayerKind::ConvDW => {
                let mid = conv::depthwise3x3(x, &p[0], &p[1], self.spec.stride);
                let y = conv::pointwise(&mid, &p[2], &p[3]);
                let cache = if keep {
                    Cache::DepthwiseSeparable { input: x.clone(), mid }
                } else {
                    Cache::Empty
                };
                (y, cache)
            }
            LayerKind::PointwiseConv => (conv::pointwise(x, &p[0], &p[1]), keep_input(x)),
            LayerKind::ReLU => (activation::relu(x), keep_input(x)),
            LayerKind::MaxPool2 => {
                let (y, argmax) = pool::max_pool2(x, out_dims);
                let cache = if keep {
                    Cache::MaxPool { input_dims: x.dims(), argmax }
                } else {
                    Cache::Empty
                };
                (y, cache)
            }
            LayerKind::BlurPool2 => (pool::blur_pool2(x, out_dims), Cache::Shape(x.dims())),
            LayerKind::GAP => (pool::gap(x), Cache::Shape(x.dims())),
            LayerKind::SqueezeExcite => {
                let fw = se::forward(x, p, self.spec.se_hidden());
                let cache = if keep {
                    Cache::SqueezeExcite {
                        input: x.clone(),
                        squeezed: fw.squeezed,
                        hidden_pre: fw.hidden_pre,
                        gate: fw.gate,
                    }
                } else {
                    Cache::Empty
                };
                (fw.output, cache)
            }
            LayerKind::Dense => (dense::forward(x, &p[0], &p[1], out_dims), keep_input(x)),
            LayerKind::Softmax => {
                let y = activation::softmax(x);
                let cache = if keep { Cache::Softmax { output: y.clone() } } else { Cache::Empty };
                (y, cache)
            }
        };
        y.debug_check_finite(self.spec.kind.name());
        let cache = if keep { cache } else { Cache::Empty };
        Ok((y, cache))
    }

    /// Gradients with respect to the layer input and every parameter (in
    /// [`Layer::params`] order).
    pub fn backward(&self, cache: &Cache<T>, grad_out: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let p = &self.params;
        let mismatch = || {
            Error::InvalidArgument(format!("cache does not belong to a {} layer", self.spec.kind))
        };
        let check_grad = |input_dims: Dims| -> Result<()> {
            let expect = self.spec.output_dims(input_dims)?;
            if grad_out.dims() != expect {
                return Err(Error::ShapeMismatch(format!(
                    "{} backward: grad {} vs output {expect}",
                    self.spec.kind,
                    grad_out.dims()
                )));
            }
            Ok(())
        };
        if let Cache::Empty = cache {
            return Err(Error::BackwardBeforeForward);
        }
        let result = match (self.spec.kind, cache) {
            (LayerKind::Conv3, Cache::Input(x)) => {
                check_grad(x.dims())?;
                let (dx, dw, db) = conv::conv3x3_backward(x, &p[0], grad_out, self.spec.stride);
                (dx, vec![dw, db])
            }
            (LayerKind::ConvDW, Cache::DepthwiseSeparable { input, mid }) => {
                check_grad(input.dims())?;
                let (dmid, dpw, dpb) = conv::pointwise_backward(mid, &p[2], grad_out);
                let (dx, ddw, ddb) =
                    conv::depthwise3x3_backward(input, &p[0], &dmid, self.spec.stride);
                (dx, vec![ddw, ddb, dpw, dpb])
            }
            (LayerKind::PointwiseConv, Cache::Input(x)) => {
                check_grad(x.dims())?;
                let (dx, dw, db) = conv::pointwise_backward(x, &p[0], grad_out);
                (dx, vec![dw, db])
            }
            (LayerKind::ReLU, Cache::Input(x)) => {
                check_grad(x.dims())?;
                (activation::relu_backward(x, grad_out), Vec::new())
            }
            (LayerKind::MaxPool2, Cache::MaxPool { input_dims, argmax }) => {
                check_grad(*input_dims)?;
                (pool::max_pool2_backward(*input_dims, argmax, grad_out), Vec::new())
            }
            (LayerKind::BlurPool2, Cache::Shape(input_dims)) => {
                check_grad(*input_dims)?;
                (pool::blur_pool2_backward(*input_dims, grad_out), Vec::new())
            }
            (LayerKind::GAP, Cache::Shape(input_dims)) => {
                check_grad(*input_dims)?;
                (pool::gap_backward(*input_dims, grad_out), Vec::new())
            }
            (LayerKind::SqueezeExcite, Cache::SqueezeExcite { input, squeezed, hidden_pre, gate }) => {
                check_grad(input.dims())?;
                let saved = se::Saved { squeezed, hidden_pre, gate };
                se::backward(input, p, self.spec.se_hidden(), &saved, grad_out)
            }
            (LayerKind::Dense, Cache::Input(x)) => {
                check_grad(x.dims())?;
                let (dx, dw, db) = dense::backward(x, &p[0], grad_out);
                (dx, vec![dw, db])
            }
            (LayerKind::Softmax, Cache::Softmax { output }) => {
                if grad_out.dims() != output.dims() {
                    return Err(Error::ShapeMismatch(format!(
                        "Softmax backward: grad {} vs output {}",
                        grad_out.dims(),
                        output.dims()
                    )));
                }
                (activation::softmax_backward(output, grad_out), Vec::new())
            }
            _ => return Err(mismatch()),
        };
        result.0.debug_check_finite("backward");
        Ok(result)
    }
}
