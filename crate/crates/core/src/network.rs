use crate::error::{Error, Result};
use crate::layers::{Cache, Layer, LayerKind, LayerSpec};
use crate::tensor::{Dims, Float, Tensor};

/// An ordered stack of layers with a fixed per-sample input shape.
///
/// Training is single-threaded per instance: [`Network::forward_train`]
/// records a tape of layer caches that the next [`Network::backward`]
/// consumes. [`Network::forward`] keeps no state and can run concurrently.
#[derive(Debug, Clone)]
pub struct Network<T = f32> {
    name: String,
    input: Dims,
    layers: Vec<Layer<T>>,
    tape: Option<Vec<Cache<T>>>,
}

impl<T: Float> Network<T> {
    /// Builds a network from already-initialized layers, checking that the
    /// layer shapes chain from `input` (a batch-1 dims).
    pub fn new(name: impl Into<String>, input: Dims, layers: Vec<Layer<T>>) -> Result<Self> {
        input.validate()?;
        if layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        let input = input.with_batch(1);
        let mut dims = input;
        for (i, layer) in layers.iter().enumerate() {
            dims = layer
                .spec()
                .output_dims(dims)
                .map_err(|e| Error::InvalidSpec(format!("layer {i}: {e}")))?;
        }
        Ok(Network { name: name.into(), input, layers, tape: None })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    /// Per-sample input dims (batch 1).
    pub fn input_dims(&self) -> Dims {
        self.input
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| *l.spec()).collect()
    }

    /// Output dims of every layer for a batch-1 input.
    pub fn layer_output_dims(&self) -> Vec<Dims> {
        let mut dims = self.input;
        self.layers
            .iter()
            .map(|l| {
                dims = l.spec().output_dims(dims).expect("validated at construction");
                dims
            })
            .collect()
    }

    pub fn num_outputs(&self) -> usize {
        self.layer_output_dims().last().map(Dims::sample_len).unwrap_or(0)
    }

    /// Closed-form trainable parameter count from the layer specs.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec().param_count()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut())
    }

    /// Mutable access to parameter `param` of layer `layer`.
    pub fn params_mut_at(&mut self, layer: usize, param: usize) -> &mut Tensor<T> {
        &mut self.layers[layer].params_mut()[param]
    }

    /// Stable parameter names, `layers.{index}.{param}`, in [`Network::params`] order.
    pub fn param_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.spec().param_shapes().into_iter().map(move |(name, _)| format!("layers.{i}.{name}"))
            })
            .collect()
    }

    pub fn cast<U: Float>(&self) -> Network<U> {
        Network {
            name: self.name.clone(),
            input: self.input,
            layers: self.layers.iter().map(Layer::cast).collect(),
            tape: None,
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let d = x.dims();
        if (d.c, d.h, d.w) != (self.input.c, self.input.h, self.input.w) {
            return Err(Error::ShapeMismatch(format!(
                "network `{}` expects per-sample input {}x{}x{}, got {d}",
                self.name, self.input.c, self.input.h, self.input.w
            )));
        }
        Ok(())
    }

    /// Number of leading layers that produce logits (all but a trailing softmax).
    fn logit_layers(&self) -> usize {
        match self.layers.last() {
            Some(l) if l.kind() == LayerKind::Softmax => self.layers.len() - 1,
            _ => self.layers.len(),
        }
    }

    /// Full inference pass, including the final softmax.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x, self.layers.len())
    }

    /// Inference pass up to (excluding) a trailing softmax.
    pub fn forward_logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x, self.logit_layers())
    }

    fn run(&self, x: &Tensor<T>, upto: usize) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers[..upto] {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Training forward pass to the logits, recording the tape for
    /// [`Network::backward`].
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let upto = self.logit_layers();
        let mut tape = Vec::with_capacity(upto);
        let mut h = x.clone();
        for layer in &self.layers[..upto] {
            let (y, cache) = layer.forward_cached(&h)?;
            tape.push(cache);
            h = y;
        }
        self.tape = Some(tape);
        Ok(h)
    }

    /// Back-propagates a gradient with respect to the logits of the last
    /// [`Network::forward_train`] call. Returns one gradient per parameter,
    /// in [`Network::params`] order.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let tape = self.tape.take().ok_or(Error::BackwardBeforeForward)?;
        let mut per_layer: Vec<Vec<Tensor<T>>> = Vec::with_capacity(tape.len());
        let mut g = grad_logits.clone();
        for (layer, cache) in self.layers[..tape.len()].iter().zip(&tape).rev() {
            let (dx, dparams) = layer.backward(cache, &g)?;
            per_layer.push(dparams);
            g = dx;
        }
        per_layer.reverse();
        // A trailing softmax has no parameters, so the flat order matches params().
        Ok(per_layer.into_iter().flatten().collect())
    }

    /// Copies every parameter value from `other`, which must share this
    /// network's layer specs.
    pub fn copy_params_from(&mut self, other: &Network<T>) -> Result<()> {
        if self.specs() != other.specs() {
            return Err(Error::ShapeMismatch("networks have different layer specs".into()));
        }
        for (dst, src) in self.params_mut().zip(other.params()) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }
}
