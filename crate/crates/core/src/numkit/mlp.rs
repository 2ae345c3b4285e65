//! Dense feed-forward networks with analytic backward passes.
//!
//! Weights are stored row-major as `(out, in)`; batched inputs are `(batch, in)`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Activation::Tanh),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Identity),
            other => Err(Error::Format(format!("unknown activation code {other}"))),
        }
    }

    fn apply_inplace<T: Scalar>(self, z: &mut Array2<T>) {
        match self {
            Activation::Tanh => z.mapv_inplace(tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(T::zero())),
            Activation::Identity => {}
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    fn derivative<T: Scalar>(self, z: T, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

/// One affine layer followed by an element-wise activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of a multi-layer perceptron. Also the unit of parameter sharing,
/// target copies and soft updates.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T> {
    layers: Vec<Dense<T>>,
}

/// Intermediate values kept from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input: Array2<T>,
    pre: Vec<Array2<T>>,
    post: Vec<Array2<T>>,
}

impl<T> ForwardCache<T> {
    pub fn depth(&self) -> usize {
        self.pre.len()
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }
}

/// Gradients with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T> {
    pub layers: Vec<(Array2<T>, Array1<T>)>,
}

impl<T: Scalar> MlpParams<T> {
    /// Builds a network with layer widths `sizes` (input first) and Glorot-uniform
    /// weights in `±sqrt(6 / (fan_in + fan_out))`; biases start at zero.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("an MLP needs at least input and output sizes".into()));
        }
        if activations.len() != sizes.len() - 1 {
            return Err(Error::Config(format!(
                "{} activations given for {} layers",
                activations.len(),
                sizes.len() - 1
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (w, &activation) in sizes.windows(2).zip(activations) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || T::lit(dist.sample(rng)));
            layers.push(Dense {
                weight,
                bias: Array1::zeros(fan_out),
                activation,
            });
        }
        Ok(Self { layers })
    }

    /// Wraps explicit layers after checking that dimensions chain and entries are finite.
    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (j, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return shape_err(format!(
                    "layer {j}: bias length {} != out dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                ));
            }
            if j > 0 && layers[j - 1].out_dim() != layer.in_dim() {
                return shape_err(format!(
                    "layer {j}: in dim {} does not match previous out dim {}",
                    layer.in_dim(),
                    layers[j - 1].out_dim()
                ));
            }
        }
        let params = Self { layers };
        if !params.is_finite() {
            return Err(Error::NonFinite("MLP parameters contain non-finite entries".into()));
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense<T>] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.activation == b.activation)
    }

    /// All parameters in layer order, weights (row-major) before biases.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.n_params() {
            return shape_err(format!("flat length {} != {} params", flat.len(), self.n_params()));
        }
        let mut k = 0;
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w = flat[k];
                k += 1;
            }
            for b in l.bias.iter_mut() {
                *b = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[T]) -> Result<(Vec<T>, ForwardCache<T>)> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let (out, cache) = self.forward_batch(x)?;
        Ok((out.into_raw_vec_and_offset().0, cache))
    }

    /// Batched forward pass keeping the cache needed by [`MlpParams::backward`].
    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_input(x.ncols())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let z = {
                let h = post.last().map(|p| p.view()).unwrap_or(x);
                affine(layer, h)
            };
            let mut y = z.clone();
            layer.activation.apply_inplace(&mut y);
            pre.push(z);
            post.push(y);
        }
        let out = post.last().expect("non-empty").clone();
        Ok((
            out,
            ForwardCache {
                input: x.to_owned(),
                pre,
                post,
            },
        ))
    }

    /// Batched forward pass without a cache.
    pub fn predict_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(x.ncols())?;
        let mut h = affine(&self.layers[0], x);
        self.layers[0].activation.apply_inplace(&mut h);
        for layer in &self.layers[1..] {
            let mut z = affine(layer, h.view());
            layer.activation.apply_inplace(&mut z);
            h = z;
        }
        Ok(h)
    }

    pub fn predict(&self, input: &[T]) -> Result<Vec<T>> {
        let x = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.predict_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Gradients of `sum(output * grad_output)` with respect to the parameters
    /// (summed over the batch) and to each input row.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        grad_output: ArrayView2<T>,
    ) -> Result<(MlpGrads<T>, Array2<T>)> {
        self.check_cache(cache, grad_output)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.to_owned();
        for j in (0..self.layers.len()).rev() {
            let layer = &self.layers[j];
            apply_activation_grad(layer.activation, &mut delta, &cache.pre[j], &cache.post[j]);
            let h = if j == 0 { cache.input.view() } else { cache.post[j - 1].view() };
            let gw = delta.t().dot(&h);
            let gb = delta.sum_axis(Axis(0));
            grads.push((gw, gb));
            delta = delta.dot(&layer.weight);
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, delta))
    }

    /// Input gradient only; skips the weight-gradient products.
    pub fn backward_input(
        &self,
        cache: &ForwardCache<T>,
        grad_output: ArrayView2<T>,
    ) -> Result<Array2<T>> {
        self.check_cache(cache, grad_output)?;
        let mut delta = grad_output.to_owned();
        for j in (0..self.layers.len()).rev() {
            let layer = &self.layers[j];
            apply_activation_grad(layer.activation, &mut delta, &cache.pre[j], &cache.post[j]);
            delta = delta.dot(&layer.weight);
        }
        Ok(delta)
    }

    /// In-place `self = (1 - tau) * self + tau * online`.
    pub fn soft_update_from(&mut self, online: &Self, tau: T) -> Result<()> {
        if !(tau > T::zero() && tau <= T::one()) {
            return Err(Error::Config(format!("soft update tau {tau} outside (0, 1]")));
        }
        if !self.same_shape(online) {
            return shape_err("soft update between differently shaped networks");
        }
        let keep = T::one() - tau;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            Zip::from(&mut t.weight).and(&o.weight).for_each(|a, &b| *a = keep * *a + tau * b);
            Zip::from(&mut t.bias).and(&o.bias).for_each(|a, &b| *a = keep * *a + tau * b);
        }
        Ok(())
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.in_dim() {
            return shape_err(format!("input width {width} != network input {}", self.in_dim()));
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache<T>, grad_output: ArrayView2<T>) -> Result<()> {
        if cache.depth() != self.layers.len() {
            return shape_err(format!(
                "cache depth {} != {} layers",
                cache.depth(),
                self.layers.len()
            ));
        }
        for (j, layer) in self.layers.iter().enumerate() {
            if cache.pre[j].ncols() != layer.out_dim() {
                return shape_err(format!("cache layer {j} width does not match network"));
            }
        }
        if cache.input.ncols() != self.in_dim() {
            return shape_err("cache input width does not match network");
        }
        if grad_output.dim() != (cache.batch_size(), self.out_dim()) {
            return shape_err(format!(
                "grad_output shape {:?} != ({}, {})",
                grad_output.dim(),
                cache.batch_size(),
                self.out_dim()
            ));
        }
        Ok(())
    }
}

/// Returns `(1 - tau) * target + tau * online` as a new network.
pub fn soft_update<T: Scalar>(target: &MlpParams<T>, online: &MlpParams<T>, tau: T) -> Result<MlpParams<T>> {
    let mut out = target.clone();
    out.soft_update_from(online, tau)?;
    Ok(out)
}

fn affine<T: Scalar>(layer: &Dense<T>, h: ArrayView2<T>) -> Array2<T> {
    let mut z = layer
        .bias
        .broadcast((h.nrows(), layer.bias.len()))
        .expect("bias broadcasts over rows")
        .to_owned();
    general_mat_mul(T::one(), &h, &layer.weight.t(), T::one(), &mut z);
    z
}

/// Hyperbolic tangent through one `exp`; absolute error stays at rounding level.
#[inline]
pub(crate) fn tanh<T: Scalar>(x: T) -> T {
    let bound = T::lit(20.0);
    let c = x.max(-bound).min(bound);
    let e = (c + c).exp();
    (e - T::one()) / (e + T::one())
}

fn apply_activation_grad<T: Scalar>(act: Activation, delta: &mut Array2<T>, pre: &Array2<T>, post: &Array2<T>) {
    if act == Activation::Identity {
        return;
    }
    Zip::from(delta)
        .and(pre)
        .and(post)
        .for_each(|d, &z, &y| *d *= act.derivative(z, y));
}

impl<T: Scalar> MlpGrads<T> {
    pub fn zeros_like(params: &MlpParams<T>) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn scale(&mut self, factor: T) {
        for (w, b) in &mut self.layers {
            w.mapv_inplace(|v| v * factor);
            b.mapv_inplace(|v| v * factor);
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().all(|v| v.is_finite()) && b.iter().all(|v| v.is_finite()))
    }

    pub fn matches(&self, params: &MlpParams<T>) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|((w, b), l)| w.dim() == l.weight.dim() && b.len() == l.bias.len())
    }
}
