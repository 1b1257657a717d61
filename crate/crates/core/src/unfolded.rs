//! The unfolded BIHT network: each layer is one BIHT step with its own step
//! size and a shared, trainable surrogate sensing matrix.
//!
//! Gradients are written out by hand. The sign nonlinearity is bypassed with
//! a clipped straight-through estimator, hard thresholding passes gradient on
//! its retained support only, and the optional unit-sphere projection
//! contributes its exact Jacobian `(I − wwᵀ)/‖z‖`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_len, top_k_indices, DenseMatrix, DenseVector, Real};
use crate::sensing::{sign, OneBitMeasurements};

/// Forward nonlinearity applied to `Φx − τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForwardMode {
    /// Hard `sign`, used for training and inference.
    #[default]
    Sign,
    /// `clamp(u, −c, c)`; its true derivative equals the STE rule, which lets
    /// finite differences validate the backward pass.
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfoldedParams<T> {
    /// Trainable m × n surrogate sensing matrix, shared by all layers.
    pub phi: DenseMatrix<T>,
    /// One step size per layer.
    pub step_sizes: Vec<T>,
    pub sparsity: usize,
    pub threshold: DenseVector<T>,
    pub normalize_per_layer: bool,
    /// STE clip level `c`; `+∞` gives the plain identity estimator.
    pub ste_clip: T,
}

impl<T: Real> UnfoldedParams<T> {
    pub fn new(
        phi: DenseMatrix<T>,
        step_sizes: Vec<T>,
        sparsity: usize,
        threshold: DenseVector<T>,
        normalize_per_layer: bool,
        ste_clip: T,
    ) -> Result<Self> {
        let params = Self { phi, step_sizes, sparsity, threshold, normalize_per_layer, ste_clip };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.step_sizes.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        if self.step_sizes.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite { context: "step sizes".into() });
        }
        if !self.phi.is_finite() {
            return Err(Error::NonFinite { context: "surrogate matrix".into() });
        }
        if !(self.ste_clip > T::zero()) {
            return Err(Error::InvalidConfig(format!("STE clip must be positive, got {}", self.ste_clip)));
        }
        check_len("threshold length", self.phi.rows(), self.threshold.len())
    }

    pub fn depth(&self) -> usize {
        self.step_sizes.len()
    }

    pub fn measurements_len(&self) -> usize {
        self.phi.rows()
    }

    pub fn signal_len(&self) -> usize {
        self.phi.cols()
    }

    /// Blind inference: recovers per-layer estimates from one-bit data using
    /// only the learned parameters.
    pub fn decode(&self, y: &OneBitMeasurements, x0: &DenseVector<T>) -> Result<Vec<DenseVector<T>>> {
        Ok(network_forward(self, x0, y, self.depth())?.outputs)
    }
}

/// Intermediates of one layer's forward pass, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache<T> {
    pub layer_index: usize,
    pub input: DenseVector<T>,
    /// `Φx − τ`.
    pub pre_activation: DenseVector<T>,
    /// `y − sign(Φx − τ)` (or its surrogate).
    pub residual: DenseVector<T>,
    /// `Φᵀ r`.
    pub correlation: DenseVector<T>,
    /// `x + α Φᵀ r`.
    pub pre_threshold: DenseVector<T>,
    /// Indices kept by hard thresholding.
    pub retained: Vec<usize>,
    /// Thresholded vector before projection.
    pub thresholded: DenseVector<T>,
    pub thresholded_norm: T,
    /// Whether the unit-sphere projection was applied.
    pub projected: bool,
    pub output: DenseVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTrace<T> {
    pub outputs: Vec<DenseVector<T>>,
    pub caches: Vec<LayerCache<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients<T> {
    pub grad_x: DenseVector<T>,
    pub grad_phi: DenseMatrix<T>,
    pub grad_alpha: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGradients<T> {
    pub grad_phi: DenseMatrix<T>,
    pub grad_alpha: Vec<T>,
}

impl<T: Real> NetworkGradients<T> {
    pub fn zeros(m: usize, n: usize, depth: usize) -> Self {
        Self { grad_phi: DenseMatrix::zeros(m, n), grad_alpha: vec![T::zero(); depth] }
    }

    pub fn accumulate(&mut self, other: &Self) {
        self.grad_phi.add_scaled(T::one(), &other.grad_phi);
        for (a, &b) in self.grad_alpha.iter_mut().zip(&other.grad_alpha) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grad_phi.is_finite() && self.grad_alpha.iter().all(|a| a.is_finite())
    }
}

/// Clipped straight-through estimator: `upstream_j · 1{|u_j| ≤ c}`.
pub fn ste_backward<T: Real>(u: &DenseVector<T>, upstream: &DenseVector<T>, clip: T) -> DenseVector<T> {
    u.iter()
        .zip(upstream.iter())
        .map(|(&uj, &gj)| if uj.abs() <= clip { gj } else { T::zero() })
        .collect()
}

pub fn layer_forward<T: Real>(
    params: &UnfoldedParams<T>,
    layer_index: usize,
    x: &DenseVector<T>,
    y: &OneBitMeasurements,
) -> Result<(DenseVector<T>, LayerCache<T>)> {
    layer_forward_with(params, layer_index, x, y, ForwardMode::Sign)
}

pub fn layer_forward_with<T: Real>(
    params: &UnfoldedParams<T>,
    layer_index: usize,
    x: &DenseVector<T>,
    y: &OneBitMeasurements,
    mode: ForwardMode,
) -> Result<(DenseVector<T>, LayerCache<T>)> {
    let alpha = *params.step_sizes.get(layer_index).ok_or_else(|| {
        Error::InvalidConfig(format!("layer {layer_index} out of range for depth {}", params.depth()))
    })?;
    check_len("layer input length", params.signal_len(), x.len())?;
    check_len("measurement length", params.measurements_len(), y.len())?;
    check_len("threshold length", params.measurements_len(), params.threshold.len())?;

    let mut pre_activation = params.phi.mul_vec(x)?;
    for (uj, &tj) in pre_activation.as_mut_slice().iter_mut().zip(params.threshold.iter()) {
        *uj -= tj;
    }
    let clip = params.ste_clip;
    let residual: DenseVector<T> = pre_activation
        .iter()
        .enumerate()
        .map(|(j, &uj)| {
            let activated = match mode {
                ForwardMode::Sign => sign(uj),
                ForwardMode::Surrogate => uj.max(-clip).min(clip),
            };
            y.value::<T>(j) - activated
        })
        .collect();
    let correlation = params.phi.mul_transpose_vec(&residual)?;
    let mut pre_threshold = x.clone();
    for (vc, &pc) in pre_threshold.as_mut_slice().iter_mut().zip(correlation.iter()) {
        *vc += alpha * pc;
    }

    let retained = top_k_indices(&pre_threshold, params.sparsity);
    let mut thresholded = DenseVector::zeros(pre_threshold.len());
    for &i in &retained {
        thresholded[i] = pre_threshold[i];
    }
    let thresholded_norm = thresholded.norm();
    let projected = params.normalize_per_layer && thresholded_norm > T::zero();
    let output = if projected { thresholded.scaled(thresholded_norm.recip()) } else { thresholded.clone() };

    let cache = LayerCache {
        layer_index,
        input: x.clone(),
        pre_activation,
        residual,
        correlation,
        pre_threshold,
        retained,
        thresholded,
        thresholded_norm,
        projected,
        output: output.clone(),
    };
    Ok((output, cache))
}

pub fn network_forward<T: Real>(
    params: &UnfoldedParams<T>,
    x0: &DenseVector<T>,
    y: &OneBitMeasurements,
    depth: usize,
) -> Result<NetworkTrace<T>> {
    network_forward_with(params, x0, y, depth, ForwardMode::Sign)
}

pub fn network_forward_with<T: Real>(
    params: &UnfoldedParams<T>,
    x0: &DenseVector<T>,
    y: &OneBitMeasurements,
    depth: usize,
    mode: ForwardMode,
) -> Result<NetworkTrace<T>> {
    if depth == 0 || depth > params.depth() {
        return Err(Error::InvalidConfig(format!(
            "forward depth {depth} must be in 1..={}",
            params.depth()
        )));
    }
    let mut outputs = Vec::with_capacity(depth);
    let mut caches = Vec::with_capacity(depth);
    let mut x = x0.clone();
    for i in 0..depth {
        let (next, cache) = layer_forward_with(params, i, &x, y, mode)?;
        outputs.push(next.clone());
        caches.push(cache);
        x = next;
    }
    Ok(NetworkTrace { outputs, caches })
}

fn check_cache<T: Real>(cache: &LayerCache<T>, params: &UnfoldedParams<T>, layer_index: usize) -> Result<()> {
    let (m, n) = params.phi.shape();
    if cache.layer_index != layer_index {
        return Err(Error::StaleCache(format!(
            "cache from layer {} used for layer {layer_index}",
            cache.layer_index
        )));
    }
    if layer_index >= params.depth() {
        return Err(Error::StaleCache(format!("layer {layer_index} beyond depth {}", params.depth())));
    }
    if cache.input.len() != n
        || cache.pre_threshold.len() != n
        || cache.correlation.len() != n
        || cache.thresholded.len() != n
        || cache.output.len() != n
        || cache.pre_activation.len() != m
        || cache.residual.len() != m
        || cache.retained.len() > params.sparsity
    {
        return Err(Error::StaleCache(format!("cache dimensions disagree with {m}x{n} parameters")));
    }
    Ok(())
}

/// Core reverse step. Adds this layer's `∂/∂Φ` into `grad_phi` and returns
/// `(∂/∂x, ∂/∂α)`.
fn backprop_layer<T: Real>(
    cache: &LayerCache<T>,
    params: &UnfoldedParams<T>,
    upstream: &DenseVector<T>,
    grad_phi: &mut DenseMatrix<T>,
) -> Result<(DenseVector<T>, T)> {
    let n = params.signal_len();
    check_len("upstream gradient length", n, upstream.len())?;
    let alpha = params.step_sizes[cache.layer_index];

    // Through the projection w = z/‖z‖.
    let grad_thresholded = if cache.projected {
        let w = &cache.output;
        let along = w.dot(upstream);
        let inv = cache.thresholded_norm.recip();
        upstream.iter().zip(w.iter()).map(|(&g, &wc)| (g - wc * along) * inv).collect()
    } else {
        upstream.clone()
    };

    // Hard thresholding passes gradient only on the retained support.
    let mut grad_v = DenseVector::zeros(n);
    for &i in &cache.retained {
        grad_v[i] = grad_thresholded[i];
    }

    let grad_alpha = cache.correlation.dot(&grad_v);

    // q = D Φ g_v, with D the STE mask on the pre-activation.
    let projected_back = params.phi.mul_vec(&grad_v)?;
    let masked = ste_backward(&cache.pre_activation, &projected_back, params.ste_clip);

    grad_phi.add_outer(alpha, &cache.residual, &grad_v);
    grad_phi.add_outer(-alpha, &masked, &cache.input);

    let mut grad_x = grad_v;
    let back = params.phi.mul_transpose_vec(&masked)?;
    grad_x.axpy(-alpha, &back);
    Ok((grad_x, grad_alpha))
}

pub fn layer_backward<T: Real>(
    cache: &LayerCache<T>,
    params: &UnfoldedParams<T>,
    layer_index: usize,
    upstream: &DenseVector<T>,
) -> Result<LayerGradients<T>> {
    check_cache(cache, params, layer_index)?;
    let mut grad_phi = DenseMatrix::zeros(params.phi.rows(), params.phi.cols());
    let (grad_x, grad_alpha) = backprop_layer(cache, params, upstream, &mut grad_phi)?;
    Ok(LayerGradients { grad_x, grad_phi, grad_alpha })
}

/// Reverse pass through `depth` layers. `per_layer_upstreams[i]` is the loss
/// gradient with respect to layer `i`'s output.
pub fn network_backward<T: Real>(
    caches: &[LayerCache<T>],
    params: &UnfoldedParams<T>,
    depth: usize,
    per_layer_upstreams: &[DenseVector<T>],
) -> Result<NetworkGradients<T>> {
    let mut grads = NetworkGradients::zeros(params.phi.rows(), params.phi.cols(), depth);
    network_backward_into(caches, params, depth, per_layer_upstreams, &mut grads)?;
    Ok(grads)
}

/// Same as [`network_backward`] but accumulates into existing gradients.
pub fn network_backward_into<T: Real>(
    caches: &[LayerCache<T>],
    params: &UnfoldedParams<T>,
    depth: usize,
    per_layer_upstreams: &[DenseVector<T>],
    grads: &mut NetworkGradients<T>,
) -> Result<()> {
    if caches.len() < depth || per_layer_upstreams.len() < depth || depth > params.depth() {
        return Err(Error::StaleCache(format!(
            "depth {depth} with {} caches, {} upstreams, {} layers",
            caches.len(),
            per_layer_upstreams.len(),
            params.depth()
        )));
    }
    if grads.grad_alpha.len() != depth || grads.grad_phi.shape() != params.phi.shape() {
        return Err(Error::ShapeMismatch("gradient accumulator does not match network".into()));
    }
    for (i, cache) in caches.iter().enumerate().take(depth) {
        check_cache(cache, params, i)?;
    }
    let n = params.signal_len();
    let mut carried = DenseVector::zeros(n);
    for i in (0..depth).rev() {
        check_len("upstream gradient length", n, per_layer_upstreams[i].len())?;
        carried.axpy(T::one(), &per_layer_upstreams[i]);
        let (grad_x, grad_alpha) = backprop_layer(&caches[i], params, &carried, &mut grads.grad_phi)?;
        grads.grad_alpha[i] += grad_alpha;
        carried = grad_x;
    }
    Ok(())
}
