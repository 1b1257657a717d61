//! Two-stage learning of the unfolded network.
//!
//! Stage 1 fits the surrogate sensing matrix with every layer sharing one
//! fixed step size, scoring only the final layer. Stage 2 freezes that matrix,
//! truncates the network to `L'` layers and fits one step size per layer
//! under the accumulated all-layer loss plus `λ Σ ReLU(−α_i)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{BlindView, GenConfig, SamplePair};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, DenseVector, Real, SeededRng};
use crate::unfolded::{network_backward_into, network_forward, NetworkGradients, UnfoldedParams};

/// Samples per gradient-reduction chunk. Fixed so that the summation order
/// does not depend on the thread count.
const REDUCTION_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid Adam hyperparameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub first_moment: Vec<T>,
    pub second_moment: Vec<T>,
    pub step_count: u64,
    pub hyper: AdamHyper,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize, hyper: AdamHyper) -> Self {
        Self { first_moment: vec![T::zero(); len], second_moment: vec![T::zero(); len], step_count: 0, hyper }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Real>(state: &mut AdamState<T>, params: &mut [T], grads: &[T]) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.first_moment.len()
        )));
    }
    state.step_count += 1;
    let h = state.hyper;
    let (b1, b2) = (T::lit(h.beta1), T::lit(h.beta2));
    let t = i32::try_from(state.step_count).unwrap_or(i32::MAX);
    let correction1 = T::one() - b1.powi(t);
    let correction2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::lit(h.lr), T::lit(h.epsilon));
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// `Σ_i ‖x̂_i − x_i‖²`.
pub fn loss_stage1<T: Real>(final_outputs: &[DenseVector<T>], targets: &[DenseVector<T>]) -> Result<T> {
    if final_outputs.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!("{} outputs vs {} targets", final_outputs.len(), targets.len())));
    }
    let mut total = T::zero();
    for (out, target) in final_outputs.iter().zip(targets) {
        if out.len() != target.len() {
            return Err(Error::ShapeMismatch(format!("output length {} vs target {}", out.len(), target.len())));
        }
        total += out.squared_distance(target);
    }
    Ok(total)
}

/// `Σ_samples Σ_layers ‖out_layer − x‖² + λ Σ_i max(−α_i, 0)`.
pub fn loss_stage2<T: Real>(
    per_layer_outputs: &[Vec<DenseVector<T>>],
    targets: &[DenseVector<T>],
    step_sizes: &[T],
    lambda: T,
) -> Result<T> {
    if per_layer_outputs.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples vs {} targets",
            per_layer_outputs.len(),
            targets.len()
        )));
    }
    let mut total = T::zero();
    for (layers, target) in per_layer_outputs.iter().zip(targets) {
        if layers.len() != step_sizes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} layer outputs vs {} step sizes",
                layers.len(),
                step_sizes.len()
            )));
        }
        total += loss_stage1(layers, &vec![target.clone(); layers.len()])?;
    }
    Ok(total + lambda * step_size_penalty(step_sizes))
}

fn step_size_penalty<T: Real>(step_sizes: &[T]) -> T {
    step_sizes.iter().map(|&a| (-a).max(T::zero())).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(flatten)]
    pub adam: AdamHyper,
    /// Step size shared by all layers during stage 1; `None` uses `1/m`.
    pub shared_alpha: Option<f64>,
    /// Stage-1 depth `L`.
    pub depth: usize,
    /// Stage-2 depth `L' ≤ L`.
    pub reduced_depth: usize,
    /// Weight of the negative-step-size penalty in stage 2.
    pub lambda: f64,
    /// Hard-thresholding level `k` used by the network; `None` uses the
    /// dataset sparsity.
    pub sparsity: Option<usize>,
    /// STE clip level; `None` means no clipping.
    pub ste_clip: Option<f64>,
    pub normalize_per_layer: bool,
    pub seed: u64,
    pub deterministic_reduction: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            adam: AdamHyper { lr: 1e-2, ..AdamHyper::default() },
            shared_alpha: None,
            depth: 10,
            reduced_depth: 10,
            lambda: 1.0,
            sparsity: None,
            ste_clip: Some(1.0),
            normalize_per_layer: true,
            seed: 0,
            deterministic_reduction: true,
        }
    }
}

impl TrainingConfig {
    /// Defaults for the step-size stage: same settings with a smaller rate.
    pub fn stage2_default() -> Self {
        Self { epochs: 100, adam: AdamHyper::default(), ..Self::default() }
    }

    pub fn shared_alpha_for(&self, m: usize) -> f64 {
        self.shared_alpha.unwrap_or(1.0 / m as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.epochs == 0 {
            problems.push("epochs must be >= 1".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".to_string());
        }
        if let Err(e) = self.adam.validate() {
            problems.push(e.to_string());
        }
        if self.shared_alpha.is_some_and(|a| !a.is_finite()) {
            problems.push("shared_alpha must be finite".to_string());
        }
        if self.depth == 0 {
            problems.push("depth must be >= 1".to_string());
        }
        if self.reduced_depth == 0 || self.reduced_depth > self.depth {
            problems.push(format!("reduced_depth must be in 1..=depth, got {}", self.reduced_depth));
        }
        if !(self.lambda >= 0.0) {
            problems.push("lambda must be >= 0".to_string());
        }
        if self.sparsity == Some(0) {
            problems.push("sparsity must be >= 1".to_string());
        }
        if let Some(c) = self.ste_clip {
            if !(c > 0.0) {
                problems.push("ste_clip must be positive".to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T> {
    pub params: UnfoldedParams<T>,
    pub stage: Stage,
    /// Stage-1 depth the surrogate matrix was fitted with.
    pub depth: usize,
    pub loss_history: Vec<f64>,
    pub config: TrainingConfig,
    pub dataset_meta: Option<GenConfig>,
}

impl<T: Real> TrainedModel<T> {
    /// Per-layer estimates from one-bit measurements alone.
    pub fn decode(&self, y: &crate::sensing::OneBitMeasurements, x0: &DenseVector<T>) -> Result<Vec<DenseVector<T>>> {
        self.params.decode(y, x0)
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Which layer outputs the loss scores.
#[derive(Debug, Clone, Copy)]
enum LossScope {
    FinalLayer,
    AllLayers,
}

/// Loss and gradients of one sample.
fn sample_gradients<T: Real>(
    params: &UnfoldedParams<T>,
    pair: &SamplePair<T>,
    x0: &DenseVector<T>,
    depth: usize,
    scope: LossScope,
    grads: &mut NetworkGradients<T>,
) -> Result<T> {
    let trace = network_forward(params, x0, &pair.measurements, depth)?;
    let target = pair.signal.values();
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let upstreams: Vec<DenseVector<T>> = trace
        .outputs
        .iter()
        .enumerate()
        .map(|(i, out)| {
            let scored = match scope {
                LossScope::FinalLayer => i + 1 == depth,
                LossScope::AllLayers => true,
            };
            if scored {
                loss += out.squared_distance(target);
                out.sub(target).scaled(two)
            } else {
                DenseVector::zeros(out.len())
            }
        })
        .collect();
    network_backward_into(&trace.caches, params, depth, &upstreams, grads)?;
    Ok(loss)
}

/// Summed loss and gradients over a batch.
fn batch_gradients<T: Real>(
    params: &UnfoldedParams<T>,
    batch: &[&SamplePair<T>],
    x0: &DenseVector<T>,
    depth: usize,
    scope: LossScope,
    deterministic: bool,
) -> Result<(T, NetworkGradients<T>)> {
    let (m, n) = params.phi.shape();
    let chunk = |samples: &[&SamplePair<T>]| -> Result<(T, NetworkGradients<T>)> {
        let mut grads = NetworkGradients::zeros(m, n, depth);
        let mut loss = T::zero();
        for pair in samples {
            loss += sample_gradients(params, pair, x0, depth, scope, &mut grads)?;
        }
        Ok((loss, grads))
    };
    let merge = |a: Result<(T, NetworkGradients<T>)>, b: Result<(T, NetworkGradients<T>)>| {
        let (la, mut ga) = a?;
        let (lb, gb) = b?;
        ga.accumulate(&gb);
        Ok((la + lb, ga))
    };
    if deterministic {
        let parts: Vec<_> = batch.par_chunks(REDUCTION_CHUNK).map(chunk).collect();
        parts.into_iter().reduce(merge).unwrap_or_else(|| Ok((T::zero(), NetworkGradients::zeros(m, n, depth))))
    } else {
        batch
            .par_chunks(REDUCTION_CHUNK)
            .map(chunk)
            .reduce(|| Ok((T::zero(), NetworkGradients::zeros(m, n, depth))), merge)
    }
}

fn check_data<T: Real>(data: &BlindView<'_, T>) -> Result<(usize, usize)> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let (n, m) = (data.signal_len(), data.measurements_len());
    for pair in data.pairs {
        if pair.signal.len() != n || pair.measurements.len() != m {
            return Err(Error::DimensionMismatch {
                context: "training pair".into(),
                expected: n,
                found: pair.signal.len(),
            });
        }
    }
    Ok((m, n))
}

/// Runs the epoch loop shared by both stages. `apply` receives the batch
/// gradients and performs the optimizer update.
fn run_epochs<T: Real>(
    params: &mut UnfoldedParams<T>,
    data: &BlindView<'_, T>,
    cfg: &TrainingConfig,
    depth: usize,
    scope: LossScope,
    mut apply: impl FnMut(&mut UnfoldedParams<T>, &NetworkGradients<T>) -> Result<T>,
) -> Result<Vec<f64>> {
    let x0 = DenseVector::zeros(params.signal_len());
    let mut rng = SeededRng::new(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch_idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&SamplePair<T>> = batch_idx.iter().map(|&i| &data.pairs[i]).collect();
            let (loss, grads) = batch_gradients(params, &batch, &x0, depth, scope, cfg.deterministic_reduction)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::DivergenceDetected { epoch, detail: "non-finite loss or gradient".into() });
            }
            let extra = apply(params, &grads)?;
            epoch_loss += (loss + extra).as_f64();
            if !params.phi.is_finite() || params.step_sizes.iter().any(|a| !a.is_finite()) {
                return Err(Error::DivergenceDetected { epoch, detail: "non-finite parameters".into() });
            }
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::DivergenceDetected { epoch, detail: format!("epoch loss {mean}") });
        }
        history.push(mean);
    }
    Ok(history)
}

/// Stage 1: learns the surrogate matrix from a standard-normal start with all
/// `L` step sizes fixed to `shared_alpha`.
pub fn train_stage1<T: Real>(data: &BlindView<'_, T>, cfg: &TrainingConfig) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    let (m, n) = check_data(data)?;
    let sparsity = cfg.sparsity.unwrap_or_else(|| data.pairs[0].signal.sparsity_bound());
    let mut init_rng = SeededRng::new(cfg.seed);
    let phi = DenseMatrix::from_fn(m, n, |_, _| T::lit(init_rng.standard_normal()));
    let mut params = UnfoldedParams::new(
        phi,
        vec![T::lit(cfg.shared_alpha_for(m)); cfg.depth],
        sparsity,
        data.threshold.clone(),
        cfg.normalize_per_layer,
        T::lit(cfg.ste_clip.unwrap_or(f64::INFINITY)),
    )?;
    let mut adam = AdamState::new(m * n, cfg.adam);
    let history = run_epochs(&mut params, data, cfg, cfg.depth, LossScope::FinalLayer, |p, g| {
        adam_step(&mut adam, p.phi.as_mut_slice(), g.grad_phi.as_slice())?;
        Ok(T::zero())
    })?;
    Ok(TrainedModel { params, stage: Stage::One, depth: cfg.depth, loss_history: history, config: cfg.clone(), dataset_meta: None })
}

/// Stage 2: keeps `phi_star` fixed and learns `L'` per-layer step sizes,
/// starting from the stage-1 values.
pub fn train_stage2<T: Real>(
    data: &BlindView<'_, T>,
    phi_star: &UnfoldedParams<T>,
    cfg: &TrainingConfig,
) -> Result<TrainedModel<T>> {
    cfg.validate()?;
    let (m, n) = check_data(data)?;
    if phi_star.phi.shape() != (m, n) {
        return Err(Error::DimensionMismatch { context: "stage-1 matrix rows".into(), expected: m, found: phi_star.phi.rows() });
    }
    let depth = cfg.reduced_depth;
    if depth > phi_star.depth() {
        return Err(Error::InvalidConfig(format!(
            "reduced depth {depth} exceeds the {} layers available",
            phi_star.depth()
        )));
    }
    phi_star.validate()?;
    let mut params = phi_star.clone();
    params.step_sizes.truncate(depth);
    let lambda = T::lit(cfg.lambda);
    let mut adam = AdamState::new(depth, cfg.adam);
    let history = run_epochs(&mut params, data, cfg, depth, LossScope::AllLayers, |p, g| {
        let penalty = lambda * step_size_penalty(&p.step_sizes);
        let mut grads = g.grad_alpha.clone();
        for (gi, &a) in grads.iter_mut().zip(&p.step_sizes) {
            if a < T::zero() {
                *gi -= lambda;
            }
        }
        adam_step(&mut adam, &mut p.step_sizes, &grads)?;
        Ok(penalty)
    })?;
    Ok(TrainedModel {
        params,
        stage: Stage::Two,
        depth: phi_star.depth(),
        loss_history: history,
        config: cfg.clone(),
        dataset_meta: None,
    })
}
