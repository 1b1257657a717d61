//! NMSE and the two benchmark experiments: per-layer convergence of the
//! trained network against true-matrix BIHT, and final-layer accuracy across
//! sparsity levels. Each point is averaged over seeded realizations, where a
//! realization redraws the sensing matrix, data and noise and retrains.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_dataset, BlindView, GenConfig, SensingMatrix};
use crate::error::{Error, Result};
use crate::numerics::{l2_normalize, DenseVector, Real};
use crate::sensing::{biht_iterate, BihtConfig};
use crate::training::{train_stage1, train_stage2, TrainedModel, TrainingConfig};

pub const UNFOLDED: &str = "unfolded";
pub const BIHT: &str = "biht";

/// Offset separating training seeds from data seeds within a realization.
const TRAINING_SEED_OFFSET: u64 = 0x5EED_0000;

/// `‖u(estimate) − u(truth)‖²` with `u(v) = v/‖v‖` and `u(0) = 0`.
pub fn nmse<T: Real>(estimate: &DenseVector<T>, truth: &DenseVector<T>) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch { context: "nmse".into(), expected: truth.len(), found: estimate.len() });
    }
    if truth.iter().all(|v| v.is_zero()) {
        return Err(Error::ZeroTruth);
    }
    Ok(l2_normalize(estimate).squared_distance(&l2_normalize(truth)).as_f64())
}

/// Baseline BIHT settings; the iteration count always matches the network depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BihtSettings {
    pub step_size: f64,
    pub normalize_each_iteration: bool,
}

impl Default for BihtSettings {
    fn default() -> Self {
        Self { step_size: 1.0, normalize_each_iteration: false }
    }
}

impl BihtSettings {
    pub fn config<T: Real>(&self, n: usize, sparsity: usize, iterations: usize) -> BihtConfig<T> {
        BihtConfig {
            step_size: T::lit(self.step_size),
            sparsity,
            iterations,
            initial_point: DenseVector::zeros(n),
            normalize_each_iteration: self.normalize_each_iteration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Acquisition model. `samples` and `seed` are overridden per realization.
    pub gen: GenConfig,
    pub train_samples: usize,
    pub test_samples: usize,
    pub stage1: TrainingConfig,
    pub stage2: TrainingConfig,
    pub biht: BihtSettings,
    pub realizations: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    /// n = 128, m = 512, K = 5, unit-variance white noise, L = L' = 10, 20 realizations.
    pub fn paper() -> Self {
        let stage1 = TrainingConfig { epochs: 30, batch_size: 8, ..TrainingConfig::default() };
        let stage2 = TrainingConfig { epochs: 10, batch_size: 8, ..TrainingConfig::stage2_default() };
        Self {
            gen: GenConfig::default(),
            train_samples: 1000,
            test_samples: 200,
            stage1,
            stage2,
            biht: BihtSettings::default(),
            realizations: 20,
            seed: 0,
        }
    }

    /// Reduced scale: n = 32, m = 128, K = 3, 5 realizations.
    pub fn fast() -> Self {
        let mut cfg = Self::paper();
        cfg.gen.n = 32;
        cfg.gen.m = 128;
        cfg.gen.sparsity = 3;
        cfg.stage1.epochs = 50;
        cfg.stage2.epochs = 20;
        cfg.realizations = 5;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.train_samples == 0 || self.test_samples == 0 {
            problems.push("train_samples and test_samples must be >= 1".to_string());
        }
        if self.realizations == 0 {
            problems.push("realizations must be >= 1".to_string());
        }
        if !(self.biht.step_size > 0.0) {
            problems.push("biht.step_size must be positive".to_string());
        }
        if self.stage2.reduced_depth > self.stage1.depth {
            problems.push("stage2.reduced_depth must not exceed stage1.depth".to_string());
        }
        for (name, res) in [
            ("gen", self.dataset_config(self.gen.sparsity, 0).validate()),
            ("stage1", self.stage1.validate()),
            ("stage2", self.stage2.validate()),
        ] {
            if let Err(e) = res {
                problems.push(format!("{name}: {e}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    /// Network / baseline depth used for evaluation (`L'`).
    pub fn eval_depth(&self) -> usize {
        self.stage2.reduced_depth
    }

    fn dataset_config(&self, sparsity: usize, realization: u64) -> GenConfig {
        GenConfig {
            sparsity,
            samples: self.train_samples + self.test_samples,
            seed: self.seed.wrapping_add(realization),
            ..self.gen.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSeries {
    pub method: String,
    pub mean_nmse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub axis: usize,
    pub method: String,
    pub realization: usize,
    pub nmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub axis_label: String,
    pub axis: Vec<usize>,
    pub series: Vec<MethodSeries>,
    pub realizations: usize,
    pub raw: Vec<RawRecord>,
    pub config: ExperimentConfig,
}

/// Test-set mean NMSE after each of `depth` layers / iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerwiseScores {
    pub unfolded: Vec<f64>,
    pub biht: Vec<f64>,
}

/// Scores a trained model against BIHT with the true matrix. The model sees
/// only the blind view; the true matrix goes to the baseline alone.
pub fn evaluate_layerwise<T: Real>(
    model: &TrainedModel<T>,
    test: &BlindView<'_, T>,
    true_phi: &SensingMatrix<T>,
    biht: &BihtSettings,
) -> Result<LayerwiseScores> {
    let depth = model.params.depth();
    let n = model.params.signal_len();
    let unfolded = mean_per_layer(test, depth, |y, _| model.decode(y, &DenseVector::zeros(n)))?;
    let cfg = biht.config::<T>(n, model.params.sparsity, depth);
    let biht = mean_per_layer(test, depth, |y, threshold| {
        Ok(biht_iterate(true_phi.as_matrix(), y, threshold, &cfg)?.trajectory.split_off(1))
    })?;
    Ok(LayerwiseScores { unfolded, biht })
}

fn mean_per_layer<T: Real>(
    test: &BlindView<'_, T>,
    depth: usize,
    decode: impl Fn(&crate::sensing::OneBitMeasurements, &DenseVector<T>) -> Result<Vec<DenseVector<T>>>,
) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(Error::InvalidConfig("evaluation set is empty".into()));
    }
    let mut sums = vec![0.0; depth];
    for pair in test.pairs {
        let outputs = decode(&pair.measurements, test.threshold)?;
        for (sum, out) in sums.iter_mut().zip(&outputs) {
            *sum += nmse(out, pair.signal.values())?;
        }
    }
    Ok(sums.into_iter().map(|s| s / test.len() as f64).collect())
}

/// Generates, trains (both stages) and evaluates one realization at the
/// given sparsity.
pub fn run_realization(cfg: &ExperimentConfig, sparsity: usize, realization: u64) -> Result<LayerwiseScores> {
    let data = gen_dataset::<f64>(&cfg.dataset_config(sparsity, realization))?;
    let (train, test) = data.split(cfg.train_samples)?;
    let train_seed = cfg.seed.wrapping_add(realization).wrapping_add(TRAINING_SEED_OFFSET);
    let stage1_cfg = TrainingConfig { seed: train_seed, sparsity: Some(sparsity), ..cfg.stage1.clone() };
    let stage1 = train_stage1(&train, &stage1_cfg)?;
    let stage2_cfg = TrainingConfig { seed: train_seed.wrapping_add(1), sparsity: Some(sparsity), ..cfg.stage2.clone() };
    let stage2 = train_stage2(&train, &stage1.params, &stage2_cfg)?;
    evaluate_layerwise(&stage2, &test, data.true_phi(), &cfg.biht)
}

fn run_all(cfg: &ExperimentConfig, sparsity: usize) -> Result<Vec<LayerwiseScores>> {
    (0..cfg.realizations as u64)
        .into_par_iter()
        .map(|r| run_realization(cfg, sparsity, r))
        .collect()
}

/// Axis-point means in realization order, so they can be recomputed exactly
/// from the raw table.
pub fn means_from_raw(raw: &[RawRecord], axis: &[usize], method: &str, realizations: usize) -> Vec<f64> {
    axis.iter()
        .map(|&a| {
            raw.iter()
                .filter(|r| r.axis == a && r.method == method)
                .map(|r| r.nmse)
                .sum::<f64>()
                / realizations as f64
        })
        .collect()
}

fn assemble(axis_label: &str, axis: Vec<usize>, raw: Vec<RawRecord>, cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    if raw.iter().any(|r| !r.nmse.is_finite() || r.nmse < 0.0) {
        return Err(Error::NonFinite { context: "NMSE table".into() });
    }
    let series = [UNFOLDED, BIHT]
        .iter()
        .map(|&m| MethodSeries { method: m.to_string(), mean_nmse: means_from_raw(&raw, &axis, m, cfg.realizations) })
        .collect();
    Ok(ExperimentResult {
        axis_label: axis_label.to_string(),
        axis,
        series,
        realizations: cfg.realizations,
        raw,
        config: cfg.clone(),
    })
}

/// Mean NMSE after each layer (network) and iteration (BIHT), `1..=L'`.
pub fn layerwise_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let runs = run_all(cfg, cfg.gen.sparsity)?;
    let depth = cfg.eval_depth();
    let axis: Vec<usize> = (1..=depth).collect();
    let mut raw = Vec::new();
    for (method, pick) in [(UNFOLDED, 0), (BIHT, 1)] {
        for (layer, &a) in axis.iter().enumerate() {
            for (r, scores) in runs.iter().enumerate() {
                let v = if pick == 0 { scores.unfolded[layer] } else { scores.biht[layer] };
                raw.push(RawRecord { axis: a, method: method.to_string(), realization: r, nmse: v });
            }
        }
    }
    assemble("layer", axis, raw, cfg)
}

/// Final-layer mean NMSE for each sparsity level in `sparsities`.
pub fn sparsity_sweep(cfg: &ExperimentConfig, sparsities: &[usize]) -> Result<ExperimentResult> {
    cfg.validate()?;
    if sparsities.is_empty() {
        return Err(Error::InvalidConfig("sparsity sweep needs at least one level".into()));
    }
    if let Some(&k) = sparsities.iter().find(|&&k| k == 0 || k > cfg.gen.n) {
        return Err(Error::InvalidSparsity { sparsity: k, len: cfg.gen.n });
    }
    let mut finals = Vec::with_capacity(sparsities.len());
    for &k in sparsities {
        finals.push(run_all(cfg, k)?);
    }
    let mut raw = Vec::new();
    for (method, pick) in [(UNFOLDED, 0), (BIHT, 1)] {
        for (&k, runs) in sparsities.iter().zip(&finals) {
            for (r, scores) in runs.iter().enumerate() {
                let series = if pick == 0 { &scores.unfolded } else { &scores.biht };
                raw.push(RawRecord { axis: k, method: method.to_string(), realization: r, nmse: *series.last().unwrap() });
            }
        }
    }
    assemble("sparsity", sparsities.to_vec(), raw, cfg)
}

impl ExperimentResult {
    pub fn series(&self, method: &str) -> Option<&[f64]> {
        self.series.iter().find(|s| s.method == method).map(|s| s.mean_nmse.as_slice())
    }

    /// `axis,method,mean_nmse,realizations`.
    pub fn means_csv(&self) -> String {
        let mut out = String::from("axis,method,mean_nmse,realizations\n");
        for s in &self.series {
            for (a, v) in self.axis.iter().zip(&s.mean_nmse) {
                let _ = writeln!(out, "{a},{},{v},{}", s.method, self.realizations);
            }
        }
        out
    }

    /// `axis,method,realization,nmse`.
    pub fn raw_csv(&self) -> String {
        let mut out = String::from("axis,method,realization,nmse\n");
        for r in &self.raw {
            let _ = writeln!(out, "{},{},{},{}", r.axis, r.method, r.realization, r.nmse);
        }
        out
    }

    /// Line chart with one polyline per method on linear axes.
    pub fn svg(&self, title: &str) -> String {
        render_svg(title, &self.axis_label, &self.axis, &self.series)
    }
}

fn render_svg(title: &str, x_label: &str, axis: &[usize], series: &[MethodSeries]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 150.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 60.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

    let x_min = axis.iter().copied().min().unwrap_or(0) as f64;
    let x_max = axis.iter().copied().max().unwrap_or(1) as f64;
    let x_span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let y_top = series
        .iter()
        .flat_map(|s| s.mean_nmse.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-6)
        * 1.1;
    let px = |x: f64| LEFT + (x - x_min) / x_span * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - y / y_top * (H - TOP - BOTTOM);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(svg, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for &a in axis {
        let x = px(a as f64);
        let _ = writeln!(svg, r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{a}</text>"#, y0 + 18.0);
    }
    for i in 0..=5 {
        let v = y_top * f64::from(i) / 5.0;
        let y = py(v);
        let _ = writeln!(svg, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.3}</text>"#, x0 - 8.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 18.0, escape(x_label));
    let _ = writeln!(svg, r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">NMSE</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0);
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> =
            axis.iter().zip(&s.mean_nmse).map(|(&a, &v)| format!("{:.2},{:.2}", px(a as f64), py(v))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, points.join(" "));
        let ly = TOP + 20.0 + 20.0 * i as f64;
        let _ = writeln!(svg, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, x1 + 15.0, x1 + 40.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#, x1 + 46.0, ly + 4.0, escape(&s.method));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
