//! JSON checkpoints for trained models. Floating-point values are written
//! in scientific notation with 17 significant digits, which round-trips
//! every `f64` exactly.

use std::fs;
use std::path::Path;

use serde::de::Deserializer;
use serde::ser::{Error as _, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::datagen::GenConfig;
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, DenseVector, Real};
use crate::training::{Stage, TrainedModel, TrainingConfig};
use crate::unfolded::UnfoldedParams;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Decimal17(f64);

impl Serialize for Decimal17 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("cannot store non-finite value {}", self.0)));
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(S::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Decimal17 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Decimal17)
    }
}

fn decimals<T: Real>(values: &[T]) -> Vec<Decimal17> {
    values.iter().map(|v| Decimal17(v.as_f64())).collect()
}

fn reals<T: Real>(values: &[Decimal17]) -> Vec<T> {
    values.iter().map(|d| T::lit(d.0)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format_version: u32,
    stage: Stage,
    m: usize,
    n: usize,
    #[serde(rename = "L")]
    depth: usize,
    #[serde(rename = "L_prime")]
    reduced_depth: usize,
    k: usize,
    tau: Vec<Decimal17>,
    normalize_per_layer: bool,
    /// `null` stands for an unclipped estimator.
    ste_clip: Option<Decimal17>,
    /// Row-major, `m` rows of `n` entries.
    phi: Vec<Vec<Decimal17>>,
    step_sizes: Vec<Decimal17>,
    training_config: TrainingConfig,
    dataset_meta: Option<GenConfig>,
    loss_history: Vec<Decimal17>,
}

impl<T: Real> TrainedModel<T> {
    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        let (m, n) = p.phi.shape();
        let clip = p.ste_clip.as_f64();
        let file = CheckpointFile {
            format_version: CHECKPOINT_FORMAT_VERSION,
            stage: self.stage,
            m,
            n,
            depth: self.depth,
            reduced_depth: p.depth(),
            k: p.sparsity,
            tau: decimals(p.threshold.as_slice()),
            normalize_per_layer: p.normalize_per_layer,
            ste_clip: clip.is_finite().then_some(Decimal17(clip)),
            phi: (0..m).map(|i| decimals(p.phi.row(i))).collect(),
            step_sizes: decimals(&p.step_sizes),
            training_config: self.config.clone(),
            dataset_meta: self.dataset_meta.clone(),
            loss_history: self.loss_history.iter().map(|&l| Decimal17(l)).collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::format("checkpoint", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(|e| Error::format("checkpoint", e))?;
        if file.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::format("checkpoint", format!("unsupported format_version {}", file.format_version)));
        }
        if file.phi.len() != file.m || file.phi.iter().any(|r| r.len() != file.n) {
            return Err(Error::format("checkpoint", format!("phi is not {} x {}", file.m, file.n)));
        }
        if file.step_sizes.len() != file.reduced_depth {
            return Err(Error::format(
                "checkpoint",
                format!("{} step sizes for L_prime = {}", file.step_sizes.len(), file.reduced_depth),
            ));
        }
        let flat: Vec<Decimal17> = file.phi.into_iter().flatten().collect();
        let params = UnfoldedParams::new(
            DenseMatrix::new(file.m, file.n, reals(&flat))?,
            reals(&file.step_sizes),
            file.k,
            DenseVector::from_vec(reals(&file.tau)),
            file.normalize_per_layer,
            T::lit(file.ste_clip.map_or(f64::INFINITY, |c| c.0)),
        )?;
        Ok(Self {
            params,
            stage: file.stage,
            depth: file.depth,
            loss_history: file.loss_history.iter().map(|d| d.0).collect(),
            config: file.training_config,
            dataset_meta: file.dataset_meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format { detail, .. } => Error::format(path, detail),
            other => other,
        })
    }
}
