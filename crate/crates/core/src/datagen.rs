//! Synthetic one-bit data: sparse Gaussian signals, Gaussian sensing
//! matrices, correlated or white Gaussian noise, and seeded input–output
//! ensembles with an on-disk format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{check_len, cholesky_lower, l2_normalize, DenseMatrix, DenseVector, Real, SeededRng};
use crate::sensing::{quantize_one_bit, OneBitMeasurements, SparseSignal};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.toml";
pub const SIGNALS_FILE: &str = "signals.csv";
pub const BITS_FILE: &str = "bits.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    Iid {
        variance: f64,
    },
    Full {
        /// Row-major m × m covariance.
        covariance: Vec<f64>,
    },
}

impl NoiseModel {
    pub fn validate(&self, m: usize) -> Result<()> {
        match self {
            NoiseModel::None => Ok(()),
            NoiseModel::Iid { variance } => {
                if variance.is_finite() && *variance >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!("noise variance must be >= 0, got {variance}")))
                }
            }
            NoiseModel::Full { covariance } => {
                check_len("noise covariance entries", m * m, covariance.len())?;
                cholesky_lower(&self.covariance_matrix(m)?).map(|_| ())
            }
        }
    }

    fn covariance_matrix(&self, m: usize) -> Result<DenseMatrix<f64>> {
        match self {
            NoiseModel::Full { covariance } => DenseMatrix::new(m, m, covariance.clone()),
            _ => Ok(DenseMatrix::zeros(m, m)),
        }
    }
}

/// Noise sampler with the covariance factor computed once.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    len: usize,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Zero,
    Scaled(f64),
    Factor(DenseMatrix<f64>),
}

impl NoiseSampler {
    pub fn new(noise: &NoiseModel, m: usize) -> Result<Self> {
        let kind = match noise {
            NoiseModel::None => SamplerKind::Zero,
            NoiseModel::Iid { variance } => {
                noise.validate(m)?;
                SamplerKind::Scaled(variance.sqrt())
            }
            NoiseModel::Full { .. } => {
                SamplerKind::Factor(cholesky_lower(&noise.covariance_matrix(m)?)?)
            }
        };
        Ok(Self { len: m, kind })
    }

    pub fn sample<T: Real>(&self, rng: &mut SeededRng) -> DenseVector<T> {
        match &self.kind {
            SamplerKind::Zero => DenseVector::zeros(self.len),
            SamplerKind::Scaled(sigma) => (0..self.len).map(|_| T::lit(sigma * rng.standard_normal())).collect(),
            SamplerKind::Factor(l) => {
                let z: Vec<f64> = (0..self.len).map(|_| rng.standard_normal()).collect();
                (0..self.len)
                    .map(|i| T::lit(l.row(i)[..=i].iter().zip(&z).map(|(a, b)| a * b).sum()))
                    .collect()
            }
        }
    }
}

/// Draws one noise vector. Prefer [`NoiseSampler`] when drawing many.
pub fn gen_noise<T: Real>(noise: &NoiseModel, m: usize, rng: &mut SeededRng) -> Result<DenseVector<T>> {
    Ok(NoiseSampler::new(noise, m)?.sample(rng))
}

/// K-sparse signal: uniform support, standard normal nonzeros, optionally
/// scaled to unit norm.
pub fn gen_sparse_signal<T: Real>(
    n: usize,
    sparsity: usize,
    normalize: bool,
    rng: &mut SeededRng,
) -> Result<SparseSignal<T>> {
    if sparsity == 0 || sparsity > n {
        return Err(Error::InvalidSparsity { sparsity, len: n });
    }
    let mut values = DenseVector::zeros(n);
    for i in rng.sample_without_replacement(n, sparsity) {
        values[i] = T::lit(rng.standard_normal());
    }
    if normalize {
        values = l2_normalize(&values);
    }
    SparseSignal::new(values, sparsity)
}

pub fn gen_sensing_matrix<T: Real>(m: usize, n: usize, rng: &mut SeededRng) -> DenseMatrix<T> {
    DenseMatrix::from_fn(m, n, |_, _| T::lit(rng.standard_normal()))
}

/// The true sensing matrix of an acquisition system. Kept distinct from the
/// learned surrogate so that blind decoding paths cannot accept it.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix<T>(DenseMatrix<T>);

impl<T: Real> SensingMatrix<T> {
    pub fn new(matrix: DenseMatrix<T>) -> Self {
        Self(matrix)
    }

    pub fn as_matrix(&self) -> &DenseMatrix<T> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub n: usize,
    pub m: usize,
    pub sparsity: usize,
    pub samples: usize,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default = "default_true")]
    pub normalize_signals: bool,
    /// Quantization threshold τ; empty means the zero vector.
    #[serde(default)]
    pub threshold: Vec<f64>,
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n: 128,
            m: 512,
            sparsity: 5,
            samples: 1000,
            noise: NoiseModel::Iid { variance: 1.0 },
            normalize_signals: true,
            threshold: Vec::new(),
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("n must be >= 1".to_string());
        }
        if self.m == 0 {
            problems.push("m must be >= 1".to_string());
        }
        if self.sparsity == 0 || self.sparsity > self.n {
            problems.push(format!("sparsity must be in 1..=n, got {}", self.sparsity));
        }
        if self.samples == 0 {
            problems.push("samples must be >= 1".to_string());
        }
        if !self.threshold.is_empty() && self.threshold.len() != self.m {
            problems.push(format!("threshold has {} entries, expected {}", self.threshold.len(), self.m));
        }
        if self.threshold.iter().any(|t| !t.is_finite()) {
            problems.push("threshold entries must be finite".to_string());
        }
        if self.m > 0 {
            if let Err(e) = self.noise.validate(self.m) {
                problems.push(e.to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }

    pub fn threshold_vector<T: Real>(&self) -> DenseVector<T> {
        if self.threshold.is_empty() {
            DenseVector::zeros(self.m)
        } else {
            DenseVector::from_f64_slice(&self.threshold)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair<T> {
    pub signal: SparseSignal<T>,
    pub measurements: OneBitMeasurements,
}

/// An input–output ensemble plus the acquisition system that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pairs: Vec<SamplePair<T>>,
    true_phi: SensingMatrix<T>,
    threshold: DenseVector<T>,
    config: GenConfig,
}

/// What a blind decoder may see of a dataset: pairs and the threshold, never
/// the true sensing matrix.
#[derive(Debug, Clone, Copy)]
pub struct BlindView<'a, T> {
    pub pairs: &'a [SamplePair<T>],
    pub threshold: &'a DenseVector<T>,
}

impl<T: Real> BlindView<'_, T> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn signal_len(&self) -> usize {
        self.pairs.first().map_or(0, |p| p.signal.len())
    }

    pub fn measurements_len(&self) -> usize {
        self.threshold.len()
    }
}

/// Draws one true Φ, then `samples` independent (signal, noise) pairs.
pub fn gen_dataset<T: Real>(cfg: &GenConfig) -> Result<Dataset<T>> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let phi = gen_sensing_matrix::<T>(cfg.m, cfg.n, &mut rng);
    let threshold = cfg.threshold_vector::<T>();
    let noise = NoiseSampler::new(&cfg.noise, cfg.m)?;
    let with_noise = !matches!(cfg.noise, NoiseModel::None);
    let mut pairs = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let signal = gen_sparse_signal::<T>(cfg.n, cfg.sparsity, cfg.normalize_signals, &mut rng)?;
        let n_draw = noise.sample::<T>(&mut rng);
        let measurements =
            quantize_one_bit(&phi, signal.values(), &threshold, with_noise.then_some(&n_draw))?;
        pairs.push(SamplePair { signal, measurements });
    }
    Ok(Dataset { pairs, true_phi: SensingMatrix::new(phi), threshold, config: cfg.clone() })
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    format_version: u32,
    config: GenConfig,
}

impl<T: Real> Dataset<T> {
    pub fn pairs(&self) -> &[SamplePair<T>] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn true_phi(&self) -> &SensingMatrix<T> {
        &self.true_phi
    }

    pub fn threshold(&self) -> &DenseVector<T> {
        &self.threshold
    }

    pub fn config(&self) -> &GenConfig {
        &self.config
    }

    pub fn blind_view(&self) -> BlindView<'_, T> {
        BlindView { pairs: &self.pairs, threshold: &self.threshold }
    }

    /// Splits into blind views over the first `train` pairs and the rest.
    pub fn split(&self, train: usize) -> Result<(BlindView<'_, T>, BlindView<'_, T>)> {
        if train == 0 || train >= self.pairs.len() {
            return Err(Error::InvalidConfig(format!(
                "train split {train} must leave both parts non-empty (dataset has {})",
                self.pairs.len()
            )));
        }
        let (a, b) = self.pairs.split_at(train);
        Ok((BlindView { pairs: a, threshold: &self.threshold }, BlindView { pairs: b, threshold: &self.threshold }))
    }

    fn meta_text(&self) -> Result<String> {
        toml::to_string(&MetaFile { format_version: DATASET_FORMAT_VERSION, config: self.config.clone() })
            .map_err(|e| Error::format(META_FILE, e))
    }

    fn signals_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for pair in &self.pairs {
            w.write_record(pair.signal.values().iter().map(|v| v.as_f64().to_string()))
                .map_err(|e| Error::format(SIGNALS_FILE, e))?;
        }
        w.into_inner().map_err(|e| Error::format(SIGNALS_FILE, e))
    }

    fn bits_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for pair in &self.pairs {
            w.write_record(pair.measurements.bits().iter().map(|b| b.to_string()))
                .map_err(|e| Error::format(BITS_FILE, e))?;
        }
        w.into_inner().map_err(|e| Error::format(BITS_FILE, e))
    }

    /// SHA-256 over the serialized meta, signals, and bits files, in that order.
    pub fn digest(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        hasher.update(self.meta_text()?.as_bytes());
        hasher.update(self.signals_csv()?);
        hasher.update(self.bits_csv()?);
        Ok(hex::encode(hasher.finalize()))
    }

    /// Writes `meta.toml`, `signals.csv` and `bits.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };
        write(META_FILE, self.meta_text()?.as_bytes())?;
        write(SIGNALS_FILE, &self.signals_csv()?)?;
        write(BITS_FILE, &self.bits_csv()?)
    }

    /// Reads a dataset directory. The true sensing matrix is not stored on
    /// disk; it is regenerated from the recorded seed.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: MetaFile = toml::from_str(&text).map_err(|e| Error::format(&meta_path, e))?;
        if meta.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::format(&meta_path, format!("unsupported format_version {}", meta.format_version)));
        }
        let cfg = meta.config;
        cfg.validate()?;

        let signals_path = dir.join(SIGNALS_FILE);
        let signals: Vec<Vec<f64>> = read_table(&signals_path, cfg.n, |s| s.parse::<f64>().ok())?;
        let bits_path = dir.join(BITS_FILE);
        let bits: Vec<Vec<i8>> = read_table(&bits_path, cfg.m, |s| s.parse::<i8>().ok())?;
        if signals.len() != cfg.samples || bits.len() != cfg.samples {
            return Err(Error::format(
                dir,
                format!("expected {} rows, found {} signals and {} bit rows", cfg.samples, signals.len(), bits.len()),
            ));
        }
        let pairs = signals
            .into_iter()
            .zip(bits)
            .map(|(x, y)| {
                Ok(SamplePair {
                    signal: SparseSignal::new(DenseVector::try_from_vec(x.into_iter().map(T::lit).collect())?, cfg.sparsity)?,
                    measurements: OneBitMeasurements::from_bits(y)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = SeededRng::new(cfg.seed);
        let phi = gen_sensing_matrix::<T>(cfg.m, cfg.n, &mut rng);
        Ok(Self { pairs, true_phi: SensingMatrix::new(phi), threshold: cfg.threshold_vector(), config: cfg })
    }
}

fn read_table<V>(path: &Path, width: usize, parse: impl Fn(&str) -> Option<V>) -> Result<Vec<Vec<V>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::format(path, e))?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e))?;
        if record.len() != width {
            return Err(Error::format(path, format!("row {line} has {} columns, expected {width}", record.len())));
        }
        let row = record
            .iter()
            .map(|field| parse(field.trim()).ok_or_else(|| Error::format(path, format!("row {line}: bad value {field:?}"))))
            .collect::<Result<Vec<V>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
