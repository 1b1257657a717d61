//! One-bit acquisition model and the classical BIHT recovery path.
//!
//! Everything here assumes the sensing matrix is known. The blind decoder in
//! [`crate::unfolded`] reuses the same arithmetic with a learned surrogate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_len, l2_normalize, top_k_indices, DenseMatrix, DenseVector, Real};

/// `+1` for `u ≥ 0`, `-1` otherwise. Zero maps to `+1`.
#[inline]
pub fn sign<T: Real>(u: T) -> T {
    if u >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// A length-`n` signal with at most `sparsity_bound` nonzero entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSignal<T> {
    values: DenseVector<T>,
    sparsity_bound: usize,
}

impl<T: Real> SparseSignal<T> {
    pub fn new(values: DenseVector<T>, sparsity_bound: usize) -> Result<Self> {
        if values.is_empty() || sparsity_bound == 0 {
            return Err(Error::InvalidSparsity { sparsity: sparsity_bound, len: values.len() });
        }
        let nnz = values.count_nonzero();
        if nnz > sparsity_bound {
            return Err(Error::InvalidSparsity { sparsity: nnz, len: values.len() });
        }
        Ok(Self { values, sparsity_bound })
    }

    pub fn values(&self) -> &DenseVector<T> {
        &self.values
    }

    pub fn sparsity_bound(&self) -> usize {
        self.sparsity_bound
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Sign measurements; every entry is exactly `+1` or `-1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OneBitMeasurements {
    bits: Vec<i8>,
}

impl OneBitMeasurements {
    pub fn from_bits(bits: Vec<i8>) -> Result<Self> {
        if let Some(index) = bits.iter().position(|&b| b != 1 && b != -1) {
            return Err(Error::InvalidMeasurement { index, value: f64::from(bits[index]) });
        }
        Ok(Self { bits })
    }

    /// Quantizes arbitrary reals with the `sign` convention.
    pub fn from_signs<T: Real>(values: &[T]) -> Self {
        Self { bits: values.iter().map(|&u| if u >= T::zero() { 1 } else { -1 }).collect() }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    #[inline]
    pub fn value<T: Real>(&self, index: usize) -> T {
        if self.bits[index] > 0 {
            T::one()
        } else {
            -T::one()
        }
    }

    pub fn to_vector<T: Real>(&self) -> DenseVector<T> {
        (0..self.bits.len()).map(|j| self.value(j)).collect()
    }

    /// Count of positions where two measurement vectors disagree.
    pub fn hamming_distance(&self, other: &Self) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }
}

/// `Φx − τ`.
pub fn pre_quantization<T: Real>(
    phi: &DenseMatrix<T>,
    x: &DenseVector<T>,
    tau: &DenseVector<T>,
) -> Result<DenseVector<T>> {
    check_len("threshold length", phi.rows(), tau.len())?;
    let mut u = phi.mul_vec(x)?;
    for (uj, &tj) in u.as_mut_slice().iter_mut().zip(tau.iter()) {
        *uj -= tj;
    }
    Ok(u)
}

/// `y = sign(Φx + noise − τ)`; a missing noise vector means noise-free.
pub fn quantize_one_bit<T: Real>(
    phi: &DenseMatrix<T>,
    x: &DenseVector<T>,
    tau: &DenseVector<T>,
    noise: Option<&DenseVector<T>>,
) -> Result<OneBitMeasurements> {
    let mut u = phi.mul_vec(x)?;
    check_len("threshold length", phi.rows(), tau.len())?;
    if let Some(noise) = noise {
        check_len("noise length", phi.rows(), noise.len())?;
        for (uj, &nj) in u.as_mut_slice().iter_mut().zip(noise.iter()) {
            *uj += nj;
        }
    }
    for (uj, &tj) in u.as_mut_slice().iter_mut().zip(tau.iter()) {
        *uj -= tj;
    }
    Ok(OneBitMeasurements::from_signs(u.as_slice()))
}

/// `Σ_j max(−y_j (Φx − τ)_j, 0)`: the ℓ1 size of the sign violations.
pub fn consistency_objective<T: Real>(
    phi: &DenseMatrix<T>,
    x: &DenseVector<T>,
    tau: &DenseVector<T>,
    y: &OneBitMeasurements,
) -> Result<T> {
    check_len("measurement length", phi.rows(), y.len())?;
    let u = pre_quantization(phi, x, tau)?;
    Ok(u.iter()
        .enumerate()
        .map(|(j, &uj)| (-(y.value::<T>(j) * uj)).max(T::zero()))
        .sum())
}

/// Keeps the `k` largest-magnitude entries of `v` and zeroes the rest.
pub fn hard_threshold<T: Real>(v: &DenseVector<T>, k: usize) -> DenseVector<T> {
    let mut out = DenseVector::zeros(v.len());
    for i in top_k_indices(v, k) {
        out[i] = v[i];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BihtConfig<T> {
    pub step_size: T,
    pub sparsity: usize,
    pub iterations: usize,
    pub initial_point: DenseVector<T>,
    pub normalize_each_iteration: bool,
}

impl<T: Real> BihtConfig<T> {
    /// Classical BIHT from the origin: unit step, no per-iteration projection.
    pub fn new(signal_len: usize, sparsity: usize, iterations: usize) -> Self {
        Self {
            step_size: T::one(),
            sparsity,
            iterations,
            initial_point: DenseVector::zeros(signal_len),
            normalize_each_iteration: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > T::zero()) || !self.step_size.is_finite() {
            return Err(Error::InvalidConfig(format!("BIHT step size must be positive, got {}", self.step_size)));
        }
        if !self.initial_point.is_finite() {
            return Err(Error::NonFinite { context: "BIHT initial point".into() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BihtRun<T> {
    pub estimate: DenseVector<T>,
    /// `iterations + 1` entries; the first is the initial point.
    pub trajectory: Vec<DenseVector<T>>,
}

/// Runs `x ← H_k(x + α Φᵀ(y − sign(Φx − τ)))` for the configured number of
/// iterations, optionally projecting onto the unit sphere after each step.
pub fn biht_iterate<T: Real>(
    phi: &DenseMatrix<T>,
    y: &OneBitMeasurements,
    tau: &DenseVector<T>,
    cfg: &BihtConfig<T>,
) -> Result<BihtRun<T>> {
    cfg.validate()?;
    check_len("measurement length", phi.rows(), y.len())?;
    check_len("threshold length", phi.rows(), tau.len())?;
    check_len("initial point length", phi.cols(), cfg.initial_point.len())?;

    let mut trajectory = Vec::with_capacity(cfg.iterations + 1);
    let mut x = cfg.initial_point.clone();
    trajectory.push(x.clone());
    for _ in 0..cfg.iterations {
        let u = pre_quantization(phi, &x, tau)?;
        let residual: DenseVector<T> =
            u.iter().enumerate().map(|(j, &uj)| y.value::<T>(j) - sign(uj)).collect();
        let gradient = phi.mul_transpose_vec(&residual)?;
        let mut v = x;
        for (vc, &gc) in v.as_mut_slice().iter_mut().zip(gradient.iter()) {
            *vc += cfg.step_size * gc;
        }
        x = hard_threshold(&v, cfg.sparsity);
        if cfg.normalize_each_iteration {
            x = l2_normalize(&x);
        }
        trajectory.push(x.clone());
    }
    Ok(BihtRun { estimate: x, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> DenseVector<f64> {
        DenseVector::from_f64_slice(values)
    }

    fn random_matrix(rng: &mut SeededRng, m: usize, n: usize) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(m, n, |_, _| rng.standard_normal())
    }

    fn random_sparse(rng: &mut SeededRng, n: usize, k: usize) -> DenseVector<f64> {
        let mut x = DenseVector::zeros(n);
        for i in rng.sample_without_replacement(n, k) {
            x[i] = rng.standard_normal();
        }
        x
    }

    #[test]
    fn quantize_examples() {
        let eye = DenseMatrix::<f64>::identity(2);
        let zero = DenseVector::zeros(2);
        let y = quantize_one_bit(&eye, &v(&[0.5, -0.3]), &zero, None).unwrap();
        assert_eq!(y.bits(), &[1, -1]);
        let y = quantize_one_bit(&eye, &zero, &zero, None).unwrap();
        assert_eq!(y.bits(), &[1, 1]);
        let phi = DenseMatrix::<f64>::from_rows(&[&[1.0, 1.0], &[1.0, -1.0]]);
        let y = quantize_one_bit(&phi, &v(&[1.0, 2.0]), &zero, None).unwrap();
        assert_eq!(y.bits(), &[1, -1]);
    }

    #[test]
    fn quantize_applies_noise_and_threshold() {
        let eye = DenseMatrix::<f64>::identity(3);
        let x = v(&[0.5, 0.5, -0.5]);
        let tau = v(&[0.6, 0.0, 0.0]);
        let noise = v(&[0.0, -0.7, 0.5]);
        let y = quantize_one_bit(&eye, &x, &tau, Some(&noise)).unwrap();
        assert_eq!(y.bits(), &[-1, -1, 1]);
    }

    #[test]
    fn quantize_rejects_mismatched_dimensions() {
        let phi = DenseMatrix::<f64>::zeros(3, 2);
        assert!(matches!(
            quantize_one_bit(&phi, &v(&[1.0]), &v(&[0.0; 3]), None),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(quantize_one_bit(&phi, &v(&[1.0, 1.0]), &v(&[0.0; 2]), None).is_err());
        assert!(quantize_one_bit(&phi, &v(&[1.0, 1.0]), &v(&[0.0; 3]), Some(&v(&[0.0]))).is_err());
    }

    #[test]
    fn measurement_bits_are_validated() {
        assert!(OneBitMeasurements::from_bits(vec![1, -1, 1]).is_ok());
        assert!(matches!(
            OneBitMeasurements::from_bits(vec![1, 0]),
            Err(Error::InvalidMeasurement { index: 1, .. })
        ));
    }

    #[test]
    fn consistency_examples() {
        let eye = DenseMatrix::<f64>::identity(2);
        let zero = DenseVector::zeros(2);
        let y = OneBitMeasurements::from_bits(vec![1, 1]).unwrap();
        let obj = consistency_objective(&eye, &v(&[2.0, -3.0]), &zero, &y).unwrap();
        assert_eq!(obj, 3.0);

        let mut rng = SeededRng::new(4);
        let phi = random_matrix(&mut rng, 16, 6);
        let x = random_sparse(&mut rng, 6, 2);
        let tau = DenseVector::from_vec((0..16).map(|_| 0.1 * rng.standard_normal()).collect());
        let y = quantize_one_bit(&phi, &x, &tau, None).unwrap();
        assert_eq!(consistency_objective(&phi, &x, &tau, &y).unwrap(), 0.0);
    }

    #[test]
    fn flipping_a_bit_adds_its_margin() {
        let mut rng = SeededRng::new(8);
        let phi = random_matrix(&mut rng, 12, 5);
        let x = random_sparse(&mut rng, 5, 2);
        let tau = DenseVector::zeros(12);
        let y = quantize_one_bit(&phi, &x, &tau, None).unwrap();
        let u = pre_quantization(&phi, &x, &tau).unwrap();
        for j in 0..12 {
            let mut bits = y.bits().to_vec();
            bits[j] = -bits[j];
            let flipped = OneBitMeasurements::from_bits(bits).unwrap();
            let obj = consistency_objective(&phi, &x, &tau, &flipped).unwrap();
            assert!((obj - u[j].abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn hard_threshold_examples() {
        let x = v(&[3.0, -5.0, 1.0, 0.0]);
        assert_eq!(hard_threshold(&x, 2), v(&[3.0, -5.0, 0.0, 0.0]));
        assert_eq!(hard_threshold(&x, 4), x);
        assert_eq!(hard_threshold(&x, 0), v(&[0.0; 4]));
    }

    #[test]
    fn sparse_signal_validation() {
        assert!(SparseSignal::new(v(&[1.0, 0.0, 2.0]), 2).is_ok());
        assert!(matches!(SparseSignal::new(v(&[1.0, 1.0, 2.0]), 2), Err(Error::InvalidSparsity { .. })));
        assert!(SparseSignal::new(v(&[1.0]), 0).is_err());
        assert!(SparseSignal::<f64>::new(DenseVector::zeros(0), 1).is_err());
    }

    #[test]
    fn biht_fixed_point_of_consistent_sparse_start() {
        let mut rng = SeededRng::new(21);
        let phi = random_matrix(&mut rng, 24, 8);
        let x0 = l2_normalize(&random_sparse(&mut rng, 8, 2));
        let tau = DenseVector::zeros(24);
        let y = quantize_one_bit(&phi, &x0, &tau, None).unwrap();
        let mut cfg = BihtConfig::new(8, 2, 6);
        cfg.initial_point = x0.clone();
        let run = biht_iterate(&phi, &y, &tau, &cfg).unwrap();
        assert!(run.trajectory.iter().all(|x| *x == x0));
    }

    #[test]
    fn biht_from_origin_with_all_positive_bits_stays_at_origin() {
        let mut rng = SeededRng::new(1);
        let phi = random_matrix(&mut rng, 10, 4);
        let y = OneBitMeasurements::from_bits(vec![1; 10]).unwrap();
        let cfg = BihtConfig::new(4, 2, 5);
        let run = biht_iterate(&phi, &y, &DenseVector::zeros(10), &cfg).unwrap();
        assert_eq!(run.trajectory.len(), 6);
        assert_eq!(run.estimate, DenseVector::zeros(4));
    }

    /// Independent transcription of one BIHT step using nested loops.
    fn oracle_biht(
        phi: &DenseMatrix<f64>,
        y: &[i8],
        x0: &[f64],
        alpha: f64,
        k: usize,
        steps: usize,
        normalize: bool,
    ) -> Vec<Vec<f64>> {
        let (m, n) = phi.shape();
        let mut out = vec![x0.to_vec()];
        let mut x = x0.to_vec();
        for _ in 0..steps {
            let mut v = x.clone();
            for c in 0..n {
                let mut acc = 0.0;
                for j in 0..m {
                    let mut u = 0.0;
                    for l in 0..n {
                        u += phi.get(j, l) * x[l];
                    }
                    let s = if u >= 0.0 { 1.0 } else { -1.0 };
                    acc += phi.get(j, c) * (f64::from(y[j]) - s);
                }
                v[c] += alpha * acc;
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| v[b].abs().partial_cmp(&v[a].abs()).unwrap().then(a.cmp(&b)));
            let mut next = vec![0.0; n];
            for &i in order.iter().take(k) {
                next[i] = v[i];
            }
            if normalize {
                let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
                if norm > 0.0 {
                    next.iter_mut().for_each(|a| *a /= norm);
                }
            }
            out.push(next.clone());
            x = next;
        }
        out
    }

    #[test]
    fn biht_matches_independent_transcription() {
        for (seed, normalize) in [(30u64, false), (31, true), (32, true)] {
            let mut rng = SeededRng::new(seed);
            let phi = random_matrix(&mut rng, 32, 8);
            let x = l2_normalize(&random_sparse(&mut rng, 8, 2));
            let noise = DenseVector::from_vec((0..32).map(|_| 0.5 * rng.standard_normal()).collect());
            let tau = DenseVector::zeros(32);
            let y = quantize_one_bit(&phi, &x, &tau, Some(&noise)).unwrap();
            let mut cfg = BihtConfig::new(8, 2, 5);
            cfg.step_size = 0.05;
            cfg.normalize_each_iteration = normalize;
            let run = biht_iterate(&phi, &y, &tau, &cfg).unwrap();
            let oracle = oracle_biht(&phi, y.bits(), &[0.0; 8], 0.05, 2, 5, normalize);
            assert_eq!(run.trajectory.len(), oracle.len());
            for (a, b) in run.trajectory.iter().zip(&oracle) {
                for (p, q) in a.iter().zip(b) {
                    assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()), "{p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn biht_rejects_bad_inputs() {
        let phi = DenseMatrix::<f64>::zeros(4, 3);
        let y = OneBitMeasurements::from_bits(vec![1; 4]).unwrap();
        let tau = DenseVector::zeros(4);
        let mut cfg = BihtConfig::new(3, 1, 2);
        cfg.step_size = 0.0;
        assert!(matches!(biht_iterate(&phi, &y, &tau, &cfg), Err(Error::InvalidConfig(_))));
        let cfg = BihtConfig::new(2, 1, 2);
        assert!(matches!(biht_iterate(&phi, &y, &tau, &cfg), Err(Error::DimensionMismatch { .. })));
        let short = OneBitMeasurements::from_bits(vec![1; 3]).unwrap();
        assert!(biht_iterate(&phi, &short, &tau, &BihtConfig::new(3, 1, 2)).is_err());
    }

    #[test]
    fn normalized_biht_stays_on_sphere() {
        let mut rng = SeededRng::new(77);
        let phi = random_matrix(&mut rng, 40, 10);
        let x = random_sparse(&mut rng, 10, 3);
        let tau = DenseVector::zeros(40);
        let noise = DenseVector::from_vec((0..40).map(|_| rng.standard_normal()).collect());
        let y = quantize_one_bit(&phi, &x, &tau, Some(&noise)).unwrap();
        let mut cfg = BihtConfig::new(10, 3, 8);
        cfg.normalize_each_iteration = true;
        cfg.step_size = 0.02;
        let run = biht_iterate(&phi, &y, &tau, &cfg).unwrap();
        for x in &run.trajectory[1..] {
            let n = x.norm();
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            assert!(x.count_nonzero() <= 3);
        }
    }

    proptest! {
        #[test]
        fn hard_threshold_idempotent_and_contractive(values in prop::collection::vec(-5.0f64..5.0, 1..20), k in 0usize..24) {
            let vec = DenseVector::from_vec(values);
            let once = hard_threshold(&vec, k);
            prop_assert_eq!(hard_threshold(&once, k), once.clone());
            prop_assert!(once.norm() <= vec.norm());
            prop_assert!(once.count_nonzero() <= k);
        }

        #[test]
        fn zero_threshold_measurements_are_scale_invariant(seed in 0u64..500, scale in 1e-3f64..1e3) {
            let mut rng = SeededRng::new(seed);
            let phi = random_matrix(&mut rng, 20, 6);
            let x = random_sparse(&mut rng, 6, 3);
            let tau = DenseVector::zeros(20);
            let a = quantize_one_bit(&phi, &x, &tau, None).unwrap();
            let b = quantize_one_bit(&phi, &x.scaled(scale), &tau, None).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn consistency_is_nonnegative(seed in 0u64..500) {
            let mut rng = SeededRng::new(seed);
            let phi = random_matrix(&mut rng, 15, 5);
            let x = random_sparse(&mut rng, 5, 2);
            let bits = (0..15).map(|_| if rng.uniform() < 0.5 { 1 } else { -1 }).collect();
            let y = OneBitMeasurements::from_bits(bits).unwrap();
            prop_assert!(consistency_objective(&phi, &x, &DenseVector::zeros(15), &y).unwrap() >= 0.0);
        }
    }
}
