//! Bounded orthonormal measurement systems and their seeded subsamples.
//!
//! An ensemble is an n x n row system {r_i} together with a probability
//! measure nu on the row indices, orthonormal in the sense
//! sum_i nu_i r_i* r_i = I. Drawing m rows i.i.d. from nu and scaling by
//! 1/sqrt(m) yields the sampling operator; an optional diagonal
//! preconditioner multiplies row i by w_i at apply time.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::frames::Dictionary;

/// PRNG recorded in every artifact that involves sampling.
pub const PRNG_NAME: &str = "chacha20";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleKind {
    /// sqrt(n) times the unitary DFT, natural row order 0..n-1.
    ScaledDft,
    /// sqrt(n) times the identity (time samples).
    ScaledStandardBasis,
    Custom,
}

#[derive(Debug, Clone)]
pub struct MeasurementEnsemble {
    n: usize,
    rows: DMatrix<Complex64>,
    measure: Vec<f64>,
    /// Uniform entry bound K when known (metadata, not enforced).
    bound: Option<f64>,
    kind: EnsembleKind,
}

#[derive(Debug, Clone, Copy)]
pub struct OrthonormalityReport {
    pub defect: f64,
    pub bound: f64,
    pub pass: bool,
}

fn check_measure(measure: &[f64]) -> Result<()> {
    if measure.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::invalid("measure entries must be finite and >= 0"));
    }
    let total: f64 = measure.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "measure must sum to 1 within 1e-12, got {total}"
        )));
    }
    Ok(())
}

pub fn uniform_measure(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

impl MeasurementEnsemble {
    pub fn build(kind: EnsembleKind, n: usize, measure: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("ensemble dimension must be >= 1"));
        }
        if measure.len() != n {
            return Err(Error::invalid(format!(
                "measure has length {}, expected {n}",
                measure.len()
            )));
        }
        check_measure(&measure)?;
        let rows = match kind {
            // sqrt(n) times the unitary DFT has unit-modulus entries
            EnsembleKind::ScaledDft => DMatrix::from_fn(n, n, |i, j| {
                let phase = 2.0 * std::f64::consts::PI * (i as f64) * (j as f64) / n as f64;
                Complex64::new(phase.cos(), phase.sin())
            }),
            EnsembleKind::ScaledStandardBasis => DMatrix::from_fn(n, n, |i, j| {
                Complex64::new(if i == j { (n as f64).sqrt() } else { 0.0 }, 0.0)
            }),
            EnsembleKind::Custom => {
                return Err(Error::invalid(
                    "use MeasurementEnsemble::custom for explicit row matrices",
                ))
            }
        };
        let bound = match kind {
            EnsembleKind::ScaledDft => Some(1.0),
            EnsembleKind::ScaledStandardBasis => Some((n as f64).sqrt()),
            EnsembleKind::Custom => None,
        };
        Ok(MeasurementEnsemble {
            n,
            rows,
            measure,
            bound,
            kind,
        })
    }

    pub fn scaled_dft(n: usize) -> Result<Self> {
        Self::build(EnsembleKind::ScaledDft, n, uniform_measure(n))
    }

    pub fn scaled_standard_basis(n: usize) -> Result<Self> {
        Self::build(EnsembleKind::ScaledStandardBasis, n, uniform_measure(n))
    }

    /// Explicit row system. Fails with the measured defect when the
    /// orthonormality check exceeds 1e-6.
    pub fn custom(rows: DMatrix<Complex64>, measure: Vec<f64>) -> Result<Self> {
        if rows.nrows() != rows.ncols() {
            return Err(Error::invalid("ensemble row matrix must be square"));
        }
        let n = rows.nrows();
        if measure.len() != n {
            return Err(Error::invalid(format!(
                "measure has length {}, expected {n}",
                measure.len()
            )));
        }
        check_measure(&measure)?;
        let ensemble = MeasurementEnsemble {
            n,
            rows,
            measure,
            bound: None,
            kind: EnsembleKind::Custom,
        };
        let report = ensemble.verify_orthonormal(1e-6);
        if !report.pass {
            return Err(Error::Validation {
                reason: "custom ensemble is not orthonormal for the given measure".into(),
                defect: report.defect,
            });
        }
        Ok(ensemble)
    }

    /// Preconditioned system with rows w_i b_i, w_i = ||kappa||_2 / kappa_i,
    /// sampled from nu(i) = kappa_i^2 / ||kappa||_2^2. Orthonormality is
    /// preserved because nu_i w_i^2 = 1. The stored bound is ||kappa||_2,
    /// the uniform weight of the preconditioned system.
    pub fn preconditioned(basis_rows: &DMatrix<Complex64>, kappa: &[f64]) -> Result<Self> {
        if basis_rows.nrows() != basis_rows.ncols() {
            return Err(Error::invalid("basis must be square"));
        }
        let n = basis_rows.nrows();
        if kappa.len() != n {
            return Err(Error::invalid("kappa length must match basis dimension"));
        }
        let (measure, weights) = measure_and_weights_from_kappa(kappa)?;
        let mut rows = basis_rows.clone();
        for i in 0..n {
            let w = Complex64::new(weights[i], 0.0);
            for j in 0..n {
                rows[(i, j)] *= w;
            }
        }
        let kappa_l2 = kappa.iter().map(|k| k * k).sum::<f64>().sqrt();
        Ok(MeasurementEnsemble {
            n,
            rows,
            measure,
            bound: Some(kappa_l2),
            kind: EnsembleKind::Custom,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &DMatrix<Complex64> {
        &self.rows
    }

    pub fn row(&self, i: usize) -> DVector<Complex64> {
        self.rows.row(i).transpose()
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    /// defect = max_{j,k} |sum_i nu_i conj(r_i(j)) r_i(k) - delta_{jk}|,
    /// bound = max entry modulus, pass = defect <= tol.
    pub fn verify_orthonormal(&self, tol: f64) -> OrthonormalityReport {
        let n = self.n;
        let mut defect = 0.0f64;
        // S = sum_i nu_i r_i* r_i computed as rows^* diag(nu) rows
        let mut weighted = self.rows.clone();
        for i in 0..n {
            let nu = Complex64::new(self.measure[i], 0.0);
            for j in 0..n {
                weighted[(i, j)] *= nu;
            }
        }
        let s = self.rows.ad_mul(&weighted);
        for j in 0..n {
            for k in 0..n {
                let target = if j == k { 1.0 } else { 0.0 };
                defect = defect.max((s[(j, k)] - Complex64::new(target, 0.0)).norm());
            }
        }
        let bound = self.rows.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        OrthonormalityReport {
            defect,
            bound,
            pass: defect <= tol,
        }
    }
}

/// Local coherence of an orthonormal basis (rows b_i) against a dictionary:
/// mu_loc_i = max_j |<b_i, d_j>|.
#[derive(Debug, Clone)]
pub struct CoherenceProfile {
    pub mu: f64,
    pub mu_loc: Vec<f64>,
    /// Optional dominating bound, kappa_i >= mu_loc_i.
    pub kappa: Option<Vec<f64>>,
}

impl CoherenceProfile {
    /// Attach a dominating bound vector; rejects any kappa_i < mu_loc_i.
    pub fn with_kappa(mut self, kappa: Vec<f64>) -> Result<Self> {
        if kappa.len() != self.mu_loc.len() {
            return Err(Error::invalid("kappa length must match the profile"));
        }
        for (i, (&k, &m)) in kappa.iter().zip(&self.mu_loc).enumerate() {
            if k < m {
                return Err(Error::invalid(format!(
                    "kappa[{i}] = {k} does not dominate local coherence {m}"
                )));
            }
        }
        self.kappa = Some(kappa);
        Ok(self)
    }
}

pub fn coherence_profile(basis: &DMatrix<Complex64>, dict: &Dictionary) -> Result<CoherenceProfile> {
    if basis.nrows() != basis.ncols() || basis.nrows() != dict.n() {
        return Err(Error::invalid(format!(
            "basis must be {0} x {0} to match the dictionary",
            dict.n()
        )));
    }
    // inner products <b_i, d_j> = conj(B) D, row-wise max modulus
    let prods = basis.conjugate() * dict.entries();
    let mu_loc: Vec<f64> = (0..basis.nrows())
        .map(|i| prods.row(i).iter().map(|z| z.norm()).fold(0.0f64, f64::max))
        .collect();
    let mu = mu_loc.iter().copied().fold(0.0f64, f64::max);
    Ok(CoherenceProfile {
        mu,
        mu_loc,
        kappa: None,
    })
}

/// nu(i) = kappa_i^2 / ||kappa||^2 and w_i = ||kappa|| / kappa_i.
pub fn measure_and_weights_from_kappa(kappa: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if kappa.is_empty() {
        return Err(Error::invalid("kappa must be nonempty"));
    }
    if kappa.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
        return Err(Error::invalid("kappa entries must be finite and > 0"));
    }
    let norm_sq: f64 = kappa.iter().map(|k| k * k).sum();
    let norm = norm_sq.sqrt();
    let mut measure: Vec<f64> = kappa.iter().map(|k| k * k / norm_sq).collect();
    // renormalize the rounding residue onto the largest entry so the sum is exact
    let total: f64 = measure.iter().sum();
    let imax = (0..measure.len())
        .max_by(|&a, &b| measure[a].total_cmp(&measure[b]))
        .unwrap();
    measure[imax] += 1.0 - total;
    let weights: Vec<f64> = kappa.iter().map(|k| norm / k).collect();
    Ok((measure, weights))
}

/// Unitary DFT with rows ordered by absolute signed frequency:
/// 0, +1, -1, +2, -2, ..., and the Nyquist row last for even n.
pub fn dft_rows_by_frequency(n: usize) -> DMatrix<Complex64> {
    let freqs = frequency_order(n);
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |i, j| {
        let phase = 2.0 * std::f64::consts::PI * (freqs[i] as f64) * (j as f64) / n as f64;
        Complex64::new(phase.cos() * scale, phase.sin() * scale)
    })
}

fn frequency_order(n: usize) -> Vec<i64> {
    let mut freqs = Vec::with_capacity(n);
    freqs.push(0i64);
    let mut f = 1i64;
    while freqs.len() < n {
        freqs.push(f);
        if freqs.len() < n && 2 * f != n as i64 {
            freqs.push(-f);
        }
        f += 1;
    }
    freqs
}

/// Fourier-Haar local coherence bound kappa_k = 3 sqrt(2 pi) / sqrt(k),
/// k being the 1-based row index in the by-frequency ordering (DC row k=1).
pub fn fourier_haar_kappa(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| 3.0 * (2.0 * std::f64::consts::PI).sqrt() / (k as f64).sqrt())
        .collect()
}

/// m ensemble rows drawn i.i.d. with replacement, scaled by 1/sqrt(m).
/// The assembled matrix is cached so applies are plain dense products.
#[derive(Debug, Clone)]
pub struct SampledOperator {
    ensemble: Arc<MeasurementEnsemble>,
    indices: Vec<usize>,
    m: usize,
    normalization: f64,
    precond: Option<Vec<f64>>,
    seed: Option<u64>,
    assembled: DMatrix<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureDirection {
    Forward,
    Adjoint,
}

impl SampledOperator {
    /// Inverse-CDF sampling from the ensemble measure with a ChaCha20 stream.
    /// Identical (seed, nu, m) yields identical index multisets.
    pub fn subsample(
        ensemble: &Arc<MeasurementEnsemble>,
        m: usize,
        seed: u64,
        precond: Option<Vec<f64>>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("sample count m must be >= 1"));
        }
        if let Some(w) = &precond {
            if w.len() != ensemble.n() {
                return Err(Error::invalid("preconditioner length must match ensemble dimension"));
            }
        }
        let cdf = cumulative(ensemble.measure());
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let indices: Vec<usize> = (0..m)
            .map(|_| {
                let u: f64 = rng.gen();
                draw_from_cdf(&cdf, u)
            })
            .collect();
        Ok(Self::assemble(ensemble, indices, precond, Some(seed)))
    }

    /// Deterministic full sampling: each row exactly once, m = n.
    pub fn full_sampling(ensemble: &Arc<MeasurementEnsemble>) -> Self {
        let n = ensemble.n();
        Self::assemble(ensemble, (0..n).collect(), None, None)
    }

    fn assemble(
        ensemble: &Arc<MeasurementEnsemble>,
        indices: Vec<usize>,
        precond: Option<Vec<f64>>,
        seed: Option<u64>,
    ) -> Self {
        let m = indices.len();
        let n = ensemble.n();
        let normalization = 1.0 / (m as f64).sqrt();
        let rows = ensemble.rows();
        let assembled = DMatrix::from_fn(m, n, |l, j| {
            let idx = indices[l];
            let w = precond.as_ref().map_or(1.0, |w| w[idx]);
            rows[(idx, j)] * Complex64::new(normalization * w, 0.0)
        });
        SampledOperator {
            ensemble: Arc::clone(ensemble),
            indices,
            m,
            normalization,
            precond,
            seed,
            assembled,
        }
    }

    pub fn ensemble(&self) -> &Arc<MeasurementEnsemble> {
        &self.ensemble
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.ensemble.n()
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn precond(&self) -> Option<&[f64]> {
        self.precond.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn apply(
        &self,
        v: &DVector<Complex64>,
        direction: MeasureDirection,
    ) -> Result<DVector<Complex64>> {
        match direction {
            MeasureDirection::Forward => {
                if v.len() != self.n() {
                    return Err(Error::invalid(format!(
                        "forward input must have length {}, got {}",
                        self.n(),
                        v.len()
                    )));
                }
                Ok(self.forward(v))
            }
            MeasureDirection::Adjoint => {
                if v.len() != self.m {
                    return Err(Error::invalid(format!(
                        "adjoint input must have length {}, got {}",
                        self.m,
                        v.len()
                    )));
                }
                Ok(self.adjoint(v))
            }
        }
    }

    /// (1/sqrt(m)) [ w_{i_l} (r_{i_l} . v) ]_l
    pub fn forward(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        &self.assembled * v
    }

    /// Exact conjugate transpose of `forward`.
    pub fn adjoint(&self, g: &DVector<Complex64>) -> DVector<Complex64> {
        self.assembled.ad_mul(g)
    }

    /// Dense m x n view of the sampled rows.
    pub fn dense_matrix(&self) -> DMatrix<Complex64> {
        self.assembled.clone()
    }
}

fn cumulative(measure: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    measure
        .iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

fn draw_from_cdf(cdf: &[f64], u: f64) -> usize {
    let pos = cdf.partition_point(|&c| c <= u);
    pos.min(cdf.len() - 1)
}
