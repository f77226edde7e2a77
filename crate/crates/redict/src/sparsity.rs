//! Weighted norms and sparsity, best s-term approximation, unrecoverable
//! energy, and localization-factor estimation.
//!
//! The localization factor of a dictionary D at sparsity s is
//!
//!   eta = sup { ||D* D z||_{w,1} / sqrt(s) : ||D z||_2 = 1, ||z||_{w,0} <= s }.
//!
//! Per admissible support Lambda the supremum has the closed dual form
//! max_{|sigma_j|=1} sqrt(sigma* Q sigma) with
//! Q = diag(w) (D* D_Lambda) G^+ (D* D_Lambda)* diag(w), G = D_Lambda* D_Lambda,
//! which is exact over sign vectors for real dictionaries and is maximized
//! over the phase torus by a monotone power ascent for complex ones (a
//! lower bound; see `LocalizationEstimate::exhaustive`).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::frames::{Dictionary, DictionaryKind};
use crate::linalg::PsdPseudoInverse;
use crate::supports::{for_each_support, random_support};

/// Per-column weights, all >= 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::invalid("weights must be nonempty"));
        }
        if omega.iter().any(|&w| !(w >= 1.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and >= 1"));
        }
        Ok(Weights(omega))
    }

    pub fn uniform(n: usize) -> Self {
        Weights(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_uniform(&self) -> bool {
        self.0.iter().all(|&w| (w - self.0[0]).abs() <= 1e-15)
    }

    /// omega(Lambda) = sum of squared weights over the support.
    pub fn set_size(&self, indices: &[usize]) -> f64 {
        indices.iter().map(|&j| self.0[j] * self.0[j]).sum()
    }
}

/// A sorted support with its weighted size.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    pub indices: Vec<usize>,
    pub weighted_size: f64,
}

impl SupportSet {
    pub fn new(mut indices: Vec<usize>, omega: &Weights) -> Self {
        indices.sort_unstable();
        indices.dedup();
        let weighted_size = omega.set_size(&indices);
        SupportSet {
            indices,
            weighted_size,
        }
    }
}

/// ||x||_{w,p} for p in (0,2]; for p = 0 the weighted sparsity
/// sum_{x_j != 0} w_j^2 with an exact zero test on stored values.
pub fn weighted_norm(x: &DVector<Complex64>, omega: &Weights, p: f64) -> Result<f64> {
    if x.len() != omega.len() {
        return Err(Error::invalid(format!(
            "vector length {} does not match weights length {}",
            x.len(),
            omega.len()
        )));
    }
    if p == 0.0 {
        return Ok(x
            .iter()
            .enumerate()
            .filter(|(_, z)| z.re != 0.0 || z.im != 0.0)
            .map(|(j, _)| omega.get(j).powi(2))
            .sum());
    }
    if !(p > 0.0 && p <= 2.0) {
        return Err(Error::invalid(format!(
            "p must lie in {{0}} or (0, 2], got {p}"
        )));
    }
    let total: f64 = x
        .iter()
        .enumerate()
        .map(|(j, z)| z.norm().powf(p) * omega.get(j).powf(2.0 - p))
        .sum();
    Ok(total.powf(1.0 / p))
}

/// Keep the largest-magnitude entries. Unweighted: the floor(s) largest.
/// Weighted: scan by descending magnitude, keeping entries whose squared
/// weight still fits in the budget s. Ties break toward the lowest index.
pub fn best_s_term(
    u: &DVector<Complex64>,
    s: f64,
    omega: Option<&Weights>,
) -> DVector<Complex64> {
    let n = u.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| u[b].norm().partial_cmp(&u[a].norm()).unwrap().then(a.cmp(&b)));
    let mut out = DVector::from_element(n, Complex64::new(0.0, 0.0));
    match omega {
        None => {
            let keep = s.max(0.0).floor() as usize;
            for &j in order.iter().take(keep.min(n)) {
                out[j] = u[j];
            }
        }
        Some(w) => {
            let mut used = 0.0;
            for &j in &order {
                if u[j].re == 0.0 && u[j].im == 0.0 {
                    break;
                }
                let wj = w.get(j).powi(2);
                if used + wj <= s + 1e-12 {
                    used += wj;
                    out[j] = u[j];
                }
            }
        }
    }
    out
}

/// ||D* f - (D* f)_s||_1 / sqrt(s).
pub fn unrecoverable_energy(d: &Dictionary, f: &DVector<Complex64>, s: usize) -> Result<f64> {
    if s == 0 {
        return Err(Error::invalid("sparsity level must be >= 1"));
    }
    let coeffs = d.analysis(f)?;
    let kept = best_s_term(&coeffs, s as f64, None);
    let tail: f64 = (0..coeffs.len())
        .map(|j| (coeffs[j] - kept[j]).norm())
        .sum();
    Ok(tail / (s as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalizationMethod {
    ExactEnumeration,
    MonteCarloLowerBound,
    ClosedFormUpperBound,
}

impl std::fmt::Display for LocalizationMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LocalizationMethod::ExactEnumeration => write!(f, "exact"),
            LocalizationMethod::MonteCarloLowerBound => write!(f, "mc"),
            LocalizationMethod::ClosedFormUpperBound => write!(f, "bound"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalizationEstimate {
    pub value: f64,
    pub method: LocalizationMethod,
    pub s: usize,
    /// Supports enumerated (exact) or restarts drawn (Monte-Carlo).
    pub trials_or_supports: u64,
    pub seed: Option<u64>,
    /// True only when the full real sign enumeration ran; the complex
    /// phase-ascent variant and Monte-Carlo results are lower bounds.
    pub exhaustive: bool,
}

/// Phase bins used for the deterministic starts of the complex variant.
pub const DEFAULT_PHASE_BINS: usize = 16;
const COMPLEX_RANDOM_STARTS: usize = 32;
const ASCENT_STEPS: usize = 50;

pub fn localization_factor(
    d: &Dictionary,
    s: usize,
    omega: &Weights,
    method: LocalizationMethod,
    budget: u64,
    seed: u64,
) -> Result<LocalizationEstimate> {
    if s == 0 {
        return Err(Error::invalid("sparsity level must be >= 1"));
    }
    if s > d.n_cols() {
        return Err(Error::invalid(format!(
            "s = {s} exceeds the number of dictionary columns {}",
            d.n_cols()
        )));
    }
    if omega.len() != d.n_cols() {
        return Err(Error::invalid("weights length must match dictionary columns"));
    }
    match method {
        LocalizationMethod::ClosedFormUpperBound => closed_form_bound(d, s, omega),
        LocalizationMethod::ExactEnumeration => exact_enumeration(d, s, omega, budget),
        LocalizationMethod::MonteCarloLowerBound => monte_carlo(d, s, omega, budget, seed),
    }
}

fn closed_form_bound(d: &Dictionary, s: usize, omega: &Weights) -> Result<LocalizationEstimate> {
    if !omega.is_uniform() || (omega.get(0) - 1.0).abs() > 1e-15 {
        return Err(Error::Unsupported(
            "closed-form localization bounds are unweighted only".into(),
        ));
    }
    let value = match d.kind() {
        DictionaryKind::Harmonic { l } => {
            let n_cols = d.n_cols();
            if (*l as f64) * (s as f64) > n_cols as f64 / 4.0 {
                return Err(Error::Precondition(format!(
                    "harmonic bound requires L such that Ls <= N/4, got L={l}, s={s}, N={n_cols}"
                )));
            }
            1.0 + (*l as f64) * 2f64.sqrt()
        }
        DictionaryKind::RedundantHaar { .. } => {
            1.0 + (3.0 * (d.n() as f64).log2()).sqrt()
        }
        DictionaryKind::Custom => {
            return Err(Error::Unsupported(
                "no closed-form localization bound for custom dictionaries".into(),
            ))
        }
    };
    Ok(LocalizationEstimate {
        value,
        method: LocalizationMethod::ClosedFormUpperBound,
        s,
        trials_or_supports: 0,
        seed: None,
        exhaustive: false,
    })
}

/// Per-support dual matrix Q = diag(w) M G^+ M* diag(w) with M = D* D_Lambda.
fn support_q_matrix(d: &Dictionary, omega: &Weights, supp: &[usize]) -> DMatrix<Complex64> {
    let k = supp.len();
    let n_cols = d.n_cols();
    let d_supp = DMatrix::from_fn(d.n(), k, |i, c| d.entries()[(i, supp[c])]);
    let m = d.entries().ad_mul(&d_supp); // N x k
    let g = d_supp.ad_mul(&d_supp); // k x k
    let pinv = PsdPseudoInverse::new(&g);
    // columns of G^+ M* diag(w): apply pinv to each weighted row of M
    let mut half = DMatrix::from_element(k, n_cols, Complex64::new(0.0, 0.0));
    for j in 0..n_cols {
        let mj = DVector::from_fn(k, |c, _| m[(j, c)].conj() * Complex64::new(omega.get(j), 0.0));
        half.set_column(j, &pinv.apply(&mj));
    }
    // Q = (M diag(w))(G^+ M* diag(w)) = half* G half ... cheaper: Q_{ab} = row_a . half_b
    let mut q = DMatrix::from_element(n_cols, n_cols, Complex64::new(0.0, 0.0));
    for a in 0..n_cols {
        for b in 0..n_cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for c in 0..k {
                acc += m[(a, c)] * Complex64::new(omega.get(a), 0.0) * half[(c, b)];
            }
            q[(a, b)] = acc;
        }
    }
    q
}

/// Exhaustive +-1 maximization of sigma^T Q sigma with gray-code updates.
fn max_over_signs(q: &DMatrix<Complex64>) -> f64 {
    let n = q.nrows();
    debug_assert!(n >= 1);
    let mut sigma = vec![1.0f64; n];
    // g = Q sigma (real part is what matters; Q is real for real dictionaries)
    let mut g: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| q[(i, j)].re).sum())
        .collect();
    let mut val: f64 = sigma.iter().zip(&g).map(|(s, gi)| s * gi).sum();
    let mut best = val;
    // fix sigma[n-1] = +1; iterate gray code over the first n-1 coordinates
    let bits = n - 1;
    if bits == 0 {
        return best.max(0.0);
    }
    let total: u64 = 1u64 << bits;
    for code in 1..total {
        let flip = code.trailing_zeros() as usize;
        // sigma' = sigma - 2 sigma_f e_f
        let sf = sigma[flip];
        val += -4.0 * sf * g[flip] + 4.0 * q[(flip, flip)].re;
        for i in 0..n {
            g[i] -= 2.0 * sf * q[(i, flip)].re;
        }
        sigma[flip] = -sf;
        if val > best {
            best = val;
        }
    }
    best.max(0.0)
}

/// Monotone phase-power ascent sigma <- phase(Q sigma) for PSD Q; returns
/// the best sigma* Q sigma found from the given start.
fn phase_ascent(q: &DMatrix<Complex64>, start: &DVector<Complex64>) -> f64 {
    let mut sigma = start.map(|z| {
        let r = z.norm();
        if r > 0.0 {
            z / Complex64::new(r, 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        }
    });
    let mut val = 0.0f64;
    for _ in 0..ASCENT_STEPS {
        let qs = q * &sigma;
        let new_val = sigma.dotc(&qs).re;
        sigma = qs.map(|z| {
            let r = z.norm();
            if r > 1e-300 {
                z / Complex64::new(r, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        });
        if (new_val - val).abs() <= 1e-12 * new_val.abs().max(1.0) {
            val = new_val;
            break;
        }
        val = new_val;
    }
    // one last exact evaluation at the final phases
    let qs = q * &sigma;
    val.max(sigma.dotc(&qs).re).max(0.0)
}

/// Maximum over the phase torus from deterministic axis / pairwise phase-bin
/// starts plus a fixed-seed batch of random starts.
fn max_over_torus(
    q: &DMatrix<Complex64>,
    d: &Dictionary,
    supp: &[usize],
    bins: usize,
) -> f64 {
    let n_cols = d.n_cols();
    let k = supp.len();
    let mut best = 0.0f64;
    // sigma starts derived from coefficient-side starts z via sigma = phase(M z);
    // equivalently start the ascent at phase(Q applied to that sigma). Using
    // M columns directly: column c of M = D* d_{supp[c]}.
    let m_col = |c: usize| -> DVector<Complex64> {
        let col = d.column(supp[c]);
        d.entries().ad_mul(&col)
    };
    let axis: Vec<DVector<Complex64>> = (0..k).map(m_col).collect();
    for a in &axis {
        best = best.max(phase_ascent(q, a));
    }
    for i in 0..k {
        for j in (i + 1)..k {
            for b in 0..bins {
                let phi = 2.0 * std::f64::consts::PI * b as f64 / bins as f64;
                let rot = Complex64::new(phi.cos(), phi.sin());
                let start = &axis[i] + &axis[j] * rot;
                best = best.max(phase_ascent(q, &start));
            }
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed_10c4);
    for _ in 0..COMPLEX_RANDOM_STARTS {
        let start = DVector::from_fn(n_cols, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        best = best.max(phase_ascent(q, &start));
    }
    best
}

/// For real dictionaries the budget caps supports x 2^N sign patterns;
/// for complex ones it caps the number of supports (each support runs a
/// bounded family of phase-ascent starts).
fn exact_enumeration(
    d: &Dictionary,
    s: usize,
    omega: &Weights,
    budget: u64,
) -> Result<LocalizationEstimate> {
    let n_cols = d.n_cols();
    let real = d.is_real();
    let max_supports = if real {
        if n_cols >= 63 {
            return Err(Error::Resource(format!(
                "sign enumeration over 2^{n_cols} patterns is not representable"
            )));
        }
        let per_support = 1u64 << n_cols;
        let n_supports = crate::supports::count_supports(omega, s as f64, budget);
        let work = n_supports.saturating_mul(per_support);
        if work > budget {
            return Err(Error::Resource(format!(
                "exact enumeration needs {n_supports} supports x 2^{n_cols} sign patterns > budget {budget}"
            )));
        }
        n_supports
    } else {
        budget
    };
    let mut best = 0.0f64;
    let mut supports = 0u64;
    for_each_support(omega, s as f64, max_supports.max(1), |supp| {
        supports += 1;
        let q = support_q_matrix(d, omega, supp);
        let v = if real {
            max_over_signs(&q)
        } else {
            max_over_torus(&q, d, supp, DEFAULT_PHASE_BINS)
        };
        if v > best {
            best = v;
        }
        Ok(())
    })?;
    Ok(LocalizationEstimate {
        value: best.sqrt() / (s as f64).sqrt(),
        method: LocalizationMethod::ExactEnumeration,
        s,
        trials_or_supports: supports,
        seed: None,
        exhaustive: real,
    })
}

fn monte_carlo(
    d: &Dictionary,
    s: usize,
    omega: &Weights,
    budget: u64,
    seed: u64,
) -> Result<LocalizationEstimate> {
    let real = d.is_real();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    let restarts = budget.max(1);
    for _ in 0..restarts {
        let supp = random_support(&mut rng, omega, s as f64);
        if supp.is_empty() {
            continue;
        }
        let q = support_q_matrix(d, omega, &supp);
        let val = if real {
            // random real start, monotone sign ascent (a restricted torus walk)
            let n_cols = d.n_cols();
            let start: Vec<f64> = (0..n_cols).map(|_| rng.gen::<f64>() - 0.5).collect();
            sign_ascent(&q, &start)
        } else {
            let n_cols = d.n_cols();
            let start = DVector::from_fn(n_cols, |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            phase_ascent(&q, &start)
        };
        if val > best {
            best = val;
        }
    }
    Ok(LocalizationEstimate {
        value: best.sqrt() / (s as f64).sqrt(),
        method: LocalizationMethod::MonteCarloLowerBound,
        s,
        trials_or_supports: restarts,
        seed: Some(seed),
        exhaustive: false,
    })
}

/// sigma <- sign(Q sigma): monotone for PSD Q, converges to a sign pattern
/// whose value is dominated by the exhaustive maximum.
fn sign_ascent(q: &DMatrix<Complex64>, start: &[f64]) -> f64 {
    let n = q.nrows();
    let mut sigma: Vec<f64> = start.iter().map(|&x| if x >= 0.0 { 1.0 } else { -1.0 }).collect();
    let mut val = f64::MIN;
    for _ in 0..ASCENT_STEPS {
        let g: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| q[(i, j)].re * sigma[j]).sum())
            .collect();
        let new_val: f64 = sigma.iter().zip(&g).map(|(s, gi)| s * gi).sum();
        let new_sigma: Vec<f64> = g.iter().map(|&x| if x >= 0.0 { 1.0 } else { -1.0 }).collect();
        if new_sigma == sigma {
            return new_val.max(0.0);
        }
        sigma = new_sigma;
        if (new_val - val).abs() <= 1e-15 * new_val.abs().max(1.0) {
            break;
        }
        val = new_val;
    }
    let g: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| q[(i, j)].re * sigma[j]).sum())
        .collect();
    sigma.iter().zip(&g).map(|(s, gi)| s * gi).sum::<f64>().max(0.0)
}
