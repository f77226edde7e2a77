//! Weighted l1-analysis minimization with an l2-ball data constraint,
//!
//!   minimize ||D* f||_{w,1}  subject to  ||op(f) - y||_2 <= eps,
//!
//! solved by a primal-dual hybrid-gradient scheme on the stacked map
//! f -> (D* f, op f). Both proximal steps are closed form: a clip onto the
//! weighted l-infinity ball on the analysis dual, and a ball projection on
//! the data dual. Step sizes satisfy sigma tau ||K||^2 <= 0.95^2 with ||K||
//! estimated by power iteration. With eps = 0 the ball projection
//! degenerates to the exact affine projection onto {q = y}.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::frames::Dictionary;
use crate::sampling::SampledOperator;
use crate::sparsity::{weighted_norm, Weights};

/// Abstract linear map with an exact adjoint.
pub trait LinearOperator {
    fn domain_dim(&self) -> usize;
    fn range_dim(&self) -> usize;
    fn forward(&self, v: &DVector<Complex64>) -> DVector<Complex64>;
    fn adjoint(&self, v: &DVector<Complex64>) -> DVector<Complex64>;
}

impl LinearOperator for SampledOperator {
    fn domain_dim(&self) -> usize {
        self.n()
    }
    fn range_dim(&self) -> usize {
        self.m()
    }
    fn forward(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        SampledOperator::forward(self, v)
    }
    fn adjoint(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        SampledOperator::adjoint(self, v)
    }
}

/// Dense matrix as a LinearOperator (tests and oracles).
pub struct DenseOperator(pub DMatrix<Complex64>);

impl LinearOperator for DenseOperator {
    fn domain_dim(&self) -> usize {
        self.0.ncols()
    }
    fn range_dim(&self) -> usize {
        self.0.nrows()
    }
    fn forward(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        &self.0 * v
    }
    fn adjoint(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        self.0.ad_mul(v)
    }
}

/// Largest singular value by power iteration on K* K.
pub fn operator_norm(op: &dyn LinearOperator, iters: usize, tol: f64) -> f64 {
    let n = op.domain_dim();
    if n == 0 {
        return 0.0;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(0x6f70_6e6f);
    let mut v = DVector::from_fn(n, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    });
    let nv = v.norm();
    if nv == 0.0 {
        return 0.0;
    }
    v /= Complex64::new(nv, 0.0);
    let mut lambda = 0.0f64;
    for _ in 0..iters.max(1) {
        let w = op.adjoint(&op.forward(&v));
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let new_lambda = nw;
        v = w / Complex64::new(nw, 0.0);
        if (new_lambda - lambda).abs() <= tol * new_lambda.max(1e-300) {
            return new_lambda.sqrt();
        }
        lambda = new_lambda;
    }
    lambda.sqrt()
}

/// Coordinatewise complex soft threshold with per-entry threshold theta*w_j.
pub fn prox_weighted_l1(
    v: &DVector<Complex64>,
    theta: f64,
    omega: &Weights,
) -> DVector<Complex64> {
    DVector::from_fn(v.len(), |j, _| {
        let z = v[j];
        let r = z.norm();
        if r == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            z * Complex64::new((1.0 - theta * omega.get(j) / r).max(0.0), 0.0)
        }
    })
}

/// Euclidean projection onto the ball of the given radius around `center`.
pub fn project_l2_ball(
    q: &DVector<Complex64>,
    center: &DVector<Complex64>,
    radius: f64,
) -> DVector<Complex64> {
    let diff = q - center;
    let dist = diff.norm();
    if dist <= radius {
        q.clone()
    } else if dist == 0.0 {
        center.clone()
    } else {
        center + diff * Complex64::new(radius / dist, 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct AnalysisProblem {
    pub op: SampledOperator,
    pub dictionary: std::sync::Arc<Dictionary>,
    pub y: DVector<Complex64>,
    pub epsilon: f64,
    pub omega: Weights,
}

impl AnalysisProblem {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::invalid("epsilon must be >= 0"));
        }
        if self.y.len() != self.op.m() {
            return Err(Error::invalid(format!(
                "y has length {}, operator produces {}",
                self.y.len(),
                self.op.m()
            )));
        }
        if self.dictionary.n() != self.op.n() {
            return Err(Error::invalid("dictionary and operator dimensions differ"));
        }
        if self.omega.len() != self.dictionary.n_cols() {
            return Err(Error::invalid("weights length must match dictionary columns"));
        }
        Ok(())
    }

    pub fn objective(&self, f: &DVector<Complex64>) -> f64 {
        let coeffs = self.dictionary.analysis(f).expect("validated dimensions");
        weighted_norm(&coeffs, &self.omega, 1.0).expect("validated dimensions")
    }

    pub fn feasibility_gap(&self, f: &DVector<Complex64>) -> f64 {
        ((self.op.forward(f) - &self.y).norm() - self.epsilon).max(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol_rel_change: f64,
    /// Relative to max(1, ||y||).
    pub tol_feasibility: f64,
    pub power_iters: usize,
    /// Over-relaxation theta in [0, 1].
    pub over_relaxation: f64,
    pub keep_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 5000,
            tol_rel_change: 1e-7,
            tol_feasibility: 1e-8,
            power_iters: 100,
            over_relaxation: 1.0,
            keep_trace: false,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.power_iters == 0 {
            return Err(Error::invalid("iteration counts must be positive"));
        }
        if !(self.tol_rel_change > 0.0) || !(self.tol_feasibility > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if !(0.0..=1.0).contains(&self.over_relaxation) {
            return Err(Error::invalid("over_relaxation must lie in [0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub iter: usize,
    pub objective: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub f_sharp: DVector<Complex64>,
    pub iterations: usize,
    pub objective: f64,
    pub feasibility_gap: f64,
    pub converged: bool,
    pub trace: Option<Vec<TracePoint>>,
}

/// Full primal-dual state, usable as a warm start.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub f: DVector<Complex64>,
    pub u: DVector<Complex64>,
    pub v: DVector<Complex64>,
}

struct StackedOperator<'a> {
    d: &'a Dictionary,
    op: &'a SampledOperator,
}

impl LinearOperator for StackedOperator<'_> {
    fn domain_dim(&self) -> usize {
        self.d.n()
    }
    fn range_dim(&self) -> usize {
        self.d.n_cols() + self.op.m()
    }
    fn forward(&self, f: &DVector<Complex64>) -> DVector<Complex64> {
        let a = self.d.analysis(f).expect("dimension checked");
        let b = self.op.forward(f);
        let mut out = DVector::from_element(a.len() + b.len(), Complex64::new(0.0, 0.0));
        out.rows_mut(0, a.len()).copy_from(&a);
        out.rows_mut(a.len(), b.len()).copy_from(&b);
        out
    }
    fn adjoint(&self, uv: &DVector<Complex64>) -> DVector<Complex64> {
        let n_cols = self.d.n_cols();
        let u = uv.rows(0, n_cols).clone_owned();
        let v = uv.rows(n_cols, self.op.m()).clone_owned();
        self.d.synthesis(&u).expect("dimension checked") + self.op.adjoint(&v)
    }
}

const MONITOR_WINDOW: usize = 100;
const MONITOR_BURN_IN: usize = 500;

pub fn solve_analysis(problem: &AnalysisProblem, config: &SolverConfig) -> Result<SolverResult> {
    solve_analysis_from(problem, config, None).map(|(r, _)| r)
}

/// Never silent about non-convergence: a result with `converged = false`
/// comes back after max_iters; a monitor trip (merit increasing by more
/// than 1% across 100-iteration windows after burn-in) is a hard error.
pub fn solve_analysis_from(
    problem: &AnalysisProblem,
    config: &SolverConfig,
    init: Option<SolverState>,
) -> Result<(SolverResult, SolverState)> {
    problem.validate()?;
    config.validate()?;
    let d = problem.dictionary.as_ref();
    let op = &problem.op;
    let (n, n_cols, m) = (d.n(), d.n_cols(), op.m());

    let stacked = StackedOperator { d, op };
    let k_norm = operator_norm(&stacked, config.power_iters, 1e-9).max(1e-12);
    let step = 0.95 / k_norm;
    let (sigma, tau) = (step, step);
    let theta = config.over_relaxation;

    let mut state = init.unwrap_or_else(|| SolverState {
        f: op.adjoint(&problem.y),
        u: DVector::from_element(n_cols, Complex64::new(0.0, 0.0)),
        v: DVector::from_element(m, Complex64::new(0.0, 0.0)),
    });
    if state.f.len() != n || state.u.len() != n_cols || state.v.len() != m {
        return Err(Error::invalid("warm-start state has wrong dimensions"));
    }
    let mut f_bar = state.f.clone();

    let y_scale = problem.y.norm().max(1.0);
    let merit_weight = 10.0 * (n_cols as f64).sqrt();
    let mut trace: Vec<TracePoint> = Vec::new();
    let mut window_sum = 0.0f64;
    let mut window_len = 0usize;
    let mut prev_window: Option<f64> = None;

    let mut iterations = 0usize;
    let mut converged = false;
    let mut objective = problem.objective(&state.f);
    let mut gap = problem.feasibility_gap(&state.f);

    for iter in 1..=config.max_iters {
        iterations = iter;
        // dual ascent on the analysis block: clip onto the weighted l-inf ball
        let q = &state.u + d.analysis(&f_bar).expect("validated") * Complex64::new(sigma, 0.0);
        state.u = DVector::from_fn(n_cols, |j, _| {
            let z = q[j];
            let r = z.norm();
            let w = problem.omega.get(j);
            if r <= w {
                z
            } else {
                z * Complex64::new(w / r, 0.0)
            }
        });
        // dual ascent on the data block via Moreau and ball projection
        let qv = &state.v + op.forward(&f_bar) * Complex64::new(sigma, 0.0);
        let scaled = &qv / Complex64::new(sigma, 0.0);
        let projected = project_l2_ball(&scaled, &problem.y, problem.epsilon);
        state.v = qv - projected * Complex64::new(sigma, 0.0);

        // primal descent
        let grad = d.synthesis(&state.u).expect("validated") + op.adjoint(&state.v);
        let f_new = &state.f - grad * Complex64::new(tau, 0.0);
        let rel_change = (&f_new - &state.f).norm() / state.f.norm().max(1e-300);
        f_bar = &f_new + (&f_new - &state.f) * Complex64::new(theta, 0.0);
        state.f = f_new;

        objective = problem.objective(&state.f);
        gap = problem.feasibility_gap(&state.f);
        if config.keep_trace {
            trace.push(TracePoint {
                iter,
                objective,
                residual: gap,
            });
        }

        // windowed merit monitor
        window_sum += objective + merit_weight * gap;
        window_len += 1;
        if window_len == MONITOR_WINDOW {
            let mean = window_sum / MONITOR_WINDOW as f64;
            if iter > MONITOR_BURN_IN {
                if let Some(prev) = prev_window {
                    if mean > prev * 1.01 + 1e-12 {
                        return Err(Error::Numerical(format!(
                            "merit increased across monitor windows at iteration {iter}: {prev:.6e} -> {mean:.6e}"
                        )));
                    }
                }
            }
            prev_window = Some(mean);
            window_sum = 0.0;
            window_len = 0;
        }

        if rel_change <= config.tol_rel_change && gap <= config.tol_feasibility * y_scale {
            converged = true;
            break;
        }
    }

    let result = SolverResult {
        f_sharp: state.f.clone(),
        iterations,
        objective,
        feasibility_gap: gap,
        converged,
        trace: config.keep_trace.then_some(trace),
    };
    Ok((result, state))
}

/// Relative tolerance used by `certify_solution` for constraint satisfaction.
pub const CERTIFY_FEAS_RTOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct Certificate {
    pub feasible: bool,
    /// (obj(f_sharp) - obj(reference)) / (1 + obj(reference)).
    pub objective_vs_reference: Option<f64>,
    pub error_l2: Option<f64>,
}

pub fn certify_solution(
    problem: &AnalysisProblem,
    result: &SolverResult,
    f_reference: Option<&DVector<Complex64>>,
) -> Certificate {
    let gap = problem.feasibility_gap(&result.f_sharp);
    let feasible = gap <= CERTIFY_FEAS_RTOL * problem.y.norm().max(1.0);
    let (objective_vs_reference, error_l2) = match f_reference {
        Some(fr) => {
            let obj_ref = problem.objective(fr);
            let excess = (result.objective - obj_ref) / (1.0 + obj_ref);
            (Some(excess), Some((&result.f_sharp - fr).norm()))
        }
        None => (None, None),
    };
    Certificate {
        feasible,
        objective_vs_reference,
        error_l2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::MeasurementEnsemble;
    use std::sync::Arc;

    fn random_cvec(rng: &mut ChaCha20Rng, n: usize) -> DVector<Complex64> {
        DVector::from_fn(n, |_, _| {
            Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    #[test]
    fn prox_examples() {
        let w = Weights::uniform(1);
        let v = DVector::from_vec(vec![Complex64::new(3.0, 0.0)]);
        let out = prox_weighted_l1(&v, 1.0, &w);
        assert!((out[0] - Complex64::new(2.0, 0.0)).norm() < 1e-15);

        // inside threshold -> 0
        let small = DVector::from_vec(vec![Complex64::new(0.4, 0.3)]);
        let z = prox_weighted_l1(&small, 1.0, &w);
        assert_eq!(z[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn prox_phase_equivariance() {
        let w = Weights::new(vec![1.0, 2.0, 1.5]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let v = random_cvec(&mut rng, 3);
        let phi = Complex64::new(0.6, 0.8); // unit modulus
        let a = prox_weighted_l1(&(&v * phi), 0.3, &w);
        let b = prox_weighted_l1(&v, 0.3, &w) * phi;
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn ball_projection_properties() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let c = random_cvec(&mut rng, 6);
        let inside = &c + random_cvec(&mut rng, 6) * Complex64::new(0.01, 0.0);
        assert_eq!(project_l2_ball(&inside, &c, 1.0), inside);

        let far = &c + random_cvec(&mut rng, 6) * Complex64::new(100.0, 0.0);
        let proj = project_l2_ball(&far, &c, 2.5);
        assert!(((proj - &c).norm() - 2.5).abs() < 1e-12);

        let q = DVector::from_vec(vec![Complex64::new(3.0, 0.0), Complex64::new(4.0, 0.0)]);
        let zero = DVector::from_element(2, Complex64::new(0.0, 0.0));
        let p = project_l2_ball(&q, &zero, 1.0);
        assert!((p[0] - Complex64::new(0.6, 0.0)).norm() < 1e-12);
        assert!((p[1] - Complex64::new(0.8, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn operator_norm_cases() {
        let ortho = DenseOperator(crate::sampling::dft_rows_by_frequency(8));
        assert!((operator_norm(&ortho, 200, 1e-12) - 1.0).abs() < 1e-6);

        let diag = DenseOperator(DMatrix::from_fn(2, 2, |i, j| {
            Complex64::new(if i == j { (1 + 2 * i) as f64 } else { 0.0 }, 0.0)
        }));
        assert!((operator_norm(&diag, 200, 1e-12) - 3.0).abs() < 1e-6);

        let zero = DenseOperator(DMatrix::from_element(3, 2, Complex64::new(0.0, 0.0)));
        assert_eq!(operator_norm(&zero, 50, 1e-9), 0.0);
    }

    #[test]
    fn operator_norm_matches_svd_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..5 {
            let m = DMatrix::from_fn(20, 15, |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let svd_top = m.clone().svd(false, false).singular_values[0];
            let pi = operator_norm(&DenseOperator(m), 2000, 1e-13);
            assert!((pi - svd_top).abs() < 1e-6 * svd_top.max(1.0));
        }
    }

    fn isometry_problem(seed: u64, n: usize) -> (AnalysisProblem, DVector<Complex64>) {
        let e = Arc::new(MeasurementEnsemble::scaled_dft(n).unwrap());
        let op = SampledOperator::full_sampling(&e);
        let d = Arc::new(Dictionary::harmonic(n, 1).unwrap());
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut z = DVector::from_element(n + 1, Complex64::new(0.0, 0.0));
        for _ in 0..3 {
            let j = rng.gen_range(0..n + 1);
            z[j] = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
        let mut f = d.synthesis(&z).unwrap();
        let nf = f.norm();
        f /= Complex64::new(nf, 0.0);
        let y = op.forward(&f);
        let omega = Weights::uniform(n + 1);
        (
            AnalysisProblem {
                op,
                dictionary: d,
                y,
                epsilon: 0.0,
                omega,
            },
            f,
        )
    }

    #[test]
    fn isometry_unique_feasible_point_recovered() {
        let (problem, f_true) = isometry_problem(42, 16);
        let result = solve_analysis(&problem, &SolverConfig::default()).unwrap();
        assert!(result.converged);
        assert!((&result.f_sharp - &f_true).norm() < 1e-6);
        let cert = certify_solution(&problem, &result, Some(&f_true));
        assert!(cert.feasible);
        assert!(cert.error_l2.unwrap() < 1e-6);
    }

    #[test]
    fn minimizer_certificate_when_truth_feasible() {
        let (problem, f_true) = isometry_problem(7, 12);
        let result = solve_analysis(&problem, &SolverConfig::default()).unwrap();
        let cert = certify_solution(&problem, &result, Some(&f_true));
        assert!(cert.objective_vs_reference.unwrap() <= 1e-6);
    }

    #[test]
    fn scaling_covariance() {
        let (problem, _) = isometry_problem(3, 8);
        let config = SolverConfig::default();
        let base = solve_analysis(&problem, &config).unwrap();
        let c = 3.5;
        let scaled_problem = AnalysisProblem {
            y: &problem.y * Complex64::new(c, 0.0),
            epsilon: problem.epsilon * c,
            ..problem.clone()
        };
        let scaled = solve_analysis(&scaled_problem, &config).unwrap();
        let diff = (&scaled.f_sharp - &base.f_sharp * Complex64::new(c, 0.0)).norm();
        assert!(diff <= 1e-6 * (c * base.f_sharp.norm()).max(1.0), "diff {diff}");
    }

    #[test]
    fn weighted_path_reduces_to_unweighted() {
        let (problem, _) = isometry_problem(9, 8);
        let config = SolverConfig::default();
        let a = solve_analysis(&problem, &config).unwrap();
        let reweighted = AnalysisProblem {
            omega: Weights::new(vec![1.0; 9]).unwrap(),
            ..problem.clone()
        };
        let b = solve_analysis(&reweighted, &config).unwrap();
        assert!((&a.f_sharp - &b.f_sharp).norm() < 1e-8);
    }

    #[test]
    fn noisy_ball_constraint_is_respected() {
        let n = 16;
        let e = Arc::new(MeasurementEnsemble::scaled_dft(n).unwrap());
        let op = SampledOperator::subsample(&e, 12, 77, None).unwrap();
        let d = Arc::new(Dictionary::redundant_haar(4).unwrap());
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let f = random_cvec(&mut rng, n);
        let mut noise = random_cvec(&mut rng, 12);
        let eps = 1e-2;
        noise *= Complex64::new(eps / noise.norm(), 0.0);
        let y = op.forward(&f) + noise;
        let problem = AnalysisProblem {
            op,
            dictionary: d,
            y,
            epsilon: eps,
            omega: Weights::uniform(32),
        };
        let config = SolverConfig {
            max_iters: 30_000,
            ..Default::default()
        };
        let result = solve_analysis(&problem, &config).unwrap();
        assert!(result.converged, "gap {}", result.feasibility_gap);
        assert!(result.feasibility_gap <= 1e-7);
    }

    #[test]
    fn warm_start_at_saddle_is_fixed_point() {
        let (problem, _) = isometry_problem(21, 4);
        let mut config = SolverConfig {
            max_iters: 20000,
            tol_rel_change: 1e-12,
            tol_feasibility: 1e-12,
            ..Default::default()
        };
        let (_, state) = solve_analysis_from(&problem, &config, None).unwrap();
        // re-run from the converged saddle; per-iteration movement stays tiny
        config.max_iters = 100;
        config.keep_trace = true;
        let start_f = state.f.clone();
        let (result, _) = solve_analysis_from(&problem, &config, Some(state)).unwrap();
        assert!((&result.f_sharp - &start_f).norm() <= 1e-6 * 100.0);
    }

    #[test]
    fn trace_is_recorded_when_requested() {
        let (problem, _) = isometry_problem(2, 8);
        let config = SolverConfig {
            keep_trace: true,
            ..Default::default()
        };
        let result = solve_analysis(&problem, &config).unwrap();
        let trace = result.trace.unwrap();
        assert_eq!(trace.len(), result.iterations);
        assert!(trace.last().unwrap().residual <= 1e-7);
    }

    #[test]
    fn nonconvergence_is_reported_not_silent() {
        let (problem, _) = isometry_problem(42, 16);
        let config = SolverConfig {
            max_iters: 3,
            ..Default::default()
        };
        let result = solve_analysis(&problem, &config).unwrap();
        assert!(!result.converged);
        assert_eq!(result.iterations, 3);
    }
}
