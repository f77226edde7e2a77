//! Cross-module invariants: norm reductions, adjoint identities, the
//! localization/energy link, the empirical recovery pipeline gated by the
//! measured restricted-isometry constant, and harness-level behavior
//! (success-vs-m slope, error-vs-noise slope).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use redict::{
    dft_rows_by_frequency, drip_delta, fourier_haar_kappa, generate_signal, run_phase_sweep,
    solve_analysis, unrecoverable_energy, weighted_norm, AnalysisProblem, Dictionary,
    DictionarySpec, DripMethod, ExperimentConfig, MeasurementEnsemble, SampledOperator,
    SamplingMode, SignalSpec, SolverConfig, Weights,
};

fn cvec_strategy(n: usize) -> impl Strategy<Value = DVector<Complex64>> {
    prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), n).prop_map(|v| {
        DVector::from_iterator(v.len(), v.into_iter().map(|(re, im)| Complex64::new(re, im)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_norm_uniform_weights_reduce_to_lp(v in cvec_strategy(9)) {
        let w = Weights::uniform(9);
        for p in [0.5f64, 1.0, 2.0] {
            let weighted = weighted_norm(&v, &w, p).unwrap();
            let plain: f64 = v.iter().map(|z| z.norm().powf(p)).sum::<f64>().powf(1.0 / p);
            prop_assert!((weighted - plain).abs() <= 1e-12 * plain.max(1.0));
        }
        let w0 = weighted_norm(&v, &w, 0.0).unwrap();
        let count = v.iter().filter(|z| z.re != 0.0 || z.im != 0.0).count() as f64;
        prop_assert_eq!(w0, count);
    }

    #[test]
    fn parseval_synthesis_of_analysis_round_trips(v in cvec_strategy(8)) {
        for d in [Dictionary::harmonic(8, 3).unwrap(), Dictionary::redundant_haar(3).unwrap()] {
            let back = d.synthesis(&d.analysis(&v).unwrap()).unwrap();
            prop_assert!((back - &v).norm() <= 1e-10 * v.norm().max(1.0));
        }
    }

    #[test]
    fn best_s_term_is_l2_optimal(v in cvec_strategy(10), s in 1usize..5) {
        let kept = redict::best_s_term(&v, s as f64, None);
        let err = (&v - &kept).norm_squared();
        // any support of size s leaves at least the smallest tail
        let mut mags: Vec<f64> = v.iter().map(|z| z.norm_sqr()).collect();
        mags.sort_by(f64::total_cmp);
        let best_tail: f64 = mags.iter().take(10 - s.min(10)).sum();
        prop_assert!(err <= best_tail + 1e-9);
    }
}

#[test]
fn harmonic_gram_structure_over_full_grid() {
    // diagonal n/(n+L), off-diagonal magnitudes <= L/(n+L), every n <= 128
    for n in 1..=128usize {
        for l in 0..=8usize {
            let d = Dictionary::harmonic(n, l).unwrap();
            let g = d.gram();
            let cols = n + l;
            for j in 0..cols {
                for k in 0..cols {
                    let entry = g.entries()[(j, k)];
                    if j == k {
                        assert!(
                            (entry - Complex64::new(n as f64 / cols as f64, 0.0)).norm() < 1e-12,
                            "diag n={n} L={l}"
                        );
                    } else {
                        assert!(
                            entry.norm() <= l as f64 / cols as f64 + 1e-12,
                            "offdiag n={n} L={l}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn standard_basis_coherence_constant_over_grid() {
    for n in [4usize, 16, 49, 91, 128] {
        for l in [0usize, 1, 5, 8] {
            let d = Dictionary::harmonic(n, l).unwrap();
            let basis = DMatrix::from_fn(n, n, |i, j| {
                Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)
            });
            let prof = redict::coherence_profile(&basis, &d).unwrap();
            let expect = 1.0 / ((n + l) as f64).sqrt();
            for &v in &prof.mu_loc {
                assert!((v - expect).abs() < 1e-12, "n={n} L={l}");
            }
        }
    }
}

#[test]
fn adjoint_identity_for_all_built_in_kinds() {
    let n = 12;
    let kappa = fourier_haar_kappa(n);
    let precond =
        MeasurementEnsemble::preconditioned(&dft_rows_by_frequency(n), &kappa).unwrap();
    let kinds: Vec<Arc<MeasurementEnsemble>> = vec![
        Arc::new(MeasurementEnsemble::scaled_dft(n).unwrap()),
        Arc::new(MeasurementEnsemble::scaled_standard_basis(n).unwrap()),
        Arc::new(precond),
    ];
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    for e in &kinds {
        for round in 0..10u64 {
            let m = 5 + (round as usize % 7);
            let op = SampledOperator::subsample(e, m, 300 + round, None).unwrap();
            let f = DVector::from_fn(n, |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let g = DVector::from_fn(m, |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let lhs = op.forward(&f).dotc(&g);
            let rhs = f.dotc(&op.adjoint(&g));
            assert!((lhs - rhs).norm() < 1e-10, "kind mismatch {lhs} vs {rhs}");
        }
    }
}

#[test]
fn every_built_in_ensemble_verifies_with_its_measure() {
    for n in [4usize, 9, 16, 33] {
        assert!(MeasurementEnsemble::scaled_dft(n)
            .unwrap()
            .verify_orthonormal(1e-8)
            .pass);
        assert!(MeasurementEnsemble::scaled_standard_basis(n)
            .unwrap()
            .verify_orthonormal(1e-8)
            .pass);
        let kappa = fourier_haar_kappa(n);
        assert!(
            MeasurementEnsemble::preconditioned(&dft_rows_by_frequency(n), &kappa)
                .unwrap()
                .verify_orthonormal(1e-8)
                .pass
        );
    }
}

/// The localization factor is controlled by the unrecoverable energy:
/// ||D* f||_1 / sqrt(s) <= E*(f) + 1 for unit-norm
/// f = D z with s-sparse z.
#[test]
fn localization_energy_link() {
    let mut rng = ChaCha20Rng::seed_from_u64(50);
    for d in [
        Dictionary::harmonic(16, 2).unwrap(),
        Dictionary::redundant_haar(4).unwrap(),
    ] {
        let n_cols = d.n_cols();
        let w = Weights::uniform(n_cols);
        for _ in 0..50 {
            let s = 1 + rng.gen_range(0..4);
            let draw = generate_signal(&d, s, &w, SignalSpec::ExactSparse, rng.gen()).unwrap();
            let coeffs = d.analysis(&draw.f).unwrap();
            let l1: f64 = coeffs.iter().map(|z| z.norm()).sum();
            let link = unrecoverable_energy(&d, &draw.f, s).unwrap() + 1.0;
            assert!(
                l1 / (s as f64).sqrt() <= link + 1e-10,
                "l1/sqrt(s) = {} vs E* + 1 = {}",
                l1 / (s as f64).sqrt(),
                link
            );
        }
    }
}

/// When the measured restricted-isometry constant at sparsity 2s is below
/// 0.08, noiseless recovery of exactly sparse signals (orthonormal
/// dictionary, so the s-term analysis tail vanishes) succeeds to 1e-4.
#[test]
fn small_delta_certifies_exact_recovery() {
    let n = 8usize;
    let d = Arc::new(Dictionary::identity(n));
    let w = Weights::uniform(n);
    let e = Arc::new(MeasurementEnsemble::scaled_dft(n).unwrap());
    let m = 4096;
    let op = SampledOperator::subsample(&e, m, 1, None).unwrap();
    let s = 1usize;
    let est = drip_delta(
        &op,
        &d,
        2 * s,
        &w,
        DripMethod::ExactEnumeration,
        1 << 20,
        0,
        false,
    )
    .unwrap();
    assert!(
        est.delta < 0.08,
        "measured delta_2s = {} (increase m if this seed degrades)",
        est.delta
    );
    for seed in 0..3u64 {
        let draw = generate_signal(&d, s, &w, SignalSpec::ExactSparse, 600 + seed).unwrap();
        let y = op.forward(&draw.f);
        let problem = AnalysisProblem {
            op: op.clone(),
            dictionary: Arc::clone(&d),
            y,
            epsilon: 0.0,
            omega: w.clone(),
        };
        let res = solve_analysis(&problem, &SolverConfig::default()).unwrap();
        let err = (&res.f_sharp - &draw.f).norm();
        assert!(err <= 1e-4, "recovery error {err} with delta {}", est.delta);
    }
}

/// Tiny-instance oracle: exhaustive fine-grid search over the ball
/// constraint agrees with the solver (the optimum is real by phase
/// symmetry, so a real grid suffices).
#[test]
fn solver_matches_grid_search_oracle() {
    let n = 2usize;
    let e = Arc::new(MeasurementEnsemble::scaled_standard_basis(n).unwrap());
    let op = SampledOperator::full_sampling(&e); // identity operator
    let d = Arc::new(Dictionary::identity(n));
    let y = DVector::from_vec(vec![Complex64::new(1.2, 0.0), Complex64::new(-0.4, 0.0)]);
    let eps = 0.5;
    let problem = AnalysisProblem {
        op,
        dictionary: d,
        y: y.clone(),
        epsilon: eps,
        omega: Weights::uniform(n),
    };
    let config = SolverConfig {
        max_iters: 200_000,
        tol_rel_change: 1e-10,
        ..Default::default()
    };
    let res = solve_analysis(&problem, &config).unwrap();

    // exhaustive polar grid over the feasible disk; the boundary circle,
    // where ball-constrained optima live, is sampled exactly
    let (radial, angular) = (400usize, 20_000usize);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=radial {
        let rho = eps * i as f64 / radial as f64;
        for j in 0..angular {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / angular as f64;
            let a = 1.2 + rho * theta.cos();
            let b = -0.4 + rho * theta.sin();
            let obj = a.abs() + b.abs();
            if obj < best.0 {
                best = (obj, a, b);
            }
        }
    }
    let grid_pt = DVector::from_vec(vec![Complex64::new(best.1, 0.0), Complex64::new(best.2, 0.0)]);
    let grid_res = eps * 2.0 * std::f64::consts::PI / angular as f64;
    assert!(
        (&res.f_sharp - &grid_pt).norm() <= 10.0 * grid_res + 1e-6,
        "solver {:?} vs grid {:?}",
        res.f_sharp,
        grid_pt
    );
    assert!(res.objective <= best.0 + 1e-6);
}

fn logistic_slope(points: &[(f64, f64)]) -> f64 {
    // 1D logistic regression by gradient ascent on normalized abscissae
    let xmax = points.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let xmin = points.iter().map(|p| p.0).fold(f64::MAX, f64::min);
    let scale = (xmax - xmin).max(1e-9);
    let (mut a, mut b) = (0.0f64, 0.0f64);
    for _ in 0..2000 {
        let (mut ga, mut gb) = (0.0f64, 0.0f64);
        for &(x, ylabel) in points {
            let t = (x - xmin) / scale;
            let p = 1.0 / (1.0 + (-(a + b * t)).exp());
            ga += ylabel - p;
            gb += (ylabel - p) * t;
        }
        a += 0.1 * ga / points.len() as f64;
        b += 0.1 * gb / points.len() as f64;
    }
    b / scale
}

/// Success rate is non-decreasing in m on average for the harmonic sweep:
/// the logistic fit of per-trial success against m has positive slope.
/// The grid spans i.i.d. cells and the deterministic full-sampling cell
/// (unique feasible point).
#[test]
fn harmonic_sweep_success_slope_is_positive() {
    let mut points: Vec<(f64, f64)> = Vec::new();
    let iid = ExperimentConfig {
        preset: Some("harmonic-time-samples".into()),
        dictionary: Some(DictionarySpec::Harmonic { n: 64, l: 1 }),
        ensemble: None,
        sampling: SamplingMode::Iid,
        m: vec![8, 16, 32],
        s: vec![3],
        epsilon: vec![0.0],
        trials: 6,
        base_seed: 31_337,
        weights: None,
        solver: Default::default(),
        signal: SignalSpec::ExactSparse,
        success_threshold: 1e-4,
        estimate_delta: false,
        output: Default::default(),
    };
    let exp = iid.clone().resolve().unwrap();
    let records = redict::run_recovery_experiment(&exp).unwrap();
    for r in &records {
        points.push((r.m as f64, if r.success { 1.0 } else { 0.0 }));
    }
    let full = ExperimentConfig {
        sampling: SamplingMode::Full,
        m: vec![64],
        ..iid
    };
    let exp = full.resolve().unwrap();
    let records = redict::run_recovery_experiment(&exp).unwrap();
    for r in &records {
        points.push((r.m as f64, if r.success { 1.0 } else { 0.0 }));
    }
    let slope = logistic_slope(&points);
    assert!(slope > 0.0, "logistic slope {slope} not positive");
}

/// Error grows at most linearly with the noise level on a well-conditioned
/// cell: least-squares slope of error against epsilon stays below 10.
#[test]
fn noise_error_slope_is_bounded_on_well_conditioned_cell() {
    let cfg = ExperimentConfig {
        preset: Some("fourier-haar-vds".into()),
        dictionary: Some(DictionarySpec::Haar { p: 6 }),
        ensemble: None,
        sampling: SamplingMode::Iid,
        m: vec![64],
        s: vec![2],
        epsilon: vec![1e-3, 1e-2, 1e-1],
        trials: 8,
        base_seed: 2024,
        weights: None,
        solver: redict::harness::SolverOverrides {
            max_iters: Some(60_000),
            ..Default::default()
        },
        signal: SignalSpec::ExactSparse,
        success_threshold: 1e-4,
        estimate_delta: false,
        output: Default::default(),
    };
    let exp = cfg.resolve().unwrap();
    let (records, _) = run_phase_sweep(&exp).unwrap();
    // least squares through the per-trial (epsilon, error) cloud
    let n = records.len() as f64;
    let sx: f64 = records.iter().map(|r| r.epsilon).sum();
    let sy: f64 = records.iter().map(|r| r.error_l2).sum();
    let sxx: f64 = records.iter().map(|r| r.epsilon * r.epsilon).sum();
    let sxy: f64 = records.iter().map(|r| r.epsilon * r.error_l2).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    assert!(slope <= 10.0, "error-vs-epsilon slope {slope}");
    assert!(slope > 0.0, "slope should be positive, got {slope}");
}

/// Identity-dictionary exact enumeration equals the classical restricted
/// isometry constant from dense submatrix eigenvalues (nalgebra route),
/// complementing the closed-form oracle in the acceptance suite.
#[test]
fn drip_matches_dense_eigen_route_for_identity() {
    let n = 8usize;
    let d = Dictionary::identity(n);
    let w = Weights::uniform(n);
    let e = Arc::new(MeasurementEnsemble::scaled_dft(n).unwrap());
    let op = SampledOperator::subsample(&e, 5, 9, None).unwrap();
    let est = drip_delta(&op, &d, 2, &w, DripMethod::ExactEnumeration, 1 << 20, 0, false)
        .unwrap();
    let dense = op.dense_matrix();
    let mut oracle = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            if b <= a {
                continue;
            }
            let sub = DMatrix::from_fn(5, 2, |l, c| dense[(l, if c == 0 { a } else { b })]);
            let gram = sub.ad_mul(&sub);
            let eig = gram.symmetric_eigen();
            for lam in eig.eigenvalues.iter() {
                oracle = oracle.max((lam - 1.0).abs());
            }
        }
    }
    for a in 0..n {
        let col = dense.column(a);
        oracle = oracle.max((col.norm_squared() - 1.0).abs());
    }
    assert!((est.delta - oracle).abs() < 1e-8, "{} vs {oracle}", est.delta);
}
