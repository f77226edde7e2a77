//! Reproducible end-to-end recovery experiments: signal generation,
//! seeded trials over (m, s, epsilon) grids, and phase-sweep summaries.
//!
//! Determinism contract: every trial derives its seed as
//! base_seed + global_trial_index, where the global index enumerates the
//! grid cells in (m, s, epsilon) order times the trials per cell. Records
//! are sorted by (cell, trial) before emission, so worker count and
//! execution order never change the output.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frames::Dictionary;
use crate::sampling::{
    dft_rows_by_frequency, fourier_haar_kappa, MeasurementEnsemble, SampledOperator,
};
use crate::solver::{solve_analysis, AnalysisProblem, SolverConfig};
use crate::sparsity::{localization_factor, LocalizationMethod, SupportSet, Weights};
use crate::supports::uniform_support;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DictionarySpec {
    Harmonic { n: usize, l: usize },
    Haar { p: u32 },
    Identity { n: usize },
    File { path: String },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureSpec {
    Uniform,
    /// nu(k) proportional to 1/k over the 1-based row index, with the
    /// matching preconditioner folded in (nu_k w_k^2 = 1).
    Powerlaw,
    /// Fourier-Haar kappa bound: nu from kappa, rows preconditioned.
    FromKappa,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnsembleSpec {
    Dft {
        n: usize,
        #[serde(default = "default_measure")]
        measure: MeasureSpec,
        #[serde(default)]
        seed: Option<u64>,
    },
    Standard {
        n: usize,
        #[serde(default = "default_measure")]
        measure: MeasureSpec,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Unitary DFT rows ordered by absolute frequency; required for the
    /// powerlaw / from-kappa variable-density measures.
    DftByFrequency {
        n: usize,
        #[serde(default = "default_measure")]
        measure: MeasureSpec,
        #[serde(default)]
        seed: Option<u64>,
    },
    File {
        path: String,
        #[serde(default = "default_measure")]
        measure: MeasureSpec,
        #[serde(default)]
        seed: Option<u64>,
    },
}

fn default_measure() -> MeasureSpec {
    MeasureSpec::Uniform
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    #[default]
    Iid,
    /// Each ensemble row exactly once; requires m = n.
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum WeightsSpec {
    Values(Vec<f64>),
    File { path: String },
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SignalSpec {
    #[default]
    ExactSparse,
    Compressible { decay: f64 },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub max_iters: Option<usize>,
    pub tol_rel_change: Option<f64>,
    pub tol_feasibility: Option<f64>,
    pub power_iters: Option<usize>,
    pub over_relaxation: Option<f64>,
}

impl SolverOverrides {
    pub fn apply(&self, base: SolverConfig) -> SolverConfig {
        SolverConfig {
            max_iters: self.max_iters.unwrap_or(base.max_iters),
            tol_rel_change: self.tol_rel_change.unwrap_or(base.tol_rel_change),
            tol_feasibility: self.tol_feasibility.unwrap_or(base.tol_feasibility),
            power_iters: self.power_iters.unwrap_or(base.power_iters),
            over_relaxation: self.over_relaxation.unwrap_or(base.over_relaxation),
            keep_trace: false,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub records_csv: Option<String>,
    pub grid_csv: Option<String>,
    pub svg: Option<String>,
}

fn default_epsilon() -> Vec<f64> {
    vec![0.0]
}

fn default_threshold() -> f64 {
    1e-4
}

fn default_trials() -> usize {
    1
}

/// One JSON document drives an experiment. Presets fill in the dictionary,
/// ensemble and weights when they are omitted.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub dictionary: Option<DictionarySpec>,
    #[serde(default)]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default)]
    pub sampling: SamplingMode,
    pub m: Vec<usize>,
    pub s: Vec<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub weights: Option<WeightsSpec>,
    #[serde(default)]
    pub solver: SolverOverrides,
    #[serde(default)]
    pub signal: SignalSpec,
    #[serde(default = "default_threshold")]
    pub success_threshold: f64,
    #[serde(default)]
    pub estimate_delta: bool,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Canonical digest of the fully resolved config (preset expanded).
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// The two built-in presets from the worked examples: sparse harmonic
    /// signals observed through time samples, and Haar-frame signals
    /// observed through variable-density Fourier samples.
    pub fn apply_preset(&mut self) -> Result<()> {
        let Some(name) = self.preset.clone() else {
            return Ok(());
        };
        match name.as_str() {
            "harmonic-time-samples" => {
                let spec = self
                    .dictionary
                    .get_or_insert(DictionarySpec::Harmonic { n: 64, l: 1 });
                let n = match spec {
                    DictionarySpec::Harmonic { n, .. } => *n,
                    other => {
                        return Err(Error::Config(format!(
                            "preset harmonic-time-samples needs a harmonic dictionary, got {other:?}"
                        )))
                    }
                };
                self.ensemble.get_or_insert(EnsembleSpec::Standard {
                    n,
                    measure: MeasureSpec::Uniform,
                    seed: None,
                });
            }
            "fourier-haar-vds" => {
                let spec = self
                    .dictionary
                    .get_or_insert(DictionarySpec::Haar { p: 6 });
                let n = match spec {
                    DictionarySpec::Haar { p } => 1usize << *p,
                    other => {
                        return Err(Error::Config(format!(
                            "preset fourier-haar-vds needs a haar dictionary, got {other:?}"
                        )))
                    }
                };
                self.ensemble.get_or_insert(EnsembleSpec::DftByFrequency {
                    n,
                    measure: MeasureSpec::FromKappa,
                    seed: None,
                });
            }
            other => {
                return Err(Error::Config(format!("unknown preset `{other}`")));
            }
        }
        Ok(())
    }

    pub fn resolve(mut self) -> Result<ResolvedExperiment> {
        self.apply_preset()?;
        if self.m.is_empty() || self.s.is_empty() || self.epsilon.is_empty() {
            return Err(Error::Config("m, s and epsilon grids must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.epsilon.iter().any(|&e| e < 0.0 || !e.is_finite()) {
            return Err(Error::Config("epsilon values must be finite and >= 0".into()));
        }
        let dict_spec = self
            .dictionary
            .clone()
            .ok_or_else(|| Error::Config("missing dictionary".into()))?;
        let dictionary = Arc::new(build_dictionary(&dict_spec)?);
        let ens_spec = self
            .ensemble
            .clone()
            .ok_or_else(|| Error::Config("missing ensemble".into()))?;
        let (ensemble, ensemble_seed) = build_ensemble(&ens_spec)?;
        if ensemble.n() != dictionary.n() {
            return Err(Error::Config(format!(
                "ensemble dimension {} does not match dictionary dimension {}",
                ensemble.n(),
                dictionary.n()
            )));
        }
        if self.sampling == SamplingMode::Full {
            for &m in &self.m {
                if m != ensemble.n() {
                    return Err(Error::Config(
                        "full sampling requires every m to equal the ensemble dimension".into(),
                    ));
                }
            }
        }
        let omega = match &self.weights {
            None => Weights::uniform(dictionary.n_cols()),
            Some(WeightsSpec::Values(v)) => Weights::new(v.clone())?,
            Some(WeightsSpec::File { path }) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::io(path.clone(), e))?;
                let vals: Vec<f64> = text
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| Error::Config(format!("bad weight `{t}`"))))
                    .collect::<Result<_>>()?;
                Weights::new(vals)?
            }
        };
        if omega.len() != dictionary.n_cols() {
            return Err(Error::Config("weights length must match dictionary columns".into()));
        }
        let solver = self.solver.apply(SolverConfig::default());
        let digest = self.digest();
        Ok(ResolvedExperiment {
            config: self,
            dictionary,
            ensemble: Arc::new(ensemble),
            ensemble_seed,
            omega,
            solver,
            digest,
        })
    }
}

pub fn build_dictionary(spec: &DictionarySpec) -> Result<Dictionary> {
    match spec {
        DictionarySpec::Harmonic { n, l } => Dictionary::harmonic(*n, *l),
        DictionarySpec::Haar { p } => Dictionary::redundant_haar(*p),
        DictionarySpec::Identity { n } => Ok(Dictionary::identity(*n)),
        DictionarySpec::File { path } => Dictionary::from_text_file(path),
    }
}

/// Returns the ensemble plus the optional subsampling seed override
/// carried by the spec.
pub fn build_ensemble(spec: &EnsembleSpec) -> Result<(MeasurementEnsemble, Option<u64>)> {
    use crate::sampling::EnsembleKind;
    let build_vds = |n: usize, measure: MeasureSpec| -> Result<MeasurementEnsemble> {
        let basis = dft_rows_by_frequency(n);
        let kappa = match measure {
            MeasureSpec::FromKappa => fourier_haar_kappa(n),
            MeasureSpec::Powerlaw => (1..=n).map(|k| 1.0 / (k as f64).sqrt()).collect(),
            MeasureSpec::Uniform => vec![1.0; n],
        };
        MeasurementEnsemble::preconditioned(&basis, &kappa)
    };
    match spec {
        EnsembleSpec::Dft { n, measure, seed } => {
            if *measure != MeasureSpec::Uniform {
                return Err(Error::Config(
                    "the plain dft ensemble supports only the uniform measure; use dft-by-frequency".into(),
                ));
            }
            Ok((
                MeasurementEnsemble::build(EnsembleKind::ScaledDft, *n, crate::sampling::uniform_measure(*n))?,
                *seed,
            ))
        }
        EnsembleSpec::Standard { n, measure, seed } => {
            if *measure != MeasureSpec::Uniform {
                return Err(Error::Config(
                    "the standard-basis ensemble supports only the uniform measure".into(),
                ));
            }
            Ok((
                MeasurementEnsemble::build(
                    EnsembleKind::ScaledStandardBasis,
                    *n,
                    crate::sampling::uniform_measure(*n),
                )?,
                *seed,
            ))
        }
        EnsembleSpec::DftByFrequency { n, measure, seed } => Ok((build_vds(*n, *measure)?, *seed)),
        EnsembleSpec::File { path, measure, seed } => {
            if *measure != MeasureSpec::Uniform {
                return Err(Error::Config(
                    "file ensembles support only the uniform measure".into(),
                ));
            }
            let file = std::fs::File::open(path).map_err(|e| Error::io(path.clone(), e))?;
            let rows = crate::frames::read_complex_matrix(file)?;
            let n = rows.nrows();
            Ok((
                MeasurementEnsemble::custom(rows, crate::sampling::uniform_measure(n))?,
                *seed,
            ))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub dictionary: Arc<Dictionary>,
    pub ensemble: Arc<MeasurementEnsemble>,
    pub ensemble_seed: Option<u64>,
    pub omega: Weights,
    pub solver: SolverConfig,
    pub digest: String,
}

// ---------------------------------------------------------------------------
// signal generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SignalDraw {
    pub f: DVector<Complex64>,
    pub z: DVector<Complex64>,
    pub support: SupportSet,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn complex_gaussian(rng: &mut ChaCha20Rng) -> Complex64 {
    // Box-Muller on two uniforms
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let phi = 2.0 * std::f64::consts::PI * u2;
    Complex64::new(r * phi.cos(), r * phi.sin()) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draw a unit-norm signal f = D z with an admissible support.
///
/// ExactSparse: support uniform among {omega(Lambda) <= s}, coefficients
/// complex standard normal. Compressible: same support model, magnitudes
/// j^{-decay} assigned to a random permutation of the support, uniform
/// random phases.
pub fn generate_signal(
    d: &Dictionary,
    s: usize,
    omega: &Weights,
    kind: SignalSpec,
    seed: u64,
) -> Result<SignalDraw> {
    if omega.len() != d.n_cols() {
        return Err(Error::invalid("weights length must match dictionary columns"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let supp = uniform_support(&mut rng, omega, s as f64)?;
    let mut z = DVector::from_element(d.n_cols(), Complex64::new(0.0, 0.0));
    match kind {
        SignalSpec::ExactSparse => {
            for &j in &supp {
                z[j] = complex_gaussian(&mut rng);
            }
        }
        SignalSpec::Compressible { decay } => {
            let mut order = supp.clone();
            // random assignment of the magnitude ladder to support slots
            for i in (1..order.len()).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            for (rank, &j) in order.iter().enumerate() {
                let mag = ((rank + 1) as f64).powf(-decay);
                let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
                z[j] = Complex64::new(mag * phi.cos(), mag * phi.sin());
            }
        }
    }
    let mut f = d.synthesis(&z)?;
    let nf = f.norm();
    if nf == 0.0 {
        return Err(Error::Numerical("drew a zero signal; support maps to zero".into()));
    }
    f /= Complex64::new(nf, 0.0);
    z /= Complex64::new(nf, 0.0);
    Ok(SignalDraw {
        f,
        z,
        support: SupportSet::new(supp, omega),
    })
}

// ---------------------------------------------------------------------------
// trial engine
// ---------------------------------------------------------------------------

/// One recovery trial. `wall_time_ms` is intentionally excluded from the
/// canonical CSV so identical configs reproduce identical files.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub m: usize,
    pub s: usize,
    pub epsilon: f64,
    pub error_l2: f64,
    pub objective: f64,
    pub feasibility_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub eta_estimate: f64,
    pub delta_estimate: Option<f64>,
    pub success: bool,
    pub error: Option<String>,
    pub wall_time_ms: Option<u64>,
}

pub fn worker_count() -> usize {
    let avail = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var("REDICT_THREADS") {
        Ok(v) => v.parse::<usize>().ok().filter(|&k| k >= 1).unwrap_or(avail).min(avail),
        Err(_) => avail,
    }
}

/// Cheap per-(dictionary, s) localization estimate recorded with each trial:
/// the closed-form bound when available, otherwise a small Monte-Carlo
/// lower bound seeded from the base seed.
fn eta_for_records(exp: &ResolvedExperiment, s: usize) -> f64 {
    if exp.omega.is_uniform() && (exp.omega.get(0) - 1.0).abs() < 1e-15 {
        if let Ok(est) = localization_factor(
            &exp.dictionary,
            s,
            &exp.omega,
            LocalizationMethod::ClosedFormUpperBound,
            0,
            0,
        ) {
            return est.value;
        }
    }
    localization_factor(
        &exp.dictionary,
        s,
        &exp.omega,
        LocalizationMethod::MonteCarloLowerBound,
        64,
        exp.config.base_seed,
    )
    .map(|e| e.value)
    .unwrap_or(f64::NAN)
}

struct TrialTask {
    cell: usize,
    trial: usize,
    m: usize,
    s: usize,
    epsilon: f64,
    eta: f64,
}

fn run_trial(exp: &ResolvedExperiment, task: &TrialTask) -> TrialRecord {
    let started = Instant::now();
    let global_index = task.cell * exp.config.trials + task.trial;
    let trial_seed = exp.config.base_seed.wrapping_add(global_index as u64);
    let sample_seed = exp
        .ensemble_seed
        .map(|s| s.wrapping_add(global_index as u64))
        .unwrap_or(trial_seed);
    let signal_seed = splitmix64(trial_seed ^ 0xa11ce);
    let noise_seed = splitmix64(trial_seed ^ 0x0b0b);

    let mut record = TrialRecord {
        seed: trial_seed,
        m: task.m,
        s: task.s,
        epsilon: task.epsilon,
        error_l2: f64::INFINITY,
        objective: f64::INFINITY,
        feasibility_gap: f64::INFINITY,
        iterations: 0,
        converged: false,
        eta_estimate: task.eta,
        delta_estimate: None,
        success: false,
        error: None,
        wall_time_ms: None,
    };

    let result = (|| -> Result<()> {
        let op = match exp.config.sampling {
            SamplingMode::Iid => {
                SampledOperator::subsample(&exp.ensemble, task.m, sample_seed, None)?
            }
            SamplingMode::Full => SampledOperator::full_sampling(&exp.ensemble),
        };
        let draw = generate_signal(
            &exp.dictionary,
            task.s,
            &exp.omega,
            exp.config.signal,
            signal_seed,
        )?;
        let mut y = op.forward(&draw.f);
        if task.epsilon > 0.0 {
            let mut nrng = ChaCha20Rng::seed_from_u64(noise_seed);
            let mut e = DVector::from_fn(task.m, |_, _| complex_gaussian(&mut nrng));
            let ne = e.norm();
            // scaled to exactly epsilon in the constraint norm
            e *= Complex64::new(task.epsilon / ne, 0.0);
            y += e;
        }
        if exp.config.estimate_delta {
            let est = crate::drip::drip_delta(
                &op,
                &exp.dictionary,
                task.s,
                &exp.omega,
                crate::drip::DripMethod::RandomLowerBound,
                32,
                trial_seed,
                false,
            )?;
            record.delta_estimate = Some(est.delta);
        }
        let problem = AnalysisProblem {
            op,
            dictionary: Arc::clone(&exp.dictionary),
            y,
            epsilon: task.epsilon,
            omega: exp.omega.clone(),
        };
        let solved = solve_analysis(&problem, &exp.solver)?;
        record.error_l2 = (&solved.f_sharp - &draw.f).norm();
        record.objective = solved.objective;
        record.feasibility_gap = solved.feasibility_gap;
        record.iterations = solved.iterations;
        record.converged = solved.converged;
        record.success = record.error_l2 <= exp.config.success_threshold;
        Ok(())
    })();
    if let Err(e) = result {
        record.error = Some(e.to_string().replace([',', '\n'], ";"));
    }
    record.wall_time_ms = Some(started.elapsed().as_millis() as u64);
    record
}

/// Run every grid cell; per-trial failures are captured in the record's
/// `error` field, never fatal to the sweep.
pub fn run_recovery_experiment(exp: &ResolvedExperiment) -> Result<Vec<TrialRecord>> {
    let cfg = &exp.config;
    let mut tasks = Vec::new();
    let mut cell = 0usize;
    for &m in &cfg.m {
        for &s in &cfg.s {
            let eta = eta_for_records(exp, s);
            for &epsilon in &cfg.epsilon {
                for trial in 0..cfg.trials {
                    tasks.push(TrialTask {
                        cell,
                        trial,
                        m,
                        s,
                        epsilon,
                        eta,
                    });
                }
                cell += 1;
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Numerical(format!("worker pool: {e}")))?;
    let mut indexed: Vec<(usize, TrialRecord)> = pool.install(|| {
        use rayon::prelude::*;
        tasks
            .par_iter()
            .enumerate()
            .map(|(i, t)| (i, run_trial(exp, t)))
            .collect()
    });
    indexed.sort_by_key(|(i, _)| *i);
    Ok(indexed.into_iter().map(|(_, r)| r).collect())
}

// ---------------------------------------------------------------------------
// phase sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCell {
    pub m: usize,
    pub s: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub median_error_l2: f64,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn summarize_cells(records: &[TrialRecord]) -> Vec<PhaseCell> {
    let mut cells: Vec<PhaseCell> = Vec::new();
    let mut keys: Vec<(usize, usize, f64)> = Vec::new();
    for r in records {
        let key = (r.m, r.s, r.epsilon);
        if !keys.iter().any(|k| k.0 == key.0 && k.1 == key.1 && k.2 == key.2) {
            keys.push(key);
        }
    }
    for (m, s, epsilon) in keys {
        let group: Vec<&TrialRecord> = records
            .iter()
            .filter(|r| r.m == m && r.s == s && r.epsilon == epsilon)
            .collect();
        let trials = group.len();
        let successes = group.iter().filter(|r| r.success).count();
        let mut errors: Vec<f64> = group.iter().map(|r| r.error_l2).collect();
        cells.push(PhaseCell {
            m,
            s,
            epsilon,
            trials,
            successes,
            success_rate: successes as f64 / trials.max(1) as f64,
            median_error_l2: median(&mut errors),
        });
    }
    cells
}

/// Records plus their per-cell success summary.
pub fn run_phase_sweep(exp: &ResolvedExperiment) -> Result<(Vec<TrialRecord>, Vec<PhaseCell>)> {
    let records = run_recovery_experiment(exp)?;
    let cells = summarize_cells(&records);
    Ok((records, cells))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsity::weighted_norm;

    #[test]
    fn signal_is_deterministic_and_admissible() {
        let d = Dictionary::harmonic(8, 1).unwrap();
        let w = Weights::uniform(9);
        let a = generate_signal(&d, 3, &w, SignalSpec::ExactSparse, 99).unwrap();
        let b = generate_signal(&d, 3, &w, SignalSpec::ExactSparse, 99).unwrap();
        assert_eq!(a.f, b.f);
        assert_eq!(a.z, b.z);
        assert_eq!(a.support, b.support);
        assert!((a.f.norm() - 1.0).abs() < 1e-12);
        assert!(weighted_norm(&a.z, &w, 0.0).unwrap() <= 3.0 + 1e-12);
        // f = D z holds after normalization
        let back = d.synthesis(&a.z).unwrap();
        assert!((back - &a.f).norm() < 1e-12);
    }

    #[test]
    fn compressible_signal_is_admissible_too() {
        let d = Dictionary::redundant_haar(3).unwrap();
        let w = Weights::uniform(16);
        let draw =
            generate_signal(&d, 4, &w, SignalSpec::Compressible { decay: 1.5 }, 7).unwrap();
        assert!(weighted_norm(&draw.z, &w, 0.0).unwrap() <= 4.0 + 1e-12);
        assert!((draw.f.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_sparse_orthonormal_has_zero_unrecoverable_energy() {
        let d = Dictionary::identity(12);
        let w = Weights::uniform(12);
        let draw = generate_signal(&d, 3, &w, SignalSpec::ExactSparse, 5).unwrap();
        let e = crate::sparsity::unrecoverable_energy(&d, &draw.f, 3).unwrap();
        assert!(e < 1e-12);
    }

    #[test]
    fn signal_rejects_impossible_budget() {
        let d = Dictionary::identity(4);
        let w = Weights::new(vec![3.0; 4]).unwrap();
        assert!(generate_signal(&d, 8, &w, SignalSpec::ExactSparse, 1).is_err());
    }

    #[test]
    fn config_round_trip_and_digest_stability() {
        let text = r#"{
            "preset": "fourier-haar-vds",
            "m": [24, 48],
            "s": [2],
            "trials": 3,
            "base_seed": 11
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        let mut resolved_cfg = cfg.clone();
        resolved_cfg.apply_preset().unwrap();
        assert_eq!(
            resolved_cfg.dictionary,
            Some(DictionarySpec::Haar { p: 6 })
        );
        let d1 = resolved_cfg.digest();
        let d2 = resolved_cfg.digest();
        assert_eq!(d1, d2);
        let json = resolved_cfg.to_json();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(back, resolved_cfg);
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let text = r#"{"m": [1], "s": [1], "base_seed": 0, "bogus": 1}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn full_sampling_grid_cell_always_succeeds() {
        let cfg = ExperimentConfig {
            preset: None,
            dictionary: Some(DictionarySpec::Harmonic { n: 16, l: 1 }),
            ensemble: Some(EnsembleSpec::Standard {
                n: 16,
                measure: MeasureSpec::Uniform,
                seed: None,
            }),
            sampling: SamplingMode::Full,
            m: vec![16],
            s: vec![2],
            epsilon: vec![0.0],
            trials: 4,
            base_seed: 42,
            weights: None,
            solver: SolverOverrides::default(),
            signal: SignalSpec::ExactSparse,
            success_threshold: 1e-4,
            estimate_delta: false,
            output: OutputSpec::default(),
        };
        let exp = cfg.resolve().unwrap();
        let (records, cells) = run_phase_sweep(&exp).unwrap();
        assert_eq!(records.len(), 4);
        assert!(records.iter().all(|r| r.error.is_none()), "{records:?}");
        assert_eq!(cells.len(), 1);
        assert!((cells[0].success_rate - 1.0).abs() < 1e-12, "{cells:?}");
    }

    #[test]
    fn records_independent_of_worker_count() {
        let cfg = ExperimentConfig {
            preset: None,
            dictionary: Some(DictionarySpec::Identity { n: 8 }),
            ensemble: Some(EnsembleSpec::Dft {
                n: 8,
                measure: MeasureSpec::Uniform,
                seed: None,
            }),
            sampling: SamplingMode::Iid,
            m: vec![4, 8],
            s: vec![1],
            epsilon: vec![0.0],
            trials: 3,
            base_seed: 7,
            weights: None,
            solver: SolverOverrides::default(),
            signal: SignalSpec::ExactSparse,
            success_threshold: 1e-4,
            estimate_delta: false,
            output: OutputSpec::default(),
        };
        let exp = cfg.resolve().unwrap();
        let strip = |mut rs: Vec<TrialRecord>| {
            for r in &mut rs {
                r.wall_time_ms = None;
            }
            rs
        };
        std::env::set_var("REDICT_THREADS", "1");
        let a = strip(run_recovery_experiment(&exp).unwrap());
        std::env::set_var("REDICT_THREADS", "4");
        let b = strip(run_recovery_experiment(&exp).unwrap());
        std::env::remove_var("REDICT_THREADS");
        assert_eq!(a, b);
    }

    #[test]
    fn delta_estimates_are_recorded_when_requested() {
        let cfg = ExperimentConfig {
            preset: None,
            dictionary: Some(DictionarySpec::Identity { n: 8 }),
            ensemble: Some(EnsembleSpec::Dft {
                n: 8,
                measure: MeasureSpec::Uniform,
                seed: None,
            }),
            sampling: SamplingMode::Iid,
            m: vec![6],
            s: vec![1],
            epsilon: vec![0.0],
            trials: 2,
            base_seed: 17,
            weights: None,
            solver: SolverOverrides::default(),
            signal: SignalSpec::ExactSparse,
            success_threshold: 1e-4,
            estimate_delta: true,
            output: OutputSpec::default(),
        };
        let exp = cfg.resolve().unwrap();
        let records = run_recovery_experiment(&exp).unwrap();
        assert!(records.iter().all(|r| r.error.is_none()));
        for r in &records {
            let delta = r.delta_estimate.expect("delta recorded");
            assert!(delta >= 0.0);
        }
    }

    #[test]
    fn underdetermined_cell_fails() {
        // m = 1 with s >= 2: produces some record with success rate ~ 0
        let cfg = ExperimentConfig {
            preset: Some("harmonic-time-samples".into()),
            dictionary: Some(DictionarySpec::Harmonic { n: 16, l: 1 }),
            ensemble: None,
            sampling: SamplingMode::Iid,
            m: vec![1],
            s: vec![2],
            epsilon: vec![0.0],
            trials: 5,
            base_seed: 3,
            weights: None,
            solver: SolverOverrides::default(),
            signal: SignalSpec::ExactSparse,
            success_threshold: 1e-4,
            estimate_delta: false,
            output: OutputSpec::default(),
        };
        let exp = cfg.resolve().unwrap();
        let (_, cells) = run_phase_sweep(&exp).unwrap();
        assert!(cells[0].success_rate < 0.2);
    }
}
