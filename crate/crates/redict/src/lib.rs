//! Redundant-dictionary compressive sensing toolkit: Parseval frame
//! constructions, bounded orthonormal sampling systems with coherence
//! diagnostics and variable-density preconditioning, weighted sparsity and
//! localization-factor estimation, empirical D-RIP constants, a weighted
//! l1-analysis solver, and a seeded experiment harness with CSV/SVG
//! reporting.

pub mod drip;
pub mod error;
pub mod frames;
pub mod harness;
mod linalg;
pub mod report;
pub mod sampling;
pub mod solver;
pub mod sparsity;
mod supports;

pub use error::{Error, Result};
pub use frames::{Dictionary, DictionaryKind, Direction, GramMatrix};
pub use sampling::{
    coherence_profile, dft_rows_by_frequency, fourier_haar_kappa, measure_and_weights_from_kappa,
    CoherenceProfile, EnsembleKind, MeasureDirection, MeasurementEnsemble, OrthonormalityReport,
    SampledOperator, PRNG_NAME,
};
pub use sparsity::{
    best_s_term, localization_factor, unrecoverable_energy, weighted_norm, LocalizationEstimate,
    LocalizationMethod, SupportSet, Weights,
};
pub use drip::{
    check_drip_pair, drip_delta, measurement_bound_value, required_measurements, BoundConfig,
    BoundForm, DripEstimate, DripMethod,
};
pub use solver::{
    certify_solution, operator_norm, project_l2_ball, prox_weighted_l1, solve_analysis,
    solve_analysis_from, AnalysisProblem, Certificate, DenseOperator, LinearOperator,
    SolverConfig, SolverResult, SolverState,
};
pub use harness::{
    generate_signal, run_phase_sweep, run_recovery_experiment, summarize_cells, DictionarySpec,
    EnsembleSpec, ExperimentConfig, MeasureSpec, PhaseCell, ResolvedExperiment, SamplingMode,
    SignalDraw, SignalSpec, TrialRecord,
};
pub use report::{
    emit_report, parse_records_csv, write_grid_csv, write_records_csv, write_solver_records_csv,
    write_svg_report, ReportFormat, ReportMeta,
};
