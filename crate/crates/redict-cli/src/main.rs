//! Command-line frontend: frame diagnostics, coherence profiles,
//! localization factors, empirical D-RIP constants, single recovery runs,
//! phase sweeps and report rendering.
//!
//! Exit codes: 0 success, 2 config/argument error, 3 numerical failure.

mod spec;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use redict::{
    coherence_profile, drip_delta, localization_factor, run_phase_sweep, summarize_cells,
    DripMethod, Error, ExperimentConfig, LocalizationMethod, ReportFormat, ReportMeta,
    SampledOperator,
};

use spec::{load_weights, parse_basis, parse_dict, parse_ensemble};

#[derive(Parser)]
#[command(name = "redict", version, about = "compressive sensing with redundant dictionaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EtaMethod {
    Exact,
    Mc,
    Bound,
}

#[derive(Clone, Copy, ValueEnum)]
enum DripMethodArg {
    Exact,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Svg,
}

#[derive(Subcommand)]
enum Command {
    /// Print dictionary facts: dimensions, kind, Parseval defect, Gram stats.
    FrameInfo {
        /// harmonic:n,L | haar:p | identity:n | a complex-matrix file path
        #[arg(long)]
        dict: String,
    },
    /// Coherence of a sampling basis against a dictionary.
    Coherence {
        /// dft | standard | a complex-matrix file path
        #[arg(long)]
        basis: String,
        #[arg(long)]
        dict: String,
        /// Emit the per-row local coherence profile as CSV.
        #[arg(long)]
        local: bool,
        /// Output path for the CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Localization factor estimate.
    Eta {
        #[arg(long)]
        dict: String,
        #[arg(long)]
        s: usize,
        /// Whitespace-separated weights file (all entries >= 1).
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: EtaMethod,
        #[arg(long, default_value_t = 100_000_000)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical D-RIP constant of a seeded subsampled operator.
    Drip {
        #[arg(long)]
        dict: String,
        /// dft:n | standard:n | dft-by-frequency:n[:uniform|powerlaw|from-kappa] | file path
        #[arg(long)]
        ensemble: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        s: usize,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: DripMethodArg,
        #[arg(long, default_value_t = 100_000)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the per-support maxima table as CSV.
        #[arg(long)]
        per_support: Option<PathBuf>,
    },
    /// Run the recovery experiment described by a JSON config; emits the
    /// solver record CSV.
    Recover {
        #[arg(long)]
        config: PathBuf,
        /// Output path (falls back to the config's output.records_csv, then stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an (m, s, epsilon) phase sweep; emits the per-cell grid CSV and
    /// optionally the full records and an SVG report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Re-render reports from a records CSV.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_of(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::Precondition(_)
        | Error::Unsupported(_)
        | Error::Validation { .. } => 2,
        Error::Numerical(_) | Error::Resource(_) | Error::Io { .. } => 3,
    }
}

fn write_out(out: &Option<PathBuf>, content: &str) -> redict::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Error::io(path.display().to_string(), e)),
        None => {
            print!("{content}");
            std::io::stdout().flush().ok();
            Ok(())
        }
    }
}

fn load_config(path: &PathBuf) -> redict::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
}

fn run(cli: Cli) -> redict::Result<()> {
    match cli.command {
        Command::FrameInfo { dict } => {
            let d = parse_dict(&dict)?;
            let g = d.gram();
            let max_support = (0..d.n_cols())
                .map(|k| g.column_support(k, 1e-12))
                .max()
                .unwrap_or(0);
            println!("kind: {}", d.kind());
            println!("n: {}", d.n());
            println!("N: {}", d.n_cols());
            println!("redundancy: {}", d.n_cols() as f64 / d.n() as f64);
            println!("parseval_defect: {:e}", d.parseval_defect());
            println!("gram_hermitian_defect: {:e}", g.hermitian_defect());
            println!("gram_max_column_support: {max_support}");
            Ok(())
        }
        Command::Coherence {
            basis,
            dict,
            local,
            out,
        } => {
            let d = parse_dict(&dict)?;
            let b = parse_basis(&basis, d.n())?;
            let prof = coherence_profile(&b, &d)?;
            if local {
                let mut text = String::from("index,mu_loc\n");
                for (i, v) in prof.mu_loc.iter().enumerate() {
                    text.push_str(&format!("{},{}\n", i + 1, v));
                }
                write_out(&out, &text)
            } else {
                write_out(&out, &format!("mu,{}\n", prof.mu))
            }
        }
        Command::Eta {
            dict,
            s,
            weights,
            method,
            budget,
            seed,
            out,
        } => {
            let d = parse_dict(&dict)?;
            let omega = load_weights(&weights, d.n_cols())?;
            let method = match method {
                EtaMethod::Exact => LocalizationMethod::ExactEnumeration,
                EtaMethod::Mc => LocalizationMethod::MonteCarloLowerBound,
                EtaMethod::Bound => LocalizationMethod::ClosedFormUpperBound,
            };
            let est = localization_factor(&d, s, &omega, method, budget, seed)?;
            let seed_field = est.seed.map(|x| x.to_string()).unwrap_or_default();
            let text = format!(
                "method,s,value,trials,seed\n{},{},{},{},{}\n",
                est.method, est.s, est.value, est.trials_or_supports, seed_field
            );
            write_out(&out, &text)
        }
        Command::Drip {
            dict,
            ensemble,
            m,
            s,
            weights,
            method,
            budget,
            seed,
            per_support,
        } => {
            let d = parse_dict(&dict)?;
            let e = parse_ensemble(&ensemble)?;
            if e.n() != d.n() {
                return Err(Error::invalid(format!(
                    "ensemble dimension {} does not match dictionary dimension {}",
                    e.n(),
                    d.n()
                )));
            }
            let e = std::sync::Arc::new(e);
            let op = SampledOperator::subsample(&e, m, seed, None)?;
            let omega = load_weights(&weights, d.n_cols())?;
            let method = match method {
                DripMethodArg::Exact => DripMethod::ExactEnumeration,
                DripMethodArg::Random => DripMethod::RandomLowerBound,
            };
            let est = drip_delta(&op, &d, s, &omega, method, budget, seed, per_support.is_some())?;
            println!(
                "method,s,m,delta,supports,seed\n{},{},{},{},{},{}",
                est.method,
                est.s,
                m,
                est.delta,
                est.supports_examined,
                est.seed.map(|x| x.to_string()).unwrap_or_default()
            );
            if let Some(path) = per_support {
                let mut text = String::from("support,weighted_size,delta\n");
                for (supp, delta) in est.per_support_max.as_deref().unwrap_or(&[]) {
                    let idx: Vec<String> =
                        supp.indices.iter().map(|i| i.to_string()).collect();
                    text.push_str(&format!(
                        "{},{},{}\n",
                        idx.join(";"),
                        supp.weighted_size,
                        delta
                    ));
                }
                write_out(&Some(path), &text)?;
            }
            Ok(())
        }
        Command::Recover { config, out } => {
            let cfg = load_config(&config)?;
            let exp = cfg.resolve()?;
            let records = redict::run_recovery_experiment(&exp)?;
            let meta = ReportMeta::new(exp.digest.clone(), exp.config.base_seed);
            let mut buf = Vec::new();
            redict::write_solver_records_csv(&records, &meta, &mut buf)
                .map_err(|e| Error::io("<records>", e))?;
            let text = String::from_utf8(buf).expect("csv is utf8");
            let target = out.or_else(|| exp.config.output.records_csv.clone().map(PathBuf::from));
            write_out(&target, &text)
        }
        Command::Sweep {
            config,
            out,
            records,
            svg,
        } => {
            let cfg = load_config(&config)?;
            let exp = cfg.resolve()?;
            let (trial_records, cells) = run_phase_sweep(&exp)?;
            let meta = ReportMeta::new(exp.digest.clone(), exp.config.base_seed);

            let mut grid = Vec::new();
            redict::write_grid_csv(&cells, &meta, &mut grid)
                .map_err(|e| Error::io("<grid>", e))?;
            let grid_target =
                out.or_else(|| exp.config.output.grid_csv.clone().map(PathBuf::from));
            write_out(&grid_target, &String::from_utf8(grid).expect("csv is utf8"))?;

            let records_target =
                records.or_else(|| exp.config.output.records_csv.clone().map(PathBuf::from));
            if let Some(path) = records_target {
                let mut buf = Vec::new();
                redict::write_records_csv(&trial_records, &meta, &mut buf)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                std::fs::write(&path, buf).map_err(|e| Error::io(path.display().to_string(), e))?;
            }
            let svg_target = svg.or_else(|| exp.config.output.svg.clone().map(PathBuf::from));
            if let Some(path) = svg_target {
                let file = std::fs::File::create(&path)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
                let mut w = std::io::BufWriter::new(file);
                redict::write_svg_report(&cells, &meta, &mut w)
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
            }
            Ok(())
        }
        Command::Report {
            records,
            format,
            out,
        } => {
            let file = std::fs::File::open(&records)
                .map_err(|e| Error::io(records.display().to_string(), e))?;
            let (parsed, meta) = redict::parse_records_csv(file)?;
            let meta = meta.unwrap_or_else(|| ReportMeta::new("unknown", 0));
            let format = match format {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Svg => ReportFormat::Svg,
            };
            let written = redict::emit_report(&parsed, &meta, format, &out)?;
            for path in written {
                eprintln!("wrote {}", path.display());
            }
            let _ = summarize_cells(&parsed);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_of(&err))
        }
    }
}
