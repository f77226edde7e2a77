//! Parsing of the compact command-line specs for dictionaries, bases and
//! ensembles: `harmonic:n,L`, `haar:p`, `identity:n`, `dft:n`,
//! `dft-by-frequency:n[:measure]`, or a complex-matrix file path.

use std::path::PathBuf;

use nalgebra::{Complex, DMatrix};

type Complex64 = Complex<f64>;

use redict::{
    dft_rows_by_frequency, fourier_haar_kappa, Dictionary, Error, MeasurementEnsemble, Weights,
};

pub fn parse_dict(spec: &str) -> redict::Result<Dictionary> {
    if let Some(rest) = spec.strip_prefix("harmonic:") {
        let (n, l) = rest
            .split_once(',')
            .ok_or_else(|| Error::invalid("expected harmonic:n,L"))?;
        let n: usize = n.trim().parse().map_err(|_| Error::invalid("bad n"))?;
        let l: usize = l.trim().parse().map_err(|_| Error::invalid("bad L"))?;
        return Dictionary::harmonic(n, l);
    }
    if let Some(rest) = spec.strip_prefix("haar:") {
        let p: u32 = rest.trim().parse().map_err(|_| Error::invalid("bad p"))?;
        return Dictionary::redundant_haar(p);
    }
    if let Some(rest) = spec.strip_prefix("identity:") {
        let n: usize = rest.trim().parse().map_err(|_| Error::invalid("bad n"))?;
        return Ok(Dictionary::identity(n));
    }
    Dictionary::from_text_file(spec)
}

/// An orthonormal sampling basis for coherence profiles. `dft` is the
/// unitary DFT in by-|frequency| row order (DC row first).
pub fn parse_basis(spec: &str, n: usize) -> redict::Result<DMatrix<Complex64>> {
    match spec {
        "dft" => Ok(dft_rows_by_frequency(n)),
        "standard" => Ok(DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)
        })),
        path => {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path.to_string(), e))?;
            let rows = redict::frames::read_complex_matrix(file)?;
            if rows.nrows() != n || rows.ncols() != n {
                return Err(Error::invalid(format!(
                    "basis must be {n} x {n}, file is {} x {}",
                    rows.nrows(),
                    rows.ncols()
                )));
            }
            Ok(rows)
        }
    }
}

pub fn parse_ensemble(spec: &str) -> redict::Result<MeasurementEnsemble> {
    let parse_n = |rest: &str| -> redict::Result<usize> {
        rest.trim().parse().map_err(|_| Error::invalid("bad ensemble dimension"))
    };
    if let Some(rest) = spec.strip_prefix("dft-by-frequency:") {
        let (n, measure) = match rest.split_once(':') {
            Some((n, m)) => (parse_n(n)?, m),
            None => (parse_n(rest)?, "from-kappa"),
        };
        let basis = dft_rows_by_frequency(n);
        let kappa = match measure {
            "from-kappa" => fourier_haar_kappa(n),
            "powerlaw" => (1..=n).map(|k| 1.0 / (k as f64).sqrt()).collect(),
            "uniform" => vec![1.0; n],
            other => return Err(Error::invalid(format!("unknown measure `{other}`"))),
        };
        return MeasurementEnsemble::preconditioned(&basis, &kappa);
    }
    if let Some(rest) = spec.strip_prefix("dft:") {
        return MeasurementEnsemble::scaled_dft(parse_n(rest)?);
    }
    if let Some(rest) = spec.strip_prefix("standard:") {
        return MeasurementEnsemble::scaled_standard_basis(parse_n(rest)?);
    }
    let file = std::fs::File::open(spec).map_err(|e| Error::io(spec.to_string(), e))?;
    let rows = redict::frames::read_complex_matrix(file)?;
    let n = rows.nrows();
    MeasurementEnsemble::custom(rows, vec![1.0 / n as f64; n])
}

pub fn load_weights(path: &Option<PathBuf>, n_cols: usize) -> redict::Result<Weights> {
    match path {
        None => Ok(Weights::uniform(n_cols)),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::io(p.display().to_string(), e))?;
            let vals: Vec<f64> = text
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad weight `{t}`")))
                })
                .collect::<redict::Result<_>>()?;
            if vals.len() != n_cols {
                return Err(Error::invalid(format!(
                    "weights file has {} entries, dictionary has {n_cols} columns",
                    vals.len()
                )));
            }
            Weights::new(vals)
        }
    }
}
