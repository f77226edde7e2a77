//! Parseval frame constructions and their basic maps.
//!
//! A dictionary is an n x N complex synthesis matrix whose columns span C^n.
//! The built-in constructors (harmonic, redundant Haar) produce Parseval
//! frames: D D* = I. Dense storage is the source of truth; every operation
//! is a plain dense product at desk scale (n <= 4096).

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write as IoWrite};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{format_complex, parse_complex};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DictionaryKind {
    /// First n rows of the (n+L) x (n+L) unitary DFT.
    Harmonic { l: usize },
    /// Haar wavelet basis union its one-sample circular shift, scaled by 1/sqrt(2).
    RedundantHaar { p: u32 },
    Custom,
}

impl fmt::Display for DictionaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DictionaryKind::Harmonic { l } => write!(f, "harmonic(L={l})"),
            DictionaryKind::RedundantHaar { p } => write!(f, "redundant-haar(p={p})"),
            DictionaryKind::Custom => write!(f, "custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dictionary {
    n: usize,
    n_cols: usize,
    entries: DMatrix<Complex64>,
    kind: DictionaryKind,
}

/// Which side of the dictionary to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// f = D x, input length N.
    Synthesis,
    /// D* f, input length n.
    Analysis,
}

impl Dictionary {
    /// Harmonic frame: d_{jk} = (n+L)^{-1/2} exp(2 pi i j k / (n+L)) with
    /// 1-based j in [n], k in [N], N = n + L.
    pub fn harmonic(n: usize, l: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("harmonic frame requires n >= 1"));
        }
        let cols = n
            .checked_add(l)
            .ok_or_else(|| Error::invalid("n + L overflows"))?;
        let scale = 1.0 / (cols as f64).sqrt();
        let entries = DMatrix::from_fn(n, cols, |j, k| {
            // the phase convention is 1-based in both j and k
            let phase = 2.0 * std::f64::consts::PI * ((j + 1) as f64) * ((k + 1) as f64)
                / (cols as f64);
            Complex64::new(phase.cos() * scale, phase.sin() * scale)
        });
        Ok(Dictionary {
            n,
            n_cols: cols,
            entries,
            kind: DictionaryKind::Harmonic { l },
        })
    }

    /// Redundant Haar frame in C^{2^p x 2^{p+1}}. Column order: h0, shifted h0,
    /// then levels l = 0..p-1 with k ascending, basis column before its shift.
    /// All columns are scaled by 1/sqrt(2); the shift is circular by one index.
    pub fn redundant_haar(p: u32) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("redundant Haar frame requires p >= 1"));
        }
        if p > 16 {
            return Err(Error::Resource(format!(
                "redundant Haar frame with p={p} exceeds the dense memory budget"
            )));
        }
        let n = 1usize << p;
        let n_cols = n * 2;
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
        basis.push(vec![(n as f64).powf(-0.5); n]);
        for level in 0..p {
            let amp = 2f64.powf((level as f64 - p as f64) / 2.0);
            let block = n >> level; // 2^{p-level}
            for k in 0..(1usize << level) {
                let mut h = vec![0.0; n];
                let start = k * block;
                for j in 0..block / 2 {
                    h[start + j] = amp;
                    h[start + block / 2 + j] = -amp;
                }
                basis.push(h);
            }
        }

        let mut entries = DMatrix::from_element(n, n_cols, Complex64::new(0.0, 0.0));
        for (b, h) in basis.iter().enumerate() {
            for j in 0..n {
                entries[(j, 2 * b)] = Complex64::new(h[j] * inv_sqrt2, 0.0);
                // circular shift: h~[j] = h[(j+1) mod n]
                entries[(j, 2 * b + 1)] = Complex64::new(h[(j + 1) % n] * inv_sqrt2, 0.0);
            }
        }
        Ok(Dictionary {
            n,
            n_cols,
            entries,
            kind: DictionaryKind::RedundantHaar { p },
        })
    }

    /// The identity dictionary (orthonormal, N = n).
    pub fn identity(n: usize) -> Self {
        Dictionary {
            n,
            n_cols: n,
            entries: DMatrix::from_fn(n, n, |i, j| {
                Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)
            }),
            kind: DictionaryKind::Custom,
        }
    }

    /// Wrap an arbitrary matrix. Requires N >= n; Parseval is not enforced.
    pub fn custom(entries: DMatrix<Complex64>) -> Result<Self> {
        let (n, n_cols) = (entries.nrows(), entries.ncols());
        if n == 0 || n_cols < n {
            return Err(Error::invalid(format!(
                "dictionary must have N >= n >= 1, got {n} x {n_cols}"
            )));
        }
        Ok(Dictionary {
            n,
            n_cols,
            entries,
            kind: DictionaryKind::Custom,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of columns N.
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn kind(&self) -> &DictionaryKind {
        &self.kind
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn column(&self, j: usize) -> DVector<Complex64> {
        self.entries.column(j).clone_owned()
    }

    /// True when every entry has negligible imaginary part.
    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|z| z.im.abs() <= 1e-13)
    }

    pub fn apply(&self, v: &DVector<Complex64>, direction: Direction) -> Result<DVector<Complex64>> {
        match direction {
            Direction::Synthesis => {
                if v.len() != self.n_cols {
                    return Err(Error::invalid(format!(
                        "synthesis input must have length {}, got {}",
                        self.n_cols,
                        v.len()
                    )));
                }
                Ok(&self.entries * v)
            }
            Direction::Analysis => {
                if v.len() != self.n {
                    return Err(Error::invalid(format!(
                        "analysis input must have length {}, got {}",
                        self.n,
                        v.len()
                    )));
                }
                Ok(self.entries.ad_mul(v))
            }
        }
    }

    pub fn synthesis(&self, x: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        self.apply(x, Direction::Synthesis)
    }

    pub fn analysis(&self, f: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        self.apply(f, Direction::Analysis)
    }

    /// D* D.
    pub fn gram(&self) -> GramMatrix {
        GramMatrix {
            entries: self.entries.ad_mul(&self.entries),
        }
    }

    /// Max-entry deviation of D D* from the identity.
    pub fn parseval_defect(&self) -> f64 {
        let ddstar = &self.entries * self.entries.adjoint();
        let mut defect = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((ddstar[(i, j)] - Complex64::new(target, 0.0)).norm());
            }
        }
        defect
    }

    /// Read the `complex-matrix` text format.
    pub fn from_text(reader: impl Read) -> Result<Self> {
        let entries = read_complex_matrix(reader)?;
        Dictionary::custom(entries)
    }

    pub fn from_text_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Dictionary::from_text(file)
    }

    pub fn to_text(&self, w: &mut impl IoWrite) -> std::io::Result<()> {
        write_complex_matrix(&self.entries, w)
    }
}

#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: DMatrix<Complex64>,
}

impl GramMatrix {
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn hermitian_defect(&self) -> f64 {
        let n = self.entries.nrows();
        let mut d = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                d = d.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        d
    }

    /// Number of entries with magnitude above `tol` in column `j`.
    pub fn column_support(&self, j: usize, tol: f64) -> usize {
        self.entries.column(j).iter().filter(|z| z.norm() > tol).count()
    }
}

/// Text format: header `complex-matrix <n> <N>`, then n lines of N
/// whitespace-separated `re:im` pairs. NaN/Inf entries are rejected.
pub fn read_complex_matrix(reader: impl Read) -> Result<DMatrix<Complex64>> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("empty matrix file"))?
        .map_err(|e| Error::io("<matrix>", e))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("complex-matrix") {
        return Err(Error::invalid("expected `complex-matrix <n> <N>` header"));
    }
    let n: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::invalid("bad row count in header"))?;
    let cols: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::invalid("bad column count in header"))?;
    let mut entries = DMatrix::from_element(n, cols, Complex64::new(0.0, 0.0));
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| Error::invalid(format!("expected {n} rows, file ends at row {i}")))?
            .map_err(|e| Error::io("<matrix>", e))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != cols {
            return Err(Error::invalid(format!(
                "row {i} has {} entries, expected {cols}",
                toks.len()
            )));
        }
        for (j, tok) in toks.iter().enumerate() {
            entries[(i, j)] = parse_complex(tok)?;
        }
    }
    Ok(entries)
}

pub fn write_complex_matrix(m: &DMatrix<Complex64>, w: &mut impl IoWrite) -> std::io::Result<()> {
    writeln!(w, "complex-matrix {} {}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_complex(m[(i, j)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}
