//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative rank cutoff used when inverting on a subspace.
pub const RANK_RTOL: f64 = 1e-10;

/// Hermitian eigendecomposition (eigenvalues real, ascending not guaranteed).
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let eig = m.clone().symmetric_eigen();
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// Action of the Moore-Penrose pseudo-inverse of a Hermitian PSD matrix,
/// restricted to its row space. Directions with eigenvalue below
/// `RANK_RTOL * lambda_max` are treated as null.
pub struct PsdPseudoInverse {
    eigvals: Vec<f64>,
    eigvecs: DMatrix<Complex64>,
    cutoff: f64,
}

impl PsdPseudoInverse {
    pub fn new(g: &DMatrix<Complex64>) -> Self {
        let (eigvals, eigvecs) = hermitian_eigen(g);
        let lmax = eigvals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        PsdPseudoInverse {
            eigvals,
            eigvecs,
            cutoff: RANK_RTOL * lmax,
        }
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let mut out = DVector::from_element(v.len(), Complex64::new(0.0, 0.0));
        for (i, &lam) in self.eigvals.iter().enumerate() {
            if lam > self.cutoff {
                let q = self.eigvecs.column(i);
                let coef = q.dotc(v) / Complex64::new(lam, 0.0);
                out.axpy(coef, &q.clone_owned(), Complex64::new(1.0, 0.0));
            }
        }
        out
    }

}

/// Orthonormal basis of the column space of `m`, via column-pivoted QR with
/// a relative rank threshold on the diagonal of R.
pub fn orthonormal_range_basis(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let nrows = m.nrows();
    let k = m.ncols().min(nrows);
    let qr = m.clone().col_piv_qr();
    let q = qr.q();
    let r = qr.r();
    let rmax = (0..k).map(|i| r[(i, i)].norm()).fold(0.0f64, f64::max);
    let rank = (0..k)
        .take_while(|&i| r[(i, i)].norm() > RANK_RTOL * rmax && rmax > 0.0)
        .count();
    q.columns(0, rank).clone_owned()
}

/// Largest-magnitude eigenvalue of a Hermitian matrix by shifted power
/// iteration: one run on M + cI and one on -M + cI with c a Gershgorin-type
/// bound, each converging to the extreme algebraic eigenvalue.
pub fn hermitian_extreme_magnitude(m: &DMatrix<Complex64>, tol: f64, max_iters: usize) -> f64 {
    let k = m.nrows();
    if k == 0 {
        return 0.0;
    }
    if k == 1 {
        return m[(0, 0)].re.abs();
    }
    let shift: f64 = (0..k)
        .map(|i| (0..k).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0f64, f64::max);
    if shift == 0.0 {
        return 0.0;
    }
    let run = |sign: f64| -> f64 {
        // power iteration on sign*M + shift*I (PSD), Rayleigh value minus shift
        let mut v = DVector::from_fn(k, |i, _| Complex64::new(1.0 + (i as f64) * 1e-3, 0.0));
        v /= Complex64::new(v.norm(), 0.0);
        let mut lam = 0.0f64;
        for _ in 0..max_iters {
            let mut w = m * &v * Complex64::new(sign, 0.0);
            w.axpy(Complex64::new(shift, 0.0), &v, Complex64::new(1.0, 0.0));
            let nw = w.norm();
            if nw == 0.0 {
                return 0.0;
            }
            w /= Complex64::new(nw, 0.0);
            let new_lam = nw - shift;
            if (new_lam - lam).abs() <= tol * new_lam.abs().max(1.0) {
                return new_lam;
            }
            lam = new_lam;
            v = w;
        }
        lam
    };
    let hi = run(1.0);
    let lo = run(-1.0);
    hi.abs().max(lo.abs())
}

/// Parse a `re:im` token.
pub fn parse_complex(tok: &str) -> Result<Complex64> {
    let (re, im) = tok
        .split_once(':')
        .ok_or_else(|| Error::invalid(format!("expected re:im pair, got `{tok}`")))?;
    let re: f64 = re
        .parse()
        .map_err(|_| Error::invalid(format!("bad real part `{re}`")))?;
    let im: f64 = im
        .parse()
        .map_err(|_| Error::invalid(format!("bad imaginary part `{im}`")))?;
    if !re.is_finite() || !im.is_finite() {
        return Err(Error::invalid("non-finite entries are not allowed"));
    }
    Ok(Complex64::new(re, im))
}

pub fn format_complex(z: Complex64) -> String {
    format!("{}:{}", z.re, z.im)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_inverts_on_range() {
        let g = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0])
            .map(|x| Complex64::new(x, 0.0));
        let p = PsdPseudoInverse::new(&g);
        let v = DVector::from_vec(vec![Complex64::new(8.0, 0.0), Complex64::new(0.0, 0.0)]);
        let out = p.apply(&v);
        assert!((out[0] - Complex64::new(2.0, 0.0)).norm() < 1e-12);
        assert!(out[1].norm() < 1e-12);
    }

    #[test]
    fn extreme_magnitude_picks_negative_side() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -3.0])
            .map(|x| Complex64::new(x, 0.0));
        let lam = hermitian_extreme_magnitude(&m, 1e-12, 10_000);
        assert!((lam - 3.0).abs() < 1e-9);
    }

    #[test]
    fn range_basis_handles_rank_deficiency() {
        // two identical columns -> rank 1
        let m = DMatrix::from_fn(4, 2, |i, _| Complex64::new((i + 1) as f64, 0.0));
        let q = orthonormal_range_basis(&m);
        assert_eq!(q.ncols(), 1);
        assert!((q.column(0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complex_token_round_trip() {
        let z = Complex64::new(-1.25, 3.5e-3);
        let s = format_complex(z);
        assert_eq!(parse_complex(&s).unwrap(), z);
        assert!(parse_complex("1:NaN").is_err());
        assert!(parse_complex("garbage").is_err());
    }
}
