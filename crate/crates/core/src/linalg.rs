//! Small dense Hermitian helpers on top of nalgebra.

use matrixmultiply::CGemmOption;
use nalgebra::linalg::{Cholesky, SymmetricEigen};
use nalgebra::Dyn;

use crate::{CMatrix, Error, Result, C64};

/// Relative eigenvalue floor (w.r.t. `trace / M`) below which a negative
/// eigenvalue is treated as round-off rather than indefiniteness.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Eigenpairs whose eigenvalue is below this fraction of the largest are
/// dropped from square-root factors.
const FACTOR_RANK_CUTOFF: f64 = 1e-13;

const SAMPLING_JITTER: f64 = 1e-12;

pub fn trace_re(m: &CMatrix) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `(m + mᴴ) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn is_hermitian(m: &CMatrix, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = frobenius(m).max(f64::MIN_POSITIVE);
    frobenius(&(m - m.adjoint())) <= rel_tol * scale
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Checks positive semi-definiteness with the tolerance `-1e-9 · trace / M`.
pub fn check_psd(m: &CMatrix) -> Result<()> {
    let n = m.nrows().max(1) as f64;
    let tolerance = PSD_TOLERANCE * trace_re(m).abs() / n;
    let min = hermitian_eigenvalues(m).first().copied().unwrap_or(0.0);
    if min < -tolerance {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            tolerance,
        });
    }
    Ok(())
}

/// Returns a factor `L` (M × r) with `L·Lᴴ = R` for a PSD Hermitian `R`.
///
/// Negative eigenvalues down to `-1e-9 · trace / M` are clipped to zero;
/// anything more negative is an error. Numerically null directions are
/// dropped, so `r` is the numerical rank.
pub fn psd_factor(r: &CMatrix) -> Result<CMatrix> {
    let m = r.nrows();
    let tolerance = PSD_TOLERANCE * trace_re(r).abs() / m.max(1) as f64;
    let eig = SymmetricEigen::new(hermitize(r));
    let lambda_max = eig.eigenvalues.iter().copied().fold(0.0f64, f64::max);
    let mut cols = Vec::new();
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -tolerance {
            return Err(Error::NotPsd {
                min_eigenvalue: lambda,
                tolerance,
            });
        }
        if lambda > FACTOR_RANK_CUTOFF * lambda_max && lambda > 0.0 {
            cols.push(eig.eigenvectors.column(i) * C64::new(lambda.sqrt(), 0.0));
        }
    }
    if cols.is_empty() {
        return Ok(CMatrix::zeros(m, 0));
    }
    Ok(CMatrix::from_columns(&cols))
}

/// Dense product `a · b`, through a blocked complex GEMM kernel.
pub fn matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut c = CMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: `Complex<f64>` is `repr(C)` with layout `[f64; 2]`, and all three
    // matrices are contiguous column-major buffers of the stated shapes.
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr().cast(),
            1,
            m as isize,
            b.as_ptr().cast(),
            1,
            k as isize,
            [0.0, 0.0],
            c.as_mut_ptr().cast(),
            1,
            m as isize,
        );
    }
    c
}

/// Cholesky factorization of a Hermitian positive-definite matrix.
pub struct HpdFactor(Cholesky<C64, Dyn>);

impl HpdFactor {
    pub fn new(m: CMatrix) -> Result<Self> {
        Cholesky::new(hermitize(&m))
            .map(HpdFactor)
            .ok_or(Error::NotPositiveDefinite)
    }

    /// Solves `A·X = B`.
    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        self.0.solve(b)
    }

    /// `A⁻¹ = L⁻ᴴ L⁻¹`, exactly Hermitian.
    pub fn inverse(&self) -> CMatrix {
        let l = self.0.l_dirty();
        let m = l.nrows();
        let mut x = CMatrix::zeros(m, m);
        for j in 0..m {
            x[(j, j)] = C64::new(1.0, 0.0) / l[(j, j)];
            for i in j + 1..m {
                let mut acc = C64::new(0.0, 0.0);
                for k in j..i {
                    acc += l[(i, k)] * x[(k, j)];
                }
                x[(i, j)] = -acc / l[(i, i)];
            }
        }
        hermitize(&matmul(&x.adjoint(), &x))
    }
}

/// Square-root factor `L` with `L·Lᴴ ≈ R` for drawing `CN(0, R)` samples.
///
/// Uses a Cholesky factor of `R + 1e-12·(tr R / M)·I`, which adds a
/// negligible white component; falls back to [`psd_factor`] when that
/// factorization fails.
pub fn sampling_factor(r: &CMatrix) -> Result<CMatrix> {
    let m = r.nrows();
    let jitter = SAMPLING_JITTER * trace_re(r).abs() / m.max(1) as f64;
    if jitter > 0.0 {
        let shifted = hermitize(r) + CMatrix::identity(m, m) * C64::new(jitter, 0.0);
        if let Some(c) = Cholesky::new(shifted) {
            return Ok(c.unpack());
        }
    }
    psd_factor(r)
}
