//! Dense complex linear algebra shared by every other module: column-stacking
//! vectorization, Kronecker products, the commutation matrix, Hermitian
//! square roots and the centering matrix.
//!
//! `vec` stacks columns, so entry `(i, j)` of a `rows x cols` matrix lands at
//! index `j * rows + i`. The commutation matrix is defined against the same
//! convention, `K_p vec(A) = vec(A^T)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Relative Hermitian tolerance applied on construction.
pub const HERMITIAN_REL_TOL: f64 = 1e-12;

/// Relative positive-definiteness tolerance: eigenvalues must exceed this
/// fraction of the largest eigenvalue.
pub const PD_REL_TOL: f64 = 1e-10;

/// Rejects matrices holding NaN or infinite entries.
pub fn check_finite(a: &ComplexMatrix) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let z = a[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// A square matrix equal to its conjugate transpose.
///
/// Construction checks `max |A - A^H| <= 1e-12 * max |a_ij|` and then stores
/// `(A + A^H) / 2`, so the stored value is exactly Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    inner: ComplexMatrix,
}

impl HermitianMatrix {
    pub fn new(a: ComplexMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::ShapeMismatch {
                expected: "square matrix".into(),
                got: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        check_finite(&a)?;
        let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tolerance = HERMITIAN_REL_TOL * scale;
        let deviation = (&a - a.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if deviation > tolerance {
            return Err(Error::NotHermitian {
                deviation,
                tolerance,
            });
        }
        Ok(Self::symmetrized(a))
    }

    /// Symmetrizes without the tolerance check. For matrices that are
    /// Hermitian by construction up to rounding.
    pub(crate) fn symmetrized(a: ComplexMatrix) -> Self {
        let adj = a.adjoint();
        let inner = (a + adj).scale(0.5);
        Self { inner }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            inner: ComplexMatrix::identity(p, p),
        }
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            inner: ComplexMatrix::zeros(p, p),
        }
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let v = DVector::from_iterator(d.len(), d.iter().map(|&x| Complex64::new(x, 0.0)));
        Self {
            inner: ComplexMatrix::from_diagonal(&v),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.inner
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.inner
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            inner: self.inner.scale(c),
        }
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace().re
    }

    /// `tr(A^2) = ||A||_F^2` for Hermitian `A`.
    pub fn trace_of_square(&self) -> f64 {
        self.inner.norm_squared()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.inner.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Default PD threshold: `1e-10 * max eigenvalue`.
    pub fn default_pd_tol(&self) -> f64 {
        let ev = self.eigenvalues();
        PD_REL_TOL * ev.last().copied().unwrap_or(0.0).max(0.0)
    }

    pub fn check_positive_definite(&self, pd_tol: f64) -> Result<()> {
        let min_eigenvalue = self.min_eigenvalue();
        if self.dim() == 0 || min_eigenvalue <= pd_tol {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue,
                tolerance: pd_tol,
            });
        }
        Ok(())
    }

    /// Hermitian PD square root with the default tolerance.
    pub fn sqrt(&self) -> Result<Self> {
        hermitian_sqrt(self, self.default_pd_tol())
    }
}

/// Column-stacking vectorization.
pub fn vec(a: &ComplexMatrix) -> ComplexVector {
    // nalgebra storage is column-major, so the raw slice is already vec(A).
    ComplexVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &ComplexVector, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if v.len() != rows * cols {
        return Err(Error::ShapeMismatch {
            expected: format!("length {}", rows * cols),
            got: format!("length {}", v.len()),
        });
    }
    Ok(ComplexMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// The `p^2 x p^2` commutation matrix `K_p = sum_ij e_i e_j^T (x) e_j e_i^T`.
pub fn commutation_matrix(p: usize) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::InvalidDimension(
            "commutation matrix needs p >= 1".into(),
        ));
    }
    let mut k = DMatrix::zeros(p * p, p * p);
    for i in 0..p {
        for j in 0..p {
            // Block (i, j) of the Kronecker sum holds e_j e_i^T.
            k[(i * p + j, j * p + i)] = 1.0;
        }
    }
    Ok(k)
}

/// Complex copy of a real matrix.
pub fn to_complex(a: &DMatrix<f64>) -> ComplexMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Kronecker product `A (x) B`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Unique Hermitian PD square root via the eigendecomposition
/// `M = V diag(l) V^H`, `R = V diag(sqrt l) V^H`.
pub fn hermitian_sqrt(m: &HermitianMatrix, pd_tol: f64) -> Result<HermitianMatrix> {
    let eig = SymmetricEigen::new(m.as_matrix().clone());
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if m.dim() == 0 || min_eigenvalue <= pd_tol {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue,
            tolerance: pd_tol,
        });
    }
    let roots = eig.eigenvalues.map(|l| Complex64::new(l.sqrt(), 0.0));
    let v = &eig.eigenvectors;
    let r = v * ComplexMatrix::from_diagonal(&roots) * v.adjoint();
    Ok(HermitianMatrix::symmetrized(r))
}

/// Centering matrix `H = I - 11^T / n`.
pub fn centering_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InvalidDimension(format!(
            "centering matrix needs n >= 2, got {n}"
        )));
    }
    let inv = 1.0 / n as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 - inv
        } else {
            -inv
        }
    }))
}

/// Scale `eta = tr(M)/p` and sphericity `gamma = p tr(M^2) / tr(M)^2`.
pub fn scale_and_sphericity(m: &HermitianMatrix) -> Result<(f64, f64)> {
    let p = m.dim() as f64;
    let tr = m.trace();
    if !(tr > 0.0) {
        return Err(Error::ZeroTrace(tr));
    }
    let eta = tr / p;
    let gamma = p * m.trace_of_square() / (tr * tr);
    Ok((eta, gamma))
}

/// Relative Frobenius distance `||a - b||_F / ||b||_F`.
pub fn rel_frobenius(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).norm() / b.norm()
}
