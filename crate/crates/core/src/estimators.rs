//! Sample mean, the unbiased SCM, weighted SCMs and plug-in estimates of
//! scale, sphericity and elliptical kurtosis.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin_core::{centering_matrix, check_finite, to_complex, ComplexMatrix, ComplexVector, HermitianMatrix};

/// Lower clip offset for the kurtosis estimate, above `-1/(p+1)`.
pub const KURTOSIS_CLIP_EPS: f64 = 1e-6;

/// `n x p` complex observations, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: ComplexMatrix,
}

impl Dataset {
    pub fn new(x: ComplexMatrix) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidDimension(format!(
                "dataset must be non-empty, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        check_finite(&x)?;
        Ok(Self { x })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.x
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.x
    }

    /// `X A^T + 1 a^T`, i.e. every observation mapped to `A x + a`.
    pub fn affine(&self, a: &ComplexMatrix, shift: &ComplexVector) -> Result<Self> {
        if a.ncols() != self.p() || shift.len() != a.nrows() {
            return Err(Error::ShapeMismatch {
                expected: format!("A with {} columns and matching shift", self.p()),
                got: format!("A {}x{}, shift {}", a.nrows(), a.ncols(), shift.len()),
            });
        }
        let mut y = &self.x * a.transpose();
        for mut row in y.row_iter_mut() {
            row += shift.transpose();
        }
        Self::new(y)
    }
}

/// Unbiased SCM together with the sample mean it was centered at.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmResult {
    pub s: HermitianMatrix,
    pub xbar: ComplexVector,
    pub n: usize,
}

pub fn sample_mean(x: &Dataset) -> ComplexVector {
    let n = x.n() as f64;
    let mut mean = ComplexVector::zeros(x.p());
    for row in x.matrix().row_iter() {
        mean += row.transpose();
    }
    mean.unscale(n)
}

/// `S = (n-1)^{-1} sum (x_i - xbar)(x_i - xbar)^H`.
pub fn scm(x: &Dataset) -> Result<ScmResult> {
    let n = x.n();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let xbar = sample_mean(x);
    let s = deviation_outer_sum(x.matrix(), &xbar, None).unscale((n - 1) as f64);
    Ok(ScmResult {
        s: HermitianMatrix::symmetrized(s),
        xbar,
        n,
    })
}

/// `sum_i w_i (x_i - xbar)(x_i - xbar)^H` over the rows of `x`.
fn deviation_outer_sum(x: &ComplexMatrix, xbar: &ComplexVector, weights: Option<&[f64]>) -> ComplexMatrix {
    let p = x.ncols();
    let mut s = ComplexMatrix::zeros(p, p);
    let mut d = ComplexVector::zeros(p);
    for (i, row) in x.row_iter().enumerate() {
        for q in 0..p {
            d[q] = row[q] - xbar[q];
        }
        let w = weights.map_or(1.0, |w| w[i]);
        for c in 0..p {
            let dc = d[c].conj() * w;
            for r in 0..p {
                s[(r, c)] += d[r] * dc;
            }
        }
    }
    s
}

/// The same SCM through the centering-matrix form `(n-1)^{-1} X^T H X^*`.
pub fn scm_centering_form(x: &Dataset) -> Result<HermitianMatrix> {
    let n = x.n();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let h = to_complex(&centering_matrix(n)?);
    let m = x.matrix();
    let s = m.transpose() * h * m.conjugate();
    Ok(HermitianMatrix::symmetrized(s.unscale((n - 1) as f64)))
}

/// `s^2 = (n-1)^{-1} sum |x_i - xbar|^2`.
pub fn sample_variance(x: &[Complex64]) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let mean = x.iter().sum::<Complex64>() / n as f64;
    Ok(x.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64)
}

/// Weight function `u` of a weighted SCM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weight {
    /// `u(s) = 1`
    Unit,
    /// `u(s) = s`: the FOBI fourth-moment matrix.
    Fobi,
}

impl Weight {
    pub fn apply(&self, d: f64) -> f64 {
        match self {
            Weight::Unit => 1.0,
            Weight::Fobi => d,
        }
    }
}

impl std::str::FromStr for Weight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" | "one" => Ok(Weight::Unit),
            "fobi" => Ok(Weight::Fobi),
            other => Err(Error::Parse(format!("unknown weight {other:?}; expected unit or fobi"))),
        }
    }
}

/// Squared Mahalanobis distances `d_i = (x_i - xbar)^H S^{-1} (x_i - xbar)`
/// under the unbiased SCM.
pub fn mahalanobis_distances(x: &Dataset) -> Result<Vec<f64>> {
    let (n, p) = (x.n(), x.p());
    if n <= p {
        return Err(Error::TooFewObservations { needed: p + 1, got: n });
    }
    let ScmResult { s, xbar, .. } = scm(x)?;
    let min_eigenvalue = s.min_eigenvalue();
    if min_eigenvalue <= s.default_pd_tol() {
        return Err(Error::SingularScm { min_eigenvalue });
    }
    let chol = s
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(Error::SingularScm { min_eigenvalue })?;
    let mut centered = x.matrix().transpose();
    for mut col in centered.column_iter_mut() {
        col -= &xbar;
    }
    let solved = chol.solve(&centered);
    Ok((0..n)
        .map(|i| centered.column(i).dotc(&solved.column(i)).re)
        .collect())
}

/// `R = n^{-1} sum u(d_i) (x_i - xbar)(x_i - xbar)^H`.
pub fn weighted_scm(x: &Dataset, weight: impl Fn(f64) -> f64) -> Result<HermitianMatrix> {
    let d = mahalanobis_distances(x)?;
    let mut w = Vec::with_capacity(d.len());
    for &di in &d {
        let wi = weight(di);
        if !(wi >= 0.0 && wi.is_finite()) {
            return Err(Error::Domain(format!("weight function returned {wi} at d = {di}")));
        }
        w.push(wi);
    }
    let xbar = sample_mean(x);
    let r = deviation_outer_sum(x.matrix(), &xbar, Some(&w)).unscale(x.n() as f64);
    Ok(HermitianMatrix::symmetrized(r))
}

/// Uncapped kurtosis estimate: per-coordinate sample kurtosis
/// `m4 / m2^2 - 2`, averaged over coordinates and halved.
pub fn estimate_kurtosis_raw(x: &Dataset) -> Result<f64> {
    let (n, p) = (x.n(), x.p());
    if n < 4 {
        return Err(Error::TooFewObservations { needed: 4, got: n });
    }
    let xbar = sample_mean(x);
    let mut total = 0.0;
    for j in 0..p {
        let (mut m2, mut m4) = (0.0, 0.0);
        for i in 0..n {
            let a = (x.matrix()[(i, j)] - xbar[j]).norm_sqr();
            m2 += a;
            m4 += a * a;
        }
        m2 /= n as f64;
        m4 /= n as f64;
        if !(m2 > 0.0) {
            return Err(Error::DegenerateCoordinate(j));
        }
        total += m4 / (m2 * m2) - 2.0;
    }
    Ok(0.5 * total / p as f64)
}

/// Kurtosis estimate clipped below at `-1/(p+1) + 1e-6`.
pub fn estimate_kurtosis(x: &Dataset) -> Result<f64> {
    let raw = estimate_kurtosis_raw(x)?;
    let floor = -1.0 / (x.p() as f64 + 1.0) + KURTOSIS_CLIP_EPS;
    Ok(raw.max(floor))
}
