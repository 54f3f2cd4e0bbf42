//! Closed-form second-order theory of affine equivariant scatter statistics
//! under CES sampling: the radial `(sigma, tau1, tau2)` structure, the
//! covariance and pseudo-covariance of `vec(M-hat)`, the SCM constants, its
//! MSE and normalized MSE, and the MSE-optimal scaling `beta_o S`.
//!
//! Nothing here samples. `kappa` always comes in as a parameter, either from
//! a family's closed form or from a data-driven estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lin_core::{commutation_matrix, kron, scale_and_sphericity, to_complex, vec, ComplexMatrix, HermitianMatrix};

/// Relative slack on the `tau2 >= -tau1/p` and `1 <= gamma <= p` boundaries
/// so values computed exactly on the boundary are not rejected by rounding.
const BOUNDARY_SLACK: f64 = 1e-12;

/// Analytic form of the curve emitted by [`shrinkage_curve`].
pub const CURVE_EXPRESSION: &str =
    "beta_o(kappa) = 1 / (1 + (p/gamma) * (1/(n-1) + kappa/n) + kappa/n)";

/// Lower bound of the elliptical kurtosis in dimension `p`.
pub fn kappa_lower_bound(p: usize) -> f64 {
    -1.0 / (p as f64 + 1.0)
}

fn check_kappa(kappa: f64, p: usize) -> Result<()> {
    let lower = kappa_lower_bound(p);
    if !kappa.is_finite() || kappa < lower {
        return Err(Error::Domain(format!(
            "kappa = {kappa} is below the lower bound -1/(p+1) = {lower} for p = {p}"
        )));
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    Ok(())
}

/// `(sigma, tau1, tau2)` of a radially distributed Hermitian statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialStructure {
    pub sigma: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl RadialStructure {
    /// Enforces `tau1 >= 0` and `tau2 >= -tau1 / p`.
    pub fn new(sigma: f64, tau1: f64, tau2: f64, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidDimension("p must be at least 1".into()));
        }
        if !(sigma.is_finite() && tau1.is_finite() && tau2.is_finite()) {
            return Err(Error::Domain("radial constants must be finite".into()));
        }
        if tau1 < 0.0 {
            return Err(Error::Domain(format!("tau1 = {tau1} must be nonnegative")));
        }
        let bound = -tau1 / p as f64;
        if tau2 < bound - BOUNDARY_SLACK * tau1 {
            return Err(Error::Domain(format!(
                "tau2 = {tau2} violates tau2 >= -tau1/p = {bound}"
            )));
        }
        Ok(Self { sigma, tau1, tau2 })
    }
}

/// Covariance `E[(v - Ev)(v - Ev)^H]` and pseudo-covariance
/// `E[(v - Ev)(v - Ev)^T]` of `v = vec(M-hat)`, both `p^2 x p^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub var: ComplexMatrix,
    pub pvar: ComplexMatrix,
}

impl CovariancePair {
    pub fn dim(&self) -> usize {
        self.var.nrows()
    }
}

/// Spherical-model structure: `var = tau1 I + tau2 vec(I)vec(I)^T`,
/// `pvar = tau1 K_p + tau2 vec(I)vec(I)^T`.
pub fn radial_var_structure(tau1: f64, tau2: f64, p: usize) -> Result<CovariancePair> {
    RadialStructure::new(1.0, tau1, tau2, p)?;
    Ok(radial_pair(tau1, tau2, p))
}

/// The two-parameter pattern without constraint checks, for fitted constants.
pub(crate) fn radial_pair(tau1: f64, tau2: f64, p: usize) -> CovariancePair {
    let q = p * p;
    let vi = vec(&ComplexMatrix::identity(p, p));
    let outer = &vi * vi.transpose();
    let var = ComplexMatrix::identity(q, q).scale(tau1) + outer.scale(tau2);
    let k = commutation_matrix(p).expect("p >= 1");
    let pvar = to_complex(&k).scale(tau1) + outer.scale(tau2);
    CovariancePair { var, pvar }
}

/// `var = tau1 (M* (x) M) + tau2 vec(M)vec(M)^H`,
/// `pvar = tau1 (M* (x) M) K_p + tau2 vec(M)vec(M)^T`.
pub fn affine_equivariant_var(m: &HermitianMatrix, s: &RadialStructure) -> CovariancePair {
    let p = m.dim();
    let mm = m.as_matrix();
    let base = kron(&mm.conjugate(), mm);
    let vm = vec(mm);
    let k = to_complex(&commutation_matrix(p.max(1)).expect("p >= 1"));
    let var = base.scale(s.tau1) + (&vm * vm.adjoint()).scale(s.tau2);
    let pvar = (base * k).scale(s.tau1) + (&vm * vm.transpose()).scale(s.tau2);
    CovariancePair { var, pvar }
}

/// SCM constants: `sigma = 1`, `tau1 = 1/(n-1) + kappa/n`, `tau2 = kappa/n`.
pub fn scm_radial_structure(n: usize, p: usize, kappa: f64) -> Result<RadialStructure> {
    check_n(n)?;
    check_kappa(kappa, p)?;
    let nf = n as f64;
    RadialStructure::new(1.0, 1.0 / (nf - 1.0) + kappa / nf, kappa / nf, p)
}

/// MSE and NMSE of the SCM at covariance `M`.
pub fn mse_scm(m: &HermitianMatrix, n: usize, kappa: f64) -> Result<(f64, f64)> {
    let (eta, gamma) = scale_and_sphericity(m)?;
    mse_from_scale_sphericity(n, m.dim(), eta, gamma, kappa)
}

/// MSE and NMSE expressed through `(eta, gamma)`, using `tr(M) = p eta` and
/// `tr(M^2) = gamma p eta^2`.
pub fn mse_from_scale_sphericity(
    n: usize,
    p: usize,
    eta: f64,
    gamma: f64,
    kappa: f64,
) -> Result<(f64, f64)> {
    check_n(n)?;
    check_kappa(kappa, p)?;
    check_gamma(gamma, p)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::ZeroTrace(eta));
    }
    let (nf, pf) = (n as f64, p as f64);
    let tau1 = 1.0 / (nf - 1.0) + kappa / nf;
    let tau2 = kappa / nf;
    let tr = pf * eta;
    let tr_sq = gamma * pf * eta * eta;
    let mse = tau1 * tr * tr + tau2 * tr_sq;
    let nmse = (pf / gamma) * tau1 + tau2;
    Ok((mse, nmse))
}

fn check_gamma(gamma: f64, p: usize) -> Result<()> {
    let pf = p as f64;
    if !gamma.is_finite() || gamma < 1.0 - BOUNDARY_SLACK || gamma > pf * (1.0 + BOUNDARY_SLACK) {
        return Err(Error::Domain(format!(
            "sphericity gamma = {gamma} must lie in [1, p] = [1, {p}]"
        )));
    }
    Ok(())
}

/// MSE-optimal scaling `beta_o = 1 / (NMSE + 1)`.
pub fn beta_opt(nmse: f64) -> Result<f64> {
    if !(nmse > 0.0 && nmse.is_finite()) {
        return Err(Error::Domain(format!("NMSE must be positive, got {nmse}")));
    }
    Ok(1.0 / (nmse + 1.0))
}

/// `MSE(beta_o S) = beta_o MSE(S)`.
pub fn oracle_mse(beta_o: f64, mse: f64) -> Result<f64> {
    if !(beta_o > 0.0 && beta_o < 1.0) {
        return Err(Error::Domain(format!("beta_o must lie in (0, 1), got {beta_o}")));
    }
    if !(mse > 0.0 && mse.is_finite()) {
        return Err(Error::Domain(format!("MSE must be positive, got {mse}")));
    }
    Ok(beta_o * mse)
}

/// Optimal scaling of the sample variance, `n(n-1) / (kurt (n-1) + n^2)`,
/// where `kurt` is the complex excess kurtosis (`kurt >= -1`).
pub fn beta_opt_univariate(n: usize, kurt: f64) -> Result<f64> {
    check_n(n)?;
    if !kurt.is_finite() || kurt < -1.0 {
        return Err(Error::Domain(format!("kurtosis must be >= -1, got {kurt}")));
    }
    let nf = n as f64;
    Ok(nf * (nf - 1.0) / (kurt * (nf - 1.0) + nf * nf))
}

/// Evenly spaced grid with `steps + 1` points from `min` to `max` inclusive.
pub fn kappa_grid(min: f64, max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Domain("steps must be at least 1".into()));
    }
    if !(min.is_finite() && max.is_finite()) || max < min {
        return Err(Error::Domain(format!("invalid kappa range [{min}, {max}]")));
    }
    let h = (max - min) / steps as f64;
    Ok((0..=steps)
        .map(|i| if i == steps { max } else { min + h * i as f64 })
        .collect())
}

/// `(kappa, beta_o)` pairs over `kappa_grid` for fixed `(n, p, gamma)`.
pub fn shrinkage_curve(n: usize, p: usize, gamma: f64, kappa_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    kappa_grid
        .iter()
        .map(|&kappa| {
            let (_, nmse) = mse_from_scale_sphericity(n, p, 1.0, gamma, kappa)?;
            Ok((kappa, beta_opt(nmse)?))
        })
        .collect()
}

/// Closed-form shrinkage summary for one `(M, n, kappa)` configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageReport {
    pub eta: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub n: usize,
    pub p: usize,
    pub mse: f64,
    pub nmse: f64,
    pub beta_o: f64,
    pub oracle_mse: f64,
}

impl ShrinkageReport {
    pub fn from_scale_sphericity(n: usize, p: usize, eta: f64, gamma: f64, kappa: f64) -> Result<Self> {
        let (mse, nmse) = mse_from_scale_sphericity(n, p, eta, gamma, kappa)?;
        let beta_o = beta_opt(nmse)?;
        Ok(Self {
            eta,
            gamma,
            kappa,
            n,
            p,
            mse,
            nmse,
            beta_o,
            oracle_mse: oracle_mse(beta_o, mse)?,
        })
    }

    pub fn from_matrix(m: &HermitianMatrix, n: usize, kappa: f64) -> Result<Self> {
        let (eta, gamma) = scale_and_sphericity(m)?;
        Self::from_scale_sphericity(n, m.dim(), eta, gamma, kappa)
    }
}

/// `tr(var)`, real part; equals the MSE for an unbiased statistic.
pub fn trace_var(pair: &CovariancePair) -> f64 {
    pair.var.trace().re
}
