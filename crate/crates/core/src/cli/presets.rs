//! Covariance and mean specifications accepted on the command line.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::read_matrix_file;
use crate::lin_core::{ComplexMatrix, ComplexVector, HermitianMatrix};

/// Bisection tolerance on the spike weight.
const SPIKE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum CovSpec {
    Identity,
    Diag(Vec<f64>),
    /// `I + w v v^H` with `v = 1/sqrt(p)` and `w` chosen so sphericity is `gamma`.
    Spiked { gamma: f64 },
    /// `A A^H / p + I / 2` for a seeded uniform complex `A`.
    Random { seed: u64 },
    File(PathBuf),
}

impl CovSpec {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "identity" {
            return Ok(Self::Identity);
        }
        if let Some(rest) = s.strip_prefix("diag:") {
            let values = rest
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad diagonal entry {v:?} in {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Self::Diag(values));
        }
        if let Some(rest) = s.strip_prefix("spiked:") {
            let g = rest
                .strip_prefix("gamma=")
                .and_then(|g| g.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("expected spiked:gamma=G, got {s:?}")))?;
            return Ok(Self::Spiked { gamma: g });
        }
        if let Some(rest) = s.strip_prefix("random:") {
            let seed = rest
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("expected random:SEED, got {s:?}")))?;
            return Ok(Self::Random { seed });
        }
        Ok(Self::File(PathBuf::from(s)))
    }

    /// Dimension fixed by the spec itself, if any.
    pub fn intrinsic_dim(&self) -> Result<Option<usize>> {
        Ok(match self {
            Self::Diag(d) => Some(d.len()),
            Self::File(path) => Some(read_matrix_file(path)?.nrows()),
            _ => None,
        })
    }

    pub fn build(&self, p: usize) -> Result<HermitianMatrix> {
        let m = match self {
            Self::Identity => HermitianMatrix::identity(p),
            Self::Diag(d) => {
                check_dim(d.len(), p, "diag")?;
                HermitianMatrix::from_real_diagonal(d)
            }
            Self::Spiked { gamma } => spiked_covariance(p, *gamma)?,
            Self::Random { seed } => random_covariance(p, *seed),
            Self::File(path) => {
                let m = HermitianMatrix::new(read_matrix_file(path)?)?;
                check_dim(m.dim(), p, "file")?;
                m
            }
        };
        m.check_positive_definite(m.default_pd_tol())?;
        Ok(m)
    }
}

fn check_dim(got: usize, p: usize, what: &str) -> Result<()> {
    if got != p {
        return Err(Error::ShapeMismatch {
            expected: format!("{p}x{p} covariance (--p)"),
            got: format!("{what} covariance of dimension {got} (--cov)"),
        });
    }
    Ok(())
}

/// Sphericity of `I + w 11^T / p`: eigenvalues `1 + w` (once) and 1.
fn spiked_sphericity(p: f64, w: f64) -> f64 {
    p * ((1.0 + w).powi(2) + p - 1.0) / (p + w).powi(2)
}

/// Identity plus a rank-one spike along `1/sqrt(p)`, calibrated by bisection
/// so the sphericity equals `gamma`, for `1 <= gamma < p`.
pub fn spiked_covariance(p: usize, gamma: f64) -> Result<HermitianMatrix> {
    let pf = p as f64;
    if p == 0 || !(gamma >= 1.0 && gamma < pf) {
        return Err(Error::Domain(format!(
            "spiked preset needs 1 <= gamma < p = {p}, got {gamma}"
        )));
    }
    let mut hi = 1.0;
    while spiked_sphericity(pf, hi) < gamma {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Domain(format!("cannot reach sphericity {gamma}")));
        }
    }
    let mut lo = 0.0;
    while hi - lo > SPIKE_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if spiked_sphericity(pf, mid) < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = 0.5 * (lo + hi);
    let spike = Complex64::new(w / pf, 0.0);
    let m = ComplexMatrix::identity(p, p) + ComplexMatrix::from_element(p, p, spike);
    HermitianMatrix::new(m)
}

pub fn random_covariance(p: usize, seed: u64) -> HermitianMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = ComplexMatrix::from_fn(p, p, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let m = (&a * a.adjoint()).unscale(p as f64) + ComplexMatrix::identity(p, p).scale(0.5);
    HermitianMatrix::symmetrized(m)
}

/// `zero` or a `1 x p` / `p x 1` matrix file.
pub fn parse_mean(spec: &str, p: usize) -> Result<ComplexVector> {
    if spec == "zero" {
        return Ok(ComplexVector::zeros(p));
    }
    let m = read_matrix_file(Path::new(spec))?;
    if m.len() != p || (m.nrows() != 1 && m.ncols() != 1) {
        return Err(Error::ShapeMismatch {
            expected: format!("mean vector of length {p} (--p)"),
            got: format!("{}x{} matrix (--mu)", m.nrows(), m.ncols()),
        });
    }
    Ok(ComplexVector::from_iterator(p, m.iter().copied()))
}
