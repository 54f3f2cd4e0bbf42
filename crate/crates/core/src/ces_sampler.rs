//! Sampling from circular CES distributions through the stochastic
//! representation `x = mu + r M^{1/2} u`.
//!
//! The modular variate `r` is normalized so that `E[r^2] = p`, which makes the
//! scatter matrix `M` equal to the covariance matrix of `x`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Dataset;
use crate::lin_core::{ComplexMatrix, ComplexVector, HermitianMatrix};

/// Modular-variate family. All variants have finite fourth-order moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionFamily {
    Gaussian,
    /// Complex multivariate t with `nu > 4` degrees of freedom.
    StudentT { nu: f64 },
    /// Compound Gaussian with Gamma(shape `alpha`, scale `1/alpha`) texture.
    CompoundGaussianK { alpha: f64 },
}

impl DistributionFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Gaussian => Ok(()),
            Self::StudentT { nu } if nu.is_finite() && nu > 4.0 => Ok(()),
            Self::StudentT { nu } => Err(Error::InvalidFamily(format!(
                "t requires nu > 4 for finite fourth-order moments, got {nu}"
            ))),
            Self::CompoundGaussianK { alpha } if alpha.is_finite() && alpha > 0.0 => Ok(()),
            Self::CompoundGaussianK { alpha } => Err(Error::InvalidFamily(format!(
                "k requires alpha > 0, got {alpha}"
            ))),
        }
    }

    /// Elliptical kurtosis `E[r^4] / (p(p+1)) - 1`.
    pub fn elliptical_kurtosis(&self) -> Result<f64> {
        self.validate()?;
        Ok(match *self {
            Self::Gaussian => 0.0,
            Self::StudentT { nu } => 2.0 / (nu - 4.0),
            Self::CompoundGaussianK { alpha } => 1.0 / alpha,
        })
    }
}

impl fmt::Display for DistributionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => write!(f, "gaussian"),
            Self::StudentT { nu } => write!(f, "t:{nu}"),
            Self::CompoundGaussianK { alpha } => write!(f, "k:{alpha}"),
        }
    }
}

impl FromStr for DistributionFamily {
    type Err = Error;

    /// Parses `gaussian`, `t:NU` or `k:ALPHA`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let family = if s.eq_ignore_ascii_case("gaussian") {
            Self::Gaussian
        } else if let Some((name, arg)) = s.split_once(':') {
            let value: f64 = arg
                .trim()
                .parse()
                .map_err(|_| Error::InvalidFamily(format!("bad parameter in {s:?}")))?;
            match name.trim() {
                "t" => Self::StudentT { nu: value },
                "k" => Self::CompoundGaussianK { alpha: value },
                other => return Err(Error::InvalidFamily(format!("unknown family {other:?}"))),
            }
        } else {
            return Err(Error::InvalidFamily(format!(
                "expected gaussian, t:NU or k:ALPHA, got {s:?}"
            )));
        };
        family.validate()?;
        Ok(family)
    }
}

/// Addressable random stream. The same `(seed, stream_id)` always yields the
/// same sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Base stream for Monte Carlo replication `r`. Observation `i` of that
    /// replication then uses `stream_id = (r << 32) + i`.
    pub fn replication(seed: u64, r: u64) -> Self {
        Self::new(seed, r << 32)
    }

    pub fn substream(&self, offset: u64) -> Self {
        Self::new(self.seed, self.stream_id.wrapping_add(offset))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Uniform draw from the complex unit sphere in `C^p`: a standard complex
/// Gaussian vector divided by its norm.
pub fn sample_sphere<R: Rng + ?Sized>(p: usize, rng: &mut R) -> ComplexVector {
    assert!(p >= 1, "sphere dimension must be at least 1");
    loop {
        let g = DVector::from_fn(p, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let norm = g.norm();
        if norm > 0.0 {
            return g.unscale(norm);
        }
    }
}

/// Modular variate `r > 0` with `E[r^2] = p`.
///
/// `r^2 = q w` where `q ~ Gamma(p, 1)` (so `2q ~ chi2_{2p}`) and `w` is the
/// unit-mean texture: 1 (Gaussian), `(nu - 2)/s` with `s ~ chi2_nu` (t), or
/// `Gamma(alpha, 1/alpha)` (K).
pub fn sample_modular<R: Rng + ?Sized>(
    family: &DistributionFamily,
    p: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(ModularSampler::new(*family, p)?.sample(rng))
}

/// Pre-built distributions for repeated modular draws.
#[derive(Debug, Clone, Copy)]
pub struct ModularSampler {
    radial: Gamma<f64>,
    texture: Texture,
}

#[derive(Debug, Clone, Copy)]
enum Texture {
    Unit,
    InverseChiSquared { nu: f64, chi: ChiSquared<f64> },
    Gamma(Gamma<f64>),
}

impl ModularSampler {
    pub fn new(family: DistributionFamily, p: usize) -> Result<Self> {
        family.validate()?;
        if p == 0 {
            return Err(Error::InvalidDimension("p must be at least 1".into()));
        }
        let radial = Gamma::new(p as f64, 1.0).map_err(|e| Error::InvalidFamily(e.to_string()))?;
        let texture = match family {
            DistributionFamily::Gaussian => Texture::Unit,
            DistributionFamily::StudentT { nu } => Texture::InverseChiSquared {
                nu,
                chi: ChiSquared::new(nu).map_err(|e| Error::InvalidFamily(e.to_string()))?,
            },
            DistributionFamily::CompoundGaussianK { alpha } => Texture::Gamma(
                Gamma::new(alpha, 1.0 / alpha).map_err(|e| Error::InvalidFamily(e.to_string()))?,
            ),
        };
        Ok(Self { radial, texture })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let q = self.radial.sample(rng);
        let w = match &self.texture {
            Texture::Unit => 1.0,
            Texture::InverseChiSquared { nu, chi } => (nu - 2.0) / chi.sample(rng),
            Texture::Gamma(g) => g.sample(rng),
        };
        (q * w).sqrt()
    }
}

/// A CES model: mean, covariance (= scatter) matrix and modular family.
#[derive(Debug, Clone)]
pub struct CesModel {
    mu: ComplexVector,
    cov: HermitianMatrix,
    cov_sqrt: HermitianMatrix,
    family: DistributionFamily,
    kappa: f64,
}

impl CesModel {
    pub fn new(mu: ComplexVector, cov: HermitianMatrix, family: DistributionFamily) -> Result<Self> {
        let p = cov.dim();
        if p == 0 {
            return Err(Error::InvalidDimension("p must be at least 1".into()));
        }
        if mu.len() != p {
            return Err(Error::ShapeMismatch {
                expected: format!("mean of length {p}"),
                got: format!("length {}", mu.len()),
            });
        }
        if mu.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Domain("mean vector has non-finite entries".into()));
        }
        let kappa = family.elliptical_kurtosis()?;
        let lower = -1.0 / (p as f64 + 1.0);
        if kappa < lower {
            return Err(Error::Domain(format!(
                "elliptical kurtosis {kappa} below lower bound {lower}"
            )));
        }
        let cov_sqrt = cov.sqrt()?;
        Ok(Self {
            mu,
            cov,
            cov_sqrt,
            family,
            kappa,
        })
    }

    /// Zero-mean model.
    pub fn centered(cov: HermitianMatrix, family: DistributionFamily) -> Result<Self> {
        let p = cov.dim();
        Self::new(ComplexVector::zeros(p), cov, family)
    }

    /// Spherical model `(0, I_p)`.
    pub fn spherical(p: usize, family: DistributionFamily) -> Result<Self> {
        Self::centered(HermitianMatrix::identity(p), family)
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn mu(&self) -> &ComplexVector {
        &self.mu
    }

    pub fn cov(&self) -> &HermitianMatrix {
        &self.cov
    }

    pub fn cov_sqrt(&self) -> &HermitianMatrix {
        &self.cov_sqrt
    }

    pub fn family(&self) -> DistributionFamily {
        self.family
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn is_spherical(&self) -> bool {
        self.mu.iter().all(|z| *z == Complex64::new(0.0, 0.0))
            && *self.cov.as_matrix() == ComplexMatrix::identity(self.dim(), self.dim())
    }
}

/// Draws `n` i.i.d. observations. Row `i` uses `stream.substream(i)`, so the
/// output does not depend on generation order.
pub fn sample_ces(model: &CesModel, n: usize, stream: RngStream) -> Result<Dataset> {
    let mut out = ComplexMatrix::zeros(n, model.dim());
    fill_ces(model, &ModularSampler::new(model.family, model.dim())?, stream, &mut out);
    Dataset::new(out)
}

/// Fills every row of `out` with one observation; the buffer-reusing core of
/// [`sample_ces`].
pub(crate) fn fill_ces(
    model: &CesModel,
    modular: &ModularSampler,
    stream: RngStream,
    out: &mut ComplexMatrix,
) {
    let p = model.dim();
    let root = model.cov_sqrt.as_matrix();
    for i in 0..out.nrows() {
        let mut rng = stream.substream(i as u64).rng();
        let u = sample_sphere(p, &mut rng);
        let r = modular.sample(&mut rng);
        for a in 0..p {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..p {
                acc += root[(a, b)] * u[b];
            }
            out[(i, a)] = model.mu[a] + acc * r;
        }
    }
}
