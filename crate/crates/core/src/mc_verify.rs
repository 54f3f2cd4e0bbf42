//! Monte Carlo harness for the closed-form theory.
//!
//! Replication `r` draws its `n` observations from
//! `RngStream::replication(seed, r)`. Replications are grouped into fixed
//! chunks of [`CHUNK`] indices; chunks run in parallel and their partial
//! accumulators are merged in chunk order, so results are bit-identical for
//! any worker count.
//!
//! Moments of `vec(M-hat)` are computed in two passes over the same
//! replications: the first fixes the empirical mean, the second accumulates
//! centered products. All sums are Neumaier-compensated.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ces_sampler::{fill_ces, sample_sphere, CesModel, DistributionFamily, ModularSampler, RngStream};
use crate::error::{Error, Result};
use crate::estimators::{estimate_kurtosis, scm, weighted_scm, Dataset, Weight};
use crate::lin_core::{scale_and_sphericity, ComplexMatrix, HermitianMatrix};
use crate::theory::{
    affine_equivariant_var, beta_opt, mse_from_scale_sphericity, mse_scm, scm_radial_structure,
    radial_pair, CovariancePair, RadialStructure,
};

/// Replications per work unit. Part of the determinism contract: changing it
/// changes the merge order and therefore the last bits of every sum.
pub const CHUNK: u64 = 1024;

/// Statistic evaluated on each replicated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Scm,
    WeightedScm(Weight),
}

impl Statistic {
    pub fn evaluate(&self, x: &Dataset) -> Result<ComplexMatrix> {
        match self {
            Statistic::Scm => Ok(scm(x)?.s.into_matrix()),
            Statistic::WeightedScm(w) => Ok(weighted_scm(x, |d| w.apply(d))?.into_matrix()),
        }
    }
}

impl std::str::FromStr for Statistic {
    type Err = Error;

    /// `scm`, `wscm:unit` or `wscm:fobi`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "scm" => Ok(Statistic::Scm),
            Some(("wscm", w)) => Ok(Statistic::WeightedScm(w.parse()?)),
            _ => Err(Error::Parse(format!(
                "unknown statistic {s:?}; expected scm, wscm:unit or wscm:fobi"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct McConfig {
    pub replications: u64,
    pub n: usize,
    pub model: CesModel,
    pub statistic: Statistic,
    pub seed: u64,
    pub workers: usize,
}

impl McConfig {
    pub fn new(
        replications: u64,
        n: usize,
        model: CesModel,
        statistic: Statistic,
        seed: u64,
        workers: usize,
    ) -> Result<Self> {
        let cfg = Self {
            replications,
            n,
            model,
            statistic,
            seed,
            workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 replications, got {}",
                self.replications
            )));
        }
        if self.workers == 0 {
            return Err(Error::Domain("workers must be at least 1".into()));
        }
        if self.n >= 1 << 32 {
            return Err(Error::Domain("n must be below 2^32".into()));
        }
        let needed = match self.statistic {
            Statistic::Scm => 2,
            Statistic::WeightedScm(_) => self.model.dim() + 1,
        };
        if self.n < needed {
            return Err(Error::TooFewObservations {
                needed,
                got: self.n,
            });
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.model.dim()
    }

    fn dataset(&self, r: u64, modular: &ModularSampler) -> Result<Dataset> {
        let mut buf = ComplexMatrix::zeros(self.n, self.p());
        fill_ces(&self.model, modular, RngStream::replication(self.seed, r), &mut buf);
        Dataset::new(buf)
    }
}

/// Neumaier-compensated sums over a fixed number of slots.
#[derive(Debug, Clone)]
struct CompensatedSums {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedSums {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            comp: vec![0.0; len],
        }
    }

    #[inline]
    fn add(&mut self, i: usize, x: f64) {
        let s = self.sum[i];
        let t = s + x;
        if s.abs() >= x.abs() {
            self.comp[i] += (s - t) + x;
        } else {
            self.comp[i] += (x - t) + s;
        }
        self.sum[i] = t;
    }

    #[inline]
    fn add_complex(&mut self, i: usize, z: Complex64) {
        self.add(2 * i, z.re);
        self.add(2 * i + 1, z.im);
    }

    fn merge(&mut self, other: &Self) {
        for i in 0..self.sum.len() {
            self.add(i, other.sum[i]);
            self.add(i, other.comp[i]);
        }
    }

    fn get(&self, i: usize) -> f64 {
        self.sum[i] + self.comp[i]
    }

    fn get_complex(&self, i: usize) -> Complex64 {
        Complex64::new(self.get(2 * i), self.get(2 * i + 1))
    }
}

/// Runs `body` for every index in `0..total`, chunked by [`CHUNK`], and
/// merges the per-chunk accumulators in chunk order.
fn par_chunks<A, I, B, M>(total: u64, workers: usize, init: I, body: B, merge: M) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync,
    B: Fn(&mut A, u64) -> Result<()> + Sync,
    M: Fn(&mut A, A),
{
    let chunks = total.div_ceil(CHUNK);
    let run = || {
        (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = init();
                for idx in c * CHUNK..((c + 1) * CHUNK).min(total) {
                    body(&mut acc, idx)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<A>>>()
    };
    let parts = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
        .install(run)?;
    let mut total_acc = init();
    for part in parts {
        merge(&mut total_acc, part);
    }
    Ok(total_acc)
}

/// Empirical first and second moments of `vec(M-hat)` over the replications.
#[derive(Debug, Clone)]
pub struct EmpiricalMoments {
    pub replications: u64,
    pub mean_stat: HermitianMatrix,
    /// `(R-1)^{-1} sum (v - vbar)(v - vbar)^H`
    pub var_emp: ComplexMatrix,
    /// `(R-1)^{-1} sum (v - vbar)(v - vbar)^T`
    pub pvar_emp: ComplexMatrix,
    /// MC standard error of each entry of `mean_stat`.
    pub se_mean: DMatrix<f64>,
    pub se_var: DMatrix<f64>,
    pub se_pvar: DMatrix<f64>,
    /// Largest per-entry standard error over mean, var and pvar.
    pub se_scale: f64,
    /// Direct accumulator of `||M-hat - M||_F^2`, averaged.
    pub mse_direct: f64,
    pub mse_direct_se: f64,
}

pub fn empirical_moments(cfg: &McConfig) -> Result<EmpiricalMoments> {
    cfg.validate()?;
    let p = cfg.p();
    let q = p * p;
    let reps = cfg.replications;
    let modular = ModularSampler::new(cfg.model.family(), p)?;
    let target = cfg.model.cov().as_matrix();

    // Pass 1: mean of vec(stat) and the direct squared-error accumulator.
    let first = par_chunks(
        reps,
        cfg.workers,
        || CompensatedSums::new(2 * q + 2),
        |acc, r| {
            let stat = cfg.statistic.evaluate(&cfg.dataset(r, &modular)?)?;
            for (i, z) in stat.iter().enumerate() {
                acc.add_complex(i, *z);
            }
            let err = (&stat - target).norm_squared();
            acc.add(2 * q, err);
            acc.add(2 * q + 1, err * err);
            Ok(())
        },
        |a, b| a.merge(&b),
    )?;
    let rf = reps as f64;
    let mean: Vec<Complex64> = (0..q).map(|i| first.get_complex(i) / rf).collect();
    let mse_direct = first.get(2 * q) / rf;
    let mse_sq = first.get(2 * q + 1) / rf;
    let mse_direct_se = ((mse_sq - mse_direct * mse_direct).max(0.0) / (rf - 1.0)).sqrt();

    // Pass 2: centered outer products. Layout per (a, b) slot k = b*q + a:
    // var at complex slot k, pvar at complex slot q^2 + k, |w|^2 at real
    // slot 4 q^2 + k.
    let q2 = q * q;
    let second = par_chunks(
        reps,
        cfg.workers,
        || CompensatedSums::new(5 * q2),
        |acc, r| {
            let stat = cfg.statistic.evaluate(&cfg.dataset(r, &modular)?)?;
            let d: Vec<Complex64> = stat.iter().zip(&mean).map(|(v, m)| v - m).collect();
            for b in 0..q {
                let db = d[b];
                let db_conj = db.conj();
                for a in 0..q {
                    let k = b * q + a;
                    let w = d[a] * db_conj;
                    acc.add_complex(k, w);
                    acc.add_complex(q2 + k, d[a] * db);
                    acc.add(4 * q2 + k, w.norm_sqr());
                }
            }
            Ok(())
        },
        |a, b| a.merge(&b),
    )?;

    let denom = rf - 1.0;
    let mut var_emp = ComplexMatrix::zeros(q, q);
    let mut pvar_emp = ComplexMatrix::zeros(q, q);
    let mut se_var = DMatrix::zeros(q, q);
    let mut se_pvar = DMatrix::zeros(q, q);
    for b in 0..q {
        for a in 0..q {
            let k = b * q + a;
            let sw = second.get_complex(k);
            let spw = second.get_complex(q2 + k);
            let sabs = second.get(4 * q2 + k);
            var_emp[(a, b)] = sw / denom;
            pvar_emp[(a, b)] = spw / denom;
            // Sample variance of the per-replication products, over R.
            let se = |s: Complex64| ((sabs - s.norm_sqr() / rf).max(0.0) / (denom * rf)).sqrt();
            se_var[(a, b)] = se(sw);
            se_pvar[(a, b)] = se(spw);
        }
    }
    let mean_matrix = ComplexMatrix::from_column_slice(p, p, &mean);
    let se_mean = DMatrix::from_fn(p, p, |i, j| {
        let k = j * p + i;
        (var_emp[(k, k)].re.max(0.0) / rf).sqrt()
    });
    let se_scale = se_mean
        .iter()
        .chain(se_var.iter())
        .chain(se_pvar.iter())
        .copied()
        .fold(0.0, f64::max);

    Ok(EmpiricalMoments {
        replications: reps,
        mean_stat: HermitianMatrix::symmetrized(mean_matrix),
        var_emp,
        pvar_emp,
        se_mean,
        se_var,
        se_pvar,
        se_scale,
        mse_direct,
        mse_direct_se,
    })
}

/// Radial constants estimated at the spherical model, with standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct RadialEstimate {
    pub structure: RadialStructure,
    pub se_sigma: f64,
    pub se_tau1: f64,
    pub se_tau2: f64,
}

/// `sigma` from the mean diagonal, `tau1` from `var(M_ij)` and `tau2` from
/// `cov(M_ii, M_jj)`, each averaged over all `i != j`. The SE is the mean
/// per-entry SE of the averaged entries (the entries are correlated, so this
/// does not shrink with the number of pairs).
pub fn radial_from_moments(emp: &EmpiricalMoments) -> Result<RadialEstimate> {
    let p = emp.mean_stat.dim();
    if p < 2 {
        return Err(Error::InvalidDimension(
            "radial structure needs p >= 2 (an off-diagonal pair)".into(),
        ));
    }
    let idx = |i: usize, j: usize| j * p + i;
    let pf = p as f64;
    let mut sigma = 0.0;
    let mut se_sigma = 0.0;
    for i in 0..p {
        sigma += emp.mean_stat.as_matrix()[(i, i)].re;
        se_sigma += emp.se_mean[(i, i)];
    }
    let pairs = pf * (pf - 1.0);
    let (mut tau1, mut tau2, mut se1, mut se2) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let k = idx(i, j);
            tau1 += emp.var_emp[(k, k)].re;
            se1 += emp.se_var[(k, k)];
            let (a, b) = (idx(i, i), idx(j, j));
            tau2 += emp.var_emp[(a, b)].re;
            se2 += emp.se_var[(a, b)];
        }
    }
    Ok(RadialEstimate {
        structure: RadialStructure {
            sigma: sigma / pf,
            tau1: tau1 / pairs,
            tau2: tau2 / pairs,
        },
        se_sigma: se_sigma / pf,
        se_tau1: se1 / pairs,
        se_tau2: se2 / pairs,
    })
}

/// Runs the replications at the spherical model and estimates `(sigma, tau1,
/// tau2)`.
pub fn estimate_radial_structure(cfg: &McConfig) -> Result<(RadialEstimate, EmpiricalMoments)> {
    if !cfg.model.is_spherical() {
        return Err(Error::Domain(
            "radial structure is estimated at mu = 0, M = I".into(),
        ));
    }
    if cfg.p() < 2 {
        return Err(Error::InvalidDimension(
            "radial structure needs p >= 2 (an off-diagonal pair)".into(),
        ));
    }
    let emp = empirical_moments(cfg)?;
    Ok((radial_from_moments(&emp)?, emp))
}

/// Pass/fail thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Entrywise and zero-target checks: deviation within this many MC SEs.
    pub se_multiple: f64,
    /// Relative tolerance on nonzero `tau1`, `tau2`.
    pub rel_tau: f64,
    /// Relative tolerance on the MSE.
    pub rel_mse: f64,
}

impl Tolerances {
    /// 4 SE; 2% relative for the Gaussian, 5% for heavier-tailed families.
    pub fn for_family(family: DistributionFamily) -> Self {
        let rel = match family {
            DistributionFamily::Gaussian => 0.02,
            _ => 0.05,
        };
        Self {
            se_multiple: 4.0,
            rel_tau: rel,
            rel_mse: rel,
        }
    }
}

/// How a [`Check`] is decided.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    /// `|estimate - target| <= k * std_error`
    WithinSe { k: f64 },
    /// `|estimate - target| <= tol * |target|`
    Relative { tol: f64 },
    /// `estimate < bound`
    Below { bound: f64 },
    /// `estimate <= bound`
    AtMost { bound: f64 },
}

/// Floor on SE-based acceptance bands so exactly determined quantities
/// (zero standard error) compare cleanly.
const SE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    pub std_error: f64,
    pub rule: Rule,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, estimate: f64, target: f64, std_error: f64, rule: Rule) -> Self {
        let dev = (estimate - target).abs();
        let pass = match rule {
            Rule::WithinSe { k } => dev <= k * std_error + SE_FLOOR,
            Rule::Relative { tol } => dev <= tol * target.abs(),
            Rule::Below { bound } => estimate < bound,
            Rule::AtMost { bound } => estimate <= bound,
        };
        Self {
            name: name.into(),
            estimate,
            target,
            std_error,
            rule,
            pass: pass && estimate.is_finite(),
        }
    }

    /// `|deviation| / std_error`.
    pub fn z(&self) -> f64 {
        (self.estimate - self.target).abs() / self.std_error.max(SE_FLOOR)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub max_abs_dev_var: Option<f64>,
    pub max_z_var: Option<f64>,
    pub max_abs_dev_pvar: Option<f64>,
    pub max_z_pvar: Option<f64>,
    pub rel_err_tau1: Option<f64>,
    pub rel_err_tau2: Option<f64>,
    pub rel_err_mse: Option<f64>,
    pub checks: Vec<Check>,
    pub tolerances: Tolerances,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn new(tolerances: Tolerances) -> Self {
        Self {
            max_abs_dev_var: None,
            max_z_var: None,
            max_abs_dev_pvar: None,
            max_z_pvar: None,
            rel_err_tau1: None,
            rel_err_tau2: None,
            rel_err_mse: None,
            checks: Vec::new(),
            tolerances,
            pass: true,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Folds another report's checks into this one.
    pub fn absorb(&mut self, other: ComparisonReport) {
        self.max_abs_dev_var = self.max_abs_dev_var.or(other.max_abs_dev_var);
        self.max_z_var = self.max_z_var.or(other.max_z_var);
        self.max_abs_dev_pvar = self.max_abs_dev_pvar.or(other.max_abs_dev_pvar);
        self.max_z_pvar = self.max_z_pvar.or(other.max_z_pvar);
        self.rel_err_tau1 = self.rel_err_tau1.or(other.rel_err_tau1);
        self.rel_err_tau2 = self.rel_err_tau2.or(other.rel_err_tau2);
        self.rel_err_mse = self.rel_err_mse.or(other.rel_err_mse);
        for c in other.checks {
            self.push(c);
        }
    }

    fn rel_check(&mut self, name: &str, estimate: f64, target: f64, se: f64, tol: f64) -> f64 {
        let rel = (estimate - target).abs() / target.abs();
        self.push(Check::new(name, estimate, target, se, Rule::Relative { tol }));
        rel
    }
}

/// Largest `|emp - theo|` and largest `|emp - theo| / se` over all entries.
fn entrywise(emp: &ComplexMatrix, theo: &ComplexMatrix, se: &DMatrix<f64>) -> (f64, f64) {
    let mut max_abs = 0.0f64;
    let mut max_z = 0.0f64;
    for ((e, t), s) in emp.iter().zip(theo.iter()).zip(se.iter()) {
        let dev = (e - t).norm();
        max_abs = max_abs.max(dev);
        max_z = max_z.max(dev / s.max(SE_FLOOR));
    }
    (max_abs, max_z)
}

/// Entrywise comparison of the empirical covariance and pseudo-covariance
/// against a predicted pair.
pub fn compare_to_theory(
    emp: &EmpiricalMoments,
    theo: &CovariancePair,
    tolerances: Tolerances,
) -> Result<ComparisonReport> {
    if emp.var_emp.shape() != theo.var.shape() || emp.pvar_emp.shape() != theo.pvar.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", emp.var_emp.shape()),
            got: format!("{:?}", theo.var.shape()),
        });
    }
    let k = tolerances.se_multiple;
    let mut report = ComparisonReport::new(tolerances);
    let (abs_v, z_v) = entrywise(&emp.var_emp, &theo.var, &emp.se_var);
    let (abs_p, z_p) = entrywise(&emp.pvar_emp, &theo.pvar, &emp.se_pvar);
    report.max_abs_dev_var = Some(abs_v);
    report.max_z_var = Some(z_v);
    report.max_abs_dev_pvar = Some(abs_p);
    report.max_z_pvar = Some(z_p);
    report.push(Check::new("var_entrywise_max_z", z_v, 0.0, 1.0, Rule::AtMost { bound: k }));
    report.push(Check::new("pvar_entrywise_max_z", z_p, 0.0, 1.0, Rule::AtMost { bound: k }));
    Ok(report)
}

/// Entrywise check of the empirical mean against `sigma * M`.
fn compare_mean(emp: &EmpiricalMoments, expected: &ComplexMatrix, k: f64) -> Check {
    let mut max_z = 0.0f64;
    for ((e, t), s) in emp
        .mean_stat
        .as_matrix()
        .iter()
        .zip(expected.iter())
        .zip(emp.se_mean.iter())
    {
        max_z = max_z.max((e - t).norm() / s.max(SE_FLOOR));
    }
    Check::new("mean_entrywise_max_z", max_z, 0.0, 1.0, Rule::AtMost { bound: k })
}

/// Compares an estimated radial structure to a predicted one: `sigma` within
/// `k` SE, nonzero `tau`s relative, zero `tau`s within `k` SE.
pub fn compare_radial(est: &RadialEstimate, theo: &RadialStructure, tolerances: Tolerances) -> ComparisonReport {
    let k = tolerances.se_multiple;
    let mut report = ComparisonReport::new(tolerances);
    let s = &est.structure;
    report.push(Check::new("sigma", s.sigma, theo.sigma, est.se_sigma, Rule::WithinSe { k }));
    for (name, value, target, se) in [
        ("tau1", s.tau1, theo.tau1, est.se_tau1),
        ("tau2", s.tau2, theo.tau2, est.se_tau2),
    ] {
        let rel = if target == 0.0 {
            report.push(Check::new(name, value, target, se, Rule::WithinSe { k }));
            None
        } else {
            Some(report.rel_check(name, value, target, se, tolerances.rel_tau))
        };
        if name == "tau1" {
            report.rel_err_tau1 = rel;
        } else {
            report.rel_err_tau2 = rel;
        }
    }
    report
}

fn mse_check(report: &mut ComparisonReport, emp: &EmpiricalMoments, target: f64) {
    let rel = report.rel_check("mse", emp.mse_direct, target, emp.mse_direct_se, report.tolerances.rel_mse);
    report.rel_err_mse = Some(rel);
}

/// Radial-structure check at the spherical model: the empirical covariance
/// and pseudo-covariance must follow the two-parameter pattern built from the
/// estimated `tau1`, `tau2`. Works for any statistic.
pub fn verify_radial_pattern(cfg: &McConfig, tolerances: Tolerances) -> Result<(ComparisonReport, RadialEstimate)> {
    let (est, emp) = estimate_radial_structure(cfg)?;
    let s = est.structure;
    let p = cfg.p();
    let fitted = radial_pair(s.tau1, s.tau2, p);
    let mut report = compare_to_theory(&emp, &fitted, tolerances)?;
    report.push(compare_mean(
        &emp,
        &ComplexMatrix::identity(p, p).scale(s.sigma),
        tolerances.se_multiple,
    ));
    Ok((report, est))
}

/// SCM constants at the spherical model versus `tau1 = 1/(n-1) + kappa/n`,
/// `tau2 = kappa/n`, plus the MSE.
pub fn verify_scm_constants(cfg: &McConfig, tolerances: Tolerances) -> Result<(ComparisonReport, RadialEstimate)> {
    require_scm(cfg)?;
    let (est, emp) = estimate_radial_structure(cfg)?;
    let theo = scm_radial_structure(cfg.n, cfg.p(), cfg.model.kappa())?;
    let mut report = compare_radial(&est, &theo, tolerances);
    let (mse, _) = mse_scm(cfg.model.cov(), cfg.n, cfg.model.kappa())?;
    mse_check(&mut report, &emp, mse);
    Ok((report, est))
}

/// Full covariance and pseudo-covariance of `vec(S)` at a general `M` versus
/// the transported SCM structure, plus `E[S] = M` and the MSE.
pub fn verify_transport(cfg: &McConfig, tolerances: Tolerances) -> Result<(ComparisonReport, EmpiricalMoments)> {
    require_scm(cfg)?;
    let emp = empirical_moments(cfg)?;
    let s = scm_radial_structure(cfg.n, cfg.p(), cfg.model.kappa())?;
    let theo = affine_equivariant_var(cfg.model.cov(), &s);
    let mut report = compare_to_theory(&emp, &theo, tolerances)?;
    report.push(compare_mean(&emp, cfg.model.cov().as_matrix(), tolerances.se_multiple));
    let (mse, _) = mse_scm(cfg.model.cov(), cfg.n, cfg.model.kappa())?;
    mse_check(&mut report, &emp, mse);
    Ok((report, emp))
}

fn require_scm(cfg: &McConfig) -> Result<()> {
    if cfg.statistic != Statistic::Scm {
        return Err(Error::Domain(
            "closed-form constants exist only for the SCM statistic".into(),
        ));
    }
    Ok(())
}

/// Moments of the uniform distribution on the complex unit sphere: the
/// nonzero ones against `1/p`, `2/(p(p+1))`, `1/(p(p+1))`, and a panel of
/// moments up to fourth order that must vanish.
pub fn verify_sphere_moments(p: usize, draws: u64, seed: u64, workers: usize, se_multiple: f64) -> Result<ComparisonReport> {
    if p == 0 {
        return Err(Error::InvalidDimension("p must be at least 1".into()));
    }
    if draws < 2 {
        return Err(Error::Domain("need at least 2 draws".into()));
    }
    // Real slots 0..3: |u0|^2, |u0|^4, |u0|^2 |u1|^2 with their squares at 3..6.
    // Complex panel slots follow, each with a |w|^2 companion.
    const PANEL: [&str; 6] = [
        "E[u_q]",
        "E[u_q^2]",
        "E[u_q conj(u_r)]",
        "E[u_q u_r]",
        "E[u_q^2 conj(u_r)^2]",
        "E[|u_q|^2 u_q conj(u_r)]",
    ];
    let panel_len = if p >= 2 { PANEL.len() } else { 2 };
    let real_len = 6;
    let len = real_len + 3 * panel_len;
    let sums = par_chunks(
        draws,
        workers,
        || CompensatedSums::new(len),
        |acc, i| {
            let mut rng = RngStream::new(seed, i).rng();
            let u = sample_sphere(p, &mut rng);
            let a = u[0].norm_sqr();
            let b = if p >= 2 { u[1].norm_sqr() } else { 0.0 };
            for (k, x) in [a, a * a, a * b].into_iter().enumerate() {
                acc.add(k, x);
                acc.add(3 + k, x * x);
            }
            let u0 = u[0];
            let u1 = if p >= 2 { u[1] } else { Complex64::new(0.0, 0.0) };
            let panel = [
                u0,
                u0 * u0,
                u0 * u1.conj(),
                u0 * u1,
                u0 * u0 * (u1 * u1).conj(),
                a * u0 * u1.conj(),
            ];
            for (k, w) in panel.iter().take(panel_len).enumerate() {
                acc.add(real_len + 2 * k, w.re);
                acc.add(real_len + 2 * k + 1, w.im);
                acc.add(real_len + 2 * panel_len + k, w.norm_sqr());
            }
            Ok(())
        },
        |a, b| a.merge(&b),
    )?;
    let nf = draws as f64;
    let pf = p as f64;
    let mut report = ComparisonReport::new(Tolerances {
        se_multiple,
        rel_tau: 0.0,
        rel_mse: 0.0,
    });
    let targets = [
        ("E|u_q|^2", 1.0 / pf),
        ("E|u_q|^4", 2.0 / (pf * (pf + 1.0))),
        ("E|u_q|^2|u_r|^2", 1.0 / (pf * (pf + 1.0))),
    ];
    for (k, (name, target)) in targets.into_iter().enumerate() {
        if p == 1 && k == 2 {
            continue;
        }
        let mean = sums.get(k) / nf;
        let var = (sums.get(3 + k) / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
        report.push(Check::new(name, mean, target, (var / nf).sqrt(), Rule::WithinSe { k: se_multiple }));
    }
    for (k, name) in PANEL.iter().take(panel_len).enumerate() {
        let mean = Complex64::new(sums.get(real_len + 2 * k), sums.get(real_len + 2 * k + 1)) / nf;
        let second = sums.get(real_len + 2 * panel_len + k) / nf;
        let var = (second - mean.norm_sqr()).max(0.0) * nf / (nf - 1.0);
        report.push(Check::new(
            *name,
            mean.norm(),
            0.0,
            (var / nf).sqrt(),
            Rule::WithinSe { k: se_multiple },
        ));
    }
    Ok(report)
}

/// MC estimate of `E||beta S - M||^2 / E||S - M||^2` for fixed `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub mse_scm: f64,
    pub mse_scaled: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    /// Same ratio for the plug-in `beta` built from per-replication
    /// estimates of kappa and gamma.
    pub plug_in_ratio: f64,
    pub plug_in_ratio_se: f64,
}

pub fn oracle_ratio(cfg: &McConfig, beta: f64) -> Result<RatioEstimate> {
    cfg.validate()?;
    require_scm(cfg)?;
    if cfg.n < 4 {
        return Err(Error::TooFewObservations { needed: 4, got: cfg.n });
    }
    let p = cfg.p();
    let modular = ModularSampler::new(cfg.model.family(), p)?;
    let target = cfg.model.cov().as_matrix();
    // Slots: a, b, c, a^2, b^2, c^2, ab, cb with a = ||beta S - M||^2,
    // b = ||S - M||^2, c = ||beta_hat S - M||^2.
    let sums = par_chunks(
        cfg.replications,
        cfg.workers,
        || CompensatedSums::new(8),
        |acc, r| {
            let x = cfg.dataset(r, &modular)?;
            let s = scm(&x)?.s;
            let sm = s.as_matrix();
            let b = (sm - target).norm_squared();
            let a = if beta == 1.0 {
                b
            } else {
                (sm.scale(beta) - target).norm_squared()
            };
            let beta_hat = plug_in_beta(&x, &s, cfg.n)?;
            let c = (sm.scale(beta_hat) - target).norm_squared();
            for (k, v) in [a, b, c, a * a, b * b, c * c, a * b, c * b].into_iter().enumerate() {
                acc.add(k, v);
            }
            Ok(())
        },
        |a, b| a.merge(&b),
    )?;
    let rf = cfg.replications as f64;
    let m: Vec<f64> = (0..8).map(|k| sums.get(k) / rf).collect();
    let (ma, mb, mc) = (m[0], m[1], m[2]);
    let cov = |sxy: f64, mx: f64, my: f64| (sxy - mx * my) * rf / (rf - 1.0);
    let var_a = cov(m[3], ma, ma);
    let var_b = cov(m[4], mb, mb);
    let var_c = cov(m[5], mc, mc);
    let cov_ab = cov(m[6], ma, mb);
    let cov_cb = cov(m[7], mc, mb);
    let ratio_se = |mx: f64, var_x: f64, cov_xb: f64| {
        let rho = mx / mb;
        ((var_x - 2.0 * rho * cov_xb + rho * rho * var_b).max(0.0) / rf).sqrt() / mb
    };
    Ok(RatioEstimate {
        mse_scm: mb,
        mse_scaled: ma,
        ratio: ma / mb,
        ratio_se: ratio_se(ma, var_a, cov_ab),
        plug_in_ratio: mc / mb,
        plug_in_ratio_se: ratio_se(mc, var_c, cov_cb),
    })
}

/// `beta_o` evaluated at the data's own kappa-hat and gamma-hat.
fn plug_in_beta(x: &Dataset, s: &HermitianMatrix, n: usize) -> Result<f64> {
    let p = x.p();
    let kappa = estimate_kurtosis(x)?;
    let (eta, gamma) = scale_and_sphericity(s)?;
    let gamma = gamma.clamp(1.0, p as f64);
    let (_, nmse) = mse_from_scale_sphericity(n, p, eta, gamma, kappa)?;
    beta_opt(nmse)
}

/// Ratio of MSEs for the oracle `beta_o S` against `beta_o`, within 3 SE by
/// default, and strict improvement over the SCM. The plug-in ratio is
/// reported but not asserted.
pub fn verify_oracle_efficiency(
    cfg: &McConfig,
    gamma: f64,
    kappa: f64,
    se_multiple: f64,
) -> Result<(ComparisonReport, RatioEstimate)> {
    let (_, model_gamma) = scale_and_sphericity(cfg.model.cov())?;
    if (model_gamma - gamma).abs() > 1e-9 * gamma || (cfg.model.kappa() - kappa).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "model has gamma = {model_gamma}, kappa = {}; requested gamma = {gamma}, kappa = {kappa}",
            cfg.model.kappa()
        )));
    }
    let (eta, _) = scale_and_sphericity(cfg.model.cov())?;
    let (_, nmse) = mse_from_scale_sphericity(cfg.n, cfg.p(), eta, gamma, kappa)?;
    let beta = beta_opt(nmse)?;
    let est = oracle_ratio(cfg, beta)?;
    let mut report = ComparisonReport::new(Tolerances {
        se_multiple,
        rel_tau: 0.0,
        rel_mse: 0.0,
    });
    report.push(Check::new("mse_ratio", est.ratio, beta, est.ratio_se, Rule::WithinSe { k: se_multiple }));
    report.push(Check::new("strict_improvement", est.ratio, 1.0, est.ratio_se, Rule::Below { bound: 1.0 }));
    Ok((report, est))
}

/// Wall-clock helper for reports.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
