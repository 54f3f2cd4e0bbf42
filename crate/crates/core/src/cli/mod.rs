//! Batch command-line front end.
//!
//! Exit codes: 0 success (or verification pass), 1 verification failure,
//! 2 usage, input or domain error. Setting `CES_SCM_CI=1` makes `--seed`
//! mandatory for every randomized command.

pub mod presets;

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::ces_sampler::{sample_ces, CesModel, DistributionFamily, RngStream};
use crate::error::{Error, Result};
use crate::estimators::{estimate_kurtosis, scm, Dataset};
use crate::io::{read_matrix_file, write_matrix, write_matrix_file};
use crate::lin_core::{scale_and_sphericity, ComplexMatrix, HermitianMatrix};
use crate::mc_verify::{
    timed, verify_oracle_efficiency, verify_radial_pattern, verify_scm_constants, verify_sphere_moments,
    verify_transport, ComparisonReport, McConfig, Statistic, Tolerances,
};
use crate::theory::{kappa_grid, kappa_lower_bound, shrinkage_curve, ShrinkageReport, CURVE_EXPRESSION};

use presets::{parse_mean, CovSpec};

pub const SCHEMA_VERSION: u32 = 1;
pub const CI_ENV: &str = "CES_SCM_CI";
const DEFAULT_SEED: u64 = 0;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ces-scm", version, about = "CES sampling, SCM theory and Monte Carlo verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw an n x p dataset from a CES model.
    Sample(SampleArgs),
    /// Closed-form MSE, NMSE and oracle shrinkage of the SCM.
    Theory(TheoryArgs),
    /// The (kappa, beta_o) curve as CSV; kappa = 0 is added when in range.
    Curve(CurveArgs),
    /// Monte Carlo verification of a closed-form result.
    McVerify(McVerifyArgs),
    /// SCM and plug-in estimates from a dataset file.
    Estimate(EstimateArgs),
}

#[derive(Debug, clap::Args)]
pub struct SampleArgs {
    /// gaussian, t:NU or k:ALPHA
    #[arg(long)]
    pub dist: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: Option<usize>,
    /// `zero` or a matrix file holding the mean
    #[arg(long, default_value = "zero")]
    pub mu: String,
    /// identity, diag:a,b,..., spiked:gamma=G, random:SEED or a matrix file
    #[arg(long, default_value = "identity")]
    pub cov: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset file; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct TheoryArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: f64,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Scale used with --gamma (defaults to 1)
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub cov: Option<String>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, clap::Args)]
pub struct CurveArgs {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    /// Defaults to the lower bound -1/(p+1)
    #[arg(long, allow_hyphen_values = true)]
    pub kappa_min: Option<f64>,
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub kappa_max: f64,
    #[arg(long, default_value_t = 40)]
    pub steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Thm1,
    Thm3,
    Transport,
    Sphere,
    Oracle,
}

#[derive(Debug, clap::Args)]
pub struct McVerifyArgs {
    #[arg(long, value_enum)]
    pub target: Target,
    #[arg(long, default_value = "gaussian")]
    pub dist: String,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub cov: Option<String>,
    /// scm, wscm:unit or wscm:fobi (thm1 only accepts weighted statistics)
    #[arg(long, default_value = "scm")]
    pub statistic: String,
    /// Replications (draws for the sphere target)
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, clap::Args)]
pub struct EstimateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Write the SCM to this file instead of embedding it in the output
    #[arg(long)]
    pub scm_out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

/// Entry point for the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(args, &mut stdout.lock(), &mut stderr.lock())
}

/// Parses `args` and runs the command, writing to the given streams.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let ci = std::env::var(CI_ENV).is_ok_and(|v| v == "1");
    let result = match cli.command {
        Command::Sample(a) => cmd_sample(&a, ci, out, err),
        Command::Theory(a) => cmd_theory(&a, out),
        Command::Curve(a) => cmd_curve(&a, out, err),
        Command::McVerify(a) => cmd_mc_verify(&a, ci, out),
        Command::Estimate(a) => cmd_estimate(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn require_seed(seed: Option<u64>, ci: bool) -> Result<u64> {
    match seed {
        Some(s) => Ok(s),
        None if ci => Err(Error::Domain(format!("{CI_ENV}=1 requires an explicit --seed"))),
        None => Ok(DEFAULT_SEED),
    }
}

/// Resolves `--p` against a covariance spec, rejecting disagreement.
fn resolve_dim(p: Option<usize>, cov: &CovSpec) -> Result<usize> {
    match (p, cov.intrinsic_dim()?) {
        (Some(p), Some(d)) if p != d => Err(Error::Domain(format!(
            "--p {p} conflicts with --cov of dimension {d}"
        ))),
        (Some(p), _) | (None, Some(p)) => {
            if p == 0 {
                return Err(Error::Domain("--p must be at least 1".into()));
            }
            Ok(p)
        }
        (None, None) => Err(Error::Domain("--p is required with this --cov".into())),
    }
}

fn to_json_line(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn cmd_sample(a: &SampleArgs, ci: bool, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let seed = require_seed(a.seed, ci)?;
    let family: DistributionFamily = a.dist.parse()?;
    if a.n == 0 {
        return Err(Error::Domain("--n must be at least 1".into()));
    }
    let cov_spec = CovSpec::parse(&a.cov)?;
    let p = resolve_dim(a.p, &cov_spec)?;
    let cov = cov_spec.build(p)?;
    let mu = parse_mean(&a.mu, p)?;
    let (eta, gamma) = scale_and_sphericity(&cov)?;
    let model = CesModel::new(mu, cov, family)?;
    let data = sample_ces(&model, a.n, RngStream::new(seed, 0))?;
    match &a.out {
        Some(path) => write_matrix_file(path, data.matrix())?,
        None => write_matrix(&mut *out, data.matrix())?,
    }
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "n": a.n,
        "p": p,
        "family": family.to_string(),
        "kappa": model.kappa(),
        "eta": eta,
        "gamma": gamma,
        "seed": seed,
    });
    writeln!(err, "{summary}")?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TheoryOutput {
    schema_version: u32,
    #[serde(flatten)]
    report: ShrinkageReport,
    tau1: f64,
    tau2: f64,
}

fn cmd_theory(a: &TheoryArgs, out: &mut dyn Write) -> Result<i32> {
    let report = match (&a.gamma, &a.cov) {
        (Some(_), Some(_)) => {
            return Err(Error::Domain("--gamma and --cov are mutually exclusive".into()))
        }
        (None, None) => return Err(Error::Domain("one of --gamma or --cov is required".into())),
        (Some(gamma), None) => {
            let p = a.p.ok_or_else(|| Error::Domain("--gamma requires --p".into()))?;
            ShrinkageReport::from_scale_sphericity(a.n, p, a.eta.unwrap_or(1.0), *gamma, a.kappa)?
        }
        (None, Some(cov)) => {
            if a.eta.is_some() {
                return Err(Error::Domain("--eta and --cov are mutually exclusive".into()));
            }
            let spec = CovSpec::parse(cov)?;
            let p = resolve_dim(a.p, &spec)?;
            ShrinkageReport::from_matrix(&spec.build(p)?, a.n, a.kappa)?
        }
    };
    let nf = a.n as f64;
    let output = TheoryOutput {
        schema_version: SCHEMA_VERSION,
        report,
        tau1: 1.0 / (nf - 1.0) + a.kappa / nf,
        tau2: a.kappa / nf,
    };
    if a.json {
        to_json_line(out, &output)?;
    } else {
        let value = serde_json::to_value(&output).map_err(|e| Error::Io(e.to_string()))?;
        for (k, v) in value.as_object().into_iter().flatten() {
            writeln!(out, "{k}: {v}")?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_curve(a: &CurveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let kappa_min = a.kappa_min.unwrap_or_else(|| kappa_lower_bound(a.p));
    if kappa_min < kappa_lower_bound(a.p) {
        return Err(Error::Domain(format!(
            "--kappa-min {kappa_min} is below -1/(p+1) = {}",
            kappa_lower_bound(a.p)
        )));
    }
    let mut grid = kappa_grid(kappa_min, a.kappa_max, a.steps)?;
    // The Gaussian point is always part of the series when in range.
    if kappa_min < 0.0 && a.kappa_max > 0.0 && !grid.contains(&0.0) {
        let at = grid.partition_point(|&k| k < 0.0);
        grid.insert(at, 0.0);
    }
    let curve = shrinkage_curve(a.n, a.p, a.gamma, &grid)?;
    let write_csv = |w: &mut dyn Write| -> Result<()> {
        writeln!(w, "kappa,beta_o")?;
        for (k, b) in &curve {
            writeln!(w, "{},{}", sig12(*k), sig12(*b))?;
        }
        Ok(())
    };
    match &a.out {
        Some(path) => write_csv(&mut File::create(path)?)?,
        None => write_csv(out)?,
    }
    let meta = json!({
        "schema_version": SCHEMA_VERSION,
        "n": a.n,
        "p": a.p,
        "gamma": a.gamma,
        "expression": CURVE_EXPRESSION,
        "points": curve.len(),
    });
    writeln!(err, "{meta}")?;
    Ok(EXIT_OK)
}

/// 12 significant digits.
fn sig12(x: f64) -> String {
    let s = format!("{x:.11e}");
    // Re-parse so plain decimal notation is used where it is exact enough.
    let v: f64 = s.parse().unwrap_or(x);
    format!("{v}")
}

#[derive(Serialize)]
struct RunReport {
    schema_version: u32,
    target: Target,
    config: Value,
    seed: u64,
    workers: usize,
    wall_time_s: f64,
    details: Value,
    report: ComparisonReport,
}

fn cmd_mc_verify(a: &McVerifyArgs, ci: bool, out: &mut dyn Write) -> Result<i32> {
    let seed = require_seed(a.seed, ci)?;
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        return Err(Error::Domain("--workers must be at least 1".into()));
    }
    let family: DistributionFamily = a.dist.parse()?;
    let statistic: Statistic = a.statistic.parse()?;
    if statistic != Statistic::Scm && a.target != Target::Thm1 {
        return Err(Error::Domain(format!(
            "--statistic {} is only supported with --target thm1",
            a.statistic
        )));
    }
    let default_reps = match (a.target, family) {
        (Target::Sphere, _) => 1_000_000,
        (_, DistributionFamily::Gaussian) => 200_000,
        _ => 500_000,
    };
    let reps = a.reps.unwrap_or(default_reps);
    let tolerances = Tolerances::for_family(family);

    let spherical_only = matches!(a.target, Target::Thm1 | Target::Thm3 | Target::Sphere);
    if spherical_only {
        if let Some(cov) = &a.cov {
            if cov != "identity" {
                return Err(Error::Domain(format!(
                    "--target {:?} runs at M = I; --cov {cov} conflicts",
                    a.target
                )));
            }
        }
    }
    let cov_spec = match (&a.cov, a.target) {
        (Some(c), _) => CovSpec::parse(c)?,
        (None, Target::Transport) => {
            return Err(Error::Domain("--target transport requires --cov".into()))
        }
        (None, _) => CovSpec::Identity,
    };
    let p = resolve_dim(a.p, &cov_spec)?;
    let config = json!({
        "target": a.target,
        "dist": family.to_string(),
        "n": a.n,
        "p": p,
        "cov": a.cov.clone().unwrap_or_else(|| "identity".into()),
        "statistic": a.statistic,
        "reps": reps,
    });

    let build_cfg = |cov: HermitianMatrix| -> Result<McConfig> {
        McConfig::new(reps, a.n, CesModel::centered(cov, family)?, statistic, seed, workers)
    };
    let (result, wall) = timed(|| -> Result<(ComparisonReport, Value)> {
        Ok(match a.target {
            Target::Sphere => (verify_sphere_moments(p, reps, seed, workers, 4.0)?, Value::Null),
            Target::Thm1 => {
                let (r, est) = verify_radial_pattern(&build_cfg(cov_spec.build(p)?)?, tolerances)?;
                (r, serde_json::to_value(est).unwrap_or(Value::Null))
            }
            Target::Thm3 => {
                let (r, est) = verify_scm_constants(&build_cfg(cov_spec.build(p)?)?, tolerances)?;
                (r, serde_json::to_value(est).unwrap_or(Value::Null))
            }
            Target::Transport => {
                let (r, emp) = verify_transport(&build_cfg(cov_spec.build(p)?)?, tolerances)?;
                (r, json!({ "se_scale": emp.se_scale, "mse_direct": emp.mse_direct }))
            }
            Target::Oracle => {
                let cfg = build_cfg(cov_spec.build(p)?)?;
                let (_, gamma) = scale_and_sphericity(cfg.model.cov())?;
                let kappa = cfg.model.kappa();
                let (r, est) = verify_oracle_efficiency(&cfg, gamma, kappa, 3.0)?;
                (r, json!({ "gamma": gamma, "kappa": kappa, "ratio": est }))
            }
        })
    });
    let (report, details) = result?;
    let pass = report.pass;
    let run_report = RunReport {
        schema_version: SCHEMA_VERSION,
        target: a.target,
        config,
        seed,
        workers,
        wall_time_s: wall,
        details,
        report,
    };
    if a.json {
        to_json_line(out, &run_report)?;
    } else {
        for c in &run_report.report.checks {
            writeln!(
                out,
                "{:<28} {} estimate={:.6e} target={:.6e} se={:.3e}",
                c.name,
                if c.pass { "PASS" } else { "FAIL" },
                c.estimate,
                c.target,
                c.std_error
            )?;
        }
        writeln!(out, "overall: {}", if pass { "PASS" } else { "FAIL" })?;
    }
    Ok(if pass { EXIT_OK } else { EXIT_FAIL })
}

fn complex_json(m: &ComplexMatrix) -> Value {
    Value::Array(
        m.row_iter()
            .map(|row| Value::Array(row.iter().map(|z| json!([z.re, z.im])).collect()))
            .collect(),
    )
}

fn cmd_estimate(a: &EstimateArgs, out: &mut dyn Write) -> Result<i32> {
    let data = Dataset::new(read_matrix_file(&a.input)?)?;
    let fit = scm(&data)?;
    let mut output = json!({
        "schema_version": SCHEMA_VERSION,
        "n": data.n(),
        "p": data.p(),
        "xbar": fit.xbar.iter().map(|z| json!([z.re, z.im])).collect::<Vec<_>>(),
    });
    match &a.scm_out {
        Some(path) => {
            write_matrix_file(path, fit.s.as_matrix())?;
            output["scm_file"] = json!(path.display().to_string());
        }
        None => output["scm"] = complex_json(fit.s.as_matrix()),
    }
    let plug_in = || -> Result<(f64, f64, f64, ShrinkageReport)> {
        let (eta, gamma) = scale_and_sphericity(&fit.s)?;
        let kappa = estimate_kurtosis(&data)?;
        let gamma_c = gamma.clamp(1.0, data.p() as f64);
        let report = ShrinkageReport::from_scale_sphericity(data.n(), data.p(), eta, gamma_c, kappa)?;
        Ok((eta, gamma, kappa, report))
    };
    let code = match plug_in() {
        Ok((eta, gamma, kappa, report)) => {
            output["eta"] = json!(eta);
            output["gamma"] = json!(gamma);
            output["kappa"] = json!(kappa);
            output["nmse"] = json!(report.nmse);
            output["beta_o"] = json!(report.beta_o);
            output["partial"] = json!(false);
            EXIT_OK
        }
        Err(e) => {
            output["partial"] = json!(true);
            output["error"] = json!(e.to_string());
            EXIT_ERROR
        }
    };
    if a.json {
        to_json_line(out, &output)?;
    } else {
        for (k, v) in output.as_object().into_iter().flatten() {
            writeln!(out, "{k}: {v}")?;
        }
    }
    Ok(code)
}
