//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Runs 1–7 are executed with 1 and 4 workers; the
//! bit patterns of their outputs feed criterion 10.

use std::process::{Command, ExitCode};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ces_scm::ces_sampler::{CesModel, DistributionFamily, ModularSampler, RngStream};
use ces_scm::cli::presets::{random_covariance, spiked_covariance};
use ces_scm::estimators::{scm, Dataset};
use ces_scm::lin_core::{commutation_matrix, rel_frobenius, to_complex, vec, ComplexMatrix, ComplexVector, HermitianMatrix};
use ces_scm::mc_verify::{
    compare_to_theory, estimate_radial_structure, verify_oracle_efficiency, verify_sphere_moments, verify_transport,
    ComparisonReport, EmpiricalMoments, McConfig, RadialEstimate, Statistic, Tolerances,
};
use ces_scm::theory::{
    affine_equivariant_var, beta_opt, beta_opt_univariate, mse_from_scale_sphericity, mse_scm, radial_var_structure,
    scm_radial_structure, trace_var, RadialStructure,
};
use ces_scm::Result;

const WORKER_COUNTS: [usize; 2] = [1, 4];
const SE_K: f64 = 4.0;
const ORACLE_SE_K: f64 = 3.0;
const REL_GAUSS: f64 = 0.02;
const REL_HEAVY: f64 = 0.05;

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

/// Raw bit patterns of everything a run reports.
type Fingerprint = Vec<u64>;

fn push_matrix(fp: &mut Fingerprint, m: &ComplexMatrix) {
    fp.extend(m.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]));
}

fn moments_fingerprint(emp: &EmpiricalMoments) -> Fingerprint {
    let mut fp = Vec::new();
    push_matrix(&mut fp, emp.mean_stat.as_matrix());
    push_matrix(&mut fp, &emp.var_emp);
    push_matrix(&mut fp, &emp.pvar_emp);
    fp.extend(emp.se_var.iter().map(|x| x.to_bits()));
    fp.extend([emp.mse_direct.to_bits(), emp.mse_direct_se.to_bits()]);
    fp
}

fn report_fingerprint(report: &ComparisonReport) -> Fingerprint {
    report
        .checks
        .iter()
        .flat_map(|c| [c.estimate.to_bits(), c.std_error.to_bits()])
        .collect()
}

/// Runs `f` once per worker count; returns the first result and whether all
/// fingerprints agree.
fn across_workers<T>(f: impl Fn(usize) -> Result<(T, Fingerprint)>) -> Result<(T, bool)> {
    let mut first: Option<(T, Fingerprint)> = None;
    let mut identical = true;
    for workers in WORKER_COUNTS {
        let (value, fp) = f(workers)?;
        match &first {
            None => first = Some((value, fp)),
            Some((_, fp0)) => identical &= *fp0 == fp,
        }
    }
    let (value, _) = first.expect("at least one worker count");
    Ok((value, identical))
}

fn spherical_run(
    family: DistributionFamily,
    reps: u64,
    seed: u64,
) -> Result<((RadialEstimate, EmpiricalMoments), bool)> {
    across_workers(|workers| {
        let cfg = McConfig::new(reps, 10, CesModel::spherical(2, family)?, Statistic::Scm, seed, workers)?;
        let (est, emp) = estimate_radial_structure(&cfg)?;
        let mut fp = moments_fingerprint(&emp);
        fp.extend([est.structure.tau1.to_bits(), est.structure.tau2.to_bits()]);
        Ok(((est, emp), fp))
    })
}

fn rel(est: f64, target: f64) -> f64 {
    (est - target).abs() / target.abs()
}

/// Entry `(i, j)` of `M` sits at `j p + i` in `vec(M)`.
fn idx(i: usize, j: usize, p: usize) -> usize {
    j * p + i
}

struct McState {
    gauss_mse: Option<(f64, f64)>,
    heavy_mse: Option<(f64, f64)>,
    transport_mse: Option<(f64, f64)>,
    deterministic: Vec<(u32, bool)>,
}

fn criterion_1(state: &mut McState) -> Result<Outcome> {
    let ((_, emp), same) = spherical_run(DistributionFamily::Gaussian, 200_000, 1001)?;
    state.deterministic.push((1, same));
    let p = 2;
    let off = idx(0, 1, p);
    let var12 = emp.var_emp[(off, off)].re;
    let (d1, d2) = (idx(0, 0, p), idx(1, 1, p));
    let cov_diag = emp.var_emp[(d1, d2)].re;
    let cov_se = emp.se_var[(d1, d2)];
    let target = 1.0 / 9.0;
    let (mse, _) = mse_scm(&HermitianMatrix::identity(p), 10, 0.0)?;
    state.gauss_mse = Some((emp.mse_direct, mse));
    let pass = rel(var12, target) <= REL_GAUSS && cov_diag.abs() < SE_K * cov_se;
    Ok(Outcome {
        id: 1,
        pass,
        detail: format!(
            "Gaussian p=2 n=10 R=2e5: var(s12)={var12:.6} vs 1/9 (rel {:.4} <= {REL_GAUSS}); \
             cov(s11,s22)={cov_diag:.3e}, |z|={:.2} < {SE_K}",
            rel(var12, target),
            cov_diag.abs() / cov_se
        ),
    })
}

/// `E[r^4] / (p(p+1)) - 1` from direct modular draws, with its SE.
fn modular_kurtosis(family: DistributionFamily, p: usize, draws: u64, seed: u64) -> Result<(f64, f64)> {
    let sampler = ModularSampler::new(family, p)?;
    let mut rng = RngStream::new(seed, 0).rng();
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..draws {
        let r4 = sampler.sample(&mut rng).powi(4);
        s1 += r4;
        s2 += r4 * r4;
    }
    let d = draws as f64;
    let mean = s1 / d;
    let var = (s2 / d - mean * mean) * d / (d - 1.0);
    let c = (p * (p + 1)) as f64;
    Ok((mean / c - 1.0, (var / d).sqrt() / c))
}

fn criterion_2(state: &mut McState) -> Result<Outcome> {
    let family = DistributionFamily::CompoundGaussianK { alpha: 0.5 };
    let kappa = family.elliptical_kurtosis()?;
    let (k_hat, k_se) = modular_kurtosis(family, 2, 1_000_000, 2002)?;
    let kappa_ok = (kappa - 2.0).abs() < 1e-12 && (k_hat - kappa).abs() < SE_K * k_se;

    let ((est, emp), same) = spherical_run(family, 500_000, 2003)?;
    state.deterministic.push((2, same));
    let theo = scm_radial_structure(10, 2, kappa)?;
    let s = est.structure;
    let (mse, _) = mse_scm(&HermitianMatrix::identity(2), 10, kappa)?;
    state.heavy_mse = Some((emp.mse_direct, mse));
    let pass = kappa_ok && rel(s.tau1, theo.tau1) <= REL_HEAVY && rel(s.tau2, theo.tau2) <= REL_HEAVY;
    Ok(Outcome {
        id: 2,
        pass,
        detail: format!(
            "k:0.5 kappa={kappa} (modular MC {k_hat:.4} +- {k_se:.4}); p=2 n=10 R=5e5: \
             tau1={:.5} vs {:.5} (rel {:.4}), tau2={:.5} vs {:.5} (rel {:.4}), tol {REL_HEAVY}",
            s.tau1,
            theo.tau1,
            rel(s.tau1, theo.tau1),
            s.tau2,
            theo.tau2,
            rel(s.tau2, theo.tau2)
        ),
    })
}

fn criterion_3(state: &mut McState) -> Result<Outcome> {
    let m = random_covariance(3, 3003);
    let tolerances = Tolerances::for_family(DistributionFamily::Gaussian);
    let ((report, emp), same) = across_workers(|workers| {
        let model = CesModel::centered(m.clone(), DistributionFamily::Gaussian)?;
        let cfg = McConfig::new(200_000, 10, model, Statistic::Scm, 3004, workers)?;
        let (report, emp) = verify_transport(&cfg, tolerances)?;
        let fp = moments_fingerprint(&emp);
        Ok(((report, emp), fp))
    })?;
    state.deterministic.push((3, same));
    let (mse, _) = mse_scm(&m, 10, 0.0)?;
    state.transport_mse = Some((emp.mse_direct, mse));

    let s = scm_radial_structure(10, 3, 0.0)?;
    let doubled = RadialStructure::new(s.sigma, 2.0 * s.tau1, s.tau2, 3)?;
    let control = compare_to_theory(&emp, &affine_equivariant_var(&m, &doubled), tolerances)?;
    let z = |r: &ComparisonReport, name: &str| r.check(name).map_or(f64::NAN, |c| c.estimate);
    let var_ok = report.check("var_entrywise_max_z").is_some_and(|c| c.pass);
    let pvar_ok = report.check("pvar_entrywise_max_z").is_some_and(|c| c.pass);
    let pass = var_ok && pvar_ok && !control.pass;
    Ok(Outcome {
        id: 3,
        pass,
        detail: format!(
            "transport p=3 random PD M, Gaussian n=10 R=2e5: max z var={:.2}, pvar={:.2} (<= {SE_K}); \
             negative control (tau1 doubled) max z var={:.1} -> {}",
            z(&report, "var_entrywise_max_z"),
            z(&report, "pvar_entrywise_max_z"),
            z(&control, "var_entrywise_max_z"),
            if control.pass { "passed (bad)" } else { "rejected" }
        ),
    })
}

fn criterion_4(state: &McState) -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut pass = true;
    for (label, entry, tol) in [
        ("Gaussian I", state.gauss_mse, REL_GAUSS),
        ("k:0.5 I", state.heavy_mse, REL_HEAVY),
        ("Gaussian random M", state.transport_mse, REL_GAUSS),
    ] {
        match entry {
            Some((mc, theo)) => {
                let r = rel(mc, theo);
                pass &= r <= tol;
                parts.push(format!("{label}: {mc:.5} vs {theo:.5} (rel {r:.4} <= {tol})"));
            }
            None => {
                pass = false;
                parts.push(format!("{label}: missing"));
            }
        }
    }
    // tr(var) identity, theory only.
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    for p in 1..=5 {
        for kappa in [-1.0 / (p as f64 + 1.0), 0.0, 0.5, 2.0] {
            let m = random_pd(&mut rng, p);
            let s = scm_radial_structure(12, p, kappa)?;
            let tr = trace_var(&affine_equivariant_var(&m, &s));
            let closed = s.tau1 * m.trace().powi(2) + s.tau2 * m.trace_of_square();
            worst = worst.max(rel(tr, closed));
        }
    }
    pass &= worst <= 1e-12;
    parts.push(format!("tr(var) identity max rel err {worst:.2e} <= 1e-12"));
    Ok(Outcome {
        id: 4,
        pass,
        detail: parts.join("; "),
    })
}

fn criterion_5() -> Result<Outcome> {
    let output = Command::new(env!("CARGO_BIN_EXE_ces-scm"))
        .arg("curve")
        .output()
        .map_err(|e| ces_scm::Error::Io(e.to_string()))?;
    let text = String::from_utf8_lossy(&output.stdout);
    let points: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .filter_map(|line| {
            let (k, b) = line.split_once(',')?;
            Some((k.parse().ok()?, b.parse().ok()?))
        })
        .collect();
    let lookup = |kappa: f64| {
        points
            .iter()
            .find(|(k, _)| (k - kappa).abs() < 1e-9)
            .map(|&(_, b)| b)
    };
    let mut pass = output.status.success() && !points.is_empty();
    let mut parts = Vec::new();
    for (kappa, expected) in [(-1.0 / 11.0, 0.66622), (0.0, 0.642857), (3.0, 0.29801)] {
        match lookup(kappa) {
            Some(b) => {
                let ok = (b - expected).abs() <= 1e-5;
                pass &= ok;
                parts.push(format!("beta_o({kappa:.4})={b:.6} vs {expected}"));
            }
            None => {
                pass = false;
                parts.push(format!("kappa={kappa:.4} missing"));
            }
        }
    }
    let monotone = points.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 < w[0].1);
    pass &= monotone;
    Ok(Outcome {
        id: 5,
        pass,
        detail: format!(
            "`ces-scm curve` defaults, {} points: {}; strictly decreasing: {monotone}",
            points.len(),
            parts.join(", ")
        ),
    })
}

fn criterion_6(state: &mut McState) -> Result<Outcome> {
    let m = spiked_covariance(4, 2.0)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (family, reps, seed) in [
        (DistributionFamily::Gaussian, 200_000, 6001),
        (DistributionFamily::CompoundGaussianK { alpha: 0.5 }, 500_000, 6002),
    ] {
        let kappa = family.elliptical_kurtosis()?;
        let ((report, est), same) = across_workers(|workers| {
            let model = CesModel::centered(m.clone(), family)?;
            let cfg = McConfig::new(reps, 10, model, Statistic::Scm, seed, workers)?;
            let (report, est) = verify_oracle_efficiency(&cfg, 2.0, kappa, ORACLE_SE_K)?;
            let mut fp = report_fingerprint(&report);
            fp.extend([est.plug_in_ratio.to_bits(), est.mse_scm.to_bits()]);
            Ok(((report, est), fp))
        })?;
        state.deterministic.push((6, same));
        let beta = report.check("mse_ratio").map_or(f64::NAN, |c| c.target);
        pass &= report.pass;
        parts.push(format!(
            "{family}: ratio={:.5} +- {:.5} vs beta_o={beta:.5} (z={:.2} <= {ORACLE_SE_K}, < 1: {})",
            est.ratio,
            est.ratio_se,
            (est.ratio - beta).abs() / est.ratio_se,
            est.ratio < 1.0
        ));
    }
    // beta^2 MSE + (1 - beta)^2 ||M||^2 = beta MSE.
    let mut worst = 0.0f64;
    for n in [2, 5, 10, 100] {
        for p in [1, 2, 4, 10] {
            for gamma in [1.0, 0.5 * (1.0 + p as f64), p as f64] {
                for kappa in [-1.0 / (p as f64 + 1.0), 0.0, 0.5, 3.0] {
                    let eta = 1.7;
                    let (mse, nmse) = mse_from_scale_sphericity(n, p, eta, gamma, kappa)?;
                    let beta = beta_opt(nmse)?;
                    let norm_sq = gamma * p as f64 * eta * eta;
                    let lhs = beta * beta * mse + (1.0 - beta).powi(2) * norm_sq;
                    worst = worst.max(rel(lhs, beta * mse));
                }
            }
        }
    }
    pass &= worst <= 1e-12;
    parts.push(format!("oracle MSE chain max rel err {worst:.2e} <= 1e-12"));
    Ok(Outcome {
        id: 6,
        pass,
        detail: format!("p=4 n=10 spiked gamma=2: {}", parts.join("; ")),
    })
}

fn criterion_7(state: &mut McState) -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (p, seed) in [(2, 7002), (4, 7004), (8, 7008)] {
        let (report, same) = across_workers(|workers| {
            let report = verify_sphere_moments(p, 1_000_000, seed, workers, SE_K)?;
            let fp = report_fingerprint(&report);
            Ok((report, fp))
        })?;
        state.deterministic.push((7, same));
        let max_z = report.checks.iter().map(|c| c.z()).fold(0.0, f64::max);
        pass &= report.pass;
        parts.push(format!("p={p}: {} checks, max z={max_z:.2}", report.checks.len()));
    }
    Ok(Outcome {
        id: 7,
        pass,
        detail: format!("sphere moments, 1e6 draws, within {SE_K} SE: {}", parts.join(", ")),
    })
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

fn random_pd(rng: &mut ChaCha8Rng, p: usize) -> HermitianMatrix {
    let a = random_matrix(rng, p, p);
    HermitianMatrix::new(&a * a.adjoint() + ComplexMatrix::identity(p, p).scale(0.1)).expect("hermitian")
}

fn criterion_8() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(8008);

    let mut equiv = 0.0f64;
    for p in 1..=5 {
        let x = Dataset::new(random_matrix(&mut rng, 3 * p + 2, p))?;
        let a = random_matrix(&mut rng, p, p);
        let shift = ComplexVector::from_fn(p, |_, _| Complex64::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)));
        let lhs = scm(&x.affine(&a, &shift)?)?.s;
        let rhs = &a * scm(&x)?.s.as_matrix() * a.adjoint();
        equiv = equiv.max(rel_frobenius(lhs.as_matrix(), &rhs));
    }

    let mut k_ok = true;
    for p in 1..=6 {
        let k = to_complex(&commutation_matrix(p)?);
        for i in 0..p {
            for j in 0..p {
                let mut e = ComplexMatrix::zeros(p, p);
                e[(i, j)] = Complex64::new(1.0, 0.0);
                k_ok &= &k * vec(&e) == vec(&e.transpose());
            }
        }
    }

    let mut sqrt_err = 0.0f64;
    for p in 1..=8 {
        let m = random_pd(&mut rng, p);
        let r = m.sqrt()?;
        sqrt_err = sqrt_err.max(rel_frobenius(&(r.as_matrix() * r.as_matrix()), m.as_matrix()));
    }

    let mut det_err = 0.0f64;
    for p in 1..=4 {
        for (tau1, tau2) in [(0.3, 0.1), (1.0 / 9.0, 0.0), (0.7, -0.7 / p as f64 * 0.5), (0.05, 2.0)] {
            let pair = radial_var_structure(tau1, tau2, p)?;
            let dense = pair.var.determinant().re;
            let q = (p * p) as i32;
            let closed = (tau1 + tau2 * p as f64) * tau1.powi(q - 1);
            det_err = det_err.max(rel(dense, closed));
        }
    }

    let pass = equiv <= 1e-10 && k_ok && sqrt_err <= 1e-10 && det_err <= 1e-9;
    Ok(Outcome {
        id: 8,
        pass,
        detail: format!(
            "affine equivariance rel {equiv:.1e} <= 1e-10; K_p vec(E_ij) = vec(E_ji) for all p <= 6: {k_ok}; \
             sqrt reconstruction rel {sqrt_err:.1e} <= 1e-10; determinant identity rel {det_err:.1e} <= 1e-9"
        ),
    })
}

fn criterion_9() -> Result<Outcome> {
    let mut exact = true;
    for n in 2..=50usize {
        exact &= beta_opt_univariate(n, 0.0)? == (n as f64 - 1.0) / n as f64;
    }
    let mut worst = 0.0f64;
    for n in [2, 3, 5, 10, 50, 1000] {
        for kurt in [-1.0, -0.5, 0.0, 0.3, 1.0, 4.0, 20.0] {
            let uni = beta_opt_univariate(n, kurt)?;
            let (_, nmse) = mse_from_scale_sphericity(n, 1, 1.0, 1.0, kurt / 2.0)?;
            worst = worst.max(rel(beta_opt(nmse)?, uni));
        }
    }
    Ok(Outcome {
        id: 9,
        pass: exact && worst <= 1e-12,
        detail: format!(
            "beta(kurt=0, n) == (n-1)/n bitwise for n=2..50: {exact}; p=1 multivariate vs univariate max rel {worst:.1e} <= 1e-12"
        ),
    })
}

fn criterion_10(state: &McState) -> Outcome {
    let runs: Vec<String> = state
        .deterministic
        .iter()
        .map(|(id, same)| format!("{id}:{}", if *same { "identical" } else { "DIFFERS" }))
        .collect();
    let expected = [1, 2, 3, 6, 7];
    let covered = expected.iter().all(|id| state.deterministic.iter().any(|(i, _)| i == id));
    Outcome {
        id: 10,
        pass: covered && state.deterministic.iter().all(|(_, same)| *same),
        detail: format!("workers {:?}, bitwise: {}", WORKER_COUNTS, runs.join(" ")),
    }
}

fn report(outcome: Result<Outcome>, id: u32) -> bool {
    let outcome = outcome.unwrap_or_else(|e| Outcome {
        id,
        pass: false,
        detail: format!("error: {e}"),
    });
    println!(
        "criterion {:>2} {}  {}",
        outcome.id,
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.detail
    );
    outcome.pass
}

fn main() -> ExitCode {
    // Honour `cargo test -- --list` and filters politely.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut state = McState {
        gauss_mse: None,
        heavy_mse: None,
        transport_mse: None,
        deterministic: Vec::new(),
    };
    let mut all = true;
    all &= report(criterion_1(&mut state), 1);
    all &= report(criterion_2(&mut state), 2);
    all &= report(criterion_3(&mut state), 3);
    all &= report(criterion_4(&state), 4);
    all &= report(criterion_5(), 5);
    all &= report(criterion_6(&mut state), 6);
    all &= report(criterion_7(&mut state), 7);
    all &= report(criterion_8(), 8);
    all &= report(criterion_9(), 9);
    all &= report(Ok(criterion_10(&state)), 10);
    println!("acceptance: {}", if all { "ALL PASS" } else { "FAILURES" });
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
