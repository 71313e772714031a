//! Acceptance run. Prints one PASS/FAIL line per criterion (with its
//! sub-checks indented below) and exits non-zero if any criterion fails.
//!
//! `cargo test --release -p ces-evd --test acceptance`

use std::f64::consts::FRAC_PI_4;
use std::time::Instant;

use ces_evd::asymptotics::{
    coeffs_closed_form_student, coeffs_for, coeffs_numeric, eigen_perturbation_first_order, eigenvector_cov_xi_trace,
    scatter_cov,
};
use ces_evd::ces::{CesDistribution, CoupledSampler};
use ces_evd::experiments::{db, run_experiment, to_csv_string, Experiment, ExperimentConfig, ExperimentResult};
use ces_evd::linalg::{hermitian_evd, phase_align, toeplitz_scatter, vec, CMatrix, HermitianMatrix};
use ces_evd::low_rank::{build_factor_model, dft_basis, principal_projector, projector_perturbation_first_order};
use ces_evd::mestimator::{fixed_point_solve, scm, student_spec, MEstimatorSpec, SolverOptions};
use ces_evd::riemannian::{ab_crlb, alpha_beta, ces_crb, eta};
use ces_evd::rng::RandomStream;
use num_complex::Complex64;

struct Criterion {
    name: &'static str,
    checks: Vec<(bool, String)>,
    start: Instant,
}

impl Criterion {
    fn new(name: &'static str) -> Self {
        Self { name, checks: Vec::new(), start: Instant::now() }
    }

    fn check(&mut self, ok: bool, detail: String) -> &mut Self {
        self.checks.push((ok, detail));
        self
    }

    /// `|got - want| <= tol`.
    fn near(&mut self, what: &str, got: f64, want: f64, tol: f64) -> &mut Self {
        self.check((got - want).abs() <= tol, format!("{what}: {got:.4} vs {want:.4} (tol {tol})"))
    }

    fn finish(self) -> bool {
        let ok = self.checks.iter().all(|c| c.0);
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("{verdict} {} ({:.1} s)", self.name, self.start.elapsed().as_secs_f64());
        for (ok, detail) in &self.checks {
            println!("    [{}] {detail}", if *ok { "ok" } else { "FAIL" });
        }
        ok
    }
}

fn toeplitz20() -> HermitianMatrix {
    toeplitz_scatter(20, Complex64::from_polar(0.9, FRAC_PI_4)).unwrap()
}

fn campaign(experiment: Experiment, n_grid: &[usize], trials: usize) -> ExperimentResult {
    let cfg = ExperimentConfig { experiment, n_grid: n_grid.to_vec(), trials, seed: 2024, ..Default::default() };
    run_experiment(&cfg).unwrap_or_else(|e| panic!("{} campaign: {e}", experiment.name()))
}

fn col(res: &ExperimentResult, name: &str, n: usize) -> f64 {
    let c = res.columns.iter().position(|x| x == name).unwrap();
    res.rows.iter().find(|r| r.n == n).unwrap().values[c]
}

fn frob(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn coefficients() -> bool {
    let mut c = Criterion::new("AC1 t M-estimator coefficients, p = 20, d = 3");
    let closed = coeffs_closed_form_student(20, 3.0).unwrap();
    let want = [1.046512, 0.697674, 0.046512, 0.697674];
    let got = [closed.theta1, closed.theta2, closed.sigma1, closed.sigma2];
    for (name, (g, w)) in ["theta1", "theta2", "sigma1", "sigma2"].iter().zip(got.iter().zip(want)) {
        c.near(&format!("closed-form {name}"), *g, w, 5e-7);
    }
    let t = Instant::now();
    let spec = student_spec(20, 3.0).unwrap();
    let num = coeffs_numeric(&spec, CesDistribution::student_t(3.0).unwrap(), 20, 1_000_000, &mut RandomStream::new(11, 0))
        .unwrap();
    let secs = t.elapsed().as_secs_f64();
    let got = [num.theta1, num.theta2, num.sigma1, num.sigma2];
    for (name, (g, w)) in ["theta1", "theta2", "sigma1", "sigma2"].iter().zip(got.iter().zip(want)) {
        let r = (g / w - 1.0).abs();
        c.check(r <= 0.01, format!("numeric {name} = {g:.6}, relative error {r:.2e} (tol 1e-2)"));
    }
    c.check(secs < 10.0, format!("numeric estimate took {secs:.2} s (limit 10 s)"));
    c.finish()
}

fn eigenvalue_theory() -> bool {
    let mut c = Criterion::new("AC2 eigenvalue MSE theory at n = 2000");
    let k = coeffs_closed_form_student(20, 3.0).unwrap();
    let f2 = toeplitz20().frobenius_norm().powi(2);
    c.near("standard dB", db((k.theta1 + k.theta2) * f2 / 2000.0), -8.94, 0.05);
    c.near("GCWE dB", db((k.sigma1 + k.sigma2) * f2 / 2000.0), -12.64, 0.05);
    c.finish()
}

fn eigenvalue_monte_carlo() -> bool {
    let mut c = Criterion::new("AC3 eigenvalue MSE Monte Carlo, n = 2000, 1000 trials");
    let res = campaign(Experiment::Eigenvalues, &[2000], 1000);
    c.near("standard dB", col(&res, "emp_std_db", 2000), col(&res, "theory_std_db", 2000), 0.3);
    c.near("GCWE dB", col(&res, "emp_gcwe_db", 2000), col(&res, "theory_gcwe_db", 2000), 0.3);
    c.finish()
}

fn eigenvector() -> bool {
    let mut c = Criterion::new("AC4 first eigenvector MSE, n = 2000");
    let k = coeffs_closed_form_student(20, 3.0).unwrap();
    let lambda = hermitian_evd(&toeplitz20()).unwrap().eigenvalues;
    let tr = eigenvector_cov_xi_trace(&lambda, 0, 1.0).unwrap();
    c.near("theory standard dB", db(k.theta1 * tr / 2000.0), -31.48, 0.05);
    c.near("theory GCWE dB", db(k.sigma1 * tr / 2000.0), -45.00, 0.05);
    let res = campaign(Experiment::Eigenvectors, &[2000], 1000);
    c.near("Monte Carlo standard dB", col(&res, "emp_std_db", 2000), col(&res, "theory_std_db", 2000), 0.5);
    c.near("Monte Carlo GCWE dB", col(&res, "emp_gcwe_db", 2000), col(&res, "theory_gcwe_db", 2000), 1.0);
    c.finish()
}

fn projector() -> bool {
    let mut c = Criterion::new("AC5 rank-5 projector MSE, lambda_r = (100, 80, 60, 40, 20), gamma^2 = 1");
    let res = campaign(Experiment::Projector, &[2000], 1000);
    c.near("Monte Carlo standard dB", col(&res, "emp_std_db", 2000), col(&res, "theory_std_db", 2000), 0.5);
    c.near("Monte Carlo GCWE dB", col(&res, "emp_gcwe_db", 2000), col(&res, "theory_gcwe_db", 2000), 0.5);
    let grid = campaign(Experiment::Projector, &ces_evd::experiments::DEFAULT_GRID, 1);
    let offsets: Vec<f64> = grid.rows.iter().map(|r| r.values[1] - r.values[3]).collect();
    let worst = offsets.iter().fold(0.0f64, |a, o| a.max((o - 13.52).abs()));
    c.check(worst <= 0.1, format!("theory offset over the grid {:.4} .. {:.4} dB, want 13.52 +- 0.1", offsets[0], offsets[9]));
    c.finish()
}

fn intrinsic_bias() -> bool {
    let mut c = Criterion::new("AC6 intrinsic bias eta(20, n)");
    c.near("eta(20, 40) dB", db(eta(20, 40).unwrap()), -0.736, 0.02);
    c.near("eta(20, 2000) dB", db(eta(20, 2000).unwrap()), -23.00, 0.02);
    let res = campaign(Experiment::IntrinsicBias, &[228, 2000], 10_000);
    for n in [228, 2000] {
        let th = col(&res, "theory_db", n);
        c.near(&format!("M-estimator eta_hat dB at n = {n}"), col(&res, "emp_m_db", n), th, 0.3);
        c.near(&format!("GCWE eta_hat dB at n = {n}"), col(&res, "emp_gcwe_db", n), th, 0.3);
    }
    c.finish()
}

fn crlb() -> bool {
    let mut c = Criterion::new("AC7 intrinsic Cramer-Rao bounds");
    let ab = alpha_beta(CesDistribution::student_t(3.0).unwrap(), 20).unwrap();
    let crb = ces_crb(20, 2000, ab.alpha, ab.beta).unwrap().value;
    let abc = ab_crlb(20, 2000, ab.alpha, ab.beta).unwrap().value;
    c.near("CES CRB dB at n = 2000", db(crb), -6.733, 0.15);
    let pe2 = 20.0 * eta(20, 2000).unwrap().powi(2);
    c.check(abc >= crb && ((abc - crb) - pe2).abs() <= 1e-12 * abc, format!("AB CRLB - CRB = {:.6e}, p eta^2 = {pe2:.6e}", abc - crb));
    let res = campaign(Experiment::Crlb, &ces_evd::experiments::DEFAULT_GRID, 200);
    for r in &res.rows {
        let (emp, bound) = (col(&res, "emp_dnat_m_db", r.n), col(&res, "ab_crlb_db", r.n));
        c.check(emp > bound, format!("n = {}: mean d_nat^2 {emp:.3} dB > AB CRLB {bound:.3} dB", r.n));
    }
    c.finish()
}

fn snr_loss() -> bool {
    let mut c = Criterion::new("AC8 SNR loss of the rank-5 filter");
    let grid = [543, 838, 1295, 2000];
    let res = campaign(Experiment::SnrLoss, &grid, 5000);
    c.near("GCWE dB at n = 2000", col(&res, "emp_gcwe_db", 2000), -0.011, 0.005);
    c.near("theory 1 - r/n dB at n = 2000", col(&res, "theory_db", 2000), -0.011, 0.005);
    for n in grid {
        c.near(&format!("M-estimator vs GCWE dB at n = {n}"), col(&res, "emp_m_db", n), col(&res, "emp_gcwe_db", n), 0.01);
    }
    let (m, g, s) = (col(&res, "emp_m_db", 543), col(&res, "emp_gcwe_db", 543), col(&res, "emp_scm_db", 543));
    c.check(s <= m.min(g) - 0.1, format!("SCM on t data at n = 543: {s:.4} dB vs M {m:.4} / GCWE {g:.4}, need >= 0.1 dB below"));
    c.finish()
}

/// Remainder / eps^2 over three decades of eps; bounded if the spread is small.
fn remainder_ratios(f: impl Fn(f64) -> f64) -> (Vec<f64>, bool) {
    let r: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&e| f(e) / (e * e)).collect();
    let (lo, hi) = r.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    (r.clone(), hi.is_finite() && hi > 0.0 && hi <= 4.0 * lo)
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn properties() -> bool {
    let mut c = Criterion::new("AC9 property suites");
    let mut s = RandomStream::new(99, 0);
    let p = 5;
    let sigma = toeplitz_scatter(p, Complex64::from_polar(0.7, 0.4)).unwrap();
    let sampler = CoupledSampler::new(CesDistribution::student_t(3.0).unwrap(), &sigma).unwrap();
    let z = sampler.sample(60, &mut s).unwrap().z;
    let opts = SolverOptions::default();

    let unit = fixed_point_solve(&MEstimatorSpec::constant(1.0).unwrap(), &z, &opts).unwrap();
    let e = frob(&(unit.matrix() - scm(&z).matrix())) / frob(scm(&z).matrix());
    c.check(e <= 1e-12, format!("u = 1 fixed point equals SCM, relative error {e:.1e}"));

    let spec = student_spec(p, 3.0).unwrap();
    let base = fixed_point_solve(&spec, &z, &opts).unwrap();
    let v = CMatrix::from_fn(p, p, |_, _| s.complex_normal()).qr().q();
    let rot = fixed_point_solve(&spec, &(&v * &z), &opts).unwrap();
    let e = frob(&(rot.matrix() - &v * base.matrix() * v.adjoint())) / frob(base.matrix());
    c.check(e <= 1e-8, format!("unitary equivariance, relative error {e:.1e}"));
    let order: Vec<usize> = (0..60).rev().collect();
    let perm = fixed_point_solve(&spec, &z.select_columns(&order), &opts).unwrap();
    let e = frob(&(perm.matrix() - base.matrix())) / frob(base.matrix());
    c.check(e <= 1e-12, format!("permutation equivariance, relative error {e:.1e}"));

    let delta = {
        let a = CMatrix::from_fn(p, p, |_, _| s.complex_normal());
        HermitianMatrix::hermitian_part(&a + a.adjoint()).unwrap()
    };
    let evd = hermitian_evd(&sigma).unwrap();
    let (dl, du) = eigen_perturbation_first_order(&evd, &delta).unwrap();
    let perturbed = |eps: f64| hermitian_evd(&HermitianMatrix::hermitian_part(sigma.matrix() + delta.matrix() * Complex64::from(eps)).unwrap()).unwrap();
    let (r, ok) = remainder_ratios(|eps| {
        let pe = perturbed(eps);
        (0..p).map(|j| (pe.eigenvalues[j] - evd.eigenvalues[j] - eps * dl[j]).abs()).fold(0.0, f64::max)
    });
    c.check(ok, format!("eigenvalue first-order remainder / eps^2 = {}", sci(&r)));
    let (r, ok) = remainder_ratios(|eps| {
        let pe = perturbed(eps);
        (0..p)
            .map(|j| {
                let u = evd.eigenvector(j);
                let ue = phase_align(&pe.eigenvector(j), &u).unwrap();
                (ue - u - du.column(j) * Complex64::from(eps)).norm()
            })
            .fold(0.0, f64::max)
    });
    c.check(ok, format!("eigenvector first-order remainder / eps^2 = {}", sci(&r)));

    let model = build_factor_model(dft_basis(8, 3), vec![30.0, 12.0, 5.0], 1.0).unwrap();
    let d8 = {
        let a = CMatrix::from_fn(8, 8, |_, _| s.complex_normal());
        HermitianMatrix::hermitian_part(&a + a.adjoint()).unwrap()
    };
    let dpi = projector_perturbation_first_order(&model, &d8).unwrap();
    let (r, ok) = remainder_ratios(|eps| {
        let m = HermitianMatrix::hermitian_part(model.sigma().matrix() + d8.matrix() * Complex64::from(eps)).unwrap();
        let pe = principal_projector(&m, 3).unwrap();
        frob(&(pe.matrix() - model.pi_r().matrix() - dpi.matrix() * Complex64::from(eps)))
    });
    c.check(ok, format!("projector first-order remainder / eps^2 = {}", sci(&r)));

    let t = Instant::now();
    let (p3, n, trials) = (3, 2000, 5000);
    let sig3 = toeplitz_scatter(p3, Complex64::from_polar(0.9, FRAC_PI_4)).unwrap();
    let dist = CesDistribution::student_t(3.0).unwrap();
    let spec3 = student_spec(p3, 3.0).unwrap().calibrated(dist, p3).unwrap();
    let k3 = coeffs_for(&spec3, dist, p3, 100_000, &mut RandomStream::new(1, 0)).unwrap();
    let target = scatter_cov(&sig3.scaled(1.0 / spec3.sigma), &k3).unwrap().c;
    let samp3 = CoupledSampler::new(dist, &sig3).unwrap();
    let mut acc = CMatrix::zeros(p3 * p3, p3 * p3);
    for trial in 0..trials {
        let z = samp3.sample(n, &mut RandomStream::for_trial(5, 0, trial)).unwrap().z;
        let est = fixed_point_solve(&spec3, &z, &opts).unwrap().scaled(spec3.sigma);
        let v = vec(&(est.matrix() - sig3.matrix())) * Complex64::from((n as f64).sqrt());
        acc += &v * v.adjoint();
    }
    let emp = acc / Complex64::from(trials as f64);
    let e = frob(&(&emp - &target)) / frob(&target);
    c.check(e <= 0.10, format!("p = 3 covariance of sqrt(n) vec(estimate - Sigma), relative error {e:.4} (tol 0.10, {:.1} s)", t.elapsed().as_secs_f64()));

    let cfg = ExperimentConfig { experiment: Experiment::Crlb, p: 6, n_grid: vec![20, 80], trials: 1, seed: 3, ..Default::default() };
    let a = to_csv_string(&run_experiment(&cfg).unwrap());
    let b = to_csv_string(&run_experiment(&cfg).unwrap());
    c.check(a == b, "same seed, trials = 1: byte-identical CSV".into());
    c.finish()
}

fn main() {
    let criteria: [fn() -> bool; 9] =
        [coefficients, eigenvalue_theory, eigenvalue_monte_carlo, eigenvector, projector, intrinsic_bias, crlb, snr_loss, properties];
    let results: Vec<bool> = criteria.iter().map(|f| f()).collect();
    let passed = results.iter().filter(|&&x| x).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
