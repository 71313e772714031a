//! Seeded Monte Carlo campaigns over a grid of sample sizes.
//!
//! Trial `t` at grid point `k` draws from stream `(seed, k << 40 | t)`, so a
//! campaign is a pure function of its configuration whatever the thread count.
//! Reported values are `10 log10` of trial means.

mod config;
mod output;

pub use config::{Estimator, Experiment, ExperimentConfig, DEFAULT_GRID};
pub use output::{parse_csv, read_csv, render_svg, to_csv_string, to_svg_string, write_csv, CsvTable};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::asymptotics::{coeffs_for, eigenvalue_cov_trace, eigenvector_cov_xi_trace, AsymptoticCoeffs};
use crate::ces::{CesDistribution, CoupledSampler};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_evd, phase_align, spd_inverse, toeplitz_scatter, CMatrix, CVector, EvdResult, HermitianMatrix};
use crate::low_rank::{
    build_factor_model, dft_basis, principal_projector, projector_cov_trace, snr_loss, snr_loss_theory, steering_vector,
    FactorModel,
};
use crate::mestimator::{fixed_point_solve, gaussian_spec, scm, student_spec, Init, MEstimatorSpec, SolverOptions};
use crate::riemannian::{ab_crlb, alpha_beta, biased_crlb_scm, ces_crb, eta, nat_distance_sq, riemannian_logmap};
use crate::rng::RandomStream;

/// Largest tolerated share of excluded trials per grid point.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;

/// One grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub n: usize,
    pub values: Vec<f64>,
    /// Trials dropped after a failed retry.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub columns: Vec<String>,
    pub rows: Vec<ResultRow>,
    /// Written as `# key = value` lines.
    pub metadata: Vec<(String, String)>,
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Compensated (Neumaier) sum.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

enum Truth {
    Toeplitz { evd: EvdResult },
    Factor { model: FactorModel, steer: CVector },
}

struct Campaign {
    cfg: ExperimentConfig,
    spec: MEstimatorSpec,
    sampler: CoupledSampler,
    sigma: HermitianMatrix,
    sigma_inv: HermitianMatrix,
    truth: Truth,
    coeffs: Option<AsymptoticCoeffs>,
}

/// Stream index reserved for the coefficient estimate.
const COEFF_STREAM: u64 = u64::MAX - 1;
/// Stream index reserved for the steering vector.
const STEER_STREAM: u64 = u64::MAX;

impl Campaign {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let p = cfg.p;
        let dist = CesDistribution::student_t(cfg.d)?;
        let spec = match cfg.estimator {
            Estimator::Student => student_spec(p, cfg.d)?,
            Estimator::Scm => gaussian_spec(),
        }
        .calibrated(dist, p)?;
        let (sigma, truth) = if cfg.experiment.uses_factor_model() {
            let model = build_factor_model(dft_basis(p, cfg.r), cfg.lambda_r.clone(), cfg.gamma2)?;
            let steer = steering_vector(&model, &mut RandomStream::new(cfg.seed, STEER_STREAM))?;
            (model.sigma().clone(), Truth::Factor { model, steer })
        } else {
            let sigma = toeplitz_scatter(p, Complex64::from_polar(cfg.rho_mod, cfg.rho_phase))?;
            let evd = hermitian_evd(&sigma)?;
            (sigma, Truth::Toeplitz { evd })
        };
        let needs_coeffs = matches!(cfg.experiment, Experiment::Eigenvalues | Experiment::Eigenvectors | Experiment::Projector);
        let coeffs = if needs_coeffs {
            Some(coeffs_for(&spec, dist, p, cfg.coeff_draws, &mut RandomStream::new(cfg.seed, COEFF_STREAM))?)
        } else {
            None
        };
        if cfg.experiment == Experiment::Eigenvectors {
            if let Truth::Toeplitz { evd } = &truth {
                evd.require_simple(crate::asymptotics::GAP_TOL)?;
            }
        }
        let sampler = CoupledSampler::new(dist, &sigma)?;
        let sigma_inv = spd_inverse(&sigma)?;
        Ok(Self { cfg: cfg.clone(), spec, sampler, sigma, sigma_inv, truth, coeffs })
    }

    fn opts(&self, init: Init) -> SolverOptions {
        SolverOptions { tol: self.cfg.tol, max_iter: self.cfg.max_iter, init }
    }

    /// M-estimate with one retry from the other starting point; `None` if both fail.
    fn m_estimate(&self, z: &CMatrix) -> Result<Option<HermitianMatrix>> {
        for init in [Init::Scm, Init::Identity] {
            match fixed_point_solve(&self.spec, z, &self.opts(init)) {
                Ok(s) => return Ok(Some(s.scaled(self.spec.sigma))),
                Err(Error::NonConvergence { .. } | Error::Degenerate(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    }

    fn trial(&self, point: usize, n: usize, t: usize) -> Result<Option<Vec<f64>>> {
        let mut stream = RandomStream::for_trial(self.cfg.seed, point, t);
        let sample = self.sampler.sample(n, &mut stream)?;
        let Some(m) = self.m_estimate(&sample.z)? else {
            return Ok(None);
        };
        let gcwe = scm(&sample.x);
        let stats = match (&self.truth, self.cfg.experiment) {
            (Truth::Toeplitz { evd }, Experiment::Eigenvalues) => {
                let lm = hermitian_evd(&m)?.eigenvalues;
                let lg = hermitian_evd(&gcwe)?.eigenvalues;
                let d_std = lm.iter().zip(&evd.eigenvalues).map(|(a, b)| (a - b).powi(2)).sum();
                let d_gcwe = lm.iter().zip(&lg).map(|(a, b)| (a - b).powi(2)).sum();
                vec![d_std, d_gcwe]
            }
            (Truth::Toeplitz { evd }, Experiment::Eigenvectors) => {
                let j = self.cfg.eigvec_index - 1;
                let u = evd.eigenvector(j);
                let um = phase_align(&hermitian_evd(&m)?.eigenvector(j), &u)?;
                let ug = phase_align(&hermitian_evd(&gcwe)?.eigenvector(j), &u)?;
                let perp = |v: &CVector| v - &u * u.dotc(v);
                vec![perp(&um).norm_squared(), perp(&(&um - &ug)).norm_squared()]
            }
            (Truth::Factor { model, .. }, Experiment::Projector) => {
                let r = self.cfg.r;
                let pm = principal_projector(&m, r)?;
                let pg = principal_projector(&gcwe, r)?;
                let sq = |a: &CMatrix| a.iter().map(|z| z.norm_sqr()).sum::<f64>();
                vec![sq(&(pm.matrix() - model.pi_r().matrix())), sq(&(pm.matrix() - pg.matrix()))]
            }
            (Truth::Toeplitz { .. }, Experiment::IntrinsicBias) => {
                let tr = |est: &HermitianMatrix| -> Result<f64> {
                    let l = riemannian_logmap(&self.sigma, est)?;
                    Ok((self.sigma_inv.matrix() * l.matrix()).trace().re)
                };
                vec![tr(&m)?, tr(&gcwe)?]
            }
            (Truth::Toeplitz { .. }, Experiment::Crlb) => {
                vec![nat_distance_sq(&self.sigma, &m)?, nat_distance_sq(&self.sigma, &gcwe)?]
            }
            (Truth::Factor { model, steer }, Experiment::SnrLoss) => {
                let r = self.cfg.r;
                let rho = |est: &HermitianMatrix| -> Result<f64> {
                    let pr = principal_projector(est, r)?;
                    let perp = HermitianMatrix::new(CMatrix::identity(self.cfg.p, self.cfg.p) - pr.matrix())?;
                    snr_loss(&perp, model, steer)
                };
                vec![rho(&m)?, rho(&gcwe)?, rho(&scm(&sample.z))?]
            }
            _ => unreachable!("data model fixed by the experiment"),
        };
        Ok(Some(stats))
    }

    fn theory(&self, n: usize) -> Result<Vec<f64>> {
        let nf = n as f64;
        let p = self.cfg.p;
        Ok(match &self.truth {
            Truth::Toeplitz { evd } => match self.cfg.experiment {
                Experiment::Eigenvalues => {
                    let c = self.coeffs.expect("coefficients computed");
                    vec![
                        eigenvalue_cov_trace(&evd.eigenvalues, c.theta1, c.theta2) / nf,
                        eigenvalue_cov_trace(&evd.eigenvalues, c.sigma1, c.sigma2) / nf,
                    ]
                }
                Experiment::Eigenvectors => {
                    let c = self.coeffs.expect("coefficients computed");
                    let tr = eigenvector_cov_xi_trace(&evd.eigenvalues, self.cfg.eigvec_index - 1, 1.0)?;
                    vec![c.theta1 * tr / nf, c.sigma1 * tr / nf]
                }
                Experiment::IntrinsicBias => vec![eta(p, n)?],
                Experiment::Crlb => {
                    let ab = alpha_beta(self.sampler.distribution(), p)?;
                    vec![
                        ces_crb(p, n, ab.alpha, ab.beta)?.value,
                        ab_crlb(p, n, ab.alpha, ab.beta)?.value,
                        biased_crlb_scm(p, n)?.value,
                    ]
                }
                _ => unreachable!(),
            },
            Truth::Factor { model, .. } => match self.cfg.experiment {
                Experiment::Projector => {
                    let c = self.coeffs.expect("coefficients computed");
                    let tr = projector_cov_trace(model);
                    vec![c.theta1 * tr / nf, c.sigma1 * tr / nf]
                }
                Experiment::SnrLoss => vec![snr_loss_theory(self.cfg.r, n)?],
                _ => unreachable!(),
            },
        })
    }

    /// Orders trial means and theory values into the CSV columns (linear scale).
    fn row(&self, means: &[f64], theory: &[f64]) -> Vec<f64> {
        match self.cfg.experiment {
            Experiment::Eigenvalues | Experiment::Eigenvectors | Experiment::Projector => {
                vec![means[0], theory[0], means[1], theory[1]]
            }
            // eta_hat = -trace(Sigma^-1 mean logmap) / p
            Experiment::IntrinsicBias => {
                let p = self.cfg.p as f64;
                vec![-means[0] / p, -means[1] / p, theory[0]]
            }
            Experiment::Crlb => vec![means[0], means[1], theory[0], theory[1], theory[2]],
            Experiment::SnrLoss => vec![means[0], means[1], means[2], theory[0]],
        }
    }

    fn metadata(&self) -> Vec<(String, String)> {
        let mut meta = self.cfg.echo();
        meta.push(("estimator_name".into(), self.spec.name.clone()));
        meta.push(("sigma_scale".into(), format!("{:.16e}", self.spec.sigma)));
        if let Some(c) = &self.coeffs {
            for (k, v) in [("theta1", c.theta1), ("theta2", c.theta2), ("sigma1", c.sigma1), ("sigma2", c.sigma2)] {
                meta.push((k.into(), format!("{v:.16e}")));
            }
        }
        if let Truth::Factor { model, .. } = &self.truth {
            meta.push(("trace_sigma_pi".into(), format!("{:.16e}", projector_cov_trace(model))));
            if let Some(w) = model.separation_warning() {
                meta.push(("warning".into(), w));
            }
        }
        meta
    }
}

/// Runs the configured campaign. Uses a dedicated pool when `threads` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    match cfg.threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Campaign(format!("thread pool: {e}")))?
            .install(|| run_inner(cfg)),
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let campaign = Campaign::new(cfg)?;
    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    let mut metadata = campaign.metadata();
    for (point, &n) in cfg.n_grid.iter().enumerate() {
        let outcomes: Vec<Option<Vec<f64>>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| campaign.trial(point, n, t))
            .collect::<Result<_>>()
            .map_err(|e| Error::Campaign(format!("n = {n}: {e}")))?;
        let kept: Vec<&Vec<f64>> = outcomes.iter().flatten().collect();
        let excluded = cfg.trials - kept.len();
        if excluded as f64 > MAX_EXCLUDED_FRACTION * cfg.trials as f64 {
            return Err(Error::Campaign(format!(
                "n = {n}: {excluded} of {} trials failed to converge after retry",
                cfg.trials
            )));
        }
        let width = kept[0].len();
        let means: Vec<f64> =
            (0..width).map(|c| neumaier_sum(kept.iter().map(|s| s[c])) / kept.len() as f64).collect();
        let values = campaign.row(&means, &campaign.theory(n)?).into_iter().map(db).collect();
        rows.push(ResultRow { n, values, excluded });
    }
    let total: usize = rows.iter().map(|r| r.excluded).sum();
    metadata.push(("excluded_trials".into(), total.to_string()));
    Ok(ExperimentResult {
        experiment: cfg.experiment,
        columns: cfg.experiment.columns().iter().map(|s| s.to_string()).collect(),
        rows,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_is_order_robust() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(v), 2.0);
    }

    #[test]
    fn small_campaigns_run_for_every_experiment() {
        for e in Experiment::ALL {
            let cfg = ExperimentConfig {
                experiment: e,
                p: 6,
                r: 2,
                lambda_r: vec![30.0, 15.0],
                n_grid: vec![40, 80],
                trials: 8,
                coeff_draws: 10_000,
                ..Default::default()
            };
            let res = run_experiment(&cfg).unwrap();
            assert_eq!(res.rows.len(), 2);
            assert_eq!(res.columns.len(), e.columns().len());
            for row in &res.rows {
                assert_eq!(row.values.len(), res.columns.len());
                assert!(row.values.iter().all(|v| v.is_finite()), "{e:?}: {row:?}");
            }
        }
    }

    #[test]
    fn scm_estimator_has_no_eigen_theory_for_heavy_tails() {
        let cfg = ExperimentConfig { estimator: Estimator::Scm, trials: 2, n_grid: vec![100], ..Default::default() };
        assert!(matches!(run_experiment(&cfg), Err(Error::Coefficient(_))));
        let ok = ExperimentConfig { experiment: Experiment::Crlb, ..cfg };
        run_experiment(&ok).unwrap();
    }
}
