//! Asymptotic coefficients of M-estimators and the covariance structures of
//! their scatter, eigenvalue and eigenvector estimates.
//!
//! Standard regime: `sqrt(n) vec(Sigma_hat - Sigma_sigma)` with coefficients
//! `theta1, theta2`. GCWE regime: `sqrt(n) vec(sigma Sigma_hat - Sigma_gcwe)`
//! with `sigma1, sigma2`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::RngCore;
use rayon::prelude::*;

use crate::ces::{modular_pairs, CesDistribution};
use crate::error::{Error, Result};
use crate::linalg::{commutation, kron, vec, CMatrix, EvdResult, HermitianMatrix, EXPLICIT_ASSEMBLY_LIMIT};
use crate::mestimator::{MEstimatorSpec, Weight};
use crate::rng::RandomStream;

/// Relative eigenvalue gap below which the spectrum counts as degenerate.
pub const GAP_TOL: f64 = 1e-10;

/// Draws per chunk in [`coeffs_numeric`]; each chunk owns one stream.
const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticCoeffs {
    pub p: usize,
    /// `E[psi(sigma Q)^2]`.
    pub a_m: f64,
    /// `E[psi'(sigma Q) sigma Q] + p^2`.
    pub c_m: f64,
    /// Same expectation as `a_m`, on the coupled law.
    pub a: f64,
    /// `E[psi(sigma Q) |g|^2]`.
    pub b: f64,
    pub c: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl AsymptoticCoeffs {
    /// Assembles the four coefficients from the moments.
    pub fn from_moments(p: usize, a_m: f64, c_m: f64, a: f64, b: f64, c: f64) -> Result<Self> {
        let pf = p as f64;
        let pp = pf * (pf + 1.0);
        let p2 = pf * pf;
        let theta1 = a_m * pp / (c_m * c_m);
        let theta2 = (a_m - p2) / ((c_m - p2) * (c_m - p2)) - a_m * (pf + 1.0) / (c_m * c_m);
        let sigma1 = (a * pp + c * (c - 2.0 * b)) / (c * c);
        let sigma2 = (a - p2) / ((c - p2) * (c - p2)) - a * (pf + 1.0) / (c * c) + 2.0 * pf * (c - b) / (c * (c - p2));
        let out = Self { p, a_m, c_m, a, b, c, theta1, theta2, sigma1, sigma2 };
        out.validate()?;
        Ok(out)
    }

    /// Exact coefficients of the SCM on Gaussian data.
    pub fn gaussian(p: usize) -> Self {
        let pp = (p * (p + 1)) as f64;
        Self { p, a_m: pp, c_m: pp, a: pp, b: pp, c: pp, theta1: 1.0, theta2: 0.0, sigma1: 0.0, sigma2: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.a_m, self.c_m, self.a, self.b, self.c, self.theta1, self.theta2, self.sigma1, self.sigma2];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Coefficient(format!("non-finite coefficient in {self:?}")));
        }
        if !(self.theta1 > 0.0) || self.theta2 <= -self.theta1 / self.p as f64 {
            return Err(Error::Coefficient(format!(
                "need theta1 > 0 and theta2 > -theta1/p, got ({}, {})",
                self.theta1, self.theta2
            )));
        }
        if self.sigma1 < -1e-12 {
            return Err(Error::Coefficient(format!("sigma1 = {} is negative", self.sigma1)));
        }
        Ok(())
    }
}

/// Closed-form coefficients of the t maximum-likelihood estimator on matching t data.
pub fn coeffs_closed_form_student(p: usize, d: f64) -> Result<AsymptoticCoeffs> {
    if p == 0 || !(d > 0.0) {
        return Err(Error::Input(format!("need p >= 1 and d > 0, got p = {p}, d = {d}")));
    }
    let pf = p as f64;
    let m = pf + d / 2.0;
    let abc = m * pf * (pf + 1.0) / (m + 1.0);
    let out = AsymptoticCoeffs {
        p,
        a_m: abc,
        c_m: abc,
        a: abc,
        b: abc,
        c: abc,
        theta1: (m + 1.0) / m,
        theta2: 2.0 / d * (m + 1.0) / m,
        sigma1: 1.0 / m,
        sigma2: 2.0 / d * (m + 1.0) / m,
    };
    out.validate()?;
    Ok(out)
}

#[derive(Default, Clone, Copy)]
struct Moments {
    n: f64,
    psi: f64,
    g: f64,
    x: f64,
    psi_psi: f64,
    psi_g: f64,
    g_g: f64,
    x_g: f64,
}

impl Moments {
    fn push(&mut self, psi: f64, g: f64, x: f64) {
        self.n += 1.0;
        self.psi += psi;
        self.g += g;
        self.x += x;
        self.psi_psi += psi * psi;
        self.psi_g += psi * g;
        self.g_g += g * g;
        self.x_g += x * g;
    }

    fn merge(mut self, o: &Self) -> Self {
        self.n += o.n;
        self.psi += o.psi;
        self.g += o.g;
        self.x += o.x;
        self.psi_psi += o.psi_psi;
        self.psi_g += o.psi_g;
        self.g_g += o.g_g;
        self.x_g += o.x_g;
        self
    }

    fn cov(&self, sxy: f64, sx: f64, sy: f64) -> f64 {
        (sxy - sx * sy / self.n) / (self.n - 1.0)
    }
}

/// Monte Carlo coefficients on the coupled law of `(Q, |g|^2)`.
///
/// Uses the exact moments `E[psi(sigma Q)] = p` (calibration), `E|g|^2 = p`
/// and `Var|g|^2 = p` as control variates:
/// `a - p^2` and `b - p^2` come from the regression of `psi` on `|g|^2`, and
/// `c - p^2` from the mean of `psi'(sigma Q) sigma Q` adjusted along `|g|^2`.
/// For `psi(t) = t` on Gaussian data this returns the exact values.
pub fn coeffs_numeric(
    spec: &MEstimatorSpec,
    dist: CesDistribution,
    p: usize,
    draws: usize,
    stream: &mut RandomStream,
) -> Result<AsymptoticCoeffs> {
    if draws < 1000 {
        return Err(Error::Input(format!("coeffs_numeric needs at least 1000 draws, got {draws}")));
    }
    let sub_seed = stream.next_u64();
    let chunks = draws.div_ceil(CHUNK);
    let pf = p as f64;
    let sigma = spec.sigma;
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|k| -> Result<Moments> {
            let len = CHUNK.min(draws - k * CHUNK);
            let (q, g2) = modular_pairs(dist, p, len, &mut RandomStream::new(sub_seed, k as u64))?;
            let mut m = Moments::default();
            for (&q, &g) in q.iter().zip(&g2) {
                let t = sigma * q;
                m.push(spec.psi(t) - pf, g - pf, spec.psi_prime(t) * t - pf);
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    let m = parts.iter().fold(Moments::default(), |acc, x| acc.merge(x));
    let var_g = m.cov(m.g_g, m.g, m.g);
    let cov_psi_g = m.cov(m.psi_g, m.psi, m.g);
    let var_psi = m.cov(m.psi_psi, m.psi, m.psi);
    let beta = cov_psi_g / var_g;
    let resid_var = (var_psi - beta * cov_psi_g).max(0.0);
    let a_centered = resid_var + beta * beta * pf;
    let b_centered = beta * pf;
    let beta_x = m.cov(m.x_g, m.x, m.g) / var_g;
    let c_centered = pf + m.x / m.n - beta_x * (m.g / m.n);
    let (a, b, c) = (pf * pf + a_centered, pf * pf + b_centered, pf * pf + c_centered);
    if ![a, b, c].iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite moment estimate".into()));
    }
    AsymptoticCoeffs::from_moments(p, a, c, a, b, c)
}

/// Coefficients for `spec` on data from `dist`: exact when known, otherwise
/// [`coeffs_numeric`] with `draws` draws.
pub fn coeffs_for(
    spec: &MEstimatorSpec,
    dist: CesDistribution,
    p: usize,
    draws: usize,
    stream: &mut RandomStream,
) -> Result<AsymptoticCoeffs> {
    match (&spec.weight, dist) {
        (Weight::Student { p: sp, dof }, CesDistribution::StudentT { dof: d }) if *sp == p && *dof == d => {
            coeffs_closed_form_student(p, d)
        }
        (Weight::Gaussian, CesDistribution::Gaussian) => Ok(AsymptoticCoeffs::gaussian(p)),
        (Weight::Gaussian | Weight::Constant(_), CesDistribution::StudentT { dof }) if dof <= 4.0 => {
            Err(Error::Coefficient(format!("E[Q^2] is infinite for dof = {dof}; linear weights have no limit law")))
        }
        _ => coeffs_numeric(spec, dist, p, draws, stream),
    }
}

/// Circular covariance `C` and pseudo-covariance `P` of a limiting complex Gaussian.
#[derive(Debug, Clone)]
pub struct ScatterCov {
    pub c: CMatrix,
    pub p: CMatrix,
}

fn assemble_cov(s: &HermitianMatrix, k1: f64, k2: f64) -> Result<ScatterCov> {
    let dim = s.dim();
    let k = commutation(dim)?;
    if dim > EXPLICIT_ASSEMBLY_LIMIT {
        return Err(Error::SizeGuard { p: dim, limit: EXPLICIT_ASSEMBLY_LIMIT });
    }
    let m = s.matrix();
    let kr = kron(&m.transpose(), m);
    let v = vec(m);
    let kc = k.map(Complex64::from);
    let (k1, k2) = (Complex64::from(k1), Complex64::from(k2));
    let c = &kr * k1 + &v * v.adjoint() * k2;
    let p = &kr * &kc * k1 + &v * v.transpose() * k2;
    Ok(ScatterCov { c, p })
}

/// `C = theta1 S^T (x) S + theta2 vec(S) vec(S)^H` and its pseudo-covariance
/// `P = theta1 (S^T (x) S) K + theta2 vec(S) vec(S)^T`, for `p <= 8`.
pub fn scatter_cov(sigma_sigma: &HermitianMatrix, coeffs: &AsymptoticCoeffs) -> Result<ScatterCov> {
    assemble_cov(sigma_sigma, coeffs.theta1, coeffs.theta2)
}

/// GCWE analogue of [`scatter_cov`] with `(sigma1, sigma2)`.
pub fn gcwe_scatter_cov(sigma: &HermitianMatrix, coeffs: &AsymptoticCoeffs) -> Result<ScatterCov> {
    assemble_cov(sigma, coeffs.sigma1, coeffs.sigma2)
}

/// `k1 diag(lambda)^2 + k2 lambda lambda^T`; use `(theta1, theta2)` or `(sigma1, sigma2)`.
pub fn eigenvalue_cov(lambda: &[f64], k1: f64, k2: f64) -> Result<DMatrix<f64>> {
    if lambda.is_empty() || lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Input("eigenvalues must be positive and finite".into()));
    }
    let p = lambda.len();
    let m = DMatrix::from_fn(p, p, |i, j| k2 * lambda[i] * lambda[j] + if i == j { k1 * lambda[i] * lambda[i] } else { 0.0 });
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x.abs())));
    if lo < -1e-12 * hi.max(f64::MIN_POSITIVE) {
        return Err(Error::Coefficient(format!("eigenvalue covariance not PSD (min eigenvalue {lo:.3e})")));
    }
    Ok(m)
}

/// `(k1 + k2) sum lambda_j^2`, the trace of [`eigenvalue_cov`].
pub fn eigenvalue_cov_trace(lambda: &[f64], k1: f64, k2: f64) -> f64 {
    (k1 + k2) * lambda.iter().map(|l| l * l).sum::<f64>()
}

fn xi_weights(lambda: &[f64], j: usize) -> Result<Vec<f64>> {
    if j >= lambda.len() {
        return Err(Error::Input(format!("eigenvector index {j} out of range for p = {}", lambda.len())));
    }
    let scale = lambda.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let lj = lambda[j];
    lambda
        .iter()
        .enumerate()
        .map(|(k, &lk)| {
            if k == j {
                return Ok(0.0);
            }
            let gap = lj - lk;
            if gap.abs() < GAP_TOL * scale {
                return Err(Error::Degenerate(format!("eigenvalue {j} is not simple (gap {gap:.3e} to index {k})")));
            }
            Ok(lk / (gap * gap))
        })
        .collect()
}

/// `Xi_j = theta1 lambda_j U Lambda (lambda_j I - Lambda)^{+2} U^H` for the
/// 0-based index `j`. Scale by `sigma1 / theta1` for the GCWE version.
pub fn eigenvector_cov_xi(evd: &EvdResult, j: usize, theta1: f64) -> Result<HermitianMatrix> {
    let w = xi_weights(&evd.eigenvalues, j)?;
    let f = theta1 * evd.eigenvalues[j];
    let u = &evd.eigenvectors;
    let mut scaled = u.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::from(f * w[k]);
    }
    HermitianMatrix::hermitian_part(scaled * u.adjoint())
}

/// `theta1 lambda_j sum_{k != j} lambda_k / (lambda_j - lambda_k)^2`, the trace of `Xi_j`.
pub fn eigenvector_cov_xi_trace(lambda: &[f64], j: usize, theta1: f64) -> Result<f64> {
    let w = xi_weights(lambda, j)?;
    Ok(theta1 * lambda[j] * w.iter().sum::<f64>())
}

/// First-order change of eigenvalues and eigenvectors under `Sigma + eps Delta`.
///
/// `dlambda_j = u_j^H Delta u_j`; column `j` of `dU` is
/// `sum_{k != j} u_k (u_k^H Delta u_j) / (lambda_j - lambda_k)`, orthogonal to `u_j`.
pub fn eigen_perturbation_first_order(evd: &EvdResult, delta: &HermitianMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let p = evd.dim();
    if delta.dim() != p {
        return Err(Error::Input(format!("perturbation is {} x {}, expected {p} x {p}", delta.dim(), delta.dim())));
    }
    evd.require_simple(GAP_TOL)?;
    let u = &evd.eigenvectors;
    let rotated = u.adjoint() * delta.matrix() * u;
    let dlambda = (0..p).map(|j| rotated[(j, j)].re).collect();
    let lam = &evd.eigenvalues;
    let coeffs = CMatrix::from_fn(p, p, |k, j| if k == j { Complex64::new(0.0, 0.0) } else { rotated[(k, j)] / (lam[j] - lam[k]) });
    Ok((dlambda, u * coeffs))
}
