//! Factor model `Sigma = U_r Lambda_r U_r^H + gamma^2 I`, principal projectors
//! and the SNR loss of the low-rank adaptive filter.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_evd, kron, CMatrix, CVector, HermitianMatrix, EXPLICIT_ASSEMBLY_LIMIT};
use crate::rng::RandomStream;

const SEMI_UNITARY_TOL: f64 = 1e-10;
const GAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FactorModel {
    p: usize,
    r: usize,
    ur: CMatrix,
    lambda_r: Vec<f64>,
    gamma2: f64,
    sigma: HermitianMatrix,
    pi_r: HermitianMatrix,
    pi_perp: HermitianMatrix,
    phi: HermitianMatrix,
}

fn diag_congruence(u: &CMatrix, w: &[f64]) -> HermitianMatrix {
    let mut scaled = u.clone();
    for (mut col, &x) in scaled.column_iter_mut().zip(w) {
        col *= Complex64::from(x);
    }
    HermitianMatrix::symmetrized(&scaled * u.adjoint())
}

/// Builds the factor model from a semi-unitary `ur` (p x r), strictly
/// descending positive `lambda_r` and noise power `gamma2`.
pub fn build_factor_model(ur: CMatrix, lambda_r: Vec<f64>, gamma2: f64) -> Result<FactorModel> {
    let (p, r) = ur.shape();
    if r == 0 || r >= p {
        return Err(Error::Input(format!("rank must satisfy 1 <= r < p, got r = {r}, p = {p}")));
    }
    if lambda_r.len() != r {
        return Err(Error::Input(format!("lambda_r has {} entries, expected {r}", lambda_r.len())));
    }
    if !(gamma2 > 0.0 && gamma2.is_finite()) {
        return Err(Error::Input(format!("gamma2 must be positive, got {gamma2}")));
    }
    if lambda_r.iter().any(|&l| !(l > 0.0 && l.is_finite())) || lambda_r.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Input(format!("lambda_r must be positive and strictly descending, got {lambda_r:?}")));
    }
    let gram = ur.adjoint() * &ur - CMatrix::identity(r, r);
    if gram.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() > SEMI_UNITARY_TOL {
        return Err(Error::Input("U_r is not semi-unitary".into()));
    }
    let signal = diag_congruence(&ur, &lambda_r);
    let pi_r = diag_congruence(&ur, &vec![1.0; r]);
    let pi_perp = HermitianMatrix::symmetrized(CMatrix::identity(p, p) - pi_r.matrix());
    let sigma = HermitianMatrix::symmetrized(signal.matrix() + CMatrix::identity(p, p) * Complex64::from(gamma2));
    let inv: Vec<f64> = lambda_r.iter().map(|l| 1.0 / l).collect();
    let phi = diag_congruence(&ur, &inv);
    Ok(FactorModel { p, r, ur, lambda_r, gamma2, sigma, pi_r, pi_perp, phi })
}

impl FactorModel {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn ur(&self) -> &CMatrix {
        &self.ur
    }

    pub fn lambda_r(&self) -> &[f64] {
        &self.lambda_r
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn sigma(&self) -> &HermitianMatrix {
        &self.sigma
    }

    pub fn pi_r(&self) -> &HermitianMatrix {
        &self.pi_r
    }

    pub fn pi_perp(&self) -> &HermitianMatrix {
        &self.pi_perp
    }

    /// `U_r Lambda_r^-1 U_r^H`.
    pub fn phi(&self) -> &HermitianMatrix {
        &self.phi
    }

    /// Message when `min(lambda_r) / gamma2 < 10`, i.e. the signal subspace is weakly separated.
    pub fn separation_warning(&self) -> Option<String> {
        let min = self.lambda_r[self.r - 1];
        (min / self.gamma2 < 10.0).then(|| {
            format!("weak subspace separation: min(lambda_r)/gamma2 = {:.3} < 10", min / self.gamma2)
        })
    }
}

/// First `r` columns of the unitary DFT matrix, `U[j, k] = exp(-2 pi i j k / p) / sqrt(p)`.
pub fn dft_basis(p: usize, r: usize) -> CMatrix {
    let norm = 1.0 / (p as f64).sqrt();
    CMatrix::from_fn(p, r, |j, k| {
        let angle = -2.0 * std::f64::consts::PI * ((j * k) % p) as f64 / p as f64;
        Complex64::from_polar(norm, angle)
    })
}

/// Projector onto the span of the top-`r` eigenvectors of `m`.
pub fn principal_projector(m: &HermitianMatrix, r: usize) -> Result<HermitianMatrix> {
    let p = m.dim();
    if r == 0 || r > p {
        return Err(Error::Input(format!("rank must satisfy 1 <= r <= p, got r = {r}, p = {p}")));
    }
    let evd = hermitian_evd(m)?;
    if r < p {
        let scale = evd.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        if evd.eigenvalues[r - 1] - evd.eigenvalues[r] <= GAP_TOL * scale {
            return Err(Error::Degenerate(format!("no eigenvalue gap between positions {} and {}", r, r + 1)));
        }
    }
    let ur = evd.eigenvectors.columns(0, r).into_owned();
    Ok(HermitianMatrix::symmetrized(&ur * ur.adjoint()))
}

/// `A = U_r (gamma^2 Lambda_r^-2 + Lambda_r^-1) U_r^H` and `B = gamma^2 Pi_r^perp`.
fn sigma_pi_factors(model: &FactorModel) -> (HermitianMatrix, HermitianMatrix) {
    let g2 = model.gamma2;
    let w: Vec<f64> = model.lambda_r.iter().map(|m| g2 / (m * m) + 1.0 / m).collect();
    (diag_congruence(&model.ur, &w), model.pi_perp.scaled(g2))
}

/// `Sigma_Pi = A^T (x) B + B^T (x) A` assembled explicitly (p <= 8).
///
/// The projector estimate's asymptotic covariance is `theta1 Sigma_Pi`
/// (standard) or `sigma1 Sigma_Pi` (difference to the GCWE projector).
pub fn projector_cov_sigma_pi(model: &FactorModel) -> Result<CMatrix> {
    if model.p > EXPLICIT_ASSEMBLY_LIMIT {
        return Err(Error::SizeGuard { p: model.p, limit: EXPLICIT_ASSEMBLY_LIMIT });
    }
    let (a, b) = sigma_pi_factors(model);
    Ok(kron(&a.matrix().transpose(), b.matrix()) + kron(&b.matrix().transpose(), a.matrix()))
}

/// `trace(Sigma_Pi) = 2 gamma^2 (p - r) sum_j (gamma^2 / mu_j^2 + 1 / mu_j)`.
pub fn projector_cov_trace(model: &FactorModel) -> f64 {
    let g2 = model.gamma2;
    let s: f64 = model.lambda_r.iter().map(|m| g2 / (m * m) + 1.0 / m).sum();
    2.0 * g2 * (model.p - model.r) as f64 * s
}

/// `delta Pi_r = Pi_r^perp Delta Phi + Phi Delta Pi_r^perp`.
pub fn projector_perturbation_first_order(model: &FactorModel, delta: &HermitianMatrix) -> Result<HermitianMatrix> {
    if delta.dim() != model.p {
        return Err(Error::Input(format!("perturbation is {0} x {0}, expected {1} x {1}", delta.dim(), model.p)));
    }
    let left = model.pi_perp.matrix() * delta.matrix() * model.phi.matrix();
    let adj = left.adjoint();
    Ok(HermitianMatrix::symmetrized(left + adj))
}

/// SNR loss `gamma^2 (p^H P p)^2 / (p^H P Sigma P p)` of the filter `w = P p`
/// with `P` an estimate of `Pi_r^perp`.
pub fn snr_loss(proj_perp_hat: &HermitianMatrix, model: &FactorModel, steer: &CVector) -> Result<f64> {
    if proj_perp_hat.dim() != model.p || steer.len() != model.p {
        return Err(Error::Input("dimension mismatch in snr_loss".into()));
    }
    let w = lr_filter_weights(proj_perp_hat, steer);
    let num = steer.dotc(&w).re;
    let den = w.dotc(&(model.sigma.matrix() * &w)).re;
    if !(den > 1e-14) {
        return Err(Error::Degenerate(format!("filter output power {den:.3e} is below 1e-14")));
    }
    Ok(model.gamma2 * num * num / den)
}

/// `E[rho] = 1 - r / n`.
pub fn snr_loss_theory(r: usize, n: usize) -> Result<f64> {
    if n <= r {
        return Err(Error::Input(format!("need n > r, got n = {n}, r = {r}")));
    }
    Ok(1.0 - r as f64 / n as f64)
}

/// Low-rank filter `w_r = P p`.
pub fn lr_filter_weights(proj_perp_hat: &HermitianMatrix, steer: &CVector) -> CVector {
    proj_perp_hat.matrix() * steer
}

/// Unit steering vector in `range(Pi_r^perp)`: a complex normal draw projected and normalized.
pub fn steering_vector(model: &FactorModel, stream: &mut RandomStream) -> Result<CVector> {
    let raw = CVector::from_fn(model.p, |_, _| stream.complex_normal());
    let v = model.pi_perp.matrix() * raw;
    let norm = v.norm();
    if !(norm > 1e-12) {
        return Err(Error::Degenerate("steering draw vanished after projection".into()));
    }
    Ok(v / Complex64::from(norm))
}
