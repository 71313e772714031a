//! Affine-invariant geometry of positive-definite matrices: natural distance,
//! log map, intrinsic bias of the SCM and intrinsic Cramér-Rao bounds.

use nalgebra::Cholesky;

use crate::ces::{modular_variate_sample, CesDistribution};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_evd, require_pd, spd_inv_sqrt, spd_log, spd_sqrt, CMatrix, HermitianMatrix};
use crate::rng::RandomStream;

/// `B_{2k} / (2k)` for k = 1..7.
const DIGAMMA_SERIES: [f64; 7] =
    [1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0];

/// Digamma function for `x > 0`: upward recurrence to `x >= 6`, then the
/// asymptotic series through `B_14`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires a finite x > 0, got {x}")));
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    let mut poly = 0.0;
    for c in DIGAMMA_SERIES.iter().rev() {
        poly = poly * inv2 + c;
    }
    Ok(shift + x.ln() - 0.5 / x - poly * inv2)
}

/// Intrinsic bias `eta(p, n)` of the SCM: `E[log-map] = -eta Sigma`.
pub fn eta(p: usize, n: usize) -> Result<f64> {
    if p == 0 || n < p {
        return Err(Error::Domain(format!("eta requires 1 <= p <= n, got p = {p}, n = {n}")));
    }
    let (pf, nf) = (p as f64, n as f64);
    let k = nf - pf + 1.0;
    let s = pf * nf.ln() + pf - digamma(k)? + k * digamma(k + 1.0)? + digamma(nf + 1.0)? - (nf + 1.0) * digamma(nf + 2.0)?;
    Ok(s / pf)
}

/// Generalized eigenvalues of `(s2, s1)` through the whitening `S1^{-1/2} S2 S1^{-1/2}`.
fn whitened_eigenvalues(s1: &HermitianMatrix, s2: &HermitianMatrix) -> Result<Vec<f64>> {
    if s1.dim() != s2.dim() {
        return Err(Error::Input("matrices differ in size".into()));
    }
    require_pd(&hermitian_evd(s2)?)?;
    let w = spd_inv_sqrt(s1)?;
    let whitened = s2.congruence(w.matrix());
    Ok(hermitian_evd(&whitened)?.eigenvalues)
}

/// Natural Riemannian distance `sqrt(sum ln^2 lambda_j)`, `lambda_j` the eigenvalues of `S1^-1 S2`.
pub fn nat_distance(s1: &HermitianMatrix, s2: &HermitianMatrix) -> Result<f64> {
    let ev = whitened_eigenvalues(s1, s2)?;
    Ok(ev.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
}

/// Squared natural distance.
pub fn nat_distance_sq(s1: &HermitianMatrix, s2: &HermitianMatrix) -> Result<f64> {
    let ev = whitened_eigenvalues(s1, s2)?;
    Ok(ev.iter().map(|l| l.ln().powi(2)).sum())
}

/// Same distance through the Cholesky factor `S1 = L L^H`, eigenvalues of `L^-1 S2 L^-H`.
pub fn nat_distance_cholesky(s1: &HermitianMatrix, s2: &HermitianMatrix) -> Result<f64> {
    if s1.dim() != s2.dim() {
        return Err(Error::Input("matrices differ in size".into()));
    }
    let chol = Cholesky::new(s1.matrix().clone()).ok_or_else(|| Error::Domain("first argument is not PD".into()))?;
    let p = s1.dim();
    let linv = chol
        .l()
        .solve_lower_triangular(&CMatrix::identity(p, p))
        .ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;
    let ev = hermitian_evd(&s2.congruence(&linv))?;
    require_pd(&ev)?;
    Ok(ev.eigenvalues.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt())
}

/// Riemannian logarithm at `sigma`: `Sigma^{1/2} log(Sigma^{-1/2} S Sigma^{-1/2}) Sigma^{1/2}`.
pub fn riemannian_logmap(sigma: &HermitianMatrix, sigma_hat: &HermitianMatrix) -> Result<HermitianMatrix> {
    if sigma.dim() != sigma_hat.dim() {
        return Err(Error::Input("matrices differ in size".into()));
    }
    let root = spd_sqrt(sigma)?;
    let inv_root = spd_inv_sqrt(sigma)?;
    let whitened = sigma_hat.congruence(inv_root.matrix());
    Ok(spd_log(&whitened)?.congruence(root.matrix()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    BiasedGaussianCrlb,
    UnbiasedCesCrlb,
    ApproxBiasedCesCrlb,
}

/// A lower bound on `E[d_nat^2]`, kept as its named addends.
#[derive(Debug, Clone, PartialEq)]
pub struct IntrinsicBound {
    pub kind: BoundKind,
    pub value: f64,
    pub components: Vec<(&'static str, f64)>,
}

impl IntrinsicBound {
    fn new(kind: BoundKind, components: Vec<(&'static str, f64)>) -> Self {
        let value = components.iter().map(|c| c.1).sum();
        Self { kind, value, components }
    }

    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.iter().find(|c| c.0 == name).map(|c| c.1)
    }
}

/// `p^2 / n + p eta(p, n)^2`.
pub fn biased_crlb_scm(p: usize, n: usize) -> Result<IntrinsicBound> {
    let e = eta(p, n)?;
    let (pf, nf) = (p as f64, n as f64);
    Ok(IntrinsicBound::new(BoundKind::BiasedGaussianCrlb, vec![("p^2/n", pf * pf / nf), ("p*eta^2", pf * e * e)]))
}

/// `(alpha, beta)` of the CES intrinsic bound, with
/// `alpha = E[(Q u_mle(Q))^2] / (p (p + 1))` and `beta = alpha - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
}

/// Exact `(alpha, beta)`: `(1, 0)` for Gaussian data, `alpha = m / (m + 1)`
/// with `m = p + d/2` for t data.
pub fn alpha_beta(dist: CesDistribution, p: usize) -> Result<AlphaBeta> {
    dist.validate()?;
    if p == 0 {
        return Err(Error::Input("p must be >= 1".into()));
    }
    Ok(match dist {
        CesDistribution::Gaussian => AlphaBeta { alpha: 1.0, beta: 0.0 },
        CesDistribution::StudentT { dof } => {
            let m = p as f64 + dof / 2.0;
            let alpha = m / (m + 1.0);
            AlphaBeta { alpha, beta: alpha - 1.0 }
        }
    })
}

/// Monte Carlo estimate of [`alpha_beta`] from `draws` modular variates.
pub fn alpha_beta_monte_carlo(dist: CesDistribution, p: usize, draws: usize, stream: &mut RandomStream) -> Result<AlphaBeta> {
    let q = modular_variate_sample(dist, p, draws, stream)?;
    let pf = p as f64;
    let mean = q.iter().map(|&x| (x * dist.mle_weight(p, x)).powi(2)).sum::<f64>() / q.len() as f64;
    let alpha = mean / (pf * (pf + 1.0));
    Ok(AlphaBeta { alpha, beta: alpha - 1.0 })
}

/// `(p^2 - 1) / (n alpha) + 1 / (n (alpha + p beta))`.
pub fn ces_crb(p: usize, n: usize, alpha: f64, beta: f64) -> Result<IntrinsicBound> {
    let (pf, nf) = (p as f64, n as f64);
    if p == 0 || n == 0 {
        return Err(Error::Input(format!("need p, n >= 1, got p = {p}, n = {n}")));
    }
    if !(alpha > 0.0) || !(alpha + pf * beta > 0.0) {
        return Err(Error::Input(format!("need alpha > 0 and alpha + p beta > 0, got ({alpha}, {beta})")));
    }
    Ok(IntrinsicBound::new(
        BoundKind::UnbiasedCesCrlb,
        vec![("(p^2-1)/(n*alpha)", (pf * pf - 1.0) / (nf * alpha)), ("1/(n*(alpha+p*beta))", 1.0 / (nf * (alpha + pf * beta)))],
    ))
}

/// [`ces_crb`] plus the SCM bias term `p eta(p, n)^2`.
pub fn ab_crlb(p: usize, n: usize, alpha: f64, beta: f64) -> Result<IntrinsicBound> {
    let base = ces_crb(p, n, alpha, beta)?;
    let e = eta(p, n)?;
    let mut components = base.components;
    components.push(("p*eta^2", p as f64 * e * e));
    Ok(IntrinsicBound::new(BoundKind::ApproxBiasedCesCrlb, components))
}
