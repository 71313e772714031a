//! Maronna M-estimators of scatter, the SCM, and the consistency scale.

use std::fmt;
use std::sync::Arc;

use nalgebra::Cholesky;

use crate::ces::{modular_variate_sample, CesDistribution};
use crate::error::{Error, Result};
use crate::linalg::{gemm, weighted_gram, CMatrix, HermitianMatrix};
use crate::rng::RandomStream;

/// Seed of the stream used for Monte Carlo scale calibration.
pub const CALIBRATION_SEED: u64 = 0x5ca1e;
/// Draws used for Monte Carlo scale calibration.
pub const CALIBRATION_DRAWS: usize = 1_000_000;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Weight function family.
#[derive(Clone)]
pub enum Weight {
    /// `u = 1` (the SCM).
    Gaussian,
    /// `u(x) = (2p + d) / (d + 2x)`, the t maximum-likelihood weight.
    Student { p: usize, dof: f64 },
    /// `u = kappa`.
    Constant(f64),
    /// Arbitrary weight with user-supplied derivative of `psi`.
    Custom { u: ScalarFn, psi_prime: ScalarFn },
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => write!(f, "Gaussian"),
            Self::Student { p, dof } => write!(f, "Student {{ p: {p}, dof: {dof} }}"),
            Self::Constant(k) => write!(f, "Constant({k})"),
            Self::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// An M-estimator: weight `u`, `psi(t) = t u(t)`, its derivative, and scale `sigma`.
#[derive(Debug, Clone)]
pub struct MEstimatorSpec {
    pub name: String,
    pub weight: Weight,
    /// Scale with `E[psi(sigma Q)] = p`; the estimator of `Sigma` is `sigma * Sigma_hat`.
    pub sigma: f64,
}

impl MEstimatorSpec {
    pub fn custom(
        name: impl Into<String>,
        u: impl Fn(f64) -> f64 + Send + Sync + 'static,
        psi_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            weight: Weight::Custom { u: Arc::new(u), psi_prime: Arc::new(psi_prime) },
            sigma: 1.0,
        }
    }

    pub fn constant(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Input(format!("constant weight must be positive, got {kappa}")));
        }
        Ok(Self { name: format!("constant({kappa})"), weight: Weight::Constant(kappa), sigma: 1.0 / kappa })
    }

    pub fn u(&self, t: f64) -> f64 {
        match &self.weight {
            Weight::Gaussian => 1.0,
            Weight::Student { p, dof } => (2.0 * *p as f64 + dof) / (dof + 2.0 * t),
            Weight::Constant(k) => *k,
            Weight::Custom { u, .. } => u(t),
        }
    }

    pub fn psi(&self, t: f64) -> f64 {
        match &self.weight {
            Weight::Gaussian => t,
            Weight::Student { p, dof } => (2.0 * *p as f64 + dof) * t / (dof + 2.0 * t),
            Weight::Constant(k) => k * t,
            Weight::Custom { u, .. } => t * u(t),
        }
    }

    pub fn psi_prime(&self, t: f64) -> f64 {
        match &self.weight {
            Weight::Gaussian => 1.0,
            Weight::Student { p, dof } => {
                let s = dof + 2.0 * t;
                (2.0 * *p as f64 + dof) * dof / (s * s)
            }
            Weight::Constant(k) => *k,
            Weight::Custom { psi_prime, .. } => psi_prime(t),
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    /// Returns a copy with `sigma` calibrated for data from `dist` in dimension `p`.
    pub fn calibrated(self, dist: CesDistribution, p: usize) -> Result<Self> {
        let sigma = solve_sigma(&self, dist, p)?;
        Ok(self.with_sigma(sigma))
    }
}

/// The t maximum-likelihood M-estimator; `sigma = 1` for matching t data.
pub fn student_spec(p: usize, d: f64) -> Result<MEstimatorSpec> {
    if p == 0 {
        return Err(Error::Input("p must be >= 1".into()));
    }
    CesDistribution::student_t(d)?;
    Ok(MEstimatorSpec { name: format!("student(p={p}, d={d})"), weight: Weight::Student { p, dof: d }, sigma: 1.0 })
}

/// `u = 1`: the fixed point is the SCM.
pub fn gaussian_spec() -> MEstimatorSpec {
    MEstimatorSpec { name: "gaussian".into(), weight: Weight::Gaussian, sigma: 1.0 }
}

/// Starting point of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Identity,
    /// SCM rescaled to trace `p`.
    Scm,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub init: Init,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, init: Init::Scm }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Input(format!("need tol > 0 and max_iter >= 1, got {self:?}")));
        }
        Ok(())
    }
}

/// Converged fixed point with diagnostics.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub scatter: HermitianMatrix,
    pub iterations: usize,
    pub residual: f64,
}

/// Sample covariance `(1/n) sum z_i z_i^H` of the columns of `z`.
pub fn scm(z: &CMatrix) -> HermitianMatrix {
    weighted_gram(z, None)
}

fn check_data(z: &CMatrix) -> Result<()> {
    let (p, n) = z.shape();
    if p == 0 || n == 0 {
        return Err(Error::Input(format!("data matrix must be non-empty, got {p} x {n}")));
    }
    if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Input("data matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Quadratic forms `z_i^H S^-1 z_i` through a Cholesky factor of `s`.
fn quadratic_forms(s: &HermitianMatrix, z: &CMatrix) -> Result<Vec<f64>> {
    let chol = Cholesky::new(s.matrix().clone())
        .ok_or_else(|| Error::Degenerate("iterate is not positive definite".into()))?;
    let l = chol.l();
    let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)].re).collect();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    if (hi / lo).powi(2) > 1e14 {
        return Err(Error::Degenerate(format!("iterate condition estimate {:.3e} exceeds 1e14", (hi / lo).powi(2))));
    }
    let linv = l
        .solve_lower_triangular(&CMatrix::identity(l.nrows(), l.nrows()))
        .ok_or_else(|| Error::Degenerate("singular Cholesky factor".into()))?;
    let w = gemm(&linv, z);
    Ok(w.column_iter().map(|c| c.norm_squared()).collect())
}

/// Solves `(1/n) sum psi(q_i / c) = p` for `c > 0`. Returns 1 when no root is bracketed.
fn scale_step(spec: &MEstimatorSpec, q: &[f64], p: usize) -> f64 {
    let n = q.len() as f64;
    let target = p as f64;
    let h = |s: f64| {
        let c = s.exp();
        let (mut f, mut df) = (0.0, 0.0);
        for &qi in q {
            let t = qi / c;
            f += spec.psi(t);
            df -= spec.psi_prime(t) * t;
        }
        (f / n - target, df / n)
    };
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    let (f0, _) = h(0.0);
    if f0 == 0.0 {
        return 1.0;
    }
    // h is non-increasing in s = ln c
    let step = if f0 > 0.0 { 1.0 } else { -1.0 };
    let mut bracketed = false;
    for k in 1..=60 {
        let s = step * k as f64;
        if (h(s).0 > 0.0) != (f0 > 0.0) {
            if step > 0.0 {
                (lo, hi) = (s - 1.0, s);
            } else {
                (lo, hi) = (s, s + 1.0);
            }
            bracketed = true;
            break;
        }
    }
    if !bracketed {
        return 1.0;
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..100 {
        let (f, df) = h(s);
        if f.abs() <= 1e-14 * target {
            break;
        }
        if f > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = if df < 0.0 { s - f / df } else { f64::NAN };
        s = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            break;
        }
    }
    s.exp()
}

fn rel_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    let num: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Relative fixed-point residual `|S - (1/n) sum u(z_i^H S^-1 z_i) z_i z_i^H|_F / |S|_F`.
pub fn fixed_point_residual(spec: &MEstimatorSpec, z: &CMatrix, s: &HermitianMatrix) -> Result<f64> {
    check_data(z)?;
    let q = quadratic_forms(s, z)?;
    let w: Vec<f64> = q.iter().map(|&t| spec.u(t)).collect();
    let next = weighted_gram(z, Some(&w));
    Ok(rel_diff(next.matrix(), s.matrix()))
}

/// Solves the M-estimating equation `S = (1/n) sum u(z_i^H S^-1 z_i) z_i z_i^H`.
pub fn fixed_point_solve(spec: &MEstimatorSpec, z: &CMatrix, opts: &SolverOptions) -> Result<HermitianMatrix> {
    fixed_point_solve_detailed(spec, z, opts).map(|fp| fp.scatter)
}

/// As [`fixed_point_solve`], also reporting iteration count and final residual.
///
/// Each sweep first rescales the iterate so that the sample mean of
/// `psi(z_i^H S^-1 z_i)` equals `p` (which holds at every fixed point), then
/// applies one Picard step from the rescaled iterate.
pub fn fixed_point_solve_detailed(spec: &MEstimatorSpec, z: &CMatrix, opts: &SolverOptions) -> Result<FixedPoint> {
    opts.validate()?;
    check_data(z)?;
    let (p, n) = z.shape();
    if n <= p {
        return Err(Error::Degenerate(format!("need n > p samples, got n = {n}, p = {p}")));
    }
    let mut current = match opts.init {
        Init::Identity => HermitianMatrix::identity(p),
        Init::Scm => {
            let s = scm(z);
            let tr = s.trace();
            if !(tr > 0.0) {
                return Err(Error::Degenerate("zero sample covariance".into()));
            }
            s.scaled(p as f64 / tr)
        }
    };
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let q = quadratic_forms(&current, z)?;
        let c = scale_step(spec, &q, p);
        let w: Vec<f64> = q.iter().map(|&t| spec.u(t / c)).collect();
        let next = weighted_gram(z, Some(&w));
        if next.matrix().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Numeric("non-finite iterate".into()));
        }
        let rescaled = current.matrix() * num_complex::Complex64::from(c);
        residual = rel_diff(next.matrix(), &rescaled);
        let change = rel_diff(next.matrix(), current.matrix());
        current = next;
        if residual <= opts.tol && change <= opts.tol {
            return Ok(FixedPoint { scatter: current, iterations: it, residual });
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual })
}

/// Scale `sigma` solving `E[psi(sigma Q)] = p` for data from `dist`.
///
/// Exact where analytic (matched t estimator, constant weights); otherwise a
/// bisection on `[1e-3, 1e3]` against a pinned-seed Monte Carlo sample of `Q`.
pub fn solve_sigma(spec: &MEstimatorSpec, dist: CesDistribution, p: usize) -> Result<f64> {
    dist.validate()?;
    if p == 0 {
        return Err(Error::Input("p must be >= 1".into()));
    }
    match (&spec.weight, dist) {
        (Weight::Student { p: sp, dof }, CesDistribution::StudentT { dof: d }) if *sp == p && *dof == d => {
            return Ok(1.0)
        }
        (Weight::Gaussian, CesDistribution::Gaussian) => return Ok(1.0),
        (Weight::Gaussian | Weight::Constant(_), _) => {
            let kappa = if let Weight::Constant(k) = spec.weight { k } else { 1.0 };
            let mean_q = match dist {
                CesDistribution::Gaussian => p as f64,
                CesDistribution::StudentT { dof } if dof > 2.0 => p as f64 * dof / (dof - 2.0),
                CesDistribution::StudentT { dof } => {
                    return Err(Error::Calibration(format!("E[Q] is infinite for dof = {dof}")))
                }
            };
            return Ok(p as f64 / (kappa * mean_q));
        }
        _ => {}
    }
    let q = modular_variate_sample(dist, p, CALIBRATION_DRAWS, &mut RandomStream::new(CALIBRATION_SEED, 0))?;
    let target = p as f64;
    let h = |sigma: f64| q.iter().map(|&x| spec.psi(sigma * x)).sum::<f64>() / q.len() as f64 - target;
    let (mut lo, mut hi) = (1e-3f64.ln(), 1e3f64.ln());
    let (hlo, hhi) = (h(lo.exp()), h(hi.exp()));
    if !(hlo.is_finite() && hhi.is_finite()) || hlo.signum() == hhi.signum() {
        return Err(Error::Calibration(format!(
            "E[psi(sigma Q)] - p has no sign change on [1e-3, 1e3] ({hlo:.3e}, {hhi:.3e})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (h(mid.exp()) < 0.0) == (hlo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let sigma = (0.5 * (lo + hi)).exp();
    if h(sigma).abs() >= 1e-3 * target {
        return Err(Error::Calibration(format!("residual {:.3e} after bisection", h(sigma))));
    }
    Ok(sigma)
}
