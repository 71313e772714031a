//! Complex Hermitian matrix primitives.
//!
//! Canonical eigendecomposition, phase alignment, the Toeplitz scatter used in
//! the experiments, vec/Kronecker/commutation helpers, and matrix functions of
//! positive-definite matrices computed through the eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest dimension for which p^2 x p^2 operators are assembled explicitly.
pub const EXPLICIT_ASSEMBLY_LIMIT: usize = 8;

/// Relative tolerance used by [`HermitianMatrix::new`] to accept roundoff asymmetry.
const HERMITIAN_TOL: f64 = 1e-9;

/// Positive-definiteness threshold relative to the largest eigenvalue.
const PD_REL_TOL: f64 = 1e-12;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// A complex Hermitian matrix with an exactly Hermitian storage.
///
/// Construction symmetrizes the input: entry `(j, k)` is stored as the exact
/// conjugate of `(k, j)` and the diagonal is real.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Checked constructor: the input must be square, finite, and Hermitian up to
    /// a relative tolerance of 1e-9 (roundoff asymmetry is removed).
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square_finite(&m)?;
        let scale = m.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
        let p = m.nrows();
        for j in 0..p {
            for k in j..p {
                let d = (m[(j, k)] - m[(k, j)].conj()).norm();
                if d > HERMITIAN_TOL * scale {
                    return Err(Error::Input(format!(
                        "matrix is not Hermitian: |M[{j},{k}] - conj(M[{k},{j}])| = {d:.3e}"
                    )));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// The Hermitian part `(M + M^H) / 2` of a square finite matrix.
    pub fn hermitian_part(m: CMatrix) -> Result<Self> {
        check_square_finite(&m)?;
        Ok(Self::symmetrized(m))
    }

    pub(crate) fn symmetrized(mut m: CMatrix) -> Self {
        let p = m.nrows();
        for j in 0..p {
            m[(j, j)] = c(m[(j, j)].re);
            for k in (j + 1)..p {
                let v = (m[(j, k)] + m[(k, j)].conj()) * 0.5;
                m[(j, k)] = v;
                m[(k, j)] = v.conj();
            }
        }
        Self(m)
    }

    pub fn identity(p: usize) -> Self {
        Self(CMatrix::identity(p, p))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let p = diag.len();
        Self(CMatrix::from_fn(p, p, |j, k| if j == k { c(diag[j]) } else { Complex64::default() }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|j| self.0[(j, j)].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `V M V^H` for an arbitrary conformable `V`.
    pub fn congruence(&self, v: &CMatrix) -> Self {
        Self::symmetrized(v * &self.0 * v.adjoint())
    }
}

impl AsRef<CMatrix> for HermitianMatrix {
    fn as_ref(&self) -> &CMatrix {
        &self.0
    }
}

fn check_square_finite(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Input(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Eigendecomposition `M = U diag(lambda) U^H` with descending eigenvalues and
/// canonical phases (largest-modulus entry of each column real and nonnegative).
#[derive(Debug, Clone)]
pub struct EvdResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl EvdResult {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Column `j` (0-based) of `U`.
    pub fn eigenvector(&self, j: usize) -> CVector {
        self.eigenvectors.column(j).into_owned()
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        let u = &self.eigenvectors;
        let scaled = CMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * self.eigenvalues[j]);
        HermitianMatrix::symmetrized(scaled * u.adjoint())
    }

    /// Smallest gap `lambda_j - lambda_{j+1}`; infinite for p = 1.
    pub fn min_gap(&self) -> f64 {
        self.eigenvalues
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(f64::INFINITY, f64::min)
    }

    /// Errors unless every gap exceeds `rel_tol * lambda_1`.
    pub fn require_simple(&self, rel_tol: f64) -> Result<()> {
        let scale = self.eigenvalues.first().map_or(0.0, |l| l.abs());
        let gap = self.min_gap();
        if gap <= rel_tol * scale {
            return Err(Error::Degenerate(format!(
                "eigenvalues not simple (min gap {gap:.3e}, lambda_1 = {scale:.3e})"
            )));
        }
        Ok(())
    }
}

/// Canonical eigendecomposition of a Hermitian matrix.
pub fn hermitian_evd(m: &HermitianMatrix) -> Result<EvdResult> {
    let p = m.dim();
    let eig = SymmetricEigen::try_new(m.matrix().clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("Hermitian eigen-solver did not converge".into()))?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut eigenvectors = CMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = canonical_phase(col.iter().copied());
        for i in 0..p {
            eigenvectors[(i, dst)] = col[i] * pivot;
        }
    }
    Ok(EvdResult { eigenvalues, eigenvectors })
}

/// Unit phase that makes the largest-modulus entry real and nonnegative.
fn canonical_phase(entries: impl Iterator<Item = Complex64>) -> Complex64 {
    let mut best = Complex64::default();
    for z in entries {
        if z.norm_sqr() > best.norm_sqr() {
            best = z;
        }
    }
    let r = best.norm();
    if r == 0.0 {
        c(1.0)
    } else {
        best.conj() / r
    }
}

/// Rotates `v` by a unit phase so that `reference^H v` is real and nonnegative.
pub fn phase_align(v: &CVector, reference: &CVector) -> Result<CVector> {
    if v.len() != reference.len() {
        return Err(Error::Input("phase_align: length mismatch".into()));
    }
    let ip = reference.dotc(v);
    let r = ip.norm();
    if r <= 1e-14 * v.norm() * reference.norm() || r == 0.0 {
        return Err(Error::AlignmentUndefined);
    }
    Ok(v * (ip.conj() / r))
}

/// Hermitian Toeplitz scatter: entry `(j, k)` is `rho^(k-j)` for `j <= k`,
/// mirrored by conjugation below the diagonal.
pub fn toeplitz_scatter(p: usize, rho: Complex64) -> Result<HermitianMatrix> {
    if p == 0 {
        return Err(Error::Input("toeplitz_scatter: p must be >= 1".into()));
    }
    if !(rho.norm() < 1.0) {
        return Err(Error::Input(format!("toeplitz_scatter: |rho| = {} must be < 1", rho.norm())));
    }
    let powers: Vec<Complex64> = (0..p as i32).map(|k| rho.powi(k)).collect();
    let m = CMatrix::from_fn(p, p, |j, k| if j <= k { powers[k - j] } else { powers[j - k].conj() });
    Ok(HermitianMatrix::symmetrized(m))
}

/// Column-stacking vectorization.
pub fn vec(m: &CMatrix) -> CVector {
    CVector::from_column_slice(m.as_slice())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Commutation matrix `K` with `K vec(A) = vec(A^T)` for p x p matrices.
pub fn commutation(p: usize) -> Result<DMatrix<f64>> {
    if p > EXPLICIT_ASSEMBLY_LIMIT {
        return Err(Error::SizeGuard { p, limit: EXPLICIT_ASSEMBLY_LIMIT });
    }
    let mut k = DMatrix::zeros(p * p, p * p);
    for i in 0..p {
        for j in 0..p {
            k[(i + j * p, j + i * p)] = 1.0;
        }
    }
    Ok(k)
}

/// `U diag(f(lambda)) U^H` for a positive-definite `M`.
pub fn spd_function(m: &HermitianMatrix, f: impl Fn(f64) -> f64) -> Result<HermitianMatrix> {
    let evd = hermitian_evd(m)?;
    require_pd(&evd)?;
    Ok(apply_spectral(&evd, f))
}

/// `U diag(f(lambda)) U^H` with no positivity requirement.
pub fn hermitian_function(m: &HermitianMatrix, f: impl Fn(f64) -> f64) -> Result<HermitianMatrix> {
    let evd = hermitian_evd(m)?;
    Ok(apply_spectral(&evd, f))
}

pub(crate) fn require_pd(evd: &EvdResult) -> Result<()> {
    let max = evd.eigenvalues.first().copied().unwrap_or(0.0);
    let min = evd.eigenvalues.last().copied().unwrap_or(0.0);
    if !(max > 0.0) || min <= PD_REL_TOL * max {
        return Err(Error::Domain(format!(
            "matrix is not positive definite (eigenvalue range [{min:.3e}, {max:.3e}])"
        )));
    }
    Ok(())
}

pub(crate) fn apply_spectral(evd: &EvdResult, f: impl Fn(f64) -> f64) -> HermitianMatrix {
    let u = &evd.eigenvectors;
    let fl: Vec<f64> = evd.eigenvalues.iter().map(|&l| f(l)).collect();
    let scaled = CMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * fl[j]);
    HermitianMatrix::symmetrized(scaled * u.adjoint())
}

pub fn spd_sqrt(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    spd_function(m, f64::sqrt)
}

pub fn spd_inv_sqrt(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    spd_function(m, |l| 1.0 / l.sqrt())
}

pub fn spd_inverse(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    spd_function(m, |l| 1.0 / l)
}

pub fn spd_log(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    spd_function(m, f64::ln)
}

pub fn hermitian_exp(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    hermitian_function(m, f64::exp)
}

/// Dense complex product through the blocked complex GEMM kernel.
///
/// `a` is `m x k`, `b` is `k x n`; both column-major.
pub(crate) fn gemm(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "gemm: inner dimensions differ");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = CMatrix::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    // SAFETY: Complex64 is repr(C) {re, im}, layout-compatible with [f64; 2];
    // all pointers cover column-major buffers of the stated shapes.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            out.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    out
}

/// `(1/n) sum_i w_i z_i z_i^H` over the columns `z_i` of `z`.
///
/// With all weights equal to one the columns are used unscaled, so the result
/// is bitwise identical to the plain sample covariance.
pub(crate) fn weighted_gram(z: &CMatrix, weights: Option<&[f64]>) -> HermitianMatrix {
    let (p, n) = z.shape();
    let scaled;
    let y = match weights {
        Some(w) if w.iter().any(|&x| x != 1.0) => {
            assert_eq!(w.len(), n);
            scaled = CMatrix::from_fn(p, n, |i, j| z[(i, j)] * w[j].sqrt());
            &scaled
        }
        _ => z,
    };
    let conj = y.map(|v| v.conj());
    let mut out = CMatrix::zeros(p, p);
    // SAFETY: see `gemm`. `conj` is read as its n x p transpose (row stride p).
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            p,
            n,
            p,
            [1.0 / n as f64, 0.0],
            y.as_ptr() as *const [f64; 2],
            1,
            p as isize,
            conj.as_ptr() as *const [f64; 2],
            p as isize,
            1,
            [0.0, 0.0],
            out.as_mut_ptr() as *mut [f64; 2],
            1,
            p as isize,
        );
    }
    HermitianMatrix::symmetrized(out)
}
