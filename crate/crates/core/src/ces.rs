//! Complex elliptically symmetric (CES) sampling with Gaussian cores.
//!
//! A CES vector is drawn as `z = sqrt(Q) / |g| * A g` with `g ~ CN(0, I)` and
//! `A A^H = Sigma`; the Gaussian core is `x = A g`. For the Student t family
//! the coupled draw is `z = x * sqrt(d / u)` with `u ~ chi2(d)` independent of
//! `g`, so that `Q = d |g|^2 / u` is distributed as `p F(2p, d)`.

use num_complex::Complex64;
use rand_distr::{ChiSquared, FisherF, Gamma};

use crate::error::{Error, Result};
use crate::linalg::{gemm, spd_sqrt, CMatrix, HermitianMatrix};
use crate::rng::RandomStream;

/// Density-generator family of a zero-mean CES law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CesDistribution {
    /// `g(x) = exp(-x)`.
    Gaussian,
    /// `g(x) = (1 + 2x/d)^-(p + d/2)`.
    StudentT { dof: f64 },
}

impl CesDistribution {
    pub fn student_t(dof: f64) -> Result<Self> {
        let d = Self::StudentT { dof };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Gaussian => Ok(()),
            Self::StudentT { dof } if dof > 0.0 && dof.is_finite() => Ok(()),
            Self::StudentT { dof } => Err(Error::Input(format!("Student t requires dof > 0, got {dof}"))),
        }
    }

    /// Whether the modular variate has a finite mean (false for t with d <= 2).
    pub fn has_finite_mean(&self) -> bool {
        match *self {
            Self::Gaussian => true,
            Self::StudentT { dof } => dof > 2.0,
        }
    }

    /// Density generator `g_z(x)` in dimension `p` (unnormalized).
    pub fn density_generator(&self, p: usize, x: f64) -> f64 {
        match *self {
            Self::Gaussian => (-x).exp(),
            Self::StudentT { dof } => (1.0 + 2.0 * x / dof).powf(-(p as f64 + dof / 2.0)),
        }
    }

    /// Maximum-likelihood weight `-g'(x)/g(x)`.
    pub fn mle_weight(&self, p: usize, x: f64) -> f64 {
        match *self {
            Self::Gaussian => 1.0,
            Self::StudentT { dof } => (2.0 * p as f64 + dof) / (dof + 2.0 * x),
        }
    }
}

/// Coupled CES samples and their Gaussian cores, one column per observation.
#[derive(Debug, Clone)]
pub struct CoupledSample {
    /// CES observations, p x n.
    pub z: CMatrix,
    /// Gaussian cores `x_i = A g_i`, p x n.
    pub x: CMatrix,
    /// Modular variates `Q_i`.
    pub q: Vec<f64>,
    /// `|g_i|^2`.
    pub gnorm2: Vec<f64>,
}

impl CoupledSample {
    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn len(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.z.ncols() == 0
    }
}

/// Sampler with the Hermitian square root of the scatter precomputed.
#[derive(Debug, Clone)]
pub struct CoupledSampler {
    dist: CesDistribution,
    sqrt_scatter: CMatrix,
}

impl CoupledSampler {
    pub fn new(dist: CesDistribution, sigma: &HermitianMatrix) -> Result<Self> {
        dist.validate()?;
        let root = spd_sqrt(sigma).map_err(|e| Error::Input(format!("scatter matrix: {e}")))?;
        Ok(Self { dist, sqrt_scatter: root.into_matrix() })
    }

    pub fn distribution(&self) -> CesDistribution {
        self.dist
    }

    pub fn dim(&self) -> usize {
        self.sqrt_scatter.nrows()
    }

    /// Draws `n` coupled observations. Draw order: the p x n core matrix
    /// column by column, then one chi-square per column (t only).
    pub fn sample(&self, n: usize, stream: &mut RandomStream) -> Result<CoupledSample> {
        if n == 0 {
            return Err(Error::Input("sample size n must be >= 1".into()));
        }
        let p = self.dim();
        let g = CMatrix::from_fn(p, n, |_, _| stream.complex_normal());
        let gnorm2: Vec<f64> = g.column_iter().map(|c| c.norm_squared()).collect();
        let x = gemm(&self.sqrt_scatter, &g);
        match self.dist {
            CesDistribution::Gaussian => Ok(CoupledSample { z: x.clone(), x, q: gnorm2.clone(), gnorm2 }),
            CesDistribution::StudentT { dof } => {
                let chi = ChiSquared::new(dof).map_err(|e| Error::Input(e.to_string()))?;
                let scale: Vec<f64> = (0..n).map(|_| dof / stream.sample(chi)).collect();
                let mut z = x.clone();
                for (mut col, s) in z.column_iter_mut().zip(&scale) {
                    col *= Complex64::from(s.sqrt());
                }
                let q = gnorm2.iter().zip(&scale).map(|(g2, s)| g2 * s).collect();
                Ok(CoupledSample { z, x, q, gnorm2 })
            }
        }
    }
}

/// Draws `n` coupled CES observations with scatter `sigma`.
pub fn sample_coupled(
    dist: CesDistribution,
    sigma: &HermitianMatrix,
    n: usize,
    stream: &mut RandomStream,
) -> Result<CoupledSample> {
    CoupledSampler::new(dist, sigma)?.sample(n, stream)
}

/// Marginal draws of the modular variate: `Gamma(p, 1)` for the Gaussian,
/// `p F(2p, d)` for the Student t.
pub fn modular_variate_sample(
    dist: CesDistribution,
    p: usize,
    count: usize,
    stream: &mut RandomStream,
) -> Result<Vec<f64>> {
    dist.validate()?;
    if p == 0 || count == 0 {
        return Err(Error::Input("p and count must be >= 1".into()));
    }
    let pf = p as f64;
    match dist {
        CesDistribution::Gaussian => {
            let g = Gamma::new(pf, 1.0).map_err(|e| Error::Input(e.to_string()))?;
            Ok((0..count).map(|_| stream.sample(g)).collect())
        }
        CesDistribution::StudentT { dof } => {
            let f = FisherF::new(2.0 * pf, dof).map_err(|e| Error::Input(e.to_string()))?;
            Ok((0..count).map(|_| pf * stream.sample(f)).collect())
        }
    }
}

/// Joint draws of `(Q, |g|^2)` under the coupled law, without forming vectors.
///
/// `|g|^2 ~ Gamma(p, 1)`; for the t family `Q = d |g|^2 / u` with `u ~ chi2(d)`.
pub fn modular_pairs(
    dist: CesDistribution,
    p: usize,
    count: usize,
    stream: &mut RandomStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    dist.validate()?;
    if p == 0 || count == 0 {
        return Err(Error::Input("p and count must be >= 1".into()));
    }
    let gamma = Gamma::new(p as f64, 1.0).map_err(|e| Error::Input(e.to_string()))?;
    let mut q = Vec::with_capacity(count);
    let mut g2 = Vec::with_capacity(count);
    match dist {
        CesDistribution::Gaussian => {
            for _ in 0..count {
                let g: f64 = stream.sample(gamma);
                q.push(g);
                g2.push(g);
            }
        }
        CesDistribution::StudentT { dof } => {
            let chi = ChiSquared::new(dof).map_err(|e| Error::Input(e.to_string()))?;
            for _ in 0..count {
                let g: f64 = stream.sample(gamma);
                let u: f64 = stream.sample(chi);
                q.push(dof * g / u);
                g2.push(g);
            }
        }
    }
    Ok((q, g2))
}
