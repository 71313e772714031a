use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Eigenvalues,
    Eigenvectors,
    Projector,
    IntrinsicBias,
    Crlb,
    SnrLoss,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Self::Eigenvalues,
        Self::Eigenvectors,
        Self::Projector,
        Self::IntrinsicBias,
        Self::Crlb,
        Self::SnrLoss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Eigenvalues => "eigenvalues",
            Self::Eigenvectors => "eigenvectors",
            Self::Projector => "projector",
            Self::IntrinsicBias => "intrinsic_bias",
            Self::Crlb => "crlb",
            Self::SnrLoss => "snr_loss",
        }
    }

    /// Data columns written after `n`.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::Eigenvalues | Self::Eigenvectors | Self::Projector => {
                &["emp_std_db", "theory_std_db", "emp_gcwe_db", "theory_gcwe_db"]
            }
            Self::IntrinsicBias => &["emp_m_db", "emp_gcwe_db", "theory_db"],
            Self::Crlb => &["emp_dnat_m_db", "emp_dnat_gcwe_db", "ces_crb_db", "ab_crlb_db", "biased_crlb_scm_db"],
            Self::SnrLoss => &["emp_m_db", "emp_gcwe_db", "emp_scm_db", "theory_db"],
        }
    }

    /// Whether the data follow the low-rank factor model (otherwise Toeplitz).
    pub fn uses_factor_model(self) -> bool {
        matches!(self, Self::Projector | Self::SnrLoss)
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// t maximum-likelihood M-estimator.
    Student,
    /// Sample covariance, scaled for t data.
    Scm,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "student" => Ok(Self::Student),
            "scm" => Ok(Self::Scm),
            _ => Err(Error::Config(format!("unknown estimator '{s}'"))),
        }
    }
}

pub const DEFAULT_GRID: [usize; 10] = [40, 62, 95, 147, 228, 352, 543, 838, 1295, 2000];

/// Campaign description. Every key may appear in a flat TOML file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub p: usize,
    /// Degrees of freedom of the t data.
    pub d: f64,
    pub rho_mod: f64,
    /// Radians.
    pub rho_phase: f64,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub r: usize,
    pub gamma2: f64,
    pub lambda_r: Vec<f64>,
    /// 1-based index of the tracked eigenvector.
    pub eigvec_index: usize,
    pub out: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub threads: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub coeff_draws: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Eigenvalues,
            p: 20,
            d: 3.0,
            rho_mod: 0.9,
            rho_phase: std::f64::consts::FRAC_PI_4,
            n_grid: DEFAULT_GRID.to_vec(),
            trials: 1000,
            seed: 1,
            estimator: Estimator::Student,
            r: 5,
            gamma2: 1.0,
            lambda_r: vec![100.0, 80.0, 60.0, 40.0, 20.0],
            eigvec_index: 1,
            out: None,
            svg: None,
            threads: None,
            tol: 1e-10,
            max_iter: 200,
            coeff_draws: 1_000_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.p == 0 {
            return fail("p must be >= 1".into());
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return fail(format!("d must be positive, got {}", self.d));
        }
        if !(0.0..1.0).contains(&self.rho_mod) || !self.rho_phase.is_finite() {
            return fail(format!("need 0 <= rho_mod < 1, got {}", self.rho_mod));
        }
        if self.trials == 0 {
            return fail("trials must be >= 1".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return fail("n_grid must be strictly increasing".into());
        }
        if let Some(&n) = self.n_grid.first() {
            if n <= self.p {
                return fail(format!("every n must exceed p = {}, got {n}", self.p));
            }
        }
        if self.estimator == Estimator::Scm && self.d <= 2.0 {
            return fail("the scm estimator needs d > 2 (finite second moment)".into());
        }
        if self.experiment.uses_factor_model() {
            if self.r == 0 || self.r >= self.p {
                return fail(format!("need 1 <= r < p, got r = {}", self.r));
            }
            if self.lambda_r.len() != self.r {
                return fail(format!("lambda_r has {} entries, expected r = {}", self.lambda_r.len(), self.r));
            }
            if !(self.gamma2 > 0.0) {
                return fail("gamma2 must be positive".into());
            }
        }
        if self.eigvec_index == 0 || self.eigvec_index > self.p {
            return fail(format!("eigvec_index must be in 1..={}", self.p));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return fail("need tol > 0 and max_iter >= 1".into());
        }
        if self.coeff_draws < 1000 {
            return fail("coeff_draws must be >= 1000".into());
        }
        if self.threads == Some(0) {
            return fail("threads must be >= 1".into());
        }
        Ok(())
    }

    /// `key = value` lines describing the campaign.
    pub fn echo(&self) -> Vec<(String, String)> {
        let list = |v: &[String]| format!("[{}]", v.join(", "));
        vec![
            ("experiment".into(), self.experiment.name().into()),
            ("p".into(), self.p.to_string()),
            ("d".into(), self.d.to_string()),
            ("rho_mod".into(), self.rho_mod.to_string()),
            ("rho_phase".into(), self.rho_phase.to_string()),
            ("n_grid".into(), list(&self.n_grid.iter().map(|n| n.to_string()).collect::<Vec<_>>())),
            ("trials".into(), self.trials.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("estimator".into(), format!("{:?}", self.estimator).to_lowercase()),
            ("r".into(), self.r.to_string()),
            ("gamma2".into(), self.gamma2.to_string()),
            ("lambda_r".into(), list(&self.lambda_r.iter().map(|x| x.to_string()).collect::<Vec<_>>())),
            ("eigvec_index".into(), self.eigvec_index.to_string()),
            ("tol".into(), self.tol.to_string()),
            ("max_iter".into(), self.max_iter.to_string()),
            ("coeff_draws".into(), self.coeff_draws.to_string()),
        ]
    }
}
