use std::path::{Path, PathBuf};

use serde::Deserialize;

use itsclust::imaging::{RpConfig, Thresholds};
use itsclust::metrics::EvalOptions;
use itsclust::pipeline::{BicVariant, CvSelect, FitOptions, LambdaSpec};
use itsclust::precision::{PenaltyKind, SolverConfig};
use itsclust::{Error, Result};

/// Run configuration read from a TOML file. Relative paths resolve against
/// the directory holding the file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    pub w: usize,
    /// Candidate cluster counts; one value fits that K directly.
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// One value is used as is; several are chosen per cluster by cross-validation.
    #[serde(default = "default_lambda")]
    pub lambda: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub cv_select_max: bool,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_tol")]
    pub tol_primal: f64,
    #[serde(default = "default_tol")]
    pub tol_dual: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_scad_a")]
    pub scad_a: f64,
    #[serde(default)]
    pub penalty: Penalty,
    #[serde(default = "default_max_alt")]
    pub max_alt: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub standard_bic_sign: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub rp: RpSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    #[default]
    Scad,
    Lasso,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RpSection {
    #[serde(default = "one")]
    pub m: usize,
    #[serde(default = "one")]
    pub kappa: usize,
    /// Ignored when `thresholds` is given.
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    pub thresholds: Option<Vec<f64>>,
}

impl Default for RpSection {
    fn default() -> Self {
        Self {
            m: 1,
            kappa: 1,
            quantile: default_quantile(),
            thresholds: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_kernel")]
    pub kernel: [[f64; 2]; 2],
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            test_fraction: default_test_fraction(),
            ridge: default_ridge(),
            kernel: default_kernel(),
        }
    }
}

fn default_k() -> Vec<usize> {
    vec![2]
}
fn default_beta() -> f64 {
    10.0
}
fn default_lambda() -> Vec<f64> {
    vec![0.05]
}
fn default_folds() -> usize {
    5
}
fn default_rho() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-5
}
fn default_max_outer() -> usize {
    200
}
fn default_scad_a() -> f64 {
    itsclust::likelihood::DEFAULT_SCAD_A
}
fn default_max_alt() -> usize {
    20
}
fn default_restarts() -> usize {
    4
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn one() -> usize {
    1
}
fn default_quantile() -> f64 {
    0.5
}
fn default_test_fraction() -> f64 {
    0.1
}
fn default_ridge() -> f64 {
    1e-3
}
fn default_kernel() -> [[f64; 2]; 2] {
    [[5.0, 1.0], [1.0, 1.0]]
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.input = base.join(&cfg.input);
        cfg.out_dir = base.join(&cfg.out_dir);
        Ok(cfg)
    }

    /// Checks every constraint that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.w == 0 {
            return bad("w must be positive");
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return bad("k must list positive cluster counts");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be non-negative");
        }
        if self.lambda.is_empty() || self.lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("lambda must list non-negative values");
        }
        if self.lambda.len() > 1 && self.folds < 2 {
            return bad("folds must be at least 2");
        }
        if self.max_alt == 0 || self.restarts == 0 {
            return bad("max_alt and restarts must be positive");
        }
        self.solver().validate()?;
        let rp = self.rp_config();
        rp.side(self.w)?;
        if let Thresholds::Quantile(q) = rp.thresholds {
            if !(q > 0.0 && q < 1.0) {
                return bad("rp.quantile must lie in (0, 1)");
            }
        }
        if let Some(t) = &self.rp.thresholds {
            if t.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return bad("rp.thresholds must be positive");
            }
        }
        let e = &self.evaluate;
        if !(e.test_fraction > 0.0 && e.test_fraction < 1.0) {
            return bad("evaluate.test_fraction must lie in (0, 1)");
        }
        if !(e.ridge >= 0.0 && e.ridge.is_finite()) {
            return bad("evaluate.ridge must be non-negative");
        }
        itsclust::metrics::check_kernel(&self.eval_options().kernel)
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            rho: self.rho,
            max_outer: self.max_outer,
            tol_primal: self.tol_primal,
            tol_dual: self.tol_dual,
            scad_a: self.scad_a,
            penalty: match self.penalty {
                Penalty::Scad => PenaltyKind::Scad,
                Penalty::Lasso => PenaltyKind::Lasso,
            },
            ..SolverConfig::default()
        }
    }

    /// Shared starting lambda: the median of the grid.
    pub fn base_lambda(&self) -> f64 {
        let mut grid = self.lambda.clone();
        grid.sort_by(f64::total_cmp);
        grid[grid.len() / 2]
    }

    pub fn fit_options(&self, k: usize) -> FitOptions {
        FitOptions {
            k,
            beta: self.beta,
            lambda: LambdaSpec::Shared(self.base_lambda()),
            solver: self.solver(),
            max_alt: self.max_alt,
            restarts: self.restarts,
            seed: self.seed,
        }
    }

    pub fn bic_variant(&self) -> BicVariant {
        if self.standard_bic_sign {
            BicVariant::Standard
        } else {
            BicVariant::Printed
        }
    }

    pub fn cv_select(&self) -> CvSelect {
        if self.cv_select_max {
            CvSelect::Max
        } else {
            CvSelect::Min
        }
    }

    pub fn rp_config(&self) -> RpConfig {
        RpConfig {
            m: self.rp.m,
            kappa: self.rp.kappa,
            thresholds: match &self.rp.thresholds {
                Some(t) => Thresholds::Fixed(t.clone()),
                None => Thresholds::Quantile(self.rp.quantile),
            },
        }
    }

    pub fn eval_options(&self) -> EvalOptions {
        let k = self.evaluate.kernel;
        EvalOptions {
            test_fraction: self.evaluate.test_fraction,
            ridge: self.evaluate.ridge,
            kernel: nalgebra::Matrix2::new(k[0][0], k[0][1], k[1][0], k[1][1]),
        }
    }
}
