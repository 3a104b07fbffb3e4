use std::path::{Path, PathBuf};

use chartrans::characteristics::IntegratorConfig;
use chartrans::inpainting::InpaintConfig;
use chartrans::quasilinear::{QuasiConfig, StripeInit, StripePlan};
use chartrans::verification::SuiteConfig;
use chartrans::{Error, Result};
use serde::{Deserialize, Serialize};

/// Settings for every command, read from JSON and then overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub grid: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Picard tolerance; `None` means `1e-8 M*`.
    pub tol: Option<f64>,
    pub max_iterations: usize,
    pub init: StripeInit,
    /// Upper end of the stripe march; `None` means `1 - eps_stop`.
    pub lambda_max: Option<f64>,
    pub stripe_h: f64,
    pub integrator: IntegratorConfig,
    pub suite: SuiteConfig,
    pub inpaint: InpaintConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: "disk-radial-f0".into(),
            grid: 128,
            seed: 42,
            out: PathBuf::from("out"),
            threads: 0,
            tol: None,
            max_iterations: 200,
            init: StripeInit::Extend,
            lambda_max: None,
            stripe_h: 0.05,
            integrator: IntegratorConfig::with_dt(0.01),
            suite: SuiteConfig::default(),
            inpaint: InpaintConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid config file {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid < 4 {
            return Err(Error::Config(format!("grid must be at least 4, got {}", self.grid)));
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(Error::Config(format!("tol must be positive, got {tol}")));
            }
        }
        self.integrator.validate()?;
        self.quasi(1.0).validate()?;
        self.plan()?;
        Ok(())
    }

    pub fn plan(&self) -> Result<StripePlan> {
        StripePlan::new(self.lambda_max.unwrap_or(1.0 - self.integrator.eps_stop), self.stripe_h)
    }

    pub fn quasi(&self, m_star: f64) -> QuasiConfig {
        QuasiConfig {
            tol: self.tol.unwrap_or(1e-8 * m_star),
            max_iterations: self.max_iterations,
            init: self.init,
        }
    }
}
