//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use bonnet_core::regularizer::{RegKind, RegParams, DEFAULT_XI};
use serde::{Deserialize, Serialize};

/// Every setting of a run. All keys are optional in the file; unknown keys
/// are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Grid size, `n × n` pixels.
    pub n: usize,
    pub n_theta: usize,
    /// Beamlets per angle; the operator's default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_tau: Option<usize>,
    /// Noise standard deviation relative to the RMS of each clean sinogram.
    pub noise: f64,
    /// Seeds the phantom ensemble and, through [`RunConfig::noise_seed`],
    /// the measurement noise.
    pub seed: u64,
    /// Number of phantoms; the first `train_count` are for training.
    pub count: usize,
    pub train_count: usize,
    /// `none`, `tv` or `frac`.
    pub reg: String,
    /// TV smoothing.
    pub xi: f64,
    /// Fractional exponent used when `mu0` does not carry one.
    pub s: f64,
    /// Initial parameters, `"λ"` or `"λ,s"`. Giving `s` makes it learned.
    pub mu0: String,
    pub tol_train: f64,
    pub layers_train: usize,
    pub tol_test: f64,
    pub layers_test: usize,
    /// Relative tolerance of the outer (parameter) iteration.
    pub outer_tol: f64,
    pub outer_iters: usize,
    /// Parameters for `reconstruct` that bypass the training report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 64,
            n_theta: 10,
            n_tau: None,
            noise: 1e-3,
            seed: 7,
            count: 30,
            train_count: 20,
            reg: "frac".into(),
            xi: DEFAULT_XI,
            s: 0.4,
            mu0: "1e-5".into(),
            tol_train: 1e-3,
            layers_train: 300,
            tol_test: 1e-5,
            layers_test: 2000,
            outer_tol: 1e-3,
            outer_iters: 100,
            mu: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn kind(&self) -> Result<RegKind> {
        self.reg.parse().map_err(|e| anyhow::anyhow!("{e}"))
    }

    /// Whether the fractional exponent is a trained parameter.
    pub fn learns_s(&self) -> Result<bool> {
        Ok(self.kind()? == RegKind::Fractional && parse_mu(&self.mu0)?.s.is_some())
    }

    /// Directory label of a regularizer setting: `none`, `tv`, `frac` for a
    /// fixed exponent, `frac-s` when the exponent is learned.
    pub fn label(&self) -> Result<String> {
        let kind = self.kind()?;
        Ok(if self.learns_s()? {
            "frac-s".into()
        } else {
            kind.name().into()
        })
    }

    pub fn mu0(&self) -> Result<RegParams> {
        parse_mu(&self.mu0)
    }

    pub fn n_train(&self) -> usize {
        self.train_count
    }

    pub fn n_test(&self) -> usize {
        self.count - self.train_count
    }

    /// Noise seed of sample `i`.
    pub fn noise_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u64 + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            bail!("n must be at least 2");
        }
        if self.n_theta == 0 || self.n_tau == Some(0) {
            bail!("n_theta and n_tau must be positive");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            bail!("noise must be a nonnegative number");
        }
        if self.train_count == 0 || self.train_count > self.count {
            bail!("need 1 <= train_count <= count (got {} of {})", self.train_count, self.count);
        }
        if !(self.xi > 0.0) || !(self.s > 0.0 && self.s < 1.0) {
            bail!("need xi > 0 and 0 < s < 1");
        }
        for (name, tol) in [("tol_train", self.tol_train), ("tol_test", self.tol_test), ("outer_tol", self.outer_tol)] {
            if !(tol > 0.0) {
                bail!("{name} must be positive");
            }
        }
        if self.layers_train == 0 || self.layers_test == 0 {
            bail!("layer caps must be positive");
        }
        self.kind()?;
        let mu0 = self.mu0()?;
        if !mu0.is_admissible() {
            bail!("mu0 {} is not admissible", self.mu0);
        }
        if let Some(mu) = &self.mu {
            parse_mu(mu)?;
        }
        Ok(())
    }
}

/// Parses `"λ"` or `"λ,s"`.
pub fn parse_mu(text: &str) -> Result<RegParams> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let num = |s: &str| -> Result<f64> { s.parse().with_context(|| format!("bad number {s:?} in {text:?}")) };
    match parts.as_slice() {
        [l] => Ok(RegParams::lambda(num(l)?)),
        [l, s] => Ok(RegParams::lambda_s(num(l)?, num(s)?)),
        _ => bail!("expected \"lambda\" or \"lambda,s\", got {text:?}"),
    }
}

pub fn format_mu(mu: &RegParams) -> String {
    match mu.s {
        Some(s) => format!("{:e},{:e}", mu.lambda, s),
        None => format!("{:e}", mu.lambda),
    }
}
