//! TOML experiment configuration.
//!
//! ```toml
//! [law]
//! family = "power"
//! p = 3.0
//!
//! [coefficients]
//! damping = { profile = "indicator", support = [0.2, 0.6], floor = 1.0 }
//! alpha = { profile = "indicator", support = [0.4, 0.9], floor = 0.2 }
//!
//! [initial]
//! u0 = { kind = "sine", amplitude = 1.0, mode = 1 }
//!
//! [time]
//! t_final = 2000.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::convex::WeightMode;
use crate::error::{Error, Result};
use crate::feedback::{CoefficientField, Family, FeedbackLaw};
use crate::harness::fit::FitMode;
use crate::wave::{InitialData, SimParams, DEFAULT_ALPHA_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub r0: Option<f64>,
}

impl LawSpec {
    pub fn build(&self) -> Result<FeedbackLaw> {
        let r0 = self.r0.unwrap_or_else(|| self.family.default_r0());
        FeedbackLaw::new(self.family, r0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    #[serde(default)]
    pub alpha: Option<CoefficientField>,
    #[serde(default)]
    pub damping: Option<CoefficientField>,
    #[serde(default = "default_alpha_max")]
    pub alpha_max: f64,
}

fn default_alpha_max() -> f64 {
    DEFAULT_ALPHA_MAX
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec { alpha: None, damping: None, alpha_max: DEFAULT_ALPHA_MAX }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Interior points; `dx = 1/(n+1)`.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_n() -> usize {
    399
}

fn default_cfl() -> f64 {
    0.9
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n: default_n(), cfl: default_cfl() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    #[serde(default)]
    pub smooth_data: bool,
}

fn default_t_final() -> f64 {
    2000.0
}

fn default_sample_interval() -> f64 {
    1.0
}

impl Default for TimeSpec {
    fn default() -> Self {
        TimeSpec { t_final: default_t_final(), sample_interval: default_sample_interval(), smooth_data: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keyword {
    Calibrate,
}

/// A constant given explicitly or left to calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Value(f64),
    Keyword(Keyword),
}

impl Default for Param {
    fn default() -> Self {
        Param::Keyword(Keyword::Calibrate)
    }
}

impl Param {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Param::Value(v) => Some(v),
            Param::Keyword(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    #[serde(default)]
    pub beta: Param,
    /// `M` of the general envelope.
    #[serde(default)]
    pub m: Param,
    /// Product `κM` of the simplified envelope.
    #[serde(default)]
    pub kappa_m: Param,
    /// Product `γ_s C_s` of the lower envelope.
    #[serde(default)]
    pub gamma_cs: Param,
    #[serde(default)]
    pub t0: Param,
    #[serde(default)]
    pub t1: f64,
    #[serde(default = "default_weight")]
    pub weight: WeightMode,
}

fn default_weight() -> WeightMode {
    WeightMode::Optimal
}

impl Default for EnvelopeSpec {
    fn default() -> Self {
        EnvelopeSpec {
            beta: Param::default(),
            m: Param::default(),
            kappa_m: Param::default(),
            gamma_cs: Param::default(),
            t0: Param::default(),
            t1: 0.0,
            weight: default_weight(),
        }
    }
}

/// Fit window as fractions of the trace, in log-time (linear time for the
/// exponential mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    #[serde(default = "default_lo_fraction")]
    pub t_min_fraction: f64,
    #[serde(default = "default_hi_fraction")]
    pub t_max_fraction: f64,
    #[serde(default)]
    pub mode: FitModeName,
}

fn default_lo_fraction() -> f64 {
    2.0 / 3.0
}

fn default_hi_fraction() -> f64 {
    1.0
}

impl Default for FitSpec {
    fn default() -> Self {
        FitSpec { t_min_fraction: default_lo_fraction(), t_max_fraction: default_hi_fraction(), mode: FitModeName::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModeName {
    #[default]
    Power,
    Log,
    Stretched,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_trace")]
    pub trace: String,
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_summary")]
    pub summary: String,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_trace() -> String {
    "trace.csv".into()
}

fn default_report() -> String {
    "report.txt".into()
}

fn default_summary() -> String {
    "report.kv".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: default_dir(), trace: default_trace(), report: default_report(), summary: default_summary() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub law: LawSpec,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub time: TimeSpec,
    #[serde(default)]
    pub envelope: EnvelopeSpec,
    #[serde(default)]
    pub fit: FitSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.law.build().map_err(config_err)?;
        for f in self.coefficients.alpha.iter().chain(&self.coefficients.damping) {
            f.validate().map_err(config_err)?;
        }
        if !(self.coefficients.alpha_max > 0.0) {
            return Err(Error::Config("alpha_max must be positive".into()));
        }
        if !(self.time.t_final > 0.0 && self.time.sample_interval > 0.0) {
            return Err(Error::Config("t_final and sample_interval must be positive".into()));
        }
        let (lo, hi) = (self.fit.t_min_fraction, self.fit.t_max_fraction);
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("fit window fractions ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1")));
        }
        if self.fit.mode == FitModeName::Stretched && !matches!(self.law.family, Family::SubExponential { .. }) {
            return Err(Error::Config("stretched fit mode needs a sub_exponential law".into()));
        }
        if self.envelope.weight == WeightMode::Polynomial && !matches!(self.law.family, Family::Power { .. }) {
            return Err(Error::Config("polynomial weight needs a power law".into()));
        }
        self.sim_params().map(|_| ())
    }

    pub fn law(&self) -> Result<FeedbackLaw> {
        self.law.build()
    }

    pub fn fit_mode(&self) -> FitMode {
        match (self.fit.mode, self.law.family) {
            (FitModeName::Power, _) => FitMode::Power,
            (FitModeName::Log, _) => FitMode::Log,
            (FitModeName::Stretched, Family::SubExponential { p }) => FitMode::Stretched { p },
            (FitModeName::Stretched, _) => FitMode::Power,
            (FitModeName::Exponential, _) => FitMode::Exponential,
        }
    }

    pub fn sim_params(&self) -> Result<SimParams> {
        let law = self.law().map_err(config_err)?;
        let mut p = SimParams::new(law, self.grid.n, self.grid.cfl, self.time.t_final).with_sample_interval(self.time.sample_interval);
        p.alpha = self.coefficients.alpha;
        p.damping = self.coefficients.damping;
        p.alpha_max = self.coefficients.alpha_max;
        p.initial = self.initial;
        p.smooth_data = self.time.smooth_data;
        if p.n < 2 {
            return Err(Error::Config(format!("grid.n must be at least 2, got {}", p.n)));
        }
        if !(p.cfl > 0.0 && p.cfl < 1.0) {
            return Err(Error::Config(format!("grid.cfl must lie in (0, 1), got {}", p.cfl)));
        }
        if let Some(alpha) = &p.alpha {
            if alpha.level() > p.alpha_max {
                return Err(Error::Config(format!("α_+ = {} exceeds alpha_max = {}", alpha.level(), p.alpha_max)));
            }
        }
        Ok(p)
    }

    pub fn is_damped(&self) -> bool {
        self.coefficients.damping.is_some()
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.coefficients.alpha_max > DEFAULT_ALPHA_MAX {
            out.push(format!(
                "alpha_max = {} overrides the default {DEFAULT_ALPHA_MAX}; decay is only expected for small coupling",
                self.coefficients.alpha_max
            ));
        }
        if !self.is_damped() && self.initial.is_zero() {
            out.push("zero data and no damping: nothing to measure".into());
        }
        out
    }

    /// SHA-256 of the parsed configuration, independent of formatting.
    pub fn digest(&self) -> String {
        let canonical = format!("{self:?}");
        let hash = Sha256::digest(canonical.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.law.family.name().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
        name = "cubic"
        [law]
        family = "power"
        p = 3.0
        [coefficients]
        damping = { profile = "indicator", support = [0.2, 0.6], floor = 1.0 }
        alpha = { profile = "indicator", support = [0.4, 0.9], floor = 0.2 }
        [initial]
        u0 = { kind = "sine", amplitude = 1.0, mode = 1 }
        [grid]
        n = 99
        [time]
        t_final = 10.0
        [envelope]
        beta = "calibrate"
        kappa_m = 0.5
    "#;

    #[test]
    fn parses_example() {
        let cfg = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        assert_eq!(cfg.law.family, Family::Power { p: 3.0 });
        assert_eq!(cfg.envelope.beta, Param::Keyword(Keyword::Calibrate));
        assert_eq!(cfg.envelope.kappa_m, Param::Value(0.5));
        assert_eq!(cfg.grid.cfl, 0.9);
        assert!(cfg.is_damped());
        let p = cfg.sim_params().unwrap();
        assert!((p.dx() - 0.01).abs() < 1e-15);
        assert_eq!(p.sample_stride, 111);
    }

    #[test]
    fn rejects_bad_configs() {
        let strong = EXAMPLE.replace("floor = 0.2", "floor = 0.5");
        assert!(matches!(ExperimentConfig::from_toml(&strong), Err(Error::Config(_))));
        let unknown = EXAMPLE.replace("[grid]", "[grid]\nbogus = 1");
        assert!(ExperimentConfig::from_toml(&unknown).is_err());
        let bad_law = EXAMPLE.replace("p = 3.0", "p = 0.5");
        assert!(matches!(ExperimentConfig::from_toml(&bad_law), Err(Error::Config(_))));
        let window = format!("{EXAMPLE}\n[fit]\nt_min_fraction = 0.9\nt_max_fraction = 0.5\n");
        assert!(ExperimentConfig::from_toml(&window).is_err());
    }

    #[test]
    fn digest_ignores_formatting() {
        let a = ExperimentConfig::from_toml(EXAMPLE).unwrap();
        let b = ExperimentConfig::from_toml(&EXAMPLE.replace("p = 3.0", "p = 3.00   # cubic")).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = ExperimentConfig::from_toml(&EXAMPLE.replace("t_final = 10.0", "t_final = 11.0")).unwrap();
        assert_ne!(a.digest(), c.digest());
    }
}
