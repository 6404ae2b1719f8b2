use serde::{Deserialize, Serialize};

use crate::draws::McmcSchedule;
use crate::emission::StapParams;
use crate::error::{Error, Result};
use crate::linalg::Vec2;
use crate::priors::{PriorConfig, RhoWeights};
use crate::simulator::{SimConfig, WcCrwConfig};

/// Which emission family to fit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Variant {
    /// `rho` free, with atoms at 0 and 1.
    #[default]
    Full,
    /// `rho = 1` in every behaviour.
    CrwOnly,
    /// `rho = 0` in every behaviour.
    BrwOnly,
}

impl Variant {
    pub fn rho_weights(self) -> RhoWeights {
        match self {
            Variant::Full => RhoWeights::uniform(),
            Variant::CrwOnly => RhoWeights::crw_only(),
            Variant::BrwOnly => RhoWeights::brw_only(),
        }
    }
}

/// Keys of a run file that are not prior constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunKeys {
    #[serde(default = "default_iterations")]
    iterations: usize,
    #[serde(default = "default_burnin")]
    burnin: usize,
    #[serde(default = "default_thin")]
    thin: usize,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default = "default_true")]
    center_scale: bool,
    #[serde(default)]
    variant: Variant,
    #[serde(default)]
    force_single_state: bool,
}

fn default_iterations() -> usize {
    McmcSchedule::default().iterations
}
fn default_burnin() -> usize {
    McmcSchedule::default().burnin
}
fn default_thin() -> usize {
    McmcSchedule::default().thin
}
fn default_seed() -> u64 {
    McmcSchedule::default().seed
}
fn default_true() -> bool {
    true
}

const RUN_KEYS: [&str; 7] = ["iterations", "burnin", "thin", "seed", "center_scale", "variant", "force_single_state"];

/// Everything a `fit` needs besides the data.
///
/// The file format is a flat TOML table holding the run keys (`iterations`,
/// `burnin`, `thin`, `seed`, `center_scale`, `variant`, `force_single_state`)
/// next to the prior constants of [`PriorConfig`]. Absent keys take their
/// defaults and unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schedule: McmcSchedule,
    pub prior: PriorConfig,
    pub center_scale: bool,
    pub variant: Variant,
    pub force_single_state: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schedule: McmcSchedule::default(),
            prior: PriorConfig::default(),
            center_scale: true,
            variant: Variant::Full,
            force_single_state: false,
        }
    }
}

fn toml_error(e: impl std::fmt::Display) -> Error {
    Error::config(e.to_string())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(toml_error)?;
        let mut run = toml::Table::new();
        for key in RUN_KEYS {
            if let Some(v) = table.remove(key) {
                run.insert(key.to_string(), v);
            }
        }
        let keys: RunKeys = toml::Value::Table(run).try_into().map_err(toml_error)?;
        let prior: PriorConfig = toml::Value::Table(table).try_into().map_err(toml_error)?;
        let config = RunConfig {
            schedule: McmcSchedule::new(keys.iterations, keys.burnin, keys.thin, keys.seed),
            prior,
            center_scale: keys.center_scale,
            variant: keys.variant,
            force_single_state: keys.force_single_state,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(file: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(file)?)
    }

    /// Canonical flat TOML with every key spelled out.
    pub fn to_toml_string(&self) -> Result<String> {
        let keys = RunKeys {
            iterations: self.schedule.iterations,
            burnin: self.schedule.burnin,
            thin: self.schedule.thin,
            seed: self.schedule.seed,
            center_scale: self.center_scale,
            variant: self.variant,
            force_single_state: self.force_single_state,
        };
        let mut table = toml::Table::try_from(keys).map_err(toml_error)?;
        table.extend(toml::Table::try_from(&self.prior).map_err(toml_error)?);
        toml::to_string(&table).map_err(toml_error)
    }

    /// The prior actually used: the variant's `rho` weights override the file's.
    pub fn effective_prior(&self) -> PriorConfig {
        let mut prior = self.prior.clone();
        if self.variant != Variant::Full {
            prior.rho_weights = self.variant.rho_weights();
        }
        prior
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if s.thin == 0 {
            return Err(Error::config("thin must be at least 1"));
        }
        if s.burnin >= s.iterations {
            return Err(Error::config(format!("burnin ({}) must be smaller than iterations ({})", s.burnin, s.iterations)));
        }
        self.effective_prior().validate()
    }
}

/// Contents of a `simulate` configuration file.
#[derive(Debug, Clone, PartialEq)]
pub enum SimSpec {
    Hmm(SimConfig),
    WcCrw(WcCrwConfig),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimFile {
    preset: Option<String>,
    seed: Option<u64>,
    t: Option<usize>,
    s0: Option<Vec2>,
    s1: Option<Vec2>,
    state: Option<Vec<StapParams>>,
    pi: Option<Vec<Vec<f64>>>,
    lambda: Option<f64>,
    eps: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
    t_star: Option<usize>,
    d: Option<usize>,
}

impl SimSpec {
    /// Parses a simulation file.
    ///
    /// `preset` selects `dataset1`..`dataset3` (three-behaviour STAP-HMM) or
    /// `set1`..`set3` (wrapped-Cauchy CRW); the remaining keys override the
    /// preset. Without a preset, `[[state]]` tables and `pi` define the model.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: SimFile = toml::from_str(text).map_err(toml_error)?;
        let seed = f.seed.unwrap_or(1);
        let crw_keys = f.lambda.is_some() || f.eps.is_some() || f.a.is_some() || f.b.is_some() || f.t_star.is_some() || f.d.is_some();
        let hmm_keys = f.t.is_some() || f.s0.is_some() || f.s1.is_some() || f.state.is_some() || f.pi.is_some();
        let preset = f.preset.as_deref();
        let crw_base = match preset {
            Some("set1") => Some(WcCrwConfig::set1(seed)),
            Some("set2") => Some(WcCrwConfig::set2(seed)),
            Some("set3") => Some(WcCrwConfig::set3(seed)),
            _ => None,
        };
        if let Some(base) = crw_base.or_else(|| (crw_keys && preset.is_none()).then(|| WcCrwConfig::set1(seed))) {
            if hmm_keys {
                return Err(Error::config("STAP-HMM keys cannot be combined with a wrapped-Cauchy CRW"));
            }
            let c = WcCrwConfig {
                lambda: f.lambda.unwrap_or(base.lambda),
                eps: f.eps.unwrap_or(base.eps),
                a: f.a.unwrap_or(base.a),
                b: f.b.unwrap_or(base.b),
                t_star: f.t_star.unwrap_or(base.t_star),
                d: f.d.unwrap_or(base.d),
                seed,
            };
            c.validate()?;
            return Ok(SimSpec::WcCrw(c));
        }
        if crw_keys {
            return Err(Error::config("wrapped-Cauchy keys cannot be combined with a STAP-HMM"));
        }
        let t = f.t.unwrap_or(7000);
        let mut c = match preset {
            Some("dataset1") => SimConfig::benchmark(1, t, seed)?,
            Some("dataset2") => SimConfig::benchmark(2, t, seed)?,
            Some("dataset3") => SimConfig::benchmark(3, t, seed)?,
            Some(other) => return Err(Error::config(format!("unknown preset `{other}`"))),
            None => {
                let params = f.state.clone().ok_or_else(|| Error::config("either `preset` or `[[state]]` tables are required"))?;
                let pi = f.pi.clone().ok_or_else(|| Error::config("`pi` is required with `[[state]]` tables"))?;
                SimConfig { params, pi, t, s0: Vec2::new(-1.0, 0.0), s1: Vec2::ZERO, seed }
            }
        };
        if let Some(p) = f.state {
            c.params = p;
        }
        if let Some(pi) = f.pi {
            c.pi = pi;
        }
        c.s0 = f.s0.unwrap_or(c.s0);
        c.s1 = f.s1.unwrap_or(c.s1);
        c.validate()?;
        Ok(SimSpec::Hmm(c))
    }

    pub fn load(file: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(file)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!((c.schedule.iterations, c.schedule.burnin, c.schedule.thin), (125_000, 75_000, 10));
    }

    #[test]
    fn flat_keys_are_split() {
        let c = RunConfig::from_toml_str(
            "iterations = 2000\nburnin = 1000\nthin = 5\nseed = 7\nvariant = \"crw_only\"\ntruncation = 20\na1 = 2.0\ndomain = [-3.0, 3.0, -2.0, 2.0]\n",
        )
        .unwrap();
        assert_eq!(c.schedule, McmcSchedule::new(2000, 1000, 5, 7));
        assert_eq!(c.variant, Variant::CrwOnly);
        assert_eq!(c.prior.truncation, 20);
        assert_eq!(c.prior.a1, 2.0);
        assert_eq!(c.prior.domain.y_max, 2.0);
        assert_eq!(c.effective_prior().rho_weights, RhoWeights::crw_only());
    }

    #[test]
    fn unknown_and_invalid_keys_fail() {
        assert!(RunConfig::from_toml_str("itertions = 10").is_err());
        assert!(RunConfig::from_toml_str("burnin = 200000").is_err());
        assert!(RunConfig::from_toml_str("variant = \"mixed\"").is_err());
        assert!(RunConfig::from_toml_str("a1 = -1.0").is_err());
        let err = RunConfig::from_toml_str("b_mu = [1.0]").unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut c = RunConfig::default();
        c.prior.mh_s0_sd = Some(0.3);
        c.variant = Variant::BrwOnly;
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn simulation_files() {
        let SimSpec::Hmm(c) = SimSpec::from_toml_str("preset = \"dataset2\"\nt = 500\nseed = 3").unwrap() else {
            panic!("expected a STAP-HMM")
        };
        assert_eq!(c, SimConfig::benchmark(2, 500, 3).unwrap());
        let SimSpec::WcCrw(w) = SimSpec::from_toml_str("preset = \"set3\"\nt_star = 1000").unwrap() else {
            panic!("expected a CRW")
        };
        assert_eq!(w, WcCrwConfig { t_star: 1000, ..WcCrwConfig::set3(1) });
        let custom = "t = 50\npi = [[1.0]]\n[[state]]\nmu = [0.0, 0.0]\neta = [1.0, 0.0]\nsigma = [[1.0, 0.0], [0.0, 1.0]]\ntau = 0.1\nrho = 0.5\n";
        let SimSpec::Hmm(c) = SimSpec::from_toml_str(custom).unwrap() else { panic!("expected a STAP-HMM") };
        assert_eq!(c.params.len(), 1);
        assert!(SimSpec::from_toml_str("preset = \"set1\"\nt = 5").is_err());
        assert!(SimSpec::from_toml_str("preset = \"nope\"").is_err());
        assert!(SimSpec::from_toml_str("t = 50").is_err());
    }
}
