//! Flat TOML run configuration with strict key checking.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use pairwalk::Scenario;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub scenario: String,
    pub dims: Option<Vec<usize>>,
    pub eps: Option<f64>,
    pub mass: Option<f64>,
    pub steps: Option<u64>,
    pub snapshot_every: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// `"gaussian"` or `"random"`.
    pub initial: Option<String>,
    /// Sites per axis at each rung of a convergence ladder.
    pub ladder: Option<Vec<usize>>,
    pub t_final: Option<f64>,
    pub reference_sites: Option<usize>,
    /// One QWF matrix field per axis (custom scenario).
    pub b1_files: Option<Vec<PathBuf>>,
    pub c_file: Option<PathBuf>,
    /// `"minkowski"` or `"diagonal-sine"`.
    pub tetrad: Option<String>,
    pub tetrad_amplitude: Option<f64>,
    pub tetrad_file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub eps: Option<f64>,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Preset(Scenario),
    Custom { b1_files: Vec<PathBuf>, c_file: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Initial {
    Gaussian,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TetradSource {
    Minkowski,
    DiagonalSine(f64),
    File(PathBuf),
}

/// Validated configuration with defaults filled in.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub source: Source,
    /// Empty for custom scenarios until the coefficient files are read.
    pub dims: Vec<usize>,
    pub eps: Option<f64>,
    pub mass: f64,
    pub steps: Option<u64>,
    pub snapshot_every: Option<u64>,
    pub seed: u64,
    pub out: PathBuf,
    pub initial: Initial,
    pub ladder: Vec<usize>,
    pub t_final: f64,
    pub reference_sites: usize,
    pub tetrad: TetradSource,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive_count(name: &str, v: Option<u64>) -> Result<Option<u64>, CliError> {
    match v {
        Some(0) => Err(bad(format!("`{name}` must be positive"))),
        v => Ok(v),
    }
}

fn default_dims(s: Scenario) -> Vec<usize> {
    match s.ndim() {
        1 => vec![256],
        2 => vec![64, 64],
        _ => vec![32, 32, 32],
    }
}

impl RunConfig {
    pub fn parse(text: &str, overrides: Overrides) -> Result<Self, CliError> {
        let mut raw: RawConfig = toml::from_str(text).map_err(|e| bad(e.message().to_string()))?;
        if overrides.eps.is_some() {
            raw.eps = overrides.eps;
        }
        if overrides.steps.is_some() {
            raw.steps = overrides.steps;
        }
        if overrides.seed.is_some() {
            raw.seed = overrides.seed;
        }
        Self::validate(raw)
    }

    pub fn load(path: &Path, overrides: Overrides) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    fn validate(raw: RawConfig) -> Result<Self, CliError> {
        let source = if raw.scenario == "custom" {
            let b1_files = raw
                .b1_files
                .clone()
                .ok_or_else(|| bad("custom scenario requires key `b1_files`"))?;
            let c_file = raw
                .c_file
                .clone()
                .ok_or_else(|| bad("custom scenario requires key `c_file`"))?;
            Source::Custom { b1_files, c_file }
        } else {
            let s = Scenario::from_name(&raw.scenario).ok_or_else(|| {
                bad(format!(
                    "unknown scenario `{}`; expected one of flat-1d, flat-massive-1d, curved-1d, flat-2d, minkowski-3d, custom",
                    raw.scenario
                ))
            })?;
            if raw.b1_files.is_some() || raw.c_file.is_some() {
                return Err(bad("`b1_files` and `c_file` are only valid with scenario `custom`"));
            }
            Source::Preset(s)
        };

        let dims = match (&source, &raw.dims) {
            (_, Some(d)) => d.clone(),
            (Source::Preset(s), None) => default_dims(*s),
            (Source::Custom { .. }, None) => Vec::new(),
        };
        if let Source::Preset(s) = source {
            if dims.len() != s.ndim() {
                return Err(bad(format!(
                    "scenario {} needs {} extents in `dims`, got {}",
                    s.name(),
                    s.ndim(),
                    dims.len()
                )));
            }
        }
        for &n in &dims {
            if n == 0 || n % 2 != 0 {
                return Err(bad(format!("`dims` entries must be positive and even, got {n}")));
            }
            if n % 4 != 0 {
                return Err(bad(format!(
                    "`dims` entries must be multiples of 4 for the alternating pairing, got {n}"
                )));
            }
        }
        if let Some(e) = raw.eps {
            if !(e > 0.0 && e.is_finite()) {
                return Err(bad(format!("`eps` must be positive, got {e}")));
            }
        }
        let eps = raw.eps.or_else(|| dims.first().map(|&n| 2.0 * PI / n as f64));
        let mass = match (raw.mass, &source) {
            (Some(m), _) => m,
            (None, Source::Preset(s)) => s.default_mass(),
            (None, Source::Custom { .. }) => 0.0,
        };
        if !mass.is_finite() {
            return Err(bad("`mass` must be finite"));
        }
        let steps = positive_count("steps", raw.steps)?;
        let snapshot_every = positive_count("snapshot_every", raw.snapshot_every)?;
        let initial = match raw.initial.as_deref() {
            None | Some("gaussian") => Initial::Gaussian,
            Some("random") => Initial::Random,
            Some(other) => {
                return Err(bad(format!(
                    "`initial` must be \"gaussian\" or \"random\", got \"{other}\""
                )))
            }
        };
        let ladder = raw.ladder.clone().unwrap_or_else(|| vec![64, 128, 256]);
        let t_final = raw.t_final.unwrap_or(1.0);
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(bad(format!("`t_final` must be positive, got {t_final}")));
        }
        let reference_sites = raw.reference_sites.unwrap_or(1024);
        if reference_sites == 0 {
            return Err(bad("`reference_sites` must be positive"));
        }
        let tetrad = match (raw.tetrad.as_deref(), &raw.tetrad_file) {
            (Some(_), Some(_)) => return Err(bad("give either `tetrad` or `tetrad_file`, not both")),
            (_, Some(p)) => TetradSource::File(p.clone()),
            (None | Some("minkowski"), None) => TetradSource::Minkowski,
            (Some("diagonal-sine"), None) => TetradSource::DiagonalSine(raw.tetrad_amplitude.unwrap_or(0.1)),
            (Some(other), None) => {
                return Err(bad(format!(
                    "`tetrad` must be \"minkowski\" or \"diagonal-sine\", got \"{other}\""
                )))
            }
        };
        Ok(Self {
            source,
            dims,
            eps,
            mass,
            steps,
            snapshot_every,
            seed: raw.seed.unwrap_or(0),
            out: raw.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            initial,
            ladder,
            t_final,
            reference_sites,
            tetrad,
            raw,
        })
    }

    pub fn require_steps(&self) -> Result<u64, CliError> {
        self.steps.ok_or_else(|| bad("missing required key `steps`"))
    }

    /// The effective configuration as TOML, seed included.
    pub fn resolved_toml(&self) -> String {
        let mut r = self.raw.clone();
        r.dims = (!self.dims.is_empty()).then(|| self.dims.clone());
        r.eps = self.eps;
        r.mass = Some(self.mass);
        r.seed = Some(self.seed);
        r.out = Some(self.out.clone());
        toml::to_string(&r).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        RunConfig::parse(text, Overrides::default())
    }

    #[test]
    fn defaults_fill_in() {
        let c = parse("scenario = \"flat-2d\"").unwrap();
        assert_eq!(c.dims, vec![64, 64]);
        assert!((c.eps.unwrap() - 2.0 * PI / 64.0).abs() < 1e-15);
        assert_eq!(c.source, Source::Preset(Scenario::Flat2d));
        assert_eq!(c.seed, 0);
        assert_eq!(parse("scenario = \"flat-massive-1d\"").unwrap().mass, 1.0);
    }

    #[test]
    fn unknown_key_rejected() {
        let e = parse("scenario = \"flat-1d\"\nstepz = 3").unwrap_err();
        assert!(e.to_string().contains("stepz"), "{e}");
    }

    #[test]
    fn missing_scenario_named() {
        let e = parse("steps = 3").unwrap_err();
        assert!(e.to_string().contains("scenario"), "{e}");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(parse("scenario = \"flat-1d\"\ndims = [6]").is_err());
        assert!(parse("scenario = \"flat-1d\"\ndims = [7]").is_err());
        assert!(parse("scenario = \"flat-1d\"\neps = -1.0").is_err());
        assert!(parse("scenario = \"flat-1d\"\nsteps = 0").is_err());
        assert!(parse("scenario = \"flat-1d\"\ndims = [8, 8]").is_err());
        assert!(parse("scenario = \"warp\"").is_err());
        assert!(parse("scenario = \"custom\"").is_err());
        assert!(parse("scenario = \"flat-1d\"\ninitial = \"noise\"").is_err());
    }

    #[test]
    fn overrides_win_and_resolve() {
        let c = RunConfig::parse(
            "scenario = \"flat-1d\"\nsteps = 3\nseed = 1",
            Overrides {
                eps: Some(0.5),
                steps: Some(9),
                seed: Some(42),
            },
        )
        .unwrap();
        assert_eq!((c.eps, c.steps, c.seed), (Some(0.5), Some(9), 42));
        let text = c.resolved_toml();
        let back = parse(&text).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.steps, Some(9));
        assert_eq!(back.dims, vec![256]);
    }
}
