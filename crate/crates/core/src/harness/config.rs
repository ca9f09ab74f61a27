use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmatch::staged::FlowConfig;
use crate::geolab::ManifoldFamily;
use crate::planner::PlannerConfig;
use crate::valuation::ValuationConfig;
use crate::worldgen::PointMassWorld;

/// Version of the configuration schema understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Everything a run needs. Every field has a default, so an empty file is a
/// valid configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub episodes: usize,
    /// Actions executed per episode.
    pub episode_steps: usize,
    /// Actions executed per plan call; defaults to `planner.chunk_len`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    pub world: PointMassWorld,
    pub planner: PlannerConfig,
    pub valuation: ValuationConfig,
    pub flow: FlowConfig,
    pub geolab: GeolabConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: SCHEMA_VERSION,
            seed: 0,
            output_dir: PathBuf::from("runs/latest"),
            episodes: 200,
            episode_steps: 64,
            stride: None,
            world: PointMassWorld::default(),
            planner: PlannerConfig::default(),
            valuation: ValuationConfig::default(),
            flow: FlowConfig::default(),
            geolab: GeolabConfig::default(),
        }
    }
}

/// Settings of the `geometry` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeolabConfig {
    pub horizons: Vec<usize>,
    pub n_uniform: usize,
    pub n_latent: usize,
    pub landscape_dim: usize,
    pub landscape_mass: f64,
    pub repetitions: usize,
    pub family: ManifoldFamily,
    /// Planner used for the equal-budget search comparison; its `K·M·N` is
    /// the budget of both arms.
    pub search: PlannerConfig,
}

impl Default for GeolabConfig {
    fn default() -> Self {
        Self {
            horizons: vec![1, 2, 4, 8],
            n_uniform: 1_000_000,
            n_latent: 100_000,
            landscape_dim: 8,
            landscape_mass: 0.001,
            repetitions: 2000,
            family: ManifoldFamily::default(),
            search: PlannerConfig {
                iterations: 4,
                video_samples: 25,
                value_samples: 1,
                video_elites: 5,
                value_elites: 5,
                chunk_len: 1,
                d_vid: 8,
                d_val: 1,
                ..PlannerConfig::default()
            },
        }
    }
}

impl GeolabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizons.len() < 3 || self.horizons.contains(&0) {
            return Err(Error::config("geolab.horizons", "needs at least 3 positive horizons"));
        }
        for (field, v) in [
            ("geolab.n_uniform", self.n_uniform),
            ("geolab.n_latent", self.n_latent),
            ("geolab.landscape_dim", self.landscape_dim),
            ("geolab.repetitions", self.repetitions),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        if !(self.landscape_mass > 0.0 && self.landscape_mass <= 1.0) {
            return Err(Error::config("geolab.landscape_mass", "must lie in (0, 1]"));
        }
        for h in &self.horizons {
            self.family
                .instantiate(*h)
                .map_err(|e| Error::config("geolab.family", e.to_string()))?;
        }
        self.search.validate().map_err(|e| rename(e, "planner.", "geolab.search."))?;
        if self.search.d_vid != self.landscape_dim {
            return Err(Error::config(
                "geolab.search.d_vid",
                format!("must equal geolab.landscape_dim = {}", self.landscape_dim),
            ));
        }
        if self.search.d_val != 1 || self.search.chunk_len != 1 {
            return Err(Error::config(
                "geolab.search",
                "d_val and chunk_len must be 1 on the planted landscape",
            ));
        }
        Ok(())
    }
}

fn rename(e: Error, from: &str, to: &str) -> Error {
    match e {
        Error::Config { field, message } => Error::Config {
            field: field.replacen(from, to, 1),
            message,
        },
        other => other,
    }
}

impl ExperimentConfig {
    /// Re-plan stride after defaulting.
    pub fn stride(&self) -> usize {
        self.stride.unwrap_or(self.planner.chunk_len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::config(
                "version",
                format!("schema version {} is not supported (expected {SCHEMA_VERSION})", self.version),
            ));
        }
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be >= 1"));
        }
        if self.episode_steps == 0 {
            return Err(Error::config("episode_steps", "must be >= 1"));
        }
        self.world.validate()?;
        self.planner.validate()?;
        self.valuation.validate(self.world.horizon)?;
        self.flow.validate()?;
        self.geolab.validate()?;
        let h = self.world.horizon;
        if self.planner.chunk_len > h {
            return Err(Error::config(
                "planner.chunk_len",
                format!(
                    "chunk_len = {} must not exceed world.horizon = {h}",
                    self.planner.chunk_len
                ),
            ));
        }
        if self.planner.d_vid != self.world.latent_dim() {
            return Err(Error::config(
                "planner.d_vid",
                format!(
                    "d_vid = {} must equal 2 * world.knots = {}",
                    self.planner.d_vid,
                    self.world.latent_dim()
                ),
            ));
        }
        if self.planner.d_val < self.valuation.segments {
            return Err(Error::config(
                "planner.d_val",
                format!(
                    "d_val = {} must be >= valuation.segments = {}",
                    self.planner.d_val, self.valuation.segments
                ),
            ));
        }
        let stride = self.stride();
        if stride == 0 || stride > self.planner.chunk_len {
            return Err(Error::config(
                "stride",
                format!(
                    "stride = {stride} must lie in 1..=planner.chunk_len = {}",
                    self.planner.chunk_len
                ),
            ));
        }
        Ok(())
    }

    /// Parse and validate TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let field = message
                .split('`')
                .nth(1)
                .filter(|_| message.starts_with("unknown field"))
                .map(str::to_string)
                .unwrap_or_else(|| "config".to_string());
            Error::config(field, e.to_string().trim_end().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidArgument(format!("cannot serialize config: {e}")))
    }
}

/// Read, default, and validate a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field_of(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn empty_file_is_all_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.stride(), c.planner.chunk_len);
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::default();
        c.seed = 42;
        c.stride = Some(4);
        c.planner.alpha = 0.3;
        let text = c.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(ExperimentConfig::from_toml(&back.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::from_toml("[plannner]\nK = 3\n").unwrap_err();
        assert!(e.to_string().contains("plannner"), "{e}");
        assert_eq!(field_of(e), "plannner");
        let e = ExperimentConfig::from_toml("[planner]\nKK = 3\n").unwrap_err();
        assert!(e.to_string().contains("KK"), "{e}");
    }

    #[test]
    fn elite_count_constraint_names_both_fields() {
        let e = ExperimentConfig::from_toml("[planner]\nK1 = 10\nM = 4\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("K1") && msg.contains("M = 4"), "{msg}");
    }

    #[test]
    fn cross_field_checks() {
        let cases = [
            ("[planner]\nchunk_len = 64\n", "planner.chunk_len"),
            ("[planner]\nd_vid = 3\n", "planner.d_vid"),
            ("[planner]\nd_val = 2\n", "planner.d_val"),
            ("stride = 9\n", "stride"),
            ("episodes = 0\n", "episodes"),
            ("version = 7\n", "version"),
            ("[world]\naccel_limit = -1.0\n", "world.accel_limit"),
            ("[geolab]\nlandscape_dim = 3\n", "geolab.search.d_vid"),
            ("[geolab.search]\nK1 = 99\n", "geolab.search.K1"),
        ];
        for (text, field) in cases {
            let e = ExperimentConfig::from_toml(text).unwrap_err();
            assert_eq!(field_of(e), field, "{text}");
        }
    }

    #[test]
    fn wrong_type_is_a_config_error() {
        let e = ExperimentConfig::from_toml("seed = \"seven\"\n").unwrap_err();
        assert!(matches!(e, Error::Config { .. }));
        assert!(e.to_string().contains("seed"), "{e}");
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_config(Path::new("/definitely/not/here.toml")),
            Err(Error::Io { .. })
        ));
    }
}
