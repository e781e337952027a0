//! Run configuration loaded from TOML.
//!
//! ```toml
//! threads = 4
//! seed = 7
//!
//! [eval]
//! alignment = "robust"
//! space = "depth"
//!
//! [curation]
//! n = 0.1
//!
//! [voting]
//! ratio_threshold = 3.0
//! ```

use std::path::Path;

use depthkit_core::benchmark::VotingConfig;
use depthkit_core::curation::CurationConfig;
use depthkit_core::losses::LossConfig;
use depthkit_core::metrics::EvalConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub per_image_pairs: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { per_image_pairs: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub lease_ms: u64,
    /// Events between snapshots of the annotation state.
    pub snapshot_every: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            lease_ms: depthkit_core::annotation::DEFAULT_LEASE_MS,
            snapshot_every: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    pub seed: u64,
    pub eval: EvalConfig,
    pub curation: CurationConfig,
    pub voting: VotingConfig,
    pub loss: LossConfig,
    pub benchmark: BenchmarkConfig,
    pub service: ServiceConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(#[from] depthkit_core::Error),
    #[error("config: {0}")]
    Other(String),
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.eval.validate()?;
        self.curation.validate()?;
        self.voting.validate()?;
        self.loss.validate()?;
        if self.threads == Some(0) {
            return Err(ConfigError::Other("threads must be >= 1".into()));
        }
        if self.benchmark.per_image_pairs == 0 {
            return Err(ConfigError::Other("benchmark.per_image_pairs must be >= 1".into()));
        }
        if self.service.lease_ms == 0 {
            return Err(ConfigError::Other("service.lease_ms must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use depthkit_core::metrics::AlignSpace;
    use depthkit_core::AlignmentMethod;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_and_aliases() {
        let cfg = RunConfig::parse(
            "threads = 2\nseed = 9\n[eval]\nalignment = \"lsq\"\nspace = \"depth\"\nmax_depth = 80.0\n\
             [loss]\nssi_weight = 1.0\ngm_weight = 2.0\ngm_scales = 3\ntrim_fraction = 0.0\nfeat_align_margin = 0.85\n",
        )
        .unwrap();
        assert_eq!(cfg.threads, Some(2));
        assert_eq!(cfg.eval.alignment, AlignmentMethod::LeastSquares);
        assert_eq!(cfg.eval.space, AlignSpace::Depth);
        assert_eq!(cfg.loss.gm_scales, 3);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::parse("[curation]\nn = 1.0\n").is_err());
        assert!(RunConfig::parse("[voting]\nratio_threshold = 0.5\n").is_err());
        assert!(RunConfig::parse("[eval]\nbogus = 1\n").is_err());
        assert!(RunConfig::parse("threads = 0\n").is_err());
    }
}
