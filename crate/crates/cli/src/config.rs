//! Application configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use neoscan_core::dsp::EdgeNormalization;
use neoscan_core::montage::{ElectrodeSet, MontageGraph};
use neoscan_stream::net::DEFAULT_PORT;
use neoscan_stream::{MotionConfig, SynthConfig};

use crate::error::{CliError, Result};

pub const CONFIG_ENV: &str = "NEOSCAN_CONFIG";
pub const PORT_ENV: &str = "NEOSCAN_PORT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    /// `host:port` of the headset or simulator.
    pub endpoint: String,
    /// Bipolar channel list, one `A-B` pair per line.
    pub montage: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    /// How the real-time band-pass edges are read.
    pub edge_normalization: EdgeNormalization,
    pub threshold: f64,
    pub min_persistence_s: f64,
    pub motion: MotionConfig,
    pub simulator: SynthConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            endpoint: format!("127.0.0.1:{DEFAULT_PORT}"),
            montage: None,
            weights: None,
            edge_normalization: EdgeNormalization::default(),
            threshold: 0.5,
            min_persistence_s: 5.0,
            motion: MotionConfig::default(),
            simulator: SynthConfig::default(),
        }
    }
}

impl AppConfig {
    /// Parses TOML; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: AppConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        for p in [&mut cfg.montage, &mut cfg.weights].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// The file named by `explicit` or `NEOSCAN_CONFIG`, else defaults; then
    /// `NEOSCAN_PORT` replaces the endpoint port.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let mut cfg = match explicit.map(Path::to_path_buf).or(from_env) {
            Some(p) => Self::load(&p)?,
            None => Self::default(),
        };
        if let Ok(port) = std::env::var(PORT_ENV) {
            let port: u16 = port.parse().map_err(|_| CliError::Usage(format!("{PORT_ENV}={port} is not a port")))?;
            cfg.endpoint = with_port(&cfg.endpoint, port);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.montage, &self.weights].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::Usage(format!("config references missing file {}", p.display())));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CliError::Usage(format!("threshold {} must lie in (0, 1)", self.threshold)));
        }
        if !(self.min_persistence_s > 0.0) {
            return Err(CliError::Usage("min_persistence_s must be positive".into()));
        }
        self.simulator.validate().map_err(|e| CliError::Usage(format!("simulator: {e}")))?;
        Ok(())
    }

    pub fn montage_graph(&self) -> Result<MontageGraph> {
        match &self.montage {
            None => Ok(MontageGraph::standard()),
            Some(p) => load_montage(p),
        }
    }
}

pub fn load_montage(path: &Path) -> Result<MontageGraph> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    MontageGraph::parse(&text, ElectrodeSet::standard()).map_err(|e| CliError::Usage(format!("montage: {e}")))
}

fn with_port(endpoint: &str, port: u16) -> String {
    let host = endpoint.rsplit_once(':').map(|(h, _)| h).unwrap_or(endpoint);
    format!("{host}:{port}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        AppConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = AppConfig::from_toml("endpoint = \"x:1\"\nthreshhold = 0.4\n", Path::new(".")).unwrap_err();
        assert!(matches!(e, CliError::Usage(m) if m.contains("threshhold")));
    }

    #[test]
    fn nested_sections_parse() {
        let cfg = AppConfig::from_toml(
            "threshold = 0.7\nedge_normalization = \"nyquist\"\n[motion]\naccel_thresh_g = 0.3\n[simulator]\nseed = 9\nduration_s = 30.0\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.threshold, 0.7);
        assert_eq!(cfg.edge_normalization, EdgeNormalization::Nyquist);
        assert_eq!(cfg.motion.accel_thresh_g, 0.3);
        assert_eq!(cfg.simulator.seed, 9);
        assert_eq!(cfg.simulator.duration_s, 30.0);
    }

    #[test]
    fn missing_paths_are_rejected() {
        let e = AppConfig::from_toml("weights = \"nope.neow\"\n", Path::new("/nonexistent")).unwrap_err();
        assert!(matches!(e, CliError::Usage(m) if m.contains("nope.neow")));
    }

    #[test]
    fn port_override() {
        assert_eq!(with_port("10.0.0.2:7878", 9000), "10.0.0.2:9000");
        assert_eq!(with_port("localhost", 9000), "localhost:9000");
    }
}
