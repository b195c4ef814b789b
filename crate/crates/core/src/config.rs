use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discrimination::PropagationParams;
use crate::error::{Error, Result};
use crate::phantom::PhantomConfig;
use crate::robust::LmsConfig;

pub const FORMAT_VERSION: u32 = 1;

fn format_version() -> u32 {
    FORMAT_VERSION
}

/// Which stages of the full pipeline are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Modules {
    /// Discrimination-factor weighting.
    pub df: bool,
    /// Robust regression adjustment.
    pub rr: bool,
    /// Common-AP ratio.
    pub ca: bool,
    /// Phantom fingerprints.
    pub pf: bool,
}

impl Modules {
    pub const ALL: Modules = Modules { df: true, rr: true, ca: true, pf: true };
    pub const NONE: Modules = Modules { df: false, rr: false, ca: false, pf: false };

    pub fn label(&self) -> String {
        if *self == Modules::ALL {
            return "dorfin".into();
        }
        let mut parts = vec!["basic"];
        if self.df {
            parts.push("df");
        }
        if self.rr {
            parts.push("rr");
        }
        if self.ca {
            parts.push("ca");
        }
        if self.pf {
            parts.push("pf");
        }
        parts.join("+")
    }
}

impl Default for Modules {
    fn default() -> Self {
        Modules::ALL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Moving-average window, in scans.
    pub window: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { window: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarConfig {
    pub k: usize,
}

impl Default for RadarConfig {
    fn default() -> Self {
        RadarConfig { k: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HorusConfig {
    /// Lower bound on per-AP standard deviation, dB.
    pub std_floor: f64,
}

impl Default for HorusConfig {
    fn default() -> Self {
        HorusConfig { std_floor: 1.0 }
    }
}

/// Global configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub propagation: PropagationParams,
    pub lms: LmsConfig,
    pub phantom: PhantomConfig,
    pub filter: FilterConfig,
    pub radar: RadarConfig,
    pub horus: HorusConfig,
    pub modules: Modules,
    /// Score candidates on the rayon pool when the `parallel` feature is built.
    pub parallel: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            format_version: FORMAT_VERSION,
            propagation: PropagationParams::default(),
            lms: LmsConfig::default(),
            phantom: PhantomConfig::default(),
            filter: FilterConfig::default(),
            radar: RadarConfig::default(),
            horus: HorusConfig::default(),
            modules: Modules::ALL,
            parallel: true,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                expected: FORMAT_VERSION,
            });
        }
        self.propagation.validate()?;
        if self.filter.window == 0 {
            return Err(Error::InvalidArgument("filter.window must be >= 1".into()));
        }
        if self.radar.k == 0 {
            return Err(Error::InvalidArgument("radar.k must be >= 1".into()));
        }
        if !(self.horus.std_floor > 0.0) {
            return Err(Error::InvalidArgument("horus.std_floor must be > 0".into()));
        }
        if !(self.lms.outlier_cutoff > 0.0) {
            return Err(Error::InvalidArgument("lms.outlier_cutoff must be > 0".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Config::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = Config::from_json(r#"{"propagation": {"gamma": 3.5}, "lms": {"rng_seed": 9}}"#).unwrap();
        assert_eq!(cfg.propagation.gamma, 3.5);
        assert_eq!(cfg.propagation.a, 4.0);
        assert_eq!(cfg.lms.rng_seed, 9);
        assert_eq!(cfg.lms.exact_threshold, 200);
        assert_eq!(cfg.phantom.dtheta_rad, 0.1309);
        assert_eq!(cfg.filter.window, 3);
        assert_eq!(cfg.modules, Modules::ALL);
    }

    #[test]
    fn rejects_bad_version_and_values() {
        assert!(Config::from_json(r#"{"format_version": 2}"#).is_err());
        assert!(Config::from_json(r#"{"filter": {"window": 0}}"#).is_err());
        assert!(Config::from_json(r#"{"propagation": {"gamma": 7.0}}"#).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(Modules::NONE.label(), "basic");
        assert_eq!(Modules::ALL.label(), "dorfin");
        assert_eq!(Modules { df: true, ..Modules::NONE }.label(), "basic+df");
    }
}
