//! Scenario configuration: WINNER-style lognormal laws for (K, AS).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    A1,
    C2,
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Scenario> {
        match s.to_ascii_uppercase().as_str() {
            "A1" => Ok(Scenario::A1),
            "C2" => Ok(Scenario::C2),
            _ => Err(Error::Config(format!("unknown scenario {s:?}"))),
        }
    }
}

/// K_dB ~ N(k_db_mean, k_db_std²); log10 AS ~ N(log10 as_deg_mean, as_log10_std²).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LognormalLaw {
    pub k_db_mean: f64,
    pub k_db_std: f64,
    pub as_deg_mean: f64,
    pub as_log10_std: f64,
}

impl LognormalLaw {
    pub fn degenerate(&self) -> LognormalLaw {
        LognormalLaw {
            k_db_std: 0.0,
            as_log10_std: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WinnerConfig {
    #[serde(default)]
    pub scenarios: BTreeMap<Scenario, LognormalLaw>,
}

impl WinnerConfig {
    pub fn get(&self, s: Scenario) -> Option<&LognormalLaw> {
        self.scenarios.get(&s)
    }

    /// Means of the A1 and C2 laws with placeholder spreads; replace the
    /// spreads with measured values for quantitative work.
    pub fn placeholder() -> WinnerConfig {
        let mut scenarios = BTreeMap::new();
        scenarios.insert(
            Scenario::A1,
            LognormalLaw {
                k_db_mean: 7.0,
                k_db_std: 6.0,
                as_deg_mean: 51.0,
                as_log10_std: 0.31,
            },
        );
        scenarios.insert(
            Scenario::C2,
            LognormalLaw {
                k_db_mean: 7.0,
                k_db_std: 3.0,
                as_deg_mean: 11.0,
                as_log10_std: 0.12,
            },
        );
        WinnerConfig { scenarios }
    }

    pub fn from_toml(s: &str) -> Result<WinnerConfig> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<WinnerConfig> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<WinnerConfig> {
        load_structured(path)
    }
}

/// Reads TOML or JSON depending on the file extension.
pub fn load_structured<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string())),
        _ => toml::from_str(&text).map_err(|e| Error::Config(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = WinnerConfig::placeholder();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(WinnerConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn parses_scenario_names() {
        assert_eq!("a1".parse::<Scenario>().unwrap(), Scenario::A1);
        assert!("B3".parse::<Scenario>().is_err());
    }
}
