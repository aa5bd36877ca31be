//! Run configuration: JSON files plus two built-in presets.
//!
//! All values use SI units (volts, ohms, seconds, farads). Any subset of
//! fields may appear in the file; the rest fall back to the preset or the
//! built-in defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DeviceParams;
use crate::gates::{GateSetup, GateTimings};
use crate::margins::{MarginSetup, ResistanceBands};
use crate::variability::VariabilitySpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("unknown preset '{0}' (expected 'experimental-setup' or 'integrated')")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Complete simulation configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub device: DeviceParams,
    pub variability: VariabilitySpec,
    pub gate: GateSetup,
    pub bands: ResistanceBands,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            device: DeviceParams::default(),
            variability: VariabilitySpec::none(),
            gate: GateSetup::default(),
            bands: ResistanceBands::default(),
        }
    }
}

impl SimConfig {
    /// A built-in preset by name.
    ///
    /// * `experimental-setup` — probe-station conditions: 20 pF node
    ///   capacitance, 3 us settle, 70 us ramps.
    /// * `integrated` — on-chip conditions: 10 fF node capacitance with
    ///   correspondingly short settle and ramp times.
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "experimental-setup" => Ok(SimConfig::default()),
            "integrated" => Ok(SimConfig {
                gate: GateSetup {
                    timings: GateTimings::fast(),
                    c_p: 10e-15,
                    ..Default::default()
                },
                ..Default::default()
            }),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    /// Load a JSON config file on top of `base` (missing fields keep the
    /// base values).
    pub fn load(path: &Path, base: &SimConfig) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, base).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Parse JSON with `base` supplying defaults for absent fields.
    pub fn from_json(text: &str, base: &SimConfig) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        struct Partial {
            device: Option<serde_json::Value>,
            variability: Option<serde_json::Value>,
            gate: Option<serde_json::Value>,
            bands: Option<serde_json::Value>,
            #[serde(flatten)]
            _rest: std::collections::BTreeMap<String, serde_json::Value>,
        }
        fn merge(base: serde_json::Value, over: serde_json::Value) -> serde_json::Value {
            match (base, over) {
                (serde_json::Value::Object(mut b), serde_json::Value::Object(o)) => {
                    for (k, v) in o {
                        let prev = b.remove(&k).unwrap_or(serde_json::Value::Null);
                        b.insert(k, merge(prev, v));
                    }
                    serde_json::Value::Object(b)
                }
                (_, over) => over,
            }
        }
        let partial: Partial = serde_json::from_str(text)?;
        if let Some(extra) = partial._rest.keys().next() {
            return Err(serde::de::Error::custom(format!(
                "unknown config section '{extra}'"
            )));
        }
        let mut merged = serde_json::to_value(base)?;
        for (key, value) in [
            ("device", partial.device),
            ("variability", partial.variability),
            ("gate", partial.gate),
            ("bands", partial.bands),
        ] {
            if let Some(v) = value {
                let prev = merged[key].take();
                merged[key] = merge(prev, v);
            }
        }
        serde_json::from_value(merged)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.device
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.gate.c_p < 0.0 || self.gate.dt <= 0.0 {
            return Err(ConfigError::Invalid(
                "gate.c_p must be >= 0 and gate.dt > 0".to_string(),
            ));
        }
        if self.bands.lrs <= 0.0 || self.bands.hrs <= self.bands.lrs {
            return Err(ConfigError::Invalid(
                "bands must satisfy 0 < lrs < hrs".to_string(),
            ));
        }
        Ok(())
    }

    pub fn margin_setup(&self) -> MarginSetup {
        MarginSetup {
            levels: self.gate.levels,
            r_fix: self.gate.r_fix,
            v_th: self.device.v_th,
        }
    }
}

/// Names accepted by `SimConfig::preset`.
pub const PRESETS: [&str; 2] = ["experimental-setup", "integrated"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_differ_in_parasitics_only_where_expected() {
        let exp = SimConfig::preset("experimental-setup").unwrap();
        let chip = SimConfig::preset("integrated").unwrap();
        assert_eq!(exp.gate.c_p, 20e-12);
        assert_eq!(chip.gate.c_p, 10e-15);
        assert!(chip.gate.timings.rise < exp.gate.timings.rise);
        assert_eq!(exp.device, chip.device);
        assert!(SimConfig::preset("probe").is_err());
        exp.validate().unwrap();
        chip.validate().unwrap();
    }

    #[test]
    fn partial_json_overrides_only_named_fields() {
        let base = SimConfig::default();
        let cfg =
            SimConfig::from_json(r#"{"device": {"v_th": 1.1}, "gate": {"c_p": 5e-12}}"#, &base)
                .unwrap();
        assert_eq!(cfg.device.v_th, 1.1);
        assert_eq!(cfg.device.r_lrs, base.device.r_lrs);
        assert_eq!(cfg.gate.c_p, 5e-12);
        assert_eq!(cfg.gate.r_fix, base.gate.r_fix);
    }

    #[test]
    fn unknown_sections_are_rejected() {
        let base = SimConfig::default();
        assert!(SimConfig::from_json(r#"{"dvice": {"v_th": 1.1}}"#, &base).is_err());
    }

    #[test]
    fn load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"variability": {"sigma_r": 0.1}}"#).unwrap();
        let cfg = SimConfig::load(&path, &SimConfig::default()).unwrap();
        assert_eq!(cfg.variability.sigma_r, 0.1);
        assert!(SimConfig::load(&dir.path().join("missing.json"), &SimConfig::default()).is_err());
    }

    #[test]
    fn invalid_values_fail_validation() {
        let mut cfg = SimConfig::default();
        cfg.bands.hrs = cfg.bands.lrs;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid(_))));
    }
}
