//! Flat key=value run configuration with flag overrides.

use std::path::Path;

use bellsim_core::quantum::canonical_settings;
use bellsim_core::sim::{GeometryConfig, Scheme};
use bellsim_core::{Error, MeasurementSettings, Result};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub settings: MeasurementSettings,
    pub pairs_per_setting: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            settings: canonical_settings(),
            pairs_per_setting: 100_000,
        }
    }
}

pub fn parse_scheme(text: &str) -> Result<Scheme> {
    match text {
        "franson" => Ok(Scheme::Franson),
        "hug" => Ok(Scheme::Hug),
        other => Err(Error::Config(format!(
            "unknown scheme {other:?}, expected franson or hug"
        ))),
    }
}

impl RunConfig {
    /// Read a config file of `key = value` lines. Blank lines and `#`
    /// comments are ignored; unknown keys are rejected.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        let pairs = cfg.settings.setting_pairs();
        let (mut pa, mut pb) = pairs[0];
        let (mut pap, mut pbp) = pairs[3];

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected key = value, got {line:?}",
                    path.display(),
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>().map_err(|_| {
                    Error::Config(format!(
                        "{}:{}: invalid number {v:?} for {key}",
                        path.display(),
                        lineno + 1
                    ))
                })
            };
            match key {
                "scheme" => cfg.geometry.scheme = parse_scheme(value)?,
                "visibility" => cfg.geometry.visibility = num(value)?,
                "detection_efficiency" => cfg.geometry.detection_efficiency = num(value)?,
                "pair_rate" => cfg.geometry.pair_rate = num(value)?,
                "path_delay" => cfg.geometry.path_delay = num(value)?,
                "coincidence_window" => cfg.geometry.coincidence_window = num(value)?,
                "dead_time" => cfg.geometry.dead_time = num(value)?,
                "phi_a" => pa = num(value)?,
                "phi_a_prime" => pap = num(value)?,
                "phi_b" => pb = num(value)?,
                "phi_b_prime" => pbp = num(value)?,
                "pairs_per_setting" => {
                    cfg.pairs_per_setting = value.parse::<u64>().map_err(|_| {
                        Error::Config(format!(
                            "{}:{}: invalid count {value:?} for {key}",
                            path.display(),
                            lineno + 1
                        ))
                    })?
                }
                other => {
                    return Err(Error::Config(format!(
                        "{}:{}: unknown key {other:?}",
                        path.display(),
                        lineno + 1
                    )))
                }
            }
        }
        cfg.settings = MeasurementSettings::new(pa, pap, pb, pbp)?;
        cfg.geometry.validate()?;
        Ok(cfg)
    }
}
