//! JSON experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelProfile, ShapingConfig};
use crate::error::{Error, Result};
use crate::gridmath::{default_shifts, validate_shift, GridConfig};
use crate::sensing::SensingConfig;

pub const DEFAULT_NU_P_HZ: f64 = 30e3;
pub const DEFAULT_NU_MAX_HZ: f64 = 815.0;
pub const REFERENCE_SHIFTS: [u64; 4] = [7, 12, 18, 23];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default = "default_nu_p")]
    pub nu_p_hz: f64,
}

fn default_nu_p() -> f64 {
    DEFAULT_NU_P_HZ
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorChoice {
    Alg1,
    Alg2,
    Ost,
    /// The chirp detector matching the user count, plus OST.
    Both,
}

/// A concrete detector as it appears in result rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Alg1,
    Alg2,
    Ost,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Detector::Alg1 => "alg1",
            Detector::Alg2 => "alg2",
            Detector::Ost => "ost",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    VehA {
        #[serde(default = "default_nu_max")]
        nu_max_hz: f64,
    },
    /// Unit gain, no delay, no Doppler.
    Identity,
    /// Profile document as accepted by [`ChannelProfile::from_json`].
    File { path: PathBuf },
}

fn default_nu_max() -> f64 {
    DEFAULT_NU_MAX_HZ
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec::VehA {
            nu_max_hz: DEFAULT_NU_MAX_HZ,
        }
    }
}

impl ChannelSpec {
    /// `None` for the identity channel.
    pub fn load(&self) -> Result<Option<ChannelProfile>> {
        match self {
            ChannelSpec::VehA { nu_max_hz } => {
                let p = ChannelProfile::veh_a(*nu_max_hz);
                p.validate()?;
                Ok(Some(p))
            }
            ChannelSpec::Identity => Ok(None),
            ChannelSpec::File { path } => {
                let text = fs::read_to_string(path)?;
                ChannelProfile::from_json(&text).map(Some)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    /// Number of roots G.
    #[serde(default = "default_roots")]
    pub roots: usize,
    /// Active users K.
    #[serde(default = "default_users")]
    pub users: usize,
    /// Shift for the single-user detector.
    #[serde(default = "default_shift")]
    pub shift: u64,
    /// Shifts for the multi-user detector; filled from the grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shifts: Option<Vec<u64>>,
    #[serde(default = "default_snr_grid")]
    pub snr_grid_db: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_detector")]
    pub detector: DetectorChoice,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub shaping: ShapingConfig,
    /// Dictionary shift grid; derived from the channel bounds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensing: Option<SensingConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; the global pool when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Record per-trial wall time. Off yields an empty timing column and a
    /// byte-reproducible CSV.
    #[serde(default = "default_true")]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_roots() -> usize {
    1024
}
fn default_users() -> usize {
    1
}
fn default_shift() -> u64 {
    7
}
fn default_snr_grid() -> Vec<f64> {
    vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0]
}
fn default_trials() -> usize {
    1000
}
fn default_detector() -> DetectorChoice {
    DetectorChoice::Both
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// The reference setup: 31 x 37 grid, 30 kHz Doppler period, Veh-A at
    /// 815 Hz, G = 1024.
    pub fn reference() -> Self {
        serde_json::from_str(r#"{"grid": {"M": 31, "N": 37}}"#).expect("static config")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let mut path = e.path().to_string();
            let message = e.inner().to_string();
            // serde reports a missing field against its parent
            if let Some(field) = message
                .strip_prefix("missing field `")
                .and_then(|s| s.split('`').next())
            {
                path = if path == "." {
                    field.to_string()
                } else {
                    format!("{path}.{field}")
                };
            }
            Error::Config { path, message }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Resolved multi-user shifts.
    pub fn shifts(&self) -> Vec<u64> {
        match &self.shifts {
            Some(s) => s.clone(),
            None if (self.grid.m, self.grid.n) == (31, 37) => REFERENCE_SHIFTS.to_vec(),
            None => self
                .grid_config()
                .map(|g| default_shifts(&g, 4))
                .unwrap_or_default(),
        }
    }

    /// Detectors to run, in output order.
    pub fn detectors(&self) -> Vec<Detector> {
        match self.detector {
            DetectorChoice::Alg1 => vec![Detector::Alg1],
            DetectorChoice::Alg2 => vec![Detector::Alg2],
            DetectorChoice::Ost => vec![Detector::Ost],
            DetectorChoice::Both if self.users == 1 => vec![Detector::Alg1, Detector::Ost],
            DetectorChoice::Both => vec![Detector::Alg2, Detector::Ost],
        }
    }

    pub fn channel_profile(&self) -> Result<Option<ChannelProfile>> {
        self.channel.load()
    }

    /// Grid with delay and Doppler bounds taken from the channel.
    pub fn grid_config(&self) -> Result<GridConfig> {
        let (tau, nu) = match self.channel_profile()? {
            Some(p) => (p.max_delay_s(), p.nu_max_hz),
            None => (0.0, 0.0),
        };
        GridConfig::new(self.grid.m, self.grid.n, self.grid.nu_p_hz, tau, nu)
    }

    pub fn sensing_config(&self) -> Result<SensingConfig> {
        let grid = self.grid_config()?;
        let s = self
            .sensing
            .clone()
            .unwrap_or_else(|| SensingConfig::for_grid(&grid));
        s.validate(&grid)?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, message: String| {
            Err(Error::Config {
                path: path.into(),
                message,
            })
        };
        let grid = self.grid_config()?;
        if self.trials == 0 {
            return err("trials", "must be at least 1".into());
        }
        if self.snr_grid_db.is_empty() {
            return err("snr_grid_db", "must be non-empty".into());
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return err("snr_grid_db", "entries must be finite".into());
        }
        if self.users == 0 || self.users > self.roots {
            return err("users", format!("must lie in 1..={}", self.roots));
        }
        if self.roots == 0 {
            return err("roots", "must be at least 1".into());
        }
        let dets = self.detectors();
        if dets.contains(&Detector::Alg1) {
            if self.users != 1 {
                return err("detector", "alg1 is a single-user detector".into());
            }
            if !validate_shift(self.shift as i64, &grid).unwrap_or(false) {
                return err("shift", format!("{} is not coprime to M and N", self.shift));
            }
        }
        if dets.contains(&Detector::Alg2) {
            let shifts = self.shifts();
            if shifts.is_empty() {
                return err("shifts", "must be non-empty".into());
            }
            for (i, &a) in shifts.iter().enumerate() {
                if shifts[..i].contains(&a) {
                    return err("shifts", format!("{a} repeated"));
                }
                if !validate_shift(a as i64, &grid).unwrap_or(false) {
                    return err("shifts", format!("{a} is not coprime to M and N"));
                }
            }
        }
        self.shaping.validate()?;
        self.sensing_config()?;
        Ok(())
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    ExperimentConfig::from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"grid": {"M": 31, "N": 37}}"#).unwrap();
        assert_eq!(cfg.shifts(), vec![7, 12, 18, 23]);
        assert_eq!(cfg.shaping.kernel_halfwidth, 16);
        assert_eq!(cfg.channel, ChannelSpec::VehA { nu_max_hz: 815.0 });
        assert_eq!(cfg.roots, 1024);
        assert_eq!(cfg.detectors(), vec![Detector::Alg1, Detector::Ost]);
        assert_eq!(cfg.sensing_config().unwrap().block_size(), 9);
    }

    #[test]
    fn missing_field_names_its_path() {
        match ExperimentConfig::from_json(r#"{"grid": {"N": 37}}"#) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "grid.M"),
            other => panic!("unexpected {other:?}"),
        }
        match ExperimentConfig::from_json(r#"{"roots": 3}"#) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "grid"),
            other => panic!("unexpected {other:?}"),
        }
        match ExperimentConfig::from_json(r#"{"grid": {"M": 31, "N": 37}, "trials": "x"}"#) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "trials"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reference_grid_quantities() {
        let g = ExperimentConfig::reference().grid_config().unwrap();
        assert!((g.bandwidth_hz() - 930e3).abs() < 1e-6);
        assert!((g.duration_s() * 1e3 - 1.2333).abs() < 1e-4);
        assert_eq!(g.mn(), 1147);
    }

    #[test]
    fn round_trip_is_a_fixed_point() {
        let texts = [
            r#"{"grid": {"M": 31, "N": 37}}"#,
            r#"{"grid": {"M": 31, "N": 37, "nu_p_hz": 30000}, "users": 5, "detector": "alg2",
                "shifts": [7, 12], "channel": {"profile": "identity"}, "threads": 2,
                "sensing": {"delay_shifts": [0], "doppler_shifts": [0]}, "timing": false,
                "output": "out.csv", "seed": 9}"#,
        ];
        for t in texts {
            let a = ExperimentConfig::from_json(t).unwrap();
            let b = ExperimentConfig::from_json(&a.to_json()).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.to_json(), b.to_json());
        }
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            r#"{"grid": {"M": 31, "N": 37}, "trials": 0}"#,
            r#"{"grid": {"M": 31, "N": 37}, "snr_grid_db": []}"#,
            r#"{"grid": {"M": 31, "N": 37}, "users": 5, "detector": "alg1"}"#,
            r#"{"grid": {"M": 31, "N": 37}, "shift": 31}"#,
            r#"{"grid": {"M": 31, "N": 37}, "detector": "alg2", "shifts": [7, 7]}"#,
            r#"{"grid": {"M": 31, "N": 62}}"#,
            r#"{"grid": {"M": 31, "N": 37}, "bogus": 1}"#,
        ];
        for t in bad {
            assert!(ExperimentConfig::from_json(t).is_err(), "{t}");
        }
    }
}
