//! TOML config file: any subset of the tunables, overriding built-in
//! defaults but overridden in turn by explicit command-line flags.

use std::path::Path;

use serde::Deserialize;

use super::IoError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub theta: Option<f64>,
    pub ell_frac: Option<f64>,
    pub tau_d: Option<f64>,
    pub tau_i: Option<usize>,
    pub iters: Option<usize>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    /// "pearson" (mean-centered, default) or "cosine" (raw unit norm).
    pub profile_norm: Option<String>,
}

pub fn load(path: &Path) -> Result<ConfigFile, IoError> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| IoError::ParseError(format!("{}: {e}", path.display())))
}

/// Tunables after merging defaults, config file and explicit flags.
#[derive(Debug, Clone)]
pub struct Settings {
    pub theta: f64,
    pub ell_frac: f64,
    pub tau_d: f64,
    pub tau_i: usize,
    pub iters: usize,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub profile_norm: geocloud_core::image::ProfileNorm,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            theta: 0.3,
            ell_frac: 0.1,
            tau_d: 40.0,
            tau_i: 7,
            iters: 20,
            delta: None,
            epsilon: None,
            seed: 0,
            profile_norm: geocloud_core::image::ProfileNorm::Pearson,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<(), IoError> {
        if !(0.0..1.0).contains(&self.theta) || self.theta == 0.0 {
            return Err(IoError::ParseError(format!(
                "theta must lie strictly inside (0, 1), got {}",
                self.theta
            )));
        }
        if !(0.0..1.0).contains(&self.ell_frac) || self.ell_frac == 0.0 {
            return Err(IoError::ParseError(format!(
                "ell_frac must lie strictly inside (0, 1), got {}",
                self.ell_frac
            )));
        }
        if self.tau_d <= 0.0 {
            return Err(IoError::ParseError(format!("tau_d must be positive, got {}", self.tau_d)));
        }
        if self.tau_i < 2 {
            return Err(IoError::ParseError(format!("tau_i must be at least 2, got {}", self.tau_i)));
        }
        Ok(())
    }
}

impl Settings {
    pub fn merge(config: Option<&ConfigFile>, flags: &FlagOverrides) -> Result<Settings, IoError> {
        let mut s = Settings::default();
        if let Some(c) = config {
            if let Some(v) = &c.profile_norm {
                s.profile_norm = match v.as_str() {
                    "pearson" => geocloud_core::image::ProfileNorm::Pearson,
                    "cosine" => geocloud_core::image::ProfileNorm::Cosine,
                    other => {
                        return Err(IoError::ParseError(format!(
                            "profile_norm must be 'pearson' or 'cosine', got '{other}'"
                        )))
                    }
                };
            }
            if let Some(v) = c.theta {
                s.theta = v;
            }
            if let Some(v) = c.ell_frac {
                s.ell_frac = v;
            }
            if let Some(v) = c.tau_d {
                s.tau_d = v;
            }
            if let Some(v) = c.tau_i {
                s.tau_i = v;
            }
            if let Some(v) = c.iters {
                s.iters = v;
            }
            if let Some(v) = c.delta {
                s.delta = Some(v);
            }
            if let Some(v) = c.epsilon {
                s.epsilon = Some(v);
            }
            if let Some(v) = c.seed {
                s.seed = v;
            }
        }
        if let Some(v) = flags.theta {
            s.theta = v;
        }
        if let Some(v) = flags.ell_frac {
            s.ell_frac = v;
        }
        if let Some(v) = flags.tau_d {
            s.tau_d = v;
        }
        if let Some(v) = flags.tau_i {
            s.tau_i = v;
        }
        if let Some(v) = flags.iters {
            s.iters = v;
        }
        if let Some(v) = flags.delta {
            s.delta = Some(v);
        }
        if let Some(v) = flags.epsilon {
            s.epsilon = Some(v);
        }
        if let Some(v) = flags.seed {
            s.seed = v;
        }
        s.validate()?;
        Ok(s)
    }
}

/// Values given explicitly on the command line.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub theta: Option<f64>,
    pub ell_frac: Option<f64>,
    pub tau_d: Option<f64>,
    pub tau_i: Option<usize>,
    pub iters: Option<usize>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
}
