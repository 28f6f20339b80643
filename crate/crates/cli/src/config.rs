//! Run configuration files.
//!
//! A config file is TOML with optional sections `[medium]`, `[sim]`,
//! `[grid]`, `[network]` and `[layers]`; unknown keys are errors. Command
//! line flags take precedence over file values.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use skewdiff_core::homogenize::LayeredCrossSection;
use skewdiff_core::paths::Scheme;
use skewdiff_core::pde::TimeScheme;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub medium: MediumSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub network: NetworkSection,
    pub layers: Option<LayeredCrossSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSection {
    pub d_plus: Option<f64>,
    pub d_minus: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub scheme: Option<Scheme>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub n_cells: Option<usize>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub scheme: Option<TimeScheme>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub file: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // network files are resolved relative to the config file
        if let (Some(file), Some(dir)) = (cfg.network.file.as_mut(), path.parent()) {
            if file.is_relative() {
                *file = dir.join(&*file);
            }
        }
        Ok(cfg)
    }
}

/// First of flag, file value, default.
pub fn pick<T: Clone>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// First of flag and file value, or an error naming the flag.
pub fn require<T: Clone>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file).with_context(|| format!("missing --{name} (or the matching config entry)"))
}

/// Points of a `lo:hi:step` range, parsed as one flag value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Points(pub Vec<f64>);

impl std::ops::Deref for Points {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Parses `lo:hi:step` into the points `lo + k step` up to `hi`.
pub fn parse_range(s: &str) -> std::result::Result<Points, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(format!("expected lo:hi:step, got `{s}`"));
    };
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 || hi < lo {
        return Err(format!("need finite lo <= hi and step > 0, got `{s}`"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    if n > 10_000_000 {
        return Err(format!("range `{s}` has {n} points"));
    }
    Ok(Points((0..n).map(|k| lo + k as f64 * step).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_include_both_ends() {
        let r = parse_range("-1:1:0.5").unwrap();
        assert_eq!(*r, [-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(parse_range("0:1:0.1").unwrap().len(), 11);
        assert_eq!(*parse_range("2:2:1").unwrap(), [2.0]);
        for bad in ["1:0:0.1", "0:1:0", "0:1", "a:1:0.1", "0:1:-1"] {
            assert!(parse_range(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[medium]\nd_plus = 4\nd_minsu = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("[mediun]\nd_plus = 4\n").is_err());
        let cfg: RunConfig = toml::from_str("[medium]\nd_plus = 4.0\n[sim]\nscheme = \"euler_transformed\"\n").unwrap();
        assert_eq!(cfg.medium.d_plus, Some(4.0));
        assert_eq!(cfg.sim.scheme, Some(Scheme::EulerTransformed));
    }

    #[test]
    fn flags_override_file_values() {
        assert_eq!(pick(Some(2), Some(3), 4), 2);
        assert_eq!(pick(None, Some(3), 4), 3);
        assert_eq!(pick(None, None, 4), 4);
        assert!(require::<f64>(None, None, "d-plus").is_err());
    }
}
