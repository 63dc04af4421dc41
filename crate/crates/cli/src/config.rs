//! Run configuration: defaults, then a key=value file, then `CMPKIT_*`
//! environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cmpkit_core::constants::YIG_SATURATION_FIELD_T;
use cmpkit_core::fit::FitOptions;
use cmpkit_core::PhysicalConstants;

pub const ENV_PREFIX: &str = "CMPKIT_";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub constants: PhysicalConstants,
    /// μ₀Mₛ used by the FMR, tesla.
    pub saturation_field: f64,
    pub fit: FitOptions,
    pub out_dir: Option<PathBuf>,
    pub verbosity: u8,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            constants: PhysicalConstants::default(),
            saturation_field: YIG_SATURATION_FIELD_T,
            fit: FitOptions::default(),
            out_dir: None,
            verbosity: 0,
        }
    }
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got `{raw}`", n + 1);
        };
        out.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(out)
}

fn positive(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().with_context(|| format!("{key}: not a number: `{v}`"))?;
    if !(x.is_finite() && x > 0.0) {
        bail!("{key} must be positive, got {x}");
    }
    Ok(x)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "gamma" | "gyromagnetic_ratio" => self.constants.gyromagnetic_ratio = positive(key, value)?,
            "ms" | "saturation_field" => self.saturation_field = positive(key, value)?,
            "ns" | "spin_density" => self.constants.spin_density = positive(key, value)?,
            "mu" | "moment_per_site" => self.constants.moment_per_site = positive(key, value)?,
            "g_l" | "lande_g" => self.constants.lande_g = positive(key, value)?,
            "max_iterations" => {
                self.fit.max_iterations = value.parse().with_context(|| format!("{key}: `{value}`"))?
            }
            "xtol" => self.fit.xtol = positive(key, value)?,
            "gtol" => self.fit.gtol = positive(key, value)?,
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "verbosity" => self.verbosity = value.parse().with_context(|| format!("{key}: `{value}`"))?,
            other => bail!("unknown configuration key `{other}`"),
        }
        Ok(())
    }

    /// Applies a config file and the environment on top of the defaults.
    pub fn load(file: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            for (k, v) in parse_kv(&text)? {
                cfg.set(&k, &v).with_context(|| format!("in {}", path.display()))?;
            }
        }
        let mut vars: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_ascii_lowercase(), v)))
            .collect();
        vars.sort();
        for (k, v) in vars {
            cfg.set(&k, &v).with_context(|| format!("environment variable {ENV_PREFIX}{}", k.to_ascii_uppercase()))?;
        }
        Ok(cfg)
    }

    /// Creates the output directory and checks it accepts files.
    pub fn prepare_out_dir(&self) -> Result<()> {
        if let Some(dir) = &self.out_dir {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let probe = dir.join(".cmpkit-write-test");
            std::fs::write(&probe, b"").with_context(|| format!("output directory {} is not writable", dir.display()))?;
            let _ = std::fs::remove_file(probe);
        }
        Ok(())
    }

    /// Resolves relative output paths against the output directory.
    pub fn output_path(&self, p: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\ngamma = 27.5\nms=0.18\n\nmax_iterations = 50 # inline\n").unwrap();
        let env = vec![("CMPKIT_MS".to_string(), "0.2".to_string()), ("HOME".to_string(), "/x".to_string())];
        let cfg = RunConfig::load(Some(&path), env).unwrap();
        assert_eq!(cfg.constants.gyromagnetic_ratio, 27.5);
        assert_eq!(cfg.saturation_field, 0.2);
        assert_eq!(cfg.fit.max_iterations, 50);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = RunConfig::default();
        assert!(cfg.set("gamma", "-1").is_err());
        assert!(cfg.set("ns", "abc").is_err());
        assert!(cfg.set("colour", "red").is_err());
        assert!(parse_kv("no equals sign").is_err());
    }

    #[test]
    fn relative_outputs_go_to_out_dir() {
        let cfg = RunConfig { out_dir: Some(PathBuf::from("/tmp/o")), ..RunConfig::default() };
        assert_eq!(cfg.output_path(Path::new("a.csv")), PathBuf::from("/tmp/o/a.csv"));
        assert_eq!(cfg.output_path(Path::new("/abs.csv")), PathBuf::from("/abs.csv"));
    }
}
