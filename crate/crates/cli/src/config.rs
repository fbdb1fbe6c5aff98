//! `key = value` run configuration. Command-line flags take precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use shv_core::{formats, Error, Result};

const KEYS: [&str; 26] = [
    "seed",
    "tracker",
    "params",
    "width",
    "height",
    "grid.theta_min",
    "grid.theta_max",
    "grid.theta_step",
    "grid.r_min",
    "grid.r_max",
    "grid.r_step",
    "kalman.q_theta",
    "kalman.q_r",
    "kalman.m_theta",
    "kalman.m_r",
    "kalman.p0_theta_dot",
    "kalman.p0_r_dot",
    "accept.bd_pen",
    "accept.ln_pen",
    "window.width",
    "window.height",
    "window.stride_x",
    "window.stride_y",
    "window.band_start",
    "window.band_end",
    "detector.threshold",
];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    origin: String,
    values: BTreeMap<String, (usize, String)>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, format!("expected `key = value`, got {line:?}")))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::parse(origin, i + 1, format!("unknown key {k:?}")));
            }
            if values.insert(k.to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::parse(origin, i + 1, format!("duplicate key {k:?}")));
            }
        }
        Ok(RunConfig { origin: origin.to_string(), values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::parse(&formats::read_text(p)?, &p.display().to_string()),
        }
    }

    /// `flag`, else the configured value, else `None`.
    pub fn get<V: FromStr>(&self, flag: Option<V>, key: &str) -> Result<Option<V>>
    where
        V::Err: std::fmt::Display,
    {
        debug_assert!(KEYS.contains(&key), "{key}");
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e: V::Err| Error::parse(&self.origin, *line, format!("{key}: {e}"))),
        }
    }

    pub fn or<V: FromStr>(&self, flag: Option<V>, key: &str, default: V) -> Result<V>
    where
        V::Err: std::fmt::Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        self.get(flag, key)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win() {
        let c = RunConfig::parse("seed = 4\nwidth = 200 # px\n", "c").unwrap();
        assert_eq!(c.or::<u64>(None, "seed", 0).unwrap(), 4);
        assert_eq!(c.or(Some(9u64), "seed", 0).unwrap(), 9);
        assert_eq!(c.or::<usize>(None, "height", 120).unwrap(), 120);
        assert_eq!(c.or::<usize>(None, "width", 0).unwrap(), 200);
    }

    #[test]
    fn errors_name_the_line() {
        let e = RunConfig::parse("seed = 1\nbogus = 2\n", "run.cfg").unwrap_err();
        assert_eq!(e.to_string(), "run.cfg:2: unknown key \"bogus\"");
        let c = RunConfig::parse("\nseed = x\n", "run.cfg").unwrap();
        assert!(c.or::<u64>(None, "seed", 0).unwrap_err().to_string().starts_with("run.cfg:2: seed:"));
    }
}
