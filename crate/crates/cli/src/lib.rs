//! Shared plumbing for the command-line tools.

use std::path::Path;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use ini::Ini;

/// An optional INI file. A missing default path is treated as empty; a
/// missing explicit path is an error.
#[derive(Debug, Default)]
pub struct Config {
    ini: Ini,
}

impl Config {
    pub fn load(path: &Path, explicit: bool) -> Result<Self> {
        if !path.exists() {
            if explicit {
                bail!("config file {} not found", path.display());
            }
            return Ok(Self::default());
        }
        let ini = Ini::load_from_file(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self { ini })
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.ini
            .get_from(Some(section), key)
            .map(str::trim)
            .filter(|v| !v.is_empty())
    }

    pub fn parse<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("[{section}] {key} = {v:?}: {e}"))
            })
            .transpose()
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Epoch milliseconds, or `now`.
pub fn parse_time_ms(s: &str) -> Result<u64> {
    match s.trim() {
        "now" => Ok(now_ms()),
        v => v
            .parse()
            .with_context(|| format!("bad time {v:?}; want epoch ms or \"now\"")),
    }
}

pub fn init_logging(verbose: bool) {
    let level = if verbose { "debug" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_millis()
        .try_init();
}
