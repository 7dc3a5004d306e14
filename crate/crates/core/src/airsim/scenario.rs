use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdversaryConfig, ChannelConfig, SimError, SwarmParams};

/// The shipped scenario corpus, by id.
pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    ("honest_lossy", include_str!("../../scenarios/honest_lossy.toml")),
    ("replay", include_str!("../../scenarios/replay.toml")),
    (
        "ghost_fleet_5",
        include_str!("../../scenarios/ghost_fleet_5.toml"),
    ),
    (
        "ghost_fleet_10",
        include_str!("../../scenarios/ghost_fleet_10.toml"),
    ),
    (
        "delayed_forgery",
        include_str!("../../scenarios/delayed_forgery.toml"),
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    /// Chain length n. Intervals 1..n-1 are authenticated.
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default = "default_t_int")]
    pub t_int_ms: u64,
    #[serde(default = "default_d")]
    pub d: u32,
    /// Legitimate UAS flying the mission.
    #[serde(default = "default_real")]
    pub real_uas: usize,
}

fn default_n() -> u64 {
    61
}
fn default_t_int() -> u64 {
    1000
}
fn default_d() -> u32 {
    1
}
fn default_real() -> usize {
    1
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            t_int_ms: default_t_int(),
            d: default_d(),
            real_uas: default_real(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub mission: MissionConfig,
    /// `seed` here is ignored; runs take their own seed.
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub adversary: Option<AdversaryConfig>,
    #[serde(default)]
    pub swarm: SwarmParams,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn builtin(id: &str) -> Result<Self, SimError> {
        let (_, text) = BUILTIN_SCENARIOS
            .iter()
            .find(|(k, _)| *k == id)
            .ok_or_else(|| SimError::Config(format!("unknown scenario {id:?}")))?;
        Self::from_toml(text)
    }

    /// A shipped id, or a path to a TOML file.
    pub fn load(id_or_path: &str) -> Result<Self, SimError> {
        if BUILTIN_SCENARIOS.iter().any(|(k, _)| *k == id_or_path) {
            return Self::builtin(id_or_path);
        }
        let p = Path::new(id_or_path);
        if p.exists() {
            return Self::from_toml(&std::fs::read_to_string(p)?);
        }
        Err(SimError::Config(format!(
            "{id_or_path:?} is neither a shipped scenario nor a file"
        )))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.channel.validate()?;
        let m = &self.mission;
        if m.n < 2 || m.t_int_ms == 0 || m.d == 0 {
            return Err(SimError::Config(
                "mission needs n >= 2, t_int_ms > 0, d >= 1".into(),
            ));
        }
        self.swarm.validate()
    }
}
