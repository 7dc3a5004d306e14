//! Deterministic broadcast simulation: channel, adversaries, attack suite
//! and the four-UAS swarm.

mod adversary;
mod channel;
mod scenario;
mod suite;
mod swarm;

pub use adversary::{
    build_adversary, Adversary, AdversaryConfig, AttackContext, DelayedForger, GhostFleet, Replayer,
};
pub use channel::{run_channel, ChannelConfig, Delivery, Engine, Origin, SimChannel, Transmission};
pub use scenario::{MissionConfig, Scenario, BUILTIN_SCENARIOS};
pub use suite::{run_attack_suite, MessageRecord, SuiteReport, VerdictEvent};
pub use swarm::{
    choose_velocity, max_deviation, run_swarm, AuthMode, Neighbour, SwarmParams, SwarmReport, SwarmRun,
};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::provision::{KeysFile, ProvisionError};
use crate::transmitter::{
    Clock, MemoryChannel, SimClock, TelemetrySample, Transmitter, TxConfig, TxError, TxOutcome,
};
use crate::uss::UssError;

/// Simulated mission epoch (2023-11-14T22:13:20Z).
pub const SIM_EPOCH_MS: u64 = 1_700_000_000_000;

pub(crate) const M_PER_DEG: f64 = 111_320.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Provision(#[from] ProvisionError),
    #[error(transparent)]
    Tx(#[from] TxError),
    #[error(transparent)]
    Uss(#[from] UssError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 32 bytes for the named sub-stream of a run seed.
pub fn derive_seed(seed: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(label.as_bytes());
    h.finalize().into()
}

/// Flat-earth mapping between local metres (x east, y north) and degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geo {
    pub lat0: f64,
    pub lon0: f64,
}

impl Default for Geo {
    fn default() -> Self {
        Self {
            lat0: 37.2296,
            lon0: -80.4139,
        }
    }
}

impl Geo {
    fn m_per_deg_lon(&self) -> f64 {
        M_PER_DEG * self.lat0.to_radians().cos()
    }

    pub fn to_latlon(&self, p: [f64; 2]) -> (f64, f64) {
        (
            self.lat0 + p[1] / M_PER_DEG,
            self.lon0 + p[0] / self.m_per_deg_lon(),
        )
    }

    pub fn to_local(&self, lat: f64, lon: f64) -> [f64; 2] {
        [
            (lon - self.lon0) * self.m_per_deg_lon(),
            (lat - self.lat0) * M_PER_DEG,
        ]
    }
}

/// A transmitter on its own simulated clock.
pub(crate) struct SimSender {
    pub uas: String,
    tx: Transmitter,
    clock: SimClock,
}

impl SimSender {
    pub fn new(keys: KeysFile, t0_ms: u64) -> Result<Self, SimError> {
        let uas = keys.uas_id.clone();
        let mut tx = Transmitter::new(
            keys,
            TxConfig {
                guard_ms: 100,
                fallback_intervals: Some(0),
            },
        )?;
        tx.start(t0_ms);
        Ok(Self {
            uas,
            tx,
            clock: SimClock::new(t0_ms),
        })
    }

    /// Packs for every interval that starts before `to_ms`.
    pub fn due(
        &mut self,
        to_ms: u64,
        telemetry: &mut dyn FnMut(u64) -> TelemetrySample,
    ) -> Vec<(u64, Vec<u8>)> {
        let mut out = Vec::new();
        while !self.tx.finished() && self.tx.next_start_ms() < to_ms {
            let mut ch = MemoryChannel::default();
            let mut src = |t: u64| Ok(telemetry(t));
            self.clock.sleep_until(self.tx.next_start_ms());
            let Some(entry) = self.tx.step(&self.clock, &mut src, &mut ch) else {
                break;
            };
            if entry.outcome == TxOutcome::Sent {
                out.push((entry.t_ms, ch.sent.pop().expect("sent entry has a pack")));
            }
        }
        out
    }
}
