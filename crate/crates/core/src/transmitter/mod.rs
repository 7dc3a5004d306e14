//! Per-interval beacon construction and the windowed transmit loop.

mod bench;
mod io;

pub use bench::{bench, BenchReport, MIN_ITERATIONS};
pub use io::{
    Channel, Clock, HexChannel, MemoryChannel, ScriptTelemetry, SimClock, StaticTelemetry, SystemClock,
    TelemetrySample, TelemetrySource, UdpChannel, DEFAULT_UDP_PORT,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::odid::{
    build_auth_payload, encode_pack, paginate_auth, AsciiId, AuthBundle, BasicIdMsg, CodecError, IdType,
    LocationMsg, MessagePack, OperationalStatus, OperatorIdMsg, OperatorLocationType, SystemMsg, UaType,
};
use crate::provision::KeysFile;
use crate::tesla::{compute_mac, derive_mac_key, ChainParams, TeslaError};

/// Auth page timestamps count seconds from 2019-01-01T00:00:00Z.
pub const AUTH_EPOCH_UNIX_S: u64 = 1_546_300_800;

#[derive(Debug, Error)]
pub enum TxError {
    #[error("no key for interval {interval} (usable intervals 1..={last})")]
    KeyOutOfRange { interval: u64, last: u64 },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Tesla(#[from] TeslaError),
    #[error("telemetry: {0}")]
    Telemetry(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Static identity fields carried in every pack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub uas_id: AsciiId,
    pub operator_id: AsciiId,
    pub id_type: IdType,
    pub ua_type: UaType,
}

impl Identity {
    pub fn new(uas_id: &str, operator_id: &str) -> Result<Self, TxError> {
        Ok(Self {
            uas_id: AsciiId::new(uas_id)?,
            operator_id: AsciiId::new(operator_id)?,
            id_type: IdType::Serial,
            ua_type: UaType::Multirotor,
        })
    }

    pub fn from_keys(keys: &KeysFile) -> Result<Self, TxError> {
        Self::new(&keys.uas_id, &keys.operator_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxConfig {
    /// Tail guard E: no transmission in the last `guard_ms` of an interval.
    pub guard_ms: u64,
    /// Plain packs to send after the keys run out; `None` means forever.
    pub fallback_intervals: Option<u64>,
}

impl Default for TxConfig {
    fn default() -> Self {
        Self {
            guard_ms: 100,
            fallback_intervals: Some(0),
        }
    }
}

/// Build the four data frames from a telemetry sample.
pub fn data_frames(
    sample: &TelemetrySample,
    ids: &Identity,
) -> (BasicIdMsg, LocationMsg, SystemMsg, OperatorIdMsg) {
    let basic = BasicIdMsg {
        id_type: ids.id_type,
        ua_type: ids.ua_type,
        uas_id: ids.uas_id.clone(),
    };
    let loc = LocationMsg {
        status: OperationalStatus::Airborne,
        direction_deg: (sample.direction_deg.rem_euclid(360.0).round() as u16) % 360,
        speed_mps: sample.speed_mps,
        vspeed_mps: sample.vspeed_mps,
        lat_deg: sample.lat_deg,
        lon_deg: sample.lon_deg,
        alt_m: sample.alt_m,
        timestamp_ds: ((sample.t_ms % 3_600_000) / 100) as u16,
    };
    let sys = SystemMsg {
        operator_location_type: OperatorLocationType::LiveGnss,
        operator_lat_deg: sample.operator_lat_deg,
        operator_lon_deg: sample.operator_lon_deg,
    };
    let op = OperatorIdMsg {
        operator_id: ids.operator_id.clone(),
    };
    (basic, loc, sys, op)
}

pub fn auth_timestamp(t_ms: u64) -> u32 {
    (t_ms / 1000)
        .saturating_sub(AUTH_EPOCH_UNIX_S)
        .min(u32::MAX as u64) as u32
}

/// Authenticated pack for interval `i`: MAC under `K'_i`, disclosing
/// `K_{i-d}` (or `K_0` while `i <= d`).
pub fn build_beacon(
    i: u64,
    sample: &TelemetrySample,
    keys: &KeysFile,
    ids: &Identity,
) -> Result<MessagePack, TxError> {
    let last = keys.last_interval();
    let out_of_range = TxError::KeyOutOfRange { interval: i, last };
    if i == 0 || i > last || i > u32::MAX as u64 {
        return Err(out_of_range);
    }
    let k_i = keys.key(i).ok_or(out_of_range)?;
    let disclosed = keys
        .key(i.saturating_sub(keys.d as u64))
        .expect("index below i is present");
    let (basic, loc, sys, op) = data_frames(sample, ids);
    let payload = build_auth_payload(i as u32, &basic, &loc, &sys, &op)?;
    let mac = compute_mac(&derive_mac_key(k_i.as_bytes())?, payload.as_bytes())?;
    let bundle = AuthBundle {
        interval: i as u32,
        mac,
        disclosed_key: *disclosed,
    };
    Ok(MessagePack {
        basic_id: basic,
        location: loc,
        system: sys,
        operator_id: op,
        auth: Some(paginate_auth(&bundle, auth_timestamp(sample.t_ms))),
    })
}

/// Pack without authentication pages.
pub fn build_plain(sample: &TelemetrySample, ids: &Identity) -> MessagePack {
    let (basic, loc, sys, op) = data_frames(sample, ids);
    MessagePack {
        basic_id: basic,
        location: loc,
        system: sys,
        operator_id: op,
        auth: None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TxOutcome {
    Sent,
    /// Built too late for the permitted window and dropped.
    Skipped {
        ready_ms: u64,
    },
    ChannelError {
        message: String,
    },
    BuildError {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub interval: u64,
    /// Send time, or the time the interval was abandoned.
    pub t_ms: u64,
    pub authenticated: bool,
    /// Index of the key disclosed in this pack.
    pub disclosed_interval: Option<u64>,
    #[serde(flatten)]
    pub outcome: TxOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmitLog {
    pub t0_ms: u64,
    pub entries: Vec<LogEntry>,
}

impl TransmitLog {
    pub fn sent(&self) -> impl Iterator<Item = &LogEntry> {
        self.entries.iter().filter(|e| e.outcome == TxOutcome::Sent)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("interval {interval} sent at {t_ms} outside its permitted window")]
    OutsideWindow { interval: u64, t_ms: u64 },
    #[error("interval counter {interval} not strictly increasing")]
    CounterOrder { interval: u64 },
    #[error("key {disclosed} disclosed during interval {interval}, before interval {due}")]
    EarlyDisclosure { interval: u64, disclosed: u64, due: u64 },
}

/// Check a log against the window, counter and disclosure rules.
pub fn audit_log(log: &TransmitLog, t_int_ms: u64, d: u32, guard_ms: u64) -> Result<(), AuditError> {
    let params = ChainParams {
        t_int_ms,
        d,
        n: u32::MAX,
        t0_ms: log.t0_ms,
    };
    let mut prev = 0u64;
    for e in &log.entries {
        if e.interval <= prev {
            return Err(AuditError::CounterOrder { interval: e.interval });
        }
        prev = e.interval;
        if e.outcome != TxOutcome::Sent {
            continue;
        }
        let start = params.interval_start(e.interval);
        if e.t_ms < start || e.t_ms - start >= t_int_ms.saturating_sub(guard_ms) {
            return Err(AuditError::OutsideWindow {
                interval: e.interval,
                t_ms: e.t_ms,
            });
        }
        if let Some(j) = e.disclosed_interval {
            let due = j + d as u64;
            // K_0 is public, so disclosing it early is harmless
            if j > 0 && e.interval < due {
                return Err(AuditError::EarlyDisclosure {
                    interval: e.interval,
                    disclosed: j,
                    due,
                });
            }
        }
    }
    Ok(())
}

/// Transmit state machine. Interval `i` runs from `t0 + (i-1)·T`; the
/// counter follows wall time, so late or skipped intervals are never resent.
pub struct Transmitter {
    keys: KeysFile,
    ids: Identity,
    cfg: TxConfig,
    next_interval: u64,
    log: TransmitLog,
    started: bool,
}

impl Transmitter {
    pub fn new(keys: KeysFile, cfg: TxConfig) -> Result<Self, TxError> {
        keys.params()?;
        if cfg.guard_ms >= keys.t_int_ms {
            return Err(TxError::InvalidConfig(format!(
                "guard {} ms must be below the interval {} ms",
                cfg.guard_ms, keys.t_int_ms
            )));
        }
        let ids = Identity::from_keys(&keys)?;
        Ok(Self {
            keys,
            ids,
            cfg,
            next_interval: 1,
            log: TransmitLog::default(),
            started: false,
        })
    }

    pub fn keys(&self) -> &KeysFile {
        &self.keys
    }

    pub fn log(&self) -> &TransmitLog {
        &self.log
    }

    pub fn into_log(self) -> TransmitLog {
        self.log
    }

    pub fn t0_ms(&self) -> Option<u64> {
        self.started.then_some(self.log.t0_ms)
    }

    fn params(&self) -> ChainParams {
        ChainParams {
            t_int_ms: self.keys.t_int_ms,
            d: self.keys.d,
            n: self.keys.n,
            t0_ms: self.log.t0_ms,
        }
    }

    /// Fix t0. A keys file with a nonzero `t0_ms` resumes that mission.
    pub fn start(&mut self, now_ms: u64) -> u64 {
        if !self.started {
            let t0 = if self.keys.t0_ms != 0 {
                self.keys.t0_ms
            } else {
                now_ms
            };
            self.log.t0_ms = t0;
            self.keys.t0_ms = t0;
            self.started = true;
        }
        self.log.t0_ms
    }

    /// Interval the next `step` will handle (at the earliest).
    pub fn next_interval(&self) -> u64 {
        self.next_interval
    }

    /// Start of the next interval; meaningful once started.
    pub fn next_start_ms(&self) -> u64 {
        self.params().interval_start(self.next_interval)
    }

    pub fn finished(&self) -> bool {
        let last = self.keys.last_interval();
        match self.cfg.fallback_intervals {
            None => false,
            Some(extra) => self.next_interval > last + extra,
        }
    }

    /// Handle the next interval: wait for its start, build, then send if
    /// still inside the window. Returns `None` once finished.
    pub fn step<C: Clock + ?Sized, T: TelemetrySource + ?Sized, Ch: Channel + ?Sized>(
        &mut self,
        clock: &C,
        telemetry: &mut T,
        channel: &mut Ch,
    ) -> Option<&LogEntry> {
        if self.finished() {
            return None;
        }
        if !self.started {
            self.start(clock.now_ms());
        }
        let params = self.params();
        let t = params.t_int_ms;
        let mut i = self.next_interval;
        clock.sleep_until(params.interval_start(i));

        // fell behind by whole intervals: jump to the current one
        let now = clock.now_ms();
        let current = now.saturating_sub(params.t0_ms) / t + 1;
        if current > i {
            i = current;
        }
        self.next_interval = i + 1;
        if let Some(extra) = self.cfg.fallback_intervals {
            if i > self.keys.last_interval() + extra {
                // the jump ran past the last interval we may use
                return None;
            }
        }
        let start = params.interval_start(i);
        let deadline = start + t - self.cfg.guard_ms;
        let authenticated = i <= self.keys.last_interval();
        let disclosed = authenticated.then(|| i.saturating_sub(params.d as u64));

        let built = telemetry.sample(now).and_then(|s| {
            let pack = if authenticated {
                build_beacon(i, &s, &self.keys, &self.ids)?
            } else {
                build_plain(&s, &self.ids)
            };
            Ok(encode_pack(&pack)?)
        });
        let ready = clock.now_ms();
        let outcome = match built {
            Err(e) => TxOutcome::BuildError {
                message: e.to_string(),
            },
            Ok(_) if ready >= deadline => {
                log::info!("interval {i}: ready at {ready}, window closed at {deadline}; dropped");
                TxOutcome::Skipped { ready_ms: ready }
            }
            Ok(bytes) => match channel.send(&bytes) {
                Ok(()) => TxOutcome::Sent,
                Err(e) => {
                    log::warn!("interval {i}: channel error {e}");
                    TxOutcome::ChannelError {
                        message: e.to_string(),
                    }
                }
            },
        };
        self.log.entries.push(LogEntry {
            interval: i,
            t_ms: ready,
            authenticated,
            disclosed_interval: disclosed,
            outcome,
        });
        self.log.entries.last()
    }

    /// Run until finished. `on_start` receives t0 once, before the first
    /// pack goes out.
    pub fn run<C: Clock + ?Sized, T: TelemetrySource + ?Sized, Ch: Channel + ?Sized>(
        &mut self,
        clock: &C,
        telemetry: &mut T,
        channel: &mut Ch,
        mut on_start: impl FnMut(u64),
    ) -> &TransmitLog {
        if !self.started {
            on_start(self.start(clock.now_ms()));
        }
        while self.step(clock, telemetry, channel).is_some() {}
        &self.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odid::{decode_pack, PACK_LEN, PLAIN_PACK_LEN};
    use crate::provision::{plan_mission, MissionPlan, SealedSeed};
    use crate::tesla::mac_matches;

    const T0: u64 = 1_700_000_000_000;

    fn keys(intervals: u64) -> KeysFile {
        let plan = MissionPlan {
            operator_id: "OP-1".into(),
            uas_id: "UAS-1".into(),
            start_ms: T0,
            end_ms: T0 + intervals * 1000,
            t_int_ms: 1000,
            d: 1,
        };
        plan_mission(&plan, &SealedSeed::from_bytes([3; 32]))
            .unwrap()
            .keys_file
    }

    fn sample() -> TelemetrySample {
        TelemetrySample::default()
    }

    #[test]
    fn first_interval_discloses_k0() {
        let k = keys(5);
        let ids = Identity::from_keys(&k).unwrap();
        let p = build_beacon(1, &sample(), &k, &ids).unwrap();
        let b = p.auth_bundle().unwrap().unwrap();
        assert_eq!(b.interval, 1);
        assert_eq!(b.disclosed_key, k.keys[0]);
        let payload = p.auth_payload(1).unwrap();
        let mk = derive_mac_key(k.keys[1].as_bytes()).unwrap();
        assert!(mac_matches(&mk, payload.as_bytes(), &b.mac));
    }

    #[test]
    fn beacon_index_bounds() {
        let k = keys(5);
        let ids = Identity::from_keys(&k).unwrap();
        assert!(build_beacon(0, &sample(), &k, &ids).is_err());
        assert!(build_beacon(4, &sample(), &k, &ids).is_ok());
        assert!(matches!(
            build_beacon(5, &sample(), &k, &ids),
            Err(TxError::KeyOutOfRange { interval: 5, last: 4 })
        ));
    }

    #[test]
    fn ten_authenticated_beacons() {
        let clock = SimClock::new(T0);
        let mut ch = MemoryChannel::default();
        let mut tx = Transmitter::new(keys(11), TxConfig::default()).unwrap();
        let mut started = None;
        let log = tx
            .run(&clock, &mut StaticTelemetry(sample()), &mut ch, |t| {
                started = Some(t)
            })
            .clone();
        assert_eq!(started, Some(T0));
        assert_eq!(log.sent().count(), 10);
        assert!(log.entries.iter().all(|e| e.authenticated));
        assert_eq!(ch.sent.len(), 10);
        assert!(ch.sent.iter().all(|p| p.len() == PACK_LEN));
        audit_log(&log, 1000, 1, 100).unwrap();
    }

    #[test]
    fn late_build_skips_but_counter_advances() {
        let clock = SimClock::new(T0);
        let slow = clock.clone();
        let mut telemetry = move |t: u64| {
            // 950 ms construction delay in interval 3 only
            if t == T0 + 2000 {
                slow.advance(950);
            }
            Ok(TelemetrySample {
                t_ms: t,
                ..Default::default()
            })
        };
        let mut ch = MemoryChannel::default();
        let mut tx = Transmitter::new(keys(6), TxConfig::default()).unwrap();
        let log = tx.run(&clock, &mut telemetry, &mut ch, |_| {}).clone();
        let intervals: Vec<_> = log.entries.iter().map(|e| e.interval).collect();
        assert_eq!(intervals, vec![1, 2, 3, 4, 5]);
        assert_eq!(log.entries[2].outcome, TxOutcome::Skipped { ready_ms: T0 + 2950 });
        assert_eq!(ch.sent.len(), 4);
        audit_log(&log, 1000, 1, 100).unwrap();
    }

    #[test]
    fn delay_spanning_intervals_jumps_counter() {
        let clock = SimClock::new(T0);
        let slow = clock.clone();
        let mut telemetry = move |t: u64| {
            if t == T0 + 1000 {
                slow.advance(2300);
            }
            Ok(TelemetrySample {
                t_ms: t,
                ..Default::default()
            })
        };
        let mut ch = MemoryChannel::default();
        let mut tx = Transmitter::new(keys(8), TxConfig::default()).unwrap();
        let log = tx.run(&clock, &mut telemetry, &mut ch, |_| {}).clone();
        let intervals: Vec<_> = log.entries.iter().map(|e| e.interval).collect();
        assert_eq!(intervals, vec![1, 2, 4, 5, 6, 7]);
        audit_log(&log, 1000, 1, 100).unwrap();
    }

    #[test]
    fn fallback_after_keys_exhausted() {
        let clock = SimClock::new(T0);
        let mut ch = MemoryChannel::default();
        let cfg = TxConfig {
            fallback_intervals: Some(3),
            ..Default::default()
        };
        let mut tx = Transmitter::new(keys(4), cfg).unwrap();
        let log = tx
            .run(&clock, &mut StaticTelemetry(sample()), &mut ch, |_| {})
            .clone();
        assert_eq!(log.entries.len(), 6);
        assert_eq!(ch.sent.iter().filter(|p| p.len() == PACK_LEN).count(), 3);
        for p in &ch.sent[3..] {
            assert_eq!(p.len(), PLAIN_PACK_LEN);
            let d = decode_pack(p).unwrap();
            assert_eq!(d.frame_count(), 4);
            assert!(d.auth.is_none());
        }
        assert!(log.entries[3..]
            .iter()
            .all(|e| !e.authenticated && e.disclosed_interval.is_none()));
    }

    #[test]
    fn audit_catches_violations() {
        let sent = |interval, t_ms| LogEntry {
            interval,
            t_ms,
            authenticated: true,
            disclosed_interval: Some(interval - 1),
            outcome: TxOutcome::Sent,
        };
        let ok = TransmitLog {
            t0_ms: 0,
            entries: vec![sent(1, 0), sent(2, 1899)],
        };
        assert!(audit_log(&ok, 1000, 1, 100).is_ok());
        let late = TransmitLog {
            t0_ms: 0,
            entries: vec![sent(1, 900)],
        };
        assert!(matches!(
            audit_log(&late, 1000, 1, 100),
            Err(AuditError::OutsideWindow { .. })
        ));
        let repeat = TransmitLog {
            t0_ms: 0,
            entries: vec![sent(2, 1000), sent(2, 1000)],
        };
        assert!(matches!(
            audit_log(&repeat, 1000, 1, 100),
            Err(AuditError::CounterOrder { .. })
        ));
        let mut early = sent(3, 2000);
        early.disclosed_interval = Some(3);
        let early = TransmitLog {
            t0_ms: 0,
            entries: vec![early],
        };
        assert!(matches!(
            audit_log(&early, 1000, 1, 100),
            Err(AuditError::EarlyDisclosure { .. })
        ));
    }

    #[test]
    fn guard_must_fit_interval() {
        let cfg = TxConfig {
            guard_ms: 1000,
            ..Default::default()
        };
        assert!(Transmitter::new(keys(3), cfg).is_err());
    }

    #[test]
    fn timestamps() {
        assert_eq!(auth_timestamp(AUTH_EPOCH_UNIX_S * 1000 + 1999), 1);
        assert_eq!(auth_timestamp(0), 0);
        let (_, loc, _, _) = data_frames(
            &TelemetrySample {
                t_ms: 3_600_000 * 5 + 1234,
                ..Default::default()
            },
            &Identity::new("U", "O").unwrap(),
        );
        assert_eq!(loc.timestamp_ds, 12);
    }
}
