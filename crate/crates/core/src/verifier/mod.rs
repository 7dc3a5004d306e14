//! Observer-side verification: buffer packs until their key is disclosed,
//! then check MAC, chain, USS registration and timing.

mod ledger;

pub use ledger::{LedgerEntry, ReplayLedger};

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::odid::{decode_pack, AuthBundle, AUTH_PAYLOAD_LEN, PACK_HEADER_LEN};
use crate::tesla::{
    backdating_check, derive_mac_key, mac_matches, safety_condition, verify_commitment, ChainKey, ChainParams,
};
use crate::uss::{MissionService, ObserverQuery, QueryResponse, QueryStatus};

pub const DEFAULT_MAX_SKEW_MS: u64 = 10;
pub const DEFAULT_EXPIRY_MS: u64 = 24 * 3600 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pending,
    Authentic,
    MacMismatch,
    ChainMismatch,
    IntervalViolation,
    ReplayDetected,
    UnknownMission,
    RevokedMission,
    OperatorMismatch,
    Unauthenticated,
    Malformed,
    Expired,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Pending
    }
}

/// One line of verifier output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub msg_id: u64,
    pub uas_id: Option<String>,
    pub interval: Option<u64>,
    pub arrival_ms: u64,
    pub outcome: Outcome,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifierConfig {
    pub observer_id: String,
    pub max_skew_ms: u64,
    pub expiry_ms: u64,
    pub replay_log: Option<PathBuf>,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            observer_id: "observer".into(),
            max_skew_ms: DEFAULT_MAX_SKEW_MS,
            expiry_ms: DEFAULT_EXPIRY_MS,
            replay_log: None,
        }
    }
}

#[derive(Debug, Clone)]
struct PendingMsg {
    id: u64,
    uas_id: String,
    operator_id: String,
    interval: u64,
    arrival_ms: u64,
    payload: [u8; AUTH_PAYLOAD_LEN],
    bundle: AuthBundle,
}

impl PendingMsg {
    fn verdict(&self, outcome: Outcome, detail: impl Into<String>) -> Verdict {
        Verdict {
            msg_id: self.id,
            uas_id: Some(self.uas_id.clone()),
            interval: Some(self.interval),
            arrival_ms: self.arrival_ms,
            outcome,
            detail: detail.into(),
        }
    }

    fn mac_ok(&self, k_i: &ChainKey) -> bool {
        let mk = derive_mac_key(k_i.as_bytes()).expect("32-byte key");
        mac_matches(&mk, &self.payload, &self.bundle.mac)
    }
}

/// Keys disclosed per UAS: pack interval -> disclosed keys seen with it.
type Disclosures = BTreeMap<u64, Vec<ChainKey>>;

#[derive(Default)]
struct Buffer {
    msgs: BTreeMap<u64, PendingMsg>,
    disclosures: HashMap<String, Disclosures>,
    generation: u64,
}

enum Settle {
    Done(Outcome, String),
    Wait,
}

/// Parsed form of an accepted pack, for callers that need its contents.
#[derive(Debug, Clone)]
pub struct Received {
    pub verdict: Verdict,
    pub pack: Option<crate::odid::MessagePack>,
}

pub struct Verifier<S> {
    cfg: VerifierConfig,
    uss: S,
    buffer: Mutex<Buffer>,
    ledger: Mutex<ReplayLedger>,
    next_id: AtomicU64,
}

impl<S: MissionService> Verifier<S> {
    pub fn new(uss: S, cfg: VerifierConfig) -> std::io::Result<Self> {
        let ledger = match &cfg.replay_log {
            Some(p) => ReplayLedger::with_file(p)?,
            None => ReplayLedger::in_memory(),
        };
        Ok(Self {
            cfg,
            uss,
            buffer: Mutex::new(Buffer::default()),
            ledger: Mutex::new(ledger),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.cfg
    }

    pub fn pending_count(&self) -> usize {
        self.buffer.lock().unwrap().msgs.len()
    }

    /// Parse and park a pack. Returns `pending`, or a terminal verdict for
    /// packs that can never verify.
    pub fn ingest(&self, raw: &[u8], arrival_ms: u64) -> Received {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let terminal = |uas: Option<String>, interval, outcome, detail: String| Verdict {
            msg_id: id,
            uas_id: uas,
            interval,
            arrival_ms,
            outcome,
            detail,
        };
        let pack = match decode_pack(raw) {
            Ok(p) => p,
            Err(e) => {
                return Received {
                    verdict: terminal(None, None, Outcome::Malformed, e.to_string()),
                    pack: None,
                }
            }
        };
        let uas = pack.basic_id.uas_id.as_str().to_owned();
        let bundle = match pack.auth_bundle() {
            None => {
                return Received {
                    verdict: terminal(
                        Some(uas),
                        None,
                        Outcome::Unauthenticated,
                        "no authentication pages".into(),
                    ),
                    pack: Some(pack),
                }
            }
            Some(Err(e)) => {
                return Received {
                    verdict: terminal(Some(uas), None, Outcome::Malformed, e.to_string()),
                    pack: Some(pack),
                }
            }
            Some(Ok(b)) => b,
        };
        let interval = bundle.interval as u64;
        if interval == 0 {
            return Received {
                verdict: terminal(
                    Some(uas),
                    Some(0),
                    Outcome::Malformed,
                    "interval counter 0".into(),
                ),
                pack: Some(pack),
            };
        }
        let mut payload = [0u8; AUTH_PAYLOAD_LEN];
        payload[..4].copy_from_slice(&bundle.interval.to_be_bytes());
        payload[4..].copy_from_slice(&raw[PACK_HEADER_LEN..PACK_HEADER_LEN + AUTH_PAYLOAD_LEN - 4]);

        let msg = PendingMsg {
            id,
            uas_id: uas.clone(),
            operator_id: pack.operator_id.operator_id.as_str().to_owned(),
            interval,
            arrival_ms,
            payload,
            bundle,
        };
        let verdict = msg.verdict(Outcome::Pending, "awaiting key disclosure");
        let mut buf = self.buffer.lock().unwrap();
        let keys = buf
            .disclosures
            .entry(uas)
            .or_default()
            .entry(interval)
            .or_default();
        if !keys.contains(&bundle.disclosed_key) {
            keys.push(bundle.disclosed_key);
        }
        buf.msgs.insert(id, msg);
        buf.generation += 1;
        Received {
            verdict,
            pack: Some(pack),
        }
    }

    /// Settle every pending message of `uas_id` that some later pack could
    /// unlock. Messages still undecided go back into the buffer.
    pub fn try_release(&self, uas_id: &str) -> Vec<Verdict> {
        let mut out = Vec::new();
        loop {
            let (taken, disclosures, generation) = {
                let mut buf = self.buffer.lock().unwrap();
                let Some(disc) = buf.disclosures.get(uas_id).cloned() else {
                    return out;
                };
                let Some((&newest, _)) = disc.last_key_value() else {
                    return out;
                };
                let ids: Vec<u64> = buf
                    .msgs
                    .values()
                    .filter(|m| m.uas_id == uas_id && m.interval < newest)
                    .map(|m| m.id)
                    .collect();
                let taken: Vec<PendingMsg> = ids.iter().filter_map(|id| buf.msgs.remove(id)).collect();
                (taken, disc, buf.generation)
            };
            if taken.is_empty() {
                return out;
            }
            let mut keep = Vec::new();
            for m in taken {
                match self.settle(&m, &disclosures) {
                    Settle::Done(outcome, detail) => out.push(m.verdict(outcome, detail)),
                    Settle::Wait => keep.push(m),
                }
            }
            let mut buf = self.buffer.lock().unwrap();
            let again = buf.generation != generation && !keep.is_empty();
            for m in keep {
                buf.msgs.insert(m.id, m);
            }
            if !again {
                return out;
            }
        }
    }

    /// `ingest` followed by `try_release` for the same UAS.
    pub fn receive(&self, raw: &[u8], arrival_ms: u64) -> Vec<Verdict> {
        self.receive_full(raw, arrival_ms).1
    }

    /// Like [`receive`](Self::receive), also returning the decoded pack.
    pub fn receive_full(&self, raw: &[u8], arrival_ms: u64) -> (Received, Vec<Verdict>) {
        let r = self.ingest(raw, arrival_ms);
        let mut out = vec![r.verdict.clone()];
        if r.verdict.outcome == Outcome::Pending {
            if let Some(uas) = &r.verdict.uas_id {
                out.extend(self.try_release(uas));
            }
        }
        (r, out)
    }

    /// Expire stale messages and retry all releases (e.g. after the USS
    /// comes back).
    pub fn retry(&self, now_ms: u64) -> Vec<Verdict> {
        let mut out = Vec::new();
        let uas_ids: Vec<String> = {
            let mut buf = self.buffer.lock().unwrap();
            let expired: Vec<u64> = buf
                .msgs
                .values()
                .filter(|m| now_ms.saturating_sub(m.arrival_ms) >= self.cfg.expiry_ms)
                .map(|m| m.id)
                .collect();
            for id in expired {
                let m = buf.msgs.remove(&id).unwrap();
                out.push(m.verdict(Outcome::Expired, "no usable key disclosure before expiry"));
            }
            let mut ids: Vec<String> = buf.msgs.values().map(|m| m.uas_id.clone()).collect();
            ids.sort();
            ids.dedup();
            ids
        };
        for uas in uas_ids {
            out.extend(self.try_release(&uas));
        }
        out
    }

    fn settle(&self, m: &PendingMsg, disclosures: &Disclosures) -> Settle {
        let q = ObserverQuery {
            observer_id: self.cfg.observer_id.clone(),
            uas_id: m.uas_id.clone(),
            t_obs_ms: m.arrival_ms.max(1),
        };
        let resp = match self.uss.query(&q) {
            Ok(r) => r,
            Err(e) => {
                log::warn!(
                    "USS query for {} failed, keeping msg {} pending: {e}",
                    m.uas_id,
                    m.id
                );
                return Settle::Wait;
            }
        };
        match resp.status {
            QueryStatus::Revoked => Settle::Done(Outcome::RevokedMission, "mission revoked at USS".into()),
            QueryStatus::NoMission => match search_mac(m, disclosures) {
                Some(_) => Settle::Done(
                    Outcome::UnknownMission,
                    "MAC verifies but no mission is registered for this UAS and time".into(),
                ),
                None => Settle::Done(
                    Outcome::MacMismatch,
                    "no disclosed key reproduces the MAC and no mission is registered".into(),
                ),
            },
            QueryStatus::Found => self.settle_found(m, disclosures, &resp),
        }
    }

    fn settle_found(&self, m: &PendingMsg, disclosures: &Disclosures, resp: &QueryResponse) -> Settle {
        let (Some(k0), Some(t0), Some(t_int), Some(d)) = (resp.k0, resp.t0_ms, resp.t_int_ms, resp.d) else {
            return Settle::Done(Outcome::UnknownMission, "USS record incomplete".into());
        };
        let d64 = d as u64;
        let i = m.interval;

        // A disclosure from a pack at interval j is K_{j-d}; use the first
        // one that is on the registered chain.
        let anchored = disclosures.range(i + d64..).find_map(|(&j, keys)| {
            keys.iter()
                .find(|r| verify_commitment(r, j - d64, &k0))
                .map(|r| r.hash_forward(j - d64 - i))
        });
        match anchored {
            Some(k_i) if !m.mac_ok(&k_i) => {
                return Settle::Done(
                    Outcome::MacMismatch,
                    format!("MAC does not match K_{i} derived from a disclosed chain key"),
                )
            }
            Some(_) => {}
            None => match search_mac(m, disclosures) {
                Some(k_i) if verify_commitment(&k_i, i, &k0) => {}
                Some(_) => {
                    return Settle::Done(
                        Outcome::ChainMismatch,
                        "MAC key does not hash to the registered commitment".into(),
                    )
                }
                None => return Settle::Wait,
            },
        }

        if !verify_commitment(&m.bundle.disclosed_key, i.saturating_sub(d64), &k0) {
            return Settle::Done(
                Outcome::ChainMismatch,
                format!(
                    "disclosed key for interval {} is not on the registered chain",
                    i.saturating_sub(d64)
                ),
            );
        }
        if let Some(op) = &resp.operator_id {
            if *op != m.operator_id {
                return Settle::Done(
                    Outcome::OperatorMismatch,
                    format!("broadcast operator {:?}, registered {:?}", m.operator_id, op),
                );
            }
        }
        let params = ChainParams {
            t_int_ms: t_int,
            d,
            n: u32::MAX,
            t0_ms: t0,
        };
        if !backdating_check(m.arrival_ms, i, &params) {
            return Settle::Done(
                Outcome::IntervalViolation,
                format!("arrival {} is too late for interval {i}", m.arrival_ms),
            );
        }
        if !safety_condition(m.arrival_ms, i, &params, self.cfg.max_skew_ms) {
            return Settle::Done(
                Outcome::IntervalViolation,
                format!(
                    "K_{i} may already have been disclosed at arrival {}",
                    m.arrival_ms
                ),
            );
        }
        match self.ledger.lock().unwrap().record(&m.uas_id, i, &m.payload) {
            LedgerEntry::Conflict => Settle::Done(
                Outcome::ReplayDetected,
                format!("interval {i} already seen with a different payload"),
            ),
            LedgerEntry::New | LedgerEntry::Duplicate => Settle::Done(Outcome::Authentic, String::new()),
        }
    }
}

/// Find a key among the disclosures (or their hash ancestors) under which
/// the message's MAC verifies. The disclosure delay is not needed: every
/// key at or below index `j - 1` is tried.
fn search_mac(m: &PendingMsg, disclosures: &Disclosures) -> Option<ChainKey> {
    let i = m.interval;
    for (&j, keys) in disclosures.range(i + 1..) {
        for r in keys {
            let mut cand = *r;
            for _ in 0..(j - i) {
                if m.mac_ok(&cand) {
                    return Some(cand);
                }
                cand = cand.hash_once();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odid::encode_pack;
    use crate::provision::{plan_mission, KeysFile, MissionPlan, SealedSeed};
    use crate::transmitter::{build_beacon, build_plain, Identity, TelemetrySample};
    use crate::uss::Registry;

    const T0: u64 = 1_700_000_000_000;

    struct Mission {
        keys: KeysFile,
        ids: Identity,
    }

    impl Mission {
        fn pack(&self, i: u64) -> Vec<u8> {
            let s = TelemetrySample {
                t_ms: T0 + (i - 1) * 1000,
                lat_deg: 37.0 + i as f64 * 1e-5,
                ..Default::default()
            };
            encode_pack(&build_beacon(i, &s, &self.keys, &self.ids).unwrap()).unwrap()
        }
    }

    fn mission(reg: &Registry, seed: u8, uas: &str, register: bool) -> Mission {
        let plan = MissionPlan {
            operator_id: "OP-1".into(),
            uas_id: uas.into(),
            start_ms: T0,
            end_ms: T0 + 120_000,
            t_int_ms: 1000,
            d: 1,
        };
        let m = plan_mission(&plan, &SealedSeed::from_bytes([seed; 32])).unwrap();
        if register {
            let ack = reg.register(&m.request).unwrap();
            reg.start(&ack.handle, T0).unwrap();
        }
        Mission {
            ids: Identity::from_keys(&m.keys_file).unwrap(),
            keys: m.keys_file,
        }
    }

    fn at(i: u64) -> u64 {
        T0 + (i - 1) * 1000 + 20
    }

    fn setup() -> (Verifier<Registry>, Mission) {
        let reg = Registry::new();
        let m = mission(&reg, 9, "UAS-1", true);
        (Verifier::new(reg, VerifierConfig::default()).unwrap(), m)
    }

    fn outcome(vs: &[Verdict], id: u64) -> Option<Outcome> {
        vs.iter().rev().find(|v| v.msg_id == id).map(|v| v.outcome)
    }

    #[test]
    fn next_pack_releases_previous() {
        let (v, m) = setup();
        let r4 = v.ingest(&m.pack(4), at(4)).verdict;
        assert_eq!(r4.outcome, Outcome::Pending);
        let out = v.receive(&m.pack(5), at(5));
        assert_eq!(outcome(&out, r4.msg_id), Some(Outcome::Authentic));
        assert_eq!(v.pending_count(), 1);
    }

    #[test]
    fn release_across_gap() {
        let (v, m) = setup();
        let r4 = v.ingest(&m.pack(4), at(4)).verdict;
        let out = v.receive(&m.pack(7), at(7));
        assert_eq!(outcome(&out, r4.msg_id), Some(Outcome::Authentic));
    }

    #[test]
    fn tampered_location_is_mac_mismatch() {
        let (v, m) = setup();
        let mut p = m.pack(4);
        // flip a latitude bit inside the Location frame
        p[PACK_HEADER_LEN + 25 + 6] ^= 0x01;
        let r4 = v.ingest(&p, at(4)).verdict;
        let out = v.receive(&m.pack(5), at(5));
        assert_eq!(outcome(&out, r4.msg_id), Some(Outcome::MacMismatch));
    }

    #[test]
    fn garbage_and_partial_packs() {
        let (v, m) = setup();
        assert_eq!(v.ingest(&[0x55; 50], 1).verdict.outcome, Outcome::Malformed);
        let mut p = m.pack(3);
        // drop auth page 2
        p.drain(PACK_HEADER_LEN + 6 * 25..PACK_HEADER_LEN + 7 * 25);
        p[2] = 7;
        assert_eq!(v.ingest(&p, 1).verdict.outcome, Outcome::Malformed);
        let plain = encode_pack(&build_plain(&TelemetrySample::default(), &m.ids)).unwrap();
        assert_eq!(v.ingest(&plain, 1).verdict.outcome, Outcome::Unauthenticated);
        assert_eq!(v.pending_count(), 0);
    }

    #[test]
    fn unregistered_chain_is_unknown_mission() {
        let reg = Registry::new();
        let ghost = mission(&reg, 4, "GHOST-1", false);
        let v = Verifier::new(reg, VerifierConfig::default()).unwrap();
        let r = v.ingest(&ghost.pack(2), at(2)).verdict;
        let out = v.receive(&ghost.pack(3), at(3));
        assert_eq!(outcome(&out, r.msg_id), Some(Outcome::UnknownMission));
    }

    #[test]
    fn foreign_chain_is_chain_mismatch() {
        let reg = Registry::new();
        let _real = mission(&reg, 1, "UAS-1", true);
        let impostor = mission(&reg, 2, "UAS-1", false);
        let v = Verifier::new(reg, VerifierConfig::default()).unwrap();
        let r = v.ingest(&impostor.pack(2), at(2)).verdict;
        let out = v.receive(&impostor.pack(3), at(3));
        assert_eq!(outcome(&out, r.msg_id), Some(Outcome::ChainMismatch));
    }

    #[test]
    fn forged_disclosure_does_not_condemn_honest_message() {
        let (v, m) = setup();
        let r4 = v.ingest(&m.pack(4), at(4)).verdict;
        // attacker pack at interval 5 with a junk key
        let mut fake = m.pack(5);
        // bytes of the disclosed key inside auth page 2
        for b in &mut fake[PACK_HEADER_LEN + 6 * 25 + 2..PACK_HEADER_LEN + 6 * 25 + 17] {
            *b ^= 0xff;
        }
        let out = v.receive(&fake, at(5));
        assert_eq!(outcome(&out, r4.msg_id), None);
        let out = v.receive(&m.pack(6), at(6));
        assert_eq!(outcome(&out, r4.msg_id), Some(Outcome::Authentic));
    }

    #[test]
    fn replay_thirty_seconds_later() {
        let (v, m) = setup();
        v.receive(&m.pack(4), at(4));
        v.receive(&m.pack(5), at(5));
        let replay = v.ingest(&m.pack(4), at(4) + 30_000).verdict;
        let out = v.try_release("UAS-1");
        assert_eq!(outcome(&out, replay.msg_id), Some(Outcome::IntervalViolation));
    }

    #[test]
    fn second_payload_same_interval() {
        let (v, m) = setup();
        let a = v.ingest(&m.pack(4), at(4)).verdict;
        let s = TelemetrySample {
            t_ms: T0 + 3000,
            lat_deg: 12.0,
            ..Default::default()
        };
        let other = encode_pack(&build_beacon(4, &s, &m.keys, &m.ids).unwrap()).unwrap();
        let b = v.ingest(&other, at(4) + 5).verdict;
        let out = v.receive(&m.pack(5), at(5));
        let mut got = [outcome(&out, a.msg_id).unwrap(), outcome(&out, b.msg_id).unwrap()];
        got.sort_by_key(|o| *o as u8);
        assert_eq!(got, [Outcome::Authentic, Outcome::ReplayDetected]);
    }

    #[test]
    fn identical_duplicate_is_authentic() {
        let (v, m) = setup();
        let a = v.ingest(&m.pack(4), at(4)).verdict;
        let b = v.ingest(&m.pack(4), at(4) + 3).verdict;
        let out = v.receive(&m.pack(5), at(5));
        assert_eq!(outcome(&out, a.msg_id), Some(Outcome::Authentic));
        assert_eq!(outcome(&out, b.msg_id), Some(Outcome::Authentic));
    }

    #[test]
    fn revoked_and_operator_mismatch() {
        let reg = Registry::new();
        let m = mission(&reg, 9, "UAS-1", true);
        let h = reg.records()[0].handle.clone();
        reg.revoke(&h).unwrap();
        let v = Verifier::new(reg, VerifierConfig::default()).unwrap();
        let r = v.ingest(&m.pack(2), at(2)).verdict;
        let out = v.receive(&m.pack(3), at(3));
        assert_eq!(outcome(&out, r.msg_id), Some(Outcome::RevokedMission));

        let reg = Registry::new();
        let mut m = mission(&reg, 9, "UAS-1", true);
        m.ids.operator_id = crate::odid::AsciiId::new("SOMEONE-ELSE").unwrap();
        let v = Verifier::new(reg, VerifierConfig::default()).unwrap();
        let r = v.ingest(&m.pack(2), at(2)).verdict;
        let out = v.receive(&m.pack(3), at(3));
        assert_eq!(outcome(&out, r.msg_id), Some(Outcome::OperatorMismatch));
    }

    struct DownUss;
    impl MissionService for DownUss {
        fn call(&self, _: &crate::uss::Request) -> Result<crate::uss::Response, crate::uss::UssError> {
            Err(crate::uss::UssError::Transport("unreachable".into()))
        }
    }

    #[test]
    fn uss_outage_keeps_pending_then_expires() {
        let reg = Registry::new();
        let m = mission(&reg, 9, "UAS-1", true);
        let cfg = VerifierConfig {
            expiry_ms: 60_000,
            ..Default::default()
        };
        let v = Verifier::new(DownUss, cfg).unwrap();
        let r = v.ingest(&m.pack(2), at(2)).verdict;
        let out = v.receive(&m.pack(3), at(3));
        assert_eq!(outcome(&out, r.msg_id), None);
        assert_eq!(v.pending_count(), 2);
        let out = v.retry(at(2) + 60_000);
        assert_eq!(outcome(&out, r.msg_id), Some(Outcome::Expired));
        assert_eq!(v.pending_count(), 1);
    }

    #[test]
    fn verdict_json_schema() {
        let v = Verdict {
            msg_id: 3,
            uas_id: Some("U".into()),
            interval: Some(4),
            arrival_ms: 9,
            outcome: Outcome::IntervalViolation,
            detail: "x".into(),
        };
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"msg_id":3,"uas_id":"U","interval":4,"arrival_ms":9,"outcome":"interval_violation","detail":"x"}"#
        );
    }
}
