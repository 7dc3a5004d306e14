use std::collections::HashMap;
use std::sync::Arc;
use std::thread;

use proptest::prelude::*;
use tbrd_core::odid::encode_pack;
use tbrd_core::provision::{plan_mission, KeysFile, MissionPlan, SealedSeed};
use tbrd_core::transmitter::{build_beacon, Identity, TelemetrySample};
use tbrd_core::uss::{MissionService, Registry};
use tbrd_core::verifier::{Outcome, Verdict, Verifier, VerifierConfig};

const T0: u64 = 1_700_000_000_000;
const N: u64 = 30;

fn mission(reg: &Registry, seed: [u8; 32]) -> (KeysFile, Identity) {
    let plan = MissionPlan {
        operator_id: "OP-1".into(),
        uas_id: "UAS-1".into(),
        start_ms: T0,
        end_ms: T0 + (N + 1) * 1000,
        t_int_ms: 1000,
        d: 1,
    };
    let m = plan_mission(&plan, &SealedSeed::from_bytes(seed)).unwrap();
    let ack = reg.register(&m.request).unwrap();
    reg.start(&ack.handle, T0).unwrap();
    let ids = Identity::from_keys(&m.keys_file).unwrap();
    (m.keys_file, ids)
}

fn pack(keys: &KeysFile, ids: &Identity, i: u64) -> Vec<u8> {
    let s = TelemetrySample {
        t_ms: T0 + (i - 1) * 1000,
        lat_deg: 37.0 + i as f64 * 1e-5,
        ..Default::default()
    };
    encode_pack(&build_beacon(i, &s, keys, ids).unwrap()).unwrap()
}

/// Final outcome per message, checking that nothing changes after a
/// terminal verdict.
fn settle(verdicts: &[Verdict]) -> Result<HashMap<u64, Outcome>, String> {
    let mut out: HashMap<u64, Outcome> = HashMap::new();
    for v in verdicts {
        if let Some(prev) = out.get(&v.msg_id) {
            if prev.is_terminal() {
                return Err(format!(
                    "msg {} changed from {prev:?} to {:?}",
                    v.msg_id, v.outcome
                ));
            }
        }
        out.insert(v.msg_id, v.outcome);
    }
    Ok(out)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Any loss pattern: an honest message ends authentic iff a later pack
    /// arrived, and stays pending otherwise. Covers verifiers that join
    /// mid-flight (leading losses).
    #[test]
    fn complete_and_monotone_under_loss(
        seed in any::<[u8; 32]>(),
        delivered in prop::collection::vec(any::<bool>(), N as usize),
        jitter in prop::collection::vec(0u64..900, N as usize),
    ) {
        let reg = Registry::new();
        let (keys, ids) = mission(&reg, seed);
        let v = Verifier::new(reg, VerifierConfig::default()).unwrap();
        let mut all = Vec::new();
        let mut id_of = HashMap::new();
        for i in 1..=N {
            if !delivered[i as usize - 1] {
                continue;
            }
            let (r, vs) = v.receive_full(&pack(&keys, &ids, i), T0 + (i - 1) * 1000 + jitter[i as usize - 1]);
            id_of.insert(i, r.verdict.msg_id);
            all.extend(vs);
        }
        let fin = settle(&all).map_err(TestCaseError::fail)?;
        let last = (1..=N).rev().find(|&i| delivered[i as usize - 1]);
        for (&i, id) in &id_of {
            let want = if Some(i) == last { Outcome::Pending } else { Outcome::Authentic };
            prop_assert_eq!(fin[id], want, "interval {}", i);
        }
    }
}

#[test]
fn mid_flight_verifier_needs_no_prior_state() {
    let reg = Registry::new();
    let (keys, ids) = mission(&reg, [4; 32]);
    let v = Verifier::new(reg, VerifierConfig::default()).unwrap();
    let mut all = Vec::new();
    for i in 17..=N {
        all.extend(v.receive(&pack(&keys, &ids, i), T0 + (i - 1) * 1000 + 30));
    }
    let fin = settle(&all).unwrap();
    let authentic = fin.values().filter(|o| **o == Outcome::Authentic).count();
    assert_eq!(authentic as u64, N - 17);
}

/// One thread ingests while another drains: every message is released
/// exactly once.
#[test]
fn concurrent_ingest_and_release() {
    for round in 0..20u8 {
        let reg = Registry::new();
        let (keys, ids) = mission(&reg, [round; 32]);
        let v = Arc::new(Verifier::new(reg, VerifierConfig::default()).unwrap());
        let packs: Vec<_> = (1..=N)
            .map(|i| (pack(&keys, &ids, i), T0 + (i - 1) * 1000 + 5))
            .collect();

        let vi = v.clone();
        let ingest = thread::spawn(move || {
            packs
                .iter()
                .map(|(p, t)| vi.ingest(p, *t).verdict)
                .collect::<Vec<_>>()
        });
        let vr = v.clone();
        let drain = thread::spawn(move || {
            let mut out = Vec::new();
            for _ in 0..2000 {
                out.extend(vr.try_release("UAS-1"));
            }
            out
        });
        let ingested = ingest.join().unwrap();
        let mut released = drain.join().unwrap();
        released.extend(v.try_release("UAS-1"));

        let mut terminal: HashMap<u64, usize> = HashMap::new();
        for r in &released {
            if r.outcome.is_terminal() {
                assert_eq!(r.outcome, Outcome::Authentic, "{r:?}");
                *terminal.entry(r.msg_id).or_default() += 1;
            }
        }
        for p in &ingested[..N as usize - 1] {
            assert_eq!(
                terminal.get(&p.msg_id),
                Some(&1),
                "round {round}: msg {}",
                p.msg_id
            );
        }
        assert_eq!(v.pending_count(), 1);
    }
}
