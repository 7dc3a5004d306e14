//! Frozen wire bytes for one authenticated pack, checked against an HMAC
//! and hash chain rebuilt from SHA-256 alone.

use sha2::{Digest, Sha256};
use tbrd_core::odid::{decode_pack, encode_pack, PACK_LEN};
use tbrd_core::provision::{plan_mission, KeysFile, MissionPlan, SealedSeed};
use tbrd_core::transmitter::{build_beacon, Identity, TelemetrySample};

const T0: u64 = 1_700_000_000_000;

fn golden_keys() -> KeysFile {
    let plan = MissionPlan {
        operator_id: "OP-GOLDEN".into(),
        uas_id: "UAS-GOLDEN".into(),
        start_ms: T0,
        end_ms: T0 + 10_000,
        t_int_ms: 1000,
        d: 1,
    };
    let mut k = plan_mission(&plan, &SealedSeed::from_bytes([0x11; 32]))
        .unwrap()
        .keys_file;
    k.t0_ms = T0;
    k
}

fn golden_sample() -> TelemetrySample {
    TelemetrySample {
        t_ms: T0 + 3000 + 40,
        lat_deg: 37.2296,
        lon_deg: -80.4139,
        alt_m: 612.5,
        speed_mps: 4.25,
        direction_deg: 271.0,
        vspeed_mps: -1.5,
        operator_lat_deg: 37.2291,
        operator_lon_deg: -80.4145,
    }
}

fn fixture(name: &str) -> String {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path)
        .unwrap()
        .split_whitespace()
        .collect()
}

fn hmac_sha256(key: &[u8], msg: &[u8]) -> [u8; 32] {
    let mut k = [0u8; 64];
    k[..key.len()].copy_from_slice(key);
    let inner: Vec<u8> = k.iter().map(|b| b ^ 0x36).chain(msg.iter().copied()).collect();
    let ih = Sha256::digest(&inner);
    let outer: Vec<u8> = k.iter().map(|b| b ^ 0x5c).chain(ih.iter().copied()).collect();
    Sha256::digest(&outer).into()
}

#[test]
fn interval_4_pack_matches_fixture() {
    let keys = golden_keys();
    let ids = Identity::from_keys(&keys).unwrap();
    let raw = encode_pack(&build_beacon(4, &golden_sample(), &keys, &ids).unwrap()).unwrap();
    assert_eq!(raw.len(), PACK_LEN);
    assert_eq!(hex::encode(&raw), fixture("pack_i4.hex"));
}

#[test]
fn fixture_verifies_with_independent_oracle() {
    let raw = hex::decode(fixture("pack_i4.hex")).unwrap();
    // K_10 is the seed; walk down to K_4 and K_3
    let mut chain = vec![[0x11u8; 32]];
    for _ in 0..10 {
        let next: [u8; 32] = Sha256::digest(chain.last().unwrap()).into();
        chain.push(next);
    }
    let k = |i: usize| chain[10 - i];
    assert_eq!(hex::encode(k(0)), golden_keys().commitment().to_hex());

    // pages 0..=3 start at frame 4; data at 8..25 then 2..25
    let page = |p: usize| &raw[3 + (4 + p) * 25..3 + (5 + p) * 25];
    let mut bundle = page(0)[8..].to_vec();
    for p in 1..4 {
        bundle.extend_from_slice(&page(p)[2..]);
    }
    assert_eq!(&bundle[..4], &4u32.to_be_bytes());
    assert_eq!(&bundle[36..68], &k(3));
    assert!(bundle[68..].iter().all(|&b| b == 0));

    let payload = [&4u32.to_be_bytes()[..], &raw[3..103]].concat();
    let mac_key = hmac_sha256(&k(4), b"TBRD-MAC-KEY");
    assert_eq!(&bundle[4..36], &hmac_sha256(&mac_key, &payload));

    let pack = decode_pack(&raw).unwrap();
    assert_eq!(pack.basic_id.uas_id.as_str(), "UAS-GOLDEN");
    assert_eq!(pack.location.direction_deg, 271);
}

#[test]
fn keys_file_matches_fixture() {
    assert_eq!(
        golden_keys().to_text(),
        std::fs::read_to_string(format!(
            "{}/tests/fixtures/golden.keys",
            env!("CARGO_MANIFEST_DIR")
        ))
        .unwrap()
    );
}
