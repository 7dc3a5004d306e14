//! TESLA keychain, MAC keys and interval timing.
//!
//! Keys are generated in reverse order of use: the random seed is `K_n`, and
//! every earlier key is the SHA-256 hash of its successor, down to the public
//! commitment `K_0`. Messages sent in interval `i` are authenticated with a
//! MAC key derived from `K_i`, and `K_i` itself is only disclosed `d`
//! intervals later.
//!
//! Everything here is pure; no clock or I/O is touched.

use std::fmt;

use hmac::{Hmac, Mac};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Length of every chain key, MAC key and MAC tag.
pub const KEY_LEN: usize = 32;
/// Length of the untruncated HMAC-SHA-256 tag.
pub const MAC_LEN: usize = 32;
/// Label fed to the PRF that turns `K_i` into the MAC key `K'_i`.
pub const MAC_KEY_LABEL: &[u8; 12] = b"TBRD-MAC-KEY";

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TeslaError {
    #[error("key must be {KEY_LEN} bytes, got {0}")]
    InvalidKeyLength(usize),
    #[error("invalid chain parameters: {0}")]
    InvalidParams(&'static str),
    #[error("payload is empty")]
    EmptyPayload,
    #[error("time {t_ms} precedes mission start {t0_ms}")]
    BeforeStart { t_ms: u64, t0_ms: u64 },
}

/// One 32-byte element of the one-way keychain.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ChainKey(pub [u8; KEY_LEN]);

impl ChainKey {
    pub fn from_slice(bytes: &[u8]) -> Result<Self, TeslaError> {
        let arr: [u8; KEY_LEN] = bytes
            .try_into()
            .map_err(|_| TeslaError::InvalidKeyLength(bytes.len()))?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// The predecessor in the chain: `K_{i-1} = SHA-256(K_i)`.
    pub fn hash_once(&self) -> ChainKey {
        ChainKey(Sha256::digest(self.0).into())
    }

    /// Apply the chain hash `steps` times.
    pub fn hash_forward(&self, steps: u64) -> ChainKey {
        let mut k = *self;
        for _ in 0..steps {
            k = k.hash_once();
        }
        k
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, TeslaError> {
        let bytes = hex::decode(s).map_err(|_| TeslaError::InvalidKeyLength(s.len() / 2))?;
        Self::from_slice(&bytes)
    }
}

impl fmt::Debug for ChainKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChainKey({})", self.to_hex())
    }
}

impl fmt::Display for ChainKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for ChainKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ChainKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.len() != KEY_LEN * 2 || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("expected 64 lowercase hex characters"));
        }
        ChainKey::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Per-interval MAC key `K'_i`, derived from `K_i` and never transmitted.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct MacKey(pub [u8; KEY_LEN]);

impl fmt::Debug for MacKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacKey({})", hex::encode(self.0))
    }
}

/// Interval schedule shared by sender and receivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Interval duration in milliseconds.
    pub t_int_ms: u64,
    /// Disclosure delay in intervals.
    pub d: u32,
    /// Number of usable intervals; the chain holds `n + 1` keys.
    pub n: u32,
    /// Mission start (first broadcast), Unix epoch milliseconds.
    pub t0_ms: u64,
}

impl ChainParams {
    pub fn new(t_int_ms: u64, d: u32, n: u32, t0_ms: u64) -> Result<Self, TeslaError> {
        let p = Self {
            t_int_ms,
            d,
            n,
            t0_ms,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), TeslaError> {
        if self.t_int_ms == 0 {
            return Err(TeslaError::InvalidParams("t_int_ms must be positive"));
        }
        if self.d == 0 {
            return Err(TeslaError::InvalidParams("disclosure delay d must be at least 1"));
        }
        if self.n == 0 {
            return Err(TeslaError::InvalidParams("n must be at least 1"));
        }
        Ok(())
    }

    /// Start of interval `i` (1-based) in epoch milliseconds.
    pub fn interval_start(&self, i: u64) -> u64 {
        self.t0_ms + i.saturating_sub(1) * self.t_int_ms
    }
}

/// The ordered keys `K_0..=K_n`.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyChain {
    params: ChainParams,
    keys: Vec<ChainKey>,
}

impl fmt::Debug for KeyChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyChain")
            .field("params", &self.params)
            .field("commitment", &self.commitment())
            .finish_non_exhaustive()
    }
}

impl KeyChain {
    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    /// `K_0`, the public commitment.
    pub fn commitment(&self) -> ChainKey {
        self.keys[0]
    }

    /// `K_n`, the seed.
    pub fn seed(&self) -> ChainKey {
        self.keys[self.keys.len() - 1]
    }

    pub fn key(&self, i: usize) -> Option<&ChainKey> {
        self.keys.get(i)
    }

    pub fn keys(&self) -> &[ChainKey] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

/// Build `K_0..=K_n` from a 32-byte seed, which becomes `K_n`.
pub fn generate_chain(seed: &[u8], params: ChainParams) -> Result<KeyChain, TeslaError> {
    let seed = ChainKey::from_slice(seed)?;
    params.validate()?;
    let n = params.n as usize;
    let mut keys = vec![ChainKey::default(); n + 1];
    keys[n] = seed;
    for i in (1..=n).rev() {
        keys[i - 1] = keys[i].hash_once();
    }
    Ok(KeyChain { params, keys })
}

/// `K'_i = HMAC-SHA-256(K_i, "TBRD-MAC-KEY")`.
pub fn derive_mac_key(k_i: &[u8]) -> Result<MacKey, TeslaError> {
    if k_i.len() != KEY_LEN {
        return Err(TeslaError::InvalidKeyLength(k_i.len()));
    }
    let mut mac = HmacSha256::new_from_slice(k_i).expect("hmac accepts any key length");
    mac.update(MAC_KEY_LABEL);
    Ok(MacKey(mac.finalize().into_bytes().into()))
}

/// Full, untruncated HMAC-SHA-256 of `payload` under `mac_key`.
pub fn compute_mac(mac_key: &MacKey, payload: &[u8]) -> Result<[u8; MAC_LEN], TeslaError> {
    if payload.is_empty() {
        return Err(TeslaError::EmptyPayload);
    }
    let mut mac = HmacSha256::new_from_slice(&mac_key.0).expect("hmac accepts any key length");
    mac.update(payload);
    Ok(mac.finalize().into_bytes().into())
}

/// Constant-time comparison of a received tag against the recomputed one.
pub fn mac_matches(mac_key: &MacKey, payload: &[u8], tag: &[u8; MAC_LEN]) -> bool {
    let mut mac = HmacSha256::new_from_slice(&mac_key.0).expect("hmac accepts any key length");
    mac.update(payload);
    mac.verify_slice(tag).is_ok()
}

/// True iff hashing `disclosed_key` `claimed_interval` times yields `k0`.
pub fn verify_commitment(disclosed_key: &ChainKey, claimed_interval: u64, k0: &ChainKey) -> bool {
    disclosed_key.hash_forward(claimed_interval) == *k0
}

/// 1-based interval index containing `t_ms`; intervals are closed-open.
pub fn interval_of(t_ms: u64, params: &ChainParams) -> Result<u64, TeslaError> {
    if t_ms < params.t0_ms {
        return Err(TeslaError::BeforeStart {
            t_ms,
            t0_ms: params.t0_ms,
        });
    }
    if params.t_int_ms == 0 {
        return Err(TeslaError::InvalidParams("t_int_ms must be positive"));
    }
    Ok((t_ms - params.t0_ms) / params.t_int_ms + 1)
}

/// Standard TESLA safety condition: at `arrival_ms` (plus the worst-case
/// clock skew) the sender cannot yet have reached interval
/// `claimed_interval + d`, so `K_claimed` was still secret.
pub fn safety_condition(
    arrival_ms: u64,
    claimed_interval: u64,
    params: &ChainParams,
    max_skew_ms: u64,
) -> bool {
    if params.t_int_ms == 0 {
        return false;
    }
    let latest = arrival_ms as i128 + max_skew_ms as i128 - params.t0_ms as i128;
    let sender_interval = latest.div_euclid(params.t_int_ms as i128) + 1;
    sender_interval < claimed_interval as i128 + params.d as i128
}

/// Back-dating check: subtract `claimed_interval` intervals from the arrival
/// time; the result must fall before the end of the first interval.
pub fn backdating_check(arrival_ms: u64, claimed_interval: u64, params: &ChainParams) -> bool {
    let time_k0 = arrival_ms as i128 - claimed_interval as i128 * params.t_int_ms as i128;
    time_k0 < params.t0_ms as i128 + params.t_int_ms as i128
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: u32) -> ChainParams {
        ChainParams::new(1000, 1, n, 0).unwrap()
    }

    // Reference HMAC built directly from the RFC 2104 definition over SHA-256,
    // independent of the `hmac` crate.
    fn hmac_oracle(key: &[u8], msg: &[u8]) -> [u8; 32] {
        let mut k = [0u8; 64];
        if key.len() > 64 {
            k[..32].copy_from_slice(&Sha256::digest(key));
        } else {
            k[..key.len()].copy_from_slice(key);
        }
        let ipad: Vec<u8> = k.iter().map(|b| b ^ 0x36).collect();
        let opad: Vec<u8> = k.iter().map(|b| b ^ 0x5c).collect();
        let inner = Sha256::new().chain_update(&ipad).chain_update(msg).finalize();
        Sha256::new()
            .chain_update(&opad)
            .chain_update(inner)
            .finalize()
            .into()
    }

    #[test]
    fn zero_seed_single_step() {
        let chain = generate_chain(&[0u8; 32], params(1)).unwrap();
        assert_eq!(
            chain.commitment().to_hex(),
            "66687aadf862bd776c8fc18b8e9f8e20089714856ee233b3902a591d0d5f2925"
        );
        assert_eq!(chain.seed(), ChainKey([0u8; 32]));
    }

    #[test]
    fn zero_seed_two_steps() {
        let chain = generate_chain(&[0u8; 32], params(2)).unwrap();
        assert_eq!(
            chain.commitment().to_hex(),
            "2b32db6c2c0a6235fb1397e8225ea85e0f0e6e8c7b126d0016ccbde0e667151e"
        );
    }

    #[test]
    fn five_minute_flight_has_301_keys() {
        let chain = generate_chain(&[7u8; 32], ChainParams::new(1000, 1, 300, 0).unwrap()).unwrap();
        assert_eq!(chain.len(), 301);
    }

    #[test]
    fn bad_seed_and_params_rejected() {
        assert_eq!(
            generate_chain(&[0u8; 31], params(1)).unwrap_err(),
            TeslaError::InvalidKeyLength(31)
        );
        assert!(ChainParams::new(1000, 1, 0, 0).is_err());
        assert!(ChainParams::new(0, 1, 1, 0).is_err());
        assert!(ChainParams::new(1000, 0, 1, 0).is_err());
        let bad = ChainParams {
            t_int_ms: 1000,
            d: 1,
            n: 0,
            t0_ms: 0,
        };
        assert!(generate_chain(&[0u8; 32], bad).is_err());
    }

    #[test]
    fn mac_key_derivation() {
        let k = derive_mac_key(&[0u8; 32]).unwrap();
        assert_eq!(
            hex::encode(k.0),
            "9ee1d5732c0ca18f1a1e7c4a2039cde497a6461881f7a41801a479be6ddd3337"
        );
        assert_eq!(k.0, hmac_oracle(&[0u8; 32], MAC_KEY_LABEL));
        assert_ne!(k.0, [0u8; 32]);
        assert_eq!(derive_mac_key(&[0u8; 32]).unwrap(), k);
        assert_eq!(
            derive_mac_key(&[1u8; 5]).unwrap_err(),
            TeslaError::InvalidKeyLength(5)
        );
    }

    #[test]
    fn rfc4231_case_1() {
        let key = MacKey([0u8; 32]);
        // RFC 4231 uses a 20-byte key; compute_mac takes a MacKey, so go through
        // the same HMAC primitive with the raw key and compare to the vector.
        let mut mac = HmacSha256::new_from_slice(&[0x0b; 20]).unwrap();
        mac.update(b"Hi There");
        let tag: [u8; 32] = mac.finalize().into_bytes().into();
        assert_eq!(
            hex::encode(tag),
            "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7"
        );
        assert_eq!(tag, hmac_oracle(&[0x0b; 20], b"Hi There"));
        // and compute_mac agrees with the oracle on a 32-byte key
        assert_eq!(
            compute_mac(&key, b"Hi There").unwrap(),
            hmac_oracle(&[0u8; 32], b"Hi There")
        );
    }

    #[test]
    fn mac_properties() {
        let key = derive_mac_key(&[3u8; 32]).unwrap();
        let payload = [0x5au8; 104];
        let tag = compute_mac(&key, &payload).unwrap();
        assert_eq!(tag.len(), 32);
        assert_eq!(tag, hmac_oracle(&key.0, &payload));
        let mut flipped = payload;
        flipped[50] ^= 0x01;
        assert_ne!(compute_mac(&key, &flipped).unwrap(), tag);
        assert!(mac_matches(&key, &payload, &tag));
        assert!(!mac_matches(&key, &flipped, &tag));
        assert_eq!(compute_mac(&key, &[]).unwrap_err(), TeslaError::EmptyPayload);
    }

    #[test]
    fn commitment_checks() {
        let chain = generate_chain(&[0u8; 32], params(5)).unwrap();
        let k0 = chain.commitment();
        assert_eq!(
            k0.to_hex(),
            "376da11fe3ab3d0eaaddb418ccb49b5426d5c2504f526f7766580f6e45984e3b"
        );
        assert!(verify_commitment(chain.key(3).unwrap(), 3, &k0));
        assert!(verify_commitment(&k0, 0, &k0));
        // fixed pseudo-random vector (bytes of sha256("not a key"))
        let random = ChainKey(Sha256::digest(b"not a key").into());
        assert!(!verify_commitment(&random, 3, &k0));
        assert!(!verify_commitment(chain.key(3).unwrap(), 2, &k0));
    }

    #[test]
    fn interval_arithmetic() {
        let p = ChainParams::new(1000, 1, 10, 100_000).unwrap();
        assert_eq!(interval_of(104_500, &p).unwrap(), 5);
        assert_eq!(interval_of(100_000, &p).unwrap(), 1);
        assert_eq!(interval_of(104_000, &p).unwrap(), 5);
        assert_eq!(interval_of(103_999, &p).unwrap(), 4);
        assert!(matches!(
            interval_of(99_999, &p),
            Err(TeslaError::BeforeStart { .. })
        ));
    }

    #[test]
    fn safety_condition_examples() {
        let p = ChainParams::new(1000, 1, 10, 0).unwrap();
        assert!(safety_condition(3500, 4, &p, 10));
        assert!(!safety_condition(5005, 4, &p, 10));
        assert!(!safety_condition(4995, 4, &p, 10));
        assert!(safety_condition(3989, 4, &p, 10));
        assert!(!safety_condition(3990, 4, &p, 10));
    }

    #[test]
    fn backdating_examples() {
        let p = ChainParams::new(1000, 1, 10, 0).unwrap();
        assert!(backdating_check(4200, 4, &p));
        assert!(!backdating_check(9200, 4, &p));
        // boundary: arrival exactly at t0 + i*T is accepted
        assert!(backdating_check(4000, 4, &p));
        assert!(!backdating_check(5000, 4, &p));
    }

    #[test]
    fn boundary_compared_with_safety_condition() {
        // At t0 + i*T the back-dating check still passes. The safety condition
        // agrees only when d >= 2; with d = 1 that instant is already the
        // disclosure interval, which is why the verifier applies both.
        let i = 4;
        let d1 = ChainParams::new(1000, 1, 10, 0).unwrap();
        let d2 = ChainParams::new(1000, 2, 10, 0).unwrap();
        let t = d1.t0_ms + i * d1.t_int_ms;
        assert!(backdating_check(t, i, &d1));
        assert!(safety_condition(t, i, &d2, 0));
        assert!(!safety_condition(t, i, &d1, 0));
    }

    #[test]
    fn gap_recovery_composes() {
        let chain = generate_chain(&[9u8; 32], params(20)).unwrap();
        let k0 = chain.commitment();
        for i in 1..10u64 {
            for gap in 1..=10u64 {
                let later = chain.key((i + gap) as usize).unwrap();
                let derived = later.hash_forward(gap);
                assert_eq!(&derived, chain.key(i as usize).unwrap());
                assert!(verify_commitment(&derived, i, &k0));
                assert!(verify_commitment(later, i + gap, &k0));
            }
        }
    }

    #[test]
    fn serde_hex_form() {
        let k = ChainKey([0xab; 32]);
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(s, format!("\"{}\"", "ab".repeat(32)));
        assert_eq!(serde_json::from_str::<ChainKey>(&s).unwrap(), k);
        assert!(serde_json::from_str::<ChainKey>(&format!("\"{}\"", "AB".repeat(32))).is_err());
        assert!(serde_json::from_str::<ChainKey>("\"abcd\"").is_err());
    }
}
