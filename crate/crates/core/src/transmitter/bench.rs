use std::hint::black_box;
use std::time::Instant;

use hmac::{Hmac, Mac};
use p521::ecdsa::signature::Signer;
use p521::ecdsa::{Signature, SigningKey};
use serde::Serialize;
use sha2::Sha256;

use super::TxError;
use crate::tesla::MAC_LEN;

pub const MIN_ITERATIONS: u32 = 100;

/// Mean per-operation cost of a MAC versus a P-521 ECDSA signature.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub payload_len: usize,
    pub iterations: u32,
    pub hmac_mean_ns: f64,
    pub signature_mean_ns: f64,
    /// signature time / HMAC time
    pub ratio: f64,
    pub mac_len: usize,
    /// DER-encoded signature length of the last run.
    pub signature_len: usize,
}

pub fn bench(payload_len: usize, iterations: u32) -> Result<BenchReport, TxError> {
    if iterations < MIN_ITERATIONS {
        return Err(TxError::InvalidConfig(format!(
            "bench needs at least {MIN_ITERATIONS} iterations"
        )));
    }
    let payload: Vec<u8> = (0..payload_len).map(|k| k as u8).collect();
    let key = [0x42u8; 32];

    let t = Instant::now();
    let mut tag = [0u8; MAC_LEN];
    for _ in 0..iterations {
        let mut m = Hmac::<Sha256>::new_from_slice(black_box(&key)).expect("any key length");
        m.update(black_box(&payload));
        tag = m.finalize().into_bytes().into();
    }
    let hmac_ns = t.elapsed().as_nanos() as f64 / iterations as f64;
    black_box(tag);

    let sk = SigningKey::random(&mut rand::rngs::OsRng);
    let t = Instant::now();
    let mut sig: Option<Signature> = None;
    for _ in 0..iterations {
        sig = Some(sk.sign(black_box(&payload)));
    }
    let sig_ns = t.elapsed().as_nanos() as f64 / iterations as f64;
    let der = sig.expect("iterations > 0").to_der();

    Ok(BenchReport {
        payload_len,
        iterations,
        hmac_mean_ns: hmac_ns,
        signature_mean_ns: sig_ns,
        ratio: sig_ns / hmac_ns.max(1.0),
        mac_len: tag.len(),
        signature_len: der.as_bytes().len(),
    })
}
