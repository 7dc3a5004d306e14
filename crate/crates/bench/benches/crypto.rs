use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use p521::ecdsa::signature::{Signer, Verifier};
use p521::ecdsa::{Signature, SigningKey, VerifyingKey};
use tbrd_core::odid::AUTH_PAYLOAD_LEN;
use tbrd_core::tesla::{compute_mac, derive_mac_key, generate_chain, ChainParams};

fn payload() -> Vec<u8> {
    (0..AUTH_PAYLOAD_LEN).map(|k| k as u8).collect()
}

fn tag_vs_signature(c: &mut Criterion) {
    let msg = payload();
    let key = derive_mac_key(&[0x42; 32]).unwrap();
    // top byte cleared to stay below the group order
    let mut scalar = [0x24; 66];
    scalar[0] = 0;
    let sk = SigningKey::from_slice(&scalar).unwrap();
    let vk = VerifyingKey::from(&sk);
    let sig: Signature = sk.sign(&msg);

    let mut g = c.benchmark_group("auth_104B");
    g.throughput(Throughput::Bytes(msg.len() as u64));
    g.bench_function("hmac_sha256", |b| {
        b.iter(|| compute_mac(&key, black_box(&msg)).unwrap())
    });
    g.bench_function("hmac_with_key_derivation", |b| {
        b.iter(|| compute_mac(&derive_mac_key(black_box(&[0x42; 32])).unwrap(), black_box(&msg)).unwrap())
    });
    g.bench_function("p521_ecdsa_sign", |b| {
        b.iter(|| -> Signature { sk.sign(black_box(&msg)) })
    });
    g.bench_function("p521_ecdsa_verify", |b| {
        b.iter(|| vk.verify(black_box(&msg), &sig).unwrap())
    });
    g.finish();
}

fn chain_generation(c: &mut Criterion) {
    let mut g = c.benchmark_group("keychain");
    for n in [61u32, 3600] {
        let params = ChainParams::new(1000, 1, n, 0).unwrap();
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &params, |b, p| {
            b.iter(|| generate_chain(black_box(&[9; 32]), *p).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, tag_vs_signature, chain_generation);
criterion_main!(benches);
