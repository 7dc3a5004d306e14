use proptest::prelude::*;
use sha2::{Digest, Sha256};
use tbrd_core::tesla::{
    compute_mac, derive_mac_key, generate_chain, safety_condition, verify_commitment, ChainKey, ChainParams,
};

fn params(n: u32, d: u32, t_int_ms: u64, t0_ms: u64) -> ChainParams {
    ChainParams::new(t_int_ms, d, n, t0_ms).unwrap()
}

proptest! {
    #[test]
    fn every_key_hashes_to_its_predecessor(seed in any::<[u8; 32]>(), n in 1u32..=64) {
        let c = generate_chain(&seed, params(n, 1, 1000, 0)).unwrap();
        prop_assert_eq!(c.len(), n as usize + 1);
        prop_assert_eq!(c.seed().0, seed);
        for i in 1..=n as usize {
            let h: [u8; 32] = Sha256::digest(c.key(i).unwrap().0).into();
            prop_assert_eq!(h, c.key(i - 1).unwrap().0);
        }
    }

    #[test]
    fn generation_and_macs_are_pure(seed in any::<[u8; 32]>(), n in 1u32..=32, payload in prop::collection::vec(any::<u8>(), 1..200)) {
        let p = params(n, 1, 1000, 0);
        let a = generate_chain(&seed, p).unwrap();
        let b = generate_chain(&seed, p).unwrap();
        prop_assert_eq!(&a, &b);
        let ka = derive_mac_key(a.seed().as_bytes()).unwrap();
        let kb = derive_mac_key(b.seed().as_bytes()).unwrap();
        prop_assert_eq!(ka, kb);
        prop_assert_eq!(compute_mac(&ka, &payload).unwrap(), compute_mac(&kb, &payload).unwrap());
    }

    #[test]
    fn gap_recovery(seed in any::<[u8; 32]>(), n in 2u32..=64, i in 0u64..64, k in 1u64..64) {
        let c = generate_chain(&seed, params(n, 1, 1000, 0)).unwrap();
        let (i, j) = (i % n as u64, (i % n as u64 + k).min(n as u64));
        prop_assume!(j > i);
        let later = c.key(j as usize).unwrap();
        prop_assert_eq!(later.hash_forward(j - i), *c.key(i as usize).unwrap());
        prop_assert!(verify_commitment(later, j, &c.commitment()));
    }

    #[test]
    fn safety_condition_is_monotone(
        t0 in 0u64..1_000_000,
        t_int in 1u64..5000,
        d in 1u32..4,
        i in 1u64..100,
        t in 0u64..600_000,
        back in 0u64..600_000,
        skew in 0u64..50,
    ) {
        let p = params(200, d, t_int, t0);
        let t = t0 + t;
        if safety_condition(t, i, &p, skew) {
            prop_assert!(safety_condition(t.saturating_sub(back), i, &p, skew));
        }
    }
}

/// Every genuine key verifies at its index, every single-bit corruption of
/// it fails, for chains of up to 16 intervals.
#[test]
fn commitment_bit_flips_exhaustive() {
    for n in 1u32..=16 {
        let c = generate_chain(&[n as u8; 32], params(n, 1, 1000, 0)).unwrap();
        let k0 = c.commitment();
        for j in 0..=n as usize {
            let key = *c.key(j).unwrap();
            assert!(verify_commitment(&key, j as u64, &k0));
            for bit in 0..256 {
                let mut bad = key.0;
                bad[bit / 8] ^= 1 << (bit % 8);
                assert!(
                    !verify_commitment(&ChainKey(bad), j as u64, &k0),
                    "n={n} j={j} bit={bit}"
                );
            }
        }
    }
}
