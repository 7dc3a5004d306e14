//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use tbrd_core::odid::encode_pack;
use tbrd_core::provision::{plan_mission, KeysFile, MissionPlan, SealedSeed};
use tbrd_core::transmitter::{build_beacon, Identity, TelemetrySample};
use tbrd_core::uss::{MissionService, Registry};

pub const T0: u64 = 1_700_000_000_000;

/// A started mission of `intervals` one-second intervals on a fresh
/// in-process registry.
pub fn mission(intervals: u64) -> (KeysFile, Arc<Registry>) {
    let plan = MissionPlan {
        operator_id: "OP-BENCH".into(),
        uas_id: "UAS-BENCH".into(),
        start_ms: T0,
        end_ms: T0 + intervals * 1000,
        t_int_ms: 1000,
        d: 1,
    };
    let planned = plan_mission(&plan, &SealedSeed::from_bytes([7; 32])).expect("valid plan");
    let registry = Arc::new(Registry::new());
    let ack = registry.register(&planned.request).expect("fresh registry");
    registry.start(&ack.handle, T0).expect("in window");
    let mut keys = planned.keys_file;
    keys.t0_ms = T0;
    (keys, registry)
}

pub fn sample(t_ms: u64) -> TelemetrySample {
    TelemetrySample {
        t_ms,
        speed_mps: 4.0,
        direction_deg: 90.0,
        ..TelemetrySample::default()
    }
}

/// Every authenticated pack of the mission with its arrival time.
pub fn packs(keys: &KeysFile) -> Vec<(Vec<u8>, u64)> {
    let ids = Identity::from_keys(keys).expect("ids from keys file");
    (1..=keys.last_interval())
        .map(|i| {
            let t = T0 + (i - 1) * keys.t_int_ms + 20;
            let pack = build_beacon(i, &sample(t), keys, &ids).expect("key in range");
            (encode_pack(&pack).expect("valid pack"), t + 2)
        })
        .collect()
}
