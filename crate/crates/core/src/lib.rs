//! Broadcast Remote ID authenticated with a delayed-disclosure hash chain.
//!
//! A UAS commits to the tip `K_0` of a SHA-256 chain at a USS, then MACs
//! each interval's Remote ID frames with a key it discloses `d` intervals
//! later. Observers buffer messages until the key arrives.

pub mod airsim;
pub mod odid;
pub mod provision;
pub mod tesla;
pub mod transmitter;
pub mod uss;
pub mod verifier;

pub use airsim::{Scenario, SimError};
pub use odid::{decode_pack, encode_pack, AuthBundle, AuthPayload, MessagePack};
pub use provision::{plan_mission, KeysFile, MissionPlan, SealedSeed};
pub use tesla::{ChainKey, ChainParams, KeyChain};
pub use transmitter::{Identity, TelemetrySample, Transmitter, TxConfig};
pub use uss::{MissionService, Registry, UssClient, UssServer};
pub use verifier::{Outcome, Verdict, Verifier, VerifierConfig};
