//! Honest transmitters, adversaries and one observer over the simulated
//! channel.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::Serialize;

use super::adversary::{build_adversary, AttackContext};
use super::channel::{Delivery, Engine, Origin, SimChannel, Transmission};
use super::{derive_seed, Geo, Scenario, SimError, SimSender, SIM_EPOCH_MS};
use crate::provision::{plan_mission, MissionPlan, SealedSeed};
use crate::transmitter::TelemetrySample;
use crate::uss::{MissionService, Registry};
use crate::verifier::{Outcome, Verdict, Verifier, VerifierConfig};

pub const OBSERVER: &str = "observer";

/// Final state of one delivered pack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MessageRecord {
    pub msg_id: u64,
    pub sender: String,
    pub origin: Origin,
    pub uas_id: Option<String>,
    pub interval: Option<u64>,
    pub sent_ms: u64,
    pub arrival_ms: u64,
    pub outcome: Outcome,
    /// When the terminal verdict was produced.
    pub decided_ms: Option<u64>,
    pub detail: String,
}

/// One verdict as emitted, for the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerdictEvent {
    pub t_ms: u64,
    pub receiver: String,
    pub origin: Origin,
    pub sender: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub scenario: String,
    pub seed: u64,
    pub real_uas: Vec<String>,
    pub spoofed_uas: Vec<String>,
    pub t0_ms: BTreeMap<String, u64>,
    pub t_int_ms: u64,
    pub transmissions: usize,
    pub delivered: usize,
    /// Claimed UAS id -> outcome counts.
    pub by_uas: BTreeMap<String, BTreeMap<Outcome, usize>>,
    pub by_origin: BTreeMap<Origin, BTreeMap<Outcome, usize>>,
    #[serde(skip)]
    pub messages: Vec<MessageRecord>,
    #[serde(skip)]
    pub events: Vec<VerdictEvent>,
}

impl SuiteReport {
    pub fn of_origin(&self, o: Origin) -> impl Iterator<Item = &MessageRecord> {
        self.messages.iter().filter(move |m| m.origin == o)
    }
}

pub(crate) fn channel_seed(seed: u64) -> u64 {
    let b = derive_seed(seed, "channel");
    u64::from_be_bytes(b[..8].try_into().unwrap())
}

struct Observer<'a, S> {
    verifier: &'a Verifier<S>,
    info: HashMap<u64, MessageRecord>,
    events: Vec<VerdictEvent>,
}

impl<S: MissionService> Observer<'_, S> {
    fn deliver(&mut self, d: &Delivery) {
        let (received, verdicts) = self.verifier.receive_full(&d.pack, d.t_ms);
        let v = &received.verdict;
        self.info.insert(
            v.msg_id,
            MessageRecord {
                msg_id: v.msg_id,
                sender: d.sender.clone(),
                origin: d.origin,
                uas_id: v.uas_id.clone(),
                interval: v.interval,
                sent_ms: d.sent_ms,
                arrival_ms: d.t_ms,
                outcome: Outcome::Pending,
                decided_ms: None,
                detail: String::new(),
            },
        );
        for v in verdicts {
            let rec = self.info.get_mut(&v.msg_id).expect("verdict for a known message");
            if v.outcome.is_terminal() {
                debug_assert!(!rec.outcome.is_terminal(), "verdict changed after terminal");
                rec.outcome = v.outcome;
                rec.decided_ms = Some(d.t_ms);
                rec.detail = v.detail.clone();
            }
            self.events.push(VerdictEvent {
                t_ms: d.t_ms,
                receiver: d.receiver.clone(),
                origin: rec.origin,
                sender: rec.sender.clone(),
                verdict: v,
            });
        }
    }
}

pub fn run_attack_suite(scn: &Scenario, seed: u64) -> Result<SuiteReport, SimError> {
    scn.validate()?;
    let m = &scn.mission;
    let geo = Geo::default();
    let t0 = SIM_EPOCH_MS;
    let window_end = t0 + m.n * m.t_int_ms;
    let registry = Arc::new(Registry::new());

    let mut senders = Vec::new();
    let mut starts = BTreeMap::new();
    for k in 0..m.real_uas {
        let plan = MissionPlan {
            operator_id: format!("OP-{:02}", k + 1),
            uas_id: format!("UAS-{:02}", k + 1),
            start_ms: t0,
            end_ms: window_end,
            t_int_ms: m.t_int_ms,
            d: m.d,
        };
        let planned = plan_mission(
            &plan,
            &SealedSeed::from_bytes(derive_seed(seed, &format!("uas/{k}"))),
        )?;
        let ack = registry.register(&planned.request)?;
        let first_tx = t0 + 50 * k as u64;
        registry.start(&ack.handle, first_tx)?;
        starts.insert(plan.uas_id.clone(), first_tx);
        senders.push(SimSender::new(planned.keys_file, first_tx)?);
    }

    let ctx = AttackContext {
        seed,
        geo,
        start_ms: t0,
        window_end_ms: window_end,
        intervals: m.n,
        t_int_ms: m.t_int_ms,
        d: m.d,
    };
    let adversaries: Vec<_> = scn
        .adversary
        .iter()
        .map(|a| build_adversary(a, &ctx))
        .collect::<Result<_, _>>()?;
    let spoofed: Vec<String> = adversaries.iter().flat_map(|a| a.spoofed_ids()).collect();

    let mut ch_cfg = scn.channel;
    ch_cfg.seed = channel_seed(seed);
    let channel = SimChannel::new(ch_cfg, vec![OBSERVER.into()])?;
    let mut engine = Engine::new(channel, adversaries, t0);

    let verifier = Verifier::new(
        registry.clone(),
        VerifierConfig {
            observer_id: OBSERVER.into(),
            ..Default::default()
        },
    )?;
    let mut obs = Observer {
        verifier: &verifier,
        info: HashMap::new(),
        events: Vec::new(),
    };

    let ticks = m.n + 3;
    for k in 0..ticks {
        let until = t0 + (k + 1) * m.t_int_ms;
        for (idx, s) in senders.iter_mut().enumerate() {
            let start = starts[&s.uas];
            let mut telemetry = |t: u64| {
                let (lat, lon) = geo.to_latlon([
                    -20.0 + 0.5 * (t - start) as f64 / 1000.0,
                    -10.0 + 5.0 * idx as f64,
                ]);
                TelemetrySample {
                    t_ms: t,
                    lat_deg: lat,
                    lon_deg: lon,
                    alt_m: 5.0,
                    speed_mps: 0.5,
                    direction_deg: 90.0,
                    vspeed_mps: 0.0,
                    operator_lat_deg: geo.lat0,
                    operator_lon_deg: geo.lon0,
                }
            };
            let uas = s.uas.clone();
            for (t, pack) in s.due(until, &mut telemetry) {
                engine.submit(Transmission::new(t, uas.clone(), Origin::Honest, pack));
            }
        }
        engine.advance(until, |d| obs.deliver(d));
    }

    let mut messages: Vec<MessageRecord> = obs.info.into_values().collect();
    messages.sort_by_key(|r| r.msg_id);
    let mut by_uas: BTreeMap<String, BTreeMap<Outcome, usize>> = BTreeMap::new();
    let mut by_origin: BTreeMap<Origin, BTreeMap<Outcome, usize>> = BTreeMap::new();
    for r in &messages {
        let key = r.uas_id.clone().unwrap_or_else(|| format!("?{}", r.sender));
        *by_uas.entry(key).or_default().entry(r.outcome).or_default() += 1;
        *by_origin
            .entry(r.origin)
            .or_default()
            .entry(r.outcome)
            .or_default() += 1;
    }
    Ok(SuiteReport {
        scenario: scn.id.clone(),
        seed,
        real_uas: starts.keys().cloned().collect(),
        spoofed_uas: spoofed,
        t0_ms: starts,
        t_int_ms: m.t_int_ms,
        transmissions: engine.transmissions().len(),
        delivered: messages.len(),
        by_uas,
        by_origin,
        messages,
        events: obs.events,
    })
}
