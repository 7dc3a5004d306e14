//! Attackers. They see only what is broadcast plus public mission data.

use serde::{Deserialize, Serialize};

use super::channel::{Origin, Transmission};
use super::{derive_seed, Geo, SimError, SimSender};
use crate::odid::{decode_pack, encode_pack, paginate_auth, AuthBundle};
use crate::provision::{plan_mission, MissionPlan, SealedSeed};
use crate::tesla::{compute_mac, derive_mac_key};
use crate::transmitter::{auth_timestamp, TelemetrySample};

pub trait Adversary {
    fn name(&self) -> &str;

    /// React to an honest transmission. Returned packs must not be sent
    /// earlier than the captured one.
    fn capture(&mut self, _tx: &Transmission) -> Vec<Transmission> {
        Vec::new()
    }

    /// The adversary's own traffic in `[from_ms, to_ms)`.
    fn schedule(&mut self, _from_ms: u64, _to_ms: u64) -> Vec<Transmission> {
        Vec::new()
    }

    /// UAS identities this adversary invents.
    fn spoofed_ids(&self) -> Vec<String> {
        Vec::new()
    }

    /// Positions (local metres) it claims, for plotting.
    fn spoofed_positions(&self) -> Vec<[f64; 2]> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AdversaryConfig {
    /// Re-broadcast every captured pack `offset_ms` later.
    Replayer { offset_ms: u64 },
    /// `count` hovering UAS on the y-axis, `spacing_m` apart, each with its
    /// own valid but unregistered keychain.
    GhostFleet {
        count: usize,
        #[serde(default = "default_spacing")]
        spacing_m: f64,
    },
    /// After `K_i` is disclosed, forge a pack for interval `i` with a shifted
    /// position and inject it at once.
    DelayedForger {
        #[serde(default = "default_shift")]
        shift_m: f64,
    },
}

fn default_spacing() -> f64 {
    10.0
}

fn default_shift() -> f64 {
    25.0
}

impl AdversaryConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            AdversaryConfig::Replayer { .. } => "replayer",
            AdversaryConfig::GhostFleet { .. } => "ghost_fleet",
            AdversaryConfig::DelayedForger { .. } => "delayed_forger",
        }
    }
}

/// Public facts an adversary may use.
#[derive(Debug, Clone)]
pub struct AttackContext {
    pub seed: u64,
    pub geo: Geo,
    /// First interval start of the attacked mission(s).
    pub start_ms: u64,
    /// End of the registered validity window.
    pub window_end_ms: u64,
    pub intervals: u64,
    pub t_int_ms: u64,
    pub d: u32,
}

pub fn build_adversary(cfg: &AdversaryConfig, ctx: &AttackContext) -> Result<Box<dyn Adversary>, SimError> {
    Ok(match *cfg {
        AdversaryConfig::Replayer { offset_ms } => Box::new(Replayer {
            offset_ms,
            // keep jittered arrivals inside the window, where the USS still
            // knows the mission
            until_ms: ctx.window_end_ms.saturating_sub(ctx.t_int_ms),
        }),
        AdversaryConfig::GhostFleet { count, spacing_m } => Box::new(GhostFleet::new(count, spacing_m, ctx)?),
        AdversaryConfig::DelayedForger { shift_m } => Box::new(DelayedForger {
            d: ctx.d as u64,
            shift_deg: shift_m / super::M_PER_DEG,
        }),
    })
}

pub struct Replayer {
    pub offset_ms: u64,
    /// Replays are sent strictly before this.
    pub until_ms: u64,
}

impl Adversary for Replayer {
    fn name(&self) -> &str {
        "replayer"
    }

    fn capture(&mut self, tx: &Transmission) -> Vec<Transmission> {
        let t = tx.t_ms + self.offset_ms;
        if t >= self.until_ms {
            return Vec::new();
        }
        vec![Transmission {
            t_ms: t,
            sender: "replayer".into(),
            origin: Origin::Replay,
            pack: tx.pack.clone(),
        }]
    }
}

pub struct GhostFleet {
    ghosts: Vec<(SimSender, TelemetrySample, [f64; 2])>,
}

impl GhostFleet {
    pub fn new(count: usize, spacing_m: f64, ctx: &AttackContext) -> Result<Self, SimError> {
        let mut ghosts = Vec::with_capacity(count);
        for k in 0..count {
            let uas = format!("GHOST-{:02}", k + 1);
            let y = (k as f64 - (count as f64 - 1.0) / 2.0) * spacing_m;
            let (lat, lon) = ctx.geo.to_latlon([0.0, y]);
            let plan = MissionPlan {
                operator_id: "OP-GHOST".into(),
                uas_id: uas.clone(),
                start_ms: ctx.start_ms,
                end_ms: ctx.start_ms + (ctx.intervals + 1) * ctx.t_int_ms,
                t_int_ms: ctx.t_int_ms,
                d: ctx.d,
            };
            let seed = SealedSeed::from_bytes(derive_seed(ctx.seed, &format!("ghost/{k}")));
            let m = plan_mission(&plan, &seed)?;
            // never registered
            let t0 = ctx.start_ms + 300 + 7 * k as u64;
            let sender = SimSender::new(m.keys_file, t0)?;
            let sample = TelemetrySample {
                lat_deg: lat,
                lon_deg: lon,
                alt_m: 5.0,
                operator_lat_deg: ctx.geo.lat0,
                operator_lon_deg: ctx.geo.lon0,
                ..Default::default()
            };
            ghosts.push((sender, sample, [0.0, y]));
        }
        Ok(Self { ghosts })
    }
}

impl Adversary for GhostFleet {
    fn name(&self) -> &str {
        "ghost_fleet"
    }

    fn schedule(&mut self, _from_ms: u64, to_ms: u64) -> Vec<Transmission> {
        let mut out = Vec::new();
        for (sender, sample, _) in &mut self.ghosts {
            let s = *sample;
            let uas = sender.uas.clone();
            for (t, pack) in sender.due(to_ms, &mut |t| TelemetrySample { t_ms: t, ..s }) {
                out.push(Transmission::new(t, uas.clone(), Origin::Ghost, pack));
            }
        }
        out
    }

    fn spoofed_ids(&self) -> Vec<String> {
        self.ghosts.iter().map(|g| g.0.uas.clone()).collect()
    }

    fn spoofed_positions(&self) -> Vec<[f64; 2]> {
        self.ghosts.iter().map(|g| g.2).collect()
    }
}

pub struct DelayedForger {
    d: u64,
    shift_deg: f64,
}

impl DelayedForger {
    fn forge(&self, raw: &[u8]) -> Option<Vec<u8>> {
        let mut pack = decode_pack(raw).ok()?;
        let bundle = pack.auth_bundle()?.ok()?;
        let j = bundle.interval as u64;
        let i = j.checked_sub(self.d).filter(|&i| i >= 1)?;
        // the pack for j just disclosed K_i
        let k_i = bundle.disclosed_key;
        pack.location.lat_deg += self.shift_deg;
        let payload = pack.auth_payload(i as u32).ok()?;
        let mac = compute_mac(&derive_mac_key(k_i.as_bytes()).ok()?, payload.as_bytes()).ok()?;
        let forged = AuthBundle {
            interval: i as u32,
            mac,
            disclosed_key: k_i.hash_forward(self.d.min(i)),
        };
        let ts = match pack.auth.as_ref()?[0].page {
            crate::odid::AuthPage::Header { timestamp, .. } => timestamp,
            _ => auth_timestamp(0),
        };
        pack.auth = Some(paginate_auth(&forged, ts));
        encode_pack(&pack).ok()
    }
}

impl Adversary for DelayedForger {
    fn name(&self) -> &str {
        "delayed_forger"
    }

    fn capture(&mut self, tx: &Transmission) -> Vec<Transmission> {
        match self.forge(&tx.pack) {
            Some(p) => vec![Transmission::new(tx.t_ms + 1, "forger", Origin::Forgery, p)],
            None => Vec::new(),
        }
    }
}
