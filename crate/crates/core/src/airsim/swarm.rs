//! Four UAS crossing a square, steering around each other using only the
//! positions they hear over Remote ID.
//!
//! Avoidance is a sampled velocity-obstacle rule: each step an agent picks
//! the candidate velocity closest to its preferred one whose predicted
//! closest approach to every known neighbour stays above `2r` for `tau`
//! seconds. Neighbours are assumed to keep their broadcast velocity.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::adversary::{build_adversary, AttackContext};
use super::channel::{Delivery, Engine, Origin, SimChannel, Transmission};
use super::suite::channel_seed;
use super::{derive_seed, Geo, Scenario, SimError, SimSender, SIM_EPOCH_MS};
use crate::odid::MessagePack;
use crate::provision::{plan_mission, MissionPlan, SealedSeed};
use crate::transmitter::TelemetrySample;
use crate::uss::{MissionService, Registry};
use crate::verifier::{Outcome, Verifier, VerifierConfig};

type V2 = [f64; 2];

fn sub(a: V2, b: V2) -> V2 {
    [a[0] - b[0], a[1] - b[1]]
}
fn add(a: V2, b: V2) -> V2 {
    [a[0] + b[0], a[1] + b[1]]
}
fn scale(a: V2, s: f64) -> V2 {
    [a[0] * s, a[1] * s]
}
fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
fn norm(a: V2) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwarmParams {
    pub agents: usize,
    pub side_m: f64,
    pub timestep_ms: u64,
    pub radius_m: f64,
    pub tau_s: f64,
    pub max_speed_mps: f64,
    pub max_steps: usize,
    pub goal_tolerance_m: f64,
    /// Planning radius growth per second of report age beyond one step.
    pub uncertainty_mps: f64,
}

impl Default for SwarmParams {
    fn default() -> Self {
        Self {
            agents: 4,
            side_m: 40.0,
            timestep_ms: 1000,
            radius_m: 2.0,
            tau_s: 5.0,
            max_speed_mps: 2.0,
            max_steps: 120,
            goal_tolerance_m: 0.5,
            uncertainty_mps: 1.0,
        }
    }
}

impl SwarmParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(1..=4).contains(&self.agents) {
            return Err(SimError::Config(
                "swarm agents must be 1..=4 (one per corner)".into(),
            ));
        }
        if self.timestep_ms == 0 || self.max_speed_mps <= 0.0 || self.radius_m <= 0.0 || self.tau_s <= 0.0 {
            return Err(SimError::Config(
                "swarm timestep, speed, radius and tau must be positive".into(),
            ));
        }
        // also rejects NaN
        if self.uncertainty_mps.is_nan() || self.uncertainty_mps < 0.0 {
            return Err(SimError::Config(
                "swarm uncertainty_mps must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Start and goal of agent `k`: corners counter-clockwise from the
    /// south-west, each flying to the opposite corner.
    pub fn route(&self, k: usize) -> (V2, V2) {
        let h = self.side_m / 2.0;
        let start = [[-h, -h], [h, -h], [h, h], [-h, h]][k];
        (start, scale(start, -1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthMode {
    /// Every received position is used.
    None,
    /// Only positions from `authentic` verdicts are used.
    Tbrd,
}

/// Seconds until `d - w·t` first comes within `reach`, or infinity.
fn time_to_collision(d: V2, w: V2, reach: f64) -> f64 {
    let c = dot(d, d) - reach * reach;
    if c <= 0.0 {
        // already too close: only moving apart is safe
        return if dot(d, w) > 0.0 { 0.0 } else { f64::INFINITY };
    }
    let a = dot(w, w);
    if a < 1e-12 {
        return f64::INFINITY;
    }
    let b = -2.0 * dot(d, w);
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    if t < 0.0 {
        f64::INFINITY
    } else {
        t
    }
}

/// A neighbour estimate, already extrapolated to the decision time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour {
    pub pos: V2,
    pub vel: V2,
    /// Age of the report it was extrapolated from.
    pub age_s: f64,
}

/// Pick a velocity for an agent at `pos` heading to `goal`, given
/// neighbour `(position, velocity)` estimates.
pub fn choose_velocity(pos: V2, goal: V2, neighbours: &[Neighbour], p: &SwarmParams) -> V2 {
    let dt = p.timestep_ms as f64 / 1000.0;
    let to_goal = sub(goal, pos);
    let dist = norm(to_goal);
    if dist <= p.goal_tolerance_m {
        return [0.0, 0.0];
    }
    let heading = to_goal[1].atan2(to_goal[0]);
    let pref = scale(to_goal, p.max_speed_mps.min(dist / dt) / dist);

    let mut cands = vec![pref];
    for frac in [1.0, 0.75, 0.5, 0.25] {
        let s = p.max_speed_mps * frac;
        for k in 0..=18 {
            // left of the goal direction first
            for sign in [1.0, -1.0] {
                if (k == 0 || k == 18) && sign < 0.0 {
                    continue;
                }
                let a = heading + sign * (k as f64 * 10.0).to_radians();
                cands.push([s * a.cos(), s * a.sin()]);
            }
        }
    }
    cands.push([0.0, 0.0]);

    let reach = 2.0 * p.radius_m;
    // (earliest collision, summed closing speed on neighbours already
    // inside the radius)
    let assess = |v: V2| {
        let mut ttc = f64::INFINITY;
        let mut intrusion = 0.0;
        for n in neighbours {
            let reach = reach + p.uncertainty_mps * (n.age_s - dt).max(0.0);
            let d = sub(n.pos, pos);
            let rel = sub(v, n.vel);
            ttc = ttc.min(time_to_collision(d, rel, reach));
            let dist = norm(d);
            if dist < reach && dist > 1e-9 {
                intrusion += (dot(d, rel) / dist).max(0.0);
            }
        }
        (ttc, intrusion)
    };
    let mut best: Option<(V2, f64)> = None;
    let mut fallback: Option<(V2, f64, f64, f64)> = None;
    for v in cands {
        let cost = norm(sub(v, pref));
        let (t, intrusion) = assess(v);
        if t > p.tau_s {
            if best.is_none_or(|(_, c)| cost < c) {
                best = Some((v, cost));
            }
            continue;
        }
        let better = match fallback {
            None => true,
            Some((_, bi, bt, bc)) => {
                intrusion < bi || (intrusion == bi && (t > bt || (t == bt && cost < bc)))
            }
        };
        if better {
            fallback = Some((v, intrusion, t, cost));
        }
    }
    best.map(|b| b.0).or(fallback.map(|f| f.0)).unwrap_or([0.0, 0.0])
}

/// Smallest distance between two points moving linearly over `[0, dt]`.
fn segment_min_distance(pa: V2, va: V2, pb: V2, vb: V2, dt: f64) -> f64 {
    let d = sub(pa, pb);
    let w = sub(va, vb);
    let ww = dot(w, w);
    let t = if ww < 1e-12 {
        0.0
    } else {
        (-dot(d, w) / ww).clamp(0.0, dt)
    };
    norm(add(d, scale(w, t)))
}

#[derive(Debug, Clone, Copy)]
struct Track {
    pos: V2,
    vel: V2,
    t_ms: u64,
}

fn track_from(pack: &MessagePack, arrival_ms: u64, geo: &Geo) -> Track {
    let l = &pack.location;
    let pos = geo.to_local(l.lat_deg, l.lon_deg);
    let dir = (l.direction_deg as f64).to_radians();
    // direction is clockwise from north
    let vel = [l.speed_mps * dir.sin(), l.speed_mps * dir.cos()];
    let now_ds = ((arrival_ms % 3_600_000) / 100) as i64;
    let age_ds = (now_ds - l.timestamp_ds as i64).rem_euclid(36_000) as u64;
    Track {
        pos,
        vel,
        t_ms: arrival_ms.saturating_sub(age_ds * 100),
    }
}

struct Agent {
    name: String,
    pos: V2,
    vel: V2,
    goal: V2,
    done_at: Option<usize>,
    sender: SimSender,
    verifier: Verifier<Arc<Registry>>,
    heard: BTreeMap<String, Track>,
    parked: HashMap<u64, Track>,
    outcomes: HashMap<u64, (String, Outcome)>,
}

impl Agent {
    fn update(&mut self, uas: String, t: Track) {
        if uas == self.name {
            return;
        }
        match self.heard.get(&uas) {
            Some(old) if old.t_ms > t.t_ms => {}
            _ => {
                self.heard.insert(uas, t);
            }
        }
    }

    fn deliver(&mut self, d: &Delivery, mode: AuthMode, geo: &Geo) {
        let (received, verdicts) = self.verifier.receive_full(&d.pack, d.t_ms);
        let v = &received.verdict;
        if let (Some(pack), Some(uas)) = (&received.pack, &v.uas_id) {
            let track = track_from(pack, d.t_ms, geo);
            match mode {
                AuthMode::None => self.update(uas.clone(), track),
                AuthMode::Tbrd => {
                    self.parked.insert(v.msg_id, track);
                }
            }
            self.outcomes.insert(v.msg_id, (uas.clone(), v.outcome));
        }
        for v in verdicts {
            if let (Some(e), Some(uas)) = (self.outcomes.get_mut(&v.msg_id), &v.uas_id) {
                e.1 = v.outcome;
                if mode == AuthMode::Tbrd && v.outcome.is_terminal() {
                    if let Some(t) = self.parked.remove(&v.msg_id) {
                        if v.outcome == Outcome::Authentic {
                            self.update(uas.clone(), t);
                        }
                    }
                }
            }
        }
    }

    fn neighbours(&self, now_ms: u64, horizon_ms: u64) -> Vec<Neighbour> {
        self.heard
            .values()
            .filter(|t| now_ms.saturating_sub(t.t_ms) <= horizon_ms)
            .map(|t| {
                let age_s = now_ms.saturating_sub(t.t_ms) as f64 / 1000.0;
                Neighbour {
                    pos: add(t.pos, scale(t.vel, age_s)),
                    vel: t.vel,
                    age_s,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SwarmRun {
    pub auth_mode: AuthMode,
    pub attacked: bool,
    pub agents: Vec<String>,
    /// Position of each agent at every step, starting point first.
    pub paths: Vec<Vec<V2>>,
    pub completed: Vec<bool>,
    pub completion_step: Vec<Option<usize>>,
    pub min_separation_m: f64,
    pub spoofed_positions: Vec<V2>,
    /// Claimed UAS id -> outcome counts over all agents' verifiers.
    pub verdicts: BTreeMap<String, BTreeMap<Outcome, usize>>,
}

pub fn run_swarm(scn: &Scenario, mode: AuthMode, with_attack: bool, seed: u64) -> Result<SwarmRun, SimError> {
    scn.validate()?;
    let p = scn.swarm;
    let geo = Geo::default();
    let t0 = SIM_EPOCH_MS;
    let t_int = p.timestep_ms;
    let n = p.max_steps as u64 + 2;
    let window_end = t0 + n * t_int;
    let registry = Arc::new(Registry::new());

    let mut agents = Vec::new();
    for k in 0..p.agents {
        let name = format!("SWARM-{}", k + 1);
        let plan = MissionPlan {
            operator_id: "OP-SWARM".into(),
            uas_id: name.clone(),
            start_ms: t0,
            end_ms: window_end,
            t_int_ms: t_int,
            d: scn.mission.d,
        };
        let m = plan_mission(
            &plan,
            &SealedSeed::from_bytes(derive_seed(seed, &format!("swarm/{k}"))),
        )?;
        let ack = registry.register(&m.request)?;
        let first_tx = t0 + 10 * k as u64;
        registry.start(&ack.handle, first_tx)?;
        let (start, goal) = p.route(k);
        agents.push(Agent {
            name: name.clone(),
            pos: start,
            vel: [0.0, 0.0],
            goal,
            done_at: None,
            sender: SimSender::new(m.keys_file, first_tx)?,
            verifier: Verifier::new(
                registry.clone(),
                VerifierConfig {
                    observer_id: name,
                    ..Default::default()
                },
            )?,
            heard: BTreeMap::new(),
            parked: HashMap::new(),
            outcomes: HashMap::new(),
        });
    }

    let ctx = AttackContext {
        seed,
        geo,
        start_ms: t0,
        window_end_ms: window_end,
        intervals: n,
        t_int_ms: t_int,
        d: scn.mission.d,
    };
    let adversaries: Vec<_> = if with_attack {
        scn.adversary
            .iter()
            .map(|a| build_adversary(a, &ctx))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let spoofed_positions = adversaries.iter().flat_map(|a| a.spoofed_positions()).collect();
    let mut ch = scn.channel;
    ch.seed = channel_seed(seed);
    let names: Vec<String> = agents.iter().map(|a| a.name.clone()).collect();
    let mut engine = Engine::new(SimChannel::new(ch, names.clone())?, adversaries, t0);

    let dt = t_int as f64 / 1000.0;
    let horizon = (p.tau_s * 1000.0) as u64;
    let mut paths: Vec<Vec<V2>> = agents.iter().map(|a| vec![a.pos]).collect();
    let mut min_sep = f64::INFINITY;

    for step in 0..p.max_steps {
        if agents.iter().all(|a| a.done_at.is_some()) {
            break;
        }
        let now = t0 + step as u64 * t_int;
        for a in &mut agents {
            a.vel = if a.done_at.is_some() {
                [0.0, 0.0]
            } else {
                choose_velocity(a.pos, a.goal, &a.neighbours(now, horizon), &p)
            };
        }
        for a in &mut agents {
            let (pos, vel) = (a.pos, a.vel);
            let mut telemetry = |t: u64| {
                let (lat, lon) = geo.to_latlon(pos);
                TelemetrySample {
                    t_ms: t,
                    lat_deg: lat,
                    lon_deg: lon,
                    alt_m: 5.0,
                    speed_mps: norm(vel),
                    direction_deg: vel[0].atan2(vel[1]).to_degrees().rem_euclid(360.0),
                    vspeed_mps: 0.0,
                    operator_lat_deg: geo.lat0,
                    operator_lon_deg: geo.lon0,
                }
            };
            let uas = a.name.clone();
            for (t, pack) in a.sender.due(now + t_int, &mut telemetry) {
                engine.submit(Transmission::new(t, uas.clone(), Origin::Honest, pack));
            }
        }
        engine.advance(now + t_int, |d| {
            if let Some(a) = agents.iter_mut().find(|a| a.name == d.receiver) {
                a.deliver(d, mode, &geo);
            }
        });
        for i in 0..agents.len() {
            for j in i + 1..agents.len() {
                let (a, b) = (&agents[i], &agents[j]);
                min_sep = min_sep.min(segment_min_distance(a.pos, a.vel, b.pos, b.vel, dt));
            }
        }
        for (k, a) in agents.iter_mut().enumerate() {
            a.pos = add(a.pos, scale(a.vel, dt));
            paths[k].push(a.pos);
            if a.done_at.is_none() && norm(sub(a.goal, a.pos)) <= p.goal_tolerance_m {
                a.done_at = Some(step + 1);
            }
        }
    }

    let mut verdicts: BTreeMap<String, BTreeMap<Outcome, usize>> = BTreeMap::new();
    for a in &agents {
        for (uas, o) in a.outcomes.values() {
            *verdicts.entry(uas.clone()).or_default().entry(*o).or_default() += 1;
        }
    }
    Ok(SwarmRun {
        auth_mode: mode,
        attacked: with_attack,
        agents: names,
        paths,
        completed: agents.iter().map(|a| a.done_at.is_some()).collect(),
        completion_step: agents.iter().map(|a| a.done_at).collect(),
        min_separation_m: min_sep,
        spoofed_positions,
        verdicts,
    })
}

/// Per agent, the largest waypoint distance between two runs. The shorter
/// path is held at its final point.
pub fn max_deviation(a: &SwarmRun, b: &SwarmRun) -> Vec<f64> {
    a.paths
        .iter()
        .zip(&b.paths)
        .map(|(pa, pb)| {
            let len = pa.len().max(pb.len());
            (0..len)
                .map(|k| {
                    let x = pa[k.min(pa.len() - 1)];
                    let y = pb[k.min(pb.len() - 1)];
                    norm(sub(x, y))
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Baseline and attacked runs in both modes, with deviations.
#[derive(Debug, Clone, Serialize)]
pub struct SwarmReport {
    pub scenario: String,
    pub seed: u64,
    pub params: SwarmParams,
    pub runs: Vec<SwarmRun>,
    pub deviation_none: Vec<f64>,
    pub deviation_tbrd: Vec<f64>,
}

impl SwarmReport {
    pub fn run(&self, mode: AuthMode, attacked: bool) -> &SwarmRun {
        self.runs
            .iter()
            .find(|r| r.auth_mode == mode && r.attacked == attacked)
            .expect("all four runs present")
    }

    pub fn generate(scn: &Scenario, seed: u64) -> Result<Self, SimError> {
        let mut runs = Vec::new();
        for mode in [AuthMode::None, AuthMode::Tbrd] {
            for attacked in [false, true] {
                runs.push(run_swarm(scn, mode, attacked, seed)?);
            }
        }
        let mut r = Self {
            scenario: scn.id.clone(),
            seed,
            params: scn.swarm,
            runs,
            deviation_none: Vec::new(),
            deviation_tbrd: Vec::new(),
        };
        r.deviation_none = max_deviation(r.run(AuthMode::None, true), r.run(AuthMode::None, false));
        r.deviation_tbrd = max_deviation(r.run(AuthMode::Tbrd, true), r.run(AuthMode::Tbrd, false));
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ttc_cases() {
        // head-on at 2 m/s closing, 10 m apart, reach 4 -> 3 s
        assert!((time_to_collision([10.0, 0.0], [2.0, 0.0], 4.0) - 3.0).abs() < 1e-12);
        assert_eq!(time_to_collision([10.0, 0.0], [-2.0, 0.0], 4.0), f64::INFINITY);
        assert_eq!(time_to_collision([10.0, 0.0], [0.0, 2.0], 4.0), f64::INFINITY);
        assert_eq!(time_to_collision([3.0, 0.0], [1.0, 0.0], 4.0), 0.0);
        assert_eq!(time_to_collision([3.0, 0.0], [-1.0, 0.0], 4.0), f64::INFINITY);
    }

    #[test]
    fn free_path_goes_straight() {
        let p = SwarmParams::default();
        let v = choose_velocity([0.0, 0.0], [10.0, 0.0], &[], &p);
        assert!((v[0] - 2.0).abs() < 1e-12 && v[1].abs() < 1e-12);
        let v = choose_velocity([0.0, 0.0], [1.0, 0.0], &[], &p);
        assert!((v[0] - 1.0).abs() < 1e-12);
        assert_eq!(choose_velocity([0.0, 0.0], [0.2, 0.0], &[], &p), [0.0, 0.0]);
    }

    #[test]
    fn blocked_path_veers_left() {
        let p = SwarmParams::default();
        let v = choose_velocity(
            [0.0, 0.0],
            [20.0, 0.0],
            &[Neighbour {
                pos: [6.0, 0.0],
                vel: [0.0, 0.0],
                age_s: 1.0,
            }],
            &p,
        );
        assert!(v[1] > 0.0, "{v:?}");
        let ttc = time_to_collision([6.0, 0.0], v, 4.0);
        assert!(ttc > p.tau_s);
    }

    #[test]
    fn segment_distance() {
        let d = segment_min_distance([0.0, 0.0], [1.0, 0.0], [4.0, 1.0], [-1.0, 0.0], 1.0);
        assert!((d - (4.0f64 + 1.0).sqrt()).abs() < 1e-12);
        let d = segment_min_distance([0.0, 0.0], [2.0, 0.0], [4.0, 1.0], [-2.0, 0.0], 5.0);
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn routes_cross_the_square() {
        let p = SwarmParams::default();
        assert_eq!(p.route(0), ([-20.0, -20.0], [20.0, 20.0]));
        assert_eq!(p.route(3), ([-20.0, 20.0], [20.0, -20.0]));
    }
}
