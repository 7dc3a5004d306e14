//! Seeded broadcast channel and the event engine that drives it.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{derive_seed, Adversary, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Independent per-receiver drop probability.
    #[serde(default)]
    pub loss_prob: f64,
    /// Delivery delay is uniform in `0..=jitter_ms`.
    #[serde(default)]
    pub jitter_ms: u64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            loss_prob: 0.0,
            jitter_ms: 0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(SimError::Config(format!(
                "loss_prob {} outside [0, 1]",
                self.loss_prob
            )));
        }
        Ok(())
    }
}

/// Who put a transmission on the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Honest,
    Replay,
    Ghost,
    Forgery,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transmission {
    pub t_ms: u64,
    pub sender: String,
    pub origin: Origin,
    pub pack: Arc<Vec<u8>>,
}

impl Transmission {
    pub fn new(t_ms: u64, sender: impl Into<String>, origin: Origin, pack: Vec<u8>) -> Self {
        Self {
            t_ms,
            sender: sender.into(),
            origin,
            pack: Arc::new(pack),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub t_ms: u64,
    pub receiver: String,
    pub sent_ms: u64,
    pub sender: String,
    pub origin: Origin,
    pub pack: Arc<Vec<u8>>,
}

struct Queued<T> {
    t_ms: u64,
    seq: u64,
    item: T,
}

impl<T> PartialEq for Queued<T> {
    fn eq(&self, o: &Self) -> bool {
        (self.t_ms, self.seq) == (o.t_ms, o.seq)
    }
}
impl<T> Eq for Queued<T> {}
impl<T> PartialOrd for Queued<T> {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl<T> Ord for Queued<T> {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        (self.t_ms, self.seq).cmp(&(o.t_ms, o.seq))
    }
}

/// Every receiver hears every transmission (except its own) subject to
/// loss and jitter. Each sender draws from its own random stream, so adding
/// or removing one sender never changes what another sender's packs do.
pub struct SimChannel {
    cfg: ChannelConfig,
    receivers: Vec<String>,
    streams: BTreeMap<String, ChaCha8Rng>,
    queue: BinaryHeap<Reverse<Queued<Delivery>>>,
    seq: u64,
}

impl SimChannel {
    pub fn new(cfg: ChannelConfig, receivers: Vec<String>) -> Result<Self, SimError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            receivers,
            streams: BTreeMap::new(),
            queue: BinaryHeap::new(),
            seq: 0,
        })
    }

    pub fn receivers(&self) -> &[String] {
        &self.receivers
    }

    pub fn transmit(&mut self, tx: &Transmission) {
        let seed = self.cfg.seed;
        let rng = self
            .streams
            .entry(tx.sender.clone())
            .or_insert_with(|| ChaCha8Rng::from_seed(derive_seed(seed, &format!("channel/{}", tx.sender))));
        for r in &self.receivers {
            // draw both values every time to keep the stream aligned
            let lost = rng.gen_bool(self.cfg.loss_prob);
            let delay = rng.gen_range(0..=self.cfg.jitter_ms);
            if lost || *r == tx.sender {
                continue;
            }
            self.seq += 1;
            self.queue.push(Reverse(Queued {
                t_ms: tx.t_ms + delay,
                seq: self.seq,
                item: Delivery {
                    t_ms: tx.t_ms + delay,
                    receiver: r.clone(),
                    sent_ms: tx.t_ms,
                    sender: tx.sender.clone(),
                    origin: tx.origin,
                    pack: tx.pack.clone(),
                },
            }));
        }
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.queue.peek().map(|q| q.0.t_ms)
    }

    /// Next delivery strictly before `limit_ms`.
    pub fn pop_before(&mut self, limit_ms: u64) -> Option<Delivery> {
        if self.peek_time()? < limit_ms {
            self.queue.pop().map(|q| q.0.item)
        } else {
            None
        }
    }
}

/// Runs transmissions (scheduled, adversarial and injected) and
/// deliveries in global time order.
pub struct Engine {
    pub channel: SimChannel,
    adversaries: Vec<Box<dyn Adversary>>,
    pending: BinaryHeap<Reverse<Queued<Transmission>>>,
    seq: u64,
    now_ms: u64,
    sent: Vec<Transmission>,
}

impl Engine {
    pub fn new(channel: SimChannel, adversaries: Vec<Box<dyn Adversary>>, start_ms: u64) -> Self {
        Self {
            channel,
            adversaries,
            pending: BinaryHeap::new(),
            seq: 0,
            now_ms: start_ms,
            sent: Vec::new(),
        }
    }

    pub fn submit(&mut self, tx: Transmission) {
        self.seq += 1;
        self.pending.push(Reverse(Queued {
            t_ms: tx.t_ms,
            seq: self.seq,
            item: tx,
        }));
    }

    /// Everything put on the air so far, in send order.
    pub fn transmissions(&self) -> &[Transmission] {
        &self.sent
    }

    /// Process all events before `until_ms`, handing deliveries to `sink`.
    /// Deliveries win ties against transmissions at the same millisecond.
    pub fn advance(&mut self, until_ms: u64, mut sink: impl FnMut(&Delivery)) {
        let from = self.now_ms;
        let mut own = Vec::new();
        for a in &mut self.adversaries {
            own.extend(a.schedule(from, until_ms));
        }
        for tx in own {
            self.submit(tx);
        }
        loop {
            let next_tx = self.pending.peek().map(|q| q.0.t_ms).filter(|&t| t < until_ms);
            let next_del = self.channel.peek_time().filter(|&t| t < until_ms);
            match (next_tx, next_del) {
                (None, None) => break,
                (Some(t), Some(d)) if d <= t => {
                    let del = self.channel.pop_before(until_ms).unwrap();
                    sink(&del);
                }
                (None, Some(_)) => {
                    let del = self.channel.pop_before(until_ms).unwrap();
                    sink(&del);
                }
                (Some(_), _) => {
                    let tx = self.pending.pop().unwrap().0.item;
                    self.channel.transmit(&tx);
                    if tx.origin == Origin::Honest {
                        let mut injected = Vec::new();
                        for a in &mut self.adversaries {
                            injected.extend(a.capture(&tx));
                        }
                        for inj in injected {
                            debug_assert!(inj.t_ms >= tx.t_ms);
                            self.submit(inj);
                        }
                    }
                    self.sent.push(tx);
                }
            }
        }
        self.now_ms = self.now_ms.max(until_ms);
    }
}

/// Fan a transmission script out over the channel, with adversaries
/// listening in. The script is ordered by time (stable) before running.
pub fn run_channel(
    script: Vec<Transmission>,
    receivers: Vec<String>,
    cfg: ChannelConfig,
    adversaries: Vec<Box<dyn Adversary>>,
) -> Result<Vec<Delivery>, SimError> {
    let start = script.iter().map(|t| t.t_ms).min().unwrap_or(0);
    let mut engine = Engine::new(SimChannel::new(cfg, receivers)?, adversaries, start);
    for tx in script {
        engine.submit(tx);
    }
    let mut trace = Vec::new();
    engine.advance(u64::MAX, |d| trace.push(d.clone()));
    Ok(trace)
}
