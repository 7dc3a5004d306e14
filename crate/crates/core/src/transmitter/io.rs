//! Clocks, output channels and telemetry sources for the transmit loop.

use std::io::{self, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::TxError;

/// Default UDP port for pack broadcast.
pub const DEFAULT_UDP_PORT: u16 = 3411;

pub trait Clock {
    /// Unix epoch milliseconds.
    fn now_ms(&self) -> u64;
    fn sleep_until(&self, t_ms: u64);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }

    fn sleep_until(&self, t_ms: u64) {
        let now = self.now_ms();
        if t_ms > now {
            std::thread::sleep(Duration::from_millis(t_ms - now));
        }
    }
}

/// Manually driven clock. Clones share the same time.
#[derive(Debug, Clone, Default)]
pub struct SimClock(Arc<AtomicU64>);

impl SimClock {
    pub fn new(t_ms: u64) -> Self {
        Self(Arc::new(AtomicU64::new(t_ms)))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn set(&self, t_ms: u64) {
        self.0.store(t_ms, Ordering::SeqCst);
    }
}

impl Clock for SimClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    fn sleep_until(&self, t_ms: u64) {
        self.0.fetch_max(t_ms, Ordering::SeqCst);
    }
}

pub trait Channel {
    fn send(&mut self, pack: &[u8]) -> io::Result<()>;
}

pub struct UdpChannel {
    socket: UdpSocket,
    dest: SocketAddr,
}

impl UdpChannel {
    pub fn new(dest: SocketAddr) -> io::Result<Self> {
        let bind: SocketAddr = if dest.is_ipv4() {
            "0.0.0.0:0".parse().unwrap()
        } else {
            "[::]:0".parse().unwrap()
        };
        let socket = UdpSocket::bind(bind)?;
        socket.set_broadcast(true)?;
        Ok(Self { socket, dest })
    }
}

impl Channel for UdpChannel {
    fn send(&mut self, pack: &[u8]) -> io::Result<()> {
        self.socket.send_to(pack, self.dest).map(|_| ())
    }
}

/// Collects sent packs in memory.
#[derive(Debug, Default)]
pub struct MemoryChannel {
    pub sent: Vec<Vec<u8>>,
}

impl Channel for MemoryChannel {
    fn send(&mut self, pack: &[u8]) -> io::Result<()> {
        self.sent.push(pack.to_vec());
        Ok(())
    }
}

/// One lowercase hex line per pack.
pub struct HexChannel<W: Write>(pub W);

impl<W: Write> Channel for HexChannel<W> {
    fn send(&mut self, pack: &[u8]) -> io::Result<()> {
        writeln!(self.0, "{}", hex::encode(pack))?;
        self.0.flush()
    }
}

impl<C: Channel + ?Sized> Channel for &mut C {
    fn send(&mut self, pack: &[u8]) -> io::Result<()> {
        (**self).send(pack)
    }
}

impl<C: Channel + ?Sized> Channel for Box<C> {
    fn send(&mut self, pack: &[u8]) -> io::Result<()> {
        (**self).send(pack)
    }
}

/// Flight state at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    pub t_ms: u64,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
    pub speed_mps: f64,
    pub direction_deg: f64,
    pub vspeed_mps: f64,
    pub operator_lat_deg: f64,
    pub operator_lon_deg: f64,
}

impl Default for TelemetrySample {
    fn default() -> Self {
        Self {
            t_ms: 0,
            lat_deg: 37.2296,
            lon_deg: -80.4139,
            alt_m: 30.0,
            speed_mps: 0.0,
            direction_deg: 0.0,
            vspeed_mps: 0.0,
            operator_lat_deg: 37.2295,
            operator_lon_deg: -80.4140,
        }
    }
}

pub trait TelemetrySource {
    fn sample(&mut self, t_ms: u64) -> Result<TelemetrySample, TxError>;
}

impl<F: FnMut(u64) -> Result<TelemetrySample, TxError>> TelemetrySource for F {
    fn sample(&mut self, t_ms: u64) -> Result<TelemetrySample, TxError> {
        self(t_ms)
    }
}

/// Reports the same sample every time, stamped with the request time.
#[derive(Debug, Clone, Copy)]
pub struct StaticTelemetry(pub TelemetrySample);

impl TelemetrySource for StaticTelemetry {
    fn sample(&mut self, t_ms: u64) -> Result<TelemetrySample, TxError> {
        Ok(TelemetrySample { t_ms, ..self.0 })
    }
}

/// Replays a CSV of samples whose `t_ms` column is relative to the first
/// request. Holds the last row once the script runs out.
#[derive(Debug, Clone)]
pub struct ScriptTelemetry {
    rows: Vec<TelemetrySample>,
    base_ms: Option<u64>,
    cursor: usize,
}

impl ScriptTelemetry {
    pub fn new(rows: Vec<TelemetrySample>) -> Result<Self, TxError> {
        if rows.is_empty() {
            return Err(TxError::Telemetry("script has no rows".into()));
        }
        if rows.windows(2).any(|w| w[1].t_ms < w[0].t_ms) {
            return Err(TxError::Telemetry("script times must be non-decreasing".into()));
        }
        Ok(Self {
            rows,
            base_ms: None,
            cursor: 0,
        })
    }

    pub fn from_reader<R: io::Read>(r: R) -> Result<Self, TxError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let rows = rdr
            .deserialize()
            .collect::<Result<Vec<TelemetrySample>, _>>()
            .map_err(|e| TxError::Telemetry(e.to_string()))?;
        Self::new(rows)
    }

    pub fn from_path(path: &Path) -> Result<Self, TxError> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(f)
    }
}

impl TelemetrySource for ScriptTelemetry {
    fn sample(&mut self, t_ms: u64) -> Result<TelemetrySample, TxError> {
        let base = *self.base_ms.get_or_insert(t_ms);
        let rel = t_ms.saturating_sub(base);
        while self.cursor + 1 < self.rows.len() && self.rows[self.cursor + 1].t_ms <= rel {
            self.cursor += 1;
        }
        Ok(TelemetrySample {
            t_ms,
            ..self.rows[self.cursor]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_clock_never_goes_back() {
        let c = SimClock::new(100);
        c.sleep_until(50);
        assert_eq!(c.now_ms(), 100);
        c.sleep_until(150);
        assert_eq!(c.now_ms(), 150);
        let c2 = c.clone();
        c2.advance(5);
        assert_eq!(c.now_ms(), 155);
    }

    #[test]
    fn script_steps_through_rows() {
        let csv = "t_ms,lat_deg,lon_deg,alt_m,speed_mps,direction_deg,vspeed_mps,operator_lat_deg,operator_lon_deg\n\
                   0,1.0,2.0,10,1,90,0,1.0,2.0\n\
                   1000,1.1,2.0,10,1,90,0,1.0,2.0\n\
                   2500,1.2,2.0,10,1,90,0,1.0,2.0\n";
        let mut s = ScriptTelemetry::from_reader(csv.as_bytes()).unwrap();
        assert_eq!(s.sample(5000).unwrap().lat_deg, 1.0);
        assert_eq!(s.sample(5999).unwrap().lat_deg, 1.0);
        assert_eq!(s.sample(6000).unwrap().lat_deg, 1.1);
        let late = s.sample(9000).unwrap();
        assert_eq!(late.lat_deg, 1.2);
        assert_eq!(late.t_ms, 9000);
    }

    #[test]
    fn script_rejects_bad_input() {
        assert!(ScriptTelemetry::from_reader("t_ms,lat_deg\n".as_bytes()).is_err());
        assert!(ScriptTelemetry::new(vec![
            TelemetrySample {
                t_ms: 5,
                ..Default::default()
            },
            TelemetrySample {
                t_ms: 1,
                ..Default::default()
            },
        ])
        .is_err());
    }

    #[test]
    fn hex_channel_writes_lines() {
        let mut ch = HexChannel(Vec::new());
        ch.send(&[0xf2, 0x19]).unwrap();
        assert_eq!(ch.0, b"f219\n");
    }
}
