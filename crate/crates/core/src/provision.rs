//! Mission provisioning: keychain generation, the transmitter keys file,
//! sealed seed storage and the USS registration request.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::RngCore;
use thiserror::Error;

use crate::odid::AsciiId;
use crate::tesla::{generate_chain, ChainKey, ChainParams, KeyChain, TeslaError, KEY_LEN};
use crate::uss::RegisterRequest;

pub const KEYS_MAGIC: &str = "TBRD-KEYS v1";

#[derive(Debug, Error)]
pub enum ProvisionError {
    #[error("invalid mission plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Tesla(#[from] TeslaError),
    #[error("keys file line {line}: {detail}")]
    KeysFormat { line: usize, detail: String },
    #[error("seed file: {0}")]
    Seed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissionPlan {
    pub operator_id: String,
    pub uas_id: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub t_int_ms: u64,
    pub d: u32,
}

impl MissionPlan {
    pub fn validate(&self) -> Result<(), ProvisionError> {
        AsciiId::new(&self.operator_id)
            .map_err(|e| ProvisionError::InvalidPlan(format!("operator_id: {e}")))?;
        AsciiId::new(&self.uas_id).map_err(|e| ProvisionError::InvalidPlan(format!("uas_id: {e}")))?;
        if self.end_ms <= self.start_ms {
            return Err(ProvisionError::InvalidPlan(format!(
                "end {} is not after start {}",
                self.end_ms, self.start_ms
            )));
        }
        if self.t_int_ms == 0 {
            return Err(ProvisionError::InvalidPlan("t_int_ms must be positive".into()));
        }
        if self.d == 0 {
            return Err(ProvisionError::InvalidPlan("d must be at least 1".into()));
        }
        let n = self.intervals();
        if n > u32::MAX as u64 {
            return Err(ProvisionError::InvalidPlan(format!("{n} intervals is too many")));
        }
        Ok(())
    }

    /// ceil(duration / T_int).
    pub fn intervals(&self) -> u64 {
        (self.end_ms - self.start_ms).div_ceil(self.t_int_ms)
    }

    pub fn params(&self) -> Result<ChainParams, ProvisionError> {
        self.validate()?;
        Ok(ChainParams::new(
            self.t_int_ms,
            self.d,
            self.intervals() as u32,
            0,
        )?)
    }
}

/// The 32-byte chain seed `K_n`, held only by the provisioner.
#[derive(Clone, PartialEq, Eq)]
pub struct SealedSeed([u8; KEY_LEN]);

impl std::fmt::Debug for SealedSeed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SealedSeed(..)")
    }
}

impl SealedSeed {
    pub fn generate() -> Self {
        let mut s = [0u8; KEY_LEN];
        rand::rngs::OsRng.fill_bytes(&mut s);
        Self(s)
    }

    pub fn from_bytes(b: [u8; KEY_LEN]) -> Self {
        Self(b)
    }

    pub fn from_hex(s: &str) -> Result<Self, ProvisionError> {
        let raw = hex::decode(s.trim()).map_err(|e| ProvisionError::Seed(e.to_string()))?;
        let arr: [u8; KEY_LEN] = raw
            .try_into()
            .map_err(|v: Vec<u8>| ProvisionError::Seed(format!("expected 32 bytes, got {}", v.len())))?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }

    /// Write as hex to a file only the owner can read.
    pub fn store(&self, path: &Path) -> Result<(), ProvisionError> {
        let mut opts = fs::OpenOptions::new();
        opts.write(true).create(true).truncate(true);
        #[cfg(unix)]
        {
            use std::os::unix::fs::OpenOptionsExt;
            opts.mode(0o600);
        }
        let mut f = opts.open(path)?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            f.set_permissions(fs::Permissions::from_mode(0o600))?;
        }
        io::Write::write_all(&mut f, hex::encode(self.0).as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ProvisionError> {
        Self::from_hex(&fs::read_to_string(path)?)
    }
}

/// Everything the transmitter needs: identities, schedule and `K_0..K_{n-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeysFile {
    pub operator_id: String,
    pub uas_id: String,
    pub t_int_ms: u64,
    pub d: u32,
    pub n: u32,
    /// 0 until the mission starts.
    pub t0_ms: u64,
    pub keys: Vec<ChainKey>,
}

impl KeysFile {
    pub fn from_chain(chain: &KeyChain, operator_id: &str, uas_id: &str) -> Self {
        let p = chain.params();
        Self {
            operator_id: operator_id.to_owned(),
            uas_id: uas_id.to_owned(),
            t_int_ms: p.t_int_ms,
            d: p.d,
            n: p.n,
            t0_ms: p.t0_ms,
            // K_n stays behind
            keys: chain.keys()[..p.n as usize].to_vec(),
        }
    }

    pub fn params(&self) -> Result<ChainParams, TeslaError> {
        ChainParams::new(self.t_int_ms, self.d, self.n, self.t0_ms)
    }

    pub fn commitment(&self) -> &ChainKey {
        &self.keys[0]
    }

    pub fn key(&self, i: u64) -> Option<&ChainKey> {
        self.keys.get(usize::try_from(i).ok()?)
    }

    /// Highest interval that can carry a MAC.
    pub fn last_interval(&self) -> u64 {
        self.keys.len() as u64 - 1
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(80 + self.keys.len() * 65);
        let _ = writeln!(s, "{KEYS_MAGIC}");
        let _ = writeln!(s, "operator_id={}", self.operator_id);
        let _ = writeln!(s, "uas_id={}", self.uas_id);
        let _ = writeln!(s, "t_int_ms={}", self.t_int_ms);
        let _ = writeln!(s, "d={}", self.d);
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "t0_ms={}", self.t0_ms);
        for k in &self.keys {
            let _ = writeln!(s, "{}", k.to_hex());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ProvisionError> {
        let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l));
        let bad = |line: usize, detail: String| ProvisionError::KeysFormat { line, detail };

        match lines.next() {
            Some((_, l)) if l == KEYS_MAGIC => {}
            Some((n, l)) => return Err(bad(n, format!("expected {KEYS_MAGIC:?}, found {l:?}"))),
            None => return Err(bad(1, "empty file".into())),
        }
        let mut field = |name: &str| -> Result<(usize, String), ProvisionError> {
            let (n, l) = lines.next().ok_or_else(|| bad(0, format!("missing {name}")))?;
            let v = l
                .strip_prefix(name)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| bad(n, format!("expected {name}=")))?;
            Ok((n, v.to_owned()))
        };
        let num = |(n, v): (usize, String)| -> Result<u64, ProvisionError> {
            v.parse::<u64>().map_err(|e| bad(n, e.to_string()))
        };

        let (_, operator_id) = field("operator_id")?;
        let (_, uas_id) = field("uas_id")?;
        let t_int_ms = num(field("t_int_ms")?)?;
        let d_line = field("d")?;
        let d_ln = d_line.0;
        let d = u32::try_from(num(d_line)?).map_err(|e| bad(d_ln, e.to_string()))?;
        let n_line = field("n")?;
        let n_ln = n_line.0;
        let n = u32::try_from(num(n_line)?).map_err(|e| bad(n_ln, e.to_string()))?;
        let t0_ms = num(field("t0_ms")?)?;

        let mut keys = Vec::with_capacity(n as usize);
        for (ln, l) in lines {
            if l.is_empty() {
                continue;
            }
            if l.len() != 2 * KEY_LEN || l.bytes().any(|b| b.is_ascii_uppercase()) {
                return Err(bad(ln, "key must be 64 lowercase hex characters".into()));
            }
            let k = ChainKey::from_hex(l).map_err(|e| bad(ln, e.to_string()))?;
            if let Some(prev) = keys.last() {
                if k.hash_once() != *prev {
                    return Err(bad(ln, "key does not hash to the previous line".into()));
                }
            }
            keys.push(k);
        }
        if keys.len() != n as usize {
            return Err(bad(0, format!("n={n} but {} keys present", keys.len())));
        }
        let kf = Self {
            operator_id,
            uas_id,
            t_int_ms,
            d,
            n,
            t0_ms,
            keys,
        };
        kf.params()?;
        Ok(kf)
    }

    pub fn write(&self, path: &Path) -> Result<(), ProvisionError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ProvisionError> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct PlannedMission {
    pub chain: KeyChain,
    pub keys_file: KeysFile,
    pub request: RegisterRequest,
}

pub fn plan_mission(plan: &MissionPlan, seed: &SealedSeed) -> Result<PlannedMission, ProvisionError> {
    let params = plan.params()?;
    let chain = generate_chain(seed.as_bytes(), params)?;
    let keys_file = KeysFile::from_chain(&chain, &plan.operator_id, &plan.uas_id);
    let request = RegisterRequest {
        operator_id: plan.operator_id.clone(),
        uas_id: plan.uas_id.clone(),
        start_ms: plan.start_ms,
        end_ms: plan.end_ms,
        k0: chain.commitment(),
        t_int_ms: plan.t_int_ms,
        d: plan.d,
    };
    Ok(PlannedMission {
        chain,
        keys_file,
        request,
    })
}
