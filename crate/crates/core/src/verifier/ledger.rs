use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

/// Result of recording an authenticated `(uas_id, interval)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerEntry {
    New,
    /// Same payload seen before.
    Duplicate,
    /// Same interval, different payload: the key was used twice.
    Conflict,
}

/// Key-reuse ledger, optionally mirrored to an append-only file so reuse
/// is caught across runs. File lines are `uas_id,interval,sha256hex`.
#[derive(Debug, Default)]
pub struct ReplayLedger {
    seen: HashMap<(String, u64), [u8; 32]>,
    file: Option<File>,
}

impl ReplayLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_file(path: &Path) -> io::Result<Self> {
        let mut seen = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                let mut parts = line.rsplitn(3, ',');
                let (Some(h), Some(i), Some(uas)) = (parts.next(), parts.next(), parts.next()) else {
                    continue;
                };
                let (Ok(i), Ok(h)) = (i.parse::<u64>(), hex::decode(h)) else {
                    continue;
                };
                if let Ok(h) = <[u8; 32]>::try_from(h) {
                    seen.entry((uas.to_owned(), i)).or_insert(h);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            seen,
            file: Some(file),
        })
    }

    pub fn record(&mut self, uas_id: &str, interval: u64, payload: &[u8]) -> LedgerEntry {
        let h: [u8; 32] = Sha256::digest(payload).into();
        match self.seen.get(&(uas_id.to_owned(), interval)) {
            Some(prev) if *prev == h => LedgerEntry::Duplicate,
            Some(_) => LedgerEntry::Conflict,
            None => {
                self.seen.insert((uas_id.to_owned(), interval), h);
                if let Some(f) = &mut self.file {
                    if let Err(e) = writeln!(f, "{uas_id},{interval},{}", hex::encode(h)) {
                        log::warn!("replay ledger write failed: {e}");
                    }
                }
                LedgerEntry::New
            }
        }
    }
}
