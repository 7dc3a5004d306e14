//! Mission registry with whole-file snapshot persistence.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::protocol::{
    ErrorCode, MissionStatus, ObserverQuery, QueryResponse, QueryStatus, RegisterRequest, Request, Response,
};
use super::{MissionService, UssError};
use crate::odid::AsciiId;
use crate::tesla::ChainKey;

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissionRecord {
    pub handle: String,
    pub operator_id: String,
    pub uas_id: String,
    pub window_start_ms: u64,
    pub window_end_ms: u64,
    pub k0: ChainKey,
    /// Declared start; 0 until started.
    pub t0_ms: u64,
    /// 0 until ended.
    pub t_end_ms: u64,
    pub status: MissionStatus,
    pub t_int_ms: u64,
    pub d: u32,
}

impl MissionRecord {
    /// Closed time span during which observations match this mission.
    fn observation_span(&self) -> Option<(u64, u64)> {
        match self.status {
            MissionStatus::Active => Some((self.t0_ms, self.window_end_ms)),
            MissionStatus::Ended => Some((self.t0_ms, self.t_end_ms)),
            MissionStatus::Registered => None,
            MissionStatus::Revoked => Some(if self.t0_ms > 0 {
                let end = if self.t_end_ms > 0 {
                    self.t_end_ms
                } else {
                    self.window_end_ms
                };
                (self.t0_ms, end)
            } else {
                (self.window_start_ms, self.window_end_ms)
            }),
        }
    }
}

/// Half-open windows `[a0, a1)` and `[b0, b1)` share at least one instant.
pub fn windows_overlap(a: (u64, u64), b: (u64, u64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

#[derive(Debug, Default, Clone, Serialize, Deserialize, PartialEq)]
struct State {
    version: u32,
    next_handle: u64,
    missions: BTreeMap<String, MissionRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("reading snapshot {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("snapshot {path} is corrupt: {detail}")]
    Corrupt { path: PathBuf, detail: String },
}

/// The registry. All operations go through one mutex, so every request is
/// applied atomically with respect to every other.
#[derive(Debug)]
pub struct Registry {
    state: Mutex<State>,
    snapshot_path: Option<PathBuf>,
}

type Outcome<T> = Result<T, (ErrorCode, String)>;

impl Default for Registry {
    fn default() -> Self {
        Self {
            state: Mutex::new(State {
                version: SNAPSHOT_VERSION,
                ..State::default()
            }),
            snapshot_path: None,
        }
    }
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Open a persistent registry: restore `path` if it exists, otherwise
    /// start empty. Every mutation is written back before it is acknowledged.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, SnapshotError> {
        let path = path.into();
        let state = if path.exists() {
            Self::load_state(&path)?
        } else {
            State {
                version: SNAPSHOT_VERSION,
                ..State::default()
            }
        };
        Ok(Self {
            state: Mutex::new(state),
            snapshot_path: Some(path),
        })
    }

    /// Restore a registry from a snapshot without persisting further changes.
    pub fn restore(path: &Path) -> Result<Self, SnapshotError> {
        Ok(Self {
            state: Mutex::new(Self::load_state(path)?),
            snapshot_path: None,
        })
    }

    fn load_state(path: &Path) -> Result<State, SnapshotError> {
        let raw = fs::read(path).map_err(|source| SnapshotError::Io {
            path: path.to_owned(),
            source,
        })?;
        let corrupt = |detail: String| SnapshotError::Corrupt {
            path: path.to_owned(),
            detail,
        };
        let state: State = serde_json::from_slice(&raw).map_err(|e| corrupt(e.to_string()))?;
        if state.version != SNAPSHOT_VERSION {
            return Err(corrupt(format!("unsupported version {}", state.version)));
        }
        for (h, rec) in &state.missions {
            if *h != rec.handle {
                return Err(corrupt(format!("record key {h} does not match handle")));
            }
        }
        Ok(state)
    }

    /// Write the full registry to `path` atomically (temp file + rename).
    pub fn snapshot(&self, path: &Path) -> std::io::Result<()> {
        let state = self.state.lock().unwrap();
        write_atomic(path, &state)
    }

    pub fn records(&self) -> Vec<MissionRecord> {
        self.state.lock().unwrap().missions.values().cloned().collect()
    }

    pub fn get(&self, handle: &str) -> Option<MissionRecord> {
        self.state.lock().unwrap().missions.get(handle).cloned()
    }

    /// Dispatch one protocol request.
    pub fn handle(&self, req: &Request) -> Response {
        let ack = |r: Outcome<MissionRecord>| match r {
            Ok(rec) => Response::Ack {
                handle: rec.handle,
                status: rec.status,
            },
            Err((code, msg)) => Response::error(code, msg),
        };
        match req {
            Request::Register(r) => ack(self.mutate(|s| register(s, r))),
            Request::Start { handle, t0_ms } => ack(self.mutate(|s| start(s, handle, *t0_ms))),
            Request::End { handle, t_end_ms } => ack(self.mutate(|s| end(s, handle, *t_end_ms))),
            Request::Revoke { handle } => ack(self.mutate(|s| revoke(s, handle))),
            Request::Query(q) => {
                log::info!(
                    "query observer={} uas={} t_obs={}",
                    q.observer_id,
                    q.uas_id,
                    q.t_obs_ms
                );
                if q.t_obs_ms == 0 {
                    return Response::error(ErrorCode::InvalidRequest, "t_obs_ms must be positive");
                }
                Response::QueryResult(query(&self.state.lock().unwrap(), q))
            }
        }
    }

    /// Apply `f` under the lock, persist, and roll back if persisting fails.
    fn mutate(&self, f: impl FnOnce(&mut State) -> Outcome<MissionRecord>) -> Outcome<MissionRecord> {
        let mut guard = self.state.lock().unwrap();
        let before = self.snapshot_path.as_ref().map(|_| guard.clone());
        let rec = f(&mut guard)?;
        if let (Some(path), Some(before)) = (&self.snapshot_path, before) {
            if let Err(e) = write_atomic(path, &guard) {
                *guard = before;
                return Err((ErrorCode::Storage, e.to_string()));
            }
        }
        Ok(rec)
    }
}

impl MissionService for Registry {
    fn call(&self, req: &Request) -> Result<Response, UssError> {
        Ok(self.handle(req))
    }
}

fn write_atomic(path: &Path, state: &State) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile_in(dir, path)?;
    let body = serde_json::to_vec_pretty(state).map_err(std::io::Error::other)?;
    tmp.1.write_all(&body)?;
    tmp.1.sync_all()?;
    drop(tmp.1);
    fs::rename(&tmp.0, path)
}

fn tempfile_in(dir: &Path, target: &Path) -> std::io::Result<(PathBuf, fs::File)> {
    let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("snapshot");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let f = fs::File::create(&tmp)?;
    Ok((tmp, f))
}

fn invalid(msg: impl Into<String>) -> (ErrorCode, String) {
    (ErrorCode::InvalidRequest, msg.into())
}

fn register(s: &mut State, r: &RegisterRequest) -> Outcome<MissionRecord> {
    AsciiId::new(&r.operator_id).map_err(|e| invalid(format!("operator_id: {e}")))?;
    AsciiId::new(&r.uas_id).map_err(|e| invalid(format!("uas_id: {e}")))?;
    if r.operator_id.is_empty() || r.uas_id.is_empty() {
        return Err(invalid("operator_id and uas_id must be non-empty"));
    }
    if r.end_ms <= r.start_ms {
        return Err(invalid("end_ms must be after start_ms"));
    }
    if r.t_int_ms == 0 || r.d == 0 {
        return Err(invalid("t_int_ms and d must be positive"));
    }
    for rec in s.missions.values() {
        if rec.status == MissionStatus::Revoked || rec.uas_id != r.uas_id {
            continue;
        }
        let same = rec.operator_id == r.operator_id
            && rec.window_start_ms == r.start_ms
            && rec.window_end_ms == r.end_ms
            && rec.k0 == r.k0;
        if same {
            return Err((
                ErrorCode::Duplicate,
                format!("mission already registered as {}", rec.handle),
            ));
        }
        if windows_overlap((rec.window_start_ms, rec.window_end_ms), (r.start_ms, r.end_ms)) {
            return Err((
                ErrorCode::Conflict,
                format!("window overlaps mission {} for {}", rec.handle, rec.uas_id),
            ));
        }
    }
    s.next_handle += 1;
    let rec = MissionRecord {
        handle: format!("m-{:06}", s.next_handle),
        operator_id: r.operator_id.clone(),
        uas_id: r.uas_id.clone(),
        window_start_ms: r.start_ms,
        window_end_ms: r.end_ms,
        k0: r.k0,
        t0_ms: 0,
        t_end_ms: 0,
        status: MissionStatus::Registered,
        t_int_ms: r.t_int_ms,
        d: r.d,
    };
    s.missions.insert(rec.handle.clone(), rec.clone());
    Ok(rec)
}

fn lookup<'a>(s: &'a mut State, handle: &str) -> Outcome<&'a mut MissionRecord> {
    s.missions
        .get_mut(handle)
        .ok_or_else(|| (ErrorCode::UnknownHandle, format!("no mission {handle}")))
}

fn start(s: &mut State, handle: &str, t0_ms: u64) -> Outcome<MissionRecord> {
    let rec = lookup(s, handle)?;
    if rec.status != MissionStatus::Registered {
        return Err((
            ErrorCode::IllegalTransition,
            format!("cannot start mission in state {:?}", rec.status),
        ));
    }
    if t0_ms < rec.window_start_ms || t0_ms > rec.window_end_ms {
        return Err((
            ErrorCode::OutsideWindow,
            format!(
                "start {t0_ms} outside window [{}, {}]",
                rec.window_start_ms, rec.window_end_ms
            ),
        ));
    }
    rec.t0_ms = t0_ms;
    rec.status = MissionStatus::Active;
    Ok(rec.clone())
}

fn end(s: &mut State, handle: &str, t_end_ms: u64) -> Outcome<MissionRecord> {
    let rec = lookup(s, handle)?;
    if rec.status != MissionStatus::Active {
        return Err((
            ErrorCode::IllegalTransition,
            format!("cannot end mission in state {:?}", rec.status),
        ));
    }
    if t_end_ms < rec.t0_ms {
        return Err(invalid(format!("end {t_end_ms} precedes start {}", rec.t0_ms)));
    }
    rec.t_end_ms = t_end_ms;
    rec.status = MissionStatus::Ended;
    Ok(rec.clone())
}

fn revoke(s: &mut State, handle: &str) -> Outcome<MissionRecord> {
    let rec = lookup(s, handle)?;
    rec.status = MissionStatus::Revoked;
    Ok(rec.clone())
}

fn query(s: &State, q: &ObserverQuery) -> QueryResponse {
    let covering = |rec: &&MissionRecord| {
        rec.uas_id == q.uas_id
            && rec
                .observation_span()
                .is_some_and(|(a, b)| a <= q.t_obs_ms && q.t_obs_ms <= b)
    };
    let mut revoked = false;
    for rec in s.missions.values().filter(covering) {
        if rec.status == MissionStatus::Revoked {
            revoked = true;
            continue;
        }
        return QueryResponse {
            status: QueryStatus::Found,
            k0: Some(rec.k0),
            t0_ms: Some(rec.t0_ms),
            t_end_ms: (rec.t_end_ms > 0).then_some(rec.t_end_ms),
            t_int_ms: Some(rec.t_int_ms),
            d: Some(rec.d),
            operator_id: Some(rec.operator_id.clone()),
        };
    }
    QueryResponse::empty(if revoked {
        QueryStatus::Revoked
    } else {
        QueryStatus::NoMission
    })
}
