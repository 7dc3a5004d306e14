//! Framed JSON request/response protocol.
//!
//! Each frame is a 4-byte big-endian length followed by a UTF-8 JSON object
//! whose `"type"` field names the request or response. 32-byte values are
//! lowercase hex.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use crate::tesla::ChainKey;

/// Frames above this size are refused.
pub const MAX_FRAME_LEN: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub operator_id: String,
    pub uas_id: String,
    pub start_ms: u64,
    pub end_ms: u64,
    pub k0: ChainKey,
    pub t_int_ms: u64,
    pub d: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObserverQuery {
    pub observer_id: String,
    pub uas_id: String,
    pub t_obs_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Register(RegisterRequest),
    Start { handle: String, t0_ms: u64 },
    End { handle: String, t_end_ms: u64 },
    Revoke { handle: String },
    Query(ObserverQuery),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionStatus {
    Registered,
    Active,
    Ended,
    Revoked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Found,
    NoMission,
    Revoked,
}

/// Answer to an observer query. Mission fields are present iff `status` is
/// `found`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub status: QueryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<ChainKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_int_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator_id: Option<String>,
}

impl QueryResponse {
    pub fn empty(status: QueryStatus) -> Self {
        Self {
            status,
            k0: None,
            t0_ms: None,
            t_end_ms: None,
            t_int_ms: None,
            d: None,
            operator_id: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Duplicate,
    Conflict,
    UnknownHandle,
    IllegalTransition,
    OutsideWindow,
    InvalidRequest,
    Malformed,
    Storage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Ack { handle: String, status: MissionStatus },
    QueryResult(QueryResponse),
    Error { code: ErrorCode, message: String },
}

impl Response {
    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Response::Error {
            code,
            message: message.into(),
        }
    }
}

/// Serialize `msg` and write it as one length-prefixed frame.
pub fn write_frame<W: Write, T: Serialize>(w: &mut W, msg: &T) -> io::Result<()> {
    let body = serde_json::to_vec(msg).map_err(io::Error::other)?;
    encode_frame_into(w, &body)
}

pub fn encode_frame_into<W: Write>(w: &mut W, body: &[u8]) -> io::Result<()> {
    if body.len() > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(body)?;
    w.flush()
}

/// Read one frame body. Returns `Ok(None)` on a clean EOF before the length.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds {MAX_FRAME_LEN}"),
        ));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_json_shape() {
        let q = Request::Query(ObserverQuery {
            observer_id: "obs-1".into(),
            uas_id: "UAS-1".into(),
            t_obs_ms: 5,
        });
        assert_eq!(
            serde_json::to_string(&q).unwrap(),
            r#"{"type":"query","observer_id":"obs-1","uas_id":"UAS-1","t_obs_ms":5}"#
        );
        let s = Request::Start {
            handle: "m-1".into(),
            t0_ms: 10,
        };
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"type":"start","handle":"m-1","t0_ms":10}"#
        );
    }

    #[test]
    fn absent_fields_are_omitted() {
        let r = Response::QueryResult(QueryResponse::empty(QueryStatus::NoMission));
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"type":"query_result","status":"no_mission"}"#
        );
    }

    #[test]
    fn framing() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &Request::Revoke { handle: "m-7".into() }).unwrap();
        assert_eq!(&buf[..4], &(buf.len() as u32 - 4).to_be_bytes());
        let mut cur = std::io::Cursor::new(buf);
        let body = read_frame(&mut cur).unwrap().unwrap();
        let req: Request = serde_json::from_slice(&body).unwrap();
        assert_eq!(req, Request::Revoke { handle: "m-7".into() });
        assert!(read_frame(&mut cur).unwrap().is_none());

        let mut huge = std::io::Cursor::new(((MAX_FRAME_LEN + 1) as u32).to_be_bytes().to_vec());
        assert!(read_frame(&mut huge).is_err());
        let mut short = std::io::Cursor::new(vec![0, 0, 0, 9, b'{']);
        assert!(read_frame(&mut short).is_err());
    }
}
