//! UAS Service Supplier: mission registry and observer lookups.

mod client;
pub mod protocol;
mod registry;
mod server;

pub use client::UssClient;
pub use protocol::{
    ErrorCode, MissionStatus, ObserverQuery, QueryResponse, QueryStatus, RegisterRequest, Request, Response,
};
pub use registry::{windows_overlap, MissionRecord, Registry, SnapshotError};
pub use server::{ServerHandle, UssServer};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UssError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("rejected ({code:?}): {message}")]
    Rejected { code: ErrorCode, message: String },
}

impl UssError {
    /// True when retrying later might succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, UssError::Transport(_))
    }
}

/// Acknowledgement of a mission state change.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ack {
    pub handle: String,
    pub status: MissionStatus,
}

/// Anything that answers USS requests: the in-process [`Registry`] or a
/// remote server through [`UssClient`].
pub trait MissionService {
    fn call(&self, req: &Request) -> Result<Response, UssError>;

    fn register(&self, req: &RegisterRequest) -> Result<Ack, UssError> {
        expect_ack(self.call(&Request::Register(req.clone()))?)
    }

    fn start(&self, handle: &str, t0_ms: u64) -> Result<Ack, UssError> {
        expect_ack(self.call(&Request::Start {
            handle: handle.to_owned(),
            t0_ms,
        })?)
    }

    fn end(&self, handle: &str, t_end_ms: u64) -> Result<Ack, UssError> {
        expect_ack(self.call(&Request::End {
            handle: handle.to_owned(),
            t_end_ms,
        })?)
    }

    fn revoke(&self, handle: &str) -> Result<Ack, UssError> {
        expect_ack(self.call(&Request::Revoke {
            handle: handle.to_owned(),
        })?)
    }

    fn query(&self, q: &ObserverQuery) -> Result<QueryResponse, UssError> {
        match self.call(&Request::Query(q.clone()))? {
            Response::QueryResult(r) => {
                let has_k0 = r.k0.is_some();
                if has_k0 != (r.status == QueryStatus::Found) {
                    return Err(UssError::Protocol("k0 present iff status is found".into()));
                }
                Ok(r)
            }
            Response::Error { code, message } => Err(UssError::Rejected { code, message }),
            other => Err(UssError::Protocol(format!("unexpected response {other:?}"))),
        }
    }
}

impl<T: MissionService + ?Sized> MissionService for &T {
    fn call(&self, req: &Request) -> Result<Response, UssError> {
        (**self).call(req)
    }
}

impl<T: MissionService + ?Sized> MissionService for std::sync::Arc<T> {
    fn call(&self, req: &Request) -> Result<Response, UssError> {
        (**self).call(req)
    }
}

fn expect_ack(resp: Response) -> Result<Ack, UssError> {
    match resp {
        Response::Ack { handle, status } => Ok(Ack { handle, status }),
        Response::Error { code, message } => Err(UssError::Rejected { code, message }),
        other => Err(UssError::Protocol(format!("unexpected response {other:?}"))),
    }
}
