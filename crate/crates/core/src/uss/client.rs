use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::protocol::{read_frame, write_frame, Request, Response};
use super::{MissionService, UssError};

/// Remote USS over the framed TCP protocol. Each call opens a fresh
/// connection.
#[derive(Debug, Clone)]
pub struct UssClient {
    addr: SocketAddr,
    timeout: Duration,
}

impl UssClient {
    pub fn new(addr: impl ToSocketAddrs) -> Result<Self, UssError> {
        let addr = addr
            .to_socket_addrs()
            .map_err(|e| UssError::Transport(e.to_string()))?
            .next()
            .ok_or_else(|| UssError::Transport("address resolved to nothing".into()))?;
        Ok(Self {
            addr,
            timeout: Duration::from_secs(5),
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl MissionService for UssClient {
    fn call(&self, req: &Request) -> Result<Response, UssError> {
        let transport = |e: std::io::Error| UssError::Transport(e.to_string());
        let stream = TcpStream::connect_timeout(&self.addr, self.timeout).map_err(transport)?;
        stream.set_read_timeout(Some(self.timeout)).map_err(transport)?;
        stream.set_write_timeout(Some(self.timeout)).map_err(transport)?;
        let mut writer = BufWriter::new(stream.try_clone().map_err(transport)?);
        write_frame(&mut writer, req).map_err(transport)?;
        let mut reader = BufReader::new(stream);
        let body = read_frame(&mut reader)
            .map_err(transport)?
            .ok_or_else(|| UssError::Transport("connection closed before response".into()))?;
        serde_json::from_slice(&body).map_err(|e| UssError::Protocol(e.to_string()))
    }
}
