//! Line-delimited JSON over TCP. One request document per line, one
//! response document per line, a fresh connection per request.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::str::FromStr;
use std::time::Duration;

use serde_json::Value;

use super::{validate_response, Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub host: String,
    pub port: u16,
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s.strip_prefix("tcp://").ok_or_else(|| format!("endpoint `{s}` must start with tcp://"))?;
        let (host, port) = rest.rsplit_once(':').ok_or_else(|| format!("endpoint `{s}` has no port"))?;
        if host.is_empty() {
            return Err(format!("endpoint `{s}` has no host"));
        }
        let port = port.parse().map_err(|_| format!("endpoint `{s}` has an invalid port"))?;
        Ok(Endpoint { host: host.to_string(), port })
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "tcp://{}:{}", self.host, self.port)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: Endpoint,
    pub timeout: Duration,
    /// Extra attempts after a transport failure or timeout. Malformed
    /// responses are never retried.
    pub retries: u32,
}

impl RemoteConfig {
    pub fn new(endpoint: Endpoint) -> Self {
        Self { endpoint, timeout: Duration::from_secs(30), retries: 2 }
    }
}

#[derive(Debug)]
pub struct RemoteReasoner {
    config: RemoteConfig,
}

impl RemoteReasoner {
    pub fn new(config: RemoteConfig) -> Self {
        Self { config }
    }

    fn exchange(&self, line: &str) -> Result<String, ReasonerError> {
        let ep = &self.config.endpoint;
        let addr = (ep.host.as_str(), ep.port)
            .to_socket_addrs()
            .map_err(|e| ReasonerError::TransportError(format!("{ep}: {e}")))?
            .next()
            .ok_or_else(|| ReasonerError::TransportError(format!("{ep}: no address")))?;
        let stream = TcpStream::connect_timeout(&addr, self.config.timeout).map_err(|e| io_error(ep, e))?;
        stream.set_read_timeout(Some(self.config.timeout)).map_err(|e| io_error(ep, e))?;
        stream.set_write_timeout(Some(self.config.timeout)).map_err(|e| io_error(ep, e))?;
        let mut writer = stream.try_clone().map_err(|e| io_error(ep, e))?;
        writer.write_all(line.as_bytes()).map_err(|e| io_error(ep, e))?;
        writer.write_all(b"\n").map_err(|e| io_error(ep, e))?;
        writer.flush().map_err(|e| io_error(ep, e))?;
        let mut response = String::new();
        let n = BufReader::new(stream).read_line(&mut response).map_err(|e| io_error(ep, e))?;
        if n == 0 {
            return Err(ReasonerError::TransportError(format!("{ep}: connection closed without a response")));
        }
        Ok(response)
    }
}

fn io_error(ep: &Endpoint, e: std::io::Error) -> ReasonerError {
    match e.kind() {
        std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => ReasonerError::Timeout,
        _ => ReasonerError::TransportError(format!("{ep}: {e}")),
    }
}

impl Reasoner for RemoteReasoner {
    fn respond(&mut self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        let line = request.to_document().to_string();
        let mut attempt = 0;
        loop {
            match self.exchange(&line) {
                Ok(raw) => {
                    let doc: Value = serde_json::from_str(raw.trim())
                        .map_err(|e| ReasonerError::MalformedResponse(format!("not JSON: {e}")))?;
                    return validate_response(request, &doc);
                }
                Err(e) if attempt < self.config.retries => {
                    log::warn!("reasoner request failed ({e}), retrying");
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}
