//! Line-oriented JSON protocol for remote backends.
//!
//! Each request is one line `{"op": "ramsey" | "acquire_iq", "channel": N,
//! "request": {...}}` and each response one line, either `{"ok": {...}}` or
//! `{"error": {"kind": ..., "message": ...}}`. Responses come back in
//! request order on every connection.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use readout_core::protocols::{BackendError, ExperimentBackend, IqRequest, RamseyRequest};
use readout_core::signal::{IqCloud, RamseyResult};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Serialize)]
struct Request<'a, T> {
    op: &'a str,
    channel: usize,
    request: &'a T,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    op: String,
    channel: usize,
    request: Value,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Response {
    Ok(Value),
    Error(BackendError),
}

fn protocol_error(msg: impl Into<String>) -> BackendError {
    BackendError::Protocol(msg.into())
}

fn decode<T: DeserializeOwned>(v: Value) -> Result<T, BackendError> {
    serde_json::from_value(v).map_err(|e| protocol_error(format!("bad request body: {e}")))
}

fn encode<T: Serialize>(v: T) -> Result<Value, BackendError> {
    serde_json::to_value(v).map_err(|e| protocol_error(e.to_string()))
}

/// Answer one request line against the channel backends.
pub fn handle_line<B: ExperimentBackend>(line: &str, backends: &[B]) -> String {
    let result = (|| {
        let env: Envelope =
            serde_json::from_str(line).map_err(|e| protocol_error(format!("malformed request: {e}")))?;
        let backend = backends
            .get(env.channel)
            .ok_or_else(|| BackendError::InvalidRequest(format!("no channel {}", env.channel)))?;
        match env.op.as_str() {
            "ramsey" => encode(backend.ramsey_under_drive(&decode::<RamseyRequest>(env.request)?)?),
            "acquire_iq" => encode(backend.acquire_iq(&decode::<IqRequest>(env.request)?)?),
            other => Err(protocol_error(format!("unknown op '{other}'"))),
        }
    })();
    let response = match result {
        Ok(v) => Response::Ok(v),
        Err(e) => Response::Error(e),
    };
    serde_json::to_string(&response).expect("response serializes")
}

/// Serve one connection until the peer closes it.
pub fn serve_connection<B: ExperimentBackend>(stream: TcpStream, backends: &[B]) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        if line.trim().is_empty() {
            continue;
        }
        writer.write_all(handle_line(line.trim_end(), backends).as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
}

/// Accept connections, one thread each, until `stop` is set.
pub fn serve<B: ExperimentBackend + Send + Sync + 'static>(
    listener: TcpListener,
    backends: Arc<Vec<B>>,
    stop: Arc<AtomicBool>,
) -> std::io::Result<()> {
    listener.set_nonblocking(true)?;
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                let backends = Arc::clone(&backends);
                std::thread::spawn(move || {
                    let _ = serve_connection(stream, &backends);
                });
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

/// Client side: an `ExperimentBackend` that forwards every call for one
/// channel over a TCP connection.
pub struct WireBackend {
    channel: usize,
    conn: Mutex<Connection>,
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

fn unavailable(e: impl std::fmt::Display) -> BackendError {
    BackendError::Unavailable(e.to_string())
}

impl WireBackend {
    pub fn connect(addr: impl ToSocketAddrs, channel: usize, timeout: Duration) -> Result<Self, BackendError> {
        let addr = addr.to_socket_addrs().map_err(unavailable)?.next().ok_or_else(|| unavailable("no address"))?;
        let stream = TcpStream::connect_timeout(&addr, timeout).map_err(unavailable)?;
        stream.set_read_timeout(Some(timeout)).map_err(unavailable)?;
        stream.set_write_timeout(Some(timeout)).map_err(unavailable)?;
        stream.set_nodelay(true).map_err(unavailable)?;
        let reader = BufReader::new(stream.try_clone().map_err(unavailable)?);
        Ok(WireBackend { channel, conn: Mutex::new(Connection { reader, writer: BufWriter::new(stream) }) })
    }

    fn call<T: Serialize, R: DeserializeOwned>(&self, op: &str, request: &T) -> Result<R, BackendError> {
        let mut line = serde_json::to_string(&Request { op, channel: self.channel, request })
            .map_err(|e| protocol_error(e.to_string()))?;
        line.push('\n');
        let mut conn = self.conn.lock().map_err(|_| unavailable("connection poisoned"))?;
        conn.writer.write_all(line.as_bytes()).map_err(unavailable)?;
        conn.writer.flush().map_err(unavailable)?;
        let mut reply = String::new();
        match conn.reader.read_line(&mut reply) {
            Ok(0) => return Err(unavailable("connection closed")),
            Ok(_) => {}
            Err(e) => return Err(unavailable(e)),
        }
        match serde_json::from_str::<Response>(&reply).map_err(|e| protocol_error(format!("bad response: {e}")))? {
            Response::Ok(v) => serde_json::from_value(v).map_err(|e| protocol_error(format!("bad result: {e}"))),
            Response::Error(e) => Err(e),
        }
    }
}

impl ExperimentBackend for WireBackend {
    fn ramsey_under_drive(&self, request: &RamseyRequest) -> Result<RamseyResult, BackendError> {
        self.call("ramsey", request)
    }

    fn acquire_iq(&self, request: &IqRequest) -> Result<IqCloud, BackendError> {
        self.call("acquire_iq", request)
    }
}
