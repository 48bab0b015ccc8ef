//! Listener, accept loop and per-connection pipeline.
//!
//! The default service model handles one connection at a time: accept,
//! read the request line, respond, close, then accept again. The
//! `PerConnection` model runs each connection on its own thread; those
//! threads share only the immutable [`Service`].

use std::fmt;
use std::io::{self, BufReader, Read, Write};
use std::net::{Ipv4Addr, Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use chrono::{SecondsFormat, Utc};
use log::{debug, warn};
use thiserror::Error;

use crate::mime::MimeTable;
use crate::protocol::{serialize_head, FidelityMode, HttpResponse, HTTP_1_0};
use crate::request::{
    drain_headers, parse_request_line, read_request_line, RequestError, DEFAULT_MAX_HEADER_BYTES,
    DEFAULT_MAX_REQUEST_LINE,
};
use crate::resolve::{resolve_within_root, target_to_relative, DocumentRoot, Resolution};
use crate::response::{
    build_bad_request, build_not_found, build_not_implemented, build_ok, emit_response, StreamError,
};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_READ_TIMEOUT: Duration = Duration::from_secs(5);

/// How often an idle accept loop checks the stop signal.
const ACCEPT_POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Concurrency {
    #[default]
    Sequential,
    PerConnection,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// 0 asks the OS for an ephemeral port.
    pub port: u16,
    pub root: PathBuf,
    pub mode: FidelityMode,
    pub read_timeout: Duration,
    pub max_request_line: usize,
    pub max_header_bytes: usize,
    pub concurrency: Concurrency,
    pub mime: MimeTable,
    /// Write one access-log line per connection to stderr.
    pub access_log: bool,
}

impl ServerConfig {
    pub fn new(root: impl Into<PathBuf>) -> ServerConfig {
        ServerConfig {
            port: DEFAULT_PORT,
            root: root.into(),
            mode: FidelityMode::default(),
            read_timeout: DEFAULT_READ_TIMEOUT,
            max_request_line: DEFAULT_MAX_REQUEST_LINE,
            max_header_bytes: DEFAULT_MAX_HEADER_BYTES,
            concurrency: Concurrency::default(),
            mime: MimeTable::standard(),
            access_log: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("document root {}: {source}", path.display())]
    Root {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot bind port {port}: {source}{}", privilege_hint(.source, *.port))]
    Bind {
        port: u16,
        #[source]
        source: io::Error,
    },
}

fn privilege_hint(err: &io::Error, port: u16) -> &'static str {
    if err.kind() == io::ErrorKind::PermissionDenied && port < 1024 {
        " (ports below 1024 need elevated privileges; try --port 8080)"
    } else {
        ""
    }
}

/// Why a connection ended without a complete normal exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorTag {
    EmptyRequest,
    RequestLineTooLong,
    Timeout,
    Malformed,
    NotImplemented,
    Forbidden,
    BrokenConnection,
    TruncatedBody,
    Io,
}

impl ErrorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorTag::EmptyRequest => "empty_request",
            ErrorTag::RequestLineTooLong => "request_line_too_long",
            ErrorTag::Timeout => "timeout",
            ErrorTag::Malformed => "malformed",
            ErrorTag::NotImplemented => "not_implemented",
            ErrorTag::Forbidden => "forbidden",
            ErrorTag::BrokenConnection => "broken_connection",
            ErrorTag::TruncatedBody => "truncated_body",
            ErrorTag::Io => "io",
        }
    }
}

impl From<&RequestError> for ErrorTag {
    fn from(err: &RequestError) -> ErrorTag {
        match err {
            RequestError::EmptyRequest => ErrorTag::EmptyRequest,
            RequestError::RequestLineTooLong { .. } => ErrorTag::RequestLineTooLong,
            RequestError::Timeout => ErrorTag::Timeout,
            RequestError::MalformedRequestLine => ErrorTag::Malformed,
            RequestError::Io(_) => ErrorTag::Io,
        }
    }
}

/// What happened on one connection; one access-log line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionOutcome {
    pub peer: String,
    pub request_line: Option<String>,
    /// `None` when the connection was closed without a response.
    pub status_sent: Option<u16>,
    pub bytes_sent: u64,
    pub error: Option<ErrorTag>,
}

impl ConnectionOutcome {
    fn new(peer: &str) -> ConnectionOutcome {
        ConnectionOutcome {
            peer: peer.to_owned(),
            request_line: None,
            status_sent: None,
            bytes_sent: 0,
            error: None,
        }
    }
}

impl fmt::Display for ConnectionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let line = self
            .request_line
            .as_deref()
            .unwrap_or("-")
            .replace('"', "\\\"");
        write!(f, "{} \"{}\" ", self.peer, line)?;
        match self.status_sent {
            Some(code) => write!(f, "{code}")?,
            None => f.write_str("-")?,
        }
        write!(f, " {}", self.bytes_sent)
    }
}

/// A validated configuration, ready to handle connections.
#[derive(Debug)]
pub struct Service {
    config: ServerConfig,
    root: DocumentRoot,
}

impl Service {
    pub fn new(config: ServerConfig) -> Result<Service, ServerError> {
        let root = DocumentRoot::new(&config.root).map_err(|source| ServerError::Root {
            path: config.root.clone(),
            source,
        })?;
        Ok(Service { config, root })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn root(&self) -> &DocumentRoot {
        &self.root
    }

    /// Runs one connection through read, parse, resolve and respond.
    /// Never fails; problems are recorded in the outcome. The stream is
    /// dropped (closed) on return.
    pub fn handle_connection<S: Read + Write>(&self, conn: S, peer: &str) -> ConnectionOutcome {
        let mode = self.config.mode;
        let mut outcome = ConnectionOutcome::new(peer);
        let mut reader = BufReader::with_capacity(8192, conn);

        let line = match read_request_line(&mut reader, self.config.max_request_line) {
            Ok(line) => line,
            Err(err) => {
                outcome.error = Some((&err).into());
                if matches!(err, RequestError::RequestLineTooLong { .. })
                    && mode == FidelityMode::Strict
                {
                    self.respond(reader.get_mut(), build_bad_request(), &mut outcome);
                }
                return outcome;
            }
        };
        outcome.request_line = Some(line.to_string_lossy());

        let request = match parse_request_line(&line) {
            Ok(req) => req,
            Err(err) => {
                outcome.error = Some((&err).into());
                if mode == FidelityMode::Strict {
                    self.respond(reader.get_mut(), build_bad_request(), &mut outcome);
                }
                return outcome;
            }
        };

        // A request without a version has no header block to wait for.
        if request.version.is_some() {
            if let Err(err) = drain_headers(&mut reader, mode, self.config.max_header_bytes) {
                outcome.error = Some((&err).into());
                return outcome;
            }
        }

        if !request.is_get() {
            outcome.error = Some(ErrorTag::NotImplemented);
            if mode == FidelityMode::Strict {
                self.respond(
                    reader.get_mut(),
                    build_not_implemented(request.method.as_bytes()),
                    &mut outcome,
                );
            }
            return outcome;
        }

        let relative = target_to_relative(request.target.as_bytes());
        let resource = resolve_within_root(&self.root, &relative);
        let response = match resource.resolution {
            Resolution::Hit { .. } => build_ok(&resource, mode, &self.config.mime),
            Resolution::Miss => build_not_found(&resource.requested_name, mode),
            Resolution::Forbidden => {
                outcome.error = Some(ErrorTag::Forbidden);
                build_not_found(&resource.requested_name, mode)
            }
        };
        self.respond(reader.get_mut(), response, &mut outcome);
        outcome
    }

    fn respond<W: Write>(
        &self,
        sink: &mut W,
        mut response: HttpResponse,
        outcome: &mut ConnectionOutcome,
    ) {
        let head_len = serialize_head(&response, HTTP_1_0)
            .map(|h| h.len() as u64)
            .unwrap_or(u64::MAX);
        let status = response.status;
        let written = match emit_response(&mut response, sink, HTTP_1_0) {
            Ok(n) => n,
            Err(err) => {
                debug!("{}: {err}", outcome.peer);
                outcome.error = Some(match err {
                    StreamError::BrokenConnection { .. } => ErrorTag::BrokenConnection,
                    StreamError::TruncatedBody { .. } => ErrorTag::TruncatedBody,
                });
                err.bytes_written()
            }
        };
        outcome.bytes_sent = written;
        if written >= head_len {
            outcome.status_sent = Some(status);
        }
    }

    fn serve_stream(&self, stream: TcpStream, peer: SocketAddr) -> ConnectionOutcome {
        let timeout = Some(self.config.read_timeout).filter(|d| !d.is_zero());
        let setup = stream
            .set_nonblocking(false)
            .and_then(|_| stream.set_read_timeout(timeout))
            .and_then(|_| stream.set_write_timeout(timeout));
        let peer = peer.to_string();
        if let Err(e) = setup {
            warn!("configuring connection from {peer}: {e}");
            let mut outcome = ConnectionOutcome::new(&peer);
            outcome.error = Some(ErrorTag::Io);
            return outcome;
        }
        let outcome = self.handle_connection(&stream, &peer);
        let _ = stream.shutdown(Shutdown::Both);
        if self.config.access_log {
            eprintln!(
                "{} {}",
                Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
                outcome
            );
        }
        outcome
    }
}

/// A one-way flag telling the accept loop to stop. Cheap to clone.
#[derive(Debug, Clone, Default)]
pub struct StopSignal(Arc<AtomicBool>);

impl StopSignal {
    pub fn new() -> StopSignal {
        StopSignal::default()
    }

    pub fn fire(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_fired(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// A bound listener plus the service it feeds.
#[derive(Debug)]
pub struct Server {
    listener: TcpListener,
    local_addr: SocketAddr,
    service: Arc<Service>,
}

impl Server {
    pub fn bind(config: ServerConfig) -> Result<Server, ServerError> {
        let service = Service::new(config)?;
        let port = service.config.port;
        let bind_err = |source| ServerError::Bind { port, source };
        let listener = TcpListener::bind((Ipv4Addr::UNSPECIFIED, port)).map_err(bind_err)?;
        let local_addr = listener.local_addr().map_err(bind_err)?;
        Ok(Server {
            listener,
            local_addr,
            service: Arc::new(service),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn port(&self) -> u16 {
        self.local_addr.port()
    }

    pub fn service(&self) -> &Service {
        &self.service
    }

    /// Accepts connections until `stop` fires, then closes the listener
    /// and waits (up to the read timeout) for in-flight connections.
    pub fn serve_forever(self, stop: &StopSignal) -> io::Result<()> {
        self.listener.set_nonblocking(true)?;
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        let result = loop {
            if stop.is_fired() {
                break Ok(());
            }
            match self.listener.accept() {
                Ok((stream, peer)) => match self.service.config.concurrency {
                    Concurrency::Sequential => {
                        self.service.serve_stream(stream, peer);
                    }
                    Concurrency::PerConnection => {
                        workers.retain(|w| !w.is_finished());
                        let service = Arc::clone(&self.service);
                        let spawned =
                            thread::Builder::new()
                                .name(format!("conn-{peer}"))
                                .spawn(move || {
                                    service.serve_stream(stream, peer);
                                });
                        match spawned {
                            Ok(handle) => workers.push(handle),
                            Err(e) => warn!("spawning handler for {peer}: {e}"),
                        }
                    }
                },
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(ACCEPT_POLL),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) if e.kind() == io::ErrorKind::InvalidInput => break Err(e),
                Err(e) => {
                    warn!("accept failed: {e}");
                    thread::sleep(ACCEPT_POLL);
                }
            }
        };
        drop(self.listener);
        let deadline = Instant::now() + self.service.config.read_timeout;
        while workers.iter().any(|w| !w.is_finished()) && Instant::now() < deadline {
            thread::sleep(Duration::from_millis(5));
        }
        for w in workers.into_iter().filter(|w| w.is_finished()) {
            let _ = w.join();
        }
        result
    }

    /// Runs the accept loop on a background thread.
    pub fn spawn(self) -> ServerHandle {
        let stop = StopSignal::new();
        let addr = self.local_addr;
        let thread_stop = stop.clone();
        let thread = thread::Builder::new()
            .name("accept".into())
            .spawn(move || self.serve_forever(&thread_stop))
            .expect("spawning accept thread");
        ServerHandle {
            stop,
            addr,
            thread: Some(thread),
        }
    }
}

/// A server running on a background thread. Dropping it shuts it down.
#[derive(Debug)]
pub struct ServerHandle {
    stop: StopSignal,
    addr: SocketAddr,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    /// Loopback address of the listener, for local clients.
    pub fn local_addr(&self) -> SocketAddr {
        SocketAddr::from((Ipv4Addr::LOCALHOST, self.addr.port()))
    }

    pub fn stop_signal(&self) -> StopSignal {
        self.stop.clone()
    }

    /// Stops accepting and waits for the loop to exit. Calling it again is a no-op.
    pub fn shutdown(&mut self) -> io::Result<()> {
        self.stop.fire();
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(io::Error::other("accept thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}
