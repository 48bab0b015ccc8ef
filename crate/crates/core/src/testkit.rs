//! A bare TCP client and some instrumentation for checking wire behavior.
//!
//! The client reads until the peer closes, the way an HTTP/1.0 client frames
//! a response, so `Content-Length` is something to verify rather than trust.

use std::io::{self, Cursor, Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("could not connect: {0}")]
    Connect(#[source] io::Error),
    #[error("no bytes received before the connection ended")]
    EmptyCapture,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Everything a server sent on one connection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CapturedResponse {
    pub raw: Vec<u8>,
    pub status_line: Option<String>,
    pub status: Option<u16>,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl CapturedResponse {
    pub fn from_raw(raw: Vec<u8>) -> CapturedResponse {
        let split = split_response(&raw);
        CapturedResponse {
            status_line: split.status_line,
            status: split.status,
            headers: split.headers,
            body: split.body,
            raw,
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn content_length(&self) -> Option<u64> {
        self.header("Content-Length")?.trim().parse().ok()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitResponse {
    pub status_line: Option<String>,
    pub status: Option<u16>,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Splits at the first blank line. CRLF and bare LF are both accepted.
/// Without a blank line the whole input is treated as body.
pub fn split_response(raw: &[u8]) -> SplitResponse {
    let boundary = [(&b"\r\n\r\n"[..]), b"\n\n", b"\n\r\n"]
        .iter()
        .filter_map(|sep| find(raw, sep).map(|i| (i, sep.len())))
        .min_by_key(|&(i, _)| i);
    let Some((head_end, sep_len)) = boundary else {
        return SplitResponse {
            body: raw.to_vec(),
            ..SplitResponse::default()
        };
    };
    let head = String::from_utf8_lossy(&raw[..head_end]);
    let mut lines = head.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l));
    let status_line = lines.next().map(str::to_owned);
    let status = status_line
        .as_deref()
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|code| code.parse().ok());
    let headers = lines
        .filter_map(|l| {
            let (name, value) = l.split_once(':')?;
            Some((name.trim().to_owned(), value.trim().to_owned()))
        })
        .collect();
    SplitResponse {
        status_line,
        status,
        headers,
        body: raw[head_end + sep_len..].to_vec(),
    }
}

/// Connects, sends `request`, and reads until the server closes or
/// `read_timeout` elapses overall.
pub fn raw_request<A: ToSocketAddrs>(
    addr: A,
    request: &[u8],
    read_timeout: Duration,
) -> Result<CapturedResponse, ClientError> {
    let addrs: Vec<SocketAddr> = addr
        .to_socket_addrs()
        .map_err(ClientError::Connect)?
        .collect();
    let mut last = None;
    let mut stream = None;
    for a in addrs {
        match TcpStream::connect_timeout(&a, read_timeout) {
            Ok(s) => {
                stream = Some(s);
                break;
            }
            Err(e) => last = Some(e),
        }
    }
    let mut stream = match stream {
        Some(s) => s,
        None => {
            return Err(ClientError::Connect(last.unwrap_or_else(|| {
                io::Error::new(io::ErrorKind::InvalidInput, "no address")
            })))
        }
    };
    // The server may close without reading everything; a failed write is
    // not fatal as long as a response can still be read.
    let _ = stream.write_all(request);
    let raw = read_to_close(&mut stream, read_timeout)?;
    if raw.is_empty() {
        return Err(ClientError::EmptyCapture);
    }
    Ok(CapturedResponse::from_raw(raw))
}

/// Reads until EOF, a reset, or the deadline.
pub fn read_to_close(stream: &mut TcpStream, timeout: Duration) -> io::Result<Vec<u8>> {
    let deadline = Instant::now() + timeout;
    let mut raw = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        let left = deadline.saturating_duration_since(Instant::now());
        if left.is_zero() {
            break;
        }
        stream.set_read_timeout(Some(left))?;
        match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => raw.extend_from_slice(&buf[..n]),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock
                        | io::ErrorKind::TimedOut
                        | io::ErrorKind::ConnectionReset
                        | io::ErrorKind::ConnectionAborted
                ) =>
            {
                break
            }
            Err(e) => return Err(e),
        }
    }
    Ok(raw)
}

/// A sink that records every `write` call.
#[derive(Debug, Default)]
pub struct InstrumentedSink {
    writes: Vec<Vec<u8>>,
    fail_after: Option<usize>,
}

impl InstrumentedSink {
    pub fn new() -> InstrumentedSink {
        InstrumentedSink::default()
    }

    /// Accepts `n` writes, then fails every later one with `BrokenPipe`.
    pub fn failing_after(n: usize) -> InstrumentedSink {
        InstrumentedSink {
            writes: Vec::new(),
            fail_after: Some(n),
        }
    }

    pub fn write_sizes(&self) -> Vec<usize> {
        self.writes.iter().map(Vec::len).collect()
    }

    pub fn payload(&self) -> Vec<u8> {
        self.writes.concat()
    }
}

impl Write for InstrumentedSink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if self.fail_after.is_some_and(|n| self.writes.len() >= n) {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "sink closed"));
        }
        self.writes.push(buf.to_vec());
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// An in-memory connection: reads come from a fixed request, writes are kept.
#[derive(Debug, Default)]
pub struct MemoryConnection {
    input: Cursor<Vec<u8>>,
    pub output: Vec<u8>,
}

impl MemoryConnection {
    pub fn new(request: impl Into<Vec<u8>>) -> MemoryConnection {
        MemoryConnection {
            input: Cursor::new(request.into()),
            output: Vec::new(),
        }
    }

    /// Bytes of the request the server never read.
    pub fn unread(&self) -> usize {
        self.input.get_ref().len() - self.input.position() as usize
    }
}

impl Read for MemoryConnection {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        self.input.read(buf)
    }
}

impl Write for MemoryConnection {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.output.extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{serialize_head, BodySource, Headers, HttpResponse, HTTP_1_0};
    use proptest::prelude::*;
    use std::net::TcpListener;

    #[test]
    fn splits_head_and_body() {
        let s = split_response(
            b"HTTP/1.0 200 OK\r\nContent-type: text/html\r\nX:  y \r\n\r\nhello\r\n\r\nworld",
        );
        assert_eq!(s.status_line.as_deref(), Some("HTTP/1.0 200 OK"));
        assert_eq!(s.status, Some(200));
        assert_eq!(
            s.headers,
            [
                ("Content-type".to_owned(), "text/html".to_owned()),
                ("X".to_owned(), "y".to_owned())
            ]
        );
        assert_eq!(s.body, b"hello\r\n\r\nworld");
    }

    #[test]
    fn headerless_body() {
        let s = split_response(b"<HTML>just a body</HTML>");
        assert_eq!(s.status, None);
        assert_eq!(s.status_line, None);
        assert_eq!(s.body, b"<HTML>just a body</HTML>");
    }

    #[test]
    fn status_only() {
        let s = split_response(b"HTTP/1.0 404 Not Found\r\n\r\n");
        assert_eq!(s.status, Some(404));
        assert!(s.body.is_empty());
        assert!(s.headers.is_empty());
    }

    #[test]
    fn bare_lf_head() {
        let s = split_response(b"HTTP/1.0 200 OK\nA: b\n\nbody");
        assert_eq!(s.status, Some(200));
        assert_eq!(s.headers.len(), 1);
        assert_eq!(s.body, b"body");
    }

    #[test]
    fn sink_records_writes() {
        let mut sink = InstrumentedSink::new();
        assert!(sink.write_sizes().is_empty());
        for n in [1024, 1024, 452] {
            sink.write_all(&vec![7u8; n]).unwrap();
        }
        assert_eq!(sink.write_sizes(), [1024, 1024, 452]);
        assert_eq!(sink.payload().len(), 2500);
    }

    #[test]
    fn connect_refused() {
        let port = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap().port()
        };
        let err = raw_request(
            ("127.0.0.1", port),
            b"GET / HTTP/1.0\r\n\r\n",
            Duration::from_secs(1),
        )
        .unwrap_err();
        assert!(matches!(err, ClientError::Connect(_)));
    }

    #[test]
    fn silent_peer_is_empty_capture() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = l.local_addr().unwrap();
        let t = std::thread::spawn(move || {
            let (s, _) = l.accept().unwrap();
            drop(s);
        });
        let err = raw_request(addr, b"\r\n", Duration::from_secs(2)).unwrap_err();
        assert!(matches!(err, ClientError::EmptyCapture));
        t.join().unwrap();
    }

    #[test]
    fn capture_respects_timeout() {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = l.local_addr().unwrap();
        let t = std::thread::spawn(move || {
            let (mut s, _) = l.accept().unwrap();
            s.write_all(b"HTTP/1.0 200 OK\r\n\r\npartial").unwrap();
            std::thread::sleep(Duration::from_millis(800));
        });
        let start = Instant::now();
        let c = raw_request(addr, b"GET / HTTP/1.0\r\n\r\n", Duration::from_millis(300)).unwrap();
        assert!(start.elapsed() < Duration::from_millis(700));
        assert_eq!(c.body, b"partial");
        t.join().unwrap();
    }

    proptest! {
        #[test]
        fn round_trip(
            code in 100u16..=599,
            headers in proptest::collection::vec(("[A-Za-z][A-Za-z0-9-]{0,15}", "([!-~]([ -~]{0,20}[!-~])?)?"), 0..8),
            body in proptest::collection::vec(any::<u8>(), 0..512),
        ) {
            let response = HttpResponse {
                status: code,
                reason: "R".into(),
                headers: headers.into_iter().collect::<Headers>(),
                body: BodySource::Bytes(body.clone()),
            };
            let mut raw = serialize_head(&response, HTTP_1_0).unwrap();
            raw.extend_from_slice(&body);
            let split = split_response(&raw);
            prop_assert_eq!(split.status, Some(code));
            let mut got = split.headers.clone();
            let mut want: Vec<(String, String)> = response
                .headers
                .iter()
                .map(|(n, v)| (n.to_owned(), v.to_owned()))
                .collect();
            got.sort();
            want.sort();
            prop_assert_eq!(got, want);
            prop_assert_eq!(split.body, body);
        }
    }
}
