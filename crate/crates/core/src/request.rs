//! Reading and tokenizing the request line.

use std::io::{self, BufRead};

use thiserror::Error;

use crate::protocol::{FidelityMode, HttpRequest, Token};

pub const DEFAULT_MAX_REQUEST_LINE: usize = 8192;
pub const DEFAULT_MAX_HEADER_BYTES: usize = 65536;

#[derive(Debug, Error)]
pub enum RequestError {
    #[error("connection closed before a request line was sent")]
    EmptyRequest,
    #[error("request line exceeds {limit} bytes")]
    RequestLineTooLong { limit: usize },
    #[error("timed out reading from the connection")]
    Timeout,
    #[error("request line has fewer than two tokens")]
    MalformedRequestLine,
    #[error("read failed: {0}")]
    Io(#[source] io::Error),
}

impl From<io::Error> for RequestError {
    fn from(err: io::Error) -> RequestError {
        if is_timeout(&err) {
            RequestError::Timeout
        } else {
            RequestError::Io(err)
        }
    }
}

pub(crate) fn is_timeout(err: &io::Error) -> bool {
    matches!(
        err.kind(),
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
    )
}

/// The first line of a request, terminator removed and whitespace trimmed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRequestLine {
    text: Vec<u8>,
    byte_count: usize,
}

impl RawRequestLine {
    /// Builds a line from text that did not come off a connection. Anything
    /// from the first LF on is dropped.
    pub fn from_text(text: impl AsRef<[u8]>) -> RawRequestLine {
        let bytes = text.as_ref();
        let end = bytes
            .iter()
            .position(|&b| b == b'\n')
            .unwrap_or(bytes.len());
        RawRequestLine {
            text: normalize_line(&bytes[..end]),
            byte_count: bytes.len(),
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.text
    }

    pub fn to_string_lossy(&self) -> String {
        String::from_utf8_lossy(&self.text).into_owned()
    }

    /// Bytes consumed from the connection, terminator included.
    pub fn byte_count(&self) -> usize {
        self.byte_count
    }
}

// A stray CR is a token delimiter, never part of the text.
fn normalize_line(line: &[u8]) -> Vec<u8> {
    trim_ascii_whitespace(line)
        .iter()
        .map(|&b| if b == b'\r' { b' ' } else { b })
        .collect()
}

fn trim_ascii_whitespace(mut bytes: &[u8]) -> &[u8] {
    while let [first, rest @ ..] = bytes {
        if !first.is_ascii_whitespace() {
            break;
        }
        bytes = rest;
    }
    while let [rest @ .., last] = bytes {
        if !last.is_ascii_whitespace() {
            break;
        }
        bytes = rest;
    }
    bytes
}

/// Consumes bytes through the first LF and returns the trimmed line.
///
/// A line cut short by end of stream is returned as-is, the way a
/// `readLine` would. More than `max_len` bytes before the LF is an error.
pub fn read_request_line<R: BufRead + ?Sized>(
    conn: &mut R,
    max_len: usize,
) -> Result<RawRequestLine, RequestError> {
    let mut line = Vec::new();
    let mut consumed = 0usize;
    loop {
        let available = match conn.fill_buf() {
            Ok(buf) => buf,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        if available.is_empty() {
            if consumed == 0 {
                return Err(RequestError::EmptyRequest);
            }
            break;
        }
        let (chunk, found) = match available.iter().position(|&b| b == b'\n') {
            Some(i) => (&available[..=i], true),
            None => (available, false),
        };
        let content = if found { chunk.len() - 1 } else { chunk.len() };
        if line.len() + content > max_len {
            return Err(RequestError::RequestLineTooLong { limit: max_len });
        }
        line.extend_from_slice(&chunk[..content]);
        let n = chunk.len();
        conn.consume(n);
        consumed += n;
        if found {
            break;
        }
    }
    Ok(RawRequestLine {
        text: normalize_line(&line),
        byte_count: consumed,
    })
}

/// Splits on runs of ASCII whitespace. The first two tokens are required.
pub fn parse_request_line(line: &RawRequestLine) -> Result<HttpRequest, RequestError> {
    let mut tokens = line
        .as_bytes()
        .split(u8::is_ascii_whitespace)
        .filter(|t| !t.is_empty());
    let method = tokens.next().ok_or(RequestError::MalformedRequestLine)?;
    let target = tokens.next().ok_or(RequestError::MalformedRequestLine)?;
    let version = tokens.next();
    Ok(HttpRequest {
        method: Token::new(method),
        target: Token::new(target),
        version: version.map(Token::new),
    })
}

/// Reads and discards header lines up to the blank line (strict mode only).
///
/// Stops early at end of stream or once `max_bytes` have been read.
pub fn drain_headers<R: BufRead + ?Sized>(
    conn: &mut R,
    mode: FidelityMode,
    max_bytes: usize,
) -> Result<usize, RequestError> {
    if mode == FidelityMode::Paper {
        return Ok(0);
    }
    let mut drained = 0usize;
    let mut line_len = 0usize;
    while drained < max_bytes {
        let available = match conn.fill_buf() {
            Ok(buf) => buf,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        if available.is_empty() {
            break;
        }
        let budget = &available[..available.len().min(max_bytes - drained)];
        let mut taken = 0;
        let mut blank = false;
        for &b in budget {
            taken += 1;
            if b == b'\n' {
                if line_len == 0 {
                    blank = true;
                    break;
                }
                line_len = 0;
            } else if b != b'\r' {
                line_len += 1;
            }
        }
        conn.consume(taken);
        drained += taken;
        if blank {
            break;
        }
    }
    Ok(drained)
}
