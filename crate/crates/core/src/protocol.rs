//! Request and response value types, and the byte-exact response head.

use std::fmt;
use std::fs::File;
use std::path::PathBuf;

use thiserror::Error;

/// The only protocol version this server speaks.
pub const HTTP_1_0: &str = "HTTP/1.0";

const CRLF: &[u8] = b"\r\n";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("status code {0} is outside 100..=599")]
    StatusOutOfRange(u16),
    #[error("reason phrase contains a control character")]
    ControlCharInReason,
}

/// Selects between reproducing the original program's observable behavior
/// and the corrected behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FidelityMode {
    Paper,
    #[default]
    Strict,
}

impl FidelityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FidelityMode::Paper => "paper",
            FidelityMode::Strict => "strict",
        }
    }
}

impl fmt::Display for FidelityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A whitespace-free token from the request line.
///
/// Bytes are kept as received; nothing is decoded.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Token(Vec<u8>);

impl Token {
    pub(crate) fn new(bytes: &[u8]) -> Token {
        debug_assert!(!bytes.is_empty());
        debug_assert!(!bytes.iter().any(u8::is_ascii_whitespace));
        Token(bytes.to_vec())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_string_lossy(&self) -> String {
        String::from_utf8_lossy(&self.0).into_owned()
    }
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", String::from_utf8_lossy(&self.0))
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

impl PartialEq<str> for Token {
    fn eq(&self, other: &str) -> bool {
        self.0 == other.as_bytes()
    }
}

impl PartialEq<&str> for Token {
    fn eq(&self, other: &&str) -> bool {
        self.0 == other.as_bytes()
    }
}

/// A parsed request line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Token,
    pub target: Token,
    pub version: Option<Token>,
}

impl HttpRequest {
    pub fn is_get(&self) -> bool {
        self.method == "GET"
    }
}

/// Ordered header list with at most one entry per case-insensitive name.
///
/// Names keep the spelling they were inserted with.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Headers {
    entries: Vec<(String, String)>,
}

impl Headers {
    pub fn new() -> Headers {
        Headers::default()
    }

    /// Replaces the value of an existing entry in place, or appends.
    pub fn set(&mut self, name: impl Into<String>, value: impl Into<String>) {
        let name = name.into();
        let value = value.into();
        match self
            .entries
            .iter_mut()
            .find(|(n, _)| n.eq_ignore_ascii_case(&name))
        {
            Some(entry) => entry.1 = value,
            None => self.entries.push((name, value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v.as_str()))
    }
}

impl<N: Into<String>, V: Into<String>> FromIterator<(N, V)> for Headers {
    fn from_iter<I: IntoIterator<Item = (N, V)>>(iter: I) -> Headers {
        let mut headers = Headers::new();
        for (n, v) in iter {
            headers.set(n, v);
        }
        headers
    }
}

/// Where a response body comes from.
#[derive(Debug)]
pub enum BodySource {
    Bytes(Vec<u8>),
    /// An opened file; `len` is its size at open time.
    File {
        file: File,
        path: PathBuf,
        len: u64,
    },
}

impl BodySource {
    pub fn len(&self) -> u64 {
        match self {
            BodySource::Bytes(b) => b.len() as u64,
            BodySource::File { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug)]
pub struct HttpResponse {
    pub status: u16,
    pub reason: String,
    pub headers: Headers,
    pub body: BodySource,
}

/// Fixed reason phrases for the status codes this server emits.
pub fn reason_phrase(code: u16) -> Option<&'static str> {
    match code {
        200 => Some("OK"),
        400 => Some("Bad Request"),
        404 => Some("Not Found"),
        501 => Some("Not Implemented"),
        _ => None,
    }
}

pub fn format_status_line(code: u16, reason: &str, version: &str) -> Result<String, ProtocolError> {
    if !(100..=599).contains(&code) {
        return Err(ProtocolError::StatusOutOfRange(code));
    }
    if reason.chars().any(char::is_control) {
        return Err(ProtocolError::ControlCharInReason);
    }
    Ok(format!("{version} {code} {reason}"))
}

/// Serializes the status line and headers, each CRLF-terminated, followed by
/// the blank line that ends the head.
pub fn serialize_head(response: &HttpResponse, version: &str) -> Result<Vec<u8>, ProtocolError> {
    let status = format_status_line(response.status, &response.reason, version)?;
    let mut out = Vec::with_capacity(128);
    out.extend_from_slice(status.as_bytes());
    out.extend_from_slice(CRLF);
    for (name, value) in response.headers.iter() {
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(b": ");
        out.extend_from_slice(value.as_bytes());
        out.extend_from_slice(CRLF);
    }
    out.extend_from_slice(CRLF);
    Ok(out)
}
