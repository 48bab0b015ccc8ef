//! Building the 200/404 (and strict-mode 400/501) responses and writing
//! them to a connection.

use std::fs::File;
use std::io::{self, Read, Write};

use log::warn;
use thiserror::Error;

use crate::mime::MimeTable;
use crate::protocol::{
    reason_phrase, serialize_head, BodySource, FidelityMode, Headers, HttpResponse,
};
use crate::resolve::{content_type_for, Resolution, ResolvedResource};

/// File bodies are read and written in pieces of at most this many bytes.
pub const CHUNK_SIZE: usize = 1024;

pub const SERVER_NAME: &str = "Simple HTTP Server";

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("client went away after {written} bytes: {source}")]
    BrokenConnection {
        written: u64,
        #[source]
        source: io::Error,
    },
    #[error("body ended after {written} of {expected} bytes")]
    TruncatedBody {
        written: u64,
        expected: u64,
        #[source]
        source: Option<io::Error>,
    },
}

impl StreamError {
    pub fn bytes_written(&self) -> u64 {
        match self {
            StreamError::BrokenConnection { written, .. }
            | StreamError::TruncatedBody { written, .. } => *written,
        }
    }

    fn offset(self, by: u64) -> StreamError {
        match self {
            StreamError::BrokenConnection { written, source } => StreamError::BrokenConnection {
                written: written + by,
                source,
            },
            StreamError::TruncatedBody {
                written,
                expected,
                source,
            } => StreamError::TruncatedBody {
                written: written + by,
                expected,
                source,
            },
        }
    }
}

fn page(title: &str, message: &[u8]) -> Vec<u8> {
    let mut body = Vec::with_capacity(128 + message.len());
    body.extend_from_slice(b"<HTML><HEAD><TITLE>");
    body.extend_from_slice(title.as_bytes());
    body.extend_from_slice(b"</TITLE></HEAD><BODY><center><h1>");
    body.extend_from_slice(message);
    body.extend_from_slice(b"</h1></center></BODY></HTML>");
    body
}

/// The not-found page, with `file_name` spliced in unescaped.
pub fn not_found_body(file_name: &[u8]) -> Vec<u8> {
    let mut message = b"404: The file ".to_vec();
    message.extend_from_slice(file_name);
    message.extend_from_slice(b" is not found");
    page("404 Not Found", &message)
}

fn html_response(status: u16, body: Vec<u8>) -> HttpResponse {
    let mut headers = Headers::new();
    headers.set("Server", SERVER_NAME);
    headers.set("Content-type", "text/html");
    headers.set("Content-Length", body.len().to_string());
    HttpResponse {
        status,
        reason: reason_phrase(status).unwrap_or("").to_owned(),
        headers,
        body: BodySource::Bytes(body),
    }
}

/// Paper mode keeps the original's `200 OK` on the not-found page.
pub fn build_not_found(file_name: &[u8], mode: FidelityMode) -> HttpResponse {
    let status = match mode {
        FidelityMode::Paper => 200,
        FidelityMode::Strict => 404,
    };
    html_response(status, not_found_body(file_name))
}

pub fn build_bad_request() -> HttpResponse {
    html_response(400, page("400 Bad Request", b"400: Bad request"))
}

pub fn build_not_implemented(method: &[u8]) -> HttpResponse {
    let mut message = b"501: Method ".to_vec();
    message.extend_from_slice(method);
    message.extend_from_slice(b" not implemented");
    html_response(501, page("501 Not Implemented", &message))
}

/// Opens the resolved file. If it cannot be opened any more, or the resource
/// was not a hit to begin with, the not-found response is returned instead.
pub fn build_ok(
    resource: &ResolvedResource,
    mode: FidelityMode,
    table: &MimeTable,
) -> HttpResponse {
    let Resolution::Hit { canonical_path, .. } = &resource.resolution else {
        return build_not_found(&resource.requested_name, mode);
    };
    let opened = File::open(canonical_path).and_then(|f| {
        let meta = f.metadata()?;
        Ok((f, meta))
    });
    let (file, meta) = match opened {
        Ok((f, meta)) if meta.is_file() => (f, meta),
        Ok(_) => return build_not_found(&resource.requested_name, mode),
        Err(e) => {
            warn!("opening {}: {e}", canonical_path.display());
            return build_not_found(&resource.requested_name, mode);
        }
    };
    let len = meta.len();
    let mut headers = Headers::new();
    headers.set("Server", SERVER_NAME);
    headers.set(
        "Content-type",
        content_type_for(&resource.requested_name, mode, table),
    );
    headers.set("Content-Length", len.to_string());
    HttpResponse {
        status: 200,
        reason: "OK".to_owned(),
        headers,
        body: BodySource::File {
            file,
            path: canonical_path.clone(),
            len,
        },
    }
}

// Fills `buf` as far as the reader allows; short only at end of input.
fn read_chunk<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Writes the body. Byte buffers go out in one write; files go out as a
/// sequence of `CHUNK_SIZE` writes, the last one possibly shorter.
pub fn stream_body<W: Write + ?Sized>(
    source: &mut BodySource,
    sink: &mut W,
) -> Result<u64, StreamError> {
    match source {
        BodySource::Bytes(bytes) => {
            if bytes.is_empty() {
                return Ok(0);
            }
            sink.write_all(bytes)
                .map_err(|source| StreamError::BrokenConnection { written: 0, source })?;
            Ok(bytes.len() as u64)
        }
        BodySource::File { file, len, .. } => {
            let expected = *len;
            let mut limited = file.take(expected);
            let mut buf = [0u8; CHUNK_SIZE];
            let mut written = 0u64;
            loop {
                let n =
                    read_chunk(&mut limited, &mut buf).map_err(|e| StreamError::TruncatedBody {
                        written,
                        expected,
                        source: Some(e),
                    })?;
                if n == 0 {
                    break;
                }
                sink.write_all(&buf[..n])
                    .map_err(|source| StreamError::BrokenConnection { written, source })?;
                written += n as u64;
            }
            if written != expected {
                return Err(StreamError::TruncatedBody {
                    written,
                    expected,
                    source: None,
                });
            }
            Ok(written)
        }
    }
}

/// Writes head then body and flushes. Returns the total bytes written.
pub fn emit_response<W: Write + ?Sized>(
    response: &mut HttpResponse,
    sink: &mut W,
    version: &str,
) -> Result<u64, StreamError> {
    let head = serialize_head(response, version).map_err(|e| StreamError::BrokenConnection {
        written: 0,
        source: io::Error::new(io::ErrorKind::InvalidInput, e),
    })?;
    sink.write_all(&head)
        .map_err(|source| StreamError::BrokenConnection { written: 0, source })?;
    let head_len = head.len() as u64;
    let body = stream_body(&mut response.body, sink).map_err(|e| e.offset(head_len))?;
    let total = head_len + body;
    sink.flush()
        .map_err(|source| StreamError::BrokenConnection {
            written: total,
            source,
        })?;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::HTTP_1_0;
    use crate::resolve::{resolve_within_root, DocumentRoot};
    use crate::testkit::InstrumentedSink;
    use std::fs;
    use std::path::PathBuf;

    const NOT_FOUND_NOFILE: &str = "<HTML><HEAD><TITLE>404 Not Found</TITLE></HEAD><BODY><center><h1>404: The file nofile.html is not found</h1></center></BODY></HTML>";

    fn file_source(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> (BodySource, PathBuf) {
        let path = dir.path().join(name);
        fs::write(&path, bytes).unwrap();
        let file = File::open(&path).unwrap();
        let len = file.metadata().unwrap().len();
        (
            BodySource::File {
                file,
                path: path.clone(),
                len,
            },
            path,
        )
    }

    fn pattern(n: usize) -> Vec<u8> {
        (0..n).map(|i| (i % 251) as u8).collect()
    }

    #[test]
    fn not_found_body_is_exact() {
        assert_eq!(not_found_body(b"nofile.html"), NOT_FOUND_NOFILE.as_bytes());
        let body = String::from_utf8(not_found_body(b"")).unwrap();
        assert!(body.contains("404: The file  is not found"));
        assert!(body.starts_with("<HTML><HEAD><TITLE>404 Not Found</TITLE>"));
    }

    #[test]
    fn not_found_status_by_mode() {
        let paper = build_not_found(b"x.html", FidelityMode::Paper);
        let strict = build_not_found(b"x.html", FidelityMode::Strict);
        assert_eq!((paper.status, paper.reason.as_str()), (200, "OK"));
        assert_eq!((strict.status, strict.reason.as_str()), (404, "Not Found"));
        let expected_len = not_found_body(b"x.html").len().to_string();
        for r in [&paper, &strict] {
            assert_eq!(r.headers.get("Content-Length"), Some(expected_len.as_str()));
            assert_eq!(r.headers.get("Content-type"), Some("text/html"));
            assert_eq!(r.headers.get("Server"), Some(SERVER_NAME));
        }
        let (BodySource::Bytes(a), BodySource::Bytes(b)) = (&paper.body, &strict.body) else {
            panic!("not-found bodies are in memory");
        };
        assert_eq!(a, b);
    }

    #[test]
    fn error_pages() {
        let r = build_not_implemented(b"POST");
        assert_eq!(r.status, 501);
        let BodySource::Bytes(body) = &r.body else {
            panic!()
        };
        assert_eq!(
            body.as_slice(),
            &b"<HTML><HEAD><TITLE>501 Not Implemented</TITLE></HEAD><BODY><center><h1>501: Method POST not implemented</h1></center></BODY></HTML>"[..]
        );
        let r = build_bad_request();
        assert_eq!((r.status, r.reason.as_str()), (400, "Bad Request"));
    }

    #[test]
    fn ok_headers_in_order() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.bin"), pattern(2500)).unwrap();
        let root = DocumentRoot::new(dir.path()).unwrap();
        let res = resolve_within_root(&root, b"a.bin");
        let table = MimeTable::standard();

        let r = build_ok(&res, FidelityMode::Strict, &table);
        assert_eq!(r.status, 200);
        let headers: Vec<_> = r.headers.iter().collect();
        assert_eq!(
            headers,
            [
                ("Server", "Simple HTTP Server"),
                ("Content-type", "application/octet-stream"),
                ("Content-Length", "2500"),
            ]
        );
        let r = build_ok(&res, FidelityMode::Paper, &table);
        assert_eq!(r.headers.get("content-type"), Some("text/html"));
    }

    #[test]
    fn ok_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("empty.html"), b"").unwrap();
        let root = DocumentRoot::new(dir.path()).unwrap();
        let mut r = build_ok(
            &resolve_within_root(&root, b"empty.html"),
            FidelityMode::Strict,
            &MimeTable::standard(),
        );
        assert_eq!(r.headers.get("Content-Length"), Some("0"));
        let mut sink = InstrumentedSink::new();
        assert_eq!(stream_body(&mut r.body, &mut sink).unwrap(), 0);
        assert!(sink.write_sizes().is_empty());
    }

    #[test]
    fn vanished_file_becomes_not_found() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("gone.html"), b"x").unwrap();
        let root = DocumentRoot::new(dir.path()).unwrap();
        let res = resolve_within_root(&root, b"gone.html");
        assert!(res.is_hit());
        fs::remove_file(dir.path().join("gone.html")).unwrap();
        let r = build_ok(&res, FidelityMode::Strict, &MimeTable::standard());
        assert_eq!(r.status, 404);
        let r = build_ok(&res, FidelityMode::Paper, &MimeTable::standard());
        assert_eq!(r.status, 200);
        assert_eq!(
            r.headers.get("Content-Length"),
            Some(not_found_body(b"gone.html").len().to_string().as_str())
        );
    }

    #[test]
    fn chunked_writes() {
        let dir = tempfile::tempdir().unwrap();
        // sizes: expected write pattern worked out by hand
        let cases: &[(usize, &[usize])] = &[
            (2500, &[1024, 1024, 452]),
            (1024, &[1024]),
            (1025, &[1024, 1]),
            (0, &[]),
            (3, &[3]),
        ];
        for (i, (size, writes)) in cases.iter().enumerate() {
            let data = pattern(*size);
            let (mut src, path) = file_source(&dir, &format!("f{i}"), &data);
            let mut sink = InstrumentedSink::new();
            assert_eq!(stream_body(&mut src, &mut sink).unwrap(), *size as u64);
            assert_eq!(sink.write_sizes(), *writes);
            assert_eq!(sink.payload(), fs::read(path).unwrap());
        }
    }

    #[test]
    fn bytes_body_is_one_write() {
        let mut src = BodySource::Bytes(pattern(5000));
        let mut sink = InstrumentedSink::new();
        assert_eq!(stream_body(&mut src, &mut sink).unwrap(), 5000);
        assert_eq!(sink.write_sizes(), [5000]);
    }

    #[test]
    fn shrunk_file_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let (mut src, path) = file_source(&dir, "f", &pattern(3000));
        fs::write(&path, pattern(100)).unwrap();
        let mut sink = InstrumentedSink::new();
        match stream_body(&mut src, &mut sink) {
            Err(StreamError::TruncatedBody {
                written, expected, ..
            }) => {
                assert_eq!((written, expected), (100, 3000));
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn grown_file_is_capped_at_length() {
        let dir = tempfile::tempdir().unwrap();
        let (mut src, path) = file_source(&dir, "f", &pattern(1500));
        fs::write(&path, pattern(4000)).unwrap();
        let mut sink = InstrumentedSink::new();
        assert_eq!(stream_body(&mut src, &mut sink).unwrap(), 1500);
    }

    #[test]
    fn broken_sink_reports_progress() {
        let dir = tempfile::tempdir().unwrap();
        let (src, _) = file_source(&dir, "f", &pattern(4000));
        let mut response = HttpResponse {
            status: 200,
            reason: "OK".into(),
            headers: Headers::new(),
            body: src,
        };
        let mut sink = InstrumentedSink::failing_after(2);
        let head_len = serialize_head(&response, HTTP_1_0).unwrap().len() as u64;
        match emit_response(&mut response, &mut sink, HTTP_1_0) {
            Err(StreamError::BrokenConnection { written, .. }) => {
                assert_eq!(written, head_len + 1024)
            }
            other => panic!("expected broken connection, got {other:?}"),
        }
    }

    #[test]
    fn emit_empty_body_is_head_only() {
        let mut r = HttpResponse {
            status: 200,
            reason: "OK".into(),
            headers: Headers::new(),
            body: BodySource::Bytes(Vec::new()),
        };
        let mut out = Vec::new();
        assert_eq!(emit_response(&mut r, &mut out, HTTP_1_0).unwrap(), 19);
        assert_eq!(out, b"HTTP/1.0 200 OK\r\n\r\n");
    }

    #[test]
    fn emit_not_found_matches_golden() {
        for (mode, golden) in [
            (
                FidelityMode::Paper,
                &include_bytes!("../tests/data/golden/not_found_paper.bin")[..],
            ),
            (
                FidelityMode::Strict,
                &include_bytes!("../tests/data/golden/not_found_strict.bin")[..],
            ),
        ] {
            let mut r = build_not_found(b"nofile.html", mode);
            let mut out = Vec::new();
            let total = emit_response(&mut r, &mut out, HTTP_1_0).unwrap();
            assert_eq!(total as usize, golden.len());
            assert_eq!(out, golden);
        }
    }
}
