//! A small static-file HTTP/1.0 server.
//!
//! Two fidelity modes are available. [`FidelityMode::Paper`] reproduces
//! the observable behavior of a classic teaching server: every missing file
//! is answered with `200 OK` and an HTML error page, the content type is
//! always `text/html`, and anything other than a well-formed `GET` is
//! answered by closing the connection. [`FidelityMode::Strict`] sends proper
//! `404`, `400` and `501` statuses and picks content types from a MIME
//! table. Both modes refuse to serve anything outside the document root.

pub mod cli;
pub mod mime;
pub mod protocol;
pub mod request;
pub mod resolve;
pub mod response;
pub mod server;
pub mod testkit;

pub use mime::MimeTable;
pub use protocol::{BodySource, FidelityMode, Headers, HttpRequest, HttpResponse};
pub use request::RawRequestLine;
pub use resolve::{DocumentRoot, Resolution, ResolvedResource};
pub use server::{
    Concurrency, ConnectionOutcome, Server, ServerConfig, ServerHandle, Service, StopSignal,
};
