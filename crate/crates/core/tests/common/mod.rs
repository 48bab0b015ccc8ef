#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use tinyserve::testkit::{raw_request, CapturedResponse};
use tinyserve::{Concurrency, FidelityMode, Server, ServerConfig, ServerHandle};

pub const FIXTURE: &[u8] = include_bytes!("../data/index.html");
pub const GOLDEN_NOT_FOUND_PAPER: &[u8] = include_bytes!("../data/golden/not_found_paper.bin");
pub const GOLDEN_NOT_FOUND_STRICT: &[u8] = include_bytes!("../data/golden/not_found_strict.bin");

pub const CLIENT_TIMEOUT: Duration = Duration::from_secs(5);

/// A temp directory holding `www/index.html` (the fixture) and a file
/// outside the root.
pub struct Site {
    pub dir: tempfile::TempDir,
}

impl Site {
    pub fn new() -> Site {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("www")).unwrap();
        fs::write(dir.path().join("www/index.html"), FIXTURE).unwrap();
        fs::write(dir.path().join("secret.txt"), b"TOP-SECRET-MARKER").unwrap();
        Site { dir }
    }

    pub fn root(&self) -> PathBuf {
        self.dir.path().join("www")
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> PathBuf {
        let path = self.root().join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).unwrap();
        }
        fs::write(&path, bytes).unwrap();
        path
    }

    pub fn config(&self, mode: FidelityMode) -> ServerConfig {
        let mut c = ServerConfig::new(self.root());
        c.port = 0;
        c.mode = mode;
        c.access_log = false;
        c
    }

    pub fn start(&self, mode: FidelityMode, concurrency: Concurrency) -> ServerHandle {
        let mut c = self.config(mode);
        c.concurrency = concurrency;
        start(c)
    }
}

pub fn start(config: ServerConfig) -> ServerHandle {
    Server::bind(config).unwrap().spawn()
}

pub fn get(server: &ServerHandle, target: &str) -> CapturedResponse {
    let req = format!("GET {target} HTTP/1.0\r\n\r\n");
    raw_request(server.local_addr(), req.as_bytes(), CLIENT_TIMEOUT).unwrap()
}

pub fn open_fds() -> usize {
    fs::read_dir(Path::new("/proc/self/fd"))
        .map(|d| d.count())
        .unwrap_or(0)
}
