//! Mapping request targets onto files under the document root.
//!
//! Every lookup goes through the traversal jail, in both fidelity modes. A
//! target resolves to a hit only when its fully canonicalized path (all `..`
//! and symbolic links resolved) still lies under the canonical root. Targets
//! that climb out lexically are refused before touching the filesystem.

use std::ffi::OsStr;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::warn;

use crate::mime::MimeTable;
use crate::protocol::FidelityMode;

pub const DEFAULT_DOCUMENT: &str = "index.html";

/// A canonicalized directory that files are served from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRoot(PathBuf);

impl DocumentRoot {
    pub fn new(path: impl AsRef<Path>) -> io::Result<DocumentRoot> {
        let canonical = fs::canonicalize(path.as_ref())?;
        if !canonical.is_dir() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("{} is not a directory", canonical.display()),
            ));
        }
        Ok(DocumentRoot(canonical))
    }

    pub fn path(&self) -> &Path {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    Hit {
        canonical_path: PathBuf,
        length_bytes: u64,
    },
    Miss,
    /// The target points outside the root. Reported to clients as a miss.
    Forbidden,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedResource {
    /// The target without its leading slash; never starts with `/`
    /// unless the client sent `//`.
    pub requested_name: Vec<u8>,
    pub resolution: Resolution,
}

impl ResolvedResource {
    pub fn is_hit(&self) -> bool {
        matches!(self.resolution, Resolution::Hit { .. })
    }

    pub fn requested_name_lossy(&self) -> String {
        String::from_utf8_lossy(&self.requested_name).into_owned()
    }
}

/// Drops one leading `/`; an empty result becomes the default document.
pub fn target_to_relative(target: &[u8]) -> Vec<u8> {
    let stripped = target.strip_prefix(b"/").unwrap_or(target);
    if stripped.is_empty() {
        DEFAULT_DOCUMENT.as_bytes().to_vec()
    } else {
        stripped.to_vec()
    }
}

#[cfg(unix)]
fn segment_os_str(segment: &[u8]) -> &OsStr {
    use std::os::unix::ffi::OsStrExt;
    OsStr::from_bytes(segment)
}

#[cfg(not(unix))]
fn segment_os_str(segment: &[u8]) -> &OsStr {
    // Only UTF-8 segments can be represented; anything else cannot exist on disk.
    OsStr::new(std::str::from_utf8(segment).unwrap_or("\u{fffd}"))
}

fn escapes_lexically(relative: &[u8]) -> bool {
    let mut depth = 0usize;
    for segment in relative.split(|&b| b == b'/') {
        match segment {
            b"" | b"." => {}
            b".." => match depth.checked_sub(1) {
                Some(d) => depth = d,
                None => return true,
            },
            _ => depth += 1,
        }
    }
    false
}

pub fn resolve_within_root(root: &DocumentRoot, relative: &[u8]) -> ResolvedResource {
    let resolution = resolve(root, relative);
    ResolvedResource {
        requested_name: relative.to_vec(),
        resolution,
    }
}

fn resolve(root: &DocumentRoot, relative: &[u8]) -> Resolution {
    if escapes_lexically(relative) {
        return Resolution::Forbidden;
    }
    // "name/" only names a directory, and directories are never served.
    if relative.ends_with(b"/") {
        return Resolution::Miss;
    }
    // Segments are pushed one by one so a leading "/" cannot replace the root.
    let mut joined = root.path().to_path_buf();
    for segment in relative.split(|&b| b == b'/').filter(|s| !s.is_empty()) {
        joined.push(segment_os_str(segment));
    }
    let canonical = match fs::canonicalize(&joined) {
        Ok(p) => p,
        Err(e) => {
            if !matches!(
                e.kind(),
                io::ErrorKind::NotFound
                    | io::ErrorKind::NotADirectory
                    | io::ErrorKind::InvalidInput
            ) {
                warn!("resolving {}: {e}", joined.display());
            }
            return Resolution::Miss;
        }
    };
    if !canonical.starts_with(root.path()) {
        return Resolution::Forbidden;
    }
    match fs::metadata(&canonical) {
        Ok(meta) if meta.is_file() => Resolution::Hit {
            canonical_path: canonical,
            length_bytes: meta.len(),
        },
        Ok(_) => Resolution::Miss,
        Err(e) => {
            warn!("reading metadata of {}: {e}", canonical.display());
            Resolution::Miss
        }
    }
}

/// Paper mode always answers `text/html`; strict mode consults the table.
pub fn content_type_for<'t>(relative: &[u8], mode: FidelityMode, table: &'t MimeTable) -> &'t str {
    match mode {
        FidelityMode::Paper => "text/html",
        FidelityMode::Strict => table.lookup(relative),
    }
}
