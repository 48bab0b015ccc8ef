use std::collections::BTreeMap;

use thiserror::Error;

pub const DEFAULT_MEDIA_TYPE: &str = "application/octet-stream";

const STANDARD_ENTRIES: &[(&str, &str)] = &[
    ("html", "text/html"),
    ("htm", "text/html"),
    ("js", "text/javascript"),
    ("css", "text/css"),
    ("txt", "text/plain"),
    ("png", "image/png"),
    ("jpg", "image/jpeg"),
    ("jpeg", "image/jpeg"),
    ("gif", "image/gif"),
    ("ico", "image/x-icon"),
    ("json", "application/json"),
];

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid media type {0:?}")]
pub struct InvalidMediaType(pub String);

/// Extension to media type mapping. Keys are stored lowercase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MimeTable {
    entries: BTreeMap<String, String>,
    default_type: String,
}

impl MimeTable {
    pub fn new<I, E, T>(
        entries: I,
        default_type: impl Into<String>,
    ) -> Result<MimeTable, InvalidMediaType>
    where
        I: IntoIterator<Item = (E, T)>,
        E: AsRef<str>,
        T: Into<String>,
    {
        let default_type = default_type.into();
        validate(&default_type)?;
        let mut map = BTreeMap::new();
        for (ext, media) in entries {
            let media = media.into();
            validate(&media)?;
            map.insert(ext.as_ref().to_ascii_lowercase(), media);
        }
        Ok(MimeTable {
            entries: map,
            default_type,
        })
    }

    /// The closed table served in strict mode.
    pub fn standard() -> MimeTable {
        MimeTable::new(STANDARD_ENTRIES.iter().copied(), DEFAULT_MEDIA_TYPE)
            .expect("built-in table is valid")
    }

    pub fn get(&self, extension: &str) -> Option<&str> {
        self.entries
            .get(&extension.to_ascii_lowercase())
            .map(String::as_str)
    }

    pub fn default_type(&self) -> &str {
        &self.default_type
    }

    /// Looks up the extension after the last `.` of the final path segment.
    pub fn lookup(&self, name: &[u8]) -> &str {
        let segment = match name.iter().rposition(|&b| b == b'/') {
            Some(i) => &name[i + 1..],
            None => name,
        };
        segment
            .iter()
            .rposition(|&b| b == b'.')
            .and_then(|i| std::str::from_utf8(&segment[i + 1..]).ok())
            .and_then(|ext| self.get(ext))
            .unwrap_or(&self.default_type)
    }
}

impl Default for MimeTable {
    fn default() -> MimeTable {
        MimeTable::standard()
    }
}

fn validate(media: &str) -> Result<(), InvalidMediaType> {
    let ok = media.is_ascii()
        && media.matches('/').count() == 1
        && !media.starts_with('/')
        && !media.ends_with('/')
        && !media.chars().any(|c| c.is_ascii_control() || c == ' ');
    if ok {
        Ok(())
    } else {
        Err(InvalidMediaType(media.to_owned()))
    }
}
