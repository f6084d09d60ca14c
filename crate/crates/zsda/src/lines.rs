//! Shared plumbing for the JSON-lines files: a header object on the first
//! line, one record per following line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Creates `path` for writing, failing if it already exists.
pub(crate) fn create_new(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    OpenOptions::new().write(true).create_new(true).open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AlreadyExists {
            Error::OutputExists(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

pub(crate) struct Writer {
    path: PathBuf,
    out: BufWriter<File>,
}

impl Writer {
    pub(crate) fn create(path: &Path) -> Result<Self> {
        Ok(Self { path: path.to_path_buf(), out: BufWriter::new(create_new(path)?) })
    }

    pub(crate) fn line<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<()> {
        let io = |e| Error::io(&self.path, e);
        serde_json::to_writer(&mut self.out, value).map_err(|e| io(e.into()))?;
        self.out.write_all(b"\n").map_err(io)
    }

    pub(crate) fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub(crate) struct Reader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line: usize,
}

impl Reader {
    pub(crate) fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), lines: BufReader::new(file).lines(), line: 0 })
    }

    /// Reads the header and checks its mandatory `version` field.
    pub(crate) fn header<T: DeserializeOwned>(&mut self, version: u64) -> Result<T> {
        let Some(raw) = self.next_raw()? else {
            return Err(self.error("missing header line"));
        };
        let value: serde_json::Value = serde_json::from_str(&raw).map_err(|e| self.error(e))?;
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == version => {}
            Some(v) => return Err(Error::Version { path: self.path.clone(), found: v, expected: version }),
            None => return Err(self.error("header has no integer version field")),
        }
        serde_json::from_value(value).map_err(|e| self.error(e))
    }

    /// Next non-blank record, with its 1-based line number.
    pub(crate) fn record<T: DeserializeOwned>(&mut self) -> Result<Option<T>> {
        match self.next_raw()? {
            None => Ok(None),
            Some(raw) => serde_json::from_str(&raw).map(Some).map_err(|e| self.error(e)),
        }
    }

    pub(crate) fn error(&self, msg: impl ToString) -> Error {
        Error::parse(&self.path, self.line, msg)
    }

    fn next_raw(&mut self) -> Result<Option<String>> {
        for next in self.lines.by_ref() {
            self.line += 1;
            let raw = next.map_err(|e| Error::io(&self.path, e))?;
            if !raw.trim().is_empty() {
                return Ok(Some(raw));
            }
        }
        Ok(None)
    }
}
