//! Output directory handling: CSV bodies, atomic writes and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Formats a float with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV text with a fixed header.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: header.join(",") + "\n" }
    }

    /// Rebuilds a table from a header and previously produced rows.
    pub fn with_rows(header: &[&str], rows: &str) -> Self {
        let mut csv = Self::new(header);
        csv.text.push_str(rows);
        csv
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.text, "{}", fields.join(","));
    }

    /// Everything after the header line.
    pub fn body(&self) -> &str {
        self.text.split_once('\n').map_or("", |(_, b)| b)
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.text.as_bytes()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

#[derive(Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a C,
    started_unix: f64,
    finished_unix: f64,
    exit_code: i32,
    stages: &'a [StageTiming],
    files: &'a [FileEntry],
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Output directory that tracks every file written and the time spent per stage.
pub struct RunDir {
    root: PathBuf,
    started: f64,
    files: Vec<FileEntry>,
    stages: Vec<StageTiming>,
}

impl RunDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), started: unix_now(), files: Vec::new(), stages: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&self.path(name), bytes)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry { name: name.to_string(), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    /// Writes a file that is not listed in the manifest.
    pub fn write_untracked(&self, name: &str, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&self.path(name), bytes)
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> io::Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(io::Error::other)? + "\n";
        self.write(name, text.as_bytes())
    }

    /// Runs `f` and records its wall-clock under `name`.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.stages.push(StageTiming { name: name.to_string(), seconds: start.elapsed().as_secs_f64() });
        out
    }

    pub fn stage_done(&mut self, name: &str, seconds: f64) {
        self.stages.push(StageTiming { name: name.to_string(), seconds });
    }

    pub fn finish(self, command: &str, config: &impl Serialize, exit_code: i32) -> io::Result<()> {
        let manifest = Manifest {
            tool: "tebd",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            started_unix: self.started,
            finished_unix: unix_now(),
            exit_code,
            stages: &self.stages,
            files: &self.files,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)? + "\n";
        write_atomic(&self.path("manifest.json"), text.as_bytes())
    }
}
