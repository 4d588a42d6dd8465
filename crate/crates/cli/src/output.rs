//! Manifest, result files and the machine-readable error report.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Simulate,
    Zeta,
    Landau,
    Boltzmann,
    Law,
    Expectation,
    Doublets,
    Recollision,
    ScatterTable,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad config or parameters (exit 2).
    Usage(String),
    /// Numerical failure (exit 1).
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) | CliError::Io(m) => m,
        }
    }
}

impl From<lorentz_core::Error> for CliError {
    fn from(e: lorentz_core::Error) -> Self {
        match e {
            lorentz_core::Error::Domain(_) => CliError::Usage(e.to_string()),
            lorentz_core::Error::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Print the error report to stderr (and to `error.json` when `out` is usable).
pub fn fail(e: &CliError, out: Option<&Path>) -> ExitCode {
    let report = serde_json::json!({
        "error": e.kind(),
        "message": e.message(),
        "exit_code": e.code(),
    });
    let text = serde_json::to_string_pretty(&report).unwrap_or_default();
    eprintln!("{text}");
    if let Some(d) = out {
        if std::fs::create_dir_all(d).is_ok() {
            let _ = std::fs::write(d.join("error.json"), format!("{text}\n"));
        }
    }
    ExitCode::from(e.code())
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Writes result files under one directory.
pub struct Sink {
    pub dir: PathBuf,
    summary: String,
}

impl Sink {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        let _ = std::fs::remove_file(dir.join("error.json"));
        Ok(Sink { dir: dir.to_path_buf(), summary: String::new() })
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)?;
        std::fs::write(self.dir.join(name), format!("{text}\n"))?;
        Ok(())
    }

    pub fn file(&self, name: &str) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
        Ok(std::io::BufWriter::new(std::fs::File::create(self.dir.join(name))?))
    }

    pub fn csv(&self, name: &str) -> Result<csv::Writer<std::fs::File>, CliError> {
        Ok(csv::Writer::from_path(self.dir.join(name))?)
    }

    pub fn line(&mut self, s: impl AsRef<str>) {
        self.summary.push_str(s.as_ref());
        self.summary.push('\n');
    }

    pub fn finish(self) -> Result<(), CliError> {
        print!("{}", self.summary);
        std::fs::write(self.dir.join("summary.txt"), &self.summary)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: Kind,
    config_hash: String,
    config: &'a Resolved<'a, C>,
    workers: Option<usize>,
    timestamp_unix: u64,
}

/// The fully-resolved configuration that determines the results.
#[derive(Serialize)]
pub struct Resolved<'a, C: Serialize> {
    pub seed: u64,
    pub params: &'a C,
}

pub fn write_manifest<C: Serialize>(sink: &Sink, kind: Kind, resolved: &Resolved<C>, workers: Option<usize>) -> Result<String, CliError> {
    let hash = hex_sha256(&serde_json::to_vec(&serde_json::json!({ "command": kind, "config": resolved }))?);
    let timestamp_unix = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let m = Manifest { tool: "lorentz", version: env!("CARGO_PKG_VERSION"), command: kind, config_hash: hash.clone(), config: resolved, workers, timestamp_unix };
    sink.json("manifest.json", &m)?;
    Ok(hash)
}
