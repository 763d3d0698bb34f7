//! Output directory handling: provenance stamps, overwrite protection and
//! the readers for upstream artifacts.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use lhz_protocols::cohort::ManifestLine;
use lhz_protocols::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Seeds};

pub const INSTANCES: &str = "instances.jsonl";
pub const COHORT: &str = "cohort.jsonl";
pub const GROUPS: &str = "groups.json";
pub const OPTIMIZED: &str = "optimized.json";
pub const LIBRARY: &str = "library.json";
pub const SIDECAR: &str = "run.log";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),

    #[error("missing artifact {}; run `lhz {stage}` first", path.display())]
    Missing { stage: &'static str, path: PathBuf },

    #[error("{} already exists; pass --overwrite to replace it", path.display())]
    Exists { path: PathBuf },

    #[error("{0}")]
    Numerical(String),
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Core(Error::Io(err))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Core(err.into())
    }
}

impl CliError {
    /// 0 success, 1 validation, 2 missing artifact, 3 numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Missing { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Exists { .. } => 1,
            CliError::Core(e) => match e {
                Error::NoConvergence { .. }
                | Error::IntegrationFailure { .. }
                | Error::GroupEvaluation { .. }
                | Error::Hardness { .. }
                | Error::TooLarge { .. } => 3,
                Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 2,
                _ => 1,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Stamp carried by every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub config_hash: String,
    pub seeds: Seeds,
}

/// First line of a JSON-lines artifact.
#[derive(Serialize, Deserialize)]
struct Header {
    provenance: Provenance,
}

/// JSON artifact: provenance next to the payload.
#[derive(Serialize, Deserialize)]
pub struct Stamped<T> {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub body: T,
}

pub struct Workspace {
    pub dir: PathBuf,
    pub cfg: RunConfig,
    pub hash: String,
    pub overwrite: bool,
}

impl Workspace {
    pub fn new(dir: PathBuf, cfg: RunConfig, overwrite: bool) -> CliResult<Self> {
        fs::create_dir_all(&dir)?;
        let hash = cfg.hash();
        Ok(Self { dir, cfg, hash, overwrite })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn provenance(&self, stage: &str) -> Provenance {
        Provenance {
            stage: stage.to_string(),
            config_hash: self.hash.clone(),
            seeds: self.cfg.seeds.clone(),
        }
    }

    /// Refuses to start a stage whose outputs exist unless overwriting.
    pub fn claim(&self, outputs: &[&str]) -> CliResult<()> {
        if self.overwrite {
            return Ok(());
        }
        match outputs.iter().map(|o| self.path(o)).find(|p| p.exists()) {
            Some(path) => Err(CliError::Exists { path }),
            None => Ok(()),
        }
    }

    fn require(&self, name: &str, stage: &'static str) -> CliResult<PathBuf> {
        let path = self.path(name);
        if path.exists() {
            Ok(path)
        } else {
            Err(CliError::Missing { stage, path })
        }
    }

    fn check_hash(&self, name: &str, provenance: &Provenance) {
        if provenance.config_hash != self.hash {
            log::warn!("{name} was produced under config {}, current config is {}", provenance.config_hash, self.hash);
        }
    }

    pub fn write_manifest(&self, name: &str, stage: &str, lines: &[ManifestLine]) -> CliResult<()> {
        let mut out = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer(&mut out, &Header { provenance: self.provenance(stage) })?;
        out.write_all(b"\n")?;
        lhz_protocols::cohort::write_manifest(lines, &mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_manifest(&self, name: &str, stage: &'static str) -> CliResult<Vec<ManifestLine>> {
        let path = self.require(name, stage)?;
        let mut reader = BufReader::new(File::open(&path)?);
        let mut first = String::new();
        reader.read_line(&mut first)?;
        let header: Header = serde_json::from_str(&first)
            .map_err(|e| Error::Parse(format!("{}: header line: {e}", path.display())))?;
        self.check_hash(name, &header.provenance);
        Ok(lhz_protocols::cohort::read_manifest(reader)?)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, stage: &str, body: T) -> CliResult<()> {
        let stamped = Stamped {
            provenance: self.provenance(stage),
            body,
        };
        let mut text = serde_json::to_string_pretty(&stamped)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str, stage: &'static str) -> CliResult<T> {
        let path = self.require(name, stage)?;
        let stamped: Stamped<T> = serde_json::from_str(&fs::read_to_string(&path)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        self.check_hash(name, &stamped.provenance);
        Ok(stamped.body)
    }

    /// CSV whose first line is a `#` comment carrying the provenance.
    pub fn write_csv<F>(&self, name: &str, stage: &str, body: F) -> CliResult<()>
    where
        F: FnOnce(&mut dyn Write) -> lhz_protocols::Result<()>,
    {
        let mut out = BufWriter::new(File::create(self.path(name))?);
        let p = self.provenance(stage);
        writeln!(
            out,
            "# stage={} config_hash={} seeds={}",
            p.stage,
            p.config_hash,
            serde_json::to_string(&p.seeds)?
        )?;
        body(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Appends a timestamped line to the sidecar log, the only place where
    /// wall-clock data is kept.
    pub fn note(&self, line: &str) -> CliResult<()> {
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut log = OpenOptions::new().create(true).append(true).open(self.path(SIDECAR))?;
        writeln!(log, "{stamp} {line}")?;
        Ok(())
    }
}
