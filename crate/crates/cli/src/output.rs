use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Header carried by every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    fn write_csv_comment(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(w, "# tool_version={}", self.tool_version)?;
        writeln!(w, "# command={}", self.command)?;
        writeln!(w, "# config_hash={}", self.config_hash)?;
        writeln!(w, "# seed={}", self.seed)
    }
}

/// Output directory plus the provenance stamped onto each file in it.
pub struct Sink {
    pub dir: PathBuf,
    pub provenance: Provenance,
    pub format: Format,
}

impl Sink {
    pub fn new(dir: &Path, provenance: Provenance, format: Format) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            provenance,
            format,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// CSV body written by `body` after the provenance comment lines.
    pub fn csv<F>(&self, name: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.path(name);
        let mut w = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        self.provenance.write_csv_comment(&mut w)?;
        body(&mut w)?;
        w.flush()?;
        Ok(path)
    }

    /// `{"metadata": ..., "data": ...}`.
    pub fn json<T: Serialize>(&self, name: &str, data: &T) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            metadata: &'a Provenance,
            data: &'a T,
        }
        let path = self.path(name);
        let w = BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        serde_json::to_writer_pretty(
            w,
            &Doc {
                metadata: &self.provenance,
                data,
            },
        )?;
        Ok(path)
    }

    /// Writes `stem.csv` or `stem.json` according to the selected format.
    pub fn table<T, F>(&self, stem: &str, data: &T, csv_body: F) -> Result<PathBuf>
    where
        T: Serialize,
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let name = format!("{stem}.{}", self.format.extension());
        match self.format {
            Format::Csv => self.csv(&name, csv_body),
            Format::Json => self.json(&name, data),
        }
    }
}
