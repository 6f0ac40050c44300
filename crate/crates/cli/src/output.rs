use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;

/// One directory per run, named by subcommand and config hash.
pub struct RunDir {
    pub path: PathBuf,
    subcommand: &'static str,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path, subcommand: &'static str, config: &RunConfig) -> Result<Self> {
        let path = root.join(format!("{subcommand}-{}", config.hash(subcommand)));
        std::fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(RunDir { path, subcommand, files: Vec::new() })
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<PathBuf> {
        let p = self.path.join(name);
        let mut w = BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?);
        f(&mut w).and_then(|_| w.flush()).with_context(|| format!("writing {}", p.display()))?;
        self.files.push(name.to_string());
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }

    /// Metadata sidecar; the only file carrying a timestamp.
    pub fn finish(mut self, config: &RunConfig) -> Result<PathBuf> {
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let meta = json!({
            "subcommand": self.subcommand,
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp_unix": ts,
            "config": config,
            "files": self.files.clone(),
        });
        self.write_json("meta.json", &meta)?;
        Ok(self.path)
    }
}
