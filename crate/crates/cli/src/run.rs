//! Run directories: resolved config, rerun guard.

use std::path::{Path, PathBuf};

use cascade_core::config::{sha256_hex, ExperimentConfig};
use cascade_core::{Error, Result};

pub const RESOLVED: &str = "config.resolved";

/// An output directory claimed for one invocation.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub dir: PathBuf,
    pub config_hash: String,
    pub run_hash: String,
    invocation: String,
}

fn recorded_run_hash(path: &Path) -> Option<String> {
    let text = std::fs::read_to_string(path).ok()?;
    text.lines()
        .find_map(|l| l.strip_prefix("# run-hash ").map(|h| h.trim().to_string()))
}

impl RunDir {
    /// Refuses a directory that already holds a finished run with the same
    /// config and arguments, unless `force`.
    pub fn claim(
        dir: &Path,
        cfg: &ExperimentConfig,
        invocation: &str,
        force: bool,
    ) -> Result<Self> {
        let run_hash = sha256_hex(format!("{}{invocation}\n", cfg.resolved()).as_bytes());
        let path = dir.join(RESOLVED);
        if !force && recorded_run_hash(&path).as_deref() == Some(run_hash.as_str()) {
            return Err(Error::Config(format!(
                "{} already holds this run (hash {}); pass --force to rerun",
                dir.display(),
                &run_hash[..16]
            )));
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            config_hash: cfg.hash(),
            run_hash,
            invocation: invocation.to_string(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records the resolved config once the outputs are written.
    pub fn finish(&self, cfg: &ExperimentConfig) -> Result<()> {
        let text = format!(
            "# config-hash {}\n# run-hash {}\n# command {}\n{}",
            self.config_hash,
            self.run_hash,
            self.invocation,
            cfg.resolved()
        );
        let path = self.path(RESOLVED);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}
