//! The `run.txt` record written next to every command's outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::Result;

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug)]
pub struct Provenance {
    pub command: String,
    pub config_path: Option<PathBuf>,
    /// Hash of the canonical effective configuration.
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    started: SystemTime,
    clock: Instant,
}

impl Provenance {
    pub fn start(command: &str, config_path: Option<&Path>, canonical_config: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_path: config_path.map(Path::to_path_buf),
            config_hash: sha256_hex(canonical_config.as_bytes()),
            seed,
            threads: rayon::current_num_threads(),
            started: SystemTime::now(),
            clock: Instant::now(),
        }
    }

    pub fn render(&self, status: &str, timings: &[(String, f64)]) -> String {
        let started = self.started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(
            s,
            "config = {}",
            self.config_path.as_ref().map_or("<defaults>".into(), |p| p.display().to_string())
        );
        let _ = writeln!(s, "config_sha256 = {}", self.config_hash);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "threads = {}", self.threads);
        let _ = writeln!(s, "target = {}-{}", std::env::consts::ARCH, std::env::consts::OS);
        let _ = writeln!(s, "started_unix = {started}");
        for (name, secs) in timings {
            let _ = writeln!(s, "time_{name} = {secs:.3}");
        }
        let _ = writeln!(s, "elapsed_seconds = {:.3}", self.clock.elapsed().as_secs_f64());
        let _ = writeln!(s, "status = {status}");
        s
    }

    pub fn write(&self, out: &Path, status: &str, timings: &[(String, f64)]) -> Result<()> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("run.txt"), self.render(status, timings))?;
        Ok(())
    }
}
