use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mfgz_core::Result;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.txt";

/// Record of one run. Only this file carries wall-clock timings; every data
/// file next to it is a pure function of the config and flags.
#[derive(Debug)]
pub struct RunManifest {
    pub config: String,
    pub subcommand: &'static str,
    pub parameters: Vec<(String, String)>,
    pub out_dir: PathBuf,
    pub version: &'static str,
    pub files: Vec<(String, String)>,
    pub timings: Vec<(String, f64)>,
    started: Instant,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

impl RunManifest {
    pub fn new(config: &str, subcommand: &'static str, out_dir: &Path) -> Self {
        Self {
            config: config.to_string(),
            subcommand,
            parameters: Vec::new(),
            out_dir: out_dir.to_path_buf(),
            version: env!("CARGO_PKG_VERSION"),
            files: Vec::new(),
            timings: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.push((key.to_string(), value.to_string()));
    }

    pub fn timed<T>(&mut self, label: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f()?;
        self.timings.push((label.to_string(), t0.elapsed().as_secs_f64()));
        Ok(out)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        fs::write(self.out_dir.join(name), contents)?;
        self.files.push((name.to_string(), sha256_hex(contents)));
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config = {}", self.config);
        let _ = writeln!(s, "subcommand = {}", self.subcommand);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        for (k, v) in &self.parameters {
            let _ = writeln!(s, "param.{k} = {v}");
        }
        for (name, sum) in &self.files {
            let _ = writeln!(s, "file.{name} = sha256:{sum}");
        }
        for (label, secs) in &self.timings {
            let _ = writeln!(s, "time.{label} = {secs:.6}");
        }
        let _ = writeln!(s, "time.total = {:.6}", self.started.elapsed().as_secs_f64());
        s
    }

    pub fn finish(self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        fs::write(self.out_dir.join(MANIFEST_FILE), self.render())?;
        Ok(())
    }
}
