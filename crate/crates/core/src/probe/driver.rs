//! Runs an `opt`-like binary over IR text.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::digest::sha256_hex;

/// Environment variable naming the optimizer binary.
pub const OPTIMIZER_ENV: &str = "SPECTRUM_FORGE_OPT";

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("pass list is empty")]
    EmptyPassList,
    #[error("optimizer binary not found: {0}")]
    BinaryNotFound(PathBuf),
    #[error("optimizer exited with {status}: {stderr}")]
    OptimizerCrash { status: String, stderr: String },
    #[error("optimizer timed out after {0:?}")]
    OptimizerTimeout(Duration),
    #[error("optimizer produced different output for identical input")]
    Nondeterministic,
    #[error("optimizer I/O failure: {0}")]
    Io(#[from] std::io::Error),
}

/// How pass names are turned into optimizer flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PassStyle {
    /// One `-<name>` flag per pass.
    #[default]
    Legacy,
    /// A single `-passes=a,b,c` flag.
    NewPm,
}

impl PassStyle {
    pub fn flags<S: AsRef<str>>(self, passes: &[S]) -> Vec<String> {
        match self {
            PassStyle::Legacy => passes.iter().map(|p| format!("-{}", p.as_ref())).collect(),
            PassStyle::NewPm => vec![format!(
                "-passes={}",
                passes.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(",")
            )],
        }
    }
}

/// What "-Oz" means for a given toolchain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OzPipeline {
    /// Pass this flag verbatim (e.g. `-Oz`).
    Flag(String),
    /// Run this pass list.
    Passes(Vec<String>),
}

impl Default for OzPipeline {
    fn default() -> Self {
        OzPipeline::Flag("-Oz".to_string())
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerDriver {
    pub binary: PathBuf,
    /// Arguments placed before the pass flags.
    pub extra_args: Vec<String>,
    pub style: PassStyle,
    pub timeout: Duration,
    /// Parent directory for per-invocation scratch dirs (system temp if unset).
    pub scratch_dir: Option<PathBuf>,
    /// Content-addressed store of previous outputs.
    pub cache_dir: Option<PathBuf>,
    /// Run every uncached invocation twice and compare outputs.
    pub verify_determinism: bool,
    pub oz: OzPipeline,
}

impl OptimizerDriver {
    pub fn new(binary: impl Into<PathBuf>) -> Self {
        Self {
            binary: binary.into(),
            extra_args: Vec::new(),
            style: PassStyle::Legacy,
            timeout: Duration::from_secs(60),
            scratch_dir: None,
            cache_dir: None,
            verify_determinism: false,
            oz: OzPipeline::default(),
        }
    }

    /// Applies `passes` to `program` and returns the optimizer's textual output.
    pub fn apply_passes<S: AsRef<str>>(&self, program: &[u8], passes: &[S]) -> Result<Vec<u8>, DriverError> {
        if passes.is_empty() {
            return Err(DriverError::EmptyPassList);
        }
        self.run(program, self.style.flags(passes))
    }

    /// Runs the configured `-Oz` pipeline.
    pub fn apply_oz(&self, program: &[u8]) -> Result<Vec<u8>, DriverError> {
        match &self.oz {
            OzPipeline::Flag(flag) => self.run(program, vec![flag.clone()]),
            OzPipeline::Passes(passes) => self.apply_passes(program, passes),
        }
    }

    fn cache_key(&self, program: &[u8], flags: &[String]) -> String {
        let mut material = Vec::new();
        material.extend_from_slice(self.binary.to_string_lossy().as_bytes());
        for a in self.extra_args.iter().chain(flags) {
            material.push(0);
            material.extend_from_slice(a.as_bytes());
        }
        material.push(0xff);
        material.extend_from_slice(sha256_hex(program).as_bytes());
        sha256_hex(&material)
    }

    fn run(&self, program: &[u8], flags: Vec<String>) -> Result<Vec<u8>, DriverError> {
        let cached = self
            .cache_dir
            .as_ref()
            .map(|dir| dir.join(format!("{}.ll", self.cache_key(program, &flags))));
        if let Some(path) = &cached {
            if let Ok(bytes) = std::fs::read(path) {
                return Ok(bytes);
            }
        }

        let out = self.invoke(program, &flags)?;
        if self.verify_determinism && self.invoke(program, &flags)? != out {
            return Err(DriverError::Nondeterministic);
        }

        if let Some(path) = cached {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            // Write-then-rename so concurrent readers never see partial files.
            let tmp = tempfile::NamedTempFile::new_in(path.parent().unwrap_or(Path::new(".")))?;
            std::fs::write(tmp.path(), &out)?;
            tmp.persist(&path).map_err(|e| DriverError::Io(e.error))?;
        }
        Ok(out)
    }

    fn resolve_binary(&self) -> Result<PathBuf, DriverError> {
        let b = &self.binary;
        if b.components().count() > 1 || b.is_absolute() {
            return if b.is_file() {
                Ok(b.clone())
            } else {
                Err(DriverError::BinaryNotFound(b.clone()))
            };
        }
        std::env::var_os("PATH")
            .into_iter()
            .flat_map(|p| std::env::split_paths(&p).collect::<Vec<_>>())
            .map(|dir| dir.join(b))
            .find(|c| c.is_file())
            .ok_or_else(|| DriverError::BinaryNotFound(b.clone()))
    }

    fn invoke(&self, program: &[u8], flags: &[String]) -> Result<Vec<u8>, DriverError> {
        let binary = self.resolve_binary()?;
        let scratch = match &self.scratch_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                tempfile::Builder::new().prefix("sf-opt-").tempdir_in(dir)?
            }
            None => tempfile::Builder::new().prefix("sf-opt-").tempdir()?,
        };
        let input = scratch.path().join("input.ll");
        let output = scratch.path().join("output.ll");
        std::fs::write(&input, program)?;

        let mut child = Command::new(&binary)
            .args(&self.extra_args)
            .args(flags)
            .arg("-S")
            .arg(&input)
            .arg("-o")
            .arg(&output)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => DriverError::BinaryNotFound(binary.clone()),
                _ => DriverError::Io(e),
            })?;

        let mut stderr = child.stderr.take();
        let stderr_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            if let Some(err) = stderr.as_mut() {
                let _ = err.read_to_end(&mut buf);
            }
            buf
        });

        let status = match child.wait_timeout(self.timeout)? {
            Some(status) => status,
            None => {
                let _ = child.kill();
                let _ = child.wait();
                let _ = stderr_reader.join();
                return Err(DriverError::OptimizerTimeout(self.timeout));
            }
        };
        let stderr = stderr_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(DriverError::OptimizerCrash {
                status: status.to_string(),
                stderr: String::from_utf8_lossy(&stderr).trim().to_string(),
            });
        }
        Ok(std::fs::read(&output)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_styles() {
        let passes = ["dce", "gvn"];
        assert_eq!(PassStyle::Legacy.flags(&passes), vec!["-dce", "-gvn"]);
        assert_eq!(PassStyle::NewPm.flags(&passes), vec!["-passes=dce,gvn"]);
    }

    #[test]
    fn empty_pass_list_rejected() {
        let d = OptimizerDriver::new("/nonexistent/opt");
        let none: [&str; 0] = [];
        assert!(matches!(d.apply_passes(b"x", &none), Err(DriverError::EmptyPassList)));
    }

    #[test]
    fn missing_binary_reported() {
        let d = OptimizerDriver::new("/nonexistent/opt");
        assert!(matches!(d.apply_passes(b"x", &["dce"]), Err(DriverError::BinaryNotFound(_))));
        let d = OptimizerDriver::new("definitely-not-an-optimizer-binary");
        assert!(matches!(d.apply_passes(b"x", &["dce"]), Err(DriverError::BinaryNotFound(_))));
    }
}
