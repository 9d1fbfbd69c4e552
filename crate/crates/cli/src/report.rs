//! Per-run report written next to a subcommand's outputs as `run_report.<command>.txt`.
//! It carries wall time, so it is the one file that differs between identical runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use temt_core::data::file_sha256;

use crate::settings::Source;
use crate::CliError;

pub struct RunReport {
    command: &'static str,
    started: Instant,
    config: Vec<(String, String, Source)>,
    inputs: Vec<(PathBuf, String)>,
    outputs: Vec<(PathBuf, String)>,
    notes: Vec<String>,
    warnings: Vec<String>,
}

impl RunReport {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            config: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn set_config(&mut self, echo: &[(String, String, Source)]) {
        self.config = echo.to_vec();
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let sum = file_sha256(path)?;
        self.inputs.push((path.to_path_buf(), sum));
        Ok(())
    }

    /// Checksums every file of a dataset directory that exists.
    pub fn dataset_inputs(&mut self, dir: &Path) -> Result<(), CliError> {
        for name in crate::commands::dataset_files() {
            let p = dir.join(name);
            if p.exists() {
                self.input(&p)?;
            }
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        let sum = file_sha256(path)?;
        self.outputs.push((path.to_path_buf(), sum));
        Ok(())
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn warn(&mut self, s: impl Into<String>) {
        let s = s.into();
        log::warn!("{s}");
        self.warnings.push(s);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command={}", self.command);
        let _ = writeln!(out, "version={}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "wall_time_s={:.3}", self.started.elapsed().as_secs_f64());
        out.push_str("\n[config]\n");
        for (k, v, src) in &self.config {
            let _ = writeln!(out, "{k}={v}\t# {src}");
        }
        for (title, files) in [("inputs", &self.inputs), ("outputs", &self.outputs)] {
            let _ = writeln!(out, "\n[{title}]");
            for (p, sum) in files {
                let _ = writeln!(out, "sha256 {sum}  {}", p.display());
            }
        }
        out.push_str("\n[notes]\n");
        for n in &self.notes {
            let _ = writeln!(out, "{n}");
        }
        let _ = writeln!(out, "\n[warnings] {}", self.warnings.len());
        for w in &self.warnings {
            let _ = writeln!(out, "{w}");
        }
        out
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let path = out_dir.join(format!("run_report.{}.txt", self.command));
        std::fs::write(&path, self.render())
            .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?;
        Ok(path)
    }
}
