//! Report assembly: deterministic JSON reports plus a separate timing file.
//!
//! Reports carry only quantities that are reproducible run-to-run (the
//! determinism contract of the runner), so wall-clock data goes to its own
//! file next to the report.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde_json::{json, Value};

use crate::CliError;

/// Software version stamped into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Wall-clock section timer; finished sections land in `timings.json`.
#[derive(Debug)]
pub struct Timings {
    started: Instant,
    current: Option<(String, Instant)>,
    sections: Vec<(String, f64)>,
}

impl Timings {
    pub fn new() -> Self {
        Timings {
            started: Instant::now(),
            current: None,
            sections: Vec::new(),
        }
    }

    /// Close the running section, start a new one.
    pub fn section(&mut self, name: &str) {
        self.close();
        self.current = Some((name.to_string(), Instant::now()));
    }

    fn close(&mut self) {
        if let Some((name, start)) = self.current.take() {
            self.sections
                .push((name, start.elapsed().as_secs_f64() * 1e3));
        }
    }

    /// Write `timings.json` into the output directory.
    pub fn write(mut self, out_dir: &Path, command: &str) -> Result<(), CliError> {
        self.close();
        let report = json!({
            "command": command,
            "total_ms": self.started.elapsed().as_secs_f64() * 1e3,
            "sections": self
                .sections
                .iter()
                .map(|(name, ms)| json!({ "name": name, "ms": ms }))
                .collect::<Vec<_>>(),
        });
        write_json(&out_dir.join("timings.json"), &report)
    }
}

impl Default for Timings {
    fn default() -> Self {
        Self::new()
    }
}

/// Assemble the common report envelope around per-command outputs.
pub fn run_report(command: &str, config: Value, outputs: Value) -> Value {
    json!({
        "version": VERSION,
        "command": command,
        "config": config,
        "outputs": outputs,
    })
}

/// Pretty-printed JSON with a trailing newline, bit-stable across runs.
pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("report serialization: {e}")))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}
