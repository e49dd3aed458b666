//! CSV and run-manifest output.
//!
//! All frequencies in files follow the /2pi GHz convention of the device
//! tables; values are printed with Rust's shortest round-trip float
//! formatting, so re-parsing a written file reproduces the in-memory grid
//! bit for bit.

use fluxsim::experiments::{DurationScan, ScanResult};
use fluxsim::propagator::Trajectory;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::new();
    let _ = write!(s, "t_ns");
    for label in &traj.labels {
        let _ = write!(s, ",p_z_{label}");
    }
    let _ = writeln!(s);
    for (t, row) in traj.times.iter().zip(&traj.probabilities) {
        let _ = write!(s, "{t}");
        for p in row {
            let _ = write!(s, ",{p}");
        }
        let _ = writeln!(s);
    }
    s
}

pub fn scan_csv(scan: &ScanResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", scan.columns.join(","));
    for row in &scan.rows {
        let mut first = true;
        for v in row {
            if !first {
                let _ = write!(s, ",");
            }
            let _ = write!(s, "{v}");
            first = false;
        }
        let _ = writeln!(s);
    }
    s
}

pub fn duration_scan_csv(scan: &DurationScan) -> String {
    let mut s = String::new();
    let _ = write!(s, "t_d_ns");
    for label in &scan.observables {
        let _ = write!(s, ",p_end_z_{label}");
    }
    let _ = writeln!(s);
    for (t, row) in scan.t_d.iter().zip(&scan.p_end) {
        let _ = write!(s, "{t}");
        for p in row {
            let _ = write!(s, ",{p}");
        }
        let _ = writeln!(s);
    }
    s
}

/// Parse a CSV produced by this module back into (header, rows).
pub fn parse_csv(text: &str) -> Option<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next()?.split(',').map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Option<Vec<f64>> = line.split(',').map(|v| v.parse().ok()).collect();
        rows.push(row?);
    }
    Some((header, rows))
}

/// Everything needed to reproduce a run: replaying the recorded command
/// line against the same device file reproduces the outputs.
pub struct RunManifest {
    pub tool_version: &'static str,
    pub device_digest: u64,
    pub model: String,
    pub parameters: Vec<(String, String)>,
    pub command_line: Vec<String>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "timestamp = {}", timestamp());
        let _ = writeln!(s, "tool_version = {}", self.tool_version);
        let _ = writeln!(s, "device_digest = {:016x}", self.device_digest);
        let _ = writeln!(s, "model = {}", self.model);
        for (k, v) in &self.parameters {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "command_line = {}", shell_join(&self.command_line));
        s
    }
}

fn timestamp() -> String {
    match std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH) {
        Ok(d) => format!("{}.{:09}", d.as_secs(), d.subsec_nanos()),
        Err(_) => "0".into(),
    }
}

fn shell_join(args: &[String]) -> String {
    args.iter()
        .map(|a| {
            if a.chars().all(|c| c.is_ascii_alphanumeric() || "-_./,=:".contains(c)) {
                a.clone()
            } else {
                format!("'{}'", a.replace('\'', "'\\''"))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_output(path: &Path, contents: &str) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents)
}

pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest");
    out.with_file_name(name)
}
