//! Run manifest and file output helpers.

use crate::config::{to_toml, RunConfig};
use nnflow::fields::io::write_snapshot;
use nnflow::fields::{Field, TimeSeries};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: Option<String>,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub threads: usize,
    pub telemetry: BTreeMap<String, Value>,
    pub verdicts: Vec<Verdict>,
    pub error: Option<String>,
    pub exit_code: i32,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(to_toml(cfg).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str, cfg: Option<&RunConfig>) -> Self {
        RunManifest {
            command: command.into(),
            config_hash: cfg.map(config_hash),
            code_version: env!("CARGO_PKG_VERSION").into(),
            wall_clock_seconds: 0.0,
            threads: rayon::current_num_threads(),
            telemetry: BTreeMap::new(),
            verdicts: Vec::new(),
            error: None,
            exit_code: 0,
        }
    }

    pub fn record(&mut self, key: &str, value: impl Into<Value>) {
        self.telemetry.insert(key.into(), value.into());
    }

    pub fn verdict(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict {
            name: name.into(),
            pass,
            detail: detail.into(),
        });
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), text + "\n")
    }
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

/// `<prefix>_<index>.bin` for every `every`-th sample.
pub fn write_series(dir: &Path, prefix: &str, series: &TimeSeries, every: usize) -> nnflow::Result<usize> {
    if every == 0 {
        return Ok(0);
    }
    let snap = dir.join("snapshots");
    fs::create_dir_all(&snap)?;
    let mut count = 0;
    for (i, (f, t)) in series.values.iter().zip(&series.times).enumerate().step_by(every) {
        let file = fs::File::create(snap.join(format!("{prefix}_{i:05}.bin")))?;
        write_snapshot(BufWriter::new(file), f, *t)?;
        count += 1;
    }
    Ok(count)
}

/// Snapshots `<prefix>_*.bin` under `dir/snapshots`, ordered by index.
pub fn read_series(dir: &Path, prefix: &str) -> nnflow::Result<(Vec<f64>, Vec<Field>)> {
    let snap = dir.join("snapshots");
    let mut paths: Vec<PathBuf> = fs::read_dir(&snap)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(&format!("{prefix}_")) && n.ends_with(".bin"))
        })
        .collect();
    paths.sort();
    let mut times = Vec::new();
    let mut fields = Vec::new();
    for p in paths {
        let (f, t) = nnflow::fields::io::read_snapshot(std::io::BufReader::new(fs::File::open(p)?))?;
        times.push(t);
        fields.push(f);
    }
    Ok((times, fields))
}
