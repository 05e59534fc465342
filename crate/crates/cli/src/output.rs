//! Output writing: JSON-lines path records, CSV summaries, structured
//! text certificates, and the run manifest with per-file hashes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use rsjd_core::simulate::HybridPath;

use crate::CliError;

pub struct OutputDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("output dir: {e}")))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write_text(&mut self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn csv_writer(&mut self, name: &str) -> Result<csv::Writer<fs::File>, CliError> {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.files.push(name.to_string());
        Ok(csv::Writer::from_writer(file))
    }

    /// Dump paths as JSON-lines: one record per retained node with an
    /// event tag (`node`, `switch`, `jump`).
    pub fn write_paths_jsonl(
        &mut self,
        name: &str,
        paths: &[(u64, &HybridPath)],
        stride: usize,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut out =
            fs::File::create(&path).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        let stride = stride.max(1);
        for (idx, p) in paths {
            let mut switch_iter = p.switches.iter().peekable();
            let mut jump_iter = p.jumps.iter().peekable();
            for node in 0..p.len() {
                let t = p.times[node];
                let mut tag = "node";
                while let Some(sw) = switch_iter.peek() {
                    if sw.time < t {
                        switch_iter.next();
                    } else {
                        if sw.time == t {
                            tag = "switch";
                        }
                        break;
                    }
                }
                while let Some(jp) = jump_iter.peek() {
                    if jp.time < t {
                        jump_iter.next();
                    } else {
                        if jp.time == t {
                            tag = "jump";
                        }
                        break;
                    }
                }
                if tag == "node" && node % stride != 0 && node + 1 != p.len() {
                    continue;
                }
                let record = json!({
                    "path": idx,
                    "t": t,
                    "x": p.state(node),
                    "lambda": p.regimes[node],
                    "event": tag,
                });
                writeln!(out, "{record}").map_err(|e| CliError::Io(format!("{name}: {e}")))?;
            }
            let status = json!({
                "path": idx,
                "t": p.terminal_time(),
                "status": p.status.tag(),
                "event": "end",
            });
            writeln!(out, "{status}").map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        }
        self.files.push(name.to_string());
        Ok(())
    }

    /// Write the manifest last: it references every produced file with
    /// its sha256.
    pub fn write_manifest(
        &mut self,
        command: &str,
        config_hash: &str,
        seed: u64,
        wall_clock: f64,
    ) -> Result<(), CliError> {
        let mut outputs = Vec::new();
        for name in &self.files {
            let bytes = fs::read(self.dir.join(name))
                .map_err(|e| CliError::Io(format!("{name}: {e}")))?;
            outputs.push(json!({
                "file": name,
                "sha256": hex::encode(Sha256::digest(&bytes)),
            }));
        }
        let manifest = json!({
            "artifact_version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config_sha256": config_hash,
            "master_seed": seed,
            "wall_clock_seconds": wall_clock,
            "outputs": outputs,
        });
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Io(format!("manifest: {e}")))?;
        fs::write(self.dir.join("manifest.json"), text)
            .map_err(|e| CliError::Io(format!("manifest: {e}")))?;
        Ok(())
    }
}

pub fn hash_config(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}
