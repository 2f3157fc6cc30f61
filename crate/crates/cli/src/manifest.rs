//! Per-run manifest: what ran, on which inputs, producing what.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub code_version: String,
    pub format_versions: BTreeMap<String, u32>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub status: String,
    pub error: Option<String>,
    pub started_unix: u64,
    pub wall_clock_secs: Option<f64>,
    #[serde(skip)]
    path: Option<PathBuf>,
    #[serde(skip)]
    t0: Option<Instant>,
}

fn hex(d: &[u8]) -> String {
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).with_context(|| format!("{}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// SHA-256 of a file, or of the sorted `relative-path  file-hash` lines
/// of every file under a directory.
pub fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut files = Vec::new();
        collect(path, &mut files)?;
        let mut h = Sha256::new();
        for f in files {
            let rel = f.strip_prefix(path).unwrap_or(&f);
            h.update(format!("{}  {}\n", rel.display(), hash_file(&f)?).as_bytes());
        }
        Ok(hex(&h.finalize()))
    } else {
        hash_file(path)
    }
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>, seed: Option<u64>) -> Self {
        let format_versions = BTreeMap::from([
            ("checkpoint".to_string(), ehdiscrim_core::model::CHECKPOINT_VERSION),
            ("shard".to_string(), ehdiscrim_core::corpus::SHARD_FORMAT_VERSION),
        ]);
        RunManifest {
            command: command.to_string(),
            argv,
            config: BTreeMap::new(),
            seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            format_versions,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            status: "running".into(),
            error: None,
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_clock_secs: None,
            path: None,
            t0: Some(Instant::now()),
        }
    }

    pub fn input(&mut self, label: &str, path: &Path) -> Result<()> {
        let h = hash_path(path).with_context(|| format!("hashing {label} input"))?;
        self.inputs.insert(format!("{label}:{}", path.display()), h);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn config_pairs(&mut self, pairs: impl IntoIterator<Item = (String, String)>) {
        self.config.extend(pairs);
    }

    /// Writes the manifest with status `running`.
    pub fn begin(&mut self, path: Option<PathBuf>) -> Result<()> {
        self.path = path;
        self.write()
    }

    pub fn finish(&mut self, outcome: &Result<()>) -> Result<()> {
        self.wall_clock_secs = self.t0.map(|t| t.elapsed().as_secs_f64());
        match outcome {
            Ok(()) => self.status = "ok".into(),
            Err(e) => {
                self.status = "failed".into();
                self.error = Some(format!("{e:#}"));
            }
        }
        self.write()
    }

    fn write(&self) -> Result<()> {
        if let Some(p) = &self.path {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("{}", p.display()))?;
        }
        Ok(())
    }
}
