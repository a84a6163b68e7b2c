//! Run configuration, CSV persistence, manifests and plot-data emission.

use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// 17 significant digits: enough for a lossless f64 round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return invalid(format!("row of {} values for {} columns", row.len(), header.len()));
        }
        let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(path, out.as_bytes())
}

pub fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let head = lines.next().ok_or_else(|| Error::Invalid(format!("{} is empty", path.display())))?;
    let cols: Vec<&str> = head.split(',').map(str::trim).collect();
    if cols != header {
        return invalid(format!("{}: expected columns {:?}, found {:?}", path.display(), header, cols));
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Invalid(format!("{} line {}: {e}", path.display(), k + 2)))?;
            if row.len() != header.len() {
                return invalid(format!("{} line {}: wrong column count", path.display(), k + 2));
            }
            Ok(row)
        })
        .collect()
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Plain-text columns with `#` comment lines, readable by gnuplot, numpy and
/// most spreadsheet tools.
pub fn emit_plot_data(path: &Path, comments: &[&str], columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    if rows.is_empty() {
        return invalid(format!("no data for plot file {}", path.display()));
    }
    if columns.len() < 2 {
        return invalid("plot data needs at least two columns");
    }
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(out, "# {}", columns.join(" "));
    for r in rows {
        if r.len() != columns.len() {
            return invalid(format!("plot row has {} values for {} columns", r.len(), columns.len()));
        }
        let cells: Vec<String> = r.iter().map(|v| fmt_f64(*v)).collect();
        let _ = writeln!(out, "{}", cells.join(" "));
    }
    write_file(path, out.as_bytes())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("config line {}: expected key = value", k + 1)))?;
        let key = key.trim().replace('-', "_");
        if key.is_empty() {
            return invalid(format!("config line {}: empty key", k + 1));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub a: f64,
    pub gamma: f64,
    pub half_width: f64,
    pub h: f64,
    pub t0: f64,
    pub t_min: f64,
    pub ratio: f64,
    pub smallness: f64,
    pub seed: u64,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    /// Command-specific options, kept verbatim.
    pub extra: BTreeMap<String, String>,
}

const COMMANDS: [&str; 7] = ["selfsimilar", "evolve", "trace", "continue", "nls", "linear-j", "verify"];

fn take<T: std::str::FromStr>(map: &mut BTreeMap<String, String>, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match map.remove(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e| Error::Invalid(format!("{key} = {v}: {e}"))),
    }
}

impl RunConfig {
    pub fn from_map(command: &str, mut map: BTreeMap<String, String>) -> Result<Self> {
        if !COMMANDS.contains(&command) {
            return invalid(format!("unknown command {command}"));
        }
        let (l0, h0) = match command {
            "selfsimilar" => (40.0, 0.005),
            "evolve" => (20.0, 0.05),
            "trace" => (40.0, 0.01),
            _ => (20.0, 1e-3),
        };
        let cfg = Self {
            command: command.to_string(),
            a: take(&mut map, "a", 0.5)?,
            gamma: take(&mut map, "gamma", 0.2)?,
            half_width: take(&mut map, "l", l0)?,
            h: take(&mut map, "h", h0)?,
            t0: take(&mut map, "t0", 1.0)?,
            t_min: take(&mut map, "t_min", 2f64.powi(-14))?,
            ratio: take(&mut map, "ratio", 0.5)?,
            smallness: take(&mut map, "smallness", 0.1)?,
            seed: take(&mut map, "seed", 0u64)?,
            input: map.remove("input").map(PathBuf::from),
            out: PathBuf::from(map.remove("out").unwrap_or_else(|| format!("out/{command}"))),
            extra: map,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let a_ok = if self.command == "linear-j" { self.a >= 0.0 } else { self.a > 0.0 };
        if !(a_ok && self.a.is_finite()) {
            return invalid(format!("a = {} is out of range", self.a));
        }
        if !(self.gamma > 0.0 && self.gamma < 0.25) {
            return invalid(format!("gamma = {} must lie in (0, 1/4)", self.gamma));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return invalid(format!("ratio = {} must lie in (0, 1)", self.ratio));
        }
        if !(self.h > 0.0 && self.half_width > 0.0 && self.half_width.is_finite()) {
            return invalid("grid half width and spacing must be positive");
        }
        if !(self.t0 > 0.0 && self.t_min > 0.0 && self.t_min < self.t0) {
            return invalid(format!("need 0 < t_min < t0, got t_min = {}, t0 = {}", self.t_min, self.t0));
        }
        if !(self.smallness > 0.0) {
            return invalid("smallness ratio must be positive");
        }
        Ok(())
    }

    pub fn extra_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.extra.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| Error::Invalid(format!("{key} = {v}: {e}"))),
        }
    }

    pub fn extra_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.extra.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| Error::Invalid(format!("{key} = {v}: {e}"))),
        }
    }

    pub fn extra_str<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.extra.get(key).map(String::as_str).unwrap_or(default)
    }

    /// Canonical `key = value` rendering; the output directory is excluded
    /// so that reruns into different directories hash identically.
    pub fn canonical(&self) -> String {
        let mut m: BTreeMap<String, String> = self.extra.clone();
        m.insert("command".into(), self.command.clone());
        for (k, v) in [
            ("a", self.a),
            ("gamma", self.gamma),
            ("l", self.half_width),
            ("h", self.h),
            ("t0", self.t0),
            ("t_min", self.t_min),
            ("ratio", self.ratio),
            ("smallness", self.smallness),
        ] {
            m.insert(k.into(), fmt_f64(v));
        }
        m.insert("seed".into(), self.seed.to_string());
        if let Some(p) = &self.input {
            m.insert("input".into(), p.display().to_string());
        }
        m.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub config: String,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    /// Checksum every file under `dir` except the manifest itself.
    pub fn collect(cfg: &RunConfig, dir: &Path) -> Result<Self> {
        let mut files = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in fs::read_dir(&d)? {
                let p = entry?.path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.file_name().is_some_and(|n| n != "manifest.json") {
                    let bytes = fs::read(&p)?;
                    let rel = p.strip_prefix(dir).unwrap_or(&p);
                    files.push(FileEntry {
                        path: rel.to_string_lossy().replace('\\', "/"),
                        bytes: bytes.len() as u64,
                        sha256: sha256_hex(&bytes),
                    });
                }
            }
        }
        files.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(Self { command: cfg.command.clone(), config_hash: cfg.hash(), config: cfg.canonical(), files })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let p = dir.join("manifest.json");
        write_json(&p, self)?;
        Ok(p)
    }
}
