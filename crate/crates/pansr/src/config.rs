//! Flat key=value configuration and run manifests.
//!
//! Configuration is a single-level string map: files hold one `key=value`
//! per line with `#` comments, command-line flags are merged on top (flags
//! win), and the resolved map is hashed so reports and manifests can name
//! the exact configuration that produced them. Every CLI run also writes a
//! [`Manifest`] next to its outputs: the resolved config, the seed, a
//! build identifier, and a content hash per output file — enough to re-run
//! the command and check the hashes match.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{PanError, Result};

/// Resolved flat configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are skipped;
    /// later duplicates win; keys may not contain whitespace.
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(PanError::Config(format!(
                    "line {}: `{line}` is not key=value",
                    lineno + 1
                )));
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(PanError::Config(format!(
                    "line {}: bad key `{key}`",
                    lineno + 1
                )));
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PanError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Merges `other` on top of `self` (other wins).
    pub fn merge(&mut self, other: &Config) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.values.insert(key.to_string(), value.to_string());
    }

    /// Sets the key only when the flag was actually given.
    pub fn set_opt<T: Display>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    /// Typed lookup; a present-but-unparsable value is a config error
    /// naming both the key and the value.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                PanError::Config(format!(
                    "key `{key}`: cannot parse `{raw}` as {}",
                    std::any::type_name::<T>()
                ))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Canonical serialization: sorted `key=value` lines.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            s.push_str(k);
            s.push('=');
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    /// Hex digest of the canonical serialization.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }
}

/// Record of one CLI run: what was asked for and what came out.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub build: String,
    pub config: Config,
    /// Output name (relative path) -> content hash.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: Config, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            seed,
            build: build_id(),
            config,
            outputs: BTreeMap::new(),
        }
    }

    /// Hashes a produced file and records it under `name`.
    pub fn add_output(&mut self, name: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)?;
        self.outputs.insert(name.to_string(), hex(&Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("# pansr run manifest\n");
        s.push_str(&format!("command={}\n", self.command));
        s.push_str(&format!("build={}\n", self.build));
        s.push_str(&format!("seed={}\n", self.seed));
        s.push_str(&format!("config_hash={}\n", self.config.hash()));
        for (k, v) in self.config.iter() {
            s.push_str(&format!("config.{k}={v}\n"));
        }
        for (k, v) in &self.outputs {
            s.push_str(&format!("output.{k}={v}\n"));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.render())?;
        Ok(())
    }

    /// Reads a manifest back; the embedded config hash is re-checked.
    pub fn load(path: &Path) -> Result<Self> {
        let flat = Config::from_file(path)?;
        let command = flat
            .raw("command")
            .ok_or_else(|| PanError::Config(format!("{}: missing command", path.display())))?
            .to_string();
        let seed: u64 = flat.get("seed")?.ok_or_else(|| {
            PanError::Config(format!("{}: missing seed", path.display()))
        })?;
        let build = flat.raw("build").unwrap_or("unknown").to_string();
        let mut config = Config::new();
        let mut outputs = BTreeMap::new();
        for (k, v) in flat.iter() {
            if let Some(key) = k.strip_prefix("config.") {
                config.set(key, v);
            } else if let Some(key) = k.strip_prefix("output.") {
                outputs.insert(key.to_string(), v.to_string());
            }
        }
        if let Some(recorded) = flat.raw("config_hash") {
            if recorded != config.hash() {
                return Err(PanError::Config(format!(
                    "{}: config hash {} does not match recorded {recorded}",
                    path.display(),
                    config.hash()
                )));
            }
        }
        Ok(Self { command, seed, build, config, outputs })
    }
}

/// Build identifier: crate version plus the git commit when the process
/// runs inside a checkout.
pub fn build_id() -> String {
    let version = env!("CARGO_PKG_VERSION");
    match git_commit() {
        Some(commit) => format!("pansr/{version}+g{commit}"),
        None => format!("pansr/{version}"),
    }
}

fn git_commit() -> Option<String> {
    let mut dir = std::env::current_dir().ok()?;
    loop {
        let head = dir.join(".git").join("HEAD");
        if head.is_file() {
            let text = std::fs::read_to_string(&head).ok()?;
            let text = text.trim();
            let full = if let Some(reference) = text.strip_prefix("ref: ") {
                std::fs::read_to_string(dir.join(".git").join(reference.trim()))
                    .ok()?
                    .trim()
                    .to_string()
            } else {
                text.to_string()
            };
            return (full.len() >= 12).then(|| full[..12].to_string());
        }
        if !dir.pop() {
            return None;
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex digest of a file's contents.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(&std::fs::read(path)?)))
}
