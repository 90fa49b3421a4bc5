//! Shared plumbing for the subcommands: config resolution, manifest
//! bookkeeping, and the couple of parsers clap does not give us.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pansr::config::{Config, Manifest};
use pansr::data::{load_folder, FolderSource};

/// Loads the optional config file and returns the base [`Config`] that flag
/// values get merged into (flags win).
pub fn base_config(file: Option<&PathBuf>) -> Result<Config> {
    match file {
        Some(path) => {
            Config::from_file(path).with_context(|| format!("loading {}", path.display()))
        }
        None => Ok(Config::new()),
    }
}

/// Writes `manifest.txt` into `dir`, hashing every file in `outputs`.
pub fn finish_manifest(
    command: &str,
    config: Config,
    seed: u64,
    dir: &Path,
    outputs: &[PathBuf],
) -> Result<()> {
    let mut manifest = Manifest::new(command, config, seed);
    for path in outputs {
        let name = path
            .strip_prefix(dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        manifest
            .add_output(&name, path)
            .with_context(|| format!("hashing {}", path.display()))?;
    }
    let path = dir.join("manifest.txt");
    manifest.save(&path)?;
    println!("manifest: {}", path.display());
    Ok(())
}

/// Loads a PNG folder as an image source, with the standard flags applied.
pub fn folder_source(dir: &Path, resolution: usize, skip_bad: bool) -> Result<FolderSource> {
    load_folder(dir, resolution, skip_bad)
        .with_context(|| format!("loading image folder {}", dir.display()))
}

/// Parses a comma-separated list of unsigned integers.
pub fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<usize>()
                .with_context(|| format!("`{part}` is not a whole number"))
        })
        .collect()
}
