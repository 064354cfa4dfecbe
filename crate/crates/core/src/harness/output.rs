use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::RunResult;
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

pub fn csv_file_name(slug: &str) -> String {
    format!("msd_{slug}.csv")
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: String,
    config_hash: &'a str,
    config: &'a ExperimentConfig,
    master_seed: u64,
    run_seeds: &'a [u64],
    iterations: usize,
    monte_carlo_runs: usize,
    initial_msd: f64,
    algorithms: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    name: &'static str,
    step_size: f64,
    file: String,
    diverged_runs: usize,
}

/// Writes one `msd_<alg>.csv` per algorithm plus `manifest.json` into `dir`.
/// Output depends only on the config and seed, never on timing.
pub fn emit_csv(result: &RunResult, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for alg in &result.algorithms {
        let file = csv_file_name(alg.spec.name.slug());
        let path = dir.join(&file);
        alg.curve.write_csv(BufWriter::new(File::create(&path)?))?;
        written.push(path);
        entries.push(ManifestEntry {
            name: alg.spec.name.name(),
            step_size: alg.spec.step_size,
            file,
            diverged_runs: alg.diverged_runs,
        });
    }
    let manifest = Manifest {
        version: version_string(),
        config_hash: &result.config_hash,
        config: &result.config,
        master_seed: result.config.seed,
        run_seeds: &result.run_seeds,
        iterations: result.config.iterations,
        monte_carlo_runs: result.config.monte_carlo_runs,
        initial_msd: result.initial_msd,
        algorithms: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text)?;
    written.push(path);
    Ok(written)
}
