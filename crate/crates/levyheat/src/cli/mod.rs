//! Configuration-driven orchestration: load a model + coefficients +
//! experiment description, run a pipeline stage, and emit CSV/JSON
//! artifacts with full provenance.
//!
//! Exit codes: 0 success, 2 assumption-validation failure, 3 numerical
//! tolerance failure, 4 series divergence, 1 anything else. Every failure
//! also writes a machine-readable `error.json`.

pub mod config;
pub mod stages;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::RunConfig;
pub use stages::{Stage, StageContext};

use crate::error::Result;

#[derive(Serialize)]
struct Manifest<'a> {
    library_version: &'static str,
    stage: &'a str,
    config: &'a RunConfig,
    seed_override: Option<u64>,
    wall_clock_seconds: &'a BTreeMap<String, f64>,
    /// Wall-clock timestamp; the only field excluded from byte-identity
    /// between reruns.
    timestamp_unix_ms: u128,
}

/// Runs one stage (or `all`) of a configuration, writing artifacts and a
/// manifest into the output directory. Returns the process exit code.
pub fn run(
    config_path: &Path,
    stage: Stage,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
) -> i32 {
    let out_dir_fallback = PathBuf::from("levyheat-out");
    let (code, out_dir) = match run_inner(config_path, stage, out_override, seed_override) {
        Ok(out_dir) => (0, out_dir),
        Err((err, out_dir)) => {
            let dir = out_dir.unwrap_or(out_dir_fallback);
            let _ = stages::write_error_artifact(&dir, stage.name(), &err);
            eprintln!("error: {err}");
            (err.exit_code(), dir)
        }
    };
    let _ = out_dir;
    code
}

fn run_inner(
    config_path: &Path,
    stage: Stage,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
) -> std::result::Result<PathBuf, (crate::Error, Option<PathBuf>)> {
    let mut cfg = RunConfig::from_path(config_path).map_err(|e| (e, None))?;
    if let Some(seed) = seed_override {
        let mut sim = cfg.sim_config();
        sim.seed = seed;
        cfg.experiment.sim = Some(sim);
    }
    let out_dir = out_override
        .map(|p| p.to_path_buf())
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("levyheat-out"));
    let mut ctx =
        StageContext::new(cfg, out_dir.clone()).map_err(|e| (e, Some(out_dir.clone())))?;
    let run_result = ctx.run(stage);
    // manifest first, so failures still leave provenance next to error.json
    let manifest = Manifest {
        library_version: env!("CARGO_PKG_VERSION"),
        stage: stage.name(),
        config: &ctx.cfg,
        seed_override,
        wall_clock_seconds: &ctx.wall_clocks,
        timestamp_unix_ms: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
    };
    let manifest_write: Result<()> = (|| {
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(out_dir.join("manifest.json"), text + "\n")?;
        Ok(())
    })();
    if let Err(e) = manifest_write {
        return Err((e, Some(out_dir)));
    }
    match run_result {
        Ok(()) => Ok(out_dir),
        Err(e) => Err((e, Some(out_dir))),
    }
}
