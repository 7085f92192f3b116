mod diagnose;
mod eval;
mod render;
mod synth;
mod train;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use minerf_core::model::Checkpoint;
use minerf_core::{Model, RenderConfig};

pub use diagnose::{diagnose, DIAGNOSTICS_FILE};
pub use eval::{eval, EvalReport, ViewMetrics, REPORT_FILE};
pub use render::{orbit_poses, render};
pub use synth::{synth, SynthSettings};
pub use train::{train, CHECKPOINT_FILE, FAILED_CHECKPOINT_FILE, TELEMETRY_FILE};

use crate::args::SamplingArgs;
use crate::CliError;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(CliError::Runtime)
}

/// Runs `f` and records its wall time under `name`.
fn timed<T>(timings: &mut BTreeMap<String, f64>, name: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    timings.insert(name.to_string(), start.elapsed().as_secs_f64());
    out
}

fn render_config(a: &SamplingArgs) -> Result<RenderConfig, CliError> {
    let cfg = RenderConfig {
        near: a.near,
        far: a.far,
        samples: a.samples,
        jitter: false,
        background: crate::config::rgb(&a.background)?,
        chunk: a.chunk,
        seed: 0,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_model(path: &Path) -> Result<Model, CliError> {
    Ok(Checkpoint::load(path)?.into_model()?)
}
