use std::path::PathBuf;

use minerf_core::data::load_blender;
use minerf_core::render::render_image;
use minerf_core::{MetricReport, RenderConfig};
use serde::{Deserialize, Serialize};

use super::{create_dir, load_model, render_config, timed};
use crate::args::EvalArgs;
use crate::manifest::{hash_dir, hash_file, RunManifest};
use crate::CliError;

pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: usize,
    pub metrics: MetricReport,
}

/// Scores of 8-bit renders against the split's images. `average_no_lpips`
/// combines PSNR and SSIM only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub views: Vec<ViewMetrics>,
    pub mean: MetricReport,
}

#[derive(Serialize)]
struct EvalSettings<'a> {
    checkpoint: &'a PathBuf,
    data: &'a PathBuf,
    split: &'a str,
    render: RenderConfig,
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let rcfg = render_config(&a.sampling)?;
    let model = load_model(&a.checkpoint)?;
    let ds = load_blender(&a.data, &a.split, rcfg.background)?;
    if ds.is_empty() {
        return Err(CliError::Config(format!("split {:?} has no views", a.split)));
    }
    let intr = ds.intrinsics()?;
    let settings = EvalSettings {
        checkpoint: &a.checkpoint,
        data: &a.data,
        split: &a.split,
        render: rcfg,
    };
    let mut manifest = RunManifest::new("eval", &settings, 0);
    manifest.inputs.insert("checkpoint".into(), hash_file(&a.checkpoint)?);
    manifest.inputs.insert("data".into(), hash_dir(&a.data)?);

    let views = timed(&mut manifest.timings, "eval", || -> Result<Vec<ViewMetrics>, CliError> {
        ds.images
            .iter()
            .zip(&ds.poses)
            .enumerate()
            .map(|(view, (img, pose))| {
                // scored as it would be saved, like the ground truth
                let pred = render_image(&model, pose, &intr, &rcfg)?.rgb.quantized();
                Ok(ViewMetrics {
                    view,
                    metrics: MetricReport::compute(&pred, img)?,
                })
            })
            .collect()
    })?;
    let per_view: Vec<MetricReport> = views.iter().map(|v| v.metrics).collect();
    let report = EvalReport {
        split: a.split.clone(),
        mean: MetricReport::mean(&per_view).expect("at least one view"),
        views,
    };

    create_dir(&a.out)?;
    let path = a.out.join(REPORT_FILE);
    let text = serde_json::to_string_pretty(&report).expect("report serialises");
    std::fs::write(&path, text).map_err(|e| CliError::Runtime(anyhow::anyhow!("writing {}: {e}", path.display())))?;
    manifest.artifacts.push(REPORT_FILE.into());
    manifest.write(&a.out)?;
    let m = report.mean;
    println!(
        "{} views: PSNR {:.3} dB  SSIM {:.4}  average (no-LPIPS) {:.5}",
        report.views.len(),
        m.psnr,
        m.ssim,
        m.average_no_lpips
    );
    Ok(())
}
