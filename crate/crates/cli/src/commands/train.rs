use minerf_core::data::{load_blender, select_input_views};
use minerf_core::model::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
use minerf_core::train::train_with;
use minerf_core::{Error, Model};

use super::{create_dir, timed};
use crate::args::TrainArgs;
use crate::config::TrainSettings;
use crate::manifest::{hash_dir, hash_file, RunManifest};
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
/// Parameters at the step whose loss stopped being finite.
pub const FAILED_CHECKPOINT_FILE: &str = "nonfinite_checkpoint.json";

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let s = TrainSettings::resolve(a)?;
    let data = s.data.clone().expect("checked during resolution");
    let mut manifest = RunManifest::new("train", &s, s.train.seed);

    let (dataset, test) = timed(&mut manifest.timings, "load", || -> Result<_, CliError> {
        let full = load_blender(&data, "train", s.train.background)?;
        let dataset = match &s.views {
            Some(v) => select_input_views(&full, v)?,
            None => full,
        };
        let test = match &s.test_split {
            Some(split) => Some(load_blender(&data, split, s.train.background)?),
            None => None,
        };
        Ok((dataset, test))
    })?;
    manifest.inputs.insert("data".into(), hash_dir(&data)?);
    if let Some(c) = &a.config {
        manifest.inputs.insert("config".into(), hash_file(c)?);
    }
    create_dir(&a.out)?;

    let model = Model::init(s.model_config(), s.train.seed)?;
    let outcome = timed(&mut manifest.timings, "train", || {
        train_with(model, &dataset, test.as_ref(), &s.train, |_, row| {
            let psnr = row.test_psnr.map_or(String::new(), |p| format!("  test_psnr={p:.3}"));
            eprintln!(
                "iter {:>6}  N={:<3}  lr={:.3e}  loss={:.6}{psnr}",
                row.iteration, row.n_samples, row.learning_rate, row.train_loss
            );
            Ok(())
        })
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(Error::NonFiniteLoss {
            iteration,
            loss,
            params,
        }) => {
            let dump = Checkpoint {
                format: CHECKPOINT_FORMAT.into(),
                version: CHECKPOINT_VERSION,
                iteration,
                config: s.model_config(),
                params: *params,
            };
            let path = a.out.join(FAILED_CHECKPOINT_FILE);
            dump.save(&path)?;
            return Err(CliError::Runtime(anyhow::anyhow!(
                "loss became {loss} at iteration {iteration}; parameters saved to {}",
                path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };

    Checkpoint::new(&outcome.model, s.train.iterations).save(&a.out.join(CHECKPOINT_FILE))?;
    let telemetry = a.out.join(TELEMETRY_FILE);
    std::fs::write(&telemetry, outcome.telemetry.to_csv())
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("writing {}: {e}", telemetry.display())))?;
    manifest.artifacts = vec![CHECKPOINT_FILE.into(), TELEMETRY_FILE.into()];
    manifest.write(&a.out)?;
    if let Some(last) = outcome.telemetry.rows.last() {
        println!("final loss {:.6}", last.train_loss);
        if let Some(p) = last.test_psnr {
            println!("final test PSNR {p:.3} dB");
        }
    }
    Ok(())
}
