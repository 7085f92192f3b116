use std::fmt::Write as _;

use minerf_core::model::{layer_ratios, MlpVariant};

use super::{create_dir, timed};
use crate::args::DiagnoseArgs;
use crate::config::DiagnoseSettings;
use crate::manifest::{hash_file, RunManifest};
use crate::CliError;

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";

fn variant_name(v: MlpVariant) -> &'static str {
    match v {
        MlpVariant::Vanilla => "vanilla",
        MlpVariant::MultiInput => "mi",
    }
}

/// One `layer` row per seed, variant and layer with the L1 norm and mean
/// absolute value of that layer's weight gradient and its L1 ratio to the
/// layer below, then one `summary` row per variant with the fraction of
/// ratios at or above 1.
pub fn diagnose(a: &DiagnoseArgs) -> Result<(), CliError> {
    let s = DiagnoseSettings::resolve(a)?;
    let cfg = s.diagnose_config();
    let mut manifest = RunManifest::new("diagnose", &s, s.first_seed);
    if let Some(c) = &a.config {
        manifest.inputs.insert("config".into(), hash_file(c)?);
    }
    let variants = [MlpVariant::Vanilla, MlpVariant::MultiInput];
    let mut csv = String::from("row,seed,variant,layer,l1,mean_abs,ratio\n");
    let mut tallies = [(0usize, 0usize); 2];
    timed(&mut manifest.timings, "diagnose", || -> Result<(), CliError> {
        for seed in s.first_seed..s.first_seed + s.seeds as u64 {
            for (v, tally) in variants.iter().zip(tallies.iter_mut()) {
                let norms = cfg.run(*v, seed).map_err(minerf_core::Error::from)?;
                let ratios = layer_ratios(&norms);
                for (i, n) in norms.iter().enumerate() {
                    let ratio = if i == 0 { String::new() } else { format!("{:?}", ratios[i - 1]) };
                    writeln!(
                        csv,
                        "layer,{seed},{},{},{:?},{:?},{ratio}",
                        variant_name(*v),
                        n.layer,
                        n.l1,
                        n.mean_abs
                    )
                    .expect("write to string");
                }
                tally.0 += ratios.iter().filter(|&&r| r >= 1.0).count();
                tally.1 += ratios.len();
            }
        }
        Ok(())
    })?;
    for (v, (hits, total)) in variants.iter().zip(tallies) {
        let fraction = hits as f64 / total as f64;
        writeln!(csv, "summary,,{},,,,{fraction:?}", variant_name(*v)).expect("write to string");
        println!("{}: {hits}/{total} adjacent ratios >= 1 ({fraction:.3})", variant_name(*v));
    }

    create_dir(&a.out)?;
    let path = a.out.join(DIAGNOSTICS_FILE);
    std::fs::write(&path, csv).map_err(|e| CliError::Runtime(anyhow::anyhow!("writing {}: {e}", path.display())))?;
    manifest.artifacts.push(DIAGNOSTICS_FILE.into());
    manifest.write(&a.out)?;
    Ok(())
}
