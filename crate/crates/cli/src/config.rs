//! Resolved settings of the configurable commands.
//!
//! Each settings struct deserialises from a partial TOML table (missing keys
//! take their defaults) or from the `config` echo of a manifest. Flags are
//! applied last.

use std::path::{Path, PathBuf};

use minerf_core::model::{DiagnoseConfig, InitScheme, ModelConfig, Variant};
use minerf_core::{EncodingConfig, TrainConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::{DiagnoseArgs, TrainArgs};
use crate::manifest::RunManifest;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub data: Option<PathBuf>,
    pub variant: Variant,
    pub depth: usize,
    pub width: usize,
    pub views: Option<Vec<usize>>,
    pub test_split: Option<String>,
    pub train: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            data: None,
            variant: Variant::Mi,
            depth: 8,
            width: 64,
            views: None,
            test_split: None,
            train: TrainConfig::default(),
        }
    }
}

impl TrainSettings {
    pub fn resolve(args: &TrainArgs) -> Result<Self, CliError> {
        let mut s: Self = match &args.config {
            Some(path) => load(path, "train")?,
            None => Self::default(),
        };
        let mut problems = Vec::new();
        let t = &mut s.train;
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = args.$flag.clone() { $field = v; })*
            };
        }
        set! {
            variant => s.variant,
            depth => s.depth,
            width => s.width,
            iters => t.iterations,
            batch => t.batch_size,
            lr_start => t.lr_start,
            lr_end => t.lr_end,
            lambda_br => t.lambda_br,
            out_fraction => t.out_fraction,
            n_max => t.anneal.n_max,
            n_start => t.anneal.n_start,
            eta => t.anneal.eta,
            seed => t.seed,
            eval_every => t.eval_every,
            eval_samples => t.eval_samples,
            near => t.near,
            far => t.far,
            chunk_points => t.chunk_points,
        }
        if let Some(b) = &args.background {
            match rgb(b) {
                Ok(c) => t.background = c,
                Err(e) => problems.push(e.to_string()),
            }
        }
        if args.no_jitter {
            t.jitter = false;
        }
        if args.data.is_some() {
            s.data = args.data.clone();
        }
        if args.views.is_some() {
            s.views = args.views.clone();
        }
        if args.test_split.is_some() {
            s.test_split = args.test_split.clone();
        }
        s.check(problems)?;
        Ok(s)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::for_variant(self.variant, self.depth, self.width)
    }

    /// Every problem at once, so a run never starts half-configured.
    fn check(&self, mut problems: Vec<String>) -> Result<(), CliError> {
        problems.extend(self.train.problems());
        if self.data.is_none() {
            problems.push("no dataset given (--data)".into());
        }
        if self.depth == 0 || self.width == 0 {
            problems.push(format!("depth and width must be positive, got {} and {}", self.depth, self.width));
        } else if let Err(e) = self.model_config().validate() {
            problems.push(e.to_string());
        }
        if self.views.as_ref().is_some_and(|v| v.is_empty()) {
            problems.push("view selection is empty".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(problems.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSettings {
    pub seeds: usize,
    pub first_seed: u64,
    pub depth: usize,
    pub width: usize,
    pub batch: usize,
    pub frequencies: usize,
    pub init: InitScheme,
}

impl Default for DiagnoseSettings {
    fn default() -> Self {
        let d = DiagnoseConfig::default();
        Self {
            seeds: 100,
            first_seed: 0,
            depth: d.depth,
            width: d.width,
            batch: d.batch,
            frequencies: d.encoding.frequencies,
            init: d.init,
        }
    }
}

impl DiagnoseSettings {
    pub fn resolve(args: &DiagnoseArgs) -> Result<Self, CliError> {
        let mut s: Self = match &args.config {
            Some(path) => load(path, "diagnose")?,
            None => Self::default(),
        };
        s.seeds = args.seeds.unwrap_or(s.seeds);
        s.first_seed = args.first_seed.unwrap_or(s.first_seed);
        s.depth = args.depth.unwrap_or(s.depth);
        s.width = args.width.unwrap_or(s.width);
        s.batch = args.batch.unwrap_or(s.batch);
        s.frequencies = args.frequencies.unwrap_or(s.frequencies);
        s.init = args.init.unwrap_or(s.init);
        let mut problems = Vec::new();
        if s.seeds == 0 {
            problems.push("seeds must be at least 1".to_string());
        }
        if s.depth < 2 || s.width == 0 || s.batch == 0 {
            problems.push(format!(
                "need depth >= 2 and positive width and batch, got {}, {}, {}",
                s.depth, s.width, s.batch
            ));
        }
        if problems.is_empty() {
            Ok(s)
        } else {
            Err(CliError::Config(problems.join("; ")))
        }
    }

    pub fn diagnose_config(&self) -> DiagnoseConfig {
        DiagnoseConfig {
            depth: self.depth,
            width: self.width,
            batch: self.batch,
            encoding: EncodingConfig::new(self.frequencies),
            init: self.init,
        }
    }
}

/// Parses a `--background r,g,b` list.
pub fn rgb(values: &[f64]) -> Result<[f64; 3], CliError> {
    match values {
        &[r, g, b] => Ok([r, g, b]),
        _ => Err(CliError::Config(format!("a colour needs 3 components, got {}", values.len()))),
    }
}

/// Reads settings from TOML, or from a manifest (`.json`) written by the
/// same command.
pub fn load<T: DeserializeOwned>(path: &Path, command: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: not a run manifest: {e}", path.display())))?;
        if manifest.command != command {
            return Err(CliError::Config(format!(
                "{} records a {} run, not {command}",
                path.display(),
                manifest.command
            )));
        }
        serde_json::from_value(manifest.config).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
