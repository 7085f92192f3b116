//! Radiance-field networks.
//!
//! Three architectures share one parameter table format:
//!
//! * **vanilla** – the original NeRF trunk (one input skip) with a density
//!   head and a direction-conditioned colour head;
//! * **mi** – the same heads on a multi-input trunk, where every layer after
//!   the first sees `concat(f_{i−1}, γ(x))`;
//! * **dual** – a multi-input density branch over `γ_{L1}(x)` and a colour
//!   branch that starts from `γ_{L2}(x)`, receives `γ_{L3}(d)` at every
//!   later layer and adds the density feature of the interaction layer.

mod checkpoint;
mod diagnostics;
mod mlp;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use diagnostics::{gradient_layer_norms, layer_ratios, DiagnoseConfig, LayerGradient};
pub use mlp::{Activation, Mlp, MlpConfig, MlpVariant};

use crate::autodiff::{AutodiffError, Matrix, NodeId, Tape};
use crate::encoding::{EncodingConfig, FrequencyProfile};
use crate::rng::{stream, Stream};
use crate::Error;

/// Weight initialisation bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `U(−1/√out, 1/√out)` for weights and biases.
    #[default]
    FanOut,
    /// `U(−1/√in, 1/√in)`, the common framework default.
    FanIn,
}

impl InitScheme {
    pub fn bound(self, in_dim: usize, out_dim: usize) -> f64 {
        let d = match self {
            InitScheme::FanOut => out_dim,
            InitScheme::FanIn => in_dim,
        };
        1.0 / (d.max(1) as f64).sqrt()
    }
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "fan_out" | "fan-out" => Ok(InitScheme::FanOut),
            "fan_in" | "fan-in" => Ok(InitScheme::FanIn),
            other => Err(Error::Config(format!("unknown init scheme {other:?}; expected fan_out or fan_in"))),
        }
    }
}

/// Named parameter matrices in registration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelParams {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: String, value: Matrix) {
        self.names.push(name);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Registers every matrix on the tape, as parameters or as constants.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> Result<Vec<NodeId>, AutodiffError> {
        self.values.iter().map(|v| tape.leaf(v.clone(), trainable)).collect()
    }
}

/// Vanilla or multi-input trunk with NeRF-style heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NerfConfig {
    pub depth: usize,
    pub width: usize,
    pub position: EncodingConfig,
    pub direction: EncodingConfig,
    /// Vanilla trunk only.
    #[serde(default)]
    pub skip_layer: Option<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub init: InitScheme,
}

impl NerfConfig {
    pub fn vanilla(depth: usize, width: usize) -> Self {
        Self {
            depth,
            width,
            position: EncodingConfig::new(10),
            direction: EncodingConfig::new(4),
            skip_layer: (depth > 5).then_some(5),
            activation: Activation::Relu,
            init: InitScheme::FanOut,
        }
    }

    pub fn multi_input(depth: usize, width: usize) -> Self {
        Self {
            skip_layer: None,
            ..Self::vanilla(depth, width)
        }
    }
}

/// Density branch + colour branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualBranchConfig {
    pub density_depth: usize,
    pub color_depth: usize,
    /// Hidden width of both branches; equal widths make the interaction sum well defined.
    pub width: usize,
    pub frequencies: FrequencyProfile,
    /// 1-based colour-branch layer whose activated output receives the
    /// density feature of the same layer.
    pub interaction_layer: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub init: InitScheme,
}

impl DualBranchConfig {
    pub fn new(depth: usize, width: usize) -> Self {
        Self {
            density_depth: depth,
            color_depth: depth,
            width,
            frequencies: FrequencyProfile::object_centric(),
            interaction_layer: depth.div_ceil(2).max(2),
            activation: Activation::Relu,
            init: InitScheme::FanOut,
        }
    }

    pub fn density_mlp(&self) -> MlpConfig {
        MlpConfig {
            depth: self.density_depth,
            width: self.width,
            input_dim: self.frequencies.density_position.output_dim(3),
            output_dim: 1,
            activation: self.activation,
            variant: MlpVariant::MultiInput,
            skip_layer: None,
        }
    }

    pub fn color_mlp(&self) -> MlpConfig {
        MlpConfig {
            depth: self.color_depth,
            width: self.width,
            input_dim: self.frequencies.color_position.output_dim(3),
            output_dim: 3,
            activation: self.activation,
            variant: MlpVariant::MultiInput,
            skip_layer: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Vanilla,
    Mi,
    Dual,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "mi" => Ok(Variant::Mi),
            "dual" => Ok(Variant::Dual),
            other => Err(Error::Config(format!("unknown variant {other:?}; expected vanilla, mi or dual"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ModelConfig {
    Vanilla(NerfConfig),
    Mi(NerfConfig),
    Dual(DualBranchConfig),
}

impl ModelConfig {
    /// Default architecture of each variant at the given size.
    pub fn for_variant(variant: Variant, depth: usize, width: usize) -> Self {
        match variant {
            Variant::Vanilla => ModelConfig::Vanilla(NerfConfig::vanilla(depth, width)),
            Variant::Mi => ModelConfig::Mi(NerfConfig::multi_input(depth, width)),
            Variant::Dual => ModelConfig::Dual(DualBranchConfig::new(depth, width)),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            ModelConfig::Vanilla(_) => Variant::Vanilla,
            ModelConfig::Mi(_) => Variant::Mi,
            ModelConfig::Dual(_) => Variant::Dual,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        match self {
            ModelConfig::Vanilla(c) | ModelConfig::Mi(c) => {
                NerfNet::new(*self.nerf_trunk_variant(), *c).trunk.cfg.validate()?;
                if c.width < 2 {
                    return Err(Error::Config("width must be at least 2 for the colour head".into()));
                }
                Ok(())
            }
            ModelConfig::Dual(c) => {
                c.density_mlp().validate()?;
                c.color_mlp().validate()?;
                if c.interaction_layer < 2 || c.interaction_layer >= c.color_depth {
                    return Err(Error::Config(format!(
                        "interaction_layer {} must lie in [2, {})",
                        c.interaction_layer, c.color_depth
                    )));
                }
                if c.interaction_layer > c.density_depth {
                    return Err(Error::Config(format!(
                        "interaction_layer {} exceeds density depth {}",
                        c.interaction_layer, c.density_depth
                    )));
                }
                Ok(())
            }
        }
    }

    fn nerf_trunk_variant(&self) -> &MlpVariant {
        match self {
            ModelConfig::Mi(_) => &MlpVariant::MultiInput,
            _ => &MlpVariant::Vanilla,
        }
    }

    /// Indices of the hidden-layer weight matrices, shallowest first, for
    /// gradient telemetry. The dual model reports its density branch.
    pub fn hidden_weight_indices(&self) -> Vec<usize> {
        match self {
            ModelConfig::Vanilla(c) | ModelConfig::Mi(c) => {
                let net = NerfNet::new(*self.nerf_trunk_variant(), *c);
                (0..c.depth).map(|i| net.trunk.weight_index(i)).collect()
            }
            ModelConfig::Dual(c) => {
                let net = DualNet::new(*c);
                (0..c.density_depth).map(|i| net.density.weight_index(i)).collect()
            }
        }
    }
}

/// Trunk plus NeRF heads: σ from the trunk, colour from
/// `relu([feature(f_D), γ(d)]·W_view)`.
#[derive(Clone, Debug)]
pub struct NerfNet {
    pub cfg: NerfConfig,
    pub trunk: Mlp,
    heads: usize,
}

impl NerfNet {
    pub fn new(variant: MlpVariant, cfg: NerfConfig) -> Self {
        let trunk_cfg = MlpConfig {
            depth: cfg.depth,
            width: cfg.width,
            input_dim: cfg.position.output_dim(3),
            output_dim: 0,
            activation: cfg.activation,
            variant,
            skip_layer: if variant == MlpVariant::Vanilla { cfg.skip_layer } else { None },
        };
        let trunk = Mlp::new(trunk_cfg, 0);
        let heads = trunk.param_count();
        Self { cfg, trunk, heads }
    }

    fn init(&self, rng: &mut impl Rng, params: &mut ModelParams) {
        let w = self.cfg.width;
        self.trunk.init("trunk", self.cfg.init, rng, params);
        mlp::push_linear(params, "sigma", w, 1, self.cfg.init, rng);
        mlp::push_linear(params, "feature", w, w, self.cfg.init, rng);
        mlp::push_linear(params, "view", w + self.cfg.direction.output_dim(3), w / 2, self.cfg.init, rng);
        mlp::push_linear(params, "rgb", w / 2, 3, self.cfg.init, rng);
    }

    /// `(raw σ, rgb logits)` from encoded positions and directions.
    pub fn forward(
        &self,
        tape: &mut Tape,
        nodes: &[NodeId],
        enc_x: NodeId,
        enc_d: NodeId,
    ) -> Result<(NodeId, NodeId), AutodiffError> {
        let feats = self.trunk.hidden(tape, nodes, enc_x, enc_x, None)?;
        let last = *feats.last().expect("depth >= 2");
        let raw_sigma = mlp::linear(tape, nodes, self.heads, last)?;
        let feature = mlp::linear(tape, nodes, self.heads + 2, last)?;
        let view_in = tape.concat_cols(feature, enc_d)?;
        let view = mlp::linear(tape, nodes, self.heads + 4, view_in)?;
        let view = match self.cfg.activation {
            Activation::Relu => tape.relu(view)?,
            Activation::Identity => view,
        };
        let rgb = mlp::linear(tape, nodes, self.heads + 6, view)?;
        Ok((raw_sigma, rgb))
    }
}

#[derive(Clone, Debug)]
pub struct DualNet {
    pub cfg: DualBranchConfig,
    pub density: Mlp,
    pub color: Mlp,
}

impl DualNet {
    pub fn new(cfg: DualBranchConfig) -> Self {
        let density = Mlp::new(cfg.density_mlp(), 0);
        let color = Mlp::with_side_input(
            cfg.color_mlp(),
            cfg.frequencies.color_direction.output_dim(3),
            density.param_count(),
        );
        Self { cfg, density, color }
    }

    fn init(&self, rng: &mut impl Rng, params: &mut ModelParams) {
        self.density.init("density", self.cfg.init, rng, params);
        self.color.init("color", self.cfg.init, rng, params);
    }

    /// Density from the density branch alone; colour from the colour branch
    /// with the density feature added at the interaction layer.
    pub fn forward(
        &self,
        tape: &mut Tape,
        nodes: &[NodeId],
        x: &Matrix,
        d: &Matrix,
    ) -> Result<(NodeId, NodeId), AutodiffError> {
        let f = &self.cfg.frequencies;
        let enc_density = tape.constant(f.density_position.encode_rows(x))?;
        let enc_color = tape.constant(f.color_position.encode_rows(x))?;
        let enc_dir = tape.constant(f.color_direction.encode_rows(d))?;
        let dfeats = self.density.hidden(tape, nodes, enc_density, enc_density, None)?;
        let raw_sigma = self.density.head(tape, nodes, *dfeats.last().expect("depth >= 2"))?;
        let k = self.cfg.interaction_layer;
        let cfeats = self.color.hidden(tape, nodes, enc_color, enc_dir, Some((k, dfeats[k - 1])))?;
        let rgb = self.color.head(tape, nodes, *cfeats.last().expect("depth >= 2"))?;
        Ok((raw_sigma, rgb))
    }
}

/// `σ = relu(raw)`, `c = sigmoid(logits)`.
pub fn activation_heads(tape: &mut Tape, raw_sigma: NodeId, rgb_logits: NodeId) -> Result<(NodeId, NodeId), AutodiffError> {
    Ok((tape.relu(raw_sigma)?, tape.sigmoid(rgb_logits)?))
}

/// Configuration together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Unit-norm tolerance for view directions.
pub const DIRECTION_TOLERANCE: f64 = 1e-6;

impl Model {
    /// Fresh parameters drawn from the init stream of `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, Error> {
        config.validate()?;
        let mut rng = stream(seed, Stream::Init);
        let mut params = ModelParams::new();
        match config {
            ModelConfig::Vanilla(c) => NerfNet::new(MlpVariant::Vanilla, c).init(&mut rng, &mut params),
            ModelConfig::Mi(c) => NerfNet::new(MlpVariant::MultiInput, c).init(&mut rng, &mut params),
            ModelConfig::Dual(c) => DualNet::new(c).init(&mut rng, &mut params),
        }
        Ok(Self { config, params })
    }

    /// Replaces the parameters after checking names and shapes.
    pub fn with_params(config: ModelConfig, params: ModelParams) -> Result<Self, Error> {
        let reference = Model::init(config, 0)?;
        if reference.params.names() != params.names() {
            return Err(Error::Config("parameter names do not match the configuration".into()));
        }
        for ((name, a), b) in reference.params.iter().zip(params.values()) {
            if a.shape() != b.shape() {
                return Err(Error::Config(format!(
                    "parameter {name} has shape {:?}, configuration expects {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    /// Raw network outputs for positions `x` (N×3) and unit directions `d` (N×3).
    pub fn forward(
        &self,
        tape: &mut Tape,
        nodes: &[NodeId],
        x: &Matrix,
        d: &Matrix,
    ) -> Result<(NodeId, NodeId), Error> {
        check_inputs(x, d)?;
        Ok(match self.config {
            ModelConfig::Vanilla(c) | ModelConfig::Mi(c) => {
                let variant = *self.config.nerf_trunk_variant();
                let enc_x = tape.constant(c.position.encode_rows(x))?;
                let enc_d = tape.constant(c.direction.encode_rows(d))?;
                NerfNet::new(variant, c).forward(tape, nodes, enc_x, enc_d)?
            }
            ModelConfig::Dual(c) => DualNet::new(c).forward(tape, nodes, x, d)?,
        })
    }

    /// Densities `σ ≥ 0` and colours in `[0, 1]` without recording gradients.
    pub fn query(&self, x: &Matrix, d: &Matrix) -> Result<(Vec<f64>, Matrix), Error> {
        let mut tape = Tape::new();
        let nodes = self.params.register(&mut tape, false)?;
        let (raw_sigma, logits) = self.forward(&mut tape, &nodes, x, d)?;
        let (sigma, rgb) = activation_heads(&mut tape, raw_sigma, logits)?;
        Ok((tape.value(sigma).as_slice().to_vec(), tape.value(rgb).clone()))
    }
}

fn check_inputs(x: &Matrix, d: &Matrix) -> Result<(), Error> {
    if x.cols() != 3 || d.cols() != 3 || x.rows() != d.rows() {
        return Err(Error::Invalid(format!(
            "positions {:?} and directions {:?} must both be N x 3",
            x.shape(),
            d.shape()
        )));
    }
    for r in 0..d.rows() {
        let n = d.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > DIRECTION_TOLERANCE {
            return Err(Error::Invalid(format!("direction {r} has norm {n}, expected 1")));
        }
    }
    Ok(())
}
