//! Architecture descriptions: CNN layer sequences, ViT configurations, and
//! the evaluation settings (batch, numeric format, resolution) they are
//! costed under.
//!
//! CNNs are a linear sequence of layers. Skip connections are expressed by
//! [`CnnLayer::ResidualAdd`], which adds the output of an earlier layer to the
//! running tensor, optionally through a strided 1x1 projection.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numeric storage format. Only the element width matters to the cost model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "DTypeRepr", into = "String")]
pub struct DType {
    name: String,
    bytes_per_element: u8,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DTypeRepr {
    Name(String),
    Full { name: String, bytes_per_element: u8 },
}

impl TryFrom<DTypeRepr> for DType {
    type Error = String;

    fn try_from(repr: DTypeRepr) -> Result<Self, String> {
        match repr {
            DTypeRepr::Name(name) => name.parse(),
            DTypeRepr::Full {
                name,
                bytes_per_element,
            } => DType::new(name, bytes_per_element),
        }
    }
}

impl From<DType> for String {
    fn from(d: DType) -> String {
        d.to_string()
    }
}

impl DType {
    pub fn new(name: impl Into<String>, bytes_per_element: u8) -> Result<Self, String> {
        let name = name.into();
        if !matches!(bytes_per_element, 1 | 2 | 4 | 8) {
            return Err(format!(
                "bytes_per_element must be 1, 2, 4 or 8 (got {bytes_per_element})"
            ));
        }
        if name.is_empty() || name.contains([':', ';', '=', ',']) {
            return Err(format!("invalid dtype name `{name}`"));
        }
        Ok(DType {
            name,
            bytes_per_element,
        })
    }

    pub fn fp32() -> Self {
        DType::new("fp32", 4).unwrap()
    }

    pub fn fp16() -> Self {
        DType::new("fp16", 2).unwrap()
    }

    pub fn int8() -> Self {
        DType::new("int8", 1).unwrap()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bytes_per_element(&self) -> u8 {
        self.bytes_per_element
    }
}

impl Default for DType {
    fn default() -> Self {
        DType::fp32()
    }
}

/// Known names parse directly; anything else must be spelled `name:bytes`.
impl std::str::FromStr for DType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bytes = match s {
            "fp64" | "f64" | "float64" => 8,
            "fp32" | "f32" | "float32" => 4,
            "fp16" | "f16" | "float16" | "bf16" => 2,
            "int8" | "i8" | "uint8" | "u8" => 1,
            other => {
                let (name, bytes) = other
                    .split_once(':')
                    .ok_or_else(|| format!("unknown dtype `{other}`"))?;
                let bytes = bytes
                    .parse::<u8>()
                    .map_err(|_| format!("invalid byte width in dtype `{other}`"))?;
                return DType::new(name, bytes);
            }
        };
        DType::new(s, bytes)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name.parse::<DType>() {
            Ok(known) if known == *self => f.write_str(&self.name),
            _ => write!(f, "{}:{}", self.name, self.bytes_per_element),
        }
    }
}

/// Per-sample tensor shape; the batch dimension is carried by [`EvalConfig`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TensorShape {
    dims: Vec<u64>,
}

impl TensorShape {
    pub fn new(dims: Vec<u64>) -> Self {
        debug_assert!(dims.iter().all(|&d| d >= 1));
        TensorShape { dims }
    }

    pub fn chw(c: u64, h: u64, w: u64) -> Self {
        TensorShape::new(vec![c, h, w])
    }

    pub fn dims(&self) -> &[u64] {
        &self.dims
    }

    pub fn element_count(&self) -> u64 {
        self.dims.iter().product()
    }

    /// Leading dimension: channels for feature maps, features for flat vectors.
    pub fn channels(&self) -> u64 {
        self.dims[0]
    }

    /// `(h, w)` for a feature map, `None` for a flat vector.
    pub fn spatial(&self) -> Option<(u64, u64)> {
        match self.dims[..] {
            [_, h, w] => Some((h, w)),
            _ => None,
        }
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
}

/// Strided 1x1 convolution plus batch norm applied to the skip branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Projection {
    pub out_ch: u32,
    #[serde(default = "one")]
    pub stride: u32,
}

fn one() -> u32 {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CnnLayer {
    Conv2d {
        in_ch: u32,
        out_ch: u32,
        kernel: u32,
        #[serde(default = "one")]
        stride: u32,
        #[serde(default)]
        padding: u32,
        #[serde(default = "one")]
        groups: u32,
        #[serde(default = "one")]
        dilation: u32,
        #[serde(default)]
        has_bias: bool,
    },
    Pool {
        kind: PoolKind,
        kernel: u32,
        #[serde(default = "one")]
        stride: u32,
        #[serde(default)]
        padding: u32,
    },
    GlobalPool,
    BatchNorm {
        ch: u32,
    },
    Activation,
    ResidualAdd {
        source_layer_index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        projection: Option<Projection>,
    },
    Resize {
        target_hw: u32,
    },
    Linear {
        in_features: u32,
        out_features: u32,
        #[serde(default = "yes")]
        has_bias: bool,
    },
}

impl CnnLayer {
    /// Plain convolution without bias: stride 1, no padding, one group.
    pub fn conv(in_ch: u32, out_ch: u32, kernel: u32) -> Self {
        CnnLayer::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride: 1,
            padding: 0,
            groups: 1,
            dilation: 1,
            has_bias: false,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            CnnLayer::Conv2d { .. } => "conv2d",
            CnnLayer::Pool {
                kind: PoolKind::Max,
                ..
            } => "max_pool",
            CnnLayer::Pool {
                kind: PoolKind::Avg,
                ..
            } => "avg_pool",
            CnnLayer::GlobalPool => "global_pool",
            CnnLayer::BatchNorm { .. } => "batch_norm",
            CnnLayer::Activation => "activation",
            CnnLayer::ResidualAdd { .. } => "residual_add",
            CnnLayer::Resize { .. } => "resize",
            CnnLayer::Linear { .. } => "linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnSpec {
    pub name: String,
    pub input_channels: u32,
    /// Input side length used when the evaluation config leaves it unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_resolution: Option<u32>,
    pub layers: Vec<CnnLayer>,
}

/// Vision transformer without a class token: the sequence is exactly
/// `tokens_per_side²` patch tokens and the classifier reads their mean.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViTSpec {
    pub name: String,
    pub patch_size: u32,
    pub hidden_dim: u32,
    pub num_heads: u32,
    pub mlp_dim: u32,
    pub depth: u32,
    pub tokens_per_side: u32,
    #[serde(default = "three")]
    pub input_channels: u32,
    #[serde(default = "thousand")]
    pub num_classes: u32,
}

fn three() -> u32 {
    3
}

fn thousand() -> u32 {
    1000
}

impl ViTSpec {
    /// Builds a spec from an image side and patch size; the side must be a
    /// whole number of patches.
    #[allow(clippy::too_many_arguments)]
    pub fn from_image(
        name: impl Into<String>,
        image_side: u32,
        patch_size: u32,
        hidden_dim: u32,
        num_heads: u32,
        mlp_dim: u32,
        depth: u32,
    ) -> Result<Self> {
        if patch_size == 0 || !image_side.is_multiple_of(patch_size) {
            return Err(Error::IndivisibleImage {
                image: image_side,
                patch: patch_size,
            });
        }
        Ok(ViTSpec {
            name: name.into(),
            patch_size,
            hidden_dim,
            num_heads,
            mlp_dim,
            depth,
            tokens_per_side: image_side / patch_size,
            input_channels: 3,
            num_classes: 1000,
        })
    }

    pub fn image_side(&self) -> u32 {
        self.tokens_per_side * self.patch_size
    }

    pub fn token_count(&self) -> u64 {
        u64::from(self.tokens_per_side).pow(2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchSpec {
    Cnn(CnnSpec),
    Vit(ViTSpec),
}

impl ArchSpec {
    pub fn name(&self) -> &str {
        match self {
            ArchSpec::Cnn(s) => &s.name,
            ArchSpec::Vit(s) => &s.name,
        }
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            ArchSpec::Cnn(_) => "cnn",
            ArchSpec::Vit(_) => "vit",
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        match self {
            ArchSpec::Cnn(s) => validate_cnn(s),
            ArchSpec::Vit(s) => validate_vit(s),
        }
    }

    /// Resolution used when the evaluation config does not override it:
    /// tokens per side for ViTs, pixels per side for CNNs.
    pub fn default_resolution(&self) -> Option<u32> {
        match self {
            ArchSpec::Cnn(s) => s.default_resolution,
            ArchSpec::Vit(s) => Some(s.tokens_per_side),
        }
    }
}

/// How ViT FLOPs are counted. CNNs are always counted by graph walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlopConvention {
    /// Transformer blocks only, using the closed-form block formulas.
    #[default]
    BlocksOnly,
    /// Every operator of the graph, including embedding and classifier.
    FullCount,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub batch_size: u32,
    pub dtype: DType,
    /// Pixels per side (CNN) or tokens per side (ViT); `None` uses the
    /// spec's own default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_resolution: Option<u32>,
    #[serde(default)]
    pub flop_convention: FlopConvention,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            batch_size: 1,
            dtype: DType::fp32(),
            input_resolution: None,
            flop_convention: FlopConvention::BlocksOnly,
        }
    }
}

impl EvalConfig {
    pub fn with_resolution(mut self, resolution: u32) -> Self {
        self.input_resolution = Some(resolution);
        self
    }

    pub fn with_batch(mut self, batch_size: u32) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_dtype(mut self, dtype: DType) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn with_convention(mut self, convention: FlopConvention) -> Self {
        self.flop_convention = convention;
        self
    }

    pub fn resolution_for(&self, spec: &ArchSpec) -> Result<u32> {
        self.input_resolution
            .or_else(|| spec.default_resolution())
            .ok_or(Error::MissingResolution)
    }
}

/// A single invariant violation; `layer_index` is `None` for spec-level issues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub layer_index: Option<usize>,
    pub message: String,
}

impl Violation {
    fn at(layer_index: usize, message: impl Into<String>) -> Self {
        Violation {
            layer_index: Some(layer_index),
            message: message.into(),
        }
    }

    fn spec(message: impl Into<String>) -> Self {
        Violation {
            layer_index: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer_index {
            Some(i) => write!(f, "layer {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Statically tracked layout of a layer output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    /// Feature map; `scale` is the cumulative downsampling since the last
    /// resize (`epoch`), `collapsed` once a global pool reduced it to 1x1.
    Map {
        epoch: usize,
        scale: u64,
        collapsed: bool,
    },
    Flat,
}

#[derive(Debug, Clone, Copy)]
struct Static {
    channels: u32,
    layout: Layout,
}

/// Checks channel chaining, group divisibility, parameter ranges and
/// residual consistency. Spatial feasibility depends on the input resolution
/// and is checked by shape propagation instead.
pub fn validate_cnn(spec: &CnnSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.input_channels == 0 {
        out.push(Violation::spec("input_channels must be ≥ 1"));
    }
    if spec.default_resolution == Some(0) {
        out.push(Violation::spec("default_resolution must be ≥ 1"));
    }
    if spec.layers.is_empty() {
        out.push(Violation::spec("spec has no layers"));
    }

    let mut cur = Static {
        channels: spec.input_channels,
        layout: Layout::Map {
            epoch: 0,
            scale: 1,
            collapsed: false,
        },
    };
    let mut history: Vec<Static> = Vec::with_capacity(spec.layers.len());
    let mut epochs = 0usize;

    for (i, layer) in spec.layers.iter().enumerate() {
        let needs_map = |out: &mut Vec<Violation>| {
            if cur.layout == Layout::Flat {
                out.push(Violation::at(
                    i,
                    format!("{} requires a spatial input", layer.tag()),
                ));
            }
        };
        match *layer {
            CnnLayer::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                groups,
                dilation,
                ..
            } => {
                needs_map(&mut out);
                if in_ch == 0 || out_ch == 0 {
                    out.push(Violation::at(i, "conv channels must be ≥ 1"));
                }
                if in_ch != cur.channels {
                    out.push(Violation::at(
                        i,
                        format!(
                            "conv expects {in_ch} input channels but receives {}",
                            cur.channels
                        ),
                    ));
                }
                if kernel == 0 || stride == 0 || dilation == 0 {
                    out.push(Violation::at(i, "kernel, stride and dilation must be ≥ 1"));
                }
                if groups == 0 {
                    out.push(Violation::at(i, "groups must be ≥ 1"));
                } else {
                    if in_ch % groups != 0 {
                        out.push(Violation::at(
                            i,
                            format!("{in_ch} not divisible by {groups}"),
                        ));
                    }
                    if out_ch % groups != 0 {
                        out.push(Violation::at(
                            i,
                            format!("{out_ch} not divisible by {groups}"),
                        ));
                    }
                }
                cur.channels = out_ch;
                cur.layout = downsample(cur.layout, stride.max(1));
            }
            CnnLayer::Pool { kernel, stride, .. } => {
                needs_map(&mut out);
                if kernel == 0 || stride == 0 {
                    out.push(Violation::at(i, "pool kernel and stride must be ≥ 1"));
                }
                cur.layout = downsample(cur.layout, stride.max(1));
            }
            CnnLayer::GlobalPool => {
                needs_map(&mut out);
                if let Layout::Map { epoch, scale, .. } = cur.layout {
                    cur.layout = Layout::Map {
                        epoch,
                        scale,
                        collapsed: true,
                    };
                }
            }
            CnnLayer::BatchNorm { ch } => {
                if ch != cur.channels {
                    out.push(Violation::at(
                        i,
                        format!(
                            "batch norm over {ch} channels but receives {}",
                            cur.channels
                        ),
                    ));
                }
            }
            CnnLayer::Activation => {}
            CnnLayer::ResidualAdd {
                source_layer_index,
                ref projection,
            } => {
                if source_layer_index >= i {
                    out.push(Violation::at(
                        i,
                        format!("residual source {source_layer_index} is not an earlier layer"),
                    ));
                } else {
                    let src = history[source_layer_index];
                    let (src_ch, src_layout) = match projection {
                        Some(p) => {
                            if p.out_ch == 0 || p.stride == 0 {
                                out.push(Violation::at(
                                    i,
                                    "projection channels and stride must be ≥ 1",
                                ));
                            }
                            if src.layout == Layout::Flat {
                                out.push(Violation::at(i, "projection requires a spatial source"));
                            }
                            (p.out_ch, downsample(src.layout, p.stride.max(1)))
                        }
                        None => (src.channels, src.layout),
                    };
                    if src_ch != cur.channels {
                        out.push(Violation::at(
                            i,
                            format!(
                                "residual from layer {source_layer_index} carries {src_ch} channels \
                                 but layer {} produces {}",
                                i - 1,
                                cur.channels
                            ),
                        ));
                    }
                    if !layouts_match(src_layout, cur.layout) {
                        out.push(Violation::at(
                            i,
                            format!(
                                "residual from layer {source_layer_index} has a different spatial \
                                 scale than layer {}",
                                i - 1
                            ),
                        ));
                    }
                }
            }
            CnnLayer::Resize { target_hw } => {
                needs_map(&mut out);
                if target_hw == 0 {
                    out.push(Violation::at(i, "resize target must be ≥ 1"));
                }
                epochs += 1;
                cur.layout = Layout::Map {
                    epoch: epochs,
                    scale: 1,
                    collapsed: false,
                };
            }
            CnnLayer::Linear {
                in_features,
                out_features,
                ..
            } => {
                match cur.layout {
                    Layout::Map {
                        collapsed: false, ..
                    } => out.push(Violation::at(
                        i,
                        "linear layer requires a globally pooled or flat input",
                    )),
                    _ => {
                        if in_features != cur.channels {
                            out.push(Violation::at(
                                i,
                                format!(
                                    "linear expects {in_features} features but receives {}",
                                    cur.channels
                                ),
                            ));
                        }
                    }
                }
                if in_features == 0 || out_features == 0 {
                    out.push(Violation::at(i, "linear features must be ≥ 1"));
                }
                cur.channels = out_features;
                cur.layout = Layout::Flat;
            }
        }
        history.push(cur);
    }
    out
}

fn downsample(layout: Layout, stride: u32) -> Layout {
    match layout {
        Layout::Map {
            epoch,
            scale,
            collapsed,
        } => Layout::Map {
            epoch,
            scale: scale.saturating_mul(u64::from(stride)),
            collapsed,
        },
        Layout::Flat => Layout::Flat,
    }
}

fn layouts_match(a: Layout, b: Layout) -> bool {
    match (a, b) {
        (Layout::Flat, Layout::Flat) => true,
        (
            Layout::Map {
                epoch: e1,
                scale: s1,
                collapsed: c1,
            },
            Layout::Map {
                epoch: e2,
                scale: s2,
                collapsed: c2,
            },
        ) => (c1 && c2) || (!c1 && !c2 && e1 == e2 && s1 == s2),
        _ => false,
    }
}

pub fn validate_vit(spec: &ViTSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let positive = [
        ("patch_size P", spec.patch_size),
        ("hidden_dim D", spec.hidden_dim),
        ("num_heads k", spec.num_heads),
        ("mlp_dim D_MLP", spec.mlp_dim),
        ("depth n", spec.depth),
        ("input_channels", spec.input_channels),
        ("num_classes", spec.num_classes),
    ];
    if spec.tokens_per_side == 0 {
        out.push(Violation::spec("N must be ≥ 1"));
    }
    for (field, v) in positive {
        if v == 0 {
            out.push(Violation::spec(format!("{field} must be ≥ 1")));
        }
    }
    if spec.num_heads != 0 && !spec.hidden_dim.is_multiple_of(spec.num_heads) {
        out.push(Violation::spec(format!(
            "{} not divisible by {}",
            spec.hidden_dim, spec.num_heads
        )));
    }
    out
}

/// Returns `Err(InvalidSpec)` carrying every violation, if any.
pub fn ensure_valid(spec: &ArchSpec) -> Result<()> {
    let violations = spec.validate();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(violations))
    }
}
