//! Spec-to-spec rewrites: model scaling (width, group width, depth, hidden
//! size, MLP size, patch size) and evaluation-time scaling (resolution,
//! batch, numeric format).
//!
//! Every transform has a canonical compact encoding (`width=0.5`,
//! `dtype=int8`, `N=12`, ...). A chain is encoded by joining transforms with
//! `;`, and a [`ScaledConfig`] id is `base|chain`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arch::{ensure_valid, ArchSpec, CnnLayer, CnnSpec, DType, EvalConfig, ViTSpec};
use crate::cost::propagate_shapes;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TransformKind {
    Width,
    GroupWidth,
    Depth,
    Hidden,
    Mlp,
    Resolution,
    Patch,
    Batch,
    Dtype,
    Hybrid,
}

impl TransformKind {
    /// Key used in the canonical encoding.
    pub fn key(self) -> &'static str {
        match self {
            TransformKind::Width => "width",
            TransformKind::GroupWidth => "gw",
            TransformKind::Depth => "depth",
            TransformKind::Hidden => "hidden",
            TransformKind::Mlp => "mlp",
            TransformKind::Resolution => "N",
            TransformKind::Patch => "patch",
            TransformKind::Batch => "batch",
            TransformKind::Dtype => "dtype",
            TransformKind::Hybrid => "hybrid",
        }
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "width" => TransformKind::Width,
            "gw" | "group_width" => TransformKind::GroupWidth,
            "depth" => TransformKind::Depth,
            "hidden" => TransformKind::Hidden,
            "mlp" => TransformKind::Mlp,
            "n" | "res" | "resolution" => TransformKind::Resolution,
            "patch" => TransformKind::Patch,
            "batch" => TransformKind::Batch,
            "dtype" => TransformKind::Dtype,
            "hybrid" => TransformKind::Hybrid,
            _ => return Err(Error::InvalidTransform(s.to_string())),
        })
    }
}

impl TryFrom<String> for TransformKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TransformKind> for String {
    fn from(k: TransformKind) -> String {
        k.key().to_string()
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// How scaled channel counts are rounded back to integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rounding {
    Nearest,
    Floor,
    MultipleOf(u32),
}

impl Default for Rounding {
    fn default() -> Self {
        Rounding::MultipleOf(8)
    }
}

impl Rounding {
    pub fn apply(self, channels: u32, ratio: f64) -> u32 {
        let scaled = f64::from(channels) * ratio;
        let v = match self {
            Rounding::Nearest => scaled.round(),
            Rounding::Floor => scaled.floor(),
            Rounding::MultipleOf(m) => {
                let m = f64::from(m.max(1));
                (scaled / m).round().max(1.0) * m
            }
        };
        v.clamp(1.0, f64::from(u32::MAX)) as u32
    }
}

/// Resolves a hidden size that the current head count does not divide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HeadPolicy {
    /// Keep `k`, round `D` to the nearest multiple of `k`.
    #[default]
    KeepHeads,
    /// Scale `k` with `D`; fails if the scaled `k` does not divide `D`.
    ScaleHeads,
}

/// What a patch-size change holds fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PatchKeep {
    /// Keep the token grid; the image side becomes `N · P`.
    #[default]
    Tokens,
    /// Keep the image side; `N` becomes `R / P`.
    Image,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalingTransform {
    Width {
        ratio: f64,
        rounding: Rounding,
    },
    GroupWidth {
        group_width: u32,
    },
    Depth {
        depth: u32,
    },
    Hidden {
        hidden_dim: u32,
        heads: HeadPolicy,
    },
    Mlp {
        mlp_dim: u32,
    },
    Resolution {
        resolution: u32,
    },
    Patch {
        patch_size: u32,
        keep: PatchKeep,
    },
    Batch {
        batch_size: u32,
    },
    Dtype {
        dtype: DType,
    },
    /// Applied in order.
    Hybrid(Vec<ScalingTransform>),
}

impl ScalingTransform {
    pub fn kind(&self) -> TransformKind {
        match self {
            ScalingTransform::Width { .. } => TransformKind::Width,
            ScalingTransform::GroupWidth { .. } => TransformKind::GroupWidth,
            ScalingTransform::Depth { .. } => TransformKind::Depth,
            ScalingTransform::Hidden { .. } => TransformKind::Hidden,
            ScalingTransform::Mlp { .. } => TransformKind::Mlp,
            ScalingTransform::Resolution { .. } => TransformKind::Resolution,
            ScalingTransform::Patch { .. } => TransformKind::Patch,
            ScalingTransform::Batch { .. } => TransformKind::Batch,
            ScalingTransform::Dtype { .. } => TransformKind::Dtype,
            ScalingTransform::Hybrid(_) => TransformKind::Hybrid,
        }
    }

    pub fn width(ratio: f64) -> Self {
        ScalingTransform::Width {
            ratio,
            rounding: Rounding::default(),
        }
    }

    pub fn hidden(hidden_dim: u32) -> Self {
        ScalingTransform::Hidden {
            hidden_dim,
            heads: HeadPolicy::default(),
        }
    }

    pub fn patch(patch_size: u32) -> Self {
        ScalingTransform::Patch {
            patch_size,
            keep: PatchKeep::default(),
        }
    }

    /// Applies the transform. Structural transforms rewrite the spec;
    /// resolution, batch and dtype only touch the evaluation config.
    pub fn apply(&self, spec: &ArchSpec, eval: &EvalConfig) -> Result<(ArchSpec, EvalConfig)> {
        let unsupported = |arch| Error::UnsupportedTransform {
            transform: self.to_string(),
            arch,
        };
        let out = match (self, spec) {
            (ScalingTransform::Width { ratio, rounding }, ArchSpec::Cnn(cnn)) => (
                ArchSpec::Cnn(width_scale(cnn, *ratio, *rounding)?),
                eval.clone(),
            ),
            (ScalingTransform::GroupWidth { group_width }, ArchSpec::Cnn(cnn)) => (
                ArchSpec::Cnn(group_width_scale(cnn, *group_width)?),
                eval.clone(),
            ),
            (ScalingTransform::Depth { depth }, ArchSpec::Vit(vit)) => {
                (ArchSpec::Vit(depth_scale(vit, *depth)?), eval.clone())
            }
            (ScalingTransform::Hidden { hidden_dim, heads }, ArchSpec::Vit(vit)) => (
                ArchSpec::Vit(hidden_scale(vit, *hidden_dim, *heads)?),
                eval.clone(),
            ),
            (ScalingTransform::Mlp { mlp_dim }, ArchSpec::Vit(vit)) => {
                (ArchSpec::Vit(mlp_scale(vit, *mlp_dim)?), eval.clone())
            }
            (ScalingTransform::Patch { patch_size, keep }, ArchSpec::Vit(vit)) => {
                // Work from the effective token grid so an earlier resolution
                // change is respected.
                let mut base = vit.clone();
                if let Some(n) = eval.input_resolution {
                    base.tokens_per_side = n;
                }
                let scaled = patch_scale(&base, *patch_size, *keep)?;
                let mut eval = eval.clone();
                if eval.input_resolution.is_some() {
                    eval.input_resolution = Some(scaled.tokens_per_side);
                }
                let mut spec = vit.clone();
                spec.patch_size = scaled.patch_size;
                if eval.input_resolution.is_none() {
                    spec.tokens_per_side = scaled.tokens_per_side;
                }
                (ArchSpec::Vit(spec), eval)
            }
            (ScalingTransform::Resolution { resolution }, _) => {
                (spec.clone(), resolution_scale(spec, eval, *resolution)?)
            }
            (ScalingTransform::Batch { batch_size }, _) => {
                if *batch_size == 0 {
                    return Err(Error::InvalidTransform(self.to_string()));
                }
                (spec.clone(), eval.clone().with_batch(*batch_size))
            }
            (ScalingTransform::Dtype { dtype }, _) => {
                (spec.clone(), dtype_scale(eval, dtype.clone()))
            }
            (ScalingTransform::Hybrid(steps), _) => {
                let mut cur = (spec.clone(), eval.clone());
                for step in steps {
                    cur = step.apply(&cur.0, &cur.1)?;
                }
                cur
            }
            (_, ArchSpec::Cnn(_)) => return Err(unsupported("cnn")),
            (_, ArchSpec::Vit(_)) => return Err(unsupported("vit")),
        };
        Ok(out)
    }
}

impl fmt::Display for ScalingTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let key = self.kind().key();
        match self {
            ScalingTransform::Width { ratio, rounding } => {
                write!(f, "{key}={ratio}")?;
                match rounding {
                    Rounding::MultipleOf(8) => Ok(()),
                    Rounding::MultipleOf(m) => write!(f, ":mult{m}"),
                    Rounding::Nearest => f.write_str(":nearest"),
                    Rounding::Floor => f.write_str(":floor"),
                }
            }
            ScalingTransform::GroupWidth { group_width: v }
            | ScalingTransform::Depth { depth: v }
            | ScalingTransform::Mlp { mlp_dim: v }
            | ScalingTransform::Resolution { resolution: v }
            | ScalingTransform::Batch { batch_size: v } => write!(f, "{key}={v}"),
            ScalingTransform::Hidden { hidden_dim, heads } => {
                write!(f, "{key}={hidden_dim}")?;
                match heads {
                    HeadPolicy::KeepHeads => Ok(()),
                    HeadPolicy::ScaleHeads => f.write_str(":scalek"),
                }
            }
            ScalingTransform::Patch { patch_size, keep } => {
                write!(f, "{key}={patch_size}")?;
                match keep {
                    PatchKeep::Tokens => Ok(()),
                    PatchKeep::Image => f.write_str(":image"),
                }
            }
            ScalingTransform::Dtype { dtype } => write!(f, "{key}={dtype}"),
            ScalingTransform::Hybrid(steps) => {
                write!(f, "{key}(")?;
                for (i, s) in steps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{s}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl FromStr for ScalingTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidTransform(s.to_string());
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("hybrid(").and_then(|r| r.strip_suffix(')')) {
            let steps = split_top_level(inner, ',')
                .into_iter()
                .filter(|p| !p.trim().is_empty())
                .map(str::parse)
                .collect::<Result<Vec<_>>>()?;
            return Ok(ScalingTransform::Hybrid(steps));
        }
        let (key, rest) = s.split_once('=').ok_or_else(bad)?;
        let kind: TransformKind = key.trim().parse()?;
        let (value, option) = match kind {
            // dtype values may themselves contain ':' (`name:bytes`).
            TransformKind::Dtype => (rest, None),
            _ => match rest.split_once(':') {
                Some((v, o)) => (v, Some(o)),
                None => (rest, None),
            },
        };
        let int = || value.trim().parse::<u32>().map_err(|_| bad());
        let t = match (kind, option) {
            (TransformKind::Width, opt) => {
                let ratio: f64 = value.trim().parse().map_err(|_| bad())?;
                if !(ratio.is_finite() && ratio > 0.0) {
                    return Err(bad());
                }
                let rounding = match opt {
                    None => Rounding::default(),
                    Some("nearest") => Rounding::Nearest,
                    Some("floor") => Rounding::Floor,
                    Some(o) => Rounding::MultipleOf(
                        o.strip_prefix("mult")
                            .and_then(|m| m.parse().ok())
                            .filter(|&m| m > 0)
                            .ok_or_else(bad)?,
                    ),
                };
                ScalingTransform::Width { ratio, rounding }
            }
            (TransformKind::GroupWidth, None) => ScalingTransform::GroupWidth {
                group_width: int()?,
            },
            (TransformKind::Depth, None) => ScalingTransform::Depth { depth: int()? },
            (TransformKind::Hidden, opt) => ScalingTransform::Hidden {
                hidden_dim: int()?,
                heads: match opt {
                    None | Some("keepk") => HeadPolicy::KeepHeads,
                    Some("scalek") => HeadPolicy::ScaleHeads,
                    Some(_) => return Err(bad()),
                },
            },
            (TransformKind::Mlp, None) => ScalingTransform::Mlp { mlp_dim: int()? },
            (TransformKind::Resolution, None) => {
                ScalingTransform::Resolution { resolution: int()? }
            }
            (TransformKind::Patch, opt) => ScalingTransform::Patch {
                patch_size: int()?,
                keep: match opt {
                    None | Some("tokens") => PatchKeep::Tokens,
                    Some("image") => PatchKeep::Image,
                    Some(_) => return Err(bad()),
                },
            },
            (TransformKind::Batch, None) => ScalingTransform::Batch { batch_size: int()? },
            (TransformKind::Dtype, None) => ScalingTransform::Dtype {
                dtype: value.trim().parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        Ok(t)
    }
}

/// Splits on `sep` outside parentheses.
fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            c if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

pub fn encode_chain(chain: &[ScalingTransform]) -> String {
    chain
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

pub fn parse_chain(s: &str) -> Result<Vec<ScalingTransform>> {
    split_top_level(s, ';')
        .into_iter()
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// Splits a config id into its base name and transform chain.
pub fn parse_config_id(id: &str) -> Result<(String, Vec<ScalingTransform>)> {
    match id.split_once('|') {
        Some((base, chain)) => Ok((base.to_string(), parse_chain(chain)?)),
        None => Ok((id.to_string(), Vec::new())),
    }
}

/// A base architecture with a transform chain applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledConfig {
    pub base_name: String,
    pub chain: Vec<ScalingTransform>,
    pub spec: ArchSpec,
    pub eval: EvalConfig,
    pub config_id: String,
}

impl ScaledConfig {
    pub fn new(base: &ArchSpec, eval: &EvalConfig, chain: Vec<ScalingTransform>) -> Result<Self> {
        let mut spec = base.clone();
        let mut cur_eval = eval.clone();
        for t in &chain {
            (spec, cur_eval) = t.apply(&spec, &cur_eval)?;
        }
        ensure_valid(&spec)?;
        let base_name = base.name().to_string();
        let config_id = config_id(&base_name, &chain);
        Ok(ScaledConfig {
            base_name,
            chain,
            spec,
            eval: cur_eval,
            config_id,
        })
    }
}

pub fn config_id(base_name: &str, chain: &[ScalingTransform]) -> String {
    if chain.is_empty() {
        base_name.to_string()
    } else {
        format!("{base_name}|{}", encode_chain(chain))
    }
}

/// Multiplies every convolution's channels by `ratio`, except the image
/// input channels and the output of the final classifier or head.
pub fn width_scale(spec: &CnnSpec, ratio: f64, rounding: Rounding) -> Result<CnnSpec> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::InvalidTransform(format!("width={ratio}")));
    }
    if ratio == 1.0 {
        return Ok(spec.clone());
    }
    let head = spec
        .layers
        .iter()
        .rposition(|l| matches!(l, CnnLayer::Conv2d { .. } | CnnLayer::Linear { .. }));
    let scale = |c: u32| rounding.apply(c, ratio);

    let mut out = spec.clone();
    let mut cur = spec.input_channels;
    for (i, layer) in out.layers.iter_mut().enumerate() {
        let is_head = Some(i) == head;
        match layer {
            CnnLayer::Conv2d {
                in_ch,
                out_ch,
                groups,
                ..
            } => {
                let depthwise = *groups > 1 && *groups == *in_ch && *groups == *out_ch;
                *in_ch = cur;
                if !is_head {
                    *out_ch = scale(*out_ch);
                }
                if depthwise {
                    if *in_ch != *out_ch {
                        return Err(Error::RoundingBreaksGroups { layer_index: i });
                    }
                    *groups = *in_ch;
                } else if *in_ch % *groups != 0 || *out_ch % *groups != 0 {
                    return Err(Error::RoundingBreaksGroups { layer_index: i });
                }
                cur = *out_ch;
            }
            CnnLayer::BatchNorm { ch } => *ch = cur,
            CnnLayer::ResidualAdd {
                projection: Some(p),
                ..
            } => p.out_ch = scale(p.out_ch),
            CnnLayer::Linear {
                in_features,
                out_features,
                ..
            } => {
                *in_features = cur;
                if !is_head {
                    *out_features = scale(*out_features);
                }
                cur = *out_features;
            }
            _ => {}
        }
    }
    ensure_valid(&ArchSpec::Cnn(out.clone()))?;
    Ok(out)
}

/// Sets every grouped convolution to `groups · group_width` channels,
/// keeping its group count, and re-chains the surrounding pointwise convs.
pub fn group_width_scale(spec: &CnnSpec, group_width: u32) -> Result<CnnSpec> {
    if group_width == 0 {
        return Err(Error::InvalidGroupWidth(group_width));
    }
    let mut out = spec.clone();
    let grouped: Vec<(usize, u32)> = spec
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, l)| match *l {
            CnnLayer::Conv2d { groups, .. } if groups > 1 => Some((i, groups)),
            _ => None,
        })
        .collect();

    for &(i, groups) in &grouped {
        let width = groups * group_width;
        if let CnnLayer::Conv2d { in_ch, out_ch, .. } = &mut out.layers[i] {
            *in_ch = width;
            *out_ch = width;
        }
        // The producer of the grouped conv's input must emit `width` channels.
        let mut j = i;
        loop {
            if j == 0 {
                if spec.input_channels != width {
                    return Err(Error::InvalidTransform(format!(
                        "gw={group_width}: grouped conv at layer {i} reads the image input"
                    )));
                }
                break;
            }
            j -= 1;
            match &mut out.layers[j] {
                CnnLayer::BatchNorm { ch } => *ch = width,
                CnnLayer::Activation => {}
                CnnLayer::Conv2d { out_ch, groups, .. } if *groups == 1 => {
                    *out_ch = width;
                    break;
                }
                CnnLayer::Conv2d { out_ch, .. } if *out_ch == width => break,
                _ => {
                    return Err(Error::InvalidTransform(format!(
                        "gw={group_width}: grouped conv at layer {i} has no pointwise producer"
                    )))
                }
            }
        }
    }

    // Forward pass: consumers take whatever their input now carries.
    let mut cur = spec.input_channels;
    for layer in out.layers.iter_mut() {
        match layer {
            CnnLayer::Conv2d { in_ch, out_ch, .. } => {
                *in_ch = cur;
                cur = *out_ch;
            }
            CnnLayer::BatchNorm { ch } => *ch = cur,
            CnnLayer::Linear {
                in_features,
                out_features,
                ..
            } => {
                *in_features = cur;
                cur = *out_features;
            }
            _ => {}
        }
    }
    ensure_valid(&ArchSpec::Cnn(out.clone()))?;
    Ok(out)
}

pub fn hidden_scale(spec: &ViTSpec, hidden_dim: u32, policy: HeadPolicy) -> Result<ViTSpec> {
    if hidden_dim == 0 {
        return Err(Error::InvalidTransform(format!("hidden={hidden_dim}")));
    }
    let mut out = spec.clone();
    let k = spec.num_heads.max(1);
    if hidden_dim.is_multiple_of(k) {
        out.hidden_dim = hidden_dim;
        return Ok(out);
    }
    match policy {
        HeadPolicy::KeepHeads => {
            let rounded = ((hidden_dim + k / 2) / k).max(1) * k;
            out.hidden_dim = rounded;
        }
        HeadPolicy::ScaleHeads => {
            let heads = (f64::from(k) * f64::from(hidden_dim) / f64::from(spec.hidden_dim.max(1)))
                .round()
                .max(1.0) as u32;
            if !hidden_dim.is_multiple_of(heads) {
                return Err(Error::HeadDivisibility {
                    hidden_dim,
                    num_heads: heads,
                });
            }
            out.hidden_dim = hidden_dim;
            out.num_heads = heads;
        }
    }
    Ok(out)
}

pub fn mlp_scale(spec: &ViTSpec, mlp_dim: u32) -> Result<ViTSpec> {
    if mlp_dim == 0 {
        return Err(Error::InvalidTransform(format!("mlp={mlp_dim}")));
    }
    Ok(ViTSpec {
        mlp_dim,
        ..spec.clone()
    })
}

pub fn depth_scale(spec: &ViTSpec, depth: u32) -> Result<ViTSpec> {
    if depth == 0 {
        return Err(Error::InvalidTransform(format!("depth={depth}")));
    }
    Ok(ViTSpec {
        depth,
        ..spec.clone()
    })
}

/// Resolution is an evaluation-time knob: the spec is untouched and the
/// returned config carries the new resolution (pixels for CNNs, tokens per
/// side for ViTs).
pub fn resolution_scale(spec: &ArchSpec, eval: &EvalConfig, resolution: u32) -> Result<EvalConfig> {
    let next = eval.clone().with_resolution(resolution);
    propagate_shapes(spec, &next)?;
    Ok(next)
}

pub fn patch_scale(spec: &ViTSpec, patch_size: u32, keep: PatchKeep) -> Result<ViTSpec> {
    if patch_size == 0 {
        return Err(Error::InvalidTransform(format!("patch={patch_size}")));
    }
    let mut out = spec.clone();
    match keep {
        PatchKeep::Tokens => out.patch_size = patch_size,
        PatchKeep::Image => {
            let image = spec.image_side();
            if !image.is_multiple_of(patch_size) {
                return Err(Error::IndivisibleImage {
                    image,
                    patch: patch_size,
                });
            }
            out.patch_size = patch_size;
            out.tokens_per_side = image / patch_size;
        }
    }
    Ok(out)
}

pub fn dtype_scale(eval: &EvalConfig, dtype: DType) -> EvalConfig {
    eval.clone().with_dtype(dtype)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::FlopConvention;
    use crate::cost::{cost_report, vit_block_flops_closed, vit_cost_closed, OpKind};
    use crate::presets::{default_seg_stages, grouped_seg_backbone, resnet50, vit_small};

    #[test]
    fn canonical_encoding_round_trips() {
        let chain = vec![
            ScalingTransform::width(0.5),
            ScalingTransform::Dtype {
                dtype: DType::int8(),
            },
            ScalingTransform::Resolution { resolution: 12 },
        ];
        let s = encode_chain(&chain);
        assert_eq!(s, "width=0.5;dtype=int8;N=12");
        assert_eq!(parse_chain(&s).unwrap(), chain);

        let exotic = vec![
            ScalingTransform::Width {
                ratio: 0.3,
                rounding: Rounding::MultipleOf(4),
            },
            ScalingTransform::Hidden {
                hidden_dim: 200,
                heads: HeadPolicy::ScaleHeads,
            },
            ScalingTransform::Patch {
                patch_size: 32,
                keep: PatchKeep::Image,
            },
            ScalingTransform::Hybrid(vec![
                ScalingTransform::hidden(384),
                ScalingTransform::Hybrid(vec![ScalingTransform::Depth { depth: 6 }]),
            ]),
            ScalingTransform::Dtype {
                dtype: "fp8:1".parse().unwrap(),
            },
        ];
        assert_eq!(parse_chain(&encode_chain(&exotic)).unwrap(), exotic);
        assert!(parse_chain("width=-1").is_err());
        assert!(parse_chain("depth=x").is_err());
        assert!(parse_chain("colour=3").is_err());
    }

    #[test]
    fn width_identity_and_halving() {
        let r50 = resnet50();
        assert_eq!(width_scale(&r50, 1.0, Rounding::default()).unwrap(), r50);

        let stack = CnnSpec {
            name: "s".into(),
            input_channels: 16,
            default_resolution: Some(8),
            layers: vec![
                CnnLayer::conv(16, 32, 3),
                CnnLayer::conv(32, 32, 3),
                CnnLayer::conv(32, 64, 1),
            ],
        };
        let half = width_scale(&stack, 0.5, Rounding::Nearest).unwrap();
        assert_eq!(half.layers[0], CnnLayer::conv(16, 16, 3));
        // The last conv is the head; its output keeps 64 channels.
        assert_eq!(half.layers[2], CnnLayer::conv(16, 64, 1));
    }

    #[test]
    fn width_rounding_breaking_groups_is_reported() {
        let spec = CnnSpec {
            name: "g".into(),
            input_channels: 8,
            default_resolution: Some(8),
            layers: vec![
                CnnLayer::conv(8, 24, 1),
                CnnLayer::Conv2d {
                    in_ch: 24,
                    out_ch: 24,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                    groups: 3,
                    dilation: 1,
                    has_bias: false,
                },
                CnnLayer::conv(24, 10, 1),
            ],
        };
        // 24 * 0.5 = 12 rounds to 16 under multiple_of(8); 16 % 3 != 0.
        assert!(matches!(
            width_scale(&spec, 0.5, Rounding::default()),
            Err(Error::RoundingBreaksGroups { layer_index: 1 })
        ));
        assert!(width_scale(&spec, 0.5, Rounding::MultipleOf(3)).is_ok());
    }

    #[test]
    fn group_width_identity_and_minimum() {
        let seg = grouped_seg_backbone(16, &default_seg_stages());
        assert_eq!(group_width_scale(&seg, 16).unwrap(), seg);
        let narrow = group_width_scale(&seg, 1).unwrap();
        assert_eq!(narrow, grouped_seg_backbone(1, &default_seg_stages()));
        assert!(matches!(
            group_width_scale(&seg, 0),
            Err(Error::InvalidGroupWidth(0))
        ));
    }

    #[test]
    fn group_width_eight_groups_to_one_channel_each() {
        let spec = CnnSpec {
            name: "g8".into(),
            input_channels: 3,
            default_resolution: Some(16),
            layers: vec![
                CnnLayer::conv(3, 64, 1),
                CnnLayer::BatchNorm { ch: 64 },
                CnnLayer::Conv2d {
                    in_ch: 64,
                    out_ch: 64,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                    groups: 8,
                    dilation: 1,
                    has_bias: false,
                },
                CnnLayer::conv(64, 32, 1),
            ],
        };
        let scaled = group_width_scale(&spec, 1).unwrap();
        assert!(matches!(
            scaled.layers[2],
            CnnLayer::Conv2d {
                in_ch: 8,
                out_ch: 8,
                groups: 8,
                ..
            }
        ));
        assert_eq!(scaled.layers[1], CnnLayer::BatchNorm { ch: 8 });
        assert_eq!(scaled.layers[3], CnnLayer::conv(8, 32, 1));
    }

    #[test]
    fn group_width_halving_cost_differential() {
        let seg16 = ArchSpec::Cnn(grouped_seg_backbone(16, &default_seg_stages()));
        let seg8 = ArchSpec::Cnn(
            group_width_scale(&grouped_seg_backbone(16, &default_seg_stages()), 8).unwrap(),
        );
        let eval = EvalConfig::default().with_resolution(256);
        let a = cost_report(&seg16, &eval).unwrap();
        let b = cost_report(&seg8, &eval).unwrap();
        let ArchSpec::Cnn(spec) = &seg16 else {
            unreachable!()
        };
        for (i, l) in spec.layers.iter().enumerate() {
            if matches!(l, CnnLayer::Conv2d { groups, .. } if *groups > 1) {
                assert_eq!(a.per_layer[i].flops, 4 * b.per_layer[i].flops);
                assert_eq!(
                    a.per_layer[i].activation_bytes,
                    2 * b.per_layer[i].activation_bytes
                );
            }
        }
    }

    #[test]
    fn vit_single_field_transforms() {
        let s = vit_small(14, 16);
        assert_eq!(hidden_scale(&s, 384, HeadPolicy::KeepHeads).unwrap(), s);
        assert_eq!(
            hidden_scale(&s, 200, HeadPolicy::KeepHeads)
                .unwrap()
                .hidden_dim,
            198
        );
        let scaled = hidden_scale(&s, 192, HeadPolicy::ScaleHeads).unwrap();
        assert_eq!((scaled.hidden_dim, scaled.num_heads), (192, 6));
        let scaled = hidden_scale(&s, 256, HeadPolicy::ScaleHeads).unwrap();
        assert_eq!((scaled.hidden_dim, scaled.num_heads), (256, 4));
        assert!(matches!(
            hidden_scale(&s, 385, HeadPolicy::ScaleHeads),
            Err(Error::HeadDivisibility { .. })
        ));

        let eval = EvalConfig::default();
        let base = vit_cost_closed(&s, &eval).flops;
        let mlp = vit_cost_closed(&mlp_scale(&s, 768).unwrap(), &eval);
        assert_eq!(base - mlp.flops, 12 * 4 * 196 * 384 * (1536 - 768));
        let shallow = vit_cost_closed(&depth_scale(&s, 6).unwrap(), &eval);
        assert_eq!(2 * shallow.flops, base);
    }

    #[test]
    fn patch_scale_regimes() {
        let s = vit_small(9, 16);
        let wide = patch_scale(&s, 32, PatchKeep::Tokens).unwrap();
        assert_eq!((wide.tokens_per_side, wide.image_side()), (9, 288));
        let eval = EvalConfig::default();
        assert_eq!(
            vit_cost_closed(&wide, &eval).flops,
            vit_cost_closed(&s, &eval).flops
        );
        let full = eval.clone().with_convention(FlopConvention::FullCount);
        let a = cost_report(&ArchSpec::Vit(s.clone()), &full).unwrap();
        let b = cost_report(&ArchSpec::Vit(wide), &full).unwrap();
        assert_eq!(b.flops - a.flops, 2 * 81 * 3 * (32 * 32 - 16 * 16) * 384);
        assert_eq!(b.flops_of(OpKind::PatchEmbed), 2 * 81 * (3 * 32 * 32) * 384);

        let img = vit_small(14, 16);
        assert_eq!(
            patch_scale(&img, 32, PatchKeep::Image)
                .unwrap()
                .tokens_per_side,
            7
        );
        assert!(matches!(
            patch_scale(&img, 24, PatchKeep::Image),
            Err(Error::IndivisibleImage {
                image: 224,
                patch: 24
            })
        ));
        assert_eq!(patch_scale(&img, 16, PatchKeep::Image).unwrap(), img);
    }

    #[test]
    fn resolution_changes_eval_only() {
        let spec = ArchSpec::Vit(vit_small(14, 16));
        let eval = EvalConfig::default();
        let e13 = resolution_scale(&spec, &eval, 13).unwrap();
        let ratio = vit_block_flops_closed(13, 384, 6, 1536) as f64
            / vit_block_flops_closed(14, 384, 6, 1536) as f64;
        let r13 = cost_report(&spec, &e13).unwrap().flops as f64;
        let r14 = cost_report(&spec, &eval).unwrap().flops as f64;
        assert!((r13 / r14 - ratio).abs() < 1e-12);
        // 492,944,946 / 579,923,232
        assert!((ratio - 0.850_017_586_465_651_4).abs() < 1e-12);

        let unpadded = ArchSpec::Cnn(CnnSpec {
            name: "u".into(),
            input_channels: 3,
            default_resolution: Some(32),
            layers: vec![CnnLayer::conv(3, 8, 3), CnnLayer::conv(8, 8, 3)],
        });
        assert!(matches!(
            resolution_scale(&unpadded, &eval, 4),
            Err(Error::InfeasibleResolution { .. })
        ));
        let cnn = ArchSpec::Cnn(resnet50());
        let same = resolution_scale(&cnn, &eval.clone().with_resolution(224), 224).unwrap();
        assert_eq!(
            cost_report(&cnn, &same).unwrap(),
            cost_report(&cnn, &eval.with_resolution(224)).unwrap()
        );
    }

    #[test]
    fn dtype_is_idempotent() {
        let e = dtype_scale(&EvalConfig::default(), DType::int8());
        assert_eq!(dtype_scale(&e, DType::int8()), e);
    }

    #[test]
    fn unsupported_combinations() {
        let vit = ArchSpec::Vit(vit_small(14, 16));
        let eval = EvalConfig::default();
        assert!(matches!(
            ScalingTransform::width(0.5).apply(&vit, &eval),
            Err(Error::UnsupportedTransform { arch: "vit", .. })
        ));
        let cnn = ArchSpec::Cnn(resnet50());
        assert!(matches!(
            ScalingTransform::Depth { depth: 3 }.apply(&cnn, &eval),
            Err(Error::UnsupportedTransform { arch: "cnn", .. })
        ));
    }

    #[test]
    fn config_id_reproduces_spec() {
        let base = ArchSpec::Vit(vit_small(14, 16));
        let eval = EvalConfig::default();
        let cfg = ScaledConfig::new(
            &base,
            &eval,
            vec![
                ScalingTransform::Hybrid(vec![
                    ScalingTransform::hidden(192),
                    ScalingTransform::Mlp { mlp_dim: 768 },
                ]),
                ScalingTransform::Resolution { resolution: 11 },
                ScalingTransform::patch(12),
            ],
        )
        .unwrap();
        assert_eq!(
            cfg.config_id,
            "vit_small|hybrid(hidden=192,mlp=768);N=11;patch=12"
        );
        let (name, chain) = parse_config_id(&cfg.config_id).unwrap();
        assert_eq!(name, "vit_small");
        let again = ScaledConfig::new(&base, &eval, chain).unwrap();
        assert_eq!(again, cfg);
    }
}
