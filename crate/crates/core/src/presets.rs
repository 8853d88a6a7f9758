//! Canonical architectures, buildable by name.
//!
//! The ViT hyperparameters are the widely used ViT-Small / ViT-Base values
//! (D=384/768, 6/12 heads, MLP 4·D, 12 blocks). `regseg_like` is a
//! parametric stand-in for RegSeg: grouped, dilated bottleneck blocks whose
//! group count is fixed per stage and whose width is `groups · group_width`.
//! It is not a layer-exact reproduction of RegSeg.

use crate::arch::{ensure_valid, ArchSpec, CnnLayer, CnnSpec, PoolKind, Projection, ViTSpec};
use crate::cost::conv_output_side;
use crate::error::{Error, Result};

pub struct PresetEntry {
    pub name: &'static str,
    pub description: &'static str,
    build: fn() -> ArchSpec,
}

impl PresetEntry {
    pub fn build(&self) -> ArchSpec {
        (self.build)()
    }
}

pub fn catalog() -> Vec<PresetEntry> {
    vec![
        PresetEntry {
            name: "resnet50",
            description: "ResNet-50 (v1.5, stride on the 3x3 conv), 224x224 input",
            build: || ArchSpec::Cnn(resnet50()),
        },
        PresetEntry {
            name: "resnet50_fcr128",
            description: "ResNet-50 with stem activations resized as if the input were 128x128",
            build: || ArchSpec::Cnn(resnet50_fcr(128)),
        },
        PresetEntry {
            name: "vit_small",
            description: "ViT-Small, 14x14 tokens of 16x16 pixels (224x224 image)",
            build: || ArchSpec::Vit(vit_small(14, 16)),
        },
        PresetEntry {
            name: "vit_base",
            description: "ViT-Base, 14x14 tokens of 16x16 pixels (224x224 image)",
            build: || ArchSpec::Vit(vit_base(14, 16)),
        },
        PresetEntry {
            name: "regseg_like",
            description: "Grouped/dilated segmentation backbone, group width 16, 1024x1024 input",
            build: || ArchSpec::Cnn(grouped_seg_backbone(16, &default_seg_stages())),
        },
    ]
}

/// Resolves a preset name. `resnet50_fcr<R>` accepts any equivalent
/// resolution `R`.
pub fn by_name(name: &str) -> Result<ArchSpec> {
    if let Some(entry) = catalog().into_iter().find(|e| e.name == name) {
        return Ok(entry.build());
    }
    if let Some(res) = name.strip_prefix("resnet50_fcr") {
        if let Ok(res) = res.parse::<u32>() {
            let spec = ArchSpec::Cnn(resnet50_fcr(res));
            ensure_valid(&spec)?;
            return Ok(spec);
        }
    }
    Err(Error::UnknownPreset(name.to_string()))
}

fn conv(in_ch: u32, out_ch: u32, kernel: u32, stride: u32, padding: u32) -> CnnLayer {
    CnnLayer::Conv2d {
        in_ch,
        out_ch,
        kernel,
        stride,
        padding,
        groups: 1,
        dilation: 1,
        has_bias: false,
    }
}

/// Index of the most recently pushed layer; the source of a residual link.
fn last(layers: &[CnnLayer]) -> usize {
    layers.len() - 1
}

fn bottleneck(layers: &mut Vec<CnnLayer>, in_ch: u32, width: u32, stride: u32) -> u32 {
    let out_ch = 4 * width;
    let source = last(layers);
    layers.extend([
        conv(in_ch, width, 1, 1, 0),
        CnnLayer::BatchNorm { ch: width },
        CnnLayer::Activation,
        conv(width, width, 3, stride, 1),
        CnnLayer::BatchNorm { ch: width },
        CnnLayer::Activation,
        conv(width, out_ch, 1, 1, 0),
        CnnLayer::BatchNorm { ch: out_ch },
        CnnLayer::ResidualAdd {
            source_layer_index: source,
            projection: (stride != 1 || in_ch != out_ch).then_some(Projection { out_ch, stride }),
        },
        CnnLayer::Activation,
    ]);
    out_ch
}

pub fn resnet50() -> CnnSpec {
    let mut layers = vec![
        conv(3, 64, 7, 2, 3),
        CnnLayer::BatchNorm { ch: 64 },
        CnnLayer::Activation,
        CnnLayer::Pool {
            kind: PoolKind::Max,
            kernel: 3,
            stride: 2,
            padding: 1,
        },
    ];
    let mut ch = 64;
    for (width, blocks, stride) in [(64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)] {
        for b in 0..blocks {
            ch = bottleneck(&mut layers, ch, width, if b == 0 { stride } else { 1 });
        }
    }
    layers.push(CnnLayer::GlobalPool);
    layers.push(CnnLayer::Linear {
        in_features: ch,
        out_features: 1000,
        has_bias: true,
    });
    CnnSpec {
        name: "resnet50".into(),
        input_channels: 3,
        default_resolution: Some(224),
        layers,
    }
}

/// ResNet-50 whose stem-conv output is resized to the size it would have at
/// input side `equivalent_resolution`. Everything after the stem then runs at
/// that reduced size while the stem still sees the full input.
pub fn resnet50_fcr(equivalent_resolution: u32) -> CnnSpec {
    let mut spec = resnet50();
    let target = conv_output_side(equivalent_resolution.into(), 7, 2, 3, 1).unwrap_or(0);
    spec.layers.insert(
        1,
        CnnLayer::Resize {
            target_hw: u32::try_from(target).unwrap_or(u32::MAX),
        },
    );
    // Every residual source after the insertion point moves down by one.
    for layer in spec.layers.iter_mut().skip(2) {
        if let CnnLayer::ResidualAdd {
            source_layer_index, ..
        } = layer
        {
            *source_layer_index += 1;
        }
    }
    spec.name = format!("resnet50_fcr{equivalent_resolution}");
    spec
}

pub fn vit_small(tokens_per_side: u32, patch_size: u32) -> ViTSpec {
    ViTSpec {
        name: "vit_small".into(),
        patch_size,
        hidden_dim: 384,
        num_heads: 6,
        mlp_dim: 1536,
        depth: 12,
        tokens_per_side,
        input_channels: 3,
        num_classes: 1000,
    }
}

pub fn vit_base(tokens_per_side: u32, patch_size: u32) -> ViTSpec {
    ViTSpec {
        name: "vit_base".into(),
        patch_size,
        hidden_dim: 768,
        num_heads: 12,
        mlp_dim: 3072,
        depth: 12,
        tokens_per_side,
        input_channels: 3,
        num_classes: 1000,
    }
}

/// One stage of [`grouped_seg_backbone`]: one block per dilation entry, the
/// first block carrying the stage stride.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegStage {
    pub channels: u32,
    pub groups: u32,
    pub stride: u32,
    pub dilations: Vec<u32>,
}

pub fn default_seg_stages() -> Vec<SegStage> {
    vec![
        SegStage {
            channels: 48,
            groups: 3,
            stride: 2,
            dilations: vec![1],
        },
        SegStage {
            channels: 128,
            groups: 8,
            stride: 2,
            dilations: vec![1, 1, 1],
        },
        SegStage {
            channels: 256,
            groups: 16,
            stride: 2,
            dilations: vec![1, 2, 4, 4, 8, 8, 14],
        },
        SegStage {
            channels: 320,
            groups: 20,
            stride: 1,
            dilations: vec![14],
        },
    ]
}

/// Number of segmentation classes of the 1x1 head.
const SEG_CLASSES: u32 = 19;

/// Stem conv, then bottleneck blocks `1x1 → grouped dilated 3x3 → 1x1` with
/// inner width `groups · group_width`, then a 1x1 classification head.
pub fn grouped_seg_backbone(group_width: u32, stages: &[SegStage]) -> CnnSpec {
    let stem = 32;
    let mut layers = vec![
        conv(3, stem, 3, 2, 1),
        CnnLayer::BatchNorm { ch: stem },
        CnnLayer::Activation,
    ];
    let mut ch = stem;
    for stage in stages {
        let width = stage.groups * group_width;
        for (b, &dilation) in stage.dilations.iter().enumerate() {
            let stride = if b == 0 { stage.stride } else { 1 };
            let source = last(&layers);
            layers.extend([
                conv(ch, width, 1, 1, 0),
                CnnLayer::BatchNorm { ch: width },
                CnnLayer::Activation,
                CnnLayer::Conv2d {
                    in_ch: width,
                    out_ch: width,
                    kernel: 3,
                    stride,
                    padding: dilation,
                    groups: stage.groups,
                    dilation,
                    has_bias: false,
                },
                CnnLayer::BatchNorm { ch: width },
                CnnLayer::Activation,
                conv(width, stage.channels, 1, 1, 0),
                CnnLayer::BatchNorm { ch: stage.channels },
                CnnLayer::ResidualAdd {
                    source_layer_index: source,
                    projection: (stride != 1 || ch != stage.channels).then_some(Projection {
                        out_ch: stage.channels,
                        stride,
                    }),
                },
                CnnLayer::Activation,
            ]);
            ch = stage.channels;
        }
    }
    layers.push(CnnLayer::Conv2d {
        in_ch: ch,
        out_ch: SEG_CLASSES,
        kernel: 1,
        stride: 1,
        padding: 0,
        groups: 1,
        dilation: 1,
        has_bias: true,
    });
    CnnSpec {
        name: "regseg_like".into(),
        input_channels: 3,
        default_resolution: Some(1024),
        layers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{validate_cnn, EvalConfig};
    use crate::cost::{cost_report, propagate_shapes};

    #[test]
    fn every_preset_validates_and_costs() {
        for entry in catalog() {
            let spec = entry.build();
            assert!(
                spec.validate().is_empty(),
                "{}: {:?}",
                entry.name,
                spec.validate()
            );
            let r = cost_report(&spec, &EvalConfig::default()).unwrap();
            assert!(r.flops > 0 && r.total_memory_bytes > 0, "{}", entry.name);
            assert_eq!(by_name(entry.name).unwrap(), spec);
        }
        assert!(matches!(by_name("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn vit_small_card() {
        let v = vit_small(14, 16);
        assert_eq!(
            (v.hidden_dim, v.num_heads, v.mlp_dim, v.depth),
            (384, 6, 1536, 12)
        );
        assert_eq!(v.image_side(), 224);
    }

    #[test]
    fn fcr_resizes_right_after_stem_conv() {
        let fcr = resnet50_fcr(112);
        assert!(validate_cnn(&fcr).is_empty());
        assert_eq!(fcr.layers[1], CnnLayer::Resize { target_hw: 56 });
        let eval = EvalConfig::default().with_resolution(224);
        let fcr_shapes = propagate_shapes(&ArchSpec::Cnn(fcr.clone()), &eval).unwrap();
        let plain_shapes = propagate_shapes(
            &ArchSpec::Cnn(resnet50()),
            &EvalConfig::default().with_resolution(112),
        )
        .unwrap();
        // After the resize, the network runs exactly as plain ResNet-50 at 112.
        assert_eq!(&fcr_shapes[2..], &plain_shapes[1..]);

        let fcr_cost = cost_report(&ArchSpec::Cnn(fcr), &eval).unwrap();
        let plain_cost = cost_report(&ArchSpec::Cnn(resnet50()), &eval).unwrap();
        assert!(fcr_cost.peak_activation_bytes < plain_cost.peak_activation_bytes);
        assert_eq!(fcr_cost.param_count, plain_cost.param_count);
    }

    #[test]
    fn seg_backbone_has_grouped_dilated_convs() {
        let spec = grouped_seg_backbone(16, &default_seg_stages());
        assert!(validate_cnn(&spec).is_empty());
        let grouped = spec
            .layers
            .iter()
            .filter(|l| matches!(l, CnnLayer::Conv2d { groups, .. } if *groups > 1))
            .count();
        let blocks: usize = default_seg_stages().iter().map(|s| s.dilations.len()).sum();
        assert_eq!(grouped, blocks);
        let shapes = propagate_shapes(&ArchSpec::Cnn(spec), &EvalConfig::default()).unwrap();
        // Stem /2, then three strided stages: 1024 / 16.
        assert_eq!(shapes.last().unwrap().dims(), &[SEG_CLASSES as u64, 64, 64]);
    }
}
