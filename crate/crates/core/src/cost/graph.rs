use crate::arch::{
    ensure_valid, ArchSpec, CnnLayer, CnnSpec, EvalConfig, FlopConvention, TensorShape, ViTSpec,
};
use crate::error::{Error, Result};

use super::{CostReport, LayerCost, OpKind};

/// Output side of a convolution or pool window, `None` if it would be 0.
pub fn conv_output_side(
    len: u64,
    kernel: u32,
    stride: u32,
    padding: u32,
    dilation: u32,
) -> Option<u64> {
    let span = u64::from(dilation) * (u64::from(kernel) - 1) + 1;
    let padded = len + 2 * u64::from(padding);
    if padded < span {
        return None;
    }
    Some((padded - span) / u64::from(stride) + 1)
}

/// `2 · batch · (in_ch / groups) · out_ch · kernel² · H_out · W_out`.
///
/// Dilation widens the window without adding taps, so it does not appear.
pub fn conv_flops(layer: &CnnLayer, out_shape: &TensorShape, batch: u32) -> u128 {
    match *layer {
        CnnLayer::Conv2d {
            in_ch,
            out_ch,
            kernel,
            groups,
            ..
        } => {
            let (h, w) = out_shape.spatial().unwrap_or((1, 1));
            2 * batch as u128
                * (in_ch / groups) as u128
                * out_ch as u128
                * (kernel as u128).pow(2)
                * h as u128
                * w as u128
        }
        _ => 0,
    }
}

/// Per-layer output shapes. For ViTs these are the operators of the full
/// graph walk, in the same order as a `FullCount` report.
pub fn propagate_shapes(spec: &ArchSpec, eval: &EvalConfig) -> Result<Vec<TensorShape>> {
    ensure_valid(spec)?;
    let res = eval.resolution_for(spec)?;
    match spec {
        ArchSpec::Cnn(cnn) => cnn_shapes(cnn, res),
        ArchSpec::Vit(vit) => {
            if res == 0 {
                return Err(Error::InfeasibleResolution { layer_index: 0 });
            }
            Ok(vit_ops(vit, res).into_iter().map(|op| op.out).collect())
        }
    }
}

fn cnn_shapes(spec: &CnnSpec, res: u32) -> Result<Vec<TensorShape>> {
    if res == 0 {
        return Err(Error::InfeasibleResolution { layer_index: 0 });
    }
    let mut shapes: Vec<TensorShape> = Vec::with_capacity(spec.layers.len());
    let mut cur = TensorShape::chw(spec.input_channels.into(), res.into(), res.into());

    for (i, layer) in spec.layers.iter().enumerate() {
        let mismatch = |detail: String| Error::ShapeMismatch {
            layer_index: i,
            detail,
        };
        let spatial = || {
            cur.spatial()
                .ok_or_else(|| mismatch(format!("{} requires a spatial input", layer.tag())))
        };
        let next = match *layer {
            CnnLayer::Conv2d {
                in_ch,
                out_ch,
                kernel,
                stride,
                padding,
                dilation,
                ..
            } => {
                let (h, w) = spatial()?;
                if u64::from(in_ch) != cur.channels() {
                    return Err(mismatch(format!(
                        "expected {in_ch} channels, got {}",
                        cur.channels()
                    )));
                }
                let side = |len| {
                    conv_output_side(len, kernel, stride, padding, dilation)
                        .ok_or(Error::InfeasibleResolution { layer_index: i })
                };
                TensorShape::chw(out_ch.into(), side(h)?, side(w)?)
            }
            CnnLayer::Pool {
                kernel,
                stride,
                padding,
                ..
            } => {
                let (h, w) = spatial()?;
                let side = |len| {
                    conv_output_side(len, kernel, stride, padding, 1)
                        .ok_or(Error::InfeasibleResolution { layer_index: i })
                };
                TensorShape::chw(cur.channels(), side(h)?, side(w)?)
            }
            CnnLayer::GlobalPool => {
                spatial()?;
                TensorShape::chw(cur.channels(), 1, 1)
            }
            CnnLayer::BatchNorm { .. } | CnnLayer::Activation => cur.clone(),
            CnnLayer::ResidualAdd {
                source_layer_index,
                ref projection,
            } => {
                let src = &shapes[source_layer_index];
                let shortcut = match projection {
                    Some(p) => {
                        let (h, w) = src.spatial().ok_or_else(|| {
                            mismatch("projection requires a spatial source".into())
                        })?;
                        let side = |len| {
                            conv_output_side(len, 1, p.stride, 0, 1)
                                .ok_or(Error::InfeasibleResolution { layer_index: i })
                        };
                        TensorShape::chw(p.out_ch.into(), side(h)?, side(w)?)
                    }
                    None => src.clone(),
                };
                if shortcut != cur {
                    return Err(mismatch(format!(
                        "residual branch {shortcut} does not match main branch {cur}"
                    )));
                }
                cur.clone()
            }
            CnnLayer::Resize { target_hw } => {
                spatial()?;
                TensorShape::chw(cur.channels(), target_hw.into(), target_hw.into())
            }
            CnnLayer::Linear {
                in_features,
                out_features,
                ..
            } => {
                if u64::from(in_features) != cur.element_count() {
                    return Err(mismatch(format!(
                        "linear expects {in_features} features, got {}",
                        cur.element_count()
                    )));
                }
                TensorShape::new(vec![out_features.into()])
            }
        };
        shapes.push(next.clone());
        cur = next;
    }
    Ok(shapes)
}

pub(super) fn graph_report(spec: &ArchSpec, eval: &EvalConfig) -> Result<CostReport> {
    let res = eval.resolution_for(spec)?;
    match spec {
        ArchSpec::Cnn(cnn) => cnn_report(cnn, eval, res),
        ArchSpec::Vit(vit) => {
            if res == 0 {
                return Err(Error::InfeasibleResolution { layer_index: 0 });
            }
            Ok(vit_report(vit, eval, res))
        }
    }
}

fn cnn_report(spec: &CnnSpec, eval: &EvalConfig, res: u32) -> Result<CostReport> {
    let shapes = cnn_shapes(spec, res)?;
    let batch = eval.batch_size as u128;
    let bytes = eval.dtype.bytes_per_element() as u128;
    let input = TensorShape::chw(spec.input_channels.into(), res.into(), res.into());

    let per_layer = spec
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let inp = if i == 0 { &input } else { &shapes[i - 1] };
            let out = &shapes[i];
            let in_elems = inp.element_count() as u128;
            let out_elems = out.element_count() as u128;
            let io = in_elems + out_elems;

            // (flops, activation elements, params), flops and elements per sample.
            let (op, flops, act, params) = match *layer {
                CnnLayer::Conv2d {
                    in_ch,
                    out_ch,
                    kernel,
                    groups,
                    has_bias,
                    ..
                } => {
                    let weights =
                        (in_ch / groups) as u128 * out_ch as u128 * (kernel as u128).pow(2);
                    let bias = if has_bias { out_ch as u128 } else { 0 };
                    (OpKind::Conv, conv_flops(layer, out, 1), io, weights + bias)
                }
                CnnLayer::Pool { .. } => (OpKind::Pool, out_elems, io, 0),
                CnnLayer::GlobalPool => (OpKind::GlobalPool, out_elems, io, 0),
                CnnLayer::BatchNorm { ch } => {
                    (OpKind::BatchNorm, 2 * out_elems, io, 2 * ch as u128)
                }
                CnnLayer::Activation => (OpKind::Activation, out_elems, io, 0),
                CnnLayer::ResidualAdd {
                    source_layer_index,
                    ref projection,
                } => {
                    let add = 3 * out_elems;
                    match projection {
                        None => (OpKind::ResidualAdd, out_elems, add, 0),
                        Some(p) => {
                            let src = &shapes[source_layer_index];
                            let src_ch = src.channels() as u128;
                            let src_elems = src.element_count() as u128;
                            let (h, w) = out.spatial().unwrap_or((1, 1));
                            let pix = h as u128 * w as u128;
                            let conv = 2 * src_ch * p.out_ch as u128 * pix;
                            let bn = 2 * out_elems;
                            // Largest of projection conv, its batch norm, and the add.
                            let act = add.max(src_elems + out_elems).max(2 * out_elems);
                            let params = src_ch * p.out_ch as u128 + 2 * p.out_ch as u128;
                            (OpKind::ResidualAdd, conv + bn + out_elems, act, params)
                        }
                    }
                }
                CnnLayer::Resize { .. } => (OpKind::Resize, out_elems, io, 0),
                CnnLayer::Linear {
                    in_features,
                    out_features,
                    has_bias,
                } => {
                    let weights = in_features as u128 * out_features as u128;
                    let bias = if has_bias { out_features as u128 } else { 0 };
                    (OpKind::Linear, 2 * weights, io, weights + bias)
                }
            };
            LayerCost {
                layer_index: i,
                name: format!("{}{i}", layer.tag()),
                op,
                block: None,
                out_shape: out.clone(),
                flops: flops * batch,
                activation_bytes: act * batch * bytes,
                param_count: params,
            }
        })
        .collect();

    Ok(CostReport::from_layers(
        spec.name.clone(),
        FlopConvention::FullCount,
        eval,
        res,
        per_layer,
    ))
}

/// One operator of the transformer graph, costed per sample.
struct VitOp {
    name: String,
    op: OpKind,
    block: Option<u32>,
    out: TensorShape,
    flops: u128,
    act_elems: u128,
    params: u128,
}

/// FLOPs per element charged to a layer norm: mean, centring, variance,
/// normalisation and the affine scale/shift.
const LAYER_NORM_FLOPS: u128 = 5;

/// Full transformer graph at `n` tokens per side. Attention is materialised:
/// the `k·T²` score matrix is an explicit tensor.
fn vit_ops(spec: &ViTSpec, n: u32) -> Vec<VitOp> {
    let t = u64::from(n) * u64::from(n);
    let d = u64::from(spec.hidden_dim);
    let k = u64::from(spec.num_heads);
    let m = u64::from(spec.mlp_dim);
    let p = u64::from(spec.patch_size);
    let c = u64::from(spec.input_channels);
    let classes = u64::from(spec.num_classes);
    let side = u64::from(n) * p;
    let (tw, dw, kw, mw) = (t as u128, d as u128, k as u128, m as u128);
    let seq = |width: u64| TensorShape::new(vec![t, width]);
    let scores = TensorShape::new(vec![k, t, t]);

    let mut ops = Vec::with_capacity(4 + 13 * spec.depth as usize);
    let patch_in = (c * p * p) as u128;
    ops.push(VitOp {
        name: "patch_embed".into(),
        op: OpKind::PatchEmbed,
        block: None,
        out: seq(d),
        flops: 2 * tw * patch_in * dw,
        act_elems: (c * side * side) as u128 + tw * dw,
        params: patch_in * dw + dw,
    });

    for b in 0..spec.depth {
        let mut push = |name: &str, op: OpKind, out: TensorShape, flops, act_elems, params| {
            ops.push(VitOp {
                name: format!("block{b}.{name}"),
                op,
                block: Some(b),
                out,
                flops,
                act_elems,
                params,
            })
        };
        let td = tw * dw;
        let tm = tw * mw;
        let kt2 = kw * tw * tw;
        push(
            "ln1",
            OpKind::LayerNorm,
            seq(d),
            LAYER_NORM_FLOPS * td,
            2 * td,
            2 * dw,
        );
        push(
            "qkv",
            OpKind::QkvProjection,
            seq(3 * d),
            2 * td * 3 * dw,
            td + 3 * td,
            3 * dw * dw + 3 * dw,
        );
        // Per head: (T x D/k) · (D/k x T), summed over k heads = 2·T²·D.
        push(
            "attn_scores",
            OpKind::AttentionScores,
            scores.clone(),
            2 * tw * tw * dw,
            2 * td + kt2,
            0,
        );
        push(
            "softmax",
            OpKind::Softmax,
            scores.clone(),
            3 * kt2,
            2 * kt2,
            0,
        );
        push(
            "attn_values",
            OpKind::AttentionValues,
            seq(d),
            2 * tw * tw * dw,
            kt2 + 2 * td,
            0,
        );
        push(
            "out_proj",
            OpKind::OutProjection,
            seq(d),
            2 * td * dw,
            2 * td,
            dw * dw + dw,
        );
        push("residual1", OpKind::ResidualAdd, seq(d), td, 3 * td, 0);
        push(
            "ln2",
            OpKind::LayerNorm,
            seq(d),
            LAYER_NORM_FLOPS * td,
            2 * td,
            2 * dw,
        );
        push(
            "mlp_fc1",
            OpKind::MlpFc1,
            seq(m),
            2 * td * mw,
            td + tm,
            dw * mw + mw,
        );
        push("gelu", OpKind::Activation, seq(m), tm, 2 * tm, 0);
        push(
            "mlp_fc2",
            OpKind::MlpFc2,
            seq(d),
            2 * tm * dw,
            tm + td,
            mw * dw + dw,
        );
        push("residual2", OpKind::ResidualAdd, seq(d), td, 3 * td, 0);
    }

    let td = tw * dw;
    ops.push(VitOp {
        name: "final_ln".into(),
        op: OpKind::LayerNorm,
        block: None,
        out: seq(d),
        flops: LAYER_NORM_FLOPS * td,
        act_elems: 2 * td,
        params: 2 * dw,
    });
    ops.push(VitOp {
        name: "token_pool".into(),
        op: OpKind::TokenPool,
        block: None,
        out: TensorShape::new(vec![d]),
        flops: dw,
        act_elems: td + dw,
        params: 0,
    });
    let cw = classes as u128;
    ops.push(VitOp {
        name: "classifier".into(),
        op: OpKind::Linear,
        block: None,
        out: TensorShape::new(vec![classes]),
        flops: 2 * dw * cw,
        act_elems: dw + cw,
        params: dw * cw + cw,
    });
    ops
}

fn vit_report(spec: &ViTSpec, eval: &EvalConfig, n: u32) -> CostReport {
    let batch = eval.batch_size as u128;
    let bytes = eval.dtype.bytes_per_element() as u128;
    let per_layer = vit_ops(spec, n)
        .into_iter()
        .enumerate()
        .map(|(i, op)| LayerCost {
            layer_index: i,
            name: op.name,
            op: op.op,
            block: op.block,
            out_shape: op.out,
            flops: op.flops * batch,
            activation_bytes: op.act_elems * batch * bytes,
            param_count: op.params,
        })
        .collect();
    CostReport::from_layers(
        spec.name.clone(),
        FlopConvention::FullCount,
        eval,
        n,
        per_layer,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{CnnLayer, CnnSpec};
    use crate::cost::cost_report;

    fn cnn(input_channels: u32, layers: Vec<CnnLayer>) -> ArchSpec {
        ArchSpec::Cnn(CnnSpec {
            name: "t".into(),
            input_channels,
            default_resolution: None,
            layers,
        })
    }

    fn strided(in_ch: u32, out_ch: u32, kernel: u32, stride: u32, padding: u32) -> CnnLayer {
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

    #[test]
    fn stem_conv_shape() {
        let spec = cnn(3, vec![strided(3, 64, 7, 2, 3)]);
        let shapes = propagate_shapes(&spec, &EvalConfig::default().with_resolution(224)).unwrap();
        assert_eq!(shapes[0].dims(), &[64, 112, 112]);
    }

    #[test]
    fn resize_sets_spatial_only() {
        let spec = cnn(
            3,
            vec![strided(3, 64, 7, 2, 3), CnnLayer::Resize { target_hw: 56 }],
        );
        let shapes = propagate_shapes(&spec, &EvalConfig::default().with_resolution(224)).unwrap();
        assert_eq!(shapes[1].dims(), &[64, 56, 56]);
    }

    #[test]
    fn infeasible_resolution_reports_layer() {
        let spec = cnn(3, vec![strided(3, 3, 3, 4, 0), strided(3, 3, 3, 4, 0)]);
        let err = propagate_shapes(&spec, &EvalConfig::default().with_resolution(8)).unwrap_err();
        assert!(matches!(
            err,
            Error::InfeasibleResolution { layer_index: 1 }
        ));
    }

    #[test]
    fn conv_flops_examples() {
        let out = TensorShape::chw(64, 4, 4);
        assert_eq!(conv_flops(&CnnLayer::conv(64, 64, 3), &out, 1), 1_179_648);
        let depthwise = CnnLayer::Conv2d {
            in_ch: 64,
            out_ch: 64,
            kernel: 3,
            stride: 1,
            padding: 1,
            groups: 64,
            dilation: 1,
            has_bias: false,
        };
        assert_eq!(conv_flops(&depthwise, &out, 1), 18_432);
        assert_eq!(
            conv_flops(&CnnLayer::conv(1, 1, 1), &TensorShape::chw(1, 1, 1), 1),
            2
        );
    }

    /// Loops over every output element and every tap, counting 2 FLOPs per MAC.
    fn brute_conv_flops(in_ch: u32, out_ch: u32, k: u32, groups: u32, h: u64, w: u64) -> u128 {
        let mut macs = 0u128;
        for _oc in 0..out_ch {
            for _y in 0..h {
                for _x in 0..w {
                    for _ic in 0..in_ch / groups {
                        for _t in 0..k * k {
                            macs += 1;
                        }
                    }
                }
            }
        }
        2 * macs
    }

    #[test]
    fn conv_flops_matches_loop_count() {
        for &(i, o, k, g, h) in &[
            (8, 16, 3, 1, 5),
            (8, 8, 3, 8, 4),
            (12, 6, 1, 3, 7),
            (4, 4, 5, 2, 3),
        ] {
            let layer = CnnLayer::Conv2d {
                in_ch: i,
                out_ch: o,
                kernel: k,
                stride: 1,
                padding: 0,
                groups: g,
                dilation: 1,
                has_bias: false,
            };
            assert_eq!(
                conv_flops(&layer, &TensorShape::chw(o.into(), h, h), 1),
                brute_conv_flops(i, o, k, g, h, h)
            );
        }
    }

    #[test]
    fn dilation_changes_shape_not_per_output_cost() {
        let dilated = CnnLayer::Conv2d {
            in_ch: 8,
            out_ch: 8,
            kernel: 3,
            stride: 1,
            padding: 2,
            groups: 1,
            dilation: 2,
            has_bias: false,
        };
        let spec = cnn(8, vec![dilated]);
        let r = cost_report(&spec, &EvalConfig::default().with_resolution(16)).unwrap();
        assert_eq!(r.per_layer[0].out_shape.dims(), &[8, 16, 16]);
        assert_eq!(r.flops, 2 * 8 * 8 * 9 * 256);
    }

    #[test]
    fn residual_counts_three_tensors() {
        let spec = cnn(
            8,
            vec![
                CnnLayer::conv(8, 8, 1),
                CnnLayer::conv(8, 8, 1),
                CnnLayer::ResidualAdd {
                    source_layer_index: 0,
                    projection: None,
                },
            ],
        );
        let r = cost_report(&spec, &EvalConfig::default().with_resolution(4)).unwrap();
        assert_eq!(r.per_layer[2].activation_bytes, 3 * 8 * 16 * 4);
        assert_eq!(r.per_layer[2].flops, 8 * 16);
    }

    #[test]
    fn odd_resolution_residual_mismatch_is_caught() {
        // 3x3 stride-2 without padding vs 1x1 stride-2 projection disagree at odd sizes.
        let spec = cnn(
            8,
            vec![
                CnnLayer::conv(8, 8, 1),
                strided(8, 8, 3, 2, 0),
                CnnLayer::ResidualAdd {
                    source_layer_index: 0,
                    projection: Some(crate::arch::Projection {
                        out_ch: 8,
                        stride: 2,
                    }),
                },
            ],
        );
        let err = propagate_shapes(&spec, &EvalConfig::default().with_resolution(9)).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { layer_index: 2, .. }));
    }
}
