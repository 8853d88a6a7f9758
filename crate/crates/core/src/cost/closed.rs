//! Closed-form transformer-block costs.
//!
//! These count one encoder block only: the embedding and the classifier are
//! left out, attention is assumed fused so the score matrix is never stored,
//! and biases and norms carry no parameters. They serve both as the
//! `BlocksOnly` convention and as an oracle for the graph walk.

use crate::arch::{EvalConfig, FlopConvention, TensorShape, ViTSpec};

use super::{CostReport, LayerCost, OpKind};

/// FLOPs of one block with `n` tokens per side:
/// `4·N⁴·D + 3·k·N⁴ + 2·N²·D² + 4·N²·D·D_MLP`.
pub fn vit_block_flops_closed(n: u32, d: u32, k: u32, d_mlp: u32) -> u128 {
    let (n, d, k, m) = (n as u128, d as u128, k as u128, d_mlp as u128);
    let n2 = n * n;
    let n4 = n2 * n2;
    4 * n4 * d + 3 * k * n4 + 2 * n2 * d * d + 4 * n2 * d * m
}

/// Activation elements kept by one block: queries, keys, values, the
/// attention output and the block output (`5·N²·D`) plus the MLP hidden
/// tensor (`N²·D_MLP`).
pub fn vit_block_activation_elems_closed(n: u32, d: u32, d_mlp: u32) -> u128 {
    let (n, d, m) = (n as u128, d as u128, d_mlp as u128);
    let n2 = n * n;
    5 * n2 * d + n2 * m
}

/// Weights of one block: `D·(3D + D + 2·D_MLP)`.
pub fn vit_block_params_closed(d: u32, d_mlp: u32) -> u128 {
    let (d, m) = (d as u128, d_mlp as u128);
    d * (3 * d + d + 2 * m)
}

/// Whole-model report from the block formulas. Uses the evaluation
/// resolution when set, otherwise the spec's own tokens per side. A spec
/// with zero depth yields an all-zero report.
pub fn vit_cost_closed(spec: &ViTSpec, eval: &EvalConfig) -> CostReport {
    let n = eval.input_resolution.unwrap_or(spec.tokens_per_side);
    let batch = eval.batch_size as u128;
    let bytes = eval.dtype.bytes_per_element() as u128;

    let flops = vit_block_flops_closed(n, spec.hidden_dim, spec.num_heads, spec.mlp_dim) * batch;
    let act = vit_block_activation_elems_closed(n, spec.hidden_dim, spec.mlp_dim) * batch * bytes;
    let params = vit_block_params_closed(spec.hidden_dim, spec.mlp_dim);
    let tokens = u64::from(n) * u64::from(n);

    let per_layer = (0..spec.depth)
        .map(|b| LayerCost {
            layer_index: b as usize,
            name: format!("block{b}"),
            op: OpKind::Block,
            block: Some(b),
            out_shape: TensorShape::new(vec![tokens.max(1), u64::from(spec.hidden_dim.max(1))]),
            flops,
            activation_bytes: act,
            param_count: params,
        })
        .collect();

    CostReport::from_layers(
        spec.name.clone(),
        FlopConvention::BlocksOnly,
        eval,
        n,
        per_layer,
    )
}
