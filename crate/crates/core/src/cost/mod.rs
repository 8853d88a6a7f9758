//! FLOPs and memory accounting.
//!
//! Memory is the model size plus the largest activation footprint of any
//! single operator, where an operator's footprint is the sum of its input
//! and output tensors. FLOPs count 2 per multiply-accumulate.

mod closed;
mod graph;

use serde::{Deserialize, Serialize};

use crate::arch::{ensure_valid, ArchSpec, DType, EvalConfig, FlopConvention, TensorShape};
use crate::error::Result;

pub use closed::{
    vit_block_activation_elems_closed, vit_block_flops_closed, vit_block_params_closed,
    vit_cost_closed,
};
pub use graph::{conv_flops, conv_output_side, propagate_shapes};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Conv,
    Pool,
    GlobalPool,
    BatchNorm,
    Activation,
    ResidualAdd,
    Resize,
    Linear,
    PatchEmbed,
    LayerNorm,
    QkvProjection,
    AttentionScores,
    Softmax,
    AttentionValues,
    OutProjection,
    MlpFc1,
    MlpFc2,
    TokenPool,
    /// A whole transformer block costed in closed form.
    Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer_index: usize,
    pub name: String,
    pub op: OpKind,
    /// Transformer block this operator belongs to, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<u32>,
    pub out_shape: TensorShape,
    pub flops: u128,
    /// `(Σ input elements + output elements) · batch · bytes_per_element`.
    pub activation_bytes: u128,
    pub param_count: u128,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub arch: String,
    pub flop_convention: FlopConvention,
    pub batch_size: u32,
    pub dtype: DType,
    pub resolution: u32,
    pub flops: u128,
    pub peak_activation_bytes: u128,
    pub model_bytes: u128,
    pub total_memory_bytes: u128,
    pub param_count: u128,
    pub per_layer: Vec<LayerCost>,
}

impl CostReport {
    pub(crate) fn from_layers(
        arch: String,
        flop_convention: FlopConvention,
        eval: &EvalConfig,
        resolution: u32,
        per_layer: Vec<LayerCost>,
    ) -> Self {
        let flops = per_layer.iter().map(|l| l.flops).sum();
        let peak_activation_bytes = per_layer
            .iter()
            .map(|l| l.activation_bytes)
            .max()
            .unwrap_or(0);
        let param_count: u128 = per_layer.iter().map(|l| l.param_count).sum();
        let model_bytes = param_count * eval.dtype.bytes_per_element() as u128;
        CostReport {
            arch,
            flop_convention,
            batch_size: eval.batch_size,
            dtype: eval.dtype.clone(),
            resolution,
            flops,
            peak_activation_bytes,
            model_bytes,
            total_memory_bytes: model_bytes + peak_activation_bytes,
            param_count,
            per_layer,
        }
    }

    /// Index of the first layer attaining the peak activation footprint.
    pub fn peak_layer(&self) -> Option<usize> {
        self.per_layer
            .iter()
            .position(|l| l.activation_bytes == self.peak_activation_bytes)
    }

    /// Sum of FLOPs of the given operator kind within one block.
    pub fn block_flops(&self, block: u32, op: OpKind) -> u128 {
        self.per_layer
            .iter()
            .filter(|l| l.block == Some(block) && l.op == op)
            .map(|l| l.flops)
            .sum()
    }

    pub fn flops_of(&self, op: OpKind) -> u128 {
        self.per_layer
            .iter()
            .filter(|l| l.op == op)
            .map(|l| l.flops)
            .sum()
    }

    /// Per-layer CSV: `layer_index,name,out_shape,flops,activation_bytes,param_count`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("layer_index,name,out_shape,flops,activation_bytes,param_count\n");
        for l in &self.per_layer {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                l.layer_index, l.name, l.out_shape, l.flops, l.activation_bytes, l.param_count
            ));
        }
        out
    }
}

/// Costs `spec` under `eval`. CNNs are always graph-walked; ViTs use the
/// closed-form block formulas under `BlocksOnly` and the full operator graph
/// under `FullCount`.
pub fn cost_report(spec: &ArchSpec, eval: &EvalConfig) -> Result<CostReport> {
    ensure_valid(spec)?;
    if eval.batch_size == 0 {
        return Err(crate::Error::InvalidArgument(
            "batch_size must be ≥ 1".into(),
        ));
    }
    match (spec, eval.flop_convention) {
        (ArchSpec::Vit(vit), FlopConvention::BlocksOnly) => {
            if eval.input_resolution == Some(0) {
                return Err(crate::Error::InfeasibleResolution { layer_index: 0 });
            }
            Ok(vit_cost_closed(vit, eval))
        }
        _ => graph::graph_report(spec, eval),
    }
}
