//! Cost model for convolutional and vision-transformer architectures.
//!
//! Computes FLOPs, peak activation memory and model size, rewrites
//! architectures with width, depth, resolution, patch and precision
//! transforms, and explores the resulting trade-off spaces.

pub mod arch;
pub mod cost;
pub mod error;

pub use arch::{
    ArchSpec, CnnLayer, CnnSpec, DType, EvalConfig, FlopConvention, TensorShape, ViTSpec,
};
pub use cost::{cost_report, CostReport, LayerCost, OpKind};
pub use error::{Error, ErrorClass, Result};
pub mod io;
pub mod presets;
pub mod scaling;
pub mod search;
