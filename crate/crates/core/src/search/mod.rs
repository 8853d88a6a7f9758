//! Configuration-space exploration: grid enumeration, Pareto frontiers,
//! FLOPs-budget matching and constrained selection.
//!
//! Quality metrics such as accuracy or mIoU are never computed here; they
//! enter only as annotations measured elsewhere.

mod annotations;
mod budget;
mod pareto;
mod select;
mod sweep;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cost::CostReport;

pub use annotations::AnnotationTable;
pub use budget::{match_flops_budget, match_flops_budget_in, BudgetMatch, Knob};
pub use pareto::{dominates, pareto_front, Direction, Metric, Objective};
pub use select::best_compressed;
pub use sweep::{
    enumerate, evaluate, evaluate_reports, Axis, AxisValue, Enumeration, Skipped, SweepSpace,
    DEFAULT_CAP,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub config_id: String,
    pub flops: u128,
    pub total_memory_bytes: u128,
    pub peak_activation_bytes: u128,
    pub model_bytes: u128,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, f64>,
}

impl FrontierPoint {
    pub fn from_report(config_id: impl Into<String>, report: &CostReport) -> Self {
        FrontierPoint {
            config_id: config_id.into(),
            flops: report.flops,
            total_memory_bytes: report.total_memory_bytes,
            peak_activation_bytes: report.peak_activation_bytes,
            model_bytes: report.model_bytes,
            annotations: BTreeMap::new(),
        }
    }
}
