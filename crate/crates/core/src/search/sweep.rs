use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{ArchSpec, EvalConfig};
use crate::cost::{cost_report, propagate_shapes, CostReport};
use crate::error::{Error, Result};
use crate::scaling::{config_id, ScaledConfig, ScalingTransform, TransformKind};

use super::FrontierPoint;

pub const DEFAULT_CAP: u128 = 1_000_000;

/// One axis value as written in a sweep file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValue {
    Int(u64),
    Real(f64),
    Text(String),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisValue::Int(v) => write!(f, "{v}"),
            AxisValue::Real(v) => write!(f, "{v}"),
            AxisValue::Text(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub kind: TransformKind,
    pub values: Vec<AxisValue>,
    /// Encoding suffix applied to every value, e.g. `floor` or `image`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option: Option<String>,
}

impl Axis {
    pub fn new(kind: TransformKind, values: impl IntoIterator<Item = AxisValue>) -> Self {
        Axis {
            kind,
            values: values.into_iter().collect(),
            option: None,
        }
    }

    fn transforms(&self) -> Result<Vec<ScalingTransform>> {
        self.values
            .iter()
            .map(|v| {
                let text = match (self.kind, &self.option) {
                    (TransformKind::Hybrid, _) => format!("hybrid({v})"),
                    (k, None) => format!("{}={v}", k.key()),
                    (k, Some(o)) => format!("{}={v}:{o}", k.key()),
                };
                text.parse()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpace {
    pub base: ArchSpec,
    pub eval: EvalConfig,
    pub axes: Vec<Axis>,
    pub cap: u128,
}

impl SweepSpace {
    pub fn new(base: ArchSpec, eval: EvalConfig, axes: Vec<Axis>) -> Self {
        SweepSpace {
            base,
            eval,
            axes,
            cap: DEFAULT_CAP,
        }
    }

    /// Number of configurations in the cross product.
    pub fn size(&self) -> u128 {
        self.axes
            .iter()
            .map(|a| a.values.len() as u128)
            .try_fold(1u128, |acc, n| acc.checked_mul(n))
            .unwrap_or(u128::MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Skipped {
    pub config_id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Enumeration {
    pub configs: Vec<ScaledConfig>,
    pub skipped: Vec<Skipped>,
}

/// Expands the cross product of all axes, first axis outermost. Each config
/// applies one transform per axis, in axis order. Combinations that fail
/// validation or shape propagation are skipped with a reason.
pub fn enumerate(space: &SweepSpace) -> Result<Enumeration> {
    if let Some(axis) = space.axes.iter().find(|a| a.values.is_empty()) {
        return Err(Error::InvalidSpace(format!(
            "axis `{}` has no values",
            axis.kind
        )));
    }
    let size = space.size();
    if size > space.cap {
        return Err(Error::SpaceTooLarge {
            size,
            cap: space.cap,
        });
    }
    log::info!("sweep space: {size} configurations");
    let per_axis = space
        .axes
        .iter()
        .map(Axis::transforms)
        .collect::<Result<Vec<_>>>()?;

    let mut configs = Vec::new();
    let mut skipped = Vec::new();
    let mut index = vec![0usize; per_axis.len()];
    for _ in 0..size {
        let chain: Vec<ScalingTransform> = index
            .iter()
            .zip(&per_axis)
            .map(|(&i, axis)| axis[i].clone())
            .collect();
        let id = config_id(space.base.name(), &chain);
        let built = ScaledConfig::new(&space.base, &space.eval, chain)
            .and_then(|cfg| propagate_shapes(&cfg.spec, &cfg.eval).map(|_| cfg));
        match built {
            Ok(cfg) => configs.push(cfg),
            Err(e) => {
                log::warn!("skipping {id}: {e}");
                skipped.push(Skipped {
                    config_id: id,
                    reason: e.to_string(),
                });
            }
        }
        // Odometer increment, last axis fastest.
        for pos in (0..index.len()).rev() {
            index[pos] += 1;
            if index[pos] < per_axis[pos].len() {
                break;
            }
            index[pos] = 0;
        }
    }
    Ok(Enumeration { configs, skipped })
}

/// Costs every config in parallel; output order matches the input.
pub fn evaluate_reports(configs: &[ScaledConfig]) -> Result<Vec<CostReport>> {
    configs
        .par_iter()
        .map(|c| cost_report(&c.spec, &c.eval))
        .collect()
}

pub fn evaluate(configs: &[ScaledConfig]) -> Result<Vec<FrontierPoint>> {
    let reports = evaluate_reports(configs)?;
    Ok(configs
        .iter()
        .zip(&reports)
        .map(|(c, r)| FrontierPoint::from_report(c.config_id.clone(), r))
        .collect())
}
