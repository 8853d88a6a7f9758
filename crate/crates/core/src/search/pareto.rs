use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::FrontierPoint;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Metric {
    Flops,
    TotalMemory,
    PeakActivation,
    ModelBytes,
    Annotation(String),
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "flops" => Metric::Flops,
            "memory" | "total_memory" | "total_memory_bytes" => Metric::TotalMemory,
            "peak_activation" | "peak_activation_bytes" => Metric::PeakActivation,
            "model" | "model_bytes" => Metric::ModelBytes,
            "" => return Err(Error::InvalidArgument("empty metric name".into())),
            other => Metric::Annotation(other.to_string()),
        })
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Flops => f.write_str("flops"),
            Metric::TotalMemory => f.write_str("total_memory_bytes"),
            Metric::PeakActivation => f.write_str("peak_activation_bytes"),
            Metric::ModelBytes => f.write_str("model_bytes"),
            Metric::Annotation(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Objective {
    pub metric: Metric,
    pub direction: Direction,
}

impl Objective {
    pub fn minimize(metric: Metric) -> Self {
        Objective {
            metric,
            direction: Direction::Minimize,
        }
    }

    pub fn maximize(metric: Metric) -> Self {
        Objective {
            metric,
            direction: Direction::Maximize,
        }
    }
}

/// Objective value; cost metrics stay exact integers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Value {
    Int(u128),
    Real(f64),
}

impl Value {
    pub(crate) fn order(self, other: Value) -> Ordering {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a.cmp(&b),
            (Value::Real(a), Value::Real(b)) => a.total_cmp(&b),
            (Value::Int(a), Value::Real(b)) => (a as f64).total_cmp(&b),
            (Value::Real(a), Value::Int(b)) => a.total_cmp(&(b as f64)),
        }
    }
}

pub(crate) fn value_of(point: &FrontierPoint, metric: &Metric) -> Option<Value> {
    Some(match metric {
        Metric::Flops => Value::Int(point.flops),
        Metric::TotalMemory => Value::Int(point.total_memory_bytes),
        Metric::PeakActivation => Value::Int(point.peak_activation_bytes),
        Metric::ModelBytes => Value::Int(point.model_bytes),
        Metric::Annotation(name) => Value::Real(*point.annotations.get(name)?),
    })
}

/// `Less` when `a` is better than `b` on this objective.
fn compare(a: Value, b: Value, direction: Direction) -> Ordering {
    match direction {
        Direction::Minimize => a.order(b),
        Direction::Maximize => b.order(a),
    }
}

fn dominates_values(a: &[Value], b: &[Value], objectives: &[Objective]) -> bool {
    let mut strictly = false;
    for ((&x, &y), o) in a.iter().zip(b).zip(objectives) {
        match compare(x, y, o.direction) {
            Ordering::Greater => return false,
            Ordering::Less => strictly = true,
            Ordering::Equal => {}
        }
    }
    strictly
}

/// `a` dominates `b`: no worse on every objective and better on at least
/// one. Points lacking a metric dominate nothing and are dominated by nothing.
pub fn dominates(a: &FrontierPoint, b: &FrontierPoint, objectives: &[Objective]) -> bool {
    let va: Option<Vec<Value>> = objectives.iter().map(|o| value_of(a, &o.metric)).collect();
    let vb: Option<Vec<Value>> = objectives.iter().map(|o| value_of(b, &o.metric)).collect();
    match (va, vb) {
        (Some(va), Some(vb)) => dominates_values(&va, &vb, objectives),
        _ => false,
    }
}

/// Non-dominated subset of `points`, ordered by config id.
///
/// Repeated config ids keep their first occurrence; points missing an
/// objective metric are left out. Candidates are visited in lexicographic
/// objective order, so a point can only be dominated by one visited before
/// it and accepted points never need to be revisited.
pub fn pareto_front(points: &[FrontierPoint], objectives: &[Objective]) -> Vec<FrontierPoint> {
    let mut seen = HashSet::new();
    let mut rows: Vec<(&FrontierPoint, Vec<Value>)> = points
        .iter()
        .filter(|p| seen.insert(p.config_id.as_str()))
        .filter_map(|p| {
            let values: Option<Vec<Value>> =
                objectives.iter().map(|o| value_of(p, &o.metric)).collect();
            values.map(|v| (p, v))
        })
        .collect();

    rows.sort_by(|(pa, a), (pb, b)| {
        a.iter()
            .zip(b)
            .zip(objectives)
            .map(|((&x, &y), o)| compare(x, y, o.direction))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then_with(|| pa.config_id.cmp(&pb.config_id))
    });

    let mut front: Vec<(&FrontierPoint, Vec<Value>)> = Vec::new();
    for (p, v) in rows {
        if !front
            .iter()
            .any(|(_, f)| dominates_values(f, &v, objectives))
        {
            front.push((p, v));
        }
    }
    let mut out: Vec<FrontierPoint> = front.into_iter().map(|(p, _)| p.clone()).collect();
    out.sort_by(|a, b| a.config_id.cmp(&b.config_id));
    out
}
