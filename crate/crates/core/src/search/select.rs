use crate::error::{Error, Result};

use super::pareto::value_of;
use super::{AnnotationTable, FrontierPoint, Metric};

/// Cheapest point (by `objective`, ties broken by config id) whose `metric`
/// is at least the baseline's minus `max_drop`.
///
/// Points without the metric are skipped with a warning.
pub fn best_compressed(
    points: &[FrontierPoint],
    annotations: &AnnotationTable,
    metric: &str,
    max_drop: f64,
    objective: &Metric,
    baseline: &str,
) -> Result<FrontierPoint> {
    if max_drop.is_nan() || max_drop < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "max drop must be a non-negative number (got {max_drop})"
        )));
    }
    let base_metric = annotations
        .get(baseline, metric)
        .filter(|_| points.iter().any(|p| p.config_id == baseline))
        .ok_or_else(|| Error::MissingBaseline(baseline.to_string()))?;
    let threshold = base_metric - max_drop;

    let mut best: Option<(&FrontierPoint, _)> = None;
    for p in points {
        let Some(m) = annotations.get(&p.config_id, metric) else {
            log::warn!("{}: no `{metric}` annotation, excluded", p.config_id);
            continue;
        };
        if m < threshold {
            continue;
        }
        let Some(v) = value_of(p, objective) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((q, w)) => match v.order(*w) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Equal => p.config_id < q.config_id,
                std::cmp::Ordering::Greater => false,
            },
        };
        if better {
            best = Some((p, v));
        }
    }
    best.map(|(p, _)| p.clone())
        .ok_or(Error::NoFeasibleCandidate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(id: &str, flops: u128) -> FrontierPoint {
        FrontierPoint {
            config_id: id.into(),
            flops,
            total_memory_bytes: 1000 - flops,
            peak_activation_bytes: 0,
            model_bytes: 0,
            annotations: Default::default(),
        }
    }

    fn table(rows: &[(&str, f64)]) -> AnnotationTable {
        let mut t = AnnotationTable::new();
        for &(id, v) in rows {
            t.insert(id, "acc", v);
        }
        t
    }

    #[test]
    fn unlimited_drop_is_global_minimum() {
        let points = [pt("base", 100), pt("a", 50), pt("b", 10)];
        let t = table(&[("base", 76.0), ("a", 75.0), ("b", 10.0)]);
        let best =
            best_compressed(&points, &t, "acc", f64::INFINITY, &Metric::Flops, "base").unwrap();
        assert_eq!(best.config_id, "b");
    }

    #[test]
    fn zero_drop_keeps_baseline() {
        let points = [pt("base", 100), pt("a", 50)];
        let t = table(&[("base", 76.0), ("a", 75.9)]);
        let best = best_compressed(&points, &t, "acc", 0.0, &Metric::Flops, "base").unwrap();
        assert_eq!(best.config_id, "base");
    }

    #[test]
    fn respects_drop_budget_and_objective() {
        let points = [pt("base", 100), pt("a", 50), pt("b", 10), pt("c", 70)];
        let t = table(&[("base", 76.0), ("a", 75.3), ("b", 74.0), ("c", 75.9)]);
        let best = best_compressed(&points, &t, "acc", 0.75, &Metric::Flops, "base").unwrap();
        assert_eq!(best.config_id, "a");
        // Memory is inversely ordered here.
        let best = best_compressed(&points, &t, "acc", 0.75, &Metric::TotalMemory, "base").unwrap();
        assert_eq!(best.config_id, "base");
    }

    #[test]
    fn missing_annotations_are_excluded() {
        let points = [pt("base", 100), pt("cheap", 1)];
        let t = table(&[("base", 76.0)]);
        let best = best_compressed(&points, &t, "acc", 10.0, &Metric::Flops, "base").unwrap();
        assert_eq!(best.config_id, "base");
    }

    #[test]
    fn errors() {
        let points = [pt("base", 100)];
        let t = table(&[("base", 76.0)]);
        assert!(matches!(
            best_compressed(&points, &t, "acc", -1.0, &Metric::Flops, "base"),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            best_compressed(&points, &t, "acc", 1.0, &Metric::Flops, "zzz"),
            Err(Error::MissingBaseline(_))
        ));
        assert!(matches!(
            best_compressed(
                &points,
                &t,
                "acc",
                1.0,
                &Metric::Annotation("miou".into()),
                "base"
            ),
            Err(Error::NoFeasibleCandidate)
        ));
    }
}
