use std::path::Path;

use serde::Serialize;

use crate::arch::ArchSpec;
use crate::cost::CostReport;
use crate::error::{Error, Result};
use crate::search::{
    enumerate, evaluate_reports, pareto_front, AnnotationTable, FrontierPoint, Metric, Objective,
    Skipped, SweepSpace,
};

use super::{frontier_csv, metric_columns, plot_tsv, write_atomic, RunManifest};

#[derive(Debug, Clone)]
pub struct SweepOutput {
    /// Every evaluated config, in enumeration order.
    pub points: Vec<FrontierPoint>,
    pub pareto: Vec<FrontierPoint>,
    pub skipped: Vec<Skipped>,
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    config_id: &'a str,
    spec: &'a ArchSpec,
    report: &'a CostReport,
}

/// Objectives for `pareto.csv`: minimize FLOPs and total memory, maximize
/// every annotation metric that all points carry.
pub fn sweep_objectives(points: &[FrontierPoint]) -> Vec<Objective> {
    let mut objectives = vec![
        Objective::minimize(Metric::Flops),
        Objective::minimize(Metric::TotalMemory),
    ];
    for m in metric_columns(points) {
        if points.iter().all(|p| p.annotations.contains_key(&m)) {
            objectives.push(Objective::maximize(Metric::Annotation(m)));
        }
    }
    objectives
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '=' | '-' | '_') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Enumerates and costs `space`, then writes into `out_dir`:
/// `frontier.csv`, `pareto.csv`, `plot.tsv`, `skipped.csv`,
/// `reports/NNNN_<id>.json` and `manifest.json`.
pub fn run_sweep(
    space: &SweepSpace,
    annotations: Option<&AnnotationTable>,
    out_dir: &Path,
    manifest: &RunManifest,
) -> Result<SweepOutput> {
    let enumeration = enumerate(space)?;
    let reports = evaluate_reports(&enumeration.configs)?;
    let mut points: Vec<FrontierPoint> = enumeration
        .configs
        .iter()
        .zip(&reports)
        .map(|(c, r)| FrontierPoint::from_report(c.config_id.clone(), r))
        .collect();
    if let Some(table) = annotations {
        if table.is_empty() {
            let source = table
                .source()
                .map_or("annotations".into(), |p| p.display().to_string());
            log::warn!("{source}: no annotation rows; frontier has no metric columns");
        }
        table.attach(&mut points);
    }
    let metrics = metric_columns(&points);
    let pareto = pareto_front(&points, &sweep_objectives(&points));

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let reports_dir = out_dir.join("reports");
    if reports_dir.exists() {
        std::fs::remove_dir_all(&reports_dir).map_err(|e| Error::io(&reports_dir, e))?;
    }
    std::fs::create_dir_all(&reports_dir).map_err(|e| Error::io(&reports_dir, e))?;
    for (i, (cfg, report)) in enumeration.configs.iter().zip(&reports).enumerate() {
        let doc = ReportDoc {
            config_id: &cfg.config_id,
            spec: &cfg.spec,
            report,
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        let path = reports_dir.join(format!("{i:04}_{}.json", sanitize(&cfg.config_id)));
        write_atomic(&path, text.as_bytes())?;
    }

    write_atomic(
        &out_dir.join("frontier.csv"),
        frontier_csv(&points, &metrics).as_bytes(),
    )?;
    write_atomic(
        &out_dir.join("pareto.csv"),
        frontier_csv(&pareto, &metrics).as_bytes(),
    )?;
    write_atomic(&out_dir.join("plot.tsv"), plot_tsv(&points).as_bytes())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["config_id", "reason"])
        .expect("write to memory");
    for s in &enumeration.skipped {
        w.write_record([&s.config_id, &s.reason])
            .expect("write to memory");
    }
    write_atomic(
        &out_dir.join("skipped.csv"),
        &w.into_inner().expect("flush to memory"),
    )?;
    write_atomic(
        &out_dir.join("manifest.json"),
        manifest.to_json().as_bytes(),
    )?;

    Ok(SweepOutput {
        points,
        pareto,
        skipped: enumeration.skipped,
    })
}
