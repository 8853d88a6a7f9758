use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scaling::{encode_chain, parse_config_id};
use crate::search::FrontierPoint;

const FIXED_COLUMNS: [&str; 5] = [
    "config_id",
    "flops",
    "peak_activation_bytes",
    "model_bytes",
    "total_memory_bytes",
];

/// Sorted union of annotation metric names over `points`.
pub fn metric_columns(points: &[FrontierPoint]) -> Vec<String> {
    let names: BTreeSet<&String> = points.iter().flat_map(|p| p.annotations.keys()).collect();
    names.into_iter().cloned().collect()
}

/// Frontier CSV with one column per metric in `metrics`; a point without a
/// metric gets an empty cell.
pub fn frontier_csv(points: &[FrontierPoint], metrics: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain(metrics.iter().cloned());
    w.write_record(header).expect("write to memory");
    for p in points {
        let mut row = vec![
            p.config_id.clone(),
            p.flops.to_string(),
            p.peak_activation_bytes.to_string(),
            p.model_bytes.to_string(),
            p.total_memory_bytes.to_string(),
        ];
        row.extend(metrics.iter().map(|m| {
            p.annotations
                .get(m)
                .map_or(String::new(), |v| v.to_string())
        }));
        w.write_record(&row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is utf-8")
}

pub fn read_frontier_csv(path: &Path) -> Result<Vec<FrontierPoint>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_frontier(file, path)
}

fn parse_frontier<R: Read>(reader: R, path: &Path) -> Result<Vec<FrontierPoint>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as usize,
        column: 0,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < FIXED_COLUMNS.len() || header.iter().zip(FIXED_COLUMNS).any(|(a, b)| a != b) {
        return Err(parse_err(
            1,
            format!("expected columns {}", FIXED_COLUMNS.join(",")),
        ));
    }
    let metrics: Vec<String> = header
        .iter()
        .skip(FIXED_COLUMNS.len())
        .map(String::from)
        .collect();
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let int = |i: usize| {
            record[i].parse::<u128>().map_err(|_| {
                parse_err(
                    line,
                    format!("invalid {} `{}`", FIXED_COLUMNS[i], &record[i]),
                )
            })
        };
        let mut annotations = BTreeMap::new();
        for (name, cell) in metrics.iter().zip(record.iter().skip(FIXED_COLUMNS.len())) {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("invalid {name} `{cell}`")))?;
            annotations.insert(name.clone(), v);
        }
        points.push(FrontierPoint {
            config_id: record[0].to_string(),
            flops: int(1)?,
            peak_activation_bytes: int(2)?,
            model_bytes: int(3)?,
            total_memory_bytes: int(4)?,
            annotations,
        });
    }
    Ok(points)
}

/// Plot series of a config: its chain minus the last transform, then the
/// varied transform's kind (`N=9/patch`). Unscaled configs form `base`.
pub fn series_name(config_id: &str) -> String {
    match parse_config_id(config_id) {
        Ok((_, chain)) => match chain.split_last() {
            None => "base".to_string(),
            Some((last, [])) => last.kind().to_string(),
            Some((last, rest)) => format!("{}/{}", encode_chain(rest), last.kind()),
        },
        Err(_) => "base".to_string(),
    }
}

/// Tab-separated plot data, one row per point in input order.
pub fn plot_tsv(points: &[FrontierPoint]) -> String {
    let mut out = String::from(
        "series\tconfig_id\tflops\ttotal_memory_bytes\tpeak_activation_bytes\tmodel_bytes\n",
    );
    for p in points {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            series_name(&p.config_id),
            p.config_id,
            p.flops,
            p.total_memory_bytes,
            p.peak_activation_bytes,
            p.model_bytes
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(id: &str, flops: u128) -> FrontierPoint {
        FrontierPoint {
            config_id: id.into(),
            flops,
            total_memory_bytes: 7,
            peak_activation_bytes: 3,
            model_bytes: 4,
            annotations: BTreeMap::new(),
        }
    }

    #[test]
    fn round_trip_with_sparse_metrics() {
        let mut a = pt("vit|hybrid(depth=6,mlp=768)", 10);
        a.annotations.insert("accuracy".into(), 79.1);
        let mut b = pt("vit|N=9", 5);
        b.annotations.insert("miou".into(), 0.1 + 0.2);
        let points = vec![a, b];
        let metrics = metric_columns(&points);
        assert_eq!(metrics, ["accuracy", "miou"]);
        let text = frontier_csv(&points, &metrics);
        assert!(text.starts_with(
            "config_id,flops,peak_activation_bytes,model_bytes,total_memory_bytes,accuracy,miou\n"
        ));
        let back = parse_frontier(text.as_bytes(), Path::new("f.csv")).unwrap();
        assert_eq!(back, points);
    }

    #[test]
    fn no_metric_columns_without_annotations() {
        let text = frontier_csv(&[pt("a", 1)], &[]);
        assert_eq!(
            text,
            "config_id,flops,peak_activation_bytes,model_bytes,total_memory_bytes\na,1,3,4,7\n"
        );
    }

    #[test]
    fn bad_header_rejected() {
        assert!(parse_frontier("id,flops\n".as_bytes(), Path::new("f.csv")).is_err());
    }

    #[test]
    fn series() {
        assert_eq!(series_name("vit_small|N=9;patch=16"), "N=9/patch");
        assert_eq!(series_name("resnet50|width=0.5"), "width");
        assert_eq!(series_name("resnet50"), "base");
    }
}
