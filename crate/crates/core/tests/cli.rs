use std::path::Path;
use std::process::{Command, Output};

use scalecost::presets::{resnet50, vit_small};
use scalecost::{cost_report, ArchSpec, EvalConfig};
use serde_json::Value;

fn scalecost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scalecost"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, name: &str, spec: &ArchSpec) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn json_out(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn flops(v: &Value) -> u128 {
    v["flops"].as_u64().unwrap() as u128
}

#[test]
fn cost_vit_small_at_14() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "vit_s.json", &ArchSpec::Vit(vit_small(9, 16)));
    let v = json_out(&scalecost(&["cost", &spec, "--resolution", "14"]));
    assert_eq!(flops(&v), 6_959_078_784);
}

#[test]
fn batch_eight_is_eight_times() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "resnet50.json", &ArchSpec::Cnn(resnet50()));
    let one = json_out(&scalecost(&["cost", &spec]));
    let eight = json_out(&scalecost(&["cost", &spec, "--batch", "8"]));
    assert_eq!(flops(&eight), 8 * flops(&one));
}

#[test]
fn csv_format() {
    let out = scalecost(&["cost", "resnet50", "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("layer_index,name,out_shape,flops,activation_bytes,param_count\n"));
}

#[test]
fn malformed_json_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"kind\": \"cnn\", \"name\": ").unwrap();
    let out = scalecost(&["cost", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let diag: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["error"], "validation");
    assert!(diag["line"].as_u64().is_some());
}

#[test]
fn invalid_spec_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let mut vit = vit_small(14, 16);
    vit.num_heads = 5;
    let spec = write_spec(dir.path(), "bad_heads.json", &ArchSpec::Vit(vit));
    let out = scalecost(&["cost", &spec]);
    assert_eq!(out.status.code(), Some(2));
    let diag: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(!diag["violations"].as_array().unwrap().is_empty());
}

#[test]
fn missing_file_exits_1() {
    let out = scalecost(&["cost", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(scalecost(&["frobnicate"]).status.code(), Some(64));
    assert_eq!(
        scalecost(&["cost", "resnet50", "--batch", "0"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(
        scalecost(&["best", ".", "--metric", "accuracy", "--max-drop", "-1"])
            .status
            .code(),
        Some(64)
    );
    assert_eq!(scalecost(&["--help"]).status.code(), Some(0));
}

#[test]
fn match_mlp_against_scan() {
    let base = vit_small(9, 16);
    let eval = EvalConfig::default();
    let target = cost_report(&ArchSpec::Vit(vit_small(11, 16)), &eval)
        .unwrap()
        .flops;
    let v = json_out(&scalecost(&[
        "match",
        "vit_small",
        "--resolution",
        "9",
        "--knob",
        "mlp",
        "--target-flops",
        &target.to_string(),
    ]));
    let best = (1..=16 * base.mlp_dim)
        .map(|m| {
            let mut s = base.clone();
            s.mlp_dim = m;
            (
                cost_report(&ArchSpec::Vit(s), &eval)
                    .unwrap()
                    .flops
                    .abs_diff(target),
                m,
            )
        })
        .min()
        .unwrap();
    assert_eq!(v["deviation"].as_u64().unwrap() as u128, best.0);
    assert_eq!(v["value"].as_f64().unwrap(), f64::from(best.1));
}

#[test]
fn match_unreachable_exits_3() {
    let out = scalecost(&[
        "match",
        "vit_small",
        "--knob",
        "depth",
        "--target-flops",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

fn write_sweep(dir: &Path, body: &str) -> String {
    let path = dir.join("space.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn width_axis_rows_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_sweep(
        dir.path(),
        r#"{"base": "resnet50", "axes": [{"kind": "width", "values": [1.0, 0.5, 0.25]}]}"#,
    );
    let out_dir = dir.path().join("out");
    let out = scalecost(&["sweep", &space, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let points = scalecost::io::read_frontier_csv(&out_dir.join("frontier.csv")).unwrap();
    assert_eq!(points.len(), 3);
    assert!(points[0].flops > points[1].flops && points[1].flops > points[2].flops);
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["input_hashes"].as_object().unwrap().len(), 1);
}

#[test]
fn empty_annotations_warn_and_add_no_columns() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_sweep(
        dir.path(),
        r#"{"base": "vit_small", "axes": [{"kind": "depth", "values": [6, 12]}]}"#,
    );
    let ann = dir.path().join("ann.csv");
    std::fs::write(&ann, "").unwrap();
    let out_dir = dir.path().join("out");
    let out = scalecost(&[
        "sweep",
        &space,
        "--annotations",
        ann.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no annotation rows"));
    let header = std::fs::read_to_string(out_dir.join("frontier.csv")).unwrap();
    assert_eq!(
        header.lines().next().unwrap(),
        "config_id,flops,peak_activation_bytes,model_bytes,total_memory_bytes"
    );
}

#[test]
fn best_on_annotated_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_sweep(
        dir.path(),
        r#"{"base": "resnet50", "axes": [{"kind": "N", "values": [224, 192, 160, 128]}]}"#,
    );
    let ann = dir.path().join("ann.csv");
    std::fs::write(
        &ann,
        "config_id,metric,value\n\
         resnet50|N=224,accuracy,80.3\n\
         resnet50|N=192,accuracy,79.9\n\
         resnet50|N=160,accuracy,79.4\n\
         resnet50|N=128,accuracy,78.0\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = scalecost(&[
        "sweep",
        &space,
        "--annotations",
        ann.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let frontier = std::fs::read_to_string(out_dir.join("frontier.csv")).unwrap();
    assert!(frontier.lines().next().unwrap().ends_with(",accuracy"));

    let sweep_dir = out_dir.to_str().unwrap();
    let best = |drop: &str| {
        json_out(&scalecost(&[
            "best",
            sweep_dir,
            "--metric",
            "accuracy",
            "--max-drop",
            drop,
            "--baseline",
            "resnet50|N=224",
        ]))
    };
    // 80.3 − 0.75 = 79.55: N=192 is the cheapest config above it.
    assert_eq!(best("0.75")["selected"]["config_id"], "resnet50|N=192");
    assert_eq!(best("1.0")["selected"]["config_id"], "resnet50|N=160");
    assert_eq!(best("0")["selected"]["config_id"], "resnet50|N=224");

    let out = scalecost(&["best", sweep_dir, "--metric", "miou", "--max-drop", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn presets_list_and_show() {
    let out = scalecost(&["presets", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text
        .lines()
        .any(|l| l.starts_with("resnet50\t") && l.contains("params=25557032")));
    let spec: ArchSpec =
        serde_json::from_slice(&scalecost(&["presets", "show", "vit_small"]).stdout).unwrap();
    assert_eq!(spec, ArchSpec::Vit(vit_small(14, 16)));
    assert_eq!(
        scalecost(&["presets", "show", "nope"]).status.code(),
        Some(2)
    );
}

#[test]
fn cost_manifest_hashes_input() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "r.json", &ArchSpec::Cnn(resnet50()));
    let manifest = dir.path().join("m.json");
    let out = scalecost(&["cost", &spec, "--manifest", manifest.to_str().unwrap()]);
    assert!(out.status.success());
    let m: Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    let digest = scalecost::io::sha256_hex(&std::fs::read(&spec).unwrap());
    assert_eq!(m["input_hashes"][&spec], digest);
    assert_eq!(m["eval"]["batch_size"], 1);
}
