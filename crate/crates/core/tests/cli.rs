use duetlite_core::cli::cli_main;
use duetlite_core::{mnist, Model64};

fn run(args: &[&str]) -> i32 {
    cli_main(std::iter::once("duetlite").chain(args.iter().copied()))
}

fn sample_dir() -> String {
    mnist::default_dir().to_string_lossy().into_owned()
}

#[test]
fn infer_writes_a_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let code = run(&[
        "infer",
        "--split-point",
        "fc1_act",
        "--poly-degree",
        "1024",
        "--output",
        "json",
        "--mnist-dir",
        &sample_dir(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["config"]["split_point"], "fc1_act");
    assert_eq!(v["chain"]["total_bits"], 88);
}

#[test]
fn infer_csv_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let code = run(&[
        "infer",
        "--poly-degree",
        "1024",
        "--transport",
        "tcp",
        "--output",
        "csv",
        "--image-count",
        "2",
        "--mnist-dir",
        &sample_dir(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 7);
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().to_str().unwrap();
    assert_eq!(run(&["infer", "--mnist-dir", empty]), 1);
    assert_eq!(run(&["infer", "--split-point", "conv1", "--mnist-dir", &sample_dir()]), 1);
    assert_eq!(run(&["infer", "--split-point", "nowhere"]), 1);
    assert_eq!(run(&["infer", "--poly-degree", "1000"]), 1);
    assert_eq!(run(&["infer", "--image-index", "5000", "--mnist-dir", &sample_dir()]), 1);
    assert_eq!(run(&["frobnicate"]), 1);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn weights_generate_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.dlw");
    let p = path.to_str().unwrap();
    assert_eq!(run(&["weights", "generate", "--weight-seed", "4", "--out", p]), 0);
    assert_eq!(Model64::load(&path).unwrap(), duetlite_core::gen_weights(4));
    assert_eq!(run(&["weights", "inspect", p]), 0);
    assert_eq!(run(&["infer", "--weights", p, "--poly-degree", "1024", "--mnist-dir", &sample_dir()]), 0);
    std::fs::write(&path, b"DLW1junk").unwrap();
    assert_eq!(run(&["weights", "inspect", p]), 1);
}

#[test]
fn keys_report_and_quick_selftest() {
    assert_eq!(run(&["keys", "--split-point", "fc1_act", "--poly-degree", "1024"]), 0);
    assert_eq!(run(&["selftest", "--quick", "--poly-degree", "1024"]), 0);
}
