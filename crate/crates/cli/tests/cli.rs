use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const AND: &str = "module and2(input a, input b, output y);\n  assign y = a & b;\nendmodule";
const AND_TB: &str = "ports: in a b -> out y\na=0 b=0 -> y=0\na=0 b=1 -> y=0\na=1 b=0 -> y=0\na=1 b=1 -> y=1\n";

fn chipforge(args: &[&str]) -> Output {
    chipforge_env(args, &[])
}

fn chipforge_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chipforge"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn response(code: &str) -> String {
    format!("<think>\nAND the inputs.\n</think>\n<answer>\n```verilog\n{code}\n```\n</answer>\n")
}

#[test]
fn passk_prints_six_decimals() {
    let o = chipforge(&["metrics", "passk", "--n", "10", "--c", "5", "--k", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0.996032\n");
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(chipforge(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(chipforge(&["metrics", "passk", "--n", "3", "--c", "5", "--k", "1"]).status.code(), Some(1));
    assert_eq!(chipforge(&["score", "--response", "/nonexistent"]).status.code(), Some(1));
    assert_eq!(chipforge(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[grpo]\ngroup_size = 1\n").unwrap();
    let resp = dir.path().join("r.txt");
    fs::write(&resp, response(AND)).unwrap();
    let o = chipforge(&["--config", p(&cfg), "score", "--response", p(&resp)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("group_size"));

    let o = chipforge_env(&["score", "--response", p(&resp)], &[("CHIPFORGE_REWARD_WEIGHTS_W_FUNC", "-1")]);
    assert_eq!(o.status.code(), Some(2));
    let o = chipforge(&["--config", "/nonexistent.toml", "score", "--response", p(&resp)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn score_reports_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    let (resp, tb) = (dir.path().join("r.txt"), dir.path().join("tb.txt"));
    fs::write(&resp, response(AND)).unwrap();
    fs::write(&tb, AND_TB).unwrap();
    let o = chipforge(&["score", "--response", p(&resp), "--testbench", p(&tb), "--ref-ppa", "0.01,1,0.01"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total"], 2.4);
    assert_eq!(v["r_ppa"], 1.0);

    fs::write(&resp, format!("Sure:\n```verilog\n{AND}\n```\n")).unwrap();
    let o = chipforge(&["score", "--response", p(&resp), "--testbench", p(&tb)]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["total"], 0.0);
}

fn batch_file(dir: &Path, n: usize) -> std::path::PathBuf {
    let mut lines = String::new();
    for i in 0..n {
        let code = match i % 4 {
            0 => AND.to_string(),
            1 => AND.replace('&', "|"),
            2 => AND.replace("a & b", "a &"),
            _ => format!("module w{i}(input [3:0] a, input [3:0] b, output [4:0] s); assign s = a + b + {}; endmodule", i % 3),
        };
        let tb = if i % 4 == 3 { None } else { Some(AND_TB) };
        lines.push_str(&serde_json::json!({ "id": format!("t{i}"), "code": code, "testbench": tb }).to_string());
        lines.push('\n');
    }
    let path = dir.join("tasks.jsonl");
    fs::write(&path, lines).unwrap();
    path
}

#[test]
fn eval_batch_is_ordered_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = batch_file(dir.path(), 100);
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    for out in [&a, &b] {
        let o = chipforge(&["--jobs", "8", "eval-batch", "--tasks", p(&tasks), "--out", p(out)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let ids: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids, (0..100).map(|i| format!("t{i}")).collect::<Vec<_>>());
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["stage_reached"], "ppa_measured");
}

#[test]
fn eval_batch_without_tools_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = batch_file(dir.path(), 2);
    let cfg = dir.path().join("ext.toml");
    fs::write(&cfg, "[toolchain.external]\ncompile = \"chipforge-missing-compiler -o {out} {files}\"\n").unwrap();
    let out = dir.path().join("o.jsonl");
    let o = chipforge(&["--config", p(&cfg), "--backend", "external", "eval-batch", "--tasks", p(&tasks), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("unavailable"));
}

#[test]
fn train_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let (curves, plot) = (dir.path().join("c.dat"), dir.path().join("c.gp"));
    let args = ["--seed", "3", "train", "--steps", "60", "--out-curves", p(&curves), "--gnuplot", p(&plot)];
    let o = chipforge(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let data = fs::read_to_string(&curves).unwrap();
    assert_eq!(data.lines().filter(|l| !l.starts_with('#')).count(), 60);
    assert!(fs::read_to_string(&plot).unwrap().contains(p(&curves)));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(summary["tasks"].as_array().unwrap().len(), 5);

    let again = chipforge(&args);
    assert_eq!(stdout(&again), stdout(&o));
    assert_eq!(fs::read_to_string(&curves).unwrap(), data);
}

#[test]
fn wtl_and_edap_drop() {
    let o = chipforge(&["metrics", "wtl", "--model", "proposed", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!((v["wins"].as_u64(), v["evaluable"].as_u64()), (Some(27), Some(38)));
    let o = chipforge(&["metrics", "edap-drop"]);
    assert!(stdout(&o).starts_with("edap_drop 25.423%"), "{}", stdout(&o));
    assert_eq!(chipforge(&["metrics", "wtl", "--model", "nobody"]).status.code(), Some(1));
}

#[test]
fn data_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    fs::create_dir(&src).unwrap();
    fs::write(src.join("and.v"), format!("// Two-input AND.\n{AND}\n")).unwrap();
    fs::write(src.join("or.v"), format!("// Two-input OR.\n{}\n", AND.replace('&', "|"))).unwrap();
    fs::write(src.join("bad.v"), "// Broken.\nmodule bad(input a, output y); assign y = ; endmodule\n").unwrap();
    let f = |n: &str| dir.path().join(n);
    let run = |args: &[&str]| {
        let o = chipforge(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    };
    run(&["data", "ingest", p(&src), "--out", p(&f("base.jsonl")), "--rejections", p(&f("rej.jsonl"))]);
    run(&["data", "coldstart", "--in", p(&f("base.jsonl")), "--out", p(&f("cs.jsonl"))]);
    run(&["data", "testbench", "--in", p(&f("base.jsonl")), "--out", p(&f("tb.jsonl"))]);
    run(&["data", "ppa", "--in", p(&f("tb.jsonl")), "--out", p(&f("rl.jsonl"))]);
    let count = |n: &str| fs::read_to_string(f(n)).unwrap().lines().count();
    assert_eq!((count("base.jsonl"), count("rej.jsonl"), count("cs.jsonl"), count("rl.jsonl")), (2, 1, 2, 2));
    let rl: serde_json::Value = serde_json::from_str(fs::read_to_string(f("rl.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(rl["validation_level"], "statistical");
    assert!(rl["ppa_ref"]["area_um2"].as_f64().unwrap() > 0.0);
}

#[test]
fn unreachable_generator_exits_3_with_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base.jsonl");
    fs::write(&base, format!("{}\n", serde_json::json!({ "id": "x", "instruction": "AND", "code": AND }))).unwrap();
    let cfg = dir.path().join("http.toml");
    fs::write(&cfg, "[generator]\nkind = \"http\"\n[generator.http]\nendpoint = \"http://127.0.0.1:9/v1\"\nretries = 0\n").unwrap();
    let out = dir.path().join("cs.jsonl");
    let o = chipforge_env(&["--config", p(&cfg), "data", "coldstart", "--in", p(&base), "--out", p(&out)], &[("CHIPFORGE_API_KEY", "k")]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap(), "");
}
