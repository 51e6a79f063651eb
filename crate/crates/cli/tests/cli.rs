use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value as Json;

fn model(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/models").join(name)
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn pchart(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pchart")).args(args).env_remove("PCHART_STATE_LIMIT").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Parses the `--json` output and validates it against the shipped schema.
fn json(command: &str, o: &Output) -> Json {
    let schema_text = pchart_cli::SCHEMAS.iter().find(|(k, _)| *k == command).unwrap().1;
    let schema: Json = serde_json::from_str(schema_text).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let v: Json = serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("{e}\n{}", stdout(o)));
    if let Err(errors) = compiled.validate(&v) {
        let msgs: Vec<String> = errors.map(|e| format!("{e} at {}", e.instance_path)).collect();
        panic!("{command} output violates its schema: {msgs:?}\n{v:#}");
    }
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_exit_codes() {
    let ok = pchart(&["check", s(&model("sender_receiver.pchart"))]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let bad = pchart(&["check", s(&data("bad_probability.pchart"))]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("error"), "{}", stderr(&bad));
    assert!(stderr(&bad).contains("bad_probability.pchart:4:"), "{}", stderr(&bad));
    let missing = pchart(&["check", "/definitely/not/here.pchart"]);
    assert_eq!(missing.status.code(), Some(2));
    let usage = pchart(&["verify"]);
    assert_eq!(usage.status.code(), Some(2));
    let unknown = pchart(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn check_json() {
    let v = json("check", &pchart(&["check", "--json", s(&data("bad_probability.pchart"))]));
    assert_eq!(v["ok"], false);
    assert!(!v["diagnostics"].as_array().unwrap().is_empty());
    let v = json("check", &pchart(&["check", "--json", s(&model("pump.pchart"))]));
    assert_eq!(v["ok"], true);
    let v = json("check", &pchart(&["check", "--json", "/definitely/not/here.pchart"]));
    assert_eq!(v["error"]["kind"], "io");
}

#[test]
fn verify_sender_receiver_table() {
    let o = pchart(&["verify", s(&model("sender_receiver.pchart"))]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(3).collect();
    let expect = [("invariant", "true"), ("?P.min", "1.0000"), ("?$tran.max", "1.1111"), ("?$energy.max", "2.3889"), ("?P>0.5", "true")];
    assert_eq!(rows.len(), expect.len(), "{text}");
    for (row, (q, v)) in rows.iter().zip(expect) {
        let cols: Vec<&str> = row.split_whitespace().collect();
        assert_eq!((cols[1], cols[2]), (q, v), "{text}");
    }
}

#[test]
fn verify_json_keeps_full_precision() {
    let v = json("verify", &pchart(&["verify", "--json", s(&model("sender_receiver.pchart"))]));
    assert_eq!(v["ok"], true);
    assert_eq!(v["invariant"]["value"], true);
    let q = v["queries"].as_array().unwrap();
    assert_eq!(q.len(), 4);
    assert!((q[1]["result"]["value"].as_f64().unwrap() - 10.0 / 9.0).abs() < 1e-6);
    assert!((q[2]["result"]["value"].as_f64().unwrap() - 43.0 / 18.0).abs() < 1e-6);
    assert_eq!(q[3]["result"]["value"], true);
}

#[test]
fn verify_failures_exit_one() {
    let o = pchart(&["verify", s(&data("violated.pchart"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("counterexample: (root=Off) --poweron--> (root=On)"), "{}", stdout(&o));
    let v = json("verify", &pchart(&["verify", "--json", s(&data("violated.pchart"))]));
    assert_eq!(v["ok"], false);
    let v = json("verify", &pchart(&["verify", "--json", s(&data("bad_probability.pchart"))]));
    assert_eq!(v["error"]["kind"], "diagnostics");
}

#[test]
fn verify_without_queries_is_empty() {
    let o = pchart(&["verify", s(&data("no_queries.pchart"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 1, "{}", stdout(&o));
    let v = json("verify", &pchart(&["verify", "--json", s(&data("no_queries.pchart"))]));
    assert_eq!(v["queries"].as_array().unwrap().len(), 0);
}

#[test]
fn verify_hubble_has_cross_check() {
    let v = json("verify", &pchart(&["verify", "--json", s(&model("hubble.pchart"))]));
    let row = &v["queries"][0];
    assert_eq!(row["query"], "?P.min F<3650d");
    assert_eq!(row["result"]["bound"], 3650);
    assert_eq!(row["cross_check"]["agrees"], true, "{row:#}");
}

#[test]
fn verify_flags() {
    let strict = json("verify", &pchart(&["verify", "--json", s(&model("probe.pchart"))]));
    let loose = json("verify", &pchart(&["verify", "--json", "--bound-semantics", "non-strict", s(&model("probe.pchart"))]));
    assert_eq!(strict["queries"][0]["result"]["value"], 0.0);
    assert_eq!(loose["queries"][0]["result"]["value"], 1.0);
    let bad = pchart(&["verify", "--tolerance", "0", s(&model("probe.pchart"))]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn state_limit_from_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_pchart"))
        .args(["stats", s(&model("hubble.pchart"))])
        .env("PCHART_STATE_LIMIT", "100")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("limit of 100 states"), "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_pchart"))
        .args(["stats", s(&model("hubble.pchart"))])
        .env("PCHART_STATE_LIMIT", "lots")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_on_onoff() {
    let o = pchart(&["stats", s(&model("onoff.pchart"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().next(), Some("2 states, 2 transitions"));
    let v = json("stats", &pchart(&["stats", "--json", s(&model("probe.pchart"))]));
    assert_eq!(v["time_base"], "1s");
}

#[test]
fn export_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let pm = dir.path().join("sr.pm");
    let props = dir.path().join("sr.props");
    let o = pchart(&["export", s(&model("sender_receiver.pchart")), "--prism", s(&pm), "--props", s(&props)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let model_text = std::fs::read_to_string(&pm).unwrap();
    assert!(model_text.contains("module SenderReceiver"));
    let props_text = std::fs::read_to_string(&props).unwrap();
    for f in ["Pmin=? [ F (receiver=Off) ]", "R{\"tran\"}max=? [ F (receiver=Off) ]", "R{\"energy\"}max=? [ F (receiver=Off) ]", "P>0.5 [ F (receiver=Off) ]"] {
        assert!(props_text.lines().any(|l| l == f), "missing {f}\n{props_text}");
    }
    let v = json("export", &pchart(&["export", "--json", s(&model("probe.pchart")), "--prism", s(&pm), "--props", s(&props)]));
    assert_eq!(v["property_count"], 2);
}

#[test]
fn export_defaults_to_working_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pchart")).current_dir(dir.path()).args(["export", s(&model("chain.pchart"))]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("chain.pm").exists() && dir.path().join("chain.props").exists());
}

#[test]
fn codegen_onoff() {
    let o = pchart(&["codegen", s(&model("onoff.pchart"))]);
    assert_eq!(o.status.code(), Some(0));
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/onoff.c")).unwrap();
    assert_eq!(stdout(&o), golden);
    let v = json("codegen", &pchart(&["codegen", "--json", "--no-main", s(&model("onoff.pchart"))]));
    assert_eq!(v["entry_points"][0]["procedure"], "poweron");
    assert!(!v["source"].as_str().unwrap().contains("main"));
    let prob = pchart(&["codegen", s(&model("sender_receiver.pchart"))]);
    assert_eq!(prob.status.code(), Some(1));
    let v = json("codegen", &pchart(&["codegen", "--json", s(&model("sender_receiver.pchart"))]));
    assert_eq!(v["error"]["kind"], "diagnostics");
}

#[test]
fn codegen_to_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("pump.c");
    let h = dir.path().join("pump.h");
    let v = json("codegen", &pchart(&["codegen", "--json", "--assertions", s(&model("pump.pchart")), "--c", s(&c), "--header", s(&h)]));
    assert!(v.get("source").is_none());
    assert!(std::fs::read_to_string(&c).unwrap().contains("assert("));
    assert!(std::fs::read_to_string(&h).unwrap().contains("void init(void);"));
}

#[test]
fn simulate_is_reproducible() {
    let sr = model("sender_receiver.pchart");
    let args = ["simulate", "--json", s(&sr), "-n", "2000", "--seed", "5"];
    let a = json("simulate", &pchart(&args));
    let b = json("simulate", &pchart(&args));
    assert_eq!(a, b);
    assert_eq!(a["estimates"].as_array().unwrap().len(), 4);
    let r = json("simulate", &pchart(&["simulate", "--json", s(&model("sender_receiver.pchart")), "-n", "200", "--seed", "random"]));
    assert!(r["seed"].is_u64());
    let one = json(
        "simulate",
        &pchart(&["simulate", "--json", s(&model("chain.pchart")), "--query", "?P.min", "--state", "S3", "-n", "100000"]),
    );
    let m = one["estimates"][0]["mean"].as_f64().unwrap();
    let se = one["estimates"][0]["std_err"].as_f64().unwrap();
    assert!((m - 0.03).abs() <= 3.0 * se, "{one:#}");
    let few = pchart(&["simulate", s(&model("chain.pchart")), "-n", "10"]);
    assert_eq!(few.status.code(), Some(2));
    let bad_seed = pchart(&["simulate", s(&model("chain.pchart")), "--seed", "soon"]);
    assert_eq!(bad_seed.status.code(), Some(2));
}

#[test]
fn dump_round_trips() {
    let o = pchart(&["dump", s(&model("probe.pchart"))]);
    assert_eq!(o.status.code(), Some(0));
    let mdp = pchart_core::mdp::Mdp::from_dump(&stdout(&o)).unwrap();
    assert_eq!(mdp.num_states(), 4);
    let v = json("dump", &pchart(&["dump", "--json", s(&model("probe.pchart"))]));
    assert_eq!(v["states"], 4);
}

#[test]
fn fmt_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("pump.pchart");
    std::fs::copy(model("pump.pchart"), &f).unwrap();
    let first = pchart(&["fmt", "--write", s(&f)]);
    assert_eq!(first.status.code(), Some(0));
    let check = pchart(&["fmt", "--check", s(&f)]);
    assert_eq!(check.status.code(), Some(0), "{}", stdout(&check));
    let v = json("fmt", &pchart(&["fmt", "--json", s(&f)]));
    assert_eq!(v["changed"], false);
    let unformatted = pchart(&["fmt", "--check", s(&data("no_queries.pchart"))]);
    let again = pchart(&["fmt", s(&data("no_queries.pchart"))]);
    assert_eq!(unformatted.status.code(), Some(if stdout(&again) == std::fs::read_to_string(data("no_queries.pchart")).unwrap() { 0 } else { 1 }));
}

#[test]
fn schema_command_prints_each_schema() {
    for name in ["check", "verify", "export", "codegen", "simulate", "stats", "dump", "fmt"] {
        let o = pchart(&["schema", name]);
        assert_eq!(o.status.code(), Some(0));
        let v: Json = serde_json::from_str(&stdout(&o)).unwrap();
        assert!(v["title"].as_str().unwrap().contains(name));
    }
}

#[test]
fn help_exits_zero() {
    let o = pchart(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verify"));
}
