use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "\
seed = 4
epochs = 2
n = 6
d = 4
synth.num_users = 6
synth.weeks = 3
";

fn stan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stan"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("STAN_SEED")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = stan(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).map(str::trim))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

/// Synthesize then ingest; returns the dataset path and the synth output.
fn prepare(dir: &Path) -> (PathBuf, String) {
    fs::write(dir.join("small.cfg"), SMALL).unwrap();
    let synth = ok(dir, &["--config", "small.cfg", "--out", "runs", "synth"]);
    let raw = field(&synth, "wrote ").to_string();
    let ingest = ok(dir, &["--out", "small.ds", "ingest", &raw]);
    assert_eq!(field(&ingest, "skipped "), "0");
    assert_eq!(field(&ingest, "checkins "), field(&synth, "checkins "));
    assert_eq!(field(&ingest, "users "), field(&synth, "users "));
    (dir.join("small.ds"), synth)
}

#[test]
fn missing_input_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = stan(dir.path(), &["--out", "x.ds", "ingest", "does-not-exist.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does-not-exist.txt"));
    let out = stan(dir.path(), &["--dataset", "nope.ds", "stats"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "colour = blue\n").unwrap();
    let out = stan(dir.path(), &["--config", "bad.cfg", "synth"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn stats_split_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, _) = prepare(dir.path());
    let ds = ds.to_str().unwrap();
    let stats = ok(dir.path(), &["--config", "small.cfg", "--dataset", ds, "stats"]);
    let num = |k: &str| field(&stats, k).parse::<usize>().unwrap();
    let kept = num("users ") - num("dropped users ");
    assert_eq!(num("val "), kept);
    assert_eq!(num("test "), kept);
    // each kept user contributes (len - 3) training prefixes
    assert_eq!(num("train "), num("checkins ") - 3 * kept);
}

#[test]
fn training_is_reproducible_and_eval_matches() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, _) = prepare(dir.path());
    let ds = ds.to_str().unwrap();
    let args = ["--config", "small.cfg", "--dataset", ds, "--out", "runs", "train"];
    let a = ok(dir.path(), &args);
    let b = ok(dir.path(), &args);
    let run_a = PathBuf::from(field(&a, "run "));
    let run_b = PathBuf::from(field(&b, "run "));
    assert_ne!(run_a, run_b);
    let rep = |run: &Path| {
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join(run).join("report.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wall_clock_secs");
        v
    };
    assert_eq!(rep(&run_a), rep(&run_b));
    let ckpt = |run: &Path| fs::read(dir.path().join(run).join("checkpoint.stan")).unwrap();
    assert_eq!(ckpt(&run_a), ckpt(&run_b));
    assert!(!dir.path().join(&run_a).join("INCOMPLETE").exists());

    let run_a_str = run_a.to_str().unwrap();
    let e = ok(dir.path(), &["--dataset", ds, "--out", "runs", "eval", "--run", run_a_str]);
    let eval_dir = PathBuf::from(field(&e, "run "));
    let ev: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join(eval_dir).join("eval.json")).unwrap()).unwrap();
    assert_eq!(ev["recall"], rep(&run_a)["recall"]);

    let x = ok(dir.path(), &["--dataset", ds, "--out", "runs", "export-attention", "--run", run_a_str, "--user", "2"]);
    let xdir = dir.path().join(field(&x, "run "));
    let csv = fs::read_to_string(xdir.join("attention.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(xdir.join("attention.png").exists());
    let side: serde_json::Value = serde_json::from_slice(&fs::read(xdir.join("attention.json")).unwrap()).unwrap();
    assert_eq!(side["user_id"], 2);
}

#[test]
fn ablate_writes_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, _) = prepare(dir.path());
    let ds = ds.to_str().unwrap();
    let out = ok(
        dir.path(),
        &["--config", "small.cfg", "--dataset", ds, "--out", "runs", "--variant", "STAN,-TIM,-ALL", "ablate"],
    );
    let run = dir.path().join(field(&out, "run "));
    let rows: serde_json::Value = serde_json::from_slice(&fs::read(run.join("ablation.json")).unwrap()).unwrap();
    let names: Vec<&str> = rows.as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["STAN", "-TIM", "-ALL"]);
}

#[test]
fn flags_override_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_stan"))
        .args(["--config", "small.cfg", "--seed", "9", "--out", "runs", "synth"])
        .current_dir(dir.path())
        .env("STAN_SEED", "7")
        .env("STAN_SYNTH_NUM_USERS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(field(&text, "users "), "3");
    let run = dir.path().join(field(&text, "run "));
    assert!(run.file_name().unwrap().to_str().unwrap().starts_with("seed9-"));
}
