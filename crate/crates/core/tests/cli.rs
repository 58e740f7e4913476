use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gft::metrics::{parse_key_values, parse_metrics};

fn gft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gft")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(text: &str, key: &str) -> String {
    parse_key_values(text)
        .into_iter()
        .find(|(k, _)| k == key)
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
        .1
}

fn write_config(dir: &Path, body: &str) -> String {
    let out = dir.join("run");
    let path = dir.join("run.cfg");
    fs::write(&path, format!("out_dir = {}\n{body}", out.display())).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = "\
# tiny hybrid run
arch = 8-6q2-2
dataset = synthetic:8,128,0.1,5
iterations = 40
batch_size = 16
seed = 9
eval_every = 10
";

#[test]
fn train_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = gft(&["train", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = dir.path().join("run");
    for f in ["config.resolved", "metrics.csv", "summary.txt", "checkpoint.bin"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let rows = parse_metrics(&fs::read_to_string(run.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 40);
    assert_eq!(rows.last().unwrap().t, 40);
    assert_eq!(stdout(&o), fs::read_to_string(run.join("summary.txt")).unwrap());
}

#[test]
fn summary_totals_match_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = gft(&["train", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = stdout(&o);
    let run = dir.path().join("run");
    let rows = parse_metrics(&fs::read_to_string(run.join("metrics.csv")).unwrap()).unwrap();

    let (fp, q, steps) = (12u64, 48u64, 40u64);
    assert_eq!(value(&summary, "fp_params"), fp.to_string());
    assert_eq!(value(&summary, "quantized_params"), q.to_string());
    assert_eq!(value(&summary, "total_bits"), (fp * 32 + q * 2).to_string());
    let flips: u64 = rows.iter().map(|r| r.realized_flips).sum();
    assert_eq!(value(&summary, "total_updates"), (steps * fp + flips).to_string());
    let energy: f64 = value(&summary, "total_energy_pj").parse().unwrap();
    let want = steps as f64 * (fp as f64 * 14.62 + q as f64 * 4.8);
    assert!((energy - want).abs() < 1e-9 * want, "{energy} vs {want}");
    assert_eq!(rows.last().unwrap().cumulative_energy_pj, energy);
}

#[test]
fn rerun_from_resolved_config_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    assert!(gft(&["train", &cfg]).status.success());
    let run = dir.path().join("run");
    let first = fs::read(run.join("metrics.csv")).unwrap();
    let resolved = run.join("config.resolved");
    let again = dir.path().join("again");
    let o = gft(&[
        "train",
        resolved.to_str().unwrap(),
        "--set",
        &format!("out_dir={}", again.display()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first, fs::read(again.join("metrics.csv")).unwrap());
    assert_eq!(fs::read(run.join("checkpoint.bin")).unwrap(), fs::read(again.join("checkpoint.bin")).unwrap());
}

#[test]
fn eval_reproduces_final_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = gft(&["train", &cfg]);
    assert!(o.status.success());
    let ck = dir.path().join("run/checkpoint.bin");
    let e = gft(&["eval", ck.to_str().unwrap(), "synthetic:8,128,0.1,5"]);
    assert!(e.status.success(), "{}", stderr(&e));
    assert_eq!(value(&stdout(&e), "accuracy"), value(&stdout(&o), "final_accuracy"));
    assert_eq!(value(&stdout(&e), "mean_loss"), value(&stdout(&o), "final_loss"));
    assert_eq!(value(&stdout(&e), "total"), "128");
}

#[test]
fn bad_inputs_fail_with_named_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);

    let o = gft(&["train", &cfg, "--set", "k0=1.5"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("k0"), "{}", stderr(&o));

    let o = gft(&["train", &cfg, "--set", "momentum=0.9"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("momentum"));

    let o = gft(&["train", &cfg, "--set", "epochs=2"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("epochs"));

    assert!(gft(&["train", &cfg]).status.success());
    let ck = dir.path().join("run/checkpoint.bin");
    let o = gft(&["eval", ck.to_str().unwrap(), "synthetic:4,16,0,1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("features"), "{}", stderr(&o));

    let mut bytes = fs::read(&ck).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    let corrupt = dir.path().join("corrupt.bin");
    fs::write(&corrupt, &bytes).unwrap();
    let o = gft(&["eval", corrupt.to_str().unwrap(), "synthetic:8,16,0,1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));

    fs::write(&corrupt, &bytes[..mid]).unwrap();
    let o = gft(&["eval", corrupt.to_str().unwrap(), "synthetic:8,16,0,1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));

    fs::write(&corrupt, b"not a checkpoint").unwrap();
    let o = gft(&["eval", corrupt.to_str().unwrap(), "synthetic:8,16,0,1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));
}

#[test]
fn energy_reports() {
    let o = gft(&["energy", "--fp-params", "53600000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let e: f64 = value(&out, "step_energy_pj").parse().unwrap();
    assert!((e - 7.836_32e8).abs() < 1e-3);
    assert_eq!(value(&out, "model_bits"), "1715200000");

    let o = gft(&["energy", "--q-params", "53600000", "--bits", "4"]);
    let out = stdout(&o);
    assert_eq!(value(&out, "model_bits"), "214400000");

    let o = gft(&["energy", "--q-params", "1000", "--bits", "2"]);
    let ratio: f64 = value(&stdout(&o), "ratio_vs_adamw").parse().unwrap();
    assert!((ratio - 4.8 / 14.62).abs() < 1e-12);

    let o = gft(&["energy", "--arch", "784-256q2-10", "--steps", "0"]);
    let out = stdout(&o);
    assert_eq!(value(&out, "total_energy_pj"), "0");
    assert_eq!(value(&out, "model_bits"), (784 * 256 * 2 + 2560 * 32).to_string());

    let o = gft(&["energy", "--q-params", "10", "--bits", "8"]);
    assert!(!o.status.success());
}

#[test]
fn hardness_commands() {
    let dir = tempfile::tempdir().unwrap();
    let one = dir.path().join("one.cnf");
    fs::write(&one, "c single clause\np cnf 3 1\n1 -2 3 0\n").unwrap();
    let o = gft(&["hardness", "verify", one.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "satisfiable"), "true");
    assert_eq!(value(&stdout(&o), "agree"), "true");

    let all = dir.path().join("all.cnf");
    let mut text = String::from("p cnf 3 8\n");
    for mask in 0..8 {
        let lits: Vec<String> = (1..=3)
            .map(|v| if mask >> (v - 1) & 1 == 1 { v.to_string() } else { format!("-{v}") })
            .collect();
        text.push_str(&format!("{} 0\n", lits.join(" ")));
    }
    fs::write(&all, text).unwrap();
    let o = gft(&["hardness", "decide", all.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(value(&stdout(&o), "satisfiable"), "false");
    assert_eq!(value(&stdout(&o), "separable"), "false");

    let o = gft(&["hardness", "reduce", one.to_str().unwrap()]);
    assert_eq!(stdout(&o), "x1,x2,x3,x4,y\n1,-1,1,2,1\n");

    let rep = dir.path().join("rep.cnf");
    fs::write(&rep, "p cnf 3 1\n1 1 2 0\n").unwrap();
    let o = gft(&["hardness", "reduce", rep.to_str().unwrap()]);
    assert!(!o.status.success());
    let o = gft(&["hardness", "reduce", rep.to_str().unwrap(), "--allow-repeats"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let bad = dir.path().join("bad.cnf");
    fs::write(&bad, "p cnf 3 1\n1 2 0\n").unwrap();
    let o = gft(&["hardness", "verify", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn gen_data_round_trips_through_hardness() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = dir.path().join("r.cnf");
    let o = gft(&["gen-data", "cnf", "--vars", "5", "--clauses", "7", "--seed", "2", "--out", cnf.to_str().unwrap()]);
    assert!(o.status.success());
    let o = gft(&["hardness", "verify", cnf.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let csv = dir.path().join("s.csv");
    let o = gft(&[
        "gen-data", "separable", "--d", "6", "--n", "20", "--margin", "0.2", "--seed", "4", "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let planted: Vec<f64> = value(&stdout(&o), "planted").split(',').map(|s| s.parse().unwrap()).collect();
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,x3,x4,x5,x6,y");
    let mut count = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let dot: f64 = v[..6].iter().zip(&planted).map(|(a, b)| a * b).sum();
        assert!(dot * v[6] > 0.0);
        count += 1;
    }
    assert_eq!(count, 20);
}
