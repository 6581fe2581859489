use std::path::Path;
use std::process::{Command, Output};

use korovkin_core::Witness;

fn lab(args: &[&str]) -> Output {
    lab_env(args, &[])
}

fn lab_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_korovkin-lab"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn records(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes()).records().map(Result::unwrap).collect()
}

#[test]
fn integrate_sqrt_of_identity() {
    let o = lab(&["integrate", "--fn", "pr:1", "--cap", "sqrt", "--cells", "100000", "--domain", "0,1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let rows = records(&out);
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][0], "integral");
    let v: f64 = rows[0][1].parse().unwrap();
    assert!((v - 2.0 / 3.0).abs() < 1e-4);
    assert!(out.starts_with("x,value\n"));
}

#[test]
fn perturb_properties_name_alpha_two() {
    let o = lab(&["properties", "--op", "perturb:n=1", "--trials", "50", "--seed", "7"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("property,operator,trials,worst_margin,pass,witness_summary\n"));
    let rows = records(&out);
    let sl = rows.iter().find(|r| &r[0] == "sublinearity").unwrap();
    assert_eq!(&sl[4], "false");
    let w = Witness::parse_summary(&sl[5]).unwrap();
    assert_eq!(w.alpha, Some(2.0));
}

#[test]
fn every_witness_summary_reparses() {
    for op in ["perturb:n=2", "slide-trunc:r=-0.1,R=0.1", "bkc1:n=4,cap=pow:2"] {
        let o = lab(&["properties", "--op", op, "--trials", "20", "--seed", "1"]);
        assert!(o.status.success(), "{op}");
        for r in records(&stdout(&o)) {
            if !r[5].is_empty() {
                let w = Witness::parse_summary(&r[5]).unwrap();
                assert_eq!(w.summary(), &r[5]);
            }
        }
    }
}

#[test]
fn korovkin_bk1_is_confirmed() {
    let o = lab(&["korovkin", "--op", "bk1", "--domain", "cube1", "--ns", "10,50,200", "--mode", "pointwise"]);
    assert!(o.status.success());
    let rows = records(&stdout(&o));
    let last = rows.last().unwrap();
    assert_eq!(&last[1], "verdict:confirmed");
    // 4 test functions and 2 suite functions, 3 rows each
    assert_eq!(rows.len(), 6 * 3 + 1);
    assert!(rows[..18].iter().all(|r| &r[0] == "bk1"));
}

#[test]
fn strict_failed_verdict_exits_three() {
    let args = [
        "korovkin",
        "--op",
        "slide-trunc:r=-1,R=1,shrink",
        "--fn",
        "shift:-0.5:pr:1",
        "--ns",
        "10,50,250",
    ];
    let o = lab(&args);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict:counterexample-candidate"));
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(lab(&strict).status.code(), Some(3));
}

#[test]
fn exit_codes_for_parse_and_domain_errors() {
    let o = lab(&["apply", "--op", "bkc1:n=5,cup=sqrt", "--fn", "sq"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("column 10"), "{err}");
    assert_eq!(lab(&["apply", "--op", "bk1:n=3", "--fn", "pr:1", "--domain", "0,2"]).status.code(), Some(2));
    assert_eq!(lab(&["apply", "--op", "bk1", "--fn", "pr:1", "--ns", "5,3"]).status.code(), Some(1));
    assert_eq!(lab(&["apply", "--bogus"]).status.code(), Some(1));
    assert_eq!(lab(&["apply", "--op", "bkc2:n=300,cap=id", "--fn", "sq"]).status.code(), Some(2));
}

#[test]
fn output_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let o = lab_env(
            &["properties", "--op", "bkc1:n=9,cap=sqrt", "--trials", "40", "--seed", "3", "--out", out.to_str().unwrap()],
            &[("KOROVKIN_LAB_THREADS", threads)],
        );
        assert!(o.status.success());
        std::fs::read(out).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("4", "b.csv");
    let c = run("0", "c.csv");
    assert_eq!(a, b);
    assert_eq!(a, c);
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    write(&cfg, "cells = 4\n[apply]\nop = bk1:n=9\nfn = pr:1\n");
    let o = lab(&["apply", "--config", cfg.to_str().unwrap(), "--op", "bk1:n=3"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "x,value\n0.125,0.21875\n0.375,0.40625\n0.625,0.59375\n0.875,0.78125\n");

    write(&cfg, "[apply]\nop = bk1:n=9\nfn = step:0.5@0,x\n");
    let o = lab(&["apply", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("run.cfg:3:17"), "{err}");
}

#[test]
fn sweep_writes_one_file_per_section() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    write(
        &cfg,
        "seed = 5\n\n[moments]\ncommand = apply\nop = bk1:n=4\nfn = pr:1\ncells = 10\n\n\
         [scan]\ncommand = korovkin\nop = bk1\nns = 5,20\nmode = lp\np = 2\ncells = 200\nout = scan.csv\n",
    );
    let o = lab(&["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let moments = std::fs::read_to_string(dir.path().join("moments.csv")).unwrap();
    assert_eq!(moments.lines().count(), 11);
    let scan = std::fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(scan.starts_with("family,function,mode,n,error\n"));
    assert!(scan.contains("lp:p=2"));
}
