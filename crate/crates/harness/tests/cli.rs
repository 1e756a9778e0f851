use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_flashread"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn flashread")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("flashread-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = scratch("determinism");
    let cfg = write(
        &dir,
        "compare.json",
        r#"{"page": "worn", "trials": 60, "ldpc_trials": 5,
            "code": {"kind": "build", "n": 510, "col_weight": 3, "row_weight": 17, "seed": 2}}"#,
    );
    for cmd in [["simulate"].as_slice(), &["propagation"], &["compare", "--config", &cfg]] {
        let (a, b) = (dir.join(format!("{}-a", cmd[0])), dir.join(format!("{}-b", cmd[0])));
        for out in [&a, &b] {
            let mut args = cmd.to_vec();
            args.extend(["--seed", "11", "--trials", "40", "--out", s(out)]);
            ok(&run(&args));
        }
        let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert!(names.len() >= 2, "{names:?}");
        for n in names {
            assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?} differs");
        }
    }
    // a different seed changes the reads
    let c = dir.join("simulate-c");
    ok(&run(&["simulate", "--seed", "12", "--trials", "40", "--out", s(&c)]));
    assert_ne!(std::fs::read(c.join("reads.csv")).unwrap(), std::fs::read(dir.join("simulate-a/reads.csv")).unwrap());
}

#[test]
fn manifest_lists_output_hashes() {
    let dir = scratch("manifest");
    let out = dir.join("t1");
    ok(&run(&["table1", "--out", s(&out)]));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "table1");
    let entry = &m["outputs"][0];
    assert_eq!(entry["file"], "table1.csv");
    let bytes = std::fs::read(out.join("table1.csv")).unwrap();
    assert_eq!(entry["sha256"], flashread_harness::output::sha256_hex(&bytes));
    let csv = String::from_utf8(bytes).unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert!(csv.starts_with("p_e,alpha,gaussian,poisson,exact"));
}

#[test]
fn validation_errors_exit_nonzero() {
    let dir = scratch("invalid");
    let zero = write(&dir, "zero.json", r#"{"trials": 0}"#);
    let unknown = write(&dir, "unknown.json", r#"{"trails": 5}"#);
    let unsorted = write(&dir, "unsorted.json", r#"{"thresholds": [1.4, 1.2]}"#);
    for args in [
        vec!["simulate", "--config", zero.as_str()],
        vec!["simulate", "--config", unknown.as_str()],
        vec!["capacity", "--config", unsorted.as_str()],
        vec!["simulate", "--config", "/nonexistent/config.json"],
        vec!["policy", "show", "/nonexistent/policy.bin"],
    ] {
        let mut a = args.clone();
        a.extend(["--out", s(&dir)]);
        let a: Vec<&str> = if args[0] == "policy" { args.clone() } else { a };
        let out = run(&a);
        assert!(!out.status.success(), "{a:?} succeeded");
        assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    }
    assert!(!run(&["no-such-command"]).status.success());
}

#[test]
fn simulate_then_estimate() {
    let dir = scratch("estimate");
    let sim = dir.join("sim");
    let cfg = write(&dir, "sim.json", r#"{"read_noise": 0, "read_source": "analytic", "trials": 3}"#);
    ok(&run(&["simulate", "--config", &cfg, "--out", s(&sim)]));
    let est = dir.join("est");
    ok(&run(&["estimate", "--reads", s(&sim.join("reads.csv")), "--out", s(&est)]));
    let text = std::fs::read_to_string(est.join("estimates.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let mut n = 0;
    for r in rows.records() {
        let r = r.unwrap();
        assert_eq!(&r[6], "ok");
        let mu1: f64 = r[1].parse().unwrap();
        let sigma2: f64 = r[4].parse().unwrap();
        assert!((mu1 - 1.0).abs() < 2e-3, "{mu1}");
        assert!((sigma2 - 0.22).abs() < 5e-3, "{sigma2}");
        n += 1;
    }
    assert_eq!(n, 3);
}

#[test]
fn policy_build_show_run() {
    let dir = scratch("policy");
    let cfg = write(
        &dir,
        "build.json",
        r#"{"prior": {"mu1": {"lo": 0.9, "hi": 1.1, "step": 0.1},
                      "mu2": {"lo": 1.9, "hi": 2.1, "step": 0.1},
                      "sigma1": {"lo": 0.1, "hi": 0.14, "step": 0.02},
                      "sigma2": {"lo": 0.2, "hi": 0.24, "step": 0.02}},
            "threshold_range": [0.75, 2.15], "reward": "soft"}"#,
    );
    let build = dir.join("build");
    ok(&run(&["policy", "build", "--config", &cfg, "--out", s(&build)]));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(build.join("policy.json")).unwrap()).unwrap();
    assert_eq!(summary["prior_points"], 16);
    assert_eq!(summary["reward"], "soft");
    let policy = build.join("policy.bin");

    let show = run(&["policy", "show", s(&policy)]);
    ok(&show);
    let shown: serde_json::Value = serde_json::from_slice(&show.stdout).unwrap();
    assert_eq!(shown, summary);

    let out = dir.join("run");
    ok(&run(&["policy", "run", "--policy", s(&policy), "--trials", "5", "--out", s(&out)]));
    let text = std::fs::read_to_string(out.join("policy_run.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[0].starts_with("trial,t1,y1,t2,y2,t3,y3,t4,y4,mu1"));
    let t1 = summary["t1"].as_f64().unwrap();
    for l in &lines[1..] {
        let first: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(first, t1);
    }
}

#[test]
fn ldpc_build_and_decode() {
    let dir = scratch("ldpc");
    let cfg = write(&dir, "code.json", r#"{"n": 1020, "col_weight": 3, "row_weight": 17, "seed": 5}"#);
    let build = dir.join("build");
    ok(&run(&["ldpc", "build", "--config", &cfg, "--out", s(&build)]));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(build.join("code.json")).unwrap()).unwrap();
    assert_eq!(summary["n"], 1020);
    assert_eq!(summary["m"], 180);
    assert_eq!(summary["four_cycles"], 0);

    // all-zero codeword with one weak wrong bit
    let mut llrs = vec!["3.0".to_string(); 1020];
    llrs[7] = "-0.5".into();
    let llr = write(&dir, "llr.txt", &(String::from("# one LLR per line\n") + &llrs.join("\n")));
    let out = dir.join("dec");
    ok(&run(&["ldpc", "decode", "--code", s(&build.join("code.txt")), "--llr", &llr, "--out", s(&out)]));
    let d: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("decode.json")).unwrap()).unwrap();
    assert_eq!(d["converged"], true);
    assert!(d["bits"].as_array().unwrap().iter().all(|b| b == 0));

    let short = write(&dir, "short.txt", "1.0\n2.0\n");
    assert!(!run(&["ldpc", "decode", "--code", s(&build.join("code.txt")), "--llr", &short, "--out", s(&out)])
        .status
        .success());
}
