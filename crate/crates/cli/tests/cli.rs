use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_liouvtomo"));
    c.env_remove("LIOUVTOMO_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fig2a(samples: u64) -> Value {
    json!({
        "device": {"kind": "pia", "a_gain": 0.1940, "b_loss": 0.00945, "tau": 0.1, "dim": 48},
        "twin_beam": {"kappa2": 0.36, "eta_d": 0.8, "n_outcome_max": 12},
        "homodyne": {"eta_h": 0.85, "k_max": 9, "samples_per_state": samples, "blocks": 4},
        "reconstruction": {"size": 10, "guard": 2},
        "seed": 11
    })
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn outcome_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("outcome_"))
        .collect();
    v.sort();
    v
}

fn read_csv_matrix(path: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut cells = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        cells.push((f[0].parse::<usize>().unwrap(), f[1].parse::<usize>().unwrap(), f[2].parse::<f64>().unwrap()));
    }
    let n = cells.iter().map(|c| c.0).max().unwrap() + 1;
    let m = cells.iter().map(|c| c.1).max().unwrap() + 1;
    let mut out = vec![vec![0.0; m]; n];
    for (r, c, v) in cells {
        out[r][c] = v;
    }
    out
}

#[test]
fn simulate_writes_one_file_per_retained_outcome_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &fig2a(8_000));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["simulate", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let fa = outcome_files(&a);
    assert_eq!(fa.len(), 13);
    for (x, y) in fa.iter().zip(outcome_files(&b)) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(&y).unwrap(), "{}", x.display());
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &fig2a(2_000));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&a)]).status.success());
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&b), "--seed", "12"]).status.success());
    let x: Value = serde_json::from_str(&std::fs::read_to_string(a.join("outcome_00.json")).unwrap()).unwrap();
    let y: Value = serde_json::from_str(&std::fs::read_to_string(b.join("outcome_00.json")).unwrap()).unwrap();
    assert_ne!(x["config_hash"], y["config_hash"]);
    assert_ne!(x["estimate"]["r"], y["estimate"]["r"]);
}

#[test]
fn malformed_json_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\"device\": {\"kind\": \"pia\",").unwrap();
    let out = dir.path().join("out");
    for cmd in ["theory", "simulate"] {
        let o = run(&[cmd, "--config", s(&cfg), "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
        assert!(!out.exists());
    }
}

#[test]
fn missing_block_and_unknown_key_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = fig2a(100);
    v.as_object_mut().unwrap().remove("twin_beam");
    let cfg = write_config(dir.path(), "c.json", &v);
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("twin_beam"));

    let mut v = fig2a(100);
    v["homodyne"]["eta"] = json!(0.9);
    let cfg = write_config(dir.path(), "d.json", &v);
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta"));
}

#[test]
fn desk_scale_cap_needs_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &fig2a(1_000_000_000));
    let o = run(&["theory", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--paper-scale"));
    let o = run(&["theory", "--config", s(&cfg), "--out", s(&dir.path().join("o")), "--paper-scale"]);
    assert!(o.status.success());
}

#[test]
fn pia_theory_is_tridiagonal_with_zero_column_sums() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &fig2a(0));
    let out = dir.path().join("t");
    assert!(run(&["theory", "--config", s(&cfg), "--out", s(&out)]).status.success());
    let l = read_csv_matrix(&out.join("L_theory.csv"));
    let n = l.len();
    assert_eq!(n, 48);
    for (i, row) in l.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i.abs_diff(j) >= 2 {
                assert_eq!(*v, 0.0);
            }
        }
    }
    for j in 0..n - 1 {
        let sum: f64 = l.iter().map(|r| r[j]).sum();
        assert!(sum.abs() < 1e-12, "column {j}: {sum}");
    }
    assert!(out.join("G_theory.csv").exists());
}

#[test]
fn laser_without_coupling_is_binomial_loss() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "device": {"kind": "laser", "c_coop": 12, "n_sat": 7, "sigma0": 1, "f_ratio": 1, "gamma_cav": 1,
                   "t_star": 0.0115, "g_override": 0.0, "dim": 12},
        "twin_beam": {"kappa2": 0.4225, "eta_d": 0.8, "n_outcome_max": 5},
        "homodyne": {"eta_h": 0.85, "k_max": 5, "samples_per_state": 0, "blocks": 2},
        "reconstruction": {"size": 6, "guard": 1},
        "seed": 1
    });
    let cfg = write_config(dir.path(), "laser.json", &cfg);
    let out = dir.path().join("t");
    let o = run(&["theory", "--config", s(&cfg), "--out", s(&out), "--laser-variants"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let g = read_csv_matrix(&out.join("G_theory.csv"));
    let keep = (-0.0115f64).exp();
    for (k, row) in g.iter().enumerate() {
        for (m, v) in row.iter().enumerate() {
            let want = if k <= m {
                let c = (0..k).fold(1.0, |a, i| a * (m - i) as f64 / (i + 1) as f64);
                c * keep.powi(k as i32) * (1.0 - keep).powi((m - k) as i32)
            } else {
                0.0
            };
            assert!((v - want).abs() < 1e-8, "({k}, {m}): {v} vs {want}");
        }
    }
    for f in ["G_ode.csv", "L_ode.csv", "G_qjump.csv", "L_qjump.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn reconstruct_compare_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = fig2a(20_000);
    v["reconstruction"]["covariance"] = json!(true);
    let cfg = write_config(dir.path(), "c.json", &v);
    let data = dir.path().join("data");
    assert!(run(&["simulate", "--config", s(&cfg), "--out", s(&data), "--raw"]).status.success());
    assert!(data.join("raw.csv").exists());

    let rec = dir.path().join("rec");
    let o = run(&["reconstruct", "--config", s(&cfg), "--data", s(&data), "--out", s(&rec), "--workers", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(rec.join("report.json")).unwrap()).unwrap();
    let hash = report["config_hash"].as_str().unwrap().to_string();
    for f in ["G_hat.csv", "L_hat.csv", "L_theory.csv", "z.csv"] {
        assert!(std::fs::read_to_string(rec.join(f)).unwrap().contains(&hash), "{f}");
    }
    assert!(rec.join("timing.json").exists());
    assert!(report.get("seconds").is_none());

    // other worker count, same bytes
    let rec8 = dir.path().join("rec8");
    assert!(run(&["reconstruct", "--config", s(&cfg), "--data", s(&data), "--out", s(&rec8), "--workers", "8"]).status.success());
    assert_eq!(std::fs::read(rec.join("report.json")).unwrap(), std::fs::read(rec8.join("report.json")).unwrap());

    // raw quadratures alone give the same report
    let raw_only = dir.path().join("raw_only");
    std::fs::create_dir(&raw_only).unwrap();
    std::fs::copy(data.join("raw.csv"), raw_only.join("raw.csv")).unwrap();
    let rec_raw = dir.path().join("rec_raw");
    assert!(run(&["reconstruct", "--config", s(&cfg), "--data", s(&raw_only), "--out", s(&rec_raw)]).status.success());
    assert_eq!(std::fs::read(rec.join("report.json")).unwrap(), std::fs::read(rec_raw.join("report.json")).unwrap());

    let cmp = dir.path().join("cmp");
    let o = run(&["compare", "--report", s(&rec.join("report.json")), "--out", s(&cmp)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("within 3 sigma"));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(cmp.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["liouvillian"], report["summary"]);
    assert_eq!(summary["config_hash"].as_str(), Some(hash.as_str()));
    let o = run(&["compare", "--report", s(&rec.join("report.json")), "--theory", s(&rec.join("L_theory.csv")), "--out", s(&cmp)]);
    assert!(o.status.success());

    // missing outcome 5
    let gap = dir.path().join("gap");
    std::fs::create_dir(&gap).unwrap();
    for f in outcome_files(&data) {
        if !f.ends_with("outcome_05.json") {
            std::fs::copy(&f, gap.join(f.file_name().unwrap())).unwrap();
        }
    }
    let o = run(&["reconstruct", "--config", s(&cfg), "--data", s(&gap), "--out", s(&dir.path().join("r3"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains('5'));

    // a negative r_0(0) puts an eigenvalue of G-hat on the negative axis
    let broken = dir.path().join("broken");
    std::fs::create_dir(&broken).unwrap();
    for f in outcome_files(&data) {
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
        if f.ends_with("outcome_00.json") {
            let r0 = v["estimate"]["r"][0].as_f64().unwrap();
            v["estimate"]["r"][0] = json!(-r0);
            for b in v["estimate"]["block_r"].as_array_mut().unwrap() {
                b[0] = json!(-b[0].as_f64().unwrap());
            }
        }
        std::fs::write(broken.join(f.file_name().unwrap()), serde_json::to_string(&v).unwrap()).unwrap();
    }
    let mut strict = v.clone();
    strict["reconstruction"]["allow_fallback"] = json!(false);
    let strict_cfg = write_config(dir.path(), "strict.json", &strict);
    let o = run(&["reconstruct", "--config", s(&strict_cfg), "--data", s(&broken), "--out", s(&dir.path().join("r4"))]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["reconstruct", "--config", s(&cfg), "--data", s(&broken), "--out", s(&dir.path().join("r5"))]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("fallback"));
}

#[test]
fn workers_env_var_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &fig2a(1_000));
    let o = bin().args(["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]).env("LIOUVTOMO_WORKERS", "2").output().unwrap();
    assert!(o.status.success());
    let t: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("o/timing.json")).unwrap()).unwrap();
    assert_eq!(t["workers"], json!(2));
}

#[test]
fn patterns_csv_and_spot_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["patterns", "--n-max", "8", "--points", "11", "--out", s(dir.path())]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("patterns.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12);
    assert_eq!(lines[0].split(',').count(), 10);
    // f_0(0) = 2 from the closed form at the origin
    let mid: Vec<f64> = lines[6].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(mid[0], 0.0);
    assert!((mid[1] - 2.0).abs() < 1e-10, "{}", mid[1]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let vac: f64 = stdout.lines().next().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
    assert!((vac - 1.0).abs() < 1e-8);
    assert_eq!(run(&["patterns", "--points", "1", "--out", s(dir.path())]).status.code(), Some(2));
}
