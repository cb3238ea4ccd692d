use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_telegraph-spin"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).env_remove("TELEGRAPH_SPIN_THREADS").output().unwrap();
    out
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn header(csv: &str) -> &str {
    csv.lines().find(|l| !l.starts_with('#')).unwrap()
}

fn note(csv: &str, key: &str) -> String {
    let prefix = format!("# {key} = ");
    csv.lines()
        .find_map(|l| l.strip_prefix(&prefix))
        .unwrap_or_else(|| panic!("no note {key}"))
        .to_string()
}

fn data(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn golden_headers() {
    assert_eq!(header(&ok(&["decay", "--points", "3"])), "t_us,re,im,abs");
    assert_eq!(
        header(&ok(&["decay", "--engine", "mc", "--seed", "1", "--traj", "50", "--points", "3"])),
        "t_us,re,im,abs,se"
    );
    assert_eq!(
        header(&ok(&["decay", "--engine", "analytic,lindblad", "--points", "3"])),
        "engine,t_us,re,im,abs,se"
    );
    assert_eq!(
        header(&ok(&["sweep", "--taus-ns", "200"])),
        "tau_ns,t2_2lf_us,t2_3lf_dq_us,t2_3lf_sq_us,no_crossing"
    );
    assert_eq!(
        header(&ok(&["compare", "--engine", "analytic,lindblad", "--points", "3"])),
        "engine_a,engine_b,metric,value,tolerance,pass"
    );
    assert_eq!(
        header(&ok(&["traces", "--seed", "1", "--n-traces", "10"])),
        "t_us,population_difference"
    );
    assert_eq!(header(&ok(&["parse-seq", "--seq", "CPMG(4)"])), "severity,message");
}

#[test]
fn provenance_header() {
    let csv = ok(&["decay", "--points", "3"]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], format!("# telegraph-spin {}", env!("CARGO_PKG_VERSION")));
    assert_eq!(lines[1], "# command = decay");
    assert!(lines[2].starts_with("# config = {"));
}

#[test]
fn replay_reproduces_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let f = first.to_str().unwrap();
    ok(&[
        "decay", "--engine", "all", "--seed", "9", "--traj", "300", "--levels", "3", "--t1", "3", "--pulses", "40",
        "--points", "21", "--out", f,
    ]);
    let again = ok(&["decay", "--config", f]);
    let original = std::fs::read_to_string(&first).unwrap();
    assert_eq!(data(&again), data(&original));
    assert_eq!(again, original);

    let json = dir.path().join("first.json");
    let j = json.to_str().unwrap();
    ok(&["decay", "--config", f, "--format", "json", "--out", j]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 63);
    let replay = ok(&["decay", "--config", j, "--format", "csv"]);
    assert_eq!(data(&replay), data(&original));
}

#[test]
fn thread_count_does_not_change_output() {
    let args = ["decay", "--engine", "mc", "--seed", "4", "--traj", "3000", "--points", "11"];
    let a = bin().args(args).env("TELEGRAPH_SPIN_THREADS", "1").output().unwrap();
    let b = bin().args(args).env("TELEGRAPH_SPIN_THREADS", "3").output().unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn toml_config_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[model]\nlevels = 3\nt1 = 4300.0\n\n[grid]\npoints = 5\n").unwrap();
    let c = cfg.to_str().unwrap();
    let csv = ok(&["decay", "--config", c]);
    assert!(note(&csv, "config").contains("\"t1\":4300.0"));
    assert_eq!(data(&csv).len(), 5);
    let csv = ok(&["decay", "--config", c, "--t1", "100", "--points", "7"]);
    assert!(note(&csv, "config").contains("\"t1\":100.0"));
    assert_eq!(data(&csv).len(), 7);

    std::fs::write(&cfg, "[model]\nt2 = 1.0\n").unwrap();
    let out = run(&["decay", "--config", c]);
    assert!(!out.status.success());
}

#[test]
fn natural_three_level_decay_time() {
    let csv = ok(&["decay", "--levels", "3", "--t1", "4300", "--points", "401"]);
    let t: f64 = note(&csv, "t_1e_us.analytic").parse().unwrap();
    assert!((t / 6450.0 - 1.0).abs() < 0.01, "{t}");
}

#[test]
fn fit_attached_to_curve() {
    let csv = ok(&["decay", "--levels", "3", "--t1", "4300", "--points", "201", "--fit", "exp"]);
    let fit = note(&csv, "fit.analytic");
    assert!(fit.starts_with("model = exponential"), "{fit}");
}

#[test]
fn validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "[grid]\ntimes_us = []\n").unwrap();
    let out = run(&["decay", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty time grid"));
    let out = run(&["decay", "--t1=-2"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.t1"));
    let out = run(&["decay", "--engine", "mc"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("engine.seed"));
    let out = run(&["decay", "--times-us", "0,2,1"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly increasing"));
    let out = run(&["decay", "--format", "xml"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("output.format"));
}

#[test]
fn compare_exit_status() {
    let out = run(&["compare", "--engine", "analytic"]);
    assert_eq!(out.status.code(), Some(2));
    let args = ["compare", "--engine", "analytic,lindblad", "--levels", "3", "--t1", "2", "--pulses", "30"];
    let csv = ok(&args);
    assert!(data(&csv)[0].ends_with(",true"));
    let mut strict = args.to_vec();
    strict.extend(["--tol-abs", "1e-30"]);
    let out = run(&strict);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn compare_with_mc() {
    let csv = ok(&[
        "compare", "--engine", "all", "--seed", "2", "--traj", "4000", "--levels", "2", "--t1", "5", "--pulses", "50",
        "--points", "26",
    ]);
    let rows = data(&csv);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(",true")), "{rows:?}");
}

#[test]
fn sweep_anomaly() {
    let csv = ok(&["sweep", "--taus-ns", "200,600"]);
    let t2star: f64 = note(&csv, "t2star_2lf_us").parse().unwrap();
    let rows = data(&csv);
    assert_eq!(rows.len(), 2);
    let t2 = |r: &str| r.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert!((t2(rows[0]) / 71.0 - 1.0).abs() < 0.02);
    assert!(t2(rows[1]) < t2star);
    assert_eq!(data(&ok(&["sweep", "--taus-ns", "300"])).len(), 1);
}

#[test]
fn sweep_reports_no_crossing_as_null() {
    let csv = ok(&["sweep", "--t1", "1e9", "--taus-ns", "1"]);
    let row = data(&csv)[0].to_string();
    assert!(row.contains(",,") && row.contains("2lf"), "{row}");
}

#[test]
fn traces_round_trip_and_discards() {
    let dir = tempfile::tempdir().unwrap();
    let ens = dir.path().join("ens.jsonl");
    let e = ens.to_str().unwrap();
    let csv = ok(&[
        "traces", "--seed", "3", "--pulses", "500", "--tau-ns", "200", "--pulse-width-ns", "44", "--save", e,
    ]);
    let t1: f64 = note(&csv, "fitted_t1_us").parse().unwrap();
    assert!((9.5..=10.5).contains(&t1), "{t1}");
    assert!(note(&csv, "discarded").parse::<usize>().unwrap() > 0);
    let loaded = ok(&["traces", "--load", e]);
    assert_eq!(note(&loaded, "digest"), note(&csv, "digest"));

    let mut lines: Vec<String> = std::fs::read_to_string(&ens).unwrap().lines().map(String::from).collect();
    lines[4] = "{not json".into();
    std::fs::write(&ens, lines.join("\n")).unwrap();
    let out = run(&["traces", "--load", e]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn traces_need_a_seed() {
    let out = run(&["traces"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("engine.seed"));
}

#[test]
fn fit_single_and_joint() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, tt: f64, step: f64| {
        let p = dir.path().join(name);
        let mut s = String::from("# synthetic\nt_us,abs\n");
        for i in 0..40 {
            let t = i as f64 * step;
            s += &format!("{t},{}\n", (-t / tt).exp());
        }
        std::fs::write(&p, s).unwrap();
        p
    };
    let a = write("a.csv", 10.0, 1.0);
    let b = write("b.csv", 15.0, 1.5);
    let csv = ok(&["fit", "--input", a.to_str().unwrap()]);
    let row = data(&csv).into_iter().find(|r| r.starts_with("decay_time")).unwrap();
    let t: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((t - 10.0).abs() < 1e-6);
    let csv = ok(&["fit", "--input", a.to_str().unwrap(), "--joint", b.to_str().unwrap()]);
    assert_eq!(note(&csv, "best_fixed_model"), "fixed 1.5");
    assert_eq!(header(&csv), "model,ratio,t1,sigma_t1,sigma_ratio,mse,converged,error");
    let out = run(&["fit", "--input", a.to_str().unwrap(), "--column", "missing"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no column 'missing'"));
}

#[test]
fn fit_reads_decay_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    ok(&["decay", "--levels", "3", "--t1", "4300", "--points", "301", "--engine", "analytic,lindblad", "--out", p.to_str().unwrap()]);
    let csv = ok(&["fit", "--input", p.to_str().unwrap(), "--select-engine", "lindblad"]);
    assert_eq!(note(&csv, "n_points"), "301");
}

#[test]
fn parse_seq_reports() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("s.txt");
    let csv = ok(&[
        "parse-seq", "--seq", "KDDXY16", "--repeats", "500", "--pulse-width-ns", "44", "--schedule-out",
        sched.to_str().unwrap(),
    ]);
    assert_eq!(note(&csv, "pulses_per_pass"), "80");
    assert_eq!(note(&csv, "pulses"), "40000");
    assert!(Path::new(&sched).exists());

    let out = run(&["parse-seq", "--seq", "tau-(pi)_x-10ns-(pi)_y", "--pulse-width-ns", "44"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["parse-seq", "--seq", "XY4(("]);
    assert_eq!(out.status.code(), Some(1));
    let csv = ok(&["parse-seq", "--seq", "CPMG(4)", "--tau-ns", "2000", "--hyperfine-mhz", "2.16"]);
    assert!(data(&csv).iter().any(|r| r.starts_with("warning")));
}

#[test]
fn init_flag_takes_negative_values() {
    let csv = ok(&["decay", "--init", "-1", "--levels", "3", "--points", "3"]);
    assert!(note(&csv, "config").contains("\"init\":\"-1\""));
    let csv = ok(&["decay", "--init", "+1", "--points", "3", "--drive", "sq-", "--levels", "3"]);
    assert!(note(&csv, "config").contains("\"drive\":\"sq-\""));
}
