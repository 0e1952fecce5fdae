use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn li_qt(args: &[&str]) -> Output {
    li_qt_env(args, None)
}

fn li_qt_env(args: &[&str], seed_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_li-qt"));
    cmd.args(args).env_remove("LI_QT_SEED");
    if let Some(s) = seed_env {
        cmd.env("LI_QT_SEED", s);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn summary(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
#[allow(clippy::approx_constant)]
fn sg_run_matches_cosine() {
    let o = li_qt(&["sg", "run", "--n", "1000", "--seed", "7", "--theta", "1.0472"]);
    assert_eq!(code(&o), 0);
    let sum = summary(&o);
    let (e, se) = (sum["e_hat"].as_f64().unwrap(), sum["stderr"].as_f64().unwrap());
    assert!((e - 1.0472f64.cos()).abs() < 5.0 * se, "{e} ± {se}");
}

#[test]
fn check_fq_reports_max_relative() {
    let o = li_qt(&["check", "fq"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let max = summary(&o)["max_relative"].as_f64().unwrap();
    assert!(max < 1e-8);
}

#[test]
fn unknown_flag_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = li_qt(&["sg", "run", "--frobnicate", "--out", &s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
    assert!(!out.exists());
    assert_eq!(code(&li_qt(&["teleport"])), 2);
}

#[test]
fn invalid_values_exit_two() {
    assert_eq!(code(&li_qt(&["sg", "run", "--theta", "1", "--theta-grid", "4"])), 2);
    assert_eq!(code(&li_qt(&["sg", "run", "--a", "0,0,0"])), 2);
    assert_eq!(code(&li_qt(&["evolve", "--potential", "quartic"])), 2);
    assert_eq!(code(&li_qt(&["separate", "sg"])), 2);
}

#[test]
fn help_exits_zero() {
    assert_eq!(code(&li_qt(&["--help"])), 0);
}

#[test]
fn fit_pipeline_recovers_unit_winding() {
    let tmp = tempfile::tempdir().unwrap();
    let logs = tmp.path().join("logs");
    assert_eq!(
        code(&li_qt(&[
            "sg",
            "run",
            "--n",
            "50000",
            "--seed",
            "3",
            "--out",
            &s(&logs)
        ])),
        0
    );
    let o = li_qt(&["sg", "fit", &s(&logs), "--out", &s(&tmp.path().join("fit"))]);
    assert_eq!(code(&o), 0);
    let sum = summary(&o);
    assert_eq!(sum["winding"], 1);
    assert_eq!(sum["phase"], "zero");
    assert_eq!(sum["logs"], 16);
    // Analyzers confined to the x-z plane cannot determine the y component.
    let sep = li_qt(&[
        "separate",
        "sg",
        "--input",
        &s(&tmp.path().join("fit/observations.csv")),
    ]);
    assert_eq!(code(&sep), 2);
    assert!(String::from_utf8_lossy(&sep.stderr).contains("rank deficient"));
}

#[test]
fn relabelled_detectors_fit_phase_pi() {
    let tmp = tempfile::tempdir().unwrap();
    let logs = tmp.path().join("logs");
    assert_eq!(
        code(&li_qt(&[
            "sg",
            "run",
            "--n",
            "20000",
            "--sign",
            "-",
            "--out",
            &s(&logs)
        ])),
        0
    );
    let sum = summary(&li_qt(&["sg", "fit", &s(&logs)]));
    assert_eq!(sum["phase"], "pi");
}

#[test]
fn external_pairs_need_directions() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("lab.csv");
    // Perfect anticorrelation at a1 = a2.
    let mut text = String::from("x,y\n");
    for i in 0..400 {
        text.push_str(if i % 2 == 0 { "1,-1\n" } else { "-1,1\n" });
    }
    fs::write(&csv, text).unwrap();
    assert_eq!(code(&li_qt(&["eprb", "report", &s(&csv)])), 2);
    let o = li_qt(&["eprb", "report", &s(&csv), "--a1", "0,0,1", "--a2", "0,0,1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let row = &summary(&o)["logs"][0];
    assert_eq!(row["n"], 400);
    assert_eq!(row["xy_mean"].as_f64().unwrap(), -1.0);
    let test = li_qt(&["eprb", "test", "--input", &s(&csv), "--a1", "0,0,1", "--a2", "0,0,1"]);
    assert_eq!(code(&test), 0);
    let wrong = li_qt(&[
        "eprb",
        "test",
        "--input",
        &s(&csv),
        "--a1",
        "0,0,1",
        "--a2",
        "0,0,1",
        "--correlation-sign",
        "+",
    ]);
    assert_eq!(code(&wrong), 3);
}

#[test]
fn simulated_positive_source_fails_singlet_test() {
    let o = li_qt(&["eprb", "test", "--n", "20000", "--source-sign", "+"]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&li_qt(&["eprb", "test", "--n", "20000", "--trials", "5"])), 0);
}

#[test]
fn separation_exit_codes() {
    assert_eq!(code(&li_qt(&["separate", "sg", "--model", "quadratic"])), 3);
    assert_eq!(code(&li_qt(&["separate", "sg", "--model", "constant"])), 3);
    let o = li_qt(&["separate", "sg", "--model", "quadratic", "--assert-separable", "false"]);
    assert_eq!(code(&o), 0);
    assert_eq!(summary(&o)["status"], "non-separable");
    let o = li_qt(&["separate", "eprb", "--model", "singlet"]);
    assert_eq!(code(&o), 0);
    let state = &summary(&o)["state"];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((state[1][0].as_f64().unwrap().abs() - h).abs() < 1e-10);
    assert_eq!(code(&li_qt(&["separate", "eprb", "--model", "cubic"])), 3);
}

#[test]
fn separate_eprb_writes_operator_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sep");
    assert_eq!(
        code(&li_qt(&["separate", "eprb", "--model", "singlet", "--out", &s(&out)])),
        0
    );
    let rho: Value = serde_json::from_str(&fs::read_to_string(out.join("rho.json")).unwrap()).unwrap();
    assert_eq!(rho["dim"], 4);
    assert_eq!(rho["entries"].as_array().unwrap().len(), 16);
}

#[test]
fn config_file_values_and_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "schema_version = 1\nseed = 4\n[sg.run]\nn = 300\ntheta = 0.5\n").unwrap();
    let a = tmp.path().join("a");
    assert_eq!(code(&li_qt(&["--config", &s(&cfg), "sg", "run", "--out", &s(&a)])), 0);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["n"], 300);
    assert_eq!(manifest["config"]["seed"], 4);
    assert_eq!(manifest["config"]["theta"], 0.5);
    let o = li_qt(&["--config", &s(&cfg), "sg", "run", "--n", "500"]);
    assert_eq!(summary(&o)["events_per_setting"], 500);

    fs::write(&cfg, "schema_version = 1\n[sg.run]\nspeed = 3\n").unwrap();
    assert_eq!(code(&li_qt(&["--config", &s(&cfg), "sg", "run"])), 2);
    fs::write(&cfg, "schema_version = 2\n").unwrap();
    assert_eq!(code(&li_qt(&["--config", &s(&cfg), "sg", "run"])), 2);
}

#[test]
fn seed_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = |d: &Path| {
        vec![
            "sg".to_owned(),
            "run".into(),
            "--theta".into(),
            "1".into(),
            "--out".into(),
            s(d),
        ]
    };
    let a_args = args(&a);
    let b_args = args(&b);
    assert_eq!(
        code(&li_qt_env(
            &a_args.iter().map(String::as_str).collect::<Vec<_>>(),
            Some("99")
        )),
        0
    );
    let mut explicit: Vec<&str> = b_args.iter().map(String::as_str).collect();
    explicit.extend(["--seed", "99"]);
    assert_eq!(code(&li_qt(&explicit)), 0);
    assert_eq!(
        fs::read(a.join("events.csv")).unwrap(),
        fs::read(b.join("events.csv")).unwrap()
    );
    assert_eq!(code(&li_qt_env(&["sg", "run", "--theta", "1"], Some("seven"))), 2);
}

#[test]
fn report_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(
        code(&li_qt(&["check", "fisher", "--points", "50", "--out", &s(&out)])),
        0
    );
    assert_eq!(code(&li_qt(&["report", &s(&out)])), 0);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert_eq!(listed, ["fisher.csv", "summary.json"]);
    fs::write(out.join("fisher.csv"), "winding,theta,fisher\n").unwrap();
    let o = li_qt(&["report", &s(&out)]);
    assert_eq!(code(&o), 3);
    assert_eq!(summary(&o)["changed"][0], "fisher.csv");
    assert_eq!(code(&li_qt(&["report", &s(&tmp.path().join("missing"))])), 2);
}

#[test]
fn evolve_snapshots_and_tabulated_potential() {
    let tmp = tempfile::tempdir().unwrap();
    let harmonic = tmp.path().join("h");
    let common = [
        "evolve", "--grid", "8,256", "--dt", "0.01", "--steps", "200", "--stride", "100",
    ];
    let mut args = common.to_vec();
    let h = s(&harmonic);
    args.extend(["--out", &h]);
    let o = li_qt(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let snaps: Vec<_> = (0..3).map(|k| harmonic.join(format!("psi_{k:05}.csv"))).collect();
    assert!(snaps.iter().all(|p| p.exists()));
    let header = fs::read_to_string(&snaps[0]).unwrap();
    assert!(header.starts_with("x,re_psi,im_psi,P,S\n"));

    let table = tmp.path().join("v.csv");
    let mut text = String::from("x,V\n");
    for i in 0..=4000 {
        let x = -8.0 + 16.0 * i as f64 / 4000.0;
        text.push_str(&format!("{x},{}\n", 0.5 * x * x));
    }
    fs::write(&table, text).unwrap();
    let pot = format!("file:{}", s(&table));
    let mut args = common.to_vec();
    args.extend(["--potential", &pot, "--sigma", "0.7071067811865476"]);
    let o = li_qt(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let e_file = summary(&o)["final_energy"].as_f64().unwrap();
    let e_harm: Value = serde_json::from_str(&fs::read_to_string(harmonic.join("summary.json")).unwrap()).unwrap();
    let e_harm = e_harm["final_energy"].as_f64().unwrap();
    assert!((e_file - e_harm).abs() < 1e-4, "{e_file} vs {e_harm}");
}

#[test]
fn evolve_boundary_contact_is_contract_failure() {
    let o = li_qt(&[
        "evolve",
        "--potential",
        "free",
        "--grid",
        "5,128",
        "--p0",
        "3",
        "--steps",
        "2000",
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn madelung_check_passes() {
    let o = li_qt(&["check", "madelung"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = summary(&o)["continuity_ratio"].as_f64().unwrap();
    assert!((3.0..5.0).contains(&r));
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(
            code(&li_qt(&[
                "eprb",
                "run",
                "--n",
                "5000",
                "--theta-grid",
                "3",
                "--seed",
                "8",
                "--out",
                &s(d)
            ])),
            0
        );
    }
    for f in [
        "pairs_00.csv",
        "pairs_01.csv",
        "pairs_02.csv",
        "correlations.csv",
        "summary.json",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}
