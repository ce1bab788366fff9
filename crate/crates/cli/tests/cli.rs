use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lanecov(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanecov"))
        .args(args)
        .env("LANECOV_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = lanecov(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn outcome(verdict_json: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(verdict_json).unwrap();
    v["outcome"].as_str().unwrap().to_string()
}

#[test]
fn stages_compose() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["generate", "--spec", "2,2->6,4"]);
    let trace = out.join("traces/c22_64.jsonl");
    assert!(trace.exists());

    let listed = ok(out, &["concretize", "--trace", trace.to_str().unwrap(), "--scripts"]);
    assert_eq!(listed.lines().count(), 6);

    let mut outcomes = Vec::new();
    for tag in ["behind", "level", "ahead"] {
        let scenario = out.join(format!("scenarios/c22_64_{tag}.json"));
        ok(out, &["simulate", "--scenario", scenario.to_str().unwrap(), "--agent", "faulty:1.0:0"]);
        let csv = out.join(format!("runs/c22_64_{tag}.csv"));
        let events = out.join(format!("runs/c22_64_{tag}.events.json"));
        let printed = ok(
            out,
            &["monitor", "--trace", csv.to_str().unwrap(), "--events", events.to_str().unwrap(), "--spec", "2,2->6,4"],
        );
        let json = printed.split_once('{').map(|(_, rest)| format!("{{{rest}")).unwrap();
        outcomes.push(outcome(&json));
        assert!(out.join(format!("verdicts/c22_64_{tag}.json")).exists());
    }
    assert!(outcomes.iter().any(|o| o == "CoverOkPropFail"), "{outcomes:?}");
}

#[test]
fn monitor_reads_foreign_csv_without_events() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("external.csv");
    // car1 sits 2 m ahead in the ego lane: a frontal collision at t = 0.
    let mut text = String::from("t,veh,x,y,lane,speed\n");
    for k in 0..3 {
        let t = k as f64 * 0.5;
        text += &format!("{t},ego,{},3.5,1,1\n{t},car1,{},3.5,1,1\n{t},car2,-30,7,2,1\n", 10.0 + t, 12.0 + t);
    }
    fs::write(&csv, text).unwrap();
    let printed = ok(dir.path(), &["monitor", "--trace", csv.to_str().unwrap(), "--spec", "2,2->6,4"]);
    let json = printed.split_once('{').map(|(_, rest)| format!("{{{rest}")).unwrap();
    assert_eq!(outcome(&json), "CoverFailPropFail");
    assert!(dir.path().join("verdicts/external.json").exists());
}

#[test]
fn campaign_writes_report_and_export_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let catalog = out.join("small.scn");
    fs::write(&catalog, "scenario eq: reach {car1@2, car2@2} then {car1@6, car2@4}\nscenario b: reach {car1@4, car2@5} then {car1@2, car2@2}\n")
        .unwrap();
    ok(out, &["campaign", "--catalog", catalog.to_str().unwrap(), "--agent", "faulty:1.0:0", "--seed", "42", "--jobs", "2"]);
    let report = out.join("report.json");
    let csv = fs::read_to_string(out.join("coverage.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(fs::read_to_string(out.join("verdicts.jsonl")).unwrap().lines().count(), 6);

    let exp = out.join("exp");
    ok(out, &["--out", exp.to_str().unwrap(), "export", "--report", report.to_str().unwrap(), "--format", "csv", "--format", "svg"]);
    assert_eq!(fs::read_to_string(exp.join("coverage.csv")).unwrap(), csv);
    assert!(fs::read_to_string(exp.join("coverage.svg")).unwrap().contains("<svg"));

    let strict = lanecov(
        &out.join("strict"),
        &["campaign", "--catalog", catalog.to_str().unwrap(), "--agent", "faulty:1.0:0", "--fail-on-violation"],
    );
    assert_eq!(strict.status.code(), Some(3));
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lanecov.toml");
    let from_cfg = dir.path().join("from_cfg");
    fs::write(&cfg, format!("output_dir = {:?}\n[search]\nmax_steps = 2\n", from_cfg.to_str().unwrap())).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lanecov"))
        .args(["--config", cfg.to_str().unwrap(), "generate", "--spec", "2,2->6,4"])
        .env_remove("LANECOV_OUT_DIR")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).lines().any(|l| l.starts_with("error[generate]")));
    assert!(from_cfg.join("traces").is_dir());

    ok(dir.path(), &["--config", cfg.to_str().unwrap(), "generate", "--spec", "2,2->6,4", "--max-steps", "30"]);
    assert!(dir.path().join("traces/c22_64.jsonl").exists());
}

#[test]
fn errors_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cases: [(&[&str], &str); 4] = [
        (&["monitor", "--trace", "missing.csv", "--spec", "2,2->6,4"], "error[monitor]"),
        (&["simulate", "--scenario", "missing.json"], "error[simulate]"),
        (&["campaign", "--agent", "human"], "error[config]"),
        (&["generate", "--spec", "9,9->1,1"], "error[generate]"),
    ];
    for (args, prefix) in cases {
        let o = lanecov(out, args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with(prefix), "{args:?}");
    }
    let bad_cfg = out.join("bad.toml");
    fs::write(&bad_cfg, "[model]\nmax_braking = 3\n").unwrap();
    let o = lanecov(out, &["--config", bad_cfg.to_str().unwrap(), "generate"]);
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[config]"));
}

#[test]
fn unknown_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["generate", "--spce", "2,2->6,4"][..], &["campaign", "--job", "2"], &["export", "--report", "r.json", "--format", "pdf"]] {
        let o = lanecov(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn help_lists_every_flag() {
    let dir = tempfile::tempdir().unwrap();
    let expected: [(&str, &[&str]); 6] = [
        ("generate", &["--spec", "--catalog", "--max-steps", "--config", "--out"]),
        ("concretize", &["--trace", "--scripts"]),
        ("simulate", &["--scenario", "--agent", "--seed"]),
        ("monitor", &["--trace", "--events", "--spec", "--offset"]),
        ("campaign", &["--catalog", "--agent", "--seed", "--jobs", "--svg", "--fail-on-violation"]),
        ("export", &["--report", "--format"]),
    ];
    for (cmd, flags) in expected {
        let help = ok(dir.path(), &[cmd, "--help"]);
        for f in flags {
            assert!(help.contains(f), "{cmd} --help lacks {f}");
        }
    }
    assert!(ok(dir.path(), &["--help"]).contains("LANECOV_OUT_DIR"));
}
