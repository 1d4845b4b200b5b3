use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gridfdi::cases;
use gridfdi::detection::DetectionMethod;
use gridfdi::error::Error;
use gridfdi::grid::build_network;
use gridfdi::scenario::files::{self, parse_case_files};
use gridfdi::scenario::{run_monte_carlo, run_scenario, AttackSpec, MeasurementSource, Scenario};

fn dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases/5bus")
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridfdi"))
        .args(args)
        .current_dir(dir())
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const FILES: [&str; 6] = [
    "--case",
    "network.json",
    "--meters",
    "meters.json",
    "--measurements",
    "measurements.json",
];

#[test]
fn shipped_files_match_builtin_case() {
    let d = dir();
    let (net, meters, market) = parse_case_files(
        &d.join("network.json"),
        &d.join("meters.json"),
        Some(&d.join("market.json")),
    )
    .unwrap();
    let (net0, meters0) = cases::five_bus_grid().unwrap();
    assert_eq!(net, net0);
    assert_eq!(meters, meters0);
    assert_eq!(market.unwrap(), cases::five_bus_dispatch_case().unwrap());
    let z = files::load_measurements(&d.join("measurements.json")).unwrap();
    assert_eq!(z.values().as_slice(), &cases::FIVE_BUS_MEASUREMENTS);
}

#[test]
fn every_shipped_scenario_loads() {
    for name in ["case1", "case2", "case3", "profit", "calibration"] {
        let s = Scenario::load(&dir().join(format!("{name}.json"))).unwrap();
        assert_eq!(s.meters.len(), 6, "{name}");
    }
}

#[test]
fn empty_file_is_a_parse_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("network.json");
    fs::write(&p, "").unwrap();
    match files::load_network(&p).unwrap_err() {
        Error::Parse { path, location, .. } => {
            assert_eq!(path, p);
            assert_eq!(location, "1:1");
        }
        e => panic!("{e}"),
    }
}

#[test]
fn unknown_bus_names_the_branch() {
    let mut spec = cases::five_bus_network_spec();
    spec.branches[5].to = 9;
    let err = build_network(&spec).unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err:?}");
    assert!(err.to_string().contains("branch 6 (4-9)"), "{err}");
}

#[test]
fn parse_errors_carry_line_and_column() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("meters.json");
    fs::write(
        &p,
        "{\n  \"meters\": [\n    {\"branch\": [1, 2], \"sigma\": \"x\"}\n  ]\n}\n",
    )
    .unwrap();
    let net = build_network(&cases::five_bus_network_spec()).unwrap();
    match files::load_meters(&p, &net).unwrap_err() {
        Error::Parse { location, .. } => assert!(location.starts_with("3:"), "{location}"),
        e => panic!("{e}"),
    }
}

#[test]
fn scenario_references_are_checked() {
    let tmp = tempfile::tempdir().unwrap();
    for f in ["network.json", "meters.json", "measurements.json"] {
        fs::copy(dir().join(f), tmp.path().join(f)).unwrap();
    }
    let write = |body: &str| {
        let p = tmp.path().join("s.json");
        fs::write(&p, body).unwrap();
        Scenario::load(&p)
    };
    let base = r#""network": "network.json", "meters": "meters.json", "measurements": {"file": "measurements.json"}"#;
    let err = write(&format!(
        r#"{{"name": "x", {base}, "attack": {{"gross_error": {{"meter": 7, "sigmas": 5}}}}}}"#
    ))
    .unwrap_err();
    assert!(err.to_string().contains("meter 7"), "{err}");
    let err = write(&format!(
        r#"{{"name": "x", {base}, "attack": {{"targeted": {{"pins": {{"1": 0.1}}}}}}}}"#
    ))
    .unwrap_err();
    assert!(err.to_string().contains("bus 1"), "{err}");
    let err = write(r#"{"name": "x", "network": "missing.json", "meters": "meters.json", "measurements": {"file": "measurements.json"}}"#)
        .unwrap_err();
    assert!(matches!(err, Error::Parse { .. }), "{err:?}");
    let err = write(&format!(r#"{{"name": "x", {base}, "colour": "red"}}"#)).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }), "{err:?}");
}

#[test]
fn case_verdicts() {
    let load = |n: &str| Scenario::load(&dir().join(n)).unwrap();
    let r1 = run_scenario(&load("case1.json")).unwrap();
    assert!(r1
        .evaluation
        .detections
        .iter()
        .all(|d| !d.bad_data_detected));

    let r2 = run_scenario(&load("case2.json")).unwrap();
    assert!(r2.evaluation.detections.iter().all(|d| d.bad_data_detected));
    assert_eq!(
        r2.detection(DetectionMethod::LargestNormalizedResidual)
            .unwrap()
            .suspect_meter,
        Some(2)
    );

    let r3 = run_scenario(&load("case3.json")).unwrap();
    assert!(r3
        .evaluation
        .detections
        .iter()
        .all(|d| !d.bad_data_detected));
    assert_eq!(r3.evaluation.stealth, Some(true));
    let shift = &r3.evaluation.operator.state.0 - &r3.evaluation.clean.state.0;
    match &r3.evaluation.injection {
        Some(gridfdi::scenario::Injection::Stealth(atk)) => {
            assert!((shift - &atk.c).amax() < 1e-12)
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn profit_scenario_lmp_ordering() {
    let r = run_scenario(&Scenario::load(&dir().join("profit.json")).unwrap()).unwrap();
    let mk = r.market.as_ref().unwrap();
    let lmp = &mk.after.lmp;
    assert!((lmp[2] - 15.0).abs() < 1e-9);
    assert!(lmp[3] > lmp[1] && lmp[1] > lmp[2] && lmp[4] > lmp[2] && lmp[0] > lmp[2]);
    assert!(mk.profit > 0.0);
    let text = r.to_text();
    assert!(text.contains("lmp[4] = 32.884615"), "{text}");
    assert!(text.contains("profit_per_h = 17.884615"), "{text}");
}

#[test]
fn stealth_attack_leaves_detection_rate_unchanged() {
    let mut attacked = Scenario::load(&dir().join("case3.json")).unwrap();
    attacked.measurements = MeasurementSource::Simulate {
        x_true: gridfdi::estimator::StateVector::from_slice(&[
            -0.027264, 0.007901, -0.036698, -0.043981,
        ]),
        seed: 0,
    };
    let mut clean = attacked.clone();
    clean.attack = AttackSpec::None;
    let a = run_monte_carlo(&attacked, 1000, 99).unwrap();
    let c = run_monte_carlo(&clean, 1000, 99).unwrap();
    assert_eq!(a.stealthy, 1000);
    for m in [
        DetectionMethod::ChiSquare,
        DetectionMethod::LargestNormalizedResidual,
    ] {
        assert_eq!(
            a.detector(m).unwrap().detections,
            c.detector(m).unwrap().detections,
            "{m}"
        );
    }
    assert!(c.any_detected > 0, "sweep should include some false alarms");
}

#[test]
fn monte_carlo_rejects_zero_trials() {
    let s = Scenario::load(&dir().join("case2.json")).unwrap();
    assert!(run_monte_carlo(&s, 0, 1).is_err());
    assert_eq!(
        run_monte_carlo(&s, 50, 1).unwrap(),
        run_monte_carlo(&s, 50, 1).unwrap()
    );
}

#[test]
fn stage_is_named_on_failure() {
    let mut s = Scenario::load(&dir().join("profit.json")).unwrap();
    let net = s.network.clone();
    // a huge shift drives perceived loads negative
    if let AttackSpec::Targeted { pins, .. } = &mut s.attack {
        let bus4 = net.state_index(gridfdi::grid::BusId(4)).unwrap();
        pins.iter_mut()
            .filter(|p| p.0 == bus4)
            .for_each(|p| p.1 = -0.5);
    }
    let err = run_scenario(&s).unwrap_err();
    assert!(
        err.to_string().starts_with("stage `market_after` failed"),
        "{err}"
    );
    assert_eq!(err.exit_code(), 2);
}

// ---- command line ----------------------------------------------------------

#[test]
fn cli_reports_are_byte_identical_across_runs() {
    for args in [
        vec!["scenario", "run", "case2.json", "--format", "csv"],
        vec!["scenario", "run", "profit.json"],
        vec!["montecarlo", "case3.json", "--trials", "200", "--seed", "8"],
    ] {
        let a = cli(&args);
        let b = cli(&args);
        assert!(a.status.success(), "{args:?}: {}", stderr(&a));
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn cli_csv_has_header_and_four_columns() {
    let out = cli(&[&["detect"], &FILES[..], &["--format", "csv"]].concat());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("stage,quantity,index,value"));
    for l in lines {
        assert_eq!(l.split(',').count(), 4, "{l}");
    }
    assert!(text.contains("detect,chi_square.detected,,false"));
}

#[test]
fn cli_subcommands_succeed() {
    let tmp = tempfile::tempdir().unwrap();
    let saved = tmp.path().join("atk.json");
    let report = tmp.path().join("report.txt");
    let saved_s = saved.to_str().unwrap();
    let report_s = report.to_str().unwrap();
    let runs: Vec<Vec<&str>> = vec![
        [&["estimate"], &FILES[..]].concat(),
        [
            &["detect"],
            &FILES[..],
            &["--method", "lnr", "--confidence", "0.95"],
        ]
        .concat(),
        [
            &["attack", "random"],
            &FILES[..],
            &[
                "--support",
                "1,2,3",
                "--seed",
                "4",
                "--save-attack",
                saved_s,
            ],
        ]
        .concat(),
        [
            &["attack", "targeted"],
            &FILES[..],
            &["--pin", "4=-0.01", "--out", report_s],
        ]
        .concat(),
        vec!["opf", "--case", "network.json", "--market", "market.json"],
        vec!["scenario", "run", "case1.json", "--confidence", "0.9"],
    ];
    for args in runs {
        let out = cli(&args);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
    }
    let atk = files::load_attack(&saved, 6, 4).unwrap();
    assert!(atk.support.iter().all(|&i| i < 3));
    assert!(fs::read_to_string(&report)
        .unwrap()
        .contains("stealth = true"));

    // replay the saved attack through a scenario
    for f in ["network.json", "meters.json", "measurements.json"] {
        fs::copy(dir().join(f), tmp.path().join(f)).unwrap();
    }
    let s = tmp.path().join("replay.json");
    fs::write(
        &s,
        r#"{"name": "replay", "network": "network.json", "meters": "meters.json",
            "measurements": {"file": "measurements.json"}, "attack": {"replay": "atk.json"}}"#,
    )
    .unwrap();
    let out = cli(&["scenario", "run", s.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("stealth = true"));
}

fn expect_error(args: &[&str], code: i32, kind: &str) {
    let out = cli(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", stderr(&out));
    let err = stderr(&out);
    let lines: Vec<_> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error[{kind}]: ")), "{err}");
}

#[test]
fn cli_error_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.json");
    fs::write(&empty, "").unwrap();
    let e = empty.to_str().unwrap();
    expect_error(
        &[
            "estimate",
            "--case",
            e,
            "--meters",
            "meters.json",
            "--measurements",
            "measurements.json",
        ],
        2,
        "parse",
    );
    expect_error(&["estimate", "--meters", "meters.json"], 2, "validation");
    expect_error(
        &[&["detect"], &FILES[..], &["--confidence", "1.5"]].concat(),
        2,
        "validation",
    );

    // bus 3 has no meter touching it
    let meters = tmp.path().join("meters.json");
    fs::write(
        &meters,
        r#"{"meters": [{"branch": [1, 2], "sigma": 0.01}, {"branch": [2, 4], "sigma": 0.01},
                       {"branch": [2, 5], "sigma": 0.01}, {"branch": [4, 5], "sigma": 0.01}]}"#,
    )
    .unwrap();
    let z = tmp.path().join("z.json");
    fs::write(&z, r#"{"values_pu": [0.9, 0.2, 0.2, 0.1]}"#).unwrap();
    expect_error(
        &[
            "estimate",
            "--case",
            "network.json",
            "--meters",
            meters.to_str().unwrap(),
            "--measurements",
            z.to_str().unwrap(),
        ],
        3,
        "unobservable",
    );

    expect_error(
        &[&["attack", "random"], &FILES[..], &["--support", "3"]].concat(),
        4,
        "infeasible_support",
    );

    let market = tmp.path().join("market.json");
    fs::write(
        &market,
        r#"{"generators": [{"bus": 1, "price": 10, "pmax": 50}], "loads": [{"bus": 2, "mw": 80}]}"#,
    )
    .unwrap();
    expect_error(
        &[
            "opf",
            "--case",
            "network.json",
            "--market",
            market.to_str().unwrap(),
        ],
        4,
        "infeasible_dispatch",
    );
}
