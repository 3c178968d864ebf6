use std::path::Path;
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 11] = [
    "fetch",
    "ingest",
    "collocate",
    "flag-sweep",
    "flag",
    "degrade",
    "correct",
    "trend",
    "gam",
    "synth",
    "report",
];

fn driftwatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftwatch"))
        .args(args)
        .env_remove("SENSOR_API_KEY")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = driftwatch(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .next()
        .unwrap_or_default()
        .to_string()
}

fn small_fleet(dir: &Path) {
    let scenario = dir.join("scenario.json");
    std::fs::write(
        &scenario,
        r#"{"n_sensors": 6, "hours": 400, "indoor_every": 3,
            "injections": [{"mode": "channel_divergence", "sensors": [0, 1], "onset_hour": 300, "magnitude": 1.5}]}"#,
    )
    .unwrap();
    ok(&["synth", "--scenario", scenario.to_str().unwrap(), "--out", dir.join("fleet").to_str().unwrap()]);
}

#[test]
fn help_exits_zero_everywhere() {
    assert_eq!(driftwatch(&["--help"]).status.code(), Some(0));
    assert_eq!(driftwatch(&["--version"]).status.code(), Some(0));
    for sub in SUBCOMMANDS {
        let out = driftwatch(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub} --help");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn help_explains_defaults() {
    let text = String::from_utf8(driftwatch(&["flag", "--help"]).stdout).unwrap();
    assert!(text.contains("0.85"));
    let text = String::from_utf8(driftwatch(&["degrade", "--help"]).stdout).unwrap();
    assert!(text.contains("0.4") && text.contains("100"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(driftwatch(&["flag", "--bogus"]).status.code(), Some(1));
    assert_eq!(driftwatch(&["nope"]).status.code(), Some(1));
    assert_eq!(driftwatch(&[]).status.code(), Some(1));
    assert_eq!(driftwatch(&["ingest", "--raw", "x"]).status.code(), Some(1));
}

#[test]
fn missing_input_exits_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    let out = driftwatch(&[
        "ingest",
        "--raw",
        missing.to_str().unwrap(),
        "--sensors",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));

    let out = driftwatch(&["report", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.csv"));
}

#[test]
fn fetch_without_credentials_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = driftwatch(&[
        "fetch",
        "--source",
        "sensor_api",
        "--ids",
        "1",
        "--from",
        "2020-01-01T00:00:00Z",
        "--to",
        "2020-01-02T00:00:00Z",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("SENSOR_API_KEY"));
}

#[test]
fn staged_pipeline_produces_documented_files() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_fleet(d);
    let p = |s: &str| d.join(s).to_str().unwrap().to_string();

    ok(&["ingest", "--raw", &p("fleet/raw.csv"), "--sensors", &p("fleet/sensors.csv"), "--out", &p("work")]);
    assert!(header(&d.join("work/hourly.csv")).starts_with("sensor_id,hour,pm25_cf1_mean"));
    let qc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("work/qc_report.json")).unwrap()).unwrap();
    assert_eq!(qc["qc"]["input"], 6 * 400 * 4);

    ok(&[
        "collocate",
        "--hourly",
        &p("work"),
        "--monitors",
        &p("fleet/monitors.csv"),
        "--reference",
        &p("fleet/reference.csv"),
        "--out",
        &p("work"),
    ]);
    assert_eq!(
        header(&d.join("work/pairs.csv")),
        "sensor_id,monitor_id,distance_m,n_merged,dropped_reference,dropped_single_channel"
    );

    ok(&["flag-sweep", "--merged", &p("work"), "--grid-step", "0.05", "--out", &p("work/sweep.csv")]);
    assert!(header(&d.join("work/sweep.csv")).starts_with("x,r,nrmse,pct_flagged"));
    let sweep = std::fs::read_to_string(d.join("work/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 20);

    ok(&["flag", "--hourly", &p("work"), "--percentile", "0.85"]);
    let flagged = std::fs::read_to_string(d.join("work/flagged.csv")).unwrap();
    assert!(flagged.lines().next().unwrap().ends_with(",flag"));
    assert!(flagged.lines().skip(1).all(|l| l.ends_with(",0") || l.ends_with(",1")));

    ok(&["degrade", "--flagged", &p("work"), "--out", &p("work/profiles.csv")]);
    assert!(header(&d.join("work/profiles.csv"))
        .starts_with("sensor_id,degraded,qualifying_hours,lat,lon,climate_zone,location"));
    assert!(d.join("work/flag_rate.csv").exists() && d.join("work/contrast.json").exists());

    ok(&["correct", "--merged", &p("work"), "--model", "2", "--loso", "--out", &p("work/fit.json")]);
    assert_eq!(
        header(&d.join("work/errors.csv")),
        "sensor_id,hour,op_hour,corrected,ref,error,norm_error"
    );
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("work/fit.json")).unwrap()).unwrap();
    assert_eq!(fit["fit"]["coefficients"].as_array().unwrap().len(), 3);
    assert_eq!(fit["loso"]["n_fits"], 4);

    for (outcome, input) in [("pct_flagged", "work/flagged.csv"), ("correction_error", "work")] {
        let out = p(&format!("work/trend_{outcome}.csv"));
        ok(&["trend", "--outcome", outcome, "--input", &p(input), "--stratify", "location", "--out", &out]);
        assert!(header(Path::new(&out)).starts_with("outcome,stratum_type,stratum,n,intercept"));
    }

    ok(&[
        "gam",
        "--outcome",
        "correction_error",
        "--input",
        &p("work"),
        "--replicates",
        "10",
        "--seed",
        "42",
        "--out",
        &p("work/gam.json"),
    ]);
    let gam: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("work/gam.json")).unwrap()).unwrap();
    assert_eq!(gam["fit"]["grid"].as_array().unwrap().len(), 200);
    assert_eq!(gam["fit"]["bands"]["lower"].as_array().unwrap().len(), 200);
}

#[test]
fn report_manifest_lists_ten_parseable_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_fleet(d);
    std::fs::write(
        d.join("c.json"),
        r#"{"inputs": {"raw": "fleet/raw.csv", "sensors": "fleet/sensors.csv",
                       "monitors": "fleet/monitors.csv", "reference": "fleet/reference.csv"},
            "bootstrap": {"replicates": 10, "seed": 3}}"#,
    )
    .unwrap();
    ok(&["report", "--config", d.join("c.json").to_str().unwrap()]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("report/manifest.json")).unwrap()).unwrap();
    let artifacts = manifest["artifacts"].as_array().unwrap();
    assert_eq!(artifacts.len(), 10);
    for a in artifacts {
        let file = d.join("report").join(a["file"].as_str().unwrap());
        let text = std::fs::read_to_string(&file).unwrap();
        if file.extension().unwrap() == "json" {
            serde_json::from_str::<serde_json::Value>(&text).unwrap();
        } else {
            let mut reader = csv::Reader::from_reader(text.as_bytes());
            let rows = reader.records().collect::<Result<Vec<_>, _>>().unwrap();
            assert_eq!(rows.len() as u64, a["rows"].as_u64().unwrap(), "{}", file.display());
        }
    }
}
