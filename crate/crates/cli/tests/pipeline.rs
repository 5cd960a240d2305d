//! End-to-end runs of the `sevlogit` binary: outputs, exit codes and flags.

use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn sevlogit(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sevlogit"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env_remove("SEVLOGIT_WORKERS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn ok(o: &Output) {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn write_json(path: &Path, v: &Value) {
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn model() -> Value {
    json!({
        "base": "possible_no",
        "constants": ["major", "minor"],
        "terms": [
            {"alternative": "major", "covariate": "x"},
            {"alternative": "minor", "covariate": "d"}
        ]
    })
}

/// Synthetic-data config over three segments; rural dark gets `dark_slope`
/// on x[major], the others 0.6.
fn synth_config(n: usize, dark_slope: f64) -> Value {
    json!({
        "input": "data/synthetic.csv",
        "output_dir": "out",
        "model": model(),
        "synth": {
            "n": n,
            "dgp": {
                "seed": 5,
                "model": model(),
                "parameters": {"entries": [
                    {"id": "const[major]", "value": -0.4},
                    {"id": "const[minor]", "value": -0.2},
                    {"id": "x[major]", "value": 0.6},
                    {"id": "d[minor]", "value": 0.5}
                ]},
                "covariates": [
                    {"name": "x", "kind": "normal", "mean": 0.0, "sd": 1.0},
                    {"name": "d", "kind": "indicator", "p": 0.4}
                ],
                "segments": [
                    {"segment": {"area": "rural", "lighting": "daylight"}, "weight": 2},
                    {"segment": {"area": "rural", "lighting": "dark"}, "weight": 1,
                     "overrides": [{"id": "x[major]", "value": dark_slope}]},
                    {"segment": {"area": "urban", "lighting": "daylight"}, "weight": 1}
                ]
            }
        }
    })
}

/// Raw crash file with KABCO letters, AADT to be logged, and a speed column.
fn write_raw_csv(path: &Path, n: usize, bad_row: bool, drop_minor_in: Option<&str>) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut s = String::from("sev,area_type,light,aadt,speed\n");
    let areas = ["rural", "urban"];
    let lights = ["daylight", "dark", "dark_lighted"];
    for i in 0..n {
        let area = areas[i % 2];
        let light = lights[(i / 2) % 3];
        let mut sev = ["K", "A", "B", "C", "O", "O"][rng.random_range(0..6)];
        if drop_minor_in == Some(light) && sev == "B" {
            sev = "O";
        }
        let aadt = rng.random_range(500.0..50_000.0);
        let speed = [25, 35, 45, 55, 65][rng.random_range(0..5)];
        s.push_str(&format!("{sev},{area},{light},{aadt:.0},{speed}\n"));
    }
    if bad_row {
        s.push_str("O,rural,daylight,not-a-number,55\n");
    }
    std::fs::write(path, s).unwrap();
}

fn raw_config() -> Value {
    let m = json!({
        "base": "possible_no",
        "constants": ["major", "minor"],
        "terms": [
            {"alternative": "major", "covariate": "ln_aadt"},
            {"alternative": "minor", "covariate": "high_speed"}
        ]
    });
    json!({
        "input": "crashes.csv",
        "output_dir": "out",
        "schema": {
            "columns": [
                {"name": "sev", "kind": "categorical"},
                {"name": "area_type", "kind": "categorical"},
                {"name": "light", "kind": "categorical"},
                {"name": "aadt", "kind": "numeric"},
                {"name": "speed", "kind": "numeric"}
            ],
            "severity_column": "sev",
            "area_column": "area_type",
            "lighting_column": "light",
            "derive": [
                {"output": "ln_aadt", "source": "aadt", "kind": "natural_log"},
                {"output": "high_speed", "source": "speed", "kind": "band", "lo": 50, "hi": 70}
            ]
        },
        "model": m
    })
}

#[test]
fn synth_is_byte_identical_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_json(&config, &synth_config(900, 0.6));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&sevlogit(&["synth", "--out", a.to_str().unwrap()], &config));
    ok(&sevlogit(&["synth", "--out", b.to_str().unwrap()], &config));
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let text = String::from_utf8(bytes).unwrap();
    assert_eq!(text.lines().count(), 901);
    assert!(text.starts_with("severity,area,lighting,x,d\n"));
}

#[test]
fn describe_marks_empty_segments() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_json(&config, &synth_config(600, 0.6));
    ok(&sevlogit(&["synth"], &config));
    ok(&sevlogit(&["describe"], &config));
    let md = std::fs::read_to_string(dir.path().join("out/describe.md")).unwrap();
    assert!(md.contains("No observations in this segment; table omitted."));
    let counts = std::fs::read_to_string(dir.path().join("out/segment_counts.csv")).unwrap();
    assert!(counts.lines().count() > 1);
}

#[test]
fn heterogeneous_segments_are_flagged_in_tests_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_json(&config, &synth_config(8_000, 1.6));
    ok(&sevlogit(&["synth"], &config));
    ok(&sevlogit(&["fit"], &config));
    ok(&sevlogit(&["tests"], &config));
    let md = std::fs::read_to_string(dir.path().join("out/tests.md")).unwrap();
    assert!(md.contains("LR > χ²"), "{md}");
    let partition = std::fs::read_to_string(dir.path().join("out/tests_partition.csv")).unwrap();
    let full = partition.lines().find(|l| l.starts_with("full,")).unwrap();
    assert!(full.contains("true"), "{full}");
}

#[test]
fn raw_file_with_transforms_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_json(&config, &raw_config());
    write_raw_csv(&dir.path().join("crashes.csv"), 1_200, false, None);
    for cmd in ["describe", "fit", "tests"] {
        ok(&sevlogit(&[cmd, "--workers", "2"], &config));
    }
    let out = dir.path().join("out");
    for f in [
        "describe.md",
        "coefficients.csv",
        "fits/full.json",
        "fit_rural-dark.md",
        "tests.md",
        "tests.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let fit: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("fits/urban-daylight.json")).unwrap()).unwrap();
    assert_eq!(fit["fit"]["n_obs"], 200);
    assert_eq!(fit["pooled"], false);
}

#[test]
fn strict_flag_turns_bad_rows_into_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_json(&config, &raw_config());
    write_raw_csv(&dir.path().join("crashes.csv"), 300, true, None);
    ok(&sevlogit(&["describe"], &config));
    let strict = sevlogit(&["describe", "--strict"], &config);
    assert_eq!(code(&strict), 2);
    assert!(String::from_utf8_lossy(&strict.stderr).contains("not-a-number"));
}

#[test]
fn exit_codes_follow_failure_kind() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");

    std::fs::write(&config, "{ not json").unwrap();
    assert_eq!(code(&sevlogit(&["describe"], &config)), 2);

    let mut unknown = raw_config();
    unknown["modle"] = json!(1);
    write_json(&config, &unknown);
    assert_eq!(code(&sevlogit(&["describe"], &config)), 2);

    let mut bad_term = raw_config();
    bad_term["model"]["terms"][0]["covariate"] = json!("no_such_column");
    write_json(&config, &bad_term);
    assert_eq!(code(&sevlogit(&["fit"], &config)), 2);

    // Input file absent.
    write_json(&config, &raw_config());
    assert_eq!(code(&sevlogit(&["fit"], &config)), 3);

    // Tests before any fit.
    write_raw_csv(&dir.path().join("crashes.csv"), 600, false, None);
    assert_eq!(code(&sevlogit(&["tests"], &config)), 3);

    // Output directory path is a regular file.
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    assert_eq!(
        code(&sevlogit(&["describe", "--out", blocker.to_str().unwrap()], &config)),
        4
    );

    // One segment never records a minor injury, so its three-class model cannot be fitted.
    write_raw_csv(&dir.path().join("crashes.csv"), 600, false, Some("dark"));
    let failed = sevlogit(&["fit"], &config);
    assert_eq!(code(&failed), 5);
    assert!(String::from_utf8_lossy(&failed.stderr).contains("dark"));

    assert_eq!(code(&sevlogit(&["fit", "--workers", "0"], &config)), 2);
}
