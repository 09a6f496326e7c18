use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

const GOLDEN: &str = "1.6180339887498949";

fn solenoid(args: &[&str], config: &str, out: &Path) -> i32 {
    let cfg = out.with_extension("json");
    fs::write(&cfg, config).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_solenoid"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "off")
        .status()
        .expect("binary runs");
    status.code().expect("exit code")
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

/// Report text up to the timings block, which is the last field.
fn deterministic_part(out: &Path) -> String {
    let text = fs::read_to_string(out.join("report.json")).unwrap();
    let cut = text.find("\"timings\"").expect("timings field present");
    text[..cut].to_string()
}

fn golden_config(radius: &str) -> String {
    format!(r#"{{"frame": [["1", "{GOLDEN}"]], "truncationRadius": "{radius}"}}"#)
}

#[test]
fn classify_golden_records_are_fibonacci_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("classify");
    assert_eq!(solenoid(&["classify"], &golden_config("60"), &out), 0);

    let mut rdr = csv::Reader::from_path(out.join("records.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["m1", "m2", "norm", "divisor", "isRecord", "isMinkowskiWitness"]);
    let modes: Vec<(i64, i64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    // Consecutive Fibonacci numbers F_j, F_{j+1} up to sign.
    let fib = [0i64, 1, 1, 2, 3, 5, 8, 13, 21, 34, 55];
    assert!(modes.len() >= 8, "{modes:?}");
    for (j, &(a, b)) in modes.iter().enumerate() {
        assert_eq!((a.abs(), b.abs()), (fib[j + 1], fib[j]), "{modes:?}");
    }

    let r = report(&out);
    assert_eq!(r["status"], "ok");
    let tau = r["results"]["estimate"]["tauHat"].as_f64().unwrap();
    assert!(tau <= 0.1, "τ̂ = {tau}");
    assert_eq!(r["results"]["convergentCrossCheck"]["agrees"], true);
}

#[test]
fn harmonic_golden_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("harmonic");
    assert_eq!(solenoid(&["harmonic"], &golden_config("30"), &out), 0);
    let r = report(&out);
    assert_eq!(r["results"]["harmonicDimensions"], serde_json::json!([1, 1]));
    assert_eq!(r["results"]["meanFreeKernelDimension"], 0);
    assert_eq!(r["warnings"], serde_json::json!([]));
    let spectrum = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(spectrum.starts_with("bin,lambdaLow,lambdaHigh,modeCount\n"));
    let counted: usize = spectrum
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    let total = r["results"]["modeCount"].as_u64().unwrap() as usize;
    assert_eq!(counted + 1, total, "every mode but m = 0 lands in a bin");
}

#[test]
fn rs_current_coordinate_form_matches_normalized_direction() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rs");
    let config = format!(
        r#"{{"frame": [["1", "{GOLDEN}"]], "truncationRadius": "8",
            "coordinateAxes": ["1"], "randomForms": "0", "resolution": "256"}}"#
    );
    assert_eq!(solenoid(&["rs-current"], &config, &out), 0);
    let r = report(&out);
    let form = &r["results"]["forms"][0];
    assert_eq!(form["form"], "dx1");
    let spectral = form["spectral"]["value"].as_f64().unwrap();
    let quadrature = form["quadrature"]["value"].as_f64().unwrap();
    let expected = 1.0 / (1.0 + 1.618_033_988_749_895f64.powi(2)).sqrt();
    assert!((spectral - expected).abs() < 1e-12);
    assert!((quadrature - spectral).abs() < 1e-5);
    assert_eq!(form["agrees"], true);
}

#[test]
fn witnesses_ratio_identity() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w");
    let config = format!(
        r#"{{"frame": [["1", "{GOLDEN}"]], "truncationRadius": "60", "witnessCount": "5"}}"#
    );
    assert_eq!(solenoid(&["witnesses"], &config, &out), 0);
    let r = report(&out);
    assert_eq!(r["results"]["ratioIdentityHolds"], true);
    let rows = fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(rows.lines().count(), 6);
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        r#"{{"frame": [["1", "{GOLDEN}"]], "truncationRadius": "40", "seed": "11", "decay": "4"}}"#
    );
    for sub in ["decompose", "cohomology", "classify"] {
        let a = dir.path().join(format!("{sub}-a"));
        let b = dir.path().join(format!("{sub}-b"));
        assert_eq!(solenoid(&[sub, "--threads", "1"], &config, &a), 0, "{sub}");
        assert_eq!(solenoid(&[sub, "--threads", "3"], &config, &b), 0, "{sub}");
        assert_eq!(deterministic_part(&a), deterministic_part(&b), "{sub}");
        for csv in ["records.csv", "spectrum.csv"] {
            let (pa, pb) = (a.join(csv), b.join(csv));
            assert_eq!(pa.exists(), pb.exists());
            if pa.exists() {
                assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap(), "{sub} {csv}");
            }
        }
    }
}

#[test]
fn seed_flag_overrides_config_and_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let config = golden_config("20");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(solenoid(&["decompose", "--seed", "1"], &config, &a), 0);
    assert_eq!(solenoid(&["decompose", "--seed", "2"], &config, &b), 0);
    assert_eq!(report(&a)["config"]["seed"], "1");
    assert_ne!(deterministic_part(&a), deterministic_part(&b));
}

#[test]
fn invalid_configuration_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    assert_eq!(solenoid(&["harmonic"], &golden_config("-1"), &out), 2);
    assert!(!out.join("report.json").exists());

    let unknown = format!(r#"{{"frame": [["1", "{GOLDEN}"]], "radius": "3"}}"#);
    assert_eq!(solenoid(&["harmonic"], &unknown, &out), 2);

    let square = r#"{"frame": [["1","0"],["0","1"]], "truncationRadius": "3"}"#;
    assert_eq!(solenoid(&["harmonic"], square, &out), 2);
}

#[test]
fn radius_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    assert_eq!(solenoid(&["harmonic", "--radius", "5"], &golden_config("-1"), &out), 0);
    assert_eq!(report(&out)["results"]["truncationRadius"], 5.0);
}

#[test]
fn computation_error_is_reported_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("err");
    let config = format!(
        r#"{{"frame": [["1", "{GOLDEN}"]], "truncationRadius": "10", "witnessCount": "40"}}"#
    );
    assert_eq!(solenoid(&["witnesses"], &config, &out), 3);
    let r = report(&out);
    assert_eq!(r["status"], "error");
    let msg = r["errors"][0].as_str().unwrap();
    assert!(msg.contains("insufficient witnesses"), "{msg}");
    assert!(!out.join("records.csv").exists());
}
