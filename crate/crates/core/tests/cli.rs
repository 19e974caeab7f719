use sbrana::cli::{main_with_args, render, run, CommandKind, RunConfig, EXIT_DATA, EXIT_GATE, EXIT_OK, EXIT_USAGE, SCHEMA};
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sbrana"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sbrana-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn chart_path(name: &str) -> String {
    format!("{}/charts/{name}.chart", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn check_passes_on_the_flat_torus_file() {
    let out = bin().args(["check", &chart_path("flat_torus_p2")]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["schema"], SCHEMA);
    assert_eq!(report["status"], "ok");
    assert!(String::from_utf8_lossy(&out.stderr).contains("-> ok"));
}

#[test]
fn broken_conjugation_names_the_table() {
    let src = std::fs::read_to_string(chart_path("complex_translation_p1")).unwrap();
    let broken: String = src
        .lines()
        .map(|l| if l.starts_with("G_1_0") { "G_1_0 = 0.3 + u0".to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    let path = tmp("broken.chart");
    std::fs::write(&path, broken).unwrap();
    let report_path = tmp("broken.json");
    let out = bin()
        .args(["check", path.to_str().unwrap(), "--out", report_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_GATE));
    assert!(String::from_utf8_lossy(&out.stderr).contains("christoffel"));
    // the report is written even on failure
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report_path).unwrap()).unwrap();
    assert_eq!(report["failing_table"], "christoffel");
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(main_with_args(["sbrana", "check", "/no/such/file.chart"]), EXIT_USAGE);
    assert_eq!(main_with_args(["sbrana", "check", "gallery:nonexistent"]), EXIT_USAGE);
    assert_eq!(main_with_args(["sbrana", "frobnicate"]), EXIT_USAGE);
    assert_eq!(main_with_args(["sbrana", "species", "gallery:flat_torus_p1", "--jet-order", "1"]), EXIT_USAGE);
    assert_eq!(main_with_args(["sbrana", "check", "gallery:flat_torus_p1", "--tol", "-1"]), EXIT_USAGE);
    assert_eq!(main_with_args(["sbrana", "deform", "gallery:flat_torus_p1", "--phi", "1,x"]), EXIT_USAGE);
    let out = bin().args(["check", "/no/such/file.chart"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
}

#[test]
fn malformed_chart_is_a_data_error() {
    let path = tmp("malformed.chart");
    std::fs::write(&path, "[meta]\np = 1\n[christoffel]\nG_0_1 = (u0 +\n").unwrap();
    let o = run(&RunConfig::new(CommandKind::Check, path.to_str().unwrap()));
    assert_eq!(o.code, EXIT_DATA, "{}", o.summary);
}

#[test]
fn species_of_gallery_charts() {
    for (name, species) in [("flat_torus_p2", 1), ("full_rank_p1", 3), ("second_species_p1", 2)] {
        let o = run(&RunConfig::new(CommandKind::Species, &format!("gallery:{name}")));
        assert_eq!(o.code, EXIT_OK, "{}", o.summary);
        assert_eq!(o.report["result"]["species"], species, "{name}");
    }
}

#[test]
fn moduli_of_the_flat_torus() {
    let o = run(&RunConfig::new(CommandKind::Moduli, "gallery:flat_torus_p1"));
    assert_eq!(o.code, EXIT_OK);
    let m = &o.report["result"]["moduli"]["description"];
    assert_eq!(m["dimension"], 1);
    assert_eq!(m["u0_components"], 2);
}

#[test]
fn deform_gate() {
    let mut cfg = RunConfig::new(CommandKind::Deform, "gallery:flat_torus_p1");
    cfg.phi = Some(vec![1.0.into(), (-2.0).into()]);
    let o = run(&cfg);
    assert_eq!(o.code, EXIT_OK, "{}", o.summary);
    assert_eq!(o.report["result"]["mu"], 0);
    // non-admissible tuple: sum equals -1 is violated
    cfg.phi = Some(vec![1.0.into(), 1.0.into()]);
    assert_eq!(run(&cfg).code, EXIT_GATE);
    // representative chosen from the moduli bucket of index 1
    cfg.phi = None;
    cfg.mu = Some(1);
    let o = run(&cfg);
    assert_eq!(o.code, EXIT_OK, "{}", o.summary);
    assert_eq!(o.report["result"]["mu"], 1);
}

#[test]
fn immerse_the_flat_torus() {
    let report = tmp("torus.json");
    let csv = tmp("torus.csv");
    let code = main_with_args([
        "sbrana",
        "immerse",
        "gallery:flat_torus_p1",
        "--phi",
        "1,-2",
        "--grid",
        "16",
        "--out",
        report.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert!(r["result"]["residuals"]["pullback"].as_f64().unwrap() < 1e-4);
    assert_eq!(r["result"]["signature"], "++++");
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("# ambient_dim=4 signature=++++ mu=0\nt0,t1,w0,x0,x1,x2,x3\n"));
    // 256 grid points times two fiber values
    assert_eq!(text.lines().count(), 2 + 512);
}

#[test]
fn immerse_gate_failure_exits_2() {
    let mut cfg = RunConfig::new(CommandKind::Immerse, "gallery:flat_torus_p1");
    cfg.phi = Some(vec![1.0.into(), (-2.0).into()]);
    cfg.grid = Some(8);
    cfg.tol = Some(1e-12);
    let o = run(&cfg);
    assert_eq!(o.code, EXIT_GATE);
    assert_eq!(o.report["status"], "gate-exceeded");
}

#[test]
fn curves_reports() {
    let o = run(&RunConfig::new(CommandKind::Curves, "gallery:curves_rotation"));
    assert_eq!(o.code, EXIT_OK);
    assert_eq!(o.report["headline"]["value"], 2.0);
    assert_eq!(o.report["result"]["split"]["ok"], false);
    let o = run(&RunConfig::new(CommandKind::Curves, "gallery:polar_pair"));
    let h = &o.report["result"]["honest_interval"]["interval"];
    assert!((h["lower"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!((h["upper"].as_f64().unwrap() - 4.0).abs() < 1e-6);
    // a chart without curves is a usage error
    assert_eq!(run(&RunConfig::new(CommandKind::Curves, "gallery:flat_torus_p1")).code, EXIT_USAGE);
}

#[test]
fn reports_are_deterministic() {
    let mut cfg = RunConfig::new(CommandKind::Moduli, "gallery:flat_torus_p2");
    cfg.seed = 7;
    let a = render(&run(&cfg).report);
    let b = render(&run(&cfg).report);
    assert_eq!(a, b);
    let x = bin().args(["species", "gallery:translation_p2", "--seed", "3"]).output().unwrap();
    let y = bin().args(["species", "gallery:translation_p2", "--seed", "3"]).output().unwrap();
    assert_eq!(x.stdout, y.stdout);
}

#[test]
fn gallery_listing() {
    let out = bin().arg("gallery").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("gallery:flat_torus_p3") && text.contains("gallery:polar_pair"));
}
