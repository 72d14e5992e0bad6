use std::path::Path;

use jointdiff::cli::run;
use jointdiff::manifest::RunManifest;

fn jd(args: &[&str]) -> i32 {
    run(std::iter::once("jointdiff").chain(args.iter().copied()).map(String::from))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.cfg");
    std::fs::write(
        &path,
        "[simulate]\nhorizon = 120\ncomplements = 2\n[sampler]\niterations = 200\nthin = 2\n[optimize]\npopulation = 10\ngenerations = 5\n",
    )
    .unwrap();
    path
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(jd(&["frobnicate"]), 2);
    assert_eq!(jd(&["fit"]), 2);
    assert_eq!(jd(&["simulate", "--seed", "notanumber"]), 2);
    assert_eq!(jd(&["--help"]), 0);
}

#[test]
fn runtime_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(jd(&["fit", "--panel", s(&missing), "--out", s(&dir.path().join("o"))]), 1);
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "[sampler]\niteratons = 10\n").unwrap();
    assert_eq!(jd(&["simulate", "--config", s(&bad), "--out", s(&dir.path().join("o2"))]), 1);
    assert_eq!(jd(&["report", "--run", s(dir.path()), "--out", s(&dir.path().join("o3"))]), 1);
}

#[test]
fn simulate_fit_compare_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d);
    let sim = d.join("sim");
    let fit = d.join("fit");
    assert_eq!(jd(&["simulate", "--config", s(&cfg), "--seed", "2", "--out", s(&sim)]), 0);
    for f in ["panel.json", "transforms.json", "truth.json"] {
        assert!(sim.join(f).exists(), "{f}");
    }
    let panel = sim.join("panel.json");
    assert_eq!(jd(&["fit", "--config", s(&cfg), "--panel", s(&panel), "--out", s(&fit), "--threads", "2"]), 0);

    let cmp = d.join("cmp");
    assert_eq!(
        jd(&[
            "compare",
            "--config",
            s(&cfg),
            "--panel",
            s(&panel),
            "--variants",
            "proposed,no_churn",
            "--out",
            s(&cmp)
        ]),
        0
    );
    let table = std::fs::read_to_string(cmp.join("variants.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "variant,dic,p_d,ll_at_mean");
    assert_eq!(lines.len(), 3);

    let rep = d.join("rep");
    assert_eq!(jd(&["report", "--run", s(&fit), "--panel", s(&panel), "--out", s(&rep)]), 0);
    let first = std::fs::read(rep.join("summary_platform.csv")).unwrap();
    let header = String::from_utf8_lossy(&first).lines().next().unwrap().to_string();
    assert_eq!(header, "parameter,estimate,sd,2.5th,97.5th");
    // rerunning the report over the same archive is idempotent
    assert_eq!(jd(&["report", "--run", s(&fit), "--panel", s(&panel), "--out", s(&rep)]), 0);
    assert_eq!(std::fs::read(rep.join("summary_platform.csv")).unwrap(), first);

    // one manifest line per artifact-producing run, appended
    let m = RunManifest::read_all(&rep).unwrap();
    assert_eq!(m.len(), 2);
    assert!(m.iter().all(|r| r.subcommand == "report"));
    assert_eq!(RunManifest::read_all(&fit).unwrap()[0].seed, 0);
}

#[test]
fn ingest_fit_forecast_on_bundled_fixture() {
    let raw = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/raw");
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d);
    let ing = d.join("ingest");
    assert_eq!(
        jd(&[
            "ingest",
            "--platform",
            s(&raw.join("platform.csv")),
            "--complements",
            s(&raw.join("complements.csv")),
            "--metadata",
            s(&raw.join("metadata.csv")),
            "--out",
            s(&ing),
        ]),
        0
    );
    let panel = ing.join("panel.json");
    let fit = d.join("fit");
    assert_eq!(jd(&["fit", "--config", s(&cfg), "--panel", s(&panel), "--out", s(&fit)]), 0);
    let fc = d.join("fc");
    assert_eq!(jd(&["forecast", "--run", s(&fit), "--panel", s(&panel), "--out", s(&fc)]), 0);
    let metrics = std::fs::read_to_string(fc.join("forecast_metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next().unwrap(), "series,mad,mse,rw_mad,rw_mse");
    assert_eq!(metrics.lines().count(), 1 + 1 + 3);
}

#[test]
fn schedule_comparison_from_csv() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/effort_schedules.csv");
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(jd(&["optimize", "--schedules", s(&fixture), "--out", s(dir.path())]), 0);
    let out = std::fs::read_to_string(dir.path().join("schedule_summary.csv")).unwrap();
    assert!(out.contains("441.56"), "{out}");
}
