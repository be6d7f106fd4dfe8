use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;

use mcmflow::config::Config;
use mcmflow::plot::Panel;
use mcmflow::runner::SERIES_HEADER;
use mcmflow_core::geometry::ContactAngle;
use mcmflow_core::radial::catenoid;

const CATENOID: &str = "[problem]\nkind = catenoid\nbeta = 0.5\nr_outer = 3.0\n\
                        [grid]\nn = 40\n\
                        [run]\nt_end = 0.02\nrecord_every = 5\nsnapshot_every = 100\nprobe_times = 0.01\n\
                        [output]\nname = cat\nplot = true\n";

const LENS: &str = "[problem]\nkind = lens\nbeta = 0.5\nradius = 1.0\n\
                    [grid]\nn = 24\n\
                    [run]\nt_end = 0.02\nsnapshot_every = 100\nprobe_times = 0.01\n\
                    [output]\nname = lens\n";

fn mcmflow(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcmflow")).args(args).env("MCMFLOW_OUT", out).output().expect("spawn mcmflow")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn invalid_beta_exits_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.ini", &LENS.replace("beta = 0.5", "beta = 1.5"));
    let o = mcmflow(tmp.path(), &["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("0 < beta < 1"), "{}", stderr(&o));
}

#[test]
fn verify_of_missing_run_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mcmflow(tmp.path(), &["verify", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn converge_needs_two_levels() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "lens.ini", LENS);
    let o = mcmflow(tmp.path(), &["converge", &cfg, "--levels", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn catenoid_run_verifies_and_plots_the_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "cat.ini", CATENOID);
    let o = mcmflow(tmp.path(), &["run", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = tmp.path().join("cat");

    let series = fs::read_to_string(dir.join("series.csv")).unwrap();
    assert_eq!(series.lines().next().unwrap(), SERIES_HEADER.join(","));
    assert!(dir.join("probe_00.json").exists());

    let o = mcmflow(tmp.path(), &["verify", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> =
        fs::read_to_string(dir.join("verify.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(lines.iter().any(|l| l["id"] == "trace_identity" && l["judged"] == true));

    // Every plotted point lies within half a pixel of the exact catenoid.
    let svg = fs::read_to_string(dir.join("profile_000000.svg")).unwrap();
    let panel = panel_of(&svg);
    let angle = ContactAngle::new(0.5).unwrap();
    let pts = polyline(&svg, "profile");
    assert_eq!(pts.len(), 40);
    for q in pts {
        let x = panel.from_px(q)[0];
        let exact = panel.to_px([x, catenoid(angle, x)]);
        assert!((exact[1] - q[1]).abs() <= 0.5, "{q:?} vs {exact:?}");
    }
}

#[test]
fn corrupted_snapshot_fails_trace_identity_first() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "lens.ini", LENS);
    assert!(mcmflow(tmp.path(), &["run", &cfg]).status.success());
    let dir = tmp.path().join("lens");
    let snap = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("snap_"))
        .max()
        .unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&snap).unwrap()).unwrap();
    let u = v["data"]["u"].as_array_mut().unwrap();
    u[3] = serde_json::json!(u[3].as_f64().unwrap() + 1e-2);
    fs::write(&snap, v.to_string()).unwrap();
    let o = mcmflow(tmp.path(), &["verify", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("trace_identity"), "{}", stderr(&o));
}

#[test]
fn triple_plot_mirrors_the_lens() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "lens.ini", LENS);
    assert!(mcmflow(tmp.path(), &["run", &cfg]).status.success());
    let dir = tmp.path().join("lens");
    let o = mcmflow(tmp.path(), &["plot", dir.to_str().unwrap(), "--triple"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.join("profile_000000.svg")).unwrap();
    let panel = panel_of(&svg);
    let prof = polyline(&svg, "profile");
    let mirror = polyline(&svg, "mirror");
    assert_eq!(prof.len(), mirror.len());
    for (p, m) in prof.iter().zip(&mirror) {
        let (a, b) = (panel.from_px(*p), panel.from_px(*m));
        assert!((a[0] - b[0]).abs() < 1e-2 && (a[1] + b[1]).abs() < 1e-2);
    }
    let base = polyline(&svg, "baseline");
    assert_eq!(base.len(), 2);
    assert!(panel.from_px(base[0])[1].abs() < 1e-2);
    assert!(dir.join("triple_000000.tj").exists());
}

#[test]
fn repeated_runs_write_identical_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "lens.ini", LENS);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(mcmflow(&a, &["run", &cfg]).status.success());
    assert!(mcmflow(&b, &["run", &cfg]).status.success());
    assert_eq!(fs::read(a.join("lens/series.csv")).unwrap(), fs::read(b.join("lens/series.csv")).unwrap());
}

#[test]
fn preset_print_is_a_valid_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mcmflow(tmp.path(), &["preset", "lens-prop125", "--print"]);
    assert!(o.status.success());
    let cfg = Config::parse(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg.beta, 0.6);
    assert!(fs::read_dir(tmp.path()).unwrap().next().is_none(), "--print must not run");
}

fn attr(tag: &str, name: &str) -> f64 {
    let key = format!("{name}=\"");
    let i = tag.find(&key).unwrap_or_else(|| panic!("no {name}")) + key.len();
    tag[i..i + tag[i..].find('"').unwrap()].parse().unwrap()
}

fn panel_of(svg: &str) -> Panel {
    let tag = svg.lines().find(|l| l.starts_with("<g class=\"panel\"")).unwrap();
    Panel {
        x0: attr(tag, "data-x0"),
        x1: attr(tag, "data-x1"),
        y0: attr(tag, "data-y0"),
        y1: attr(tag, "data-y1"),
        px: attr(tag, "data-px"),
        py: attr(tag, "data-py"),
        pw: attr(tag, "data-pw"),
        ph: attr(tag, "data-ph"),
    }
}

fn polyline(svg: &str, class: &str) -> Vec<[f64; 2]> {
    let tag = svg.lines().find(|l| l.contains(&format!("<polyline class=\"{class}\""))).unwrap();
    let i = tag.find("points=\"").unwrap() + 8;
    tag[i..i + tag[i..].find('"').unwrap()]
        .split_whitespace()
        .map(|p| {
            let (x, y) = p.split_once(',').unwrap();
            [x.parse().unwrap(), y.parse().unwrap()]
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beta_outside_unit_interval_is_rejected(beta in prop_oneof![-5.0f64..=0.0, 1.0f64..5.0]) {
        let text = LENS.replace("beta = 0.5", &format!("beta = {beta}"));
        prop_assert!(Config::parse(&text).is_err());
    }

    #[test]
    fn beta_inside_unit_interval_is_accepted(beta in 0.01f64..0.99) {
        let text = LENS.replace("beta = 0.5", &format!("beta = {beta}"));
        let cfg = Config::parse(&text).unwrap();
        prop_assert_eq!(cfg.beta, beta);
    }

    #[test]
    fn panel_maps_round_trip(x in -10.0f64..10.0, y in -10.0f64..10.0) {
        let p = Panel { x0: -10.0, x1: 10.0, y0: -10.0, y1: 10.0, px: 40.0, py: 40.0, pw: 720.0, ph: 520.0 };
        let back = p.from_px(p.to_px([x, y]));
        prop_assert!((back[0] - x).abs() < 1e-12 && (back[1] - y).abs() < 1e-12);
    }
}
