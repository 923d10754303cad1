use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use biphoton_cli::Scenario;
use num_complex::Complex64;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn biphoton(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biphoton"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(name: &str, out: &Path) {
    let path = scenarios().join(name);
    let o = biphoton(&["run", path.to_str().unwrap()], out);
    assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
}

fn columns(path: &Path) -> (String, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn fourier_scenario_records_the_slit_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    run_ok("fourier.toml", dir.path());
    let (header, rows) = columns(&dir.path().join("fourier.csv"));
    assert_eq!(header, "x2,conditional");
    assert_eq!(rows.len(), 256);

    let s = Scenario::load(&scenarios().join("fourier.toml")).unwrap();
    let t = s.thin.unwrap();
    let (n, dx) = (t.grid.n, t.grid.dx);
    let (lambda, f) = (2.0 * t.lambda_p, 0.1);
    let (w, sep) = (6.4e-5, 3.2e-4);
    let inside = |x: f64| ((x.abs() - 0.5 * sep).abs() <= 0.5 * w) as u8 as f64;
    let spectrum = |x2: f64| {
        let q = 2.0 * PI * x2 / (lambda * f);
        (0..n)
            .map(|k| {
                let x = (k as f64 - (n / 2) as f64) * dx;
                Complex64::from_polar(inside(x), -q * x)
            })
            .sum::<Complex64>()
            .norm_sqr()
    };
    let peak = rows.iter().map(|r| r[1]).fold(0.0, f64::max);
    let expect_peak = rows.iter().map(|r| spectrum(r[0])).fold(0.0, f64::max);
    for r in &rows {
        let expect = spectrum(r[0]) / expect_peak;
        assert!((r[1] / peak - expect).abs() < 1e-9, "x2 = {}: {} vs {expect}", r[0], r[1] / peak);
    }
}

#[test]
fn ghost_image_is_inverted_and_magnified() {
    let dir = tempfile::tempdir().unwrap();
    run_ok("ghost-image.toml", dir.path());
    let (_, rows) = columns(&dir.path().join("ghost-image.csv"));
    let peak = rows.iter().map(|r| r[1]).fold(0.0, f64::max);
    let lit: Vec<f64> = rows.iter().filter(|r| r[1] > 0.5 * peak).map(|r| r[0]).collect();
    // slits at ±45 µm, 30 µm wide, imaged with M = -2
    assert!(lit.iter().all(|x| (x.abs() - 90e-6).abs() <= 30e-6 + 3e-6), "{lit:?}");
    assert!(lit.iter().any(|&x| x < 0.0) && lit.iter().any(|&x| x > 0.0));
}

#[test]
fn map_mode_writes_a_documented_matrix() {
    let dir = tempfile::tempdir().unwrap();
    run_ok("pump-object.toml", dir.path());
    let text = std::fs::read_to_string(dir.path().join("pump-object.matrix.txt")).unwrap();
    let header: Vec<&str> = text.lines().take_while(|l| l.starts_with('#')).collect();
    assert_eq!(header[0], "# biphoton matrix v1");
    assert!(header.iter().any(|l| l.starts_with("# rows: x1, n = 128")));
    assert!(header.iter().any(|l| l.starts_with("# cols: x2, n = 128")));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body.len(), 128);
    assert!(body.iter().all(|l| l.split(' ').count() == 128));
}

#[test]
fn every_example_runs_and_repeats_byte_for_byte() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut names: Vec<String> = std::fs::read_dir(scenarios())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".toml"))
        .collect();
    names.sort();
    for name in &names {
        run_ok(name, a.path());
        run_ok(name, b.path());
    }
    let mut outputs = 0;
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
        outputs += 1;
    }
    assert_eq!(outputs, 2 * names.len());
}

#[test]
fn manifest_echoes_resolved_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenarios().join("resolution.toml");
    let o = biphoton(&["--seed", "42", "--grid-n", "200", "run", path.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: toml::Table = std::fs::read_to_string(dir.path().join("resolution.manifest.toml"))
        .unwrap()
        .parse()
        .unwrap();
    let r = manifest["scenario"]["resolution"].as_table().unwrap();
    let angle = r["cut_angle_deg"].as_float().unwrap();
    assert!((angle - 36.44).abs() < 0.5);
    for key in ["d_s", "d_i", "d2", "f", "f_number", "lambda_p", "length", "rho"] {
        assert!(r.contains_key(key), "{key} missing");
    }
    assert_eq!(r["grid_n"].as_integer(), Some(200));
    assert_eq!(manifest["run"]["seed"].as_integer(), Some(42));
    let derived = manifest["derived"].as_table().unwrap();
    for key in ["l_eq", "d1_modified", "x_c", "qmax", "fwhm", "convergence"] {
        assert!(derived.contains_key(key), "{key} missing");
    }
    // the echoed scenario runs again to the same data
    let again = dir.path().join("again.toml");
    let mut echoed = manifest["scenario"].as_table().unwrap().clone();
    echoed.insert("name".into(), toml::Value::from("again"));
    std::fs::write(&again, toml::to_string(&echoed).unwrap()).unwrap();
    let o = biphoton(&["run", again.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(dir.path().join("resolution.csv")).unwrap(),
        std::fs::read(dir.path().join("again.csv")).unwrap()
    );
}

#[test]
fn example_scenarios_round_trip() {
    for entry in std::fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        let s = Scenario::load(&path).unwrap();
        let once = s.to_toml();
        let reparsed = Scenario::parse(&once).unwrap();
        assert_eq!(reparsed, s, "{}", path.display());
        assert_eq!(reparsed.to_toml(), once, "{}", path.display());
    }
}

#[test]
fn mismatched_imaging_distances_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("ghost-image.toml"))
        .unwrap()
        .replace("d2 = 1.5e-2", "d2 = 1.6e-2");
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let o = biphoton(&["validate", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    for name in ["d1", "d2", "f ="] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn parse_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.toml");
    std::fs::write(&path, "name = \"x\"\n\n[thin]\nlamda_p = 3e-7\n").unwrap();
    let o = biphoton(&["validate", path.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4") && err.contains("lamda_p"), "{err}");
}

#[test]
fn physics_failures_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("coarse.toml");
    // a cutoff far inside the lens band: doubling it moves the width a lot
    std::fs::write(
        &path,
        "name = \"coarse\"\n\n[resolution]\nlambda_p = 325e-9\nlength = 1e-3\nf = 0.05\nf_number = 5.0\nqmax_scale = 0.05\n",
    )
    .unwrap();
    let o = biphoton(&["run", path.to_str().unwrap()], dir.path());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(2), "{err}");
    assert!(err.contains("qmax"), "{err}");
}

#[test]
fn solve_angle_prints_degrees() {
    let dir = tempfile::tempdir().unwrap();
    let o = biphoton(&["solve-angle"], dir.path());
    assert!(o.status.success());
    let deg: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!((deg - 36.44).abs() < 0.5);
    let o = biphoton(&["solve-angle", "--lambda-p", "1e-9"], dir.path());
    assert_ne!(o.status.code(), Some(0));
}
