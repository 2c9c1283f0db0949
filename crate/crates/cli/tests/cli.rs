use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;
use splatclimate::image_io::Image;
use splatclimate::scene::{load_scene, save_scene, CameraSpec, GaussianScene};
use splatclimate::{rasterize, RenderOptions};
use tempfile::TempDir;

const RES: &str = "32x24";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splatclimate"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_json(dir: &Path, name: &str, v: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, v.to_string()).unwrap();
    path
}

fn plane(half: f64, spacing: f64) -> serde_json::Value {
    json!({ "type": "plane", "center": [0.0, 0.0, 0.0], "normal": [0.0, 1.0, 0.0], "half_extent": [half, half],
            "spacing": spacing, "color": [0.45, 0.5, 0.35], "opacity": 0.95 })
}

fn scene_file(dir: &Path) -> PathBuf {
    let sphere = json!({ "type": "sphere", "center": [0.0, 0.5, 0.0], "radius": 0.5, "spacing": 0.12, "color": [0.7, 0.3, 0.2], "opacity": 0.95 });
    write_json(dir, "scene.json", json!({ "seed": 3, "primitives": [plane(1.5, 0.12), sphere] }))
}

fn orbit_camera(frames: usize) -> String {
    json!({ "orbit": { "type": "orbit", "target": [0.0, 0.3, 0.0], "radius": 3.5, "elevation": 30.0 }, "frames": frames }).to_string()
}

/// Camera looking straight down at the middle of a large plane, so every
/// pixel is covered.
fn top_down() -> String {
    json!({ "type": "look_at", "eye": [0.0, 1.2, 0.0], "target": [0.0, 0.0, 0.0], "up": [0.0, 0.0, 1.0], "fov_y": 40.0 }).to_string()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

#[test]
fn single_pose_without_effects() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let report = ok(&["render", "--scene", p(&scene_file(dir.path())), "--out", p(&out), "--resolution", RES]);
    assert_eq!(files(&out), ["pose000.png", "timings.txt"]);
    let img = Image::read(out.join("pose000.png")).unwrap();
    assert_eq!((img.width, img.height), (32, 24));
    let line = report.lines().find(|l| l.starts_with("frame=pose000 ")).unwrap();
    for key in ["style_ms=", "snow_prep_ms=", "raster_ms=", "total_ms="] {
        assert!(line.contains(key), "{line}");
    }
    assert!(!line.contains("smog_ms="), "no passes requested: {line}");
    assert_eq!(fs::read_to_string(out.join("timings.txt")).unwrap(), report);
}

#[test]
fn orbit_sweep_names_every_image() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let scene = scene_file(dir.path());
    let camera = orbit_camera(8);
    ok(&["render", "--scene", p(&scene), "--camera", &camera, "--sweep", "smog.density=0,0.05,0.1", "--out", p(&out), "--resolution", "16x12"]);
    let names = files(&out);
    assert_eq!(names.len(), 25);
    for pose in 0..8 {
        for v in ["0", "0.05", "0.1"] {
            let name = format!("pose{pose:03}_smog.density_{v}.png");
            assert!(names.contains(&name), "missing {name}");
        }
    }
    let clear = fs::read(out.join("pose002_smog.density_0.png")).unwrap();
    let hazy = fs::read(out.join("pose002_smog.density_0.1.png")).unwrap();
    assert_ne!(clear, hazy);
}

#[test]
fn snow_job_reports_preprocessing_separately() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let climate = write_json(dir.path(), "climate.json", json!({ "snow": { "thickness": 0.1 } }));
    let report = ok(&[
        "render", "--scene", p(&scene_file(dir.path())), "--climate", p(&climate), "--camera", &orbit_camera(2), "--out", p(&out),
        "--resolution", RES,
    ]);
    let prep: Vec<&str> = report.lines().filter(|l| l.starts_with("snow_prep ")).collect();
    assert_eq!(prep.len(), 1, "{report}");
    assert!(prep[0].contains("snow_prep_ms=") && prep[0].contains("count="), "{report}");
    let frames: Vec<&str> = report.lines().filter(|l| l.starts_with("frame=")).collect();
    assert_eq!(frames.len(), 2);
    assert!(frames.iter().all(|l| l.contains(" snow_ms=") && l.contains(" raster_ms=")), "{report}");
}

#[test]
fn identical_config_renders_identical_bytes() {
    let dir = TempDir::new().unwrap();
    scene_file(dir.path());
    write_json(
        dir.path(),
        "climate.json",
        json!({ "smog": { "density": 0.2 }, "water": { "origin": [0.0, 0.15, 0.0] }, "snow": { "thickness": 0.08 } }),
    );
    let config = dir.path().join("job.toml");
    let text = format!(
        "scene = \"scene.json\"\nclimate = \"climate.json\"\ncamera = '{}'\nresolution = \"{RES}\"\ntime = 0.7\n",
        orbit_camera(3)
    );
    fs::write(&config, text).unwrap();

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["--config", p(&config), "render", "--out", p(&a)]);
    ok(&["render", "--config", p(&config), "--out", p(&b)]);
    let names = files(&a);
    assert_eq!(names, files(&b));
    assert_eq!(names.iter().filter(|n| n.ends_with(".png")).count(), 3);
    for n in names.iter().filter(|n| n.ends_with(".png")) {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n} differs");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    scene_file(dir.path());
    let config = dir.path().join("job.toml");
    fs::write(&config, format!("scene = \"scene.json\"\nresolution = \"{RES}\"\nout = \"from_config\"\n")).unwrap();
    let out = dir.path().join("from_flag");
    ok(&["--config", p(&config), "render", "--resolution", "8x6", "--out", p(&out)]);
    assert!(!dir.path().join("from_config").exists());
    let img = Image::read(out.join("pose000.png")).unwrap();
    assert_eq!((img.width, img.height), (8, 6));

    fs::write(&config, "scene = \"scene.json\"\nbogus = 1\n").unwrap();
    let failed = run(&["--config", p(&config), "render", "--out", p(&out)]);
    assert!(!failed.status.success());
}

#[test]
fn failed_job_leaves_existing_outputs() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("pose000_smog.density_0.png"), b"previous").unwrap();
    let scene = scene_file(dir.path());
    for bad in [
        vec!["--sweep", "smog.density=0,-1"],
        vec!["--sweep", "smog.density="],
        vec!["--sweep", "smog.thickness=1"],
        vec!["--camera", "{\"type\":\"orbit\",\"target\":[0,0,0],\"radius\":0}"],
        vec!["--passes", "rain"],
    ] {
        let mut args = vec!["render", "--scene", p(&scene), "--out", p(&out), "--resolution", RES];
        args.extend(bad.iter().copied());
        let res = run(&args);
        assert!(!res.status.success(), "{bad:?} should fail");
        assert!(!res.stderr.is_empty());
    }
    assert_eq!(files(&out), ["pose000_smog.density_0.png"]);
    assert_eq!(fs::read(out.join("pose000_smog.density_0.png")).unwrap(), b"previous");

    let missing = run(&["render", "--scene", p(&dir.path().join("nope.ply")), "--out", p(&out)]);
    assert!(!missing.status.success());
}

fn plane_scene(dir: &Path) -> PathBuf {
    write_json(dir, "plane.json", json!({ "seed": 1, "primitives": [plane(2.0, 0.05)] }))
}

fn report_value(report: &str, key: &str) -> String {
    report.split_whitespace().find_map(|kv| kv.strip_prefix(&format!("{key}="))).unwrap_or_else(|| panic!("no {key} in {report}")).to_string()
}

fn opaque_means(scene: &GaussianScene, camera: &str) -> [f64; 3] {
    let spec: CameraSpec = serde_json::from_str(camera).unwrap();
    let fb = rasterize(scene, &spec.with_resolution(32, 24).build().unwrap(), &RenderOptions::default()).unwrap();
    let px: Vec<_> = (0..fb.len()).filter(|&i| fb.alpha_acc[i] >= 0.999).map(|i| fb.color[i]).collect();
    assert!(px.len() > 100);
    let m = splatclimate::image_io::channel_mean(&px);
    [m[0], m[1], m[2]]
}

/// Four differently colored quadrants, so content colors span all three
/// channels.
fn quadrant_scene(dir: &Path) -> PathBuf {
    let colors = [[0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6], [0.5, 0.5, 0.45]];
    let quads: Vec<_> = [[-0.6, -0.6], [0.6, -0.6], [-0.6, 0.6], [0.6, 0.6]]
        .iter()
        .zip(colors)
        .map(|(c, color)| {
            json!({ "type": "plane", "center": [c[0], 0.0, c[1]], "normal": [0.0, 1.0, 0.0], "half_extent": [0.6, 0.6],
                    "spacing": 0.05, "color": color, "opacity": 0.95 })
        })
        .collect();
    write_json(dir, "quads.json", json!({ "seed": 2, "primitives": quads }))
}

#[test]
fn style_from_own_render_is_near_identity() {
    let dir = TempDir::new().unwrap();
    let scene = quadrant_scene(dir.path());
    let frames = dir.path().join("frames");
    ok(&["render", "--scene", p(&scene), "--camera", &top_down(), "--out", p(&frames), "--resolution", RES]);
    let styled = dir.path().join("styled.ply");
    let report = ok(&[
        "style", "--scene", p(&scene), "--camera", &top_down(), "--resolution", RES, "--style", p(&frames.join("pose000.png")), "--out", p(&styled),
    ]);
    let rows: Vec<Vec<f64>> = report_value(&report, "matrix").split(';').map(|r| r.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 0.05, "M[{i}][{j}] = {v}\n{report}");
        }
    }
    let after: f64 = report_value(&report, "style_distance_after").parse().unwrap();
    assert!(after < 1e-2, "{report}");
    assert_eq!(load_scene(&styled).unwrap().len(), load_scene_json(&scene).len());
}

fn load_scene_json(path: &Path) -> GaussianScene {
    let spec = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    splatclimate::scene::synthetic::generate_synthetic_scene(&spec).unwrap().scene
}

#[test]
fn gray_world_style_equalizes_channel_means() {
    let dir = TempDir::new().unwrap();
    let scene = scene_file(dir.path());
    let mut style = Image::filled(16, 16, nalgebra::Vector3::zeros());
    for (i, px) in style.pixels.iter_mut().enumerate() {
        *px = nalgebra::Vector3::repeat(0.2 + 0.5 * (i % 16) as f64 / 15.0);
    }
    let style_path = dir.path().join("gray.png");
    style.write_png(&style_path).unwrap();
    let camera = orbit_camera(1);
    let cam_spec = json!({ "type": "orbit", "target": [0.0, 0.3, 0.0], "radius": 3.5, "elevation": 30.0, "width": 32, "height": 24 }).to_string();
    let styled = dir.path().join("styled.ply");
    ok(&["style", "--scene", p(&scene), "--camera", &camera, "--resolution", RES, "--style", p(&style_path), "--out", p(&styled)]);
    let m = opaque_means(&load_scene(&styled).unwrap(), &cam_spec);
    assert!((m[0] - m[1]).abs() < 1e-2 && (m[1] - m[2]).abs() < 1e-2, "{m:?}");
}

#[test]
fn factored_transform_matches_composed_matrix() {
    let dir = TempDir::new().unwrap();
    let scene = scene_file(dir.path());
    let p_f: Vec<f64> = (0..48).map(|i| if i % 17 == 0 { 1.0 } else { 0.01 * ((i * 7 % 11) as f64 - 5.0) }).collect();
    let t_f: Vec<f64> = (0..256).map(|i| if i % 17 == 0 { 0.9 } else { 0.0 }).collect();
    let q_f: Vec<f64> = (0..48).map(|i| if i % 4 == 0 { 1.0 } else { 0.02 * ((i * 5 % 7) as f64 - 3.0) }).collect();
    let bias = [0.01, -0.02, 0.03];
    let factored = write_json(dir.path(), "ptq.json", json!({ "P": p_f, "T": t_f, "Q": q_f, "bias": bias }));
    let t = splatclimate::style::load_transform(&factored).unwrap();
    let m = t.matrix;
    let flat: Vec<f64> = (0..3).flat_map(|r| (0..3).map(move |c| m[(r, c)])).collect();
    let composed = write_json(dir.path(), "m.json", json!({ "matrix": flat, "bias": bias }));

    let (a, b) = (dir.path().join("a.ply"), dir.path().join("b.ply"));
    ok(&["style", "--scene", p(&scene), "--transform", p(&factored), "--out", p(&a)]);
    ok(&["style", "--scene", p(&scene), "--transform", p(&composed), "--out", p(&b)]);
    let (a, b) = (load_scene(&a).unwrap(), load_scene(&b).unwrap());
    for (ga, gb) in a.gaussians().iter().zip(b.gaussians()) {
        for (ca, cb) in ga.sh.0.iter().zip(&gb.sh.0) {
            assert!((ca - cb).amax() < 1e-6);
        }
    }
}

#[test]
fn inverse_style_restores_scene_file() {
    let dir = TempDir::new().unwrap();
    let original = dir.path().join("orig.ply");
    save_scene(&load_scene_json(&scene_file(dir.path())), &original).unwrap();
    let t = write_json(dir.path(), "t.json", json!({ "matrix": [1.1, 0.05, 0.0, -0.03, 0.9, 0.02, 0.01, 0.0, 1.2], "bias": [0.02, 0.0, -0.05] }));
    let (styled, restored) = (dir.path().join("styled.ply"), dir.path().join("restored.ply"));
    let report = ok(&["style", "--scene", p(&original), "--transform", p(&t), "--out", p(&styled)]);
    assert!(report.contains("matrix=1.100000,0.050000,0.000000;"), "{report}");
    assert!(!report.contains("style_distance"), "no style image, no distance: {report}");
    ok(&["style", "--scene", p(&styled), "--transform", p(&t), "--inverse", "--out", p(&restored)]);
    let (a, b) = (load_scene(&original).unwrap(), load_scene(&restored).unwrap());
    assert_eq!(a.len(), b.len());
    let worst = a
        .gaussians()
        .iter()
        .zip(b.gaussians())
        .flat_map(|(ga, gb)| ga.sh.0.iter().zip(&gb.sh.0).map(|(x, y)| (x - y).amax()))
        .fold(0.0, f64::max);
    assert!(worst < 1e-5, "worst coefficient error {worst}");
}

#[test]
fn style_requires_an_input() {
    let dir = TempDir::new().unwrap();
    let res = run(&["style", "--scene", p(&scene_file(dir.path())), "--out", p(&dir.path().join("x.ply"))]);
    assert!(!res.status.success());
    assert!(!dir.path().join("x.ply").exists());
}

#[test]
fn snow_prep_plane_matches_lattice() {
    let dir = TempDir::new().unwrap();
    let scene = plane_scene(dir.path());
    let climate = write_json(dir.path(), "c.json", json!({ "snow": { "thickness": 0.1, "grid_spacing": 0.25 } }));
    let out = dir.path().join("snow.ply");
    let report = ok(&["snow-prep", "--scene", p(&scene), "--climate", p(&climate), "--out", p(&out)]);

    let b = load_scene_json(&scene).bounds();
    let per_axis = |lo: f64, hi: f64| ((hi - lo) / 0.25 + 1e-9).floor() as usize + 1;
    let expected = per_axis(b.min.x, b.max.x) * per_axis(b.min.z, b.max.z);
    assert_eq!(report_value(&report, "count"), expected.to_string(), "{report}");
    assert_eq!(report_value(&report, "rays"), expected.to_string());
    assert_eq!(load_scene(&out).unwrap().len(), expected);
    let dev: f64 = report_value(&report, "max_deviation").parse().unwrap();
    assert!(dev < 1e-2, "{report}");
}

#[test]
fn zero_thickness_writes_empty_placement() {
    let dir = TempDir::new().unwrap();
    let climate = write_json(dir.path(), "c.json", json!({ "snow": { "thickness": 0.0 } }));
    let out = dir.path().join("snow.ply");
    let report = ok(&["snow-prep", "--scene", p(&plane_scene(dir.path())), "--climate", p(&climate), "--out", p(&out)]);
    assert_eq!(report_value(&report, "count"), "0");
    assert!(load_scene(&out).unwrap().is_empty());
}

#[test]
fn snow_prep_with_floaters_against_ground_truth() {
    let dir = TempDir::new().unwrap();
    let floaters = json!({ "type": "floaters", "min": [-1.5, 0.4, -1.5], "max": [1.5, 1.5, 1.5], "count": 60, "radius": 0.08,
                           "opacity": 0.3, "color": [0.8, 0.8, 0.8] });
    let scene = write_json(dir.path(), "floaty.json", json!({ "seed": 11, "primitives": [plane(2.0, 0.05), floaters] }));
    let truth = write_json(dir.path(), "truth.json", json!({ "seed": 11, "primitives": [plane(2.0, 0.05)] }));
    let ply = dir.path().join("floaty.ply");
    save_scene(&load_scene_json(&scene), &ply).unwrap();
    let climate = write_json(dir.path(), "c.json", json!({ "snow": { "thickness": 0.1, "grid_spacing": 0.2 } }));
    let out = dir.path().join("snow.ply");
    let report = ok(&["snow-prep", "--scene", p(&ply), "--climate", p(&climate), "--ground-truth", p(&truth), "--out", p(&out)]);
    let mean: f64 = report_value(&report, "mean_deviation").parse().unwrap();
    assert!(mean <= 0.1, "{report}");
    assert_eq!(report_value(&report, "unmatched"), "0");
}

#[test]
fn bench_rows_per_resolution() {
    let dir = TempDir::new().unwrap();
    let report = ok(&["bench", "--scene", p(&scene_file(dir.path())), "--resolution", "16x12,24x16", "--passes", "smog,flood"]);
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 3, "{report}");
    assert!(lines[0].starts_with("gaussians="));
    assert!(lines[1].starts_with("resolution=16x12 runs=10 "));
    assert!(lines[2].starts_with("resolution=24x16 runs=10 "));
    let stages: Vec<&str> = lines[1].split_whitespace().skip(2).map(|kv| kv.split('=').next().unwrap()).collect();
    assert_eq!(stages, ["style_ms", "snow_prep_ms", "raster_ms", "flood_ms", "smog_ms", "total_ms"]);

    let res = run(&["bench", "--scene", p(&scene_file(dir.path())), "--runs", "3"]);
    assert!(!res.status.success());
}

#[test]
fn bench_empty_scene_still_reports() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.ply");
    save_scene(&GaussianScene::empty(), &empty).unwrap();
    let report = ok(&["bench", "--scene", p(&empty), "--resolution", "16x12"]);
    let row = report.lines().nth(1).unwrap();
    let raster: f64 = report_value(row, "raster_ms").parse().unwrap();
    assert!(raster < 50.0, "{row}");
    assert!(report.starts_with("gaussians=0 "));
}
