use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybridmatch")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn set_iterations(path: &Path, n: usize) {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v["optimizer"]["max_iterations"] = n.into();
    fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

#[test]
fn synth_writes_shapes_and_configs() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&hm(&["synth", "cardioids", "--out", "data"], dir.path()));
    for f in ["cardioids_plain.json", "cardioids_hybrid.json", "template.curves", "target.curves"] {
        assert!(dir.path().join("data").join(f).is_file(), "{f} missing");
        assert!(stdout.contains(f));
    }
    ok(&hm(&["synth", "three_ellipsoids", "--out", "s"], dir.path()));
    assert!(dir.path().join("s/template.off").is_file());
    assert!(dir.path().join("s/surfaces_hybrid.json").is_file());
    assert!(!hm(&["synth", "moons"], dir.path()).status.success());
}

#[test]
fn register_cardioid_hybrid_writes_eleven_frames() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hm(&["synth", "cardioids", "--out", "."], dir.path()));
    let stdout = ok(&hm(&["register", "--config", "cardioids_hybrid.json", "--out", "run"], dir.path()));
    assert!(stdout.contains("cardioids_hybrid"));
    let run = dir.path().join("run");
    let frames: Vec<_> = fs::read_dir(run.join("frames")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(frames.len(), 11);
    assert!(run.join("frames/frame_0010.curves").is_file());
    assert!(run.join("grid/grid_0010.curves").is_file());
    let csv = fs::read_to_string(run.join("energy.csv")).unwrap();
    assert!(csv.starts_with("iter,kinetic,endpoint,total,grad_norm\n0,0,"));
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["frame_count"], 11);
    assert_eq!(result["min_component_distance"].as_array().unwrap().len(), 11);
    assert_eq!(result["config"]["metric"]["weight"], 300.0);
    assert!(result["final_distance"].as_f64().unwrap() < 0.01 * result["initial_distance"].as_f64().unwrap());
}

#[test]
fn rerun_reproduces_energy_log_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hm(&["synth", "nested_ellipses", "--out", "."], dir.path()));
    set_iterations(&dir.path().join("ellipses_rot.json"), 25);
    ok(&hm(&["register", "--config", "ellipses_rot.json", "--out", "a"], dir.path()));
    ok(&hm(&["register", "--config", "ellipses_rot.json", "--out", "b"], dir.path()));
    let a = fs::read(dir.path().join("a/energy.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/energy.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 27);
    assert_eq!(fs::read(dir.path().join("a/frames/frame_0010.curves")).unwrap(), fs::read(dir.path().join("b/frames/frame_0010.curves")).unwrap());
}

#[test]
fn file_overrides_and_backend_flag() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hm(&["synth", "cardioids", "--out", "."], dir.path()));
    set_iterations(&dir.path().join("cardioids_plain.json"), 2);
    // registering the target onto itself converges immediately
    let stdout = ok(&hm(
        &["register", "--config", "cardioids_plain.json", "--template", "target.curves", "--target", "target.curves", "--backend", "precond", "--out", "self"],
        dir.path(),
    ));
    assert!(stdout.contains("Converged after 0 iterations"), "{stdout}");
    let result: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("self/result.json")).unwrap()).unwrap();
    assert_eq!(result["config"]["optimizer"]["backend"], "precond");
    assert!(!hm(&["register", "--config", "missing.json"], dir.path()).status.success());
    assert!(!hm(&["register", "--preset", "cardioids_plain", "--backend", "newton"], dir.path()).status.success());
}

#[test]
fn flow_grid_redraws_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(&hm(&["synth", "half_circles", "--out", "."], dir.path()));
    set_iterations(&dir.path().join("half_circles_plain.json"), 3);
    ok(&hm(&["register", "--config", "half_circles_plain.json", "--out", "run"], dir.path()));
    let before = fs::read(dir.path().join("run/grid/grid_0007.curves")).unwrap();
    let stdout = ok(&hm(&["flow-grid", "run", "--resolution", "21"], dir.path()));
    assert!(stdout.contains("wrote 11 grid frames"));
    assert_eq!(fs::read(dir.path().join("run/grid/grid_0007.curves")).unwrap(), before);
    ok(&hm(&["flow-grid", "run", "--resolution", "4"], dir.path()));
    let g: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run/grid/grid_0007.curves")).unwrap()).unwrap();
    assert_eq!(g["curves"].as_array().unwrap().len(), 8);
}

#[test]
fn eval_norm_on_a_square() {
    let dir = tempfile::tempdir().unwrap();
    let square = r#"{"curves":[{"closed":true,"vertices":[[0,0],[1,0],[1,1],[0,1]]}]}"#;
    fs::write(dir.path().join("sq.curves"), square).unwrap();
    // a translation is invisible to every kind
    fs::write(dir.path().join("t.json"), "[[1,2],[1,2],[1,2],[1,2]]").unwrap();
    let out = ok(&hm(&["eval-norm", "--shape", "sq.curves", "--field", "t.json", "--kind", "h1_rot_scale_invariant"], dir.path()));
    assert!(out.contains("total: 0"), "{out}");
    // moving one vertex by e_x: |∂h|² is 1 on the two adjacent unit edges
    fs::write(dir.path().join("h.json"), "[[1,0],[0,0],[0,0],[0,0]]").unwrap();
    let out = ok(&hm(&["eval-norm", "--shape", "sq.curves", "--field", "h.json", "--kind", "h1_general", "--weight", "2"], dir.path()));
    assert!(out.contains("total: 4"), "{out}");
    fs::write(dir.path().join("bad.json"), "[[1,0]]").unwrap();
    assert!(!hm(&["eval-norm", "--shape", "sq.curves", "--field", "bad.json"], dir.path()).status.success());
}
