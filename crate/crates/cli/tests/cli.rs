use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tkbundle::registry::CHECKS;
use tkbundle::{load, run, Overrides};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tkbundle"));
    c.env_remove("TKBUNDLE_MAX_ORDER");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tkbundle-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const PLANE: &str = r#"
backend = "float"
samples = 5

[[charts]]
name = "plane"
dim = 2
domain = [[-1.0, 1.0], [-1.0, 1.0]]

[[metrics]]
name = "euclid"
chart = "plane"
components = ["1", "0", "0", "1"]

[[charts]]
name = "wide"
dim = 2

[[metrics]]
name = "wide-euclid"
chart = "wide"
components = ["1", "0", "0", "1"]

[[maps]]
name = "scale"
source = "plane"
target = "wide"
exprs = ["2*x1", "2*x2"]
"#;

#[test]
fn flat_identity_passes() {
    let o = bin().arg("run").arg(scenario("flat-identity")).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("overall: PASS"));
}

#[test]
fn sphere_rotation_passes_at_order_three() {
    let o = bin()
        .args(["run", "--order", "3", "--tolerance", "1e-6"])
        .arg(scenario("sphere-rotation"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn every_bundled_scenario_passes() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let s = load(&path, &Overrides { max_order: 8, ..Default::default() }).unwrap();
        let report = run(&s);
        assert!(report.pass(), "{}\n{}", path.display(), report.to_text());
        count += 1;
    }
    assert!(count >= 7);
}

#[test]
fn undeclared_metric_exits_two_with_key_path() {
    let body = format!("{PLANE}\n[[checks]]\ncheck = \"koszul\"\nmetric = \"missing\"\n");
    let o = bin().arg("run").arg(scratch("undeclared.toml", &body)).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("checks[0].metric"), "{}", stderr(&o));
    assert!(stderr(&o).contains("missing"));
}

#[test]
fn failing_check_exits_one() {
    let body = format!(
        "{PLANE}\n[[checks]]\ncheck = \"lifted-isometry\"\nmap = \"scale\"\nsource_metric = \"euclid\"\ntarget_metric = \"wide-euclid\"\n"
    );
    let o = bin().arg("run").arg(scratch("scaling.toml", &body)).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("not an isometry at order 1"), "{}", stdout(&o));
}

#[test]
fn syntax_errors_exit_two() {
    let o = bin().arg("run").arg(scratch("broken.toml", "backend = \n")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let body = PLANE.replace("\"2*x2\"", "\"2*x3\"");
    let o = bin().arg("run").arg(scratch("arity.toml", &body)).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("maps[0].exprs[1]"), "{}", stderr(&o));
}

#[test]
fn exact_backend_rejects_transcendentals() {
    let body = PLANE.replace("\"float\"", "\"exact\"").replace("\"2*x1\"", "\"sin(x1)\"");
    let o = bin().arg("run").arg(scratch("exact.toml", &body)).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("maps[0].exprs[0]"), "{}", stderr(&o));
}

#[test]
fn orders_are_capped_by_the_environment() {
    let o = bin()
        .env("TKBUNDLE_MAX_ORDER", "2")
        .arg("run")
        .arg(scenario("flat-identity"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(".order"), "{}", stderr(&o));
    let o = bin().args(["run", "--order", "9"]).arg(scenario("circle-immersion")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn only_filters_checks() {
    let o = bin()
        .args(["run", "--only", "koszul"])
        .arg(scenario("sphere-rotation"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("torsion-free"));
    assert!(!out.contains("fibre-linearity"));
    let o = bin().args(["run", "--only", "nope"]).arg(scenario("sphere-rotation")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn json_reports_are_deterministic() {
    let dir = std::env::temp_dir().join(format!("tkbundle-json-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut outputs = Vec::new();
    for (i, seed) in ["7", "7", "8"].iter().enumerate() {
        let path = dir.join(format!("run{i}.jsonl"));
        let o = bin()
            .args(["run", "--samples", "10", "--seed", seed, "--json"])
            .arg(&path)
            .arg(scenario("polar-cartesian"))
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_ne!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let summary = &lines.last().unwrap()["summary"];
    assert_eq!(summary["pass"], true);
    assert_eq!(summary["records"], lines.len() - 1);
    for l in &lines[..lines.len() - 1] {
        for key in ["check", "name", "order", "samples", "max_abs_residual", "max_rel_residual", "tolerance", "pass"] {
            assert!(l.get(key).is_some(), "missing {key} in {l}");
        }
    }
}

#[test]
fn list_checks_names_every_check_stably() {
    let a = stdout(&bin().arg("list-checks").output().unwrap());
    let b = stdout(&bin().arg("list-checks").output().unwrap());
    assert_eq!(a, b);
    for name in [
        "transition-linearity",
        "g-related-global",
        "g-related-local",
        "lifted-relatedness",
        "projective-consistency",
        "gauss-residual",
        "lifted-isometry",
        "lemma-A1",
        "lemma-A2",
        "convex-fibre",
    ] {
        assert!(a.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
    assert_eq!(a.lines().count(), CHECKS.len());
}

#[test]
fn registry_maps_each_check_to_one_operation() {
    let names: BTreeSet<_> = CHECKS.iter().map(|c| c.name).collect();
    let ops: BTreeSet<_> = CHECKS.iter().map(|c| c.operation).collect();
    assert_eq!(names.len(), CHECKS.len());
    assert_eq!(ops.len(), CHECKS.len());
    let modules = ["jets", "trivialization", "connections", "morphisms", "metrics", "oracle"];
    for c in CHECKS {
        let (module, op) = c.operation.split_once("::").unwrap();
        assert!(modules.contains(&module), "{}", c.operation);
        assert!(!op.is_empty());
    }
    // the flat identity scenario exercises every registered check
    let s = load(&scenario("flat-identity"), &Overrides { max_order: 8, ..Default::default() }).unwrap();
    let used: BTreeSet<_> = s.checks.iter().map(|c| c.check).collect();
    assert_eq!(used, names);
}
