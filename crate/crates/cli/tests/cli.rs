use std::path::Path;
use std::process::{Command, Output};

use helmdg_core::mesh::read_mesh;

const SMALL: &str = "[domain]\nn = 2\n[coefficients]\nomega = 2\n[problem]\ncase = plane_wave\n\
                     [discretization]\np = 1\n[study]\nkind = uniform_convergence\nrefinements = 2\n";

fn helmdg(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_helmdg"));
    cmd.args(args).env_remove("HELMDG_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("spawn helmdg")
}

fn write_config(dir: &Path, body: &str, fields: bool) -> String {
    let path = dir.join("run.ini");
    let text = format!("{body}[output]\ndir = out\nfields = {fields}\n");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[domain]\nn = 2\nwidth = 3\n", false);
    let out = helmdg(&["solve", &cfg], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("width"));
}

#[test]
fn missing_config_and_bad_thread_count_exit_2() {
    assert_eq!(helmdg(&["study", "/nonexistent/run.ini"], &[]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL, false);
    assert_eq!(helmdg(&["solve", &cfg], &[("HELMDG_THREADS", "zero")]).status.code(), Some(2));
    assert_eq!(helmdg(&["frobnicate"], &[]).status.code(), Some(2));
}

#[test]
fn solve_writes_fields_matching_the_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL, true);
    let out = helmdg(&["solve", &cfg], &[("HELMDG_THREADS", "1")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out_dir = dir.path().join("out");
    let mesh = read_mesh(&std::fs::read_to_string(out_dir.join("fields/level_00.mesh")).unwrap()).unwrap();
    let fields = std::fs::read_to_string(out_dir.join("fields/level_00.csv")).unwrap();
    let rows = data_lines(&fields);
    assert_eq!(rows.len(), mesh.n_triangles() * 6);

    let estimator = std::fs::read_to_string(out_dir.join("estimator.csv")).unwrap();
    let eta_k: Vec<&str> = data_lines(&estimator).iter().map(|l| l.split(',').nth(7).unwrap()).collect();
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        let k: usize = cells[0].parse().unwrap();
        assert_eq!(cells[6], eta_k[k], "element {k}");
    }
}

#[test]
fn study_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL, false);
    let csv = dir.path().join("out/uniform_convergence.csv");
    assert!(helmdg(&["study", &cfg], &[]).status.success());
    let first = std::fs::read(&csv).unwrap();
    assert!(helmdg(&["study", &cfg], &[("HELMDG_THREADS", "2")]).status.success());
    assert_eq!(first, std::fs::read(&csv).unwrap());
    assert_eq!(data_lines(&String::from_utf8(first).unwrap()).len(), 3);
}
