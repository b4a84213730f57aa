use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CONFIG: &str = "[system]\nseed = 3\n\n[dqn]\nepisodes = 30\n\n[qlearning]\nepisodes = 30\n";

fn workspace(config: &str) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.toml");
    std::fs::write(&path, config).unwrap();
    (dir, path)
}

fn nafd(config: Option<&Path>, out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nafd"));
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.arg("--out").arg(out).args(args).output().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    reader
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nafd(None, dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nafd(None, dir.path(), &[]).status.code(), Some(1));
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = nafd(None, dir.path(), &["heatmap"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn unreadable_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = nafd(Some(&dir.path().join("absent.toml")), dir.path(), &["heatmap"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_seed_names_the_field() {
    let (dir, cfg) = workspace("[system]\nnum_aps = 4\n");
    let o = nafd(Some(&cfg), dir.path(), &["heatmap"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn unknown_solver_exits_one() {
    let (dir, cfg) = workspace(CONFIG);
    let o = nafd(Some(&cfg), &dir.path().join("out"), &["optimize", "--solver", "annealing"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("annealing"));
}

#[test]
fn too_few_trials_exits_one() {
    let (dir, cfg) = workspace(CONFIG);
    let o = nafd(Some(&cfg), &dir.path().join("out"), &["validate", "--trials", "10"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn zero_weights_exit_one() {
    let (dir, cfg) = workspace(CONFIG);
    let o = nafd(Some(&cfg), &dir.path().join("out"), &["optimize", "--solver", "avg", "--weights", "0,0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn heatmap_has_grid_shape() {
    let (dir, cfg) = workspace(CONFIG);
    let out = dir.path().join("out");
    let o = nafd(Some(&cfg), &out, &["heatmap", "--grid", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out.join("heatmap.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.len() == 5));
    assert_eq!(rows[0][0], "y");
    for row in &rows[1..] {
        for v in row {
            let v: f64 = v.parse().unwrap();
            assert!(v.is_finite());
        }
    }
    assert!(out.join("heatmap.manifest.toml").exists());
}

#[test]
fn exhaustive_optimize_writes_full_table() {
    let (dir, cfg) = workspace(CONFIG);
    let out = dir.path().join("out");
    let o = nafd(Some(&cfg), &out, &["optimize", "--solver", "exu", "--weights", "0.5,0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = csv_rows(&out.join("table.csv"));
    assert_eq!(table.len(), 257);
    let result = csv_rows(&out.join("result.csv"));
    assert_eq!(result[0], ["solver", "assignment_bits", "num_dl", "f1", "f2", "reward", "omega_c", "omega_s"]);
    let best = &result[1];
    let best_reward: f64 = best[5].parse().unwrap();
    let table_max = table[1..]
        .iter()
        .map(|r| r[3].parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best_reward, table_max);
}

#[test]
fn learning_solver_writes_convergence() {
    let (dir, cfg) = workspace(CONFIG);
    let out = dir.path().join("out");
    let o = nafd(Some(&cfg), &out, &["optimize", "--solver", "qlearn"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let conv = csv_rows(&out.join("convergence.csv"));
    assert_eq!(conv[0], ["episode", "mean_reward", "loss"]);
    assert_eq!(conv.len(), 31);
}

#[test]
fn seed_flag_overrides_config() {
    let (dir, cfg) = workspace(CONFIG);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(nafd(Some(&cfg), &a, &["optimize", "--solver", "random"]).status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_nafd"))
        .args(["--seed", "4", "--out"])
        .arg(&b)
        .arg("--config")
        .arg(&cfg)
        .args(["optimize", "--solver", "random"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: toml::Table = std::fs::read_to_string(b.join("optimize.manifest.toml")).unwrap().parse().unwrap();
    assert_eq!(manifest["seed"].as_integer(), Some(4));
    assert_ne!(
        std::fs::read_to_string(a.join("result.csv")).unwrap(),
        std::fs::read_to_string(b.join("result.csv")).unwrap()
    );
}

#[test]
fn validation_report_has_one_row_per_ue_and_size() {
    let (dir, cfg) = workspace("[system]\nseed = 2\n\n[validate]\nn_sweep = [4, 6]\ntrials = 1000\n");
    let out = dir.path().join("out");
    let o = nafd(Some(&cfg), &out, &["validate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out.join("validation.csv"));
    assert_eq!(
        &rows[0][..9],
        ["N", "ue_id", "direction", "closed_form", "mc_mean", "mc_stderr", "mc_log_form", "trials", "seed"]
    );
    assert_eq!(rows.len(), 1 + 2 * 8);
}

#[test]
fn cdf_reports_every_solver() {
    let (dir, cfg) = workspace(CONFIG);
    let out = dir.path().join("out");
    let o = nafd(Some(&cfg), &out, &["cdf", "--scenarios", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out.join("cdf.csv"));
    assert_eq!(rows.len(), 1 + 5 * 2);
    for solver in ["random", "avg", "exu", "qlearn", "dqn"] {
        let cdf: Vec<f64> = rows[1..]
            .iter()
            .filter(|r| r[0] == solver)
            .map(|r| r[2].parse().unwrap())
            .collect();
        assert_eq!(cdf, [0.5, 1.0]);
    }
}

#[test]
fn pareto_marks_front_rows() {
    let (dir, cfg) = workspace(&format!("{CONFIG}\n[pareto]\nweights = [{{ omega_c = 1.0, omega_s = 0.0 }}]\n"));
    let out = dir.path().join("out");
    let o = nafd(Some(&cfg), &out, &["pareto"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out.join("pareto.csv"));
    assert_eq!(rows[0], ["assignment_bits", "f1", "f2", "is_pareto", "source", "front_distance"]);
    assert_eq!(rows.len(), 1 + 256 + 1);
    assert!(rows[1..257].iter().any(|r| r[3] == "true"));
    assert_eq!(rows[257][4], "DQN_1_0");
    for r in &rows[1..257] {
        let d: f64 = r[5].parse().unwrap();
        assert_eq!(r[3] == "true", d == 0.0, "{r:?}");
    }
}
