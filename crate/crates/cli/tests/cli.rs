//! End-to-end runs of the `pignpi` binary on tiny experiments.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pignpi_cli::config::ExperimentConfig;
use pignpi_core::metrics::MetricsReport;
use pignpi_core::sim::{io, sample_initial_system, simulate, ForceLaw};

const TINY: &str = r#"
name = "tiny"
seed = 3
repetitions = 2

[dataset]
law = "spring"
n_particles = 4
n_steps = 40

[model]
kinds = ["pignpi-force", "gn-plus", "pignpi-potential"]
hidden_layers = 1
hidden_width = 8
activations = ["silu"]

[train]
max_epochs = 2
batch_size = 4

[generalization]
n_particles = 6
n_steps = 20
"#;

fn pignpi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pignpi"))
        .args(args)
        .env_remove("PIGNPI_DATA_ROOT")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_refuses_to_overwrite_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("run");
    let first = pignpi(&["simulate", "--config", &cfg, "--out", s(&out)]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let file = out.join("data/trajectory.bin");
    let bytes = fs::read(&file).unwrap();
    let traj = io::load(&file).unwrap();
    assert_eq!(traj.n_steps(), 40);
    assert_eq!(traj.labels_at(0).unwrap().forces.nrows(), 4 * 3);

    let again = pignpi(&["simulate", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(again.status.code(), Some(2));
    let forced = pignpi(&["simulate", "--config", &cfg, "--out", s(&out), "--force"]);
    assert!(forced.status.success());
    assert_eq!(fs::read(&file).unwrap(), bytes);
}

#[test]
fn sweep_trains_evaluates_renders_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("run");
    let res = pignpi(&["sweep", "--config", &cfg, "--out", s(&out), "--jobs", "2"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let cells = ExperimentConfig::parse(TINY).unwrap().cells().unwrap();
    assert_eq!(cells.len(), 3);
    for cell in &cells {
        let dir = out.join("runs").join(cell.label());
        for rep in 0..2 {
            let r = dir.join(format!("rep_{rep}"));
            for f in ["record.json", "train_config.json", "history.csv", "best.json", "final.json", "metrics.json", "metrics.csv", "metrics_generalization.json"] {
                assert!(r.join(f).exists(), "{}", r.join(f).display());
            }
            let history = fs::read_to_string(r.join("history.csv")).unwrap();
            assert_eq!(history.lines().count(), 3);
        }
        assert!(dir.join("aggregate.csv").exists());
        let gen = MetricsReport::load_json(dir.join("rep_0/metrics_generalization.json")).unwrap();
        // GN+ learned one scalar per training particle; its acceleration
        // prediction on the larger system is refused.
        assert_eq!(gen.get("mae_acc").is_some(), cell.kind.to_string() != "gn-plus");
        assert!(gen.get("mae_ef").is_some());
    }
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.contains("# generalization"));
    assert!(report.contains("pignpi-potential_silu_a0_b0"));
    assert!(out.join("config.toml").exists());

    let field = tmp.path().join("field.csv");
    let rep = out.join("runs").join(cells[0].label()).join("rep_0");
    let res = pignpi(&["render", "--run", s(&rep), "--out", s(&field), "--cells", "11"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&field).unwrap();
    assert!(text.starts_with("x,y,fx,fy,p,true_fx,true_fy,true_p"));
    assert_eq!(text.lines().count(), 122);

    // Repetitions with identical seeds reproduce bit for bit.
    let out2 = tmp.path().join("run2");
    let res = pignpi(&["sweep", "--config", &cfg, "--out", s(&out2)]);
    assert!(res.status.success());
    let a = fs::read(out.join("runs").join(cells[2].label()).join("rep_1/best.json")).unwrap();
    let b = fs::read(out2.join("runs").join(cells[2].label()).join("rep_1/best.json")).unwrap();
    assert_eq!(a, b);

    let res = pignpi(&["train", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2), "existing runs need --force");

    // A checkpoint cannot be evaluated on data with another layout.
    let sys = sample_initial_system(5, 3, 0).unwrap();
    let traj3 = tmp.path().join("three_d.bin");
    io::save(&simulate(&sys, ForceLaw::spring(), 12, 0.01, 0).unwrap(), &traj3).unwrap();
    let res = pignpi(&["evaluate", "--out", s(&out), "--trajectory", s(&traj3), "--tag", "x"]);
    assert_eq!(res.status.code(), Some(3));

    let res = pignpi(&["evaluate", "--out", s(&out), "--tag", "again"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let first = MetricsReport::load_json(out.join("runs").join(cells[0].label()).join("rep_0/metrics.json")).unwrap();
    let again = MetricsReport::load_json(out.join("runs").join(cells[0].label()).join("rep_0/metrics_again.json")).unwrap();
    assert_eq!(first, again);
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(tmp.path(), "name = 'x'\n[dataset]\nlaw = 'gravity'\n");
    let out = tmp.path().join("run");
    assert_eq!(pignpi(&["simulate", "--config", &bad, "--out", s(&out)]).status.code(), Some(2));

    let cfg = write_config(tmp.path(), TINY);
    let res = pignpi(&["train", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(3), "missing data");

    let diverging = TINY.replace("max_epochs = 2", "max_epochs = 2\nlearning_rate = 1e300");
    let cfg = write_config(tmp.path(), &diverging);
    assert!(pignpi(&["simulate", "--config", &cfg, "--out", s(&out)]).status.success());
    let res = pignpi(&["train", "--config", &cfg, "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("runs/pignpi-force_silu_a0_b0/rep_0/failure.txt").exists());
}

#[test]
fn data_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("run");
    let root = tmp.path().join("store");
    let res = Command::new(env!("CARGO_BIN_EXE_pignpi"))
        .args(["simulate", "--config", &cfg, "--out", s(&out)])
        .env("PIGNPI_DATA_ROOT", &root)
        .output()
        .unwrap();
    assert!(res.status.success());
    assert!(root.join("tiny/trajectory.bin").exists());
    assert!(!out.join("data").exists());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}
