use std::fs;
use std::path::{Path, PathBuf};

use bon::engine::{argmax, Mode};
use bon::exec::Exec;
use bon::experiment::{
    cloud_from_csv, compare_runs, export_boundary, export_cloud, read_metrics, run, summary_csv, BoundaryGrid,
    RunConfig, PRESETS,
};
use bon::experiment::run::{cloud_file_name, ABORT_FILE, BOUNDARY_FILE, CONFIG_FILE, METRICS_FILE, MODELS_DIR};
use bon::nn::{dump, OutputMode};
use bon::Error;
use tempfile::TempDir;

/// The constructed preset shrunk to run in well under a second.
fn small(mode: Mode) -> RunConfig {
    let mut cfg = RunConfig::constructed(mode);
    cfg.classifier.dims = vec![2, 16, 2];
    cfg.generator.dims = vec![2, 8, 2];
    cfg.training.generators = 3;
    cfg.training.epochs = 6;
    cfg.training.lr_d = 1e-3;
    cfg.export.grid_resolution = 25;
    if mode.uses_generators() {
        cfg.export.cloud_epochs = vec![2, 6];
    }
    cfg
}

fn run_in(tmp: &TempDir, name: &str, cfg: &RunConfig) -> PathBuf {
    let dir = tmp.path().join(name);
    run(cfg, &dir).unwrap();
    dir
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn run_directory_holds_every_artifact() {
    let tmp = TempDir::new().unwrap();
    let cfg = small(Mode::Bonpp);
    let dir = run_in(&tmp, "bonpp", &cfg);
    for f in [CONFIG_FILE, METRICS_FILE, BOUNDARY_FILE, "dataset.csv", "timing.txt"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    assert!(!dir.join(ABORT_FILE).exists());
    for e in [2, 6] {
        assert!(dir.join(cloud_file_name(e)).is_file());
    }
    assert!(dir.join(MODELS_DIR).join("classifier.mlp").is_file());
    for k in 0..3 {
        assert!(dir.join(MODELS_DIR).join(format!("generator_{k:03}.mlp")).is_file());
    }
    assert_eq!(read_metrics(&dir).unwrap().len(), cfg.training.epochs);
    assert_eq!(RunConfig::load(&dir.join(CONFIG_FILE)).unwrap(), cfg);
}

#[test]
fn baseline_runs_write_no_clouds() {
    let tmp = TempDir::new().unwrap();
    let dir = run_in(&tmp, "base", &small(Mode::Baseline));
    let clouds = fs::read_dir(&dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("cloud_"))
        .count();
    assert_eq!(clouds, 0);
    assert!(matches!(export_cloud(&dir, None), Err(Error::Config(_))));
}

#[test]
fn invalid_config_fails_before_creating_anything() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small(Mode::Bonpp);
    cfg.training.beta = 0.9;
    let dir = tmp.path().join("never");
    assert!(matches!(run(&cfg, &dir), Err(Error::Config(_))));
    assert!(!dir.exists());
}

#[test]
fn boundary_classes_match_pointwise_evaluation() {
    let tmp = TempDir::new().unwrap();
    let dir = run_in(&tmp, "bon", &small(Mode::Bon));
    let grid = BoundaryGrid::from_csv(&read(&dir.join(BOUNDARY_FILE))).unwrap();
    let d = dump::load(&dir.join(MODELS_DIR).join("classifier.mlp"), OutputMode::Softmax).unwrap();
    assert_eq!(grid.cells.len(), 25 * 25);
    for c in &grid.cells {
        let probs = d.predict(&[c.x1, c.x2]).unwrap();
        assert_eq!(c.class, argmax(&probs));
        assert_eq!(c.class, argmax(&c.probs));
        assert!((c.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn export_boundary_rewrites_at_a_new_resolution() {
    let tmp = TempDir::new().unwrap();
    let dir = run_in(&tmp, "bon", &small(Mode::Bon));
    let original = read(&dir.join(BOUNDARY_FILE));
    export_boundary(&dir, None).unwrap();
    assert_eq!(read(&dir.join(BOUNDARY_FILE)), original);
    export_boundary(&dir, Some(2)).unwrap();
    let grid = BoundaryGrid::from_csv(&read(&dir.join(BOUNDARY_FILE))).unwrap();
    assert_eq!(grid.cells.len(), 4);
}

#[test]
fn cloud_mse_agrees_with_the_metrics_row() {
    let tmp = TempDir::new().unwrap();
    let cfg = small(Mode::Bonpp);
    let dir = run_in(&tmp, "bonpp", &cfg);
    let metrics = read_metrics(&dir).unwrap();
    let samples = read(&dir.join("dataset.csv")).lines().count() - 1;
    for e in [2, 6] {
        let rows = cloud_from_csv(&read(&dir.join(cloud_file_name(e)))).unwrap();
        assert_eq!(rows.len(), samples * cfg.training.generators);
        let mean = rows.iter().map(|r| r.mse).sum::<f64>() / rows.len() as f64;
        let want = metrics[e - 1].mean_synth_mse;
        assert!((mean - want).abs() <= 1e-9, "epoch {e}: {mean} vs {want}");
    }
}

#[test]
fn export_cloud_reproduces_the_snapshot_files() {
    let tmp = TempDir::new().unwrap();
    let dir = run_in(&tmp, "bon", &small(Mode::Bon));
    for e in [2, 6] {
        let path = dir.join(cloud_file_name(e));
        let written = read(&path);
        fs::remove_file(&path).unwrap();
        assert_eq!(export_cloud(&dir, Some(e)).unwrap(), path);
        assert_eq!(read(&path), written);
    }
    assert!(export_cloud(&dir, Some(3)).is_err());
}

#[test]
fn compare_reports_one_row_per_run() {
    let tmp = TempDir::new().unwrap();
    let a = run_in(&tmp, "a", &small(Mode::Bon));
    let b = run_in(&tmp, "b", &small(Mode::Bonpp));
    let c = run_in(&tmp, "c", &small(Mode::Baseline));

    let same = compare_runs(&[a.clone(), a.clone()]).unwrap();
    assert_eq!(same[0].final_acc_real, same[1].final_acc_real);
    assert_eq!(same[0].collapse_ratio, same[1].collapse_ratio);

    let rows = compare_runs(&[a.clone(), b, c]).unwrap();
    assert_eq!(summary_csv(&rows).lines().count(), 4);
    let m = read_metrics(&a).unwrap();
    let peak = m.iter().map(|r| r.mean_synth_mse).fold(0.0, f64::max);
    assert_eq!(rows[0].collapse_ratio, m.last().unwrap().mean_synth_mse / peak);

    let missing = tmp.path().join("missing");
    let err = compare_runs(&[a, missing]).unwrap_err();
    assert!(err.to_string().contains("missing"), "{err}");
}

#[test]
fn rerunning_the_archived_config_reproduces_metrics() {
    let tmp = TempDir::new().unwrap();
    let first = run_in(&tmp, "first", &small(Mode::Bonpp));
    let archived = RunConfig::load(&first.join(CONFIG_FILE)).unwrap();
    let second = run_in(&tmp, "second", &archived);
    assert_eq!(read(&first.join(METRICS_FILE)), read(&second.join(METRICS_FILE)));
    assert_eq!(read(&first.join(BOUNDARY_FILE)), read(&second.join(BOUNDARY_FILE)));
}

#[test]
fn execution_policy_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    for mode in [Mode::Bon, Mode::Bonpp, Mode::Baseline] {
        let mut cfg = small(mode);
        cfg.classifier.dropout = if mode == Mode::Baseline { 0.3 } else { 0.0 };
        cfg.training.exec = Exec::Sequential;
        let seq = run_in(&tmp, &format!("{mode:?}-seq"), &cfg);
        cfg.training.exec = Exec::Parallel;
        let par = run_in(&tmp, &format!("{mode:?}-par"), &cfg);
        for f in [METRICS_FILE, BOUNDARY_FILE] {
            assert_eq!(read(&seq.join(f)), read(&par.join(f)), "{mode:?} {f}");
        }
    }
}

#[test]
fn seeds_change_the_trajectory() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small(Mode::Bon);
    let a = run_in(&tmp, "a", &cfg);
    cfg.training.seed = 17;
    let b = run_in(&tmp, "b", &cfg);
    assert_ne!(read(&a.join(METRICS_FILE)), read(&b.join(METRICS_FILE)));
}

#[test]
fn presets_roundtrip_through_toml() {
    for name in PRESETS {
        let cfg = RunConfig::preset(name).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg, "{name}");
    }
    let iris = RunConfig::preset("iris-bonpp").unwrap();
    assert_eq!(iris.training.generators, 100);
    assert_eq!(iris.classifier.dims, vec![2, 100, 100, 50, 3]);
    assert_eq!(iris.generator.dims, vec![2, 50, 50, 50, 2]);
    assert_eq!(RunConfig::preset("constructed-bon").unwrap().export.cloud_epochs, vec![50, 150, 500]);
}
