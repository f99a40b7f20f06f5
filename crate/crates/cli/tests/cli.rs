use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use scn_core::cubegen::{window_side, CHANNELS};
use scn_core::gridstore::DomainGrid;
use scn_core::net::{save_model, Architecture, LayerSpec, ScnModel};

const TINY: &str = "\
grid.cell_rows = 5
grid.cell_cols = 6
grid.levels = 3
synth.events = 3
synth.frames = 5
synth.storms_min = 2
synth.storms_max = 3
synth.start_time = 9000
net.layers = cc:4:3:1, conv:4:3:2, conv:2:3:1
net.iterations = 12
net.batch_size = 8
net.eval_every = 4
net.learning_rate = 0.01
split.test = ev2
seed = 4
";

fn scn(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    if !cfg.exists() {
        fs::write(&cfg, TINY).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_scn"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn trained(dir: &Path) {
    for cmd in ["gen", "train"] {
        let o = scn(dir, &[cmd]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn gen_reports_base_rates() {
    let dir = tempfile::tempdir().unwrap();
    let o = scn(dir.path(), &["gen"]);
    let text = stdout(&o);
    assert_eq!(text.matches("base rate").count(), 3, "{text}");
    for id in ["ev0", "ev1", "ev2"] {
        assert!(dir.path().join("out/events").join(id).join("manifest.txt").exists());
    }
}

#[test]
fn gen_refuses_short_series_and_leaves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), format!("{TINY}synth.frames = 3\n").replace("synth.frames = 5\n", "")).unwrap();
    let o = scn(dir.path(), &["gen"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn train_writes_history_every_eval_interval() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let hist = fs::read_to_string(dir.path().join("out/history.csv")).unwrap();
    let iters: Vec<&str> = hist.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(hist.lines().next().unwrap(), "iteration,loss,csi,pod,far");
    assert_eq!(iters, ["4", "8", "12"]);
    assert!(dir.path().join("out/model.scn").exists());
}

#[test]
fn predict_grid_overlay_agrees_with_eval() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let o = scn(dir.path(), &["eval"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let scores = fs::read_to_string(dir.path().join("out/scores.csv")).unwrap();
    assert!(scores.starts_with("event,hits,misses,false_alarms,correct_nulls,pod,far,csi,auc\n"));
    let skill = fs::read_to_string(dir.path().join("out/skill_ev2.csv")).unwrap();
    // ev2 starts a day after ev0; its first issue time is one frame in
    let issue = 9000 + 2 * 86_400 + 900;
    let row: Vec<&str> = skill
        .lines()
        .find(|l| l.starts_with(&format!("{issue},")))
        .unwrap()
        .split(',')
        .collect();

    let o = scn(dir.path(), &["predict-grid", "--event", "ev2", "--issue-time", &issue.to_string()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let expected = format!(
        "hits {}  misses {}  false alarms {}  correct nulls {}",
        row[1], row[2], row[3], row[4]
    );
    assert!(text.contains(&expected), "{text}\nvs {expected}");
    let csv = fs::read_to_string(dir.path().join(format!("out/overlay_ev2_{issue}.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().all(|l| l.split(',').count() == 6));
    let pgm = fs::read_to_string(dir.path().join(format!("out/overlay_ev2_{issue}.pgm"))).unwrap();
    assert!(pgm.starts_with("P2\n6 5\n255\n"));
}

#[test]
fn predict_grid_rejects_ineligible_time() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    // the first frame has no predecessor
    let o = scn(dir.path(), &["predict-grid", "--event", "ev2", "--issue-time", &(9000 + 2 * 86_400).to_string()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not eligible"));
}

#[test]
fn zero_model_predicts_every_cell_alike() {
    let dir = tempfile::tempdir().unwrap();
    assert!(scn(dir.path(), &["gen"]).status.success());
    let grid = DomainGrid::new(5, 6, 6, 3).unwrap();
    let arch = Architecture {
        channels: CHANNELS,
        slices: 3,
        side: window_side(&grid),
        layers: vec![LayerSpec::cross_channel(2, 3, 1), LayerSpec::conv2d(2, 3, 1)],
    };
    save_model(&ScnModel::<f32>::zeros(&arch).unwrap(), dir.path().join("out/model.scn")).unwrap();
    let issue = 9000 + 86_400 + 900;
    let o = scn(dir.path(), &["predict-grid", "--event", "ev1", "--issue-time", &issue.to_string()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("hits 0"));
    let csv = fs::read_to_string(dir.path().join(format!("out/overlay_ev1_{issue}.csv"))).unwrap();
    assert!(!csv.contains('H') && !csv.contains('F'));
    let prob = fs::read_to_string(dir.path().join(format!("out/prob_ev1_{issue}.csv"))).unwrap();
    assert!(prob.split([',', '\n']).filter(|s| !s.is_empty()).all(|p| p == "0.500000"));
}

#[test]
fn eval_rejects_model_grid_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    assert!(scn(dir.path(), &["gen"]).status.success());
    save_model(
        &ScnModel::<f32>::zeros(&Architecture::default()).unwrap(),
        dir.path().join("out/model.scn"),
    )
    .unwrap();
    let o = scn(dir.path(), &["eval"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out/scores.csv").exists());
}

#[test]
fn kfold_reports_mean_and_sigma() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), format!("{TINY}split.mode = kfold\nsplit.k = 3\n").replace("split.test = ev2\n", "")).unwrap();
    trained(dir.path());
    let summary = fs::read_to_string(dir.path().join("out/cv_summary.csv")).unwrap();
    let names: Vec<&str> = summary.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["metric", "csi", "pod", "far"]);
    assert_eq!(fs::read_to_string(dir.path().join("out/folds.csv")).unwrap().lines().count(), 4);
}

#[test]
fn self_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = scn(dir.path(), &["gradcheck"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("gradient check passed"));
    let o = scn(dir.path(), &["fuse-demo"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("savings 61.0%"));
}
