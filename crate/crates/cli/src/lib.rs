//! Command implementations behind the `scn` binary. Each command reads a
//! [`RunConfig`], writes its artifacts under the configured output
//! directory, prints a short report, and returns whether its internal
//! validations passed.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scn_core::cubegen::{
    EventDataset, NormStats, PreparedEvent, SampleSource, SplitPlan, CHANNEL_NAMES,
};
use scn_core::gridstore::{read_event, synth_event, write_event, SynthParams};
use scn_core::net::{
    avg_pool2x2, conv2d, fuse_conv_pool, fused_savings, gradient_check, load_model, predict,
    random_small_architectures, save_model, train_with, EvalRecord, Padding, ScnModel,
    Tensor, TrainHistory, TrainOptions, DEFAULT_EPS, DEFAULT_TOLERANCE,
};
use scn_core::verify::{
    classify, contingency, overlay, roc, roc_csv, scores_csv, skill_series, skill_series_csv,
    ContingencyTable, ScoreRow, NA,
};

pub use config::{RunConfig, SplitChoice};

/// Files and directories created by a command, removed again unless the
/// command completes.
struct Outputs {
    created: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    fn new() -> Self {
        Outputs {
            created: Vec::new(),
            committed: false,
        }
    }

    fn track(&mut self, path: &Path) {
        if !path.exists() {
            self.created.push(path.to_path_buf());
        }
    }

    fn write(&mut self, path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
        if let Some(parent) = path.parent() {
            self.create_dir(parent)?;
        }
        self.track(path);
        fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn create_dir(&mut self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut d = dir;
        while !d.as_os_str().is_empty() && !d.exists() {
            missing.push(d.to_path_buf());
            match d.parent() {
                Some(p) => d = p,
                None => break,
            }
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.created.extend(missing.into_iter().rev());
        Ok(())
    }

    fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in self.created.iter().rev() {
            let _ = if p.is_dir() {
                fs::remove_dir_all(p)
            } else {
                fs::remove_file(p)
            };
        }
    }
}

fn load_events(cfg: &RunConfig, ids: &[String]) -> Result<Vec<PreparedEvent>> {
    let dir = cfg.data_dir();
    ids.iter()
        .map(|id| {
            let path = dir.join(id);
            let series = read_event(&path)
                .with_context(|| format!("loading event `{id}` from {}", path.display()))?;
            if series.grid != cfg.grid {
                bail!(
                    "event `{id}` has grid {:?}, config expects {:?}",
                    series.grid,
                    cfg.grid
                );
            }
            PreparedEvent::new(id.clone(), series).with_context(|| format!("event `{id}`"))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| format!("{x:.6}"))
}

fn history_csv(h: &TrainHistory) -> String {
    let mut s = String::from("iteration,loss,csi,pod,far\n");
    for r in &h.records {
        writeln!(
            s,
            "{},{:.6},{},{},{}",
            r.iteration,
            r.loss,
            opt(r.csi),
            opt(r.pod),
            opt(r.far)
        )
        .unwrap();
    }
    s
}

fn eval_line(r: &EvalRecord) -> String {
    format!(
        "iter {:>6}  loss {:.4}  auc {}  csi {}  pod {}  far {}",
        r.iteration,
        r.loss,
        opt(r.auc),
        opt(r.csi),
        opt(r.pod),
        opt(r.far)
    )
}

/// Writes `n_events` synthetic events and prints each one's base rate.
pub fn cmd_gen(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    if cfg.synth.n_frames < 4 {
        bail!(
            "synth.frames = {} leaves no eligible issue time (need >= 4)",
            cfg.synth.n_frames
        );
    }
    let mut outputs = Outputs::new();
    let dir = cfg.data_dir();
    outputs.create_dir(&dir)?;
    let mut ok = true;
    for (i, id) in cfg.all_events().iter().enumerate() {
        let params = SynthParams {
            seed: cfg.synth.seed.wrapping_add(i as u64),
            start_time: cfg.synth.start_time + i as u64 * 86_400,
            ..cfg.synth
        };
        let series = synth_event(&cfg.grid, &params)?;
        let path = dir.join(id);
        outputs.track(&path);
        write_event(&series, &path)?;
        let ev = PreparedEvent::new(id.clone(), series)?;
        let samples = ev.samples();
        let pos = samples.iter().filter(|s| s.label == 1).count();
        let rate = pos as f64 / samples.len() as f64;
        ok &= (0.03..=0.07).contains(&rate);
        writeln!(
            out,
            "{id}: {} frames, {} samples, {pos} positive, base rate {rate:.4}",
            cfg.synth.n_frames,
            samples.len()
        )?;
    }
    writeln!(out, "wrote {} events to {}", cfg.n_events, dir.display())?;
    outputs.commit();
    Ok(ok)
}

/// Trains once on held-out events, or `k` times in k-fold mode.
pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    match cfg.split {
        SplitChoice::Holdout { .. } => train_holdout(cfg, out),
        SplitChoice::KFold { k, seed } => train_kfold(cfg, k, seed, out),
    }
}

fn train_options(cfg: &RunConfig) -> TrainOptions {
    TrainOptions {
        eval_subsample: cfg.eval_subsample,
        keep_best: true,
    }
}

fn train_holdout(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let (train_ids, test_ids) = cfg.holdout_events();
    if train_ids.is_empty() || test_ids.is_empty() {
        bail!("holdout split needs at least one training and one test event");
    }
    let train_ev = load_events(cfg, &train_ids)?;
    let test_ev = load_events(cfg, &test_ids)?;
    let train_refs: Vec<&PreparedEvent> = train_ev.iter().collect();
    let test_refs: Vec<&PreparedEvent> = test_ev.iter().collect();

    let (norm, degenerate) = EventDataset::new(&train_refs, NormStats::identity())?.fit_norm()?;
    for (c, d) in degenerate.iter().enumerate() {
        if *d {
            writeln!(out, "warning: channel {} is constant in training data", CHANNEL_NAMES[c])?;
        }
    }
    let train_set = EventDataset::new(&train_refs, norm)?;
    let test_set = EventDataset::new(&test_refs, norm)?;
    writeln!(
        out,
        "training on {} ({} samples), evaluating on {} ({} samples)",
        train_ids.join(","),
        train_set.len(),
        test_ids.join(","),
        test_set.len()
    )?;

    let (model, history) = train_with(
        &train_set,
        &test_set,
        &cfg.net,
        norm,
        train_options(cfg),
        |r| {
            let _ = writeln!(out, "{}", eval_line(r));
        },
    )?;

    let mut outputs = Outputs::new();
    outputs.create_dir(&cfg.out_dir)?;
    let model_path = cfg.model_path();
    outputs.track(&model_path);
    save_model(&model, &model_path)?;
    outputs.write(&cfg.out_dir.join("history.csv"), history_csv(&history))?;
    match history.best_iteration {
        Some(it) => writeln!(out, "kept checkpoint from iteration {it}")?,
        None => writeln!(out, "no evaluation produced a defined CSI; kept final weights")?,
    }
    writeln!(out, "model written to {}", model_path.display())?;
    outputs.commit();
    Ok(true)
}

fn mean_sigma(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sigma = (values.len() > 1).then(|| {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    });
    (Some(mean), sigma)
}

fn train_kfold(cfg: &RunConfig, k: usize, seed: u64, out: &mut dyn Write) -> Result<bool> {
    let events = load_events(cfg, &cfg.all_events())?;
    let refs: Vec<&PreparedEvent> = events.iter().collect();
    let pool = EventDataset::new(&refs, NormStats::identity())?;
    let plan = SplitPlan::kfold(pool.len(), k, seed)?;
    writeln!(out, "{k}-fold cross-validation over {} samples", pool.len())?;

    let mut outputs = Outputs::new();
    outputs.create_dir(&cfg.out_dir)?;
    let mut folds = String::from("fold,hits,misses,false_alarms,correct_nulls,pod,far,csi,auc\n");
    let mut per_metric: [Vec<f64>; 3] = Default::default();
    for fold in 0..plan.n_partitions() {
        let (train_idx, test_idx) = plan.indices(fold);
        let (norm, _) = pool.subset(&train_idx).fit_norm()?;
        let mut train_set = pool.subset(&train_idx);
        let mut test_set = pool.subset(&test_idx);
        train_set.norm = norm;
        test_set.norm = norm;
        let (model, history) = train_with(
            &train_set,
            &test_set,
            &cfg.net,
            norm,
            train_options(cfg),
            |r| {
                let _ = writeln!(out, "fold {fold}: {}", eval_line(r));
            },
        )?;
        let rec = scn_core::net::evaluate(&model, &test_set, None, &cfg.net, 0)?;
        let t = rec.table;
        writeln!(
            folds,
            "{fold},{},{},{},{},{},{},{},{}",
            t.hits,
            t.misses,
            t.false_alarms,
            t.correct_nulls,
            opt(rec.pod),
            opt(rec.far),
            opt(rec.csi),
            opt(rec.auc)
        )
        .unwrap();
        for (slot, v) in per_metric.iter_mut().zip([rec.csi, rec.pod, rec.far]) {
            slot.extend(v);
        }
        let path = cfg.out_dir.join(format!("model_fold{fold}.scn"));
        outputs.track(&path);
        save_model(&model, &path)?;
        outputs.write(
            &cfg.out_dir.join(format!("history_fold{fold}.csv")),
            history_csv(&history),
        )?;
        writeln!(out, "fold {fold}: csi {}  pod {}  far {}", opt(rec.csi), opt(rec.pod), opt(rec.far))?;
    }
    let mut summary = String::from("metric,mean,sigma\n");
    for (name, vals) in ["csi", "pod", "far"].iter().zip(&per_metric) {
        let (m, s) = mean_sigma(vals);
        writeln!(summary, "{name},{},{}", opt(m), opt(s)).unwrap();
        writeln!(out, "{}: {} (±{})", name.to_uppercase(), opt(m), opt(s))?;
    }
    outputs.write(&cfg.out_dir.join("folds.csv"), folds)?;
    outputs.write(&cfg.out_dir.join("cv_summary.csv"), summary)?;
    outputs.commit();
    Ok(true)
}

fn load_checked_model(cfg: &RunConfig) -> Result<ScnModel<f32>> {
    let path = cfg.model_path();
    let model = load_model(&path).with_context(|| format!("loading model {}", path.display()))?;
    if (model.arch.slices, model.arch.side) != (cfg.net.arch.slices, cfg.net.arch.side) {
        bail!(
            "model expects {} slices of {}x{} pixels, grid provides {} of {}x{}",
            model.arch.slices,
            model.arch.side,
            model.arch.side,
            cfg.net.arch.slices,
            cfg.net.arch.side,
            cfg.net.arch.side
        );
    }
    Ok(model)
}

/// Per-event and pooled scores, ROC curves and per-time skill series.
pub fn cmd_eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let model = load_checked_model(cfg)?;
    let ids = cfg.eval_events();
    let events = load_events(cfg, &ids)?;
    let mut outputs = Outputs::new();
    outputs.create_dir(&cfg.out_dir)?;

    let mut rows = Vec::new();
    let (mut all_scores, mut all_labels) = (Vec::new(), Vec::new());
    for ev in &events {
        let ds = EventDataset::new(&[ev], model.norm)?;
        let p1 = predict(&model, &ds);
        let labels = ds.labels();
        let pred = classify(&p1, cfg.net.threshold);
        let table = contingency(&pred, &labels)?;
        let scores: Vec<f64> = p1.iter().map(|&p| p as f64).collect();
        let curve = roc(&scores, &labels).ok();
        if let Some(c) = &curve {
            outputs.write(&cfg.out_dir.join(format!("roc_{}.csv", ev.id)), roc_csv(c))?;
        }

        let n_cells = ev.grid().n_cells();
        let per_time: Vec<(u64, ContingencyTable)> = (0..ev.n_times())
            .map(|t| {
                let r = t * n_cells..(t + 1) * n_cells;
                Ok((ev.issue_timestamp(t), contingency(&pred[r.clone()], &labels[r])?))
            })
            .collect::<Result<_>>()?;
        outputs.write(
            &cfg.out_dir.join(format!("skill_{}.csv", ev.id)),
            skill_series_csv(&skill_series(&per_time)),
        )?;

        let auc = curve.map(|c| c.auc);
        writeln!(
            out,
            "{}: csi {}  pod {}  far {}  auc {}  (base rate {})",
            ev.id,
            table.csi(),
            table.pod(),
            table.far(),
            opt(auc),
            table.base_rate()
        )?;
        rows.push(ScoreRow {
            event: ev.id.clone(),
            table,
            auc,
        });
        all_scores.extend(scores);
        all_labels.extend(labels);
    }
    let pooled = roc(&all_scores, &all_labels).ok();
    if let Some(c) = &pooled {
        outputs.write(&cfg.out_dir.join("roc_all.csv"), roc_csv(c))?;
    }
    let total: ContingencyTable = rows.iter().map(|r| r.table).sum();
    rows.push(ScoreRow {
        event: "all".into(),
        table: total,
        auc: pooled.as_ref().map(|c| c.auc),
    });
    writeln!(
        out,
        "all: csi {}  pod {}  far {}  auc {}",
        total.csi(),
        total.pod(),
        total.far(),
        opt(pooled.map(|c| c.auc))
    )?;
    outputs.write(&cfg.out_dir.join("scores.csv"), scores_csv(&rows))?;
    outputs.commit();
    Ok(true)
}

/// Prediction grid and overlay against the verification frame for one
/// issue time (a timestamp) of one event.
pub fn cmd_predict_grid(
    cfg: &RunConfig,
    event: &str,
    issue_time: u64,
    out: &mut dyn Write,
) -> Result<bool> {
    let model = load_checked_model(cfg)?;
    let ev = load_events(cfg, &[event.to_string()])?.pop().unwrap();
    let Some(t) = (0..ev.n_times()).find(|&t| ev.issue_timestamp(t) == issue_time) else {
        let eligible: Vec<String> = (0..ev.n_times())
            .map(|t| ev.issue_timestamp(t).to_string())
            .collect();
        bail!(
            "issue time {issue_time} is not eligible for `{event}` (needs t-15 min and t+30 min frames); eligible: {}",
            eligible.join(", ")
        );
    };
    let grid = *ev.grid();
    let n_cells = grid.n_cells();
    let ds = EventDataset::new(&[&ev], model.norm)?;
    let keep: Vec<usize> = (t * n_cells..(t + 1) * n_cells).collect();
    let ds = ds.subset(&keep);
    let p1 = predict(&model, &ds);
    let pred = classify(&p1, cfg.net.threshold);
    let truth = ds.labels();
    let grid_overlay = overlay(&pred, &truth, (grid.cell_rows, grid.cell_cols))?;

    let mut prob = String::new();
    for row in p1.chunks(grid.cell_cols) {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.6}")).collect();
        writeln!(prob, "{}", cells.join(",")).unwrap();
    }
    let stem = format!("{event}_{issue_time}");
    let mut outputs = Outputs::new();
    outputs.create_dir(&cfg.out_dir)?;
    outputs.write(&cfg.out_dir.join(format!("prob_{stem}.csv")), prob)?;
    outputs.write(&cfg.out_dir.join(format!("overlay_{stem}.csv")), grid_overlay.to_csv())?;
    outputs.write(&cfg.out_dir.join(format!("overlay_{stem}.pgm")), grid_overlay.to_pgm())?;
    let h = grid_overlay.histogram();
    writeln!(
        out,
        "{event} @ {issue_time}: {}x{} cells  hits {}  misses {}  false alarms {}  correct nulls {}",
        grid.cell_rows, grid.cell_cols, h.hits, h.misses, h.false_alarms, h.correct_nulls
    )?;
    outputs.commit();
    Ok(true)
}

/// Finite-difference check of backpropagation on small random networks.
pub fn cmd_gradcheck(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let mut ok = true;
    for (i, arch) in random_small_architectures(cfg.net.seed, 5).iter().enumerate() {
        let r = gradient_check(arch, 3, cfg.net.seed.wrapping_add(i as u64), DEFAULT_EPS)?;
        let pass = r.passed(DEFAULT_TOLERANCE);
        ok &= pass;
        writeln!(
            out,
            "config {i}: {} params, {} layers, {} slices of {}x{}: max rel. err {:.3e} {}",
            r.n_params,
            arch.layers.len(),
            arch.slices,
            arch.side,
            arch.side,
            r.max_rel_err,
            if pass { "PASS" } else { "FAIL" }
        )?;
    }
    writeln!(out, "gradient check {}", if ok { "passed" } else { "FAILED" })?;
    Ok(ok)
}

/// Fused-kernel exactness on random inputs and the MAC savings of fusion.
pub fn cmd_fuse_demo(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    const N: usize = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.net.seed);
    let mut max_diff = 0.0f64;
    for _ in 0..20 {
        let (p, q, h) = (3, 2, 2 * rng.gen_range(3..8) + N - 1);
        let mut rand_tensor =
            |shape: &[usize]| Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0f64));
        let x = rand_tensor(&[p, h, h]);
        let w = rand_tensor(&[q, p, N, N]);
        let bias = vec![0.0; q];
        let pipeline = avg_pool2x2(&conv2d(&x, &w, &bias, 1, Padding::Valid)?)?;
        let fused = conv2d(&x, &fuse_conv_pool(&w, N)?, &bias, 2, Padding::Valid)?;
        max_diff = max_diff.max(pipeline.max_abs_diff(&fused));
    }
    let cost = fused_savings(N, 128, 128, 18, 18);
    let exact = max_diff < 1e-6;
    let saves = cost.savings >= 0.60;
    writeln!(
        out,
        "fused 5x5/2 kernel vs 4x4 conv + 2x2 average pool: max abs diff {max_diff:.3e} {}",
        if exact { "PASS" } else { "FAIL" }
    )?;
    writeln!(
        out,
        "MACs at 128->128 channels on 18x18: conv+pool {}, fused {}, savings {:.1}% {}",
        cost.conv_pool_macs,
        cost.fused_macs,
        100.0 * cost.savings,
        if saves { "PASS" } else { "FAIL" }
    )?;
    Ok(exact && saves)
}
