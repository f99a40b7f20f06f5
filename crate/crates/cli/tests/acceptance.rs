//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the report is
//! always printed.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scn_cli::{cmd_eval, cmd_gen, cmd_train, RunConfig};
use scn_core::cubegen::{
    eligible_frames, extract_window, label_cell, sample_count, window_side, PreparedEvent,
};
use scn_core::gridstore::{
    read_field, write_field, DomainGrid, EventSeries, Frame, GriddedField, Variable,
};
use scn_core::net::{
    avg_pool2x2, conv2d, conv3d_cross_channel, decode_model, encode_model, flatten_planes,
    fuse_conv_pool, fused_savings, gradient_check, param_count, random_small_architectures,
    Architecture, Padding, ScnModel, Tensor, DEFAULT_EPS, DEFAULT_TOLERANCE,
};
use scn_core::verify::{roc, ContingencyTable};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let archs = random_small_architectures(2024, 6);
    let mut worst: f64 = 0.0;
    let mut params = 0;
    for (i, arch) in archs.iter().enumerate() {
        match gradient_check(arch, 3, 100 + i as u64, DEFAULT_EPS) {
            Ok(r) => {
                worst = worst.max(r.max_rel_err);
                params += r.n_params;
            }
            Err(e) => return outcome(false, format!("config {i}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < DEFAULT_TOLERANCE && elapsed < Duration::from_secs(120),
        format!(
            "{} configs, {params} parameters, max rel. err {worst:.2e} (< 1e-4), {:.1}s (< 120s)",
            archs.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn cross_channel_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (c, s) = (6, rng.gen_range(1..5));
        let (h, w) = (rng.gen_range(3..10), rng.gen_range(3..10));
        let (k, ks) = (rng.gen_range(1..4), [1, 3, 5][rng.gen_range(0..3)]);
        let x = rand_tensor(&mut rng, &[c, s, h, w]);
        let wt = rand_tensor(&mut rng, &[k, c, s, ks, ks]);
        let bias: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let direct = conv3d_cross_channel(&x, &wt, &bias).unwrap();
        let flat_w = wt.clone().reshape(&[k, c * s, ks, ks]).unwrap();
        let flat = conv2d(&flatten_planes(&x).unwrap(), &flat_w, &bias, 1, Padding::Same).unwrap();
        worst = worst.max(direct.max_abs_diff(&flat));
    }
    outcome(
        worst < 1e-10,
        format!("100 random cubes, max abs diff {worst:.2e} (< 1e-10, f64)"),
    )
}

fn parameter_count() -> Outcome {
    let n = param_count(&Architecture::default());
    let rel = (n as f64 - 1.36e6).abs() / 1.36e6;
    let model = ScnModel::<f32>::zeros(&Architecture::default()).unwrap();
    outcome(
        n == 1_317_970 && model.param_count() == n && rel < 0.05,
        format!("{n} (expected 1,317,970), {:.1}% from 1.36 M", 100.0 * rel),
    )
}

fn fusion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (p, q) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let h = 2 * rng.gen_range(1..6) + 3;
        let w = 2 * rng.gen_range(1..6) + 3;
        let x = rand_tensor(&mut rng, &[p, h, w]);
        let k = rand_tensor(&mut rng, &[q, p, 4, 4]);
        let bias: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pipeline = avg_pool2x2(&conv2d(&x, &k, &bias, 1, Padding::Valid).unwrap()).unwrap();
        let fused = conv2d(&x, &fuse_conv_pool(&k, 4).unwrap(), &bias, 2, Padding::Valid).unwrap();
        worst = worst.max(pipeline.max_abs_diff(&fused));
    }
    let cost = fused_savings(4, 128, 128, 18, 18);
    outcome(
        worst < 1e-6 && cost.savings >= 0.60,
        format!(
            "100 random inputs, max abs diff {worst:.2e} (< 1e-6); savings {:.1}% (>= 60%)",
            100.0 * cost.savings
        ),
    )
}

/// Exact rational `n/d` with cross-multiplied comparisons.
#[derive(Clone, Copy)]
struct Ratio(i128, i128);

impl Ratio {
    fn inv(self) -> Ratio {
        Ratio(self.1, self.0)
    }
    fn add(self, o: Ratio) -> Ratio {
        Ratio(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    fn sub_one(self) -> Ratio {
        Ratio(self.0 - self.1, self.1)
    }
    fn eq(self, o: Ratio) -> bool {
        self.0 * o.1 == o.0 * self.1
    }
    fn le(self, o: Ratio) -> bool {
        self.0 * o.1 <= o.0 * self.1
    }
}

fn csi_from(pod: f64, far: f64) -> f64 {
    1.0 / (1.0 / pod + 1.0 / (1.0 - far) - 1.0)
}

fn metric_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let t = ContingencyTable::new(
            rng.gen_range(1..100_000),
            rng.gen_range(0..100_000),
            rng.gen_range(0..100_000),
            rng.gen_range(0..1_000_000),
        );
        let (h, m, f) = (t.hits as i128, t.misses as i128, t.false_alarms as i128);
        let csi = Ratio(h, h + m + f);
        let pod = Ratio(h, h + m);
        let one_minus_far = Ratio(h, h + f);
        let ok = csi.le(pod)
            && csi.le(one_minus_far)
            && csi.inv().eq(pod.inv().add(one_minus_far.inv()).sub_one())
            && (t.csi().value().unwrap() - csi.0 as f64 / csi.1 as f64).abs() < 1e-12;
        if !ok {
            return outcome(false, format!("identity fails for {t:?}"));
        }
    }
    // published (POD, FAR, CSI) rows, each rounded to two decimals
    let rows = [(0.63, 0.49, 0.39), (0.68, 0.37, 0.48), (0.52, 0.46, 0.36), (0.54, 0.37, 0.41)];
    let mut notes = Vec::new();
    for (pod, far, csi) in rows {
        let lo = csi_from(pod - 0.005, far + 0.005);
        let hi = csi_from(pod + 0.005, far - 0.005);
        if hi < csi - 0.005 || lo > csi + 0.005 {
            return outcome(false, format!("row {pod}/{far} -> [{lo:.3}, {hi:.3}] misses {csi}"));
        }
        notes.push(format!("{pod}/{far}->{:.3}~{csi}", csi_from(pod, far)));
    }
    outcome(
        true,
        format!("1000 random tables exact; table rows {}", notes.join(", ")),
    )
}

fn concordance(scores: &[f64], truth: &[u8]) -> f64 {
    let pos: Vec<f64> = (0..scores.len()).filter(|&i| truth[i] == 1).map(|i| scores[i]).collect();
    let neg: Vec<f64> = (0..scores.len()).filter(|&i| truth[i] == 0).map(|i| scores[i]).collect();
    let mut num = 0.0;
    for &p in &pos {
        for &n in &neg {
            num += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    num / (pos.len() * neg.len()) as f64
}

fn roc_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(2..80);
        let levels = rng.gen_range(2..20);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let mut truth: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        truth[0] = 0;
        truth[1] = 1;
        let auc = roc(&scores, &truth).unwrap().auc;
        worst = worst.max((auc - concordance(&scores, &truth)).abs());
    }
    let perfect = roc(&[0.9, 0.8, 0.7, 0.2, 0.1], &[1, 1, 1, 0, 0]).unwrap().auc;
    let scores: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
    let mut truth: Vec<u8> = (0..10_000).map(|i| u8::from(i % 2 == 0)).collect();
    truth.shuffle(&mut rng);
    let shuffled = roc(&scores, &truth).unwrap().auc;
    outcome(
        worst < 1e-12 && perfect == 1.0 && (shuffled - 0.5).abs() <= 0.05,
        format!(
            "1000 sets, max |AUC - concordance| {worst:.1e}; perfect {perfect}; shuffled {shuffled:.4}"
        ),
    )
}

/// Desk-scale training settings shared by the learnability and
/// determinism runs.
const DESK_CONFIG: &str = "\
net.learning_rate = 0.001
net.batch_size = 64
net.iterations = 300
net.eval_every = 50
net.eval_subsample = 2000
seed = 1
";

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_default()
}

fn scores_row(csv: &str, event: &str) -> Option<Vec<String>> {
    csv.lines()
        .map(|l| l.split(',').map(String::from).collect::<Vec<_>>())
        .find(|cols| cols[0] == event)
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::parse(DESK_CONFIG).unwrap();
    cfg.out_dir = dir.path().to_path_buf();
    let mut log = Vec::new();
    let run = cmd_gen(&cfg, &mut log)
        .and_then(|ok| Ok(ok && cmd_train(&cfg, &mut log)?))
        .and_then(|ok| Ok(ok && cmd_eval(&cfg, &mut log)?));
    match run {
        Ok(true) => {}
        Ok(false) => return outcome(false, format!("a stage reported failure:\n{}", String::from_utf8_lossy(&log))),
        Err(e) => return outcome(false, format!("pipeline error: {e:#}")),
    }
    let scores = read(&dir.path().join("scores.csv"));
    let Some(all) = scores_row(&scores, "all") else {
        return outcome(false, "scores.csv has no pooled row");
    };
    let num = |s: &str| s.parse::<f64>().ok();
    let counts: Vec<u64> = all[1..5].iter().map(|v| v.parse().unwrap()).collect();
    let base = (counts[0] + counts[1]) as f64 / counts.iter().sum::<u64>() as f64;
    let (csi, auc) = (num(&all[7]), num(&all[8]));
    let per_event: Vec<String> = ["ev5", "ev6"]
        .iter()
        .filter_map(|e| scores_row(&scores, e))
        .map(|r| format!("{} auc {} csi {}", r[0], r[8], r[7]))
        .collect();
    let elapsed = start.elapsed();
    let pass = auc.is_some_and(|a| a > 0.9) && csi.is_some_and(|c| c > base);
    outcome(
        pass,
        format!(
            "held-out AUC {} (> 0.9), CSI {} (> base rate {base:.4}); {}; 300 iterations, {:.0}s",
            all[8],
            all[7],
            per_event.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

fn pipeline_artifacts(root: &Path) -> Vec<(String, Vec<u8>)> {
    let cfg_text = "\
grid.cell_rows = 6
grid.cell_cols = 7
grid.levels = 4
synth.events = 3
synth.frames = 6
synth.storms_min = 2
synth.storms_max = 4
net.layers = cc:8:5:1, conv:8:5:2, conv:2:3:1
net.iterations = 30
net.batch_size = 16
net.eval_every = 10
net.learning_rate = 0.01
split.test = ev2
eval.events = ev2
seed = 3
";
    let mut cfg = RunConfig::parse(cfg_text).unwrap();
    cfg.out_dir = root.to_path_buf();
    let mut log = Vec::new();
    cmd_gen(&cfg, &mut log).unwrap();
    cmd_train(&cfg, &mut log).unwrap();
    cmd_eval(&cfg, &mut log).unwrap();
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = pipeline_artifacts(a.path());
    let fb = pipeline_artifacts(b.path());
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    let has = |n: &str| names.contains(&n);
    let same = fa == fb;
    outcome(
        same && has("model.scn") && has("scores.csv") && has("history.csv"),
        format!(
            "{} artifacts (model.scn, scores.csv, history.csv, ROC, events) byte-identical: {same}",
            fa.len()
        ),
    )
}

fn data_layer() -> Outcome {
    let p = 3;
    let grid = DomainGrid::new(3, 3, p, 2).unwrap();
    let value = |f: usize, l: usize, r: usize, c: usize| (f * 1000 + l * 100 + r * 10 + c) as f32 * 0.01;
    let frames: Vec<Frame> = (0..5)
        .map(|f| {
            let ts = 900 * f as u64;
            Frame {
                w: GriddedField::from_fn(Variable::W, ts, &grid, |l, r, c| value(f, l, r, c)),
                byc: GriddedField::from_fn(Variable::Byc, ts, &grid, |l, r, c| -value(f, l, r, c)),
                r: GriddedField::from_fn(Variable::R, ts, &grid, |l, r, c| {
                    if (l, r, c) == (1, 4, 8 - f) { 35.0 + f as f32 * 0.25 } else { 0.0 }
                }),
            }
        })
        .collect();
    let series = EventSeries { grid, cadence: 900, frames };
    let mut failures = Vec::new();

    for n in 0..8 {
        let brute = (0..n).filter(|&t| t >= 1 && t + 2 < n).count() * 9;
        if sample_count(n, &grid) != brute || eligible_frames(n).len() * 9 != brute {
            failures.push(format!("sample count n={n}"));
        }
    }
    let side = window_side(&grid);
    for f in 0..5 {
        for (r, c) in (0..3).flat_map(|r| (0..3).map(move |c| (r, c))) {
            let field = &series.frames[f].w;
            let win = extract_window(field, &grid, (r, c)).unwrap();
            for l in 0..2 {
                for wr in 0..side {
                    for wc in 0..side {
                        let (pr, pc) = ((r * p + wr) as i64 - p as i64, (c * p + wc) as i64 - p as i64);
                        let inside = (0..9).contains(&pr) && (0..9).contains(&pc);
                        let want = if inside { field.get(l, pr as usize, pc as usize) } else { 0.0 };
                        if win[(l * side + wr) * side + wc] != want {
                            failures.push(format!("window f{f} cell ({r},{c})"));
                        }
                    }
                }
            }
            let rf = &series.frames[f].r;
            let brute = (0..2).any(|l| {
                (r * p..r * p + p).any(|pr| (c * p..c * p + p).any(|pc| rf.get(l, pr, pc) > 35.0))
            });
            if label_cell(rf, &grid, (r, c)).unwrap() != u8::from(brute) {
                failures.push(format!("label f{f} cell ({r},{c})"));
            }
        }
    }
    // 35.0 exactly (frame 0) is not a storm
    if label_cell(&series.frames[0].r, &grid, (1, 2)).unwrap() != 0 {
        failures.push("threshold is not strict".into());
    }
    let ev = PreparedEvent::new("toy", series.clone()).unwrap();
    if ev.samples().len() != sample_count(5, &grid) {
        failures.push("prepared sample count".into());
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.sgf");
    write_field(&series.frames[3].w, &path).unwrap();
    let back = read_field(&path).unwrap();
    let bits = |f: &GriddedField| f.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    if back != series.frames[3].w || bits(&back) != bits(&series.frames[3].w) {
        failures.push("SGF1 round trip".into());
    }
    for arch in random_small_architectures(9, 4).iter().chain([&Architecture::default()]) {
        let m = ScnModel::<f32>::init(arch, 17).unwrap();
        let bytes = encode_model(&m);
        if encode_model(&decode_model(&bytes).unwrap()) != bytes {
            failures.push("SCN1 round trip".into());
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            "3x3-cell toy grid matches brute force; SGF1 and SCN1 round trips bit-exact".to_string()
        } else {
            format!("mismatches: {}", failures.join("; "))
        },
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient correctness", gradient_correctness),
        ("cross-channel oracle equivalence", cross_channel_oracle),
        ("parameter count", parameter_count),
        ("fusion exactness and cost", fusion),
        ("metric identities", metric_identities),
        ("ROC correctness", roc_correctness),
        ("end-to-end learnability", end_to_end),
        ("determinism", determinism),
        ("data-layer exactness", data_layer),
    ];
    let only: Option<usize> = std::env::var("SCN_ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) {
            continue;
        }
        let o = check();
        failed += usize::from(!o.pass);
        println!(
            "[{}] {}. {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
