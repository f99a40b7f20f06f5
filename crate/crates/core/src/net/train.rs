//! Minibatch SGD with periodic held-out scoring and best-CSI checkpointing.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ScnConfig;
use super::model::{Example, ScnModel};
use super::NetError;
use crate::cubegen::{NormStats, SampleSource};
use crate::verify::{classify, contingency, roc, ContingencyTable};

/// Held-out scores at one evaluation step.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub iteration: usize,
    /// Mean class-weighted cross-entropy on the evaluated samples.
    pub loss: f64,
    pub table: ContingencyTable,
    pub pod: Option<f64>,
    pub far: Option<f64>,
    pub csi: Option<f64>,
    /// `None` when the evaluated samples hold a single class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EvalRecord>,
    /// Iteration of the returned checkpoint, `None` when it is the final
    /// model because no evaluation produced a defined CSI.
    pub best_iteration: Option<usize>,
    /// Mean training minibatch loss over each evaluation interval.
    pub train_loss: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    /// Score periodic evaluations on a fixed random subset of this size.
    pub eval_subsample: Option<usize>,
    /// Return the best-CSI checkpoint instead of the final weights.
    pub keep_best: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            eval_subsample: None,
            keep_best: true,
        }
    }
}

const SHUFFLE_STREAM: u64 = 0x5eed_0001;
const SUBSAMPLE_STREAM: u64 = 0x5eed_0002;

/// Class-1 probability for every sample of `source`, in order.
pub fn predict<S: SampleSource + ?Sized>(model: &ScnModel<f32>, source: &S) -> Vec<f32> {
    predict_indices(model, source, &(0..source.len()).collect::<Vec<_>>())
}

fn predict_indices<S: SampleSource + ?Sized>(
    model: &ScnModel<f32>,
    source: &S,
    idx: &[usize],
) -> Vec<f32> {
    let n = source.input_len();
    idx.par_iter()
        .map_init(
            || vec![0.0f32; n],
            |buf, &i| {
                source.fill(i, buf);
                model.forward(buf)[1]
            },
        )
        .collect()
}

/// Scores `model` on `source`, or on the listed subset of it.
pub fn evaluate<S: SampleSource + ?Sized>(
    model: &ScnModel<f32>,
    source: &S,
    subset: Option<&[usize]>,
    config: &ScnConfig,
    iteration: usize,
) -> Result<EvalRecord, NetError> {
    let all: Vec<usize>;
    let idx = match subset {
        Some(s) => s,
        None => {
            all = (0..source.len()).collect();
            &all
        }
    };
    if idx.is_empty() {
        return Err(NetError::Data("empty evaluation set".into()));
    }
    let p1 = predict_indices(model, source, idx);
    let labels: Vec<u8> = idx.iter().map(|&i| source.label(i)).collect();
    let (w0, w1) = config.class_weights;
    let loss = p1
        .iter()
        .zip(&labels)
        .map(|(&p, &y)| {
            let (w, q) = if y == 1 { (w1, p as f64) } else { (w0, 1.0 - p as f64) };
            -w * q.max(1e-30).ln()
        })
        .sum::<f64>()
        / labels.len() as f64;
    let table = contingency(&classify(&p1, config.threshold), &labels)
        .map_err(|e| NetError::Data(e.to_string()))?;
    let scores: Vec<f64> = p1.iter().map(|&p| p as f64).collect();
    let auc = roc(&scores, &labels).ok().map(|r| r.auc);
    Ok(EvalRecord {
        iteration,
        loss,
        table,
        pod: table.pod().value(),
        far: table.far().value(),
        csi: table.csi().value(),
        auc,
    })
}

pub fn train<S, E>(
    train_set: &S,
    eval_set: &E,
    config: &ScnConfig,
    norm: NormStats,
) -> Result<(ScnModel<f32>, TrainHistory), NetError>
where
    S: SampleSource + ?Sized,
    E: SampleSource + ?Sized,
{
    train_with(train_set, eval_set, config, norm, TrainOptions::default(), |_| {})
}

/// Trains from a seeded initialisation. Minibatches are drawn from a
/// per-epoch shuffle; every `eval_every` iterations the model is scored on
/// `eval_set` and `on_eval` is called with the record.
pub fn train_with<S, E>(
    train_set: &S,
    eval_set: &E,
    config: &ScnConfig,
    norm: NormStats,
    options: TrainOptions,
    mut on_eval: impl FnMut(&EvalRecord),
) -> Result<(ScnModel<f32>, TrainHistory), NetError>
where
    S: SampleSource + ?Sized,
    E: SampleSource + ?Sized,
{
    config.validate()?;
    let n_in = config.arch.input_len();
    if train_set.is_empty() || eval_set.is_empty() {
        return Err(NetError::Data("training and evaluation sets must be non-empty".into()));
    }
    for (name, len) in [("training", train_set.input_len()), ("evaluation", eval_set.input_len())] {
        if len != n_in {
            return Err(NetError::Data(format!(
                "{name} samples have {len} values, architecture expects {n_in}"
            )));
        }
    }

    let mut model = ScnModel::<f32>::init(&config.arch, config.seed)?;
    model.norm = norm;

    let eval_idx: Vec<usize> = match options.eval_subsample {
        Some(m) if m < eval_set.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SUBSAMPLE_STREAM);
            let mut v = index::sample(&mut rng, eval_set.len(), m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..eval_set.len()).collect(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut rng);
    let mut pos = 0;

    let lr = config.learning_rate as f32;
    let mut bufs = vec![vec![0.0f32; n_in]; config.batch_size];
    let mut labels = vec![0u8; config.batch_size];
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ScnModel<f32>)> = None;
    let mut interval_loss = 0.0;
    let mut interval_n = 0usize;

    for it in 1..=config.iterations {
        let mut picks = Vec::with_capacity(config.batch_size);
        while picks.len() < config.batch_size {
            if pos == order.len() {
                order.shuffle(&mut rng);
                pos = 0;
            }
            picks.push(order[pos]);
            pos += 1;
        }
        bufs.par_iter_mut()
            .zip(labels.par_iter_mut())
            .zip(picks.par_iter())
            .for_each(|((buf, label), &i)| {
                train_set.fill(i, buf);
                *label = train_set.label(i);
            });
        let batch: Vec<Example<f32>> = bufs
            .iter()
            .zip(&labels)
            .map(|(b, &label)| Example { input: b, label })
            .collect();
        let (loss, grads) = model.loss_and_grad(&batch, config.class_weights);
        if !loss.is_finite() {
            return Err(NetError::Data(format!("training loss diverged at iteration {it}")));
        }
        model.sgd_step(&grads, lr)?;
        interval_loss += loss as f64;
        interval_n += 1;

        if it % config.eval_every == 0 {
            let rec = evaluate(&model, eval_set, Some(&eval_idx), config, it)?;
            history.train_loss.push(interval_loss / interval_n as f64);
            interval_loss = 0.0;
            interval_n = 0;
            if let Some(csi) = rec.csi {
                if best.as_ref().map_or(true, |(b, _)| csi > *b) {
                    best = Some((csi, model.clone()));
                    history.best_iteration = Some(it);
                }
            }
            on_eval(&rec);
            history.records.push(rec);
        }
    }

    match best {
        Some((_, m)) if options.keep_best => Ok((m, history)),
        _ => {
            history.best_iteration = None;
            Ok((model, history))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubegen::SampleCube;
    use crate::net::config::{Architecture, LayerSpec};

    fn tiny_arch() -> Architecture {
        Architecture {
            channels: 6,
            slices: 2,
            side: 4,
            layers: vec![LayerSpec::cross_channel(3, 3, 1), LayerSpec::conv2d(2, 3, 1)],
        }
    }

    /// Label 1 iff the mean of channel 4 is positive.
    fn toy_set(n: usize, seed: u64) -> Vec<SampleCube> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let label = rng.gen_range(0..2u8);
                let shift = if label == 1 { 1.0 } else { -1.0 };
                let data: Vec<f32> = (0..6 * 2 * 16)
                    .map(|j| rng.gen_range(-1.0..1.0) + if j / 32 == 4 { shift } else { 0.0 })
                    .collect();
                SampleCube {
                    data,
                    slices: 2,
                    side: 4,
                    label,
                    cell: (0, 0),
                    issue_time: 0,
                }
            })
            .collect()
    }

    fn cfg() -> ScnConfig {
        ScnConfig {
            arch: tiny_arch(),
            learning_rate: 0.05,
            batch_size: 8,
            iterations: 60,
            eval_every: 20,
            seed: 3,
            ..ScnConfig::default()
        }
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let (tr, te) = (toy_set(200, 1), toy_set(100, 2));
        let (m, h) = train(&tr, &te, &cfg(), NormStats::identity()).unwrap();
        assert_eq!(h.records.len(), 3);
        let last = evaluate(&m, &te, None, &cfg(), 0).unwrap();
        assert!(last.csi.unwrap() > 0.8, "{last:?}");
        assert!(h.best_iteration.is_some());
    }

    #[test]
    fn deterministic() {
        let (tr, te) = (toy_set(64, 1), toy_set(32, 2));
        let a = train(&tr, &te, &cfg(), NormStats::identity()).unwrap();
        let b = train(&tr, &te, &cfg(), NormStats::identity()).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0.layers[0].weights, b.0.layers[0].weights);
    }

    #[test]
    fn rejects_mismatched_payload() {
        let tr = toy_set(10, 1);
        let mut c = cfg();
        c.arch.slices = 3;
        assert!(train(&tr, &tr, &c, NormStats::identity()).is_err());
    }

    #[test]
    fn subsample_is_fixed_size() {
        let (tr, te) = (toy_set(32, 1), toy_set(50, 2));
        let opts = TrainOptions {
            eval_subsample: Some(10),
            keep_best: false,
        };
        let (_, h) = train_with(&tr, &te, &cfg(), NormStats::identity(), opts, |_| {}).unwrap();
        assert!(h.records.iter().all(|r| r.table.total() == 10));
        assert_eq!(h.best_iteration, None);
    }
}
