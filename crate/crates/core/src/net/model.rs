//! The 3D-SCN: forward pass, class-weighted cross-entropy, backpropagation
//! and the SGD update.
//!
//! Every layer is `ReLU(conv(x) + b)`. The first layer convolves all
//! `channels·slices` input planes into each output map, later layers are
//! ordinary multi-map 2D convolutions. Global average pooling of the final
//! two maps gives the logits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::activation::{gap_slice, relu_in_place};
use super::config::{Architecture, LayerSpec, N_CLASSES};
use super::conv::{conv_backward_cols, conv_forward_cols, im2col, ConvGeometry};
use super::{NetError, Real};
use crate::cubegen::NormStats;

/// Samples processed sequentially per parallel task. Partial gradients
/// are summed in chunk order, so results do not depend on thread count.
pub const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub spec: LayerSpec,
    pub geometry: ConvGeometry,
    /// `[out_maps][in_planes][kh][kw]`; for the first layer the plane index
    /// is `channel·slices + slice`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScnModel<T = f32> {
    pub arch: Architecture,
    pub layers: Vec<ConvLayer<T>>,
    pub norm: NormStats,
}

/// Parameter gradients, laid out like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub weights: Vec<Vec<T>>,
    pub bias: Vec<Vec<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &ScnModel<T>) -> Self {
        Gradients {
            weights: model
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.weights.len()])
                .collect(),
            bias: model
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.bias.len()])
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self
            .weights
            .iter_mut()
            .chain(self.bias.iter_mut())
            .zip(other.weights.iter().chain(other.bias.iter()))
        {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    /// Flat parameter order shared with [`ScnModel::param_slices_mut`]:
    /// `w1, b1, w2, b2, …`.
    pub fn slices(&self) -> Vec<&[T]> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v.abs().to_f64_lossy())
            .fold(0.0, f64::max)
    }
}

/// One normalised input cube with its label.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a, T> {
    pub input: &'a [T],
    pub label: u8,
}

/// Activations kept for the backward pass.
struct Trace<T> {
    cols: Vec<Vec<T>>,
    acts: Vec<Vec<T>>,
}

impl<T: Real> ScnModel<T> {
    /// All weights and biases zero.
    pub fn zeros(arch: &Architecture) -> Result<Self, NetError> {
        arch.validate()?;
        let layers = arch
            .geometries()?
            .into_iter()
            .zip(&arch.layers)
            .map(|(g, spec)| ConvLayer {
                spec: *spec,
                geometry: g,
                weights: vec![T::zero(); spec.out_maps * g.col_rows()],
                bias: vec![T::zero(); spec.out_maps],
            })
            .collect();
        Ok(ScnModel {
            arch: arch.clone(),
            layers,
            norm: NormStats::identity(),
        })
    }

    /// Fan-in scaled uniform weights `U(±sqrt(6 / fan_in))`, zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self, NetError> {
        let mut model = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let bound = (6.0 / layer.geometry.col_rows() as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::from_f64_lossy(rng.gen_range(-bound..bound));
            }
        }
        Ok(model)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn cast<U: Real>(&self) -> ScnModel<U> {
        let conv = |v: &[T]| -> Vec<U> { v.iter().map(|x| U::from_f64_lossy(x.to_f64_lossy())).collect() };
        ScnModel {
            arch: self.arch.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    spec: l.spec,
                    geometry: l.geometry,
                    weights: conv(&l.weights),
                    bias: conv(&l.bias),
                })
                .collect(),
            norm: self.norm,
        }
    }

    fn check_input(&self, input: &[T]) {
        assert_eq!(
            input.len(),
            self.arch.input_len(),
            "input cube length does not match the architecture"
        );
    }

    fn forward_trace(&self, input: &[T]) -> (Trace<T>, [T; N_CLASSES]) {
        self.check_input(input);
        let mut cols = Vec::with_capacity(self.layers.len());
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let g = &layer.geometry;
            let x = acts.last().map_or(input, |a| a.as_slice());
            let mut c = vec![T::zero(); g.col_rows() * g.out_positions()];
            im2col(g, x, &mut c);
            let mut out = vec![T::zero(); layer.spec.out_maps * g.out_positions()];
            conv_forward_cols(g, &layer.weights, &layer.bias, &c, &mut out);
            relu_in_place(&mut out);
            cols.push(c);
            acts.push(out);
        }
        let pooled = gap_slice(acts.last().unwrap(), N_CLASSES);
        (Trace { cols, acts }, [pooled[0], pooled[1]])
    }

    /// Logits (pooled final maps) for one normalised cube.
    pub fn logits(&self, input: &[T]) -> [T; N_CLASSES] {
        self.forward_trace(input).1
    }

    /// `(p0, p1)` for one normalised cube.
    pub fn forward(&self, input: &[T]) -> [T; N_CLASSES] {
        let z = self.logits(input);
        let m = z[0].max(z[1]);
        let e0 = (z[0] - m).exp();
        let e1 = (z[1] - m).exp();
        let s = e0 + e1;
        [e0 / s, e1 / s]
    }

    /// Mean class-weighted softmax cross-entropy over `batch`.
    pub fn loss(&self, batch: &[Example<'_, T>], class_weights: (f64, f64)) -> T {
        assert!(!batch.is_empty(), "empty batch");
        let total: T = batch
            .iter()
            .map(|ex| sample_loss(self.logits(ex.input), ex.label, class_weights))
            .sum();
        total / T::from_usize(batch.len()).unwrap()
    }

    /// Loss and its gradient with respect to every weight and bias.
    pub fn loss_and_grad(
        &self,
        batch: &[Example<'_, T>],
        class_weights: (f64, f64),
    ) -> (T, Gradients<T>) {
        assert!(!batch.is_empty(), "empty batch");
        let scale = T::one() / T::from_usize(batch.len()).unwrap();
        let partials: Vec<(T, Gradients<T>)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grads = Gradients::zeros_like(self);
                let mut loss = T::zero();
                for ex in chunk {
                    loss += self.backprop_one(ex, class_weights, scale, &mut grads);
                }
                (loss, grads)
            })
            .collect();
        let mut iter = partials.into_iter();
        let (mut loss, mut grads) = iter.next().unwrap();
        for (l, g) in iter {
            loss += l;
            grads.add_assign(&g);
        }
        (loss * scale, grads)
    }

    /// Accumulates `scale ·` d(loss of `ex`) into `grads`, returns the
    /// unscaled sample loss.
    fn backprop_one(
        &self,
        ex: &Example<'_, T>,
        class_weights: (f64, f64),
        scale: T,
        grads: &mut Gradients<T>,
    ) -> T {
        let (trace, z) = self.forward_trace(ex.input);
        let loss = sample_loss(z, ex.label, class_weights);

        // d loss / d logits = w_y (softmax(z) − onehot(y))
        let w_y = T::from_f64_lossy(if ex.label == 1 {
            class_weights.1
        } else {
            class_weights.0
        });
        let m = z[0].max(z[1]);
        let e0 = (z[0] - m).exp();
        let e1 = (z[1] - m).exp();
        let p = [e0 / (e0 + e1), e1 / (e0 + e1)];
        let mut dz = [p[0], p[1]];
        dz[ex.label as usize] -= T::one();

        let last = self.layers.len() - 1;
        let npos = self.layers[last].geometry.out_positions();
        let inv_pos = T::one() / T::from_usize(npos).unwrap();
        let mut grad: Vec<T> = (0..N_CLASSES * npos)
            .map(|i| dz[i / npos] * w_y * scale * inv_pos)
            .collect();

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            for (g, &a) in grad.iter_mut().zip(&trace.acts[li]) {
                if !(a > T::zero()) {
                    *g = T::zero();
                }
            }
            let mut grad_in = if li > 0 {
                Some(vec![T::zero(); layer.geometry.in_len()])
            } else {
                None
            };
            conv_backward_cols(
                &layer.geometry,
                &layer.weights,
                &trace.cols[li],
                &grad,
                &mut grads.weights[li],
                &mut grads.bias[li],
                grad_in.as_deref_mut(),
            );
            match grad_in {
                Some(g) => grad = g,
                None => break,
            }
        }
        loss
    }

    /// `w ← w − lr·g` for every parameter.
    pub fn sgd_step(&mut self, grads: &Gradients<T>, lr: T) -> Result<(), NetError> {
        if grads.weights.len() != self.layers.len() || grads.bias.len() != self.layers.len() {
            return Err(NetError::Shape("gradient layer count mismatch".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if grads.weights[i].len() != layer.weights.len() || grads.bias[i].len() != layer.bias.len() {
                return Err(NetError::Shape(format!("gradient shape mismatch in layer {}", i + 1)));
            }
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.weights.iter_mut().zip(&grads.weights[i]) {
                *w -= lr * *g;
            }
            for (b, g) in layer.bias.iter_mut().zip(&grads.bias[i]) {
                *b -= lr * *g;
            }
        }
        Ok(())
    }
}

fn sample_loss<T: Real>(z: [T; N_CLASSES], label: u8, class_weights: (f64, f64)) -> T {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    let w = if label == 1 {
        class_weights.1
    } else {
        class_weights.0
    };
    T::from_f64_lossy(w) * (lse - z[label as usize])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::config::LayerSpec;

    fn tiny_arch() -> Architecture {
        Architecture {
            channels: 6,
            slices: 2,
            side: 4,
            layers: vec![
                LayerSpec::cross_channel(2, 3, 1),
                LayerSpec::conv2d(4, 3, 2),
                LayerSpec::conv2d(2, 3, 1),
            ],
        }
    }

    fn random_input(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = ScnModel::<f32>::zeros(&Architecture::default()).unwrap();
        let x = vec![0.3f32; m.arch.input_len()];
        assert_eq!(m.forward(&x), [0.5, 0.5]);
    }

    #[test]
    fn uniform_prediction_loss_is_ln2() {
        let m = ScnModel::<f64>::zeros(&tiny_arch()).unwrap();
        let x = vec![1.0; m.arch.input_len()];
        let loss = m.loss(&[Example { input: &x, label: 1 }], (1.0, 1.0));
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn class_weight_scales_positive_batch_loss() {
        let m = ScnModel::<f64>::init(&tiny_arch(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<Vec<f64>> = (0..3).map(|_| random_input(&mut rng, m.arch.input_len())).collect();
        let batch: Vec<Example<f64>> = xs.iter().map(|x| Example { input: x, label: 1 }).collect();
        let a = m.loss(&batch, (1.0, 1.0));
        let b = m.loss(&batch, (1.0, 2.0));
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = ScnModel::<f32>::init(&tiny_arch(), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x: Vec<f32> = (0..m.arch.input_len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = m.forward(&x);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-6);
            assert!(p[0] > 0.0 && p[1] > 0.0);
        }
    }

    #[test]
    fn sgd_update_rule() {
        let mut m = ScnModel::<f32>::zeros(&tiny_arch()).unwrap();
        m.layers[0].weights[0] = 1.0;
        let mut g = Gradients::zeros_like(&m);
        g.weights[0][0] = 2.0;
        m.sgd_step(&g, 0.001).unwrap();
        assert!((m.layers[0].weights[0] - 0.998).abs() < 1e-7);

        let before = m.clone();
        m.sgd_step(&Gradients::zeros_like(&m), 0.001).unwrap();
        assert_eq!(m, before);

        let mut bad = Gradients::zeros_like(&m);
        bad.weights[1].pop();
        assert!(m.sgd_step(&bad, 0.1).is_err());
    }

    #[test]
    fn two_fixed_steps_equal_one_summed_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = ScnModel::<f64>::init(&tiny_arch(), 1).unwrap();
        let mut b = a.clone();
        let mut g = Gradients::zeros_like(&a);
        for s in g.weights.iter_mut().chain(g.bias.iter_mut()) {
            for v in s.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        a.sgd_step(&g, 0.01).unwrap();
        a.sgd_step(&g, 0.01).unwrap();
        let mut g2 = g.clone();
        g2.add_assign(&g);
        b.sgd_step(&g2, 0.01).unwrap();
        for (x, y) in a.layers.iter().zip(&b.layers) {
            for (p, q) in x.weights.iter().zip(&y.weights) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_small_step_decreases_sample_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for seed in 0..5 {
            let mut m = ScnModel::<f64>::init(&tiny_arch(), seed).unwrap();
            let x = random_input(&mut rng, m.arch.input_len());
            let ex = [Example { input: &x, label: (seed % 2) as u8 }];
            let (l0, g) = m.loss_and_grad(&ex, (1.0, 1.0));
            if g.max_abs() == 0.0 {
                continue;
            }
            m.sgd_step(&g, 1e-4).unwrap();
            let l1 = m.loss(&ex, (1.0, 1.0));
            assert!(l1 < l0, "seed {seed}: {l1} !< {l0}");
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_sample_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = ScnModel::<f64>::init(&tiny_arch(), 5).unwrap();
        let xs: Vec<Vec<f64>> = (0..9).map(|_| random_input(&mut rng, m.arch.input_len())).collect();
        let batch: Vec<Example<f64>> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| Example { input: x, label: (i % 2) as u8 })
            .collect();
        let (loss, g) = m.loss_and_grad(&batch, (1.0, 3.0));
        let mut sum = Gradients::zeros_like(&m);
        let mut lsum = 0.0;
        for ex in &batch {
            let (l, gi) = m.loss_and_grad(std::slice::from_ref(ex), (1.0, 3.0));
            lsum += l;
            sum.add_assign(&gi);
        }
        assert!((loss - lsum / 9.0).abs() < 1e-12);
        for (a, b) in g.slices().iter().zip(sum.slices()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y / 9.0).abs() < 1e-12);
            }
        }
    }
}
