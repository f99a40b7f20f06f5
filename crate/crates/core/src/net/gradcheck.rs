//! Central finite-difference check of the hand-derived backward pass.
//!
//! The numerical side only ever calls [`ScnModel::loss`], so it shares no
//! code with backpropagation beyond the forward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Architecture, LayerSpec};
use super::model::{Example, ScnModel};
use super::NetError;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub arch: Architecture,
    pub n_params: usize,
    pub max_rel_err: f64,
    /// `(layer, is_bias, index)` of the worst parameter.
    pub worst: (usize, bool, usize),
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Checks every parameter of a randomly initialised 64-bit model on a
/// random batch.
pub fn gradient_check(
    arch: &Architecture,
    batch_size: usize,
    seed: u64,
    eps: f64,
) -> Result<GradCheckReport, NetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = ScnModel::<f64>::init(arch, seed)?;
    for layer in &mut model.layers {
        for b in &mut layer.bias {
            *b = rng.gen_range(-0.1..0.1);
        }
    }
    let inputs: Vec<Vec<f64>> = (0..batch_size)
        .map(|_| (0..arch.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let labels: Vec<u8> = (0..batch_size).map(|i| (i % 2) as u8).collect();
    let batch: Vec<Example<f64>> = inputs
        .iter()
        .zip(&labels)
        .map(|(x, &label)| Example { input: x, label })
        .collect();
    let weights = (1.0, 2.5);

    let (_, grads) = model.loss_and_grad(&batch, weights);
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    let mut report = GradCheckReport {
        arch: arch.clone(),
        n_params: model.param_count(),
        max_rel_err: 0.0,
        worst: (0, false, 0),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    let n_slices = analytic.len();
    for s in 0..n_slices {
        for i in 0..analytic[s].len() {
            let orig = model.param_slices_mut()[s][i];
            model.param_slices_mut()[s][i] = orig + eps;
            let plus = model.loss(&batch, weights);
            model.param_slices_mut()[s][i] = orig - eps;
            let minus = model.loss(&batch, weights);
            model.param_slices_mut()[s][i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(analytic[s][i], numeric);
            if err > report.max_rel_err || !err.is_finite() {
                report.max_rel_err = err;
                report.worst = (s / 2, s % 2 == 1, i);
                report.worst_analytic = analytic[s][i];
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Small random architectures: a cross-channel first layer, one to three
/// 2D layers with mixed strides and kernel sizes, two output maps.
pub fn random_small_architectures(seed: u64, count: usize) -> Vec<Architecture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Architecture {
        channels: 6,
        slices: 2,
        side: 4,
        layers: vec![
            LayerSpec::cross_channel(2, 5, 1),
            LayerSpec::conv2d(4, 5, 2),
            LayerSpec::conv2d(2, 3, 1),
        ],
    }];
    while out.len() < count {
        let kernel = |rng: &mut ChaCha8Rng| [1, 3, 5][rng.gen_range(0..3)];
        let depth = rng.gen_range(1..=3);
        let mut layers = vec![LayerSpec::cross_channel(
            rng.gen_range(1..=3),
            kernel(&mut rng),
            rng.gen_range(1..=2),
        )];
        for d in 0..depth {
            let maps = if d + 1 == depth { 2 } else { rng.gen_range(1..=4) };
            layers.push(LayerSpec::conv2d(maps, kernel(&mut rng), rng.gen_range(1..=2)));
        }
        out.push(Architecture {
            channels: 6,
            slices: rng.gen_range(1..=3),
            side: rng.gen_range(3..=6),
            layers,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_config_passes() {
        let arch = &random_small_architectures(0, 1)[0];
        let r = gradient_check(arch, 3, 1, DEFAULT_EPS).unwrap();
        assert!(r.passed(DEFAULT_TOLERANCE), "{r:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // A perturbed analytic value must register as a large error.
        assert!(relative_error(1.0, 1.001) > 1e-4);
        assert!(relative_error(1e-9, 2e-9) < 1e-2);
    }

    #[test]
    fn random_architectures_are_valid() {
        for a in random_small_architectures(3, 8) {
            a.validate().unwrap();
        }
    }
}
