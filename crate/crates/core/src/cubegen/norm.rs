use super::{CubeError, SampleCube, CHANNELS};

/// Standard deviations at or below this are treated as a constant channel.
const MIN_STD: f64 = 1e-9;

/// Per-channel standardisation fitted on training cubes only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl NormStats {
    /// Stats that leave data untouched.
    pub fn identity() -> Self {
        NormStats {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }

    /// Normalises one cube payload (`[channel][...]`) in place.
    pub fn normalize(&self, data: &mut [f32]) {
        let n = data.len() / CHANNELS;
        for (c, chunk) in data.chunks_exact_mut(n).enumerate() {
            let mean = self.mean[c] as f32;
            let inv = (1.0 / self.std[c]) as f32;
            for v in chunk {
                *v = (*v - mean) * inv;
            }
        }
    }
}

/// Streaming per-channel mean/variance (Chan et al. pairwise combination
/// of per-cube moments).
#[derive(Debug, Clone, Default)]
pub struct NormAccumulator {
    count: [f64; CHANNELS],
    mean: [f64; CHANNELS],
    m2: [f64; CHANNELS],
}

impl NormAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one raw cube payload.
    pub fn push(&mut self, data: &[f32]) {
        let n = data.len() / CHANNELS;
        for (c, chunk) in data.chunks_exact(n).enumerate() {
            let nb = chunk.len() as f64;
            let mb = chunk.iter().map(|&v| v as f64).sum::<f64>() / nb;
            let m2b = chunk
                .iter()
                .map(|&v| {
                    let d = v as f64 - mb;
                    d * d
                })
                .sum::<f64>();
            self.combine_channel(c, nb, mb, m2b);
        }
    }

    pub fn merge(&mut self, other: &NormAccumulator) {
        for c in 0..CHANNELS {
            self.combine_channel(c, other.count[c], other.mean[c], other.m2[c]);
        }
    }

    fn combine_channel(&mut self, c: usize, nb: f64, mb: f64, m2b: f64) {
        if nb == 0.0 {
            return;
        }
        let na = self.count[c];
        let n = na + nb;
        let delta = mb - self.mean[c];
        self.mean[c] += delta * nb / n;
        self.m2[c] += m2b + delta * delta * na * nb / n;
        self.count[c] = n;
    }

    pub fn is_empty(&self) -> bool {
        self.count[0] == 0.0
    }

    /// Population statistics; constant channels get `std = 1`.
    pub fn finish(&self) -> Result<(NormStats, [bool; CHANNELS]), CubeError> {
        if self.is_empty() {
            return Err(CubeError::Empty);
        }
        let mut stats = NormStats::identity();
        let mut degenerate = [false; CHANNELS];
        for c in 0..CHANNELS {
            stats.mean[c] = self.mean[c];
            let std = (self.m2[c] / self.count[c]).sqrt();
            if std > MIN_STD && std.is_finite() {
                stats.std[c] = std;
            } else {
                degenerate[c] = true;
            }
        }
        Ok((stats, degenerate))
    }
}

/// Fits per-channel statistics over every voxel of every training cube.
/// Returns the stats and a per-channel flag set where the std guard fired.
pub fn fit_norm(train: &[SampleCube]) -> Result<(NormStats, [bool; CHANNELS]), CubeError> {
    let mut acc = NormAccumulator::new();
    for cube in train {
        acc.push(&cube.data);
    }
    acc.finish()
}

pub fn apply_norm(samples: &[SampleCube], stats: &NormStats) -> Vec<SampleCube> {
    samples
        .iter()
        .map(|s| {
            let mut out = s.clone();
            stats.normalize(&mut out.data);
            out
        })
        .collect()
}
