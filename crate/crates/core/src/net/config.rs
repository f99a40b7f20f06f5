use super::conv::{ConvGeometry, Padding};
use super::NetError;
use crate::cubegen::CHANNELS;

pub const N_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// First layer: every (channel, slice) plane convolved and summed into
    /// each output map.
    CrossChannel3D,
    Conv2D,
}

impl LayerKind {
    pub fn code(self) -> u8 {
        match self {
            LayerKind::CrossChannel3D => 0,
            LayerKind::Conv2D => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LayerKind::CrossChannel3D),
            1 => Some(LayerKind::Conv2D),
            _ => None,
        }
    }
}

/// One convolutional layer; padding is always "same".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub out_maps: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
}

impl LayerSpec {
    pub fn cross_channel(out_maps: usize, k: usize, stride: usize) -> Self {
        LayerSpec {
            kind: LayerKind::CrossChannel3D,
            out_maps,
            kernel: (k, k),
            stride,
        }
    }

    pub fn conv2d(out_maps: usize, k: usize, stride: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv2D,
            out_maps,
            kernel: (k, k),
            stride,
        }
    }
}

/// Network shape: input cube geometry plus the layer stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub channels: usize,
    pub slices: usize,
    pub side: usize,
    pub layers: Vec<LayerSpec>,
}

impl Default for Architecture {
    /// 80 → 128 → 128 → 128 → 2 maps, strides 1,2,1,2,1, 5×5 kernels and a
    /// final 3×3, on 6×20×18×18 cubes.
    fn default() -> Self {
        Architecture {
            channels: CHANNELS,
            slices: 20,
            side: 18,
            layers: vec![
                LayerSpec::cross_channel(80, 5, 1),
                LayerSpec::conv2d(128, 5, 2),
                LayerSpec::conv2d(128, 5, 1),
                LayerSpec::conv2d(128, 5, 2),
                LayerSpec::conv2d(N_CLASSES, 3, 1),
            ],
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Config(m));
        if self.channels == 0 || self.slices == 0 || self.side == 0 {
            return bad(format!(
                "input geometry must be non-empty, got {}x{}x{}",
                self.channels, self.slices, self.side
            ));
        }
        let Some(first) = self.layers.first() else {
            return bad("no layers".into());
        };
        if first.kind != LayerKind::CrossChannel3D {
            return bad("the first layer must be the cross-channel 3D convolution".into());
        }
        if self.layers[1..].iter().any(|l| l.kind != LayerKind::Conv2D) {
            return bad("only the first layer may be cross-channel".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.out_maps == 0 {
                return bad(format!("layer {} has no output maps", i + 1));
            }
            if l.kernel.0 % 2 == 0 || l.kernel.1 % 2 == 0 {
                return bad(format!("layer {} kernel {:?} must be odd-sided", i + 1, l.kernel));
            }
            if !(l.stride == 1 || l.stride == 2) {
                return bad(format!("layer {} stride {} not in {{1, 2}}", i + 1, l.stride));
            }
        }
        if self.layers.last().unwrap().out_maps != N_CLASSES {
            return bad(format!("the last layer must have {N_CLASSES} maps"));
        }
        Ok(())
    }

    /// Input planes seen by layer `i`.
    pub fn in_planes(&self, i: usize) -> usize {
        if i == 0 {
            self.channels * self.slices
        } else {
            self.layers[i - 1].out_maps
        }
    }

    /// Per-layer convolution geometry, in order.
    pub fn geometries(&self) -> Result<Vec<ConvGeometry>, NetError> {
        let mut side = self.side;
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let g = ConvGeometry::new(self.in_planes(i), side, side, l.kernel, l.stride, Padding::Same)?;
            side = g.out_h;
            out.push(g);
        }
        Ok(out)
    }

    /// Output side length after each layer.
    pub fn spatial_trace(&self) -> Vec<usize> {
        let mut side = self.side;
        self.layers
            .iter()
            .map(|l| {
                side = side.div_ceil(l.stride);
                side
            })
            .collect()
    }

    pub fn input_len(&self) -> usize {
        self.channels * self.slices * self.side * self.side
    }
}

/// Architecture plus training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScnConfig {
    pub arch: Architecture,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub eval_every: usize,
    pub seed: u64,
    /// Loss weights for classes 0 and 1.
    pub class_weights: (f64, f64),
    /// A cell is forecast active when the class-1 probability is strictly above this.
    pub threshold: f64,
}

impl Default for ScnConfig {
    fn default() -> Self {
        ScnConfig {
            arch: Architecture::default(),
            learning_rate: 0.001,
            batch_size: 64,
            iterations: 100_000,
            eval_every: 1000,
            seed: 0,
            class_weights: (1.0, 1.0),
            threshold: 0.5,
        }
    }
}

impl ScnConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        self.arch.validate()?;
        let bad = |m: String| Err(NetError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return bad("batch_size and eval_every must be >= 1".into());
        }
        let (w0, w1) = self.class_weights;
        if !(w0 > 0.0 && w1 > 0.0 && w0.is_finite() && w1.is_finite()) {
            return bad(format!("class weights {:?} must be positive", self.class_weights));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {} outside [0, 1]", self.threshold));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_trace() {
        let a = Architecture::default();
        a.validate().unwrap();
        assert_eq!(a.spatial_trace(), vec![18, 9, 9, 5, 5]);
        let g = a.geometries().unwrap();
        assert_eq!(g.iter().map(|g| g.out_h).collect::<Vec<_>>(), vec![18, 9, 9, 5, 5]);
        assert_eq!(g[0].in_planes, 120);
    }

    #[test]
    fn invalid_architectures() {
        let mut a = Architecture::default();
        a.layers[1].stride = 3;
        assert!(a.validate().is_err());
        let mut a = Architecture::default();
        a.layers[2].kernel = (4, 4);
        assert!(a.validate().is_err());
        let mut a = Architecture::default();
        a.layers.swap(0, 1);
        assert!(a.validate().is_err());
        let mut a = Architecture::default();
        a.layers[4].out_maps = 3;
        assert!(a.validate().is_err());
    }
}
