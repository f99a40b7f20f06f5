use rayon::prelude::*;

use super::{CubeError, NormAccumulator, NormStats, PreparedEvent, SampleCube, SampleRef, CHANNELS};

const NORM_CHUNK: usize = 64;

/// Random-access labeled samples whose payload is written on demand.
pub trait SampleSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat payload length of every sample.
    fn input_len(&self) -> usize;

    fn label(&self, i: usize) -> u8;

    /// Writes the normalised payload of sample `i` into `out`.
    fn fill(&self, i: usize, out: &mut [f32]);
}

/// Already-normalised, materialised cubes.
impl SampleSource for Vec<SampleCube> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn input_len(&self) -> usize {
        self.first().map_or(0, |c| c.data.len())
    }

    fn label(&self, i: usize) -> u8 {
        self[i].label
    }

    fn fill(&self, i: usize, out: &mut [f32]) {
        out.copy_from_slice(&self[i].data);
    }
}

/// Samples from several prepared events, built lazily and normalised with
/// `norm`. Keeps memory at one event's fields rather than every cube.
#[derive(Debug, Clone)]
pub struct EventDataset<'a> {
    events: Vec<&'a PreparedEvent>,
    index: Vec<(usize, SampleRef)>,
    cube_len: usize,
    pub norm: NormStats,
}

impl<'a> EventDataset<'a> {
    pub fn new(events: &[&'a PreparedEvent], norm: NormStats) -> Result<Self, CubeError> {
        let first = events.first().ok_or(CubeError::Empty)?;
        let cube_len = first.cube_len();
        let mut index = Vec::new();
        for (e, ev) in events.iter().enumerate() {
            if ev.grid() != first.grid() {
                return Err(CubeError::DimsMismatch(
                    first.grid().dims(),
                    ev.grid().dims(),
                ));
            }
            index.extend(ev.samples().into_iter().map(|s| (e, s)));
        }
        Ok(EventDataset {
            events: events.to_vec(),
            index,
            cube_len,
            norm,
        })
    }

    /// Keeps only the listed sample positions, in the given order.
    pub fn subset(&self, keep: &[usize]) -> Self {
        EventDataset {
            events: self.events.clone(),
            index: keep.iter().map(|&i| self.index[i]).collect(),
            cube_len: self.cube_len,
            norm: self.norm,
        }
    }

    pub fn sample(&self, i: usize) -> (&'a PreparedEvent, SampleRef) {
        let (e, s) = self.index[i];
        (self.events[e], s)
    }

    /// Per-channel statistics over every sample's raw payload.
    pub fn fit_norm(&self) -> Result<(NormStats, [bool; CHANNELS]), CubeError> {
        // fixed chunks merged in order keep the result independent of
        // thread scheduling
        let parts: Vec<NormAccumulator> = self
            .index
            .par_chunks(NORM_CHUNK)
            .map(|chunk| {
                let mut acc = NormAccumulator::new();
                let mut buf = vec![0.0; self.cube_len];
                for &(e, s) in chunk {
                    self.events[e].cube_into(&s, &mut buf);
                    acc.push(&buf);
                }
                acc
            })
            .collect();
        let mut acc = NormAccumulator::new();
        for p in &parts {
            acc.merge(p);
        }
        acc.finish()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.index.iter().map(|(_, s)| s.label).collect()
    }
}

impl SampleSource for EventDataset<'_> {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn input_len(&self) -> usize {
        self.cube_len
    }

    fn label(&self, i: usize) -> u8 {
        self.index[i].1.label
    }

    fn fill(&self, i: usize, out: &mut [f32]) {
        let (e, s) = self.index[i];
        self.events[e].cube_into(&s, out);
        self.norm.normalize(out);
    }
}
