use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::CubeError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitMode {
    /// Seeded shuffle, then `k` contiguous folds. Temporal adjacency is
    /// ignored.
    KFold { k: usize, seed: u64 },
    /// Partition by originating event.
    EventHoldout {
        train: Vec<String>,
        test: Vec<String>,
    },
}

/// A split mode resolved against a concrete sample list.
///
/// `assignment[i]` is the test fold of sample `i` (k-fold), or
/// `0` = train / `1` = test / `None` = unused (event holdout).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub assignment: Vec<Option<usize>>,
}

impl SplitPlan {
    pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Self, CubeError> {
        if k < 2 {
            return Err(CubeError::BadFoldCount(k));
        }
        if k > n {
            return Err(CubeError::TooFewSamples { k, n });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut assignment = vec![None; n];
        let (base, extra) = (n / k, n % k);
        let mut pos = 0;
        for fold in 0..k {
            let size = base + usize::from(fold < extra);
            for &i in &order[pos..pos + size] {
                assignment[i] = Some(fold);
            }
            pos += size;
        }
        Ok(SplitPlan {
            mode: SplitMode::KFold { k, seed },
            assignment,
        })
    }

    /// `sample_events[i]` is the event id of sample `i`.
    pub fn event_holdout<S: AsRef<str>>(
        sample_events: &[S],
        train: &[String],
        test: &[String],
    ) -> Result<Self, CubeError> {
        if let Some(dup) = train.iter().find(|e| test.contains(e)) {
            return Err(CubeError::OverlappingEvents(dup.clone()));
        }
        for id in train.iter().chain(test) {
            if !sample_events.iter().any(|e| e.as_ref() == id) {
                return Err(CubeError::UnknownEvent(id.clone()));
            }
        }
        let assignment = sample_events
            .iter()
            .map(|e| {
                let e = e.as_ref();
                if train.iter().any(|t| t == e) {
                    Some(0)
                } else if test.iter().any(|t| t == e) {
                    Some(1)
                } else {
                    None
                }
            })
            .collect();
        Ok(SplitPlan {
            mode: SplitMode::EventHoldout {
                train: train.to_vec(),
                test: test.to_vec(),
            },
            assignment,
        })
    }

    pub fn n_partitions(&self) -> usize {
        match &self.mode {
            SplitMode::KFold { k, .. } => *k,
            SplitMode::EventHoldout { .. } => 1,
        }
    }

    /// Sample indices `(train, test)` for partition `p`, in ascending order.
    pub fn indices(&self, p: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, a) in self.assignment.iter().enumerate() {
            match (&self.mode, a) {
                (SplitMode::KFold { .. }, Some(f)) if *f == p => test.push(i),
                (SplitMode::KFold { .. }, Some(_)) => train.push(i),
                (SplitMode::EventHoldout { .. }, Some(0)) => train.push(i),
                (SplitMode::EventHoldout { .. }, Some(1)) => test.push(i),
                _ => {}
            }
        }
        (train, test)
    }
}

/// `(train, test)` per fold or partition.
pub fn split<T: Clone>(samples: &[T], plan: &SplitPlan) -> Vec<(Vec<T>, Vec<T>)> {
    assert_eq!(
        samples.len(),
        plan.assignment.len(),
        "plan was built for a different sample count"
    );
    (0..plan.n_partitions())
        .map(|p| {
            let (tr, te) = plan.indices(p);
            (
                tr.iter().map(|&i| samples[i].clone()).collect(),
                te.iter().map(|&i| samples[i].clone()).collect(),
            )
        })
        .collect()
}
