//! Labeled six-channel cube samples built from an [`EventSeries`].
//!
//! Each sample is centred on one forecast cell at one issue time `t` and
//! stacks `(w, dw, byc, dbyc, R, dR)` windows over all levels, where the
//! `d*` channels are differences against `t − 15 min`. The label is 1 when
//! any pixel of the cell, at any level, exceeds 35 dBZ at `t + 30 min`.

mod dataset;
mod norm;
mod split;

pub use dataset::{EventDataset, SampleSource};
pub use norm::{apply_norm, fit_norm, NormAccumulator, NormStats};
pub use split::{split, SplitMode, SplitPlan};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::gridstore::{DomainGrid, EventSeries, GriddedField, Variable};

pub const CHANNELS: usize = 6;
pub const LABEL_THRESHOLD_DBZ: f32 = 35.0;
/// Frames between an issue time and its verification time.
pub const LABEL_LEAD_FRAMES: usize = 2;
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["w", "dw", "byc", "dbyc", "R", "dR"];

#[derive(Debug, thiserror::Error)]
pub enum CubeError {
    #[error("variable mismatch: {0} vs {1}")]
    VariableMismatch(Variable, Variable),
    #[error("dims mismatch: {0:?} vs {1:?}")]
    DimsMismatch([usize; 3], [usize; 3]),
    #[error("expected a {expected} s gap between fields, found {found} s")]
    TimeGap { expected: u64, found: i64 },
    #[error("cell ({row}, {col}) outside a {rows}x{cols} grid")]
    CellOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("series has {0} frames; at least 4 are needed")]
    SeriesTooShort(usize),
    #[error("empty training set")]
    Empty,
    #[error("k-fold split needs k >= 2, got {0}")]
    BadFoldCount(usize),
    #[error("k = {k} exceeds sample count {n}")]
    TooFewSamples { k: usize, n: usize },
    #[error("unknown event id {0:?}")]
    UnknownEvent(String),
    #[error("event {0:?} appears in both train and test sets")]
    OverlappingEvents(String),
    #[error("invalid series: {0}")]
    Series(#[from] crate::gridstore::GridError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed sample manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
}

/// One labeled instance: `data[channel][slice][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCube {
    pub data: Vec<f32>,
    pub slices: usize,
    pub side: usize,
    pub label: u8,
    pub cell: (usize, usize),
    pub issue_time: u64,
}

impl SampleCube {
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.slices * self.side * self.side;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_len(&self) -> usize {
        self.slices * self.side * self.side
    }
}

pub fn temporal_diff(curr: &GriddedField, prev: &GriddedField) -> Result<GriddedField, CubeError> {
    if curr.variable != prev.variable {
        return Err(CubeError::VariableMismatch(curr.variable, prev.variable));
    }
    if curr.dims() != prev.dims() {
        return Err(CubeError::DimsMismatch(curr.dims(), prev.dims()));
    }
    let gap = curr.timestamp as i64 - prev.timestamp as i64;
    if gap != crate::gridstore::DEFAULT_CADENCE as i64 {
        return Err(CubeError::TimeGap {
            expected: crate::gridstore::DEFAULT_CADENCE,
            found: gap,
        });
    }
    let values = curr
        .values()
        .iter()
        .zip(prev.values())
        .map(|(a, b)| a - b)
        .collect();
    Ok(GriddedField::new(curr.variable, curr.timestamp, curr.dims(), values)?)
}

fn check_cell(grid: &DomainGrid, (row, col): (usize, usize)) -> Result<(), CubeError> {
    if row >= grid.cell_rows || col >= grid.cell_cols {
        return Err(CubeError::CellOutOfBounds {
            row,
            col,
            rows: grid.cell_rows,
            cols: grid.cell_cols,
        });
    }
    Ok(())
}

/// Window side in pixels: the cell plus one cell-width border on each side.
pub fn window_side(grid: &DomainGrid) -> usize {
    3 * grid.pixels_per_cell_side
}

/// Copies the window around `cell` into `out` (`[levels][side][side]`),
/// zero-filling pixels outside the domain.
fn window_into(field: &GriddedField, grid: &DomainGrid, cell: (usize, usize), out: &mut [f32]) {
    let p = grid.pixels_per_cell_side as isize;
    let side = 3 * p as usize;
    let [levels, rows, cols] = field.dims();
    let top = cell.0 as isize * p - p;
    let left = cell.1 as isize * p - p;
    let values = field.values();
    // overlap of [left, left+side) with [0, cols)
    let c_lo = left.max(0);
    let c_hi = (left + side as isize).min(cols as isize);
    out.fill(0.0);
    for l in 0..levels {
        for wr in 0..side {
            let r = top + wr as isize;
            if r < 0 || r >= rows as isize || c_lo >= c_hi {
                continue;
            }
            let src = (l * rows + r as usize) * cols;
            let dst = (l * side + wr) * side + (c_lo - left) as usize;
            let n = (c_hi - c_lo) as usize;
            out[dst..dst + n].copy_from_slice(&values[src + c_lo as usize..src + c_hi as usize]);
        }
    }
}

/// The `[levels][3p][3p]` window centred on `cell`'s `p×p` pixel block.
pub fn extract_window(
    field: &GriddedField,
    grid: &DomainGrid,
    cell: (usize, usize),
) -> Result<Vec<f32>, CubeError> {
    check_cell(grid, cell)?;
    if !field.matches_grid(grid) {
        return Err(CubeError::DimsMismatch(field.dims(), grid.dims()));
    }
    let side = window_side(grid);
    let mut out = vec![0.0; grid.levels * side * side];
    window_into(field, grid, cell, &mut out);
    Ok(out)
}

/// 1 iff any pixel of the cell at any level is strictly above 35 dBZ.
pub fn label_cell(
    future_r: &GriddedField,
    grid: &DomainGrid,
    cell: (usize, usize),
) -> Result<u8, CubeError> {
    check_cell(grid, cell)?;
    if !future_r.matches_grid(grid) {
        return Err(CubeError::DimsMismatch(future_r.dims(), grid.dims()));
    }
    Ok(label_unchecked(future_r, grid, cell))
}

fn label_unchecked(future_r: &GriddedField, grid: &DomainGrid, (row, col): (usize, usize)) -> u8 {
    let p = grid.pixels_per_cell_side;
    let [levels, rows, cols] = future_r.dims();
    let v = future_r.values();
    for l in 0..levels {
        for r in row * p..(row + 1) * p {
            let base = (l * rows + r) * cols + col * p;
            if v[base..base + p].iter().any(|&x| x > LABEL_THRESHOLD_DBZ) {
                return 1;
            }
        }
    }
    0
}

/// Lightweight handle to one sample of a prepared event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRef {
    /// Index of the issue time within the prepared event's eligible times.
    pub time: usize,
    pub cell: (usize, usize),
    pub label: u8,
}

/// Indices of frames usable as issue times: those with a predecessor and a
/// verification frame two steps ahead.
pub fn eligible_frames(n_frames: usize) -> std::ops::Range<usize> {
    if n_frames < LABEL_LEAD_FRAMES + 2 {
        1..1
    } else {
        1..n_frames - LABEL_LEAD_FRAMES
    }
}

/// An event with its difference fields precomputed so cubes can be rebuilt
/// on demand without materialising the whole sample set.
#[derive(Debug, Clone)]
pub struct PreparedEvent {
    pub id: String,
    pub series: EventSeries,
    times: Vec<PreparedTime>,
}

#[derive(Debug, Clone)]
struct PreparedTime {
    frame: usize,
    diffs: [GriddedField; 3],
}

impl PreparedEvent {
    pub fn new(id: impl Into<String>, series: EventSeries) -> Result<Self, CubeError> {
        series.validate()?;
        if series.frames.len() < LABEL_LEAD_FRAMES + 2 {
            return Err(CubeError::SeriesTooShort(series.frames.len()));
        }
        let times = eligible_frames(series.frames.len())
            .map(|f| {
                let curr = &series.frames[f];
                let prev = &series.frames[f - 1];
                Ok(PreparedTime {
                    frame: f,
                    diffs: [
                        temporal_diff(&curr.w, &prev.w)?,
                        temporal_diff(&curr.byc, &prev.byc)?,
                        temporal_diff(&curr.r, &prev.r)?,
                    ],
                })
            })
            .collect::<Result<Vec<_>, CubeError>>()?;
        Ok(PreparedEvent {
            id: id.into(),
            series,
            times,
        })
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.series.grid
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    /// Frame index of the `time`-th eligible issue time.
    pub fn issue_frame(&self, time: usize) -> usize {
        self.times[time].frame
    }

    pub fn issue_timestamp(&self, time: usize) -> u64 {
        self.series.frames[self.times[time].frame].timestamp()
    }

    pub fn cube_len(&self) -> usize {
        let side = window_side(self.grid());
        CHANNELS * self.grid().levels * side * side
    }

    /// Every sample, time-major then row-major over cells.
    pub fn samples(&self) -> Vec<SampleRef> {
        let grid = *self.grid();
        let mut out = Vec::with_capacity(self.times.len() * grid.n_cells());
        for (ti, t) in self.times.iter().enumerate() {
            let future = &self.series.frames[t.frame + LABEL_LEAD_FRAMES].r;
            for row in 0..grid.cell_rows {
                for col in 0..grid.cell_cols {
                    out.push(SampleRef {
                        time: ti,
                        cell: (row, col),
                        label: label_unchecked(future, &grid, (row, col)),
                    });
                }
            }
        }
        out
    }

    /// Writes the raw (unnormalised) cube payload of `s` into `out`.
    pub fn cube_into(&self, s: &SampleRef, out: &mut [f32]) {
        let grid = self.grid();
        let t = &self.times[s.time];
        let frame = &self.series.frames[t.frame];
        let n = out.len() / CHANNELS;
        let sources = [
            &frame.w,
            &t.diffs[0],
            &frame.byc,
            &t.diffs[1],
            &frame.r,
            &t.diffs[2],
        ];
        for (c, field) in sources.into_iter().enumerate() {
            window_into(field, grid, s.cell, &mut out[c * n..(c + 1) * n]);
        }
    }

    pub fn cube(&self, s: &SampleRef) -> SampleCube {
        let mut data = vec![0.0; self.cube_len()];
        self.cube_into(s, &mut data);
        SampleCube {
            data,
            slices: self.grid().levels,
            side: window_side(self.grid()),
            label: s.label,
            cell: s.cell,
            issue_time: self.issue_timestamp(s.time),
        }
    }
}

/// Expected sample count for a series of `n_frames` frames on `grid`.
pub fn sample_count(n_frames: usize, grid: &DomainGrid) -> usize {
    eligible_frames(n_frames).len() * grid.n_cells()
}

/// Materialises every sample of `series`.
pub fn build_samples(series: &EventSeries) -> Result<Vec<SampleCube>, CubeError> {
    let event = PreparedEvent::new("", series.clone())?;
    let refs = event.samples();
    Ok(refs.par_iter().map(|s| event.cube(s)).collect())
}

/// One line of the samples manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub event_id: String,
    pub issue_timestamp: u64,
    pub cell_row: usize,
    pub cell_col: usize,
    pub label: u8,
}

/// `event_id,issue_timestamp,cell_row,cell_col,label`, one sample per line.
pub fn write_sample_manifest(
    entries: &[ManifestEntry],
    path: impl AsRef<Path>,
) -> Result<(), CubeError> {
    let path = path.as_ref();
    let mut text = String::with_capacity(entries.len() * 32);
    for e in entries {
        writeln!(
            text,
            "{},{},{},{},{}",
            e.event_id, e.issue_timestamp, e.cell_row, e.cell_col, e.label
        )
        .unwrap();
    }
    fs::write(path, text).map_err(|source| CubeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_sample_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, CubeError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CubeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = |reason: &str| CubeError::Manifest {
                line: i + 1,
                reason: reason.into(),
            };
            let parts: Vec<&str> = line.trim().split(',').collect();
            if parts.len() != 5 {
                return Err(bad("expected 5 comma-separated fields"));
            }
            let label: u8 = parts[4].parse().map_err(|_| bad("bad label"))?;
            if label > 1 {
                return Err(bad("label must be 0 or 1"));
            }
            Ok(ManifestEntry {
                event_id: parts[0].to_string(),
                issue_timestamp: parts[1].parse().map_err(|_| bad("bad timestamp"))?,
                cell_row: parts[2].parse().map_err(|_| bad("bad row"))?,
                cell_col: parts[3].parse().map_err(|_| bad("bad col"))?,
                label,
            })
        })
        .collect()
}

impl PreparedEvent {
    pub fn manifest_entries(&self, samples: &[SampleRef]) -> Vec<ManifestEntry> {
        samples
            .iter()
            .map(|s| ManifestEntry {
                event_id: self.id.clone(),
                issue_timestamp: self.issue_timestamp(s.time),
                cell_row: s.cell.0,
                cell_col: s.cell.1,
                label: s.label,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridstore::Frame;

    fn grid3() -> DomainGrid {
        DomainGrid::new(3, 3, 6, 2).unwrap()
    }

    fn constant_series(grid: &DomainGrid, n: usize, value: f32) -> EventSeries {
        EventSeries {
            grid: *grid,
            cadence: 900,
            frames: (0..n)
                .map(|i| {
                    let t = 900 * i as u64;
                    Frame {
                        w: GriddedField::constant(Variable::W, t, grid, value),
                        byc: GriddedField::constant(Variable::Byc, t, grid, value),
                        r: GriddedField::constant(Variable::R, t, grid, value),
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn diff_basic() {
        let g = grid3();
        let a = GriddedField::constant(Variable::W, 900, &g, 5.0);
        let b = GriddedField::constant(Variable::W, 0, &g, 3.0);
        let d = temporal_diff(&a, &b).unwrap();
        assert!(d.values().iter().all(|&v| v == 2.0));
        assert_eq!(d.timestamp, 900);
        let same = temporal_diff(&a, &GriddedField::constant(Variable::W, 0, &g, 5.0)).unwrap();
        assert!(same.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn diff_errors() {
        let g = grid3();
        let a = GriddedField::constant(Variable::W, 900, &g, 5.0);
        let r = GriddedField::constant(Variable::R, 0, &g, 5.0);
        assert!(matches!(temporal_diff(&a, &r), Err(CubeError::VariableMismatch(..))));
        let late = GriddedField::constant(Variable::W, 100, &g, 5.0);
        assert!(matches!(temporal_diff(&a, &late), Err(CubeError::TimeGap { .. })));
        let other = GriddedField::constant(Variable::W, 0, &DomainGrid::new(3, 4, 6, 2).unwrap(), 1.0);
        assert!(matches!(temporal_diff(&a, &other), Err(CubeError::DimsMismatch(..))));
    }

    #[test]
    fn interior_window_of_constant_field() {
        let g = grid3();
        let f = GriddedField::constant(Variable::W, 0, &g, 7.0);
        let w = extract_window(&f, &g, (1, 1)).unwrap();
        assert_eq!(w.len(), 2 * 18 * 18);
        assert!(w.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn corner_window_zero_margins() {
        let g = grid3();
        let f = GriddedField::constant(Variable::W, 0, &g, 7.0);
        let w = extract_window(&f, &g, (0, 0)).unwrap();
        for l in 0..2 {
            for r in 0..18 {
                for c in 0..18 {
                    let v = w[(l * 18 + r) * 18 + c];
                    let expect = if r < 6 || c < 6 { 0.0 } else { 7.0 };
                    assert_eq!(v, expect, "l={l} r={r} c={c}");
                }
            }
        }
    }

    #[test]
    fn out_of_bounds_cell() {
        let g = grid3();
        let f = GriddedField::constant(Variable::R, 0, &g, 0.0);
        assert!(extract_window(&f, &g, (3, 0)).is_err());
        assert!(label_cell(&f, &g, (0, 3)).is_err());
    }

    #[test]
    fn label_threshold_is_strict() {
        let g = grid3();
        let f = GriddedField::constant(Variable::R, 0, &g, 35.0);
        assert_eq!(label_cell(&f, &g, (1, 1)).unwrap(), 0);
        let mut f = GriddedField::constant(Variable::R, 0, &g, -10.0);
        // level 1, pixel (7, 8) belongs to cell (1, 1)
        let idx = (18 + 7) * 18 + 8;
        f.values_mut()[idx] = 35.1;
        assert_eq!(label_cell(&f, &g, (1, 1)).unwrap(), 1);
        assert_eq!(label_cell(&f, &g, (1, 0)).unwrap(), 0);
    }

    #[test]
    fn sample_count_six_frames_full_grid() {
        assert_eq!(sample_count(6, &DomainGrid::default()), 3627);
        assert_eq!(eligible_frames(6), 1..4);
        assert_eq!(eligible_frames(3).len(), 0);
    }

    #[test]
    fn too_short_series() {
        let g = grid3();
        let s = constant_series(&g, 3, 0.0);
        assert!(matches!(build_samples(&s), Err(CubeError::SeriesTooShort(3))));
    }

    #[test]
    fn all_zero_series() {
        let g = grid3();
        let s = constant_series(&g, 5, 0.0);
        let samples = build_samples(&s).unwrap();
        assert_eq!(samples.len(), 2 * 9);
        for c in &samples {
            assert_eq!(c.label, 0);
            assert!(c.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        let entries = vec![
            ManifestEntry {
                event_id: "ev0".into(),
                issue_timestamp: 900,
                cell_row: 2,
                cell_col: 5,
                label: 1,
            },
            ManifestEntry {
                event_id: "ev1".into(),
                issue_timestamp: 1800,
                cell_row: 0,
                cell_col: 0,
                label: 0,
            },
        ];
        write_sample_manifest(&entries, &path).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "ev0,900,2,5,1\nev1,1800,0,0,0\n"
        );
        assert_eq!(read_sample_manifest(&path).unwrap(), entries);
    }
}
