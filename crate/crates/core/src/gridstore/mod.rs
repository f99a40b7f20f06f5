//! Gridded 3D meteorological fields and their persistence.

mod sgf;
mod synth;

pub use sgf::{read_event, read_field, write_event, write_field, HEADER_LEN, MANIFEST_NAME};
pub use synth::{synth_event, SynthParams};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

/// Seconds between consecutive frames.
pub const DEFAULT_CADENCE: u64 = 900;

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {0:?}, expected \"SGF1\"")]
    BadMagic([u8; 4]),
    #[error("unknown variable name {0:?}")]
    UnknownVariable(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("payload length {found} inconsistent with declared dims (expected {expected})")]
    DimsMismatch { expected: usize, found: usize },
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
    #[error("invalid event series: {0}")]
    InvalidSeries(String),
    #[error("malformed manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
}

impl GridError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GridError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Geometry of the forecast domain: a grid of square cells, each made of
/// `pixels_per_cell_side²` 1 km pixels, stacked over `levels` slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DomainGrid {
    pub cell_rows: usize,
    pub cell_cols: usize,
    pub pixels_per_cell_side: usize,
    pub levels: usize,
}

impl Default for DomainGrid {
    fn default() -> Self {
        DomainGrid {
            cell_rows: 31,
            cell_cols: 39,
            pixels_per_cell_side: 6,
            levels: 20,
        }
    }
}

impl DomainGrid {
    pub fn new(
        cell_rows: usize,
        cell_cols: usize,
        pixels_per_cell_side: usize,
        levels: usize,
    ) -> Result<Self, GridError> {
        let grid = DomainGrid {
            cell_rows,
            cell_cols,
            pixels_per_cell_side,
            levels,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.cell_rows == 0
            || self.cell_cols == 0
            || self.pixels_per_cell_side == 0
            || self.levels == 0
        {
            return Err(GridError::InvalidGrid(format!(
                "all counts must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn pixel_rows(&self) -> usize {
        self.cell_rows * self.pixels_per_cell_side
    }

    pub fn pixel_cols(&self) -> usize {
        self.cell_cols * self.pixels_per_cell_side
    }

    pub fn n_cells(&self) -> usize {
        self.cell_rows * self.cell_cols
    }

    /// Values held by one field on this grid.
    pub fn field_len(&self) -> usize {
        self.levels * self.pixel_rows() * self.pixel_cols()
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.levels, self.pixel_rows(), self.pixel_cols()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    /// Vertical velocity, m/s.
    W,
    /// Buoyancy, generator-native retrieval units.
    Byc,
    /// Radar reflectivity, dBZ.
    R,
}

impl Variable {
    pub const ALL: [Variable; 3] = [Variable::W, Variable::Byc, Variable::R];

    pub fn name(self) -> &'static str {
        match self {
            Variable::W => "W",
            Variable::Byc => "BYC",
            Variable::R => "R",
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variable {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "W" => Ok(Variable::W),
            "BYC" => Ok(Variable::Byc),
            "R" => Ok(Variable::R),
            other => Err(GridError::UnknownVariable(other.to_string())),
        }
    }
}

/// One variable on the full 3D domain at one timestamp.
///
/// `values` is stored level-major, then row-major:
/// `values[(level * rows + row) * cols + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedField {
    pub variable: Variable,
    pub timestamp: u64,
    dims: [usize; 3],
    values: Vec<f32>,
}

impl GriddedField {
    pub fn new(
        variable: Variable,
        timestamp: u64,
        dims: [usize; 3],
        values: Vec<f32>,
    ) -> Result<Self, GridError> {
        let expected = dims.iter().product::<usize>();
        if values.len() != expected {
            return Err(GridError::DimsMismatch {
                expected,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(GriddedField {
            variable,
            timestamp,
            dims,
            values,
        })
    }

    pub fn constant(variable: Variable, timestamp: u64, grid: &DomainGrid, value: f32) -> Self {
        GriddedField {
            variable,
            timestamp,
            dims: grid.dims(),
            values: vec![value; grid.field_len()],
        }
    }

    /// Field with values filled from `f(level, row, col)`.
    pub fn from_fn(
        variable: Variable,
        timestamp: u64,
        grid: &DomainGrid,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let [levels, rows, cols] = grid.dims();
        let mut values = Vec::with_capacity(grid.field_len());
        for l in 0..levels {
            for r in 0..rows {
                for c in 0..cols {
                    values.push(f(l, r, c));
                }
            }
        }
        GriddedField {
            variable,
            timestamp,
            dims: grid.dims(),
            values,
        }
    }

    /// `(levels, pixel_rows, pixel_cols)`.
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Mutable access; callers must keep values finite.
    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, level: usize, row: usize, col: usize) -> f32 {
        let [_, rows, cols] = self.dims;
        self.values[(level * rows + row) * cols + col]
    }

    pub fn matches_grid(&self, grid: &DomainGrid) -> bool {
        self.dims == grid.dims()
    }

    pub(crate) fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(GridError::NonFinite(i)),
            None => Ok(()),
        }
    }
}

/// The three co-located fields valid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub w: GriddedField,
    pub byc: GriddedField,
    pub r: GriddedField,
}

impl Frame {
    pub fn timestamp(&self) -> u64 {
        self.r.timestamp
    }

    pub fn field(&self, variable: Variable) -> &GriddedField {
        match variable {
            Variable::W => &self.w,
            Variable::Byc => &self.byc,
            Variable::R => &self.r,
        }
    }
}

/// Ordered frames of one event at fixed cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSeries {
    pub grid: DomainGrid,
    pub cadence: u64,
    pub frames: Vec<Frame>,
}

impl EventSeries {
    /// Checks grid consistency, variable slots and timestamp progression.
    pub fn validate(&self) -> Result<(), GridError> {
        self.grid.validate()?;
        if self.cadence == 0 {
            return Err(GridError::InvalidSeries("cadence must be > 0".into()));
        }
        for (i, frame) in self.frames.iter().enumerate() {
            for var in Variable::ALL {
                let field = frame.field(var);
                if field.variable != var {
                    return Err(GridError::InvalidSeries(format!(
                        "frame {i}: slot {var} holds a {} field",
                        field.variable
                    )));
                }
                if !field.matches_grid(&self.grid) {
                    return Err(GridError::InvalidSeries(format!(
                        "frame {i}: {var} dims {:?} do not match grid {:?}",
                        field.dims(),
                        self.grid.dims()
                    )));
                }
                if field.timestamp != frame.timestamp() {
                    return Err(GridError::InvalidSeries(format!(
                        "frame {i}: {var} timestamp differs from the frame's"
                    )));
                }
            }
            if i > 0 {
                let prev = self.frames[i - 1].timestamp();
                if frame.timestamp() != prev + self.cadence {
                    return Err(GridError::InvalidSeries(format!(
                        "frame {i}: timestamp {} does not follow {prev} by {} s",
                        frame.timestamp(),
                        self.cadence
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_geometry() {
        let g = DomainGrid::default();
        assert_eq!(g.pixel_rows(), 186);
        assert_eq!(g.pixel_cols(), 234);
        assert_eq!(g.n_cells(), 1209);
        assert_eq!(g.levels, 20);
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(DomainGrid::new(0, 3, 6, 20).is_err());
        assert!(DomainGrid::new(3, 3, 6, 0).is_err());
    }

    #[test]
    fn field_rejects_nan_and_bad_len() {
        assert!(matches!(
            GriddedField::new(Variable::R, 0, [1, 1, 2], vec![1.0, f32::NAN]),
            Err(GridError::NonFinite(1))
        ));
        assert!(matches!(
            GriddedField::new(Variable::R, 0, [1, 1, 2], vec![1.0]),
            Err(GridError::DimsMismatch { .. })
        ));
    }

    #[test]
    fn series_validation_catches_gaps() {
        let grid = DomainGrid::new(1, 1, 2, 1).unwrap();
        let frame = |t| Frame {
            w: GriddedField::constant(Variable::W, t, &grid, 0.0),
            byc: GriddedField::constant(Variable::Byc, t, &grid, 0.0),
            r: GriddedField::constant(Variable::R, t, &grid, 0.0),
        };
        let mut s = EventSeries {
            grid,
            cadence: 900,
            frames: vec![frame(0), frame(900)],
        };
        assert!(s.validate().is_ok());
        s.frames.push(frame(2000));
        assert!(s.validate().is_err());
    }
}
