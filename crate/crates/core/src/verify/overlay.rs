use std::fmt::Write as _;

use super::{ContingencyTable, VerifyError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellClass {
    Hit,
    Miss,
    FalseAlarm,
    CorrectNull,
}

impl CellClass {
    pub fn code(self) -> char {
        match self {
            CellClass::Hit => 'H',
            CellClass::Miss => 'M',
            CellClass::FalseAlarm => 'F',
            CellClass::CorrectNull => 'N',
        }
    }

    /// Gray level in the PGM rendering: hits black, correct nulls white.
    pub fn gray(self) -> u8 {
        match self {
            CellClass::Hit => 0,
            CellClass::Miss => 85,
            CellClass::FalseAlarm => 170,
            CellClass::CorrectNull => 255,
        }
    }
}

/// Per-cell verification class for one issue time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlayGrid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub classes: Vec<CellClass>,
}

/// Classifies every cell of row-major `pred` and `truth` grids.
pub fn overlay(
    pred: &[u8],
    truth: &[u8],
    (rows, cols): (usize, usize),
) -> Result<OverlayGrid, VerifyError> {
    if pred.len() != rows * cols || truth.len() != rows * cols {
        let shape = |n: usize| (n / cols.max(1), cols);
        let bad = if pred.len() != rows * cols { pred.len() } else { truth.len() };
        return Err(VerifyError::DimsMismatch((rows, cols), shape(bad)));
    }
    let classes = pred
        .iter()
        .zip(truth)
        .map(|(&p, &t)| match (p, t) {
            (1, 1) => Ok(CellClass::Hit),
            (0, 1) => Ok(CellClass::Miss),
            (1, 0) => Ok(CellClass::FalseAlarm),
            (0, 0) => Ok(CellClass::CorrectNull),
            (x, y) => Err(VerifyError::NotBinary(x.max(y))),
        })
        .collect::<Result<_, _>>()?;
    Ok(OverlayGrid {
        rows,
        cols,
        classes,
    })
}

impl OverlayGrid {
    pub fn histogram(&self) -> ContingencyTable {
        let mut t = ContingencyTable::default();
        for c in &self.classes {
            match c {
                CellClass::Hit => t.hits += 1,
                CellClass::Miss => t.misses += 1,
                CellClass::FalseAlarm => t.false_alarms += 1,
                CellClass::CorrectNull => t.correct_nulls += 1,
            }
        }
        t
    }

    /// One CSV row per grid row, class codes `H`/`M`/`F`/`N`.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.rows * (2 * self.cols + 1));
        for row in self.classes.chunks(self.cols) {
            let codes: Vec<String> = row.iter().map(|c| c.code().to_string()).collect();
            s.push_str(&codes.join(","));
            s.push('\n');
        }
        s
    }

    /// Plain (ASCII) PGM with four gray levels.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.cols, self.rows);
        for row in self.classes.chunks(self.cols) {
            let levels: Vec<String> = row.iter().map(|c| c.gray().to_string()).collect();
            writeln!(s, "{}", levels.join(" ")).unwrap();
        }
        s
    }
}
