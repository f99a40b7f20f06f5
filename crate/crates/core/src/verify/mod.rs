//! Forecast verification with the contingency-table approach.
//!
//! For each scored (cell, time) pair: a *hit* is forecast 1 and observed 1,
//! a *miss* forecast 0 and observed 1, a *false alarm* forecast 1 and
//! observed 0, a *correct null* forecast 0 and observed 0.
//!
//! * `POD = hits / (hits + misses)`
//! * `FAR = false_alarms / (hits + false_alarms)`
//! * `CSI = hits / (hits + misses + false_alarms)`
//!
//! A score whose denominator is zero is reported as [`Score::Undefined`],
//! never silently as 0.

mod overlay;
mod report;
mod roc;

pub use overlay::{overlay, CellClass, OverlayGrid};
pub use report::{roc_csv, scores_csv, skill_series_csv, ScoreRow, NA};
pub use roc::{roc, RocCurve};

use std::fmt;
use std::ops::{Add, AddAssign};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum VerifyError {
    #[error("length mismatch: {0} forecasts vs {1} observations")]
    LengthMismatch(usize, usize),
    #[error("dims mismatch: {0:?} vs {1:?}")]
    DimsMismatch((usize, usize), (usize, usize)),
    #[error("value {0} is not a binary label")]
    NotBinary(u8),
    #[error("ROC needs at least one positive and one negative observation")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ContingencyTable {
    pub hits: u64,
    pub misses: u64,
    pub false_alarms: u64,
    pub correct_nulls: u64,
}

impl ContingencyTable {
    pub fn new(hits: u64, misses: u64, false_alarms: u64, correct_nulls: u64) -> Self {
        ContingencyTable {
            hits,
            misses,
            false_alarms,
            correct_nulls,
        }
    }

    pub fn total(&self) -> u64 {
        self.hits + self.misses + self.false_alarms + self.correct_nulls
    }

    pub fn record(&mut self, pred: bool, truth: bool) {
        match (pred, truth) {
            (true, true) => self.hits += 1,
            (false, true) => self.misses += 1,
            (true, false) => self.false_alarms += 1,
            (false, false) => self.correct_nulls += 1,
        }
    }

    pub fn pod(&self) -> Score {
        Score::ratio(self.hits, self.hits + self.misses, Undefined::NoEvents)
    }

    pub fn far(&self) -> Score {
        Score::ratio(
            self.false_alarms,
            self.hits + self.false_alarms,
            Undefined::NoForecasts,
        )
    }

    pub fn csi(&self) -> Score {
        Score::ratio(
            self.hits,
            self.hits + self.misses + self.false_alarms,
            Undefined::NoEventsOrForecasts,
        )
    }

    /// Observed event frequency, `(hits + misses) / total`.
    pub fn base_rate(&self) -> Score {
        Score::ratio(self.hits + self.misses, self.total(), Undefined::NoEventsOrForecasts)
    }
}

impl Add for ContingencyTable {
    type Output = ContingencyTable;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for ContingencyTable {
    fn add_assign(&mut self, rhs: Self) {
        self.hits += rhs.hits;
        self.misses += rhs.misses;
        self.false_alarms += rhs.false_alarms;
        self.correct_nulls += rhs.correct_nulls;
    }
}

impl std::iter::Sum for ContingencyTable {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ContingencyTable::default(), Add::add)
    }
}

/// Why a score could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Undefined {
    /// No observed events (`hits + misses = 0`).
    NoEvents,
    /// No forecast events (`hits + false_alarms = 0`).
    NoForecasts,
    NoEventsOrForecasts,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Value(f64),
    Undefined(Undefined),
}

impl Score {
    fn ratio(num: u64, den: u64, why: Undefined) -> Score {
        if den == 0 {
            Score::Undefined(why)
        } else {
            Score::Value(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Score::Value(v) => Some(v),
            Score::Undefined(_) => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, Score::Value(_))
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Score::Value(v) => write!(f, "{v:.6}"),
            Score::Undefined(_) => f.write_str(NA),
        }
    }
}

fn check_binary(v: &[u8]) -> Result<(), VerifyError> {
    match v.iter().find(|&&x| x > 1) {
        Some(&x) => Err(VerifyError::NotBinary(x)),
        None => Ok(()),
    }
}

pub fn contingency(pred: &[u8], truth: &[u8]) -> Result<ContingencyTable, VerifyError> {
    if pred.len() != truth.len() {
        return Err(VerifyError::LengthMismatch(pred.len(), truth.len()));
    }
    check_binary(pred)?;
    check_binary(truth)?;
    let mut t = ContingencyTable::default();
    for (&p, &o) in pred.iter().zip(truth) {
        t.record(p == 1, o == 1);
    }
    Ok(t)
}

/// Binary forecasts from class-1 probabilities: active iff `p > threshold`.
/// At 0.5 this is argmax with ties going to class 0.
pub fn classify(scores: &[f32], threshold: f64) -> Vec<u8> {
    scores
        .iter()
        .map(|&p| u8::from(p as f64 > threshold))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkillPoint {
    pub time: u64,
    pub table: ContingencyTable,
    pub pod: Score,
    pub far: Score,
    pub csi: Score,
}

/// Per-issue-time scores, in the given (time) order.
pub fn skill_series(tables: &[(u64, ContingencyTable)]) -> Vec<SkillPoint> {
    tables
        .iter()
        .map(|&(time, table)| SkillPoint {
            time,
            table,
            pod: table.pod(),
            far: table.far(),
            csi: table.csi(),
        })
        .collect()
}

/// Aggregate-count table over a series.
pub fn aggregate(tables: &[(u64, ContingencyTable)]) -> ContingencyTable {
    tables.iter().map(|(_, t)| *t).sum()
}
