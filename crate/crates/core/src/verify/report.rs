//! CSV renderings. Undefined scores are written as `NA`; floats use six
//! decimals so reruns are byte-identical.

use std::fmt::Write as _;

use super::{ContingencyTable, RocCurve, SkillPoint};

pub const NA: &str = "NA";

/// One row of a scores table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub event: String,
    pub table: ContingencyTable,
    pub auc: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| format!("{x:.6}"))
}

/// Columns: `event,hits,misses,false_alarms,correct_nulls,pod,far,csi,auc`.
pub fn scores_csv(rows: &[ScoreRow]) -> String {
    let mut s = String::from("event,hits,misses,false_alarms,correct_nulls,pod,far,csi,auc\n");
    for r in rows {
        let t = &r.table;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.event,
            t.hits,
            t.misses,
            t.false_alarms,
            t.correct_nulls,
            t.pod(),
            t.far(),
            t.csi(),
            opt(r.auc)
        )
        .unwrap();
    }
    s
}

/// Columns: `time,hits,misses,false_alarms,correct_nulls,pod,far,csi`.
pub fn skill_series_csv(series: &[SkillPoint]) -> String {
    let mut s = String::from("time,hits,misses,false_alarms,correct_nulls,pod,far,csi\n");
    for p in series {
        let t = &p.table;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            p.time, t.hits, t.misses, t.false_alarms, t.correct_nulls, p.pod, p.far, p.csi
        )
        .unwrap();
    }
    s
}

/// Columns: `threshold,fpr,tpr` (the origin's threshold is `inf`).
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for (t, (x, y)) in curve.thresholds.iter().zip(&curve.points) {
        let th = if t.is_infinite() {
            "inf".to_string()
        } else {
            format!("{t:.6}")
        };
        writeln!(s, "{th},{x:.6},{y:.6}").unwrap();
    }
    s
}
