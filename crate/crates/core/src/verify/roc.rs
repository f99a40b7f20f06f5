use super::VerifyError;

/// ROC points from a descending threshold sweep and the trapezoidal area.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)`, from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    /// Score threshold reached at each point (`+inf` for the origin).
    pub thresholds: Vec<f64>,
    pub auc: f64,
}

/// Sweeps thresholds over the distinct scores, highest first. Tied scores
/// move together as one step, so the trapezoidal area equals the
/// probability that a random positive outranks a random negative, ties
/// counting one half.
pub fn roc(scores: &[f64], truth: &[u8]) -> Result<RocCurve, VerifyError> {
    if scores.len() != truth.len() {
        return Err(VerifyError::LengthMismatch(scores.len(), truth.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(VerifyError::NonFinite(i));
    }
    if let Some(&x) = truth.iter().find(|&&t| t > 1) {
        return Err(VerifyError::NotBinary(x));
    }
    let n_pos = truth.iter().filter(|&&t| t == 1).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(VerifyError::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (p, n) = (n_pos as f64, n_neg as f64);
    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = *points.last().unwrap();
        let (x1, y1) = (fp as f64 / n, tp as f64 / p);
        auc += (x1 - x0) * (y0 + y1) * 0.5;
        points.push((x1, y1));
        thresholds.push(s);
    }
    Ok(RocCurve {
        points,
        thresholds,
        auc,
    })
}
