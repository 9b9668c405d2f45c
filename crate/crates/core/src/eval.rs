//! Metrics (MSE, MAE, Kendall's tau-b), evaluation reports and ablation
//! deltas.

use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::predictions::Prediction;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {pred} predictions vs {gold} gold values")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("no values to evaluate")]
    Empty,
    #[error("Kendall tau-b needs at least two values")]
    TooFew,
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("Kendall tau-b is undefined: every {0} value is tied")]
    TauUndefined(&'static str),
    #[error("no prediction for gold id {0:?}")]
    MissingId(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
}

fn check_pair(pred: &[f64], gold: &[f64]) -> Result<(), EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), gold: gold.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&v) = pred.iter().chain(gold).find(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite(v));
    }
    Ok(())
}

pub fn mse(pred: &[f64], gold: &[f64]) -> Result<f64, EvalError> {
    check_pair(pred, gold)?;
    Ok(pred.iter().zip(gold).map(|(p, g)| (p - g) * (p - g)).sum::<f64>() / pred.len() as f64)
}

pub fn mae(pred: &[f64], gold: &[f64]) -> Result<f64, EvalError> {
    check_pair(pred, gold)?;
    Ok(pred.iter().zip(gold).map(|(p, g)| (p - g).abs()).sum::<f64>() / pred.len() as f64)
}

/// Pair counts behind tau-b. `n1` and `n2` count pairs tied in the first and
/// second argument respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TauCounts {
    pub n0: u64,
    pub n1: u64,
    pub n2: u64,
    /// Concordant minus discordant pairs.
    pub s: i64,
}

impl TauCounts {
    pub fn tau_b(&self) -> Result<f64, EvalError> {
        if self.n0 == self.n1 {
            return Err(EvalError::TauUndefined("prediction"));
        }
        if self.n0 == self.n2 {
            return Err(EvalError::TauUndefined("gold"));
        }
        Ok(self.s as f64 / ((self.n0 - self.n1) as f64 * (self.n0 - self.n2) as f64).sqrt())
    }
}

/// Exact O(n^2) pair enumeration.
pub fn tau_counts_pairwise(x: &[f64], y: &[f64]) -> TauCounts {
    let n = x.len();
    let (mut n1, mut n2, mut s) = (0u64, 0u64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).expect("finite values");
            let dy = y[i].partial_cmp(&y[j]).expect("finite values");
            if dx.is_eq() {
                n1 += 1;
            }
            if dy.is_eq() {
                n2 += 1;
            }
            if !dx.is_eq() && !dy.is_eq() {
                s += if dx == dy { 1 } else { -1 };
            }
        }
    }
    TauCounts { n0: pairs(n as u64), n1, n2, s }
}

fn pairs(t: u64) -> u64 {
    t * t.saturating_sub(1) / 2
}

/// Sum of t(t-1)/2 over runs of equal adjacent elements.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    sorted.chunk_by(|a, b| a == b).map(|run| pairs(run.len() as u64)).sum()
}

/// Sorts `v` ascending and returns the number of inversions (strictly
/// decreasing pairs).
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// O(n log n) counts via sorting and merge-sort inversion counting.
pub fn tau_counts_fast(x: &[f64], y: &[f64]) -> TauCounts {
    let n = x.len();
    // Adding 0.0 folds -0.0 into 0.0 so that the total order agrees with ==.
    let mut xy: Vec<(f64, f64)> = x.iter().zip(y).map(|(&a, &b)| (a + 0.0, b + 0.0)).collect();
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n1 = tied_pairs(&xy.iter().map(|p| p.0).collect::<Vec<_>>());
    let n3 = tied_pairs(&xy);
    let mut ys: Vec<f64> = xy.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count(&mut ys, &mut buf);
    let n2 = tied_pairs(&ys);
    let n0 = pairs(n as u64);
    let s = n0 as i64 - n1 as i64 - n2 as i64 + n3 as i64 - 2 * discordant as i64;
    TauCounts { n0, n1, n2, s }
}

/// Inputs up to this length use pair enumeration.
pub const TAU_PAIRWISE_MAX: usize = 2000;

/// Kendall's tau-b. Undefined (an error, not 0) when either side is
/// constant. Predictions are used as-is, without rounding.
pub fn kendall_tau_b(pred: &[f64], gold: &[f64]) -> Result<f64, EvalError> {
    check_pair(pred, gold)?;
    if pred.len() < 2 {
        return Err(EvalError::TooFew);
    }
    let counts =
        if pred.len() <= TAU_PAIRWISE_MAX { tau_counts_pairwise(pred, gold) } else { tau_counts_fast(pred, gold) };
    counts.tau_b()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n: usize,
    pub mse: f64,
    pub mae: f64,
    /// `None` when tau-b is undefined; the reason is in `tau_note`.
    pub kendall_tau_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_note: Option<String>,
    pub avg_time_per_sentence_s: Option<f64>,
}

/// Joins predictions with gold labels by id and computes all metrics.
/// Predictions for ids without gold labels are ignored.
pub fn evaluate(
    preds: &[Prediction],
    gold: &[(String, f64)],
    avg_time_per_sentence_s: Option<f64>,
) -> Result<EvalReport, EvalError> {
    let mut by_id: HashMap<&str, f64> = HashMap::with_capacity(preds.len());
    for p in preds {
        if by_id.insert(&p.id, p.score).is_some() {
            return Err(EvalError::DuplicateId(p.id.clone()));
        }
    }
    let mut seen = HashSet::new();
    let mut p = Vec::with_capacity(gold.len());
    let mut g = Vec::with_capacity(gold.len());
    for (id, value) in gold {
        if !seen.insert(id.as_str()) {
            return Err(EvalError::DuplicateId(id.clone()));
        }
        p.push(*by_id.get(id.as_str()).ok_or_else(|| EvalError::MissingId(id.clone()))?);
        g.push(*value);
    }
    let (kendall_tau_b, tau_note) = match kendall_tau_b(&p, &g) {
        Ok(t) => (Some(t), None),
        Err(e @ (EvalError::TauUndefined(_) | EvalError::TooFew)) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(EvalReport { n: p.len(), mse: mse(&p, &g)?, mae: mae(&p, &g)?, kendall_tau_b, tau_note, avg_time_per_sentence_s })
}

/// Metric differences `ablated - full`; a positive MSE delta means the
/// ablated model is worse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationDelta {
    pub group: String,
    pub d_mse: f64,
    pub d_mae: f64,
    pub d_tau_b: Option<f64>,
}

impl AblationDelta {
    pub fn new(group: &str, full: &EvalReport, ablated: &EvalReport) -> Self {
        AblationDelta {
            group: group.to_string(),
            d_mse: ablated.mse - full.mse,
            d_mae: ablated.mae - full.mae,
            d_tau_b: ablated.kendall_tau_b.zip(full.kendall_tau_b).map(|(a, f)| a - f),
        }
    }
}

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |v| format!("{v:.decimals$}"))
}

fn align(rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Aligned plain-text table, one row per named report.
pub fn render_table(rows: &[(String, EvalReport)]) -> String {
    let mut table = vec![["model", "n", "MSE", "MAE", "tau_b", "time/sent (s)"].map(String::from).to_vec()];
    for (name, r) in rows {
        table.push(vec![
            name.clone(),
            r.n.to_string(),
            format!("{:.4}", r.mse),
            format!("{:.4}", r.mae),
            opt(r.kendall_tau_b, 4),
            opt(r.avg_time_per_sentence_s, 6),
        ]);
    }
    align(&table)
}

/// The same content as [`render_table`], as JSON with full precision.
pub fn render_json(rows: &[(String, EvalReport)]) -> String {
    #[derive(Serialize)]
    struct Row<'a> {
        model: &'a str,
        #[serde(flatten)]
        report: &'a EvalReport,
    }
    let rows: Vec<Row> = rows.iter().map(|(model, report)| Row { model, report }).collect();
    serde_json::to_string_pretty(&rows).expect("reports serialize") + "\n"
}

pub fn render_ablation_table(deltas: &[AblationDelta]) -> String {
    let sign = |v: f64| format!("{v:+.4}");
    let mut table = vec![["removed", "dMSE", "dMAE", "dtau_b"].map(String::from).to_vec()];
    for d in deltas {
        table.push(vec![d.group.clone(), sign(d.d_mse), sign(d.d_mae), d.d_tau_b.map_or("NA".into(), sign)]);
    }
    align(&table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_and_mae_examples() {
        assert_eq!(mse(&[0.3, 0.6], &[0.3, 0.6]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse(&[0.5], &[0.0]).unwrap(), 0.25);
        assert_eq!(mae(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(mae(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(mse(&[], &[]), Err(EvalError::Empty));
        assert!(matches!(mae(&[0.1], &[0.1, 0.2]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn tau_hand_examples() {
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau_b(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
        let (x, y) = ([1.0, 2.0, 2.0, 3.0], [1.0, 2.0, 3.0, 3.0]);
        assert_eq!(tau_counts_pairwise(&x, &y), TauCounts { n0: 6, n1: 1, n2: 1, s: 4 });
        assert_eq!(tau_counts_fast(&x, &y), tau_counts_pairwise(&x, &y));
        assert_eq!(kendall_tau_b(&x, &y).unwrap(), 0.8);
    }

    #[test]
    fn tau_undefined_for_constant_side() {
        assert_eq!(kendall_tau_b(&[0.5, 0.5, 0.5], &[0.1, 0.2, 0.3]), Err(EvalError::TauUndefined("prediction")));
        assert_eq!(kendall_tau_b(&[0.1, 0.2], &[1.0, 1.0]), Err(EvalError::TauUndefined("gold")));
        assert_eq!(kendall_tau_b(&[0.1], &[1.0]), Err(EvalError::TooFew));
    }

    #[test]
    fn fast_path_handles_signed_zero() {
        let x = [0.0, -0.0, 1.0, -1.0];
        let y = [-0.0, 0.0, 0.0, 2.0];
        assert_eq!(tau_counts_fast(&x, &y), tau_counts_pairwise(&x, &y));
    }

    fn preds(items: &[(&str, f64)]) -> Vec<Prediction> {
        items.iter().map(|&(id, s)| Prediction::new(id, s)).collect()
    }

    fn gold(items: &[(&str, f64)]) -> Vec<(String, f64)> {
        items.iter().map(|&(id, v)| (id.to_string(), v)).collect()
    }

    #[test]
    fn evaluate_joins_by_id() {
        let g = gold(&[("a", 0.0), ("b", 0.5), ("c", 1.0)]);
        let r = evaluate(&preds(&[("c", 1.0), ("a", 0.0), ("b", 0.5), ("z", 0.3)]), &g, None).unwrap();
        assert_eq!((r.n, r.mse, r.mae, r.kendall_tau_b), (3, 0.0, 0.0, Some(1.0)));
        let r = evaluate(&preds(&[("a", 0.4), ("b", 0.4), ("c", 0.4)]), &g, Some(0.01)).unwrap();
        assert_eq!(r.kendall_tau_b, None);
        assert!(r.tau_note.unwrap().contains("undefined"));
        assert_eq!(evaluate(&preds(&[("a", 0.4)]), &g, None), Err(EvalError::MissingId("b".into())));
        assert_eq!(
            evaluate(&preds(&[("a", 0.4), ("a", 0.1)]), &g, None),
            Err(EvalError::DuplicateId("a".into()))
        );
    }

    #[test]
    fn report_rendering() {
        let g = gold(&[("a", 0.0), ("b", 1.0)]);
        let r = evaluate(&preds(&[("a", 0.25), ("b", 0.75)]), &g, None).unwrap();
        let rows = vec![("syntax".to_string(), r.clone())];
        let table = render_table(&rows);
        assert_eq!(table.lines().count(), 2);
        assert!(table.lines().nth(1).unwrap().starts_with("syntax  2  0.0625  0.2500  1.0000"));
        assert!(table.ends_with("NA\n"));
        let json: serde_json::Value = serde_json::from_str(&render_json(&rows)).unwrap();
        assert_eq!(json[0]["model"], "syntax");
        assert_eq!(json[0]["mse"], 0.0625);
        let d = AblationDelta::new("trigrams", &r, &EvalReport { mse: 0.1, ..r.clone() });
        assert!((d.d_mse - 0.0375).abs() < 1e-15);
        assert!(render_ablation_table(&[d]).contains("+0.0375"));
    }
}
