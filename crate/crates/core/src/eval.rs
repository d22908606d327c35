//! Contextual thresholding and ROC evaluation: per-context-value
//! thresholds from maximum training loss, normalized score ratios, a
//! 100-point threshold grid, an exact pair-counting AUC oracle, and a
//! law-of-total-variance diagnostic.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CwaeModel;
use crate::select::NO_CONTEXT;
use crate::tabular::{EncodedTable, Split};

/// Per-context-value score thresholds fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    /// Column the groups are keyed by, or NO_CONTEXT for a single group.
    pub context_column: String,
    /// Encoded context value -> maximum training score in that group.
    pub per_value: BTreeMap<u32, f64>,
    /// Maximum training score overall; used for unseen context values.
    pub global_fallback: f64,
}

impl ThresholdTable {
    pub fn threshold_for(&self, context_value: u32) -> f64 {
        *self.per_value.get(&context_value).unwrap_or(&self.global_fallback)
    }
}

/// One scored row prior to normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredRow {
    pub row: usize,
    pub score: f64,
    pub context_value: u32,
    pub label: u8,
}

/// A scored row with its contextual ratio R = score / H_c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub row: usize,
    pub score: f64,
    pub context_value: u32,
    pub ratio: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocReport {
    /// tau_k = 0.01 * k * max(R) for k = 1..=100.
    pub thresholds: Vec<f64>,
    /// (FPR, TPR) at each grid threshold, in threshold order.
    pub points: Vec<(f64, f64)>,
    pub aucroc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// H_c = max score within each context group; fallback = overall max.
/// Every training row then satisfies score / H_(its group) <= 1.
pub fn fit_thresholds(context_column: &str, train: &[(f64, u32)]) -> Result<ThresholdTable> {
    if train.is_empty() {
        return Err(Error::validation("cannot fit thresholds on zero scores"));
    }
    let mut per_value: BTreeMap<u32, f64> = BTreeMap::new();
    let mut global_fallback = f64::NEG_INFINITY;
    for &(score, ctx) in train {
        if !score.is_finite() || score <= 0.0 {
            return Err(Error::validation(format!(
                "threshold fitting requires positive finite scores, got {score}"
            )));
        }
        let h = per_value.entry(ctx).or_insert(f64::NEG_INFINITY);
        *h = h.max(score);
        global_fallback = global_fallback.max(score);
    }
    Ok(ThresholdTable { context_column: context_column.to_string(), per_value, global_fallback })
}

/// R = score / H_c, falling back to the global maximum for context
/// values absent from the table.
pub fn contextual_ratios(test: &[ScoredRow], table: &ThresholdTable) -> Vec<ScoreRecord> {
    test.iter()
        .map(|r| ScoreRecord {
            row: r.row,
            score: r.score,
            context_value: r.context_value,
            ratio: r.score / table.threshold_for(r.context_value),
            label: r.label,
        })
        .collect()
}

fn class_counts(records: &[ScoreRecord]) -> Result<(usize, usize)> {
    let n_pos = records.iter().filter(|r| r.label == 1).count();
    let n_neg = records.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels(format!(
            "need both classes, got {n_pos} positive / {n_neg} negative"
        )));
    }
    Ok((n_pos, n_neg))
}

/// Sweeps 100 evenly spaced thresholds over (0, max(R)], classifying
/// R > tau as anomalous, and integrates the ROC curve trapezoidally over
/// FPR with (0,0) and (1,1) endpoints appended. Invariant under scaling
/// all ratios by a positive constant.
pub fn aucroc_grid(records: &[ScoreRecord]) -> Result<RocReport> {
    let (n_pos, n_neg) = class_counts(records)?;
    let max_ratio = records.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    if !max_ratio.is_finite() || max_ratio <= 0.0 {
        return Err(Error::validation(format!("ratios must be positive, max was {max_ratio}")));
    }
    let mut thresholds = Vec::with_capacity(100);
    let mut points = Vec::with_capacity(100);
    for k in 1..=100u32 {
        let tau = 0.01 * f64::from(k) * max_ratio;
        let mut tp = 0usize;
        let mut fp = 0usize;
        for r in records {
            if r.ratio > tau {
                if r.label == 1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        thresholds.push(tau);
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }

    let mut curve = points.clone();
    curve.push((0.0, 0.0));
    curve.push((1.0, 1.0));
    curve.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut aucroc = 0.0;
    for w in curve.windows(2) {
        aucroc += (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0;
    }
    Ok(RocReport { thresholds, points, aucroc, n_pos, n_neg })
}

/// Mann-Whitney statistic P(R_pos > R_neg) + 1/2 P(tie) by exhaustive
/// pair counting; the reference the grid AUC is checked against.
pub fn exact_auc(records: &[ScoreRecord]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(records)?;
    let pos: Vec<f64> =
        records.iter().filter(|r| r.label == 1).map(|r| r.ratio).collect();
    let neg: Vec<f64> =
        records.iter().filter(|r| r.label == 0).map(|r| r.ratio).collect();
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Population-variance split per the law of total variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceParts {
    pub total: f64,
    pub within: f64,
    pub between: f64,
}

impl VarianceParts {
    /// Fraction of variance the context does not explain; 0 when the
    /// dimension is constant.
    pub fn within_ratio(&self) -> f64 {
        if self.total > 0.0 {
            self.within / self.total
        } else {
            0.0
        }
    }
}

/// total = Var(Y), within = sum_c p(c) Var(Y|c), between =
/// sum_c p(c) (E[Y|c] - E[Y])^2, all population (1/N) moments.
pub fn variance_decomposition(y: &[f64], groups: &[u32]) -> Result<VarianceParts> {
    if y.len() != groups.len() {
        return Err(Error::validation("value and group slices differ in length"));
    }
    if y.len() < 2 {
        return Err(Error::validation("variance decomposition needs at least 2 rows"));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let total = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;

    let mut by_group: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (&v, &g) in y.iter().zip(groups.iter()) {
        by_group.entry(g).or_default().push(v);
    }
    let mut within = 0.0;
    let mut between = 0.0;
    for vals in by_group.values() {
        let p = vals.len() as f64 / n;
        let gm = vals.iter().sum::<f64>() / vals.len() as f64;
        let gv = vals.iter().map(|v| (v - gm).powi(2)).sum::<f64>() / vals.len() as f64;
        within += p * gv;
        between += p * (gm - mean).powi(2);
    }
    Ok(VarianceParts { total, within, between })
}

/// One-hot variance diagnostic over training rows: each (column, value)
/// indicator of every non-context column is decomposed against the
/// context groups. Returns (dimension label, parts) pairs.
pub fn variance_decomposition_table(
    table: &EncodedTable,
    context_column: &str,
) -> Result<Vec<(String, VarianceParts)>> {
    let ctx_idx = table.schema.column_index(context_column)?;
    let rows = table.rows_in_split(Split::Train);
    if rows.len() < 2 {
        return Err(Error::validation("variance diagnostic needs at least 2 training rows"));
    }
    let groups = table.gather_column(ctx_idx, &rows);
    let mut out = Vec::new();
    for (j, col) in table.schema.columns.iter().enumerate() {
        if j == ctx_idx {
            continue;
        }
        let encoded = table.gather_column(j, &rows);
        for value in 0..=col.cardinality as u32 {
            if !encoded.contains(&value) {
                continue;
            }
            let y: Vec<f64> =
                encoded.iter().map(|&v| if v == value { 1.0 } else { 0.0 }).collect();
            let label = match col.decode_index(value) {
                Some(s) => format!("{}={s}", col.name),
                None => format!("{}=<unseen>", col.name),
            };
            out.push((label, variance_decomposition(&y, &groups)?));
        }
    }
    Ok(out)
}

/// One point of long-format plot data; `x` stays textual so categorical
/// axes (context values) and numeric axes share one format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: String,
    pub y: f64,
}

pub fn loss_curve_points(series: &str, values: &[f64]) -> Vec<PlotPoint> {
    values
        .iter()
        .enumerate()
        .map(|(i, &y)| PlotPoint { series: series.to_string(), x: (i + 1).to_string(), y })
        .collect()
}

pub fn threshold_points(table: &ThresholdTable, labels: &BTreeMap<u32, String>) -> Vec<PlotPoint> {
    table
        .per_value
        .iter()
        .map(|(value, &y)| PlotPoint {
            series: "thresholds".to_string(),
            x: labels.get(value).cloned().unwrap_or_else(|| value.to_string()),
            y,
        })
        .collect()
}

/// Writes `series,x,y` long-format CSV; y uses the shortest
/// representation that round-trips exactly.
pub fn emit_plot_data(path: &Path, points: &[PlotPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "x", "y"])?;
    for p in points {
        w.write_record([p.series.as_str(), p.x.as_str(), &p.y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// End-to-end evaluation of a trained model: thresholds fitted on
/// training scores, ratios and ROC computed on the test split. A None
/// threshold context yields a single global threshold group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub context_column: String,
    pub thresholds: ThresholdTable,
    pub records: Vec<ScoreRecord>,
    pub roc: RocReport,
    pub aucroc: f64,
    pub exact_auc: f64,
}

pub fn evaluate(
    model: &CwaeModel,
    table: &EncodedTable,
    threshold_context: Option<&str>,
) -> Result<EvalReport> {
    let (ctx_name, ctx_idx) = match threshold_context {
        Some(col) => (col.to_string(), Some(table.schema.column_index(col)?)),
        None => (NO_CONTEXT.to_string(), None),
    };
    let gather = |rows: &[usize]| -> Vec<u32> {
        match ctx_idx {
            Some(idx) => table.gather_column(idx, rows),
            None => vec![0; rows.len()],
        }
    };

    let train_rows = table.rows_in_split(Split::Train);
    let train_scores = model.score_rows(table, &train_rows)?;
    let train_ctx = gather(&train_rows);
    let pairs: Vec<(f64, u32)> =
        train_scores.iter().copied().zip(train_ctx.iter().copied()).collect();
    let thresholds = fit_thresholds(&ctx_name, &pairs)?;

    let test_rows = table.rows_in_split(Split::Test);
    let test_scores = model.score_rows(table, &test_rows)?;
    let test_ctx = gather(&test_rows);
    let scored: Vec<ScoredRow> = test_rows
        .iter()
        .zip(test_scores.iter())
        .zip(test_ctx.iter())
        .map(|((&row, &score), &context_value)| ScoredRow {
            row,
            score,
            context_value,
            label: table.labels[row],
        })
        .collect();
    let records = contextual_ratios(&scored, &thresholds);
    let roc = aucroc_grid(&records)?;
    let exact = exact_auc(&records)?;
    Ok(EvalReport {
        context_column: ctx_name,
        aucroc: roc.aucroc,
        exact_auc: exact,
        thresholds,
        records,
        roc,
    })
}
