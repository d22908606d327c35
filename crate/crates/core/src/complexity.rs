//! Four dataset-complexity metrics over encoded tables plus the
//! min-max scaling, competition ranking, and average-scaled pipeline
//! that orders a dataset collection by difficulty.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::EncodedTable;

/// Pair-sampling cap for k_vcc; beyond this many anomaly pairs a seeded
/// uniform sample is used instead of exhaustive enumeration.
pub const MAX_VCC_PAIRS: usize = 10_000;

fn anomaly_rows(table: &EncodedTable) -> Vec<usize> {
    (0..table.n_rows()).filter(|&r| table.labels[r] == 1).collect()
}

fn normal_rows(table: &EncodedTable) -> Vec<usize> {
    (0..table.n_rows()).filter(|&r| table.labels[r] == 0).collect()
}

/// Per-column value counts over all rows.
fn value_counts(table: &EncodedTable, col: usize) -> HashMap<u32, usize> {
    let mut counts = HashMap::new();
    for row in 0..table.n_rows() {
        *counts.entry(table.value(row, col)).or_insert(0) += 1;
    }
    counts
}

fn hamming_similarity(table: &EncodedTable, a: usize, b: usize) -> f64 {
    let d = table.n_cols();
    let matches = (0..d).filter(|&j| table.value(a, j) == table.value(b, j)).count();
    matches as f64 / d as f64
}

/// Mean pairwise Hamming similarity over anomaly pairs (value-coupling:
/// how much outliers resemble each other). At most MAX_VCC_PAIRS pairs
/// are examined, sampled with the given seed when the exhaustive count
/// exceeds the cap.
pub fn k_vcc(table: &EncodedTable, seed: u64) -> Result<f64> {
    let anomalies = anomaly_rows(table);
    let a = anomalies.len();
    if a < 2 {
        return Err(Error::validation(format!("k_vcc needs at least 2 anomalies, found {a}")));
    }
    let n_pairs = a * (a - 1) / 2;
    let mut total = 0.0;
    let used: usize;
    if n_pairs <= MAX_VCC_PAIRS {
        for i in 0..a {
            for j in (i + 1)..a {
                total += hamming_similarity(table, anomalies[i], anomalies[j]);
            }
        }
        used = n_pairs;
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for _ in 0..MAX_VCC_PAIRS {
            let i = rng.gen_range(0..a);
            let j = loop {
                let j = rng.gen_range(0..a);
                if j != i {
                    break j;
                }
            };
            total += hamming_similarity(table, anomalies[i], anomalies[j]);
        }
        used = MAX_VCC_PAIRS;
    }
    Ok(total / used as f64)
}

/// Ratio of the largest to the smallest per-feature mode frequency
/// (heterogeneity of dominant categories). Always >= 1.
pub fn k_het(table: &EncodedTable) -> Result<f64> {
    if table.n_cols() == 0 {
        return Err(Error::validation("k_het needs at least one feature"));
    }
    let n = table.n_rows() as f64;
    let mut max_mode = f64::NEG_INFINITY;
    let mut min_mode = f64::INFINITY;
    for col in 0..table.n_cols() {
        let mode = value_counts(table, col).values().copied().max().unwrap_or(0);
        let p = mode as f64 / n;
        max_mode = max_mode.max(p);
        min_mode = min_mode.min(p);
    }
    Ok(max_mode / min_mode)
}

/// Mean, over (anomaly row, feature) pairs, of the fraction of normal
/// rows whose value is strictly rarer than the anomaly's value
/// (inseparability: high when anomalies hide among common values).
/// Frequencies are counted over all rows.
pub fn k_ins(table: &EncodedTable) -> Result<f64> {
    let anomalies = anomaly_rows(table);
    if anomalies.is_empty() {
        return Err(Error::validation("k_ins needs at least one anomaly"));
    }
    let normals = normal_rows(table);
    if normals.is_empty() {
        return Err(Error::validation("k_ins needs at least one normal row"));
    }
    let mut total = 0.0;
    for col in 0..table.n_cols() {
        let counts = value_counts(table, col);
        for &a in &anomalies {
            let c_a = counts[&table.value(a, col)];
            let rarer =
                normals.iter().filter(|&&r| counts[&table.value(r, col)] < c_a).count();
            total += rarer as f64 / normals.len() as f64;
        }
    }
    Ok(total / (anomalies.len() * table.n_cols()) as f64)
}

/// Fraction of features where the mean value-frequency of anomalies is
/// at least that of normal rows (frequency-noise level: high when
/// anomalies look as common as normal data). Frequencies over all rows.
pub fn k_fnl(table: &EncodedTable) -> Result<f64> {
    let anomalies = anomaly_rows(table);
    if anomalies.is_empty() {
        return Err(Error::validation("k_fnl needs at least one anomaly"));
    }
    let normals = normal_rows(table);
    if normals.is_empty() {
        return Err(Error::validation("k_fnl needs at least one normal row"));
    }
    let n = table.n_rows() as f64;
    let mut hits = 0usize;
    for col in 0..table.n_cols() {
        let counts = value_counts(table, col);
        let mean_freq = |rows: &[usize]| -> f64 {
            rows.iter().map(|&r| counts[&table.value(r, col)] as f64 / n).sum::<f64>()
                / rows.len() as f64
        };
        if mean_freq(&anomalies) >= mean_freq(&normals) {
            hits += 1;
        }
    }
    Ok(hits as f64 / table.n_cols() as f64)
}

/// Raw scores for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawComplexity {
    pub dataset: String,
    pub k_vcc: f64,
    pub k_het: f64,
    pub k_ins: f64,
    pub k_fnl: f64,
}

pub fn raw_complexity(name: &str, table: &EncodedTable, seed: u64) -> Result<RawComplexity> {
    Ok(RawComplexity {
        dataset: name.to_string(),
        k_vcc: k_vcc(table, seed)?,
        k_het: k_het(table)?,
        k_ins: k_ins(table)?,
        k_fnl: k_fnl(table)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub raw: f64,
    /// (raw - min) / (max - min) across the collection; 0 when the
    /// metric is constant across datasets.
    pub scaled: f64,
    /// Competition rank: 1 = highest raw; ties share the smaller rank.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub dataset: String,
    pub k_vcc: MetricEntry,
    pub k_het: MetricEntry,
    pub k_ins: MetricEntry,
    pub k_fnl: MetricEntry,
    pub avg_scaled: f64,
    pub overall_rank: usize,
}

fn scale_column(raws: &[f64]) -> Vec<f64> {
    let min = raws.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        raws.iter().map(|&r| (r - min) / (max - min)).collect()
    } else {
        vec![0.0; raws.len()]
    }
}

fn competition_ranks(raws: &[f64]) -> Vec<usize> {
    raws.iter()
        .map(|&r| 1 + raws.iter().filter(|&&o| o > r).count())
        .collect()
}

/// Min-max scales each metric across the collection, ranks descending by
/// raw score, averages the four scaled values, and ranks the averages.
pub fn scale_and_rank(raw: &[RawComplexity]) -> Result<Vec<ComplexityReport>> {
    if raw.len() < 2 {
        return Err(Error::validation("scaling needs at least 2 datasets"));
    }
    let columns: [Vec<f64>; 4] = [
        raw.iter().map(|r| r.k_vcc).collect(),
        raw.iter().map(|r| r.k_het).collect(),
        raw.iter().map(|r| r.k_ins).collect(),
        raw.iter().map(|r| r.k_fnl).collect(),
    ];
    let scaled: Vec<Vec<f64>> = columns.iter().map(|c| scale_column(c)).collect();
    let ranks: Vec<Vec<usize>> = columns.iter().map(|c| competition_ranks(c)).collect();
    let avg_scaled: Vec<f64> = (0..raw.len())
        .map(|i| scaled.iter().map(|col| col[i]).sum::<f64>() / 4.0)
        .collect();
    let overall = competition_ranks(&avg_scaled);

    Ok(raw
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let entry = |m: usize| MetricEntry {
                raw: columns[m][i],
                scaled: scaled[m][i],
                rank: ranks[m][i],
            };
            ComplexityReport {
                dataset: r.dataset.clone(),
                k_vcc: entry(0),
                k_het: entry(1),
                k_ins: entry(2),
                k_fnl: entry(3),
                avg_scaled: avg_scaled[i],
                overall_rank: overall[i],
            }
        })
        .collect())
}

/// CSV with one row per dataset: raw/scaled/rank for each metric, then
/// the average scaled score and overall rank.
pub fn write_complexity_csv(path: &Path, reports: &[ComplexityReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "dataset",
        "k_vcc_raw",
        "k_vcc_scaled",
        "k_vcc_rank",
        "k_het_raw",
        "k_het_scaled",
        "k_het_rank",
        "k_ins_raw",
        "k_ins_scaled",
        "k_ins_rank",
        "k_fnl_raw",
        "k_fnl_scaled",
        "k_fnl_rank",
        "avg_scaled",
        "overall_rank",
    ])?;
    for r in reports {
        let m = |e: &MetricEntry| [e.raw.to_string(), e.scaled.to_string(), e.rank.to_string()];
        let mut record = vec![r.dataset.clone()];
        record.extend(m(&r.k_vcc));
        record.extend(m(&r.k_het));
        record.extend(m(&r.k_ins));
        record.extend(m(&r.k_fnl));
        record.push(r.avg_scaled.to_string());
        record.push(r.overall_rank.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
