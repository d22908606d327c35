//! CSV ingestion: schema inference with quantile binning for numeric
//! columns, integer encoding with a reserved unseen slot, anomaly-free
//! train/val splits, and smoothed context distributions.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"CTXAD.DS";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Categorical,
    NumericBinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Distinct observed values (categorical) or bin count (numeric).
    /// Encoded indices lie in [0, cardinality]; 0 is the unseen slot.
    pub cardinality: usize,
    /// Interior bin boundaries, strictly increasing. Present iff numeric.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_edges: Option<Vec<f64>>,
    /// Categorical vocabulary; value at position i encodes to index i+1.
    #[serde(default)]
    pub vocab: Vec<String>,
}

impl ColumnSpec {
    /// Maps a raw cell to its index. Unseen categorical values map to 0.
    /// Numeric cells clamp into the nearest bin; unparseable cells map to 0.
    pub fn encode_cell(&self, cell: &str, lookup: &HashMap<&str, u32>) -> u32 {
        match self.kind {
            ColumnKind::Categorical => lookup.get(cell).copied().unwrap_or(0),
            ColumnKind::NumericBinned => match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    let edges = self.bin_edges.as_deref().unwrap_or(&[]);
                    1 + edges.iter().filter(|&&e| v > e).count() as u32
                }
                _ => 0,
            },
        }
    }

    /// Human-readable value for an index; `None` for the unseen slot.
    pub fn decode_index(&self, idx: u32) -> Option<String> {
        if idx == 0 {
            return None;
        }
        match self.kind {
            ColumnKind::Categorical => self.vocab.get(idx as usize - 1).cloned(),
            ColumnKind::NumericBinned => {
                let edges = self.bin_edges.as_deref().unwrap_or(&[]);
                let i = idx as usize - 1;
                if i >= edges.len() + 1 {
                    return None;
                }
                let lo = if i == 0 { "-inf".to_string() } else { format!("{}", edges[i - 1]) };
                let hi = if i == edges.len() { "inf".to_string() } else { format!("{}", edges[i]) };
                Some(format!("({lo}, {hi}]"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    /// Feature columns in file order; the label column is excluded.
    pub columns: Vec<ColumnSpec>,
    pub label_column: String,
    pub candidate_context_columns: Vec<String>,
}

impl DatasetSchema {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::validation(format!("unknown column {name:?}")))
    }

    pub fn column(&self, name: &str) -> Result<&ColumnSpec> {
        Ok(&self.columns[self.column_index(name)?])
    }

    /// SHA-256 over the canonical JSON encoding; checkpoints store this to
    /// refuse scoring against a different vocabulary.
    pub fn fingerprint(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("schema serializes");
        let mut h = Sha256::new();
        h.update(&json);
        h.finalize().into()
    }

    pub fn fingerprint_hex(&self) -> String {
        self.fingerprint().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Split {
    Train = 0,
    Val = 1,
    Test = 2,
}

impl Split {
    fn from_u8(v: u8) -> Option<Split> {
        match v {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTable {
    pub schema: DatasetSchema,
    /// Row-major index matrix, n_rows x schema.columns.len().
    rows: Vec<u32>,
    n_rows: usize,
    /// 1 marks an anomaly.
    pub labels: Vec<u8>,
    pub splits: Vec<Split>,
}

impl EncodedTable {
    /// Builds a table from raw parts, checking every invariant.
    pub fn from_parts(
        schema: DatasetSchema,
        rows: Vec<u32>,
        labels: Vec<u8>,
        splits: Vec<Split>,
    ) -> Result<EncodedTable> {
        let d = schema.columns.len();
        if d == 0 || rows.len() % d != 0 {
            return Err(Error::validation("row buffer is not a whole number of rows"));
        }
        let table = EncodedTable { n_rows: rows.len() / d, schema, rows, labels, splits };
        table.validate()?;
        Ok(table)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.schema.columns.len()
    }

    pub fn value(&self, row: usize, col: usize) -> u32 {
        self.rows[row * self.n_cols() + col]
    }

    pub fn row(&self, row: usize) -> &[u32] {
        let d = self.n_cols();
        &self.rows[row * d..(row + 1) * d]
    }

    pub fn rows_in_split(&self, split: Split) -> Vec<usize> {
        (0..self.n_rows).filter(|&r| self.splits[r] == split).collect()
    }

    /// Column values gathered for the given rows.
    pub fn gather_column(&self, col: usize, row_ids: &[usize]) -> Vec<u32> {
        row_ids.iter().map(|&r| self.value(r, col)).collect()
    }

    pub fn n_anomalies(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    /// Checks the structural invariants; load paths call this so corrupt
    /// files surface as errors instead of panics downstream.
    pub fn validate(&self) -> Result<()> {
        let d = self.n_cols();
        if self.rows.len() != self.n_rows * d
            || self.labels.len() != self.n_rows
            || self.splits.len() != self.n_rows
        {
            return Err(Error::validation("row/label/split lengths disagree"));
        }
        for (ci, col) in self.schema.columns.iter().enumerate() {
            if col.cardinality == 0 {
                return Err(Error::validation(format!("column {:?} has cardinality 0", col.name)));
            }
            if let Some(edges) = &col.bin_edges {
                if !edges.windows(2).all(|w| w[0] < w[1]) {
                    return Err(Error::validation(format!(
                        "column {:?} bin edges not strictly increasing",
                        col.name
                    )));
                }
            }
            for r in 0..self.n_rows {
                let v = self.value(r, ci);
                if v as usize > col.cardinality {
                    return Err(Error::validation(format!(
                        "row {r} column {:?}: index {v} exceeds cardinality {}",
                        col.name, col.cardinality
                    )));
                }
            }
        }
        for r in 0..self.n_rows {
            if self.labels[r] == 1 && self.splits[r] != Split::Test {
                return Err(Error::validation(format!("anomalous row {r} outside test split")));
            }
            if self.labels[r] > 1 {
                return Err(Error::validation(format!("row {r} label {} not binary", self.labels[r])));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextDistribution {
    pub column: String,
    /// Add-one smoothed probabilities for every index 0..=cardinality.
    pub probabilities: Vec<f64>,
}

impl ContextDistribution {
    pub fn prob(&self, idx: u32) -> f64 {
        self.probabilities[idx as usize]
    }

    pub fn neg_log_prob(&self, idx: u32) -> f64 {
        -self.prob(idx).ln()
    }
}

/// Raw CSV contents: header plus string cells, no typing applied yet.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read_csv(path: &Path) -> Result<RawTable> {
        let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        let table = RawTable { header, rows };
        table.check_shape()?;
        Ok(table)
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.header.is_empty() {
            return Err(Error::validation("table has no header"));
        }
        if self.rows.is_empty() {
            return Err(Error::validation("table has no rows"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &self.header {
            if !seen.insert(name) {
                return Err(Error::validation(format!("duplicate column name {name:?}")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                return Err(Error::validation(format!(
                    "row {i} has {} cells, header has {}",
                    row.len(),
                    self.header.len()
                )));
            }
        }
        Ok(())
    }

    pub fn column_position(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::validation(format!("column {name:?} not in header")))
    }
}

/// Interior quantile edges at k/bins for k in 1..bins, deduplicated so the
/// result is strictly increasing. Heavily repeated values can collapse
/// several quantiles onto one edge; the bin count shrinks accordingly.
fn quantile_edges(values: &mut Vec<f64>, bins: usize) -> Vec<f64> {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();
    let mut edges = Vec::with_capacity(bins.saturating_sub(1));
    for k in 1..bins {
        let h = (n - 1) as f64 * k as f64 / bins as f64;
        let lo = h.floor() as usize;
        let frac = h - lo as f64;
        let edge = if lo + 1 < n {
            values[lo] + frac * (values[lo + 1] - values[lo])
        } else {
            values[lo]
        };
        if edges.last().map_or(true, |&last| edge > last) {
            edges.push(edge);
        }
    }
    edges
}

/// Column typing rule: a column becomes numeric-binned only when every cell
/// parses as a finite number and the distinct count exceeds `numeric_bins`;
/// otherwise it stays categorical with one index per distinct value.
pub fn infer_schema(
    raw: &RawTable,
    numeric_bins: usize,
    label_column: &str,
    candidate_context_columns: Option<&[String]>,
) -> Result<DatasetSchema> {
    raw.check_shape()?;
    if numeric_bins < 2 {
        return Err(Error::validation("numeric_bins must be at least 2"));
    }
    raw.column_position(label_column)?;
    let mut columns = Vec::new();
    for (ci, name) in raw.header.iter().enumerate() {
        if name == label_column {
            continue;
        }
        let cells: Vec<&str> = raw.rows.iter().map(|r| r[ci].as_str()).collect();
        let mut distinct: Vec<&str> = {
            let set: std::collections::BTreeSet<&str> = cells.iter().copied().collect();
            set.into_iter().collect()
        };
        let parsed: Option<Vec<f64>> = cells
            .iter()
            .map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect();
        let spec = match parsed {
            Some(mut values) if distinct.len() > numeric_bins => {
                let edges = quantile_edges(&mut values, numeric_bins);
                ColumnSpec {
                    name: name.clone(),
                    kind: ColumnKind::NumericBinned,
                    cardinality: edges.len() + 1,
                    bin_edges: Some(edges),
                    vocab: Vec::new(),
                }
            }
            _ => {
                distinct.sort_unstable();
                ColumnSpec {
                    name: name.clone(),
                    kind: ColumnKind::Categorical,
                    cardinality: distinct.len(),
                    bin_edges: None,
                    vocab: distinct.into_iter().map(str::to_string).collect(),
                }
            }
        };
        columns.push(spec);
    }
    let candidates: Vec<String> = match candidate_context_columns {
        Some(list) => {
            for name in list {
                if name == label_column {
                    return Err(Error::validation("label column cannot be a context candidate"));
                }
                if !columns.iter().any(|c| &c.name == name) {
                    return Err(Error::validation(format!("context candidate {name:?} not found")));
                }
            }
            list.to_vec()
        }
        None => columns.iter().map(|c| c.name.clone()).collect(),
    };
    Ok(DatasetSchema {
        columns,
        label_column: label_column.to_string(),
        candidate_context_columns: candidates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabSource {
    /// Rebuild categorical vocabularies from this table (sorted distinct
    /// values); bin edges are kept from the schema.
    Fit,
    /// Use the schema's vocabularies; unknown values encode to index 0.
    Existing,
}

/// Encodes raw cells to indices and extracts binary labels. Rows matching
/// `positive_label` in the label column become anomalies. All rows start
/// in the test split; `split_dataset` assigns the real tags.
pub fn encode_table(
    raw: &RawTable,
    schema: &DatasetSchema,
    source: VocabSource,
    positive_label: &str,
) -> Result<EncodedTable> {
    raw.check_shape()?;
    let label_pos = raw.column_position(&schema.label_column)?;
    let mut schema = schema.clone();

    let mut positions = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        positions.push(raw.column_position(&col.name)?);
    }

    if source == VocabSource::Fit {
        for (col, &pos) in schema.columns.iter_mut().zip(&positions) {
            if col.kind == ColumnKind::Categorical {
                let distinct: std::collections::BTreeSet<&str> =
                    raw.rows.iter().map(|r| r[pos].as_str()).collect();
                col.vocab = distinct.into_iter().map(str::to_string).collect();
                col.cardinality = col.vocab.len();
            }
        }
    }

    let label_values: std::collections::BTreeSet<&str> =
        raw.rows.iter().map(|r| r[label_pos].as_str()).collect();
    if label_values.len() > 2 {
        return Err(Error::validation(format!(
            "label column {:?} has {} distinct values, expected at most 2",
            schema.label_column,
            label_values.len()
        )));
    }

    let lookups: Vec<HashMap<&str, u32>> = schema
        .columns
        .iter()
        .map(|col| {
            col.vocab
                .iter()
                .enumerate()
                .map(|(i, v)| (v.as_str(), i as u32 + 1))
                .collect()
        })
        .collect();

    let n = raw.rows.len();
    let d = schema.columns.len();
    let mut rows = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for raw_row in &raw.rows {
        for ((col, &pos), lookup) in schema.columns.iter().zip(&positions).zip(&lookups) {
            rows.push(col.encode_cell(&raw_row[pos], lookup));
        }
        labels.push(u8::from(raw_row[label_pos] == positive_label));
    }

    Ok(EncodedTable { schema, rows, n_rows: n, labels, splits: vec![Split::Test; n] })
}

/// Partitions rows: every anomaly goes to test; normal rows are shuffled
/// with the seed and dealt test, then val, then train. Counts use floors
/// of the fractions applied to the normal count.
pub fn split_dataset(
    table: &mut EncodedTable,
    val_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<()> {
    if !(0.0..1.0).contains(&val_fraction)
        || !(0.0..1.0).contains(&test_fraction)
        || val_fraction + test_fraction >= 1.0
    {
        return Err(Error::validation(format!(
            "invalid split fractions val={val_fraction} test={test_fraction}"
        )));
    }
    let mut normals: Vec<usize> =
        (0..table.n_rows()).filter(|&r| table.labels[r] == 0).collect();
    if normals.is_empty() {
        return Err(Error::validation("dataset has no normal rows to train on"));
    }
    let n_test = (test_fraction * normals.len() as f64).floor() as usize;
    let n_val = (val_fraction * normals.len() as f64).floor() as usize;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    normals.shuffle(&mut rng);

    for r in 0..table.n_rows() {
        table.splits[r] = Split::Test;
    }
    for (i, &r) in normals.iter().enumerate() {
        table.splits[r] = if i < n_test {
            Split::Test
        } else if i < n_test + n_val {
            Split::Val
        } else {
            Split::Train
        };
    }
    Ok(())
}

/// Add-one smoothed index frequencies over the train split:
/// P(c) = (count(c) + 1) / (n_train + cardinality + 1), covering every
/// index 0..=cardinality so unseen contexts keep nonzero mass.
pub fn context_distribution(table: &EncodedTable, column: &str) -> Result<ContextDistribution> {
    let ci = table.schema.column_index(column)?;
    let card = table.schema.columns[ci].cardinality;
    let train_rows = table.rows_in_split(Split::Train);
    if train_rows.is_empty() {
        return Err(Error::validation("train split is empty"));
    }
    let mut counts = vec![0usize; card + 1];
    for &r in &train_rows {
        counts[table.value(r, ci) as usize] += 1;
    }
    let denom = (train_rows.len() + card + 1) as f64;
    let probabilities = counts.iter().map(|&c| (c + 1) as f64 / denom).collect();
    Ok(ContextDistribution { column: column.to_string(), probabilities })
}

fn default_numeric_bins() -> usize {
    10
}
fn default_val_fraction() -> f64 {
    0.1
}
fn default_test_fraction() -> f64 {
    0.2
}

/// Declares where a dataset lives and how to ingest it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    /// CSV path, resolved relative to the manifest file.
    pub path: String,
    pub label_column: String,
    /// Literal in the label column that marks an anomaly.
    pub positive_label: String,
    /// Defaults to every feature column when omitted.
    #[serde(default)]
    pub candidate_context_columns: Option<Vec<String>>,
    #[serde(default = "default_numeric_bins")]
    pub numeric_bins: usize,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    /// Free-form provenance note, e.g. where to obtain the file.
    #[serde(default)]
    pub notes: Option<String>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<DatasetManifest> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text)
            .map_err(|e| Error::validation(format!("manifest {}: {e}", path.display())))
    }

    pub fn csv_path(&self, manifest_path: &Path) -> std::path::PathBuf {
        let p = Path::new(&self.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path.parent().unwrap_or(Path::new(".")).join(p)
        }
    }
}

/// Full ingest pipeline: read CSV, infer schema, encode, split.
pub fn ingest(manifest: &DatasetManifest, manifest_path: &Path) -> Result<EncodedTable> {
    let raw = RawTable::read_csv(&manifest.csv_path(manifest_path))?;
    let schema = infer_schema(
        &raw,
        manifest.numeric_bins,
        &manifest.label_column,
        manifest.candidate_context_columns.as_deref(),
    )?;
    let mut table = encode_table(&raw, &schema, VocabSource::Fit, &manifest.positive_label)?;
    split_dataset(&mut table, manifest.val_fraction, manifest.test_fraction, manifest.split_seed)?;
    table.validate()?;
    Ok(table)
}

/// Binary layout, little-endian throughout:
/// magic (8 bytes) | version u32 | schema JSON length u64 + bytes |
/// n_rows u64 | n_cols u64 | labels (n bytes) | splits (n bytes) |
/// row-major index matrix (n*d u32).
pub fn save_dataset(table: &EncodedTable, path: &Path) -> Result<()> {
    table.validate()?;
    let mut buf = Vec::new();
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    let schema_json = serde_json::to_vec(&table.schema).expect("schema serializes");
    buf.extend_from_slice(&(schema_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&schema_json);
    buf.extend_from_slice(&(table.n_rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(table.n_cols() as u64).to_le_bytes());
    buf.extend_from_slice(&table.labels);
    buf.extend(table.splits.iter().map(|&s| s as u8));
    for v in &table.rows {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::CorruptFile {
                path: self.path.display().to_string(),
                reason: format!("truncated while reading {what}"),
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn load_dataset(path: &Path) -> Result<EncodedTable> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let corrupt = |reason: String| Error::CorruptFile {
        path: path.display().to_string(),
        reason,
    };
    let mut cur = Cursor { data: &data, pos: 0, path };
    if cur.take(8, "magic")? != DATASET_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = cur.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            path: path.display().to_string(),
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let schema_len = cur.u64("schema length")? as usize;
    let schema_bytes = cur.take(schema_len, "schema")?;
    let schema: DatasetSchema = serde_json::from_slice(schema_bytes)
        .map_err(|e| corrupt(format!("schema JSON: {e}")))?;
    let n_rows = cur.u64("row count")? as usize;
    let n_cols = cur.u64("column count")? as usize;
    if n_cols != schema.columns.len() {
        return Err(corrupt(format!(
            "column count {n_cols} does not match schema ({})",
            schema.columns.len()
        )));
    }
    let labels = cur.take(n_rows, "labels")?.to_vec();
    let splits: Vec<Split> = cur
        .take(n_rows, "splits")?
        .iter()
        .map(|&b| Split::from_u8(b).ok_or_else(|| corrupt(format!("invalid split tag {b}"))))
        .collect::<Result<_>>()?;
    let matrix_bytes = cur.take(n_rows * n_cols * 4, "index matrix")?;
    if cur.pos != data.len() {
        return Err(corrupt("trailing bytes after index matrix".into()));
    }
    let rows = matrix_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let table = EncodedTable { schema, rows, n_rows, labels, splits };
    table.validate()?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(header: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    fn tiny_table() -> RawTable {
        raw(
            &["color", "size", "label"],
            &[
                &["red", "s", "0"],
                &["blue", "m", "0"],
                &["red", "l", "0"],
                &["blue", "s", "1"],
            ],
        )
    }

    #[test]
    fn infer_categorical_cardinality() {
        let t = raw(&["c", "label"], &[&["a", "0"], &["b", "0"], &["a", "0"]]);
        let schema = infer_schema(&t, 10, "label", None).unwrap();
        let col = &schema.columns[0];
        assert_eq!(col.kind, ColumnKind::Categorical);
        assert_eq!(col.cardinality, 2);
        assert_eq!(col.vocab, vec!["a", "b"]);
    }

    #[test]
    fn infer_numeric_when_distinct_exceeds_bins() {
        let rows: Vec<Vec<String>> =
            (0..1000).map(|i| vec![format!("{}.5", i), "0".to_string()]).collect();
        let t = RawTable { header: vec!["x".into(), "label".into()], rows };
        let schema = infer_schema(&t, 10, "label", None).unwrap();
        let col = &schema.columns[0];
        assert_eq!(col.kind, ColumnKind::NumericBinned);
        assert_eq!(col.bin_edges.as_ref().unwrap().len(), 9);
        assert_eq!(col.cardinality, 10);
    }

    #[test]
    fn small_numeric_domain_stays_categorical() {
        let t = raw(&["x", "label"], &[&["1", "0"], &["2", "0"], &["1", "0"]]);
        let schema = infer_schema(&t, 10, "label", None).unwrap();
        assert_eq!(schema.columns[0].kind, ColumnKind::Categorical);
        assert_eq!(schema.columns[0].cardinality, 2);
    }

    #[test]
    fn encode_maps_unknown_to_reserved_zero() {
        let fit = raw(&["c", "label"], &[&["A", "0"], &["B", "0"]]);
        let schema = infer_schema(&fit, 10, "label", None).unwrap();
        let fresh = raw(&["c", "label"], &[&["A", "0"], &["B", "0"], &["C", "0"]]);
        let table = encode_table(&fresh, &schema, VocabSource::Existing, "1").unwrap();
        let col: Vec<u32> = (0..3).map(|r| table.value(r, 0)).collect();
        assert_eq!(col, vec![1, 2, 0]);
    }

    #[test]
    fn fit_builds_sorted_vocabulary() {
        let t = raw(&["c", "label"], &[&["x", "0"], &["x", "0"], &["y", "1"]]);
        let schema = infer_schema(&t, 10, "label", None).unwrap();
        let table = encode_table(&t, &schema, VocabSource::Fit, "1").unwrap();
        assert_eq!(table.schema.columns[0].cardinality, 2);
        assert_eq!(table.labels, vec![0, 0, 1]);
        assert_eq!(table.schema.columns[0].decode_index(1).unwrap(), "x");
        assert_eq!(table.schema.columns[0].decode_index(0), None);
    }

    #[test]
    fn numeric_below_first_edge_clamps_to_lowest_bin() {
        let rows: Vec<Vec<String>> =
            (0..100).map(|i| vec![format!("{i}"), "0".to_string()]).collect();
        let t = RawTable { header: vec!["x".into(), "label".into()], rows };
        let schema = infer_schema(&t, 10, "label", None).unwrap();
        let probe = raw(&["x", "label"], &[&["-1000", "0"], &["1000", "0"]]);
        let table = encode_table(&probe, &schema, VocabSource::Existing, "1").unwrap();
        assert_eq!(table.value(0, 0), 1, "below range clamps to bin 1");
        assert_eq!(table.value(1, 0), 10, "above range clamps to top bin");
    }

    #[test]
    fn three_valued_label_column_rejected() {
        let t = raw(&["c", "label"], &[&["a", "0"], &["a", "1"], &["a", "2"]]);
        let schema = infer_schema(&t, 10, "label", None).unwrap();
        let err = encode_table(&t, &schema, VocabSource::Fit, "1").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn split_counts_follow_floors() {
        let mut rows: Vec<Vec<String>> =
            (0..10).map(|i| vec![format!("v{i}"), "0".to_string()]).collect();
        rows.push(vec!["v0".into(), "1".into()]);
        rows.push(vec!["v1".into(), "1".into()]);
        let t = RawTable { header: vec!["c".into(), "label".into()], rows };
        let schema = infer_schema(&t, 20, "label", None).unwrap();
        let mut table = encode_table(&t, &schema, VocabSource::Fit, "1").unwrap();
        split_dataset(&mut table, 0.2, 0.2, 7).unwrap();
        assert_eq!(table.rows_in_split(Split::Train).len(), 6);
        assert_eq!(table.rows_in_split(Split::Val).len(), 2);
        assert_eq!(table.rows_in_split(Split::Test).len(), 4);
        table.validate().unwrap();

        let mut again = encode_table(&t, &schema, VocabSource::Fit, "1").unwrap();
        split_dataset(&mut again, 0.2, 0.2, 7).unwrap();
        assert_eq!(table.splits, again.splits, "same seed, same tags");
    }

    #[test]
    fn all_anomalous_dataset_rejected() {
        let t = raw(&["c", "label"], &[&["a", "1"], &["b", "1"]]);
        let schema = infer_schema(&t, 10, "label", None).unwrap();
        let mut table = encode_table(&t, &schema, VocabSource::Fit, "1").unwrap();
        let err = split_dataset(&mut table, 0.1, 0.2, 0).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn context_distribution_add_one_smoothing() {
        // Train column [a,a,a,b], cardinality 2: P(a)=4/7, P(b)=2/7, P(0)=1/7.
        let t = raw(
            &["c", "label"],
            &[&["a", "0"], &["a", "0"], &["a", "0"], &["b", "0"]],
        );
        let schema = infer_schema(&t, 10, "label", None).unwrap();
        let mut table = encode_table(&t, &schema, VocabSource::Fit, "1").unwrap();
        for s in table.splits.iter_mut() {
            *s = Split::Train;
        }
        let dist = context_distribution(&table, "c").unwrap();
        assert!((dist.prob(1) - 4.0 / 7.0).abs() < 1e-15);
        assert!((dist.prob(2) - 2.0 / 7.0).abs() < 1e-15);
        assert!((dist.prob(0) - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn dataset_file_round_trips() {
        let t = tiny_table();
        let schema = infer_schema(&t, 10, "label", None).unwrap();
        let mut table = encode_table(&t, &schema, VocabSource::Fit, "1").unwrap();
        split_dataset(&mut table, 0.2, 0.2, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bin");
        save_dataset(&table, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(table, loaded);

        let path2 = dir.path().join("ds2.bin");
        save_dataset(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupt_and_mismatched_files_are_rejected() {
        let t = tiny_table();
        let schema = infer_schema(&t, 10, "label", None).unwrap();
        let mut table = encode_table(&t, &schema, VocabSource::Fit, "1").unwrap();
        split_dataset(&mut table, 0.2, 0.2, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bin");
        save_dataset(&table, &path).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_dataset(&path).unwrap_err(), Error::CorruptFile { .. }));

        save_dataset(&table, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8] = 99;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_dataset(&path).unwrap_err(), Error::VersionMismatch { .. }));
    }

    #[test]
    fn fingerprint_changes_with_vocabulary() {
        let t = tiny_table();
        let schema = infer_schema(&t, 10, "label", None).unwrap();
        let mut other = schema.clone();
        other.columns[0].vocab.push("teal".into());
        assert_ne!(schema.fingerprint(), other.fingerprint());
        assert_eq!(schema.fingerprint(), schema.clone().fingerprint());
    }

    proptest! {
        #[test]
        fn distribution_sums_to_one(values in proptest::collection::vec(0u8..5, 1..200)) {
            let rows: Vec<Vec<String>> = values
                .iter()
                .map(|v| vec![format!("v{v}"), "0".to_string()])
                .collect();
            let t = RawTable { header: vec!["c".into(), "label".into()], rows };
            let schema = infer_schema(&t, 20, "label", None).unwrap();
            let mut table = encode_table(&t, &schema, VocabSource::Fit, "1").unwrap();
            for s in table.splits.iter_mut() {
                *s = Split::Train;
            }
            let dist = context_distribution(&table, "c").unwrap();
            let total: f64 = dist.probabilities.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(dist.probabilities.iter().all(|&p| p > 0.0));
        }

        #[test]
        fn splits_partition_all_rows(
            n_normal in 3usize..60,
            n_anom in 0usize..10,
            seed in 0u64..50,
        ) {
            let mut rows: Vec<Vec<String>> = (0..n_normal)
                .map(|i| vec![format!("v{}", i % 4), "0".to_string()])
                .collect();
            rows.extend((0..n_anom).map(|i| vec![format!("v{}", i % 4), "1".to_string()]));
            let t = RawTable { header: vec!["c".into(), "label".into()], rows };
            let schema = infer_schema(&t, 20, "label", None).unwrap();
            let mut table = encode_table(&t, &schema, VocabSource::Fit, "1").unwrap();
            split_dataset(&mut table, 0.15, 0.25, seed).unwrap();
            table.validate().unwrap();
            let parts = table.rows_in_split(Split::Train).len()
                + table.rows_in_split(Split::Val).len()
                + table.rows_in_split(Split::Test).len();
            prop_assert_eq!(parts, n_normal + n_anom);
        }

        #[test]
        fn vocabulary_round_trips(values in proptest::collection::vec("[a-z]{1,6}", 1..50)) {
            let rows: Vec<Vec<String>> =
                values.iter().map(|v| vec![v.clone(), "0".to_string()]).collect();
            let t = RawTable { header: vec!["c".into(), "label".into()], rows: rows.clone() };
            let schema = infer_schema(&t, 100, "label", None).unwrap();
            let table = encode_table(&t, &schema, VocabSource::Fit, "1").unwrap();
            for (r, row) in rows.iter().enumerate() {
                let idx = table.value(r, 0);
                prop_assert!(idx >= 1);
                let decoded = table.schema.columns[0].decode_index(idx).unwrap();
                prop_assert_eq!(&decoded, &row[0]);
            }
        }
    }
}
