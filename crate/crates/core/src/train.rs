//! Seeded mini-batch training with Adam, validation NLL, and versioned
//! checkpoints. A (seed, data, config) triple fully determines the
//! parameter trajectory.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{AdamConfig, AdamState, Tensor};
use crate::error::{Error, Result};
use crate::model::{CwaeModel, ModelConfig};
use crate::tabular::{DatasetSchema, EncodedTable, Split};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CTXAD.CP";
pub const CHECKPOINT_VERSION: u32 = 1;

fn default_epochs() -> usize {
    30
}
fn default_batch_size() -> usize {
    256
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_shuffle() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_shuffle")]
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            seed: 0,
            shuffle: true,
        }
    }
}

/// Per-epoch means of the batch losses plus validation reconstruction
/// loss. Wall-clock timings are kept out of serialized reports so that
/// repeated runs produce byte-identical files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_total: Vec<f64>,
    pub epoch_recon: Vec<f64>,
    pub epoch_mmd: Vec<f64>,
    /// Present when the dataset has a validation split.
    pub epoch_val_recon: Vec<f64>,
    #[serde(skip_serializing, default)]
    pub epoch_seconds: Vec<f64>,
}

/// Trains in place for `tcfg.epochs` epochs and returns the report plus
/// the final optimizer state (step 0 when epochs = 0).
pub fn train(
    model: &mut CwaeModel,
    table: &EncodedTable,
    tcfg: &TrainConfig,
) -> Result<(TrainReport, AdamState)> {
    let train_rows = table.rows_in_split(Split::Train);
    if train_rows.is_empty() {
        return Err(Error::validation("train split is empty"));
    }
    if tcfg.batch_size == 0 {
        return Err(Error::validation("batch_size must be positive"));
    }
    let has_val = !table.rows_in_split(Split::Val).is_empty();
    let mut rng = ChaCha12Rng::seed_from_u64(tcfg.seed);
    let mut adam = AdamState::new(
        AdamConfig { learning_rate: tcfg.learning_rate, ..AdamConfig::default() },
        &model.params,
    );
    let mut report = TrainReport::default();

    let mut order = train_rows;
    for epoch in 0..tcfg.epochs {
        let started = Instant::now();
        if tcfg.shuffle {
            order.shuffle(&mut rng);
        }
        let (mut sum_total, mut sum_recon, mut sum_mmd) = (0.0, 0.0, 0.0);
        for (bi, chunk) in order.chunks(tcfg.batch_size).enumerate() {
            let batch = model.gather_batch(table, chunk)?;
            let prior = model.sample_prior(&mut rng, chunk.len());
            let parts = model.loss_and_grad(&batch, &prior)?;
            if !parts.total.is_finite() || !model.params.grads_finite() {
                return Err(Error::Divergence { epoch, batch: bi, loss: parts.total });
            }
            let w = chunk.len() as f64;
            sum_total += parts.total * w;
            sum_recon += parts.recon * w;
            sum_mmd += parts.mmd * w;
            adam.step(&mut model.params);
        }
        let n = order.len() as f64;
        report.epoch_total.push(sum_total / n);
        report.epoch_recon.push(sum_recon / n);
        report.epoch_mmd.push(sum_mmd / n);
        if has_val {
            report.epoch_val_recon.push(validation_nll(model, table)?);
        }
        report.epoch_seconds.push(started.elapsed().as_secs_f64());
    }
    Ok((report, adam))
}

/// Mean anomaly score (reconstruction NLL, no MMD) over the validation
/// split.
pub fn validation_nll(model: &CwaeModel, table: &EncodedTable) -> Result<f64> {
    let val_rows = table.rows_in_split(Split::Val);
    if val_rows.is_empty() {
        return Err(Error::validation("validation split is empty"));
    }
    let scores = model.score_rows(table, &val_rows)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamSnapshotMeta {
    pub config: AdamConfig,
    pub step_count: u64,
}

/// Everything needed to resume or score: config, the schema fingerprint
/// the parameters were trained against, parameter tensors, and optionally
/// the optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub schema_fingerprint: [u8; 32],
    pub train_seed: u64,
    pub epochs_completed: u64,
    pub tensors: Vec<TensorRecord>,
    pub adam_meta: Option<AdamSnapshotMeta>,
    pub adam_m: Vec<TensorRecord>,
    pub adam_v: Vec<TensorRecord>,
}

fn tensor_records(named: impl Iterator<Item = (String, Tensor)>) -> Vec<TensorRecord> {
    named
        .map(|(name, t)| TensorRecord { name, shape: t.shape().to_vec(), data: t.data().to_vec() })
        .collect()
}

impl Checkpoint {
    pub fn capture(
        model: &CwaeModel,
        adam: Option<&AdamState>,
        train_seed: u64,
        epochs_completed: u64,
    ) -> Checkpoint {
        let tensors = tensor_records(
            model.params.iter().map(|p| (p.name.clone(), p.value.clone())),
        );
        let names: Vec<String> = model.params.iter().map(|p| p.name.clone()).collect();
        let (adam_meta, adam_m, adam_v) = match adam {
            Some(a) => (
                Some(AdamSnapshotMeta { config: a.config, step_count: a.step_count }),
                tensor_records(names.iter().cloned().zip(a.m.iter().cloned())),
                tensor_records(names.iter().cloned().zip(a.v.iter().cloned())),
            ),
            None => (None, Vec::new(), Vec::new()),
        };
        Checkpoint {
            config: model.config().clone(),
            schema_fingerprint: model.schema_fingerprint(),
            train_seed,
            epochs_completed,
            tensors,
            adam_meta,
            adam_m,
            adam_v,
        }
    }

    /// Rebuilds the model (and optimizer state, when present) against the
    /// given schema. The schema must hash to the stored fingerprint.
    pub fn restore(&self, schema: &DatasetSchema) -> Result<(CwaeModel, Option<AdamState>)> {
        if schema.fingerprint() != self.schema_fingerprint {
            return Err(Error::SchemaFingerprintMismatch);
        }
        let mut model = CwaeModel::new(self.config.clone(), schema)?;
        restore_tensors(&mut model.params, &self.tensors, "parameter")?;
        let adam = match &self.adam_meta {
            Some(meta) => {
                let mut adam = AdamState::new(meta.config, &model.params);
                adam.step_count = meta.step_count;
                restore_moments(&mut adam.m, &model.params, &self.adam_m, "adam m")?;
                restore_moments(&mut adam.v, &model.params, &self.adam_v, "adam v")?;
                Some(adam)
            }
            None => None,
        };
        Ok((model, adam))
    }
}

fn restore_tensors(
    params: &mut crate::diff::ParamSet,
    records: &[TensorRecord],
    what: &str,
) -> Result<()> {
    if records.len() != params.len() {
        return Err(Error::validation(format!(
            "{what} count {} does not match model ({})",
            records.len(),
            params.len()
        )));
    }
    for (i, rec) in records.iter().enumerate() {
        let p = params.get_mut(i);
        if p.name != rec.name || p.value.shape() != rec.shape.as_slice() {
            return Err(Error::validation(format!(
                "{what} {i} mismatch: stored {:?} {:?}, model expects {:?} {:?}",
                rec.name,
                rec.shape,
                p.name,
                p.value.shape()
            )));
        }
        p.value = Tensor::from_vec(&rec.shape, rec.data.clone());
    }
    Ok(())
}

fn restore_moments(
    moments: &mut [Tensor],
    params: &crate::diff::ParamSet,
    records: &[TensorRecord],
    what: &str,
) -> Result<()> {
    if records.len() != moments.len() {
        return Err(Error::validation(format!("{what} count mismatch")));
    }
    for (i, rec) in records.iter().enumerate() {
        if params.get(i).name != rec.name || moments[i].shape() != rec.shape.as_slice() {
            return Err(Error::validation(format!("{what} {i} shape/name mismatch")));
        }
        moments[i] = Tensor::from_vec(&rec.shape, rec.data.clone());
    }
    Ok(())
}

fn write_tensor_section(buf: &mut Vec<u8>, records: &[TensorRecord]) {
    buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
    for rec in records {
        let name = rec.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(rec.shape.len() as u64).to_le_bytes());
        for &d in &rec.shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &rec.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

/// Layout, little-endian: magic | version u32 | config JSON (u64 length +
/// bytes) | fingerprint (32 bytes) | train seed u64 | epochs u64 |
/// parameter tensor section | adam flag u8 [| adam meta JSON | m section |
/// v section]. Tensor sections: count u64, then per tensor name (u64 len +
/// bytes), rank u64, dims u64 each, raw f64 data.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let config_json = serde_json::to_vec(&ckpt.config).expect("config serializes");
    buf.extend_from_slice(&(config_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&config_json);
    buf.extend_from_slice(&ckpt.schema_fingerprint);
    buf.extend_from_slice(&ckpt.train_seed.to_le_bytes());
    buf.extend_from_slice(&ckpt.epochs_completed.to_le_bytes());
    write_tensor_section(&mut buf, &ckpt.tensors);
    match &ckpt.adam_meta {
        Some(meta) => {
            buf.push(1);
            let meta_json = serde_json::to_vec(meta).expect("adam meta serializes");
            buf.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
            buf.extend_from_slice(&meta_json);
            write_tensor_section(&mut buf, &ckpt.adam_m);
            write_tensor_section(&mut buf, &ckpt.adam_v);
        }
        None => buf.push(0),
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: impl Into<String>) -> Error {
        Error::CorruptFile { path: self.path.display().to_string(), reason: reason.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(self.corrupt(format!("truncated while reading {what}")));
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

    fn tensor_section(&mut self, what: &str) -> Result<Vec<TensorRecord>> {
        let count = self.u64(what)? as usize;
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = self.u64(what)? as usize;
            let name = String::from_utf8(self.take(name_len, what)?.to_vec())
                .map_err(|_| self.corrupt(format!("{what}: tensor name is not UTF-8")))?;
            let rank = self.u64(what)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u64(what)? as usize);
            }
            let len: usize = shape.iter().product();
            let raw = self.take(len * 8, what)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            records.push(TensorRecord { name, shape, data });
        }
        Ok(records)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut r = Reader { data: &data, pos: 0, path };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(r.corrupt("bad magic"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.display().to_string(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let config_len = r.u64("config length")? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len, "config")?)
        .map_err(|e| r.corrupt(format!("config JSON: {e}")))?;
    let schema_fingerprint: [u8; 32] = r.take(32, "fingerprint")?.try_into().unwrap();
    let train_seed = r.u64("train seed")?;
    let epochs_completed = r.u64("epochs")?;
    let tensors = r.tensor_section("parameters")?;
    let adam_flag = r.take(1, "adam flag")?[0];
    let (adam_meta, adam_m, adam_v) = match adam_flag {
        0 => (None, Vec::new(), Vec::new()),
        1 => {
            let meta_len = r.u64("adam meta length")? as usize;
            let meta: AdamSnapshotMeta = serde_json::from_slice(r.take(meta_len, "adam meta")?)
                .map_err(|e| r.corrupt(format!("adam meta JSON: {e}")))?;
            let m = r.tensor_section("adam m")?;
            let v = r.tensor_section("adam v")?;
            (Some(meta), m, v)
        }
        other => return Err(r.corrupt(format!("invalid adam flag {other}"))),
    };
    if r.pos != data.len() {
        return Err(r.corrupt("trailing bytes"));
    }
    Ok(Checkpoint {
        config,
        schema_fingerprint,
        train_seed,
        epochs_completed,
        tensors,
        adam_meta,
        adam_m,
        adam_v,
    })
}
