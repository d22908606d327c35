//! The conditional autoencoder: per-column embeddings, an encoder over the
//! concatenated context+content embeddings, re-concatenation of the context
//! embeddings onto the latent code, and one softmax head per content column.
//! With no context columns the same structure is the plain baseline model.

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diff::{gradient_check, ops, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::tabular::{DatasetSchema, EncodedTable};

fn default_embed_dim() -> usize {
    16
}
fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_latent_dim() -> usize {
    32
}
fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Empty list = baseline model with every column treated as content.
    pub context_columns: Vec<String>,
    pub content_columns: Vec<String>,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden")]
    pub encoder_hidden: Vec<usize>,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_hidden")]
    pub decoder_hidden: Vec<usize>,
    #[serde(default = "default_lambda")]
    pub lambda_mmd: f64,
    /// Defaults to sqrt(mmd_dim / 2) when unset, the expected scale of
    /// distances between standard-normal points.
    #[serde(default)]
    pub mmd_sigma: Option<f64>,
    /// Regularize the concatenated latent instead of the encoder output.
    /// Off by default: pushing context embeddings toward the prior fights
    /// their representational role.
    #[serde(default)]
    pub mmd_on_final_latent: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            context_columns: Vec::new(),
            content_columns: Vec::new(),
            embed_dim: default_embed_dim(),
            encoder_hidden: default_hidden(),
            latent_dim: default_latent_dim(),
            decoder_hidden: default_hidden(),
            lambda_mmd: default_lambda(),
            mmd_sigma: None,
            mmd_on_final_latent: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Config for one dataset: the named column becomes the context, every
    /// other feature column becomes content. `None` builds the baseline.
    pub fn for_dataset(schema: &DatasetSchema, context: Option<&str>) -> Result<ModelConfig> {
        if let Some(name) = context {
            schema.column_index(name)?;
        }
        let context_columns: Vec<String> = context.map(|c| vec![c.to_string()]).unwrap_or_default();
        let content_columns = schema
            .columns
            .iter()
            .map(|c| c.name.clone())
            .filter(|n| Some(n.as_str()) != context)
            .collect();
        Ok(ModelConfig { context_columns, content_columns, ..ModelConfig::default() })
    }

    pub fn validate(&self, schema: &DatasetSchema) -> Result<()> {
        if self.content_columns.is_empty() {
            return Err(Error::validation("no content columns"));
        }
        if self.embed_dim == 0 || self.latent_dim == 0 {
            return Err(Error::validation("embed_dim and latent_dim must be positive"));
        }
        if self.lambda_mmd < 0.0 || !self.lambda_mmd.is_finite() {
            return Err(Error::validation("lambda_mmd must be finite and non-negative"));
        }
        if let Some(s) = self.mmd_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::validation("mmd_sigma must be positive"));
            }
        }
        for name in self.context_columns.iter().chain(&self.content_columns) {
            schema.column_index(name)?;
        }
        for c in &self.context_columns {
            if self.content_columns.contains(c) {
                return Err(Error::validation(format!("column {c:?} is both context and content")));
            }
        }
        let mut mentioned: Vec<&String> =
            self.context_columns.iter().chain(&self.content_columns).collect();
        mentioned.sort_unstable();
        mentioned.dedup();
        if mentioned.len() != schema.columns.len() {
            return Err(Error::validation(
                "context and content columns must cover every feature column exactly once",
            ));
        }
        Ok(())
    }
}

/// Column-index batches gathered against the model's schema.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ctx: Vec<Vec<u32>>,
    pub content: Vec<Vec<u32>>,
    pub n_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub mmd: f64,
}

/// Everything fixed at construction: dimensions, parameter indices, and
/// the schema positions each batch is gathered from.
#[derive(Debug, Clone)]
struct Meta {
    config: ModelConfig,
    schema_fingerprint: [u8; 32],
    ctx_positions: Vec<usize>,
    content_positions: Vec<usize>,
    ctx_embed: Vec<usize>,
    content_embed: Vec<usize>,
    enc_w: Vec<usize>,
    enc_b: Vec<usize>,
    dec_w: Vec<usize>,
    dec_b: Vec<usize>,
    head_w: Vec<usize>,
    head_b: Vec<usize>,
}

impl Meta {
    fn ctx_width(&self) -> usize {
        self.ctx_positions.len() * self.config.embed_dim
    }

    fn final_latent_dim(&self) -> usize {
        self.config.latent_dim + self.ctx_width()
    }

    fn mmd_dim(&self) -> usize {
        if self.config.mmd_on_final_latent {
            self.final_latent_dim()
        } else {
            self.config.latent_dim
        }
    }

    fn sigma(&self) -> f64 {
        self.config.mmd_sigma.unwrap_or_else(|| (self.mmd_dim() as f64 / 2.0).sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct CwaeModel {
    meta: Meta,
    pub params: ParamSet,
}

fn init_uniform(rng: &mut ChaCha12Rng, shape: &[usize], bound: f64) -> Tensor {
    let dist = Uniform::new(-bound, bound);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| dist.sample(rng)).collect())
}

impl CwaeModel {
    /// Builds and initializes the model. Parameters are registered and
    /// drawn in one fixed order (context embeddings, content embeddings,
    /// encoder, decoder trunk, heads) so a seed fully determines them.
    pub fn new(config: ModelConfig, schema: &DatasetSchema) -> Result<CwaeModel> {
        config.validate(schema)?;
        let e = config.embed_dim;
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();

        let mut ctx_positions = Vec::new();
        let mut ctx_embed = Vec::new();
        for name in &config.context_columns {
            let pos = schema.column_index(name)?;
            let card = schema.columns[pos].cardinality;
            ctx_positions.push(pos);
            ctx_embed.push(params.register(
                format!("ctx_embed.{name}"),
                init_uniform(&mut rng, &[card + 1, e], 0.05),
            ));
        }

        let mut content_positions = Vec::new();
        let mut content_widths = Vec::new();
        let mut content_embed = Vec::new();
        for name in &config.content_columns {
            let pos = schema.column_index(name)?;
            let card = schema.columns[pos].cardinality;
            content_positions.push(pos);
            content_widths.push(card + 1);
            content_embed.push(params.register(
                format!("content_embed.{name}"),
                init_uniform(&mut rng, &[card + 1, e], 0.05),
            ));
        }

        let n_cols = ctx_positions.len() + content_positions.len();
        let affine = |params: &mut ParamSet,
                          rng: &mut ChaCha12Rng,
                          prefix: String,
                          fan_in: usize,
                          fan_out: usize| {
            let w = params.register(
                format!("{prefix}.w"),
                init_uniform(rng, &[fan_in, fan_out], 1.0 / (fan_in as f64).sqrt()),
            );
            let b = params.register(format!("{prefix}.b"), Tensor::zeros(&[fan_out]));
            (w, b)
        };

        let mut enc_w = Vec::new();
        let mut enc_b = Vec::new();
        let enc_dims: Vec<usize> = std::iter::once(n_cols * e)
            .chain(config.encoder_hidden.iter().copied())
            .chain(std::iter::once(config.latent_dim))
            .collect();
        for (l, win) in enc_dims.windows(2).enumerate() {
            let (w, b) = affine(&mut params, &mut rng, format!("enc.{l}"), win[0], win[1]);
            enc_w.push(w);
            enc_b.push(b);
        }

        let final_latent_dim = config.latent_dim + ctx_positions.len() * e;
        let mut dec_w = Vec::new();
        let mut dec_b = Vec::new();
        let dec_dims: Vec<usize> = std::iter::once(final_latent_dim)
            .chain(config.decoder_hidden.iter().copied())
            .collect();
        for (l, win) in dec_dims.windows(2).enumerate() {
            let (w, b) = affine(&mut params, &mut rng, format!("dec.{l}"), win[0], win[1]);
            dec_w.push(w);
            dec_b.push(b);
        }
        let trunk_out = *dec_dims.last().expect("non-empty dims");

        let mut head_w = Vec::new();
        let mut head_b = Vec::new();
        for (name, &width) in config.content_columns.iter().zip(&content_widths) {
            let (w, b) = affine(&mut params, &mut rng, format!("head.{name}"), trunk_out, width);
            head_w.push(w);
            head_b.push(b);
        }

        let meta = Meta {
            schema_fingerprint: schema.fingerprint(),
            config,
            ctx_positions,
            content_positions,
            ctx_embed,
            content_embed,
            enc_w,
            enc_b,
            dec_w,
            dec_b,
            head_w,
            head_b,
        };
        Ok(CwaeModel { meta, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.meta.config
    }

    pub fn schema_fingerprint(&self) -> [u8; 32] {
        self.meta.schema_fingerprint
    }

    /// Dimensionality the MMD term (and its prior samples) lives in.
    pub fn mmd_dim(&self) -> usize {
        self.meta.mmd_dim()
    }

    pub fn mmd_sigma(&self) -> f64 {
        self.meta.sigma()
    }

    /// Standard-normal prior sample of `n` points in the MMD space.
    pub fn sample_prior<R: Rng>(&self, rng: &mut R, n: usize) -> Tensor {
        let d = self.mmd_dim();
        let data = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
        Tensor::from_vec(&[n, d], data)
    }

    /// Gathers the model's columns for the given rows. The table must carry
    /// the exact schema the model was built against.
    pub fn gather_batch(&self, table: &EncodedTable, row_ids: &[usize]) -> Result<Batch> {
        if table.schema.fingerprint() != self.meta.schema_fingerprint {
            return Err(Error::SchemaFingerprintMismatch);
        }
        Ok(Batch {
            ctx: self
                .meta
                .ctx_positions
                .iter()
                .map(|&c| table.gather_column(c, row_ids))
                .collect(),
            content: self
                .meta
                .content_positions
                .iter()
                .map(|&c| table.gather_column(c, row_ids))
                .collect(),
            n_rows: row_ids.len(),
        })
    }

    /// Loss over one batch with gradients accumulated into `params` (grads
    /// are zeroed first). `prior` must be [B x mmd_dim].
    pub fn loss_and_grad(&mut self, batch: &Batch, prior: &Tensor) -> Result<LossParts> {
        let meta = &self.meta;
        let params = &mut self.params;
        params.zero_grads();
        Ok(loss_impl(meta, params, batch, prior))
    }

    /// Forward-only loss parts (no gradient side effects).
    pub fn loss(&self, batch: &Batch, prior: &Tensor) -> LossParts {
        let fwd = forward_impl(&self.meta, &self.params, batch);
        loss_from_forward(&self.meta, &fwd, batch, prior).0
    }

    /// Per-row anomaly score: summed per-column negative log-likelihood of
    /// the row's own content values. No MMD term; batch composition does
    /// not affect any row's score.
    pub fn anomaly_score(&self, batch: &Batch) -> Vec<f64> {
        let fwd = forward_impl(&self.meta, &self.params, batch);
        let mut scores = vec![0.0; batch.n_rows];
        for (ci, logits) in fwd.logits.iter().enumerate() {
            let nll = ops::softmax_nll_rows(logits, &batch.content[ci]);
            for (s, v) in scores.iter_mut().zip(nll) {
                *s += v;
            }
        }
        scores
    }

    /// Convenience: gather + score table rows.
    pub fn score_rows(&self, table: &EncodedTable, row_ids: &[usize]) -> Result<Vec<f64>> {
        if row_ids.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.anomaly_score(&self.gather_batch(table, row_ids)?))
    }

    /// Mean cross-entropy per content column at the current parameters.
    pub fn per_column_ce(&self, batch: &Batch) -> Vec<f64> {
        let fwd = forward_impl(&self.meta, &self.params, batch);
        fwd.logits
            .iter()
            .enumerate()
            .map(|(ci, logits)| ops::softmax_cross_entropy(logits, &batch.content[ci]).0)
            .collect()
    }

    /// Latent codes for a batch: (encoder output, concatenated latent).
    pub fn latent_codes(&self, batch: &Batch) -> (Tensor, Tensor) {
        let fwd = forward_impl(&self.meta, &self.params, batch);
        (fwd.encoder_out, fwd.final_latent)
    }

    /// Per-column logits for a batch, one [B x (cardinality+1)] tensor per
    /// content column.
    pub fn logits(&self, batch: &Batch) -> Vec<Tensor> {
        forward_impl(&self.meta, &self.params, batch).logits
    }

    /// Max relative error between analytic and central-difference gradients
    /// of the full loss, over every parameter scalar.
    ///
    /// Central differences are only valid away from ReLU kinks: callers
    /// should confirm `min_abs_preactivation` exceeds the perturbation by a
    /// wide margin, otherwise the numeric gradient itself is wrong.
    pub fn gradient_check_full_loss(&mut self, batch: &Batch, prior: &Tensor, h: f64) -> f64 {
        let meta = &self.meta;
        gradient_check(&mut self.params, |ps| loss_impl(meta, ps, batch, prior).total, h)
    }

    /// Smallest |pre-activation| across every ReLU in the network for this
    /// batch: the distance of the nearest unit to its kink. The encoder's
    /// final (linear) layer is excluded.
    pub fn min_abs_preactivation(&self, batch: &Batch) -> f64 {
        let fwd = forward_impl(&self.meta, &self.params, batch);
        let mut m = f64::INFINITY;
        let n_enc = self.meta.enc_w.len();
        for (l, pre) in fwd.enc_pre.iter().enumerate() {
            if l + 1 < n_enc {
                for &v in pre.data() {
                    m = m.min(v.abs());
                }
            }
        }
        for pre in &fwd.dec_pre {
            for &v in pre.data() {
                m = m.min(v.abs());
            }
        }
        m
    }
}

struct Forward {
    enc_inputs: Vec<Tensor>,
    enc_pre: Vec<Tensor>,
    encoder_out: Tensor,
    final_latent: Tensor,
    dec_inputs: Vec<Tensor>,
    dec_pre: Vec<Tensor>,
    trunk_out: Tensor,
    logits: Vec<Tensor>,
}

fn forward_impl(meta: &Meta, params: &ParamSet, batch: &Batch) -> Forward {
    assert_eq!(batch.ctx.len(), meta.ctx_embed.len());
    assert_eq!(batch.content.len(), meta.content_embed.len());

    let ctx_embeds: Vec<Tensor> = meta
        .ctx_embed
        .iter()
        .zip(&batch.ctx)
        .map(|(&p, idx)| ops::embedding_forward(params.value(p), idx))
        .collect();
    let content_embeds: Vec<Tensor> = meta
        .content_embed
        .iter()
        .zip(&batch.content)
        .map(|(&p, idx)| ops::embedding_forward(params.value(p), idx))
        .collect();

    let all_embeds: Vec<&Tensor> = ctx_embeds.iter().chain(content_embeds.iter()).collect();
    let enc_input = Tensor::concat_cols(&all_embeds);

    // enc_inputs[l] feeds layer l; enc_pre[l] is its affine output.
    let n_enc = meta.enc_w.len();
    let mut enc_inputs = vec![enc_input];
    let mut enc_pre = Vec::with_capacity(n_enc);
    for l in 0..n_enc {
        let pre = ops::affine_forward(
            &enc_inputs[l],
            params.value(meta.enc_w[l]),
            params.value(meta.enc_b[l]),
        );
        if l + 1 < n_enc {
            enc_inputs.push(ops::relu_forward(&pre));
        }
        enc_pre.push(pre);
    }
    let encoder_out = enc_pre.last().expect("encoder has at least one layer").clone();

    let final_latent = if ctx_embeds.is_empty() {
        encoder_out.clone()
    } else {
        let mut parts: Vec<&Tensor> = vec![&encoder_out];
        parts.extend(ctx_embeds.iter());
        Tensor::concat_cols(&parts)
    };

    // Decoder trunk: every layer is affine + ReLU; heads read the output.
    let mut dec_inputs = vec![final_latent.clone()];
    let mut dec_pre = Vec::with_capacity(meta.dec_w.len());
    for l in 0..meta.dec_w.len() {
        let pre = ops::affine_forward(
            &dec_inputs[l],
            params.value(meta.dec_w[l]),
            params.value(meta.dec_b[l]),
        );
        dec_inputs.push(ops::relu_forward(&pre));
        dec_pre.push(pre);
    }
    let trunk_out = dec_inputs.last().expect("non-empty").clone();

    let logits: Vec<Tensor> = meta
        .head_w
        .iter()
        .zip(&meta.head_b)
        .map(|(&w, &b)| ops::affine_forward(&trunk_out, params.value(w), params.value(b)))
        .collect();

    Forward { enc_inputs, enc_pre, encoder_out, final_latent, dec_inputs, dec_pre, trunk_out, logits }
}

fn loss_from_forward(
    meta: &Meta,
    fwd: &Forward,
    batch: &Batch,
    prior: &Tensor,
) -> (LossParts, Vec<Tensor>, Tensor) {
    let mut recon = 0.0;
    let mut dlogits = Vec::with_capacity(fwd.logits.len());
    for (ci, logits) in fwd.logits.iter().enumerate() {
        let (ce, grad) = ops::softmax_cross_entropy(logits, &batch.content[ci]);
        recon += ce;
        dlogits.push(grad);
    }
    let z = if meta.config.mmd_on_final_latent { &fwd.final_latent } else { &fwd.encoder_out };
    let (mmd, dz) = ops::rbf_mmd(z, prior, meta.sigma());
    let total = recon + meta.config.lambda_mmd * mmd;
    (LossParts { total, recon, mmd }, dlogits, dz)
}

/// Full loss with backprop into `params` (accumulating). The chain mirrors
/// `forward_impl` exactly, layer by layer in reverse.
fn loss_impl(meta: &Meta, params: &mut ParamSet, batch: &Batch, prior: &Tensor) -> LossParts {
    let fwd = forward_impl(meta, params, batch);
    let (parts, dlogits, dz) = loss_from_forward(meta, &fwd, batch, prior);
    let lambda = meta.config.lambda_mmd;
    let e = meta.config.embed_dim;

    // Heads: d(trunk_out) sums over columns; head weights get their grads.
    let mut d_trunk = Tensor::zeros(fwd.trunk_out.shape());
    for (ci, dlog) in dlogits.iter().enumerate() {
        let (dx, dw, db) =
            ops::affine_backward(&fwd.trunk_out, params.value(meta.head_w[ci]), dlog);
        d_trunk.add_assign(&dx);
        params.get_mut(meta.head_w[ci]).grad.add_assign(&dw);
        params.get_mut(meta.head_b[ci]).grad.add_assign(&db);
    }

    // Decoder trunk in reverse: trunk layers are affine + ReLU.
    let mut d_out = d_trunk;
    for l in (0..meta.dec_w.len()).rev() {
        let d_pre = ops::relu_backward(&fwd.dec_pre[l], &d_out);
        let (dx, dw, db) =
            ops::affine_backward(&fwd.dec_inputs[l], params.value(meta.dec_w[l]), &d_pre);
        params.get_mut(meta.dec_w[l]).grad.add_assign(&dw);
        params.get_mut(meta.dec_b[l]).grad.add_assign(&db);
        d_out = dx;
    }
    let mut d_final_latent = d_out;
    if meta.config.mmd_on_final_latent && lambda != 0.0 {
        let mut scaled = dz.clone();
        scaled.scale(lambda);
        d_final_latent.add_assign(&scaled);
    }

    // Split the concatenated latent gradient back into encoder output and
    // per-context-column embedding gradients.
    let n_ctx = meta.ctx_embed.len();
    let mut widths = vec![meta.config.latent_dim];
    widths.extend(std::iter::repeat(e).take(n_ctx));
    let mut latent_parts = d_final_latent.split_cols(&widths);
    let d_ctx_from_latent: Vec<Tensor> = latent_parts.split_off(1);
    let mut d_encoder_out = latent_parts.pop().expect("first split part");
    if !meta.config.mmd_on_final_latent && lambda != 0.0 {
        let mut scaled = dz;
        scaled.scale(lambda);
        d_encoder_out.add_assign(&scaled);
    }
    for (ci, d) in d_ctx_from_latent.iter().enumerate() {
        ops::embedding_backward(&mut params.get_mut(meta.ctx_embed[ci]).grad, &batch.ctx[ci], d);
    }

    // Encoder in reverse: the last layer is linear, earlier ones ReLU.
    let n_enc = meta.enc_w.len();
    let mut d_pre = d_encoder_out;
    for l in (0..n_enc).rev() {
        let (dx, dw, db) =
            ops::affine_backward(&fwd.enc_inputs[l], params.value(meta.enc_w[l]), &d_pre);
        params.get_mut(meta.enc_w[l]).grad.add_assign(&dw);
        params.get_mut(meta.enc_b[l]).grad.add_assign(&db);
        if l > 0 {
            d_pre = ops::relu_backward(&fwd.enc_pre[l - 1], &dx);
        } else {
            d_pre = dx;
        }
    }
    let d_enc_input = d_pre;

    // Split encoder-input gradient into per-column embedding blocks, in the
    // concatenation order: context columns first, then content columns.
    let col_widths = vec![e; n_ctx + meta.content_embed.len()];
    let blocks = d_enc_input.split_cols(&col_widths);
    for (ci, block) in blocks.iter().take(n_ctx).enumerate() {
        ops::embedding_backward(&mut params.get_mut(meta.ctx_embed[ci]).grad, &batch.ctx[ci], block);
    }
    for (ci, block) in blocks.iter().skip(n_ctx).enumerate() {
        ops::embedding_backward(
            &mut params.get_mut(meta.content_embed[ci]).grad,
            &batch.content[ci],
            block,
        );
    }

    parts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{AdamConfig, AdamState};
    use crate::tabular::{ColumnKind, ColumnSpec, Split};

    /// Schema with columns g (card 3), a (card 4), b (card 5), c (card 3).
    fn test_schema() -> DatasetSchema {
        let col = |name: &str, card: usize| ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical,
            cardinality: card,
            bin_edges: None,
            vocab: (0..card).map(|i| format!("v{i}")).collect(),
        };
        DatasetSchema {
            columns: vec![col("g", 3), col("a", 4), col("b", 5), col("c", 3)],
            label_column: "label".into(),
            candidate_context_columns: vec!["g".into(), "a".into(), "b".into(), "c".into()],
        }
    }

    fn test_config(seed: u64) -> ModelConfig {
        ModelConfig {
            context_columns: vec!["g".into()],
            content_columns: vec!["a".into(), "b".into(), "c".into()],
            embed_dim: 3,
            encoder_hidden: vec![6],
            latent_dim: 4,
            decoder_hidden: vec![6],
            lambda_mmd: 0.7,
            mmd_sigma: Some(1.1),
            mmd_on_final_latent: false,
            seed,
        }
    }

    fn test_batch(rng: &mut ChaCha12Rng, n: usize) -> Batch {
        Batch {
            ctx: vec![(0..n).map(|_| rng.gen_range(0..4)).collect()],
            content: vec![
                (0..n).map(|_| rng.gen_range(0..5)).collect(),
                (0..n).map(|_| rng.gen_range(0..6)).collect(),
                (0..n).map(|_| rng.gen_range(0..4)).collect(),
            ],
            n_rows: n,
        }
    }

    #[test]
    fn same_seed_same_parameters() {
        let schema = test_schema();
        let m1 = CwaeModel::new(test_config(9), &schema).unwrap();
        let m2 = CwaeModel::new(test_config(9), &schema).unwrap();
        for (a, b) in m1.params.iter().zip(m2.params.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value.data(), b.value.data());
        }
        let m3 = CwaeModel::new(test_config(10), &schema).unwrap();
        assert_ne!(m1.params.value(0).data(), m3.params.value(0).data());
    }

    #[test]
    fn embedding_tables_have_unseen_row() {
        let schema = test_schema();
        let model = CwaeModel::new(test_config(0), &schema).unwrap();
        let ctx = model.params.iter().find(|p| p.name == "ctx_embed.g").unwrap();
        assert_eq!(ctx.value.shape(), &[4, 3], "cardinality 3 plus unseen slot");
        let a = model.params.iter().find(|p| p.name == "content_embed.a").unwrap();
        assert_eq!(a.value.shape(), &[5, 3]);
    }

    #[test]
    fn baseline_has_no_context_tables_and_identity_latent() {
        let schema = test_schema();
        let mut cfg = test_config(1);
        cfg.context_columns.clear();
        cfg.content_columns = vec!["g".into(), "a".into(), "b".into(), "c".into()];
        let model = CwaeModel::new(cfg, &schema).unwrap();
        assert!(model.params.iter().all(|p| !p.name.starts_with("ctx_embed")));
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let batch = Batch {
            ctx: vec![],
            content: vec![
                (0..8).map(|_| rng.gen_range(0..4)).collect(),
                (0..8).map(|_| rng.gen_range(0..5)).collect(),
                (0..8).map(|_| rng.gen_range(0..6)).collect(),
                (0..8).map(|_| rng.gen_range(0..4)).collect(),
            ],
            n_rows: 8,
        };
        let (enc, fin) = model.latent_codes(&batch);
        assert_eq!(enc, fin, "no context: concatenated latent equals encoder output");
    }

    #[test]
    fn duplicate_rows_get_identical_outputs() {
        let schema = test_schema();
        let model = CwaeModel::new(test_config(3), &schema).unwrap();
        let batch = Batch {
            ctx: vec![vec![1, 2, 1]],
            content: vec![vec![3, 0, 3], vec![2, 5, 2], vec![1, 1, 1]],
            n_rows: 3,
        };
        for logits in model.logits(&batch) {
            assert_eq!(logits.row(0), logits.row(2));
        }
        let scores = model.anomaly_score(&batch);
        assert_eq!(scores[0], scores[2]);
    }

    #[test]
    fn permuting_rows_permutes_outputs() {
        let schema = test_schema();
        let model = CwaeModel::new(test_config(4), &schema).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let batch = test_batch(&mut rng, 7);
        let perm = [3usize, 0, 6, 1, 5, 2, 4];
        let permuted = Batch {
            ctx: vec![perm.iter().map(|&i| batch.ctx[0][i]).collect()],
            content: batch
                .content
                .iter()
                .map(|col| perm.iter().map(|&i| col[i]).collect())
                .collect(),
            n_rows: 7,
        };
        let s = model.anomaly_score(&batch);
        let sp = model.anomaly_score(&permuted);
        for (out_i, &src) in perm.iter().enumerate() {
            assert_eq!(sp[out_i], s[src]);
        }
    }

    #[test]
    fn lambda_zero_total_equals_recon() {
        let schema = test_schema();
        let mut cfg = test_config(6);
        cfg.lambda_mmd = 0.0;
        let model = CwaeModel::new(cfg, &schema).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let batch = test_batch(&mut rng, 10);
        let prior = model.sample_prior(&mut rng, 10);
        let parts = model.loss(&batch, &prior);
        assert_eq!(parts.total, parts.recon);
    }

    #[test]
    fn total_never_below_recon() {
        let schema = test_schema();
        let model = CwaeModel::new(test_config(8), &schema).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..10 {
            let batch = test_batch(&mut rng, 6);
            let prior = model.sample_prior(&mut rng, 6);
            let parts = model.loss(&batch, &prior);
            assert!(parts.total >= parts.recon - 1e-12);
            assert!(parts.mmd >= -1e-12);
        }
    }

    #[test]
    fn init_logits_near_uniform() {
        let schema = test_schema();
        let model = CwaeModel::new(test_config(10), &schema).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let batch = test_batch(&mut rng, 64);
        let ces = model.per_column_ce(&batch);
        // Logit width per content column is cardinality + 1 (unseen bucket).
        let widths: Vec<usize> =
            model.meta.content_positions.iter().map(|&p| schema.columns[p].vocab.len() + 1).collect();
        for (ce, &width) in ces.iter().zip(&widths) {
            let uniform = (width as f64).ln();
            assert!(
                (ce - uniform).abs() / uniform < 0.05,
                "column CE {ce} vs ln({width}) = {uniform}"
            );
        }
    }

    #[test]
    fn mean_score_equals_recon_loss() {
        let schema = test_schema();
        let model = CwaeModel::new(test_config(12), &schema).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let batch = test_batch(&mut rng, 17);
        let prior = model.sample_prior(&mut rng, 17);
        let parts = model.loss(&batch, &prior);
        let scores = model.anomaly_score(&batch);
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        assert!((mean - parts.recon).abs() < 1e-10, "{mean} vs {}", parts.recon);
    }

    #[test]
    fn full_loss_gradient_check() {
        // Model seed 9 with this batch keeps every ReLU pre-activation at
        // least 4e-4 from its kink, so the h = 1e-5 probes never cross an
        // activation boundary and central differences stay valid.
        let schema = test_schema();
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let batch = test_batch(&mut rng, 20);

        for mmd_on_final_latent in [false, true] {
            let mut cfg = test_config(9);
            cfg.mmd_on_final_latent = mmd_on_final_latent;
            let mut model = CwaeModel::new(cfg, &schema).unwrap();
            let margin = model.min_abs_preactivation(&batch);
            assert!(
                margin > 2e-4,
                "evaluation point too close to a ReLU kink ({margin:.2e}); pick a new seed"
            );
            let prior = model.sample_prior(&mut rng, 20);
            let rel = model.gradient_check_full_loss(&batch, &prior, 1e-5);
            assert!(rel < 1e-4, "mmd_on_final_latent={mmd_on_final_latent}: rel-err {rel}");
        }
    }

    #[test]
    fn unseen_rows_score_above_median_after_training() {
        let schema = test_schema();
        let mut cfg = test_config(17);
        cfg.lambda_mmd = 0.1;
        let mut model = CwaeModel::new(cfg, &schema).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(18);
        // Learnable structure: content determined by context value.
        let make_batch = |rng: &mut ChaCha12Rng, n: usize| {
            let ctx: Vec<u32> = (0..n).map(|_| rng.gen_range(1..4)).collect();
            Batch {
                content: vec![
                    ctx.iter().map(|&g| g).collect(),
                    ctx.iter().map(|&g| g + 1).collect(),
                    ctx.iter().map(|&g| if g == 3 { 1 } else { g }).collect(),
                ],
                ctx: vec![ctx],
                n_rows: n,
            }
        };
        let mut adam = AdamState::new(AdamConfig { learning_rate: 5e-3, ..Default::default() }, &model.params);
        for _ in 0..120 {
            let batch = make_batch(&mut rng, 32);
            let prior = model.sample_prior(&mut rng, 32);
            model.loss_and_grad(&batch, &prior).unwrap();
            adam.step(&mut model.params);
        }
        let seen = make_batch(&mut rng, 63);
        let mut seen_scores = model.anomaly_score(&seen);
        seen_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = seen_scores[seen_scores.len() / 2];
        let unseen = Batch {
            ctx: vec![vec![0, 0]],
            content: vec![vec![0, 0], vec![0, 0], vec![0, 0]],
            n_rows: 2,
        };
        for s in model.anomaly_score(&unseen) {
            assert!(s >= median, "unseen-value row scored {s} below median {median}");
        }
    }

    #[test]
    fn gather_batch_rejects_other_schema() {
        let schema = test_schema();
        let model = CwaeModel::new(test_config(19), &schema).unwrap();
        let mut other = schema.clone();
        other.columns[1].vocab.push("extra".into());
        other.columns[1].cardinality += 1;
        let n = 4;
        let rows: Vec<u32> = (0..n * 4).map(|i| (i % 3) as u32).collect();
        let table = EncodedTable::from_parts(
            other,
            rows,
            vec![0; n],
            vec![Split::Train; n],
        )
        .unwrap();
        let err = model.gather_batch(&table, &[0, 1]).unwrap_err();
        assert!(matches!(err, Error::SchemaFingerprintMismatch));
    }

    #[test]
    fn config_validation_catches_overlap_and_gaps() {
        let schema = test_schema();
        let mut cfg = test_config(0);
        cfg.content_columns.push("g".into());
        assert!(cfg.validate(&schema).is_err(), "overlapping context/content");

        let mut cfg = test_config(0);
        cfg.content_columns.pop();
        assert!(cfg.validate(&schema).is_err(), "feature column left out");

        let mut cfg = test_config(0);
        cfg.context_columns = vec!["nope".into()];
        assert!(cfg.validate(&schema).is_err(), "unknown column");
    }
}
