//! Context selection: train one model per candidate context for a single
//! epoch and rank candidates by joint validation loss
//! -log P(Y|C) - log P(C). The no-context baseline competes on
//! -log P(Y) alone.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{CwaeModel, ModelConfig};
use crate::tabular::{context_distribution, ContextDistribution, EncodedTable, Split};
use crate::train::{train, validation_nll, TrainConfig};

/// Reserved candidate name for the unconditional baseline.
pub const NO_CONTEXT: &str = "NO_CONTEXT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub candidate: String,
    /// Mean validation NLL of the content columns given the context.
    pub conditional_nll: f64,
    /// Mean -log P(context value) over validation rows; 0 for NO_CONTEXT.
    pub context_nll: f64,
    /// conditional_nll + context_nll.
    pub joint_loss: f64,
    #[serde(skip_serializing, default)]
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub candidate: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Ascending joint loss; ties broken by name, NO_CONTEXT last.
    pub candidates: Vec<CandidateResult>,
    pub failures: Vec<CandidateFailure>,
    pub chosen: String,
    pub seed: u64,
}

/// Mean -log P̂(c) of the observed context values under the smoothed
/// training distribution.
pub fn context_term(dist: &ContextDistribution, values: &[u32]) -> f64 {
    assert!(!values.is_empty(), "context term needs at least one value");
    values.iter().map(|&v| dist.neg_log_prob(v)).sum::<f64>() / values.len() as f64
}

/// Joint validation loss for one candidate. `ctx` is None for the
/// unconditional baseline, in which case the conditional NLL is returned
/// unchanged.
pub fn joint_val_loss(
    conditional_nll: f64,
    ctx: Option<(&ContextDistribution, &[u32])>,
) -> f64 {
    match ctx {
        Some((dist, values)) => conditional_nll + context_term(dist, values),
        None => conditional_nll,
    }
}

/// Default probe-model template for the one-epoch candidate sweep. The
/// encoder is kept deliberately narrow (2 hidden units into a 1-D latent,
/// MMD weight 5) so content columns cannot tunnel through the latent and
/// reconstruct themselves within an epoch; any conditional gain must flow
/// through the candidate's context path, which is what the sweep ranks.
pub fn probe_model_config(table: &EncodedTable) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::for_dataset(&table.schema, None)?;
    cfg.embed_dim = 8;
    cfg.encoder_hidden = vec![2];
    cfg.latent_dim = 1;
    cfg.decoder_hidden = vec![64];
    cfg.lambda_mmd = 5.0;
    Ok(cfg)
}

/// Default optimizer settings for the candidate sweep; epochs are forced
/// to 1 inside `select_context` regardless.
pub fn probe_train_config() -> TrainConfig {
    TrainConfig { batch_size: 64, learning_rate: 1e-2, ..Default::default() }
}

fn candidate_config(
    template: &ModelConfig,
    table: &EncodedTable,
    context: Option<&str>,
    seed: u64,
) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::for_dataset(&table.schema, context)?;
    cfg.embed_dim = template.embed_dim;
    cfg.encoder_hidden = template.encoder_hidden.clone();
    cfg.latent_dim = template.latent_dim;
    cfg.decoder_hidden = template.decoder_hidden.clone();
    cfg.lambda_mmd = template.lambda_mmd;
    cfg.mmd_sigma = template.mmd_sigma;
    cfg.mmd_on_final_latent = template.mmd_on_final_latent;
    cfg.seed = seed;
    Ok(cfg)
}

fn evaluate_candidate(
    table: &EncodedTable,
    template: &ModelConfig,
    tcfg: &TrainConfig,
    base_seed: u64,
    name: &str,
    context: Option<&str>,
    val_rows: &[usize],
) -> Result<CandidateResult> {
    let init_seed = exec::derive_seed(base_seed, &format!("init/{name}"));
    let mcfg = candidate_config(template, table, context, init_seed)?;
    let mut model = CwaeModel::new(mcfg, &table.schema)?;
    let run_tcfg = TrainConfig {
        epochs: 1,
        seed: exec::derive_seed(base_seed, &format!("train/{name}")),
        ..tcfg.clone()
    };
    let started = Instant::now();
    train(&mut model, table, &run_tcfg)?;
    let train_seconds = started.elapsed().as_secs_f64();
    let conditional_nll = validation_nll(&model, table)?;
    let context_nll = match context {
        Some(col) => {
            let dist = context_distribution(table, col)?;
            let idx = table.schema.column_index(col)?;
            context_term(&dist, &table.gather_column(idx, val_rows))
        }
        None => 0.0,
    };
    let joint_loss = conditional_nll + context_nll;
    if !joint_loss.is_finite() {
        return Err(Error::validation(format!("candidate {name}: non-finite joint loss")));
    }
    Ok(CandidateResult { candidate: name.to_string(), conditional_nll, context_nll, joint_loss, train_seconds })
}

/// NO_CONTEXT sorts after every real column so a tie prefers an explicit
/// context.
fn order_key(name: &str) -> (bool, &str) {
    (name == NO_CONTEXT, name)
}

/// Trains one single-epoch model per candidate (plus the unconditional
/// baseline when `include_no_context`) and returns them ranked by joint
/// validation loss. Candidates run in parallel, each with a seed derived
/// from (`seed`, candidate name); diverged candidates are excluded from
/// the ranking and recorded as failures.
pub fn select_context(
    table: &EncodedTable,
    candidates: &[String],
    template: &ModelConfig,
    tcfg: &TrainConfig,
    include_no_context: bool,
    seed: u64,
) -> Result<SelectionReport> {
    if candidates.is_empty() && !include_no_context {
        return Err(Error::validation("no candidates to evaluate"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in candidates {
        table.schema.column_index(c)?;
        if c == NO_CONTEXT {
            return Err(Error::validation(format!("{NO_CONTEXT} is reserved")));
        }
        if !seen.insert(c.as_str()) {
            return Err(Error::validation(format!("duplicate candidate {c:?}")));
        }
    }
    let val_rows = table.rows_in_split(Split::Val);
    if val_rows.is_empty() {
        return Err(Error::validation("selection requires a validation split"));
    }

    let mut names: Vec<Option<&str>> = candidates.iter().map(|c| Some(c.as_str())).collect();
    if include_no_context {
        names.push(None);
    }
    let outcomes = exec::map_indexed_coarse(names.len(), |i| {
        let context = names[i];
        let name = context.unwrap_or(NO_CONTEXT);
        evaluate_candidate(table, template, tcfg, seed, name, context, &val_rows)
            .map_err(|e| (name.to_string(), e))
    });

    let mut ranked = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => ranked.push(r),
            Err((candidate, e)) => {
                failures.push(CandidateFailure { candidate, error: e.to_string() })
            }
        }
    }
    if ranked.is_empty() {
        return Err(Error::validation(format!(
            "all {} candidates failed; first error: {}",
            failures.len(),
            failures[0].error
        )));
    }
    ranked.sort_by(|a, b| {
        a.joint_loss
            .total_cmp(&b.joint_loss)
            .then_with(|| order_key(&a.candidate).cmp(&order_key(&b.candidate)))
    });
    let chosen = ranked[0].candidate.clone();
    Ok(SelectionReport { candidates: ranked, failures, chosen, seed })
}
