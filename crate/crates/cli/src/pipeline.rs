//! Command implementations. Every command is deterministic given
//! (inputs, config, seeds): report files carry no timestamps and all
//! fan-out merges in index order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ctxad_core::complexity::{
    k_fnl, k_het, k_ins, k_vcc, scale_and_rank, write_complexity_csv, ComplexityReport,
    RawComplexity,
};
use ctxad_core::eval::{
    emit_plot_data, evaluate, loss_curve_points, threshold_points, EvalReport, PlotPoint,
};
use ctxad_core::exec::{derive_seed, map_indexed_coarse};
use ctxad_core::model::{CwaeModel, ModelConfig};
use ctxad_core::select::{probe_model_config, probe_train_config, select_context, NO_CONTEXT};
use ctxad_core::tabular::{ingest, load_dataset, save_dataset, DatasetManifest, EncodedTable};
use ctxad_core::train::{save_checkpoint, train, Checkpoint, TrainConfig, TrainReport};
use ctxad_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Dataset statistics printed by `ingest`.
#[derive(Debug, Clone, Serialize)]
pub struct IngestStats {
    pub dataset: String,
    pub rows: usize,
    pub features: usize,
    pub anomalies: usize,
    pub anomaly_ratio: f64,
    pub avg_cardinality: f64,
}

impl IngestStats {
    pub fn from_table(name: &str, table: &EncodedTable) -> IngestStats {
        let features = table.schema.columns.len();
        let total_card: usize = table.schema.columns.iter().map(|c| c.vocab.len()).sum();
        IngestStats {
            dataset: name.to_string(),
            rows: table.n_rows(),
            features,
            anomalies: table.n_anomalies(),
            anomaly_ratio: table.n_anomalies() as f64 / table.n_rows() as f64,
            avg_cardinality: total_card as f64 / features as f64,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "dataset {}: {} rows, {} features, {} anomalies ({:.2}%), avg cardinality {:.2}",
            self.dataset,
            group_thousands(self.rows),
            self.features,
            group_thousands(self.anomalies),
            self.anomaly_ratio * 100.0,
            self.avg_cardinality
        )
    }
}

/// 1,234,567-style grouping for stdout stats.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// File-name slug for a context choice.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::validation(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn cmd_ingest(manifest_path: &Path, out_dir: &Path) -> Result<(IngestStats, PathBuf)> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let table = ingest(&manifest, manifest_path)?;
    std::fs::create_dir_all(out_dir)?;
    let out = out_dir.join(format!("{}.ds", slug(&manifest.name)));
    save_dataset(&table, &out)?;
    Ok((IngestStats::from_table(&manifest.name, &table), out))
}

/// Candidate pool: the manifest restriction when present, else every
/// feature column.
fn candidate_pool(manifest: &DatasetManifest, table: &EncodedTable) -> Vec<String> {
    match &manifest.candidate_context_columns {
        Some(cols) => cols.clone(),
        None => table.schema.columns.iter().map(|c| c.name.clone()).collect(),
    }
}

pub struct SelectionArtifacts {
    pub report: ctxad_core::select::SelectionReport,
    pub report_path: PathBuf,
    pub plot_path: PathBuf,
}

/// Runs the context sweep with the dedicated probe configuration; the run
/// config's model/train sections govern final evaluation, not the sweep.
pub fn cmd_select_context(
    manifest_path: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<SelectionArtifacts> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let table = ingest(&manifest, manifest_path)?;
    let candidates = candidate_pool(&manifest, &table);
    let template = probe_model_config(&table)?;
    let tcfg = probe_train_config();
    let report = select_context(&table, &candidates, &template, &tcfg, true, cfg.seeds[0])?;

    std::fs::create_dir_all(out_dir)?;
    let base = slug(&manifest.name);
    let report_path = out_dir.join(format!("{base}.selection.json"));
    write_json(&report_path, &report)?;

    let mut points = Vec::new();
    for c in &report.candidates {
        points.push(PlotPoint {
            series: "joint_loss".into(),
            x: c.candidate.clone(),
            y: c.joint_loss,
        });
        points.push(PlotPoint {
            series: "conditional_nll".into(),
            x: c.candidate.clone(),
            y: c.conditional_nll,
        });
        points.push(PlotPoint {
            series: "context_nll".into(),
            x: c.candidate.clone(),
            y: c.context_nll,
        });
    }
    let plot_path = out_dir.join(format!("{base}.selection.csv"));
    emit_plot_data(&plot_path, &points)?;
    Ok(SelectionArtifacts { report, report_path, plot_path })
}

/// How `--context` resolved for an evaluation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContextChoice {
    Auto,
    None,
    Named(String),
}

impl ContextChoice {
    pub fn parse(raw: &str) -> ContextChoice {
        match raw {
            "auto" => ContextChoice::Auto,
            "none" => ContextChoice::None,
            other => ContextChoice::Named(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub cwae_aucroc: f64,
    pub wae_aucroc: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub candidate: String,
    pub mean_aucroc: f64,
    pub stddev: f64,
}

/// Aggregated evaluation outcome; the per-seed list matches the seed list
/// in the run config, in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub chosen_context: String,
    pub seeds: Vec<SeedOutcome>,
    pub cwae_mean: f64,
    pub cwae_stddev: f64,
    pub wae_mean: f64,
    pub wae_stddev: f64,
    /// Per-candidate means from `--sweep-best`, best first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepEntry>>,
    /// File names under the output directory, sorted.
    pub report_paths: Vec<String>,
}

fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains one arm and evaluates it. `context` = None is the baseline with
/// every column treated as content and one global threshold group.
fn run_arm(
    table: &EncodedTable,
    overrides: &crate::config::ModelOverrides,
    tcfg_base: &TrainConfig,
    context: Option<&str>,
    seed: u64,
) -> Result<(EvalReport, TrainReport, CwaeModel)> {
    let arm = context.unwrap_or(NO_CONTEXT);
    let mut mcfg = ModelConfig::for_dataset(&table.schema, context)?;
    overrides.apply(&mut mcfg);
    mcfg.seed = derive_seed(seed, &format!("init/{arm}"));
    let mut model = CwaeModel::new(mcfg, &table.schema)?;
    let mut tcfg = tcfg_base.clone();
    tcfg.seed = derive_seed(seed, &format!("train/{arm}"));
    let (report, _) = train(&mut model, table, &tcfg)?;
    let eval = evaluate(&model, table, context)?;
    Ok((eval, report, model))
}

/// Value-index -> display-string map for threshold plot labels.
fn context_labels(table: &EncodedTable, context: Option<&str>) -> Result<BTreeMap<u32, String>> {
    let mut labels = BTreeMap::new();
    match context {
        None => {
            labels.insert(0, "all".to_string());
        }
        Some(col) => {
            let spec = table.schema.column(col)?;
            for idx in 0..spec.vocab.len() as u32 {
                if let Some(s) = spec.decode_index(idx) {
                    labels.insert(idx, s);
                }
            }
        }
    }
    Ok(labels)
}

pub struct EvaluateArgs<'a> {
    pub manifest_path: &'a Path,
    pub cfg: &'a RunConfig,
    pub out_dir: &'a Path,
    pub context: ContextChoice,
    pub sweep_best: bool,
}

pub struct EvaluateArtifacts {
    pub summary: RunSummary,
    pub summary_path: PathBuf,
    pub selection: Option<SelectionArtifacts>,
}

/// Multi-seed evaluation of the chosen-context model against the
/// context-free baseline, plus report and plot-data emission.
pub fn cmd_evaluate(args: EvaluateArgs) -> Result<EvaluateArtifacts> {
    let manifest = DatasetManifest::read(args.manifest_path)?;
    let table = ingest(&manifest, args.manifest_path)?;
    let cfg = args.cfg;
    let tcfg = cfg.train.to_train_config();
    std::fs::create_dir_all(args.out_dir)?;

    let mut selection = None;
    let chosen: Option<String> = match &args.context {
        ContextChoice::None => None,
        ContextChoice::Named(name) => {
            if name == NO_CONTEXT {
                None
            } else {
                table.schema.column_index(name)?;
                Some(name.clone())
            }
        }
        ContextChoice::Auto => {
            let arts = cmd_select_context(args.manifest_path, cfg, args.out_dir)?;
            let chosen = arts.report.chosen.clone();
            selection = Some(arts);
            if chosen == NO_CONTEXT {
                None
            } else {
                Some(chosen)
            }
        }
    };

    // Baseline arms are shared by every candidate, so compute them once.
    let wae_runs: Vec<Result<(EvalReport, TrainReport, CwaeModel)>> =
        map_indexed_coarse(cfg.seeds.len(), |i| {
            run_arm(&table, &cfg.model, &tcfg, None, cfg.seeds[i])
        });
    let mut wae_arms = Vec::with_capacity(wae_runs.len());
    for r in wae_runs {
        wae_arms.push(r?);
    }
    let wae_aucs: Vec<f64> = wae_arms.iter().map(|(e, _, _)| e.aucroc).collect();

    let eval_candidate = |context: Option<&str>| -> Result<Vec<(EvalReport, TrainReport, CwaeModel)>> {
        if context.is_none() {
            return Err(Error::validation("baseline arm is precomputed"));
        }
        let runs: Vec<Result<(EvalReport, TrainReport, CwaeModel)>> =
            map_indexed_coarse(cfg.seeds.len(), |i| {
                run_arm(&table, &cfg.model, &tcfg, context, cfg.seeds[i])
            });
        let mut arms = Vec::with_capacity(runs.len());
        for r in runs {
            arms.push(r?);
        }
        Ok(arms)
    };

    let mut sweep = None;
    let (final_context, cwae_arms): (Option<String>, Vec<(EvalReport, TrainReport, CwaeModel)>) =
        if args.sweep_best {
            let mut entries: Vec<(SweepEntry, Option<Vec<(EvalReport, TrainReport, CwaeModel)>>)> =
                Vec::new();
            let (wae_mean, wae_sd) = mean_stddev(&wae_aucs);
            entries.push((
                SweepEntry {
                    candidate: NO_CONTEXT.to_string(),
                    mean_aucroc: wae_mean,
                    stddev: wae_sd,
                },
                None,
            ));
            for cand in candidate_pool(&manifest, &table) {
                let arms = eval_candidate(Some(&cand))?;
                let (m, sd) = mean_stddev(&arms.iter().map(|(e, _, _)| e.aucroc).collect::<Vec<_>>());
                entries.push((
                    SweepEntry { candidate: cand, mean_aucroc: m, stddev: sd },
                    Some(arms),
                ));
            }
            entries.sort_by(|a, b| {
                b.0.mean_aucroc
                    .total_cmp(&a.0.mean_aucroc)
                    .then_with(|| a.0.candidate.cmp(&b.0.candidate))
            });
            let best = entries[0].0.candidate.clone();
            let best_arms = entries
                .iter_mut()
                .find(|(e, _)| e.candidate == best)
                .and_then(|(_, arms)| arms.take());
            sweep = Some(entries.into_iter().map(|(e, _)| e).collect::<Vec<_>>());
            match best_arms {
                // NO_CONTEXT won: the evaluated model is the baseline itself.
                None => (None, Vec::new()),
                Some(arms) => (Some(best), arms),
            }
        } else {
            match &chosen {
                None => (None, Vec::new()),
                Some(c) => (Some(c.clone()), eval_candidate(Some(c))?),
            }
        };

    // A NO_CONTEXT choice evaluates the baseline on both sides, so the
    // two columns of the summary coincide seed by seed.
    let cwae_reports: Vec<&EvalReport> = if final_context.is_none() {
        wae_arms.iter().map(|(e, _, _)| e).collect()
    } else {
        cwae_arms.iter().map(|(e, _, _)| e).collect()
    };
    let cwae_train: Vec<&TrainReport> = if final_context.is_none() {
        wae_arms.iter().map(|(_, t, _)| t).collect()
    } else {
        cwae_arms.iter().map(|(_, t, _)| t).collect()
    };
    let cwae_aucs: Vec<f64> = cwae_reports.iter().map(|e| e.aucroc).collect();

    let base = slug(&manifest.name);
    let ctx_name = final_context.clone().unwrap_or_else(|| NO_CONTEXT.to_string());
    let ctx_slug = slug(&ctx_name);
    let mut paths = Vec::new();

    for (i, &seed) in cfg.seeds.iter().enumerate() {
        let cwae_path = format!("{base}.{ctx_slug}.seed{seed}.cwae.json");
        write_json(&args.out_dir.join(&cwae_path), cwae_reports[i])?;
        paths.push(cwae_path);

        let wae_path = format!("{base}.{ctx_slug}.seed{seed}.wae.json");
        write_json(&args.out_dir.join(&wae_path), &wae_arms[i].0)?;
        paths.push(wae_path);

        let mut curve = Vec::new();
        curve.extend(loss_curve_points("cwae_train", &cwae_train[i].epoch_total));
        curve.extend(loss_curve_points("cwae_val", &cwae_train[i].epoch_val_recon));
        curve.extend(loss_curve_points("wae_train", &wae_arms[i].1.epoch_total));
        curve.extend(loss_curve_points("wae_val", &wae_arms[i].1.epoch_val_recon));
        let curve_path = format!("{base}.{ctx_slug}.seed{seed}.loss.csv");
        emit_plot_data(&args.out_dir.join(&curve_path), &curve)?;
        paths.push(curve_path);

        let labels = context_labels(&table, final_context.as_deref())?;
        let thr = threshold_points(&cwae_reports[i].thresholds, &labels);
        let thr_path = format!("{base}.{ctx_slug}.seed{seed}.thresholds.csv");
        emit_plot_data(&args.out_dir.join(&thr_path), &thr)?;
        paths.push(thr_path);
    }
    paths.sort();

    let (cwae_mean, cwae_stddev) = mean_stddev(&cwae_aucs);
    let (wae_mean, wae_stddev) = mean_stddev(&wae_aucs);
    let summary = RunSummary {
        dataset: manifest.name.clone(),
        chosen_context: ctx_name,
        seeds: cfg
            .seeds
            .iter()
            .enumerate()
            .map(|(i, &seed)| SeedOutcome {
                seed,
                cwae_aucroc: cwae_aucs[i],
                wae_aucroc: wae_aucs[i],
            })
            .collect(),
        cwae_mean,
        cwae_stddev,
        wae_mean,
        wae_stddev,
        sweep,
        report_paths: paths,
    };
    let summary_path = args.out_dir.join(format!("{base}.{ctx_slug}.summary.json"));
    write_json(&summary_path, &summary)?;
    Ok(EvaluateArtifacts { summary, summary_path, selection })
}

/// Single-seed final training: persists a checkpoint, the train report,
/// and loss-curve plot data.
pub fn cmd_train(
    manifest_path: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
    context: Option<&str>,
    seed: u64,
) -> Result<(TrainReport, PathBuf)> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let table = ingest(&manifest, manifest_path)?;
    if let Some(name) = context {
        table.schema.column_index(name)?;
    }
    let arm = context.unwrap_or(NO_CONTEXT);
    let mut mcfg = ModelConfig::for_dataset(&table.schema, context)?;
    cfg.model.apply(&mut mcfg);
    mcfg.seed = derive_seed(seed, &format!("init/{arm}"));
    let mut model = CwaeModel::new(mcfg, &table.schema)?;
    let mut tcfg = cfg.train.to_train_config();
    tcfg.seed = derive_seed(seed, &format!("train/{arm}"));
    let (report, adam) = train(&mut model, &table, &tcfg)?;

    std::fs::create_dir_all(out_dir)?;
    let base = format!("{}.{}.seed{seed}", slug(&manifest.name), slug(arm));
    let ckpt = Checkpoint::capture(&model, Some(&adam), tcfg.seed, tcfg.epochs as u64);
    let ckpt_path = out_dir.join(format!("{base}.ckpt"));
    save_checkpoint(&ckpt_path, &ckpt)?;
    write_json(&out_dir.join(format!("{base}.train.json")), &report)?;
    let mut curve = Vec::new();
    curve.extend(loss_curve_points("train_total", &report.epoch_total));
    curve.extend(loss_curve_points("train_recon", &report.epoch_recon));
    curve.extend(loss_curve_points("train_mmd", &report.epoch_mmd));
    curve.extend(loss_curve_points("val_recon", &report.epoch_val_recon));
    emit_plot_data(&out_dir.join(format!("{base}.loss.csv")), &curve)?;
    Ok((report, ckpt_path))
}

/// Per-dataset metric outcomes for `complexity`; a dataset enters the
/// ranked table only when all four metrics computed.
pub struct MetricOutcome {
    pub dataset: String,
    pub values: [std::result::Result<f64, String>; 4],
}

pub const METRIC_NAMES: [&str; 4] = ["k_vcc", "k_het", "k_ins", "k_fnl"];

pub fn cmd_complexity(
    dataset_files: &[PathBuf],
    raw_scores: Option<&Path>,
    out_dir: &Path,
) -> Result<(Vec<ComplexityReport>, Vec<MetricOutcome>, PathBuf)> {
    let mut raws = Vec::new();
    let mut outcomes = Vec::new();

    if let Some(csv_path) = raw_scores {
        raws = read_raw_scores(csv_path)?;
    } else {
        for path in dataset_files {
            let table = load_dataset(path)?;
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::validation(format!("bad dataset path {}", path.display())))?
                .to_string();
            let values = [
                k_vcc(&table, 0).map_err(|e| e.to_string()),
                k_het(&table).map_err(|e| e.to_string()),
                k_ins(&table).map_err(|e| e.to_string()),
                k_fnl(&table).map_err(|e| e.to_string()),
            ];
            if let [Ok(vcc), Ok(het), Ok(ins), Ok(fnl)] = &values {
                raws.push(RawComplexity {
                    dataset: name.clone(),
                    k_vcc: *vcc,
                    k_het: *het,
                    k_ins: *ins,
                    k_fnl: *fnl,
                });
            }
            outcomes.push(MetricOutcome { dataset: name, values });
        }
    }

    let reports = scale_and_rank(&raws)?;
    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("complexity.csv");
    write_complexity_csv(&csv_path, &reports)?;
    Ok((reports, outcomes, csv_path))
}

/// Raw-score override: CSV with header dataset,k_vcc,k_het,k_ins,k_fnl.
fn read_raw_scores(path: &Path) -> Result<Vec<RawComplexity>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let expected = ["dataset", "k_vcc", "k_het", "k_ins", "k_fnl"];
    let got = rdr.headers()?.clone();
    if got.iter().ne(expected) {
        return Err(Error::validation(format!(
            "raw-score header must be {}, got {}",
            expected.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::validation("short raw-score row"))?
                .parse::<f64>()
                .map_err(|e| Error::validation(format!("raw-score row {rec:?}: {e}")))
        };
        out.push(RawComplexity {
            dataset: rec
                .get(0)
                .ok_or_else(|| Error::validation("short raw-score row"))?
                .to_string(),
            k_vcc: field(1)?,
            k_het: field(2)?,
            k_ins: field(3)?,
            k_fnl: field(4)?,
        });
    }
    Ok(out)
}

/// Renders run summaries (and optionally the complexity table) as one
/// aligned text table.
pub fn cmd_report(summary_paths: &[PathBuf], complexity_csv: Option<&Path>) -> Result<String> {
    if summary_paths.is_empty() {
        return Err(Error::validation("report needs at least one summary file"));
    }
    let mut avg_scaled: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    if let Some(path) = complexity_csv {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(di), Some(ai), Some(ri)) =
            (col("dataset"), col("avg_scaled"), col("overall_rank"))
        else {
            return Err(Error::validation("complexity csv missing expected columns"));
        };
        for rec in rdr.records() {
            let rec = rec?;
            let dataset = rec.get(di).unwrap_or_default().to_string();
            let avg = rec
                .get(ai)
                .unwrap_or_default()
                .parse::<f64>()
                .map_err(|e| Error::validation(format!("complexity csv avg_scaled: {e}")))?;
            let rank = rec
                .get(ri)
                .unwrap_or_default()
                .parse::<usize>()
                .map_err(|e| Error::validation(format!("complexity csv overall_rank: {e}")))?;
            avg_scaled.insert(dataset, (avg, rank));
        }
    }

    let mut rows = Vec::new();
    for path in summary_paths {
        let text = std::fs::read_to_string(path)?;
        let summary: RunSummary = serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("summary {}: {e}", path.display())))?;
        let extra = avg_scaled.get(&summary.dataset);
        rows.push([
            summary.dataset.clone(),
            summary.chosen_context.clone(),
            format!("{:.3} +/- {:.3}", summary.cwae_mean, summary.cwae_stddev),
            format!("{:.3} +/- {:.3}", summary.wae_mean, summary.wae_stddev),
            extra.map(|(a, _)| format!("{a:.3}")).unwrap_or_else(|| "-".into()),
            extra.map(|(_, r)| r.to_string()).unwrap_or_else(|| "-".into()),
        ]);
    }
    rows.sort();

    let header = ["dataset", "context", "cwae_aucroc", "wae_aucroc", "avg_scaled", "rank"];
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut emit = |cells: &[String]| {
        let line = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        let _ = writeln!(out, "{}", line.trim_end());
    };
    emit(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    for row in &rows {
        emit(row);
    }
    Ok(out)
}
