use std::path::{Path, PathBuf};

use flan::interpret::{
    attribute, binary_flip_effect, default_baseline, explain_examples, AttributionVector, Level, LatentCorpus,
};
use flan::metrics::{
    attribution_reports, diversity, example_reports, explained_target, k_medoids, non_representativeness,
    output_distributions, represent, MetricReport,
};
use flan::train::{evaluate, train, EvalResult, Evaluation};
use flan::{Dataset64, Flan64};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::checkpoint::Checkpoint;
use crate::config::{LoadedConfig, RunConfig};
use crate::error::{CliError, Result};
use crate::report::{table, write_jsonl, Stat};

/// Result of one seed of `train`.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub model: Flan64,
    pub result: EvalResult,
    pub train: Evaluation,
    pub validation: Option<Evaluation>,
    pub test: Option<Evaluation>,
}

impl SeedRun {
    /// Checkpoint selection score: validation AUC, else accuracy, else
    /// negative loss; training split when there is no validation split.
    pub fn selection_score(&self) -> f64 {
        let e = self.validation.as_ref().unwrap_or(&self.train);
        e.auc.or(e.accuracy).unwrap_or(-e.loss)
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub runs: Vec<SeedRun>,
    /// `(split-metric, stat over seeds)` in a fixed order.
    pub summary: Vec<(String, Stat)>,
    pub best_seed: u64,
    pub records: Vec<Value>,
    pub summary_text: String,
}

fn optional_eval(model: &Flan64, data: &Dataset64, rows: &[usize]) -> Result<Option<Evaluation>> {
    if rows.is_empty() {
        Ok(None)
    } else {
        Ok(Some(evaluate(model, data, rows)?))
    }
}

/// Trains one seed: data split, initialisation, shuffling all derive from
/// `seed`.
pub fn run_seed(cfg: &LoadedConfig, seed: u64) -> Result<SeedRun> {
    let data = cfg.dataset(seed)?;
    let init = cfg.init_model(&data, seed)?;
    let outcome = train(&init, &data, &cfg.train_config(seed))?;
    let s = &data.splits;
    Ok(SeedRun {
        seed,
        train: evaluate(&outcome.model, &data, &s.train)?,
        validation: optional_eval(&outcome.model, &data, &s.validation)?,
        test: optional_eval(&outcome.model, &data, &s.test)?,
        model: outcome.model,
        result: outcome.result,
    })
}

/// All seeds, run in parallel and returned in config order.
pub fn train_runs(cfg: &LoadedConfig) -> Result<Vec<SeedRun>> {
    cfg.config
        .seeds
        .par_iter()
        .map(|&s| {
            log::info!("training seed {s}");
            run_seed(cfg, s)
        })
        .collect()
}

fn summarize(runs: &[SeedRun]) -> Vec<(String, Stat)> {
    let mut out = Vec::new();
    let splits: [(&str, fn(&SeedRun) -> Option<&Evaluation>); 3] = [
        ("test", |r| r.test.as_ref()),
        ("validation", |r| r.validation.as_ref()),
        ("train", |r| Some(&r.train)),
    ];
    let metrics: [(&str, fn(&Evaluation) -> Option<f64>); 3] =
        [("auc", |e| e.auc), ("accuracy", |e| e.accuracy), ("loss", |e| Some(e.loss))];
    for (split, get) in splits {
        for (metric, pick) in metrics {
            let values: Vec<f64> = runs.iter().filter_map(|r| get(r).and_then(pick)).collect();
            if let Some(stat) = Stat::of(&values) {
                out.push((format!("{split}-{metric}"), stat));
            }
        }
    }
    out
}

fn train_records(config: &RunConfig, hash: &str, runs: &[SeedRun], summary: &[(String, Stat)], best: u64) -> Vec<Value> {
    let mut records = vec![json!({
        "record": "config",
        "config": config,
        "config_hash": hash,
    })];
    for r in runs {
        records.push(json!({
            "record": "run",
            "seed": r.seed,
            "config_hash": hash,
            "epochs_run": r.result.series.len(),
            "best_epoch": r.result.best_epoch,
            "stopped_early": r.result.stopped_early,
            "final": {"train": r.train, "validation": r.validation, "test": r.test},
        }));
    }
    for r in runs {
        records.push(json!({
            "record": "series",
            "seed": r.seed,
            "config_hash": hash,
            "series": r.result.series,
        }));
    }
    records.push(json!({
        "record": "summary",
        "seeds": config.seeds,
        "config_hash": hash,
        "best_seed": best,
        "metrics": summary.iter().map(|(k, v)| json!({"metric": k, "stat": v})).collect::<Vec<_>>(),
    }));
    records
}

fn summary_text(runs: &[SeedRun], summary: &[(String, Stat)], best: u64) -> String {
    let mut s = String::new();
    let rows: Vec<Vec<String>> = summary
        .iter()
        .map(|(k, v)| vec![k.clone(), v.display(), format!("{:.4}", v.min), v.n.to_string()])
        .collect();
    s.push_str(&table(&["metric", "mean (max) ± std", "min", "runs"], &rows));
    s.push('\n');
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.4}"));
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                r.result.series.len().to_string(),
                r.result.best_epoch.map_or_else(|| "final".into(), |e| e.to_string()),
                fmt(r.train.accuracy),
                fmt(r.test.as_ref().and_then(|e| e.accuracy)),
                fmt(r.test.as_ref().and_then(|e| e.auc)),
            ]
        })
        .collect();
    s.push_str(&table(&["seed", "epochs", "kept", "train-acc", "test-acc", "test-auc"], &rows));
    s.push_str(&format!("\nbest checkpoint: seed {best}\n"));
    s
}

/// Trains every seed of the config and writes `train.jsonl`,
/// `summary.txt`, `seed-<s>.flan` and the selected `model.flan` to `out`.
pub fn cmd_train(config_path: &Path, out: &Path, seed_override: Option<u64>) -> Result<TrainReport> {
    let mut cfg = RunConfig::load(config_path)?;
    cfg.config = cfg.config.with_seed_override(seed_override);
    let hash = cfg.config.task_hash();
    let runs = train_runs(&cfg)?;
    let best = runs
        .iter()
        .fold(None::<&SeedRun>, |b, r| match b {
            Some(b) if b.selection_score() >= r.selection_score() => Some(b),
            _ => Some(r),
        })
        .expect("at least one seed");
    let best_seed = best.seed;
    let summary = summarize(&runs);
    let records = train_records(&cfg.config, &hash, &runs, &summary, best_seed);
    let text = summary_text(&runs, &summary, best_seed);
    std::fs::create_dir_all(out)?;
    for r in &runs {
        Checkpoint::from_model(&r.model, &hash, r.seed).save(out.join(format!("seed-{}.flan", r.seed)))?;
    }
    Checkpoint::from_model(&best.model, &hash, best_seed).save(out.join("model.flan"))?;
    write_jsonl(out.join("train.jsonl"), &records)?;
    std::fs::write(out.join("summary.txt"), &text)?;
    Ok(TrainReport {
        runs,
        summary,
        best_seed,
        records,
        summary_text: text,
    })
}

/// Common options of the commands that read a checkpoint.
#[derive(Clone, Debug)]
pub struct CheckpointArgs {
    pub config: PathBuf,
    pub checkpoint: PathBuf,
    pub out: PathBuf,
    pub allow_hash_mismatch: bool,
    pub samples: Option<Vec<usize>>,
}

/// Config, model and the dataset split exactly as during its training run.
pub struct Loaded {
    pub cfg: LoadedConfig,
    pub hash: String,
    pub seed: u64,
    pub model: Flan64,
    pub data: Dataset64,
}

pub fn load_for_analysis(args: &CheckpointArgs) -> Result<Loaded> {
    let cfg = RunConfig::load(&args.config)?;
    let hash = cfg.config.task_hash();
    let ckpt = Checkpoint::load(&args.checkpoint, Some(&hash), args.allow_hash_mismatch)?;
    let seed = ckpt.header.seed;
    let model = ckpt.to_model()?;
    let data = cfg.dataset(seed)?;
    if model.partition() != &data.partition {
        return Err(CliError::config(
            "task",
            "checkpoint feature partition differs from the dataset's",
        ));
    }
    Ok(Loaded {
        cfg,
        hash,
        seed,
        model,
        data,
    })
}

fn check_rows(data: &Dataset64, rows: &[usize]) -> Result<()> {
    if let Some(&bad) = rows.iter().find(|&&r| r >= data.len()) {
        return Err(flan::Error::Index {
            what: "sample",
            index: bad,
            len: data.len(),
        }
        .into());
    }
    Ok(())
}

/// Rows to analyse: explicit ids, else the test split (validation, then
/// everything, when the test split is empty).
fn analysis_rows(data: &Dataset64, explicit: Option<&[usize]>) -> Result<Vec<usize>> {
    let rows = match explicit {
        Some(r) => r.to_vec(),
        None if !data.splits.test.is_empty() => data.splits.test.clone(),
        None if !data.splits.validation.is_empty() => data.splits.validation.clone(),
        None => (0..data.len()).collect(),
    };
    check_rows(data, &rows)?;
    Ok(rows)
}

fn warning(message: String, requested: usize, used: usize) -> Value {
    json!({"record": "warning", "message": message, "requested": requested, "used": used})
}

fn attribution_json(a: &AttributionVector<f64>, model: &Flan64) -> Result<Value> {
    let groups = match a.level {
        Level::Group => a.scores.clone(),
        Level::Raw => a.to_groups(model.partition())?.scores,
    };
    Ok(json!({
        "provider": a.provider,
        "level": a.level,
        "target": a.target,
        "scores": a.scores,
        "group_scores": groups,
    }))
}

/// Per-sample explanation records; see [`cmd_explain`].
pub fn explain_records(loaded: &Loaded, rows: &[usize]) -> Result<Vec<Value>> {
    let Loaded { cfg, hash, seed, model, data } = loaded;
    let ic = &cfg.config.interpret;
    check_rows(data, rows)?;
    let n_features = model.n_features();
    let mut records = Vec::new();
    let top_k = ic.top_k.min(n_features);
    if top_k < ic.top_k {
        records.push(warning(
            format!("top-k {} exceeds the {n_features} features; clamped", ic.top_k),
            ic.top_k,
            top_k,
        ));
    }
    let baseline = default_baseline(data);
    let corpus_rows = &data.splits.train;
    let corpus = LatentCorpus::encode(model, data, corpus_rows)?;
    let per_sample: Vec<Value> = rows
        .par_iter()
        .map(|&r| {
            let x = data.sample(r)?;
            let (outputs, bundle) = model.forward(&x)?;
            let target = explained_target(model, &x)?;
            let attributions = ic
                .providers
                .iter()
                .map(|&p| attribution_json(&attribute(model, &x, p, target, &baseline, ic.ig_steps)?, model))
                .collect::<Result<Vec<_>>>()?;
            let order = bundle.latent_norms().top_k(top_k);
            let partial = (1..=top_k)
                .map(|j| {
                    let keep = &order[..j];
                    let p = model.probabilities(&model.partial_forward(&bundle, keep)?).into_vec();
                    Ok(json!({"features": keep, "probabilities": p}))
                })
                .collect::<Result<Vec<_>>>()?;
            let effects = (0..n_features)
                .map(|i| {
                    let flip = if model.partition().group(i)?.len() == 1 && model.partition().is_binary(i) {
                        Some(binary_flip_effect(model, &x, i, target)?)
                    } else {
                        None
                    };
                    Ok(json!({
                        "feature": i,
                        "name": model.partition().names()[i],
                        "effect": model.feature_effect(&bundle, i)?.into_vec(),
                        "taylor_residual": model.taylor_residual(&bundle, i)?,
                        "flip_effect": flip,
                    }))
                })
                .collect::<Result<Vec<_>>>()?;
            // the query itself is never its own example
            let keep: Vec<usize> = (0..corpus.len()).filter(|&k| corpus.ids[k] != r).collect();
            let own = LatentCorpus {
                ids: keep.iter().map(|&k| corpus.ids[k]).collect(),
                bundles: keep.iter().map(|&k| corpus.bundles[k].clone()).collect(),
            };
            let examples = explain_examples(model, &x, Some(r), &own, ic.neighbors, top_k)?;
            Ok(json!({
                "record": "explanation",
                "sample": r,
                "seed": seed,
                "config_hash": hash,
                "label": data.targets.class(r),
                "probabilities": model.probabilities(&outputs).into_vec(),
                "target": target,
                "attributions": attributions,
                "partial": partial,
                "effects": effects,
                "examples": examples,
            }))
        })
        .collect::<Result<_>>()?;
    let corpus_size = corpus_rows.len().saturating_sub(1);
    if ic.neighbors > corpus_size {
        records.push(warning(
            format!("neighbors {} exceeds the example corpus; clamped", ic.neighbors),
            ic.neighbors,
            corpus_size,
        ));
    }
    records.extend(per_sample);
    Ok(records)
}

/// Writes `explain.jsonl` for the requested rows (default: the configured
/// samples, else the first five test rows).
pub fn cmd_explain(args: &CheckpointArgs) -> Result<Vec<Value>> {
    let loaded = load_for_analysis(args)?;
    let configured = &loaded.cfg.config.interpret.samples;
    let rows = match &args.samples {
        Some(r) => r.clone(),
        None if !configured.is_empty() => configured.clone(),
        None => analysis_rows(&loaded.data, None)?.into_iter().take(5).collect(),
    };
    let mut records = vec![json!({
        "record": "config",
        "config": loaded.cfg.config,
        "config_hash": loaded.hash,
        "seed": loaded.seed,
    })];
    records.extend(explain_records(&loaded, &rows)?);
    std::fs::create_dir_all(&args.out)?;
    write_jsonl(args.out.join("explain.jsonl"), &records)?;
    Ok(records)
}

/// Attribution and example metrics for `rows`.
pub fn metric_reports(loaded: &Loaded, rows: &[usize]) -> Result<Vec<MetricReport>> {
    let c = &loaded.cfg.config;
    let mut reports = attribution_reports(
        &loaded.model,
        &loaded.data,
        rows,
        &c.interpret.providers,
        c.interpret.ig_steps,
        &c.metrics,
    )?;
    reports.extend(example_reports(&loaded.model, &loaded.data, rows, loaded.seed, &c.metrics)?);
    Ok(reports)
}

fn name(v: impl serde::Serialize) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        _ => "?".into(),
    }
}

fn metrics_table(reports: &[MetricReport]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let label = match (r.provider, r.space, r.scope) {
                (Some(p), _, _) => p.to_string(),
                (None, Some(sp), Some(sc)) => format!("{}/{}", name(sp), name(sc)),
                _ => "-".into(),
            };
            vec![
                name(r.metric),
                label,
                format!("{:.4} ± {:.4}", r.value, r.std),
                r.n.to_string(),
                r.degenerate.to_string(),
            ]
        })
        .collect();
    table(&["metric", "provider/space", "mean ± std", "n", "degenerate"], &rows)
}

/// Writes `metrics.jsonl` and `metrics.txt`.
pub fn cmd_metrics(args: &CheckpointArgs) -> Result<Vec<MetricReport>> {
    let loaded = load_for_analysis(args)?;
    let rows = analysis_rows(&loaded.data, args.samples.as_deref())?;
    let reports = metric_reports(&loaded, &rows)?;
    let mut records = vec![json!({
        "record": "config",
        "config": loaded.cfg.config,
        "config_hash": loaded.hash,
        "seed": loaded.seed,
        "rows": rows,
    })];
    for r in &reports {
        let mut v = serde_json::to_value(r)?;
        v["record"] = json!("metric");
        v["seed"] = json!(loaded.seed);
        v["config_hash"] = json!(loaded.hash);
        records.push(v);
    }
    std::fs::create_dir_all(&args.out)?;
    write_jsonl(args.out.join("metrics.jsonl"), &records)?;
    std::fs::write(args.out.join("metrics.txt"), metrics_table(&reports))?;
    Ok(reports)
}

/// K-medoids prototypes of the training split in every configured space;
/// writes `prototypes.jsonl`.
pub fn cmd_prototypes(args: &CheckpointArgs) -> Result<Vec<Value>> {
    let loaded = load_for_analysis(args)?;
    let Loaded { cfg, hash, seed, model, data } = &loaded;
    let corpus = &data.splits.train;
    let k = cfg.config.metrics.prototypes.min(corpus.len());
    let outputs = output_distributions(model, data, corpus)?;
    let mut records = vec![json!({
        "record": "config",
        "config": cfg.config,
        "config_hash": hash,
        "seed": seed,
    })];
    for &space in &cfg.config.metrics.spaces {
        let reps = represent(model, data, corpus, space)?;
        let set = k_medoids(&reps, k, *seed)?;
        let div = if k >= 2 {
            Some(diversity(&reps.gather_rows(&set.members)?)?)
        } else {
            None
        };
        records.push(json!({
            "record": "prototypes",
            "space": space,
            "seed": seed,
            "config_hash": hash,
            "members": set.members.iter().map(|&m| corpus[m]).collect::<Vec<_>>(),
            "assignment": set.assignment,
            "total_cost": set.total_cost,
            "cost_history": set.cost_history,
            "diversity": div,
            "non_representativeness": non_representativeness(&reps, &outputs, &set.members)?,
        }));
    }
    std::fs::create_dir_all(&args.out)?;
    write_jsonl(args.out.join("prototypes.jsonl"), &records)?;
    Ok(records)
}
