use std::path::{Path, PathBuf};
use std::process::Command;

use flan::interpret::{attribute, default_baseline, Provider};
use flan::metrics::{explained_target, MetricKind};
use flan_cli::commands::{explain_records, load_for_analysis, metric_reports, Loaded};
use flan_cli::{cmd_train, CheckpointArgs, Checkpoint, RunConfig};
use serde_json::Value;

const PLANTED: &str = r#"{
  "task": {
    "source": {"kind": "synthetic", "spec": {"generator": "planted-relevance", "n-samples": 120, "n-features": 4, "n-irrelevant": 1, "seed": 3}}
  },
  "model": {
    "encoder": {"latent-dim": 3, "hidden": [4], "activation": "tanh", "sharing": {"mode": "distinct"}},
    "predictor": {"hidden": [4], "activation": "tanh"},
    "output": {"type": "binary-logit"}
  },
  "train": {"epochs": 5, "lr": 0.01},
  "interpret": {"top-k": 9, "ig-steps": 16, "neighbors": 2},
  "metrics": {"prototypes": 4},
  "seeds": [4]
}"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn flan() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_flan"));
    c.env("RUST_LOG", "warn");
    c
}

fn trained(dir: &Path, text: &str) -> CheckpointArgs {
    let config = write_config(dir, text);
    cmd_train(&config, &dir.join("out"), None).unwrap();
    CheckpointArgs {
        config,
        checkpoint: dir.join("out/model.flan"),
        out: dir.join("analysis"),
        allow_hash_mismatch: false,
        samples: None,
    }
}

#[test]
fn zero_epochs_keep_initialisation() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &PLANTED.replace(r#""epochs": 5"#, r#""epochs": 0"#));
    let report = cmd_train(&config, &dir.path().join("out"), None).unwrap();
    assert!(report.runs[0].result.series.is_empty());
    let cfg = RunConfig::load(&config).unwrap();
    let init = cfg.init_model(&cfg.dataset(4).unwrap(), 4).unwrap();
    let saved = Checkpoint::load(dir.path().join("out/seed-4.flan"), None, false).unwrap();
    assert_eq!(saved.to_model().unwrap(), init);
}

#[test]
fn reloaded_checkpoint_reproduces_test_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let args = trained(dir.path(), PLANTED);
    let line = std::fs::read_to_string(dir.path().join("out/train.jsonl")).unwrap();
    let run: Value = line.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()).find(|v| v["record"] == "run").unwrap();
    let loaded = load_for_analysis(&args).unwrap();
    let eval = flan::train::evaluate(&loaded.model, &loaded.data, &loaded.data.splits.test).unwrap();
    assert_eq!(run["final"]["test"]["auc"].as_f64(), eval.auc);
    assert_eq!(run["final"]["test"]["loss"].as_f64(), Some(eval.loss));
}

#[test]
fn explain_matches_in_process_calls() {
    let dir = tempfile::tempdir().unwrap();
    let args = trained(dir.path(), PLANTED);
    let loaded = load_for_analysis(&args).unwrap();
    let rows = [loaded.data.splits.test[0], 7];
    let records = explain_records(&loaded, &rows).unwrap();
    // top-k 9 > 4 features
    assert_eq!(records[0]["record"], "warning");
    assert_eq!(records[0]["used"], 4);
    let Loaded { model, data, .. } = &loaded;
    let baseline = default_baseline(data);
    for (rec, &r) in records[1..].iter().zip(&rows) {
        assert_eq!(rec["sample"], r);
        let x = data.sample(r).unwrap();
        let target = explained_target(model, &x).unwrap();
        for (a, p) in rec["attributions"].as_array().unwrap().iter().zip(Provider::ALL) {
            let direct = attribute(model, &x, p, target, &baseline, 16).unwrap();
            let got: Vec<f64> = serde_json::from_value(a["scores"].clone()).unwrap();
            assert_eq!(got, direct.scores, "{p}");
        }
        let bundle = model.encode(&x).unwrap();
        for (i, e) in rec["effects"].as_array().unwrap().iter().enumerate() {
            assert_eq!(e["taylor_residual"].as_f64().unwrap(), model.taylor_residual(&bundle, i).unwrap());
        }
        let partial = rec["partial"].as_array().unwrap();
        assert_eq!(partial.len(), 4);
        let all: Vec<f64> = serde_json::from_value(partial[3]["probabilities"].clone()).unwrap();
        assert_eq!(all, model.probabilities(&model.predict(&x).unwrap()).into_vec());
        let neighbors = rec["examples"]["neighbors"].as_array().unwrap();
        assert_eq!(neighbors.len(), 2);
        assert!(neighbors.iter().all(|n| n["id"] != r));
    }
}

#[test]
fn zero_latents_give_zero_attributions_and_constant_partials() {
    let dir = tempfile::tempdir().unwrap();
    let args = trained(dir.path(), PLANTED);
    let mut loaded = load_for_analysis(&args).unwrap();
    if let flan::model::Encoders::Distinct(nets) = loaded.model.encoders_mut() {
        for net in nets {
            for p in net.params_mut() {
                p.as_mut_slice().fill(0.0);
            }
        }
    }
    let records = explain_records(&loaded, &[0]).unwrap();
    let rec = records.iter().find(|r| r["record"] == "explanation").unwrap();
    for a in rec["attributions"].as_array().unwrap() {
        let s: Vec<f64> = serde_json::from_value(a["scores"].clone()).unwrap();
        assert!(s.iter().all(|&v| v == 0.0), "{}", a["provider"]);
    }
    let partial = rec["partial"].as_array().unwrap();
    assert!(partial.windows(2).all(|w| w[0]["probabilities"] == w[1]["probabilities"]));
}

#[test]
fn metrics_single_provider_and_aggregation() {
    let dir = tempfile::tempdir().unwrap();
    let text = PLANTED.replace(r#""ig-steps": 16"#, r#""ig-steps": 16, "providers": ["flan-norm"]"#);
    let args = trained(dir.path(), &text);
    let loaded = load_for_analysis(&args).unwrap();
    let reports = metric_reports(&loaded, &loaded.data.splits.test).unwrap();
    let attribution: Vec<_> = reports.iter().filter(|r| r.provider.is_some()).collect();
    assert_eq!(attribution.len(), 2);
    assert!(attribution.iter().all(|r| r.provider == Some(Provider::FlanNorm)));
    assert_eq!(attribution[0].metric, MetricKind::Monotonicity);
    for r in &reports {
        let n = r.per_sample.len() as f64;
        let mean = r.per_sample.iter().sum::<f64>() / n;
        let var = r.per_sample.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!((r.value - mean).abs() <= 1e-12);
        assert!((r.std - var.sqrt()).abs() <= 1e-12);
    }
    flan_cli::cmd_metrics(&args).unwrap();
    let lines = std::fs::read_to_string(args.out.join("metrics.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 1 + reports.len());
}

#[test]
fn prototypes_are_training_rows() {
    let dir = tempfile::tempdir().unwrap();
    let args = trained(dir.path(), PLANTED);
    let records = flan_cli::cmd_prototypes(&args).unwrap();
    let loaded = load_for_analysis(&args).unwrap();
    assert_eq!(records.len(), 3);
    for rec in &records[1..] {
        let members: Vec<usize> = serde_json::from_value(rec["members"].clone()).unwrap();
        assert_eq!(members.len(), 4);
        assert!(members.iter().all(|m| loaded.data.splits.train.contains(m)));
    }
}

fn exit_code(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let good = write_config(d, PLANTED);
    let out = d.join("out");
    let (code, _) = exit_code(flan().args(["train", "--config"]).arg(&good).arg("--out").arg(&out));
    assert_eq!(code, 0);

    let bad = d.join("bad.json");
    std::fs::write(&bad, PLANTED.replace(r#""lr": 0.01"#, r#""lr": 0.01, "lr-max": 1"#)).unwrap();
    let (code, err) = exit_code(flan().args(["train", "--config"]).arg(&bad).arg("--out").arg(&out));
    assert_eq!(code, 2);
    assert!(err.contains("train.lr-max"), "{err}");

    let missing = d.join("missing.json");
    std::fs::write(
        &missing,
        r#"{"task": {"source": {"kind": "delimited", "path": "nowhere.csv",
            "schema": {"columns": [{"name": "a", "type": "numeric"}], "label": "y"}}},
          "model": {"encoder": {"latent-dim": 2, "activation": "tanh", "sharing": {"mode": "distinct"}},
                    "predictor": {"activation": "tanh"}, "output": {"type": "binary-logit"}},
          "train": {"epochs": 1}, "seeds": [1]}"#,
    )
    .unwrap();
    let (code, _) = exit_code(flan().args(["train", "--config"]).arg(&missing).arg("--out").arg(&out));
    assert_eq!(code, 4);

    let diverge = d.join("diverge.json");
    std::fs::write(&diverge, PLANTED.replace(r#""lr": 0.01"#, r#""lr": 1e300"#)).unwrap();
    let (code, err) = exit_code(flan().args(["train", "--config"]).arg(&diverge).arg("--out").arg(d.join("div")));
    assert_eq!(code, 3, "{err}");

    let ckpt = out.join("model.flan");
    let analysis = |cmd: &mut Command| {
        cmd.arg("--config").arg(&good).arg("--checkpoint").arg(&ckpt).arg("--out").arg(d.join("an"));
    };
    let mut c = flan();
    c.arg("explain");
    analysis(&mut c);
    assert_eq!(exit_code(&mut c).0, 0);
    let mut c = flan();
    c.args(["explain", "--samples", "0,100000"]);
    analysis(&mut c);
    assert_eq!(exit_code(&mut c).0, 2);

    // a checkpoint of a different task
    let other = write_config(&d.join("other").tap_mkdir(), &PLANTED.replace(r#""seed": 3"#, r#""seed": 5"#));
    let mut c = flan();
    c.arg("metrics").arg("--config").arg(&other).arg("--checkpoint").arg(&ckpt).arg("--out").arg(d.join("an"));
    let (code, err) = exit_code(&mut c);
    assert_eq!(code, 2);
    assert!(err.contains("allow-hash-mismatch"), "{err}");
    let (code, _) = exit_code(c.arg("--allow-hash-mismatch"));
    assert_eq!(code, 0);

    let truncated = d.join("trunc.flan");
    let bytes = std::fs::read(&ckpt).unwrap();
    std::fs::write(&truncated, &bytes[..bytes.len() - 3]).unwrap();
    let mut c = flan();
    c.arg("prototypes").arg("--config").arg(&good).arg("--checkpoint").arg(&truncated).arg("--out").arg(d.join("an"));
    assert_eq!(exit_code(&mut c).0, 4);

    let (code, _) = exit_code(flan().arg("selfcheck").env("FLAN_THREADS", "0"));
    assert_eq!(code, 2);
}

#[test]
fn selfcheck_passes() {
    let out = flan().arg("selfcheck").env("FLAN_THREADS", "2").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 8);
    assert!(text.lines().all(|l| l.starts_with("PASS ")), "{text}");
}

#[test]
fn seed_override_trains_one_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &PLANTED.replace(r#""seeds": [4]"#, r#""seeds": [4, 5, 6]"#));
    let report = cmd_train(&config, &dir.path().join("out"), Some(9)).unwrap();
    assert_eq!(report.runs.len(), 1);
    assert_eq!(report.best_seed, 9);
    assert!(dir.path().join("out/seed-9.flan").exists());
    assert!(!dir.path().join("out/seed-4.flan").exists());
}

trait Mkdir {
    fn tap_mkdir(self) -> Self;
}

impl Mkdir for PathBuf {
    fn tap_mkdir(self) -> Self {
        std::fs::create_dir_all(&self).unwrap();
        self
    }
}
