//! Quick in-process invariant suites behind `flan selfcheck`.

use flan::data::{Dataset, Provenance, Splits, Targets};
use flan::interpret::{integrated_gradients, linear_assignment};
use flan::metrics::k_medoids;
use flan::model::{Activation, EncoderSpec, FeaturePartition, FlanModel, OutputKind, PartitionKind, PredictorSpec, Sharing};
use flan::numeric::finite_diff_gradient;
use flan::train::{auc, batch_loss_and_grads};
use flan::{Dataset64, Flan64, Matrix64, Rng};

use crate::checkpoint::Checkpoint;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Random partition of `raw` columns into contiguous groups of width 1..=3.
pub fn random_partition(rng: &mut Rng, raw: usize) -> FeaturePartition {
    let mut groups = Vec::new();
    let mut start = 0;
    while start < raw {
        let w = (1 + rng.below(3)).min(raw - start);
        groups.push((start..start + w).collect());
        start += w;
    }
    FeaturePartition::new(raw, groups, PartitionKind::PerColumn).expect("valid partition")
}

/// Random smooth FLAN (tanh or sigmoid hidden layers) on a random partition.
pub fn random_model(rng: &mut Rng, output: OutputKind) -> Flan64 {
    let raw = 2 + rng.below(5);
    let act = |rng: &mut Rng| if rng.below(2) == 0 { Activation::Tanh } else { Activation::Sigmoid };
    let sharing = if rng.below(3) == 0 {
        Sharing::Shared { code_dim: 1 + rng.below(2) }
    } else {
        Sharing::Distinct
    };
    let encoder = EncoderSpec {
        latent_dim: 1 + rng.below(4),
        hidden: vec![1 + rng.below(4)],
        activation: act(rng),
        sharing,
        bias: true,
    };
    let predictor = PredictorSpec {
        hidden: vec![1 + rng.below(4)],
        activation: act(rng),
        bias: true,
    };
    let partition = random_partition(rng, raw);
    FlanModel::new(partition, encoder, predictor, output, rng).expect("valid model")
}

pub fn random_dataset(rng: &mut Rng, model: &Flan64, n: usize) -> Dataset64 {
    let d = model.raw_dim();
    let x = Matrix64::from_vec(n, d, (0..n * d).map(|_| rng.normal()).collect()).expect("shape");
    let classes = model.output_kind().classes().max(2);
    Dataset::new(
        x,
        Targets::Classes {
            labels: (0..n).map(|_| rng.below(classes)).collect(),
            classes,
        },
        model.partition().clone(),
        Splits {
            train: (0..n).collect(),
            ..Splits::default()
        },
        Provenance::default(),
    )
    .expect("valid dataset")
}

/// Relative error `||a - b|| / max(||a||, ||b||, 1e-12)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Relative error of the autodiff parameter gradient against central
/// differences for one batch.
pub fn gradient_error(model: &Flan64, data: &Dataset64) -> f64 {
    let rows: Vec<usize> = (0..data.len()).collect();
    let (_, grads) = batch_loss_and_grads(model, data, &rows).expect("loss");
    let flat: Vec<f64> = model.params().iter().flat_map(|p| p.as_slice().to_vec()).collect();
    let loss_at = |theta: &Matrix64| -> f64 {
        let mut probe = model.clone();
        let mut src = theta.as_slice().iter();
        for p in probe.params_mut() {
            for v in p.as_mut_slice() {
                *v = *src.next().expect("same length");
            }
        }
        batch_loss_and_grads(&probe, data, &rows).expect("loss").0
    };
    let fd = finite_diff_gradient(loss_at, &Matrix64::row_vector(flat).expect("row"), 1e-5).expect("fd");
    let ad: Vec<f64> = grads.iter().flat_map(|g| g.as_slice().to_vec()).collect();
    relative_error(&ad, fd.as_slice())
}

fn pair_count_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                wins += if si > sj { 1.0 } else if si == sj { 0.5 } else { 0.0 };
            }
        }
    }
    wins / pairs
}

fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    fn go(cost: &[Vec<f64>], row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cost[0].len()], 0.0, &mut best);
    best
}

fn linear_model(rng: &mut Rng, raw: usize, d: usize, bias: bool) -> Flan64 {
    let partition = random_partition(rng, raw);
    let weights = partition
        .groups()
        .iter()
        .map(|g| rng.uniform_matrix(g.len(), d, -1.0, 1.0))
        .collect();
    FlanModel::linear(
        partition,
        weights,
        rng.uniform_matrix(d, 1, -1.0, 1.0),
        bias.then(|| rng.uniform_matrix(1, 1, -1.0, 1.0)),
        OutputKind::BinaryLogit,
    )
    .expect("valid linear model")
}

pub fn run_all(seed: u64) -> Vec<Check> {
    let mut rng = Rng::stream(seed, 0x5E1F);
    let mut out = Vec::new();

    let worst = (0..20)
        .map(|_| {
            let m = random_model(&mut rng, OutputKind::ClassLogits { classes: 3 });
            let d = random_dataset(&mut rng, &m, 3);
            gradient_error(&m, &d)
        })
        .fold(0.0, f64::max);
    out.push(check("gradient", worst < 1e-6, format!("max relative error {worst:.2e} over 20 models")));

    let mismatches = (0..50)
        .filter(|_| {
            let n = 2 + rng.below(30);
            let scores: Vec<f64> = (0..n).map(|_| rng.below(5) as f64).collect();
            let mut labels: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            auc(&scores, &labels).expect("both classes") != pair_count_auc(&scores, &labels)
        })
        .count();
    out.push(check("auc-oracle", mismatches == 0, format!("{mismatches} of 50 sets differ")));

    let mismatches = (0..50)
        .filter(|_| {
            let k = 1 + rng.below(5);
            let n = k + rng.below(3);
            let cost: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.below(10) as f64).collect()).collect();
            let a = linear_assignment(&cost).expect("assignment");
            a.iter().enumerate().map(|(r, &c)| cost[r][c]).sum::<f64>() != brute_force_assignment(&cost)
        })
        .count();
    out.push(check("assignment", mismatches == 0, format!("{mismatches} of 50 instances suboptimal")));

    let worst = (0..10)
        .map(|_| {
            let m = linear_model(&mut rng, 5, 3, false);
            let x = rng.uniform_matrix(1, 5, -1.0, 1.0);
            let ig = integrated_gradients(&m, &x, &Matrix64::zeros(1, 5), 0, 1 + rng.below(8)).expect("ig");
            ig.completeness_gap.abs()
        })
        .fold(0.0, f64::max);
    out.push(check("ig-completeness", worst < 1e-12, format!("max gap {worst:.2e} on linear models")));

    let worst = (0..10)
        .map(|_| {
            let m = linear_model(&mut rng, 5, 3, false);
            let b = m.encode(&rng.uniform_matrix(1, 5, -1.0, 1.0)).expect("encode");
            (0..m.n_features()).map(|i| m.taylor_residual(&b, i).expect("residual")).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    out.push(check("taylor-residual", worst < 1e-9, format!("max residual {worst:.2e}")));

    let mut identical = true;
    for _ in 0..10 {
        let mut m = random_model(&mut rng, OutputKind::BinaryLogit);
        let i = rng.below(m.n_features());
        if let flan::model::Encoders::Distinct(nets) = m.encoders_mut() {
            for p in nets[i].params_mut() {
                p.as_mut_slice().fill(0.0);
            }
            let x = rng.uniform_matrix(1, m.raw_dim(), -1.0, 1.0);
            let (full, bundle) = m.forward(&x).expect("forward");
            let keep: Vec<usize> = (0..m.n_features()).filter(|&j| j != i).collect();
            let dropped = m.partial_forward(&bundle, &keep).expect("partial");
            identical &= full.as_slice().iter().zip(dropped.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
        }
    }
    out.push(check("zero-contribution", identical, "predictions bit-identical after drop".into()));

    let mut strictly = true;
    for _ in 0..5 {
        let pts = rng.uniform_matrix::<f64>(20, 2, -1.0, 1.0);
        let set = k_medoids(&pts, 3, rng.next_u64()).expect("k-medoids");
        strictly &= set.cost_history.windows(2).all(|w| w[1] < w[0]);
    }
    out.push(check("k-medoids", strictly, "cost strictly decreases per accepted swap".into()));

    let m = random_model(&mut rng, OutputKind::BinaryLogit);
    let bytes = Checkpoint::from_model(&m, "selfcheck", seed).to_bytes().expect("encode");
    let ok = Checkpoint::from_bytes(&bytes).and_then(|c| c.to_model()).is_ok_and(|back| back == m);
    out.push(check("checkpoint", ok, "save/load round trip".into()));

    out
}
