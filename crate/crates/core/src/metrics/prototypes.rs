use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::FlanModel;
use crate::numeric::{euclidean, Matrix, Rng, Scalar};

/// Representation in which example distances are measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    /// Raw model inputs.
    Original,
    /// Aggregate latent `z` before the predictor.
    Latent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    Global,
    Local,
}

/// One row per entry of `rows`, in the requested space.
pub fn represent<T: Scalar>(model: &FlanModel<T>, dataset: &Dataset<T>, rows: &[usize], space: Space) -> Result<Matrix<T>> {
    let dim = match space {
        Space::Original => dataset.raw_dim(),
        Space::Latent => model.latent_dim(),
    };
    let mut data = Vec::with_capacity(rows.len() * dim);
    for &r in rows {
        let x = dataset.sample(r)?;
        match space {
            Space::Original => data.extend_from_slice(x.as_slice()),
            Space::Latent => data.extend_from_slice(model.encode(&x)?.total().as_slice()),
        }
    }
    Matrix::from_vec(rows.len(), dim, data)
}

/// Link-scale output distribution per row.
pub fn output_distributions<T: Scalar>(model: &FlanModel<T>, dataset: &Dataset<T>, rows: &[usize]) -> Result<Matrix<T>> {
    let width = match model.output_kind().classes() {
        0 => model.output_kind().outputs(),
        c => c,
    };
    let mut data = Vec::with_capacity(rows.len() * width);
    for &r in rows {
        let out = model.predict(&dataset.sample(r)?)?;
        data.extend_from_slice(model.probabilities(&out).as_slice());
    }
    Matrix::from_vec(rows.len(), width, data)
}

/// Mean pairwise Euclidean distance between the rows of `points`.
pub fn diversity<T: Scalar>(points: &Matrix<T>) -> Result<T> {
    let k = points.rows();
    if k < 2 {
        return Err(Error::Contract("diversity needs at least two prototypes".into()));
    }
    let mut sum = T::zero();
    for i in 0..k {
        for j in i + 1..k {
            sum = sum + euclidean(points.row(i), points.row(j));
        }
    }
    Ok(sum / T::from_count(k * (k - 1) / 2))
}

/// Index (into `candidates`) of the row of `reps` nearest to `reps[point]`,
/// ties going to the earlier candidate.
fn nearest_of<T: Scalar>(reps: &Matrix<T>, point: usize, candidates: &[usize]) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (c, &m) in candidates.iter().enumerate() {
        let d = euclidean(reps.row(point), reps.row(m));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Mean over corpus rows of the output distance between each row and its
/// nearest prototype (nearest measured in `reps`). `prototypes` index rows
/// of `reps` / `outputs`.
pub fn non_representativeness<T: Scalar>(reps: &Matrix<T>, outputs: &Matrix<T>, prototypes: &[usize]) -> Result<T> {
    let n = reps.rows();
    if n == 0 {
        return Err(Error::Contract("non-representativeness over an empty corpus".into()));
    }
    if outputs.rows() != n {
        return Err(Error::Contract("one output row per corpus row required".into()));
    }
    if prototypes.is_empty() || prototypes.iter().any(|&p| p >= n) {
        return Err(Error::Contract("prototypes must be nonempty corpus rows".into()));
    }
    let mut sum = T::zero();
    for i in 0..n {
        let p = prototypes[nearest_of(reps, i, prototypes)];
        sum = sum + euclidean(outputs.row(i), outputs.row(p));
    }
    Ok(sum / T::from_count(n))
}

/// The `k` rows of `corpus` nearest to `query`, ties by ascending row.
pub fn k_nearest<T: Scalar>(query: &[T], corpus: &Matrix<T>, k: usize) -> Vec<usize> {
    let mut idx: Vec<(T, usize)> = (0..corpus.rows()).map(|r| (euclidean(query, corpus.row(r)), r)).collect();
    idx.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    idx.into_iter().take(k).map(|p| p.1).collect()
}

/// Local scope: mean output distance between a query and each of its `k`
/// nearest corpus rows, averaged over queries. Also returns the local
/// diversity (mean over queries of the neighbors' pairwise spread).
pub fn local_example_metrics<T: Scalar>(
    query_reps: &Matrix<T>,
    query_outputs: &Matrix<T>,
    corpus_reps: &Matrix<T>,
    corpus_outputs: &Matrix<T>,
    k: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    if corpus_reps.rows() == 0 {
        return Err(Error::Contract("local metrics over an empty corpus".into()));
    }
    let k = k.min(corpus_reps.rows());
    let mut nr = Vec::with_capacity(query_reps.rows());
    let mut div = Vec::with_capacity(query_reps.rows());
    for q in 0..query_reps.rows() {
        let near = k_nearest(query_reps.row(q), corpus_reps, k);
        let mean = near
            .iter()
            .fold(T::zero(), |a, &j| a + euclidean(query_outputs.row(q), corpus_outputs.row(j)))
            / T::from_count(near.len());
        nr.push(mean);
        if near.len() >= 2 {
            div.push(diversity(&corpus_reps.gather_rows(&near)?)?);
        }
    }
    Ok((nr, div))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrototypeSet<T> {
    /// Corpus rows chosen as medoids, ascending.
    pub members: Vec<usize>,
    /// Position in `members` of each corpus row's nearest medoid.
    pub assignment: Vec<usize>,
    pub total_cost: T,
    /// Cost after initialisation and after every accepted swap.
    pub cost_history: Vec<T>,
    pub space: Option<Space>,
}

fn medoid_cost<T: Scalar>(dist: &[Vec<T>], medoids: &[usize]) -> T {
    dist.iter().fold(T::zero(), |acc, row| {
        acc + medoids.iter().fold(T::infinity(), |m, &j| m.min(row[j]))
    })
}

/// PAM k-medoids on the rows of `points`: seeded random initial medoids,
/// then for each medoid in turn the best swap with a non-medoid is taken if
/// it strictly lowers the total distance, until a full pass changes nothing.
pub fn k_medoids<T: Scalar>(points: &Matrix<T>, k: usize, seed: u64) -> Result<PrototypeSet<T>> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::Contract(format!("k = {k} must lie in 1..={n}")));
    }
    let dist: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| euclidean(points.row(i), points.row(j))).collect())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    Rng::stream(seed, 0x3ED0).shuffle(&mut order);
    let mut medoids: Vec<usize> = order[..k].to_vec();
    let mut cost = medoid_cost(&dist, &medoids);
    let mut history = vec![cost];
    loop {
        let mut improved = false;
        for slot in 0..k {
            let mut best: Option<(T, usize)> = None;
            for h in 0..n {
                if medoids.contains(&h) {
                    continue;
                }
                let mut trial = medoids.clone();
                trial[slot] = h;
                let c = medoid_cost(&dist, &trial);
                if best.is_none_or(|(bc, _)| c < bc) {
                    best = Some((c, h));
                }
            }
            if let Some((c, h)) = best {
                if c < cost {
                    medoids[slot] = h;
                    cost = c;
                    history.push(c);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    medoids.sort_unstable();
    let assignment = (0..n).map(|i| nearest_of(points, i, &medoids)).collect();
    Ok(PrototypeSet {
        members: medoids,
        assignment,
        total_cost: cost,
        cost_history: history,
        space: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;
    use proptest::prelude::*;

    fn rows(v: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&v.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    /// Two well-separated clusters of ten points each.
    fn two_clusters() -> Matrix<f64> {
        let mut rng = Rng::new(10);
        let mut data = Vec::new();
        for c in [0.0, 20.0] {
            for _ in 0..10 {
                data.push(vec![c + rng.uniform_in(-1.0, 1.0), c + rng.uniform_in(-1.0, 1.0)]);
            }
        }
        Matrix::from_rows(&data).unwrap()
    }

    #[test]
    fn diversity_examples() {
        assert_eq!(diversity(&rows(&[&[1.0, 2.0], &[1.0, 2.0]])).unwrap(), 0.0);
        assert_eq!(diversity(&rows(&[&[0.0, 0.0], &[3.0, 4.0]])).unwrap(), 5.0);
        assert!(diversity(&rows(&[&[0.0]])).is_err());

        let mut rng = Rng::new(12);
        let p = rng.uniform_matrix::<f64>(12, 3, -1.0, 1.0);
        let mut total = 0.0;
        let mut count = 0.0;
        for i in 0..12 {
            for j in 0..12 {
                if i < j {
                    let d: f64 = (0..3).map(|c| (p.get(i, c) - p.get(j, c)).powi(2)).sum();
                    total += d.sqrt();
                    count += 1.0;
                }
            }
        }
        assert!((diversity(&p).unwrap() - total / count).abs() < 1e-12);
    }

    #[test]
    fn non_representativeness_examples() {
        let mut rng = Rng::new(13);
        let reps = rng.uniform_matrix::<f64>(30, 2, -1.0, 1.0);
        let outs = rng.uniform_matrix::<f64>(30, 2, 0.0, 1.0);
        let all: Vec<usize> = (0..30).collect();
        assert_eq!(non_representativeness(&reps, &outs, &all).unwrap(), 0.0);
        let constant = Matrix::filled(30, 2, 0.5);
        assert_eq!(non_representativeness(&reps, &constant, &[3, 7]).unwrap(), 0.0);

        let protos = [1, 8, 20, 25];
        let mut sum = 0.0;
        for i in 0..30 {
            let mut best = (f64::INFINITY, 0);
            for &p in &protos {
                let d = ((reps.get(i, 0) - reps.get(p, 0)).powi(2) + (reps.get(i, 1) - reps.get(p, 1)).powi(2)).sqrt();
                if d < best.0 {
                    best = (d, p);
                }
            }
            let p = best.1;
            sum += ((outs.get(i, 0) - outs.get(p, 0)).powi(2) + (outs.get(i, 1) - outs.get(p, 1)).powi(2)).sqrt();
        }
        assert!((non_representativeness(&reps, &outs, &protos).unwrap() - sum / 30.0).abs() < 1e-12);
        assert!(non_representativeness(&Matrix::<f64>::zeros(0, 2), &Matrix::zeros(0, 2), &[0]).is_err());
    }

    #[test]
    fn every_point_a_medoid() {
        let p = two_clusters();
        let s = k_medoids(&p, 20, 1).unwrap();
        assert_eq!(s.members, (0..20).collect::<Vec<_>>());
        assert_eq!(s.total_cost, 0.0);
        assert!(k_medoids(&p, 21, 1).is_err());
    }

    #[test]
    fn two_clusters_match_exhaustive_search() {
        let p = two_clusters();
        let dist = |i: usize, j: usize| ((p.get(i, 0) - p.get(j, 0)).powi(2) + (p.get(i, 1) - p.get(j, 1)).powi(2)).sqrt();
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..20 {
            for b in a + 1..20 {
                let c: f64 = (0..20).map(|i| dist(i, a).min(dist(i, b))).sum();
                if c < best.0 {
                    best = (c, a, b);
                }
            }
        }
        for seed in 0..5 {
            let s = k_medoids(&p, 2, seed).unwrap();
            assert_eq!(s.members, vec![best.1, best.2]);
            assert!(s.members[0] < 10 && s.members[1] >= 10);
            for w in s.cost_history.windows(2) {
                assert!(w[1] < w[0]);
            }
            for (i, &a) in s.assignment.iter().enumerate() {
                assert_eq!(a, usize::from(i >= 10));
            }
        }
    }

    fn rotate(m: &Matrix<f64>, theta: f64) -> Matrix<f64> {
        let r = rows(&[&[theta.cos(), theta.sin()], &[-theta.sin(), theta.cos()]]);
        m.matmul(&r).unwrap()
    }

    proptest! {
        #[test]
        fn k_medoids_history_strictly_decreases(seed in 0u64..1000, k in 1usize..6) {
            let p = Rng::new(seed).uniform_matrix::<f64>(25, 2, -3.0, 3.0);
            let s = k_medoids(&p, k, seed).unwrap();
            for w in s.cost_history.windows(2) {
                prop_assert!(w[1] < w[0]);
            }
            prop_assert_eq!(s.members.len(), k);
        }

        #[test]
        fn rotation_invariance(seed in 0u64..1000, theta in 0.0f64..6.28) {
            let mut rng = Rng::new(seed);
            let reps = rng.uniform_matrix::<f64>(15, 2, -1.0, 1.0);
            let outs = rng.uniform_matrix::<f64>(15, 3, 0.0, 1.0);
            let turned = rotate(&reps, theta);
            prop_assert!((diversity(&reps).unwrap() - diversity(&turned).unwrap()).abs() < 1e-12);
            let protos = [0, 4, 9];
            let a = non_representativeness(&reps, &outs, &protos).unwrap();
            let b = non_representativeness(&turned, &outs, &protos).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
