use serde::Serialize;

use super::attribution::top_k_indices;
use crate::error::{Error, Result};
use crate::model::LatentBundle;
use crate::numeric::{Matrix, Scalar};

/// Minimum-cost injective assignment of the rows of a `K x N` cost matrix
/// (`K <= N`) to columns. Returns the column chosen for each row.
///
/// Shortest augmenting paths with dual potentials; rectangular input is
/// handled directly.
pub fn linear_assignment<T: Scalar>(cost: &[Vec<T>]) -> Result<Vec<usize>> {
    let k = cost.len();
    if k == 0 {
        return Ok(Vec::new());
    }
    let n = cost[0].len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(Error::Contract("cost matrix rows differ in length".into()));
    }
    if k > n {
        return Err(Error::Contract(format!("cannot assign {k} rows injectively into {n} columns")));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Numeric("non-finite assignment cost".into()));
    }
    let inf = T::infinity();
    // 1-based: row_of[j] is the row matched to column j, 0 meaning none
    let mut u = vec![T::zero(); k + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=k {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] = u[row_of[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut mapping = vec![0; k];
    for j in 1..=n {
        if row_of[j] != 0 {
            mapping[row_of[j] - 1] = j - 1;
        }
    }
    Ok(mapping)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchObjective {
    /// Most similar pairing (minimum total distance).
    Similar,
    /// Most dissimilar pairing (maximum total distance).
    Dissimilar,
}

/// Pairing of the top source features with target features.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssignmentResult<T> {
    /// Source feature indices, most important first.
    pub source: Vec<usize>,
    /// Target feature matched to each entry of `source`.
    pub mapping: Vec<usize>,
    /// `||z_source - z_target||` per pair.
    pub costs: Vec<T>,
    pub total_cost: T,
}

/// Matches the `k` source features with the largest latent norms to distinct
/// target features, optimising the summed latent distance.
pub fn match_features<T: Scalar>(
    source: &LatentBundle<T>,
    target: &LatentBundle<T>,
    k: usize,
    objective: MatchObjective,
) -> Result<AssignmentResult<T>> {
    if k > source.len() || k > target.len() {
        return Err(Error::Contract(format!(
            "k = {k} exceeds the feature count ({} source, {} target)",
            source.len(),
            target.len()
        )));
    }
    let top = top_k_indices(&source.latent_norms().scores, k);
    let distances: Vec<Vec<T>> = top
        .iter()
        .map(|&i| {
            target
                .features()
                .iter()
                .map(|zt| source.features()[i].distance(zt))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<_>>()?;
    let mapping = match objective {
        MatchObjective::Similar => linear_assignment(&distances)?,
        MatchObjective::Dissimilar => {
            let negated: Vec<Vec<T>> = distances.iter().map(|r| r.iter().map(|&c| -c).collect()).collect();
            linear_assignment(&negated)?
        }
    };
    let costs: Vec<T> = mapping.iter().enumerate().map(|(r, &c)| distances[r][c]).collect();
    let total_cost = costs.iter().fold(T::zero(), |a, &c| a + c);
    Ok(AssignmentResult {
        source: top,
        mapping,
        costs,
        total_cost,
    })
}

/// Convenience for raw latents: builds bundles from `K x D` and `N x D` rows.
pub fn match_latent_rows<T: Scalar>(
    source: &Matrix<T>,
    target: &Matrix<T>,
    k: usize,
    objective: MatchObjective,
) -> Result<AssignmentResult<T>> {
    let rows = |m: &Matrix<T>| LatentBundle::new((0..m.rows()).map(|r| m.row_matrix(r)).collect());
    match_features(&rows(source)?, &rows(target)?, k, objective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
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

    fn total(cost: &[Vec<f64>], mapping: &[usize]) -> f64 {
        mapping.iter().enumerate().fold(0.0, |a, (r, &c)| a + cost[r][c])
    }

    #[test]
    fn two_by_two_by_hand() {
        let cost = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let m = linear_assignment(&cost).unwrap();
        assert_eq!(m, vec![0, 1]);
        assert_eq!(total(&cost, &m), 2.0);
    }

    #[test]
    fn random_rectangular_instances_match_brute_force() {
        let mut rng = Rng::new(6);
        for _ in 0..200 {
            let k = 1 + rng.below(6);
            let n = k + rng.below(3);
            let cost: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.uniform_in(0.0, 10.0)).collect()).collect();
            let m = linear_assignment(&cost).unwrap();
            let mut seen = m.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), k);
            assert_eq!(total(&cost, &m), brute_force(&cost));
        }
    }

    #[test]
    fn identical_bundles_map_to_identity() {
        let mut rng = Rng::new(1);
        let z = rng.uniform_matrix::<f64>(5, 3, -1.0, 1.0);
        let r = match_latent_rows(&z, &z, 5, MatchObjective::Similar).unwrap();
        for (s, t) in r.source.iter().zip(&r.mapping) {
            assert_eq!(s, t);
        }
        assert_eq!(r.total_cost, 0.0);
    }

    #[test]
    fn not_worse_than_identity_prefix() {
        let mut rng = Rng::new(2);
        for _ in 0..50 {
            let a = rng.uniform_matrix::<f64>(6, 2, -1.0, 1.0);
            let b = rng.uniform_matrix::<f64>(6, 2, -1.0, 1.0);
            let r = match_latent_rows(&a, &b, 3, MatchObjective::Similar).unwrap();
            let identity: f64 = r
                .source
                .iter()
                .map(|&i| a.row_matrix(i).distance(&b.row_matrix(i)).unwrap())
                .sum();
            assert!(r.total_cost <= identity + 1e-12);
            let sum: f64 = r.costs.iter().sum();
            assert!((sum - r.total_cost).abs() < 1e-12);
            let far = match_latent_rows(&a, &b, 3, MatchObjective::Dissimilar).unwrap();
            assert!(far.total_cost >= r.total_cost);
        }
    }

    #[test]
    fn oversized_k_rejected() {
        let z = Matrix::<f64>::zeros(3, 2);
        assert!(match_latent_rows(&z, &Matrix::zeros(2, 2), 3, MatchObjective::Similar).is_err());
        assert!(linear_assignment(&[vec![1.0], vec![2.0]]).is_err());
    }
}
