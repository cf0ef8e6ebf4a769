use serde::Serialize;

use super::assignment::{match_features, AssignmentResult, MatchObjective};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{FlanModel, LatentBundle};
use crate::numeric::{euclidean, Matrix, Scalar};

/// Encoded corpus: per-feature latents for each row id.
#[derive(Clone, Debug)]
pub struct LatentCorpus<T> {
    pub ids: Vec<usize>,
    pub bundles: Vec<LatentBundle<T>>,
}

impl<T: Scalar> LatentCorpus<T> {
    pub fn encode(model: &FlanModel<T>, dataset: &Dataset<T>, rows: &[usize]) -> Result<Self> {
        let bundles = rows
            .iter()
            .map(|&i| model.encode(&dataset.sample(i)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ids: rows.to_vec(),
            bundles,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Aggregate latents `z`, one per corpus item.
    pub fn totals(&self) -> Vec<Matrix<T>> {
        self.bundles.iter().map(|b| b.total().clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Neighbor<T> {
    pub id: usize,
    pub distance: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExampleExplanation<T> {
    pub query: Option<usize>,
    /// Nearest corpus items, non-decreasing distance.
    pub neighbors: Vec<Neighbor<T>>,
    pub farthest: Neighbor<T>,
    /// Most-similar feature matching against each neighbor.
    pub similar_matches: Vec<AssignmentResult<T>>,
    /// Most-dissimilar feature matching against the farthest item.
    pub dissimilar_match: Option<AssignmentResult<T>>,
}

/// The `k` nearest and the single farthest corpus items by Euclidean
/// distance on the aggregate latent; ties go to the smaller id. `k` is
/// clamped to the corpus size.
pub fn nearest_examples<T: Scalar>(
    query_z: &Matrix<T>,
    corpus_z: &[Matrix<T>],
    ids: &[usize],
    k: usize,
) -> Result<(Vec<Neighbor<T>>, Neighbor<T>)> {
    if corpus_z.is_empty() {
        return Err(Error::Contract("example corpus is empty".into()));
    }
    if ids.len() != corpus_z.len() {
        return Err(Error::Contract("one id per corpus latent required".into()));
    }
    let mut all: Vec<Neighbor<T>> = corpus_z
        .iter()
        .zip(ids)
        .map(|(z, &id)| {
            if z.shape() != query_z.shape() {
                return Err(Error::Shape {
                    op: "nearest_examples",
                    left: query_z.shape(),
                    right: z.shape(),
                });
            }
            Ok(Neighbor {
                id,
                distance: euclidean(query_z.as_slice(), z.as_slice()),
            })
        })
        .collect::<Result<_>>()?;
    all.sort_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap_or(std::cmp::Ordering::Equal).then(a.id.cmp(&b.id)));
    let max = all.iter().fold(T::neg_infinity(), |m, n| m.max(n.distance));
    let farthest = all
        .iter()
        .filter(|n| n.distance == max)
        .min_by_key(|n| n.id)
        .cloned()
        .expect("nonempty corpus");
    all.truncate(k.min(all.len()));
    Ok((all, farthest))
}

/// Nearest/farthest examples for `x` plus feature matchings of its
/// `top_features` most important features.
pub fn explain_examples<T: Scalar>(
    model: &FlanModel<T>,
    x: &Matrix<T>,
    query: Option<usize>,
    corpus: &LatentCorpus<T>,
    k: usize,
    top_features: usize,
) -> Result<ExampleExplanation<T>> {
    let bundle = model.encode(x)?;
    let (neighbors, farthest) = nearest_examples(bundle.total(), &corpus.totals(), &corpus.ids, k)?;
    let top = top_features.min(bundle.len());
    let position = |id: usize| corpus.ids.iter().position(|&c| c == id).expect("id from corpus");
    let similar_matches = neighbors
        .iter()
        .map(|n| match_features(&bundle, &corpus.bundles[position(n.id)], top, MatchObjective::Similar))
        .collect::<Result<_>>()?;
    let dissimilar_match = Some(match_features(
        &bundle,
        &corpus.bundles[position(farthest.id)],
        top,
        MatchObjective::Dissimilar,
    )?);
    Ok(ExampleExplanation {
        query,
        neighbors,
        farthest,
        similar_matches,
        dissimilar_match,
    })
}
