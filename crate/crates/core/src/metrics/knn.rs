use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};

use super::MetricError;

/// Points with one label each.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    points: Array2<f64>,
    labels: Vec<String>,
}

impl Embedding {
    pub fn new(points: Array2<f64>, labels: Vec<String>) -> Result<Self, MetricError> {
        if points.nrows() != labels.len() {
            return Err(MetricError::Shape(format!("{} points, {} labels", points.nrows(), labels.len())));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(MetricError::Argument("embedding has non-finite coordinates".into()));
        }
        Ok(Embedding { points, labels })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

pub(crate) fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest rows of `pool` to `q` as `(distance, index)`, ordered by
/// distance then index, skipping `exclude`.
fn nearest(pool: &Array2<f64>, q: ArrayView1<f64>, k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = (0..pool.nrows())
        .filter(|&j| Some(j) != exclude)
        .map(|j| (sq_dist(pool.row(j), q).sqrt(), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    d
}

fn check_k(k: usize, n: usize, what: &str) -> Result<(), MetricError> {
    if k == 0 || k >= n {
        return Err(MetricError::Argument(format!("{what} needs 0 < K < {n}, got {k}")));
    }
    Ok(())
}

/// Median over points of the mean distance to their `neighbors` nearest
/// other points.
pub fn median_bandwidth(real: &Embedding, neighbors: usize) -> Result<f64, MetricError> {
    check_k(neighbors, real.len(), "bandwidth")?;
    let mut means: Vec<f64> = (0..real.len())
        .map(|i| {
            let nn = nearest(&real.points, real.points.row(i), neighbors, Some(i));
            nn.iter().map(|(d, _)| d).sum::<f64>() / neighbors as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let n = means.len();
    Ok(if n % 2 == 1 { means[n / 2] } else { 0.5 * (means[n / 2 - 1] + means[n / 2]) })
}

/// Mean fraction of each point's `k` nearest neighbours (self excluded)
/// that share its label.
pub fn sknn(e: &Embedding, k: usize) -> Result<f64, MetricError> {
    check_k(k, e.len(), "sKNN")?;
    let total: f64 = (0..e.len())
        .map(|i| {
            let nn = nearest(&e.points, e.points.row(i), k, Some(i));
            nn.iter().filter(|(_, j)| e.labels[*j] == e.labels[i]).count() as f64 / k as f64
        })
        .sum();
    Ok(total / e.len() as f64)
}

pub fn delta_sknn(real: &Embedding, gen: &Embedding, k: usize) -> Result<f64, MetricError> {
    Ok((sknn(gen, k)? - sknn(real, k)?).abs())
}

/// Majority label among the `k` nearest real points to `q`; ties go to the
/// smaller summed distance, then to the smaller label.
pub fn knn_classify<'a>(real: &'a Embedding, q: ArrayView1<f64>, k: usize) -> &'a str {
    let nn = nearest(&real.points, q, k, None);
    let mut votes: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for (d, j) in nn {
        let v = votes.entry(real.labels[j].as_str()).or_insert((0, 0.0));
        v.0 += 1;
        v.1 += d;
    }
    let mut best: Option<(&str, (usize, f64))> = None;
    for (label, v) in votes {
        let better = match best {
            None => true,
            Some((_, b)) => v.0 > b.0 || (v.0 == b.0 && v.1 < b.1),
        };
        if better {
            best = Some((label, v));
        }
    }
    best.map(|b| b.0).unwrap_or("")
}

/// Accuracy of a `k`-NN classifier fitted on `real` when labelling `gen`.
pub fn pknn(real: &Embedding, gen: &Embedding, k: usize) -> Result<f64, MetricError> {
    if real.is_empty() || gen.is_empty() {
        return Err(MetricError::Argument("pKNN needs non-empty real and generated sets".into()));
    }
    if k == 0 || k > real.len() {
        return Err(MetricError::Argument(format!("pKNN needs 0 < K <= {}, got {k}", real.len())));
    }
    if real.dim() != gen.dim() {
        return Err(MetricError::Shape(format!("embeddings of dimension {} and {}", real.dim(), gen.dim())));
    }
    let hits = (0..gen.len())
        .filter(|&i| knn_classify(real, gen.points.row(i), k) == gen.labels[i])
        .count();
    Ok(hits as f64 / gen.len() as f64)
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn emb(points: Array2<f64>, labels: &[&str]) -> Embedding {
        Embedding::new(points, labels.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn separated_clusters_score_one() {
        let e = emb(
            array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [10.0, 10.0], [10.1, 10.0], [10.0, 10.1]],
            &["a", "a", "a", "b", "b", "b"],
        );
        assert_eq!(sknn(&e, 2).unwrap(), 1.0);
        assert_eq!(pknn(&e, &e, 1).unwrap(), 1.0);
        assert_eq!(delta_sknn(&e, &e, 2).unwrap(), 0.0);
        assert!(sknn(&e, 6).is_err());
    }

    #[test]
    fn vote_ties_prefer_closer_then_smaller_label() {
        let real = emb(array![[1.0], [-2.0]], &["b", "a"]);
        assert_eq!(knn_classify(&real, array![0.0].view(), 2), "b");
        let real = emb(array![[1.0], [-1.0]], &["b", "a"]);
        assert_eq!(knn_classify(&real, array![0.0].view(), 2), "a");
    }

    #[test]
    fn bandwidth_of_even_count_averages_the_middle() {
        let e = emb(array![[0.0], [1.0], [3.0], [7.0]], &["x"; 4]);
        // nearest-neighbour distances: 1, 1, 2, 4
        assert_eq!(median_bandwidth(&e, 1).unwrap(), 1.5);
    }
}
