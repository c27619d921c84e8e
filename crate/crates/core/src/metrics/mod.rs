//! Evaluation metrics for embeddings and recovered clusters.

mod svm;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::row_dist2;
use crate::scalar::Scalar;

pub use svm::{separability_accuracy, LinearSvm, SvmOptions};

/// Symmetric unit-weight k-nearest-neighbour graph without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub n_neighbors: usize,
    /// Sorted neighbour lists; `j ∈ adj[i]` iff `i ∈ adj[j]`.
    pub adjacency: Vec<Vec<usize>>,
}

impl KnnGraph {
    /// Brute-force construction; distance ties go to the lower row index.
    pub fn build<T: Scalar>(points: &DMatrix<T>, n_neighbors: usize) -> Result<Self> {
        let p = points.nrows();
        if n_neighbors == 0 || n_neighbors >= p {
            return Err(Error::InvalidParameter(format!(
                "n_neighbors={n_neighbors} must lie in [1, {p})"
            )));
        }
        let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); p];
        let mut cand: Vec<(T, usize)> = Vec::with_capacity(p);
        for i in 0..p {
            cand.clear();
            cand.extend((0..p).filter(|&j| j != i).map(|j| (row_dist2(points, i, points, j), j)));
            cand.select_nth_unstable_by(n_neighbors - 1, |a, b| {
                a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1))
            });
            for &(_, j) in &cand[..n_neighbors] {
                sets[i].insert(j);
                sets[j].insert(i);
            }
        }
        Ok(KnnGraph {
            n_neighbors,
            adjacency: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch(format!("{what}: {a} vs {b}")));
    }
    Ok(())
}

/// Label-mixing score of a neighbourhood graph, in `[0, 1]`.
///
/// For each class `c` with indicator `z_c` the score is
/// `z_cᵀLz_c / z_cᵀDz_c` (edges leaving the class over the class volume);
/// classes are averaged with weights proportional to their size.
pub fn laplacian_score<T: Scalar>(points: &DMatrix<T>, labels: &[i64], n_neighbors: usize) -> Result<f64> {
    check_len(points.nrows(), labels.len(), "embedding rows vs labels")?;
    let classes: BTreeSet<i64> = labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::InvalidParameter("laplacian score needs at least two labels".into()));
    }
    let g = KnnGraph::build(points, n_neighbors)?;
    Ok(laplacian_score_graph(&g, labels))
}

/// [`laplacian_score`] on a prebuilt graph.
pub fn laplacian_score_graph(g: &KnnGraph, labels: &[i64]) -> f64 {
    let mut cut: BTreeMap<i64, usize> = BTreeMap::new();
    let mut vol: BTreeMap<i64, usize> = BTreeMap::new();
    let mut size: BTreeMap<i64, usize> = BTreeMap::new();
    for (i, nb) in g.adjacency.iter().enumerate() {
        let c = labels[i];
        *size.entry(c).or_default() += 1;
        *vol.entry(c).or_default() += nb.len();
        *cut.entry(c).or_default() += nb.iter().filter(|&&j| labels[j] != c).count();
    }
    let p = labels.len() as f64;
    size.iter()
        .map(|(c, &sz)| {
            let v = vol[c];
            let s = if v == 0 { 0.0 } else { cut[c] as f64 / v as f64 };
            s * sz as f64 / p
        })
        .sum()
}

/// Mean over ground-truth classes of the best Jaccard index against any stored cluster.
pub fn mean_jaccard(clusters: &[Vec<usize>], labels: &[i64]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("ground truth is empty".into()));
    }
    let mut classes: BTreeMap<i64, BTreeSet<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().insert(i);
    }
    let sets: Vec<BTreeSet<usize>> = clusters.iter().map(|c| c.iter().copied().collect()).collect();
    if let Some(bad) = sets.iter().flatten().find(|&&r| r >= labels.len()) {
        return Err(Error::InvalidParameter(format!("cluster row {bad} out of range")));
    }
    let total: f64 = classes
        .values()
        .map(|a| {
            sets.iter()
                .map(|b| {
                    let inter = a.intersection(b).count();
                    let union = a.len() + b.len() - inter;
                    if union == 0 { 0.0 } else { inter as f64 / union as f64 }
                })
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / classes.len() as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalised mutual information with arithmetic-mean normalisation.
///
/// Two constant partitions score 1; exactly one constant partition scores 0.
pub fn nmi(a: &[i64], b: &[i64]) -> Result<f64> {
    check_len(a.len(), b.len(), "partition lengths")?;
    if a.is_empty() {
        return Err(Error::InvalidParameter("partitions are empty".into()));
    }
    let n = a.len() as f64;
    let mut ca: HashMap<i64, usize> = HashMap::new();
    let mut cb: HashMap<i64, usize> = HashMap::new();
    let mut joint: HashMap<(i64, i64), usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        *joint.entry((x, y)).or_default() += 1;
    }
    if ca.len() == 1 && cb.len() == 1 {
        return Ok(1.0);
    }
    let ha = entropy(ca.values().copied(), n);
    let hb = entropy(cb.values().copied(), n);
    let mut keys: Vec<_> = joint.iter().collect();
    keys.sort_unstable();
    let mi: f64 = keys
        .into_iter()
        .map(|(&(x, y), &c)| {
            let pxy = c as f64 / n;
            pxy * (pxy * n * n / (ca[&x] as f64 * cb[&y] as f64)).ln()
        })
        .sum();
    let denom = 0.5 * (ha + hb);
    if denom <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi.max(0.0) / denom).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_graph_is_symmetric() {
        let pts = DMatrix::from_fn(12, 2, |i, j| ((i * 5 + j * 3) % 7) as f64);
        let g = KnnGraph::build(&pts, 3).unwrap();
        for (i, nb) in g.adjacency.iter().enumerate() {
            assert!(nb.len() >= 3);
            assert!(!nb.contains(&i));
            for &j in nb {
                assert!(g.adjacency[j].contains(&i));
            }
        }
        assert!(KnnGraph::build(&pts, 12).is_err());
    }

    #[test]
    fn separated_blobs_score_zero() {
        let pts = DMatrix::from_fn(20, 2, |i, j| if i < 10 { (i + j) as f64 * 0.01 } else { 100.0 + i as f64 * 0.01 });
        let labels: Vec<i64> = (0..20).map(|i| (i >= 10) as i64).collect();
        assert_eq!(laplacian_score(&pts, &labels, 3).unwrap(), 0.0);
        let renamed: Vec<i64> = labels.iter().map(|&l| 7 - 3 * l).collect();
        assert_eq!(laplacian_score(&pts, &renamed, 3).unwrap(), 0.0);
    }

    #[test]
    fn jaccard_cases() {
        let labels = vec![0, 0, 1, 1, 2, 2];
        let exact = vec![vec![0, 1], vec![2, 3], vec![4, 5]];
        assert_eq!(mean_jaccard(&exact, &labels).unwrap(), 1.0);
        assert_eq!(mean_jaccard(&[], &labels).unwrap(), 0.0);
        assert!(mean_jaccard(&[], &[]).is_err());
    }

    #[test]
    fn nmi_conventions() {
        let a = vec![0, 0, 1, 1, 2, 2];
        let b = vec![5, 5, 3, 3, 9, 9];
        assert!((nmi(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(nmi(&a, &[1; 6]).unwrap(), 0.0);
        assert_eq!(nmi(&[4; 6], &[1; 6]).unwrap(), 1.0);
        assert!(nmi(&a, &b[..5]).is_err());
    }
}
