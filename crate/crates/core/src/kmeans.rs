use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::row_dist2;
use crate::scalar::Scalar;

pub(crate) struct KMeans<T: Scalar> {
    pub labels: Vec<usize>,
    pub inertia: T,
}

/// k-means++ seeding over the rows of `x`.
pub(crate) fn plus_plus<T: Scalar>(x: &DMatrix<T>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<T> {
    let n = x.nrows();
    let mut centers = DMatrix::zeros(k, x.ncols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| row_dist2(x, i, &centers, 0).as_f64()).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).copy_from(&x.row(pick));
        for (i, di) in d2.iter_mut().enumerate() {
            *di = di.min(row_dist2(x, i, &centers, c).as_f64());
        }
    }
    centers
}

fn assign<T: Scalar>(x: &DMatrix<T>, centers: &DMatrix<T>) -> (Vec<usize>, T) {
    let mut inertia = T::zero();
    let labels = (0..x.nrows())
        .map(|i| {
            let mut best = 0;
            let mut bd = row_dist2(x, i, centers, 0);
            for c in 1..centers.nrows() {
                let dc = row_dist2(x, i, centers, c);
                if dc < bd {
                    best = c;
                    bd = dc;
                }
            }
            inertia += bd;
            best
        })
        .collect();
    (labels, inertia)
}

/// Lloyd iterations from `n_init` k-means++ seedings; keeps the lowest inertia.
pub(crate) fn kmeans<T: Scalar>(x: &DMatrix<T>, k: usize, n_init: usize, seed: u64) -> KMeans<T> {
    let k = k.clamp(1, x.nrows());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans<T>> = None;
    for _ in 0..n_init.max(1) {
        let mut centers = plus_plus(x, k, &mut rng);
        let (mut labels, mut inertia) = assign(x, &centers);
        for _ in 0..300 {
            let mut sums = DMatrix::<T>::zeros(k, x.ncols());
            let mut counts = vec![0usize; k];
            for (i, &l) in labels.iter().enumerate() {
                counts[l] += 1;
                let mut row = sums.row_mut(l);
                row += x.row(i);
            }
            for c in 0..k {
                if counts[c] > 0 {
                    let row = sums.row(c) / T::from_count(counts[c]);
                    centers.row_mut(c).copy_from(&row);
                }
            }
            let (nl, ni) = assign(x, &centers);
            let done = nl == labels;
            labels = nl;
            inertia = ni;
            if done {
                break;
            }
        }
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KMeans { labels, inertia });
        }
    }
    best.expect("at least one initialisation")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs() {
        let x = DMatrix::from_fn(20, 2, |i, j| if i < 10 { (i + j) as f64 * 0.01 } else { 5.0 + (i * j) as f64 * 0.01 });
        let km = kmeans(&x, 2, 3, 0);
        assert!(km.labels[..10].iter().all(|&l| l == km.labels[0]));
        assert!(km.labels[10..].iter().all(|&l| l == km.labels[10]));
        assert_ne!(km.labels[0], km.labels[10]);
    }
}
