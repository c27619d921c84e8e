use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SvmOptions {
    /// Hinge-loss weight `C`.
    pub c: f64,
    pub max_epochs: usize,
    /// Stop once the projected-gradient spread falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            c: 1.0,
            max_epochs: 1000,
            tol: 1e-3,
            seed: 0,
        }
    }
}

/// One-vs-rest linear max-margin classifier on standardised features.
///
/// Each binary problem is the L2-regularised hinge-loss SVM solved by dual
/// coordinate descent; the bias is learned as the weight of a constant feature.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    pub classes: Vec<i64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// One weight vector per class, bias last.
    weights: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn binary_dual_cd(x: &[Vec<f64>], y: &[f64], opts: &SvmOptions, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = x.len();
    let dim = x.first().map_or(0, |r| r.len());
    let mut w = vec![0.0; dim];
    let mut alpha = vec![0.0; n];
    let qii: Vec<f64> = x.iter().map(|r| dot(r, r)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..opts.max_epochs {
        order.shuffle(rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let g = y[i] * dot(&w, &x[i]) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= opts.c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 && qii[i] > 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qii[i]).clamp(0.0, opts.c);
                let delta = (alpha[i] - old) * y[i];
                for (wj, xj) in w.iter_mut().zip(&x[i]) {
                    *wj += delta * xj;
                }
            }
        }
        if pg_max - pg_min < opts.tol {
            break;
        }
    }
    w
}

impl LinearSvm {
    pub fn fit<T: Scalar>(x: &DMatrix<T>, labels: &[i64], opts: &SvmOptions) -> Result<Self> {
        if x.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!("{} rows vs {} labels", x.nrows(), labels.len())));
        }
        let classes: Vec<i64> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if classes.len() < 2 {
            return Err(Error::InvalidParameter("classifier needs at least two classes".into()));
        }
        let (n, d) = x.shape();
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            let col: Vec<f64> = x.column(j).iter().map(|v| v.as_f64()).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean[j] = m;
            scale[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        let mut svm = LinearSvm {
            classes,
            mean,
            scale,
            weights: Vec::new(),
        };
        let rows: Vec<Vec<f64>> = (0..n).map(|i| svm.features(x, i)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let binary: Vec<i64> = if svm.classes.len() == 2 { vec![svm.classes[1]] } else { svm.classes.clone() };
        for &c in &binary {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            svm.weights.push(binary_dual_cd(&rows, &y, opts, &mut rng));
        }
        Ok(svm)
    }

    fn features<T: Scalar>(&self, x: &DMatrix<T>, i: usize) -> Vec<f64> {
        let mut f: Vec<f64> = (0..x.ncols())
            .map(|j| (x[(i, j)].as_f64() - self.mean[j]) / self.scale[j])
            .collect();
        f.push(1.0);
        f
    }

    pub fn predict<T: Scalar>(&self, x: &DMatrix<T>) -> Result<Vec<i64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} features, classifier trained on {}",
                x.ncols(),
                self.mean.len()
            )));
        }
        Ok((0..x.nrows())
            .map(|i| {
                let f = self.features(x, i);
                if self.weights.len() == 1 {
                    let s = dot(&self.weights[0], &f);
                    return if s > 0.0 { self.classes[1] } else { self.classes[0] };
                }
                let mut best = 0;
                let mut bs = f64::NEG_INFINITY;
                for (c, w) in self.weights.iter().enumerate() {
                    let s = dot(w, &f);
                    if s > bs {
                        bs = s;
                        best = c;
                    }
                }
                self.classes[best]
            })
            .collect())
    }
}

/// Mean and standard deviation of held-out accuracy over random splits.
///
/// A split whose training part misses a class is redrawn.
pub fn separability_accuracy<T: Scalar>(
    q: &DMatrix<T>,
    labels: &[i64],
    n_splits: usize,
    train_frac: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    let n = labels.len();
    if q.nrows() != n {
        return Err(Error::DimensionMismatch(format!("{} rows vs {n} labels", q.nrows())));
    }
    let classes: BTreeSet<i64> = labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::InvalidParameter("need at least two classes".into()));
    }
    for &c in &classes {
        let cnt = labels.iter().filter(|&&l| l == c).count();
        if cnt < 4 {
            return Err(Error::InvalidParameter(format!("class {c} has only {cnt} points; need >= 4")));
        }
    }
    if !(train_frac > 0.0 && train_frac < 1.0) || n_splits == 0 {
        return Err(Error::InvalidParameter("need 0 < train_frac < 1 and n_splits >= 1".into()));
    }
    let n_train = ((n as f64) * train_frac).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::InvalidParameter("split leaves an empty train or test set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut accs = Vec::with_capacity(n_splits);
    let mut attempts = 0;
    while accs.len() < n_splits {
        attempts += 1;
        if attempts > 1000 * n_splits {
            return Err(Error::InvalidParameter("could not draw splits covering every class".into()));
        }
        idx.shuffle(&mut rng);
        let (tr, te) = idx.split_at(n_train);
        let tr_labels: Vec<i64> = tr.iter().map(|&i| labels[i]).collect();
        if tr_labels.iter().collect::<BTreeSet<_>>().len() != classes.len() {
            continue;
        }
        let opts = SvmOptions {
            seed: rng.random::<u64>(),
            ..SvmOptions::default()
        };
        let svm = LinearSvm::fit(&q.select_rows(tr), &tr_labels, &opts)?;
        let pred = svm.predict(&q.select_rows(te))?;
        let correct = te.iter().zip(&pred).filter(|(&i, &p)| labels[i] == p).count();
        accs.push(correct as f64 / te.len() as f64);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / accs.len() as f64;
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_data_is_perfect() {
        let x = DMatrix::from_fn(40, 2, |i, j| if j == 0 { (if i < 20 { -2.0 } else { 2.0 }) + (i % 5) as f64 * 0.1 } else { (i % 7) as f64 });
        let y: Vec<i64> = (0..40).map(|i| (i >= 20) as i64).collect();
        let (m, s) = separability_accuracy(&x, &y, 5, 0.75, 1).unwrap();
        assert_eq!((m, s), (1.0, 0.0));
    }

    #[test]
    fn three_class_one_vs_rest() {
        let centers = [(0.0, 0.0), (6.0, 0.0), (0.0, 6.0)];
        let x = DMatrix::from_fn(60, 2, |i, j| {
            let c = centers[i / 20];
            let jitter = ((i * 7 + j * 3) % 5) as f64 * 0.2;
            if j == 0 { c.0 + jitter } else { c.1 + jitter }
        });
        let y: Vec<i64> = (0..60).map(|i| (i / 20) as i64 + 10).collect();
        let svm = LinearSvm::fit(&x, &y, &SvmOptions::default()).unwrap();
        assert_eq!(svm.predict(&x).unwrap(), y);
    }

    #[test]
    fn rejects_tiny_classes() {
        let x = DMatrix::<f64>::zeros(6, 2);
        assert!(separability_accuracy(&x, &[0, 0, 0, 0, 1, 1], 2, 0.75, 0).is_err());
    }
}
