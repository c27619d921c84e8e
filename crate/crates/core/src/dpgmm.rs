//! Truncated variational Dirichlet-process Gaussian mixture.
//!
//! Stick-breaking weights `π_t = v_t Π_{j<t}(1 − v_j)` with `v_t ~ Beta(1, γ)`
//! and `v_T = 1`; component parameters carry a Normal–Wishart prior. Updates
//! are exact coordinate ascent on the evidence lower bound, so the bound is
//! non-decreasing across iterations.

use std::f64::consts::PI;

use log::debug;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::dataset::EmbeddingSet;
use crate::error::{Error, Result};
use crate::kmeans::plus_plus;
use crate::linalg::{cholesky_sym, row_dist2};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct DpgmmConfig<T: Scalar> {
    /// Truncation level `T`.
    pub max_components: usize,
    /// Stick-breaking concentration `γ`.
    pub concentration: T,
    /// Prior mean; defaults to the data mean.
    pub mean_prior: Option<DVector<T>>,
    /// Prior precision scaling of the mean.
    pub mean_precision: T,
    /// Wishart degrees of freedom; defaults to the data dimension.
    pub wishart_dof: Option<T>,
    /// Wishart scale `W₀`; defaults to `I / mean variance`.
    pub wishart_scale: Option<DMatrix<T>>,
    pub max_vi_iter: usize,
    /// Stop once the bound changes by less than this between sweeps.
    pub elbo_tol: T,
    pub seed: u64,
}

impl<T: Scalar> Default for DpgmmConfig<T> {
    fn default() -> Self {
        DpgmmConfig {
            max_components: 10,
            concentration: T::one(),
            mean_prior: None,
            mean_precision: T::one(),
            wishart_dof: None,
            wishart_scale: None,
            max_vi_iter: 200,
            elbo_tol: T::lit(1e-4),
            seed: 0,
        }
    }
}

impl<T: Scalar> DpgmmConfig<T> {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.max_components < 2 {
            return Err(Error::InvalidParameter("max_components must be >= 2".into()));
        }
        if !(self.concentration > T::zero()) || !(self.mean_precision > T::zero()) {
            return Err(Error::InvalidParameter("concentration and mean_precision must be > 0".into()));
        }
        if let Some(dof) = self.wishart_dof {
            if !(dof > T::from_count(dim) - T::one()) {
                return Err(Error::InvalidParameter(format!("wishart_dof={dof} must exceed dim-1={}", dim - 1)));
            }
        }
        if let Some(m) = &self.mean_prior {
            if m.len() != dim {
                return Err(Error::DimensionMismatch(format!("mean prior has length {}, data dim {dim}", m.len())));
            }
        }
        if let Some(w) = &self.wishart_scale {
            if w.shape() != (dim, dim) {
                return Err(Error::DimensionMismatch(format!("wishart scale is {:?}, data dim {dim}", w.shape())));
            }
            if (w - w.transpose()).amax() > T::lit(1e-10) * w.amax().max(T::one()) {
                return Err(Error::InvalidParameter("wishart scale must be symmetric".into()));
            }
            cholesky_sym(w, "wishart scale")?;
        }
        Ok(())
    }
}

/// Fitted mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel<T: Scalar> {
    /// Expected stick-breaking weights, normalised.
    pub weights: Vec<T>,
    pub means: Vec<DVector<T>>,
    /// Expected covariances `W_t⁻¹ / ν_t`.
    pub covariances: Vec<DMatrix<T>>,
    /// Argmax responsibility per row (lowest component on ties).
    pub assignments: Vec<usize>,
    /// Components with at least one assigned row.
    pub active_components: Vec<usize>,
    pub responsibilities: DMatrix<T>,
    /// Lower bound after every full update cycle.
    pub elbo_trace: Vec<T>,
    pub converged: bool,
}

impl<T: Scalar> ClusterModel<T> {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// Number of rows assigned to each component.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_components()];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }

    /// Row indices (into the fitted matrix) assigned to component `l`.
    pub fn members(&self, l: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == l)
            .map(|(i, _)| i)
            .collect()
    }
}

/// An acceptable cluster as used downstream for distance computations.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSummary<T: Scalar> {
    pub component: usize,
    pub mean: DVector<T>,
    /// Covariance with a `1e-6·tr(C)/k` ridge.
    pub covariance: DMatrix<T>,
    pub size: usize,
}

struct Posterior<T: Scalar> {
    a: Vec<T>,
    b: Vec<T>,
    beta: Vec<T>,
    m: Vec<DVector<T>>,
    nu: Vec<T>,
    w_inv_chol: Vec<Cholesky<T, Dyn>>,
    w_inv: Vec<DMatrix<T>>,
}

fn psi<T: Scalar>(x: T) -> T {
    T::lit(digamma(x.as_f64()))
}

fn lgamma<T: Scalar>(x: T) -> T {
    T::lit(ln_gamma(x.as_f64()))
}

fn log_det_chol<T: Scalar>(c: &Cholesky<T, Dyn>) -> T {
    let l = c.l_dirty();
    (0..l.nrows()).fold(T::zero(), |acc, i| acc + l[(i, i)].ln()) * T::lit(2.0)
}

/// `E[ln|Λ|]` under Wishart(W, ν) with `ln|W| = −ln|W⁻¹|`.
fn expected_log_det<T: Scalar>(nu: T, ln_det_w_inv: T, dim: usize) -> T {
    let mut s = T::from_count(dim) * T::lit(2f64.ln()) - ln_det_w_inv;
    for i in 1..=dim {
        s += psi((nu + T::one() - T::from_count(i)) * T::lit(0.5));
    }
    s
}

/// `ln B(W, ν)` of the Wishart normaliser.
fn ln_wishart_b<T: Scalar>(nu: T, ln_det_w: T, dim: usize) -> T {
    let df = T::from_count(dim);
    let mut s = -nu * T::lit(0.5) * ln_det_w
        - nu * df * T::lit(0.5) * T::lit(2f64.ln())
        - df * (df - T::one()) * T::lit(0.25) * T::lit(PI.ln());
    for i in 1..=dim {
        s -= lgamma((nu + T::one() - T::from_count(i)) * T::lit(0.5));
    }
    s
}

struct Prior<T: Scalar> {
    gamma: T,
    beta0: T,
    m0: DVector<T>,
    nu0: T,
    w0_inv: DMatrix<T>,
    ln_det_w0: T,
}

/// Rows sorted lexicographically; used so initialisation ignores input order.
fn canonical_order<T: Scalar>(x: &DMatrix<T>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    idx.sort_by(|&i, &j| {
        for c in 0..x.ncols() {
            match x[(i, c)].partial_cmp(&x[(j, c)]) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(o) => return o,
            }
        }
        std::cmp::Ordering::Equal
    });
    idx
}

/// Hard k-means++ / Lloyd responsibilities computed in canonical row order.
fn init_responsibilities<T: Scalar>(x: &DMatrix<T>, t: usize, seed: u64) -> DMatrix<T> {
    let order = canonical_order(x);
    let sorted = x.select_rows(&order);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = t.min(x.nrows());
    let mut centers = plus_plus(&sorted, k, &mut rng);
    let nearest = |centers: &DMatrix<T>, i: usize| {
        let mut best = 0;
        let mut bd = row_dist2(x, i, centers, 0);
        for c in 1..centers.nrows() {
            let d = row_dist2(x, i, centers, c);
            if d < bd {
                best = c;
                bd = d;
            }
        }
        best
    };
    let mut labels: Vec<usize> = (0..x.nrows()).map(|i| nearest(&centers, i)).collect();
    for _ in 0..100 {
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
        let next: Vec<usize> = (0..x.nrows()).map(|i| nearest(&centers, i)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let mut r = DMatrix::zeros(x.nrows(), t);
    for (i, &l) in labels.iter().enumerate() {
        r[(i, l)] = T::one();
    }
    r
}

fn m_step<T: Scalar>(x: &DMatrix<T>, r: &DMatrix<T>, pr: &Prior<T>) -> Result<Posterior<T>> {
    let t = r.ncols();
    let counts: Vec<T> = r.column_iter().map(|c| c.sum()).collect();
    let mut a = Vec::with_capacity(t);
    let mut b = Vec::with_capacity(t);
    let mut tail = counts.iter().fold(T::zero(), |s, &c| s + c);
    for &nk in &counts {
        tail -= nk;
        a.push(T::one() + nk);
        b.push(pr.gamma + tail.max(T::zero()));
    }
    let mut beta = Vec::with_capacity(t);
    let mut m = Vec::with_capacity(t);
    let mut nu = Vec::with_capacity(t);
    let mut w_inv = Vec::with_capacity(t);
    let mut w_inv_chol = Vec::with_capacity(t);
    for k in 0..t {
        let rk = r.column(k);
        let sx = x.transpose() * rk;
        // Σ r xxᵀ
        let mut sxx = DMatrix::<T>::zeros(x.ncols(), x.ncols());
        for (i, row) in x.row_iter().enumerate() {
            let w = rk[i];
            if w != T::zero() {
                sxx += row.transpose() * row * w;
            }
        }
        let bk = pr.beta0 + counts[k];
        let mk = (&pr.m0 * pr.beta0 + sx) / bk;
        let wi = &pr.w0_inv + sxx + &pr.m0 * pr.m0.transpose() * pr.beta0 - &mk * mk.transpose() * bk;
        let wi = (&wi + wi.transpose()) * T::lit(0.5);
        let chol = cholesky_sym(&wi, "posterior Wishart scale")?;
        beta.push(bk);
        m.push(mk);
        nu.push(pr.nu0 + counts[k]);
        w_inv.push(wi);
        w_inv_chol.push(chol);
    }
    Ok(Posterior {
        a,
        b,
        beta,
        m,
        nu,
        w_inv_chol,
        w_inv,
    })
}

/// `E[ln π_t]` under the stick-breaking posterior.
fn expected_log_pi<T: Scalar>(post: &Posterior<T>) -> Vec<T> {
    let t = post.a.len();
    let mut out = Vec::with_capacity(t);
    let mut acc = T::zero();
    for k in 0..t {
        if k + 1 == t {
            out.push(acc);
        } else {
            let s = psi(post.a[k] + post.b[k]);
            out.push(acc + psi(post.a[k]) - s);
            acc += psi(post.b[k]) - s;
        }
    }
    out
}

/// Per-point per-component `E[ln p(xᵢ | θ_t)]` matrix.
fn expected_log_lik<T: Scalar>(x: &DMatrix<T>, post: &Posterior<T>) -> DMatrix<T> {
    let (n, dim) = x.shape();
    let t = post.a.len();
    let df = T::from_count(dim);
    let ln2pi = T::lit((2.0 * PI).ln());
    let mut out = DMatrix::zeros(n, t);
    for k in 0..t {
        let e_ln_det = expected_log_det(post.nu[k], log_det_chol(&post.w_inv_chol[k]), dim);
        let l = post.w_inv_chol[k].l();
        let diff = DMatrix::from_fn(dim, n, |c, i| x[(i, c)] - post.m[k][c]);
        // W = (W⁻¹)⁻¹ = L⁻ᵀL⁻¹, so (x−m)ᵀW(x−m) = ‖L⁻¹(x−m)‖².
        let sol = l
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has positive diagonal");
        for i in 0..n {
            let maha = sol.column(i).norm_squared();
            out[(i, k)] = T::lit(0.5) * (e_ln_det - df / post.beta[k] - post.nu[k] * maha - df * ln2pi);
        }
    }
    out
}

fn responsibilities<T: Scalar>(log_rho: &DMatrix<T>) -> DMatrix<T> {
    let mut r = log_rho.clone();
    for mut row in r.row_iter_mut() {
        let mx = row.max();
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            s += *v;
        }
        row /= s;
    }
    r
}

fn elbo<T: Scalar>(x: &DMatrix<T>, r: &DMatrix<T>, post: &Posterior<T>, pr: &Prior<T>) -> T {
    let dim = x.ncols();
    let df = T::from_count(dim);
    let t = r.ncols();
    let half = T::lit(0.5);
    let ln2pi = T::lit((2.0 * PI).ln());
    let e_ln_pi = expected_log_pi(post);
    let ll = expected_log_lik(x, post);

    let mut total = T::zero();
    for i in 0..r.nrows() {
        for k in 0..t {
            let rik = r[(i, k)];
            if rik > T::zero() {
                total += rik * (ll[(i, k)] + e_ln_pi[k] - rik.ln());
            }
        }
    }
    for k in 0..t.saturating_sub(1) {
        let (a, b) = (post.a[k], post.b[k]);
        let s = psi(a + b);
        let e_ln_v = psi(a) - s;
        let e_ln_1v = psi(b) - s;
        // E[ln p(v)] − E[ln q(v)]
        total += pr.gamma.ln() + (pr.gamma - T::one()) * e_ln_1v;
        total -= lgamma(a + b) - lgamma(a) - lgamma(b) + (a - T::one()) * e_ln_v + (b - T::one()) * e_ln_1v;
    }
    let ln_b0 = ln_wishart_b(pr.nu0, pr.ln_det_w0, dim);
    for k in 0..t {
        let chol = &post.w_inv_chol[k];
        let ln_det_w = -log_det_chol(chol);
        let e_ln_det = expected_log_det(post.nu[k], -ln_det_w, dim);
        let dm = &post.m[k] - &pr.m0;
        let l = chol.l();
        let quad = l
            .solve_lower_triangular(&dm)
            .expect("Cholesky factor has positive diagonal")
            .norm_squared();
        let tr = chol.solve(&pr.w0_inv).trace();
        // E[ln p(μ, Λ)]
        total += half * (df * (pr.beta0.ln() - ln2pi) + e_ln_det - df * pr.beta0 / post.beta[k] - pr.beta0 * post.nu[k] * quad)
            + ln_b0
            + (pr.nu0 - df - T::one()) * half * e_ln_det
            - half * post.nu[k] * tr;
        // −E[ln q(μ, Λ)]
        let ln_bk = ln_wishart_b(post.nu[k], ln_det_w, dim);
        let entropy = -ln_bk - (post.nu[k] - df - T::one()) * half * e_ln_det + post.nu[k] * df * half;
        total -= half * e_ln_det + df * half * (post.beta[k].ln() - ln2pi) - df * half - entropy;
    }
    total
}

/// Fits the mixture to the rows of `q`.
pub fn fit<T: Scalar>(q: &EmbeddingSet<T>, cfg: &DpgmmConfig<T>) -> Result<ClusterModel<T>> {
    fit_matrix(q.coords(), cfg)
}

/// [`fit`] on a bare matrix (one sample per row).
pub fn fit_matrix<T: Scalar>(x_raw: &DMatrix<T>, cfg: &DpgmmConfig<T>) -> Result<ClusterModel<T>> {
    let (n, dim) = x_raw.shape();
    if n < 2 || dim == 0 {
        return Err(Error::InvalidDataset(format!("mixture needs at least 2 rows, got {n}x{dim}")));
    }
    if x_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mixture input".into()));
    }
    cfg.validate(dim)?;
    let t = cfg.max_components;

    let (x, centering) = crate::dataset::center(x_raw);
    let mean_var = x.column_iter().fold(T::zero(), |s, c| s + c.norm_squared()) / T::from_count(n * dim);
    let mean_var = if mean_var > T::zero() { mean_var } else { T::one() };
    let w0_inv = match &cfg.wishart_scale {
        Some(w) => cholesky_sym(w, "wishart scale")?
            .inverse(),
        None => DMatrix::identity(dim, dim) * mean_var,
    };
    let w0_inv = (&w0_inv + w0_inv.transpose()) * T::lit(0.5);
    let m0 = match &cfg.mean_prior {
        Some(m) => m - &centering.means,
        None => DVector::zeros(dim),
    };
    let ln_det_w0 = -log_det_chol(&cholesky_sym(&w0_inv, "wishart scale")?);
    let pr = Prior {
        gamma: cfg.concentration,
        beta0: cfg.mean_precision,
        m0,
        nu0: cfg.wishart_dof.unwrap_or_else(|| T::from_count(dim)),
        w0_inv,
        ln_det_w0,
    };

    let mut r = init_responsibilities(&x, t, cfg.seed);
    let mut post = m_step(&x, &r, &pr)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for it in 0..cfg.max_vi_iter.max(1) {
        let e_ln_pi = expected_log_pi(&post);
        let mut log_rho = expected_log_lik(&x, &post);
        for mut row in log_rho.row_iter_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v += e_ln_pi[k];
            }
        }
        r = responsibilities(&log_rho);
        post = m_step(&x, &r, &pr)?;
        let l = elbo(&x, &r, &post, &pr);
        if !l.is_finite() {
            return Err(Error::NonFinite(format!("lower bound at iteration {it}")));
        }
        let done = trace.last().is_some_and(|&prev: &T| (l - prev).abs() < cfg.elbo_tol);
        trace.push(l);
        if done {
            converged = true;
            break;
        }
    }
    debug!("dpgmm: {} iterations, elbo {:?}", trace.len(), trace.last());

    let mut weights = Vec::with_capacity(t);
    let mut rest = T::one();
    for k in 0..t {
        let ev = if k + 1 == t { T::one() } else { post.a[k] / (post.a[k] + post.b[k]) };
        weights.push(rest * ev);
        rest *= T::one() - ev;
    }
    let wsum = weights.iter().fold(T::zero(), |s, &w| s + w);
    for w in &mut weights {
        *w /= wsum;
    }
    let means = post.m.iter().map(|m| m + &centering.means).collect();
    let covariances = post
        .w_inv
        .iter()
        .zip(&post.nu)
        .map(|(wi, &nu)| wi / nu)
        .collect();
    let assignments: Vec<usize> = r
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for k in 1..t {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    let mut active: Vec<usize> = assignments.clone();
    active.sort_unstable();
    active.dedup();
    Ok(ClusterModel {
        weights,
        means,
        covariances,
        assignments,
        active_components: active,
        responsibilities: r,
        elbo_trace: trace,
        converged,
    })
}

/// Clusters with at least `min_size` assigned rows, ordered by component index.
pub fn posterior_params<T: Scalar>(model: &ClusterModel<T>, min_size: usize) -> Result<Vec<ClusterSummary<T>>> {
    let sizes = model.sizes();
    let out: Vec<ClusterSummary<T>> = (0..model.n_components())
        .filter(|&l| sizes[l] >= min_size && sizes[l] > 0)
        .map(|l| {
            let c = &model.covariances[l];
            let dim = c.nrows();
            let ridge = T::lit(1e-6) * c.trace() / T::from_count(dim);
            ClusterSummary {
                component: l,
                mean: model.means[l].clone(),
                covariance: c + DMatrix::identity(dim, dim) * ridge,
                size: sizes[l],
            }
        })
        .collect();
    if out.is_empty() {
        return Err(Error::NoAcceptableCluster { min_size });
    }
    Ok(out)
}
