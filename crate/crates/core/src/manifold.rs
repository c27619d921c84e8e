//! Steepest descent on the Stiefel manifold `St(k, d)`.
//!
//! Tangent vectors are obtained by projecting the Euclidean gradient,
//! `ξ = G − V·sym(VᵀG)`, and steps are mapped back onto the manifold with a
//! sign-fixed thin QR retraction. Step sizes follow Armijo backtracking.

use log::{debug, warn};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dataset::ProjectionMatrix;
use crate::error::{Error, Result};
use crate::linalg::{qr_positive, sym};
use crate::scalar::Scalar;

/// A smooth function on `d × k` matrices with its Euclidean gradient.
///
/// Implementations must be safe to evaluate concurrently on distinct inputs.
pub trait Objective<T: Scalar>: Sync {
    fn cost(&self, v: &DMatrix<T>) -> Result<T>;

    fn gradient(&self, v: &DMatrix<T>) -> Result<DMatrix<T>>;

    fn cost_and_gradient(&self, v: &DMatrix<T>) -> Result<(T, DMatrix<T>)> {
        Ok((self.cost(v)?, self.gradient(v)?))
    }
}

/// Adapts a pair of closures to [`Objective`].
pub struct FnObjective<C, G> {
    pub cost: C,
    pub grad: G,
}

impl<T, C, G> Objective<T> for FnObjective<C, G>
where
    T: Scalar,
    C: Fn(&DMatrix<T>) -> T + Sync,
    G: Fn(&DMatrix<T>) -> DMatrix<T> + Sync,
{
    fn cost(&self, v: &DMatrix<T>) -> Result<T> {
        Ok((self.cost)(v))
    }

    fn gradient(&self, v: &DMatrix<T>) -> Result<DMatrix<T>> {
        Ok((self.grad)(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions<T: Scalar> {
    pub max_iter: usize,
    /// Stop once the Riemannian gradient norm falls below this.
    pub grad_tol: T,
    pub armijo_c: T,
    pub backtrack_factor: T,
    pub initial_step: T,
    /// Smallest trial step before the line search gives up.
    pub min_step: T,
    pub restarts: usize,
    pub seed: u64,
    /// Run restarts on the rayon pool.
    pub parallel: bool,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        SolverOptions {
            max_iter: 500,
            grad_tol: T::lit(1e-6),
            armijo_c: T::lit(1e-4),
            backtrack_factor: T::lit(0.5),
            initial_step: T::one(),
            min_step: T::lit(1e-20),
            restarts: 1,
            seed: 0,
            parallel: true,
        }
    }
}

impl<T: Scalar> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (T::zero(), T::one());
        if !(self.backtrack_factor > zero && self.backtrack_factor < one) {
            return Err(Error::InvalidParameter(format!(
                "backtrack_factor={} must lie in (0, 1)",
                self.backtrack_factor
            )));
        }
        if !(self.armijo_c > zero && self.armijo_c < one) {
            return Err(Error::InvalidParameter(format!(
                "armijo_c={} must lie in (0, 1)",
                self.armijo_c
            )));
        }
        if !(self.initial_step > zero) || !(self.min_step > zero) || !(self.grad_tol > zero) {
            return Err(Error::InvalidParameter(
                "initial_step, min_step and grad_tol must be positive".into(),
            ));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Why a single descent run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    /// No step down to `min_step` satisfied the Armijo condition.
    LineSearchFailed,
}

/// Result of one descent run from a single initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome<T: Scalar> {
    pub v: ProjectionMatrix<T>,
    pub value: T,
    pub initial_value: T,
    pub iterations: usize,
    pub grad_norm: T,
    pub stop: StopReason,
    /// Cost after every accepted step, starting with the initial cost.
    pub trace: Vec<T>,
}

impl<T: Scalar> RunOutcome<T> {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::GradientTolerance
    }
}

/// Per-restart summary kept in a [`SolveReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct RestartSummary<T: Scalar> {
    pub index: usize,
    pub seed: u64,
    /// Final cost, or the failure message.
    pub outcome: std::result::Result<(T, usize, StopReason), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T: Scalar> {
    pub v_star: ProjectionMatrix<T>,
    pub objective_value: T,
    pub initial_value: T,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
    /// Accepted-step costs of the winning restart.
    pub trace: Vec<T>,
    pub restarts: Vec<RestartSummary<T>>,
}

/// Seed of restart `r` derived from the base seed.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = seed.wrapping_add((r as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A uniformly distributed Stiefel point: sign-fixed QR of a Gaussian `d × k` matrix.
pub fn random_stiefel<T: Scalar>(d: usize, k: usize, seed: u64) -> Result<ProjectionMatrix<T>> {
    if k == 0 || k > d {
        return Err(Error::InvalidParameter(format!("need 0 < k <= d, got k={k}, d={d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let g = DMatrix::<T>::from_fn(d, k, |_, _| {
            let x: f64 = StandardNormal.sample(&mut rng);
            T::lit(x)
        });
        // A singular Gaussian draw has probability zero; redraw just in case.
        if let Ok(q) = qr_positive(&g) {
            return Ok(ProjectionMatrix::new_unchecked(q));
        }
    }
}

/// Projects `g` onto the tangent space at `v`: `G − V·sym(VᵀG)`.
pub fn tangent_project<T: Scalar>(v: &ProjectionMatrix<T>, g: &DMatrix<T>) -> Result<DMatrix<T>> {
    let vm = v.matrix();
    if g.shape() != vm.shape() {
        return Err(Error::DimensionMismatch(format!(
            "gradient is {:?}, point is {:?}",
            g.shape(),
            vm.shape()
        )));
    }
    Ok(g - vm * sym(&(vm.transpose() * g)))
}

/// QR retraction of `v + step·ξ`.
pub fn retract_qr<T: Scalar>(v: &ProjectionMatrix<T>, xi: &DMatrix<T>, step: T) -> Result<ProjectionMatrix<T>> {
    let vm = v.matrix();
    if xi.shape() != vm.shape() {
        return Err(Error::DimensionMismatch(format!(
            "tangent is {:?}, point is {:?}",
            xi.shape(),
            vm.shape()
        )));
    }
    let m = vm + xi * step;
    match qr_positive(&m) {
        Ok(q) => Ok(ProjectionMatrix::new_unchecked(q)),
        Err(_) => Err(Error::RankDeficient { step: step.as_f64() }),
    }
}

fn checked<T: Scalar>(x: T, what: &str) -> Result<T> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Armijo steepest descent from `v0`.
///
/// Each trial step starts at twice the last accepted step (or `initial_step`
/// on the first iteration) and shrinks by `backtrack_factor`. A trial point
/// whose cost cannot be evaluated counts as a rejected step.
pub fn descend<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &O,
    v0: ProjectionMatrix<T>,
    opts: &SolverOptions<T>,
) -> Result<RunOutcome<T>> {
    opts.validate()?;
    let mut v = v0;
    let (f0, mut g) = obj.cost_and_gradient(v.matrix())?;
    let mut f = checked(f0, "initial cost")?;
    let mut trace = vec![f];
    let mut step = opts.initial_step;
    let mut iterations = 0;
    let mut grad_norm;
    let stop = loop {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient at iteration {iterations}")));
        }
        let xi = tangent_project(&v, &g)?;
        let gn2 = xi.norm_squared();
        grad_norm = gn2.sqrt();
        if grad_norm < opts.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break StopReason::MaxIterations;
        }
        let mut t = step;
        let accepted = loop {
            if t < opts.min_step {
                break None;
            }
            if let Ok(cand) = retract_qr(&v, &xi, -t) {
                if let Ok(fc) = obj.cost(cand.matrix()) {
                    if fc.is_finite() && fc <= f - opts.armijo_c * t * gn2 {
                        break Some((cand, fc));
                    }
                }
            }
            t *= opts.backtrack_factor;
        };
        let Some((cand, fc)) = accepted else {
            break StopReason::LineSearchFailed;
        };
        v = cand;
        f = fc;
        trace.push(f);
        iterations += 1;
        step = t + t;
        g = obj.gradient(v.matrix())?;
    };
    Ok(RunOutcome {
        v,
        value: f,
        initial_value: trace[0],
        iterations,
        grad_norm,
        stop,
        trace,
    })
}

/// Multi-restart descent from seeded random Stiefel points; keeps the lowest cost
/// (lowest restart index on ties).
pub fn minimize<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &O,
    d: usize,
    k: usize,
    opts: &SolverOptions<T>,
) -> Result<SolveReport<T>> {
    opts.validate()?;
    if k == 0 || k > d {
        return Err(Error::InvalidParameter(format!("need 0 < k <= d, got k={k}, d={d}")));
    }
    let run = |r: usize| {
        let seed = restart_seed(opts.seed, r);
        let out = random_stiefel(d, k, seed).and_then(|v0| descend(obj, v0, opts));
        (r, seed, out)
    };
    let runs: Vec<_> = if opts.parallel && opts.restarts > 1 {
        (0..opts.restarts).into_par_iter().map(run).collect()
    } else {
        (0..opts.restarts).map(run).collect()
    };

    let mut summaries = Vec::with_capacity(runs.len());
    let mut best: Option<(usize, RunOutcome<T>)> = None;
    let mut last_err = String::new();
    for (r, seed, out) in runs {
        match out {
            Ok(o) => {
                debug!(
                    "restart {r}: cost {:e} -> {:e} in {} iterations ({:?})",
                    o.initial_value, o.value, o.iterations, o.stop
                );
                summaries.push(RestartSummary {
                    index: r,
                    seed,
                    outcome: Ok((o.value, o.iterations, o.stop)),
                });
                if best.as_ref().is_none_or(|(_, b)| o.value < b.value) {
                    best = Some((r, o));
                }
            }
            Err(e) => {
                warn!("restart {r} failed: {e}");
                last_err = e.to_string();
                summaries.push(RestartSummary {
                    index: r,
                    seed,
                    outcome: Err(last_err.clone()),
                });
            }
        }
    }
    let Some((restart_index, o)) = best else {
        return Err(Error::AllRestartsFailed {
            restarts: opts.restarts,
            last: last_err,
        });
    };
    let converged = o.converged();
    Ok(SolveReport {
        v_star: o.v,
        objective_value: o.value,
        initial_value: o.initial_value,
        iterations: o.iterations,
        converged,
        restart_index,
        trace: o.trace,
        restarts: summaries,
    })
}

/// [`minimize`] over a pair of closures.
pub fn minimize_fn<T, C, G>(cost: C, grad: G, d: usize, k: usize, opts: &SolverOptions<T>) -> Result<SolveReport<T>>
where
    T: Scalar,
    C: Fn(&DMatrix<T>) -> T + Sync,
    G: Fn(&DMatrix<T>) -> DMatrix<T> + Sync,
{
    minimize(&FnObjective { cost, grad }, d, k, opts)
}
