//! Upward sweep: posterior weight distributions, log-likelihood and fitting.
//!
//! Each leaf summarizes its data against the basis functions of its
//! ancestors; each non-leaf region adds up its children's summaries, updates
//! the posterior precision of its own weights and passes a reduced summary to
//! its parent. The root ends up holding `-2 log L - n log 2π = d + u`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::covariance::CovarianceModel;
use crate::error::{MraError, Result};
use crate::executor::{Executor, Payload};
use crate::geometry::PartitionTree;
use crate::linalg::{symmetrize, Chol};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::prior::{compute_prior_with, LeafPrior, PriorFactors};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
fn packed(k: usize, l: usize) -> usize {
    debug_assert!(l <= k);
    k * (k + 1) / 2 + l
}

/// Message sent from a region to its parent at resolution `m`: blocks
/// `Ã^{k,l}` for `l ≤ k ≤ m` (packed row by row), vectors `ω̃^k` for `k ≤ m`,
/// and the log-determinant and quadratic-form contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub a: Vec<DMatrix<f64>>,
    pub omega: Vec<DVector<f64>>,
    pub d: f64,
    pub u: f64,
}

impl Summary {
    /// Number of resolutions covered.
    pub fn levels(&self) -> usize {
        self.omega.len()
    }

    /// `Ã^{k,l}`; the upper triangle is served by transposing.
    pub fn block(&self, k: usize, l: usize) -> DMatrix<f64> {
        if l <= k {
            self.a[packed(k, l)].clone()
        } else {
            self.a[packed(l, k)].transpose()
        }
    }
}

impl Payload for Summary {
    fn block_count(&self) -> usize {
        self.a.len()
    }

    fn float_count(&self) -> usize {
        self.a.iter().map(DMatrix::len).sum::<usize>() + self.omega.iter().map(DVector::len).sum::<usize>() + 2
    }
}

/// Retained quantities of a non-leaf region at resolution `m`.
#[derive(Debug, Clone)]
pub struct RegionPosterior {
    /// Cholesky factor of `K̃⁻¹ = K⁻¹ + A^{m,m}`.
    pub ktilde_chol: Chol,
    /// `A^{m,k}` for `k ≤ m`.
    pub a_row: Vec<DMatrix<f64>>,
    /// `K̃ A^{m,k}` for `k < m`.
    pub ktilde_a: Vec<DMatrix<f64>>,
    pub omega: DVector<f64>,
    /// `K̃ ω^m`.
    pub mean: DVector<f64>,
    pub d: f64,
    pub u: f64,
}

/// Retained quantities of a leaf.
#[derive(Debug, Clone)]
pub struct LeafPosterior {
    /// `L_Σ⁻¹ y` for the leaf's observations.
    pub whitened_y: DVector<f64>,
    pub d: f64,
    pub u: f64,
}

#[derive(Debug, Clone)]
pub enum NodePosterior {
    Inner(RegionPosterior),
    Leaf(LeafPosterior),
}

#[derive(Debug, Clone)]
pub struct PosteriorFactors {
    nodes: Vec<NodePosterior>,
    n_obs: usize,
    root: Summary,
}

impl PosteriorFactors {
    pub fn node(&self, id: usize) -> &NodePosterior {
        &self.nodes[id]
    }

    pub fn inner(&self, id: usize) -> &RegionPosterior {
        match &self.nodes[id] {
            NodePosterior::Inner(p) => p,
            NodePosterior::Leaf(_) => panic!("region {id} is a leaf"),
        }
    }

    pub fn leaf(&self, id: usize) -> &LeafPosterior {
        match &self.nodes[id] {
            NodePosterior::Leaf(p) => p,
            NodePosterior::Inner(_) => panic!("region {id} is not a leaf"),
        }
    }

    /// `d + u` at the root.
    pub fn neg2_loglik_kernel(&self) -> (f64, f64) {
        (self.root.d, self.root.u)
    }

    pub fn loglik(&self) -> f64 {
        -0.5 * (self.root.d + self.root.u + self.n_obs as f64 * LN_2PI)
    }

    /// Number of retained floating-point values.
    pub fn stored_floats(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                NodePosterior::Inner(p) => {
                    p.ktilde_chol.l().len()
                        + p.a_row.iter().map(DMatrix::len).sum::<usize>()
                        + p.ktilde_a.iter().map(DMatrix::len).sum::<usize>()
                        + 2 * p.mean.len()
                }
                NodePosterior::Leaf(p) => p.whitened_y.len(),
            })
            .sum()
    }
}

/// Leaf summary: `Ã^{k,l} = B^k'Σ⁻¹B^l`, `ω̃^k = B^k'Σ⁻¹y`, `d = log|Σ|`,
/// `u = y'Σ⁻¹y`.
pub fn leaf_summaries(prior: &LeafPrior, y_leaf: &[f64]) -> (Summary, LeafPosterior) {
    let chol = &prior.sigma_chol;
    let wy = chol.solve_l_vec(&DVector::from_column_slice(y_leaf));
    let w: Vec<DMatrix<f64>> = prior.basis.iter().map(|b| chol.solve_l(b)).collect();
    let levels = w.len();
    let mut a = Vec::with_capacity(levels * (levels + 1) / 2);
    for k in 0..levels {
        for l in 0..=k {
            a.push(w[k].tr_mul(&w[l]));
        }
    }
    let omega = w.iter().map(|wk| wk.tr_mul(&wy)).collect();
    let d = chol.logdet();
    let u = wy.norm_squared();
    (Summary { a, omega, d, u }, LeafPosterior { whitened_y: wy, d, u })
}

/// Combines child summaries at a region of resolution `m` and applies the
/// low-rank update for the region's own weights.
pub fn merge_and_update(
    children: &[Summary],
    kinv: &Chol,
    m: usize,
    region: &crate::geometry::RegionPath,
) -> Result<(Summary, RegionPosterior)> {
    let levels = m + 1;
    let r_m = kinv.dim();
    let mut a: Vec<DMatrix<f64>> = Vec::new();
    let mut omega: Vec<DVector<f64>> = Vec::new();
    let (mut d, mut u) = (0.0, 0.0);
    for (j, c) in children.iter().enumerate() {
        if c.levels() != levels {
            return Err(MraError::Internal(format!("child message {j} at {region} has {} levels", c.levels())));
        }
        if j == 0 {
            a = c.a.clone();
            omega = c.omega.clone();
        } else {
            for (x, y) in a.iter_mut().zip(&c.a) {
                *x += y;
            }
            for (x, y) in omega.iter_mut().zip(&c.omega) {
                *x += y;
            }
        }
        d += c.d;
        u += c.u;
    }
    if children.is_empty() {
        return Err(MraError::Internal(format!("no child messages at {region}")));
    }

    let mut prec = a[packed(m, m)].clone() + kinv.reconstruct();
    symmetrize(&mut prec);
    let scale = prec.diagonal().iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let ktilde_chol =
        Chol::with_jitter(prec, scale).ok_or_else(|| MraError::PosteriorNotPositiveDefinite(region.clone()))?;
    let h: Vec<DMatrix<f64>> = (0..m).map(|k| ktilde_chol.solve_l(&a[packed(m, k)])).collect();
    let hw = ktilde_chol.solve_l_vec(&omega[m]);

    let mut out_a = Vec::with_capacity(m * (m + 1) / 2);
    for k in 0..m {
        for l in 0..=k {
            let mut blk = a[packed(k, l)].clone();
            if r_m > 0 {
                blk -= h[k].tr_mul(&h[l]);
            }
            out_a.push(blk);
        }
    }
    let out_omega: Vec<DVector<f64>> = (0..m)
        .map(|k| if r_m > 0 { &omega[k] - h[k].tr_mul(&hw) } else { omega[k].clone() })
        .collect();
    d += ktilde_chol.logdet() - kinv.logdet();
    u -= hw.norm_squared();

    let ktilde_a = h.iter().map(|hk| ktilde_chol.solve_lt(hk)).collect();
    let mean = ktilde_chol.solve_lt_vec(&hw);
    let a_row = (0..=m).map(|k| a[packed(m, k)].clone()).collect();
    let post = RegionPosterior { ktilde_chol, a_row, ktilde_a, omega: omega.swap_remove(m), mean, d, u };
    Ok((Summary { a: out_a, omega: out_omega, d, u }, post))
}

/// Runs the upward sweep for data `y` (in observation order).
pub fn upward(tree: &PartitionTree, prior: &PriorFactors, y: &[f64], exec: &Executor) -> Result<PosteriorFactors> {
    if y.len() != tree.n_obs() {
        return Err(MraError::DimensionMismatch { expected: tree.n_obs(), got: y.len() });
    }
    let leaf = |id: usize| -> Result<(Summary, NodePosterior)> {
        let idx = tree.leaf_obs(tree.leaf_ordinal(id));
        let y_leaf: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let (s, p) = leaf_summaries(prior.leaf(id), &y_leaf);
        if !(s.d.is_finite() && s.u.is_finite()) {
            return Err(MraError::LeafNotPositiveDefinite(tree.region(id).path.clone()));
        }
        Ok((s, NodePosterior::Leaf(p)))
    };
    let merge = |id: usize, msgs: Vec<Summary>| -> Result<(Summary, NodePosterior)> {
        let region = tree.region(id);
        let (s, p) = merge_and_update(&msgs, &prior.inner(id).kinv_chol, region.level, &region.path)?;
        Ok((s, NodePosterior::Inner(p)))
    };
    let (root, keep) = exec.reduce_up(tree, leaf, merge)?;
    let nodes = keep
        .into_iter()
        .map(|k| k.ok_or_else(|| MraError::Internal("region skipped by upward sweep".into())))
        .collect::<Result<_>>()?;
    Ok(PosteriorFactors { nodes, n_obs: y.len(), root })
}

fn values(tree: &PartitionTree) -> Result<&[f64]> {
    tree.values().ok_or_else(|| MraError::InvalidArgument("tree has no observed values".into()))
}

/// Gaussian log-likelihood of the tree's observed values under the M-RA of `model`.
pub fn loglikelihood(tree: &PartitionTree, model: &CovarianceModel) -> Result<f64> {
    loglikelihood_with(tree, model, values(tree)?, &Executor::serial())
}

pub fn loglikelihood_with(tree: &PartitionTree, model: &CovarianceModel, y: &[f64], exec: &Executor) -> Result<f64> {
    let prior = compute_prior_with(tree, model, exec)?;
    Ok(upward(tree, &prior, y, exec)?.loglik())
}

/// Mean `K̃ω^m` and covariance `K̃` of the weights of a non-leaf region.
pub fn posterior_weight_moments(post: &PosteriorFactors, id: usize) -> (DVector<f64>, DMatrix<f64>) {
    let p = post.inner(id);
    (p.mean.clone(), p.ktilde_chol.inverse())
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial simplex offset on the log scale.
    pub step: f64,
    /// Hold the nugget at zero and search over variance and range only.
    pub zero_nugget: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 500, step: 0.5, zero_nugget: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitTraceRow {
    pub iteration: usize,
    pub variance: f64,
    pub range: f64,
    pub nugget: f64,
    pub loglik: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: CovarianceModel,
    pub loglik: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub seconds: f64,
    /// Best parameters after each iteration.
    pub trace: Vec<FitTraceRow>,
}

/// Maximum-likelihood fit by Nelder–Mead over log parameters.
pub fn fit(tree: &PartitionTree, y: &[f64], init: &CovarianceModel, opts: &FitOptions, exec: &Executor) -> Result<FitResult> {
    let start = Instant::now();
    let decode = |x: &[f64]| -> Result<CovarianceModel> {
        let nugget = if opts.zero_nugget { 0.0 } else { x[2].exp() };
        init.with_params(x[0].exp(), x[1].exp(), nugget)
    };
    let eval = |x: &[f64]| -> f64 {
        match decode(x).and_then(|m| loglikelihood_with(tree, &m, y, exec)) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };
    let mut x0 = vec![init.variance.ln(), init.range.ln()];
    if !opts.zero_nugget {
        if init.nugget <= 0.0 {
            return Err(MraError::InvalidArgument("initial nugget must be positive unless it is held at zero".into()));
        }
        x0.push(init.nugget.ln());
    }
    if !x0.iter().all(|v| v.is_finite()) || !eval(&x0).is_finite() {
        return Err(MraError::NonFiniteStart);
    }
    let nm = nelder_mead(eval, &x0, &NelderMeadOptions { tol: opts.tol, max_iter: opts.max_iter, step: opts.step });
    let trace = nm
        .trace
        .iter()
        .enumerate()
        .map(|(i, (x, f))| {
            let m = decode(x)?;
            Ok(FitTraceRow { iteration: i, variance: m.variance, range: m.range, nugget: m.nugget, loglik: -f })
        })
        .collect::<Result<_>>()?;
    Ok(FitResult {
        model: decode(&nm.x)?,
        loglik: -nm.f,
        iterations: nm.iterations,
        evaluations: nm.evaluations,
        converged: nm.converged,
        seconds: start.elapsed().as_secs_f64(),
        trace,
    })
}
