//! Dense reference computations shared by the integration tests.
//!
//! Everything here works from the covariance function and the partition
//! alone: remainder covariances are built by explicit Schur complements over
//! the knot sets of each ancestor chain, never from the library's factors.
//! Linear algebra runs in double-double arithmetic.

#![allow(dead_code)]

use mra::oracle::dense_covariance;
use mra::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod dd;
pub use dd::{Dd, DdChol};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `C0(a, b)` without nugget.
pub fn c0(model: &CovarianceModel, a: &Locations, b: &Locations) -> DMatrix<f64> {
    model.cov_matrix(a, b, false).unwrap()
}

fn stack(parts: &[&Locations], dim: usize) -> Locations {
    parts.iter().fold(Locations::empty(dim), |acc, p| acc.concat(p))
}

/// Inverse of a symmetric positive definite matrix, computed in
/// double-double arithmetic independently of the library's Cholesky code.
pub fn spd_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    DdChol::new(&Dd::from_f64(a)).inverse().to_f64()
}

/// Remainder covariance `v_l(x, y)` for points inside the region `id` at
/// resolution `l`: `C0` conditioned successively on the knots of every
/// ancestor strictly above `id`.
pub fn remainder_dd(model: &CovarianceModel, tree: &PartitionTree, id: usize, x: &Locations, y: &Locations) -> Dd {
    region_cov(model, tree, id, x, y, false)
}

pub fn remainder(model: &CovarianceModel, tree: &PartitionTree, id: usize, x: &Locations, y: &Locations) -> DMatrix<f64> {
    remainder_dd(model, tree, id, x, y).to_f64()
}

/// As [`remainder_dd`], also conditioning on the knots of `id` when `own`.
fn region_cov(model: &CovarianceModel, tree: &PartitionTree, id: usize, x: &Locations, y: &Locations, own: bool) -> Dd {
    let chain = tree.ancestors(id);
    let above = if own { &chain[..] } else { &chain[..chain.len() - 1] };
    let knots: Vec<&Locations> = above.iter().map(|&a| tree.knots(a)).collect();
    let mut parts: Vec<&Locations> = vec![x, y];
    parts.extend(knots.iter().copied());
    let all = stack(&parts, tree.dim());
    let mut w = Dd::from_f64(&c0(model, &all, &all));
    let mut offset = x.len() + y.len();
    for q in &knots {
        w.condition_on(offset..offset + q.len());
        offset += q.len();
    }
    w.block(0..x.len(), x.len()..x.len() + y.len())
}

/// Contribution of region `id` to `C_M(x, y)` for points inside it:
/// `v(x, Q) v(Q, Q)⁻¹ v(Q, y)` for non-leaf regions, `v(x, y)` for leaves.
/// The former is the drop from conditioning on `Q` as well.
pub fn region_term(model: &CovarianceModel, tree: &PartitionTree, id: usize, x: &Locations, y: &Locations) -> Dd {
    if tree.is_leaf(id) {
        return remainder_dd(model, tree, id, x, y);
    }
    if tree.knots(id).is_empty() {
        return Dd::zeros(x.len(), y.len());
    }
    remainder_dd(model, tree, id, x, y).sub(&region_cov(model, tree, id, x, y, true))
}

/// Indices of the points of `s` that lie in each region.
pub fn region_members(tree: &PartitionTree, s: &Locations) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); tree.n_regions()];
    for (i, p) in s.iter().enumerate() {
        let leaf = tree.locate(p).expect("inside domain");
        for a in tree.ancestors(leaf) {
            out[a].push(i);
        }
    }
    out
}

/// Dense `C_M(s, s)` from region terms restricted to regions at resolution
/// `min_level` and below; `min_level = 0` gives the full approximation.
pub fn mra_cov_dd(model: &CovarianceModel, tree: &PartitionTree, s: &Locations, min_level: usize) -> Dd {
    let members = region_members(tree, s);
    let mut out = Dd::zeros(s.len(), s.len());
    for (id, idx) in members.iter().enumerate() {
        if idx.is_empty() || tree.region(id).level < min_level {
            continue;
        }
        let x = s.subset(idx);
        let t = region_term(model, tree, id, &x, &x);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[(i, j)] += t[(a, b)];
            }
        }
    }
    out
}

pub fn mra_cov_oracle_from(model: &CovarianceModel, tree: &PartitionTree, s: &Locations, min_level: usize) -> DMatrix<f64> {
    mra_cov_dd(model, tree, s, min_level).to_f64()
}

pub fn mra_cov_oracle(model: &CovarianceModel, tree: &PartitionTree, s: &Locations) -> DMatrix<f64> {
    mra_cov_oracle_from(model, tree, s, 0)
}

/// Gaussian log-density of `y` under `N(0, cov)`.
pub fn gaussian_logdensity(cov: &DMatrix<f64>, y: &[f64]) -> f64 {
    let chol = DdChol::new(&Dd::from_f64(cov));
    let z = chol.forward(&Dd::column(y));
    let quad = z.transpose().mul(&z)[(0, 0)].hi();
    -0.5 * (chol.logdet() + quad + y.len() as f64 * LN_2PI)
}

/// Log-determinant of a symmetric positive definite matrix.
pub fn logdet_sym(a: &DMatrix<f64>) -> f64 {
    DdChol::new(&Dd::from_f64(a)).logdet()
}

/// Draw from `N(0, cov)` through a symmetric eigen-decomposition, so that
/// semi-definite matrices are handled.
pub fn draw(cov: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let eig = cov.clone().symmetric_eigen();
    let z = DVector::from_fn(cov.nrows(), |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let scaled = DVector::from_fn(cov.nrows(), |i, _| eig.eigenvalues[i].max(0.0).sqrt() * z[i]);
    (eig.eigenvectors * scaled).iter().copied().collect()
}

/// Gaussian conditioning of a joint over `(observed, target)` blocks:
/// returns the target mean and marginal variances.
pub fn condition_dd(joint: &Dd, n_obs: usize, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = joint.rows;
    let chol = DdChol::new(&joint.block(0..n_obs, 0..n_obs));
    let spo = joint.block(n_obs..n, 0..n_obs);
    let mean = spo.mul(&chol.solve(&Dd::column(y)));
    let z = chol.forward(&spo.transpose());
    let var = (0..n - n_obs)
        .map(|i| {
            let mut v = joint[(n_obs + i, n_obs + i)];
            for k in 0..n_obs {
                v -= z[(k, i)] * z[(k, i)];
            }
            v.hi()
        })
        .collect();
    ((0..n - n_obs).map(|i| mean[(i, 0)].hi()).collect(), var)
}

pub fn condition(joint: &DMatrix<f64>, n_obs: usize, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    condition_dd(&Dd::from_f64(joint), n_obs, y)
}

/// One randomly drawn approximation problem.
pub struct Case {
    pub label: String,
    pub model: CovarianceModel,
    pub tree: PartitionTree,
    pub s: Locations,
    pub y: Vec<f64>,
    /// Prediction points.
    pub sp: Locations,
}

fn uniform_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Locations {
    let mut s = Locations::empty(dim);
    for _ in 0..n {
        let p: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        s.push(&p);
    }
    s
}

/// Random configuration: `d ∈ {1, 2}`, `n ∈ [50, 300]`, `M ∈ [1, 3]`,
/// `J ∈ {2, 3, 4}`, `r ∈ [2, 6]`, either family, nugget `0` or `0.05`.
/// Data are drawn from the approximation itself.
pub fn random_case(seed: u64) -> Case {
    random_case_with(seed, 300)
}

/// As [`random_case`] with at most `n_max` observations.
pub fn random_case_with(seed: u64, n_max: usize) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=2);
    let n = rng.random_range(50..=n_max);
    let levels = rng.random_range(1..=3);
    let j = [2, 3, 4][rng.random_range(0..3)];
    let r = rng.random_range(2..=6);
    let family = if rng.random::<bool>() { Family::Matern15 } else { Family::Exponential };
    let nugget = if rng.random::<bool>() { 0.0 } else { 0.05 };
    let variance = rng.random_range(0.5..2.0);
    let range = rng.random_range(0.05..0.25);
    let model = CovarianceModel::new(family.clone(), variance, range, nugget).unwrap();
    let s = uniform_points(&mut rng, n, dim);
    let sp = uniform_points(&mut rng, 25, dim);
    let tree = PartitionTree::build(Domain::unit(dim), &vec![j; levels], SplitPolicy::CycleAxes)
        .unwrap()
        .assign_locations(s.clone(), None)
        .unwrap()
        .place_knots(&KnotStrategy::equidistant(r))
        .unwrap();
    let mut cov = mra_cov_oracle(&model, &tree, &s);
    for i in 0..n {
        cov[(i, i)] += nugget;
    }
    let y = draw(&cov, &mut rng);
    let tree = tree.assign_locations(s.clone(), Some(y.clone())).unwrap();
    let label = format!(
        "d={dim} n={n} M={levels} J={j} r={r} {:?} var={variance:.3} range={range:.3} nugget={nugget}",
        family
    );
    Case { label, model, tree, s, y, sp }
}

/// `C0(s, s)` plus nugget.
pub fn exact_cov(model: &CovarianceModel, s: &Locations) -> DMatrix<f64> {
    dense_covariance(model, s).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
