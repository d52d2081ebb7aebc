//! Joint posterior prediction.
//!
//! The predictive process at points `S^P` is written as
//!
//! ```text
//! y(S^P) | data = Σ_m B̃^{m+1,m} η̃_m + δ̃,   η̃_m ~ N(K̃ω^m, K̃),   δ̃ ~ N(LΣ⁻¹y, V^P - LΣ⁻¹L')
//! ```
//!
//! with all `η̃` and `δ̃` mutually independent. Points in different leaves are
//! correlated only through the weights of their shared ancestors.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::covariance::CovarianceModel;
use crate::error::{MraError, Result};
use crate::executor::{Executor, Stage};
use crate::geometry::{Locations, PartitionTree};
use crate::inference::PosteriorFactors;
use crate::linalg::{symmetrize, Chol};
use crate::prior::PriorFactors;

/// Prior prediction quantities for the points of one leaf.
#[derive(Debug, Clone)]
pub struct PredPrior {
    /// `U^l = v_l(S^P, Q_{a_l})` for `l < M`.
    pub u: Vec<DMatrix<f64>>,
    /// `L = v_M(S^P, S)`.
    pub l: DMatrix<f64>,
    /// `V^P = v_M(S^P, S^P)`, without nugget.
    pub vp: DMatrix<f64>,
}

/// Computes `U^l`, `L` and `V^P` for points `pts` lying in leaf `leaf_id`.
pub fn compute_pred_prior(
    tree: &PartitionTree,
    model: &CovarianceModel,
    prior: &PriorFactors,
    leaf_id: usize,
    pts: &Locations,
) -> PredPrior {
    let pb = prior.point_basis(tree, model, leaf_id, pts);
    let leaf = prior.leaf(leaf_id);
    let mut l = model.cross(pts, tree.knots(leaf_id));
    let mut vp = model.cov_sym(pts);
    for (zk, wk) in pb.z.iter().zip(&leaf.whitened) {
        l -= zk.tr_mul(wk);
        vp -= zk.tr_mul(zk);
    }
    symmetrize(&mut vp);
    PredPrior { u: pb.u, l, vp }
}

/// Quantities of one leaf derived from the data.
struct LeafTerms {
    /// `L_Σ⁻¹ L'`.
    g: DMatrix<f64>,
}

fn leaf_terms(prior: &PriorFactors, leaf_id: usize, pp: &PredPrior) -> LeafTerms {
    LeafTerms { g: prior.leaf(leaf_id).sigma_chol.solve_l(&pp.l.transpose()) }
}

/// All posterior basis blocks `B̃^{l,k}` (`k < l ≤ M`) for the points of a leaf;
/// `blocks[l][k]`. `B̃^{M,k}` comes from the definition and lower `l` from the
/// recursion `B̃^{l,k} = B̃^{l+1,k} - B̃^{l+1,l} K̃ A^{l,k}`.
pub fn posterior_basis_blocks(
    tree: &PartitionTree,
    prior: &PriorFactors,
    post: &PosteriorFactors,
    leaf_id: usize,
    pp: &PredPrior,
) -> Vec<Vec<DMatrix<f64>>> {
    let g = leaf_terms(prior, leaf_id, pp).g;
    posterior_basis_from(tree, prior, post, leaf_id, pp, &g)
}

fn posterior_basis_from(
    tree: &PartitionTree,
    prior: &PriorFactors,
    post: &PosteriorFactors,
    leaf_id: usize,
    pp: &PredPrior,
    g: &DMatrix<f64>,
) -> Vec<Vec<DMatrix<f64>>> {
    let depth = pp.u.len();
    let chain = tree.ancestors(leaf_id);
    let leaf = prior.leaf(leaf_id);
    let mut blocks: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); depth + 1];
    blocks[depth] = (0..depth)
        .map(|k| &pp.u[k] - g.tr_mul(&leaf.sigma_chol.solve_l(&leaf.basis[k])))
        .collect();
    for l in (1..depth).rev() {
        let reg = post.inner(chain[l]);
        let next = &blocks[l + 1];
        let cur: Vec<DMatrix<f64>> = (0..l).map(|k| &next[k] - &next[l] * &reg.ktilde_a[k]).collect();
        blocks[l] = cur;
    }
    blocks
}

/// Retained blocks `B̃^{m+1,m}` for `m = 0..M-1`.
pub fn posterior_basis_sweep(
    tree: &PartitionTree,
    prior: &PriorFactors,
    post: &PosteriorFactors,
    leaf_id: usize,
    pp: &PredPrior,
) -> Vec<DMatrix<f64>> {
    let blocks = posterior_basis_blocks(tree, prior, post, leaf_id, pp);
    retained(blocks)
}

fn retained(mut blocks: Vec<Vec<DMatrix<f64>>>) -> Vec<DMatrix<f64>> {
    let depth = blocks.len() - 1;
    (0..depth).map(|m| blocks[m + 1].swap_remove(m)).collect()
}

/// Predictive quantities for the points of one leaf.
#[derive(Debug, Clone)]
pub struct LeafPrediction {
    pub leaf: usize,
    /// Ancestor region ids, root first.
    pub chain: Vec<usize>,
    /// Positions of this leaf's points in the prediction list.
    pub indices: Vec<usize>,
    /// `B̃^{m+1,m}` for `m = 0..M-1`.
    pub btilde: Vec<DMatrix<f64>>,
    /// `LΣ⁻¹y`.
    pub residual_mean: DVector<f64>,
    /// `V^P - LΣ⁻¹L'`.
    pub residual_cov: DMatrix<f64>,
}

/// Weight moments of a non-leaf region: `K̃ω^m` and the factor of `K̃⁻¹`.
#[derive(Debug, Clone)]
pub struct WeightMoments {
    pub mean: DVector<f64>,
    pub precision_chol: Chol,
}

/// Joint posterior predictive distribution at a list of points.
#[derive(Debug, Clone)]
pub struct PredictiveDistribution {
    pub locations: Locations,
    pub leaves: Vec<LeafPrediction>,
    /// Indexed by region id; `None` for leaves.
    pub weights: Vec<Option<WeightMoments>>,
    /// For each point: (index into `leaves`, column within that leaf).
    pub point_index: Vec<(usize, usize)>,
    pub variance: f64,
    pub nugget: f64,
}

/// Builds the predictive distribution at `sp`; leaves are processed in parallel.
pub fn predict(
    tree: &PartitionTree,
    model: &CovarianceModel,
    prior: &PriorFactors,
    post: &PosteriorFactors,
    sp: &Locations,
    exec: &Executor,
) -> Result<PredictiveDistribution> {
    if sp.dim() != tree.dim() {
        return Err(MraError::DimensionMismatch { expected: tree.dim(), got: sp.dim() });
    }
    let buckets = tree.bucket(sp)?;
    let ids: Vec<usize> = buckets
        .iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(ord, _)| tree.leaf_id(ord))
        .collect();
    let leaves = exec.map_regions(tree, &ids, Stage::LeafPredict, |leaf_id| {
        let indices = buckets[tree.leaf_ordinal(leaf_id)].clone();
        let pts = sp.subset(&indices);
        let pp = compute_pred_prior(tree, model, prior, leaf_id, &pts);
        let g = leaf_terms(prior, leaf_id, &pp).g;
        let residual_mean = g.tr_mul(&post.leaf(leaf_id).whitened_y);
        let mut residual_cov = &pp.vp - g.tr_mul(&g);
        symmetrize(&mut residual_cov);
        let btilde = retained(posterior_basis_from(tree, prior, post, leaf_id, &pp, &g));
        let mut chain = tree.ancestors(leaf_id);
        chain.pop();
        Ok(LeafPrediction { leaf: leaf_id, chain, indices, btilde, residual_mean, residual_cov })
    })?;
    let weights = (0..tree.n_regions())
        .map(|id| {
            (!tree.is_leaf(id)).then(|| {
                let p = post.inner(id);
                WeightMoments { mean: p.mean.clone(), precision_chol: p.ktilde_chol.clone() }
            })
        })
        .collect();
    let mut point_index = vec![(0, 0); sp.len()];
    for (li, lp) in leaves.iter().enumerate() {
        for (col, &i) in lp.indices.iter().enumerate() {
            point_index[i] = (li, col);
        }
    }
    Ok(PredictiveDistribution {
        locations: sp.clone(),
        leaves,
        weights,
        point_index,
        variance: model.variance,
        nugget: model.nugget,
    })
}

impl PredictiveDistribution {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    fn weight(&self, id: usize) -> &WeightMoments {
        self.weights[id].as_ref().expect("ancestor region has weights")
    }

    /// `L̃⁻¹ B̃'` per resolution, so that `B̃ K̃ B̃' = W'W`.
    fn whitened_basis(&self, lp: &LeafPrediction) -> Vec<DMatrix<f64>> {
        lp.btilde
            .iter()
            .zip(&lp.chain)
            .map(|(b, &id)| self.weight(id).precision_chol.solve_l(&b.transpose()))
            .collect()
    }

    /// Marginal means and variances. With `with_nugget` the variances are for
    /// noisy observations `z` rather than the process `y`.
    pub fn marginals(&self, with_nugget: bool) -> (Vec<f64>, Vec<f64>) {
        let mut mean = vec![0.0; self.len()];
        let mut var = vec![0.0; self.len()];
        for lp in &self.leaves {
            let mut mu = lp.residual_mean.clone();
            let mut v: DVector<f64> = lp.residual_cov.diagonal();
            for ((b, &id), w) in lp.btilde.iter().zip(&lp.chain).zip(self.whitened_basis(lp)) {
                mu += b * &self.weight(id).mean;
                for (j, col) in w.column_iter().enumerate() {
                    v[j] += col.norm_squared();
                }
            }
            for (col, &i) in lp.indices.iter().enumerate() {
                mean[i] = mu[col];
                var[i] = v[col].max(0.0) + if with_nugget { self.nugget } else { 0.0 };
            }
        }
        (mean, var)
    }

    /// Full predictive covariance matrix (for at most `cap` points).
    pub fn joint_covariance(&self, with_nugget: bool, cap: usize) -> Result<DMatrix<f64>> {
        let n = self.len();
        if n > cap {
            return Err(MraError::OracleCap { size: n, cap });
        }
        let whitened: Vec<Vec<DMatrix<f64>>> = self.leaves.iter().map(|lp| self.whitened_basis(lp)).collect();
        let mut out = DMatrix::zeros(n, n);
        for (a, la) in self.leaves.iter().enumerate() {
            for (b, lb) in self.leaves.iter().enumerate().skip(a) {
                let shared = la.chain.iter().zip(&lb.chain).take_while(|(x, y)| x == y).count();
                let mut blk = if a == b { la.residual_cov.clone() } else { DMatrix::zeros(la.indices.len(), lb.indices.len()) };
                for m in 0..shared {
                    blk += whitened[a][m].tr_mul(&whitened[b][m]);
                }
                for (ci, &i) in la.indices.iter().enumerate() {
                    for (cj, &j) in lb.indices.iter().enumerate() {
                        out[(i, j)] = blk[(ci, cj)];
                        out[(j, i)] = blk[(ci, cj)];
                    }
                }
            }
        }
        if with_nugget {
            for i in 0..n {
                out[(i, i)] += self.nugget;
            }
        }
        Ok(out)
    }

    /// `count` joint draws, one row per draw. Identical seeds give identical draws.
    pub fn sample(&self, count: usize, seed: u64, with_nugget: bool) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(MraError::InvalidArgument("sample count must be at least 1".into()));
        }
        let mut needed: Vec<usize> = self.leaves.iter().flat_map(|lp| lp.chain.iter().copied()).collect();
        needed.sort_unstable();
        needed.dedup();
        let residual_chols = self
            .leaves
            .iter()
            .map(|lp| {
                Chol::with_jitter(lp.residual_cov.clone(), self.variance).ok_or_else(|| {
                    MraError::NotPositiveDefinite(format!("predictive residual covariance in leaf {}", lp.leaf))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normals = |k: usize| DVector::from_fn(k, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let mut eta: Vec<Option<DVector<f64>>> = vec![None; self.weights.len()];
        let sd_nugget = self.nugget.sqrt();
        let mut out = DMatrix::zeros(count, self.len());
        for draw in 0..count {
            for &id in &needed {
                let w = self.weight(id);
                let z = normals(w.mean.len());
                eta[id] = Some(&w.mean + w.precision_chol.solve_lt_vec(&z));
            }
            for (lp, rc) in self.leaves.iter().zip(&residual_chols) {
                let z = normals(lp.indices.len());
                let mut v = &lp.residual_mean + rc.l() * z;
                for (b, &id) in lp.btilde.iter().zip(&lp.chain) {
                    v += b * eta[id].as_ref().expect("drawn above");
                }
                if with_nugget {
                    v += normals(lp.indices.len()) * sd_nugget;
                }
                for (col, &i) in lp.indices.iter().enumerate() {
                    out[(draw, i)] = v[col];
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, KnotStrategy, SplitPolicy};
    use crate::inference::upward;
    use crate::prior::compute_prior;
    use rand::Rng;

    struct Fixture {
        tree: PartitionTree,
        model: CovarianceModel,
        prior: PriorFactors,
        post: PosteriorFactors,
        y: Vec<f64>,
    }

    fn fixture(n: usize, branching: &[usize], r: usize, nugget: f64, seed: u64) -> Fixture {
        let model = CovarianceModel::matern15(1.0, 0.2, nugget).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let y: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin() + 0.1 * rng.random::<f64>()).collect();
        let tree = PartitionTree::build(Domain::unit(1), branching, SplitPolicy::CycleAxes)
            .unwrap()
            .assign_locations(Locations::from_1d(&xs), Some(y.clone()))
            .unwrap()
            .place_knots(&KnotStrategy::equidistant(r))
            .unwrap();
        let prior = compute_prior(&tree, &model).unwrap();
        let post = upward(&tree, &prior, &y, &Executor::serial()).unwrap();
        Fixture { tree, model, prior, post, y }
    }

    #[test]
    fn interpolates_noiseless_data() {
        let f = fixture(60, &[2, 2], 4, 0.0, 1);
        let pd = predict(&f.tree, &f.model, &f.prior, &f.post, f.tree.observations(), &Executor::serial()).unwrap();
        let (mean, var) = pd.marginals(false);
        for i in 0..60 {
            assert!((mean[i] - f.y[i]).abs() < 1e-6, "{i}: {} vs {}", mean[i], f.y[i]);
            assert!(var[i].abs() < 1e-6);
        }
        for lp in &pd.leaves {
            assert!(lp.residual_cov.abs().max() < 1e-8);
        }
    }

    #[test]
    fn point_at_root_knot_has_plain_covariance_row() {
        let f = fixture(30, &[2], 3, 0.1, 2);
        let q = f.tree.knots(0);
        let s = Locations::new(1, q.point(1).to_vec()).unwrap();
        let leaf = f.tree.locate(s.point(0)).unwrap();
        let pp = compute_pred_prior(&f.tree, &f.model, &f.prior, leaf, &s);
        assert_eq!(pp.u[0], f.model.cross(&s, q));
    }

    #[test]
    fn no_observations_leaves_prior_basis() {
        let model = CovarianceModel::exponential(1.0, 0.3, 0.1).unwrap();
        let tree = PartitionTree::build(Domain::unit(1), &[2, 2], SplitPolicy::CycleAxes)
            .unwrap()
            .assign_locations(Locations::empty(1), Some(Vec::new()))
            .unwrap()
            .place_knots(&KnotStrategy::equidistant(3))
            .unwrap();
        let prior = compute_prior(&tree, &model).unwrap();
        let post = upward(&tree, &prior, &[], &Executor::serial()).unwrap();
        let s = Locations::from_1d(&[0.1, 0.2, 0.7]);
        for ord in 0..tree.n_leaves() {
            let leaf = tree.leaf_id(ord);
            let pts = Locations::from_1d(&[tree.region(leaf).lower[0] + 0.01]);
            let pp = compute_pred_prior(&tree, &model, &prior, leaf, &pts);
            let bt = posterior_basis_sweep(&tree, &prior, &post, leaf, &pp);
            for m in 0..2 {
                assert!((&bt[m] - &pp.u[m]).abs().max() < 1e-12);
            }
        }
        let pd = predict(&tree, &model, &prior, &post, &s, &Executor::serial()).unwrap();
        let (mean, var) = pd.marginals(false);
        assert!(mean.iter().all(|m| m.abs() < 1e-12));
        assert!(var.iter().all(|v| (v - 1.0).abs() < 1e-8));
    }

    #[test]
    fn zero_depth_is_kriging() {
        let model = CovarianceModel::exponential(1.0, 0.3, 0.05).unwrap();
        let s = Locations::from_1d(&[0.1, 0.35, 0.8]);
        let y = vec![0.5, -0.2, 1.0];
        let tree = PartitionTree::single_region(Domain::unit(1)).assign_locations(s.clone(), Some(y.clone())).unwrap();
        let prior = compute_prior(&tree, &model).unwrap();
        let post = upward(&tree, &prior, &y, &Executor::serial()).unwrap();
        let sp = Locations::from_1d(&[0.2, 0.6]);
        let pd = predict(&tree, &model, &prior, &post, &sp, &Executor::serial()).unwrap();
        let (mean, var) = pd.marginals(false);
        let c = model.cov_matrix(&s, &s, true).unwrap();
        let k = model.cross(&sp, &s);
        let cinv = c.try_inverse().unwrap();
        let want_mean = &k * &cinv * DVector::from_vec(y);
        let want_cov = model.cov_sym(&sp) - &k * &cinv * k.transpose();
        for i in 0..2 {
            assert!((mean[i] - want_mean[i]).abs() < 1e-12);
            assert!((var[i] - want_cov[(i, i)]).abs() < 1e-12);
        }
        let (_, zvar) = pd.marginals(true);
        assert!((zvar[0] - var[0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn marginals_agree_with_joint_diagonal() {
        let f = fixture(80, &[2, 2, 2], 3, 0.05, 5);
        let sp = Locations::grid_1d(25, 0.0, 1.0);
        let pd = predict(&f.tree, &f.model, &f.prior, &f.post, &sp, &Executor::serial()).unwrap();
        let (_, var) = pd.marginals(false);
        let joint = pd.joint_covariance(false, 100).unwrap();
        for i in 0..25 {
            assert!((joint[(i, i)] - var[i]).abs() < 1e-12);
        }
        assert!(crate::linalg::min_eigenvalue(&joint) > -1e-8);
        assert!(pd.joint_covariance(false, 10).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let f = fixture(50, &[2, 2], 3, 0.05, 6);
        let sp = Locations::from_1d(&[0.1, 0.6, 0.61]);
        let pd = predict(&f.tree, &f.model, &f.prior, &f.post, &sp, &Executor::serial()).unwrap();
        let a = pd.sample(20, 7, false).unwrap();
        let b = pd.sample(20, 7, false).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, pd.sample(20, 8, false).unwrap());
        assert!(pd.sample(0, 1, false).is_err());
    }

    #[test]
    fn outside_domain_is_rejected() {
        let f = fixture(20, &[2], 3, 0.05, 7);
        let sp = Locations::from_1d(&[0.5, 1.5]);
        let err = predict(&f.tree, &f.model, &f.prior, &f.post, &sp, &Executor::serial()).unwrap_err();
        assert!(matches!(err, MraError::OutsideDomain { index: 1 }));
    }
}
