//! Prior M-RA quantities.
//!
//! For every region `X` at resolution `m` with ancestors `a_0, ..., a_{m-1}`
//! the blocks `W^l_X = v_l(Q_X, Q_{a_l})` follow from
//!
//! ```text
//! W^l_X = C0(Q_X, Q_{a_l}) - Σ_{k<l} W^k_X K_{a_k} W^k_{a_l}'
//! ```
//!
//! Each `K_{a_k}` is held as the Cholesky factor `L_k` of `K⁻¹_{a_k}`, and
//! every product `W^k_X K W^k_{a_l}'` is formed from whitened blocks
//! `Z^k_X = L_k⁻¹ W^k_X'` as `Z^k_X' Z^k_{a_l}`. Non-leaf regions keep their
//! factor and whitened blocks; leaves keep the basis matrices `B^l`, their
//! whitened versions, and the leaf covariance `Σ = v_M(S, S) + σ²_ε I`.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};

use crate::covariance::CovarianceModel;
use crate::error::{MraError, Result};
use crate::executor::Executor;
use crate::geometry::{Locations, PartitionTree};
use crate::linalg::{pivot_select, symmetrize, Chol, PIVOT_TOL};

/// Default largest point set accepted by the dense oracle paths.
pub const ORACLE_CAP: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct InnerPrior {
    /// Knots that carry information: placed knots whose remainder variance
    /// given coarser knots vanishes are dropped.
    pub knots: Locations,
    /// `K⁻¹ = v_m(Q, Q)`.
    pub kinv: DMatrix<f64>,
    pub kinv_chol: Chol,
    /// `Z^k = L_k⁻¹ W^k'` for `k < m`, each `r_k × r_m`.
    pub whitened: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafPrior {
    /// `B^l = b_{a_l}(S)` for `l < M`, each `|S| × r_l`.
    pub basis: Vec<DMatrix<f64>>,
    /// `L_l⁻¹ B^l'`, each `r_l × |S|`.
    pub whitened: Vec<DMatrix<f64>>,
    pub sigma: DMatrix<f64>,
    pub sigma_chol: Chol,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodePrior {
    Inner(InnerPrior),
    Leaf(LeafPrior),
}

/// Prior factors for every region of a tree, indexed by region id.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorFactors {
    nodes: Vec<NodePrior>,
}

impl PriorFactors {
    pub fn node(&self, id: usize) -> &NodePrior {
        &self.nodes[id]
    }

    pub fn inner(&self, id: usize) -> &InnerPrior {
        match &self.nodes[id] {
            NodePrior::Inner(p) => p,
            NodePrior::Leaf(_) => panic!("region {id} is a leaf"),
        }
    }

    pub fn leaf(&self, id: usize) -> &LeafPrior {
        match &self.nodes[id] {
            NodePrior::Leaf(p) => p,
            NodePrior::Inner(_) => panic!("region {id} is not a leaf"),
        }
    }

    pub fn n_regions(&self) -> usize {
        self.nodes.len()
    }

    /// Number of stored floating-point values.
    pub fn stored_floats(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                NodePrior::Inner(p) => p.knots.coords().len() + 2 * p.kinv.len() + p.whitened.iter().map(DMatrix::len).sum::<usize>(),
                NodePrior::Leaf(p) => {
                    2 * p.basis.iter().map(DMatrix::len).sum::<usize>() + 2 * p.sigma.len()
                }
            })
            .sum()
    }

    /// Whitened basis of arbitrary points in leaf `leaf_id`.
    pub fn point_basis(&self, tree: &PartitionTree, model: &CovarianceModel, leaf_id: usize, pts: &Locations) -> PointBasis {
        let chain = tree.ancestors(leaf_id);
        let depth = tree.depth();
        let mut u = Vec::with_capacity(depth);
        let mut z: Vec<DMatrix<f64>> = Vec::with_capacity(depth);
        for l in 0..depth {
            let anc = self.inner(chain[l]);
            let mut ul = model.cross(pts, &anc.knots);
            for (k, zk) in z.iter().enumerate() {
                ul -= zk.tr_mul(&anc.whitened[k]);
            }
            z.push(anc.kinv_chol.solve_l(&ul.transpose()));
            u.push(ul);
        }
        PointBasis { u, z }
    }
}

/// Basis functions `U^l = b_{a_l}(P) = v_l(P, Q_{a_l})` evaluated at points
/// `P` of one leaf, with whitened versions `L_l⁻¹ U^l'`.
#[derive(Debug, Clone)]
pub struct PointBasis {
    pub u: Vec<DMatrix<f64>>,
    pub z: Vec<DMatrix<f64>>,
}

/// Computes all prior factors with the given executor.
pub fn compute_prior_with(tree: &PartitionTree, model: &CovarianceModel, exec: &Executor) -> Result<PriorFactors> {
    let depth = tree.depth();
    let nodes = exec.sweep_down(tree, |id, lookup| {
        let region = tree.region(id);
        let m = region.level;
        let chain = tree.ancestors(id);
        let q = &region.knots;
        let mut whitened: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        let mut blocks: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        for l in 0..m {
            let anc = match lookup.get(chain[l]) {
                NodePrior::Inner(p) => p,
                NodePrior::Leaf(_) => return Err(MraError::Internal("leaf on ancestor chain".into())),
            };
            let mut w = model.cross(q, &anc.knots);
            for (k, zk) in whitened.iter().enumerate() {
                w -= zk.tr_mul(&anc.whitened[k]);
            }
            whitened.push(anc.kinv_chol.solve_l(&w.transpose()));
            blocks.push(w);
        }
        let mut own = model.cov_sym(q);
        for zk in &whitened {
            own -= zk.tr_mul(zk);
        }
        symmetrize(&mut own);
        if m < depth {
            let keep = pivot_select(&own, PIVOT_TOL * model.variance);
            let (knots, own, whitened) = if keep.len() == q.len() {
                (q.clone(), own, whitened)
            } else {
                let own = own.select_rows(&keep).select_columns(&keep);
                let whitened = whitened.iter().map(|z| z.select_columns(&keep)).collect();
                (q.subset(&keep), own, whitened)
            };
            let kinv_chol = Chol::with_jitter(own.clone(), model.variance)
                .ok_or_else(|| MraError::SingularKnots(region.path.clone()))?;
            Ok(NodePrior::Inner(InnerPrior { knots, kinv: own, kinv_chol, whitened }))
        } else {
            for i in 0..own.nrows() {
                own[(i, i)] += model.nugget;
            }
            let sigma_chol = Chol::with_jitter(own.clone(), model.variance)
                .ok_or_else(|| MraError::LeafNotPositiveDefinite(region.path.clone()))?;
            Ok(NodePrior::Leaf(LeafPrior { basis: blocks, whitened, sigma: own, sigma_chol }))
        }
    })?;
    Ok(PriorFactors { nodes })
}

/// Computes all prior factors serially.
pub fn compute_prior(tree: &PartitionTree, model: &CovarianceModel) -> Result<PriorFactors> {
    compute_prior_with(tree, model, &Executor::serial())
}

/// Resolution of the deepest region containing both leaves.
fn common_level(tree: &PartitionTree, a: usize, b: usize) -> usize {
    let ca = tree.ancestors(a);
    let cb = tree.ancestors(b);
    ca.iter().zip(&cb).take_while(|(x, y)| x == y).count() - 1
}

/// M-RA covariance `C_M(s1, s2)`. Pairs in the same leaf get `C0`; other
/// pairs get the basis-function terms up to their deepest common resolution.
/// The nugget is added only when the two points coincide.
pub fn mra_covariance(
    prior: &PriorFactors,
    tree: &PartitionTree,
    model: &CovarianceModel,
    s1: &[f64],
    s2: &[f64],
) -> Result<f64> {
    let l1 = tree.locate(s1).ok_or(MraError::OutsideDomain { index: 0 })?;
    let l2 = tree.locate(s2).ok_or(MraError::OutsideDomain { index: 1 })?;
    let nugget = if s1 == s2 { model.nugget } else { 0.0 };
    if l1 == l2 {
        return Ok(model.cov(s1, s2) + nugget);
    }
    let c = common_level(tree, l1, l2);
    let b1 = prior.point_basis(tree, model, l1, &Locations::new(s1.len(), s1.to_vec())?);
    let b2 = prior.point_basis(tree, model, l2, &Locations::new(s2.len(), s2.to_vec())?);
    Ok((0..=c).map(|l| b1.z[l].column(0).dot(&b2.z[l].column(0))).sum::<f64>() + nugget)
}

/// Dense M-RA covariance matrix on `s`, with the nugget on the diagonal.
pub fn dense_mra_cov_matrix(
    prior: &PriorFactors,
    tree: &PartitionTree,
    model: &CovarianceModel,
    s: &Locations,
) -> Result<DMatrix<f64>> {
    dense_mra_cov_matrix_with(prior, tree, model, s, true, ORACLE_CAP)
}

pub fn dense_mra_cov_matrix_with(
    prior: &PriorFactors,
    tree: &PartitionTree,
    model: &CovarianceModel,
    s: &Locations,
    add_nugget: bool,
    cap: usize,
) -> Result<DMatrix<f64>> {
    let n = s.len();
    if n > cap {
        return Err(MraError::OracleCap { size: n, cap });
    }
    let buckets = tree.bucket(s)?;
    let mut leaf_of = vec![0usize; n];
    // whitened basis columns per point, per level
    let mut zcols: Vec<Vec<DVector<f64>>> = vec![Vec::new(); n];
    for (ord, idx) in buckets.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let leaf = tree.leaf_id(ord);
        let pb = prior.point_basis(tree, model, leaf, &s.subset(idx));
        for (col, &i) in idx.iter().enumerate() {
            leaf_of[i] = leaf;
            zcols[i] = pb.z.iter().map(|z| z.column(col).into_owned()).collect();
        }
    }
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = if leaf_of[i] == leaf_of[j] {
                model.cov(s.point(i), s.point(j))
            } else {
                let c = common_level(tree, leaf_of[i], leaf_of[j]);
                (0..=c).map(|l| zcols[i][l].dot(&zcols[j][l])).sum()
            };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
        if add_nugget {
            out[(j, j)] += model.nugget;
        }
    }
    Ok(out)
}

const MAGIC: &[u8; 8] = b"MRAPRIOR";
const VERSION: u32 = 2;

fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(m.nrows() as u64)?;
    w.write_u64::<LittleEndian>(m.ncols() as u64)?;
    for v in m.iter() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R) -> std::io::Result<DMatrix<f64>> {
    let rows = r.read_u64::<LittleEndian>()? as usize;
    let cols = r.read_u64::<LittleEndian>()? as usize;
    let mut data = vec![0.0; rows * cols];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    Ok(DMatrix::from_vec(rows, cols, data))
}

fn write_list<W: Write>(w: &mut W, ms: &[DMatrix<f64>]) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(ms.len() as u64)?;
    ms.iter().try_for_each(|m| write_matrix(w, m))
}

fn read_list<R: Read>(r: &mut R) -> std::io::Result<Vec<DMatrix<f64>>> {
    let n = r.read_u64::<LittleEndian>()? as usize;
    (0..n).map(|_| read_matrix(r)).collect()
}

fn write_chol<W: Write>(w: &mut W, c: &Chol) -> std::io::Result<()> {
    w.write_f64::<LittleEndian>(c.jitter())?;
    write_matrix(w, c.l())
}

fn read_chol<R: Read>(r: &mut R) -> std::io::Result<Chol> {
    let jitter = r.read_f64::<LittleEndian>()?;
    let l = read_matrix(r)?;
    Ok(Chol::from_parts(l, jitter))
}

impl PriorFactors {
    /// Writes the factors in the versioned little-endian format described in
    /// the README, tagged with the model parameters they were computed for.
    pub fn save(&self, path: &Path, model: &CovarianceModel) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        for v in [model.variance, model.range, model.nugget] {
            w.write_f64::<LittleEndian>(v)?;
        }
        w.write_u64::<LittleEndian>(self.nodes.len() as u64)?;
        for node in &self.nodes {
            match node {
                NodePrior::Inner(p) => {
                    w.write_u8(0)?;
                    write_matrix(&mut w, &DMatrix::from_column_slice(p.knots.dim(), p.knots.len(), p.knots.coords()))?;
                    write_matrix(&mut w, &p.kinv)?;
                    write_chol(&mut w, &p.kinv_chol)?;
                    write_list(&mut w, &p.whitened)?;
                }
                NodePrior::Leaf(p) => {
                    w.write_u8(1)?;
                    write_list(&mut w, &p.basis)?;
                    write_list(&mut w, &p.whitened)?;
                    write_matrix(&mut w, &p.sigma)?;
                    write_chol(&mut w, &p.sigma_chol)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads factors written by [`PriorFactors::save`]; returns them with the
    /// stored `(variance, range, nugget)`.
    pub fn load(path: &Path) -> Result<(Self, [f64; 3])> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(MraError::InvalidArgument("not a prior-factor file".into()));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(MraError::InvalidArgument(format!("unsupported prior-factor version {version}")));
        }
        let params = [r.read_f64::<LittleEndian>()?, r.read_f64::<LittleEndian>()?, r.read_f64::<LittleEndian>()?];
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let node = match r.read_u8()? {
                0 => NodePrior::Inner(InnerPrior {
                    knots: {
                        let k = read_matrix(&mut r)?;
                        Locations::new(k.nrows().max(1), k.as_slice().to_vec())?
                    },
                    kinv: read_matrix(&mut r)?,
                    kinv_chol: read_chol(&mut r)?,
                    whitened: read_list(&mut r)?,
                }),
                1 => NodePrior::Leaf(LeafPrior {
                    basis: read_list(&mut r)?,
                    whitened: read_list(&mut r)?,
                    sigma: read_matrix(&mut r)?,
                    sigma_chol: read_chol(&mut r)?,
                }),
                t => return Err(MraError::InvalidArgument(format!("bad node tag {t}"))),
            };
            nodes.push(node);
        }
        Ok((Self { nodes }, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, KnotStrategy, SplitPolicy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `cov(y0(A), y0(B) | y0(C))` by dense Gaussian conditioning.
    fn conditional_cov(model: &CovarianceModel, a: &Locations, b: &Locations, c: &Locations) -> DMatrix<f64> {
        let ab = model.cross(a, b);
        if c.is_empty() {
            return ab;
        }
        let cc = model.cov_sym(c);
        let ac = model.cross(a, c);
        let cb = model.cross(c, b);
        let inv = cc.cholesky().unwrap().inverse();
        ab - ac * inv * cb
    }

    /// Active knots of the first `upto` ancestors of `leaf`.
    fn ancestor_knots(tree: &PartitionTree, prior: &PriorFactors, leaf: usize, upto: usize) -> Locations {
        let chain = tree.ancestors(leaf);
        let mut out = Locations::empty(tree.dim());
        for &a in &chain[..upto] {
            out = out.concat(&prior.inner(a).knots);
        }
        out
    }

    fn setup(n: usize, branching: &[usize], r: usize, model: &CovarianceModel, seed: u64) -> (PartitionTree, PriorFactors) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let tree = PartitionTree::build(Domain::unit(1), branching, SplitPolicy::CycleAxes)
            .unwrap()
            .assign_locations(Locations::from_1d(&xs), None)
            .unwrap()
            .place_knots(&KnotStrategy::equidistant(r))
            .unwrap();
        let prior = compute_prior(&tree, model).unwrap();
        (tree, prior)
    }

    #[test]
    fn root_block_is_c0() {
        let model = CovarianceModel::matern15(1.0, 0.3, 0.0).unwrap();
        let (tree, prior) = setup(40, &[2, 2], 3, &model, 1);
        let q = tree.knots(0);
        assert_eq!(prior.inner(0).kinv, model.cov_matrix(q, q, false).unwrap());
    }

    #[test]
    fn zero_depth_sigma_is_dense_covariance() {
        let model = CovarianceModel::exponential(1.2, 0.2, 0.1).unwrap();
        let s = Locations::from_1d(&[0.1, 0.4, 0.45, 0.9]);
        let tree = PartitionTree::single_region(Domain::unit(1)).assign_locations(s.clone(), None).unwrap();
        let prior = compute_prior(&tree, &model).unwrap();
        let leaf = prior.leaf(0);
        assert!(leaf.basis.is_empty());
        assert!((&leaf.sigma - model.cov_matrix(&s, &s, true).unwrap()).abs().max() < 1e-15);
    }

    #[test]
    fn leaf_sigma_matches_dense_conditioning() {
        let model = CovarianceModel::matern15(1.0, 0.3, 0.0).unwrap();
        let (tree, prior) = setup(40, &[2, 2], 3, &model, 2);
        for id in tree.leaf_ids() {
            let s = tree.knots(id);
            let want = conditional_cov(&model, s, s, &ancestor_knots(&tree, &prior, id, 2));
            let got = &prior.leaf(id).sigma;
            assert!((got - &want).abs().max() < 1e-10, "leaf {id}");
        }
    }

    #[test]
    fn basis_matrices_match_conditional_covariances() {
        let model = CovarianceModel::exponential(0.8, 0.25, 0.0).unwrap();
        let (tree, prior) = setup(60, &[3, 2], 4, &model, 5);
        for id in tree.leaf_ids() {
            for l in 0..2 {
                let anc = tree.ancestors(id)[l];
                let want = conditional_cov(&model, tree.knots(id), &prior.inner(anc).knots, &ancestor_knots(&tree, &prior, id, l));
                assert!((&prior.leaf(id).basis[l] - want).abs().max() < 1e-10);
            }
        }
    }

    #[test]
    fn coincident_nested_knots_are_dropped() {
        // J = 3 with r = 4 puts two parent knots inside the middle child
        let model = CovarianceModel::exponential(0.8, 0.25, 0.0).unwrap();
        let (tree, prior) = setup(60, &[3, 2], 4, &model, 5);
        let mid = tree.region(0).children.start + 1;
        assert_eq!(tree.knots(mid).len(), 4);
        assert_eq!(prior.inner(mid).knots.len(), 2);
        assert!(prior.inner(mid).kinv_chol.jitter() == 0.0);
        assert_eq!(prior.inner(0).knots, *tree.knots(0));
    }

    #[test]
    fn same_leaf_pairs_are_exact_and_diagonal_preserved() {
        let model = CovarianceModel::matern15(1.0, 0.2, 0.05).unwrap();
        let (tree, prior) = setup(50, &[2, 3], 3, &model, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let leaf = tree.leaf_id(rng.random_range(0..tree.n_leaves()));
            let r = tree.region(leaf);
            let a = rng.random_range(r.lower[0]..r.upper[0]);
            let b = rng.random_range(r.lower[0]..r.upper[0]);
            let got = mra_covariance(&prior, &tree, &model, &[a], &[b]).unwrap();
            assert!((got - model.cov(&[a], &[b])).abs() < 1e-8);
        }
        // diagonal: C_M(s, s) = C0(s, s)
        for i in 0..100 {
            let s = [i as f64 / 99.0];
            let got = mra_covariance(&prior, &tree, &model, &s, &s).unwrap();
            assert!((got - 1.05).abs() < 1e-10);
        }
    }

    #[test]
    fn cross_leaf_pairs_match_truncated_sum_oracle() {
        // C_M(s1, s2) = C0 - cov(s1, s2 | knots of the common ancestors 0..=c)
        let model = CovarianceModel::matern15(1.0, 0.3, 0.0).unwrap();
        let (tree, prior) = setup(30, &[2, 2, 2], 3, &model, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let la = tree.locate(&[a]).unwrap();
            let lb = tree.locate(&[b]).unwrap();
            if la == lb {
                continue;
            }
            let c = common_level(&tree, la, lb);
            let cond = conditional_cov(
                &model,
                &Locations::from_1d(&[a]),
                &Locations::from_1d(&[b]),
                &ancestor_knots(&tree, &prior, la, c + 1),
            )[(0, 0)];
            let want = model.cov(&[a], &[b]) - cond;
            let got = mra_covariance(&prior, &tree, &model, &[a], &[b]).unwrap();
            assert!((got - want).abs() < 1e-10, "{a} {b}: {got} vs {want}");
        }
    }

    #[test]
    fn zero_root_knots_give_block_independence() {
        let model = CovarianceModel::exponential(1.0, 0.5, 0.0).unwrap();
        let tree = PartitionTree::build(Domain::unit(1), &[4], SplitPolicy::CycleAxes)
            .unwrap()
            .assign_locations(Locations::grid_1d(20, 0.0, 1.0), None)
            .unwrap()
            .place_knots(&KnotStrategy::equidistant_per_level(vec![0]))
            .unwrap();
        let prior = compute_prior(&tree, &model).unwrap();
        assert_eq!(mra_covariance(&prior, &tree, &model, &[0.1], &[0.9]).unwrap(), 0.0);
    }

    #[test]
    fn one_resolution_equals_full_scale_formula() {
        // B K B' + blockdiag(v_1) with explicit matrix inverse
        let model = CovarianceModel::exponential(1.0, 0.3, 0.0).unwrap();
        let (tree, prior) = setup(36, &[4], 5, &model, 6);
        let s = tree.observations().clone();
        let q = tree.knots(0);
        let kinv = model.cov_matrix(q, q, false).unwrap();
        let k = kinv.clone().try_inverse().unwrap();
        let b = model.cross(&s, q);
        let low_rank = &b * &k * b.transpose();
        let full = model.cov_sym(&s);
        let leaf_of: Vec<usize> = s.iter().map(|p| tree.locate(p).unwrap()).collect();
        let want = DMatrix::from_fn(s.len(), s.len(), |i, j| {
            if leaf_of[i] == leaf_of[j] {
                full[(i, j)]
            } else {
                low_rank[(i, j)]
            }
        });
        let got = dense_mra_cov_matrix(&prior, &tree, &model, &s).unwrap();
        assert!((got - want).abs().max() < 1e-10);
    }

    #[test]
    fn dense_matrix_is_psd_and_capped() {
        let model = CovarianceModel::matern15(1.0, 0.2, 0.0).unwrap();
        let (tree, prior) = setup(100, &[2, 2, 2], 4, &model, 12);
        let m = dense_mra_cov_matrix(&prior, &tree, &model, tree.observations()).unwrap();
        assert_eq!(m, m.transpose());
        assert!(crate::linalg::min_eigenvalue(&m) >= -1e-8);
        let err = dense_mra_cov_matrix_with(&prior, &tree, &model, tree.observations(), true, 10).unwrap_err();
        assert!(matches!(err, MraError::OracleCap { size: 100, cap: 10 }));
    }

    #[test]
    fn save_and_load_roundtrip() {
        let model = CovarianceModel::matern15(1.0, 0.2, 0.05).unwrap();
        let (tree, prior) = setup(40, &[3, 2], 4, &model, 13);
        assert!(prior.inner(2).knots.len() < tree.knots(2).len());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.bin");
        prior.save(&path, &model).unwrap();
        let (back, params) = PriorFactors::load(&path).unwrap();
        assert_eq!(back, prior);
        assert_eq!(params, [1.0, 0.2, 0.05]);
    }
}
