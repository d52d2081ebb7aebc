//! Recursive domain partitioning, location bucketing and knot placement.
//!
//! Regions are stored in a flat arena in breadth-first order, so all regions
//! of one resolution are contiguous and the leaves occupy the tail of the
//! arena. Boxes are half-open on their upper faces except where they touch
//! the upper boundary of the domain, which makes every location in the
//! domain belong to exactly one leaf.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{MraError, Result};

/// Axis-aligned box in `d` dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(MraError::Config("domain must have at least one dimension".into()));
        }
        if lower.len() != upper.len() {
            return Err(MraError::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(MraError::Config("domain bounds must satisfy lower < upper".into()));
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `[0,1]^d`.
    pub fn unit(dim: usize) -> Self {
        Self { lower: vec![0.0; dim.max(1)], upper: vec![1.0; dim.max(1)] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Boundary-inclusive membership.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).product()
    }
}

/// Position of a region in the hierarchy: the sequence `(j1, ..., jm)` of
/// one-based child indices. The empty path is the whole domain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionPath(Vec<u32>);

impl RegionPath {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn from_indices(indices: Vec<u32>) -> Self {
        Self(indices)
    }

    pub fn child(&self, j: u32) -> Self {
        let mut v = self.0.clone();
        v.push(j);
        Self(v)
    }

    pub fn parent(&self) -> Option<Self> {
        if self.0.is_empty() {
            None
        } else {
            Some(Self(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn resolution(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for RegionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, ")")
    }
}

/// A list of points in `d` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Locations {
    dim: usize,
    coords: Vec<f64>,
}

impl Locations {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(MraError::Config("locations need at least one dimension".into()));
        }
        if coords.len() % dim != 0 {
            return Err(MraError::DimensionMismatch { expected: dim, got: coords.len() % dim });
        }
        Ok(Self { dim, coords })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, coords: Vec::new() }
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut coords = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(MraError::DimensionMismatch { expected: dim, got: row.len() });
            }
            coords.extend_from_slice(row);
        }
        Ok(Self { dim, coords })
    }

    /// One-dimensional locations from scalar coordinates.
    pub fn from_1d(xs: &[f64]) -> Self {
        Self { dim: 1, coords: xs.to_vec() }
    }

    /// `n` equispaced cell-centre points `(i + 0.5)/n` on `[lower, upper]`.
    pub fn grid_1d(n: usize, lower: f64, upper: f64) -> Self {
        let h = (upper - lower) / n as f64;
        Self::from_1d(&(0..n).map(|i| lower + (i as f64 + 0.5) * h).collect::<Vec<_>>())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn push(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim, "point dimension");
        self.coords.extend_from_slice(p);
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Self { dim: self.dim, coords }
    }

    /// Concatenation `self ∪ other`, preserving order.
    pub fn concat(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "point dimension");
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Self { dim: self.dim, coords }
    }
}

/// How a region is split into its children.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitPolicy {
    /// Equal-measure slabs along axis `level mod d`.
    #[default]
    CycleAxes,
}

#[derive(Debug, Clone)]
pub struct Region {
    pub path: RegionPath,
    pub level: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Upper faces that are closed because they lie on the domain boundary.
    pub closed_upper: Vec<bool>,
    pub parent: Option<usize>,
    pub children: Range<usize>,
    pub knots: Locations,
}

impl Region {
    /// Half-open membership with closure on the domain's upper boundary.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().enumerate().all(|(k, &x)| {
            self.lower[k] <= x && (x < self.upper[k] || (self.closed_upper[k] && x <= self.upper[k]))
        })
    }

    /// Closed-box membership (used for knots, which may sit on faces).
    pub fn contains_closed(&self, p: &[f64]) -> bool {
        p.iter().enumerate().all(|(k, &x)| self.lower[k] <= x && x <= self.upper[k])
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).product()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Knot layouts for non-leaf regions.
#[derive(Debug, Clone, PartialEq)]
pub enum KnotPlacement {
    /// Regular lattice at fractions `(i + 0.5)/g` of each axis.
    EquidistantInterior,
    /// Knots at the internal boundaries of the region's children (1-D only).
    ChildBoundaries,
    /// Explicit knots for every non-leaf region.
    UserSupplied(BTreeMap<RegionPath, Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnotStrategy {
    pub placement: KnotPlacement,
    /// Knots per region for resolutions `0..M`. A single entry is broadcast.
    pub per_level: Vec<usize>,
}

impl KnotStrategy {
    pub fn equidistant(r: usize) -> Self {
        Self { placement: KnotPlacement::EquidistantInterior, per_level: vec![r] }
    }

    pub fn equidistant_per_level(per_level: Vec<usize>) -> Self {
        Self { placement: KnotPlacement::EquidistantInterior, per_level }
    }

    pub fn child_boundaries(r: usize) -> Self {
        Self { placement: KnotPlacement::ChildBoundaries, per_level: vec![r] }
    }

    fn r_at(&self, level: usize) -> usize {
        if self.per_level.len() == 1 {
            self.per_level[0]
        } else {
            self.per_level[level]
        }
    }
}

/// Region hierarchy with knots and observation buckets.
#[derive(Debug, Clone)]
pub struct PartitionTree {
    domain: Domain,
    branching: Vec<usize>,
    regions: Vec<Region>,
    /// `level_start[m]..level_start[m + 1]` are the region ids at resolution `m`.
    level_start: Vec<usize>,
    observations: Locations,
    values: Option<Vec<f64>>,
    /// Original observation indices per leaf ordinal, in input order.
    leaf_obs: Vec<Vec<usize>>,
}

impl PartitionTree {
    /// Builds the full hierarchy for `branching = (J_1, ..., J_M)`.
    pub fn build(domain: Domain, branching: &[usize], policy: SplitPolicy) -> Result<Self> {
        if branching.is_empty() {
            return Err(MraError::Config("branching sequence is empty".into()));
        }
        if let Some(&j) = branching.iter().find(|&&j| j < 2) {
            return Err(MraError::Config(format!("branching factor {j} < 2")));
        }
        Ok(Self::build_unchecked(domain, branching, policy))
    }

    /// The unpartitioned tree (`M = 0`): the root is also the only leaf.
    pub fn single_region(domain: Domain) -> Self {
        Self::build_unchecked(domain, &[], SplitPolicy::CycleAxes)
    }

    fn build_unchecked(domain: Domain, branching: &[usize], _policy: SplitPolicy) -> Self {
        let d = domain.dim();
        let total: usize = (0..=branching.len())
            .map(|m| branching[..m].iter().product::<usize>())
            .sum();
        let mut regions = Vec::with_capacity(total);
        regions.push(Region {
            path: RegionPath::root(),
            level: 0,
            lower: domain.lower.clone(),
            upper: domain.upper.clone(),
            closed_upper: vec![true; d],
            parent: None,
            children: 0..0,
            knots: Locations::empty(d),
        });
        let mut level_start = vec![0, 1];
        for (m, &j_count) in branching.iter().enumerate() {
            let axis = m % d;
            let (start, end) = (level_start[m], level_start[m + 1]);
            for id in start..end {
                let first = regions.len();
                let (lo, hi) = (regions[id].lower[axis], regions[id].upper[axis]);
                for j in 0..j_count {
                    let parent = &regions[id];
                    let mut lower = parent.lower.clone();
                    let mut upper = parent.upper.clone();
                    let mut closed = parent.closed_upper.clone();
                    lower[axis] = lo + (hi - lo) * j as f64 / j_count as f64;
                    if j + 1 < j_count {
                        upper[axis] = lo + (hi - lo) * (j + 1) as f64 / j_count as f64;
                        closed[axis] = false;
                    }
                    regions.push(Region {
                        path: parent.path.child(j as u32 + 1),
                        level: m + 1,
                        lower,
                        upper,
                        closed_upper: closed,
                        parent: Some(id),
                        children: 0..0,
                        knots: Locations::empty(d),
                    });
                }
                regions[id].children = first..regions.len();
            }
            level_start.push(regions.len());
        }
        let n_leaves = level_start[branching.len() + 1] - level_start[branching.len()];
        Self {
            domain,
            branching: branching.to_vec(),
            regions,
            level_start,
            observations: Locations::empty(d),
            values: None,
            leaf_obs: vec![Vec::new(); n_leaves],
        }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn branching(&self) -> &[usize] {
        &self.branching
    }

    /// Number of resolutions below the root (`M`).
    pub fn depth(&self) -> usize {
        self.branching.len()
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn region(&self, id: usize) -> &Region {
        &self.regions[id]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn level_ids(&self, m: usize) -> Range<usize> {
        self.level_start[m]..self.level_start[m + 1]
    }

    pub fn leaf_ids(&self) -> Range<usize> {
        self.level_ids(self.depth())
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_ids().len()
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        id >= self.level_start[self.depth()]
    }

    pub fn leaf_ordinal(&self, id: usize) -> usize {
        id - self.level_start[self.depth()]
    }

    pub fn leaf_id(&self, ordinal: usize) -> usize {
        self.level_start[self.depth()] + ordinal
    }

    /// Region ids from the root down to `id`, inclusive.
    pub fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut chain = vec![id];
        let mut cur = id;
        while let Some(p) = self.regions[cur].parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain
    }

    pub fn find(&self, path: &RegionPath) -> Option<usize> {
        let mut id = 0;
        for &j in path.indices() {
            let ch = &self.regions[id].children;
            let j = j as usize;
            if j == 0 || j > ch.len() {
                return None;
            }
            id = ch.start + j - 1;
        }
        Some(id)
    }

    pub fn knots(&self, id: usize) -> &Locations {
        &self.regions[id].knots
    }

    /// Number of knots at each resolution, taken from the first region of that level.
    pub fn knots_per_level(&self) -> Vec<usize> {
        (0..self.depth()).map(|m| self.regions[self.level_start[m]].knots.len()).collect()
    }

    /// Leaf region id containing `p`, or `None` if `p` is outside the domain.
    pub fn locate(&self, p: &[f64]) -> Option<usize> {
        if !self.domain.contains(p) {
            return None;
        }
        let d = self.dim();
        let mut id = 0;
        while !self.regions[id].is_leaf() {
            let region = &self.regions[id];
            let axis = region.level % d;
            let ch = region.children.clone();
            let count = ch.len();
            let (lo, hi) = (region.lower[axis], region.upper[axis]);
            let x = p[axis];
            let mut j = (((x - lo) / (hi - lo)) * count as f64).floor().clamp(0.0, (count - 1) as f64) as usize;
            while j > 0 && x < self.regions[ch.start + j].lower[axis] {
                j -= 1;
            }
            while j + 1 < count && x >= self.regions[ch.start + j].upper[axis] {
                j += 1;
            }
            id = ch.start + j;
        }
        Some(id)
    }

    /// Buckets locations by leaf ordinal, preserving input order within each leaf.
    pub fn bucket(&self, locations: &Locations) -> Result<Vec<Vec<usize>>> {
        if locations.dim() != self.dim() {
            return Err(MraError::DimensionMismatch { expected: self.dim(), got: locations.dim() });
        }
        let mut buckets = vec![Vec::new(); self.n_leaves()];
        for (i, p) in locations.iter().enumerate() {
            let leaf = self.locate(p).ok_or(MraError::OutsideDomain { index: i })?;
            buckets[self.leaf_ordinal(leaf)].push(i);
        }
        Ok(buckets)
    }

    /// Assigns observation locations (and optionally values) to leaves.
    /// Leaf knots become the leaf's observation locations.
    pub fn assign_locations(mut self, locations: Locations, values: Option<Vec<f64>>) -> Result<Self> {
        if let Some(v) = &values {
            if v.len() != locations.len() {
                return Err(MraError::DimensionMismatch { expected: locations.len(), got: v.len() });
            }
        }
        let buckets = self.bucket(&locations)?;
        for (ordinal, idx) in buckets.iter().enumerate() {
            let id = self.leaf_id(ordinal);
            self.regions[id].knots = locations.subset(idx);
        }
        self.leaf_obs = buckets;
        self.observations = locations;
        self.values = values;
        Ok(self)
    }

    pub fn observations(&self) -> &Locations {
        &self.observations
    }

    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }

    pub fn values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    /// Original observation indices in the leaf with the given ordinal.
    pub fn leaf_obs(&self, ordinal: usize) -> &[usize] {
        &self.leaf_obs[ordinal]
    }

    /// Places knots in every non-leaf region.
    pub fn place_knots(mut self, strategy: &KnotStrategy) -> Result<Self> {
        let m_depth = self.depth();
        if m_depth == 0 {
            return Ok(self);
        }
        let user_supplied = matches!(strategy.placement, KnotPlacement::UserSupplied(_));
        if !user_supplied && strategy.per_level.len() != 1 && strategy.per_level.len() != m_depth {
            return Err(MraError::Config(format!(
                "knot counts given for {} levels, tree has {m_depth} non-leaf levels",
                strategy.per_level.len()
            )));
        }
        for m in 0..m_depth {
            let r = if user_supplied { 0 } else { strategy.r_at(m) };
            if !user_supplied && r == 0 && m > 0 {
                return Err(MraError::Config(format!("zero knots are only permitted at resolution 0 (level {m})")));
            }
            for id in self.level_ids(m) {
                let knots = match &strategy.placement {
                    KnotPlacement::EquidistantInterior => equidistant_knots(&self.regions[id], r),
                    KnotPlacement::ChildBoundaries => self.child_boundary_knots(id, r)?,
                    KnotPlacement::UserSupplied(map) => {
                        let region = &self.regions[id];
                        let rows = map.get(&region.path).ok_or_else(|| {
                            MraError::Config(format!("no knots supplied for region {}", region.path))
                        })?;
                        if rows.is_empty() && m > 0 {
                            return Err(MraError::Config(format!(
                                "zero knots are only permitted at resolution 0 (region {})",
                                region.path
                            )));
                        }
                        Locations::from_rows(self.dim(), rows)?
                    }
                };
                if let Some(bad) = knots.iter().position(|q| !self.regions[id].contains_closed(q)) {
                    return Err(MraError::Config(format!(
                        "knot {bad} of region {} lies outside the region",
                        self.regions[id].path
                    )));
                }
                self.regions[id].knots = knots;
            }
        }
        Ok(self)
    }

    fn child_boundary_knots(&self, id: usize, r: usize) -> Result<Locations> {
        if self.dim() != 1 {
            return Err(MraError::Unsupported("child-boundary knots require a one-dimensional domain".into()));
        }
        let children = self.regions[id].children.clone();
        if r + 1 != children.len() {
            return Err(MraError::Config(format!(
                "child-boundary knots need r = J - 1 = {}, got r = {r}",
                children.len() - 1
            )));
        }
        let xs: Vec<f64> = children.skip(1).map(|c| self.regions[c].lower[0]).collect();
        Ok(Locations::from_1d(&xs))
    }
}

/// Splits `r` into per-axis lattice counts whose product is exactly `r`,
/// giving larger counts to longer axes.
pub(crate) fn lattice_counts(r: usize, extents: &[f64]) -> Vec<usize> {
    let d = extents.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| extents[b].total_cmp(&extents[a]).then(a.cmp(&b)));
    let mut counts = vec![1; d];
    let mut remaining = r;
    for (i, &axis) in order.iter().enumerate() {
        if i + 1 == d {
            counts[axis] = remaining;
            break;
        }
        let target = (remaining as f64).powf(1.0 / (d - i) as f64);
        let pick = (1..=remaining)
            .filter(|f| remaining % f == 0)
            .find(|&f| f as f64 >= target - 1e-9)
            .unwrap_or(remaining);
        counts[axis] = pick;
        remaining /= pick;
    }
    counts
}

fn equidistant_knots(region: &Region, r: usize) -> Locations {
    let d = region.lower.len();
    let mut out = Locations::empty(d);
    if r == 0 {
        return out;
    }
    let extents: Vec<f64> = region.lower.iter().zip(&region.upper).map(|(lo, hi)| hi - lo).collect();
    let counts = lattice_counts(r, &extents);
    let mut idx = vec![0usize; d];
    let mut p = vec![0.0; d];
    for _ in 0..r {
        for k in 0..d {
            p[k] = region.lower[k] + (idx[k] as f64 + 0.5) / counts[k] as f64 * extents[k];
        }
        out.push(&p);
        // odometer with the last axis fastest
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}
