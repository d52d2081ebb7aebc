//! JSON experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covariance::{CovarianceModel, Family};
use crate::error::{MraError, Result};
use crate::geometry::{Domain, KnotPlacement, KnotStrategy, Locations, PartitionTree, RegionPath, SplitPolicy};
use crate::oracle;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "default_family")]
    pub family: String,
    pub variance: f64,
    pub range: f64,
    #[serde(default)]
    pub nugget: f64,
}

fn default_family() -> String {
    "matern15".into()
}

impl ModelSpec {
    pub fn build(&self) -> Result<CovarianceModel> {
        let family = match self.family.as_str() {
            "matern15" | "matern1.5" => Family::Matern15,
            "exponential" => Family::Exponential,
            other => return Err(MraError::Config(format!("unknown covariance family {other:?}"))),
        };
        CovarianceModel::new(family, self.variance, self.range, self.nugget)
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { family: default_family(), variance: 0.95, range: 0.05, nugget: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KnotKind {
    #[default]
    Equidistant,
    ChildBoundaries,
    /// Knots read from a CSV with a `path` column (`""` for the root,
    /// `"0.2"` for child 2 of child 0) and `x1..xd`.
    User,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    /// Bounding box; defaults to the unit cube of the data dimension.
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    /// Explicit branching factors per level. When absent the tree uses
    /// `children` per split and `log_children(n / r)` levels.
    #[serde(default)]
    pub branching: Option<Vec<usize>>,
    #[serde(default = "default_children")]
    pub children: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    /// Knot counts per level; overrides `r`.
    #[serde(default)]
    pub r_per_level: Option<Vec<usize>>,
    #[serde(default)]
    pub knots: KnotKind,
    #[serde(default)]
    pub knots_file: Option<PathBuf>,
}

fn default_children() -> usize {
    4
}

fn default_r() -> usize {
    30
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            domain: None,
            branching: None,
            children: default_children(),
            r: default_r(),
            r_per_level: None,
            knots: KnotKind::Equidistant,
            knots_file: None,
        }
    }
}

/// Number of levels `round(log_J(n / r))`, at least 1.
pub fn auto_depth(n: usize, r: usize, j: usize) -> usize {
    if n <= r || j < 2 {
        return 1;
    }
    ((n as f64 / r as f64).ln() / (j as f64).ln()).round().max(1.0) as usize
}

impl PartitionSpec {
    pub fn domain(&self, dim: usize) -> Result<Domain> {
        match &self.domain {
            Some(d) => Domain::new(d.lower.clone(), d.upper.clone()),
            None => Ok(Domain::unit(dim)),
        }
    }

    pub fn branching_for(&self, n: usize) -> Vec<usize> {
        match &self.branching {
            Some(b) => b.clone(),
            None => vec![self.children; auto_depth(n, self.r, self.children)],
        }
    }

    pub fn strategy(&self) -> Result<KnotStrategy> {
        let per_level = self.r_per_level.clone().unwrap_or_else(|| vec![self.r]);
        Ok(match self.knots {
            KnotKind::Equidistant => KnotStrategy::equidistant_per_level(per_level),
            KnotKind::ChildBoundaries => KnotStrategy { placement: KnotPlacement::ChildBoundaries, per_level },
            KnotKind::User => {
                let path = self
                    .knots_file
                    .as_ref()
                    .ok_or_else(|| MraError::Config("user knots need knots_file".into()))?;
                KnotStrategy { placement: KnotPlacement::UserSupplied(read_user_knots(path)?), per_level }
            }
        })
    }

    /// Builds the tree, assigns observations and places knots.
    pub fn build_tree(&self, s: Locations, y: Option<Vec<f64>>) -> Result<PartitionTree> {
        let domain = self.domain(s.dim())?;
        let branching = self.branching_for(s.len());
        let tree = if branching.is_empty() {
            PartitionTree::single_region(domain)
        } else {
            PartitionTree::build(domain, &branching, SplitPolicy::CycleAxes)?
        };
        tree.assign_locations(s, y)?.place_knots(&self.strategy()?)
    }
}

fn read_user_knots(path: &Path) -> Result<BTreeMap<RegionPath, Vec<Vec<f64>>>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let pcol = header
        .iter()
        .position(|h| h == "path")
        .ok_or_else(|| MraError::Config(format!("{}: missing path column", path.display())))?;
    let xcols: Vec<usize> = (1..).map_while(|j| header.iter().position(|h| *h == format!("x{j}"))).collect();
    let mut out: BTreeMap<RegionPath, Vec<Vec<f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let p = rec.get(pcol).unwrap_or("");
        let idx = if p.is_empty() {
            Vec::new()
        } else {
            p.split('.')
                .map(|t| t.parse::<u32>().map_err(|_| MraError::Config(format!("bad region path {p:?}"))))
                .collect::<Result<Vec<_>>>()?
        };
        let x = xcols
            .iter()
            .map(|&j| rec[j].parse::<f64>().map_err(|_| MraError::Config(format!("bad coordinate {:?}", &rec[j]))))
            .collect::<Result<Vec<_>>>()?;
        out.entry(RegionPath::from_indices(idx)).or_default().push(x);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// Cell centres `(i + 0.5) / n` (1-D only).
    #[default]
    Grid,
    /// Independent uniform points in the domain.
    Uniform,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SimMethod {
    /// Circulant embedding on a 1-D grid, dense Cholesky otherwise.
    #[default]
    Auto,
    Circulant,
    Dense,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub n: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default)]
    pub method: SimMethod,
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    Csv(PathBuf),
    Simulate(SimulationSpec),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Competitor {
    /// Dense Cholesky likelihood.
    Exact,
    /// Durbin–Levinson likelihood (1-D regular grids).
    DlExact,
    /// M-RA with the configured partition.
    Mra,
    /// One resolution with r = 240 knots and n / 240 blocks.
    FsaFast,
    /// One resolution with 64 blocks and r = n / 64 knots.
    FsaSlow,
    /// Independent blocks of 240 points (no shared knots).
    Block,
    /// Kriging from the 20 nearest neighbours (prediction only).
    Local,
}

impl Competitor {
    pub fn name(self) -> &'static str {
        match self {
            Competitor::Exact => "exact",
            Competitor::DlExact => "dl-exact",
            Competitor::Mra => "mra",
            Competitor::FsaFast => "fsa-fast",
            Competitor::FsaSlow => "fsa-slow",
            Competitor::Block => "block",
            Competitor::Local => "local",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetMode {
    /// Equally spaced subsets of the full data set.
    #[default]
    FixedDomain,
    /// The first n points.
    IncreasingDomain,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub subset: SubsetMode,
    /// Fraction of points held out for prediction scoring.
    #[serde(default)]
    pub holdout: f64,
    #[serde(default = "default_neighbours")]
    pub neighbours: usize,
}

fn default_neighbours() -> usize {
    20
}

impl Default for CompareSpec {
    fn default() -> Self {
        Self { sizes: Vec::new(), subset: SubsetMode::FixedDomain, holdout: 0.0, neighbours: default_neighbours() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    #[serde(default = "default_bench_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "default_dense_sizes")]
    pub dense_sizes: Vec<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_bench_sizes() -> Vec<usize> {
    vec![1920, 7680, 30720, 122880]
}

fn default_dense_sizes() -> Vec<usize> {
    vec![256, 512, 1024, 2048]
}

fn default_repeats() -> usize {
    1
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self { sizes: default_bench_sizes(), dense_sizes: default_dense_sizes(), repeats: default_repeats() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum PredictTarget {
    /// Equispaced cell centres in the unit interval.
    Grid(usize),
    Csv(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PredictSpec {
    pub at: PredictTarget,
    #[serde(default)]
    pub samples: usize,
    /// Report variances for noisy observations instead of the process.
    #[serde(default)]
    pub with_nugget: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    #[serde(default)]
    pub zero_nugget: bool,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iter() -> usize {
    500
}

fn default_tol() -> f64 {
    1e-6
}

impl Default for FitSpec {
    fn default() -> Self {
        Self { zero_nugget: false, max_iter: default_max_iter(), tol: default_tol() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    #[serde(default = "default_dense_cap")]
    pub dense: usize,
    #[serde(default = "default_dl_cap")]
    pub durbin_levinson: usize,
    #[serde(default = "default_mra_cap")]
    pub mra: usize,
    #[serde(default = "default_fsa_slow_cap")]
    pub fsa_slow: usize,
}

fn default_dense_cap() -> usize {
    oracle::DENSE_CAP
}

fn default_dl_cap() -> usize {
    oracle::DL_CAP
}

fn default_mra_cap() -> usize {
    1_000_000
}

fn default_fsa_slow_cap() -> usize {
    32_768
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            dense: default_dense_cap(),
            durbin_levinson: default_dl_cap(),
            mra: default_mra_cap(),
            fsa_slow: default_fsa_slow_cap(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub partition: PartitionSpec,
    pub data: Option<DataSpec>,
    #[serde(default = "default_competitors")]
    pub competitors: Vec<Competitor>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default)]
    pub bench: BenchSpec,
    #[serde(default)]
    pub predict: Option<PredictSpec>,
    #[serde(default)]
    pub fit: FitSpec,
    #[serde(default)]
    pub caps: Caps,
}

fn default_competitors() -> Vec<Competitor> {
    vec![Competitor::Exact, Competitor::Mra]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config parses")
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| MraError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.build()?;
        if self.partition.children < 1 {
            return Err(MraError::Config("partition.children must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.compare.holdout) {
            return Err(MraError::Config("compare.holdout must lie in [0, 1)".into()));
        }
        if self.compare.sizes.windows(2).any(|w| w[0] > w[1]) || self.bench.sizes.windows(2).any(|w| w[0] > w[1]) {
            return Err(MraError::Config("size ladders must be ascending".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canon.as_bytes()))
    }
}
