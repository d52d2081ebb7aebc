//! Exact reference computations: dense Gaussian process, Durbin–Levinson
//! likelihood, circulant-embedding simulation and local kriging.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::covariance::CovarianceModel;
use crate::error::{MraError, Result};
use crate::geometry::Locations;
use crate::linalg::Chol;

/// Default size limit for dense factorizations.
pub const DENSE_CAP: usize = 4096;
/// Size limit for the Durbin–Levinson path.
pub const DL_CAP: usize = 100_000;
/// Largest circulant embedding tried, relative to the smallest.
pub const MAX_EMBEDDING_FACTOR: usize = 4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(MraError::OracleCap { size: n, cap })
    } else {
        Ok(())
    }
}

/// Dense Gaussian process on a fixed set of locations: the Cholesky factor
/// of `C0(S, S) + σ²_ε I`.
#[derive(Debug, Clone)]
pub struct DenseGp {
    model: CovarianceModel,
    locations: Locations,
    chol: Chol,
}

impl DenseGp {
    pub fn new(model: &CovarianceModel, s: &Locations) -> Result<Self> {
        Self::with_cap(model, s, DENSE_CAP)
    }

    pub fn with_cap(model: &CovarianceModel, s: &Locations, cap: usize) -> Result<Self> {
        check_cap(s.len(), cap)?;
        let c = model.cov_matrix(s, s, true)?;
        let chol = Chol::new(c).ok_or_else(|| MraError::NotPositiveDefinite("dense data covariance".into()))?;
        Ok(Self { model: model.clone(), locations: s.clone(), chol })
    }

    pub fn chol(&self) -> &Chol {
        &self.chol
    }

    pub fn loglik(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.locations.len() {
            return Err(MraError::DimensionMismatch { expected: self.locations.len(), got: y.len() });
        }
        let w = self.chol.solve_l_vec(&DVector::from_column_slice(y));
        Ok(-0.5 * (self.chol.logdet() + w.norm_squared() + y.len() as f64 * LN_2PI))
    }

    /// Kriging means and variances of the process (no nugget) at `sp`.
    pub fn krige(&self, y: &[f64], sp: &Locations) -> Result<(Vec<f64>, Vec<f64>)> {
        let k = self.model.cov_matrix(sp, &self.locations, false)?;
        let g = self.chol.solve_l(&k.transpose());
        let w = self.chol.solve_l_vec(&DVector::from_column_slice(y));
        let mean = g.tr_mul(&w);
        let var = (0..sp.len())
            .map(|i| (self.model.cov(sp.point(i), sp.point(i)) - g.column(i).norm_squared()).max(0.0))
            .collect();
        Ok((mean.as_slice().to_vec(), var))
    }
}

/// Exact Gaussian log-density of `y` at `s`, including the `2π` constant.
pub fn exact_loglik(model: &CovarianceModel, s: &Locations, y: &[f64]) -> Result<f64> {
    DenseGp::new(model, s)?.loglik(y)
}

/// Exact kriging means and variances at `sp`.
pub fn exact_krige(model: &CovarianceModel, s: &Locations, y: &[f64], sp: &Locations) -> Result<(Vec<f64>, Vec<f64>)> {
    DenseGp::new(model, s)?.krige(y, sp)
}

/// Lag sequence `γ(0), ..., γ(n-1)` on a grid with the given spacing; the
/// nugget is included at lag 0.
pub fn grid_acvf(model: &CovarianceModel, n: usize, spacing: f64) -> Vec<f64> {
    let mut g: Vec<f64> = (0..n).map(|h| model.cov_at_lag(h as f64 * spacing)).collect();
    if let Some(g0) = g.first_mut() {
        *g0 += model.nugget;
    }
    g
}

/// Exact log-density of a stationary series with autocovariances `acvf`,
/// via the Durbin–Levinson recursion (O(n²) time, O(n) memory).
pub fn durbin_levinson_loglik(acvf: &[f64], y: &[f64]) -> Result<f64> {
    let n = y.len();
    check_cap(n, DL_CAP)?;
    if acvf.len() < n {
        return Err(MraError::DimensionMismatch { expected: n, got: acvf.len() });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut phi: Vec<f64> = Vec::with_capacity(n);
    let mut prev: Vec<f64> = Vec::with_capacity(n);
    let mut v = acvf[0];
    if v <= 0.0 {
        return Err(MraError::InvalidAutocovariance(0));
    }
    let mut total = LN_2PI + v.ln() + y[0] * y[0] / v;
    for t in 1..n {
        // φ_{t,t}
        let num = acvf[t] - phi.iter().enumerate().map(|(j, p)| p * acvf[t - 1 - j]).sum::<f64>();
        let k = num / v;
        prev.clear();
        prev.extend_from_slice(&phi);
        for j in 0..phi.len() {
            phi[j] = prev[j] - k * prev[prev.len() - 1 - j];
        }
        phi.push(k);
        v *= 1.0 - k * k;
        if !(v > 0.0) {
            return Err(MraError::InvalidAutocovariance(t));
        }
        let pred: f64 = phi.iter().enumerate().map(|(j, p)| p * y[t - 1 - j]).sum();
        let e = y[t] - pred;
        total += LN_2PI + v.ln() + e * e / v;
    }
    Ok(-0.5 * total)
}

/// Exact draw of a stationary process on `n` equispaced points by circulant
/// embedding; the nugget is added as independent normals.
pub fn simulate_1d_circulant(model: &CovarianceModel, n: usize, spacing: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let base = (2 * n.saturating_sub(1)).max(1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let mut m = base;
    let lambda = loop {
        let half = m / 2;
        let mut c: Vec<Complex<f64>> = (0..m)
            .map(|j| {
                let lag = if j <= half { j } else { m - j };
                Complex::new(model.cov_at_lag(lag as f64 * spacing), 0.0)
            })
            .collect();
        planner.plan_fft_forward(m).process(&mut c);
        let max = c.iter().map(|z| z.re).fold(0.0, f64::max);
        let min = c.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
        if min >= -1e-10 * max {
            break c.into_iter().map(|z| z.re.max(0.0)).collect::<Vec<f64>>();
        }
        if m >= base * MAX_EMBEDDING_FACTOR {
            return Err(MraError::IndefiniteEmbedding(m));
        }
        m *= 2;
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<Complex<f64>> = lambda
        .iter()
        .map(|l| {
            let s = (l / m as f64).sqrt();
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            Complex::new(s * a, s * b)
        })
        .collect();
    planner.plan_fft_forward(m).process(&mut w);
    let sd = model.nugget.sqrt();
    Ok(w[..n]
        .iter()
        .map(|z| {
            let e: f64 = StandardNormal.sample(&mut rng);
            z.re + sd * e
        })
        .collect())
}

/// Exact draw at arbitrary locations via Cholesky of `C0 + σ²_ε I`.
pub fn simulate_dense(model: &CovarianceModel, s: &Locations, seed: u64) -> Result<Vec<f64>> {
    check_cap(s.len(), DENSE_CAP)?;
    let c = model.cov_matrix(s, s, true)?;
    let chol = Chol::with_jitter(c, model.variance)
        .ok_or_else(|| MraError::NotPositiveDefinite("dense data covariance".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_fn(s.len(), |_, _| -> f64 { StandardNormal.sample(&mut rng) });
    Ok((chol.l() * z).as_slice().to_vec())
}

/// Nearest-neighbour index over a point set.
enum NeighbourIndex<'a> {
    Brute(&'a Locations),
    Grid(Grid<'a>),
}

struct Grid<'a> {
    pts: &'a Locations,
    lower: Vec<f64>,
    cell: f64,
    dims: Vec<usize>,
    cells: Vec<Vec<usize>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl<'a> Grid<'a> {
    fn new(pts: &'a Locations, per_cell: usize) -> Self {
        let d = pts.dim();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for p in pts.iter() {
            for j in 0..d {
                lower[j] = lower[j].min(p[j]);
                upper[j] = upper[j].max(p[j]);
            }
        }
        let volume: f64 = (0..d).map(|j| (upper[j] - lower[j]).max(1e-12)).product();
        let n_cells = (pts.len() / per_cell.max(1)).max(1) as f64;
        let cell = (volume / n_cells).powf(1.0 / d as f64).max(1e-12);
        let dims: Vec<usize> = (0..d).map(|j| ((upper[j] - lower[j]) / cell).floor() as usize + 1).collect();
        let mut cells = vec![Vec::new(); dims.iter().product()];
        let mut g = Grid { pts, lower, cell, dims, cells: Vec::new() };
        for (i, p) in pts.iter().enumerate() {
            cells[g.flat(&g.coord(p))].push(i);
        }
        g.cells = cells;
        g
    }

    fn coord(&self, p: &[f64]) -> Vec<i64> {
        p.iter()
            .zip(&self.lower)
            .zip(&self.dims)
            .map(|((x, lo), &n)| (((x - lo) / self.cell).floor() as i64).clamp(0, n as i64 - 1))
            .collect()
    }

    fn flat(&self, c: &[i64]) -> usize {
        c.iter().zip(&self.dims).rev().fold(0, |acc, (&x, &n)| acc * n + x as usize)
    }

    /// Visits every cell in the shell at Chebyshev distance `rho` around `c`.
    fn shell(&self, c: &[i64], rho: i64, out: &mut Vec<usize>) {
        let d = c.len();
        let side = 2 * rho + 1;
        let total = (side as usize).pow(d as u32);
        let mut off = vec![0i64; d];
        for t in 0..total {
            let mut r = t;
            let mut on_shell = false;
            let mut inside = true;
            for j in 0..d {
                off[j] = (r % side as usize) as i64 - rho;
                r /= side as usize;
                on_shell |= off[j].abs() == rho;
                let x = c[j] + off[j];
                inside &= x >= 0 && x < self.dims[j] as i64;
            }
            if on_shell && inside {
                let cell: Vec<i64> = (0..d).map(|j| c[j] + off[j]).collect();
                out.extend_from_slice(&self.cells[self.flat(&cell)]);
            }
        }
    }

    fn nearest(&self, p: &[f64], k: usize) -> Vec<usize> {
        let c = self.coord(p);
        let max_rho = self.dims.iter().copied().max().unwrap_or(1) as i64;
        let mut cand: Vec<(f64, usize)> = Vec::new();
        let mut buf = Vec::new();
        for rho in 0..=max_rho {
            buf.clear();
            self.shell(&c, rho, &mut buf);
            cand.extend(buf.iter().map(|&i| (sq_dist(p, self.pts.point(i)), i)));
            if cand.len() >= k {
                cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                cand.truncate(k);
                // every unvisited point is at least `rho * cell` away
                let reach = rho as f64 * self.cell;
                if cand[k - 1].0 <= reach * reach {
                    break;
                }
            }
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cand.truncate(k);
        cand.into_iter().map(|(_, i)| i).collect()
    }
}

impl NeighbourIndex<'_> {
    fn nearest(&self, p: &[f64], k: usize) -> Vec<usize> {
        match self {
            NeighbourIndex::Brute(s) => {
                let mut d: Vec<(f64, usize)> = s.iter().enumerate().map(|(i, q)| (sq_dist(p, q), i)).collect();
                let k = k.min(d.len());
                if k < d.len() {
                    d.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    d.truncate(k);
                }
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.into_iter().map(|(_, i)| i).collect()
            }
            NeighbourIndex::Grid(g) => g.nearest(p, k),
        }
    }
}

/// Point-count threshold above which neighbour search uses a grid.
pub const GRID_SEARCH_THRESHOLD: usize = 10_000;

/// Kriging at each point of `sp` from its `k` nearest observations only.
pub fn local_krige(
    model: &CovarianceModel,
    s: &Locations,
    y: &[f64],
    sp: &Locations,
    k: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    local_krige_with(model, s, y, sp, k, 1)
}

/// As [`local_krige`], parallel over prediction points.
pub fn local_krige_with(
    model: &CovarianceModel,
    s: &Locations,
    y: &[f64],
    sp: &Locations,
    k: usize,
    workers: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if y.len() != s.len() {
        return Err(MraError::DimensionMismatch { expected: s.len(), got: y.len() });
    }
    if k > s.len() {
        return Err(MraError::InvalidArgument(format!("neighbour count {k} exceeds {} observations", s.len())));
    }
    if s.is_empty() || k == 0 {
        return Ok((vec![0.0; sp.len()], sp.iter().map(|p| model.cov(p, p)).collect()));
    }
    let index = if s.len() < GRID_SEARCH_THRESHOLD {
        NeighbourIndex::Brute(s)
    } else {
        NeighbourIndex::Grid(Grid::new(s, 2))
    };
    let one = |i: usize| -> Result<(f64, f64)> {
        let p = sp.point(i);
        let nn = index.nearest(p, k);
        let sub = s.subset(&nn);
        let ysub: Vec<f64> = nn.iter().map(|&j| y[j]).collect();
        let gp = DenseGp::new(model, &sub)?;
        let (m, v) = gp.krige(&ysub, &Locations::new(p.len(), p.to_vec())?)?;
        Ok((m[0], v[0]))
    };
    let n = sp.len();
    let workers = workers.max(1).min(n.max(1));
    let chunk = n.div_ceil(workers);
    let parts: Vec<Result<Vec<(f64, f64)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let one = &one;
                scope.spawn(move || (w * chunk..((w + 1) * chunk).min(n)).map(one).collect::<Result<Vec<_>>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("local kriging worker panicked")).collect()
    });
    let mut mean = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    for part in parts {
        for (m, v) in part? {
            mean.push(m);
            var.push(v);
        }
    }
    Ok((mean, var))
}

/// Closed-form log-likelihood of a zero-mean AR(1) series with coefficient
/// `phi` and innovation variance `s2`.
pub fn ar1_loglik(phi: f64, s2: f64, y: &[f64]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let n = y.len() as f64;
    let v0 = s2 / (1.0 - phi * phi);
    let mut q = y[0] * y[0] / v0;
    for t in 1..y.len() {
        let e = y[t] - phi * y[t - 1];
        q += e * e / s2;
    }
    -0.5 * (n * LN_2PI + v0.ln() + (n - 1.0) * s2.ln() + q)
}

/// Dense covariance of `s` including the nugget (for tests and examples).
pub fn dense_covariance(model: &CovarianceModel, s: &Locations) -> Result<DMatrix<f64>> {
    check_cap(s.len(), DENSE_CAP)?;
    model.cov_matrix(s, s, true)
}
