//! Parametric covariance functions `C0(θ)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{MraError, Result};
use crate::geometry::Locations;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Matérn correlation with smoothness 1.5: `(1 + h√3) exp(-h√3)`.
pub fn matern15(h: f64) -> Result<f64> {
    if h < 0.0 || h.is_nan() {
        return Err(MraError::NegativeDistance(h));
    }
    Ok(matern15_unchecked(h))
}

/// Exponential correlation `exp(-h)`.
pub fn exponential(h: f64) -> Result<f64> {
    if h < 0.0 || h.is_nan() {
        return Err(MraError::NegativeDistance(h));
    }
    Ok((-h).exp())
}

#[inline]
fn matern15_unchecked(h: f64) -> f64 {
    let t = h * SQRT3;
    (1.0 + t) * (-t).exp()
}

/// User-supplied correlation. Receives both points and the range parameter,
/// so non-stationary kernels can be plugged in.
pub trait Correlation: Send + Sync + fmt::Debug {
    fn correlation(&self, a: &[f64], b: &[f64], range: f64) -> f64;

    fn name(&self) -> &str {
        "plugin"
    }
}

#[derive(Clone, Debug)]
pub enum Family {
    Exponential,
    Matern15,
    Plugin(Arc<dyn Correlation>),
}

impl Family {
    pub fn name(&self) -> &str {
        match self {
            Family::Exponential => "exponential",
            Family::Matern15 => "matern15",
            Family::Plugin(p) => p.name(),
        }
    }
}

/// `C0(s1, s2) = σ² ρ(‖s1 - s2‖ / κ)`, plus an indicator nugget `σ²_ε` that
/// is attached only when assembling a matrix on a single ordered list.
#[derive(Clone, Debug)]
pub struct CovarianceModel {
    pub family: Family,
    pub variance: f64,
    pub range: f64,
    pub nugget: f64,
}

impl CovarianceModel {
    pub fn new(family: Family, variance: f64, range: f64, nugget: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(MraError::InvalidArgument(format!("variance must be positive, got {variance}")));
        }
        if !(range > 0.0 && range.is_finite()) {
            return Err(MraError::InvalidArgument(format!("range must be positive, got {range}")));
        }
        if !(nugget >= 0.0 && nugget.is_finite()) {
            return Err(MraError::InvalidArgument(format!("nugget must be nonnegative, got {nugget}")));
        }
        Ok(Self { family, variance, range, nugget })
    }

    pub fn matern15(variance: f64, range: f64, nugget: f64) -> Result<Self> {
        Self::new(Family::Matern15, variance, range, nugget)
    }

    pub fn exponential(variance: f64, range: f64, nugget: f64) -> Result<Self> {
        Self::new(Family::Exponential, variance, range, nugget)
    }

    /// Same family with different parameters.
    pub fn with_params(&self, variance: f64, range: f64, nugget: f64) -> Result<Self> {
        Self::new(self.family.clone(), variance, range, nugget)
    }

    /// Process covariance (no nugget).
    #[inline]
    pub fn cov(&self, a: &[f64], b: &[f64]) -> f64 {
        self.variance * self.correlation(a, b)
    }

    #[inline]
    pub fn correlation(&self, a: &[f64], b: &[f64]) -> f64 {
        match &self.family {
            Family::Exponential => (-distance(a, b) / self.range).exp(),
            Family::Matern15 => matern15_unchecked(distance(a, b) / self.range),
            Family::Plugin(p) => p.correlation(a, b, self.range),
        }
    }

    /// Covariance at a scalar lag, for stationary isotropic families.
    pub fn cov_at_lag(&self, h: f64) -> f64 {
        match &self.family {
            Family::Exponential => self.variance * (-h / self.range).exp(),
            Family::Matern15 => self.variance * matern15_unchecked(h / self.range),
            Family::Plugin(p) => self.variance * p.correlation(&[0.0], &[h], self.range),
        }
    }

    /// Dense `|A| × |B|` covariance matrix. The nugget is added on the
    /// diagonal only when `add_nugget` is set and `a` and `b` are the same list.
    pub fn cov_matrix(&self, a: &Locations, b: &Locations, add_nugget: bool) -> Result<DMatrix<f64>> {
        if a.dim() != b.dim() {
            return Err(MraError::DimensionMismatch { expected: a.dim(), got: b.dim() });
        }
        let same = std::ptr::eq(a, b) || a == b;
        if add_nugget && !same {
            return Err(MraError::InvalidArgument("nugget requires identical location lists".into()));
        }
        if same {
            let mut m = self.cov_sym(a);
            if add_nugget {
                for i in 0..a.len() {
                    m[(i, i)] += self.nugget;
                }
            }
            return Ok(m);
        }
        Ok(self.cross(a, b))
    }

    /// Cross-covariance without nugget; no dimension check.
    pub(crate) fn cross(&self, a: &Locations, b: &Locations) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.cov(a.point(i), b.point(j)))
    }

    /// Symmetric covariance without nugget, filled from the lower triangle.
    pub(crate) fn cov_sym(&self, a: &Locations) -> DMatrix<f64> {
        let n = a.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let pj = a.point(j);
            m[(j, j)] = self.cov(pj, pj);
            for i in j + 1..n {
                let v = self.cov(a.point(i), pj);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
}

#[inline]
pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
