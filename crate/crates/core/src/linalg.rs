//! Cholesky factors with a jitter ladder, and the triangular solves built on them.

use nalgebra::{Cholesky, DMatrix, DVector};

/// Smallest jitter tried, relative to the process variance.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried, relative to the process variance.
pub const JITTER_MAX: f64 = 1e-6;

/// Pivot tolerance for [`pivot_select`], relative to the process variance.
pub const PIVOT_TOL: f64 = 1e-10;

/// Indices kept by a greedy pivoted Cholesky of a symmetric positive
/// semi-definite matrix: the largest remaining conditional variance is taken
/// until it falls to `tol`. Returned in ascending order.
pub fn pivot_select(a: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let n = a.nrows();
    let mut d: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut picked = Vec::new();
    let mut free = vec![true; n];
    loop {
        let best = (0..n).filter(|&i| free[i]).max_by(|&i, &j| d[i].total_cmp(&d[j]));
        let Some(p) = best else { break };
        if d[p] <= tol {
            break;
        }
        let piv = d[p].sqrt();
        let mut c = DVector::from_fn(n, |i, _| a[(i, p)]);
        for prev in &cols {
            c.axpy(-prev[p], prev, 1.0);
        }
        c /= piv;
        for i in 0..n {
            d[i] -= c[i] * c[i];
        }
        free[p] = false;
        picked.push(p);
        cols.push(c);
    }
    picked.sort_unstable();
    picked
}

/// Lower Cholesky factor `L` of a symmetric positive-definite matrix `A = L L'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chol {
    l: DMatrix<f64>,
    jitter: f64,
}

impl Chol {
    /// Factorizes without jitter.
    pub fn new(a: DMatrix<f64>) -> Option<Self> {
        if a.nrows() == 0 {
            return Some(Self { l: a, jitter: 0.0 });
        }
        Cholesky::new(a).map(|c| Self { l: c.unpack(), jitter: 0.0 })
    }

    /// Factorizes `a`, then `a + ε·scale·I` for ε = 1e-10, 1e-9, ..., 1e-6.
    pub fn with_jitter(a: DMatrix<f64>, scale: f64) -> Option<Self> {
        if let Some(c) = Self::new(a.clone()) {
            return Some(c);
        }
        let mut eps = JITTER_START;
        while eps <= JITTER_MAX * (1.0 + 1e-9) {
            let mut b = a.clone();
            let add = eps * scale;
            for i in 0..b.nrows() {
                b[(i, i)] += add;
            }
            if let Some(c) = Cholesky::new(b) {
                return Some(Self { l: c.unpack(), jitter: add });
            }
            eps *= 10.0;
        }
        None
    }

    pub fn from_lower(l: DMatrix<f64>) -> Self {
        Self { l, jitter: 0.0 }
    }

    pub(crate) fn from_parts(l: DMatrix<f64>, jitter: f64) -> Self {
        Self { l, jitter }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Diagonal jitter that was added before factorizing.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `log |A|`.
    pub fn logdet(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `L⁻¹ B`.
    pub fn solve_l(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        if self.dim() > 0 && b.ncols() > 0 {
            self.l.solve_lower_triangular_mut(&mut x);
        }
        x
    }

    pub fn solve_l_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        if self.dim() > 0 {
            self.l.solve_lower_triangular_mut(&mut x);
        }
        x
    }

    /// `L'⁻¹ B`.
    pub fn solve_lt(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        if self.dim() > 0 && b.ncols() > 0 {
            self.l.tr_solve_lower_triangular_mut(&mut x);
        }
        x
    }

    pub fn solve_lt_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        if self.dim() > 0 {
            self.l.tr_solve_lower_triangular_mut(&mut x);
        }
        x
    }

    /// `A⁻¹ B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.solve_lt(&self.solve_l(b))
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_lt_vec(&self.solve_l_vec(b))
    }

    /// `A⁻¹` (for small matrices and tests).
    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve(&DMatrix::identity(self.dim(), self.dim()))
    }

    /// The factorized matrix `L L'` (including any jitter).
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }
}

/// Symmetrizes in place by averaging with the transpose.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_and_logdet() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]);
        let c = Chol::new(a.clone()).unwrap();
        assert!((c.logdet() - a.determinant().ln()).abs() < 1e-12);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, -1.0, 3.0]);
        let x = c.solve(&b);
        assert!((&a * x - &b).abs().max() < 1e-12);
        assert!((c.reconstruct() - &a).abs().max() < 1e-12);
    }

    #[test]
    fn jitter_ladder_rescues_semidefinite() {
        let v = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let a = &v * v.transpose();
        assert!(Chol::new(a.clone()).is_none());
        let c = Chol::with_jitter(a, 1.0).unwrap();
        assert!(c.jitter() > 0.0 && c.jitter() <= 1e-6);
        let neg = DMatrix::from_diagonal_element(2, 2, -1.0);
        assert!(Chol::with_jitter(neg, 1.0).is_none());
    }

    #[test]
    fn empty_matrix() {
        let c = Chol::new(DMatrix::zeros(0, 0)).unwrap();
        assert_eq!(c.logdet(), 0.0);
        assert_eq!(c.solve_l(&DMatrix::zeros(0, 3)).shape(), (0, 3));
    }
}
