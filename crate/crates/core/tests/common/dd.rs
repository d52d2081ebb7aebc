//! Dense matrices in double-double arithmetic, for references that must stay
//! accurate on covariance matrices with condition numbers near `1e13`.

use std::ops::{Index, IndexMut, Range};

use nalgebra::DMatrix;
use twofloat::TwoFloat;

pub type T = TwoFloat;

fn zero() -> T {
    TwoFloat::from(0.0)
}

/// Row-major double-double matrix.
#[derive(Clone, Debug)]
pub struct Dd {
    pub rows: usize,
    pub cols: usize,
    data: Vec<T>,
}

impl Index<(usize, usize)> for Dd {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Dd {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl Dd {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![zero(); rows * cols] }
    }

    pub fn from_f64(a: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(a.nrows(), a.ncols());
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                out[(i, j)] = TwoFloat::from(a[(i, j)]);
            }
        }
        out
    }

    pub fn column(v: &[f64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.iter().map(|&x| TwoFloat::from(x)).collect() }
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self[(i, j)].hi())
    }

    pub fn block(&self, rows: Range<usize>, cols: Range<usize>) -> Self {
        let mut out = Self::zeros(rows.len(), cols.len());
        for i in 0..rows.len() {
            for j in 0..cols.len() {
                out[(i, j)] = self[(rows.start + i, cols.start + j)];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn mul(&self, b: &Self) -> Self {
        assert_eq!(self.cols, b.rows);
        let mut out = Self::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..b.cols {
                    let t = a * b[(k, j)];
                    out[(i, j)] += t;
                }
            }
        }
        out
    }

    pub fn sub(&self, b: &Self) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().zip(&b.data).for_each(|(x, &y)| *x -= y);
        out
    }

    pub fn add_diag(&mut self, v: f64) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += v;
        }
    }

    /// Conditions this symmetric matrix on its indices `q`, in place:
    /// `w -= w[:, q] w[q, q]⁻ w[q, :]`. Knot sets of nested regions can
    /// share points, so `w[q, q]` may be singular; pivots whose conditional
    /// variance is negligible are skipped.
    pub fn condition_on(&mut self, q: Range<usize>) {
        let n = self.rows;
        let scale = q.clone().map(|i| self[(i, i)].hi()).fold(0.0, f64::max);
        let mut free: Vec<usize> = q.collect();
        while let Some((pos, &p)) =
            free.iter().enumerate().max_by(|a, b| self[(*a.1, *a.1)].hi().total_cmp(&self[(*b.1, *b.1)].hi()))
        {
            let d = self[(p, p)];
            if d.hi() <= 1e-13 * scale {
                break;
            }
            free.swap_remove(pos);
            let col: Vec<T> = (0..n).map(|i| self[(i, p)]).collect();
            for i in 0..n {
                let f = col[i] / d;
                for j in 0..n {
                    let t = f * col[j];
                    self[(i, j)] -= t;
                }
            }
        }
    }
}

/// Cholesky factor `L` of a symmetric positive definite matrix.
pub struct DdChol {
    l: Dd,
}

impl DdChol {
    pub fn new(a: &Dd) -> Self {
        let n = a.rows;
        let mut l = Dd::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            assert!(d.hi() > 0.0, "matrix is not positive definite");
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = v / djj;
            }
        }
        Self { l }
    }

    pub fn logdet(&self) -> f64 {
        (0..self.l.rows).map(|i| 2.0 * (self.l[(i, i)].hi().ln() + self.l[(i, i)].lo() / self.l[(i, i)].hi())).sum()
    }

    /// `L⁻¹ B`.
    pub fn forward(&self, b: &Dd) -> Dd {
        let mut z = b.clone();
        for c in 0..b.cols {
            for i in 0..b.rows {
                for k in 0..i {
                    let t = self.l[(i, k)] * z[(k, c)];
                    z[(i, c)] -= t;
                }
                z[(i, c)] /= self.l[(i, i)];
            }
        }
        z
    }

    /// `L'⁻¹ B`.
    pub fn backward(&self, b: &Dd) -> Dd {
        let n = b.rows;
        let mut x = b.clone();
        for c in 0..b.cols {
            for i in (0..n).rev() {
                for k in i + 1..n {
                    let t = self.l[(k, i)] * x[(k, c)];
                    x[(i, c)] -= t;
                }
                x[(i, c)] /= self.l[(i, i)];
            }
        }
        x
    }

    pub fn solve(&self, b: &Dd) -> Dd {
        self.backward(&self.forward(b))
    }

    pub fn inverse(&self) -> Dd {
        let n = self.l.rows;
        let mut e = Dd::zeros(n, n);
        e.add_diag(1.0);
        self.solve(&e)
    }
}
