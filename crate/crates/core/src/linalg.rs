//! Small dense factorization helpers shared by `fisher` and `criteria`.

use nalgebra::{Cholesky, DMatrix, Dyn};

/// Pivots at or below this are treated as a failed factorization.
pub const PIVOT_FLOOR: f64 = 1e-300;

/// Relative pivot floor: a pivot below `d * eps * max|diag|` is numerically zero.
fn relative_floor(m: &DMatrix<f64>) -> f64 {
    let scale = m.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    (m.nrows() as f64) * f64::EPSILON * scale
}

/// `log det m` for a symmetric positive definite matrix, `None` if a pivot fails.
///
/// Only the lower triangle is read.
pub fn spd_log_det(m: &DMatrix<f64>) -> Option<f64> {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    let floor = PIVOT_FLOOR.max(relative_floor(m));
    let mut l = m.clone();
    let mut log_det = 0.0;
    for j in 0..n {
        let mut pivot = l[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > floor) {
            return None;
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        log_det += pivot.ln();
        for i in j + 1..n {
            let mut s = l[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / diag;
        }
    }
    Some(log_det)
}

/// `log |det m|` for a general square matrix via partial-pivot LU.
/// Returns `-inf` for an exactly singular matrix.
pub fn log_abs_det(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    let u = lu.u();
    u.diagonal().iter().map(|x| x.abs().ln()).sum()
}

pub fn cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let floor = PIVOT_FLOOR.max(relative_floor(m));
    let c = m.clone().cholesky()?;
    c.l_dirty()
        .diagonal()
        .iter()
        .all(|&x| x * x > floor)
        .then_some(c)
}

/// `F^T diag(w) F`.
pub fn weighted_gram(f: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let (n, d) = f.shape();
    debug_assert_eq!(n, w.len());
    let mut out = DMatrix::zeros(d, d);
    for i in 0..n {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        for a in 0..d {
            let fa = wi * f[(i, a)];
            if fa == 0.0 {
                continue;
            }
            for b in 0..=a {
                out[(a, b)] += fa * f[(i, b)];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            out[(b, a)] = out[(a, b)];
        }
    }
    out
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for a in 0..n {
        for b in 0..a {
            let v = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
}

/// Largest absolute asymmetry relative to the largest absolute entry.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let n = m.nrows();
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in 0..a {
            worst = worst.max((m[(a, b)] - m[(b, a)]).abs());
        }
    }
    worst / scale
}

/// Neumaier compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}
