//! Small dense helpers on top of faer, with operation counting.

use faer::linalg::solvers::{DenseSolveCore, Llt};
use faer::prelude::*;
use faer::Side;

use crate::error::{Error, Result};
use crate::flops;

/// Cholesky factor of a Hermitian positive definite matrix. On failure the
/// diagonal is loaded once with `1e-12 * trace / n`; a second failure is an
/// error.
pub fn hpd_factor(mut c: Mat<c64>, what: &'static str) -> Result<Llt<c64>> {
    let n = c.nrows();
    flops::add((n * n * n / 3) as u64);
    match c.llt(Side::Lower) {
        Ok(f) => Ok(f),
        Err(_) => {
            let trace: f64 = (0..n).map(|i| c[(i, i)].re).sum();
            let jitter = 1e-12 * trace.abs().max(f64::MIN_POSITIVE) / n as f64;
            for i in 0..n {
                c[(i, i)] += c64::new(jitter, 0.0);
            }
            c.llt(Side::Lower).map_err(|_| Error::Singular(what))
        }
    }
}

/// Explicit inverse from a Cholesky factor.
pub fn hpd_inverse(f: &Llt<c64>) -> Mat<c64> {
    let n = f.L().nrows();
    flops::add((2 * n * n * n / 3) as u64);
    f.inverse()
}

/// Replaces `m` by `(m + m^H) / 2`.
pub fn hermitize(m: &mut Mat<c64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in 0..i {
            let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
}

/// `a^H b` for two slices.
#[inline]
pub fn dot(a: &[c64], b: &[c64]) -> c64 {
    flops::add(a.len() as u64);
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `m v` for a column-major matrix and a slice.
pub fn matvec(m: MatRef<'_, c64>, v: &[c64]) -> Vec<c64> {
    flops::add((m.nrows() * m.ncols()) as u64);
    let mut out = vec![c64::new(0.0, 0.0); m.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == c64::new(0.0, 0.0) {
            continue;
        }
        for (o, &a) in out.iter_mut().zip(m.col(j).iter()) {
            *o += a * vj;
        }
    }
    out
}

/// Matrix product `a b` with its multiply count recorded.
pub fn mul(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    flops::add((a.nrows() * a.ncols() * b.ncols()) as u64);
    a * b
}

/// `a^H b` with its multiply count recorded.
pub fn mul_adj(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    flops::add((a.ncols() * a.nrows() * b.ncols()) as u64);
    a.adjoint() * b
}

/// `a b^H` with its multiply count recorded.
pub fn mul_h(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Mat<c64> {
    flops::add((a.nrows() * a.ncols() * b.nrows()) as u64);
    a * b.adjoint()
}

/// Entries of `m` in column-major order.
pub fn entries<'a>(m: MatRef<'a, c64>) -> impl Iterator<Item = c64> + 'a {
    (0..m.ncols()).flat_map(move |j| (0..m.nrows()).map(move |i| m[(i, j)]))
}

/// Columns `idx` of `m` as a new matrix.
pub fn select_cols(m: MatRef<'_, c64>, idx: &[usize]) -> Mat<c64> {
    Mat::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

/// Condition number of a real symmetric matrix from its eigenvalues;
/// infinite when singular.
pub fn sym_condition(a: MatRef<'_, f64>) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let eig = match a.self_adjoint_eigenvalues(Side::Lower) {
        Ok(e) => e,
        Err(_) => return f64::INFINITY,
    };
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_semidefinite() {
        // Rank-one PSD matrix: plain Cholesky may fail, jitter makes it PD.
        let v = [c64::new(1.0, 0.5), c64::new(-0.3, 2.0), c64::new(0.0, 1.0)];
        let c = Mat::from_fn(3, 3, |i, j| v[i] * v[j].conj());
        assert!(hpd_factor(c, "test").is_ok());
        let neg = Mat::from_fn(2, 2, |i, j| {
            if i == j {
                c64::new(-1.0, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        assert!(hpd_factor(neg, "test").is_err());
    }

    #[test]
    fn condition_of_diagonal() {
        let a = Mat::from_fn(
            3,
            3,
            |i, j| if i == j { [1.0, 10.0, 100.0][i] } else { 0.0 },
        );
        assert!((sym_condition(a.as_ref()) - 100.0).abs() < 1e-9);
        let z = Mat::<f64>::zeros(2, 2);
        assert!(sym_condition(z.as_ref()).is_infinite());
    }
}
