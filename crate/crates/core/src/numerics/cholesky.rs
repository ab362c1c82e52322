use super::matrix::Matrix;

/// Relative pivot tolerance: a pivot must exceed this times the largest
/// diagonal entry for the matrix to count as positive definite.
pub const PIVOT_TOL: f64 = 1e-12;

/// Returned when a symmetric matrix has no Cholesky factorization with all
/// pivots above tolerance. Not a failure: callers map it to an unbounded
/// (`-inf`) quadratic minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite;

/// Lower-triangular factor `L` with `Q = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factors the lower triangle of `q`; the upper triangle is not read.
    pub fn factor(q: &Matrix) -> Result<Self, NotPositiveDefinite> {
        assert!(q.is_square(), "cholesky needs a square matrix");
        let n = q.rows();
        let mut l = q.as_slice().to_vec();
        factor_in_place(&mut l, n)?;
        Ok(Self { l: Matrix::from_row_major(n, n, l) })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.l.rows();
        assert_eq!(rhs.len(), n, "cholesky solve shape mismatch");
        let mut y = rhs.to_vec();
        solve_in_place(self.l.as_slice(), n, &mut y);
        y
    }

    pub fn factor_l(&self) -> &Matrix {
        &self.l
    }
}

/// Solves `Q x = rhs` for symmetric positive definite `Q`.
pub fn cholesky_solve(q: &Matrix, rhs: &[f64]) -> Result<Vec<f64>, NotPositiveDefinite> {
    Cholesky::factor(q).map(|c| c.solve(rhs))
}

/// Overwrites the row-major `n × n` buffer with `L` (strict upper triangle zeroed).
pub fn factor_in_place(a: &mut [f64], n: usize) -> Result<(), NotPositiveDefinite> {
    if n == 0 {
        return Ok(());
    }
    let max_diag = (0..n).map(|i| a[i * n + i]).fold(f64::NEG_INFINITY, f64::max);
    if !(max_diag > 0.0) || !max_diag.is_finite() {
        return Err(NotPositiveDefinite);
    }
    let tol = PIVOT_TOL * max_diag;
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > tol) {
            return Err(NotPositiveDefinite);
        }
        let ljj = d.sqrt();
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
        for i in j + 1..n {
            a[j * n + i] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ y = b` in place given a factor from [`factor_in_place`].
pub fn solve_in_place(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scaled_identity() {
        let q = Matrix::identity(2).scale(2.0);
        let x = cholesky_solve(&q, &[2.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let q = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert_eq!(cholesky_solve(&q, &[1.0, 1.0]), Err(NotPositiveDefinite));
        assert!(cholesky_solve(&Matrix::zeros(3, 3), &[0.0; 3]).is_err());
        let semidef = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(cholesky_solve(&semidef, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(1..8);
            let g = Matrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
            let q = g.tr_matmul(&g).add(&Matrix::identity(n));
            let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let x = cholesky_solve(&q, &rhs).unwrap();
            let res: Vec<f64> = q.matvec(&x).iter().zip(&rhs).map(|(a, b)| a - b).collect();
            assert!(super::super::norm2(&res) <= 1e-10 * super::super::norm2(&rhs));
        }
    }

    #[test]
    fn never_accepts_clearly_negative_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let a = Matrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
            let shift = rng.gen_range(-1.0..3.0);
            let q = a.symmetrized().add(&Matrix::identity(5).scale(shift));
            let eig = nalgebra::DMatrix::from_fn(5, 5, |i, j| q[(i, j)]).symmetric_eigenvalues();
            let min_eig = eig.iter().copied().fold(f64::INFINITY, f64::min);
            let trace_scale = (0..5).map(|i| q[(i, i)].abs()).sum::<f64>();
            if min_eig < -PIVOT_TOL * trace_scale {
                assert!(Cholesky::factor(&q).is_err(), "accepted matrix with eigenvalue {min_eig}");
            }
        }
    }
}
