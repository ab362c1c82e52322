use super::matrix::Matrix;

/// Largest dimension accepted by [`expm`].
pub const EXPM_MAX_DIM: usize = 16;

const SCALED_NORM: f64 = 0.25;
const TAYLOR_TERMS: usize = 18;

/// Matrix exponential by scaling and squaring around a truncated Taylor
/// series. The argument is scaled until its 1-norm is at most 1/4, where 18
/// terms leave a truncation error far below one ulp.
pub fn expm(m: &Matrix) -> Matrix {
    assert!(m.is_square(), "expm needs a square matrix");
    let n = m.rows();
    assert!(n <= EXPM_MAX_DIM, "expm limited to {EXPM_MAX_DIM}x{EXPM_MAX_DIM}");

    let norm = m.norm_1();
    let squarings = if norm > SCALED_NORM { (norm / SCALED_NORM).log2().ceil() as u32 } else { 0 };
    let scaled = m.scale(0.5f64.powi(squarings as i32));

    // Horner evaluation of sum_{k<=K} X^k / k!
    let mut acc = Matrix::identity(n);
    for k in (1..=TAYLOR_TERMS).rev() {
        acc = scaled.matmul(&acc).scale(1.0 / k as f64);
        for i in 0..n {
            acc[(i, i)] += 1.0;
        }
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_rel_err(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).max_abs() / b.max_abs()
    }

    #[test]
    fn zero_gives_identity() {
        assert_eq!(expm(&Matrix::zeros(3, 3)), Matrix::identity(3));
    }

    #[test]
    fn diagonal() {
        let e = expm(&Matrix::diag(&[1.0, -1.0]));
        assert!((e[(0, 0)] - std::f64::consts::E).abs() < 1e-14);
        assert!((e[(1, 1)] - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn nilpotent() {
        let e = expm(&Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]));
        assert_eq!(e, Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]));
    }

    #[test]
    fn upper_triangular_closed_form() {
        // exp([[a, b], [0, c]]) = [[e^a, b (e^a - e^c)/(a - c)], [0, e^c]]
        for &(a, b, c) in &[(-3.0, 2.0, 1.5), (0.7, -4.0, -6.0), (2.0, 1.0, -0.5)] {
            let e = expm(&Matrix::from_rows(&[&[a, b], &[0.0, c]]));
            let exact = Matrix::from_rows(&[
                &[f64::exp(a), b * (f64::exp(a) - f64::exp(c)) / (a - c)],
                &[0.0, f64::exp(c)],
            ]);
            assert!(max_rel_err(&e, &exact) < 1e-12);
        }
    }

    #[test]
    fn symmetric_matrices_match_eigen_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let n = rng.gen_range(2..7);
            let g = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let mut s = g.symmetrized();
            let scale = 10.0 / s.norm_1();
            s = s.scale(scale);
            let ns = nalgebra::DMatrix::from_fn(n, n, |i, j| s[(i, j)]);
            let eig = ns.symmetric_eigen();
            let exp_d = nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp));
            let oracle = &eig.eigenvectors * exp_d * eig.eigenvectors.transpose();
            let oracle = Matrix::from_fn(n, n, |i, j| oracle[(i, j)]);
            assert!(max_rel_err(&expm(&s), &oracle) < 1e-12);
        }
    }

    #[test]
    fn inverse_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let n = rng.gen_range(1..6);
            let mut m = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let target = rng.gen_range(0.1..5.0);
            m = m.scale(target / m.norm_1().max(1e-300));
            let prod = expm(&m).matmul(&expm(&m.scale(-1.0)));
            assert!(prod.sub(&Matrix::identity(n)).max_abs() < 1e-10);
        }
    }
}
