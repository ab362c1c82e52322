use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Solution of a linear least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    pub x: Vec<f64>,
    /// Numerical rank detected by the pivoted QR factorization.
    pub rank: usize,
}

impl LstsqSolution {
    pub fn is_rank_deficient(&self) -> bool {
        self.rank < self.x.len()
    }
}

/// `argmin_x ‖M x − b‖`, the minimum-norm minimizer when `M` is rank deficient.
pub fn least_squares(m: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    least_squares_detailed(m, b).map(|s| s.x)
}

/// Householder QR with column pivoting. Rank-deficient systems are resolved
/// to the minimum-norm solution by a second, full-rank least-squares solve
/// over the null-space coordinates.
pub fn least_squares_detailed(m: &Matrix, b: &[f64]) -> Result<LstsqSolution> {
    let (rows, cols) = (m.rows(), m.cols());
    if b.len() != rows {
        return Err(Error::Dimension(format!(
            "least_squares: matrix has {rows} rows but rhs has length {}",
            b.len()
        )));
    }
    if rows < cols {
        return Err(Error::Dimension(format!(
            "least_squares: underdetermined system {rows}x{cols}"
        )));
    }
    if cols == 0 {
        return Ok(LstsqSolution { x: Vec::new(), rank: 0 });
    }

    let qr = PivotedQr::factor(m);
    let mut rhs = b.to_vec();
    qr.apply_qt(&mut rhs);

    let rank = qr.rank();
    let r = &qr.r;
    let y = if rank == cols {
        back_substitute(r, &rhs[..cols], cols)
    } else if rank == 0 {
        vec![0.0; cols]
    } else {
        // Basic solution g = [R11⁻¹ c1; 0] and null-space basis W = [R11⁻¹ R12; −I].
        let free = cols - rank;
        let mut g = back_substitute(r, &rhs[..rank], rank);
        g.resize(cols, 0.0);
        let mut w = Matrix::zeros(cols, free);
        for j in 0..free {
            let col: Vec<f64> = (0..rank).map(|i| r[(i, rank + j)]).collect();
            let sol = back_substitute(r, &col, rank);
            for i in 0..rank {
                w[(i, j)] = sol[i];
            }
            w[(rank + j, j)] = -1.0;
        }
        let z = least_squares_detailed(&w, &g)?.x;
        let wz = w.matvec(&z);
        g.iter().zip(&wz).map(|(a, b)| a - b).collect()
    };

    let mut x = vec![0.0; cols];
    for (j, &p) in qr.perm.iter().enumerate() {
        x[p] = y[j];
    }
    Ok(LstsqSolution { x, rank })
}

/// Solves `R[..n,..n] y = c` with `R` upper triangular.
fn back_substitute(r: &Matrix, c: &[f64], n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = c[i];
        for j in i + 1..n {
            s -= r[(i, j)] * y[j];
        }
        y[i] = s / r[(i, i)];
    }
    y
}

struct PivotedQr {
    /// Upper-triangular factor (`cols x cols`), columns in pivot order.
    r: Matrix,
    /// Householder vectors, one per step, stored from the diagonal down.
    reflectors: Vec<(Vec<f64>, f64)>,
    perm: Vec<usize>,
}

impl PivotedQr {
    fn factor(m: &Matrix) -> Self {
        let (rows, cols) = (m.rows(), m.cols());
        let mut a: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut reflectors = Vec::with_capacity(cols);

        for k in 0..cols {
            let (best, _) = (k..cols)
                .map(|j| (j, a[j][k..].iter().map(|x| x * x).sum::<f64>()))
                .fold((k, -1.0), |acc, (j, n)| if n > acc.1 { (j, n) } else { acc });
            a.swap(k, best);
            perm.swap(k, best);

            let x = &a[k][k..];
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                reflectors.push((vec![0.0; rows - k], 0.0));
                continue;
            }
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vtv: f64 = v.iter().map(|t| t * t).sum();
            let beta = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };

            a[k][k] = alpha;
            for t in a[k][k + 1..].iter_mut() {
                *t = 0.0;
            }
            for col in a.iter_mut().skip(k + 1) {
                let s: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum::<f64>() * beta;
                for (c, vi) in col[k..].iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            }
            reflectors.push((v, beta));
        }

        let r = Matrix::from_fn(cols, cols, |i, j| if i <= j { a[j][i] } else { 0.0 });
        Self { r, reflectors, perm }
    }

    fn apply_qt(&self, b: &mut [f64]) {
        for (k, (v, beta)) in self.reflectors.iter().enumerate() {
            if *beta == 0.0 {
                continue;
            }
            let s: f64 = v.iter().zip(&b[k..]).map(|(p, q)| p * q).sum::<f64>() * beta;
            for (bi, vi) in b[k..].iter_mut().zip(v) {
                *bi -= s * vi;
            }
        }
    }

    fn rank(&self) -> usize {
        let n = self.r.cols();
        let rows = self.reflectors.first().map_or(n, |(v, _)| v.len());
        let lead = self.r[(0, 0)].abs();
        if lead == 0.0 {
            return 0;
        }
        let tol = rows.max(n) as f64 * f64::EPSILON * lead;
        (0..n).take_while(|&i| self.r[(i, i)].abs() > tol).count()
    }
}

/// Thin Householder QR `M = Q R` without pivoting, for `rows >= cols`.
/// Rank-deficient input is fine: `R` then has zeros on its diagonal.
#[derive(Debug, Clone)]
pub struct Qr {
    r: Matrix,
    reflectors: Vec<(Vec<f64>, f64)>,
}

impl Qr {
    pub fn factor(m: &Matrix) -> Result<Self> {
        let (rows, cols) = (m.rows(), m.cols());
        if rows < cols {
            return Err(Error::Dimension(format!("qr: {rows}x{cols} has fewer rows than columns")));
        }
        let mut a: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
        let mut reflectors = Vec::with_capacity(cols);
        for k in 0..cols {
            let (head, tail) = a.split_at_mut(k + 1);
            let ak = &mut head[k];
            let norm = ak[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                reflectors.push((Vec::new(), 0.0));
                continue;
            }
            let alpha = if ak[k] >= 0.0 { -norm } else { norm };
            let mut v = ak[k..].to_vec();
            v[0] -= alpha;
            let beta = 2.0 / v.iter().map(|t| t * t).sum::<f64>();
            ak[k] = alpha;
            for t in ak[k + 1..].iter_mut() {
                *t = 0.0;
            }
            for col in tail.iter_mut() {
                let s: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum::<f64>() * beta;
                for (c, vi) in col[k..].iter_mut().zip(&v) {
                    *c -= s * vi;
                }
            }
            reflectors.push((v, beta));
        }
        let r = Matrix::from_fn(cols, cols, |i, j| if i <= j { a[j][i] } else { 0.0 });
        Ok(Self { r, reflectors })
    }

    /// The `cols x cols` upper-triangular factor.
    pub fn r(&self) -> &Matrix {
        &self.r
    }

    /// Overwrites `b` with `Qᵀ b` (full length).
    pub fn apply_qt(&self, b: &mut [f64]) {
        for (k, (v, beta)) in self.reflectors.iter().enumerate() {
            if *beta == 0.0 {
                continue;
            }
            let s: f64 = v.iter().zip(&b[k..]).map(|(p, q)| p * q).sum::<f64>() * beta;
            for (bi, vi) in b[k..].iter_mut().zip(v) {
                *bi -= s * vi;
            }
        }
    }

    /// Leading `cols` rows of `Qᵀ B`, i.e. the coordinates of `B` in the
    /// column space of `M`.
    pub fn project(&self, b: &Matrix) -> Matrix {
        let n = self.r.cols();
        let mut out = Matrix::zeros(n, b.cols());
        for j in 0..b.cols() {
            let mut col = b.column(j);
            if col.iter().all(|v| *v == 0.0) {
                continue;
            }
            self.apply_qt(&mut col);
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }
}
