//! Certified lower bounds of `min_x ‖A(p)[1;x]‖²` over a parameter box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{factor_in_place, maximize_scalar, solve_in_place, Cholesky, Matrix, Qr, ScalarSearch};
use crate::region::ParamBox;

/// A regression whose design matrix depends smoothly on box parameters.
pub trait RegressionModel: Sync {
    fn dim(&self) -> usize;
    /// `A(p)`, with the regressand in column 0.
    fn design(&self, p: &[f64]) -> Result<Matrix>;
    /// `∂A/∂p_i` for every parameter.
    fn design_gradient(&self, p: &[f64]) -> Result<Vec<Matrix>>;
    fn design_with_gradient(&self, p: &[f64]) -> Result<(Matrix, Vec<Matrix>)> {
        Ok((self.design(p)?, self.design_gradient(p)?))
    }
    /// Frobenius bound on the second-order Taylor remainder of `A` around `pbar` over `b`.
    fn remainder_radius(&self, b: &ParamBox, pbar: &[f64]) -> Result<f64>;
    fn validate(&self, b: &ParamBox) -> Result<()>;
}

/// `xᵀQx + cᵀx + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub q: Matrix,
    pub c: Vec<f64>,
    pub d: f64,
}

impl QuadraticForm {
    pub fn value(&self, x: &[f64]) -> f64 {
        let qx = self.q.matvec(x);
        x.iter().zip(&qx).map(|(a, b)| a * b).sum::<f64>()
            + x.iter().zip(&self.c).map(|(a, b)| a * b).sum::<f64>()
            + self.d
    }

    /// The form `[1;x]ᵀ S [1;x]` of a square matrix `S`.
    pub fn from_matrix(s: &Matrix) -> Self {
        let n = s.rows() - 1;
        let q = s.submatrix(1, 1, n, n).symmetrized();
        let c = (1..=n).map(|i| s[(i, 0)] + s[(0, i)]).collect();
        Self { q, c, d: s[(0, 0)] }
    }

    /// `self + s·other`.
    pub fn add_scaled(&mut self, other: &QuadraticForm, s: f64) {
        self.q.axpy(s, &other.q);
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += s * b;
        }
        self.d += s * other.d;
    }

    /// Minimizer and minimum, or `None` when `Q` is not numerically positive definite.
    pub fn minimize(&self) -> Option<(Vec<f64>, f64)> {
        let chol = Cholesky::factor(&self.q).ok()?;
        let rhs: Vec<f64> = self.c.iter().map(|v| -0.5 * v).collect();
        let x = chol.solve(&rhs);
        let v = self.d + 0.5 * self.c.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        Some((x, v))
    }
}

/// `−(1/k)·ĀᵀĀ − k·r²·I`.
pub fn prop1_shift(a_bar: &Matrix, r_b: f64, k: f64) -> Matrix {
    let n = a_bar.cols();
    a_bar.tr_matmul(a_bar).scale(-1.0 / k).sub(&Matrix::identity(n).scale(k * r_b * r_b))
}

/// Coefficients of `(A[1;x])ᵀ(B[1;x])` as a quadratic in `x`, from the
/// first-row/first-column block partition of `A` and `B`.
pub fn bilinear_decompose(a: &Matrix, b: &Matrix) -> Result<QuadraticForm> {
    if a.rows() != b.rows() || a.cols() != b.cols() || a.cols() == 0 || a.rows() == 0 {
        return Err(Error::Dimension(format!(
            "bilinear_decompose: {}x{} against {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (m, n) = (a.rows(), a.cols() - 1);
    let a11 = a[(0, 0)];
    let b11 = b[(0, 0)];
    let a12 = a.submatrix(0, 1, 1, n);
    let b12 = b.submatrix(0, 1, 1, n);
    let a21 = a.submatrix(1, 0, m - 1, 1);
    let b21 = b.submatrix(1, 0, m - 1, 1);
    let a22 = a.submatrix(1, 1, m - 1, n);
    let b22 = b.submatrix(1, 1, m - 1, n);

    let q = a12.tr_matmul(&b12).add(&a22.tr_matmul(&b22)).symmetrized();
    let c_mat = b12.transpose().scale(a11).add(&a12.transpose().scale(b11)).add(&a22.tr_matmul(&b21)).add(&b22.tr_matmul(&a21));
    let d = a11 * b11 + a21.tr_matmul(&b21)[(0, 0)];
    Ok(QuadraticForm { q, c: c_mat.column(0), d })
}

/// Per-box data shared by every vertex and every `k`.
///
/// The quadratic forms are assembled in the column space of `Ā` (thin QR),
/// so values near a zero-residual optimum are not lost to Gram squaring.
#[derive(Debug, Clone)]
pub struct BoundCache {
    pub center: Vec<f64>,
    pub a_bar: Matrix,
    pub gradients: Vec<Matrix>,
    pub r_b: f64,
    r: Matrix,
    projected: Vec<Matrix>,
    base: QuadraticForm,
    cross: Vec<QuadraticForm>,
}

impl BoundCache {
    pub fn new<M: RegressionModel + ?Sized>(model: &M, b: &ParamBox) -> Result<Self> {
        let center = b.center();
        let (a_bar, gradients) = model.design_with_gradient(&center)?;
        let r_b = model.remainder_radius(b, &center)?;
        Self::from_parts(center, a_bar, gradients, r_b)
    }

    pub fn from_parts(center: Vec<f64>, a_bar: Matrix, gradients: Vec<Matrix>, r_b: f64) -> Result<Self> {
        if gradients.len() != center.len() {
            return Err(Error::Dimension(format!("{} gradients for {} parameters", gradients.len(), center.len())));
        }
        if a_bar.cols() < 2 {
            return Err(Error::Dimension(format!("design matrix needs at least 2 columns, got {}", a_bar.cols())));
        }
        let qr = Qr::factor(&a_bar)?;
        let r = qr.r().clone();
        let projected: Vec<Matrix> = gradients.iter().map(|g| qr.project(g)).collect();
        let base = QuadraticForm::from_matrix(&r.tr_matmul(&r));
        let cross = projected.iter().map(|g| QuadraticForm::from_matrix(&g.tr_matmul(&r))).collect();
        Ok(Self { center, a_bar, gradients, r_b, r, projected, base, cross })
    }

    /// Number of regression unknowns `x`.
    pub fn unknowns(&self) -> usize {
        self.a_bar.cols() - 1
    }

    /// `min_x ‖Ā[1;x]‖²`, i.e. the objective at the center.
    pub fn center_value(&self) -> f64 {
        let mut ws = Workspace::new(self);
        let n = self.unknowns();
        let q = &self.base.q;
        ws.q.copy_from_slice(q.as_slice());
        for (dst, src) in ws.c.iter_mut().zip(&self.base.c) {
            *dst = -0.5 * src;
        }
        if factor_in_place(&mut ws.q, n).is_err() {
            return f64::NAN;
        }
        let zero = vec![0.0; self.center.len()];
        self.minimize_with(&mut ws, &zero, f64::INFINITY).unwrap_or(f64::NAN)
    }

    /// Total quadratic form of the relaxation at `vertex` for shift parameter `k`.
    pub fn total_form(&self, vertex: &[f64], k: f64) -> QuadraticForm {
        let mut form = self.base.clone();
        form.add_scaled(&self.base, -1.0 / k);
        let penalty = k * self.r_b * self.r_b;
        for i in 0..form.q.rows() {
            form.q[(i, i)] -= penalty;
        }
        form.d -= penalty;
        for (i, cross) in self.cross.iter().enumerate() {
            form.add_scaled(cross, 2.0 * (vertex[i] - self.center[i]));
        }
        form
    }

    /// Assembles the total form's `Q` and `c` into `ws` and factors `Q`.
    fn assemble(&self, ws: &mut Workspace, delta: &[f64], k: f64) -> bool {
        let n = self.unknowns();
        let beta = 1.0 - 1.0 / k;
        let penalty = k * self.r_b * self.r_b;
        for (dst, src) in ws.q.iter_mut().zip(self.base.q.as_slice()) {
            *dst = beta * src;
        }
        for (dst, src) in ws.c.iter_mut().zip(&self.base.c) {
            *dst = -0.5 * beta * src;
        }
        for (cross, &di) in self.cross.iter().zip(delta) {
            if di != 0.0 {
                let w = 2.0 * di;
                for (dst, src) in ws.q.iter_mut().zip(cross.q.as_slice()) {
                    *dst += w * src;
                }
                for (dst, src) in ws.c.iter_mut().zip(&cross.c) {
                    *dst -= 0.5 * w * src;
                }
            }
        }
        for i in 0..n {
            ws.q[i * n + i] -= penalty;
        }
        factor_in_place(&mut ws.q, n).is_ok()
    }

    /// Closed-form minimizer from the factored `Q` in `ws`, one refinement
    /// step, and the value of the relaxation there.
    fn minimize_with(&self, ws: &mut Workspace, delta: &[f64], k: f64) -> Option<f64> {
        let n = self.unknowns();
        ws.x.copy_from_slice(&ws.c);
        solve_in_place(&ws.q, n, &mut ws.x);
        self.evaluate(ws, delta, k);
        for (s, g) in ws.step.iter_mut().zip(&ws.grad[1..]) {
            *s = -0.5 * g;
        }
        solve_in_place(&ws.q, n, &mut ws.step);
        for (x, s) in ws.x.iter_mut().zip(&ws.step) {
            *x += s;
        }
        let value = self.evaluate(ws, delta, k);
        value.is_finite().then_some(value)
    }

    /// `β‖Āz‖² + 2(Dz)ᵀ(Āz) − k r²‖z‖²` at `z = [1;x]`; leaves the gradient
    /// with respect to `z` in `ws.grad`.
    fn evaluate(&self, ws: &mut Workspace, delta: &[f64], k: f64) -> f64 {
        let (beta, penalty) = if k.is_finite() { (1.0 - 1.0 / k, k * self.r_b * self.r_b) } else { (1.0, 0.0) };
        let n = self.r.cols();
        let r = self.r.as_slice();
        ws.z[0] = 1.0;
        ws.z[1..].copy_from_slice(&ws.x);
        for i in 0..n {
            ws.rz[i] = (i..n).map(|j| r[i * n + j] * ws.z[j]).sum();
            ws.dz[i] = 0.0;
        }
        for (g, &di) in self.projected.iter().zip(delta) {
            if di != 0.0 {
                let g = g.as_slice();
                for i in 0..n {
                    ws.dz[i] += di * (0..n).map(|j| g[i * n + j] * ws.z[j]).sum::<f64>();
                }
            }
        }
        let rr: f64 = ws.rz.iter().map(|v| v * v).sum();
        let dr: f64 = ws.dz.iter().zip(&ws.rz).map(|(a, b)| a * b).sum();
        let zz: f64 = ws.z.iter().map(|v| v * v).sum();

        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..=j {
                acc += r[i * n + j] * (beta * ws.rz[i] + ws.dz[i]);
            }
            ws.grad[j] = 2.0 * (acc - penalty * ws.z[j]);
        }
        for (g, &di) in self.projected.iter().zip(delta) {
            if di != 0.0 {
                let g = g.as_slice();
                for j in 0..n {
                    ws.grad[j] += 2.0 * di * (0..n).map(|i| g[i * n + j] * ws.rz[i]).sum::<f64>();
                }
            }
        }
        beta * rr + 2.0 * dr - penalty * zz
    }
}

/// Scratch buffers for repeated vertex/k evaluations against one cache.
#[derive(Debug, Clone)]
pub struct Workspace {
    q: Vec<f64>,
    c: Vec<f64>,
    x: Vec<f64>,
    step: Vec<f64>,
    z: Vec<f64>,
    rz: Vec<f64>,
    dz: Vec<f64>,
    grad: Vec<f64>,
}

impl Workspace {
    pub fn new(cache: &BoundCache) -> Self {
        let n = cache.unknowns();
        Self {
            q: vec![0.0; n * n],
            c: vec![0.0; n],
            x: vec![0.0; n],
            step: vec![0.0; n],
            z: vec![0.0; n + 1],
            rz: vec![0.0; n + 1],
            dz: vec![0.0; n + 1],
            grad: vec![0.0; n + 1],
        }
    }
}

/// Lower bound of the relaxation at one vertex for one `k`; `−∞` when the
/// assembled form is not positive definite.
pub fn lower_bound_at(cache: &BoundCache, vertex: &[f64], k: f64) -> f64 {
    lower_bound_with(cache, &mut Workspace::new(cache), vertex, k)
}

/// [`lower_bound_at`] reusing caller-owned scratch space.
pub fn lower_bound_with(cache: &BoundCache, ws: &mut Workspace, vertex: &[f64], k: f64) -> f64 {
    let delta: Vec<f64> = vertex.iter().zip(&cache.center).map(|(v, c)| v - c).collect();
    bound_delta(cache, ws, &delta, k)
}

fn bound_delta(cache: &BoundCache, ws: &mut Workspace, delta: &[f64], k: f64) -> f64 {
    if !cache.assemble(ws, delta, k) {
        return f64::NEG_INFINITY;
    }
    cache.minimize_with(ws, delta, k).unwrap_or(f64::NEG_INFINITY)
}

/// Like [`lower_bound_at`], also returning the minimizing `x`.
pub fn lower_bound_detail(cache: &BoundCache, vertex: &[f64], k: f64) -> Option<(Vec<f64>, f64)> {
    let mut ws = Workspace::new(cache);
    let v = lower_bound_with(cache, &mut ws, vertex, k);
    v.is_finite().then(|| (ws.x.clone(), v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// `L(B)`; `−∞` when no `k` yields a positive-definite relaxation.
    pub lower: f64,
    pub k_star: f64,
    /// Index into [`ParamBox::vertices`] of the vertex attaining `lower`.
    pub argmin_vertex: usize,
    pub vertex_values: Vec<f64>,
    pub r_b: f64,
    /// Objective at the box center, as seen by the bound's own factorization.
    pub center_value: f64,
}

/// `max_k min_vertex` of the relaxation over `b`.
pub fn lower_bound<M: RegressionModel + ?Sized>(model: &M, b: &ParamBox, search: &ScalarSearch) -> Result<BoundReport> {
    model.validate(b)?;
    let cache = BoundCache::new(model, b)?;
    Ok(lower_bound_cached(&cache, b, search))
}

pub fn lower_bound_cached(cache: &BoundCache, b: &ParamBox, search: &ScalarSearch) -> BoundReport {
    let deltas: Vec<Vec<f64>> =
        b.vertices().iter().map(|v| v.iter().zip(&cache.center).map(|(v, c)| v - c).collect()).collect();
    let mut ws = Workspace::new(cache);
    let (k_star, _) = maximize_scalar(
        &mut |k: f64| deltas.iter().map(|d| bound_delta(cache, &mut ws, d, k)).fold(f64::INFINITY, f64::min),
        search,
    );
    let vertex_values: Vec<f64> = deltas.iter().map(|d| bound_delta(cache, &mut ws, d, k_star)).collect();
    let (argmin_vertex, lower) = vertex_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let lower = if vertex_values.iter().any(|v| v.is_nan()) { f64::NEG_INFINITY } else { lower };
    BoundReport { lower, k_star, argmin_vertex, vertex_values, r_b: cache.r_b, center_value: cache.center_value() }
}
