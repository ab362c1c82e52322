//! A regression with a planted zero-residual optimum, `A(p) = A₀ + Σ pᵢLᵢ + Σ pᵢ²Cᵢ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bound::RegressionModel;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::region::ParamBox;

#[derive(Debug, Clone)]
pub struct SyntheticModel {
    base: Matrix,
    linear: Vec<Matrix>,
    quadratic: Vec<Matrix>,
    p_star: Vec<f64>,
    x_star: Vec<f64>,
}

impl SyntheticModel {
    /// Random model with `A(p_star)[1; x_star] = 0`, so `f(p_star) = 0`.
    /// `sensitivity` scales the linear terms and `curvature` the quadratic ones.
    pub fn planted(seed: u64, rows: usize, unknowns: usize, p_star: &[f64], sensitivity: f64, curvature: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = unknowns + 1;
        let mut random = |s: f64| Matrix::from_fn(rows, cols, |_, _| s * rng.gen_range(-1.0..1.0));
        let mut base = random(1.0);
        let linear: Vec<Matrix> = p_star.iter().map(|_| random(sensitivity)).collect();
        let quadratic: Vec<Matrix> = p_star.iter().map(|_| random(curvature)).collect();
        let x_star: Vec<f64> = (0..unknowns).map(|j| 0.5 - (j as f64 + 1.0) / (unknowns as f64 + 1.0)).collect();
        let mut model = Self { base: base.clone(), linear, quadratic, p_star: p_star.to_vec(), x_star };
        let residual = model.design(p_star).expect("dimensions are consistent").matvec(&model.z_star());
        for (i, r) in residual.iter().enumerate() {
            base[(i, 0)] -= r;
        }
        model.base = base;
        model
    }

    /// Adds uniform noise of size `level` to the first design column, so the
    /// optimum value becomes positive and `p_star` only approximates it.
    pub fn with_noise(mut self, seed: u64, level: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..self.base.rows() {
            self.base[(i, 0)] += level * rng.gen_range(-1.0..1.0);
        }
        self
    }

    pub fn p_star(&self) -> &[f64] {
        &self.p_star
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    fn z_star(&self) -> Vec<f64> {
        std::iter::once(1.0).chain(self.x_star.iter().copied()).collect()
    }

    fn check(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.linear.len() {
            return Err(Error::Dimension(format!("expected {} parameters, got {}", self.linear.len(), p.len())));
        }
        Ok(())
    }
}

impl RegressionModel for SyntheticModel {
    fn dim(&self) -> usize {
        self.linear.len()
    }

    fn design(&self, p: &[f64]) -> Result<Matrix> {
        self.check(p)?;
        let mut a = self.base.clone();
        for ((l, c), pi) in self.linear.iter().zip(&self.quadratic).zip(p) {
            a.axpy(*pi, l);
            a.axpy(pi * pi, c);
        }
        Ok(a)
    }

    fn design_gradient(&self, p: &[f64]) -> Result<Vec<Matrix>> {
        self.check(p)?;
        Ok(self.linear.iter().zip(&self.quadratic).zip(p).map(|((l, c), pi)| l.add(&c.scale(2.0 * pi))).collect())
    }

    fn remainder_radius(&self, b: &ParamBox, pbar: &[f64]) -> Result<f64> {
        self.check(pbar)?;
        let d = b.max_distance(pbar);
        let (rows, cols) = (self.base.rows(), self.base.cols());
        let mut sum = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                let m = self.quadratic.iter().map(|c| c[(i, j)].abs()).fold(0.0, f64::max);
                sum += m * m;
            }
        }
        Ok(sum.sqrt() * d * d)
    }

    fn validate(&self, b: &ParamBox) -> Result<()> {
        if b.dim() != self.dim() {
            return Err(Error::Dimension(format!("box of dimension {} for a {}-parameter model", b.dim(), self.dim())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_point_has_zero_residual() {
        let m = SyntheticModel::planted(1, 20, 3, &[0.3, -0.4], 0.5, 0.1);
        let r = m.design(m.p_star()).unwrap().matvec(&m.z_star());
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn remainder_radius_covers_taylor_error() {
        let m = SyntheticModel::planted(2, 15, 2, &[0.0, 0.0], 0.5, 0.3);
        let b = ParamBox::new(vec![-0.4, 0.1], vec![0.2, 0.5]).unwrap();
        let c = b.center();
        let r_b = m.remainder_radius(&b, &c).unwrap();
        let a_bar = m.design(&c).unwrap();
        let grads = m.design_gradient(&c).unwrap();
        for v in b.vertices().iter().chain([b.lerp(&[0.3, 0.8])].iter()) {
            let mut lin = a_bar.clone();
            for (g, (vi, ci)) in grads.iter().zip(v.iter().zip(&c)) {
                lin.axpy(vi - ci, g);
            }
            let err = m.design(v).unwrap().sub(&lin).frobenius_norm();
            assert!(err <= r_b * (1.0 + 1e-12), "{err} > {r_b}");
        }
    }
}
