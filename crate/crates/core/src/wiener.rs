//! The Hill/ARX Wiener identification problem as a nonlinear regression
//! `min ‖A(p) [1; x]‖²` over `p = (gamma, emax)`.
//!
//! Each sample is mapped back to a normalized concentration through the
//! inverse Hill function `f_p(k) = a_k^(1/gamma)` with
//! `a_k = (E0 − y(k)) / (emax − E0 + y(k))`. The regression matrix stacks
//! the Toeplitz block of those values next to the negated input lags, so the
//! residual is literally `A(p) [1; alpha; beta]`.

use serde::{Deserialize, Serialize};

use crate::bound::RegressionModel;
use crate::error::{Error, InvertibilityError, Result};
use crate::interval::Interval;
use crate::numerics::Matrix;
use crate::pkpd::Dataset;
use crate::region::ParamBox;

/// Required slack, in BIS units, of `y(k) − E0 + emax` over a whole box.
pub const INVERTIBILITY_MARGIN: f64 = 1e-6;

/// Default distance kept between emax⁻ and the invertibility limit when a box
/// is adjusted. Boxes that reach closer than this are admissible but their
/// lower bounds stay uninformative until the boxes are tiny.
pub const DEFAULT_ADJUST_MARGIN: f64 = 1.0;

/// Smallest admissible lower bound for `gamma`.
pub const GAMMA_FLOOR: f64 = 1.0 + 1e-9;

pub const GAMMA: usize = 0;
pub const EMAX: usize = 1;

/// Ratio `a` for one sample. Errors when the Hill function cannot be inverted.
fn hill_ratio(p: &[f64], y: f64, e0: f64) -> std::result::Result<(f64, f64), InvertibilityError> {
    let emax = p[EMAX];
    let t = e0 - y;
    let den = emax - t;
    if t < 0.0 || !(den > 0.0) {
        return Err(InvertibilityError { sample: None, y, e0, emax });
    }
    Ok((t / den, den))
}

/// Normalized concentration `a^(1/gamma)`, exactly 0 at the baseline.
pub fn hill_inverse(p: &[f64], y: f64, e0: f64) -> std::result::Result<f64, InvertibilityError> {
    let (a, _) = hill_ratio(p, y, e0)?;
    Ok(if a == 0.0 { 0.0 } else { a.powf(1.0 / p[GAMMA]) })
}

/// `(∂f/∂gamma, ∂f/∂emax)`, both 0 in the `a = 0` limit.
pub fn first_partials(p: &[f64], y: f64, e0: f64) -> std::result::Result<(f64, f64), InvertibilityError> {
    let (a, den) = hill_ratio(p, y, e0)?;
    if a == 0.0 {
        return Ok((0.0, 0.0));
    }
    let g = p[GAMMA];
    let f = a.powf(1.0 / g);
    Ok((-f * a.ln() / (g * g), -f / (g * den)))
}

/// `(∂²f/∂gamma², ∂²f/∂gamma∂emax, ∂²f/∂emax²)`, all 0 in the `a = 0` limit.
pub fn second_partials(p: &[f64], y: f64, e0: f64) -> std::result::Result<(f64, f64, f64), InvertibilityError> {
    let (a, den) = hill_ratio(p, y, e0)?;
    if a == 0.0 {
        return Ok((0.0, 0.0, 0.0));
    }
    let g = p[GAMMA];
    let f = a.powf(1.0 / g);
    let la = a.ln();
    let d_gg = la * f * (2.0 * g + la) / g.powi(4);
    let d_ge = f * (g + la) / (g.powi(3) * den);
    let d_ee = f * (g + 1.0) / (g * g * den * den);
    Ok((d_gg, d_ge, d_ee))
}

/// Upper bound on the Hessian norm of `f_p` for one sample over `b`: the
/// Frobenius combination of interval enclosures of the three second partials.
pub fn hessian_bound(b: &ParamBox, y: f64, e0: f64) -> std::result::Result<f64, InvertibilityError> {
    hessian_sups(b, y, e0).map(frobenius)
}

fn frobenius((m_gg, m_ge, m_ee): (f64, f64, f64)) -> f64 {
    let fro = (m_gg * m_gg + 2.0 * m_ge * m_ge + m_ee * m_ee).sqrt();
    if fro == 0.0 {
        0.0
    } else {
        fro.next_up()
    }
}

/// Sups over `b` of `|∂²γ f|`, `|∂γ∂E f|` and `|∂²E f|` for one sample.
pub fn hessian_sups(b: &ParamBox, y: f64, e0: f64) -> std::result::Result<(f64, f64, f64), InvertibilityError> {
    BoxTerms::new(b).sups(y, e0)
}

/// The sample-independent interval factors of the second partials over a box.
struct BoxTerms {
    g: Interval,
    two_g: Interval,
    inv_g: Interval,
    inv_g2: Interval,
    inv_g3: Interval,
    inv_g4: Interval,
    e_lo: f64,
    e_hi: f64,
}

impl BoxTerms {
    fn new(b: &ParamBox) -> Self {
        let g = Interval::new(b.lower()[GAMMA], b.upper()[GAMMA]);
        Self {
            g,
            two_g: g * 2.0,
            inv_g: g.recip(),
            inv_g2: g.powi(2).recip(),
            inv_g3: g.powi(3).recip(),
            inv_g4: g.powi(4).recip(),
            e_lo: b.lower()[EMAX],
            e_hi: b.upper()[EMAX],
        }
    }

    fn sups(&self, y: f64, e0: f64) -> std::result::Result<(f64, f64, f64), InvertibilityError> {
        let t = e0 - y;
        let den_lo = (self.e_lo - t).next_down();
        if t < 0.0 || !(den_lo > 0.0) {
            return Err(InvertibilityError { sample: None, y, e0, emax: self.e_lo });
        }
        if t == 0.0 {
            return Ok((0.0, 0.0, 0.0));
        }
        let den = Interval::new(den_lo, (self.e_hi - t).next_up());
        let inv_den = den.recip();
        let ln_a = Interval::point(t).ln() - den.ln();
        let pow = (ln_a * self.inv_g).exp();

        let d_gg = ln_a * pow * (self.two_g + ln_a) * self.inv_g4;
        let d_ge = pow * (self.g + ln_a) * self.inv_g3 * inv_den;
        let d_ee = pow * (self.g + 1.0) * self.inv_g2 * inv_den * inv_den;
        Ok((d_gg.mag(), d_ge.mag(), d_ee.mag()))
    }
}

/// `A(p)` of shape `m × (N + M + 1)` with `m = n − ell + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub a: Matrix,
    pub p: Vec<f64>,
}

/// `∂A/∂gamma` and `∂A/∂emax`; the input block is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBlocks {
    pub d_gamma: Matrix,
    pub d_emax: Matrix,
}

/// Sampled data plus ARX orders: everything needed to evaluate `A(p)`.
#[derive(Debug, Clone)]
pub struct WienerProblem {
    y: Vec<f64>,
    u: Vec<f64>,
    e0: f64,
    n_ar: usize,
    n_in: usize,
    remainder: RemainderBound,
}

/// How the Taylor remainder of `A` is bounded over a box.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemainderBound {
    /// `½ Σ_ij sup|H_ij| w_i w_j` per entry, with `w` the per-axis reach from the center.
    #[default]
    Axis,
    /// `½ ‖H‖_F d²` per entry, with `d` the distance to the farthest vertex.
    Isotropic,
}

impl WienerProblem {
    pub fn new(data: &Dataset, e0: f64, n_ar: usize, n_in: usize) -> Result<Self> {
        if n_ar < 1 || n_in < 1 {
            return Err(Error::InvalidInput(format!("ARX orders must be at least 1, got N={n_ar} M={n_in}")));
        }
        let ell = n_ar.max(n_in);
        let q = 2;
        if data.n() < ell + q + n_ar + n_in {
            return Err(Error::InvalidInput(format!(
                "{} samples are too few for orders N={n_ar}, M={n_in}",
                data.n() + 1
            )));
        }
        if !e0.is_finite() {
            return Err(Error::InvalidInput(format!("baseline e0 must be finite, got {e0}")));
        }
        Ok(Self { y: data.y.clone(), u: data.u.clone(), e0, n_ar, n_in, remainder: RemainderBound::default() })
    }

    pub fn e0(&self) -> f64 {
        self.e0
    }

    pub fn orders(&self) -> (usize, usize) {
        (self.n_ar, self.n_in)
    }

    pub fn ell(&self) -> usize {
        self.n_ar.max(self.n_in)
    }

    /// Number of residual rows `m`.
    pub fn rows(&self) -> usize {
        self.y.len() - self.ell()
    }

    pub fn cols(&self) -> usize {
        self.n_ar + self.n_in + 1
    }

    pub fn outputs(&self) -> &[f64] {
        &self.y
    }

    fn with_sample<T>(k: usize, r: std::result::Result<T, InvertibilityError>) -> Result<T> {
        r.map_err(|e| Error::Invertibility(InvertibilityError { sample: Some(k), ..e }))
    }

    /// `f_p(k)` for every sample.
    pub fn concentrations(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.y
            .iter()
            .enumerate()
            .map(|(k, &y)| Self::with_sample(k, hill_inverse(p, y, self.e0)))
            .collect()
    }

    /// Toeplitz layout: `F[i][j] = v(ell + i − j)` for `j ≤ N`, then
    /// `−u(ell + i − j)` for `j = 1..=M`, where `v` is a per-sample vector.
    fn toeplitz(&self, v: &[f64], with_input: bool) -> Matrix {
        let ell = self.ell();
        let n_ar = self.n_ar;
        Matrix::from_fn(self.rows(), self.cols(), |i, j| {
            let k = ell + i;
            if j <= n_ar {
                v[k - j]
            } else if with_input {
                -self.u[k - (j - n_ar)]
            } else {
                0.0
            }
        })
    }

    pub fn build_design(&self, p: &[f64]) -> Result<DesignMatrix> {
        let f = self.concentrations(p)?;
        Ok(DesignMatrix { a: self.toeplitz(&f, true), p: p.to_vec() })
    }

    pub fn gradient_design(&self, p: &[f64]) -> Result<GradientBlocks> {
        let mut dg = Vec::with_capacity(self.y.len());
        let mut de = Vec::with_capacity(self.y.len());
        for (k, &y) in self.y.iter().enumerate() {
            let (g, e) = Self::with_sample(k, first_partials(p, y, self.e0))?;
            dg.push(g);
            de.push(e);
        }
        Ok(GradientBlocks { d_gamma: self.toeplitz(&dg, false), d_emax: self.toeplitz(&de, false) })
    }

    /// `A(p)` and both gradient blocks from one pass over the samples.
    pub fn design_with_gradient(&self, p: &[f64]) -> Result<(Matrix, GradientBlocks)> {
        let len = self.y.len();
        let (mut f, mut dg, mut de) = (Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len));
        let g = p[GAMMA];
        for (k, &y) in self.y.iter().enumerate() {
            let (a, den) = Self::with_sample(k, hill_ratio(p, y, self.e0))?;
            if a == 0.0 {
                f.push(0.0);
                dg.push(0.0);
                de.push(0.0);
            } else {
                let v = a.powf(1.0 / g);
                f.push(v);
                dg.push(-v * a.ln() / (g * g));
                de.push(-v / (g * den));
            }
        }
        let blocks = GradientBlocks { d_gamma: self.toeplitz(&dg, false), d_emax: self.toeplitz(&de, false) };
        Ok((self.toeplitz(&f, true), blocks))
    }

    pub fn with_remainder(mut self, remainder: RemainderBound) -> Self {
        self.remainder = remainder;
        self
    }

    pub fn remainder_mode(&self) -> RemainderBound {
        self.remainder
    }

    /// Per-sample Hessian bounds over `b`.
    pub fn sample_hessian_bounds(&self, b: &ParamBox) -> Result<Vec<f64>> {
        let terms = BoxTerms::new(b);
        self.y
            .iter()
            .enumerate()
            .map(|(k, &y)| Self::with_sample(k, terms.sups(y, self.e0).map(frobenius)))
            .collect()
    }

    /// Frobenius bound on the Taylor remainder over the entries of the
    /// Toeplitz block, each entry bounded through the sample it holds.
    pub fn remainder_radius(&self, b: &ParamBox, pbar: &[f64]) -> Result<f64> {
        let d = b.max_distance(pbar);
        if d == 0.0 {
            return Ok(0.0);
        }
        let r = match self.remainder {
            RemainderBound::Isotropic => self.sample_hessian_bounds(b)?.into_iter().map(|h| h * d * d).collect(),
            RemainderBound::Axis => {
                let w: Vec<f64> = pbar
                    .iter()
                    .zip(b.lower().iter().zip(b.upper()))
                    .map(|(c, (l, u))| (c - l).abs().max((u - c).abs()))
                    .collect();
                let (wg, we) = (w[GAMMA], w[EMAX]);
                let terms = BoxTerms::new(b);
                self.y
                    .iter()
                    .enumerate()
                    .map(|(k, &y)| {
                        let (gg, ge, ee) = Self::with_sample(k, terms.sups(y, self.e0))?;
                        Ok(gg * wg * wg + 2.0 * ge * wg * we + ee * we * we)
                    })
                    .collect::<Result<Vec<f64>>>()?
            }
        };
        let ell = self.ell();
        let mut sum = 0.0;
        for i in 0..self.rows() {
            for j in 0..=self.n_ar {
                let v = r[ell + i - j];
                sum += v * v;
            }
        }
        Ok((0.5 * sum.sqrt()).next_up().next_up())
    }

    /// Checks `y(k) − E0 + emax⁻ > margin` for every sample; reports the worst one.
    pub fn validate_box(&self, b: &ParamBox) -> Result<()> {
        if b.dim() != 2 {
            return Err(Error::Dimension(format!("Wiener boxes are 2-dimensional, got {}", b.dim())));
        }
        if !(b.lower()[GAMMA] > 0.0) {
            return Err(Error::InvalidInput(format!("gamma lower bound must be positive, got {}", b.lower()[GAMMA])));
        }
        let emax = b.lower()[EMAX];
        if let Some(k) = self.y.iter().position(|&y| y > self.e0) {
            return Err(InvertibilityError { sample: Some(k), y: self.y[k], e0: self.e0, emax }.into());
        }
        let (k, y_min) = self.min_output();
        if !(y_min - self.e0 + emax > INVERTIBILITY_MARGIN) {
            return Err(InvertibilityError { sample: Some(k), y: y_min, e0: self.e0, emax }.into());
        }
        Ok(())
    }

    fn min_output(&self) -> (usize, f64) {
        self.y
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc })
    }

    /// Smallest `emax` for which the data remain invertible with the margin.
    pub fn min_admissible_emax(&self) -> f64 {
        self.e0 - self.min_output().1 + INVERTIBILITY_MARGIN
    }

    /// Shrinks `b` so that it can be validated: raises emax⁻ to the
    /// invertibility limit and gamma⁻ to [`GAMMA_FLOOR`]. Returns the new box
    /// and whether anything changed; fails when nothing admissible remains.
    pub fn admissible_box(&self, b: &ParamBox) -> Result<(ParamBox, bool)> {
        self.admissible_box_with_margin(b, INVERTIBILITY_MARGIN)
    }

    /// Like [`Self::admissible_box`], but an emax⁻ closer than `margin` to the limit is raised to
    /// `E0 − min y + margin` (never less than the invertibility margin).
    pub fn admissible_box_with_margin(&self, b: &ParamBox, margin: f64) -> Result<(ParamBox, bool)> {
        if !(margin >= 0.0) || !margin.is_finite() {
            return Err(Error::InvalidInput(format!("adjust margin must be a non-negative number, got {margin}")));
        }
        let margin = margin.max(INVERTIBILITY_MARGIN);
        let mut out = b.clone();
        let mut changed = false;
        if out.lower()[GAMMA] < GAMMA_FLOOR {
            if out.upper()[GAMMA] < GAMMA_FLOOR {
                return Err(Error::InvalidInput(format!("gamma range ends below {GAMMA_FLOOR}")));
            }
            out.set_lower(GAMMA, GAMMA_FLOOR);
            changed = true;
        }
        let slack = self.min_output().1 - self.e0 + out.lower()[EMAX];
        if self.validate_box(&out).is_err() || slack < margin {
            let need = self.e0 - self.min_output().1 + margin;
            let mut emax = need;
            while self.min_output().1 - self.e0 + emax <= INVERTIBILITY_MARGIN {
                emax = emax.next_up();
            }
            if emax > out.upper()[EMAX] {
                let (k, y) = self.min_output();
                return Err(Error::InvalidInput(format!(
                    "no admissible emax in the box: sample {k} (y={y}) requires emax > {need}, box ends at {}",
                    out.upper()[EMAX]
                )));
            }
            out.set_lower(EMAX, emax);
            changed = true;
            self.validate_box(&out)?;
        }
        Ok((out, changed))
    }
}

impl RegressionModel for WienerProblem {
    fn dim(&self) -> usize {
        2
    }

    fn design(&self, p: &[f64]) -> Result<Matrix> {
        self.build_design(p).map(|d| d.a)
    }

    fn design_gradient(&self, p: &[f64]) -> Result<Vec<Matrix>> {
        self.gradient_design(p).map(|g| vec![g.d_gamma, g.d_emax])
    }

    fn design_with_gradient(&self, p: &[f64]) -> Result<(Matrix, Vec<Matrix>)> {
        WienerProblem::design_with_gradient(self, p).map(|(a, g)| (a, vec![g.d_gamma, g.d_emax]))
    }

    fn remainder_radius(&self, b: &ParamBox, pbar: &[f64]) -> Result<f64> {
        WienerProblem::remainder_radius(self, b, pbar)
    }

    fn validate(&self, b: &ParamBox) -> Result<()> {
        self.validate_box(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pkpd::{hill, synthesize_dataset, table1_patient, HillParams, InputProfile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn patient1_problem(n: usize) -> (WienerProblem, HillParams) {
        let p = table1_patient(1).unwrap();
        let ds = synthesize_dataset(&p, &InputProfile::induction(), 1.0, 300.0).unwrap();
        (WienerProblem::new(&ds, ds.e0, n, n).unwrap(), p.pd)
    }

    #[test]
    fn inverse_special_values() {
        let p = [2.24, 94.1];
        assert_eq!(hill_inverse(&p, 98.8, 98.8).unwrap(), 0.0);
        assert!((hill_inverse(&p, 98.8 - 94.1 / 2.0, 98.8).unwrap() - 1.0).abs() < 1e-14);
        assert!(hill_inverse(&p, 99.0, 98.8).is_err());
        assert!(hill_inverse(&[2.0, 40.0], 50.0, 98.8).is_err());
    }

    #[test]
    fn inverse_round_trips_hill() {
        let hp = table1_patient(1).unwrap().pd;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let ce = rng.gen_range(0.0..30.0);
            let y = hill(&hp, ce);
            let c = hill_inverse(&[hp.gamma, hp.emax], y, hp.e0).unwrap();
            assert!((c - ce / hp.ce50).abs() <= 1e-12 * (ce / hp.ce50).max(1.0), "ce={ce} c={c}");
        }
    }

    #[test]
    fn inverse_round_trips_across_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let hp = HillParams {
                ce50: 1.0,
                gamma: rng.gen_range(1.01..8.0),
                e0: 95.0,
                emax: rng.gen_range(40.0..160.0),
            };
            let c = rng.gen_range(0.0..3.0);
            let y = hill(&hp, c);
            let back = hill_inverse(&[hp.gamma, hp.emax], y, hp.e0).unwrap();
            // Forming E0 − y costs up to one ulp of E0; that error is
            // amplified by E0 / (gamma · (E0 − y)) in the recovered value.
            let cond = if y < hp.e0 { hp.e0 / (hp.gamma * (hp.e0 - y)) } else { 0.0 };
            let tol = 1e-12 * c.max(1.0) + 4.0 * f64::EPSILON * cond * c;
            assert!((back - c).abs() <= tol, "{back} vs {c} at {hp:?}");
        }
    }

    #[test]
    fn partial_special_values() {
        let (dg, _) = first_partials(&[2.0, 100.0], 50.0, 100.0).unwrap();
        assert_eq!(dg, 0.0);
        assert_eq!(first_partials(&[2.0, 100.0], 100.0, 100.0).unwrap(), (0.0, 0.0));
        assert_eq!(second_partials(&[2.0, 100.0], 100.0, 100.0).unwrap(), (0.0, 0.0, 0.0));
    }

    #[test]
    fn second_partials_at_unit_ratio() {
        // a = 1, ln a = 0: (0, gamma / (gamma³ · 50), (gamma + 1) / (gamma² · 50²))
        let (gg, ge, ee) = second_partials(&[2.0, 100.0], 50.0, 100.0).unwrap();
        assert_eq!(gg, 0.0);
        assert!((ge - 0.005).abs() < 1e-17);
        assert!((ee - 3e-4).abs() < 1e-18);
    }

    fn random_interior_sample(rng: &mut ChaCha8Rng) -> ([f64; 2], f64, f64) {
        let e0 = 95.0;
        let p = [rng.gen_range(1.2..7.5), rng.gen_range(60.0..150.0)];
        let y = e0 - rng.gen_range(0.5..50.0);
        (p, y, e0)
    }

    #[test]
    fn first_partials_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-5;
        for _ in 0..100 {
            let (p, y, e0) = random_interior_sample(&mut rng);
            let (dg, de) = first_partials(&p, y, e0).unwrap();
            let f = |q: [f64; 2]| hill_inverse(&q, y, e0).unwrap();
            let fd_g = (f([p[0] + h, p[1]]) - f([p[0] - h, p[1]])) / (2.0 * h);
            let fd_e = (f([p[0], p[1] + h]) - f([p[0], p[1] - h])) / (2.0 * h);
            assert!((dg - fd_g).abs() <= 1e-6 * dg.abs().max(1e-3), "{dg} vs {fd_g}");
            assert!((de - fd_e).abs() <= 1e-6 * de.abs().max(1e-3), "{de} vs {fd_e}");
        }
    }

    #[test]
    fn second_partials_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-4;
        for _ in 0..100 {
            let (p, y, e0) = random_interior_sample(&mut rng);
            let (gg, ge, ee) = second_partials(&p, y, e0).unwrap();
            let f = |q: [f64; 2]| hill_inverse(&q, y, e0).unwrap();
            let f0 = f(p);
            let fd_gg = (f([p[0] + h, p[1]]) - 2.0 * f0 + f([p[0] - h, p[1]])) / (h * h);
            let fd_ee = (f([p[0], p[1] + h]) - 2.0 * f0 + f([p[0], p[1] - h])) / (h * h);
            let fd_ge = (f([p[0] + h, p[1] + h]) - f([p[0] + h, p[1] - h]) - f([p[0] - h, p[1] + h])
                + f([p[0] - h, p[1] - h]))
                / (4.0 * h * h);
            let scale = gg.abs().max(ge.abs()).max(ee.abs()).max(1e-6);
            assert!((gg - fd_gg).abs() <= 1e-4 * scale, "gg {gg} vs {fd_gg}");
            assert!((ge - fd_ge).abs() <= 1e-4 * scale, "ge {ge} vs {fd_ge}");
            assert!((ee - fd_ee).abs() <= 1e-4 * scale, "ee {ee} vs {fd_ee}");
        }
    }

    #[test]
    fn hessian_bound_point_box_and_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (p, y, e0) = random_interior_sample(&mut rng);
            let r = hessian_bound(&ParamBox::point(&p), y, e0).unwrap();
            let (gg, ge, ee) = second_partials(&p, y, e0).unwrap();
            let fro = (gg * gg + 2.0 * ge * ge + ee * ee).sqrt();
            assert!(r >= fro && r <= 10.0 * fro + 1e-300, "R={r} fro={fro}");
        }
        let b = ParamBox::gamma_emax((1.5, 3.0), (60.0, 90.0)).unwrap();
        assert_eq!(hessian_bound(&b, 90.0, 90.0).unwrap(), 0.0);
        assert!(hessian_bound(&b, 20.0, 90.0).is_err());
    }

    #[test]
    fn hessian_bound_dominates_sampled_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let g0 = rng.gen_range(1.0..7.0);
            let e_lo = rng.gen_range(60.0..140.0);
            let b = ParamBox::gamma_emax((g0, g0 + rng.gen_range(0.01..1.0)), (e_lo, e_lo + rng.gen_range(0.1..20.0)))
                .unwrap();
            let (y, e0) = (95.0 - rng.gen_range(0.001..55.0), 95.0);
            let r = hessian_bound(&b, y, e0).unwrap();
            for _ in 0..500 {
                let p = b.lerp(&[rng.gen(), rng.gen()]);
                let (gg, ge, ee) = second_partials(&p, y, e0).unwrap();
                assert!((gg * gg + 2.0 * ge * ge + ee * ee).sqrt() <= r);
            }
        }
    }

    #[test]
    fn smallest_layout() {
        let ds = Dataset::new(1.0, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![90.0, 80.0, 70.0, 75.0, 85.0, 88.0]).unwrap();
        let prob = WienerProblem::new(&ds, 90.0, 1, 1).unwrap();
        let p = [2.0, 60.0];
        let a = prob.build_design(&p).unwrap().a;
        let f = prob.concentrations(&p).unwrap();
        assert_eq!((a.rows(), a.cols()), (5, 3));
        assert_eq!(a.row(0), &[f[1], f[0], -1.0]);
        assert_eq!(a.row(1), &[f[2], f[1], -2.0]);
    }

    #[test]
    fn toeplitz_structure_and_zero_block() {
        let (prob, hp) = patient1_problem(3);
        let a = prob.build_design(&[hp.gamma, hp.emax]).unwrap().a;
        let g = prob.gradient_design(&[hp.gamma, hp.emax]).unwrap();
        let n_ar = 3;
        for i in 0..a.rows() - 1 {
            for j in 0..a.cols() - 1 {
                if j == n_ar {
                    continue;
                }
                assert_eq!(a[(i, j)], a[(i + 1, j + 1)]);
            }
            for j in n_ar + 1..a.cols() {
                assert_eq!(g.d_gamma[(i, j)], 0.0);
                assert_eq!(g.d_emax[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn baseline_output_gives_zero_f_block() {
        let ds = Dataset::new(1.0, vec![1.0; 30], vec![90.0; 30]).unwrap();
        let prob = WienerProblem::new(&ds, 90.0, 2, 2).unwrap();
        let a = prob.build_design(&[3.0, 50.0]).unwrap().a;
        for i in 0..a.rows() {
            for j in 0..=2 {
                assert_eq!(a[(i, j)], 0.0);
            }
        }
        let b = ParamBox::gamma_emax((1.0, 8.0), (1e-3, 160.0)).unwrap();
        prob.validate_box(&b).unwrap();
    }

    #[test]
    fn design_gradient_matches_finite_differences() {
        let (prob, _) = patient1_problem(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-5;
        for _ in 0..10 {
            let p = [rng.gen_range(1.5..7.0), rng.gen_range(70.0..150.0)];
            let g = prob.gradient_design(&p).unwrap();
            for (d, grad) in [(0, &g.d_gamma), (1, &g.d_emax)] {
                let mut hi = p;
                let mut lo = p;
                hi[d] += h;
                lo[d] -= h;
                let fd = prob.build_design(&hi).unwrap().a.sub(&prob.build_design(&lo).unwrap().a).scale(0.5 / h);
                let err = fd.sub(grad).max_abs();
                assert!(err <= 1e-6 * grad.max_abs(), "dim {d}: err {err}");
            }
        }
    }

    #[test]
    fn box_validation_arithmetic() {
        // min y = 60, e0 = 98.8: 60 - 98.8 + 40 = 1.2 > 0
        let mk = |min_y: f64| {
            let mut y = vec![98.8, 90.0, 80.0, 70.0, min_y, 65.0, 70.0, 80.0, 85.0, 90.0];
            y.extend(std::iter::repeat_n(95.0, 10));
            Dataset::new(1.0, vec![1.0; 20], y).unwrap()
        };
        let b = ParamBox::gamma_emax((1.0, 8.0), (40.0, 160.0)).unwrap();
        let ok = WienerProblem::new(&mk(60.0), 98.8, 2, 2).unwrap();
        ok.validate_box(&b).unwrap();
        let bad = WienerProblem::new(&mk(58.0), 98.8, 2, 2).unwrap();
        match bad.validate_box(&b) {
            Err(Error::Invertibility(e)) => {
                assert_eq!(e.sample, Some(4));
                assert!((e.slack() - (-0.8)).abs() < 1e-12);
            }
            other => panic!("expected invertibility error, got {other:?}"),
        }
        let (adj, changed) = bad.admissible_box(&b).unwrap();
        assert!(changed);
        assert!(adj.lower()[EMAX] > 40.8 && adj.lower()[EMAX] < 40.8 + 1e-5);
        assert!(adj.lower()[GAMMA] >= GAMMA_FLOOR);
        bad.validate_box(&adj).unwrap();

        let (wide, _) = bad.admissible_box_with_margin(&b, 1.0).unwrap();
        assert!((wide.lower()[EMAX] - 41.8).abs() < 1e-9);
        // 40.0 is admissible for min y 60 (slack 1.2) but not with a margin of 2
        let (kept, changed) = ok.admissible_box_with_margin(&b, 1.0).unwrap();
        assert!(!changed || kept.lower()[EMAX] == 40.0);
        let (raised, _) = ok.admissible_box_with_margin(&b, 2.0).unwrap();
        assert!((raised.lower()[EMAX] - 40.8).abs() < 1e-9);
        assert!(bad.admissible_box_with_margin(&b, f64::NAN).is_err());
    }

    #[test]
    fn remainder_radius_is_zero_on_points_and_grows() {
        let (prob, hp) = patient1_problem(2);
        let c = [hp.gamma, hp.emax];
        assert_eq!(prob.remainder_radius(&ParamBox::point(&c), &c).unwrap(), 0.0);
        let base = ParamBox::gamma_emax((2.0, 2.5), (90.0, 100.0)).unwrap();
        let center = base.center();
        let mut prev = 0.0;
        for f in [0.1, 0.3, 0.6, 1.0] {
            let r = prob.remainder_radius(&base.scaled_about_center(f), &center).unwrap();
            assert!(r >= prev);
            prev = r;
        }
    }
}
