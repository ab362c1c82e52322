//! Seeded randomized self-checks, runnable outside the test harness.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bnb::{branch_and_bound, solve_fixed_p, Problem, SolverConfig};
use crate::bound::bilinear_decompose;
use crate::error::{Error, Result};
use crate::identify::{default_box, Protocol};
use crate::numerics::{Cholesky, Matrix, ScalarSearch};
use crate::pkpd::{hill, synthesize_dataset, table1_patient, HillParams};
use crate::region::ParamBox;
use crate::synthetic::SyntheticModel;
use crate::wiener::{first_partials, hessian_sups, hill_inverse, second_partials, WienerProblem, DEFAULT_ADJUST_MARGIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Props,
    Bounds,
    Oracle,
}

impl Suite {
    pub fn default_trials(self) -> usize {
        match self {
            Suite::Props => 100,
            Suite::Bounds => 50,
            Suite::Oracle => 1,
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "props" => Ok(Suite::Props),
            "bounds" => Ok(Suite::Bounds),
            "oracle" => Ok(Suite::Oracle),
            other => Err(Error::InvalidInput(format!("unknown suite {other:?}, expected props, bounds or oracle"))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Props => "props",
            Suite::Bounds => "bounds",
            Suite::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    /// First failing case.
    pub counterexample: Option<String>,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

struct Tally {
    outcome: PropertyOutcome,
}

impl Tally {
    fn new(name: &str) -> Self {
        Self { outcome: PropertyOutcome { name: name.to_string(), trials: 0, failures: 0, counterexample: None } }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.outcome.trials += 1;
        if !ok {
            self.outcome.failures += 1;
            if self.outcome.counterexample.is_none() {
                self.outcome.counterexample = Some(describe());
            }
        }
    }
}

pub fn run_suite(suite: Suite, seed: u64, trials: usize) -> Result<Vec<PropertyOutcome>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match suite {
        Suite::Props => Ok(vec![
            shift_is_psd(&mut rng, trials),
            decomposition_identity(&mut rng, trials),
            hill_round_trip(&mut rng, trials),
            partials_match_differences(&mut rng, trials),
            hessian_enclosure(&mut rng, trials),
        ]),
        Suite::Bounds => Ok(vec![bound_soundness(&mut rng, trials, 500)?]),
        Suite::Oracle => (0..trials).map(|_| grid_oracle(&mut rng, 200)).collect(),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// `MᵀN + NᵀM + NᵀN/k + k·MᵀM` stays positive semidefinite.
fn shift_is_psd(rng: &mut ChaCha8Rng, trials: usize) -> PropertyOutcome {
    let mut t = Tally::new("shift_psd");
    for _ in 0..trials {
        let (rows, cols) = (rng.gen_range(3..9), rng.gen_range(1..4));
        let m = random_matrix(rng, rows, cols);
        let n = random_matrix(rng, rows, cols);
        let k = 10f64.powf(rng.gen_range(-3.0..3.0));
        let s = m
            .tr_matmul(&n)
            .add(&n.tr_matmul(&m))
            .add(&n.tr_matmul(&n).scale(1.0 / k))
            .add(&m.tr_matmul(&m).scale(k));
        let scale = 1.0 + s.max_abs();
        let lifted = s.add(&Matrix::identity(cols).scale(1e-10 * scale));
        t.check(Cholesky::factor(&lifted).is_ok(), || format!("k={k:e}, rows={rows}, cols={cols}"));
    }
    t.outcome
}

/// `(Az)ᵀ(Bz)` agrees with the decomposed form at `z = [1; x]`.
fn decomposition_identity(rng: &mut ChaCha8Rng, trials: usize) -> PropertyOutcome {
    let mut t = Tally::new("decomposition_identity");
    for _ in 0..trials {
        let (rows, cols) = (rng.gen_range(2..8), rng.gen_range(2..5));
        let a = random_matrix(rng, rows, cols);
        let b = random_matrix(rng, rows, cols);
        let x: Vec<f64> = (1..cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let z: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
        let direct: f64 = a.matvec(&z).iter().zip(b.matvec(&z)).map(|(p, q)| p * q).sum();
        let form = bilinear_decompose(&a, &b).map(|f| f.value(&x));
        t.check(
            matches!(form, Ok(v) if (v - direct).abs() <= 1e-10 * (1.0 + direct.abs())),
            || format!("rows={rows}, cols={cols}, direct={direct}, form={form:?}"),
        );
    }
    t.outcome
}

/// Inverting the Hill curve recovers `Ce / Ce50` where `e0 − y` keeps its digits.
fn hill_round_trip(rng: &mut ChaCha8Rng, trials: usize) -> PropertyOutcome {
    let mut t = Tally::new("hill_round_trip");
    for _ in 0..trials {
        let hp = HillParams {
            ce50: rng.gen_range(1.0..8.0),
            gamma: rng.gen_range(1.0..8.0),
            e0: rng.gen_range(90.0..100.0),
            emax: rng.gen_range(60.0..160.0),
        };
        let ce = hp.ce50 * rng.gen_range(0.2..3.0);
        let y = hill(&hp, ce);
        let back = hill_inverse(&[hp.gamma, hp.emax], y, hp.e0);
        let want = ce / hp.ce50;
        t.check(matches!(back, Ok(v) if (v - want).abs() <= 1e-8 * (1.0 + want)), || {
            format!("{hp:?}, ce={ce}, got {back:?}, want {want}")
        });
    }
    t.outcome
}

fn random_point(rng: &mut ChaCha8Rng) -> (Vec<f64>, f64, f64) {
    let e0 = 98.0;
    let emax: f64 = rng.gen_range(60.0..160.0);
    let y = e0 - rng.gen_range(0.05..0.95) * emax.min(e0);
    (vec![rng.gen_range(1.0..8.0), emax], y, e0)
}

/// Five-point central difference of `g` at `x`.
pub fn five_point(g: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (g(x - 2.0 * h) - 8.0 * g(x - h) + 8.0 * g(x + h) - g(x + 2.0 * h)) / (12.0 * h)
}

/// Analytic partials of `f_p` agree with finite differences.
fn partials_match_differences(rng: &mut ChaCha8Rng, trials: usize) -> PropertyOutcome {
    let mut t = Tally::new("partials_match_differences");
    for _ in 0..trials {
        let (p, y, e0) = random_point(rng);
        let at = |i: usize, v: f64| {
            let mut q = p.clone();
            q[i] = v;
            q
        };
        let f = |i: usize| move |v: f64| hill_inverse(&at(i, v), y, e0).unwrap_or(f64::NAN);
        let df = |i: usize, j: usize| move |v: f64| {
            let (g, e) = first_partials(&at(i, v), y, e0).unwrap_or((f64::NAN, f64::NAN));
            if j == 0 { g } else { e }
        };
        let h = [1e-3 * p[0], 1e-3 * p[1]];
        let (g, e) = first_partials(&p, y, e0).unwrap_or((f64::NAN, f64::NAN));
        let fd_g = five_point(f(0), p[0], h[0]);
        let fd_e = five_point(f(1), p[1], h[1]);
        let (gg, ge, ee) = second_partials(&p, y, e0).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
        let fd_gg = five_point(df(0, 0), p[0], h[0]);
        let fd_ge = five_point(df(1, 0), p[1], h[1]);
        let fd_ee = five_point(df(1, 1), p[1], h[1]);
        let close = |a: f64, b: f64, tol: f64| (a - b).abs() <= tol * (a.abs().max(b.abs()) + 1e-12);
        let ok = close(g, fd_g, 1e-6)
            && close(e, fd_e, 1e-6)
            && close(gg, fd_gg, 1e-4)
            && close(ge, fd_ge, 1e-4)
            && close(ee, fd_ee, 1e-4);
        t.check(ok, || {
            format!("p={p:?}, y={y}: first ({g}, {e}) vs ({fd_g}, {fd_e}); second ({gg}, {ge}, {ee}) vs ({fd_gg}, {fd_ge}, {fd_ee})")
        });
    }
    t.outcome
}

/// Interval suprema dominate the sampled second partials over a small box.
fn hessian_enclosure(rng: &mut ChaCha8Rng, trials: usize) -> PropertyOutcome {
    let mut t = Tally::new("hessian_enclosure");
    for _ in 0..trials {
        let (p, y, e0) = random_point(rng);
        let b = ParamBox::gamma_emax((p[0], p[0] + rng.gen_range(0.01..1.0)), (p[1], p[1] + rng.gen_range(0.1..10.0))).expect("ordered box");
        let sups = hessian_sups(&b, y, e0);
        let q = b.lerp(&[rng.gen(), rng.gen()]);
        let vals = second_partials(&q, y, e0);
        let ok = match (sups, vals) {
            (Ok((sg, se, sx)), Ok((g, e, x))) => g.abs() <= sg && e.abs() <= se && x.abs() <= sx,
            _ => false,
        };
        t.check(ok, || format!("box {:?}..{:?}, q={q:?}: sups {sups:?}, values {vals:?}", b.lower(), b.upper()));
    }
    t.outcome
}

/// Patient 1, orders 2/2: `f(p) ≥ L(B) − 1e-9·(1 + |f(p)|)` on random sub-boxes.
fn bound_soundness(rng: &mut ChaCha8Rng, boxes: usize, samples: usize) -> Result<PropertyOutcome> {
    let patient = table1_patient(1).expect("bundled patient 1");
    let protocol = Protocol::default();
    let data = synthesize_dataset(&patient, &protocol.input, protocol.period, protocol.horizon)?;
    let problem = WienerProblem::new(&data, data.y[0], 2, 2)?;
    let (root, _) = problem.admissible_box_with_margin(&default_box(), DEFAULT_ADJUST_MARGIN)?;
    let mut t = Tally::new("bound_soundness");
    let search = ScalarSearch::default();
    for _ in 0..boxes {
        let b = random_sub_box(rng, &root);
        let bound = problem.bound_on(&b, &search)?.lower;
        for _ in 0..samples {
            let p = b.lerp(&[rng.gen(), rng.gen()]);
            let f = solve_fixed_p(&problem, &p)?.value;
            t.check(f >= bound - 1e-9 * (1.0 + f.abs()), || {
                format!("box {:?}..{:?}, p={p:?}: f={f:e} < L={bound:e}", b.lower(), b.upper())
            });
        }
    }
    Ok(t.outcome)
}

/// A random box inside `root` with edge fractions log-uniform in `[1e-3, 1]`.
pub fn random_sub_box(rng: &mut ChaCha8Rng, root: &ParamBox) -> ParamBox {
    let mut lo = Vec::with_capacity(root.dim());
    let mut hi = Vec::with_capacity(root.dim());
    for (l, u) in root.lower().iter().zip(root.upper()) {
        let w = (u - l) * 10f64.powf(rng.gen_range(-3.0..0.0));
        let start = l + rng.gen::<f64>() * (u - l - w);
        lo.push(start);
        hi.push(start + w);
    }
    ParamBox::new(lo, hi).expect("sub-box is ordered")
}

/// Exact branch and bound against a brute-force grid on a noisy planted problem.
fn grid_oracle(rng: &mut ChaCha8Rng, grid: usize) -> Result<PropertyOutcome> {
    let mut t = Tally::new("grid_oracle");
    let seed = rng.gen();
    let p_star = [rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8)];
    let model = SyntheticModel::planted(seed, 30, 3, &p_star, 0.5, 0.2).with_noise(seed ^ 1, 1e-3);
    let root = ParamBox::new(vec![-1.0, -1.0], vec![1.0, 1.0])?;
    let config = SolverConfig { epsilon: 0.0, epsilon_abs: 0.0, max_nodes: 20_000, ..SolverConfig::default() };
    let r = branch_and_bound(&model, &root, &config)?;
    let (best, best_p) = grid_argmin(&model, &root, grid)?;
    let cell = 2.0 * std::f64::consts::SQRT_2 / (grid - 1) as f64;
    let dist = ((r.p_star[0] - best_p[0]).powi(2) + (r.p_star[1] - best_p[1]).powi(2)).sqrt();
    let tol = r.open_diameter.max(cell);
    t.check(dist <= tol && r.lower <= best && r.ub <= best + 1e-12 * (1.0 + best), || {
        format!("seed {seed}: bnb {:?} (ub {:e}, lower {:e}) vs grid {best_p:?} ({best:e}), distance {dist} > {tol}", r.p_star, r.ub, r.lower)
    });
    Ok(t.outcome)
}

/// Smallest objective over a `grid × grid` lattice spanning `b`, with its point.
pub fn grid_argmin<P: Problem + ?Sized>(problem: &P, b: &ParamBox, grid: usize) -> Result<(f64, Vec<f64>)> {
    let mut best = (f64::INFINITY, b.center());
    let step = |k: usize| k as f64 / (grid - 1) as f64;
    for i in 0..grid {
        for j in 0..grid {
            let p = b.lerp(&[step(i), step(j)]);
            let v = problem.objective_at(&p)?.value;
            if v < best.0 {
                best = (v, p);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn props_suite_passes() {
        let report = run_suite(Suite::Props, 1, 50).unwrap();
        assert_eq!(report.len(), 5);
        for o in &report {
            assert!(o.passed(), "{o:?}");
            assert_eq!(o.trials, 50);
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in [Suite::Props, Suite::Bounds, Suite::Oracle] {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
        assert!(run_suite(Suite::Props, 0, 0).is_err());
    }

    #[test]
    fn sub_boxes_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let root = default_box();
        for _ in 0..100 {
            assert!(root.contains_box(&random_sub_box(&mut rng, &root)));
        }
    }
}
