//! Three-compartment PK model with an effect-site compartment and a Hill
//! output, simulated exactly under zero-order-hold inputs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{expm, least_squares_detailed, Matrix};

const TABLE1_JSON: &str = include_str!("../data/patients_table1.json");
const INDUCTION_JSON: &str = include_str!("../data/induction_input.json");

/// Rate constants in 1/s and the primary-compartment volume in litres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PkRates {
    pub k10: f64,
    pub k12: f64,
    pub k13: f64,
    pub k21: f64,
    pub k31: f64,
    pub ke0: f64,
    pub k1e: f64,
    #[serde(rename = "V1")]
    pub v1: f64,
}

impl PkRates {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("k10", self.k10),
            ("k12", self.k12),
            ("k13", self.k13),
            ("k21", self.k21),
            ("k31", self.k31),
            ("ke0", self.ke0),
            ("k1e", self.k1e),
            ("V1", self.v1),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("pk.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Hill (sigmoid Emax) parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillParams {
    pub ce50: f64,
    pub gamma: f64,
    pub e0: f64,
    pub emax: f64,
}

impl HillParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ce50 > 0.0) {
            return Err(Error::InvalidInput(format!("pd.ce50 must be positive, got {}", self.ce50)));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidInput(format!("pd.gamma must be positive, got {}", self.gamma)));
        }
        if !(self.emax > 0.0) || !self.e0.is_finite() {
            return Err(Error::InvalidInput(format!(
                "pd.emax must be positive and e0 finite, got emax={} e0={}",
                self.emax, self.e0
            )));
        }
        if self.gamma <= 1.0 || self.emax > self.e0 || self.e0 > 100.0 {
            log::warn!("clinically unusual Hill parameters: {self:?}");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    #[serde(rename = "f")]
    Female,
    #[serde(rename = "m")]
    Male,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: u32,
    pub age: u32,
    pub height_cm: f64,
    pub weight_kg: f64,
    pub sex: Sex,
    pub pk: PkRates,
    pub pd: HillParams,
}

impl PatientRecord {
    pub fn validate(&self) -> Result<()> {
        self.pk.validate()?;
        self.pd.validate()
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let rec: Self = serde_json::from_str(&text).map_err(|source| Error::Json { path: path.display().to_string(), source })?;
        rec.validate()?;
        Ok(rec)
    }
}

/// The bundled 13-patient table. PK rates are one shared sample set of
/// adult magnitudes; the demographic and Hill columns are the published ones.
pub fn table1_patients() -> Vec<PatientRecord> {
    serde_json::from_str(TABLE1_JSON).expect("bundled patient table is valid JSON")
}

pub fn table1_patient(id: u32) -> Option<PatientRecord> {
    table1_patients().into_iter().find(|p| p.id == id)
}

pub fn load_patient_table(path: &Path) -> Result<Vec<PatientRecord>> {
    let text = read_to_string(path)?;
    let recs: Vec<PatientRecord> =
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.display().to_string(), source })?;
    for r in &recs {
        r.validate()?;
    }
    Ok(recs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    /// Start time in seconds.
    pub t: f64,
    /// Infusion rate in mg/s held until the next breakpoint.
    pub v: f64,
}

/// Piecewise-constant infusion profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputProfile {
    pub breakpoints: Vec<Breakpoint>,
}

impl InputProfile {
    pub fn new(breakpoints: Vec<Breakpoint>) -> Self {
        Self { breakpoints }
    }

    pub fn zero() -> Self {
        Self::new(vec![Breakpoint { t: 0.0, v: 0.0 }])
    }

    /// Bolus of 10 mg/s over [0, 10) s, 3 mg/s over [10, 25) s, then nothing.
    pub fn induction() -> Self {
        serde_json::from_str(INDUCTION_JSON).expect("bundled input profile is valid JSON")
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.display().to_string(), source })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.breakpoints.iter().map(|b| Breakpoint { t: b.t, v: b.v * factor }).collect())
    }

    /// Checks ordering, sign and alignment of every breakpoint to the grid `k * period`.
    pub fn validate(&self, period: f64) -> Result<()> {
        let first = self
            .breakpoints
            .first()
            .ok_or_else(|| Error::InvalidInput("input profile has no breakpoints".into()))?;
        if first.t != 0.0 {
            return Err(Error::InvalidInput(format!("input profile must start at t=0, starts at t={}", first.t)));
        }
        for (i, b) in self.breakpoints.iter().enumerate() {
            if !(b.v >= 0.0) || !b.v.is_finite() {
                return Err(Error::InvalidInput(format!("breakpoint {i} (t={}): rate {} is not a nonnegative number", b.t, b.v)));
            }
            if i > 0 && !(b.t > self.breakpoints[i - 1].t) {
                return Err(Error::InvalidInput(format!("breakpoint {i} (t={}): times must be strictly increasing", b.t)));
            }
            if !is_aligned(b.t, period) {
                return Err(Error::InvalidInput(format!(
                    "breakpoint {i} (t={}) is not aligned to the sampling period {period}",
                    b.t
                )));
            }
        }
        Ok(())
    }

    /// Rate in effect at time `t`.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.breakpoints.iter().take_while(|b| b.t <= t).last().map_or(0.0, |b| b.v)
    }
}

fn is_aligned(t: f64, period: f64) -> bool {
    let k = t / period;
    (k - k.round()).abs() <= 1e-9 * k.abs().max(1.0)
}

/// Sampled input/output record. `y[0]` is the baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub period: f64,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub e0: f64,
}

impl Dataset {
    pub fn new(period: f64, u: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if u.len() != y.len() || u.is_empty() {
            return Err(Error::InvalidInput(format!(
                "dataset needs equal, nonzero u/y lengths (got {} and {})",
                u.len(),
                y.len()
            )));
        }
        if !(period > 0.0) {
            return Err(Error::InvalidInput(format!("sampling period must be positive, got {period}")));
        }
        if let Some(k) = u.iter().chain(&y).position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at flattened index {k}")));
        }
        let e0 = y[0];
        Ok(Self { period, u, y, e0 })
    }

    /// Last sample index.
    pub fn n(&self) -> usize {
        self.y.len() - 1
    }

    pub fn min_y(&self) -> (usize, f64) {
        self.y
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|source| Error::Csv { path: path.display().to_string(), source })?;
        let csv_err = |source| Error::Csv { path: path.display().to_string(), source };
        w.write_record(["t", "u", "y"]).map_err(csv_err)?;
        for (k, (u, y)) in self.u.iter().zip(&self.y).enumerate() {
            let t = k as f64 * self.period;
            w.write_record([format_full(t), format_full(*u), format_full(*y)]).map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let p = path.display().to_string();
        let mut r = csv::Reader::from_path(path).map_err(|source| Error::Csv { path: p.clone(), source })?;
        let headers = r.headers().map_err(|source| Error::Csv { path: p.clone(), source })?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::InvalidInput(format!("{p}: missing column `{name}`")))
        };
        let (ct, cu, cy) = (col("t")?, col("u")?, col("y")?);
        let (mut t, mut u, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|source| Error::Csv { path: p.clone(), source })?;
            let field = |c: usize, name: &str| -> Result<f64> {
                let raw = rec.get(c).unwrap_or("").trim();
                raw.parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("{p}: row {}: column `{name}` is not a number: {raw:?}", line + 2)))
            };
            t.push(field(ct, "t")?);
            u.push(field(cu, "u")?);
            y.push(field(cy, "y")?);
        }
        if t.len() < 2 {
            return Err(Error::InvalidInput(format!("{p}: need at least two samples")));
        }
        let period = t[1] - t[0];
        for (k, tk) in t.iter().enumerate() {
            let expected = t[0] + k as f64 * period;
            if (tk - expected).abs() > 1e-9 * expected.abs().max(1.0) {
                return Err(Error::InvalidInput(format!("{p}: non-uniform sampling at row {}", k + 2)));
            }
        }
        Dataset::new(period, u, y)
    }
}

/// 17 significant digits, enough for an exact round trip.
pub fn format_full(v: f64) -> String {
    format!("{v:.16e}")
}

/// Drug masses (mg) and effect-site concentration (mg/L).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimState {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub ce: f64,
}

impl SimState {
    fn from_slice(s: &[f64]) -> Self {
        Self { q1: s[0], q2: s[1], q3: s[2], ce: s[3] }
    }
}

/// Continuous-time `(Ac, Bc)` with state `(q1, q2, q3, Ce)`.
pub fn system_matrices(r: &PkRates) -> (Matrix, Vec<f64>) {
    let ac = Matrix::from_rows(&[
        &[-(r.k10 + r.k12 + r.k13), r.k21, r.k31, 0.0],
        &[r.k12, -r.k21, 0.0, 0.0],
        &[r.k13, 0.0, -r.k31, 0.0],
        &[r.k1e / r.v1, 0.0, 0.0, -r.ke0],
    ]);
    (ac, vec![1.0, 0.0, 0.0, 0.0])
}

/// Zero-order-hold discretization through the exponential of the augmented
/// matrix `[[Ac, Bc], [0, 0]] * T`.
pub fn zoh_step(ac: &Matrix, bc: &[f64], period: f64) -> (Matrix, Vec<f64>) {
    assert!(period > 0.0, "sampling period must be positive");
    let n = ac.rows();
    assert_eq!(bc.len(), n);
    let aug = Matrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => ac[(i, j)] * period,
        (true, false) => bc[i] * period,
        _ => 0.0,
    });
    let e = expm(&aug);
    (e.submatrix(0, 0, n, n), (0..n).map(|i| e[(i, n)]).collect())
}

/// States at `t = 0, T, ..., horizon` from a zero initial state.
pub fn simulate(rates: &PkRates, input: &InputProfile, period: f64, horizon: f64) -> Result<Vec<SimState>> {
    let steps = sample_count(period, horizon)?;
    input.validate(period)?;
    let (ac, bc) = system_matrices(rates);
    let (ad, bd) = zoh_step(&ac, &bc, period);
    let mut s = vec![0.0; 4];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(SimState::from_slice(&s));
    for k in 0..steps {
        let v = input.rate_at(k as f64 * period);
        let mut next = ad.matvec(&s);
        for (x, b) in next.iter_mut().zip(&bd) {
            *x += b * v;
        }
        s = next;
        out.push(SimState::from_slice(&s));
    }
    Ok(out)
}

fn sample_count(period: f64, horizon: f64) -> Result<usize> {
    if !(period > 0.0) || !(horizon >= 0.0) {
        return Err(Error::InvalidInput(format!("invalid period {period} / horizon {horizon}")));
    }
    if !is_aligned(horizon, period) {
        return Err(Error::InvalidInput(format!("horizon {horizon} is not a multiple of the period {period}")));
    }
    Ok((horizon / period).round() as usize)
}

/// `E0 − Emax · Ceᵞ / (Ceᵞ + Ce50ᵞ)`
pub fn hill(hp: &HillParams, ce: f64) -> f64 {
    let ce = ce.max(0.0);
    if ce == 0.0 {
        return hp.e0;
    }
    // Written in the normalized concentration to stay accurate when Ceᵞ is tiny.
    let r = (ce / hp.ce50).powf(hp.gamma);
    hp.e0 - hp.emax * (r / (1.0 + r))
}

/// Noiseless sampled record `u(k) = v(kT)`, `y(k) = hill(Ce(kT))`.
pub fn synthesize_dataset(patient: &PatientRecord, input: &InputProfile, period: f64, horizon: f64) -> Result<Dataset> {
    let states = simulate(&patient.pk, input, period, horizon)?;
    let u = (0..states.len()).map(|k| input.rate_at(k as f64 * period)).collect();
    let y = states.iter().map(|s| hill(&patient.pd, s.ce)).collect();
    Dataset::new(period, u, y)
}

/// Ordinary least-squares ARX fit `c(k) + Σ αᵢ c(k−i) = Σ βᵢ u(k−i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxFit {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Sum of squared one-step residuals.
    pub residual: f64,
    pub rank_deficient: bool,
}

pub fn fit_arx(c: &[f64], u: &[f64], n_ar: usize, n_in: usize) -> Result<ArxFit> {
    let ell = n_ar.max(n_in);
    if c.len() != u.len() {
        return Err(Error::Dimension(format!("fit_arx: c has {} samples, u has {}", c.len(), u.len())));
    }
    if c.len() < ell + n_ar + n_in + 1 {
        return Err(Error::InvalidInput(format!("fit_arx: {} samples are too few for orders ({n_ar}, {n_in})", c.len())));
    }
    let rows = c.len() - ell;
    let reg = Matrix::from_fn(rows, n_ar + n_in, |i, j| {
        let k = ell + i;
        if j < n_ar {
            -c[k - j - 1]
        } else {
            u[k - (j - n_ar) - 1]
        }
    });
    let target = &c[ell..];
    let sol = least_squares_detailed(&reg, target)?;
    let pred = reg.matvec(&sol.x);
    let residual = pred.iter().zip(target).map(|(p, t)| (t - p).powi(2)).sum();
    let (alpha, beta) = sol.x.split_at(n_ar);
    Ok(ArxFit { alpha: alpha.to_vec(), beta: beta.to_vec(), residual, rank_deficient: sol.is_rank_deficient() })
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}
