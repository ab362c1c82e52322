//! End-to-end identification of one dataset, and the per-patient protocol.

use serde::{Deserialize, Serialize};

use crate::bnb::{branch_and_bound, SolveResult, SolverConfig};
use crate::error::{Error, Result};
use crate::pkpd::{synthesize_dataset, Dataset, InputProfile, PatientRecord};
use crate::region::ParamBox;
use crate::wiener::{RemainderBound, WienerProblem, DEFAULT_ADJUST_MARGIN};

/// Largest tolerated gap between a supplied baseline and `y(0)` before warning.
pub const E0_MISMATCH_WARN: f64 = 0.5;

/// The `[1, 8] × [40, 160]` search box for `(gamma, emax)`.
pub fn default_box() -> ParamBox {
    ParamBox::gamma_emax((1.0, 8.0), (40.0, 160.0)).expect("static box is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    pub n_ar: usize,
    pub n_in: usize,
    pub root: ParamBox,
    /// Baseline; `y(0)` when absent.
    pub e0: Option<f64>,
    pub adjust_margin: f64,
    pub remainder: RemainderBound,
    pub solver: SolverConfig,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            n_ar: 2,
            n_in: 2,
            root: default_box(),
            e0: None,
            adjust_margin: DEFAULT_ADJUST_MARGIN,
            remainder: RemainderBound::default(),
            solver: SolverConfig::default(),
        }
    }
}

impl IdentifyConfig {
    pub fn with_orders(n_ar: usize, n_in: usize) -> Self {
        Self { n_ar, n_in, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub e0: f64,
    pub adjusted_box: ParamBox,
    pub box_adjusted: bool,
    /// Every sample sits at the baseline, so any parameter fits exactly.
    pub degenerate: bool,
    pub result: SolveResult,
}

impl Identification {
    pub fn gamma_hat(&self) -> f64 {
        self.result.p_star[0]
    }

    pub fn emax_hat(&self) -> f64 {
        self.result.p_star[1]
    }

    /// `(alpha, beta)` split of the ARX coefficients.
    pub fn arx(&self, n_ar: usize) -> (&[f64], &[f64]) {
        self.result.x_star.split_at(n_ar)
    }
}

/// `e0` if given, else `y(0)`; logs a warning when both exist and disagree.
pub fn resolve_e0(data: &Dataset, e0: Option<f64>) -> f64 {
    let y0 = data.y[0];
    match e0 {
        Some(v) => {
            if (v - y0).abs() > E0_MISMATCH_WARN {
                log::warn!("baseline e0={v} differs from y(0)={y0} by more than {E0_MISMATCH_WARN}");
            }
            v
        }
        None => y0,
    }
}

pub fn identify(data: &Dataset, config: &IdentifyConfig) -> Result<Identification> {
    let e0 = resolve_e0(data, config.e0);
    let problem = WienerProblem::new(data, e0, config.n_ar, config.n_in)?.with_remainder(config.remainder);
    let (adjusted_box, box_adjusted) = problem.admissible_box_with_margin(&config.root, config.adjust_margin)?;
    if box_adjusted {
        log::info!(
            "search box adjusted to gamma [{}, {}], emax [{}, {}]",
            adjusted_box.lower()[0],
            adjusted_box.upper()[0],
            adjusted_box.lower()[1],
            adjusted_box.upper()[1]
        );
    }
    let degenerate = data.y.iter().all(|&y| y == e0);
    if degenerate {
        log::warn!("every output equals the baseline; the fit is degenerate");
    }
    let result = branch_and_bound(&problem, &adjusted_box, &config.solver)?;
    Ok(Identification { e0, adjusted_box, box_adjusted, degenerate, result })
}

/// Dataset protocol shared by the batch runs: period 1 s over 300 s with the
/// induction input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub period: f64,
    pub horizon: f64,
    pub input: InputProfile,
}

impl Default for Protocol {
    fn default() -> Self {
        Self { period: 1.0, horizon: 300.0, input: InputProfile::induction() }
    }
}

/// One row of the per-patient results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRun {
    pub id: u32,
    pub n_ar: usize,
    pub n_in: usize,
    pub objective: f64,
    pub lb_count: usize,
    pub gamma_hat: f64,
    pub emax_hat: f64,
    /// `‖(gamma_hat, emax_hat) − (gamma, emax)‖` against the generating parameters.
    pub error: f64,
    pub certified: bool,
    pub runtime_s: f64,
}

pub fn run_patient(patient: &PatientRecord, protocol: &Protocol, config: &IdentifyConfig) -> Result<PatientRun> {
    let data = synthesize_dataset(patient, &protocol.input, protocol.period, protocol.horizon)?;
    let id = identify(&data, config).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::InvalidInput(format!("patient {}: {msg}", patient.id)),
        other => other,
    })?;
    let (g, e) = (id.gamma_hat(), id.emax_hat());
    Ok(PatientRun {
        id: patient.id,
        n_ar: config.n_ar,
        n_in: config.n_in,
        objective: id.result.ub,
        lb_count: id.result.lb_count,
        gamma_hat: g,
        emax_hat: e,
        error: ((g - patient.pd.gamma).powi(2) + (e - patient.pd.emax).powi(2)).sqrt(),
        certified: id.result.certified,
        runtime_s: id.result.wall_time_s,
    })
}
