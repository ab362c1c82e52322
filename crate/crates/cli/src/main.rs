//! `globid`: synthesis, certified identification and diagnostics for Hill/ARX Wiener models.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use globid::bnb::{landscape, SolverConfig, SplitMode, Termination};
use globid::identify::{default_box, identify, run_patient, IdentifyConfig, PatientRun, Protocol};
use globid::pkpd::{load_patient_table, synthesize_dataset, table1_patient, table1_patients, Dataset, InputProfile, PatientRecord};
use globid::verify::{run_suite, Suite};
use globid::wiener::{RemainderBound, WienerProblem, DEFAULT_ADJUST_MARGIN};
use globid::ParamBox;

use manifest::{display, sidecar_path, RunManifest};

#[derive(Parser)]
#[command(name = "globid", version, about = "Certified global identification of PK/PD Wiener models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a noiseless dataset from patient parameters.
    Simulate(SimulateArgs),
    /// Run branch and bound on a dataset, or on every bundled patient.
    Identify(IdentifyArgs),
    /// Export the log-objective over a parameter grid.
    Landscape(LandscapeArgs),
    /// Run a seeded randomized self-check suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Patient record JSON.
    #[arg(long, conflicts_with = "patient_id")]
    patient: Option<PathBuf>,
    /// Bundled patient id (default 1).
    #[arg(long)]
    patient_id: Option<u32>,
    /// Input profile JSON; the bundled induction profile when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    period: f64,
    #[arg(long, default_value_t = 300.0)]
    horizon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Baseline E0; `y(0)` when absent.
    #[arg(long)]
    e0: Option<f64>,
    /// ARX orders `N` or `N,M`.
    #[arg(long, default_value = "2", value_parser = parse_order)]
    order: (usize, usize),
    /// Search box `gamma-,gamma+,emax-,emax+`.
    #[arg(long = "box", value_parser = parse_box)]
    search_box: Option<ParamBox>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Relative,
    Absolute,
}

#[derive(Clone, Copy, ValueEnum)]
enum RemainderArg {
    Axis,
    Isotropic,
}

#[derive(Args)]
struct IdentifyArgs {
    #[arg(long, required_unless_present = "all", conflicts_with = "all")]
    data: Option<PathBuf>,
    /// Identify every patient of the bundled table (or of `--patients`).
    #[arg(long)]
    all: bool,
    #[arg(long, requires = "all")]
    patients: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Relative pruning tolerance.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Absolute pruning tolerance.
    #[arg(long, default_value_t = 1e-12)]
    eps_abs: f64,
    #[arg(long, default_value_t = 500_000)]
    max_nodes: usize,
    #[arg(long, value_enum, default_value = "relative")]
    split: SplitArg,
    #[arg(long, value_enum, default_value = "axis")]
    remainder: RemainderArg,
    /// Gap kept between emax⁻ and the invertibility limit when the box is raised.
    #[arg(long, default_value_t = DEFAULT_ADJUST_MARGIN)]
    adjust_margin: f64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Result JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LandscapeArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Grid size `GxH` (gamma points × emax points).
    #[arg(long, default_value = "50x50", value_parser = parse_grid)]
    grid: (usize, usize),
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_parser = parse_suite)]
    suite: Suite,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Trials per property; a suite-specific default when absent.
    #[arg(long)]
    trials: Option<usize>,
    /// Report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_order(s: &str) -> std::result::Result<(usize, usize), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |p: &str| p.parse::<usize>().map_err(|_| format!("order {p:?} is not a nonnegative integer"));
    match parts.as_slice() {
        [n] => Ok((num(n)?, num(n)?)),
        [n, m] => Ok((num(n)?, num(m)?)),
        _ => Err(format!("order must be N or N,M, got {s:?}")),
    }
}

fn parse_box(s: &str) -> std::result::Result<ParamBox, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("box entry {p:?} is not a number")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != 4 {
        return Err(format!("box needs 4 numbers gamma-,gamma+,emax-,emax+, got {}", v.len()));
    }
    ParamBox::gamma_emax((v[0], v[1]), (v[2], v[3])).map_err(|e| e.to_string())
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (g, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("grid must look like GxH, got {s:?}"))?;
    let num = |p: &str| p.trim().parse::<usize>().map_err(|_| format!("grid size {p:?} is not an integer"));
    Ok((num(g)?, num(h)?))
}

fn parse_suite(s: &str) -> std::result::Result<Suite, String> {
    s.parse().map_err(|e: globid::Error| e.to_string())
}

fn write_json(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GLOBID_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Identify(a) => cmd_identify(a),
        Command::Landscape(a) => cmd_landscape(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[derive(Serialize)]
struct SimulateManifest {
    patient: PatientRecord,
    input: InputProfile,
    period: f64,
    horizon: f64,
    rows: usize,
    manifest: RunManifest,
}

fn cmd_simulate(a: SimulateArgs) -> Result<bool> {
    let patient = match (&a.patient, a.patient_id) {
        (Some(p), _) => PatientRecord::from_json_file(p)?,
        (None, id) => {
            let id = id.unwrap_or(1);
            table1_patient(id).with_context(|| format!("no bundled patient with id {id}"))?
        }
    };
    let input = match &a.input {
        Some(p) => InputProfile::from_json_file(p)?,
        None => InputProfile::induction(),
    };
    let data = synthesize_dataset(&patient, &input, a.period, a.horizon)
        .with_context(|| a.input.as_ref().map_or("bundled input".to_string(), |p| p.display().to_string()))?;
    data.write_csv(&a.out)?;
    let inputs = [&a.patient, &a.input].into_iter().flatten().map(|p| display(p)).collect();
    let config = serde_json::json!({ "patient_id": patient.id, "period": a.period, "horizon": a.horizon });
    let side = SimulateManifest {
        patient,
        input,
        period: a.period,
        horizon: a.horizon,
        rows: data.y.len(),
        manifest: RunManifest::new("simulate", inputs, config),
    };
    write_json(&side, Some(&sidecar_path(&a.out)))?;
    Ok(true)
}

fn identify_config(a: &IdentifyArgs) -> IdentifyConfig {
    let (n_ar, n_in) = a.model.order;
    IdentifyConfig {
        n_ar,
        n_in,
        root: a.model.search_box.clone().unwrap_or_else(default_box),
        e0: a.model.e0,
        adjust_margin: a.adjust_margin,
        remainder: match a.remainder {
            RemainderArg::Axis => RemainderBound::Axis,
            RemainderArg::Isotropic => RemainderBound::Isotropic,
        },
        solver: SolverConfig {
            epsilon: a.eps,
            epsilon_abs: a.eps_abs,
            max_nodes: a.max_nodes,
            split_mode: match a.split {
                SplitArg::Relative => SplitMode::Relative,
                SplitArg::Absolute => SplitMode::Absolute,
            },
            threads: a.threads,
            ..SolverConfig::default()
        },
    }
}

#[derive(Serialize)]
struct IdentifyOutput {
    gamma_hat: f64,
    emax_hat: f64,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    objective: f64,
    lower: f64,
    lb_count: usize,
    nodes_split: usize,
    runtime_s: f64,
    certificate: bool,
    termination: Termination,
    e0: f64,
    degenerate: bool,
    /// `[gamma-, gamma+, emax-, emax+]` actually searched.
    adjusted_box: [f64; 4],
    box_adjusted: bool,
    manifest: RunManifest,
}

#[derive(Serialize)]
struct BatchOutput {
    rows: Vec<PatientRun>,
    manifest: RunManifest,
}

fn cmd_identify(a: IdentifyArgs) -> Result<bool> {
    let config = identify_config(&a);
    let manifest_config = serde_json::to_value(&config)?;
    if a.all {
        let patients = match &a.patients {
            Some(p) => load_patient_table(p)?,
            None => table1_patients(),
        };
        let protocol = Protocol::default();
        println!("{:>3} {:>2} {:>2} {:>12} {:>8} {:>10} {:>9} {:>8}", "Id", "N", "M", "min|e|^2", "#LBs", "|p-p*|", "certified", "time_s");
        let mut rows = Vec::new();
        for patient in &patients {
            let row = run_patient(patient, &protocol, &config)?;
            println!(
                "{:>3} {:>2} {:>2} {:>12.4e} {:>8} {:>10.4e} {:>9} {:>8.1}",
                row.id, row.n_ar, row.n_in, row.objective, row.lb_count, row.error, row.certified, row.runtime_s
            );
            rows.push(row);
        }
        let all_certified = rows.iter().all(|r| r.certified);
        let inputs = a.patients.iter().map(|p| display(p)).collect();
        let out = BatchOutput { rows, manifest: RunManifest::new("identify --all", inputs, manifest_config) };
        if let Some(p) = &a.out {
            write_json(&out, Some(p))?;
        }
        return Ok(all_certified);
    }

    let path = a.data.as_ref().expect("clap enforces --data without --all");
    let data = Dataset::read_csv(path)?;
    let id = identify(&data, &config)?;
    let (alpha, beta) = id.arx(config.n_ar);
    let b = &id.adjusted_box;
    let out = IdentifyOutput {
        gamma_hat: id.gamma_hat(),
        emax_hat: id.emax_hat(),
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
        objective: id.result.ub,
        lower: id.result.lower,
        lb_count: id.result.lb_count,
        nodes_split: id.result.nodes_split,
        runtime_s: id.result.wall_time_s,
        certificate: id.result.certified,
        termination: id.result.termination,
        e0: id.e0,
        degenerate: id.degenerate,
        adjusted_box: [b.lower()[0], b.upper()[0], b.lower()[1], b.upper()[1]],
        box_adjusted: id.box_adjusted,
        manifest: RunManifest::new("identify", vec![display(path)], manifest_config),
    };
    write_json(&out, a.out.as_deref())?;
    Ok(out.certificate)
}

fn cmd_landscape(a: LandscapeArgs) -> Result<bool> {
    let data = Dataset::read_csv(&a.data)?;
    let (n_ar, n_in) = a.model.order;
    let e0 = globid::identify::resolve_e0(&data, a.model.e0);
    let problem = WienerProblem::new(&data, e0, n_ar, n_in)?;
    let b = a.model.search_box.clone().unwrap_or_else(default_box);
    let (g, h) = a.grid;
    let land = landscape(&problem, &b, g, h)?;
    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    w.write_record(["gamma", "emax", "h"])?;
    for (i, gamma) in land.gammas.iter().enumerate() {
        for (j, emax) in land.emaxes.iter().enumerate() {
            let v = land.h[i][j].map_or("nan".to_string(), |v| format!("{v:.16e}"));
            w.write_record([format!("{gamma:.16e}"), format!("{emax:.16e}"), v])?;
        }
    }
    w.flush()?;
    if let Some((i, j, v)) = land.argmin() {
        log::info!("landscape argmin at gamma={}, emax={} (h={v})", land.gammas[i], land.emaxes[j]);
    }
    let config = serde_json::json!({
        "n_ar": n_ar,
        "n_in": n_in,
        "e0": e0,
        "box": [b.lower()[0], b.upper()[0], b.lower()[1], b.upper()[1]],
        "grid": [g, h],
    });
    write_json(&RunManifest::new("landscape", vec![display(&a.data)], config), Some(&sidecar_path(&a.out)))?;
    Ok(true)
}

#[derive(Serialize)]
struct VerifyOutput {
    suite: Suite,
    passed: bool,
    properties: Vec<globid::verify::PropertyOutcome>,
    manifest: RunManifest,
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let trials = a.trials.unwrap_or_else(|| a.suite.default_trials());
    if trials == 0 {
        bail!("--trials must be positive");
    }
    let properties = run_suite(a.suite, a.seed, trials)?;
    for p in &properties {
        let status = if p.passed() { "PASS" } else { "FAIL" };
        println!("{status} {} ({} trials, {} failures)", p.name, p.trials, p.failures);
        if let Some(c) = &p.counterexample {
            println!("  counterexample: {c}");
        }
    }
    let passed = properties.iter().all(|p| p.passed());
    if let Some(out) = &a.out {
        let config = serde_json::json!({ "suite": a.suite, "trials": trials });
        let report = VerifyOutput {
            suite: a.suite,
            passed,
            properties,
            manifest: RunManifest::new("verify", Vec::new(), config).with_seed(a.seed),
        };
        write_json(&report, Some(out))?;
    }
    Ok(passed)
}
