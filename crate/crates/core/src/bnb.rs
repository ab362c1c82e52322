//! Best-first branch-and-bound over parameter boxes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bound::{lower_bound, BoundReport, RegressionModel};
use crate::error::{Error, Result};
use crate::numerics::{least_squares, ScalarSearch};
use crate::region::ParamBox;

/// What the solver needs from a problem.
pub trait Problem: Sync {
    fn dim(&self) -> usize;
    fn objective_at(&self, p: &[f64]) -> Result<FixedFit>;
    fn bound_on(&self, b: &ParamBox, search: &ScalarSearch) -> Result<BoundReport>;
    fn validate(&self, b: &ParamBox) -> Result<()>;

    /// A value the objective never goes below.
    fn objective_floor(&self) -> f64 {
        f64::NEG_INFINITY
    }
}

impl<M: RegressionModel> Problem for M {
    fn dim(&self) -> usize {
        RegressionModel::dim(self)
    }

    fn objective_at(&self, p: &[f64]) -> Result<FixedFit> {
        solve_fixed_p(self, p)
    }

    fn bound_on(&self, b: &ParamBox, search: &ScalarSearch) -> Result<BoundReport> {
        lower_bound(self, b, search)
    }

    fn validate(&self, b: &ParamBox) -> Result<()> {
        RegressionModel::validate(self, b)
    }

    fn objective_floor(&self) -> f64 {
        0.0
    }
}

/// `f(p) = min_x ‖A(p)[1;x]‖²` and its minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedFit {
    pub x: Vec<f64>,
    pub value: f64,
}

pub fn solve_fixed_p<M: RegressionModel + ?Sized>(model: &M, p: &[f64]) -> Result<FixedFit> {
    let a = model.design(p)?;
    let n = a.cols() - 1;
    let regressors = a.submatrix(0, 1, a.rows(), n);
    let rhs: Vec<f64> = a.column(0).iter().map(|v| -v).collect();
    let x = least_squares(&regressors, &rhs)?;
    let z: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
    let value = a.matvec(&z).iter().map(|r| r * r).sum();
    Ok(FixedFit { x, value })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Widths are compared after dividing by the root box widths.
    #[default]
    Relative,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub epsilon_abs: f64,
    pub max_nodes: usize,
    pub split_mode: SplitMode,
    pub k_search: ScalarSearch,
    /// Sibling boxes are bounded concurrently when greater than 1.
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            epsilon_abs: 1e-12,
            max_nodes: 500_000,
            split_mode: SplitMode::Relative,
            k_search: ScalarSearch::default(),
            threads: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !(self.epsilon_abs >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerances must be non-negative (epsilon={}, epsilon_abs={})",
                self.epsilon, self.epsilon_abs
            )));
        }
        if self.max_nodes == 0 {
            return Err(Error::InvalidInput("max_nodes must be at least 1".into()));
        }
        Ok(())
    }

    fn prunes(&self, ub: f64, lower: f64) -> bool {
        ub <= (1.0 + self.epsilon) * lower + self.epsilon_abs
    }
}

/// Bisects `b` along its longest edge; ties go to the lowest index.
pub fn split(b: &ParamBox, mode: SplitMode, root: &ParamBox) -> (ParamBox, ParamBox) {
    b.bisect(split_dimension(b, mode, root))
}

pub fn split_dimension(b: &ParamBox, mode: SplitMode, root: &ParamBox) -> usize {
    let widths = b.widths();
    let reference = root.widths();
    let mut best = (0, f64::NEG_INFINITY);
    for (d, w) in widths.iter().enumerate() {
        let len = match mode {
            SplitMode::Absolute => *w,
            SplitMode::Relative if reference[d] > 0.0 => w / reference[d],
            SplitMode::Relative => 0.0,
        };
        if len > best.1 {
            best = (d, len);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Every box was pruned.
    Exhausted,
    NodeLimit,
    /// Remaining boxes are too small to bisect in floating point.
    Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub p_star: Vec<f64>,
    pub x_star: Vec<f64>,
    pub ub: f64,
    /// Smallest lower bound among boxes still open at termination, or `ub`
    /// when none are.
    pub lower: f64,
    pub lb_count: usize,
    pub nodes_split: usize,
    pub wall_time_s: f64,
    pub certified: bool,
    pub termination: Termination,
    /// `(nodes_split, ub)` after every incumbent improvement.
    pub incumbent_trace: Vec<(usize, f64)>,
    /// Largest diameter of an open box at termination (0 when certified empty).
    pub open_diameter: f64,
}

impl SolveResult {
    /// `ub − lower`, the distance to the certified floor.
    pub fn gap(&self) -> f64 {
        self.ub - self.lower
    }
}

#[derive(Debug)]
struct Node {
    b: ParamBox,
    lower: f64,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Reversed so that the max-heap pops the lowest bound, then the oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.lower.total_cmp(&self.lower).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Child {
    b: ParamBox,
    bound: Option<BoundReport>,
}

fn evaluate_child<P: Problem + ?Sized>(problem: &P, b: ParamBox, search: &ScalarSearch) -> Child {
    let bound = problem.validate(&b).and_then(|_| problem.bound_on(&b, search));
    let bound = match bound {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("pruning box {:?}..{:?}: {e}", b.lower(), b.upper());
            None
        }
    };
    Child { b, bound }
}

pub fn branch_and_bound<P: Problem + ?Sized>(problem: &P, root: &ParamBox, config: &SolverConfig) -> Result<SolveResult> {
    let start = Instant::now();
    config.validate()?;
    if root.dim() != problem.dim() {
        return Err(Error::Dimension(format!("box of dimension {} for a {}-parameter problem", root.dim(), problem.dim())));
    }
    problem.validate(root)?;

    let mut p_star = root.center();
    let root_fit = problem.objective_at(&p_star)?;
    let mut ub = root_fit.value;
    let mut x_star = root_fit.x;
    let mut trace = vec![(0, ub)];

    let mut seq = 0u64;
    let mut heap = BinaryHeap::new();
    heap.push(Node { b: root.clone(), lower: problem.objective_floor(), seq });
    let mut stalled: Vec<Node> = Vec::new();
    let mut lb_count = 0;
    let mut nodes_split = 0;
    let mut termination = Termination::Exhausted;

    while let Some(node) = heap.pop() {
        if config.prunes(ub, node.lower) {
            continue;
        }
        if nodes_split >= config.max_nodes {
            heap.push(node);
            termination = Termination::NodeLimit;
            break;
        }
        let (left, right) = split(&node.b, config.split_mode, root);
        if left == node.b || right == node.b {
            stalled.push(node);
            continue;
        }
        nodes_split += 1;
        let children = if config.threads > 1 {
            std::thread::scope(|s| {
                let handle = s.spawn(|| evaluate_child(problem, right, &config.k_search));
                let first = evaluate_child(problem, left, &config.k_search);
                [first, handle.join().expect("bound worker panicked")]
            })
        } else {
            [evaluate_child(problem, left, &config.k_search), evaluate_child(problem, right, &config.k_search)]
        };
        for child in children {
            let Some(bound) = child.bound else { continue };
            lb_count += 1;
            let candidate = if bound.center_value.is_nan() || bound.center_value < ub * (1.0 + 1e-9) + 1e-300 {
                problem.objective_at(&child.b.center()).ok()
            } else {
                None
            };
            if let Some(fit) = candidate {
                if fit.value < ub {
                    ub = fit.value;
                    x_star = fit.x;
                    p_star = child.b.center();
                    trace.push((nodes_split, ub));
                }
            }
            let floor = problem.objective_floor();
            let lower = if bound.lower.is_nan() { floor } else { bound.lower.max(floor) };
            if !config.prunes(ub, lower) {
                seq += 1;
                heap.push(Node { b: child.b, lower, seq });
            }
        }
        if nodes_split % 10_000 == 0 {
            log::debug!("{nodes_split} splits, {} open, ub={ub:e}", heap.len());
        }
    }

    let open: Vec<&Node> = heap.iter().chain(&stalled).filter(|n| !config.prunes(ub, n.lower)).collect();
    if termination == Termination::Exhausted && !open.is_empty() {
        termination = Termination::Resolution;
    }
    let lower = open.iter().map(|n| n.lower).fold(ub, f64::min);
    let open_diameter = open.iter().map(|n| n.b.diameter()).fold(0.0, f64::max);
    Ok(SolveResult {
        p_star,
        x_star,
        ub,
        lower,
        lb_count,
        nodes_split,
        wall_time_s: start.elapsed().as_secs_f64(),
        certified: open.is_empty(),
        termination,
        incumbent_trace: trace,
        open_diameter,
    })
}

/// `h(p) = ln max(f(p), floor)` on a grid over a two-parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub gammas: Vec<f64>,
    pub emaxes: Vec<f64>,
    /// `h[i][j]` at `(gammas[i], emaxes[j])`; `None` where `f` is undefined.
    pub h: Vec<Vec<Option<f64>>>,
}

pub const LANDSCAPE_FLOOR: f64 = 1e-300;

impl Landscape {
    /// Grid point with the smallest `h`.
    pub fn argmin(&self) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in self.h.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    if best.is_none_or(|b| *v < b.2) {
                        best = Some((i, j, *v));
                    }
                }
            }
        }
        best
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
}

pub fn landscape<P: Problem + ?Sized>(problem: &P, b: &ParamBox, grid_g: usize, grid_e: usize) -> Result<Landscape> {
    if b.dim() != 2 {
        return Err(Error::Dimension(format!("landscape needs a 2-parameter box, got {}", b.dim())));
    }
    if grid_g < 2 || grid_e < 2 {
        return Err(Error::InvalidInput(format!("grid {grid_g}x{grid_e} needs at least 2 points per axis")));
    }
    let gammas = linspace(b.lower()[0], b.upper()[0], grid_g);
    let emaxes = linspace(b.lower()[1], b.upper()[1], grid_e);
    let h = gammas
        .iter()
        .map(|&g| {
            emaxes
                .iter()
                .map(|&e| problem.objective_at(&[g, e]).ok().map(|fit| fit.value.max(LANDSCAPE_FLOOR).ln()))
                .collect()
        })
        .collect();
    Ok(Landscape { gammas, emaxes, h })
}
