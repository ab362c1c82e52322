/// Settings for [`maximize_scalar`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScalarSearch {
    pub lo: f64,
    pub hi: f64,
    pub coarse_points: usize,
    pub refine_iters: usize,
}

impl Default for ScalarSearch {
    fn default() -> Self {
        Self { lo: 1e-6, hi: 1e6, coarse_points: 33, refine_iters: 30 }
    }
}

/// Heuristic maximizer of `f` over `[lo, hi]` (both positive): a log-spaced
/// coarse scan followed by golden-section refinement, in log coordinates, on
/// the bracket around the best grid point. Returns `(argmax, max)`; `(lo, -inf)`
/// when every evaluation is `-inf`.
pub fn maximize_scalar(mut f: impl FnMut(f64) -> f64, search: &ScalarSearch) -> (f64, f64) {
    let ScalarSearch { lo, hi, coarse_points, refine_iters } = *search;
    assert!(lo > 0.0 && hi > lo, "maximize_scalar needs 0 < lo < hi");
    let points = coarse_points.max(2);
    let (log_lo, log_hi) = (lo.ln(), hi.ln());
    let step = (log_hi - log_lo) / (points - 1) as f64;
    let grid_point = |i: usize| if i + 1 == points { hi } else { (log_lo + step * i as f64).exp() };

    let mut best = (lo, f64::NEG_INFINITY);
    let mut best_idx = None;
    for i in 0..points {
        let k = grid_point(i);
        let v = f(k);
        if v > best.1 {
            best = (k, v);
            best_idx = Some(i);
        }
    }
    let Some(idx) = best_idx else {
        return (lo, f64::NEG_INFINITY);
    };

    let mut a = log_lo + step * idx.saturating_sub(1) as f64;
    let mut b = (log_lo + step * (idx + 1) as f64).min(log_hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c.exp());
    let mut fd = f(d.exp());
    for _ in 0..refine_iters {
        for (x, fx) in [(c, fc), (d, fd)] {
            if fx > best.1 {
                best = (x.exp(), fx);
            }
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d.exp());
        }
    }
    for (x, fx) in [(c, fc), (d, fd)] {
        if fx > best.1 {
            best = (x.exp(), fx);
        }
    }
    best
}
