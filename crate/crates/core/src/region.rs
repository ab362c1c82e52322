use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower, upper]` in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Dimension(format!("box bounds of length {} and {}", lower.len(), upper.len())));
        }
        for (d, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l <= u) || !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidInput(format!("box dimension {d}: [{l}, {u}] is empty or not finite")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Convenience constructor for the `(gamma, emax)` plane.
    pub fn gamma_emax(gamma: (f64, f64), emax: (f64, f64)) -> Result<Self> {
        Self::new(vec![gamma.0, emax.0], vec![gamma.1, emax.1])
    }

    pub fn point(p: &[f64]) -> Self {
        Self { lower: p.to_vec(), upper: p.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn set_lower(&mut self, d: usize, v: f64) {
        self.lower[d] = v;
        if self.upper[d] < v {
            self.upper[d] = v;
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (l, u))| l <= x && x <= u)
    }

    pub fn contains_box(&self, other: &ParamBox) -> bool {
        self.contains(&other.lower) && self.contains(&other.upper)
    }

    /// The `2^q` vertices in binary-counter order: bit `d` of the index
    /// selects the upper end of dimension `d`.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let q = self.dim();
        (0..1usize << q)
            .map(|idx| (0..q).map(|d| if idx >> d & 1 == 1 { self.upper[d] } else { self.lower[d] }).collect())
            .collect()
    }

    /// `max_{p in box} ‖p − from‖`, attained at a vertex.
    pub fn max_distance(&self, from: &[f64]) -> f64 {
        from.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(c, (l, u))| {
                let d = (c - l).abs().max((u - c).abs());
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Point at fractional coordinates `t ∈ [0,1]^q`.
    pub fn lerp(&self, t: &[f64]) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).zip(t).map(|((l, u), s)| l + s * (u - l)).collect()
    }

    /// Bisects at the midpoint of dimension `d`.
    pub fn bisect(&self, d: usize) -> (ParamBox, ParamBox) {
        let mid = 0.5 * (self.lower[d] + self.upper[d]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[d] = mid;
        right.lower[d] = mid;
        (left, right)
    }

    /// Box with the same center and every half-width multiplied by `factor`.
    pub fn scaled_about_center(&self, factor: f64) -> ParamBox {
        let c = self.center();
        let w = self.widths();
        ParamBox {
            lower: c.iter().zip(&w).map(|(c, w)| c - 0.5 * w * factor).collect(),
            upper: c.iter().zip(&w).map(|(c, w)| c + 0.5 * w * factor).collect(),
        }
    }
}
