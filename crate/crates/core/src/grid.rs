use crate::error::{Error, Result};

/// Truncation radius used by the fitting experiments.
pub const DEFAULT_RADIUS: f64 = 15.0;
/// Default node count; trapezoid error stays far below optimizer tolerances at r = 15.
pub const DEFAULT_POINTS: usize = 4000;
/// Left end of grids for families supported on the positive half-line.
pub const POSITIVE_LEFT: f64 = 1e-6;

/// Uniform discretization of a truncated sample space.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    left: f64,
    right: f64,
    nodes: Vec<f64>,
    spacing: f64,
}

impl Grid {
    pub fn new(left: f64, right: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Grid(format!("need at least 2 points, got {points}")));
        }
        if !(left.is_finite() && right.is_finite()) || right <= left {
            return Err(Error::Grid(format!("bad interval [{left}, {right}]")));
        }
        let spacing = (right - left) / (points - 1) as f64;
        let mut nodes: Vec<f64> = (0..points).map(|i| left + spacing * i as f64).collect();
        nodes[points - 1] = right;
        Ok(Self { left, right, nodes, spacing })
    }

    /// Grid on `[-r, r]`.
    pub fn symmetric(radius: f64, points: usize) -> Result<Self> {
        Self::new(-radius, radius, points)
    }

    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trapezoid weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.nodes.len() {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }

    /// Trapezoid rule over the whole grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().enumerate().map(|(i, v)| self.weight(i) * v).sum()
    }

    /// Running trapezoid integral, zero at the left endpoint.
    pub fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.len());
        let mut out = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * self.spacing * (w[0] + w[1]);
            out.push(acc);
        }
        out
    }

    /// Central differences in the interior, one-sided at the ends.
    pub fn derivative(&self, values: &[f64]) -> Vec<f64> {
        let m = values.len();
        let h = self.spacing;
        (0..m)
            .map(|i| match i {
                0 => (values[1] - values[0]) / h,
                i if i + 1 == m => (values[m - 1] - values[m - 2]) / h,
                i => (values[i + 1] - values[i - 1]) / (2.0 * h),
            })
            .collect()
    }

    /// A grid with the same interval and twice the resolution.
    pub fn refined(&self) -> Self {
        Self::new(self.left, self.right, 2 * self.len() - 1).expect("refining a valid grid")
    }
}
