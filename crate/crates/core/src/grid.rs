//! Uniform grids over `[a, b]` with explicit margin nodes on each side.
//!
//! Operators at scale `h` consume margin: a forward difference needs nodes
//! beyond `b`, a backward difference needs nodes before `a`. Margins are
//! therefore tracked per side, and shrinking them is an explicit, checked
//! operation — an operator either has the nodes it needs or fails with
//! `InsufficientMargin`, never by silently truncating the interval.

use crate::error::{Error, Result};

/// Relative tolerance used when checking that `(b - a) / step` is an integer.
const DIVISIBILITY_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    a: f64,
    b: f64,
    step: f64,
    margin_left: usize,
    margin_right: usize,
    /// Number of nodes inside `[a, b]`, endpoints included.
    core_len: usize,
}

impl UniformGrid {
    /// Grid over `[a, b]` with the same number of margin nodes on each side.
    pub fn symmetric(a: f64, b: f64, step: f64, margin_nodes: usize) -> Result<Self> {
        Self::with_margins(a, b, step, margin_nodes, margin_nodes)
    }

    /// Grid over `[a, b]` with independently chosen margins.
    pub fn with_margins(
        a: f64,
        b: f64,
        step: f64,
        margin_left: usize,
        margin_right: usize,
    ) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() || b <= a {
            return Err(Error::InvalidGrid(format!(
                "interval [{a}, {b}] is not a finite interval with a < b"
            )));
        }
        if step <= 0.0 || !step.is_finite() {
            return Err(Error::InvalidGrid(format!("step {step} must be positive")));
        }
        let ratio = (b - a) / step;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > DIVISIBILITY_REL_TOL * ratio.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "(b - a) / step = {ratio} is not a positive integer within tolerance"
            )));
        }
        Ok(UniformGrid {
            a,
            b,
            step,
            margin_left,
            margin_right,
            core_len: rounded as usize + 1,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn margin_left(&self) -> usize {
        self.margin_left
    }

    pub fn margin_right(&self) -> usize {
        self.margin_right
    }

    /// Margin when both sides agree; the common case for stored signals.
    pub fn margin_nodes(&self) -> usize {
        debug_assert_eq!(self.margin_left, self.margin_right);
        self.margin_left
    }

    pub fn is_symmetric(&self) -> bool {
        self.margin_left == self.margin_right
    }

    /// Total number of stored nodes, margins included.
    pub fn len(&self) -> usize {
        self.margin_left + self.core_len + self.margin_right
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of nodes inside `[a, b]`, endpoints included.
    pub fn core_len(&self) -> usize {
        self.core_len
    }

    /// Time of node `k`; index `0` is the leftmost margin node.
    pub fn node(&self, k: usize) -> f64 {
        self.a + (k as f64 - self.margin_left as f64) * self.step
    }

    /// Index of the node at `t = a`.
    pub fn index_of_a(&self) -> usize {
        self.margin_left
    }

    /// Index of the node at `t = b`.
    pub fn index_of_b(&self) -> usize {
        self.margin_left + self.core_len - 1
    }

    /// Index range of the core nodes `[a, b]`, inclusive of both endpoints.
    pub fn core_range(&self) -> std::ops::RangeInclusive<usize> {
        self.index_of_a()..=self.index_of_b()
    }

    /// Express a positive duration as a whole number of grid steps.
    ///
    /// Fails with `StepNotDividing` when `duration` is not an integer
    /// multiple of the step within tolerance.
    pub fn nodes_for(&self, duration: f64) -> Result<usize> {
        if duration <= 0.0 || !duration.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "duration {duration} must be positive"
            )));
        }
        let ratio = duration / self.step;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > DIVISIBILITY_REL_TOL * ratio.max(1.0) {
            return Err(Error::StepNotDividing(format!(
                "{duration} is not an integer multiple of the grid step {}",
                self.step
            )));
        }
        Ok(rounded as usize)
    }

    /// Same grid with `p` nodes removed from the right margin.
    pub fn shrink_right(&self, p: usize) -> Result<Self> {
        if self.margin_right < p {
            return Err(Error::InsufficientMargin {
                needed: p,
                available: self.margin_right,
                side: "right",
            });
        }
        let mut g = *self;
        g.margin_right -= p;
        Ok(g)
    }

    /// Same grid with `p` nodes removed from the left margin.
    pub fn shrink_left(&self, p: usize) -> Result<Self> {
        if self.margin_left < p {
            return Err(Error::InsufficientMargin {
                needed: p,
                available: self.margin_left,
                side: "left",
            });
        }
        let mut g = *self;
        g.margin_left -= p;
        Ok(g)
    }

    /// Same grid with `p` nodes removed from both margins.
    pub fn shrink_both(&self, p: usize) -> Result<Self> {
        self.shrink_left(p)?.shrink_right(p)
    }

    /// Same interval and step with margins replaced.
    pub fn with_margin_counts(&self, left: usize, right: usize) -> Self {
        let mut g = *self;
        g.margin_left = left;
        g.margin_right = right;
        g
    }

    /// True when both grids share `a`, `b` and `step` exactly.
    pub fn same_axis(&self, other: &UniformGrid) -> bool {
        self.a == other.a && self.b == other.b && self.step == other.step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_times_and_counts() {
        let g = UniformGrid::symmetric(0.0, 1.0, 0.25, 2).unwrap();
        assert_eq!(g.core_len(), 5);
        assert_eq!(g.len(), 9);
        assert_eq!(g.index_of_a(), 2);
        assert_eq!(g.index_of_b(), 6);
        assert_eq!(g.node(0), -0.5);
        assert_eq!(g.node(2), 0.0);
        assert_eq!(g.node(6), 1.0);
        assert_eq!(g.node(8), 1.5);
    }

    #[test]
    fn rejects_non_dividing_step() {
        let err = UniformGrid::symmetric(0.0, 1.0, 0.3, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidGrid(_)));
    }

    #[test]
    fn rejects_empty_interval() {
        assert!(UniformGrid::symmetric(1.0, 1.0, 0.1, 0).is_err());
        assert!(UniformGrid::symmetric(2.0, 1.0, 0.1, 0).is_err());
    }

    #[test]
    fn shrink_tracks_sides() {
        let g = UniformGrid::with_margins(0.0, 1.0, 0.5, 3, 1).unwrap();
        let r = g.shrink_right(1).unwrap();
        assert_eq!(r.margin_right(), 0);
        assert_eq!(r.margin_left(), 3);
        assert!(matches!(
            g.shrink_right(2),
            Err(Error::InsufficientMargin { side: "right", .. })
        ));
        assert!(matches!(
            g.shrink_left(4),
            Err(Error::InsufficientMargin { side: "left", .. })
        ));
    }

    #[test]
    fn nodes_for_checks_divisibility() {
        let g = UniformGrid::symmetric(0.0, 1.0, 0.125, 0).unwrap();
        assert_eq!(g.nodes_for(0.5).unwrap(), 4);
        assert!(matches!(g.nodes_for(0.3), Err(Error::StepNotDividing(_))));
    }
}
