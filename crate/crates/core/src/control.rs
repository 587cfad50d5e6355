//! Distributed control signals `u : [t₀, T] → U = L²(0, 1)`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::spectral::ModalCoeffs;

/// Relative tolerance for deciding that a time sits on a grid node.
pub(crate) const NODE_EPS: f64 = 1e-9;

/// Which one-sided limit to read at a discontinuity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Uniformly sampled control, piecewise linear between nodes.
///
/// `values[i]` is the right limit at node `i`. Nodes listed in `left` carry a
/// jump; their left limit is stored there.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    t0: f64,
    step: f64,
    values: Vec<ModalCoeffs>,
    left: BTreeMap<usize, ModalCoeffs>,
}

impl ControlSignal {
    pub fn new(t0: f64, step: f64, values: Vec<ModalCoeffs>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite() && t0.is_finite()) {
            return Err(Error::Precondition(format!(
                "invalid control grid: t0 = {t0}, step = {step}"
            )));
        }
        if values.len() < 2 {
            return Err(Error::Precondition("a control signal needs at least two nodes".into()));
        }
        let modes = values[0].len();
        if values.iter().any(|v| v.len() != modes) {
            return Err(Error::Shape("control values have inconsistent mode counts".into()));
        }
        if values.iter().any(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::Domain("control values must be finite".into()));
        }
        Ok(Self {
            t0,
            step,
            values,
            left: BTreeMap::new(),
        })
    }

    /// The zero control on `[t0, t0 + intervals * step]`.
    pub fn zeros(t0: f64, step: f64, intervals: usize, modes: usize) -> Result<Self> {
        Self::new(t0, step, vec![ModalCoeffs::zeros(modes); intervals + 1])
    }

    /// Samples `f(t)` at the nodes.
    pub fn from_fn(t0: f64, step: f64, intervals: usize, f: impl Fn(f64) -> ModalCoeffs) -> Result<Self> {
        Self::new(t0, step, (0..=intervals).map(|i| f(t0 + i as f64 * step)).collect())
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn end(&self) -> f64 {
        self.time(self.intervals())
    }

    pub fn modes(&self) -> usize {
        self.values[0].len()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.step
    }

    /// Right limit at node `i`.
    pub fn node(&self, i: usize) -> &ModalCoeffs {
        &self.values[i]
    }

    pub fn node_left(&self, i: usize) -> &ModalCoeffs {
        self.left.get(&i).unwrap_or(&self.values[i])
    }

    pub fn jumps(&self) -> impl Iterator<Item = (usize, &ModalCoeffs)> {
        self.left.iter().map(|(i, v)| (*i, v))
    }

    /// Marks node `i` as a jump with the given left limit.
    pub fn set_left(&mut self, i: usize, left: ModalCoeffs) -> Result<()> {
        if i >= self.values.len() || left.len() != self.modes() {
            return Err(Error::Shape(format!("cannot set left limit at node {i}")));
        }
        self.left.insert(i, left);
        Ok(())
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        let tol = NODE_EPS * self.step;
        self.t0 <= a + tol && self.end() >= b - tol
    }

    /// Value at `t`, reading the given one-sided limit at nodes. Times outside
    /// the grid are clamped to the end values.
    pub fn value(&self, t: f64, side: Side) -> ModalCoeffs {
        let x = (t - self.t0) / self.step;
        let last = self.intervals();
        let nearest = x.round();
        if (x - nearest).abs() <= NODE_EPS * (1.0 + x.abs()) {
            let i = (nearest.max(0.0) as usize).min(last);
            return match side {
                Side::Right => self.values[i].clone(),
                Side::Left => self.node_left(i).clone(),
            };
        }
        if x <= 0.0 {
            return self.values[0].clone();
        }
        if x >= last as f64 {
            return self.node_left(last).clone();
        }
        let i = x.floor() as usize;
        let theta = x - i as f64;
        let mut out = self.values[i].scaled(1.0 - theta);
        out.axpy(theta, self.node_left(i + 1));
        out
    }

    /// `∫ ‖u(t)‖² dt` by the trapezoid rule over the nodes (one-sided limits
    /// at each interval's ends).
    pub fn l2_norm_squared(&self) -> f64 {
        (0..self.intervals())
            .map(|i| {
                let a = self.values[i].norm();
                let b = self.node_left(i + 1).norm();
                0.5 * self.step * (a * a + b * b)
            })
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_squared().sqrt()
    }

    /// Largest nodal value of `‖u(t)‖`.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .chain(self.left.values())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            t0: self.t0,
            step: self.step,
            values: self.values.iter().map(|v| v.scaled(alpha)).collect(),
            left: self.left.iter().map(|(i, v)| (*i, v.scaled(alpha))).collect(),
        }
    }

    /// Node-wise `self + alpha * other` on a shared grid.
    pub fn axpy(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.check_same_grid(other)?;
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            a.axpy(alpha, b);
        }
        let keys: Vec<usize> = self.left.keys().chain(other.left.keys()).copied().collect();
        for i in keys {
            let mut l = self.node_left(i).clone();
            l.axpy(alpha, other.node_left(i));
            out.left.insert(i, l);
        }
        Ok(out)
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.values.len() != other.values.len()
            || self.modes() != other.modes()
            || (self.t0 - other.t0).abs() > NODE_EPS * self.step
            || (self.step - other.step).abs() > NODE_EPS * self.step
        {
            return Err(Error::Shape("control signals live on different grids".into()));
        }
        Ok(())
    }

    /// `self` up to the node at `at`, then `tail` (which must start at `at` on
    /// the same step). The node at `at` keeps `self`'s value as its left limit
    /// and takes `tail`'s first value as its right limit.
    pub fn splice(&self, tail: &Self) -> Result<Self> {
        if (tail.step - self.step).abs() > NODE_EPS * self.step {
            return Err(Error::Shape("spliced controls must share the step".into()));
        }
        let offset = (tail.t0 - self.t0) / self.step;
        let j = offset.round();
        if (offset - j).abs() > NODE_EPS * (1.0 + offset.abs()) || j < 0.0 {
            return Err(Error::Shape(format!(
                "splice time {} is not a node of the head control",
                tail.t0
            )));
        }
        let j = j as usize;
        if j > self.intervals() || tail.modes() != self.modes() {
            return Err(Error::Shape("splice point outside the head control".into()));
        }
        let mut values: Vec<ModalCoeffs> = self.values[..j].to_vec();
        values.extend(tail.values.iter().cloned());
        let mut left: BTreeMap<usize, ModalCoeffs> = self
            .left
            .iter()
            .filter(|(i, _)| **i < j)
            .map(|(i, v)| (*i, v.clone()))
            .collect();
        left.insert(j, self.node_left(j).clone());
        for (i, v) in &tail.left {
            if *i > 0 {
                left.insert(i + j, v.clone());
            }
        }
        Ok(Self {
            t0: self.t0,
            step: self.step,
            values,
            left,
        })
    }

    /// Restriction to nodes `from..=to`.
    pub fn window(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.intervals() {
            return Err(Error::Precondition(format!("invalid node window {from}..={to}")));
        }
        let mut values = self.values[from..=to].to_vec();
        // the restriction starts from the right limit and ends at the left limit
        values[to - from] = self.node_left(to).clone();
        let left = self
            .left
            .iter()
            .filter(|(i, _)| **i > from && **i < to)
            .map(|(i, v)| (i - from, v.clone()))
            .collect();
        Ok(Self {
            t0: self.time(from),
            step: self.step,
            values,
            left,
        })
    }

    /// Iterates `(t, value)` rows with jump nodes emitted twice, left first.
    pub fn rows(&self) -> Vec<(f64, &ModalCoeffs)> {
        let mut rows = Vec::with_capacity(self.values.len() + self.left.len());
        for (i, v) in self.values.iter().enumerate() {
            let t = self.time(i);
            if let Some(l) = self.left.get(&i) {
                rows.push((t, l));
            }
            rows.push((t, v));
        }
        rows
    }
}
