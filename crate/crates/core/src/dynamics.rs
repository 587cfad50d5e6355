//! Mild solutions of the full system with impulses, a delayed
//! nonlinearity, the one-sided cable force and a nonlocal history.
//!
//! Time runs on one uniform grid over `[−r, T]` with step `h`; `r`, the
//! delay lags and the impulse times are nodes of that grid. A step from `t`
//! to `t + h` is the exponential trapezoid rule
//! `z⁺ = E z + a g(t⁺) + b g((t+h)⁻)`: the group part is exact and the source
//! `g = u + p − k w⁺ + f` is interpolated linearly between the one-sided
//! node values. The cable term makes the step implicit; it is resolved by a
//! short fixed-point loop. Impulses are applied to the left limit and the
//! result stored as the right limit of the node.
//!
//! The nonlocal history `z(s) = ρ(s) − 𝔊(z_{τ₁}, …, z_{τ_q})(s)` reads the
//! solution at positive times, so the whole trajectory is computed by Picard
//! iteration started from `𝔊 ≡ 0`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::ops::Deref;

use crate::control::{ControlSignal, Side, NODE_EPS};
use crate::error::{Error, Result};
use crate::semigroup::{ModelParams, Propagator};
use crate::spectral::{norm_z, positive_part_unchecked, ModalCoeffs, SpatialGrid, StateZ};

/// Grid tolerance for snapping times onto nodes, relative to the step.
pub const SNAP_TOL: f64 = 1e-6;

/// Index `t / step` if `t` is a node within `SNAP_TOL·step`.
pub fn node_index(t: f64, step: f64) -> Option<i64> {
    let x = t / step;
    let n = x.round();
    ((x - n).abs() <= SNAP_TOL).then_some(n as i64)
}

/// Uniformly sampled states with optional left limits at marked nodes.
/// Node `i` sits at time `(first + i)·step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    step: f64,
    first: i64,
    values: Vec<StateZ>,
    left: BTreeMap<usize, StateZ>,
}

impl Samples {
    fn new(step: f64, first: i64, values: Vec<StateZ>) -> Self {
        Self {
            step,
            first,
            values,
            left: BTreeMap::new(),
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.values[0].modes()
    }

    pub fn time(&self, i: usize) -> f64 {
        (self.first + i as i64) as f64 * self.step
    }

    pub fn start(&self) -> f64 {
        self.time(0)
    }

    pub fn end(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Node index of time `t` if `t` is a node.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.step - self.first as f64;
        let n = x.round();
        ((x - n).abs() <= NODE_EPS * (1.0 + x.abs()) && n >= 0.0 && (n as usize) < self.len()).then_some(n as usize)
    }

    /// Right limit at node `i`.
    pub fn node(&self, i: usize) -> &StateZ {
        &self.values[i]
    }

    pub fn node_left(&self, i: usize) -> &StateZ {
        self.left.get(&i).unwrap_or(&self.values[i])
    }

    pub fn node_side(&self, i: usize, side: Side) -> &StateZ {
        match side {
            Side::Right => self.node(i),
            Side::Left => self.node_left(i),
        }
    }

    /// Marked nodes with their left limits.
    pub fn jumps(&self) -> impl Iterator<Item = (usize, &StateZ)> {
        self.left.iter().map(|(i, v)| (*i, v))
    }

    fn mark(&mut self, i: usize, left: StateZ) {
        self.left.insert(i, left);
    }

    /// Value at `t` by linear interpolation; nodes return the requested
    /// one-sided limit and times outside the grid clamp to the ends.
    pub fn value(&self, t: f64, side: Side) -> StateZ {
        let x = t / self.step - self.first as f64;
        let last = self.len() - 1;
        let n = x.round();
        if (x - n).abs() <= NODE_EPS * (1.0 + x.abs()) {
            let i = (n.max(0.0) as usize).min(last);
            return self.node_side(i, side).clone();
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

    /// `max ‖z(t)‖` over nodes and stored left limits.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .chain(self.left.values())
            .map(norm_z)
            .fold(0.0, f64::max)
    }

    /// Sup-norm distance over both one-sided limits at every node.
    pub fn sup_diff(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len()
            || self.first != other.first
            || (self.step - other.step).abs() > NODE_EPS * self.step
        {
            return Err(Error::Shape("sampled states live on different grids".into()));
        }
        let mut d = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| norm_z(&(a - b)))
            .fold(0.0, f64::max);
        for i in self.left.keys().chain(other.left.keys()) {
            d = d.max(norm_z(&(self.node_left(*i) - other.node_left(*i))));
        }
        Ok(d)
    }

    /// `(t, state)` rows with marked nodes emitted twice, left first.
    pub fn rows(&self) -> Vec<(f64, &StateZ)> {
        let mut rows = Vec::with_capacity(self.len() + self.left.len());
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

/// State history on `[−r, 0]`. Canonical node values are right limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment(Samples);

impl Deref for Segment {
    type Target = Samples;
    fn deref(&self) -> &Samples {
        &self.0
    }
}

impl Segment {
    /// `values[i]` sits at `s = −r + i·step`; `r/step` must be an integer.
    pub fn new(delay: f64, step: f64, values: Vec<StateZ>) -> Result<Self> {
        let count = node_index(delay, step)
            .filter(|n| *n >= 1)
            .ok_or_else(|| Error::Config(format!("history span {delay} is not a multiple of the step {step}")))?;
        if values.len() != count as usize + 1 {
            return Err(Error::Shape(format!(
                "history on [-{delay}, 0] with step {step} needs {} nodes, got {}",
                count + 1,
                values.len()
            )));
        }
        check_states(&values)?;
        Ok(Self(Samples::new(step, -count, values)))
    }

    pub fn constant(delay: f64, step: f64, z: &StateZ) -> Result<Self> {
        let count = node_index(delay, step)
            .filter(|n| *n >= 1)
            .ok_or_else(|| Error::Config(format!("history span {delay} is not a multiple of the step {step}")))?;
        Self::new(delay, step, vec![z.clone(); count as usize + 1])
    }

    /// Marks node `i` as a discontinuity with the given left limit.
    pub fn with_left(mut self, i: usize, left: StateZ) -> Result<Self> {
        if i >= self.len() || left.modes() != self.modes() {
            return Err(Error::Shape(format!("cannot mark history node {i}")));
        }
        self.0.mark(i, left);
        Ok(self)
    }

    pub fn delay(&self) -> f64 {
        -self.start()
    }

    /// `ρ(−r)` and `ρ(0)` shorthands.
    pub fn oldest(&self) -> &StateZ {
        self.node(0)
    }

    pub fn newest(&self) -> &StateZ {
        self.node(self.len() - 1)
    }
}

fn check_states(values: &[StateZ]) -> Result<()> {
    let Some(first) = values.first() else {
        return Err(Error::Shape("empty sample list".into()));
    };
    if values.iter().any(|v| v.modes() != first.modes()) {
        return Err(Error::Shape("states have inconsistent mode counts".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("states must be finite".into()));
    }
    Ok(())
}

/// Mild solution record on `[−r, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory(Samples);

impl Deref for Trajectory {
    type Target = Samples;
    fn deref(&self) -> &Samples {
        &self.0
    }
}

impl Trajectory {
    /// Samples `f` on the nodes of `[−r, T]`; used for synthetic iterates.
    pub fn from_fn(delay_nodes: usize, steps: usize, step: f64, f: impl Fn(f64) -> StateZ) -> Result<Self> {
        let first = -(delay_nodes as i64);
        let values: Vec<StateZ> = (0..=delay_nodes + steps)
            .map(|i| f((first + i as i64) as f64 * step))
            .collect();
        check_states(&values)?;
        Ok(Self(Samples::new(step, first, values)))
    }

    /// Number of nodes strictly before `t = 0`.
    pub fn delay_nodes(&self) -> usize {
        (-self.first) as usize
    }

    pub fn steps(&self) -> usize {
        self.len() - 1 - self.delay_nodes()
    }

    /// Index of the node at `t = 0`.
    pub fn origin(&self) -> usize {
        self.delay_nodes()
    }

    pub fn final_state(&self) -> &StateZ {
        self.node_left(self.len() - 1)
    }

    pub fn with_left(mut self, i: usize, left: StateZ) -> Result<Self> {
        if i >= self.len() || left.modes() != self.modes() {
            return Err(Error::Shape(format!("cannot mark trajectory node {i}")));
        }
        self.0.mark(i, left);
        Ok(self)
    }
}

/// `z̃ₜ(s) = z(t + s)`, `s ∈ [−r, 0]`. Node-aligned windows keep the
/// discontinuity marks; otherwise the window is interpolated node by node.
pub fn segment_at(traj: &Trajectory, t: f64) -> Result<Segment> {
    let horizon = traj.end();
    if !(t >= -NODE_EPS * traj.step() && t <= horizon + NODE_EPS * traj.step()) {
        return Err(Error::Domain(format!("segment time {t} outside [0, {horizon}]")));
    }
    let r = traj.delay_nodes();
    if let Some(j) = traj.index_of(t) {
        let lo = j - r;
        let values = traj.values[lo..=j].to_vec();
        let mut seg = Samples::new(traj.step(), -(r as i64), values);
        for (i, l) in traj.left.range(lo..=j) {
            seg.mark(i - lo, l.clone());
        }
        return Ok(Segment(seg));
    }
    let values = (0..=r)
        .map(|i| traj.value(t + (i as f64 - r as f64) * traj.step(), Side::Right))
        .collect();
    Ok(Segment(Samples::new(traj.step(), -(r as i64), values)))
}

/// Prescribed history `ρ` on `[−r, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub enum History {
    Zero,
    /// `ρ(s) ≡ z`.
    Constant(StateZ),
    /// Sampled history, linearly interpolated.
    Sampled(Segment),
}

impl History {
    pub fn value(&self, s: f64, side: Side, modes: usize) -> StateZ {
        match self {
            History::Zero => StateZ::zeros(modes),
            History::Constant(z) => z.clone(),
            History::Sampled(seg) => seg.value(s, side),
        }
    }

    fn modes(&self) -> Option<usize> {
        match self {
            History::Zero => None,
            History::Constant(z) => Some(z.modes()),
            History::Sampled(seg) => Some(seg.modes()),
        }
    }

    /// Times of the marked discontinuities of `ρ`.
    pub fn jump_times(&self) -> Vec<f64> {
        match self {
            History::Sampled(seg) => seg.jumps().map(|(i, _)| seg.time(i)).collect(),
            _ => Vec::new(),
        }
    }
}

/// Velocity-slot forcing `p(t, ·)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Zero,
    /// `p(t) = cos(ωt)·Σ cₙφ̂ₙ`.
    Modal {
        coeffs: ModalCoeffs,
        omega: f64,
    },
    /// `p(t, x) = A·cos(ωt)·sin(nπx)`.
    Sine {
        mode: usize,
        amplitude: f64,
        omega: f64,
    },
}

impl Forcing {
    pub fn eval(&self, t: f64, modes: usize) -> ModalCoeffs {
        match self {
            Forcing::Zero => ModalCoeffs::zeros(modes),
            Forcing::Modal { coeffs, omega } => coeffs.scaled((omega * t).cos()),
            Forcing::Sine { mode, amplitude, omega } => {
                let mut c = ModalCoeffs::zeros(modes);
                if *mode >= 1 && *mode <= modes {
                    // sin(nπx) = φ̂ₙ/√2
                    c[mode - 1] = amplitude * (omega * t).cos() / SQRT_2;
                }
                c
            }
        }
    }

    /// `sup_t ‖p(t)‖` over the retained modes.
    pub fn sup_norm(&self, modes: usize) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Modal { coeffs, .. } => coeffs.norm(),
            Forcing::Sine { mode, amplitude, .. } => {
                if *mode >= 1 && *mode <= modes {
                    amplitude.abs() / SQRT_2
                } else {
                    0.0
                }
            }
        }
    }

    fn check(&self, modes: usize) -> Result<()> {
        match self {
            Forcing::Modal { coeffs, omega } if coeffs.len() != modes || !omega.is_finite() => Err(Error::Config(
                format!("modal forcing needs {modes} finite coefficients"),
            )),
            Forcing::Sine { mode, amplitude, omega } if *mode == 0 || !amplitude.is_finite() || !omega.is_finite() => {
                Err(Error::Config(
                    "sine forcing needs mode >= 1 and finite parameters".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Nondecreasing envelope `𝓗` of the growth bound `α₁𝓗(‖φ(−r)‖) + β₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Envelope {
    Identity,
    Sqrt,
}

impl Envelope {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Envelope::Identity => x,
            Envelope::Sqrt => x.sqrt(),
        }
    }
}

/// Lipschitz and growth constants attached to a nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthConstants {
    /// Lipschitz constant `l_f` in the delayed state.
    pub lipschitz: f64,
    pub alpha: f64,
    pub beta: f64,
    pub envelope: Envelope,
}

/// Nonlinearity `f(t, z(t − r), u(t))`, entering the velocity slot.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    Zero,
    /// `a·tanh(y(t − r))` coefficient-wise.
    DelayedSaturating {
        a: f64,
    },
    /// `a·y(t − r) / max(1, ‖y(t − r)‖)`.
    BoundedSaturating {
        a: f64,
    },
    /// `a·tanh(u(t))` coefficient-wise.
    ControlSaturating {
        a: f64,
    },
}

impl Nonlinearity {
    pub fn eval(&self, delayed: &StateZ, u: &ModalCoeffs) -> ModalCoeffs {
        match self {
            Nonlinearity::Zero => ModalCoeffs::zeros(delayed.modes()),
            Nonlinearity::DelayedSaturating { a } => delayed.y.map(|v| a * v.tanh()),
            Nonlinearity::BoundedSaturating { a } => {
                let n = delayed.y.norm().max(1.0);
                delayed.y.scaled(a / n)
            }
            Nonlinearity::ControlSaturating { a } => u.map(|v| a * v.tanh()),
        }
    }

    pub fn depends_on_control(&self) -> bool {
        matches!(self, Nonlinearity::ControlSaturating { .. })
    }

    /// Constants implied by the catalog entry for `modes` retained modes.
    pub fn constants(&self, modes: usize) -> GrowthConstants {
        let (lipschitz, alpha, beta) = match self {
            Nonlinearity::Zero => (0.0, 0.0, 0.0),
            Nonlinearity::DelayedSaturating { a } => (a.abs(), a.abs(), 0.0),
            Nonlinearity::BoundedSaturating { a } => (a.abs(), 0.0, a.abs()),
            Nonlinearity::ControlSaturating { a } => (0.0, 0.0, a.abs() * (modes as f64).sqrt()),
        };
        GrowthConstants {
            lipschitz,
            alpha,
            beta,
            envelope: Envelope::Identity,
        }
    }
}

/// Jump map `𝔍ₖ(t_k, z(t_k⁻))`.
#[derive(Debug, Clone, PartialEq)]
pub enum ImpulseMap {
    Constant(StateZ),
    /// `(0, g·y + c)`.
    LinearVelocity {
        gain: f64,
        offset: ModalCoeffs,
    },
    /// `(0, g·tanh(y))` coefficient-wise.
    SaturatingVelocity {
        gain: f64,
    },
}

impl ImpulseMap {
    pub fn apply(&self, z: &StateZ) -> StateZ {
        let zero = ModalCoeffs::zeros(z.modes());
        match self {
            ImpulseMap::Constant(j) => j.clone(),
            ImpulseMap::LinearVelocity { gain, offset } => {
                let mut y = z.y.scaled(*gain);
                y += offset;
                StateZ { w: zero, y }
            }
            ImpulseMap::SaturatingVelocity { gain } => StateZ {
                w: zero,
                y: z.y.map(|v| gain * v.tanh()),
            },
        }
    }

    /// Lipschitz constant `dₖ` in the `Z½` norm.
    pub fn lipschitz(&self) -> f64 {
        match self {
            ImpulseMap::Constant(_) => 0.0,
            ImpulseMap::LinearVelocity { gain, .. } | ImpulseMap::SaturatingVelocity { gain } => gain.abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Impulse {
    pub time: f64,
    pub map: ImpulseMap,
    /// Declared `dₖ`, at least the catalog constant.
    pub lipschitz: f64,
}

impl Impulse {
    pub fn new(time: f64, map: ImpulseMap) -> Self {
        let lipschitz = map.lipschitz();
        Self { time, map, lipschitz }
    }

    pub fn with_declared(mut self, d: f64) -> Result<Self> {
        if !(d >= self.map.lipschitz()) {
            return Err(Error::Config(format!(
                "declared impulse constant {d} at t = {} is below the map's Lipschitz constant {}",
                self.time,
                self.map.lipschitz()
            )));
        }
        self.lipschitz = d;
        Ok(self)
    }
}

/// `𝔊(z_{τ₁}, …, z_{τ_q})(s) = (Σ γʷⱼ w(τⱼ + s), Σ γʸⱼ y(τⱼ + s))`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Nonlocal {
    pub lags: Vec<f64>,
    pub gamma_w: Vec<f64>,
    pub gamma_y: Vec<f64>,
}

impl Nonlocal {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn q(&self) -> usize {
        self.lags.len()
    }

    /// `L_q = maxⱼ max(|γʷⱼ|, |γʸⱼ|)`.
    pub fn lipschitz(&self) -> f64 {
        self.gamma_w
            .iter()
            .chain(&self.gamma_y)
            .fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn is_trivial(&self) -> bool {
        self.lipschitz() == 0.0
    }

    fn combine(&self, states: impl Iterator<Item = StateZ>, modes: usize) -> StateZ {
        let mut out = StateZ::zeros(modes);
        for ((z, gw), gy) in states.zip(&self.gamma_w).zip(&self.gamma_y) {
            out.w.axpy(*gw, &z.w);
            out.y.axpy(*gy, &z.y);
        }
        out
    }
}

/// Node-wise `𝔊` applied to `q` segments on a common grid.
pub fn evaluate_nonlocal(segments: &[Segment], nl: &Nonlocal) -> Result<Segment> {
    if segments.len() != nl.q() || segments.is_empty() {
        return Err(Error::Shape(format!(
            "nonlocal map takes {} segments, got {}",
            nl.q(),
            segments.len()
        )));
    }
    let base = &segments[0];
    for s in segments {
        if s.len() != base.len() || s.first != base.first || (s.step() - base.step()).abs() > NODE_EPS * base.step() {
            return Err(Error::Shape("nonlocal segments live on different grids".into()));
        }
    }
    let modes = base.modes();
    let values = (0..base.len())
        .map(|i| nl.combine(segments.iter().map(|s| s.node(i).clone()), modes))
        .collect();
    let mut out = Samples::new(base.step(), base.first, values);
    let marked: std::collections::BTreeSet<usize> = segments.iter().flat_map(|s| s.left.keys().copied()).collect();
    for i in marked {
        out.mark(i, nl.combine(segments.iter().map(|s| s.node_left(i).clone()), modes));
    }
    Ok(Segment(out))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

/// Everything that defines the nonlinear control system.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub params: ModelParams,
    /// Time steps on `[0, T]`.
    pub steps: usize,
    pub grid: SpatialGrid,
    pub impulses: Vec<Impulse>,
    pub nonlocal: Nonlocal,
    pub forcing: Forcing,
    pub nonlinearity: Nonlinearity,
    /// Declared constants of `f` (Lipschitz) and of `𝔉` (growth).
    pub constants: GrowthConstants,
    pub history: History,
    pub picard: PicardOptions,
}

impl ProblemSpec {
    /// A linear problem (`f = p = 0`, no impulses, `𝔊 = 0`, `ρ = 0`) with
    /// `T/steps` time step and the default spatial grid.
    pub fn linear(params: ModelParams, steps: usize) -> Result<Self> {
        let grid = SpatialGrid::new(default_grid_points(params.modes), params.modes)?;
        let spec = Self {
            constants: Nonlinearity::Zero.constants(params.modes),
            params,
            steps,
            grid,
            impulses: Vec::new(),
            nonlocal: Nonlocal::none(),
            forcing: Forcing::Zero,
            nonlinearity: Nonlinearity::Zero,
            history: History::Zero,
            picard: PicardOptions::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn step(&self) -> f64 {
        self.params.horizon / self.steps as f64
    }

    pub fn modes(&self) -> usize {
        self.params.modes
    }

    pub fn delay_nodes(&self) -> usize {
        node_index(self.params.delay, self.step()).map_or(0, |n| n as usize)
    }

    /// Constants implied by the catalogs, before any declared override.
    pub fn catalog_constants(&self) -> GrowthConstants {
        let mut c = self.nonlinearity.constants(self.modes());
        c.beta += self.forcing.sup_norm(self.modes());
        c
    }

    /// Effective Lipschitz constant of `𝔉`: `l_f + k/π²`.
    pub fn effective_lipschitz(&self) -> f64 {
        self.constants.lipschitz + self.params.k / (PI * PI)
    }

    /// `Σₖ dₖ`.
    pub fn impulse_lipschitz_sum(&self) -> f64 {
        self.impulses.iter().fold(0.0, |s, i| s + i.lipschitz)
    }

    pub fn last_impulse(&self) -> Option<f64> {
        self.impulses.last().map(|i| i.time)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        p.validate()?;
        if self.steps == 0 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        let h = self.step();
        if node_index(p.delay, h).filter(|n| *n >= 1).is_none() {
            return Err(Error::Config(format!(
                "delay span r = {} is not a multiple of the time step h = {h}",
                p.delay
            )));
        }
        if self.grid.modes() < p.modes {
            return Err(Error::Config(format!(
                "spatial grid built for {} modes, model has {}",
                self.grid.modes(),
                p.modes
            )));
        }
        let mut prev = 0.0;
        for imp in &self.impulses {
            if !(imp.time > prev && imp.time < p.horizon) {
                return Err(Error::Config(format!(
                    "impulse times must satisfy 0 < t_1 < ... < t_m < T, got {}",
                    imp.time
                )));
            }
            if node_index(imp.time, h).is_none() {
                return Err(Error::Config(format!(
                    "impulse time {} is not a node of the time grid (h = {h})",
                    imp.time
                )));
            }
            if let ImpulseMap::Constant(z) = &imp.map {
                if z.modes() != p.modes {
                    return Err(Error::Config("constant impulse has the wrong mode count".into()));
                }
            }
            if let ImpulseMap::LinearVelocity { offset, .. } = &imp.map {
                if offset.len() != p.modes {
                    return Err(Error::Config("impulse offset has the wrong mode count".into()));
                }
            }
            if imp.lipschitz < imp.map.lipschitz() {
                return Err(Error::Config(format!(
                    "declared impulse constant at t = {} is below the map's Lipschitz constant",
                    imp.time
                )));
            }
            prev = imp.time;
        }
        let nl = &self.nonlocal;
        if nl.gamma_w.len() != nl.q() || nl.gamma_y.len() != nl.q() {
            return Err(Error::Config(
                "nonlocal coefficients must match the number of lags".into(),
            ));
        }
        let mut prev = 0.0;
        for &tau in &nl.lags {
            if !(tau > prev && tau < p.delay) {
                return Err(Error::Config(format!(
                    "delay lags must satisfy 0 < tau_1 < ... < tau_q < r, got tau = {tau} with r = {}",
                    p.delay
                )));
            }
            if node_index(tau, h).is_none() {
                return Err(Error::Config(format!(
                    "delay lag {tau} is not a node of the time grid (h = {h})"
                )));
            }
            prev = tau;
        }
        self.forcing.check(p.modes)?;
        if let Some(m) = self.history.modes() {
            if m != p.modes {
                return Err(Error::Config(format!("history has {m} modes, model has {}", p.modes)));
            }
        }
        if let History::Sampled(seg) = &self.history {
            if (seg.delay() - p.delay).abs() > SNAP_TOL * h {
                return Err(Error::Config("sampled history must cover exactly [-r, 0]".into()));
            }
            for t in self.history.jump_times() {
                if node_index(t, h).is_none() {
                    return Err(Error::Config(format!(
                        "history discontinuity at {t} is not a node of the time grid"
                    )));
                }
            }
        }
        let cat = self.catalog_constants();
        let c = &self.constants;
        if c.lipschitz < cat.lipschitz || c.alpha < cat.alpha || c.beta < cat.beta {
            return Err(Error::Config(format!(
                "declared nonlinearity constants (l_f = {}, alpha1 = {}, beta1 = {}) are below the catalog values ({}, {}, {})",
                c.lipschitz, c.alpha, c.beta, cat.lipschitz, cat.alpha, cat.beta
            )));
        }
        if !(self.picard.tol > 0.0) || self.picard.max_iter == 0 {
            return Err(Error::Config("Picard tolerance must be > 0 and max_iter >= 1".into()));
        }
        Ok(())
    }

    fn impulse_nodes(&self) -> BTreeMap<usize, &ImpulseMap> {
        let r = self.delay_nodes();
        let h = self.step();
        self.impulses
            .iter()
            .map(|imp| (r + node_index(imp.time, h).unwrap_or(0) as usize, &imp.map))
            .collect()
    }

    fn lag_nodes(&self) -> Vec<usize> {
        let h = self.step();
        self.nonlocal
            .lags
            .iter()
            .map(|t| node_index(*t, h).unwrap_or(0) as usize)
            .collect()
    }
}

/// Default collocation size: `max(63, 2N + 1)` points.
pub fn default_grid_points(modes: usize) -> usize {
    63.max(2 * modes + 1)
}

/// Velocity-slot source `p(t) − k w⁺ + f`, without the control.
pub(crate) fn drift(spec: &ProblemSpec, t: f64, now: &StateZ, delayed: &StateZ, u: &ModalCoeffs) -> ModalCoeffs {
    let mut g = spec.forcing.eval(t, spec.modes());
    if spec.params.k != 0.0 {
        g.axpy(-spec.params.k, &positive_part_unchecked(&now.w, &spec.grid));
    }
    if !matches!(spec.nonlinearity, Nonlinearity::Zero) {
        g += &spec.nonlinearity.eval(delayed, u);
    }
    g
}

/// `𝔉(t, φ, u) = (0, p(t) − k φ(0)⁺ + f(t, φ(−r), u))`.
pub fn evaluate_f(t: f64, seg: &Segment, u: Option<&ModalCoeffs>, spec: &ProblemSpec) -> Result<StateZ> {
    if seg.modes() != spec.modes() {
        return Err(Error::Shape("segment and model mode counts differ".into()));
    }
    if u.is_none() && spec.nonlinearity.depends_on_control() {
        return Err(Error::Precondition(
            "the nonlinearity depends on the control but no control value was given".into(),
        ));
    }
    let zero = ModalCoeffs::zeros(spec.modes());
    let u = u.unwrap_or(&zero);
    if u.len() != spec.modes() {
        return Err(Error::Shape("control value has the wrong mode count".into()));
    }
    Ok(StateZ {
        w: ModalCoeffs::zeros(spec.modes()),
        y: drift(spec, t, seg.newest(), seg.oldest(), u),
    })
}

/// History nodes `ρ(s) − 𝔊(prev)(s)` on `[−r, 0]`, with marks.
fn history_nodes(spec: &ProblemSpec, prev: Option<&Trajectory>, traj: &mut Samples) {
    let r = spec.delay_nodes();
    let h = spec.step();
    let modes = spec.modes();
    let lags = spec.lag_nodes();
    let rho_marks: Vec<usize> = spec
        .history
        .jump_times()
        .iter()
        .filter_map(|t| node_index(*t, h).map(|n| (n + r as i64) as usize))
        .collect();
    for i in 0..=r {
        let s = (i as f64 - r as f64) * h;
        let mut right = spec.history.value(s, Side::Right, modes);
        let mut left = spec.history.value(s, Side::Left, modes);
        let mut marked = rho_marks.contains(&i);
        if let Some(y) = prev {
            let g_right = spec.nonlocal.combine(lags.iter().map(|l| y.node(i + l).clone()), modes);
            let g_left = spec
                .nonlocal
                .combine(lags.iter().map(|l| y.node_left(i + l).clone()), modes);
            marked |= lags.iter().any(|l| y.left.contains_key(&(i + l)));
            right -= &g_right;
            left -= &g_left;
        }
        traj.values.push(right);
        if marked {
            traj.mark(i, left);
        }
    }
}

/// One forward sweep for a fixed nonlocal argument `prev` (`None`: `𝔊 = 0`).
fn sweep(spec: &ProblemSpec, u: &ControlSignal, prop: &Propagator, prev: Option<&Trajectory>) -> Trajectory {
    let r = spec.delay_nodes();
    let h = spec.step();
    let n = spec.steps;
    let mut s = Samples::new(h, -(r as i64), Vec::with_capacity(r + n + 1));
    history_nodes(spec, prev, &mut s);
    let jumps = spec.impulse_nodes();
    let cable = spec.params.k != 0.0;
    for i in r..r + n {
        let t = (i - r) as f64 * h;
        let t1 = (i + 1 - r) as f64 * h;
        let u0 = u.value(t, Side::Right);
        let u1 = u.value(t1, Side::Left);
        let z = s.values[i].clone();
        let mut g0 = drift(spec, t, &z, &s.values[i - r], &u0);
        g0 += &u0;
        // everything at t + h except the cable term
        let mut g1_fixed = spec.forcing.eval(t1, spec.modes());
        if !matches!(spec.nonlinearity, Nonlinearity::Zero) {
            g1_fixed += &spec.nonlinearity.eval(s.node_left(i + 1 - r), &u1);
        }
        g1_fixed += &u1;
        let base = prop.advance(&z, &g0, &ModalCoeffs::zeros(spec.modes()));
        let b_step = |g1: &ModalCoeffs| {
            let mut out = base.clone();
            for (m, w) in prop.weights.iter().enumerate() {
                let pair = out.pair(m + 1);
                out.set_pair(m + 1, [pair[0] + w.b[0] * g1[m], pair[1] + w.b[1] * g1[m]]);
            }
            out
        };
        let mut next = if cable {
            let mut guess = prop.advance(&z, &g0, &g0);
            for _ in 0..25 {
                let mut g1 = g1_fixed.clone();
                g1.axpy(-spec.params.k, &positive_part_unchecked(&guess.w, &spec.grid));
                let cand = b_step(&g1);
                let change = norm_z(&(&cand - &guess));
                guess = cand;
                if change <= 1e-14 * (1.0 + norm_z(&guess)) {
                    break;
                }
            }
            guess
        } else {
            b_step(&g1_fixed)
        };
        if let Some(map) = jumps.get(&(i + 1)) {
            let left = next.clone();
            next += &map.apply(&left);
            s.values.push(next);
            s.mark(i + 1, left);
        } else {
            s.values.push(next);
        }
    }
    Trajectory(s)
}

fn check_control(spec: &ProblemSpec, u: &ControlSignal) -> Result<()> {
    if u.modes() != spec.modes() {
        return Err(Error::Shape(format!(
            "control has {} modes, model has {}",
            u.modes(),
            spec.modes()
        )));
    }
    if !u.covers(0.0, spec.params.horizon) {
        return Err(Error::Precondition(format!(
            "control must cover [0, {}], got [{}, {}]",
            spec.params.horizon,
            u.t0(),
            u.end()
        )));
    }
    Ok(())
}

/// Mild solution under control `u`.
pub fn integrate_mild(spec: &ProblemSpec, u: &ControlSignal) -> Result<Trajectory> {
    integrate_mild_logged(spec, u).map(|(t, _)| t)
}

/// [`integrate_mild`] that also returns the Picard successive differences.
pub fn integrate_mild_logged(spec: &ProblemSpec, u: &ControlSignal) -> Result<(Trajectory, Vec<f64>)> {
    integrate_with(spec, u, spec.picard)
}

pub(crate) fn integrate_with(
    spec: &ProblemSpec,
    u: &ControlSignal,
    picard: PicardOptions,
) -> Result<(Trajectory, Vec<f64>)> {
    spec.validate()?;
    check_control(spec, u)?;
    let prop = Propagator::new(&spec.params, spec.step());
    let mut traj = sweep(spec, u, &prop, None);
    let mut diffs = Vec::new();
    if spec.nonlocal.is_trivial() {
        return Ok((traj, diffs));
    }
    for it in 1..=picard.max_iter {
        let next = sweep(spec, u, &prop, Some(&traj));
        let diff = next.sup_diff(&traj)?;
        diffs.push(diff);
        traj = next;
        log::debug!("nonlocal Picard iteration {it}: sup diff {diff:.3e}");
        if !diff.is_finite() {
            break;
        }
        if diff <= picard.tol {
            return Ok((traj, diffs));
        }
    }
    let last = *diffs.last().unwrap_or(&f64::NAN);
    let ratio = match diffs.len() {
        0 | 1 => f64::NAN,
        n => diffs[n - 1] / diffs[n - 2],
    };
    Err(Error::NonConvergence {
        iterations: diffs.len(),
        last_diff: last,
        ratio,
    })
}

/// `max_s ‖z(s) + 𝔊(z_{τ₁}, …)(s) − ρ(s)‖` over the history nodes (both limits).
pub fn history_residual(traj: &Trajectory, spec: &ProblemSpec) -> f64 {
    let r = spec.delay_nodes();
    let lags = spec.lag_nodes();
    let modes = spec.modes();
    let mut worst: f64 = 0.0;
    for i in 0..=r {
        let s = traj.time(i);
        for side in [Side::Left, Side::Right] {
            let g = spec
                .nonlocal
                .combine(lags.iter().map(|l| traj.node_side(i + l, side).clone()), modes);
            let mut res = traj.node_side(i, side) + &g;
            res -= &spec.history.value(s, side, modes);
            worst = worst.max(norm_z(&res));
        }
    }
    worst
}

/// Recurrence of the integrator with every source evaluated on a given
/// trajectory `y` instead of the solution: history `ρ − 𝔊(y)`, sources
/// `u + p − k y⁺ + f(y(· − r))` and jumps `𝔍ₖ(y(t_k⁻))`. With `u = 0` its final
/// value is `S(T){ρ(0) − 𝔊(y)(0)} + ∫S(T−s)𝔉(s, y_s)ds + Σ S(T−t_k)𝔍ₖ`.
pub fn frozen_sweep(spec: &ProblemSpec, y: &Trajectory, u: &ControlSignal) -> Result<Trajectory> {
    spec.validate()?;
    check_control(spec, u)?;
    let r = spec.delay_nodes();
    if y.delay_nodes() != r || y.steps() != spec.steps || y.modes() != spec.modes() {
        return Err(Error::Shape("trajectory does not live on the problem's grid".into()));
    }
    let prop = Propagator::new(&spec.params, spec.step());
    let h = spec.step();
    let mut s = Samples::new(h, -(r as i64), Vec::with_capacity(y.len()));
    history_nodes(spec, (!spec.nonlocal.is_trivial()).then_some(y), &mut s);
    let jumps = spec.impulse_nodes();
    for i in r..r + spec.steps {
        let t = (i - r) as f64 * h;
        let t1 = t + h;
        let u0 = u.value(t, Side::Right);
        let u1 = u.value(t1, Side::Left);
        let mut g0 = drift(spec, t, y.node(i), y.node(i - r), &u0);
        g0 += &u0;
        let mut g1 = drift(spec, t1, y.node_left(i + 1), y.node_left(i + 1 - r), &u1);
        g1 += &u1;
        let mut next = prop.advance(&s.values[i], &g0, &g1);
        if let Some(map) = jumps.get(&(i + 1)) {
            let left = next.clone();
            next += &map.apply(y.node_left(i + 1));
            s.values.push(next);
            s.mark(i + 1, left);
        } else {
            s.values.push(next);
        }
    }
    Ok(Trajectory(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::apply_semigroup;
    use crate::spectral::project;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(modes: usize) -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0, modes, 1.0, 0.3).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, modes: usize, scale: f64) -> StateZ {
        let w = (1..=modes)
            .map(|n| scale * rng.gen_range(-1.0..1.0) / crate::spectral::eigenvalue_unchecked(n).sqrt())
            .collect();
        let y = (0..modes).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        StateZ::new(ModalCoeffs::new(w).unwrap(), ModalCoeffs::new(y).unwrap()).unwrap()
    }

    fn zero_control(spec: &ProblemSpec) -> ControlSignal {
        ControlSignal::zeros(0.0, spec.step(), spec.steps, spec.modes()).unwrap()
    }

    fn random_segment(rng: &mut ChaCha8Rng, modes: usize) -> Segment {
        let values = (0..=30).map(|_| random_state(rng, modes, 1.0)).collect();
        Segment::new(0.3, 0.01, values).unwrap()
    }

    #[test]
    fn cable_term_vanishes_for_nonpositive_deflection() {
        let mut spec = ProblemSpec::linear(params(4), 100).unwrap();
        spec.params.k = 3.0;
        let z = StateZ::mode(4, 1, -0.3, 0.7);
        let seg = Segment::constant(0.3, 0.01, &z).unwrap();
        let f = evaluate_f(0.2, &seg, None, &spec).unwrap();
        assert!(norm_z(&f) < 1e-12);
    }

    #[test]
    fn forcing_projection_matches_quadrature() {
        let mut spec = ProblemSpec::linear(params(4), 100).unwrap();
        spec.params.k = 0.5;
        spec.forcing = Forcing::Sine {
            mode: 1,
            amplitude: 1.0,
            omega: 0.0,
        };
        // a nonnegative deflection, so w⁺ = w
        let z = StateZ::mode(4, 1, 0.01, 0.0);
        let seg = Segment::constant(0.3, 0.01, &z).unwrap();
        let f = evaluate_f(0.0, &seg, None, &spec).unwrap();
        let fine = SpatialGrid::new(4095, 4).unwrap();
        let p = project(&fine.sample(|x| (PI * x).sin()), &fine, 4).unwrap();
        let wplus = fine.sample(|x| (0.01 * SQRT_2 * (PI * x).sin()).max(0.0));
        let wplus = project(&wplus, &fine, 4).unwrap();
        let expect = &p - &wplus.scaled(0.5);
        assert!((&f.y - &expect).norm() < 1e-8);
        assert!(f.w.norm() == 0.0);
    }

    #[test]
    fn growth_bound_holds_on_random_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut spec = ProblemSpec::linear(params(4), 100).unwrap();
        spec.params.k = 0.0;
        spec.nonlinearity = Nonlinearity::DelayedSaturating { a: 0.7 };
        spec.forcing = Forcing::Sine {
            mode: 2,
            amplitude: 0.3,
            omega: 2.0,
        };
        spec.constants = spec.catalog_constants();
        let c = spec.constants;
        for _ in 0..100 {
            let seg = random_segment(&mut rng, 4);
            let t = rng.gen_range(0.0..1.0);
            let f = evaluate_f(t, &seg, None, &spec).unwrap();
            let bound = c.alpha * c.envelope.eval(norm_z(seg.oldest())) + c.beta;
            assert!(norm_z(&f) <= bound + 1e-14);
        }
    }

    #[test]
    fn control_dependent_f_needs_a_control() {
        let mut spec = ProblemSpec::linear(params(2), 100).unwrap();
        spec.nonlinearity = Nonlinearity::ControlSaturating { a: 1.0 };
        let seg = Segment::constant(0.3, 0.01, &StateZ::zeros(2)).unwrap();
        assert!(evaluate_f(0.0, &seg, None, &spec).is_err());
        let u = ModalCoeffs::new(vec![100.0, -100.0]).unwrap();
        let f = evaluate_f(0.0, &seg, Some(&u), &spec).unwrap();
        assert!((f.y[0] - 1.0).abs() < 1e-12 && (f.y[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonlocal_identity_and_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seg = random_segment(&mut rng, 3);
        let id = Nonlocal {
            lags: vec![0.1],
            gamma_w: vec![1.0],
            gamma_y: vec![1.0],
        };
        assert_eq!(evaluate_nonlocal(std::slice::from_ref(&seg), &id).unwrap(), seg);
        let zero = Nonlocal {
            lags: vec![0.1],
            gamma_w: vec![0.0],
            gamma_y: vec![0.0],
        };
        assert_eq!(evaluate_nonlocal(&[seg], &zero).unwrap().sup_norm(), 0.0);
    }

    proptest! {
        #[test]
        fn nonlocal_is_lipschitz(seed in any::<u64>(), g in prop::array::uniform4(-1.0f64..1.0)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let nl = Nonlocal { lags: vec![0.1, 0.2], gamma_w: vec![g[0], g[1]], gamma_y: vec![g[2], g[3]] };
            let ys = [random_segment(&mut rng, 3), random_segment(&mut rng, 3)];
            let vs = [random_segment(&mut rng, 3), random_segment(&mut rng, 3)];
            let gy = evaluate_nonlocal(&ys, &nl).unwrap();
            let gv = evaluate_nonlocal(&vs, &nl).unwrap();
            for i in 0..gy.len() {
                let lhs = norm_z(&(gy.node(i) - gv.node(i)));
                let rhs: f64 = ys.iter().zip(&vs).map(|(a, b)| norm_z(&(a.node(i) - b.node(i)))).sum();
                prop_assert!(lhs <= nl.lipschitz() * rhs + 1e-14);
            }
        }
    }

    #[test]
    fn homogeneous_solution_is_the_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut spec = ProblemSpec::linear(params(4), 400).unwrap();
        spec.params.k = 0.0;
        let z0 = random_state(&mut rng, 4, 1.0);
        spec.history = History::Constant(z0.clone());
        let traj = integrate_mild(&spec, &zero_control(&spec)).unwrap();
        for i in (traj.origin()..traj.len()).step_by(37) {
            let exact = apply_semigroup(&z0, traj.time(i), &spec.params).unwrap();
            assert!(norm_z(&(traj.node(i) - &exact)) <= 1e-8);
        }
    }

    #[test]
    fn impulse_jump_is_bookkept() {
        let mut spec = ProblemSpec::linear(params(3), 200).unwrap();
        spec.history = History::Constant(StateZ::mode(3, 1, 0.01, 0.5));
        spec.impulses = vec![Impulse::new(
            0.5,
            ImpulseMap::LinearVelocity {
                gain: -0.4,
                offset: ModalCoeffs::unit(3, 2, 0.1),
            },
        )];
        let traj = integrate_mild(&spec, &zero_control(&spec)).unwrap();
        let (i, left) = traj.jumps().next().unwrap();
        assert!((traj.time(i) - 0.5).abs() < 1e-12);
        let jump = traj.node(i) - left;
        let expect = spec.impulses[0].map.apply(left);
        assert!(norm_z(&(&jump - &expect)) <= 1e-12);
        assert_eq!(traj.rows().len(), traj.len() + 1);
    }

    #[test]
    fn off_grid_impulse_is_rejected() {
        let mut spec = ProblemSpec::linear(params(2), 200).unwrap();
        spec.impulses = vec![Impulse::new(0.5012, ImpulseMap::SaturatingVelocity { gain: 0.1 })];
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        spec.impulses.clear();
        spec.nonlocal = Nonlocal {
            lags: vec![0.3],
            gamma_w: vec![0.1],
            gamma_y: vec![0.1],
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
    }

    fn nonlocal_spec() -> ProblemSpec {
        let mut spec = ProblemSpec::linear(params(4), 400).unwrap();
        spec.nonlocal = Nonlocal {
            lags: vec![0.1, 0.2],
            gamma_w: vec![0.1, -0.05],
            gamma_y: vec![-0.1, 0.08],
        };
        spec.nonlinearity = Nonlinearity::DelayedSaturating { a: 0.5 };
        spec.constants = spec.catalog_constants();
        spec.history = History::Constant(StateZ::mode(4, 1, 0.02, 0.3));
        spec.impulses = vec![Impulse::new(0.15, ImpulseMap::SaturatingVelocity { gain: 0.2 })];
        spec
    }

    #[test]
    fn picard_converges_and_history_is_consistent() {
        let spec = nonlocal_spec();
        let (traj, diffs) = integrate_mild_logged(&spec, &zero_control(&spec)).unwrap();
        assert!(history_residual(&traj, &spec) <= spec.picard.tol);
        let lq = spec.nonlocal.lipschitz() * spec.nonlocal.q() as f64;
        for w in diffs.windows(2).skip(1) {
            if w[0] > 1e-13 {
                assert!(w[1] / w[0] <= lq + 0.05, "{diffs:?}");
            }
        }
        // the impulse at 0.15 shows up at s = 0.15 − τ₂ in the history through 𝔊
        assert!(traj.jumps().count() >= 2);
    }

    #[test]
    fn picard_reports_nonconvergence() {
        let mut spec = nonlocal_spec();
        spec.picard.max_iter = 2;
        spec.picard.tol = 1e-30;
        assert!(matches!(
            integrate_mild(&spec, &zero_control(&spec)),
            Err(Error::NonConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn causality() {
        let spec = {
            let mut s = nonlocal_spec();
            s.nonlocal = Nonlocal::none();
            s
        };
        let u = zero_control(&spec);
        let cut = 240;
        let mut values: Vec<ModalCoeffs> = (0..=spec.steps).map(|_| ModalCoeffs::zeros(4)).collect();
        for v in values.iter_mut().skip(cut + 1) {
            *v = ModalCoeffs::unit(4, 2, 5.0);
        }
        let v = ControlSignal::new(0.0, spec.step(), values).unwrap();
        let a = integrate_mild(&spec, &u).unwrap();
        let b = integrate_mild(&spec, &v).unwrap();
        let last = a.origin() + cut;
        for i in 0..=last {
            assert_eq!(a.node(i), b.node(i));
            assert_eq!(a.node_left(i), b.node_left(i));
        }
        assert_ne!(a.node(last + 2), b.node(last + 2));
    }

    #[test]
    fn segment_windows() {
        let spec = nonlocal_spec();
        let traj = integrate_mild(&spec, &zero_control(&spec)).unwrap();
        let s0 = segment_at(&traj, 0.0).unwrap();
        assert_eq!(s0.len(), traj.delay_nodes() + 1);
        assert_eq!(s0.newest(), traj.node(traj.origin()));
        // window over the impulse at 0.15
        let s = segment_at(&traj, 0.3).unwrap();
        let (i, left) = s.jumps().find(|(i, _)| (s.time(*i) + 0.15).abs() < 1e-12).unwrap();
        let ti = traj.index_of(0.15).unwrap();
        let d_seg = s.node(i) - left;
        let d_traj = traj.node(ti) - traj.node_left(ti);
        assert!(norm_z(&(&d_seg - &d_traj)) <= 1e-12);
        assert!(segment_at(&traj, 1.5).is_err());
        assert!(segment_at(&traj, -0.1).is_err());
        let off = segment_at(&traj, 0.3001).unwrap();
        assert_eq!(off.len(), s.len());

        let c = Trajectory::from_fn(30, 100, 0.01, |_| StateZ::mode(2, 1, 1.0, 2.0)).unwrap();
        let seg = segment_at(&c, 0.55).unwrap();
        assert!(seg.values.iter().all(|v| v == &StateZ::mode(2, 1, 1.0, 2.0)));
    }

    #[test]
    fn frozen_sweep_reproduces_the_solution_at_its_fixed_point() {
        let spec = nonlocal_spec();
        let u = ControlSignal::from_fn(0.0, spec.step(), spec.steps, |t| ModalCoeffs::unit(4, 1, t.sin())).unwrap();
        let mut tight = spec.clone();
        tight.picard.tol = 1e-14;
        let traj = integrate_mild(&tight, &u).unwrap();
        let again = frozen_sweep(&spec, &traj, &u).unwrap();
        assert!(again.sup_diff(&traj).unwrap() < 1e-12);
    }
}
