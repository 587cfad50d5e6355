//! Controllability of the linear system `z' = 𝔄z + 𝔅u`, `𝔅 = (0, I)`.
//!
//! Everything is block diagonal over modes. For mode `n` the input vector is
//! `b = e₂` and its weighted adjoint reads `b*(a, β) = β`, so
//!
//! ```text
//! Wₙ = ∫_{t₀}^{T} E(T−s) b b* E*(T−s) ds = Pₙ D,   Pₙ = ∫ (E e₂)(E e₂)ᵀ,
//! ```
//!
//! with `E = e^{Aₙ·}` and `D = diag(λₙ, 1)`. The Gramians are computed by
//! composite Simpson quadrature and drive the condition checks and the
//! `‖Γ‖` estimate.
//!
//! Controls are piecewise linear on a uniform grid and are convolved with
//! the group exactly (product integration, see [`StepWeights`]). The
//! steering operator is the minimum-norm right inverse of that discrete
//! controllability map, `Γ = 𝒢*(𝒢𝒢*)⁻¹` taken in the trapezoid inner
//! product on the control nodes. Its nodal values converge to
//! `b*E*(T−t)Wₙ⁻¹ξ` at second order in the control step, and `𝒢Γ = I`
//! holds to rounding for every step.

use rayon::prelude::*;

use crate::control::ControlSignal;
use crate::error::{Error, Result};
use crate::semigroup::{
    apply_semigroup_unchecked, mode_exp, mode_matrix_unchecked, Mode2x2, ModelParams, NormBound, Propagator,
    StepWeights,
};
use crate::spectral::{ModalCoeffs, StateZ};

/// Gramians with a weighted condition number above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Per-mode Simpson steps resolve the block's oscillation to `h·|μ| ≤ 0.01`.
const AUTO_STEP_RESOLUTION: f64 = 0.01;

fn check_interval(t0: f64, horizon: f64) -> Result<()> {
    if !(t0 >= 0.0 && horizon > t0 && horizon.is_finite()) {
        return Err(Error::Precondition(format!(
            "steering interval must satisfy 0 <= t0 < T, got t0 = {t0}, T = {horizon}"
        )));
    }
    Ok(())
}

/// Default Simpson step for mode `n` on `[t0, T]`.
pub fn auto_quadrature_step(n: usize, t0: f64, horizon: f64, p: &ModelParams) -> f64 {
    let rate = (p.d * p.lambda(n)).sqrt() + p.c;
    ((horizon - t0) / 16.0).min(AUTO_STEP_RESOLUTION / rate)
}

/// `Wₙ = ∫_{t₀}^{T} E(T−s) b b* E*(T−s) ds` by composite Simpson with step at most `h`.
pub fn mode_gramian(n: i64, t0: f64, horizon: f64, p: &ModelParams, h: f64) -> Result<Mode2x2> {
    if n < 1 {
        return Err(Error::Domain(format!("mode index must be >= 1, got {n}")));
    }
    check_interval(t0, horizon)?;
    p.validate()?;
    let span = horizon - t0;
    if !(h > 0.0 && h <= span / 16.0 * (1.0 + 1e-12)) {
        return Err(Error::Precondition(format!(
            "Gramian quadrature step must satisfy 0 < h <= (T - t0)/16 = {}, got {h}",
            span / 16.0
        )));
    }
    Ok(simpson_gramian(n as usize, span, p, h))
}

fn simpson_gramian(n: usize, span: f64, p: &ModelParams, h: f64) -> Mode2x2 {
    let mut intervals = (span / h - 1e-9).ceil().max(2.0) as usize;
    if intervals % 2 == 1 {
        intervals += 1;
    }
    let dt = span / intervals as f64;
    let a = mode_matrix_unchecked(n, p);
    let step = crate::semigroup::expm2(&a, dt);
    // v(σ) = E(σ)e₂, advanced by the one-step exponential
    let mut v = [0.0, 1.0];
    let mut acc = [0.0f64; 3]; // (v0², v0v1, v1²)
    for i in 0..=intervals {
        if i > 0 {
            v = if i % 64 == 0 {
                // resynchronise to keep the recurrence from drifting
                let e = mode_exp(n, i as f64 * dt, p);
                [e.get(0, 1), e.get(1, 1)]
            } else {
                step.apply(v)
            };
        }
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc[0] += w * v[0] * v[0];
        acc[1] += w * v[0] * v[1];
        acc[2] += w * v[1] * v[1];
    }
    let f = dt / 3.0;
    let lam = p.lambda(n);
    // W = P D
    Mode2x2::new(acc[0] * f * lam, acc[1] * f, acc[1] * f * lam, acc[2] * f)
}

/// Condition number of a `D`-self-adjoint positive block in the weighted norm.
fn weighted_condition(m: &Mode2x2, lambda: f64) -> f64 {
    let wt = m.to_weighted(lambda);
    let smax = wt.spectral_norm();
    let smin = wt.det().abs() / smax;
    if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeGramian {
    pub mode: usize,
    pub gramian: Mode2x2,
    pub inverse: Mode2x2,
    /// Condition number in the weighted norm.
    pub cond: f64,
    pub quadrature_step: f64,
}

/// Grid settings for [`GramianSet::build`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramianOptions {
    /// Simpson step; `None` picks [`auto_quadrature_step`] per mode.
    pub quadrature_step: Option<f64>,
    /// Number of control intervals on `[t0, T]`.
    pub control_intervals: usize,
}

impl GramianOptions {
    pub fn with_intervals(control_intervals: usize) -> Self {
        Self {
            quadrature_step: None,
            control_intervals,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DiscreteMode {
    /// Contribution of the control value at node `j` to `z(T)`.
    kernel: Vec<[f64; 2]>,
    gram_inverse: Mode2x2,
    cond: f64,
}

/// Gramians of every retained mode on `[t0, T]` plus the discrete steering
/// data for one control grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianSet {
    pub t0: f64,
    pub horizon: f64,
    pub modes: Vec<ModeGramian>,
    control_step: f64,
    discrete: Vec<DiscreteMode>,
}

impl GramianSet {
    pub fn build(p: &ModelParams, t0: f64, horizon: f64, opts: GramianOptions) -> Result<Self> {
        check_interval(t0, horizon)?;
        p.validate()?;
        if opts.control_intervals == 0 {
            return Err(Error::Precondition("control grid needs at least one interval".into()));
        }
        let span = horizon - t0;
        let built: Vec<Result<(ModeGramian, DiscreteMode)>> = (1..=p.modes)
            .into_par_iter()
            .map(|n| {
                let h = match opts.quadrature_step {
                    Some(h) => h.min(span / 16.0),
                    None => auto_quadrature_step(n, t0, horizon, p),
                };
                let gramian = mode_gramian(n as i64, t0, horizon, p, h)?;
                let lam = p.lambda(n);
                let cond = weighted_condition(&gramian, lam);
                let inverse = gramian.inverse().unwrap_or(Mode2x2::new(
                    f64::INFINITY,
                    f64::INFINITY,
                    f64::INFINITY,
                    f64::INFINITY,
                ));
                let discrete = discrete_mode(n, span, opts.control_intervals, p);
                Ok((
                    ModeGramian {
                        mode: n,
                        gramian,
                        inverse,
                        cond,
                        quadrature_step: h,
                    },
                    discrete,
                ))
            })
            .collect();
        let mut modes = Vec::with_capacity(p.modes);
        let mut discrete = Vec::with_capacity(p.modes);
        for b in built {
            let (m, d) = b?;
            modes.push(m);
            discrete.push(d);
        }
        Ok(Self {
            t0,
            horizon,
            modes,
            control_step: span / opts.control_intervals as f64,
            discrete,
        })
    }

    pub fn control_step(&self) -> f64 {
        self.control_step
    }

    pub fn control_intervals(&self) -> usize {
        self.discrete[0].kernel.len() - 1
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// Fails with the first mode whose Gramian exceeds [`MAX_CONDITION`].
    pub fn check_conditioning(&self) -> Result<()> {
        for (m, d) in self.modes.iter().zip(&self.discrete) {
            let cond = m.cond.max(d.cond);
            if !(cond <= MAX_CONDITION) {
                return Err(Error::IllConditioned { mode: m.mode, cond });
            }
        }
        Ok(())
    }

    /// Largest deviation of `Wₙ` from the control-grid Gramian realised by
    /// the discrete convolution, relative to `‖Wₙ‖`, both in the weighted norm.
    pub fn discretization_defect(&self, p: &ModelParams) -> f64 {
        self.modes
            .iter()
            .zip(&self.discrete)
            .map(|(m, d)| {
                let lam = p.lambda(m.mode);
                let g = d.gram_inverse.inverse().unwrap_or(Mode2x2::ZERO);
                // G is the raw P-type Gramian; W = G D
                let gd = g * Mode2x2::new(lam, 0.0, 0.0, 1.0);
                (gd - m.gramian).weighted_norm(lam) / m.gramian.weighted_norm(lam)
            })
            .fold(0.0, f64::max)
    }
}

fn discrete_mode(n: usize, span: f64, intervals: usize, p: &ModelParams) -> DiscreteMode {
    let h = span / intervals as f64;
    let sw = StepWeights::new(&mode_matrix_unchecked(n, p), h);
    // ea[m] = E^m a, eb[m] = E^m b
    let mut ea = Vec::with_capacity(intervals + 1);
    let mut eb = Vec::with_capacity(intervals + 1);
    let (mut va, mut vb) = (sw.a, sw.b);
    for _ in 0..=intervals {
        ea.push(va);
        eb.push(vb);
        va = sw.exp.apply(va);
        vb = sw.exp.apply(vb);
    }
    let kernel: Vec<[f64; 2]> = (0..=intervals)
        .map(|j| {
            let mut k = [0.0, 0.0];
            if j < intervals {
                let v = ea[intervals - 1 - j];
                k[0] += v[0];
                k[1] += v[1];
            }
            if j >= 1 {
                let v = eb[intervals - j];
                k[0] += v[0];
                k[1] += v[1];
            }
            k
        })
        .collect();
    let mut g = [0.0f64; 3];
    for (j, k) in kernel.iter().enumerate() {
        let inv_w = 1.0 / trapezoid_weight(j, intervals, h);
        g[0] += k[0] * k[0] * inv_w;
        g[1] += k[0] * k[1] * inv_w;
        g[2] += k[1] * k[1] * inv_w;
    }
    let gram = Mode2x2::new(g[0], g[1], g[1], g[2]);
    let lam = p.lambda(n);
    let cond = weighted_condition(&(gram * Mode2x2::new(lam, 0.0, 0.0, 1.0)), lam);
    let gram_inverse =
        gram.inverse()
            .unwrap_or(Mode2x2::new(f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY));
    DiscreteMode {
        kernel,
        gram_inverse,
        cond,
    }
}

#[inline]
fn trapezoid_weight(j: usize, intervals: usize, h: f64) -> f64 {
    if j == 0 || j == intervals {
        0.5 * h
    } else {
        h
    }
}

/// Final state of `z' = 𝔄z + 𝔅u` from `z0` at `u.t0()` to `u.end()`.
pub fn linear_response(z0: &StateZ, u: &ControlSignal, p: &ModelParams) -> Result<StateZ> {
    Ok(linear_trajectory(z0, u, p)?.pop().expect("at least two nodes"))
}

/// Node values of the linear response, one per control node (right limits).
pub fn linear_trajectory(z0: &StateZ, u: &ControlSignal, p: &ModelParams) -> Result<Vec<StateZ>> {
    if z0.modes() != p.modes || u.modes() != p.modes {
        return Err(Error::Shape(format!(
            "model has {} modes, state {}, control {}",
            p.modes,
            z0.modes(),
            u.modes()
        )));
    }
    let prop = Propagator::new(p, u.step());
    let mut out = Vec::with_capacity(u.intervals() + 1);
    let mut z = z0.clone();
    out.push(z.clone());
    for i in 0..u.intervals() {
        z = prop.advance(&z, u.node(i), u.node_left(i + 1));
        out.push(z.clone());
    }
    Ok(out)
}

/// `𝒢u = ∫ S(T−s)𝔅u(s) ds` over the control's own interval.
pub fn controllability_map(u: &ControlSignal, p: &ModelParams) -> Result<StateZ> {
    linear_response(&StateZ::zeros(p.modes), u, p)
}

/// `Γξ`: the minimum-energy control on the set's control grid with `𝒢Γξ = ξ`.
pub fn gamma(xi: &StateZ, gs: &GramianSet, p: &ModelParams) -> Result<ControlSignal> {
    if xi.modes() != p.modes || gs.mode_count() != p.modes {
        return Err(Error::Shape(format!(
            "model has {} modes, target {}, Gramian set {}",
            p.modes,
            xi.modes(),
            gs.mode_count()
        )));
    }
    gs.check_conditioning()?;
    let intervals = gs.control_intervals();
    let h = gs.control_step;
    let mut values = vec![ModalCoeffs::zeros(p.modes); intervals + 1];
    for (i, d) in gs.discrete.iter().enumerate() {
        let eta = d.gram_inverse.apply(xi.pair(i + 1));
        for (j, k) in d.kernel.iter().enumerate() {
            values[j][i] = (k[0] * eta[0] + k[1] * eta[1]) / trapezoid_weight(j, intervals, h);
        }
    }
    ControlSignal::new(gs.t0, h, values)
}

/// The continuous-time formula `b*E*(T−t)Wₙ⁻¹ξₙ` evaluated at `t`.
pub fn gamma_pointwise(xi: &StateZ, gs: &GramianSet, p: &ModelParams, t: f64) -> ModalCoeffs {
    let mut out = ModalCoeffs::zeros(p.modes);
    for m in &gs.modes {
        let row = adjoint_row(m, gs.horizon - t, p);
        let x = xi.pair(m.mode);
        out[m.mode - 1] = row[0] * x[0] + row[1] * x[1];
    }
    out
}

// Row vector e₂ᵀ E*(τ) Wₙ⁻¹ acting on raw coefficient pairs.
fn adjoint_row(m: &ModeGramian, tau: f64, p: &ModelParams) -> [f64; 2] {
    let lam = p.lambda(m.mode);
    let adj = mode_exp(m.mode, tau, p).weighted_adjoint(lam) * m.inverse;
    [adj.get(1, 0), adj.get(1, 1)]
}

/// Grid estimate of `‖Γ‖ = sup_s ‖𝔅*S*(T−s)𝔚⁻¹‖` using the Simpson Gramians.
/// At each time the norm is the largest dual norm of the per-mode rows.
pub fn gamma_norm(gs: &GramianSet, p: &ModelParams, intervals: usize) -> Result<NormBound> {
    if intervals == 0 {
        return Err(Error::Precondition("time grid needs at least one interval".into()));
    }
    let step = (gs.horizon - gs.t0) / intervals as f64;
    let value = (0..=intervals)
        .map(|i| {
            let tau = gs.horizon - (gs.t0 + i as f64 * step);
            gs.modes
                .iter()
                .map(|m| {
                    let r = adjoint_row(m, tau, p);
                    (r[0] * r[0] / p.lambda(m.mode) + r[1] * r[1]).sqrt()
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Ok(NormBound { value, step })
}

/// Control steering `z' = 𝔄z + 𝔅u` from `z0` at `t0` to `zstar` at `T`:
/// `Γ(z* − S(T − t0)z0)`.
pub fn steering_control(
    z0: &StateZ,
    zstar: &StateZ,
    t0: f64,
    horizon: f64,
    p: &ModelParams,
    opts: GramianOptions,
) -> Result<ControlSignal> {
    let gs = GramianSet::build(p, t0, horizon, opts)?;
    steer_with(z0, zstar, &gs, p)
}

/// [`steering_control`] with prebuilt Gramians.
pub fn steer_with(z0: &StateZ, zstar: &StateZ, gs: &GramianSet, p: &ModelParams) -> Result<ControlSignal> {
    if z0.modes() != p.modes || zstar.modes() != p.modes {
        return Err(Error::Shape("initial and target states must have N modes".into()));
    }
    let free = apply_semigroup_unchecked(z0, gs.horizon - gs.t0, p);
    gamma(&(zstar - &free), gs, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::norm_z;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(modes: usize) -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0, modes, 1.0, 0.3).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, modes: usize) -> StateZ {
        let w = (1..=modes)
            .map(|n| rng.gen_range(-1.0..1.0) / crate::spectral::eigenvalue_unchecked(n).sqrt())
            .collect();
        let y = (0..modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
        StateZ::new(ModalCoeffs::new(w).unwrap(), ModalCoeffs::new(y).unwrap()).unwrap()
    }

    /// RK4 on the truncated linear ODE with a piecewise-linear control,
    /// `sub` substeps per control interval.
    fn rk4_linear(z0: &StateZ, u: &ControlSignal, p: &ModelParams, sub: usize) -> StateZ {
        let mut z = z0.clone();
        for n in 1..=p.modes {
            let lam = p.lambda(n);
            let mut x = z0.pair(n);
            for i in 0..u.intervals() {
                let (u0, u1) = (u.node(i)[n - 1], u.node_left(i + 1)[n - 1]);
                let dt = u.step() / sub as f64;
                let f = |s: f64, x: [f64; 2]| {
                    let g = u0 + (u1 - u0) * s / u.step();
                    [x[1], -p.d * lam * x[0] - p.c * x[1] + g]
                };
                for k in 0..sub {
                    let s = k as f64 * dt;
                    let k1 = f(s, x);
                    let k2 = f(s + dt / 2.0, [x[0] + dt / 2.0 * k1[0], x[1] + dt / 2.0 * k1[1]]);
                    let k3 = f(s + dt / 2.0, [x[0] + dt / 2.0 * k2[0], x[1] + dt / 2.0 * k2[1]]);
                    let k4 = f(s + dt, [x[0] + dt * k3[0], x[1] + dt * k3[1]]);
                    for c in 0..2 {
                        x[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
                    }
                }
            }
            z.set_pair(n, x);
        }
        z
    }

    #[test]
    fn gramian_vanishes_on_short_interval() {
        let p = params(4);
        for n in 1..=4 {
            let w = mode_gramian(n, 1.0 - 1e-6, 1.0, &p, 1e-6 / 16.0).unwrap();
            assert!(w.max_abs() <= 1e-5, "{w:?}");
        }
        assert!(matches!(
            mode_gramian(1, 1.0, 1.0, &p, 1e-3),
            Err(Error::Precondition(_))
        ));
        assert!(mode_gramian(1, 0.0, 1.0, &p, 0.1).is_err());
    }

    #[test]
    fn gramian_quadrature_refinement() {
        let p = params(1);
        let lam = p.lambda(1);
        let coarse = mode_gramian(1, 0.0, 1.0, &p, 1e-3).unwrap().to_weighted(lam);
        let fine = mode_gramian(1, 0.0, 1.0, &p, 1e-4).unwrap().to_weighted(lam);
        assert!((coarse - fine).max_abs() < 1e-8);
    }

    #[test]
    fn lyapunov_residual() {
        let p = params(3);
        let horizon = 1.0;
        for n in 1..=3usize {
            let lam = p.lambda(n);
            let dt = 0.02 / ((p.d * lam).sqrt() + p.c);
            let w = |tau: f64| {
                let h = auto_quadrature_step(n, horizon - tau, horizon, &p).min(1e-4);
                mode_gramian(n as i64, horizon - tau, horizon, &p, h).unwrap()
            };
            let a = mode_matrix_unchecked(n, &p);
            let a_adj = a.weighted_adjoint(lam);
            let bb = Mode2x2::new(0.0, 0.0, 0.0, 1.0);
            for k in 1..=4 {
                let tau = 0.2 * k as f64;
                let deriv = (w(tau - 2.0 * dt) - w(tau - dt).scale(8.0) + w(tau + dt).scale(8.0) - w(tau + 2.0 * dt))
                    .scale(1.0 / (12.0 * dt));
                let wt = w(tau);
                let res = deriv - (a * wt + wt * a_adj + bb);
                let scale = (a * wt).weighted_norm(lam) + 1.0;
                assert!(
                    res.weighted_norm(lam) <= 1e-6 * scale,
                    "n = {n}, tau = {tau}, residual {}",
                    res.weighted_norm(lam)
                );
            }
        }
    }

    #[test]
    fn kalman_rank_structure() {
        let p = params(8);
        for n in 1..=8 {
            let a = mode_matrix_unchecked(n, &p);
            let ab = a.apply([0.0, 1.0]);
            let k = Mode2x2::new(0.0, ab[0], 1.0, ab[1]);
            assert_eq!(k, Mode2x2::new(0.0, 1.0, 1.0, -p.c));
            assert_eq!(k.det(), -1.0);
        }
    }

    #[test]
    fn gramian_set_invariants() {
        let p = params(8);
        let gs = GramianSet::build(&p, 0.0, 1.0, GramianOptions::with_intervals(2000)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in &gs.modes {
            let lam = p.lambda(m.mode);
            let dw = Mode2x2::new(lam, 0.0, 0.0, 1.0) * m.gramian;
            assert!((dw.get(0, 1) - dw.get(1, 0)).abs() <= 1e-12 * dw.max_abs());
            for _ in 0..100 {
                let z = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let dz = dw.apply(z);
                assert!(z[0] * dz[0] + z[1] * dz[1] > 0.0);
            }
            let id = m.gramian * m.inverse;
            assert!((id - Mode2x2::IDENTITY).max_abs() < 1e-10);
            assert!(m.cond < MAX_CONDITION);
        }
        gs.check_conditioning().unwrap();
        // the control-grid Gramian approaches Simpson's at second order
        let fine = GramianSet::build(&p, 0.0, 1.0, GramianOptions::with_intervals(4000)).unwrap();
        let (d1, d2) = (gs.discretization_defect(&p), fine.discretization_defect(&p));
        assert!(d1 < 5e-2 && d1 / d2 > 3.5, "{d1} {d2}");
    }

    #[test]
    fn map_of_zero_and_linearity() {
        let p = params(4);
        let u0 = ControlSignal::zeros(0.0, 1e-3, 1000, 4).unwrap();
        assert_eq!(norm_z(&controllability_map(&u0, &p).unwrap()), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rand_u = || {
            let phase: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..6.0)).collect();
            ControlSignal::from_fn(0.0, 1e-3, 1000, |t| {
                ModalCoeffs::new(phase.iter().map(|ph| (7.0 * t + ph).sin()).collect()).unwrap()
            })
            .unwrap()
        };
        let (u, v) = (rand_u(), rand_u());
        let alpha = -1.7;
        let lhs = controllability_map(&u.scaled(alpha).axpy(1.0, &v).unwrap(), &p).unwrap();
        let mut rhs = controllability_map(&u, &p).unwrap().scaled(alpha);
        rhs.axpy(1.0, &controllability_map(&v, &p).unwrap());
        assert!(norm_z(&(&lhs - &rhs)) <= 1e-10 * (1.0 + norm_z(&rhs)));
    }

    #[test]
    fn map_matches_rk4_for_constant_input() {
        let p = params(1);
        let u = ControlSignal::from_fn(0.0, 1e-2, 100, |_| ModalCoeffs::unit(1, 1, 1.0)).unwrap();
        let got = controllability_map(&u, &p).unwrap();
        let oracle = rk4_linear(&StateZ::zeros(1), &u, &p, 100);
        assert!(norm_z(&(&got - &oracle)) < 1e-6);
    }

    #[test]
    fn gamma_basics() {
        let p = params(8);
        let gs = GramianSet::build(&p, 0.0, 1.0, GramianOptions::with_intervals(1000)).unwrap();
        let zero = gamma(&StateZ::zeros(8), &gs, &p).unwrap();
        assert_eq!(zero.sup_norm(), 0.0);

        let xi = StateZ::mode(8, 1, 1.0, 0.0);
        let u = gamma(&xi, &gs, &p).unwrap();
        let reached = controllability_map(&u, &p).unwrap();
        assert!(norm_z(&(&reached - &xi)) <= 1e-6 * norm_z(&xi));
        // independent check of the discrete convolution
        let rk = rk4_linear(&StateZ::zeros(8), &u, &p, 20);
        assert!(norm_z(&(&rk - &xi)) <= 1e-6 * norm_z(&xi));
    }

    #[test]
    fn gamma_nodes_follow_continuous_formula() {
        let p = params(2);
        let gs = GramianSet::build(&p, 0.0, 1.0, GramianOptions::with_intervals(4000)).unwrap();
        let xi = StateZ::mode(2, 2, 0.01, 0.5);
        let u = gamma(&xi, &gs, &p).unwrap();
        let scale = u.sup_norm();
        for j in (1..4000).step_by(97) {
            let t = u.time(j);
            let cont = gamma_pointwise(&xi, &gs, &p, t);
            assert!((&cont - u.node(j)).norm() < 1e-3 * scale);
        }
    }

    #[test]
    fn gamma_norm_refinement() {
        let p = params(8);
        let gs = GramianSet::build(&p, 0.0, 1.0, GramianOptions::with_intervals(100)).unwrap();
        let coarse = gamma_norm(&gs, &p, 2000).unwrap();
        let fine = gamma_norm(&gs, &p, 20_000).unwrap();
        assert!((coarse.value - fine.value).abs() < 1e-3 * fine.value);
        assert!(coarse.value > 0.0);
    }

    #[test]
    fn ill_conditioning_is_reported_by_mode() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 3, 1.0, 0.3).unwrap();
        let mut gs = GramianSet::build(&p, 0.0, 1.0, GramianOptions::with_intervals(10)).unwrap();
        gs.modes[1].cond = 1e13;
        assert_eq!(
            gamma(&StateZ::zeros(3), &gs, &p),
            Err(Error::IllConditioned { mode: 2, cond: 1e13 })
        );
    }

    #[test]
    fn steering_examples() {
        let p = params(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z0 = random_state(&mut rng, 4);
        let opts = GramianOptions::with_intervals(1000);
        let free = apply_semigroup_unchecked(&z0, 1.0, &p);
        let u = steering_control(&z0, &free, 0.0, 1.0, &p, opts).unwrap();
        assert!(u.sup_norm() < 1e-10);

        let p1 = params(1);
        let target = StateZ::mode(1, 1, 1.0, 0.0);
        let u = steering_control(&StateZ::zeros(1), &target, 0.0, 1.0, &p1, opts).unwrap();
        let reached = rk4_linear(&StateZ::zeros(1), &u, &p1, 50);
        assert!(norm_z(&(&reached - &target)) <= 1e-6 * norm_z(&target));

        let u2 = steering_control(&StateZ::zeros(1), &target.scaled(2.0), 0.0, 1.0, &p1, opts).unwrap();
        let diff = u2.axpy(-2.0, &u).unwrap();
        assert!(diff.sup_norm() <= 1e-12 * u2.sup_norm());
    }

    #[test]
    fn steering_on_subinterval() {
        let p = params(3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let z0 = random_state(&mut rng, 3);
        let zstar = random_state(&mut rng, 3);
        let u = steering_control(&z0, &zstar, 0.6, 1.0, &p, GramianOptions::with_intervals(800)).unwrap();
        assert!((u.t0() - 0.6).abs() < 1e-15);
        let reached = linear_response(&z0, &u, &p).unwrap();
        assert!(norm_z(&(&reached - &zstar)) <= 1e-9 * norm_z(&zstar));
    }

    #[test]
    fn minimum_energy() {
        let p = params(4);
        let gs = GramianSet::build(&p, 0.0, 1.0, GramianOptions::with_intervals(400)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..4 {
            let xi = random_state(&mut rng, 4);
            let u = gamma(&xi, &gs, &p).unwrap();
            for _ in 0..5 {
                let scale: f64 = rng.gen_range(0.01..2.0);
                let v = ControlSignal::from_fn(0.0, gs.control_step(), 400, |_| {
                    ModalCoeffs::new((0..4).map(|_| 0.0).collect()).unwrap()
                })
                .unwrap();
                let noise: Vec<ModalCoeffs> = (0..=400)
                    .map(|_| ModalCoeffs::new((0..4).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap())
                    .collect();
                let v = ControlSignal::new(v.t0(), v.step(), noise).unwrap();
                // project onto the kernel of 𝒢
                let kernel = v
                    .axpy(-1.0, &gamma(&controllability_map(&v, &p).unwrap(), &gs, &p).unwrap())
                    .unwrap();
                assert!(norm_z(&controllability_map(&kernel, &p).unwrap()) < 1e-8);
                let alt = u.axpy(1.0, &kernel).unwrap();
                assert!(u.l2_norm() <= alt.l2_norm() + 1e-6);
            }
        }
    }
}
