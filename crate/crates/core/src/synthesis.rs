//! Approximate controllability by pull-back controls and exact
//! controllability by the fixed-point operator `κ`.

use rayon::prelude::*;

use crate::control::{ControlSignal, Side};
use crate::controllability::{gamma, gamma_norm, steer_with, GramianOptions, GramianSet};
use crate::dynamics::{drift, frozen_sweep, integrate_with, PicardOptions, ProblemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::semigroup::{operator_norm_bound, semigroup_norm};
use crate::spectral::{norm_z, StateZ};

/// Grids behind the estimates of `M` and `‖Γ‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionOptions {
    /// Time intervals on `[0, T]` for both suprema.
    pub norm_intervals: usize,
    /// Simpson step for the Gramians; `None` resolves each mode.
    pub quadrature_step: Option<f64>,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        Self {
            norm_intervals: 2000,
            quadrature_step: None,
        }
    }
}

/// Constants of the contraction condition
/// `M·L_q·q + M·T·‖𝔅‖·‖Γ‖·𝒞 + M·T·l + M·N < 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub m: f64,
    pub m_step: f64,
    pub b_norm: f64,
    pub gamma_norm: f64,
    pub gamma_step: f64,
    /// `l_f + k/π²`.
    pub l: f64,
    pub lq: f64,
    pub q: usize,
    /// `Σₖ dₖ`.
    pub n_imp: f64,
    pub horizon: f64,
    /// `𝒞 = M·L_q·q + M·T·l + M·N`.
    pub cal_c: f64,
    pub lhs: f64,
    pub satisfied: bool,
}

impl ContractionReport {
    pub fn assemble(m: f64, gamma_norm: f64, l: f64, lq: f64, q: usize, n_imp: f64, horizon: f64) -> Self {
        let b_norm = 1.0;
        let cal_c = m * lq * q as f64 + m * horizon * l + m * n_imp;
        let lhs = m * lq * q as f64 + m * horizon * b_norm * gamma_norm * cal_c + m * horizon * l + m * n_imp;
        Self {
            m,
            m_step: 0.0,
            b_norm,
            gamma_norm,
            gamma_step: 0.0,
            l,
            lq,
            q,
            n_imp,
            horizon,
            cal_c,
            lhs,
            satisfied: lhs < 1.0,
        }
    }

    /// Structured-text rendering, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let rows: [(&str, String); 13] = [
            ("M", format!("{:.16e}", self.m)),
            ("M_grid_step", format!("{:.16e}", self.m_step)),
            ("B_norm", format!("{:.16e}", self.b_norm)),
            ("Gamma_norm", format!("{:.16e}", self.gamma_norm)),
            ("Gamma_grid_step", format!("{:.16e}", self.gamma_step)),
            ("l", format!("{:.16e}", self.l)),
            ("L_q", format!("{:.16e}", self.lq)),
            ("q", self.q.to_string()),
            ("N_imp", format!("{:.16e}", self.n_imp)),
            ("T", format!("{:.16e}", self.horizon)),
            ("C", format!("{:.16e}", self.cal_c)),
            ("lhs", format!("{:.16e}", self.lhs)),
            ("satisfied", self.satisfied.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

pub fn contraction_constants(spec: &ProblemSpec, opts: ContractionOptions) -> Result<ContractionReport> {
    spec.validate()?;
    let p = &spec.params;
    let m = operator_norm_bound(p, opts.norm_intervals)?;
    let gs = GramianSet::build(
        p,
        0.0,
        p.horizon,
        GramianOptions {
            quadrature_step: opts.quadrature_step,
            control_intervals: spec.steps,
        },
    )?;
    gs.check_conditioning()?;
    let g = gamma_norm(&gs, p, opts.norm_intervals)?;
    let mut report = ContractionReport::assemble(
        m.value,
        g.value,
        spec.effective_lipschitz(),
        spec.nonlocal.lipschitz(),
        spec.nonlocal.q(),
        spec.impulse_lipschitz_sum(),
        p.horizon,
    );
    report.m_step = m.step;
    report.gamma_step = g.step;
    Ok(report)
}

fn zero_control(spec: &ProblemSpec) -> Result<ControlSignal> {
    ControlSignal::zeros(0.0, spec.step(), spec.steps, spec.modes())
}

fn require_control_free(spec: &ProblemSpec) -> Result<()> {
    if spec.nonlinearity.depends_on_control() {
        return Err(Error::Precondition(
            "exact controllability needs a nonlinearity that does not depend on the control".into(),
        ));
    }
    Ok(())
}

/// `𝓛y = z* − S(T){ρ(0) − 𝔊(y)(0)} − ∫₀ᵀS(T−s)𝔉(s, y_s)ds − Σ S(T−t_k)𝔍ₖ(y(t_k⁻))`,
/// with the integral discretized exactly as the integrator does.
pub fn l_operator(y: &Trajectory, zstar: &StateZ, spec: &ProblemSpec) -> Result<StateZ> {
    require_control_free(spec)?;
    if zstar.modes() != spec.modes() {
        return Err(Error::Shape("target has the wrong mode count".into()));
    }
    let free = frozen_sweep(spec, y, &zero_control(spec)?)?;
    Ok(zstar - free.final_state())
}

/// `(κy)(t)` for the control `u = Γ𝓛(y)` already computed.
pub fn kappa(y: &Trajectory, u: &ControlSignal, spec: &ProblemSpec) -> Result<Trajectory> {
    frozen_sweep(spec, y, u)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub sup_diff: f64,
    /// `sup_diff / previous sup_diff`; NaN for the first iteration.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub control: ControlSignal,
    pub trajectory: Trajectory,
    pub log: Vec<IterationRecord>,
    /// `‖z(T) − z*‖`.
    pub terminal_error: f64,
    /// `sup ‖κ(z) − z‖`.
    pub residual: f64,
}

/// Picard iteration `u_k = Γ𝓛(y_{k−1})`, `y_k = ` mild solution under `u_k`,
/// started from the uncontrolled solution.
pub fn exact_fixed_point(spec: &ProblemSpec, zstar: &StateZ, opts: FixedPointOptions) -> Result<ExactResult> {
    require_control_free(spec)?;
    spec.validate()?;
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Precondition(
            "fixed-point tolerance must be > 0 and max_iter >= 1".into(),
        ));
    }
    let p = &spec.params;
    let gs = GramianSet::build(p, 0.0, p.horizon, GramianOptions::with_intervals(spec.steps))?;
    gs.check_conditioning()?;
    // inner solves must be well below the outer tolerance
    let inner = PicardOptions {
        tol: spec.picard.tol.min(1e-3 * opts.tol).max(1e-15),
        max_iter: spec.picard.max_iter.max(100),
    };
    let mut y = integrate_with(spec, &zero_control(spec)?, inner)?.0;
    let mut log = Vec::new();
    let mut growing = 0;
    for iter in 1..=opts.max_iter {
        let u = gamma(&l_operator(&y, zstar, spec)?, &gs, p)?;
        let next = integrate_with(spec, &u, inner)?.0;
        let sup_diff = next.sup_diff(&y)?;
        let ratio = log.last().map_or(f64::NAN, |r: &IterationRecord| sup_diff / r.sup_diff);
        log.push(IterationRecord { iter, sup_diff, ratio });
        log::debug!("fixed-point iteration {iter}: sup diff {sup_diff:.3e}, ratio {ratio:.4}");
        y = next;
        if sup_diff <= opts.tol {
            let residual = kappa(&y, &u, spec)?.sup_diff(&y)?;
            let terminal_error = norm_z(&(y.final_state() - zstar));
            return Ok(ExactResult {
                control: u,
                trajectory: y,
                log,
                terminal_error,
                residual,
            });
        }
        if ratio > 1.0 {
            growing += 1;
            if growing >= 3 {
                return Err(Error::Divergence { iteration: iter, ratio });
            }
        } else {
            growing = 0;
        }
        if !sup_diff.is_finite() {
            return Err(Error::Divergence { iteration: iter, ratio });
        }
    }
    let last = log.last().copied().expect("at least one iteration");
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        last_diff: last.sup_diff,
        ratio: last.ratio,
    })
}

/// `min{T − t_m, r}`: the admissible range of `ς` is `(0, limit)`.
pub fn sigma_limit(spec: &ProblemSpec) -> f64 {
    let p = &spec.params;
    let after = spec.last_impulse().map_or(p.horizon, |t| p.horizon - t);
    after.min(p.delay)
}

/// The default schedule `{0.2, 0.1, 0.05, 0.025}·min{T − t_m, r}`.
pub fn default_sigmas(spec: &ProblemSpec) -> Vec<f64> {
    let limit = sigma_limit(spec);
    [0.2, 0.1, 0.05, 0.025].iter().map(|f| f * limit).collect()
}

/// Number of time steps in `ς`, after snapping to the grid.
fn sigma_steps(spec: &ProblemSpec, sigma: f64) -> Result<usize> {
    let limit = sigma_limit(spec);
    let h = spec.step();
    let steps = (sigma / h).round().max(1.0) as usize;
    let snapped = steps as f64 * h;
    if !(sigma > 0.0 && sigma < limit && snapped < limit) {
        return Err(Error::Precondition(format!(
            "sigma must satisfy 0 < sigma < min(T - t_m, r) = {limit}, got {sigma}"
        )));
    }
    Ok(steps)
}

/// `u` on `[0, T − ς]`, then the linear steering control from `z(T − ς)` to
/// `z*` on `(T − ς, T]`.
pub fn pullback_control(
    u: &ControlSignal,
    traj: &Trajectory,
    sigma: f64,
    zstar: &StateZ,
    spec: &ProblemSpec,
) -> Result<ControlSignal> {
    let tail_steps = sigma_steps(spec, sigma)?;
    let h = spec.step();
    if (u.step() - h).abs() > 1e-9 * h || u.t0().abs() > 1e-9 * h || u.intervals() != spec.steps {
        return Err(Error::Precondition(
            "nominal control must live on the problem's time grid".into(),
        ));
    }
    let p = &spec.params;
    let split = spec.steps - tail_steps;
    let t_split = split as f64 * h;
    let z_split = traj.value(t_split, Side::Right);
    let gs = GramianSet::build(p, t_split, p.horizon, GramianOptions::with_intervals(tail_steps))?;
    let tail = steer_with(&z_split, zstar, &gs, p)?;
    u.splice(&tail)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxRow {
    /// `ς` after snapping to the time grid.
    pub sigma: f64,
    pub terminal_error: f64,
    /// Trapezoid estimate of `∫_{T−ς}^{T}‖S(T−s)‖(α₁𝓗(‖z(s−r)‖) + β₁)ds`.
    pub bound_estimate: f64,
    /// `max ‖z^ς(s − r) − z(s − r)‖` over `s ∈ [T − ς, T]`.
    pub delay_identity: f64,
    /// `max ‖z^ς − z‖` over `[−r, T − ς]`.
    pub locality: f64,
    /// Largest `‖𝔉‖` seen on the tail.
    pub tail_drift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxResult {
    pub rows: Vec<ApproxRow>,
    /// Grid estimate of `M` on `[0, T]`.
    pub m: f64,
}

pub fn approx_experiment(
    spec: &ProblemSpec,
    u: &ControlSignal,
    zstar: &StateZ,
    sigmas: &[f64],
) -> Result<ApproxResult> {
    if sigmas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("sigmas must be strictly decreasing".into()));
    }
    for s in sigmas {
        sigma_steps(spec, *s)?;
    }
    let traj = integrate_with(spec, u, spec.picard)?.0;
    let p = &spec.params;
    let h = spec.step();
    let r = traj.delay_nodes();
    let c = spec.constants;
    let rows: Vec<Result<ApproxRow>> = sigmas
        .par_iter()
        .map(|&sigma| {
            let tail_steps = sigma_steps(spec, sigma)?;
            let us = pullback_control(u, &traj, sigma, zstar, spec)?;
            let zs = integrate_with(spec, &us, spec.picard)?.0;
            let terminal_error = norm_z(&(zs.final_state() - zstar));
            let end = traj.len() - 1;
            let split = end - tail_steps;
            let mut bound = 0.0;
            let mut delay_identity: f64 = 0.0;
            let mut tail_drift: f64 = 0.0;
            for i in split..=end {
                let t = (i - r) as f64 * h;
                let delayed = zs.node(i - r);
                let integrand =
                    semigroup_norm(p.horizon - t, p) * (c.alpha * c.envelope.eval(norm_z(delayed)) + c.beta);
                let w = if i == split || i == end { 0.5 * h } else { h };
                bound += w * integrand;
                for side in [Side::Left, Side::Right] {
                    delay_identity =
                        delay_identity.max(norm_z(&(zs.node_side(i - r, side) - traj.node_side(i - r, side))));
                }
                let uval = us.value(t, Side::Right);
                tail_drift = tail_drift.max(drift(spec, t, zs.node(i), delayed, &uval).norm());
            }
            let mut locality: f64 = 0.0;
            for i in 0..=split {
                locality = locality.max(norm_z(&(zs.node_left(i) - traj.node_left(i))));
                if i < split {
                    locality = locality.max(norm_z(&(zs.node(i) - traj.node(i))));
                }
            }
            Ok(ApproxRow {
                sigma: tail_steps as f64 * h,
                terminal_error,
                bound_estimate: bound,
                delay_identity,
                locality,
                tail_drift,
            })
        })
        .collect();
    let m = operator_norm_bound(p, 2000)?.value;
    Ok(ApproxResult {
        rows: rows.into_iter().collect::<Result<_>>()?,
        m,
    })
}
