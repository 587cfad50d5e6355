//! The group `S(t)` generated by `𝔄 = [[0, I], [−dA, −cI]]`.
//!
//! `𝔄` is block diagonal over the sine modes: on the coefficient pair
//! `(wₙ, yₙ)` it acts as the companion matrix `Aₙ = [[0, 1], [−dλₙ, −c]]`,
//! so `S(t)` is the direct sum of the 2×2 exponentials `e^{Aₙt}`. Norms and
//! adjoints are taken in the weighted inner product `⟨(a,b),(a',b')⟩ =
//! λₙaa' + bb'`, which is the restriction of the `Z½` inner product.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::spectral::{eigenvalue_unchecked, StateZ};

/// Real 2×2 matrix acting on a mode's coefficient pair `(wₙ, yₙ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode2x2(pub [[f64; 2]; 2]);

impl Mode2x2 {
    pub const IDENTITY: Self = Self([[1.0, 0.0], [0.0, 1.0]]);
    pub const ZERO: Self = Self([[0.0, 0.0], [0.0, 0.0]]);

    pub fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self([[a11, a12], [a21, a22]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.0[0][0], self.0[1][0], self.0[0][1], self.0[1][1])
    }

    pub fn scale(&self, s: f64) -> Self {
        let m = self.0;
        Self::new(s * m[0][0], s * m[0][1], s * m[1][0], s * m[1][1])
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let m = self.0;
        Some(Self::new(m[1][1], -m[0][1], -m[1][0], m[0][0]).scale(1.0 / det))
    }

    #[inline]
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Largest singular value (Euclidean operator norm).
    pub fn spectral_norm(&self) -> f64 {
        let m = self.0;
        let fro2 = m.iter().flatten().map(|v| v * v).sum::<f64>();
        let det = self.det();
        let disc = (fro2 * fro2 - 4.0 * det * det).max(0.0);
        (0.5 * (fro2 + disc.sqrt())).sqrt()
    }

    /// `D^½ M D^-½` with `D = diag(λ, 1)`: the matrix seen in an orthonormal
    /// basis of the weighted inner product.
    pub fn to_weighted(&self, lambda: f64) -> Self {
        let s = lambda.sqrt();
        let m = self.0;
        Self::new(m[0][0], m[0][1] * s, m[1][0] / s, m[1][1])
    }

    /// Operator norm induced by `‖(a, b)‖² = λa² + b²`.
    pub fn weighted_norm(&self, lambda: f64) -> f64 {
        self.to_weighted(lambda).spectral_norm()
    }

    /// Adjoint `D⁻¹MᵀD` with respect to the weighted inner product.
    pub fn weighted_adjoint(&self, lambda: f64) -> Self {
        let m = self.0;
        Self::new(m[0][0], m[1][0] / lambda, m[0][1] * lambda, m[1][1])
    }
}

impl Mul for Mode2x2 {
    type Output = Mode2x2;
    fn mul(self, rhs: Mode2x2) -> Mode2x2 {
        let (a, b) = (self.0, rhs.0);
        Mode2x2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl Add for Mode2x2 {
    type Output = Mode2x2;
    fn add(self, rhs: Mode2x2) -> Mode2x2 {
        let (a, b) = (self.0, rhs.0);
        Mode2x2::new(
            a[0][0] + b[0][0],
            a[0][1] + b[0][1],
            a[1][0] + b[1][0],
            a[1][1] + b[1][1],
        )
    }
}

impl Sub for Mode2x2 {
    type Output = Mode2x2;
    fn sub(self, rhs: Mode2x2) -> Mode2x2 {
        self + rhs.scale(-1.0)
    }
}

/// Physical and discretization parameters of the beam model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Damping `c > 0` (1/time).
    pub c: f64,
    /// Stiffness `d > 0`.
    pub d: f64,
    /// Cable constant `k` of the one-sided restoring force. `k = 0` switches
    /// the cable term off.
    pub k: f64,
    /// Number of retained sine modes.
    pub modes: usize,
    /// Control horizon `T`.
    pub horizon: f64,
    /// Delay span `r`, `0 < r < T`.
    pub delay: f64,
}

impl ModelParams {
    pub fn new(c: f64, d: f64, k: f64, modes: usize, horizon: f64, delay: f64) -> Result<Self> {
        let p = Self {
            c,
            d,
            k,
            modes,
            horizon,
            delay,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.c, self.d, self.k, self.horizon, self.delay]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Precondition("model parameters must be finite".into()));
        }
        if self.c <= 0.0 {
            return Err(Error::Precondition(format!("damping c must be > 0, got {}", self.c)));
        }
        if self.d <= 0.0 {
            return Err(Error::Precondition(format!("stiffness d must be > 0, got {}", self.d)));
        }
        if self.k < 0.0 {
            return Err(Error::Precondition(format!(
                "cable constant k must be >= 0, got {}",
                self.k
            )));
        }
        if self.modes == 0 {
            return Err(Error::Precondition("mode count N must be >= 1".into()));
        }
        if self.horizon <= 0.0 {
            return Err(Error::Precondition(format!(
                "horizon T must be > 0, got {}",
                self.horizon
            )));
        }
        if !(self.delay > 0.0 && self.delay < self.horizon) {
            return Err(Error::Precondition(format!(
                "delay span must satisfy 0 < r < T, got r = {}, T = {}",
                self.delay, self.horizon
            )));
        }
        Ok(())
    }

    pub fn lambda(&self, n: usize) -> f64 {
        eigenvalue_unchecked(n)
    }
}

fn check_mode(n: i64) -> Result<usize> {
    if n < 1 {
        return Err(Error::Domain(format!("mode index must be >= 1, got {n}")));
    }
    Ok(n as usize)
}

/// Generator block `Aₙ = [[0, 1], [−dλₙ, −c]]`.
pub fn mode_matrix(n: i64, p: &ModelParams) -> Result<Mode2x2> {
    let n = check_mode(n)?;
    p.validate()?;
    Ok(mode_matrix_unchecked(n, p))
}

#[inline]
pub(crate) fn mode_matrix_unchecked(n: usize, p: &ModelParams) -> Mode2x2 {
    Mode2x2::new(0.0, 1.0, -p.d * p.lambda(n), -p.c)
}

/// `Aₙ* = D⁻¹AₙᵀD = [[0, −d], [λₙ, −c]]`.
pub fn mode_adjoint_matrix(n: i64, p: &ModelParams) -> Result<Mode2x2> {
    let n = check_mode(n)?;
    p.validate()?;
    Ok(mode_matrix_unchecked(n, p).weighted_adjoint(p.lambda(n)))
}

/// Closed-form `e^{At}` for a real 2×2 matrix.
///
/// With `m = tr(A)/2` and `δ = m² − det(A)`, Cayley–Hamilton gives
/// `(A − mI)² = δI`, hence `e^{At} = e^{mt}(C(t)I + S(t)(A − mI))` where
/// `(C, S) = (cos ωt, sin ωt / ω)` for `δ = −ω² < 0`, `(cosh σt, sinh σt / σ)`
/// for `δ = σ² > 0`. For the companion block `4δ = c² − 4dλₙ` is the
/// discriminant of `μ² + cμ + dλₙ`. When `|4δ| < 1e-9 · max(tr², 4|det|)` the
/// roots are treated as repeated and `C`, `S` come from their Taylor series
/// in `δt²`, whose leading terms are the limit `(1, t)`.
pub fn expm2(a: &Mode2x2, t: f64) -> Mode2x2 {
    let m = 0.5 * a.trace();
    let det = a.det();
    let delta = m * m - det;
    let shifted = *a - Mode2x2::IDENTITY.scale(m);
    let scale = (4.0 * m * m).max(4.0 * det.abs());
    let (c, s) = if (4.0 * delta).abs() < 1e-9 * scale {
        let x = delta * t * t;
        (
            1.0 + x / 2.0 + x * x / 24.0 + x * x * x / 720.0,
            t * (1.0 + x / 6.0 + x * x / 120.0 + x * x * x / 5040.0),
        )
    } else if delta < 0.0 {
        let omega = (-delta).sqrt();
        ((omega * t).cos(), (omega * t).sin() / omega)
    } else {
        let sigma = delta.sqrt();
        ((sigma * t).cosh(), (sigma * t).sinh() / sigma)
    };
    let e = (m * t).exp();
    (Mode2x2::IDENTITY.scale(c) + shifted.scale(s)).scale(e)
}

/// `e^{Aₙt}` for mode `n` (1-based).
#[inline]
pub fn mode_exp(n: usize, t: f64, p: &ModelParams) -> Mode2x2 {
    expm2(&mode_matrix_unchecked(n, p), t)
}

/// `S(t)z`, mode by mode. `t` may be negative.
pub fn apply_semigroup(z: &StateZ, t: f64, p: &ModelParams) -> Result<StateZ> {
    if z.modes() != p.modes {
        return Err(Error::Shape(format!(
            "state has {} modes, model has {}",
            z.modes(),
            p.modes
        )));
    }
    Ok(apply_semigroup_unchecked(z, t, p))
}

pub(crate) fn apply_semigroup_unchecked(z: &StateZ, t: f64, p: &ModelParams) -> StateZ {
    let mut out = z.clone();
    for n in 1..=z.modes() {
        out.set_pair(n, mode_exp(n, t, p).apply(z.pair(n)));
    }
    out
}

/// `S*(t)z` with respect to the `Z½` inner product.
pub fn apply_adjoint_semigroup(z: &StateZ, t: f64, p: &ModelParams) -> Result<StateZ> {
    if z.modes() != p.modes {
        return Err(Error::Shape(format!(
            "state has {} modes, model has {}",
            z.modes(),
            p.modes
        )));
    }
    let mut out = z.clone();
    for n in 1..=z.modes() {
        let adj = mode_exp(n, t, p).weighted_adjoint(p.lambda(n));
        out.set_pair(n, adj.apply(z.pair(n)));
    }
    Ok(out)
}

/// `‖S(t)‖` on the truncated space: the largest weighted block norm.
pub fn semigroup_norm(t: f64, p: &ModelParams) -> f64 {
    (1..=p.modes)
        .map(|n| mode_exp(n, t, p).weighted_norm(p.lambda(n)))
        .fold(0.0, f64::max)
}

/// Grid estimate of `M = sup_{s∈[0,T]} ‖S(s)‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormBound {
    pub value: f64,
    /// Spacing of the time grid the supremum was taken over.
    pub step: f64,
}

/// Maximum of `‖S(tᵢ)‖` over `tᵢ = iT/intervals`, `i = 0..=intervals`.
pub fn operator_norm_bound(p: &ModelParams, intervals: usize) -> Result<NormBound> {
    if intervals == 0 {
        return Err(Error::Precondition("time grid needs at least one interval".into()));
    }
    p.validate()?;
    let step = p.horizon / intervals as f64;
    let value = (0..=intervals)
        .map(|i| semigroup_norm(i as f64 * step, p))
        .fold(0.0, f64::max);
    Ok(NormBound { value, step })
}

/// One-step operators of the exponential trapezoid rule for a single mode.
///
/// For a source `g(s)` entering the velocity slot and interpolated linearly
/// over a step of length `h`,
/// `z(t+h) = E z(t) + a g(t) + b g(t+h)` exactly, with `E = e^{Ah}`,
/// `a = (I₀ − I₁/h)e₂`, `b = (I₁/h)e₂`, `I₀ = ∫₀ʰ e^{Aσ}dσ`,
/// `I₁ = ∫₀ʰ e^{Aσ}(h − σ)dσ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepWeights {
    pub exp: Mode2x2,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl StepWeights {
    pub fn new(generator: &Mode2x2, h: f64) -> Self {
        let exp = expm2(generator, h);
        let (i0, i1) = if generator.max_abs() * h < 0.5 {
            phi_series(generator, h)
        } else {
            // A is invertible for every mode (det = dλₙ > 0).
            let inv = generator.inverse().expect("generator block is invertible");
            let i0 = inv * (exp - Mode2x2::IDENTITY);
            let i1 = inv * (i0 - Mode2x2::IDENTITY.scale(h));
            (i0, i1)
        };
        let b = i1.scale(1.0 / h);
        let a = i0 - b;
        Self {
            exp,
            a: [a.0[0][1], a.0[1][1]],
            b: [b.0[0][1], b.0[1][1]],
        }
    }

    #[inline]
    pub fn step(&self, z: [f64; 2], g_start: f64, g_end: f64) -> [f64; 2] {
        let e = self.exp.apply(z);
        [
            e[0] + self.a[0] * g_start + self.b[0] * g_end,
            e[1] + self.a[1] * g_start + self.b[1] * g_end,
        ]
    }
}

fn phi_series(a: &Mode2x2, h: f64) -> (Mode2x2, Mode2x2) {
    // I₀ = Σ Aᵏ h^{k+1}/(k+1)!,  I₁ = Σ Aᵏ h^{k+2}/(k+2)!
    let mut power = Mode2x2::IDENTITY;
    let mut i0 = Mode2x2::ZERO;
    let mut i1 = Mode2x2::ZERO;
    let mut f0 = h;
    let mut f1 = h * h / 2.0;
    for k in 0..40 {
        i0 = i0 + power.scale(f0);
        i1 = i1 + power.scale(f1);
        power = power * *a;
        f0 *= h / (k as f64 + 2.0);
        f1 *= h / (k as f64 + 3.0);
        if power.max_abs() * f0 < 1e-20 * h {
            break;
        }
    }
    (i0, i1)
}

/// Per-mode step operators for a fixed step `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagator {
    pub step: f64,
    pub weights: Vec<StepWeights>,
}

impl Propagator {
    pub fn new(p: &ModelParams, h: f64) -> Self {
        let weights = (1..=p.modes)
            .map(|n| StepWeights::new(&mode_matrix_unchecked(n, p), h))
            .collect();
        Self { step: h, weights }
    }

    /// Advances `z` by one step with velocity-slot sources `g_start`, `g_end`.
    pub fn advance(
        &self,
        z: &StateZ,
        g_start: &crate::spectral::ModalCoeffs,
        g_end: &crate::spectral::ModalCoeffs,
    ) -> StateZ {
        let mut out = z.clone();
        for (i, w) in self.weights.iter().enumerate() {
            let n = i + 1;
            out.set_pair(n, w.step(z.pair(n), g_start[i], g_end[i]));
        }
        out
    }

    /// Advances `z` by one step without sources.
    pub fn free(&self, z: &StateZ) -> StateZ {
        let mut out = z.clone();
        for (i, w) in self.weights.iter().enumerate() {
            out.set_pair(i + 1, w.exp.apply(z.pair(i + 1)));
        }
        out
    }
}
