//! Eigen-structure of the hinged beam operator `A = d⁴/dx⁴` on (0, 1).
//!
//! Functions on (0, 1) are represented by their coefficients in the
//! L²-orthonormal sine basis `φ̂ₙ(x) = √2 sin(nπx)`, `n = 1..N`. In that
//! basis `A` is diagonal with eigenvalues `λₙ = n⁴π⁴`, so fractional powers
//! and the energy norm of `Z½ = D(A^½) × L²` are computed exactly from the
//! coefficients. The pointwise nonlinearity `w⁺ = max(w, 0)` is evaluated
//! pseudo-spectrally on a uniform interior grid.

use std::f64::consts::{PI, SQRT_2};
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// `λₙ = n⁴π⁴` for the hinged-hinged fourth-derivative operator.
pub fn eigenvalue(n: i64) -> Result<f64> {
    if n < 1 {
        return Err(Error::Domain(format!("mode index must be >= 1, got {n}")));
    }
    Ok(eigenvalue_unchecked(n as usize))
}

#[inline]
pub(crate) fn eigenvalue_unchecked(n: usize) -> f64 {
    // (n²π²)² rounds π⁴ correctly where powi(4) does not
    let q = (n * n) as f64 * PI * PI;
    q * q
}

/// Coefficients of a function on (0, 1) in the orthonormal sine basis.
/// Entry `i` belongs to mode `n = i + 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModalCoeffs(Vec<f64>);

impl ModalCoeffs {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Precondition("modal coefficient vector is empty".into()));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("coefficient of mode {} is not finite", i + 1)));
        }
        Ok(Self(coeffs))
    }

    pub fn zeros(modes: usize) -> Self {
        Self(vec![0.0; modes])
    }

    /// The `n`-th basis function (1-based) scaled by `amplitude`.
    pub fn unit(modes: usize, n: usize, amplitude: f64) -> Self {
        let mut c = Self::zeros(modes);
        c.0[n - 1] = amplitude;
        c
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Unweighted L² norm (the norm of `𝒳 = L²(0,1)` by Parseval).
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self(self.0.iter().map(|c| alpha * c).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&c| f(c)).collect())
    }
}

impl Index<usize> for ModalCoeffs {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ModalCoeffs {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for &ModalCoeffs {
    type Output = ModalCoeffs;
    fn add(self, rhs: &ModalCoeffs) -> ModalCoeffs {
        ModalCoeffs(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &ModalCoeffs {
    type Output = ModalCoeffs;
    fn sub(self, rhs: &ModalCoeffs) -> ModalCoeffs {
        ModalCoeffs(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Mul<f64> for &ModalCoeffs {
    type Output = ModalCoeffs;
    fn mul(self, rhs: f64) -> ModalCoeffs {
        self.scaled(rhs)
    }
}

impl AddAssign<&ModalCoeffs> for ModalCoeffs {
    fn add_assign(&mut self, rhs: &ModalCoeffs) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&ModalCoeffs> for ModalCoeffs {
    fn sub_assign(&mut self, rhs: &ModalCoeffs) {
        self.axpy(-1.0, rhs);
    }
}

impl Neg for &ModalCoeffs {
    type Output = ModalCoeffs;
    fn neg(self) -> ModalCoeffs {
        self.scaled(-1.0)
    }
}

/// `‖w‖½ = ‖A^½ w‖ = (Σ λₙ wₙ²)^½`.
pub fn norm_half(w: &ModalCoeffs) -> f64 {
    w.iter()
        .enumerate()
        .map(|(i, c)| eigenvalue_unchecked(i + 1) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// Instantaneous state `z = (w, y)` of the first-order system: position in
/// `𝒳^½` and velocity in `𝒳`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateZ {
    pub w: ModalCoeffs,
    pub y: ModalCoeffs,
}

impl StateZ {
    pub fn new(w: ModalCoeffs, y: ModalCoeffs) -> Result<Self> {
        if w.len() != y.len() {
            return Err(Error::Shape(format!(
                "position has {} modes but velocity has {}",
                w.len(),
                y.len()
            )));
        }
        Ok(Self { w, y })
    }

    pub fn zeros(modes: usize) -> Self {
        Self {
            w: ModalCoeffs::zeros(modes),
            y: ModalCoeffs::zeros(modes),
        }
    }

    /// Basis state of mode `n` with the given position/velocity amplitudes.
    pub fn mode(modes: usize, n: usize, w: f64, y: f64) -> Self {
        Self {
            w: ModalCoeffs::unit(modes, n, w),
            y: ModalCoeffs::unit(modes, n, y),
        }
    }

    pub fn modes(&self) -> usize {
        self.w.len()
    }

    /// Coefficient pair `(wₙ, yₙ)` of mode `n` (1-based).
    #[inline]
    pub fn pair(&self, n: usize) -> [f64; 2] {
        [self.w[n - 1], self.y[n - 1]]
    }

    #[inline]
    pub fn set_pair(&mut self, n: usize, v: [f64; 2]) {
        self.w[n - 1] = v[0];
        self.y[n - 1] = v[1];
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        self.w.axpy(alpha, &other.w);
        self.y.axpy(alpha, &other.y);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            w: self.w.scaled(alpha),
            y: self.y.scaled(alpha),
        }
    }

    /// Inner product of `Z½`: `Σ λₙ wₙ w'ₙ + Σ yₙ y'ₙ`.
    pub fn inner_z(&self, other: &Self) -> f64 {
        (1..=self.modes())
            .map(|n| eigenvalue_unchecked(n) * self.w[n - 1] * other.w[n - 1] + self.y[n - 1] * other.y[n - 1])
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.y.iter()).all(|c| c.is_finite())
    }
}

impl Add for &StateZ {
    type Output = StateZ;
    fn add(self, rhs: &StateZ) -> StateZ {
        StateZ {
            w: &self.w + &rhs.w,
            y: &self.y + &rhs.y,
        }
    }
}

impl Sub for &StateZ {
    type Output = StateZ;
    fn sub(self, rhs: &StateZ) -> StateZ {
        StateZ {
            w: &self.w - &rhs.w,
            y: &self.y - &rhs.y,
        }
    }
}

impl AddAssign<&StateZ> for StateZ {
    fn add_assign(&mut self, rhs: &StateZ) {
        self.w += &rhs.w;
        self.y += &rhs.y;
    }
}

impl SubAssign<&StateZ> for StateZ {
    fn sub_assign(&mut self, rhs: &StateZ) {
        self.w -= &rhs.w;
        self.y -= &rhs.y;
    }
}

impl Mul<f64> for &StateZ {
    type Output = StateZ;
    fn mul(self, rhs: f64) -> StateZ {
        self.scaled(rhs)
    }
}

/// `‖(w, y)‖_{Z½} = (‖w‖½² + ‖y‖²)^½`.
pub fn norm_z(z: &StateZ) -> f64 {
    let h = norm_half(&z.w);
    let y = z.y.norm();
    (h * h + y * y).sqrt()
}

/// Uniform interior collocation grid `xᵢ = i/(G+1)`, `i = 1..G`, with the
/// sine table for the first `N` modes cached.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    points: usize,
    modes: usize,
    // basis[i * modes + (n-1)] = √2 sin(nπxᵢ)
    basis: Vec<f64>,
}

impl SpatialGrid {
    /// Requires `points >= 2 * modes + 1` so that the positive part of an
    /// `N`-mode function is not aliased back onto the first `N` modes by
    /// the quadratic-order interactions.
    pub fn new(points: usize, modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::Precondition("mode count must be >= 1".into()));
        }
        if points < 2 * modes + 1 {
            return Err(Error::Precondition(format!(
                "spatial grid too coarse: G = {points} < 2N + 1 = {}",
                2 * modes + 1
            )));
        }
        let dx = 1.0 / (points as f64 + 1.0);
        let mut basis = Vec::with_capacity(points * modes);
        for i in 1..=points {
            let x = i as f64 * dx;
            for n in 1..=modes {
                basis.push(SQRT_2 * (n as f64 * PI * x).sin());
            }
        }
        Ok(Self { points, modes, basis })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.points as f64 + 1.0)
    }

    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.spacing();
        (1..=self.points).map(|i| i as f64 * dx).collect()
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes().into_iter().map(f).collect()
    }

    fn check_modes(&self, modes: usize) -> Result<()> {
        if modes > self.modes {
            return Err(Error::Shape(format!(
                "grid was built for {} modes, {} requested",
                self.modes, modes
            )));
        }
        Ok(())
    }
}

/// Discrete sine projection of grid samples onto the first `modes` basis
/// functions (trapezoid weights; the boundary values vanish).
pub fn project(samples: &[f64], grid: &SpatialGrid, modes: usize) -> Result<ModalCoeffs> {
    if samples.len() != grid.points {
        return Err(Error::Shape(format!(
            "{} samples for a grid of {} points",
            samples.len(),
            grid.points
        )));
    }
    if grid.points < 2 * modes + 1 {
        return Err(Error::Precondition(format!(
            "spatial grid too coarse: G = {} < 2N + 1 = {}",
            grid.points,
            2 * modes + 1
        )));
    }
    grid.check_modes(modes)?;
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite grid sample".into()));
    }
    Ok(project_unchecked(samples, grid, modes))
}

pub(crate) fn project_unchecked(samples: &[f64], grid: &SpatialGrid, modes: usize) -> ModalCoeffs {
    let dx = grid.spacing();
    let mut out = vec![0.0; modes];
    for (i, &f) in samples.iter().enumerate() {
        if f == 0.0 {
            continue;
        }
        let row = &grid.basis[i * grid.modes..i * grid.modes + modes];
        for (o, b) in out.iter_mut().zip(row) {
            *o += f * b;
        }
    }
    for o in &mut out {
        *o *= dx;
    }
    ModalCoeffs(out)
}

/// Grid values `f(xᵢ) = Σ cₙ √2 sin(nπxᵢ)`.
pub fn reconstruct(c: &ModalCoeffs, grid: &SpatialGrid) -> Result<Vec<f64>> {
    grid.check_modes(c.len())?;
    Ok(reconstruct_unchecked(c, grid))
}

pub(crate) fn reconstruct_unchecked(c: &ModalCoeffs, grid: &SpatialGrid) -> Vec<f64> {
    let m = c.len();
    (0..grid.points)
        .map(|i| {
            grid.basis[i * grid.modes..i * grid.modes + m]
                .iter()
                .zip(c.iter())
                .map(|(b, a)| a * b)
                .sum()
        })
        .collect()
}

/// Pseudo-spectral `w⁺`: reconstruct on the grid, clip at zero, project back.
pub fn positive_part(c: &ModalCoeffs, grid: &SpatialGrid) -> Result<ModalCoeffs> {
    grid.check_modes(c.len())?;
    Ok(positive_part_unchecked(c, grid))
}

pub(crate) fn positive_part_unchecked(c: &ModalCoeffs, grid: &SpatialGrid) -> ModalCoeffs {
    let mut samples = reconstruct_unchecked(c, grid);
    for v in &mut samples {
        *v = v.max(0.0);
    }
    project_unchecked(&samples, grid, c.len())
}
