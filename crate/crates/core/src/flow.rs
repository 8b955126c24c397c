//! Nonlinear Hamiltonian flows and their linearizations.
//!
//! A system supplies its energy, gradient and Hessian together with a
//! constant Poisson matrix `P`; the vector field is `ż = ±P ∇H`. The default
//! `P` is the standard `J`. Systems with a different constant `P` (the twisted
//! magnetic structure) also supply a trivialization `T` with `T P T^T = J`, so
//! that the linearized frames `T Φ T^{-1}` are ordinary symplectic matrices.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::{atomic_write, fmt_f64};
pub use crate::path::SignConvention;
use crate::path::{delta_rho, delta_tilde, fine_enough, SympPath};
use crate::symp::{max_abs, standard_j, symplectic_defect, SympMatrix};

const GRAD_STEP: f64 = 1e-6;
const HESS_STEP: f64 = 1e-5;
const MAX_FIXED_POINT: usize = 100;

/// Phase space topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Plane,
    /// The first half of the coordinates are angles mod `2π`.
    TorusBase,
}

/// Hamiltonian system with constant Poisson structure.
pub trait HamSystem: Send + Sync {
    fn dim(&self) -> usize;

    fn energy(&self, z: &DVector<f64>) -> f64;

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim());
        let mut zp = z.clone();
        for i in 0..self.dim() {
            let x = z[i];
            zp[i] = x + GRAD_STEP;
            let hi = self.energy(&zp);
            zp[i] = x - GRAD_STEP;
            let lo = self.energy(&zp);
            zp[i] = x;
            g[i] = (hi - lo) / (2.0 * GRAD_STEP);
        }
        g
    }

    /// Central differences of the gradient with one Richardson step,
    /// symmetrized.
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        let mut zp = z.clone();
        let diff = |zp: &mut DVector<f64>, i: usize, step: f64| {
            let x = zp[i];
            zp[i] = x + step;
            let hi = self.gradient(zp);
            zp[i] = x - step;
            let lo = self.gradient(zp);
            zp[i] = x;
            (hi - lo) / (2.0 * step)
        };
        for i in 0..d {
            let coarse = diff(&mut zp, i, HESS_STEP);
            let fine = diff(&mut zp, i, HESS_STEP / 2.0);
            h.set_column(i, &((fine * 4.0 - coarse) / 3.0));
        }
        (&h + h.transpose()) * 0.5
    }

    fn topology(&self) -> Topology {
        Topology::Plane
    }

    /// Poisson matrix `P`; the flow is `ż = ±P ∇H`.
    fn structure(&self) -> DMatrix<f64> {
        standard_j(self.dim() / 2)
    }

    /// Constant `T` with `T P T^T = J`.
    fn trivialization(&self) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim())
    }
}

impl<S: HamSystem + ?Sized> HamSystem for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn energy(&self, z: &DVector<f64>) -> f64 {
        (**self).energy(z)
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        (**self).gradient(z)
    }
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        (**self).hessian(z)
    }
    fn topology(&self) -> Topology {
        (**self).topology()
    }
    fn structure(&self) -> DMatrix<f64> {
        (**self).structure()
    }
    fn trivialization(&self) -> DMatrix<f64> {
        (**self).trivialization()
    }
}

/// `H(z) = ½ ⟨S z, z⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem {
    s: DMatrix<f64>,
}

impl QuadraticSystem {
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() || !s.nrows().is_multiple_of(2) || s.nrows() == 0 {
            return Err(Error::InvalidParams("S must be 2n x 2n".into()));
        }
        let defect = max_abs(&(&s - s.transpose()));
        if defect > 1e-10 {
            return Err(Error::NotSymmetric { defect });
        }
        Ok(QuadraticSystem { s })
    }

    /// `½ |z|^2` on `R^{2n}`.
    pub fn oscillator(n: usize) -> Self {
        QuadraticSystem { s: DMatrix::identity(2 * n, 2 * n) }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }
}

impl HamSystem for QuadraticSystem {
    fn dim(&self) -> usize {
        self.s.nrows()
    }
    fn energy(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.s * z))
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.s * z
    }
    fn hessian(&self, _z: &DVector<f64>) -> DMatrix<f64> {
        self.s.clone()
    }
}

/// `H(q, p) = ½ p^2 - g cos q`; `g = 1` has its stable equilibrium at the
/// origin, `g = -1` is `½ p^2 + cos q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pendulum {
    pub g: f64,
}

impl Pendulum {
    pub fn new(g: f64) -> Self {
        Pendulum { g }
    }
}

impl HamSystem for Pendulum {
    fn dim(&self) -> usize {
        2
    }
    fn energy(&self, z: &DVector<f64>) -> f64 {
        0.5 * z[1] * z[1] - self.g * z[0].cos()
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![self.g * z[0].sin(), z[1]])
    }
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[self.g * z[0].cos(), 0.0, 0.0, 1.0])
    }
    fn topology(&self) -> Topology {
        Topology::TorusBase
    }
}

/// Monotone function applied to an energy.
#[derive(Debug, Clone, PartialEq)]
pub enum EnergyMap {
    Identity,
    Scale(f64),
    /// `Σ c_i x^i`.
    Polynomial(Vec<f64>),
}

impl EnergyMap {
    pub fn value(&self, x: f64) -> f64 {
        match self {
            EnergyMap::Identity => x,
            EnergyMap::Scale(c) => c * x,
            EnergyMap::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            EnergyMap::Identity => 1.0,
            EnergyMap::Scale(c) => *c,
            EnergyMap::Polynomial(c) => {
                c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, &ci)| acc * x + i as f64 * ci)
            }
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match self {
            EnergyMap::Identity | EnergyMap::Scale(_) => 0.0,
            EnergyMap::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (i, &ci)| acc * x + (i * (i - 1)) as f64 * ci),
        }
    }
}

/// `H = f ∘ K`.
#[derive(Debug, Clone)]
pub struct Reparametrized<S> {
    pub inner: S,
    pub map: EnergyMap,
}

impl<S: HamSystem> HamSystem for Reparametrized<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn energy(&self, z: &DVector<f64>) -> f64 {
        self.map.value(self.inner.energy(z))
    }
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        self.inner.gradient(z) * self.map.derivative(self.inner.energy(z))
    }
    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let k = self.inner.energy(z);
        let g = self.inner.gradient(z);
        self.inner.hessian(z) * self.map.derivative(k) + &g * g.transpose() * self.map.second_derivative(k)
    }
    fn topology(&self) -> Topology {
        self.inner.topology()
    }
    fn structure(&self) -> DMatrix<f64> {
        self.inner.structure()
    }
    fn trivialization(&self) -> DMatrix<f64> {
        self.inner.trivialization()
    }
}

/// Time stepping scheme. Both are compositions of the implicit midpoint rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Plain implicit midpoint, order 2.
    Midpoint,
    /// Symmetric triple jump of midpoint steps, order 4.
    #[default]
    TripleJump,
}

impl Scheme {
    fn fractions(self) -> Vec<f64> {
        match self {
            Scheme::Midpoint => vec![1.0],
            Scheme::TripleJump => {
                let c = 2f64.powf(1.0 / 3.0);
                let g1 = 1.0 / (2.0 - c);
                vec![g1, -c / (2.0 - c), g1]
            }
        }
    }
}

/// Sampled integral curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `max |H(z_i) - H(z_0)|`.
    pub energy_drift: f64,
    /// Drift bound declared for this integration.
    pub drift_bound: f64,
    pub convention: SignConvention,
    pub scheme: Scheme,
}

impl Trajectory {
    pub fn start(&self) -> &DVector<f64> {
        &self.states[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        self.states.last().expect("non-empty")
    }

    pub fn duration(&self) -> f64 {
        self.times.last().expect("non-empty") - self.times[0]
    }

    pub fn within_drift_bound(&self) -> bool {
        self.energy_drift <= self.drift_bound
    }

    pub fn write_csv<S: HamSystem + ?Sized>(&self, system: &S, out: &Path) -> Result<()> {
        let mut buf = Vec::new();
        let d = self.states[0].len();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=d).map(|i| format!("z_{i}")))
            .chain(std::iter::once("H".to_string()))
            .collect();
        writeln!(buf, "{}", header.join(","))?;
        for (t, z) in self.times.iter().zip(&self.states) {
            let mut row = vec![fmt_f64(*t)];
            row.extend(z.iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(system.energy(z)));
            writeln!(buf, "{}", row.join(","))?;
        }
        atomic_write(out, &buf)
    }
}

/// `ż = ±P ∇H(z)`.
pub fn vector_field<S: HamSystem + ?Sized>(system: &S, z: &DVector<f64>, convention: SignConvention) -> DVector<f64> {
    system.structure() * system.gradient(z) * convention.sign()
}

fn midpoint_step<S: HamSystem + ?Sized>(
    system: &S,
    z: &DVector<f64>,
    h: f64,
    convention: SignConvention,
) -> Result<DVector<f64>> {
    let scale = 1.0 + z.amax();
    let mut next = z + vector_field(system, z, convention) * h;
    let mut prev_diff = f64::INFINITY;
    for iter in 0..MAX_FIXED_POINT {
        let mid = (z + &next) * 0.5;
        let candidate = z + vector_field(system, &mid, convention) * h;
        let diff = (&candidate - &next).amax();
        next = candidate;
        if !diff.is_finite() || diff > 1e3 * scale {
            return Err(Error::StepTooLarge(format!("midpoint iteration diverges at step {h:e}")));
        }
        if diff <= 1e-15 * scale {
            return Ok(next);
        }
        // Rounding floor: stop once the increments stop shrinking.
        if iter > 3 && diff >= prev_diff && diff <= 1e-12 * scale {
            return Ok(next);
        }
        prev_diff = diff;
    }
    if prev_diff <= 1e-12 * scale {
        return Ok(next);
    }
    if prev_diff > 1e-3 * scale {
        return Err(Error::StepTooLarge(format!("midpoint iteration stalls at step {h:e}")));
    }
    Err(Error::NoConvergence(format!("midpoint iteration stuck at increment {prev_diff:.3e}")))
}

fn step<S: HamSystem + ?Sized>(
    system: &S,
    z: &DVector<f64>,
    h: f64,
    convention: SignConvention,
    scheme: Scheme,
) -> Result<DVector<f64>> {
    let mut cur = z.clone();
    for g in scheme.fractions() {
        cur = midpoint_step(system, &cur, g * h, convention)?;
    }
    Ok(cur)
}

/// One step together with the exact Jacobian of the discrete map, in the
/// original (untrivialized) coordinates.
fn step_with_jacobian<S: HamSystem + ?Sized>(
    system: &S,
    z: &DVector<f64>,
    h: f64,
    convention: SignConvention,
    scheme: Scheme,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = system.dim();
    let id = DMatrix::<f64>::identity(d, d);
    let p = system.structure() * convention.sign();
    let mut cur = z.clone();
    let mut jac = id.clone();
    for g in scheme.fractions() {
        let hh = g * h;
        let next = midpoint_step(system, &cur, hh, convention)?;
        let mid = (&cur + &next) * 0.5;
        let a = &p * system.hessian(&mid) * (hh / 2.0);
        let left = (&id - &a)
            .try_inverse()
            .ok_or_else(|| Error::StepTooLarge("singular midpoint Jacobian".into()))?;
        jac = left * (&id + &a) * jac;
        cur = next;
    }
    Ok((cur, jac))
}

/// Integrates `ż = ±P ∇H` from `z0` over `[0, T]` (`T` may be negative) with
/// the default fourth-order scheme.
pub fn flow<S: HamSystem + ?Sized>(
    system: &S,
    z0: &DVector<f64>,
    t: f64,
    steps: usize,
    convention: SignConvention,
) -> Result<Trajectory> {
    flow_with(system, z0, t, steps, convention, Scheme::default())
}

pub fn flow_with<S: HamSystem + ?Sized>(
    system: &S,
    z0: &DVector<f64>,
    t: f64,
    steps: usize,
    convention: SignConvention,
    scheme: Scheme,
) -> Result<Trajectory> {
    if steps < 16 {
        return Err(Error::InvalidParams(format!("at least 16 steps required, got {steps}")));
    }
    if z0.len() != system.dim() {
        return Err(Error::DimMismatch { left: system.dim(), right: z0.len() });
    }
    if !(t.is_finite() && t != 0.0) {
        return Err(Error::InvalidParams(format!("flow time must be finite and nonzero, got {t}")));
    }
    let h = t / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(z0.clone());
    let e0 = system.energy(z0);
    let mut drift: f64 = 0.0;
    for i in 1..=steps {
        let next = step(system, states.last().expect("seeded"), h, convention, scheme)?;
        drift = drift.max((system.energy(&next) - e0).abs());
        states.push(next);
        times.push(if i == steps { t } else { i as f64 * h });
    }
    Ok(Trajectory {
        times,
        states,
        energy_drift: drift,
        drift_bound: 1e-8 * (1.0 + e0.abs()) * t.abs(),
        convention,
        scheme,
    })
}

/// End point of the discrete flow and the exact Jacobian of the discrete
/// time-`t` map with respect to the initial point (untrivialized).
pub fn flow_jacobian<S: HamSystem + ?Sized>(
    system: &S,
    z0: &DVector<f64>,
    t: f64,
    steps: usize,
    convention: SignConvention,
    scheme: Scheme,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if steps == 0 || !t.is_finite() {
        return Err(Error::InvalidParams(format!("bad flow horizon t = {t}, steps = {steps}")));
    }
    let h = t / steps as f64;
    let d = system.dim();
    let mut z = z0.clone();
    let mut jac = DMatrix::identity(d, d);
    for _ in 0..steps {
        let (next, j) = step_with_jacobian(system, &z, h, convention, scheme)?;
        jac = j * jac;
        z = next;
    }
    Ok((z, jac))
}

/// End point of the discrete flow without storing the trajectory.
pub fn flow_endpoint<S: HamSystem + ?Sized>(
    system: &S,
    z0: &DVector<f64>,
    t: f64,
    steps: usize,
    convention: SignConvention,
    scheme: Scheme,
) -> Result<DVector<f64>> {
    if steps == 0 || !t.is_finite() {
        return Err(Error::InvalidParams(format!("bad flow horizon t = {t}, steps = {steps}")));
    }
    let h = t / steps as f64;
    let mut z = z0.clone();
    for _ in 0..steps {
        z = step(system, &z, h, convention, scheme)?;
    }
    Ok(z)
}

/// Largest `max |Φᵀ J Φ - J|` of the trivialized, unrenormalized products of
/// step Jacobians along a trajectory.
pub fn variational_defect<S: HamSystem + ?Sized>(
    system: &S,
    traj: &Trajectory,
    convention: SignConvention,
) -> Result<f64> {
    let tr = system.trivialization();
    let tr_inv = tr
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParams("trivialization is singular".into()))?;
    let d = system.dim();
    let mut raw = DMatrix::<f64>::identity(d, d);
    let mut worst = 0.0_f64;
    for k in 0..traj.times.len().saturating_sub(1) {
        let h = traj.times[k + 1] - traj.times[k];
        let (_, jac) = step_with_jacobian(system, &traj.states[k], h, convention, traj.scheme)?;
        raw = jac * raw;
        worst = worst.max(symplectic_defect(&(&tr * &raw * &tr_inv)));
    }
    Ok(worst)
}

/// Linearized flow `T Φ(t) T^{-1}` along a forward trajectory, using the exact
/// Jacobians of the integrator. Steps whose frames would violate the step
/// guard are integrated in halves.
pub fn variational_flow<S: HamSystem + ?Sized>(
    system: &S,
    traj: &Trajectory,
    convention: SignConvention,
) -> Result<SympPath> {
    if traj.times.len() < 2 || !(traj.duration() > 0.0) {
        return Err(Error::InvalidParams("variational flow needs a forward trajectory".into()));
    }
    let tr = system.trivialization();
    let tr_inv = tr
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParams("trivialization is singular".into()))?;
    let mut builder = FrameBuilder {
        system,
        convention,
        scheme: traj.scheme,
        tr,
        tr_inv,
        times: vec![traj.times[0]],
        frames: vec![SympMatrix::identity(system.dim())],
        raw: DMatrix::identity(system.dim(), system.dim()),
    };
    for k in 0..traj.times.len() - 1 {
        builder.advance(&traj.states[k], traj.times[k], traj.times[k + 1], 0)?;
    }
    SympPath::new(builder.times, builder.frames)
}

struct FrameBuilder<'a, S: HamSystem + ?Sized> {
    system: &'a S,
    convention: SignConvention,
    scheme: Scheme,
    tr: DMatrix<f64>,
    tr_inv: DMatrix<f64>,
    times: Vec<f64>,
    frames: Vec<SympMatrix>,
    raw: DMatrix<f64>,
}

impl<S: HamSystem + ?Sized> FrameBuilder<'_, S> {
    fn advance(&mut self, z: &DVector<f64>, t0: f64, t1: f64, depth: usize) -> Result<()> {
        let h = t1 - t0;
        let (_, jac) = step_with_jacobian(self.system, z, h, self.convention, self.scheme)?;
        let raw = jac * &self.raw;
        let m = &self.tr * &raw * &self.tr_inv;
        let frame = match SympMatrix::new(m.clone()) {
            Ok(f) => f,
            Err(_) => SympMatrix::renormalize(m)?,
        };
        if fine_enough(self.frames.last().expect("seeded"), &frame) {
            self.raw = &self.tr_inv * frame.matrix() * &self.tr;
            self.times.push(t1);
            self.frames.push(frame);
            return Ok(());
        }
        if depth >= 20 {
            return Err(Error::StepGuardViolated { steps: 1 << depth });
        }
        let mid = 0.5 * (t0 + t1);
        let z_mid = step(self.system, z, mid - t0, self.convention, self.scheme)?;
        self.advance(z, t0, mid, depth + 1)?;
        self.advance(&z_mid, mid, t1, depth + 1)
    }
}

/// Both winding invariants of a linearized orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReparamReport {
    /// `Δ̃` along the `K`-orbit over its period.
    pub delta_k: f64,
    /// `Δ̃` along the same orbit as an `f ∘ K` orbit over its rescaled period.
    pub delta_h: f64,
    /// `Δ` of the eigenvalue map for the `K`-orbit.
    pub rho_k: f64,
    /// `Δ` of the eigenvalue map for the `f ∘ K`-orbit.
    pub rho_h: f64,
}

impl ReparamReport {
    pub fn tilde_gap(&self) -> f64 {
        (self.delta_k - self.delta_h).abs()
    }

    pub fn rho_gap(&self) -> f64 {
        (self.rho_k - self.rho_h).abs()
    }
}

/// Closure residual `|φ_T(z0) - z0|`, with angles compared mod `2π` on a
/// torus base.
pub fn closure_residual<S: HamSystem + ?Sized>(system: &S, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    wrapped_difference(system, a, b).amax()
}

/// `b - a` with angle coordinates reduced to `(-π, π]` on a torus base.
pub fn wrapped_difference<S: HamSystem + ?Sized>(system: &S, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut d = b - a;
    if system.topology() == Topology::TorusBase {
        for i in 0..system.dim() / 2 {
            d[i] -= 2.0 * PI * (d[i] / (2.0 * PI)).round();
        }
    }
    d
}

/// Winding invariants of a periodic `K`-orbit and of the same orbit under
/// `H = f ∘ K`, whose period is `T / f'(K)`.
pub fn delta_under_reparametrization<S: HamSystem + Clone>(
    system: &S,
    map: &EnergyMap,
    orbit: &Trajectory,
) -> Result<ReparamReport> {
    let residual = closure_residual(system, orbit.start(), orbit.end());
    if !(residual < 1e-6) {
        return Err(Error::NonPeriodicInput { residual });
    }
    let level = system.energy(orbit.start());
    let slope = map.derivative(level);
    if !(slope > 0.0) {
        return Err(Error::InvalidParams(format!("f must be increasing at the level, f' = {slope}")));
    }
    let steps = orbit.times.len() - 1;
    let path_k = variational_flow(system, orbit, orbit.convention)?;
    let h = Reparametrized { inner: system.clone(), map: map.clone() };
    let traj_h = flow_with(&h, orbit.start(), orbit.duration() / slope, steps, orbit.convention, orbit.scheme)?;
    let path_h = variational_flow(&h, &traj_h, orbit.convention)?;
    Ok(ReparamReport {
        delta_k: delta_tilde(&path_k)?.delta,
        delta_h: delta_tilde(&path_h)?.delta,
        rho_k: delta_rho(&path_k)?.delta,
        rho_h: delta_rho(&path_h)?.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::{linear_flow, QuadHamiltonian};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn oscillator_returns_after_full_turn() {
        let osc = QuadraticSystem::oscillator(1);
        let tr = flow(&osc, &v(&[1.0, 0.0]), 2.0 * PI, 629, SignConvention::JGrad).unwrap();
        assert!((tr.end() - v(&[1.0, 0.0])).amax() < 1e-6);
        assert!(tr.within_drift_bound());
    }

    #[test]
    fn constant_energy_gives_constant_trajectory() {
        let zero = QuadraticSystem::new(DMatrix::zeros(2, 2)).unwrap();
        let tr = flow(&zero, &v(&[0.3, -0.2]), 1.0, 16, SignConvention::JGrad).unwrap();
        assert!(tr.states.iter().all(|z| *z == v(&[0.3, -0.2])));
    }

    #[test]
    fn pendulum_energy_drift() {
        let p = Pendulum::new(-1.0);
        let tr = flow(&p, &v(&[1.0, 0.5]), 100.0, 10_000, SignConvention::MinusJGrad).unwrap();
        assert!(tr.energy_drift < 1e-6, "drift {}", tr.energy_drift);
        let mid = flow_with(&p, &v(&[1.0, 0.5]), 100.0, 10_000, SignConvention::MinusJGrad, Scheme::Midpoint)
            .unwrap();
        assert!(mid.energy_drift < 1e-3);
    }

    #[test]
    fn time_reversal() {
        let p = Pendulum::new(1.0);
        let z0 = v(&[0.7, 0.2]);
        let fwd = flow(&p, &z0, 5.0, 500, SignConvention::JGrad).unwrap();
        let back = flow(&p, fwd.end(), -5.0, 500, SignConvention::JGrad).unwrap();
        assert!((back.end() - z0).amax() < 1e-8);
    }

    #[test]
    fn variational_matches_linear_flow() {
        let s = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8]);
        let sys = QuadraticSystem::new(s.clone()).unwrap();
        let tr = flow(&sys, &v(&[0.1, 0.2]), 3.0, 300, SignConvention::JGrad).unwrap();
        let var = variational_flow(&sys, &tr, SignConvention::JGrad).unwrap();
        let lin = linear_flow(&QuadHamiltonian::constant(s).unwrap(), 0.0, 3.0, 300).unwrap();
        assert!(max_abs(&(var.last().matrix() - lin.last().matrix())) < 1e-8);
    }

    #[test]
    fn default_hessian_agrees_with_closed_form() {
        struct Fd;
        impl HamSystem for Fd {
            fn dim(&self) -> usize {
                2
            }
            fn energy(&self, z: &DVector<f64>) -> f64 {
                0.5 * z[1] * z[1] - z[0].cos()
            }
            fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
                DVector::from_vec(vec![z[0].sin(), z[1]])
            }
        }
        let z = v(&[0.4, 0.3]);
        let fd = Fd.hessian(&z);
        let exact = Pendulum::new(1.0).hessian(&z);
        assert!(max_abs(&(fd - exact)) < 1e-9);
    }

    #[test]
    fn stable_pendulum_winds_linearly() {
        let p = Pendulum::new(1.0);
        let tr = flow(&p, &v(&[0.0, 0.0]), 10.0, 1000, SignConvention::JGrad).unwrap();
        let var = variational_flow(&p, &tr, SignConvention::JGrad).unwrap();
        let d = delta_tilde(&var).unwrap().delta;
        assert!((d - 10.0 / PI).abs() < 1e-6);
    }

    #[test]
    fn energy_map_derivatives() {
        let f = EnergyMap::Polynomial(vec![0.0, 1.0, 1.0]);
        assert_eq!(f.value(2.0), 6.0);
        assert_eq!(f.derivative(2.0), 5.0);
        assert_eq!(f.second_derivative(2.0), 2.0);
    }

    #[test]
    fn reparametrization_of_oscillator() {
        let osc = QuadraticSystem::oscillator(1);
        let orbit = flow(&osc, &v(&[1.0, 0.0]), 2.0 * PI, 2000, SignConvention::JGrad).unwrap();
        let r = delta_under_reparametrization(&osc, &EnergyMap::Identity, &orbit).unwrap();
        assert_eq!(r.delta_k, r.delta_h);
        let r = delta_under_reparametrization(&osc, &EnergyMap::Scale(2.0), &orbit).unwrap();
        assert!(r.tilde_gap() < 1e-6);
        let r = delta_under_reparametrization(&osc, &EnergyMap::Polynomial(vec![0.0, 1.0, 1.0]), &orbit).unwrap();
        assert!(r.rho_gap() < 1e-4, "{r:?}");
        let short = flow(&osc, &v(&[1.0, 0.0]), 3.0, 300, SignConvention::JGrad).unwrap();
        assert!(matches!(
            delta_under_reparametrization(&osc, &EnergyMap::Identity, &short),
            Err(Error::NonPeriodicInput { .. })
        ));
    }
}
