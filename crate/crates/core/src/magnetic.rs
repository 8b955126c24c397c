//! Twisted geodesic flow of a charge on the flat torus `T^2 = R^2 / 2πZ^2`.
//!
//! The metric is `e^{2u(q)} (dq1^2 + dq2^2)` and the magnetic form is
//! `b(q) dq1 ∧ dq2` with `b = b̄ + b̃`, `b̃` of zero mean. The constant part is
//! built into the Poisson structure
//! `P = [[0, -I], [I, -b̄ J₂]]`, the oscillating part is carried by the gauge
//! potential `A(q)` with `curl A = b̃`, and the state is `(q, p̃)` with kinetic
//! momentum `p = p̃ + A(q)`. The kinetic energy is
//! `K = ½ e^{-2u(q)} |p̃ + A(q)|^2` and the physical flow `ż = -P ∇K` reads
//!
//! ```text
//! q̇ = ∂K/∂p,   ṗ = -∂K/∂q + b(q) J₂ q̇.
//! ```

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{HamSystem, SignConvention, Topology};
use crate::orbit::OrbitRecord;
use crate::random;

/// Largest admissible wave number per axis.
pub const MAX_MODE: i32 = 5;
/// Largest admissible amplitude of a single metric mode.
pub const MAX_AMPLITUDE: f64 = 0.2;

/// `J₂ = [[0, -1], [1, 0]]`.
fn j2() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

/// One term `amp · cos(kx q1 + ky q2 + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub kx: i32,
    pub ky: i32,
    pub amp: f64,
    pub phase: f64,
}

impl Mode {
    fn k(&self) -> Vector2<f64> {
        Vector2::new(self.kx as f64, self.ky as f64)
    }

    fn angle(&self, q: &Vector2<f64>) -> f64 {
        self.k().dot(q) + self.phase
    }
}

/// Truncated Fourier series on `T^2` without constant term.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Fourier2 {
    pub modes: Vec<Mode>,
}

impl Fourier2 {
    pub fn new(modes: Vec<Mode>) -> Self {
        Fourier2 { modes }
    }

    /// From `[kx, ky, amp, phase]` rows.
    pub fn from_rows(rows: &[[f64; 4]]) -> Result<Self> {
        let mut modes = Vec::with_capacity(rows.len());
        for row in rows {
            let (kx, ky) = (row[0], row[1]);
            if kx.fract() != 0.0 || ky.fract() != 0.0 {
                return Err(Error::InvalidParams(format!("wave numbers must be integers, got ({kx}, {ky})")));
            }
            modes.push(Mode { kx: kx as i32, ky: ky as i32, amp: row[2], phase: row[3] });
        }
        Ok(Fourier2 { modes })
    }

    pub fn to_rows(&self) -> Vec<[f64; 4]> {
        self.modes.iter().map(|m| [m.kx as f64, m.ky as f64, m.amp, m.phase]).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn value(&self, q: &Vector2<f64>) -> f64 {
        self.modes.iter().map(|m| m.amp * m.angle(q).cos()).sum()
    }

    pub fn gradient(&self, q: &Vector2<f64>) -> Vector2<f64> {
        self.modes.iter().fold(Vector2::zeros(), |acc, m| acc - m.k() * (m.amp * m.angle(q).sin()))
    }

    pub fn hessian(&self, q: &Vector2<f64>) -> Matrix2<f64> {
        self.modes
            .iter()
            .fold(Matrix2::zeros(), |acc, m| acc - m.k() * m.k().transpose() * (m.amp * m.angle(q).cos()))
    }

    /// `Σ |amp|`, an upper bound for `|value|`.
    pub fn amplitude_bound(&self) -> f64 {
        self.modes.iter().map(|m| m.amp.abs()).sum()
    }

    fn violations(&self, what: &str, out: &mut Vec<String>) {
        for m in &self.modes {
            if m.kx == 0 && m.ky == 0 {
                out.push(format!("{what}: constant (0,0) mode not allowed in the Fourier data"));
            }
            if m.kx.abs() > MAX_MODE || m.ky.abs() > MAX_MODE {
                out.push(format!("{what}: wave numbers limited to |k| <= {MAX_MODE}, got ({}, {})", m.kx, m.ky));
            }
            if !m.amp.is_finite() || !m.phase.is_finite() {
                out.push(format!("{what}: non-finite mode data"));
            }
        }
    }
}

/// Conformal factor of the metric.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Flat,
    /// `e^{2u}` with `u` a Fourier series.
    Conformal(Fourier2),
}

/// Magnetic field density.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Constant(f64),
    /// Mean plus oscillating Fourier part.
    Fourier { mean: f64, modes: Fourier2 },
}

impl Field {
    pub fn mean(&self) -> f64 {
        match self {
            Field::Constant(b) => *b,
            Field::Fourier { mean, .. } => *mean,
        }
    }
}

/// JSON form of a magnetic system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagneticConfig {
    pub metric: MetricConfig,
    pub field: FieldConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MetricConfig {
    Flat,
    Conformal { fourier: Vec<[f64; 4]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FieldConfig {
    Constant { value: f64 },
    Fourier { value: f64, fourier: Vec<[f64; 4]> },
}

impl MagneticConfig {
    pub fn flat(b: f64) -> Self {
        MagneticConfig { metric: MetricConfig::Flat, field: FieldConfig::Constant { value: b } }
    }

    /// Every violated precondition, with a message naming it.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let metric = match &self.metric {
            MetricConfig::Flat => Ok(Metric::Flat),
            MetricConfig::Conformal { fourier } => Fourier2::from_rows(fourier).map(Metric::Conformal),
        };
        let field = match &self.field {
            FieldConfig::Constant { value } => Ok(Field::Constant(*value)),
            FieldConfig::Fourier { value, fourier } => {
                Fourier2::from_rows(fourier).map(|modes| Field::Fourier { mean: *value, modes })
            }
        };
        match (metric, field) {
            (Ok(m), Ok(f)) => out.extend(system_violations(&m, &f)),
            (m, f) => {
                for e in [m.err(), f.err()].into_iter().flatten() {
                    out.push(e.to_string());
                }
            }
        }
        out
    }

    pub fn build(&self) -> Result<MagneticSystem> {
        let v = self.violations();
        if !v.is_empty() {
            return Err(Error::InvalidParams(v.join("; ")));
        }
        let metric = match &self.metric {
            MetricConfig::Flat => Metric::Flat,
            MetricConfig::Conformal { fourier } => Metric::Conformal(Fourier2::from_rows(fourier)?),
        };
        let field = match &self.field {
            FieldConfig::Constant { value } => Field::Constant(*value),
            FieldConfig::Fourier { value, fourier } => {
                Field::Fourier { mean: *value, modes: Fourier2::from_rows(fourier)? }
            }
        };
        MagneticSystem::new(metric, field)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn system_violations(metric: &Metric, field: &Field) -> Vec<String> {
    let mut out = Vec::new();
    if let Metric::Conformal(u) = metric {
        u.violations("metric", &mut out);
        for m in &u.modes {
            if m.amp.abs() > MAX_AMPLITUDE {
                out.push(format!("metric: mode amplitude {} exceeds the cap {MAX_AMPLITUDE}", m.amp));
            }
        }
    }
    match field {
        Field::Constant(b) => {
            if !(b.is_finite() && *b > 0.0) {
                out.push(format!("symplectic magnetic field requires b > 0, got {b}"));
            }
        }
        Field::Fourier { mean, modes } => {
            modes.violations("field", &mut out);
            let min = sample_min(|q| mean + modes.value(q));
            if !(min > 0.0) {
                out.push(format!("symplectic magnetic field requires b > 0, minimum sampled value {min}"));
            }
        }
    }
    out
}

/// Minimum over a 64 x 64 grid of the torus.
fn sample_min<F: Fn(&Vector2<f64>) -> f64>(f: F) -> f64 {
    grid_points(64).iter().map(f).fold(f64::INFINITY, f64::min)
}

fn grid_points(n: usize) -> Vec<Vector2<f64>> {
    let h = 2.0 * PI / n as f64;
    (0..n).flat_map(|i| (0..n).map(move |j| Vector2::new(i as f64 * h, j as f64 * h))).collect()
}

/// Kinetic Hamiltonian of a charge on the torus with its twisted structure.
#[derive(Debug, Clone, PartialEq)]
pub struct MagneticSystem {
    metric: Metric,
    field: Field,
    u: Fourier2,
    b_mean: f64,
    b_osc: Fourier2,
}

impl MagneticSystem {
    /// Convention of the physical equations of motion.
    pub const CONVENTION: SignConvention = SignConvention::MinusJGrad;

    pub fn new(metric: Metric, field: Field) -> Result<Self> {
        let v = system_violations(&metric, &field);
        if !v.is_empty() {
            return Err(Error::InvalidParams(v.join("; ")));
        }
        Ok(Self::assemble(metric, field))
    }

    /// Geodesic flow (`b = 0`) of the given metric.
    pub fn geodesic(metric: Metric) -> Result<Self> {
        let mut v = system_violations(&metric, &Field::Constant(1.0));
        v.retain(|m| !m.starts_with("symplectic"));
        if !v.is_empty() {
            return Err(Error::InvalidParams(v.join("; ")));
        }
        Ok(Self::assemble(metric, Field::Constant(0.0)))
    }

    pub fn flat(b: f64) -> Result<Self> {
        MagneticSystem::new(Metric::Flat, Field::Constant(b))
    }

    fn assemble(metric: Metric, field: Field) -> Self {
        let u = match &metric {
            Metric::Flat => Fourier2::default(),
            Metric::Conformal(u) => u.clone(),
        };
        let (b_mean, b_osc) = match &field {
            Field::Constant(b) => (*b, Fourier2::default()),
            Field::Fourier { mean, modes } => (*mean, modes.clone()),
        };
        MagneticSystem { metric, field, u, b_mean, b_osc }
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn is_flat_constant(&self) -> bool {
        self.u.is_empty() && self.b_osc.is_empty()
    }

    pub fn conformal_exponent(&self, q: &Vector2<f64>) -> f64 {
        self.u.value(q)
    }

    pub fn field_at(&self, q: &Vector2<f64>) -> f64 {
        self.b_mean + self.b_osc.value(q)
    }

    /// Gauge potential of the oscillating field part: for each mode
    /// `A = amp (-ky, kx) / |k|^2 · sin(k·q + φ)`.
    pub fn gauge(&self, q: &Vector2<f64>) -> Vector2<f64> {
        self.b_osc.modes.iter().fold(Vector2::zeros(), |acc, m| {
            let k = m.k();
            acc + Vector2::new(-k.y, k.x) * (m.amp / k.norm_squared() * m.angle(q).sin())
        })
    }

    /// `DA`, rows are the gradients of the components.
    fn gauge_jacobian(&self, q: &Vector2<f64>) -> Matrix2<f64> {
        self.b_osc.modes.iter().fold(Matrix2::zeros(), |acc, m| {
            let k = m.k();
            let v = Vector2::new(-k.y, k.x) * (m.amp / k.norm_squared());
            acc + v * k.transpose() * m.angle(q).cos()
        })
    }

    /// `Σ_i w_i Hess A_i`.
    fn gauge_hessian_along(&self, q: &Vector2<f64>, w: &Vector2<f64>) -> Matrix2<f64> {
        self.b_osc.modes.iter().fold(Matrix2::zeros(), |acc, m| {
            let k = m.k();
            let v = Vector2::new(-k.y, k.x) * (m.amp / k.norm_squared());
            acc - k * k.transpose() * (v.dot(w) * m.angle(q).sin())
        })
    }

    fn split(z: &DVector<f64>) -> (Vector2<f64>, Vector2<f64>) {
        (Vector2::new(z[0], z[1]), Vector2::new(z[2], z[3]))
    }

    /// Kinetic momentum `p = p̃ + A(q)`.
    pub fn kinetic_momentum(&self, z: &DVector<f64>) -> Vector2<f64> {
        let (q, pt) = Self::split(z);
        pt + self.gauge(&q)
    }

    /// State `(q, p̃)` with kinetic momentum `p` at `q`.
    pub fn state(&self, q: &Vector2<f64>, p: &Vector2<f64>) -> DVector<f64> {
        let pt = p - self.gauge(q);
        DVector::from_vec(vec![q.x, q.y, pt.x, pt.y])
    }

    /// `(q̇, ṗ)` from the Lorentz form of the equations, in kinetic momenta.
    pub fn lorentz_rhs(&self, q: &Vector2<f64>, p: &Vector2<f64>) -> (Vector2<f64>, Vector2<f64>) {
        let e = (-2.0 * self.u.value(q)).exp();
        let grad_e = self.u.gradient(q) * (-2.0 * e);
        let qdot = p * e;
        let pdot = -grad_e * (0.5 * p.norm_squared()) + j2() * qdot * self.field_at(q);
        (qdot, pdot)
    }

    /// `Σ |p|^2`-free speed: `|q̇|` in the metric, which is `√(2K)`.
    pub fn metric_speed(&self, z: &DVector<f64>) -> f64 {
        (2.0 * self.energy(z)).sqrt()
    }

    /// Local cyclotron frequency `b(q) e^{-2u(q)}`.
    pub fn cyclotron(&self, q: &Vector2<f64>) -> f64 {
        self.field_at(q) * (-2.0 * self.u.value(q)).exp()
    }

    fn cyclotron_derivatives(&self, q: &Vector2<f64>) -> (f64, Vector2<f64>, Matrix2<f64>) {
        let e = (-2.0 * self.u.value(q)).exp();
        let gu = self.u.gradient(q);
        let ge = gu * (-2.0 * e);
        let he = (gu * gu.transpose() * 4.0 - self.u.hessian(q) * 2.0) * e;
        let b = self.field_at(q);
        let gb = self.b_osc.gradient(q);
        let hb = self.b_osc.hessian(q);
        let g = b * e;
        let grad = gb * e + ge * b;
        let hess = hb * e + gb * ge.transpose() + ge * gb.transpose() + he * b;
        (g, grad, hess)
    }

    /// Largest value of `e^{u}` over a 64 x 64 grid.
    pub fn max_conformal_factor(&self) -> f64 {
        -sample_min(|q| -self.u.value(q).exp())
    }
}

impl HamSystem for MagneticSystem {
    fn dim(&self) -> usize {
        4
    }

    fn energy(&self, z: &DVector<f64>) -> f64 {
        let (q, _) = Self::split(z);
        0.5 * (-2.0 * self.u.value(&q)).exp() * self.kinetic_momentum(z).norm_squared()
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let (q, pt) = Self::split(z);
        let w = pt + self.gauge(&q);
        let e = (-2.0 * self.u.value(&q)).exp();
        let ge = self.u.gradient(&q) * (-2.0 * e);
        let da = self.gauge_jacobian(&q);
        let dq = ge * (0.5 * w.norm_squared()) + da.transpose() * w * e;
        let dp = w * e;
        DVector::from_vec(vec![dq.x, dq.y, dp.x, dp.y])
    }

    fn hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let (q, pt) = Self::split(z);
        let w = pt + self.gauge(&q);
        let e = (-2.0 * self.u.value(&q)).exp();
        let gu = self.u.gradient(&q);
        let ge = gu * (-2.0 * e);
        let he = (gu * gu.transpose() * 4.0 - self.u.hessian(&q) * 2.0) * e;
        let da = self.gauge_jacobian(&q);
        let daw = da.transpose() * w;
        let hqq = he * (0.5 * w.norm_squared())
            + ge * daw.transpose()
            + daw * ge.transpose()
            + (da.transpose() * da + self.gauge_hessian_along(&q, &w)) * e;
        let hpq = w * ge.transpose() + da * e;
        let mut h = DMatrix::zeros(4, 4);
        for r in 0..2 {
            for c in 0..2 {
                h[(r, c)] = hqq[(r, c)];
                h[(2 + r, c)] = hpq[(r, c)];
                h[(c, 2 + r)] = hpq[(r, c)];
                h[(2 + r, 2 + c)] = if r == c { e } else { 0.0 };
            }
        }
        (&h + h.transpose()) * 0.5
    }

    fn topology(&self) -> Topology {
        Topology::TorusBase
    }

    fn structure(&self) -> DMatrix<f64> {
        let b = self.b_mean;
        DMatrix::from_row_slice(4, 4, &[
            0.0, 0.0, -1.0, 0.0, //
            0.0, 0.0, 0.0, -1.0, //
            1.0, 0.0, 0.0, b, //
            0.0, 1.0, -b, 0.0,
        ])
    }

    fn trivialization(&self) -> DMatrix<f64> {
        let h = self.b_mean / 2.0;
        DMatrix::from_row_slice(4, 4, &[
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, h, 1.0, 0.0, //
            -h, 0.0, 0.0, 1.0,
        ])
    }
}

/// The Hamiltonian system whose `-P ∇K` flow is the twisted geodesic flow.
pub fn equations_of_motion(sys: &MagneticSystem) -> &MagneticSystem {
    sys
}

/// Flat torus with constant field: every orbit on `K = r^2` is a circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagneticOracle {
    pub b: f64,
    pub r: f64,
}

impl MagneticOracle {
    pub fn new(b: f64, r: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParams(format!("symplectic magnetic field requires b > 0, got {b}")));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParams(format!("energy level requires r > 0, got {r}")));
        }
        Ok(MagneticOracle { b, r })
    }

    /// `v = r √2`, so that `K = ½ v^2 = r^2`.
    pub fn speed(&self) -> f64 {
        self.r * 2f64.sqrt()
    }

    pub fn radius(&self) -> f64 {
        self.speed() / self.b
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.b
    }

    /// Closed-form orbit `p(t) = R(bt) p0`, `q(t) = c - J₂ p(t) / b`.
    pub fn position(&self, center: &Vector2<f64>, t: f64) -> Vector2<f64> {
        center - j2() * self.momentum(t) / self.b
    }

    pub fn momentum(&self, t: f64) -> Vector2<f64> {
        let (s, c) = (self.b * t).sin_cos();
        Vector2::new(c, s) * self.speed()
    }

    /// Initial state of the circle around `center` starting with `p = (v, 0)`.
    pub fn initial_state(&self, center: &Vector2<f64>) -> DVector<f64> {
        let q = self.position(center, 0.0);
        let p = self.momentum(0.0);
        DVector::from_vec(vec![q.x, q.y, p.x, p.y])
    }
}

/// Default center for oracle circles.
pub fn default_center() -> Vector2<f64> {
    Vector2::new(PI, PI)
}

/// Exact orbit record of the oracle circle around the default center.
pub fn oracle_orbit(oracle: &MagneticOracle) -> OrbitRecord {
    OrbitRecord {
        z0: oracle.initial_state(&default_center()).iter().cloned().collect(),
        period: oracle.period(),
        energy: oracle.r * oracle.r,
        residual: 0.0,
        contractible: true,
        winding: [0, 0],
        delta_per_period: None,
        iterations: 0,
        steps: crate::orbit::DEFAULT_STEPS,
    }
}

/// `count` points on `K = r^2`, positions uniform on the torus and kinetic
/// momentum directions uniform on the circle.
pub fn sample_level(sys: &MagneticSystem, r: f64, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParams(format!("energy level requires r > 0, got {r}")));
    }
    let mut rng = random::rng(seed);
    let pos = Uniform::new(0.0, 2.0 * PI).expect("valid range");
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let q = Vector2::new(rng.sample(pos), rng.sample(pos));
        let theta: f64 = rng.sample(pos);
        out.push(level_point(sys, &q, theta, r));
    }
    Ok(out)
}

/// Point on `K = r^2` over `q` with kinetic momentum direction `theta`,
/// projected onto the level by rescaling the momentum.
pub fn level_point(sys: &MagneticSystem, q: &Vector2<f64>, theta: f64, r: f64) -> DVector<f64> {
    let target = r * r;
    let mut p = Vector2::new(theta.cos(), theta.sin()) * (r * 2f64.sqrt() * sys.u.value(q).exp());
    let mut z = sys.state(q, &p);
    for _ in 0..3 {
        let k = sys.energy(&z);
        if (k - target).abs() < 1e-15 * target.max(1e-300) {
            break;
        }
        p *= (target / k).sqrt();
        z = sys.state(q, &p);
    }
    z
}

/// Kind of critical point of the cyclotron frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    Maximum,
    Minimum,
    Saddle,
    /// The frequency is constant; every point is critical.
    Degenerate,
}

/// Critical point of `g(q) = b(q) e^{-2u(q)}`; small orbits around it close up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidingCenter {
    pub q: Vector2<f64>,
    pub frequency: f64,
    pub kind: CriticalKind,
}

/// Critical points of the cyclotron frequency from a 32 x 32 grid search
/// refined by Newton's method, deduplicated mod `2π`.
pub fn guiding_centers(sys: &MagneticSystem) -> Vec<GuidingCenter> {
    if sys.is_flat_constant() {
        return vec![GuidingCenter { q: default_center(), frequency: sys.b_mean, kind: CriticalKind::Degenerate }];
    }
    const N: usize = 32;
    let h = 2.0 * PI / N as f64;
    let at = |i: isize, j: isize| Vector2::new(i as f64 * h, j as f64 * h);
    let gradn = |q: &Vector2<f64>| sys.cyclotron_derivatives(q).1.norm();
    let steepest = (0..N * N).map(|k| gradn(&at((k / N) as isize, (k % N) as isize))).fold(0.0, f64::max);
    if steepest < 1e-12 * sys.b_mean {
        // constant frequency: every point is critical
        let q = default_center();
        return vec![GuidingCenter { q, frequency: sys.cyclotron(&q), kind: CriticalKind::Degenerate }];
    }
    let mut found: Vec<GuidingCenter> = Vec::new();
    for i in 0..N as isize {
        for j in 0..N as isize {
            let g0 = gradn(&at(i, j));
            let mut local_min = true;
            'nb: for di in -1..=1 {
                for dj in -1..=1 {
                    if (di, dj) != (0, 0) && gradn(&at(i + di, j + dj)) < g0 {
                        local_min = false;
                        break 'nb;
                    }
                }
            }
            if !local_min {
                continue;
            }
            let mut q = at(i, j);
            let mut converged = false;
            for _ in 0..50 {
                let (_, grad, hess) = sys.cyclotron_derivatives(&q);
                if grad.norm() < 1e-13 {
                    converged = true;
                    break;
                }
                // ridges of critical points make the Hessian singular
                let svd = hess.svd(true, true);
                let cut = 1e-9 * svd.singular_values.max();
                match svd.solve(&grad, cut) {
                    Ok(step) if step.iter().all(|x| x.is_finite()) => q -= step,
                    _ => break,
                }
            }
            if !converged && sys.cyclotron_derivatives(&q).1.norm() > 1e-10 {
                continue;
            }
            let q = q.map(|x| x.rem_euclid(2.0 * PI));
            let dup = found.iter().any(|c| {
                let d = (c.q - q).map(|x| x - 2.0 * PI * (x / (2.0 * PI)).round());
                d.norm() < 1e-6
            });
            if dup {
                continue;
            }
            let (g, _, hess) = sys.cyclotron_derivatives(&q);
            let eig = hess.symmetric_eigenvalues();
            let tol = 1e-9 * eig.amax();
            let kind = if eig.iter().all(|&l| l <= tol) {
                CriticalKind::Maximum
            } else if eig.iter().all(|&l| l >= -tol) {
                CriticalKind::Minimum
            } else {
                CriticalKind::Saddle
            };
            found.push(GuidingCenter { q, frequency: g, kind });
        }
    }
    found.sort_by(|a, b| {
        let rank = |k: CriticalKind| match k {
            CriticalKind::Maximum => 0,
            CriticalKind::Minimum => 1,
            _ => 2,
        };
        rank(a.kind).cmp(&rank(b.kind)).then(b.frequency.total_cmp(&a.frequency))
    });
    found
}

/// Circle seed of radius `|q̇| / Ω` around a guiding center, starting with
/// kinetic momentum direction `theta`; returns the state and the period
/// `2π / Ω`.
pub fn circle_seed(sys: &MagneticSystem, center: &GuidingCenter, r: f64, theta: f64) -> (DVector<f64>, f64) {
    let c = center.q;
    let omega = center.frequency;
    let speed = r * 2f64.sqrt() * (-sys.u.value(&c)).exp();
    let qdot = Vector2::new(theta.cos(), theta.sin()) * speed;
    let q0 = c - j2() * qdot / omega;
    (level_point(sys, &q0, theta, r), 2.0 * PI / omega)
}

/// Riemannian length `Σ e^{u(mid)} |Δq|` of the position curve.
pub fn arc_length(sys: &MagneticSystem, states: &[DVector<f64>]) -> f64 {
    states
        .windows(2)
        .map(|w| {
            let a = Vector2::new(w[0][0], w[0][1]);
            let b = Vector2::new(w[1][0], w[1][1]);
            let mid = (a + b) * 0.5;
            sys.u.value(&mid).exp() * (b - a).norm()
        })
        .sum()
}

/// `√2 · max e^{u} · r · T`.
pub fn length_bound(sys: &MagneticSystem, r: f64, t: f64) -> f64 {
    2f64.sqrt() * sys.max_conformal_factor() * r * t
}

/// Integer winding of a lifted position loop.
pub fn winding(start: &DVector<f64>, end: &DVector<f64>) -> [i64; 2] {
    [
        ((end[0] - start[0]) / (2.0 * PI)).round() as i64,
        ((end[1] - start[1]) / (2.0 * PI)).round() as i64,
    ]
}
