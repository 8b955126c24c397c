//! Periodic orbits by Newton shooting, and the growth of `Δ̃` along their
//! iterates.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{
    closure_residual, flow_endpoint, flow_jacobian, flow_with, variational_flow, vector_field, wrapped_difference,
    HamSystem, Scheme, SignConvention, Topology,
};
use crate::io::{fmt_f64, write_csv};
use crate::magnetic::{circle_seed, guiding_centers, MagneticSystem};
use crate::path::delta_tilde;
use crate::random;
use crate::symp::SympMatrix;

/// Integration steps per period used by the shooting map.
pub const DEFAULT_STEPS: usize = 2000;
/// Largest closure residual a returned orbit may carry.
pub const RESIDUAL_BOUND: f64 = 1e-8;
/// Relative singular value cut of the Newton pseudo-inverse. Orbit families
/// leave singular values far below it.
const PINV_CUT: f64 = 1e-8;

/// A periodic orbit found by shooting, or known in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub z0: Vec<f64>,
    pub period: f64,
    pub energy: f64,
    /// `max |φ_T(z0) - z0|`, angles compared mod `2π`.
    pub residual: f64,
    pub contractible: bool,
    /// Lifted displacement of the position loop in units of `2π`.
    pub winding: [i64; 2],
    pub delta_per_period: Option<f64>,
    pub iterations: usize,
    /// Integration steps per period at which the residual was measured.
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

impl OrbitRecord {
    pub fn state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.z0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    pub steps: usize,
    pub convention: SignConvention,
    pub scheme: Scheme,
    /// Closure residual at which the iteration stops.
    pub tol: f64,
}

impl ShootOptions {
    pub fn new(convention: SignConvention) -> Self {
        ShootOptions { steps: DEFAULT_STEPS, convention, scheme: Scheme::default(), tol: 1e-11 }
    }

    pub fn magnetic() -> Self {
        Self::new(MagneticSystem::CONVENTION)
    }
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self::new(SignConvention::default())
    }
}

fn winding_of<S: HamSystem + ?Sized>(system: &S, a: &DVector<f64>, b: &DVector<f64>) -> [i64; 2] {
    let mut w = [0i64; 2];
    if system.topology() == Topology::TorusBase {
        for (i, slot) in w.iter_mut().enumerate().take((system.dim() / 2).min(2)) {
            *slot = ((b[i] - a[i]) / (2.0 * std::f64::consts::PI)).round() as i64;
        }
    }
    w
}

struct Shooter<'a, S: HamSystem + ?Sized> {
    system: &'a S,
    section: DVector<f64>,
    seed: DVector<f64>,
    level: f64,
    energy_row: DVector<f64>,
}

impl<S: HamSystem + ?Sized> Shooter<'_, S> {
    fn residual(&self, z: &DVector<f64>, z_t: &DVector<f64>) -> DVector<f64> {
        let d = z.len();
        let mut f = DVector::zeros(d + 2);
        f.rows_mut(0, d).copy_from(&wrapped_difference(self.system, z, z_t));
        f[d] = self.section.dot(&(z - &self.seed));
        let scale = self.energy_row.norm().max(1e-300);
        f[d + 1] = (self.system.energy(z) - self.level) / scale;
        f
    }
}

/// Newton shooting for a periodic orbit through a section orthogonal to the
/// flow at `seed_z`, on the energy level of `seed_z`.
///
/// Unknowns are `(z, T)`; the least squares step uses an SVD pseudo-inverse
/// so that families of orbits (where `φ_T - I` is rank deficient) still
/// converge, and is damped by halving up to 8 times.
pub fn shoot_periodic<S: HamSystem + ?Sized>(
    system: &S,
    seed_z: &DVector<f64>,
    seed_t: f64,
    max_iter: usize,
    opts: &ShootOptions,
) -> Result<OrbitRecord> {
    let d = system.dim();
    if seed_z.len() != d {
        return Err(Error::DimMismatch { left: seed_z.len(), right: d });
    }
    if !(seed_t > 0.0 && seed_t.is_finite()) {
        return Err(Error::InvalidParams(format!("seed period must be positive, got {seed_t}")));
    }
    let f0 = vector_field(system, seed_z, opts.convention);
    let fnorm = f0.norm();
    if !(fnorm > 0.0) {
        return Err(Error::InvalidParams("seed is an equilibrium".into()));
    }
    let grad = system.gradient(seed_z);
    let shooter = Shooter {
        system,
        section: f0 / fnorm,
        seed: seed_z.clone(),
        level: system.energy(seed_z),
        energy_row: grad,
    };
    let steps = opts.steps;
    let mut z = seed_z.clone();
    let mut t = seed_t;
    let mut cond = 1.0;
    let mut slow = false;
    for iter in 0..=max_iter {
        let (z_t, m) = flow_jacobian(system, &z, t, steps, opts.convention, opts.scheme)?;
        let closure = closure_residual(system, &z, &z_t);
        let f = shooter.residual(&z, &z_t);
        // below the bound, slow progress means the discretization floor
        if closure < opts.tol || (slow && closure < RESIDUAL_BOUND) {
            return Ok(record(system, &z, &z_t, t, closure, iter, steps));
        }
        if iter == max_iter {
            break;
        }
        let mut jac = DMatrix::zeros(d + 2, d + 1);
        let mut mi = m;
        for i in 0..d {
            mi[(i, i)] -= 1.0;
        }
        jac.view_mut((0, 0), (d, d)).copy_from(&mi);
        jac.view_mut((0, d), (d, 1)).copy_from(&vector_field(system, &z_t, opts.convention));
        let grad = system.gradient(&z) / shooter.energy_row.norm().max(1e-300);
        for j in 0..d {
            jac[(d, j)] = shooter.section[j];
            jac[(d + 1, j)] = grad[j];
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let delta = svd
            .pseudo_inverse(PINV_CUT * smax)
            .map_err(|e| Error::NoConvergence(format!("pseudo-inverse failed: {e}")))?
            * -&f;
        let base = f.norm();
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..=8 {
            let zt = &z + delta.rows(0, d) * lam;
            let tt = t + delta[d] * lam;
            if tt > 0.0 {
                if let Ok(end) = flow_endpoint(system, &zt, tt, steps, opts.convention, opts.scheme) {
                    let next = shooter.residual(&zt, &end).norm();
                    if next < base {
                        slow = next > 0.5 * base;
                        z = zt;
                        t = tt;
                        accepted = true;
                        break;
                    }
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            // Stalled at the discretization floor.
            if closure < RESIDUAL_BOUND {
                return Ok(record(system, &z, &z_t, t, closure, iter, steps));
            }
            break;
        }
    }
    if cond > 1e12 {
        return Err(Error::SingularJacobian { cond });
    }
    Err(Error::NoConvergence(format!("shooting did not close after {max_iter} iterations")))
}

fn record<S: HamSystem + ?Sized>(
    system: &S,
    z: &DVector<f64>,
    z_t: &DVector<f64>,
    t: f64,
    residual: f64,
    iterations: usize,
    steps: usize,
) -> OrbitRecord {
    let winding = winding_of(system, z, z_t);
    OrbitRecord {
        z0: z.iter().cloned().collect(),
        period: t,
        energy: system.energy(z),
        residual,
        contractible: winding == [0, 0],
        winding,
        delta_per_period: None,
        iterations,
        steps,
    }
}

/// Closure residual of a record when integrated again at its own step count.
pub fn recheck<S: HamSystem + ?Sized>(system: &S, orbit: &OrbitRecord, convention: SignConvention) -> Result<f64> {
    let z = orbit.state();
    let end = flow_endpoint(system, &z, orbit.period, orbit.steps, convention, Scheme::default())?;
    Ok(closure_residual(system, &z, &end))
}

/// Trivialized monodromy `Φ(T)` of the orbit.
pub fn monodromy<S: HamSystem + ?Sized>(
    system: &S,
    orbit: &OrbitRecord,
    convention: SignConvention,
) -> Result<SympMatrix> {
    let traj = flow_with(system, &orbit.state(), orbit.period, orbit.steps.max(16), convention, Scheme::default())?;
    Ok(variational_flow(system, &traj, convention)?.last().clone())
}

/// `Δ̃` of the linearized flow over `j` periods, for `j = 1..=k`.
pub fn orbit_delta<S: HamSystem + ?Sized>(
    system: &S,
    orbit: &OrbitRecord,
    k: usize,
    convention: SignConvention,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let steps = orbit.steps.max(16);
    let traj = flow_with(system, &orbit.state(), orbit.period * k as f64, steps * k, convention, Scheme::default())?;
    let path = variational_flow(system, &traj, convention)?;
    let report = delta_tilde(&path)?;
    let times = path.times();
    let mut out = Vec::with_capacity(k);
    let mut idx = 0;
    for j in 1..=k {
        let target = traj.times[j * steps];
        while idx + 1 < times.len() && times[idx] < target {
            idx += 1;
        }
        if times[idx] != target {
            return Err(Error::SamplingTooCoarse(format!("period mark {target} missing from the frame grid")));
        }
        out.push((report.winding_trace[idx] - report.winding_trace[0]) / std::f64::consts::PI);
    }
    Ok(out)
}

/// `(jT, |Δ̃_j|)` pairs for the iterates of an orbit.
pub fn growth_samples(orbit: &OrbitRecord, deltas: &[f64]) -> Vec<(f64, f64)> {
    deltas.iter().enumerate().map(|(i, d)| ((i + 1) as f64 * orbit.period, d.abs())).collect()
}

/// Affine lower bound `|Δ̃| ≥ a T - c` fitted by least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub a: f64,
    /// Negated intercept, raised so that every sample lies above the line.
    pub c: f64,
    pub r_squared: f64,
    pub samples: Vec<(f64, f64)>,
}

impl GrowthFit {
    pub fn bound_holds(&self) -> bool {
        self.samples.iter().all(|&(t, d)| d >= self.a * t - self.c)
    }
}

pub fn growth_fit(samples: &[(f64, f64)]) -> Result<GrowthFit> {
    if samples.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 samples, got {}", samples.len())));
    }
    let n = samples.len() as f64;
    let mt = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let md = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let stt: f64 = samples.iter().map(|s| (s.0 - mt).powi(2)).sum();
    if !(stt > 1e-300) {
        return Err(Error::DegenerateFit("all sample times are equal".into()));
    }
    let std: f64 = samples.iter().map(|s| (s.0 - mt) * (s.1 - md)).sum();
    let a = std / stt;
    let b = md - a * mt;
    let ss_res: f64 = samples.iter().map(|s| (s.1 - a * s.0 - b).powi(2)).sum();
    let ss_tot: f64 = samples.iter().map(|s| (s.1 - md).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    let worst = samples.iter().map(|s| a * s.0 + b - s.1).fold(0.0, f64::max);
    Ok(GrowthFit { a, c: -b + worst, r_squared, samples: samples.to_vec() })
}

/// One row of a period sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    pub period: f64,
    pub residual: f64,
    pub contractible: bool,
    pub deltas: Vec<f64>,
    /// Error name when the row failed.
    pub error: Option<String>,
}

impl SweepRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Closed orbit on `K = r^2` seeded from a circle around the strongest
/// guiding center.
pub fn find_magnetic_orbit(sys: &MagneticSystem, r: f64, theta: f64, max_iter: usize) -> Result<OrbitRecord> {
    let centers = guiding_centers(sys);
    let center = centers.first().ok_or_else(|| Error::NoConvergence("no guiding center found".into()))?;
    let (z0, t0) = circle_seed(sys, center, r, theta);
    shoot_periodic(sys, &z0, t0, max_iter, &ShootOptions::magnetic())
}

/// Orbits for each `r`, independently seeded rows evaluated in parallel;
/// failed rows are kept with their error name.
pub fn period_bound_sweep(sys: &MagneticSystem, r_list: &[f64], seed: u64, k: usize) -> Result<Vec<SweepRow>> {
    if r_list.is_empty() || r_list.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParams("r values must be positive".into()));
    }
    if r_list.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParams("r values must be given in descending order".into()));
    }
    let rows = r_list
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut rng = random::rng(seed.wrapping_add(i as u64));
            let theta = rng.random_range(0.0..2.0 * std::f64::consts::PI);
            let found = find_magnetic_orbit(sys, r, theta, 30).and_then(|orbit| {
                let deltas = orbit_delta(sys, &orbit, k, MagneticSystem::CONVENTION)?;
                Ok((orbit, deltas))
            });
            match found {
                Ok((orbit, deltas)) => SweepRow {
                    r,
                    period: orbit.period,
                    residual: orbit.residual,
                    contractible: orbit.contractible,
                    deltas,
                    error: None,
                },
                Err(e) => SweepRow {
                    r,
                    period: f64::NAN,
                    residual: f64::NAN,
                    contractible: false,
                    deltas: Vec::new(),
                    error: Some(e.name().to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}

/// Columns `r, T, residual, contractible, delta_1..delta_k, status`.
pub fn sweep_csv(rows: &[SweepRow], k: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = ["r", "T", "residual", "contractible"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=k).map(|j| format!("delta_{j}")));
    header.push("status".into());
    let body = rows
        .iter()
        .map(|row| {
            let mut cells = vec![fmt_f64(row.r), fmt_f64(row.period), fmt_f64(row.residual), row.contractible.to_string()];
            cells.extend((0..k).map(|j| row.deltas.get(j).map_or_else(|| "NaN".to_string(), |d| fmt_f64(*d))));
            cells.push(row.error.clone().unwrap_or_else(|| "ok".into()));
            cells
        })
        .collect();
    (header, body)
}

pub fn write_sweep_csv(path: &std::path::Path, rows: &[SweepRow], k: usize) -> Result<()> {
    let (header, body) = sweep_csv(rows, k);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(path, &header, &body)
}

/// Largest ratio of periods across the successful rows.
pub fn period_spread(rows: &[SweepRow]) -> Option<f64> {
    let ts: Vec<f64> = rows.iter().filter(|r| r.ok()).map(|r| r.period).collect();
    if ts.is_empty() {
        return None;
    }
    let max = ts.iter().cloned().fold(f64::MIN, f64::max);
    let min = ts.iter().cloned().fold(f64::MAX, f64::min);
    Some(max / min)
}

/// Position of the state as a point of the torus chart.
pub fn position(z: &DVector<f64>) -> Vector2<f64> {
    Vector2::new(z[0], z[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::QuadraticSystem;
    use crate::magnetic::{default_center, oracle_orbit, MagneticOracle};
    use std::f64::consts::PI;

    #[test]
    fn oscillator_period() {
        let osc = QuadraticSystem::oscillator(1);
        let z = DVector::from_vec(vec![1.0, 0.0]);
        let orbit = shoot_periodic(&osc, &z, 6.2, 20, &ShootOptions::default()).unwrap();
        assert!((orbit.period - 2.0 * PI).abs() < 1e-9, "{}", orbit.period);
        assert!(orbit.residual < RESIDUAL_BOUND);
        let d = orbit_delta(&osc, &orbit, 3, SignConvention::JGrad).unwrap();
        for (j, dj) in d.iter().enumerate() {
            assert!((dj - 2.0 * (j + 1) as f64).abs() < 1e-6, "{d:?}");
        }
        assert!(orbit_delta(&osc, &orbit, 0, SignConvention::JGrad).unwrap().is_empty());
    }

    #[test]
    fn flat_magnetic_from_oracle() {
        let o = MagneticOracle::new(1.0, 0.1).unwrap();
        let sys = MagneticSystem::flat(1.0).unwrap();
        let seed = oracle_orbit(&o);
        let orbit = shoot_periodic(&sys, &seed.state(), seed.period, 20, &ShootOptions::magnetic()).unwrap();
        assert!(orbit.iterations <= 2);
        assert!((orbit.period - 2.0 * PI).abs() < 1e-9);
        assert!(orbit.contractible);
        assert!(recheck(&sys, &orbit, MagneticSystem::CONVENTION).unwrap() <= 2.0 * orbit.residual.max(1e-16));
        let m = monodromy(&sys, &orbit, MagneticSystem::CONVENTION).unwrap();
        let eig = crate::symp::eigenvalues(m.matrix()).unwrap();
        for l in eig.iter() {
            let inv = 1.0 / l;
            assert!(eig.iter().any(|x| (x - inv).norm() < 1e-6));
        }
        let _ = default_center();
    }

    #[test]
    fn fit_exact_line() {
        let s: Vec<(f64, f64)> = (1..=5).map(|t| (t as f64, 2.0 * t as f64 - 1.0)).collect();
        let f = growth_fit(&s).unwrap();
        assert!((f.a - 2.0).abs() < 1e-12 && (f.c - 1.0).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
        assert!(f.bound_holds());
        assert!(matches!(growth_fit(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]), Err(Error::DegenerateFit(_))));
        assert!(growth_fit(&s[..2]).is_err());
    }

    #[test]
    fn noisy_fit() {
        let mut rng = random::rng(3);
        let s: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.5;
                (t, 0.7 * t + 0.2 + rng.random_range(-1e-3..1e-3))
            })
            .collect();
        let f = growth_fit(&s).unwrap();
        assert!((f.a - 0.7).abs() < 1e-2);
        assert!(f.bound_holds());
    }

    #[test]
    fn flat_sweep() {
        let sys = MagneticSystem::flat(3.0).unwrap();
        let rows = period_bound_sweep(&sys, &[0.2, 0.1, 0.05], 1, 2).unwrap();
        for row in &rows {
            assert!(row.ok(), "{row:?}");
            assert!((row.period - 2.0 * PI / 3.0).abs() < 1e-8);
            assert!(row.contractible);
        }
        assert!(period_bound_sweep(&sys, &[0.1, 0.2], 1, 2).is_err());
    }
}
