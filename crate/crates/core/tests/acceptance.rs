//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use sympidx::floer::{
    check_window, derive_levels, homotopy_trace, standard_sweep, GeometryParams, LevelKind, Side,
};
use sympidx::flow::{
    delta_under_reparametrization, flow, variational_defect, EnergyMap, HamSystem, Pendulum, QuadraticSystem,
    SignConvention,
};
use sympidx::magnetic::{oracle_orbit, Field, Fourier2, MagneticOracle, MagneticSystem, Metric, Mode};
use sympidx::orbit::{
    find_magnetic_orbit, growth_fit, growth_samples, orbit_delta, shoot_periodic, OrbitRecord, ShootOptions,
};
use sympidx::path::{
    conley_zehnder, delta_rho, delta_tilde, linear_flow, quasimorphism_defect, sturm_compare, QuadHamiltonian,
    SympPath,
};
use sympidx::random::{self, normal_form, Spectrum};
use sympidx::symp::{det_complex, polar_unitary, rho_eigen, rho_power_check, standard_j, SympMatrix};
use sympidx::Error;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Random test flows stay below this frame size; far beyond it the smallest
/// singular values drown in rounding.
const MAX_FRAME: f64 = 300.0;

/// Linear flow of a random constant Hamiltonian, redrawn while some frame
/// exceeds `MAX_FRAME`.
fn random_flow<R: Rng>(rng: &mut R, n: usize, scale: f64, t: f64) -> sympidx::Result<SympPath> {
    loop {
        let s = random::symmetric(rng, 2 * n, scale);
        let p = linear_flow(&QuadHamiltonian::constant(s)?, 0.0, t, 64)?;
        if p.frames().iter().all(|f| sympidx::symp::max_abs(f.matrix()) <= MAX_FRAME) {
            return Ok(p);
        }
    }
}

fn bounded(h: &QuadHamiltonian, t: f64) -> bool {
    linear_flow(h, 0.0, t, 64)
        .map(|p| p.frames().iter().all(|f| sympidx::symp::max_abs(f.matrix()) <= MAX_FRAME))
        .unwrap_or(false)
}

fn unitary_flow<R: Rng>(rng: &mut R, n: usize, t: f64) -> sympidx::Result<SympPath> {
    let j = standard_j(n);
    let s = random::symmetric(rng, 2 * n, 1.0);
    let s = (&s - &j * &s * &j) * 0.5;
    linear_flow(&QuadHamiltonian::constant(s)?, 0.0, t, 64)
}

// 1
fn rho_axioms() -> Outcome {
    let mut worst = [0.0_f64; 5];
    let mut redraws = 0usize;
    let mut failures = Vec::new();
    for n in 1..=4usize {
        let mut rng = random::rng(1000 + n as u64);
        let mut done = 0;
        while done < 1000 {
            let attempt = (|| -> sympidx::Result<[f64; 5]> {
                let a = normal_form(&mut rng, n, Spectrum::Mixed, 0.3);
                let b = random::symplectic(&mut rng, n, 0.5);
                let conj = rho_eigen(&a.conjugate_by(&b)?)?.distance(&rho_eigen(&a)?);
                let (n1, n2) = if n == 1 { (1, 1) } else { (n / 2, n - n / 2) };
                let p = normal_form(&mut rng, n1, Spectrum::Mixed, 0.3);
                let q = normal_form(&mut rng, n2, Spectrum::Mixed, 0.3);
                let expect = sympidx::symp::UnitComplex::new(rho_eigen(&p)?.value() * rho_eigen(&q)?.value())?;
                let prod = rho_eigen(&p.direct_sum(&q))?.distance(&expect);
                let u = random::unitary(&mut rng, n);
                let det = rho_eigen(&u)?.distance(&det_complex(&polar_unitary(&u)?)?);
                let h = normal_form(&mut rng, n, Spectrum::Hyperbolic, 0.3);
                let rh = rho_eigen(&h)?.value();
                let hyp = (rh.im).abs().max((rh.re.abs() - 1.0).abs());
                let k = rng.random_range(2..=3);
                let pow = rho_power_check(&a, k)?.rho;
                Ok([conj, prod, det, hyp, pow])
            })();
            match attempt {
                Ok(d) => {
                    for i in 0..5 {
                        worst[i] = worst[i].max(d[i]);
                    }
                    done += 1;
                }
                Err(Error::NearDegenerate(_)) => redraws += 1,
                Err(e) => {
                    failures.push(format!("dim {}: {e}", 2 * n));
                    done += 1;
                }
            }
        }
    }
    let ok = failures.is_empty() && worst.iter().all(|&d| d < 1e-7);
    check(
        ok,
        format!(
            "4000 samples; max defects conj {:.1e}, product {:.1e}, unitary det {:.1e}, hyperbolic {:.1e}, power {:.1e}; {} redraws; errors {:?}",
            worst[0], worst[1], worst[2], worst[3], worst[4], redraws, failures
        ),
    )
}

// 2
fn delta_calculus() -> Outcome {
    let mut rng = random::rng(2);
    let (mut reparam, mut concat, mut inverse) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..200 {
        let n = 1 + i % 2;
        let t = rng.random_range(0.5..4.0);
        let p = random_flow(&mut rng, n, 1.0, t).map_err(|e| e.to_string())?;
        let d = delta_tilde(&p).map_err(|e| e.to_string())?.delta;
        let retimed = p.retime(|s| s + 0.3 * (s * PI / t).sin() * t / PI).map_err(|e| e.to_string())?;
        reparam = reparam.max((delta_tilde(&retimed).map_err(|e| e.to_string())?.delta - d).abs());
        let m = 3 * p.len();
        let grid: Vec<f64> = (0..=m).map(|k| t * (k as f64 / m as f64).powi(2)).collect();
        let resampled = p.resample(&grid).map_err(|e| e.to_string())?;
        reparam = reparam.max((delta_tilde(&resampled).map_err(|e| e.to_string())?.delta - d).abs());
        let cut = p.len() / 3;
        let a = p.slice(0, cut).map_err(|e| e.to_string())?;
        let b = p.slice(cut, p.len() - 1).map_err(|e| e.to_string())?;
        let joined = a.concat(&b).map_err(|e| e.to_string())?;
        let sum = delta_tilde(&a).unwrap().delta + delta_tilde(&b).unwrap().delta;
        concat = concat.max((delta_tilde(&joined).unwrap().delta - sum).abs());
        let inv = p.pointwise_inverse().map_err(|e| e.to_string())?;
        inverse = inverse.max((delta_tilde(&inv).map_err(|e| e.to_string())?.delta + d).abs());
    }
    let rot = SympPath::from_fn(0.0, 2.0 * PI, 64, SympMatrix::rotation).map_err(|e| e.to_string())?;
    let loop_value = delta_tilde(&rot).map_err(|e| e.to_string())?.delta;
    let ok = reparam < 1e-9 && concat < 1e-12 && inverse < 1e-9 && (loop_value - 2.0).abs() < 1e-8;
    check(
        ok,
        format!(
            "200 paths; reparametrization {reparam:.1e}, concatenation {concat:.1e}, inverse {inverse:.1e}, rotation loop {loop_value:.12}"
        ),
    )
}

// 3
fn index_bracket() -> Outcome {
    let mut rng = random::rng(3);
    let mut done = 0;
    let mut bad = Vec::new();
    let mut worst_tilde = 0.0_f64;
    let mut worst_rho = 0.0_f64;
    let mut redraws = 0;
    while done < 500 {
        let n = 1 + done % 2;
        let t = rng.random_range(0.5..4.0);
        let p = match random_flow(&mut rng, n, 1.0, t) {
            Ok(p) => p,
            Err(e) => {
                bad.push(e.to_string());
                done += 1;
                continue;
            }
        };
        let d = 2 * n;
        let gap = DMatrix::<f64>::identity(d, d) - p.last().matrix();
        let det = gap.determinant();
        if det.abs() < 1e-3 {
            redraws += 1;
            continue;
        }
        done += 1;
        let mu = match conley_zehnder(&p) {
            Ok(mu) => mu,
            Err(e) => {
                bad.push(format!("cz: {e}"));
                continue;
            }
        };
        let dt = delta_tilde(&p).map(|r| r.delta);
        let dr = delta_rho(&p).map(|r| r.delta);
        let (dt, dr) = match (dt, dr) {
            (Ok(a), Ok(b)) => (a, b),
            (a, b) => {
                bad.push(format!("delta: {:?} {:?}", a.err(), b.err()));
                continue;
            }
        };
        worst_tilde = worst_tilde.max((mu as f64 - dt).abs() - (n as f64 + 1.0));
        worst_rho = worst_rho.max((mu as f64 - dr).abs() - n as f64);
        let parity = if (mu - n as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        if det.signum() != parity {
            bad.push(format!("parity: mu {mu}, det {det:.3e}, n {n}"));
        }
        if (mu as f64 - dt).abs() > n as f64 + 1.0 {
            bad.push(format!("bracket: mu {mu}, delta {dt:.4}, n {n}"));
        }
    }
    check(
        bad.is_empty(),
        format!(
            "500 flows; max excess over dim/2+1 for Δ̃ {worst_tilde:.3}, over dim/2 for Δ {worst_rho:.3}; {redraws} degenerate redraws; failures {:?}",
            bad.iter().take(5).collect::<Vec<_>>()
        ),
    )
}

// 4
fn sturm_suite() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut errors = Vec::new();
    for n in 1..=2usize {
        let results: Vec<Result<f64, String>> = (0..500)
            .into_par_iter()
            .map(|i| {
                let mut rng = random::rng(4000 + 1000 * n as u64 + i as u64);
                let (h0, h1, t) = loop {
                    let s0 = random::symmetric(&mut rng, 2 * n, 1.0);
                    let rank = rng.random_range(1..=2 * n);
                    let s1 = &s0 + random::psd(&mut rng, 2 * n, rank, 0.7);
                    let t = rng.random_range(0.5..5.0);
                    let h0 = QuadHamiltonian::constant(s0).map_err(|e| e.to_string())?;
                    let h1 = QuadHamiltonian::constant(s1).map_err(|e| e.to_string())?;
                    if bounded(&h0, t) && bounded(&h1, t) {
                        break (h0, h1, t);
                    }
                };
                let rep = sturm_compare(&h0, &h1, t, 64).map_err(|e| e.to_string())?;
                Ok(rep.margin + (2 * n) as f64)
            })
            .collect();
        for r in results {
            match r {
                Ok(v) => worst = worst.min(v),
                Err(e) => errors.push(e),
            }
        }
    }
    let mut ladder_ok = true;
    for n in 1..=2usize {
        let mut prev = f64::NEG_INFINITY;
        for c in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0] {
            let d = delta_tilde(&linear_flow(&QuadHamiltonian::scalar(n, c), 0.0, 3.0, 64).unwrap()).unwrap().delta;
            ladder_ok &= d > prev;
            prev = d;
        }
    }
    let mut closed = 0.0_f64;
    for t in [0.5, 1.0, 2.5, 7.0, 12.0] {
        let zero = QuadHamiltonian::scalar(1, 0.0);
        let one = QuadHamiltonian::scalar(1, 1.0);
        let rep = sturm_compare(&zero, &one, t, 64).map_err(|e| e.to_string())?;
        closed = closed.max((rep.margin - t / PI).abs());
    }
    let ok = errors.is_empty() && worst >= 0.0 && ladder_ok && closed < 1e-6;
    check(
        ok,
        format!(
            "1000 pairs; min (margin + dim V) {worst:.3}; ladder monotone {ladder_ok}; closed-form margin error {closed:.1e}; errors {:?}",
            errors.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

// 5
fn quasimorphism() -> Outcome {
    let results: Vec<Result<(f64, f64), String>> = (0..1000)
        .into_par_iter()
        .map(|i| {
            let mut rng = random::rng(5000 + i as u64);
            let t = rng.random_range(0.5..3.0);
            let phi = random_flow(&mut rng, 2, 1.0, t).map_err(|e| e.to_string())?;
            let psi = random_flow(&mut rng, 2, 1.0, t).map_err(|e| e.to_string())?;
            let d = quasimorphism_defect(&phi, &psi).map_err(|e| e.to_string())?;
            let u = unitary_flow(&mut rng, 2, t).map_err(|e| e.to_string())?;
            let v = unitary_flow(&mut rng, 2, t).map_err(|e| e.to_string())?;
            let du = quasimorphism_defect(&u, &v).map_err(|e| e.to_string())?;
            Ok((d, du))
        })
        .collect();
    let mut worst = 0.0_f64;
    let mut worst_u = 0.0_f64;
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok((d, du)) => {
                worst = worst.max(d);
                worst_u = worst_u.max(du);
            }
            Err(e) => errors.push(e),
        }
    }
    check(
        errors.is_empty() && worst <= 4.0 && worst_u < 1e-8,
        format!("1000 Sp(4) pairs; max defect {worst:.4}; unitary max {worst_u:.1e}; errors {:?}", errors.iter().take(3).collect::<Vec<_>>()),
    )
}

// 6
fn magnetic_oracle() -> Outcome {
    let cells: Vec<(f64, f64)> =
        [0.5, 1.0, 3.0].iter().flat_map(|&b| [0.01, 0.05, 0.2].iter().map(move |&r| (b, r))).collect();
    let results: Vec<(f64, f64, Result<OrbitRecord, Error>)> = cells
        .par_iter()
        .map(|&(b, r)| {
            let sys = MagneticSystem::flat(b).unwrap();
            let seed = oracle_orbit(&MagneticOracle::new(b, r).unwrap());
            (b, r, shoot_periodic(&sys, &seed.state(), seed.period, 20, &ShootOptions::magnetic()))
        })
        .collect();
    let mut worst = 0.0_f64;
    let mut spread = 0.0_f64;
    let mut bad = Vec::new();
    for &b in &[0.5, 1.0, 3.0] {
        let ts: Vec<f64> = results
            .iter()
            .filter(|x| x.0 == b)
            .filter_map(|x| x.2.as_ref().ok().map(|o| o.period))
            .collect();
        if ts.len() == 3 {
            let hi = ts.iter().cloned().fold(f64::MIN, f64::max);
            let lo = ts.iter().cloned().fold(f64::MAX, f64::min);
            spread = spread.max(hi - lo);
        }
    }
    for (b, r, res) in &results {
        match res {
            Ok(o) => {
                worst = worst.max((o.period - 2.0 * PI / b).abs());
                if !o.contractible {
                    bad.push(format!("B {b} r {r}: not contractible"));
                }
            }
            Err(e) => bad.push(format!("B {b} r {r}: {e}")),
        }
    }
    check(
        bad.is_empty() && worst < 1e-8 && spread < 1e-8,
        format!("9 cells; max |T - 2π/B| {worst:.1e}; max spread across r {spread:.1e}; failures {bad:?}"),
    )
}

fn perturbed_metric() -> MagneticSystem {
    let u = Fourier2::new(vec![Mode { kx: 1, ky: 1, amp: 0.05, phase: 0.0 }]);
    MagneticSystem::new(Metric::Conformal(u), Field::Constant(1.0)).unwrap()
}

fn perturbed_field() -> MagneticSystem {
    let u = Fourier2::new(vec![Mode { kx: 1, ky: 0, amp: 0.05, phase: 0.4 }]);
    let b = Fourier2::new(vec![Mode { kx: 0, ky: 1, amp: 0.1, phase: 0.0 }]);
    MagneticSystem::new(Metric::Conformal(u), Field::Fourier { mean: 1.0, modes: b }).unwrap()
}

// 7
fn perturbed_robustness() -> Outcome {
    let sys = perturbed_metric();
    let results: Vec<(f64, Result<OrbitRecord, Error>)> =
        [0.02, 0.05, 0.1].par_iter().map(|&r| (r, find_magnetic_orbit(&sys, r, 0.0, 30))).collect();
    let mut bad = Vec::new();
    let mut worst = 0.0_f64;
    for (r, res) in &results {
        match res {
            Ok(o) => {
                let rel = (o.period - 2.0 * PI).abs() / (2.0 * PI);
                worst = worst.max(rel);
                if !o.contractible || rel >= 0.2 || o.residual >= 1e-8 {
                    bad.push(format!("r {r}: T {:.6} residual {:.1e} contractible {}", o.period, o.residual, o.contractible));
                }
            }
            Err(e) => bad.push(format!("r {r}: {e}")),
        }
    }
    check(bad.is_empty(), format!("amplitude 0.05, B = 1; max relative period offset {worst:.4}; failures {bad:?}"))
}

// 8
fn growth_law() -> Outcome {
    let variants: Vec<(&str, MagneticSystem)> = vec![
        ("flat", MagneticSystem::flat(1.0).unwrap()),
        ("metric", perturbed_metric()),
        ("metric+field", perturbed_field()),
    ];
    let results: Vec<(String, Result<String, String>)> = variants
        .par_iter()
        .map(|(name, sys)| {
            let run = || -> Result<String, String> {
                let orbit = if sys.is_flat_constant() {
                    let seed = oracle_orbit(&MagneticOracle::new(1.0, 0.1).unwrap());
                    shoot_periodic(sys, &seed.state(), seed.period, 20, &ShootOptions::magnetic())
                } else {
                    find_magnetic_orbit(sys, 0.1, 0.0, 30)
                }
                .map_err(|e| e.to_string())?;
                let deltas = orbit_delta(sys, &orbit, 8, MagneticSystem::CONVENTION).map_err(|e| e.to_string())?;
                let fit = growth_fit(&growth_samples(&orbit, &deltas)).map_err(|e| e.to_string())?;
                let line = format!("a {:.4} c {:.2e} r² {:.6}", fit.a, fit.c, fit.r_squared);
                if fit.r_squared > 0.99 && fit.a > 0.0 && fit.bound_holds() {
                    Ok(line)
                } else {
                    Err(line)
                }
            };
            (name.to_string(), run())
        })
        .collect();
    let ok = results.iter().all(|r| r.1.is_ok());
    let detail: Vec<String> = results
        .iter()
        .map(|(n, r)| match r {
            Ok(s) => format!("{n}: {s}"),
            Err(s) => format!("{n}: FAILED {s}"),
        })
        .collect();
    check(ok, detail.join("; "))
}

// 9
fn reparametrization() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let osc = QuadraticSystem::oscillator(1);
    let z = DVector::from_vec(vec![1.0, 0.0]);
    let orbit = flow(&osc, &z, 2.0 * PI, 2000, SignConvention::JGrad).map_err(|e| e.to_string())?;
    for (name, map) in [("2K", EnergyMap::Scale(2.0)), ("K+K²", EnergyMap::Polynomial(vec![0.0, 1.0, 1.0]))] {
        let r = delta_under_reparametrization(&osc, &map, &orbit).map_err(|e| e.to_string())?;
        let linear = matches!(map, EnergyMap::Scale(_));
        ok &= r.rho_gap() < 1e-4 && (!linear || r.tilde_gap() < 1e-4);
        lines.push(format!("oscillator {name}: Δ gap {:.1e}, Δ̃ gap {:.1e}", r.rho_gap(), r.tilde_gap()));
    }
    let sys = MagneticSystem::flat(1.0).unwrap();
    let seed = oracle_orbit(&MagneticOracle::new(1.0, 0.1).unwrap());
    let circle = flow(&sys, &seed.state(), seed.period, 2000, MagneticSystem::CONVENTION).map_err(|e| e.to_string())?;
    for (name, map) in [("2K", EnergyMap::Scale(2.0)), ("K+K²", EnergyMap::Polynomial(vec![0.0, 1.0, 1.0]))] {
        let r = delta_under_reparametrization(&sys, &map, &circle).map_err(|e| e.to_string())?;
        let linear = matches!(map, EnergyMap::Scale(_));
        ok &= r.rho_gap() < 1e-4 && (!linear || r.tilde_gap() < 1e-4);
        lines.push(format!("magnetic circle {name}: Δ gap {:.1e}, Δ̃ gap {:.1e}", r.rho_gap(), r.tilde_gap()));
    }
    check(ok, lines.join("; "))
}

// 10
fn floer_sweep() -> Outcome {
    let cells = standard_sweep();
    let mut bad = Vec::new();
    let mut min_margin = f64::INFINITY;
    for p in &cells {
        let s = derive_levels(p).map_err(|e| e.to_string())?;
        let v = check_window(&s, f64::INFINITY);
        let [w1, w2, w3, w4, _, w6] = v.verdicts();
        let h = homotopy_trace(p, 100).map_err(|e| e.to_string())?;
        min_margin = min_margin.min(h.margin);
        let width = 2 * (p.m + p.q) as i64 - 1;
        let widths = s.levels.iter().all(|l| l.index_hi - l.index_lo == width);
        if !(w1 && w2 && w3 && w4 && w6 && h.margin > 0.0 && widths) {
            bad.push(format!("{p:?}: {:?} margin {:.3e} widths {widths}", v.verdicts(), h.margin));
        }
    }
    let ex = derive_levels(&GeometryParams::from_r2(1, 1, 1.0, 0.1, 1.0, 1.0).unwrap()).map_err(|e| e.to_string())?;
    let sig6 = |x: f64, y: f64| (x - y).abs() <= 0.5e-4 * y.abs();
    let x1 = ex.level(LevelKind::X, Side::Minus, 1).unwrap().action;
    let example_ok = sig6(ex.c, 10.8909) && sig6(ex.a, 11.3098) && sig6(ex.b, 19.0590) && sig6(x1, 11.7287) && ex.k == 513;
    check(
        bad.is_empty() && example_ok && cells.len() == 72,
        format!(
            "{} cells; min homotopy margin {min_margin:.3e}; example C {:.4} a {:.4} b {:.4} A(x1-) {:.4} k {}; failures {:?}",
            cells.len(),
            ex.c,
            ex.a,
            ex.b,
            x1,
            ex.k,
            bad.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

// 11
fn integrator_hygiene() -> Outcome {
    let pend = Pendulum::new(1.0);
    let zp = DVector::from_vec(vec![1.0, 0.5]);
    let tp = flow(&pend, &zp, 100.0, 10_000, SignConvention::MinusJGrad).map_err(|e| e.to_string())?;
    let dp = variational_defect(&pend, &tp, SignConvention::MinusJGrad).map_err(|e| e.to_string())?;
    let mag = perturbed_field();
    let zm = sympidx::magnetic::level_point(&mag, &nalgebra::Vector2::new(0.4, 1.3), 0.7, 0.5);
    let tm = flow(&mag, &zm, 100.0, 10_000, MagneticSystem::CONVENTION).map_err(|e| e.to_string())?;
    let dm = variational_defect(&mag, &tm, MagneticSystem::CONVENTION).map_err(|e| e.to_string())?;
    let _ = mag.energy(&zm);
    let ok = tp.energy_drift < 1e-6 && tm.energy_drift < 1e-6 && dp < 1e-7 && dm < 1e-7;
    check(
        ok,
        format!(
            "T = 100, h = 1e-2; drift pendulum {:.1e}, magnetic {:.1e}; frame defect pendulum {dp:.1e}, magnetic {dm:.1e}",
            tp.energy_drift, tm.energy_drift
        ),
    )
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("rho axioms", rho_axioms),
        ("Δ̃ calculus", delta_calculus),
        ("index bracket", index_bracket),
        ("Sturm comparison", sturm_suite),
        ("quasi-morphism defect", quasimorphism),
        ("magnetic oracle", magnetic_oracle),
        ("perturbed metric", perturbed_robustness),
        ("growth law", growth_law),
        ("reparametrization", reparametrization),
        ("level bookkeeping sweep", floer_sweep),
        ("integrator hygiene", integrator_hygiene),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id:>2} PASS  {name} ({secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} ({secs:.1}s): {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
