use std::f64::consts::PI;

use nalgebra::{DVector, Vector2};
use proptest::prelude::*;

use sympidx::flow::{flow, HamSystem};
use sympidx::magnetic::{
    arc_length, default_center, length_bound, sample_level, Field, Fourier2, MagneticOracle, MagneticSystem, Metric,
    Mode,
};
use sympidx::path::SignConvention;

const CONV: SignConvention = SignConvention::MinusJGrad;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 12, ..ProptestConfig::default() }
}

fn mode() -> impl Strategy<Value = Mode> {
    (-3i32..=3, -3i32..=3, 0.0..0.05f64, 0.0..2.0 * PI)
        .prop_filter("constant mode", |(kx, ky, _, _)| (*kx, *ky) != (0, 0))
        .prop_map(|(kx, ky, amp, phase)| Mode { kx, ky, amp, phase })
}

fn system() -> impl Strategy<Value = MagneticSystem> {
    (prop::collection::vec(mode(), 0..3), prop::collection::vec(mode(), 0..3), 0.5..2.0f64).prop_map(|(u, b, mean)| {
        let metric = if u.is_empty() { Metric::Flat } else { Metric::Conformal(Fourier2::new(u)) };
        let field = if b.is_empty() {
            Field::Constant(mean)
        } else {
            let b = b.into_iter().map(|m| Mode { amp: m.amp * mean, ..m }).collect();
            Field::Fourier { mean, modes: Fourier2::new(b) }
        };
        MagneticSystem::new(metric, field).unwrap()
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn energy_is_conserved(sys in system(), seed in any::<u64>(), r in 0.05..0.5f64) {
        let b = sys.field().mean();
        let z0 = sample_level(&sys, r, 1, seed).unwrap().remove(0);
        let t = 100.0 / b;
        let steps = (t / (1e-2 * 2.0 * PI / b)).ceil() as usize;
        let traj = flow(&sys, &z0, t, steps, CONV).unwrap();
        prop_assert!(traj.energy_drift < 1e-7, "{}", traj.energy_drift);
    }

    #[test]
    fn arc_length_respects_bound(sys in system(), seed in any::<u64>(), r in 0.05..0.5f64, t in 0.5..20.0f64) {
        let z0 = sample_level(&sys, r, 1, seed).unwrap().remove(0);
        let traj = flow(&sys, &z0, t, 2000, CONV).unwrap();
        prop_assert!(arc_length(&sys, &traj.states) <= length_bound(&sys, r, t));
    }

    #[test]
    fn sampled_points_lie_on_the_level(sys in system(), seed in any::<u64>(), r in 0.01..1.0f64) {
        for z in sample_level(&sys, r, 8, seed).unwrap() {
            prop_assert!((sys.energy(&z) - r * r).abs() < 1e-12 * r * r);
        }
    }

    #[test]
    fn gradient_matches_energy(sys in system(), seed in any::<u64>()) {
        let z = sample_level(&sys, 0.3, 1, seed).unwrap().remove(0);
        let g = sys.gradient(&z);
        let hess = sys.hessian(&z);
        prop_assert!((&hess - hess.transpose()).amax() < 1e-12);
        for i in 0..4 {
            let mut e = DVector::zeros(4);
            e[i] = 1.0;
            let h = 1e-6;
            let fd = (sys.energy(&(&z + &e * h)) - sys.energy(&(&z - &e * h))) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * g.amax().max(1e-3));
        }
    }

    #[test]
    fn flat_orbits_are_circles(b in 0.3..3.0f64, r in 0.01..0.5f64) {
        let oracle = MagneticOracle::new(b, r).unwrap();
        let sys = MagneticSystem::flat(b).unwrap();
        let center = default_center();
        let traj = flow(&sys, &oracle.initial_state(&center), oracle.period(), 2000, CONV).unwrap();
        for z in &traj.states {
            let d = (Vector2::new(z[0], z[1]) - center).norm();
            prop_assert!((d - oracle.radius()).abs() < 1e-6);
        }
    }
}

fn geodesic_gap(metric: &Metric, b: f64) -> f64 {
    let with = MagneticSystem::new(metric.clone(), Field::Constant(b)).unwrap();
    let without = MagneticSystem::geodesic(metric.clone()).unwrap();
    let z0 = DVector::from_vec(vec![1.0, 2.0, 0.3, -0.2]);
    let a = flow(&with, &z0, 1.0, 400, CONV).unwrap();
    let g = flow(&without, &z0, 1.0, 400, CONV).unwrap();
    a.states
        .iter()
        .zip(&g.states)
        .map(|(x, y)| ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

#[test]
fn weak_fields_approach_geodesics_linearly() {
    let u = Fourier2::new(vec![Mode { kx: 1, ky: 1, amp: 0.1, phase: 0.2 }]);
    for metric in [Metric::Flat, Metric::Conformal(u)] {
        let gaps: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&b| geodesic_gap(&metric, b)).collect();
        for w in gaps.windows(2) {
            let slope = (w[0] / w[1]).log10();
            assert!((0.5..=2.0).contains(&slope), "slope {slope} from {gaps:?}");
        }
    }
}
