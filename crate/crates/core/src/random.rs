//! Seeded samplers for symplectic test data.
//!
//! Everything goes through `ChaCha8Rng` so a seed pins down every sample on
//! every platform.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::symp::{standard_j, SympMatrix};

pub type SympRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SympRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric matrix with independent `N(0, scale^2)` entries above the diagonal.
pub fn symmetric<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in r..dim {
            let v: f64 = rng.sample(StandardNormal);
            m[(r, c)] = scale * v;
            m[(c, r)] = scale * v;
        }
    }
    m
}

/// Positive semidefinite matrix `G G^T` of rank `rank`.
pub fn psd<R: Rng>(rng: &mut R, dim: usize, rank: usize, scale: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, rank, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    &g * g.transpose()
}

/// `exp(J S)` for a random symmetric `S` of the given scale.
pub fn symplectic<R: Rng>(rng: &mut R, n: usize, scale: f64) -> SympMatrix {
    let s = symmetric(rng, 2 * n, scale);
    SympMatrix::exp_hamiltonian(&s, 1.0).expect("exponential of a hamiltonian matrix")
}

/// Random unitary: `exp(J S)` with `S` symmetric and commuting with `J`.
pub fn unitary<R: Rng>(rng: &mut R, n: usize) -> SympMatrix {
    let j = standard_j(n);
    let s = symmetric(rng, 2 * n, 1.0);
    let s = (&s - &j * &s * &j) * 0.5;
    SympMatrix::exp_hamiltonian(&s, 1.0).expect("exponential of a hamiltonian matrix")
}

/// Elliptic angle bounded away from `0` and `pi`, with random sign.
fn elliptic_angle<R: Rng>(rng: &mut R) -> f64 {
    let t = rng.random_range(0.15..(std::f64::consts::PI - 0.15));
    if rng.random_bool(0.5) {
        t
    } else {
        -t
    }
}

fn hyperbolic_block<R: Rng>(rng: &mut R) -> SympMatrix {
    let l = rng.random_range(1.3..3.0);
    SympMatrix::hyperbolic(if rng.random_bool(0.5) { l } else { -l })
}

/// `[[A, 0], [0, A^{-T}]]` with `A` a scaled planar rotation: eigenvalues
/// `r e^{+-i phi}` and `r^{-1} e^{+-i phi}`.
fn loxodromic_block<R: Rng>(rng: &mut R) -> SympMatrix {
    let r: f64 = rng.random_range(1.3..2.5);
    let phi: f64 = rng.random_range(0.3..2.8);
    let (s, c) = phi.sin_cos();
    let mut m = DMatrix::zeros(4, 4);
    m[(0, 0)] = r * c;
    m[(0, 1)] = -r * s;
    m[(1, 0)] = r * s;
    m[(1, 1)] = r * c;
    m[(2, 2)] = c / r;
    m[(2, 3)] = -s / r;
    m[(3, 2)] = s / r;
    m[(3, 3)] = c / r;
    SympMatrix::new(m).expect("loxodromic block is symplectic")
}

/// Block kinds used by [`normal_form`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spectrum {
    /// Elliptic, hyperbolic and loxodromic blocks mixed at random.
    Mixed,
    /// No eigenvalues on the unit circle.
    Hyperbolic,
}

/// Semisimple symplectic matrix in `Sp(2n)` assembled from random normal-form
/// blocks and conjugated by a random symplectic matrix near the identity.
pub fn normal_form<R: Rng>(rng: &mut R, n: usize, spectrum: Spectrum, conj_scale: f64) -> SympMatrix {
    let mut blocks: Vec<SympMatrix> = Vec::new();
    let mut left = n;
    while left > 0 {
        let lox = left >= 2 && rng.random_bool(0.3);
        if lox {
            blocks.push(loxodromic_block(rng));
            left -= 2;
            continue;
        }
        let b = match spectrum {
            Spectrum::Hyperbolic => hyperbolic_block(rng),
            Spectrum::Mixed => {
                if rng.random_bool(0.6) {
                    SympMatrix::rotation(elliptic_angle(rng))
                } else {
                    hyperbolic_block(rng)
                }
            }
        };
        blocks.push(b);
        left -= 1;
    }
    let a = blocks.into_iter().reduce(|acc, b| acc.direct_sum(&b)).expect("n >= 1");
    if conj_scale == 0.0 {
        return a;
    }
    let b = symplectic(rng, n, conj_scale);
    a.conjugate_by(&b).expect("same dimension")
}
