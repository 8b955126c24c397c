//! Linear symplectic algebra on `R^{2n}` with coordinates ordered
//! `(x_1..x_n, y_1..y_n)` and the complex identification `z_j = x_j + i y_j`.
//!
//! The standard complex structure is `J = [[0, -I], [I, 0]]`, so a matrix is
//! symplectic when `A^T J A = J` and unitary when it is orthogonal and commutes
//! with `J`. Two circle-valued maps are provided: the eigenvalue-based map
//! [`rho_eigen`] (conjugation invariant, continuous, determined by the spectrum
//! and the Krein signs) and the polar surrogate [`rho_tilde`] (the complex
//! determinant of the unitary polar factor).

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Absolute tolerance of the symplectic invariant for matrices of unit size.
pub const SYMP_TOL: f64 = 1e-9;
/// Tolerance of the unitary invariants and of unit-modulus complex numbers.
pub const UNIT_TOL: f64 = 1e-9;

/// Eigenvalues closer than this (relative to their modulus) are merged.
const CLUSTER_TOL: f64 = 1e-6;
/// Non-real clusters within this distance of the unit circle are elliptic.
const ON_CIRCLE_TOL: f64 = 1e-7;
/// Non-real clusters between `ON_CIRCLE_TOL` and this are ambiguous.
const NEAR_CIRCLE_TOL: f64 = 1e-6;
/// Singular values below this (relative) span an eigenspace.
const NULL_TOL: f64 = 1e-5;
/// Clamp for the eigenvalues of `A A^T` before the inverse square root.
const POLAR_CLAMP: f64 = 1e-12;
const POLAR_ITERS: usize = 40;

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// The standard complex structure on `R^{2n}`.
pub fn standard_j(n: usize) -> DMatrix<f64> {
    assert!(n >= 1, "standard_j needs n >= 1");
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// `max |A^T J A - J|`.
pub fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let j = standard_j(m.nrows() / 2);
    max_abs(&(m.transpose() * &j * m - &j))
}

/// Tolerance for the symplectic invariant, scaled by the squared matrix size
/// so that large hyperbolic frames are not rejected for rounding alone.
fn symplectic_tolerance(m: &DMatrix<f64>) -> f64 {
    let s = max_abs(m).max(1.0);
    SYMP_TOL * s * s
}

fn check_shape(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() < 2 || !m.nrows().is_multiple_of(2) {
        return Err(Error::InvalidParams(format!(
            "symplectic matrices are square of even size >= 2, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// A real `2n x 2n` matrix with `A^T J A = J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SympMatrix(DMatrix<f64>);

impl SympMatrix {
    /// Validates the symplectic invariant.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_shape(&m)?;
        let defect = symplectic_defect(&m);
        if defect <= symplectic_tolerance(&m) {
            Ok(SympMatrix(m))
        } else {
            Err(Error::NonSymplectic { defect })
        }
    }

    /// Projects a nearly symplectic matrix back onto `Sp(2n)` with Newton steps
    /// `A <- A (I + J E / 2)`, `E = A^T J A - J`.
    pub fn renormalize(mut m: DMatrix<f64>) -> Result<Self> {
        check_shape(&m)?;
        let n = m.nrows() / 2;
        let j = standard_j(n);
        let initial = symplectic_defect(&m);
        let scale = max_abs(&m).max(1.0);
        if initial > 1e-3 * scale * scale {
            return Err(Error::NonSymplectic { defect: initial });
        }
        for _ in 0..4 {
            if symplectic_defect(&m) <= 1e-2 * symplectic_tolerance(&m) {
                break;
            }
            let e = m.transpose() * &j * &m - &j;
            let correction = DMatrix::identity(2 * n, 2 * n) + &j * e * 0.5;
            m = &m * correction;
        }
        SympMatrix::new(m)
    }

    pub fn identity(dim: usize) -> Self {
        SympMatrix(DMatrix::identity(dim, dim))
    }

    pub fn standard_j(n: usize) -> Self {
        SympMatrix(standard_j(n))
    }

    /// Rotation by `theta` in `Sp(2)`, i.e. `exp(theta J)`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        SympMatrix(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]))
    }

    /// Direct sum of planar rotations, one angle per symplectic plane.
    pub fn rotations(thetas: &[f64]) -> Self {
        thetas
            .iter()
            .map(|&t| SympMatrix::rotation(t))
            .reduce(|acc, r| acc.direct_sum(&r))
            .expect("at least one angle")
    }

    /// `diag(lambda, 1/lambda)` in `Sp(2)`; `lambda` may be negative.
    pub fn hyperbolic(lambda: f64) -> Self {
        assert!(lambda != 0.0);
        SympMatrix(DMatrix::from_row_slice(2, 2, &[lambda, 0.0, 0.0, 1.0 / lambda]))
    }

    /// `exp(t J S)` for a symmetric `S`.
    pub fn exp_hamiltonian(s: &DMatrix<f64>, t: f64) -> Result<Self> {
        check_shape(s)?;
        let j = standard_j(s.nrows() / 2);
        SympMatrix::renormalize((j * s * t).exp())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn half_dim(&self) -> usize {
        self.0.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn defect(&self) -> f64 {
        symplectic_defect(&self.0)
    }

    /// Exact symplectic inverse `-J A^T J`.
    pub fn inverse(&self) -> Self {
        let j = standard_j(self.half_dim());
        SympMatrix(-(&j * self.0.transpose() * &j))
    }

    /// `self * rhs`, renormalized.
    pub fn compose(&self, rhs: &SympMatrix) -> Result<Self> {
        if self.dim() != rhs.dim() {
            return Err(Error::DimMismatch { left: self.dim(), right: rhs.dim() });
        }
        let m = &self.0 * &rhs.0;
        match SympMatrix::new(m.clone()) {
            Ok(s) => Ok(s),
            Err(_) => SympMatrix::renormalize(m),
        }
    }

    /// Integer power; negative exponents use the symplectic inverse.
    pub fn powi(&self, k: i32) -> Result<Self> {
        let base = if k < 0 { self.inverse() } else { self.clone() };
        let mut out = SympMatrix::identity(self.dim());
        for _ in 0..k.unsigned_abs() {
            out = out.compose(&base)?;
        }
        Ok(out)
    }

    /// `B^{-1} A B`.
    pub fn conjugate_by(&self, b: &SympMatrix) -> Result<Self> {
        b.inverse().compose(self)?.compose(b)
    }

    /// Block sum acting on the product of the two symplectic spaces, written
    /// in the interleaved `(x, x', y, y')` ordering.
    pub fn direct_sum(&self, other: &SympMatrix) -> Self {
        let (n1, n2) = (self.half_dim(), other.half_dim());
        let n = n1 + n2;
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        let map1 = |i: usize| if i < n1 { i } else { n + (i - n1) };
        let map2 = |i: usize| if i < n2 { n1 + i } else { n + n1 + (i - n2) };
        for r in 0..2 * n1 {
            for c in 0..2 * n1 {
                out[(map1(r), map1(c))] = self.0[(r, c)];
            }
        }
        for r in 0..2 * n2 {
            for c in 0..2 * n2 {
                out[(map2(r), map2(c))] = other.0[(r, c)];
            }
        }
        SympMatrix(out)
    }
}

/// Orthogonal matrix commuting with `J`; the unitary factor of a polar
/// decomposition `A = Q U`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryFactor(DMatrix<f64>);

impl UnitaryFactor {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_shape(&m)?;
        let defect = unitary_defect(&m);
        if defect < UNIT_TOL {
            Ok(UnitaryFactor(m))
        } else {
            Err(Error::NotUnitary { defect })
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn half_dim(&self) -> usize {
        self.0.nrows() / 2
    }
}

/// `max(|U^T U - I|, |U J - J U|)`.
pub fn unitary_defect(m: &DMatrix<f64>) -> f64 {
    let dim = m.nrows();
    let j = standard_j(dim / 2);
    let orth = max_abs(&(m.transpose() * m - DMatrix::identity(dim, dim)));
    let comm = max_abs(&(m * &j - &j * m));
    orth.max(comm)
}

/// A complex number of unit modulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitComplex(Complex64);

impl UnitComplex {
    pub fn new(z: Complex64) -> Result<Self> {
        let defect = (z.norm_sqr() - 1.0).abs();
        if defect < UNIT_TOL && z.is_finite() {
            Ok(UnitComplex(z / z.norm()))
        } else {
            Err(Error::NotUnitary { defect })
        }
    }

    pub fn from_angle(theta: f64) -> Self {
        UnitComplex(Complex64::from_polar(1.0, theta))
    }

    pub fn one() -> Self {
        UnitComplex(Complex64::new(1.0, 0.0))
    }

    pub fn value(&self) -> Complex64 {
        self.0
    }

    pub fn re(&self) -> f64 {
        self.0.re
    }

    pub fn im(&self) -> f64 {
        self.0.im
    }

    /// Principal argument in `(-pi, pi]`.
    pub fn arg(&self) -> f64 {
        self.0.arg()
    }

    pub fn powi(&self, k: i32) -> Self {
        UnitComplex(self.0.powi(k))
    }

    pub fn distance(&self, other: &UnitComplex) -> f64 {
        (self.0 - other.0).norm()
    }
}

/// Unitary factor `U = (A A^T)^{-1/2} A` of the polar decomposition.
///
/// Symplecticity gives `A^{-T} = -JAJ` for free, so the first Newton polar
/// step needs no inverse. Scaled Newton steps finish from there. Fails with
/// `IllConditioned` when the smallest singular value is below `1e-12`.
pub fn polar_unitary(a: &SympMatrix) -> Result<UnitaryFactor> {
    let m = a.matrix();
    let dim = m.nrows();
    let j = standard_j(dim / 2);
    let sv = m.clone().singular_values();
    let hi = sv.max();
    let lo = sv.min();
    let cond = (hi / lo.max(f64::MIN_POSITIVE)).powi(2);
    if !cond.is_finite() || lo < POLAR_CLAMP {
        return Err(Error::IllConditioned { cond });
    }
    // A = US symplectic: (A - JAJ)/2 = U (S + S^-1)/2, same polar factor, singular values >= 1.
    let mut u = (m - &j * m * &j) * 0.5;
    let mut last = f64::INFINITY;
    for _ in 0..POLAR_ITERS {
        let d = unitary_defect(&u);
        if d < 1e-14 || (d < 1e-12 && d >= last) {
            break;
        }
        last = d;
        let Some(inv) = u.clone().try_inverse() else {
            return Err(Error::IllConditioned { cond });
        };
        let mu = if d > 1e-2 { (inv.norm() / u.norm()).sqrt() } else { 1.0 };
        u = (&u * mu + inv.transpose() / mu) * 0.5;
        u = (&u - &j * &u * &j) * 0.5;
    }
    UnitaryFactor::new(u).map_err(|_| Error::IllConditioned { cond })
}

/// Complex determinant of a unitary matrix read as an `n x n` complex matrix
/// `X + iY` where `U = [[X, -Y], [Y, X]]`.
pub fn det_complex(u: &UnitaryFactor) -> Result<UnitComplex> {
    let n = u.half_dim();
    let m = u.matrix();
    let c = DMatrix::from_fn(n, n, |r, col| Complex64::new(m[(r, col)], m[(n + r, col)]));
    UnitComplex::new(c.determinant())
}

/// Polar surrogate of the circle map: `det_C` of the unitary polar factor.
pub fn rho_tilde(a: &SympMatrix) -> Result<UnitComplex> {
    det_complex(&polar_unitary(a)?)
}

/// Complex eigenvalues of a small real matrix.
///
/// The Schur iteration is capped; if it stalls (it can on matrices within
/// rounding of a multiple of the identity) it is rerun on the rescaled
/// deviation from `tr(M)/n · I`, conjugated by a fixed rotation.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if let Some(s) = m.clone().try_schur(f64::EPSILON, 2000) {
        return Ok(block_eigenvalues(&s.unpack().1));
    }
    let mu = m.trace() / n as f64;
    let mut dev = m.clone();
    for i in 0..n {
        dev[(i, i)] -= mu;
    }
    let scale = max_abs(&dev);
    if scale == 0.0 {
        return Ok(vec![Complex64::new(mu, 0.0); n]);
    }
    let mut q = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let (s, c) = (0.3 + 0.17 * (i + 2 * j) as f64).sin_cos();
            let mut g = DMatrix::<f64>::identity(n, n);
            g[(i, i)] = c;
            g[(j, j)] = c;
            g[(i, j)] = -s;
            g[(j, i)] = s;
            q *= g;
        }
    }
    let mixed = q.transpose() * (dev / scale) * &q;
    mixed
        .try_schur(f64::EPSILON, 20_000)
        .map(|s| block_eigenvalues(&s.unpack().1).iter().map(|l| l * scale + mu).collect())
        .ok_or_else(|| Error::NearDegenerate("eigenvalue iteration did not converge".into()))
}

/// Eigenvalues of a real quasi-triangular Schur factor. nalgebra's own
/// reader returns NaN on 2 x 2 blocks whose discriminant is a hair below 0.
fn block_eigenvalues(t: &DMatrix<f64>) -> Vec<Complex64> {
    let n = t.nrows();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let half = (a + d) / 2.0;
            let root = Complex64::new((a - d) * (a - d) / 4.0 + b * c, 0.0).sqrt();
            out.push(half + root);
            out.push(half - root);
            i += 2;
        } else {
            out.push(Complex64::new(t[(i, i)], 0.0));
            i += 1;
        }
    }
    out
}

/// Eigenvalue-based circle map.
///
/// Each elliptic eigenvalue pair contributes the member of positive Krein
/// sign, where the sign of an eigenvector `v` is that of `i v^T J conj(v)`;
/// eigenvalues off the unit circle contribute `1`, except that the real
/// negative ones contribute `(-1)^{m/2}` with `m` their total multiplicity.
pub fn rho_eigen(a: &SympMatrix) -> Result<UnitComplex> {
    let m = a.matrix();
    let eigs = eigenvalues(m)?;
    let clusters = cluster(&eigs);
    let mut negative_real = 0usize;
    let mut rho = Complex64::new(1.0, 0.0);
    for members in clusters {
        let mult = members.len();
        let center = members.iter().sum::<Complex64>() / mult as f64;
        let scale = center.norm().max(1.0);
        if center.im.abs() <= 1e-9 * scale {
            if center.re < 0.0 {
                negative_real += mult;
            }
            continue;
        }
        if center.im < 0.0 {
            continue;
        }
        let gap = (center.norm() - 1.0).abs();
        if gap > NEAR_CIRCLE_TOL {
            continue;
        }
        if gap > ON_CIRCLE_TOL {
            return Err(Error::NearDegenerate(format!(
                "eigenvalue {center} is {gap:.2e} from the unit circle"
            )));
        }
        let (pos, neg) = krein_signature(m, center, mult)?;
        let unit = center / center.norm();
        rho *= unit.powi(pos as i32) * unit.conj().powi(neg as i32);
    }
    if !negative_real.is_multiple_of(2) {
        return Err(Error::NearDegenerate(format!(
            "odd multiplicity {negative_real} of negative real eigenvalues"
        )));
    }
    if (negative_real / 2) % 2 == 1 {
        rho = -rho;
    }
    UnitComplex::new(rho / rho.norm())
}

/// Single-linkage clustering of eigenvalues.
fn cluster(eigs: &[Complex64]) -> Vec<Vec<Complex64>> {
    let k = eigs.len();
    let mut label: Vec<usize> = (0..k).collect();
    for i in 0..k {
        for j in (i + 1)..k {
            let tol = CLUSTER_TOL * eigs[i].norm().max(eigs[j].norm()).max(1.0);
            if (eigs[i] - eigs[j]).norm() < tol {
                let (from, to) = (label[j], label[i]);
                for l in label.iter_mut() {
                    if *l == from {
                        *l = to;
                    }
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<Complex64>)> = Vec::new();
    for (i, &l) in label.iter().enumerate() {
        match groups.iter_mut().find(|(g, _)| *g == l) {
            Some((_, v)) => v.push(eigs[i]),
            None => groups.push((l, vec![eigs[i]])),
        }
    }
    groups.into_iter().map(|(_, v)| v).collect()
}

/// Signature `(p, q)` of the Hermitian form `i v^T J conj(w)` on the
/// eigenspace of `lambda`.
fn krein_signature(m: &DMatrix<f64>, lambda: Complex64, mult: usize) -> Result<(usize, usize)> {
    let dim = m.nrows();
    let j = standard_j(dim / 2);
    let shifted = DMatrix::from_fn(dim, dim, |r, c| {
        let d = if r == c { lambda } else { Complex64::new(0.0, 0.0) };
        Complex64::new(m[(r, c)], 0.0) - d
    });
    let scale = max_abs(m).max(1.0);
    let svd = SVD::new(shifted, false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y]));
    let kernel = &order[..mult];
    let worst = svd.singular_values[kernel[mult - 1]];
    if worst > NULL_TOL * scale {
        return Err(Error::NearDegenerate(format!(
            "eigenvalue {lambda} is not semisimple (residual {worst:.2e})"
        )));
    }
    // Columns of V are the conjugated rows of V^H.
    let basis: Vec<Vec<Complex64>> = kernel
        .iter()
        .map(|&row| (0..dim).map(|c| v_t[(row, c)].conj()).collect())
        .collect();
    let i_unit = Complex64::new(0.0, 1.0);
    let gram = DMatrix::from_fn(mult, mult, |a, b| {
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..dim {
            let mut jw = Complex64::new(0.0, 0.0);
            for c in 0..dim {
                jw += j[(r, c)] * basis[b][c].conj();
            }
            acc += basis[a][r] * jw;
        }
        i_unit * acc
    });
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mut pos = 0;
    let mut neg = 0;
    for &v in eig.eigenvalues.iter() {
        if v.abs() <= 1e-6 * top.max(1e-300) {
            return Err(Error::NearDegenerate(format!(
                "Krein form is degenerate at eigenvalue {lambda}"
            )));
        }
        if v > 0.0 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    Ok((pos, neg))
}

/// Defects of the power identity `rho(A^k) = rho(A)^k` for both circle maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerDefect {
    /// Defect of the eigenvalue-based map (an exact identity).
    pub rho: f64,
    /// Defect of the polar surrogate (not an identity in general).
    pub rho_tilde: f64,
}

pub fn rho_power_check(a: &SympMatrix, k: i32) -> Result<PowerDefect> {
    if k.unsigned_abs() > 20 {
        return Err(Error::InvalidParams(format!("|k| <= 20 required, got {k}")));
    }
    let ak = a.powi(k)?;
    let rho = rho_eigen(&ak)?.distance(&rho_eigen(a)?.powi(k));
    let rho_tilde = rho_tilde(&ak)?.distance(&self::rho_tilde(a)?.powi(k));
    Ok(PowerDefect { rho, rho_tilde })
}
