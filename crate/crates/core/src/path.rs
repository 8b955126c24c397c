//! Sampled symplectic paths and their invariants: the winding invariant `Δ`
//! (polar surrogate, eigenvalue version and homogenized limit), the
//! Conley-Zehnder index by the crossing formula, the quasi-morphism defect
//! and the Sturm comparison harness.
//!
//! Between samples a path is interpolated by the Cayley transform of the step
//! `M = Φ_{i+1} Φ_i^{-1}`, which keeps every interpolated frame symplectic and
//! gives an exact generator `Φ̇ Φ^{-1}` for the crossing forms.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symp::{max_abs, rho_eigen, rho_tilde, standard_j, SympMatrix, UnitComplex};

/// Bound on `max |Φ_{i+1} Φ_i^{-1} - I|` between consecutive samples.
pub const STEP_GUARD: f64 = 0.5;
/// Largest admissible jump of the unwrapped angle between samples.
const UNWRAP_LIMIT: f64 = PI / 2.0;
/// Angle jump that triggers refinement when paths are built here.
const REFINE_ANGLE: f64 = PI / 4.0;
const MAX_REFINE_DEPTH: usize = 24;
const MAX_FLOW_STEPS: usize = 1 << 16;

/// Which Hamiltonian vector field a flow follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// `ż = J ∇H`; positive definite quadratic Hamiltonians wind positively.
    #[default]
    JGrad,
    /// `ż = -J ∇H`, i.e. `i_X ω = -dH`; Hamilton's equations `q̇ = ∂H/∂p`,
    /// `ṗ = -∂H/∂q` in `(q, p)` ordering.
    MinusJGrad,
}

impl SignConvention {
    pub fn sign(self) -> f64 {
        match self {
            SignConvention::JGrad => 1.0,
            SignConvention::MinusJGrad => -1.0,
        }
    }
}

fn step_defect(from: &SympMatrix, to: &SympMatrix) -> f64 {
    let dim = from.dim();
    max_abs(&(to.matrix() * from.inverse().matrix() - DMatrix::identity(dim, dim)))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric matrix `S = -J G` of a Hamiltonian generator `G = J S`.
fn hamiltonian_of(g: &DMatrix<f64>) -> DMatrix<f64> {
    let j = standard_j(g.nrows() / 2);
    symmetrize(&(-(j * g)))
}

/// Signature of a symmetric matrix: (positive, negative, smallest |eigenvalue|).
fn signature(s: &DMatrix<f64>) -> (i64, i64, f64) {
    let eig = SymmetricEigen::new(s.clone());
    let mut pos = 0;
    let mut neg = 0;
    let mut small = f64::INFINITY;
    for &v in eig.eigenvalues.iter() {
        small = small.min(v.abs());
        if v > 0.0 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    (pos, neg, small)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(s)).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// A continuous path of symplectic matrices sampled at increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct SympPath {
    times: Vec<f64>,
    frames: Vec<SympMatrix>,
    label: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct FrameRecord {
    t: f64,
    frame: Vec<Vec<f64>>,
}

impl SympPath {
    pub fn new(times: Vec<f64>, frames: Vec<SympMatrix>) -> Result<Self> {
        if times.len() != frames.len() {
            return Err(Error::InvalidParams(format!(
                "{} times for {} frames",
                times.len(),
                frames.len()
            )));
        }
        if frames.len() < 2 {
            return Err(Error::InvalidParams("a path needs at least two samples".into()));
        }
        let dim = frames[0].dim();
        for f in &frames {
            if f.dim() != dim {
                return Err(Error::DimMismatch { left: dim, right: f.dim() });
            }
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite() {
                return Err(Error::InvalidParams(format!("times not strictly increasing at index {i}")));
            }
        }
        for i in 0..frames.len() - 1 {
            let d = step_defect(&frames[i], &frames[i + 1]);
            if !(d < STEP_GUARD) {
                return Err(Error::SamplingTooCoarse(format!(
                    "step {i} at t = {} has |Φ_(i+1) Φ_i^-1 - I| = {d:.3}",
                    times[i]
                )));
            }
        }
        Ok(SympPath { times, frames, label: None })
    }

    /// Samples `f` on a uniform grid of `intervals` steps, refining where the
    /// step guard or the angle jump bound would fail.
    pub fn from_fn<F>(t0: f64, t1: f64, intervals: usize, f: F) -> Result<Self>
    where
        F: Fn(f64) -> SympMatrix,
    {
        let times = uniform_grid(t0, t1, intervals)?;
        refined_path(&times, |t| Ok(f(t)))
    }

    pub fn constant(a: SympMatrix, t0: f64, t1: f64) -> Result<Self> {
        SympPath::new(vec![t0, t1], vec![a.clone(), a])
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frames(&self) -> &[SympMatrix] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].dim()
    }

    pub fn half_dim(&self) -> usize {
        self.frames[0].half_dim()
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn first(&self) -> &SympMatrix {
        &self.frames[0]
    }

    pub fn last(&self) -> &SympMatrix {
        self.frames.last().expect("non-empty")
    }

    /// Largest symplectic defect over the frames.
    pub fn max_defect(&self) -> f64 {
        self.frames.iter().map(|f| f.defect()).fold(0.0, f64::max)
    }

    /// Index of the sampling interval containing `t` (clamped to the span).
    pub fn segment(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&x| x <= t);
        k.clamp(1, self.times.len() - 1) - 1
    }

    /// Cayley generator `X` of segment `i`, so that `Φ_{i+1} = (I-X)^{-1}(I+X) Φ_i`.
    fn cayley(&self, i: usize) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        let id = DMatrix::<f64>::identity(dim, dim);
        let m = self.frames[i + 1].matrix() * self.frames[i].inverse().matrix();
        let inv = (&m + &id).try_inverse().ok_or_else(|| {
            Error::SamplingTooCoarse(format!("step {i} has eigenvalue -1, no Cayley interpolant"))
        })?;
        Ok((m - id) * inv)
    }

    /// Frame at time `t`, interpolated along the Cayley curve of the step.
    pub fn eval(&self, t: f64) -> Result<SympMatrix> {
        let i = self.segment(t);
        let h = self.times[i + 1] - self.times[i];
        let s = ((t - self.times[i]) / h).clamp(0.0, 1.0);
        if s == 0.0 {
            return Ok(self.frames[i].clone());
        }
        if s == 1.0 {
            return Ok(self.frames[i + 1].clone());
        }
        let x = self.cayley(i)?;
        let dim = self.dim();
        let id = DMatrix::<f64>::identity(dim, dim);
        let c = (&id - &x * s)
            .try_inverse()
            .ok_or_else(|| Error::SamplingTooCoarse("singular Cayley factor".into()))?
            * (&id + &x * s);
        let m = c * self.frames[i].matrix();
        SympMatrix::new(m.clone()).or_else(|_| SympMatrix::renormalize(m))
    }

    /// `Φ̇ Φ^{-1}` at time `t` along the interpolant.
    pub fn generator(&self, t: f64) -> Result<DMatrix<f64>> {
        let i = self.segment(t);
        let h = self.times[i + 1] - self.times[i];
        let s = ((t - self.times[i]) / h).clamp(0.0, 1.0);
        let x = self.cayley(i)?;
        let dim = self.dim();
        let id = DMatrix::<f64>::identity(dim, dim);
        let inner = (&id - &x * &x * (s * s))
            .try_inverse()
            .ok_or_else(|| Error::SamplingTooCoarse("singular Cayley factor".into()))?;
        Ok(x * inner * (2.0 / h))
    }

    /// Sub-path on samples `i0..=i1`.
    pub fn slice(&self, i0: usize, i1: usize) -> Result<Self> {
        if i1 <= i0 || i1 >= self.len() {
            return Err(Error::InvalidParams(format!("bad slice {i0}..={i1} of {}", self.len())));
        }
        SympPath::new(self.times[i0..=i1].to_vec(), self.frames[i0..=i1].to_vec())
    }

    /// Concatenation; `other` must start where `self` ends.
    pub fn concat(&self, other: &SympPath) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch { left: self.dim(), right: other.dim() });
        }
        let gap_t = (other.start_time() - self.end_time()).abs();
        let scale = max_abs(self.last().matrix()).max(1.0);
        let gap_f = max_abs(&(other.first().matrix() - self.last().matrix()));
        if gap_t > 1e-12 * self.end_time().abs().max(1.0) || gap_f > 1e-9 * scale {
            return Err(Error::SpanMismatch);
        }
        let mut times = self.times.clone();
        let mut frames = self.frames.clone();
        times.extend_from_slice(&other.times[1..]);
        frames.extend_from_slice(&other.frames[1..]);
        SympPath::new(times, frames)
    }

    /// The same curve traversed backwards over the same time span.
    pub fn reversed(&self) -> Result<Self> {
        let (a, b) = (self.start_time(), self.end_time());
        let times: Vec<f64> = self.times.iter().rev().map(|&t| a + b - t).collect();
        let frames: Vec<SympMatrix> = self.frames.iter().rev().cloned().collect();
        SympPath::new(times.clone(), frames).or_else(|_| refined_path(&times, |t| self.eval(a + b - t)))
    }

    /// Pointwise inverse `t -> Φ(t)^{-1}`.
    pub fn pointwise_inverse(&self) -> Result<Self> {
        self.map_frames(|f| Ok(f.inverse()))
    }

    /// Pointwise conjugation `t -> B^{-1} Φ(t) B`.
    pub fn conjugate_by(&self, b: &SympMatrix) -> Result<Self> {
        self.map_frames(|f| f.conjugate_by(b))
    }

    /// Pointwise left multiplication `t -> A Φ(t)`.
    pub fn left_multiply(&self, a: &SympMatrix) -> Result<Self> {
        self.map_frames(|f| a.compose(f))
    }

    fn map_frames<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&SympMatrix) -> Result<SympMatrix>,
    {
        let frames: Result<Vec<SympMatrix>> = self.frames.iter().map(&f).collect();
        match SympPath::new(self.times.clone(), frames?) {
            Ok(p) => Ok(p.with_label_opt(self.label.clone())),
            Err(Error::SamplingTooCoarse(_)) => {
                refined_path(&self.times, |t| f(&self.eval(t)?))
            }
            Err(e) => Err(e),
        }
    }

    fn with_label_opt(mut self, label: Option<String>) -> Self {
        self.label = label;
        self
    }

    /// Same frames at new times `g(t_i)`; `g` must be strictly increasing.
    pub fn retime<G>(&self, g: G) -> Result<Self>
    where
        G: Fn(f64) -> f64,
    {
        SympPath::new(self.times.iter().map(|&t| g(t)).collect(), self.frames.clone())
    }

    /// Frames interpolated at the given times (inside the span).
    pub fn resample(&self, times: &[f64]) -> Result<Self> {
        let frames: Result<Vec<SympMatrix>> = times.iter().map(|&t| self.eval(t)).collect();
        SympPath::new(times.to_vec(), frames?)
    }

    /// The `k`-fold iterate `t + jT -> Φ(T)^j Φ(t)`, `j = 0..k`.
    pub fn iterate(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParams("iterate count must be positive".into()));
        }
        let t0 = self.start_time();
        let period = self.end_time() - t0;
        let mut powers = vec![SympMatrix::identity(self.dim())];
        for j in 1..k {
            let next = powers[j - 1].compose(self.last())?;
            powers.push(next);
        }
        let mut times = Vec::with_capacity(k * (self.len() - 1) + 1);
        times.push(t0);
        for j in 0..k {
            let shift = j as f64 * period;
            times.extend(self.times[1..].iter().map(|&t| t + shift));
        }
        refined_path(&times, |tau| {
            let j = (((tau - t0) / period).floor() as usize).min(k - 1);
            let local = tau - j as f64 * period;
            powers[j].compose(&self.eval(local)?)
        })
    }

    pub fn to_json(&self) -> String {
        let records: Vec<FrameRecord> = self
            .times
            .iter()
            .zip(&self.frames)
            .map(|(&t, f)| FrameRecord {
                t,
                frame: f.matrix().row_iter().map(|r| r.iter().cloned().collect()).collect(),
            })
            .collect();
        serde_json::to_string_pretty(&records).expect("plain numbers serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let records: Vec<FrameRecord> = serde_json::from_str(text)?;
        let mut times = Vec::with_capacity(records.len());
        let mut frames = Vec::with_capacity(records.len());
        for rec in records {
            let rows = rec.frame.len();
            if rec.frame.iter().any(|r| r.len() != rows) {
                return Err(Error::Parse(format!("frame at t = {} is not square", rec.t)));
            }
            let m = DMatrix::from_fn(rows, rows, |r, c| rec.frame[r][c]);
            frames.push(SympMatrix::new(m)?);
            times.push(rec.t);
        }
        SympPath::new(times, frames)
    }
}

pub(crate) fn uniform_grid(t0: f64, t1: f64, intervals: usize) -> Result<Vec<f64>> {
    if intervals == 0 || !(t1 > t0) {
        return Err(Error::InvalidParams(format!(
            "need t1 > t0 and at least one interval (t0 = {t0}, t1 = {t1})"
        )));
    }
    let h = (t1 - t0) / intervals as f64;
    Ok((0..=intervals)
        .map(|i| if i == intervals { t1 } else { t0 + i as f64 * h })
        .collect())
}

pub(crate) fn fine_enough(a: &SympMatrix, b: &SympMatrix) -> bool {
    if step_defect(a, b) >= STEP_GUARD {
        return false;
    }
    match (rho_tilde(a), rho_tilde(b)) {
        (Ok(ra), Ok(rb)) => angle_step(&ra, &rb).abs() < REFINE_ANGLE,
        _ => true,
    }
}

/// Builds a path through `f` on `times`, bisecting intervals that are too
/// coarse for the step guard or the angle unwrap.
pub(crate) fn refined_path<F>(times: &[f64], f: F) -> Result<SympPath>
where
    F: Fn(f64) -> Result<SympMatrix>,
{
    let mut out_t = vec![times[0]];
    let mut out_f = vec![f(times[0])?];
    for w in times.windows(2) {
        push_refined(&mut out_t, &mut out_f, w[0], w[1], &f, 0)?;
    }
    SympPath::new(out_t, out_f)
}

fn push_refined<F>(
    ts: &mut Vec<f64>,
    fs: &mut Vec<SympMatrix>,
    a: f64,
    b: f64,
    f: &F,
    depth: usize,
) -> Result<()>
where
    F: Fn(f64) -> Result<SympMatrix>,
{
    let fb = f(b)?;
    if fine_enough(fs.last().expect("seeded"), &fb) {
        ts.push(b);
        fs.push(fb);
        return Ok(());
    }
    if depth >= MAX_REFINE_DEPTH {
        return Err(Error::SamplingTooCoarse(format!("cannot resolve the path near t = {a}")));
    }
    let m = 0.5 * (a + b);
    push_refined(ts, fs, a, m, f, depth + 1)?;
    push_refined(ts, fs, m, b, f, depth + 1)
}

/// How a [`DeltaReport`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMethod {
    Polar,
    Eigen,
    Homogenized(u32),
}

/// Winding of the circle map along a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub delta: f64,
    /// Unwrapped angle at every sample.
    pub winding_trace: Vec<f64>,
    pub method: DeltaMethod,
}

fn angle_step(from: &UnitComplex, to: &UnitComplex) -> f64 {
    (to.value() * from.value().conj()).arg()
}

fn unwrap(times: &[f64], values: &[Option<UnitComplex>]) -> Result<Vec<f64>> {
    let first = values
        .iter()
        .position(|v| v.is_some())
        .ok_or_else(|| Error::NearDegenerate("no frame of the path is classifiable".into()))?;
    let mut last = values[first].expect("checked");
    let mut theta = last.arg();
    let mut trace = vec![theta; first + 1];
    for (i, v) in values.iter().enumerate().skip(first + 1) {
        if let Some(z) = v {
            let d = angle_step(&last, z);
            if d.abs() >= UNWRAP_LIMIT {
                return Err(Error::SamplingTooCoarse(format!(
                    "angle jumps by {d:.3} rad near t = {}",
                    times[i]
                )));
            }
            theta += d;
            last = *z;
        }
        trace.push(theta);
    }
    Ok(trace)
}

/// `Δ` of the polar surrogate: total unwrapped angle of `ρ̃` divided by `π`.
pub fn delta_tilde(path: &SympPath) -> Result<DeltaReport> {
    let values: Result<Vec<Option<UnitComplex>>> =
        path.frames.iter().map(|f| rho_tilde(f).map(Some)).collect();
    let trace = unwrap(&path.times, &values?)?;
    Ok(DeltaReport {
        delta: (trace[trace.len() - 1] - trace[0]) / PI,
        winding_trace: trace,
        method: DeltaMethod::Polar,
    })
}

/// `Δ` of the eigenvalue-based circle map. Frames whose spectrum cannot be
/// classified (eigenvalue collisions) are bridged by continuity.
pub fn delta_rho(path: &SympPath) -> Result<DeltaReport> {
    let mut values = Vec::with_capacity(path.len());
    for f in &path.frames {
        match rho_eigen(f) {
            Ok(z) => values.push(Some(z)),
            Err(Error::NearDegenerate(_)) => values.push(None),
            Err(e) => return Err(e),
        }
    }
    let trace = unwrap(&path.times, &values)?;
    Ok(DeltaReport {
        delta: (trace[trace.len() - 1] - trace[0]) / PI,
        winding_trace: trace,
        method: DeltaMethod::Eigen,
    })
}

fn check_from_identity(path: &SympPath) -> Result<()> {
    let dim = path.dim();
    let distance = max_abs(&(path.first().matrix() - DMatrix::identity(dim, dim)));
    if distance > 1e-8 {
        return Err(Error::NotFromIdentity { distance });
    }
    Ok(())
}

/// `Δ̃` of the `k`-fold iterate divided by `k`.
pub fn delta_homogenized(path: &SympPath, k: usize) -> Result<DeltaReport> {
    if k == 0 || k > 64 {
        return Err(Error::InvalidParams(format!("1 <= k <= 64 required, got {k}")));
    }
    check_from_identity(path)?;
    let iterate = path.iterate(k)?;
    let report = delta_tilde(&iterate)?;
    Ok(DeltaReport {
        delta: report.delta / k as f64,
        winding_trace: report.winding_trace,
        method: DeltaMethod::Homogenized(k as u32),
    })
}

type ProfileFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Time dependence of a quadratic Hamiltonian.
#[derive(Clone)]
pub enum Profile {
    Constant(DMatrix<f64>),
    /// Piecewise linear through the samples, constant outside.
    Sampled { times: Vec<f64>, mats: Vec<DMatrix<f64>> },
    Closure(ProfileFn),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(s) => f.debug_tuple("Constant").field(s).finish(),
            Profile::Sampled { times, .. } => write!(f, "Sampled({} knots)", times.len()),
            Profile::Closure(_) => write!(f, "Closure"),
        }
    }
}

/// `H_t(X) = ½ ⟨S(t) X, X⟩`; its flow solves `Φ̇ = ±J S(t) Φ`.
#[derive(Debug, Clone)]
pub struct QuadHamiltonian {
    dim: usize,
    profile: Profile,
    convention: SignConvention,
}

fn check_symmetric(s: &DMatrix<f64>) -> Result<()> {
    if s.nrows() != s.ncols() || !s.nrows().is_multiple_of(2) || s.nrows() == 0 {
        return Err(Error::InvalidParams(format!("S must be 2n x 2n, got {}x{}", s.nrows(), s.ncols())));
    }
    let defect = max_abs(&(s - s.transpose()));
    if defect > 1e-10 {
        return Err(Error::NotSymmetric { defect });
    }
    Ok(())
}

impl QuadHamiltonian {
    pub fn constant(s: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&s)?;
        Ok(QuadHamiltonian { dim: s.nrows(), profile: Profile::Constant(s), convention: SignConvention::JGrad })
    }

    /// `S = c I` on `R^{2n}`.
    pub fn scalar(n: usize, c: f64) -> Self {
        let s = DMatrix::identity(2 * n, 2 * n) * c;
        QuadHamiltonian { dim: 2 * n, profile: Profile::Constant(s), convention: SignConvention::JGrad }
    }

    pub fn sampled(times: Vec<f64>, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != mats.len() {
            return Err(Error::InvalidParams("sampled profile needs matching non-empty knots".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("profile knots must increase".into()));
        }
        for m in &mats {
            check_symmetric(m)?;
        }
        let dim = mats[0].nrows();
        if let Some(m) = mats.iter().find(|m| m.nrows() != dim) {
            return Err(Error::DimMismatch { left: dim, right: m.nrows() });
        }
        Ok(QuadHamiltonian { dim, profile: Profile::Sampled { times, mats }, convention: SignConvention::JGrad })
    }

    pub fn from_fn<F>(dim: usize, f: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        QuadHamiltonian { dim, profile: Profile::Closure(Arc::new(f)), convention: SignConvention::JGrad }
    }

    pub fn with_convention(mut self, convention: SignConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn convention(&self) -> SignConvention {
        self.convention
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// `S(t)`, checked for symmetry.
    pub fn s_at(&self, t: f64) -> Result<DMatrix<f64>> {
        let s = match &self.profile {
            Profile::Constant(s) => return Ok(s.clone()),
            Profile::Sampled { times, mats } => {
                let k = times.partition_point(|&x| x <= t);
                if k == 0 {
                    mats[0].clone()
                } else if k == times.len() {
                    mats[k - 1].clone()
                } else {
                    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
                    &mats[k - 1] * (1.0 - w) + &mats[k] * w
                }
            }
            Profile::Closure(f) => f(t),
        };
        if s.nrows() != self.dim {
            return Err(Error::DimMismatch { left: self.dim, right: s.nrows() });
        }
        check_symmetric(&s)?;
        Ok(symmetrize(&s))
    }

    /// `±J S(t)`.
    pub fn generator(&self, t: f64) -> Result<DMatrix<f64>> {
        let j = standard_j(self.dim / 2);
        Ok(j * self.s_at(t)? * self.convention.sign())
    }
}

/// Fundamental solution `Φ(t0) = I` of `Φ̇ = ±J S(t) Φ` by the fourth-order
/// Magnus integrator. Steps are doubled (up to `2^16`) until consecutive
/// frames satisfy the step guard and the angle bound.
pub fn linear_flow(h: &QuadHamiltonian, t0: f64, t1: f64, steps: usize) -> Result<SympPath> {
    if steps == 0 || !(t1 > t0) {
        return Err(Error::InvalidParams(format!("need t1 > t0 and steps > 0 (got {t0}, {t1}, {steps})")));
    }
    let mut n = steps;
    loop {
        match magnus_path(h, t0, t1, n) {
            Err(Error::StepGuardViolated { .. }) if n < MAX_FLOW_STEPS => n = (2 * n).min(MAX_FLOW_STEPS),
            other => return other,
        }
    }
}

fn magnus_path(h: &QuadHamiltonian, t0: f64, t1: f64, n: usize) -> Result<SympPath> {
    let dim = h.dim();
    let id = DMatrix::<f64>::identity(dim, dim);
    let times = uniform_grid(t0, t1, n)?;
    let sqrt3 = 3f64.sqrt();
    let (c1, c2) = (0.5 - sqrt3 / 6.0, 0.5 + sqrt3 / 6.0);
    let mut frames = vec![SympMatrix::identity(dim)];
    let mut prev_rho = UnitComplex::one();
    for w in times.windows(2) {
        let step = w[1] - w[0];
        let a1 = h.generator(w[0] + c1 * step)?;
        let a2 = h.generator(w[0] + c2 * step)?;
        let omega = (&a1 + &a2) * (step / 2.0) + (&a2 * &a1 - &a1 * &a2) * (sqrt3 * step * step / 12.0);
        let e = omega.exp();
        if !(max_abs(&(&e - &id)) < STEP_GUARD) {
            return Err(Error::StepGuardViolated { steps: n });
        }
        let m = e * frames.last().expect("seeded").matrix();
        let next = SympMatrix::new(m.clone()).or_else(|_| SympMatrix::renormalize(m))?;
        let rho = rho_tilde(&next)?;
        if angle_step(&prev_rho, &rho).abs() >= REFINE_ANGLE {
            return Err(Error::StepGuardViolated { steps: n });
        }
        prev_rho = rho;
        frames.push(next);
    }
    SympPath::new(times, frames)
}

/// Conley-Zehnder index of a path from the identity with nondegenerate
/// endpoint, by the crossing formula
/// `μ = ½ sign Γ(t0) + Σ sign Γ(t)` over interior crossings, where `Γ(t)` is
/// the crossing form `⟨S(t) ξ, ξ⟩` on `ker(I - Φ(t))`.
///
/// If a crossing is not regular the whole path is replaced by
/// `exp(ε J (t - t0)/(T - t0)) Φ(t)` with a small `ε` and the count is redone.
pub fn conley_zehnder(path: &SympPath) -> Result<i64> {
    check_from_identity(path)?;
    let dim = path.dim();
    let id = DMatrix::<f64>::identity(dim, dim);
    let end_det = (&id - path.last().matrix()).determinant();
    if end_det.abs() <= 1e-8 {
        return Err(Error::DegenerateEndpoint { det: end_det });
    }
    let mut eps = 0.0;
    for _ in 0..4 {
        let p = if eps == 0.0 { path.clone() } else { rotate_along(path, eps)? };
        if eps != 0.0 {
            let det = (&id - p.last().matrix()).determinant();
            if det.signum() != end_det.signum() {
                break;
            }
        }
        match crossing_sum(&p)? {
            Some(mu) => return Ok(mu),
            None => eps = if eps == 0.0 { 1e-7 } else { eps * 10.0 },
        }
    }
    Err(Error::UnresolvedCrossing("crossings stay non-regular under perturbation".into()))
}

/// `t -> exp(ε J (t - t0)/(T - t0)) Φ(t)`.
fn rotate_along(path: &SympPath, eps: f64) -> Result<SympPath> {
    let j = standard_j(path.half_dim());
    let (t0, t1) = (path.start_time(), path.end_time());
    let frames: Result<Vec<SympMatrix>> = path
        .times
        .iter()
        .zip(&path.frames)
        .map(|(&t, f)| {
            let r = SympMatrix::new((&j * (eps * (t - t0) / (t1 - t0))).exp())?;
            r.compose(f)
        })
        .collect();
    SympPath::new(path.times.clone(), frames?)
}

fn regularity_tol(s: &DMatrix<f64>) -> f64 {
    1e-8 * max_abs(s).max(1.0)
}

/// Crossing count, or `None` when some crossing is not regular.
fn crossing_sum(p: &SympPath) -> Result<Option<i64>> {
    let s0 = hamiltonian_of(&p.generator(p.start_time())?);
    let (pos, neg, small) = signature(&s0);
    if small < regularity_tol(&s0) {
        return Ok(None);
    }
    let mut mu2 = pos - neg;
    let dim = p.dim();
    let id = DMatrix::<f64>::identity(dim, dim);
    for t in find_crossings(p)? {
        let phi = p.eval(t)?;
        let scale = max_abs(phi.matrix()).max(1.0);
        let svd = SVD::new(&id - phi.matrix(), false, true);
        let v_t = svd.v_t.expect("requested");
        let smallest = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if smallest >= 1e-6 * scale {
            continue;
        }
        let kernel: Vec<usize> =
            (0..dim).filter(|&i| svd.singular_values[i] < 1e-5 * scale).collect();
        let k = DMatrix::from_fn(dim, kernel.len(), |r, c| v_t[(kernel[c], r)]);
        let s = hamiltonian_of(&p.generator(t)?);
        let form = symmetrize(&(k.transpose() * &s * &k));
        let (pos, neg, small) = signature(&form);
        if small < regularity_tol(&s) {
            return Ok(None);
        }
        mu2 += 2 * (pos - neg);
    }
    Ok(Some(mu2 / 2))
}

fn det_and_gap(p: &SympPath, t: f64) -> Result<(f64, f64)> {
    let phi = p.eval(t)?;
    let dim = p.dim();
    let m = DMatrix::<f64>::identity(dim, dim) - phi.matrix();
    let scale = max_abs(phi.matrix()).max(1.0);
    let sv = m.clone().singular_values();
    let smallest = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((m.determinant(), smallest / scale))
}

/// Candidate crossing times in the open interval `(t0, T)`: refined sign
/// changes of `det(I - Φ)` and local minima of its smallest singular value.
fn find_crossings(p: &SympPath) -> Result<Vec<f64>> {
    const SUB: usize = 8;
    let mut grid = vec![p.start_time()];
    for w in p.times.windows(2) {
        for k in 1..=SUB {
            grid.push(if k == SUB { w[1] } else { w[0] + (w[1] - w[0]) * k as f64 / SUB as f64 });
        }
    }
    let mut det = vec![0.0];
    let mut gap = vec![0.0];
    for &t in &grid[1..] {
        let (d, g) = det_and_gap(p, t)?;
        det.push(d);
        gap.push(g);
    }
    let last = grid.len() - 1;
    let mut found = Vec::new();
    for j in 1..last {
        if det[j] == 0.0 {
            found.push(grid[j]);
        } else if det[j] * det[j + 1] < 0.0 {
            found.push(bisect_sign(p, grid[j], grid[j + 1], det[j])?);
        }
        if gap[j] < 0.25 && gap[j - 1] > gap[j] && gap[j] <= gap[j + 1] {
            found.push(golden_min(p, grid[j - 1], grid[j + 1])?);
        }
    }
    found.sort_by(f64::total_cmp);
    found.dedup_by(|a, b| (*a - *b).abs() < 1e-8);
    let t0 = p.start_time();
    Ok(found.into_iter().filter(|&t| t - t0 > 1e-9).collect())
}

fn bisect_sign(p: &SympPath, mut a: f64, mut b: f64, det_a: f64) -> Result<f64> {
    while b - a > 1e-10 {
        let m = 0.5 * (a + b);
        let (d, _) = det_and_gap(p, m)?;
        if d == 0.0 {
            return Ok(m);
        }
        if d.signum() == det_a.signum() {
            a = m;
        } else {
            b = m;
        }
        if m == a && m == b {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

fn golden_min(p: &SympPath, mut a: f64, mut b: f64) -> Result<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = det_and_gap(p, c)?.1;
    let mut fd = det_and_gap(p, d)?.1;
    for _ in 0..200 {
        if b - a <= 1e-10 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = det_and_gap(p, c)?.1;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = det_and_gap(p, d)?.1;
        }
    }
    Ok(0.5 * (a + b))
}

/// Pointwise product `t -> Ψ(t) Φ(t)` on the union of both sampling grids.
pub fn pointwise_product(psi: &SympPath, phi: &SympPath) -> Result<SympPath> {
    if psi.dim() != phi.dim() {
        return Err(Error::DimMismatch { left: psi.dim(), right: phi.dim() });
    }
    let span = (phi.end_time() - phi.start_time()).abs().max(1.0);
    if (psi.start_time() - phi.start_time()).abs() > 1e-12 * span
        || (psi.end_time() - phi.end_time()).abs() > 1e-12 * span
    {
        return Err(Error::SpanMismatch);
    }
    let mut times: Vec<f64> = psi.times.iter().chain(phi.times.iter()).cloned().collect();
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * span);
    let last = times.len() - 1;
    times[0] = phi.start_time();
    times[last] = phi.end_time();
    refined_path(&times, |t| psi.eval(t)?.compose(&phi.eval(t)?))
}

/// `|Δ̃(ΨΦ) - Δ̃(Ψ) - Δ̃(Φ)|` for the pointwise product.
pub fn quasimorphism_defect(phi: &SympPath, psi: &SympPath) -> Result<f64> {
    let prod = pointwise_product(psi, phi)?;
    let d = delta_tilde(&prod)?.delta - delta_tilde(psi)?.delta - delta_tilde(phi)?.delta;
    Ok(d.abs())
}

/// Outcome of a Sturm comparison of two quadratic Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SturmReport {
    pub delta0: f64,
    pub delta1: f64,
    /// `delta1 - delta0`.
    pub margin: f64,
    /// Smallest eigenvalue of `S1 - S0` seen on the check grid.
    pub min_gap: f64,
}

/// Compares the flows of `H0 <= H1` on `[0, T]`.
pub fn sturm_compare(h0: &QuadHamiltonian, h1: &QuadHamiltonian, t: f64, steps: usize) -> Result<SturmReport> {
    if h0.dim() != h1.dim() {
        return Err(Error::DimMismatch { left: h0.dim(), right: h1.dim() });
    }
    let grid = uniform_grid(0.0, t, 2 * steps.max(1))?;
    let mut min_gap = f64::INFINITY;
    for &s in &grid {
        let diff = h1.s_at(s)? - h0.s_at(s)?;
        min_gap = min_gap.min(min_eigenvalue(&diff));
    }
    if h0.convention() != h1.convention() || min_gap < -1e-10 {
        return Err(Error::NotComparable { min_eig: min_gap });
    }
    let delta0 = delta_tilde(&linear_flow(h0, 0.0, t, steps)?)?.delta;
    let delta1 = delta_tilde(&linear_flow(h1, 0.0, t, steps)?)?.delta;
    Ok(SturmReport { delta0, delta1, margin: delta1 - delta0, min_gap })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot_path(t1: f64, n: usize) -> SympPath {
        SympPath::from_fn(0.0, t1, n, SympMatrix::rotation).unwrap()
    }

    #[test]
    fn constant_path_has_zero_delta() {
        let p = SympPath::constant(SympMatrix::hyperbolic(3.0), 0.0, 1.0).unwrap();
        assert_eq!(delta_tilde(&p).unwrap().delta, 0.0);
    }

    #[test]
    fn rotation_loop_winds_twice() {
        let d = delta_tilde(&rot_path(2.0 * PI, 64)).unwrap();
        assert!((d.delta - 2.0).abs() < 1e-12);
        let p = SympPath::from_fn(0.0, 2.0 * PI, 128, |t| {
            SympMatrix::rotation(t).direct_sum(&SympMatrix::rotation(2.0 * t))
        })
        .unwrap();
        assert!((delta_tilde(&p).unwrap().delta - 6.0).abs() < 1e-12);
    }

    #[test]
    fn coarse_sampling_is_rejected() {
        let frames = vec![SympMatrix::rotation(0.0), SympMatrix::rotation(1.2)];
        assert!(matches!(SympPath::new(vec![0.0, 1.0], frames), Err(Error::SamplingTooCoarse(_))));
    }

    #[test]
    fn cayley_interpolant_hits_samples_and_stays_symplectic() {
        let p = rot_path(1.0, 4);
        for &t in &[0.0, 0.1, 0.25, 0.3, 0.99, 1.0] {
            let f = p.eval(t).unwrap();
            assert!(f.defect() < 1e-13);
        }
        assert_eq!(p.eval(0.25).unwrap(), p.frames()[1]);
        // Rotations: the Cayley curve of a rotation step is a rotation path.
        let g = p.generator(0.4).unwrap();
        assert!(max_abs(&(g - standard_j(1))) < 1e-2);
    }

    #[test]
    fn linear_flow_closed_forms() {
        let zero = QuadHamiltonian::constant(DMatrix::zeros(2, 2)).unwrap();
        let p = linear_flow(&zero, 0.0, 1.0, 10).unwrap();
        assert!(p.frames().iter().all(|f| max_abs(&(f.matrix() - DMatrix::identity(2, 2))) == 0.0));
        let osc = QuadHamiltonian::scalar(1, 1.0);
        let p = linear_flow(&osc, 0.0, PI, 50).unwrap();
        assert!(max_abs(&(p.last().matrix() + DMatrix::identity(2, 2))) < 1e-8);
        let alpha = 0.7;
        let t = 5.0;
        for n in 1..=3 {
            let h = QuadHamiltonian::scalar(n, 2.0 * alpha);
            let d = delta_tilde(&linear_flow(&h, 0.0, t, 40).unwrap()).unwrap().delta;
            assert!((d - 2.0 * n as f64 * alpha * t / PI).abs() < 1e-6);
        }
    }

    #[test]
    fn convention_flips_winding() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let h = QuadHamiltonian::constant(s).unwrap();
        let a = delta_tilde(&linear_flow(&h, 0.0, 4.0, 100).unwrap()).unwrap().delta;
        let h = h.with_convention(SignConvention::MinusJGrad);
        let b = delta_tilde(&linear_flow(&h, 0.0, 4.0, 100).unwrap()).unwrap().delta;
        assert!(a > 0.0 && (a + b).abs() < 1e-9);
    }

    #[test]
    fn conley_zehnder_rotation_oracles() {
        let osc = QuadHamiltonian::scalar(1, 1.0);
        assert_eq!(conley_zehnder(&linear_flow(&osc, 0.0, PI, 64).unwrap()).unwrap(), 1);
        assert_eq!(conley_zehnder(&linear_flow(&osc, 0.0, 3.0 * PI, 192).unwrap()).unwrap(), 3);
        assert_eq!(conley_zehnder(&linear_flow(&osc, 0.0, 5.5, 64).unwrap()).unwrap(), 1);
        assert_eq!(conley_zehnder(&linear_flow(&osc, 0.0, 7.0, 64).unwrap()).unwrap(), 3);
        let neg = QuadHamiltonian::scalar(1, -1.0);
        assert_eq!(conley_zehnder(&linear_flow(&neg, 0.0, 3.0 * PI, 192).unwrap()).unwrap(), -3);
        let osc2 = QuadHamiltonian::scalar(2, 1.0);
        assert_eq!(conley_zehnder(&linear_flow(&osc2, 0.0, 3.0 * PI, 192).unwrap()).unwrap(), 6);
    }

    #[test]
    fn conley_zehnder_hyperbolic_and_errors() {
        // Φ(t) = diag(e^t, e^-t): no interior crossing, S indefinite, μ = 0.
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let h = QuadHamiltonian::constant(s).unwrap();
        let p = linear_flow(&h, 0.0, 1.0, 32).unwrap();
        assert_eq!(conley_zehnder(&p).unwrap(), 0);
        let osc = QuadHamiltonian::scalar(1, 1.0);
        let p = linear_flow(&osc, 0.0, 2.0 * PI, 64).unwrap();
        assert!(matches!(conley_zehnder(&p), Err(Error::DegenerateEndpoint { .. })));
        let shifted = p.left_multiply(&SympMatrix::rotation(0.5)).unwrap();
        assert!(matches!(conley_zehnder(&shifted), Err(Error::NotFromIdentity { .. })));
    }

    #[test]
    fn homogenized_values() {
        let p = rot_path(2.0 * PI, 64);
        for k in [1, 3, 8] {
            assert!((delta_homogenized(&p, k).unwrap().delta - 2.0).abs() < 1e-10);
        }
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let h = QuadHamiltonian::constant(s).unwrap();
        let p = linear_flow(&h, 0.0, 1.0, 16).unwrap();
        assert!(delta_homogenized(&p, 8).unwrap().delta.abs() < 2.0 / 8.0);
        assert!(delta_homogenized(&p, 65).is_err());
    }

    #[test]
    fn sturm_closed_form_margin() {
        let zero = QuadHamiltonian::constant(DMatrix::zeros(2, 2)).unwrap();
        let osc = QuadHamiltonian::scalar(1, 1.0);
        let r = sturm_compare(&zero, &osc, 10.0, 200).unwrap();
        assert!((r.margin - 10.0 / PI).abs() < 1e-6);
        assert!(matches!(sturm_compare(&osc, &zero, 1.0, 10), Err(Error::NotComparable { .. })));
        let same = sturm_compare(&osc, &osc, 3.0, 50).unwrap();
        assert_eq!(same.margin, 0.0);
    }

    #[test]
    fn quasimorphism_trivial_cases() {
        let a = rot_path(3.0, 40);
        let b = SympPath::from_fn(0.0, 3.0, 30, |t| SympMatrix::rotation(-2.0 * t)).unwrap();
        assert!(quasimorphism_defect(&a, &b).unwrap() < 1e-8);
        let id = SympPath::constant(SympMatrix::identity(2), 0.0, 3.0).unwrap();
        assert!(quasimorphism_defect(&a, &id).unwrap() < 1e-8);
        let c = SympPath::constant(SympMatrix::identity(4), 0.0, 3.0).unwrap();
        assert!(matches!(quasimorphism_defect(&a, &c), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn json_round_trip() {
        let p = rot_path(1.0, 5);
        let q = SympPath::from_json(&p.to_json()).unwrap();
        assert_eq!(p.times(), q.times());
        assert_eq!(p.frames(), q.frames());
    }
}
