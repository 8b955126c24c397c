//! Action and index bookkeeping for the model Hamiltonians `F±` of the
//! filtered Floer complex near a coisotropic level.
//!
//! Everything here is fiber-quadratic arithmetic: the levels of
//! `ρ = |X|^2 / 4π`, the window `(a, b)`, the actions and index intervals of
//! the nontrivial one-periodic orbits, and how recapping moves them.
//! Actions are leading order; the smoothing error is modeled by a slack `η`
//! that every strict inequality has to clear.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_csv};

const SLOPE_NUDGE: f64 = 1e-9 * std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    /// Half the dimension of the coisotropic submanifold.
    pub m: u32,
    /// Half its codimension.
    pub q: u32,
    pub r: f64,
    pub eps0: f64,
    /// Extreme eigenvalues of the fiber Hessian relative to the Euclidean form.
    pub lam_min: f64,
    pub lam_max: f64,
}

impl GeometryParams {
    pub fn new(m: u32, q: u32, r: f64, eps0: f64, lam_min: f64, lam_max: f64) -> Result<Self> {
        let p = GeometryParams { m, q, r, eps0, lam_min, lam_max };
        let v = p.violations();
        if v.is_empty() {
            Ok(p)
        } else {
            Err(Error::InvalidParams(v.join("; ")))
        }
    }

    pub fn from_r2(m: u32, q: u32, r2: f64, eps0: f64, lam_min: f64, lam_max: f64) -> Result<Self> {
        if !(r2 > 0.0) {
            return Err(Error::InvalidParams(format!("r^2 must be positive, got {r2}")));
        }
        Self::new(m, q, r2.sqrt(), eps0, lam_min, lam_max)
    }

    pub fn r2(&self) -> f64 {
        self.r * self.r
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.m == 0 || self.q == 0 {
            out.push(format!("m and q must be positive, got m = {}, q = {}", self.m, self.q));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            out.push(format!("r must be positive, got {}", self.r));
        }
        if !(self.eps0 > 0.0) {
            out.push(format!("eps0 must be positive, got {}", self.eps0));
        }
        if !(self.eps0 <= self.r2() / 10.0) {
            out.push(format!("eps0 <= r²/10 required, got eps0 = {} with r² = {}", self.eps0, self.r2()));
        }
        if !(self.lam_min > 0.0 && self.lam_min <= self.lam_max && self.lam_max.is_finite()) {
            out.push(format!(
                "0 < lam_min <= lam_max required, got lam_min = {}, lam_max = {}",
                self.lam_min, self.lam_max
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelKind {
    /// Convex corner, near `ρ₁`.
    X,
    /// Concave corner, near `ρ₂`.
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub kind: LevelKind,
    pub sign: Side,
    pub l: u64,
    pub rho: f64,
    pub action: f64,
    pub index_lo: i64,
    pub index_hi: i64,
}

impl Level {
    pub fn contains_index(&self, n: i64) -> bool {
        self.index_lo <= n && n <= self.index_hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    pub params: GeometryParams,
    pub rho1m: f64,
    pub rho2m: f64,
    pub rho3m: f64,
    pub rho1p: f64,
    pub rho2p: f64,
    pub rho3p: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub slope: f64,
    pub k: u64,
    pub n0: i64,
    pub levels: Vec<Level>,
}

/// `[(2l-1)q - m + 1, (2l+1)q + m]`.
pub fn x_interval(m: u32, q: u32, l: u64) -> (i64, i64) {
    let (m, q, l) = (m as i64, q as i64, l as i64);
    ((2 * l - 1) * q - m + 1, (2 * l + 1) * q + m)
}

/// `[(2l-1)q - m, (2l+1)q + m - 1]`.
pub fn y_interval(m: u32, q: u32, l: u64) -> (i64, i64) {
    let (m, q, l) = (m as i64, q as i64, l as i64);
    ((2 * l - 1) * q - m, (2 * l + 1) * q + m - 1)
}

pub fn x_action(c: f64, rho1: f64, l: u64) -> f64 {
    c + 4.0 * PI * PI * l as f64 * rho1
}

pub fn y_action(rho2: f64, l: u64) -> f64 {
    4.0 * PI * PI * l as f64 * rho2
}

pub fn derive_levels(p: &GeometryParams) -> Result<LevelScheme> {
    let v = p.violations();
    if !v.is_empty() {
        return Err(Error::InvalidParams(v.join("; ")));
    }
    let r2 = p.r2();
    let rho3m = (r2 - 2.0 * p.eps0) / (4.0 * PI * p.lam_max);
    let rho2m = 2.0 * rho3m / 3.0;
    let rho1m = rho3m / 3.0;
    let rho1p = (r2 + 2.0 * p.eps0) / (4.0 * PI * p.lam_min);
    let rho2p = rho1p + rho1m;
    let rho3p = rho1p + 2.0 * rho1m;
    let c = 8.0 * PI * PI * rho3p;
    let a = c + 2.0 * PI * PI * rho1m;
    let b = c + 6.0 * PI * PI * rho3p;
    let slope = c / rho1m * (1.0 + SLOPE_NUDGE);
    let k = slope.floor() as u64;
    let mut levels = Vec::with_capacity(4 * k as usize);
    for l in 1..=k {
        for (sign, rho1, rho2) in [(Side::Plus, rho1p, rho2p), (Side::Minus, rho1m, rho2m)] {
            let (lo, hi) = x_interval(p.m, p.q, l);
            levels.push(Level { kind: LevelKind::X, sign, l, rho: rho1, action: x_action(c, rho1, l), index_lo: lo, index_hi: hi });
            let (lo, hi) = y_interval(p.m, p.q, l);
            levels.push(Level { kind: LevelKind::Y, sign, l, rho: rho2, action: y_action(rho2, l), index_lo: lo, index_hi: hi });
        }
    }
    Ok(LevelScheme {
        params: *p,
        rho1m,
        rho2m,
        rho3m,
        rho1p,
        rho2p,
        rho3p,
        c,
        a,
        b,
        slope,
        k,
        n0: 1 + p.q as i64 - p.m as i64,
        levels,
    })
}

impl LevelScheme {
    pub fn level(&self, kind: LevelKind, sign: Side, l: u64) -> Option<&Level> {
        self.levels.iter().find(|v| v.kind == kind && v.sign == sign && v.l == l)
    }

    pub fn default_slack(&self) -> f64 {
        1e-3 * self.c
    }

    pub fn max_action(&self) -> f64 {
        self.levels.iter().map(|l| l.action).fold(self.b, f64::max)
    }
}

/// Verdicts of the window conditions, each a strict inequality cleared by
/// at least the slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    /// `C < a < b < 2C`.
    pub window: bool,
    /// `A(x₁±) ∈ (a, b)`.
    pub x1_inside: bool,
    /// `A(y₁±) < A(y₂±) < a`.
    pub y_below: bool,
    /// Index intervals of `x_l`, `l ≥ 2`, and `y_l`, `l ≥ 3`, start above `n₀ + 1`.
    pub index_gap: bool,
    /// `2C < λ₀`.
    pub recap_clear: bool,
    /// Apart from `x₁`, only `y₁` and `y₂` have index intervals meeting `{n₀ - 1, n₀}`.
    pub only_y_near_n0: bool,
    pub slack: f64,
}

impl WindowReport {
    pub fn all(&self) -> bool {
        self.window && self.x1_inside && self.y_below && self.index_gap && self.recap_clear && self.only_y_near_n0
    }

    pub fn verdicts(&self) -> [bool; 6] {
        [self.window, self.x1_inside, self.y_below, self.index_gap, self.recap_clear, self.only_y_near_n0]
    }
}

/// `λ₀ = ∞` means no sphere has nonzero area.
pub fn check_window(s: &LevelScheme, lambda0: f64) -> WindowReport {
    check_window_with_slack(s, lambda0, s.default_slack())
}

pub fn check_window_with_slack(s: &LevelScheme, lambda0: f64, eta: f64) -> WindowReport {
    let lt = |x: f64, y: f64| y - x > eta;
    let window = lt(s.c, s.a) && lt(s.a, s.b) && lt(s.b, 2.0 * s.c);
    let mut x1_inside = true;
    let mut y_below = true;
    for sign in [Side::Plus, Side::Minus] {
        match s.level(LevelKind::X, sign, 1) {
            Some(x1) => x1_inside &= lt(s.a, x1.action) && lt(x1.action, s.b),
            None => x1_inside = false,
        }
        match (s.level(LevelKind::Y, sign, 1), s.level(LevelKind::Y, sign, 2)) {
            (Some(y1), Some(y2)) => y_below &= lt(y1.action, y2.action) && lt(y2.action, s.a),
            _ => y_below = false,
        }
    }
    let index_gap = s.levels.iter().all(|v| match v.kind {
        LevelKind::X if v.l >= 2 => v.index_lo > s.n0 + 1,
        LevelKind::Y if v.l >= 3 => v.index_lo > s.n0 + 1,
        _ => true,
    });
    let recap_clear = lambda0.is_infinite() || lt(2.0 * s.c, lambda0);
    let only_y_near_n0 = s.levels.iter().all(|v| {
        let near = v.contains_index(s.n0 - 1) || v.contains_index(s.n0);
        let exempt = match v.kind {
            LevelKind::X => v.l == 1,
            LevelKind::Y => v.l <= 2,
        };
        !near || exempt
    });
    WindowReport { window, x1_inside, y_below, index_gap, recap_clear, only_y_near_n0, slack: eta }
}

/// How a capping sphere `w` moves action and index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum CappingCase {
    /// `c₁ = 0` on spheres: indices do not move.
    C1Zero,
    /// `c₁ = λ [ω]` on spheres.
    Proportional { lambda: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CappingShift {
    /// Positive generator of the period group, possibly infinite.
    pub lambda0: f64,
    pub case: CappingCase,
}

impl CappingShift {
    pub fn new(lambda0: f64, case: CappingCase) -> Result<Self> {
        if !(lambda0 > 0.0) {
            return Err(Error::InvalidParams(format!("lambda0 must be positive, got {lambda0}")));
        }
        if let CappingCase::Proportional { lambda } = case {
            if !(lambda.is_finite() && lambda != 0.0) || lambda0.is_infinite() {
                return Err(Error::InvalidParams("proportional case needs finite nonzero lambda and lambda0".into()));
            }
        }
        Ok(CappingShift { lambda0, case })
    }
}

/// Action and index interval after recapping by `j` generators, for each
/// `j` in the range. With `λ₀ = ∞` only `j = 0` exists.
pub fn recap_lattice(
    action: f64,
    index_lo: i64,
    index_hi: i64,
    shift: &CappingShift,
    j_range: std::ops::RangeInclusive<i64>,
) -> Result<Vec<(f64, i64, i64)>> {
    let step = match shift.case {
        CappingCase::C1Zero => 0,
        CappingCase::Proportional { lambda } => {
            let v = 2.0 * lambda * shift.lambda0;
            let n = v.round();
            if (v - n).abs() > 1e-9 || (n as i64) % 2 != 0 {
                return Err(Error::InconsistentChern { value: v });
            }
            n as i64
        }
    };
    Ok(j_range
        .filter(|&j| j == 0 || shift.lambda0.is_finite())
        .map(|j| {
            let da = if j == 0 { 0.0 } else { j as f64 * shift.lambda0 };
            (action + da, index_lo + j * step, index_hi + j * step)
        })
        .collect())
}

/// Whether some nonzero recap of a level with action in `[0, 2C]` lands in
/// `(a, b)`.
pub fn recap_hits_window(s: &LevelScheme, shift: &CappingShift, j_max: i64) -> Result<bool> {
    for v in s.levels.iter().filter(|v| v.action >= 0.0 && v.action <= 2.0 * s.c) {
        for (action, _, _) in recap_lattice(v.action, v.index_lo, v.index_hi, shift, -j_max..=j_max)? {
            if action != v.action && action > s.a && action < s.b {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomotopyReport {
    /// Smallest distance of a relevant action to `a` or `b`, negative if one
    /// changed side.
    pub margin: f64,
    pub samples: usize,
    pub slack: f64,
    /// Actions of `x₁`, `y₁`, `y₂` at each sample.
    pub trace: Vec<(f64, f64, f64, f64)>,
}

impl HomotopyReport {
    pub fn clear(&self) -> bool {
        self.margin > self.slack
    }
}

/// Slides the levels from the `F⁺` to the `F⁻` configuration,
/// `ρ₁(s) = (1-s)ρ₁⁺ + sρ₁⁻`, `ρ₂(s) = ρ₁(s) + ρ₁⁻`, and tracks the levels
/// whose index intervals meet `{n₀-1, n₀, n₀+1}` against the window ends.
pub fn homotopy_trace(p: &GeometryParams, samples: usize) -> Result<HomotopyReport> {
    if samples < 10 {
        return Err(Error::InvalidParams(format!("homotopy needs at least 10 samples, got {samples}")));
    }
    let s = derive_levels(p)?;
    let relevant: Vec<(LevelKind, u64)> = [(LevelKind::X, 1), (LevelKind::Y, 1), (LevelKind::Y, 2)]
        .into_iter()
        .chain((2..=s.k.min(3)).map(|l| (LevelKind::X, l)))
        .chain((3..=s.k.min(4)).map(|l| (LevelKind::Y, l)))
        .filter(|&(kind, l)| {
            let (lo, hi) = match kind {
                LevelKind::X => x_interval(p.m, p.q, l),
                LevelKind::Y => y_interval(p.m, p.q, l),
            };
            lo <= s.n0 + 1 && s.n0 - 1 <= hi
        })
        .collect();
    let action_at = |kind: LevelKind, l: u64, t: f64| {
        let rho1 = (1.0 - t) * s.rho1p + t * s.rho1m;
        match kind {
            LevelKind::X => x_action(s.c, rho1, l),
            LevelKind::Y => y_action(rho1 + s.rho1m, l),
        }
    };
    let side = |x: f64| if x < s.a { 0 } else if x < s.b { 1 } else { 2 };
    let mut margin = f64::INFINITY;
    let mut trace = Vec::with_capacity(samples);
    for i in 0..samples {
        let t = i as f64 / (samples - 1) as f64;
        for &(kind, l) in &relevant {
            let x = action_at(kind, l, t);
            let start = side(action_at(kind, l, 0.0));
            let d = (x - s.a).abs().min((x - s.b).abs());
            margin = margin.min(if side(x) == start { d } else { -d });
        }
        trace.push((t, action_at(LevelKind::X, 1, t), action_at(LevelKind::Y, 1, t), action_at(LevelKind::Y, 2, t)));
    }
    Ok(HomotopyReport { margin, samples, slack: s.default_slack(), trace })
}

/// All actions must lie in `(0, h)`; actions scale with `r^2`, so the scheme
/// fits exactly when `r^2 < r^2 h / max action`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub h: f64,
    pub max_action: f64,
    pub fits: bool,
    pub r2_max: f64,
}

pub fn h_threshold(s: &LevelScheme, h: f64) -> Result<ThresholdReport> {
    if !(h > 0.0) {
        return Err(Error::InvalidParams(format!("h must be positive, got {h}")));
    }
    let max_action = s.max_action();
    Ok(ThresholdReport { h, max_action, fits: max_action < h, r2_max: s.params.r2() * h / max_action })
}

/// Scheme with verdicts, as written to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    #[serde(flatten)]
    pub scheme: LevelScheme,
    /// `None` stands for `λ₀ = ∞`.
    pub lambda0: Option<f64>,
    pub verdicts: WindowReport,
    pub homotopy_margin: f64,
    pub threshold: Option<ThresholdReport>,
}

pub fn scheme_report(p: &GeometryParams, lambda0: Option<f64>, h: Option<f64>) -> Result<SchemeReport> {
    let scheme = derive_levels(p)?;
    let verdicts = check_window(&scheme, lambda0.unwrap_or(f64::INFINITY));
    let homotopy_margin = homotopy_trace(p, 100)?.margin;
    let threshold = h.map(|h| h_threshold(&scheme, h)).transpose()?;
    Ok(SchemeReport { scheme, lambda0, verdicts, homotopy_margin, threshold })
}

/// Levels with `l ≤ l_max` as CSV rows.
pub fn levels_csv(s: &LevelScheme, l_max: u64) -> (Vec<&'static str>, Vec<Vec<String>>) {
    let header = vec!["kind", "sign", "l", "rho", "action", "index_lo", "index_hi"];
    let rows = s
        .levels
        .iter()
        .filter(|v| v.l <= l_max)
        .map(|v| {
            vec![
                match v.kind {
                    LevelKind::X => "x".to_string(),
                    LevelKind::Y => "y".to_string(),
                },
                match v.sign {
                    Side::Plus => "+".to_string(),
                    Side::Minus => "-".to_string(),
                },
                v.l.to_string(),
                fmt_f64(v.rho),
                fmt_f64(v.action),
                v.index_lo.to_string(),
                v.index_hi.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

pub fn write_levels_csv(path: &Path, s: &LevelScheme, l_max: u64) -> Result<()> {
    let (header, rows) = levels_csv(s, l_max);
    write_csv(path, &header, &rows)
}

/// The 72 cells `m, q ∈ {1,2,3}`, `r² ∈ {0.25, 1}`, `lam_max / lam_min ∈ {1, 4}`
/// with `lam_min = 1` and `ε₀ ∈ {r²/20, r²/40}`.
pub fn standard_sweep() -> Vec<GeometryParams> {
    let mut out = Vec::new();
    for m in 1..=3 {
        for q in 1..=3 {
            for r2 in [0.25, 1.0] {
                for ratio in [1.0, 4.0] {
                    for eps_div in [20.0, 40.0] {
                        out.push(
                            GeometryParams::from_r2(m, q, r2, r2 / eps_div, 1.0, ratio).expect("valid sweep cell"),
                        );
                    }
                }
            }
        }
    }
    out
}
