//! Tangent processes: exact transition densities of rescaled increments at
//! finite `eps`, their closed-form limits, and convergence studies over an
//! `eps` ladder.
//!
//! Distances are measured on two-point densities: start at `(t1, y1)`
//! (default `t1 = 0`, `y1 = 0`), one transition to time `t2`, density in `y2`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{biane_half_pdf, cauchy_transition_pdf, qbm_radius, qbm_transition_pdf, qou_transition_pdf};
use crate::qspecial::QParams;
use crate::quadrature::{integrate_domain, Domain, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TangentKind {
    QouInterior,
    QouBoundary,
    QbmInterior,
    QbmBoundary,
}

impl TangentKind {
    pub const ALL: [TangentKind; 4] = [
        TangentKind::QouInterior,
        TangentKind::QouBoundary,
        TangentKind::QbmInterior,
        TangentKind::QbmBoundary,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TangentKind::QouInterior => "qou_interior",
            TangentKind::QouBoundary => "qou_boundary",
            TangentKind::QbmInterior => "qbm_interior",
            TangentKind::QbmBoundary => "qbm_boundary",
        }
    }

    pub fn is_boundary(&self) -> bool {
        matches!(self, TangentKind::QouBoundary | TangentKind::QbmBoundary)
    }

    pub fn is_qbm(&self) -> bool {
        matches!(self, TangentKind::QbmInterior | TangentKind::QbmBoundary)
    }
}

impl fmt::Display for TangentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TangentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TangentKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown tangent case '{s}'")))
    }
}

/// Base point of a tangent study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TangentCase {
    #[serde(rename = "case")]
    pub kind: TangentKind,
    pub q: f64,
    /// Base time of the q-BM cases; `None` for q-OU.
    pub s: Option<f64>,
    pub x: f64,
    #[serde(skip)]
    params: QParams,
}

fn check_s(s: f64) -> Result<()> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidTime(format!("base time s must be positive, got {s}")));
    }
    Ok(())
}

impl TangentCase {
    pub fn qou_interior(q: f64, x: f64) -> Result<Self> {
        let params = QParams::new(q)?;
        if !(x.abs() < params.x_plus()) {
            return Err(Error::InvalidState {
                value: x,
                lo: params.x_minus(),
                hi: params.x_plus(),
            });
        }
        Ok(Self {
            kind: TangentKind::QouInterior,
            q,
            s: None,
            x,
            params,
        })
    }

    pub fn qou_boundary(q: f64) -> Result<Self> {
        let params = QParams::new(q)?;
        Ok(Self {
            kind: TangentKind::QouBoundary,
            q,
            s: None,
            x: params.x_minus(),
            params,
        })
    }

    pub fn qbm_interior(q: f64, s: f64, x: f64) -> Result<Self> {
        let params = QParams::new(q)?;
        check_s(s)?;
        let r = qbm_radius(&params, s);
        if !(x.abs() < r) {
            return Err(Error::InvalidState { value: x, lo: -r, hi: r });
        }
        Ok(Self {
            kind: TangentKind::QbmInterior,
            q,
            s: Some(s),
            x,
            params,
        })
    }

    pub fn qbm_boundary(q: f64, s: f64) -> Result<Self> {
        let params = QParams::new(q)?;
        check_s(s)?;
        Ok(Self {
            kind: TangentKind::QbmBoundary,
            q,
            s: Some(s),
            x: -qbm_radius(&params, s),
            params,
        })
    }

    /// Build from a tag; `s` is required for q-BM cases and `x` for interior ones.
    pub fn from_parts(kind: TangentKind, q: f64, s: Option<f64>, x: Option<f64>) -> Result<Self> {
        let need_s = || s.ok_or_else(|| Error::InvalidParameter(format!("{kind} needs s")));
        let need_x = || x.ok_or_else(|| Error::InvalidParameter(format!("{kind} needs x")));
        match kind {
            TangentKind::QouInterior => Self::qou_interior(q, need_x()?),
            TangentKind::QouBoundary => Self::qou_boundary(q),
            TangentKind::QbmInterior => Self::qbm_interior(q, need_s()?, need_x()?),
            TangentKind::QbmBoundary => Self::qbm_boundary(q, need_s()?),
        }
    }

    pub fn params(&self) -> &QParams {
        &self.params
    }

    fn base_time(&self) -> f64 {
        self.s.unwrap_or(0.0)
    }
}

/// `c_{q,x} = sqrt(4/(1-q) - x^2)`, the Cauchy scale of the interior q-OU limit.
pub fn c_qx(p: &QParams, x: f64) -> f64 {
    (4.0 / p.one_minus_q() - x * x).max(0.0).sqrt()
}

/// `c_{q,s,x} = sqrt(4s/(1-q) - x^2) / (2s)`, the Cauchy scale of the interior q-BM limit.
pub fn c_qsx(p: &QParams, s: f64, x: f64) -> f64 {
    (4.0 * s / p.one_minus_q() - x * x).max(0.0).sqrt() / (2.0 * s)
}

fn check_times(t1: f64, t2: f64) -> Result<()> {
    if !(t1.is_finite() && t2.is_finite()) || t1 < 0.0 || t2 <= t1 {
        return Err(Error::InvalidTime(format!("need 0 <= t1 < t2, got t1 = {t1}, t2 = {t2}")));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Drift speed of the boundary q-BM rescaling, `a = 1/sqrt(s(1-q))`.
fn qbm_boundary_drift(p: &QParams, s: f64) -> f64 {
    1.0 / (s * p.one_minus_q()).sqrt()
}

/// Original-state coordinates `(time, state)` of the rescaled point `(t, y)`.
fn original_point(case: &TangentCase, eps: f64, t: f64, y: f64) -> (f64, f64) {
    let s = case.base_time();
    match case.kind {
        TangentKind::QouInterior => (eps * t, case.x + y * eps),
        TangentKind::QouBoundary => (eps * t, case.x + y * eps * eps),
        TangentKind::QbmInterior => (s + eps * t, case.x + y * eps),
        TangentKind::QbmBoundary => {
            let a = qbm_boundary_drift(&case.params, s);
            (s + eps * t, case.x - a * t * eps + y * eps * eps)
        }
    }
}

fn state_radius(case: &TangentCase, time: f64) -> f64 {
    if case.kind.is_qbm() {
        qbm_radius(&case.params, time)
    } else {
        case.params.x_plus()
    }
}

/// Whether the rescaled point `(t, y)` maps into the state space.
pub fn is_feasible(case: &TangentCase, eps: f64, t: f64, y: f64) -> bool {
    let (time, state) = original_point(case, eps, t, y);
    state.abs() <= state_radius(case, time) * (1.0 + 1e-12)
}

/// Transition density of the rescaled increment process at finite `eps`.
pub fn rescaled_pdf(case: &TangentCase, eps: f64, t1: f64, t2: f64, y1: f64, y2: f64) -> Result<f64> {
    check_eps(eps)?;
    check_times(t1, t2)?;
    let (time1, state1) = original_point(case, eps, t1, y1);
    let (time2, state2) = original_point(case, eps, t2, y2);
    if !(state1.abs() <= state_radius(case, time1) * (1.0 + 1e-12)) {
        return Err(Error::OutOfSupport {
            coordinate: "y1",
            value: y1,
        });
    }
    if !(state2.abs() <= state_radius(case, time2) * (1.0 + 1e-12)) {
        return Err(Error::OutOfSupport {
            coordinate: "y2",
            value: y2,
        });
    }
    let p = &case.params;
    let scale = if case.kind.is_boundary() { eps * eps } else { eps };
    let k = if case.kind.is_qbm() {
        qbm_transition_pdf(p, time1, time2, state1, state2)?
    } else {
        let x1 = state1.clamp(p.x_minus(), p.x_plus());
        qou_transition_pdf(p, time2 - time1, x1, state2)?
    };
    Ok(k * scale)
}

fn biane_limit(t1: f64, t2: f64, z1: f64, z2: f64, y1: f64) -> Result<f64> {
    biane_half_pdf(t1, t2, z1, z2).map_err(|e| match e {
        Error::InvalidState { .. } => Error::OutOfSupport {
            coordinate: "y1",
            value: y1,
        },
        other => other,
    })
}

/// Closed-form transition density of the tangent (limit) process.
pub fn limit_pdf(case: &TangentCase, t1: f64, t2: f64, y1: f64, y2: f64) -> Result<f64> {
    check_times(t1, t2)?;
    let p = &case.params;
    match case.kind {
        TangentKind::QouInterior => {
            let c = c_qx(p, case.x);
            Ok(cauchy_transition_pdf(t1, t2, y1 / c, y2 / c)? / c)
        }
        TangentKind::QouBoundary => {
            let r = p.one_minus_q().sqrt();
            Ok(biane_limit(2.0 * t1, 2.0 * t2, r * y1 + t1 * t1, r * y2 + t2 * t2, y1)? * r)
        }
        TangentKind::QbmInterior => {
            let s = case.base_time();
            let c = c_qsx(p, s, case.x);
            let v = case.x / (2.0 * s);
            cauchy_transition_pdf(c * t1, c * t2, y1 - t1 * v, y2 - t2 * v)
        }
        TangentKind::QbmBoundary => {
            let s = case.base_time();
            let b = (s * s * s * p.one_minus_q()).sqrt();
            Ok(biane_limit(t1, t2, b * y1, b * y2, y1)? * b)
        }
    }
}

/// Lower edge in `y2` of the limit law's support, for the boundary cases.
fn limit_lower_edge(case: &TangentCase, t1: f64, t2: f64, y1: f64) -> f64 {
    let p = &case.params;
    match case.kind {
        TangentKind::QouBoundary => 0.0,
        TangentKind::QbmBoundary => {
            let s = case.base_time();
            0.25 * t2 * t2 / (s * s * s * p.one_minus_q()).sqrt()
        }
        _ => {
            let _ = (t1, y1);
            f64::NEG_INFINITY
        }
    }
}

/// `y2`-range over which distances are measured, with the grid centre and
/// scale used to place points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Window {
    pub t1: f64,
    pub t2: f64,
    pub y1: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub center: f64,
    pub scale: f64,
    /// Limit mass outside `[y_lo, y_hi]`.
    pub tail_mass: f64,
}

impl Window {
    /// Default window: start at `t1 = 0`, `y1 = 0`, transition to `t2 = 1`,
    /// covering 99% of the limit mass.
    pub fn covering(case: &TangentCase) -> Result<Self> {
        Self::covering_at(case, 0.0, 1.0, 0.0, 0.99)
    }

    pub fn covering_at(case: &TangentCase, t1: f64, t2: f64, y1: f64, mass: f64) -> Result<Self> {
        check_times(t1, t2)?;
        if !(mass > 0.0 && mass < 1.0) {
            return Err(Error::InvalidParameter(format!("window mass must lie in (0, 1), got {mass}")));
        }
        let p = &case.params;
        match case.kind {
            TangentKind::QouInterior | TangentKind::QbmInterior => {
                let (center, scale) = if case.kind == TangentKind::QouInterior {
                    (y1, c_qx(p, case.x) * (t2 - t1))
                } else {
                    let s = case.base_time();
                    (y1 + (t2 - t1) * case.x / (2.0 * s), c_qsx(p, s, case.x) * (t2 - t1))
                };
                let half = scale * (0.5 * PI * mass).tan();
                Ok(Self {
                    t1,
                    t2,
                    y1,
                    y_lo: center - half,
                    y_hi: center + half,
                    center,
                    scale,
                    tail_mass: 1.0 - mass,
                })
            }
            TangentKind::QouBoundary | TangentKind::QbmBoundary => {
                // validates y1
                limit_pdf(case, t1, t2, y1, limit_lower_edge(case, t1, t2, y1) + 1.0)?;
                let lo = limit_lower_edge(case, t1, t2, y1).max(y1);
                let f = |y: f64| limit_pdf(case, t1, t2, y1, y).unwrap_or(0.0);
                let tail = |y: f64| -> Result<f64> {
                    let opts = QuadOptions {
                        abs_tol: 1e-10,
                        rel_tol: 1e-9,
                        max_intervals: 4000,
                    };
                    let scale = (y - lo).max(1e-300);
                    Ok(integrate_domain(|u| f(y + u), Domain::HalfLine { a: 0.0, scale }, &[], &opts)?.value)
                };
                let unit = {
                    let dt = t2 - t1;
                    let r = if case.kind == TangentKind::QouBoundary {
                        p.one_minus_q().sqrt()
                    } else {
                        let s = case.base_time();
                        (s * s * s * p.one_minus_q()).sqrt()
                    };
                    dt * dt / r
                };
                let target = 1.0 - mass;
                // typical scale: first doubling whose tail mass drops below one half
                let mut off = unit * 1e-3;
                let mut scale = None;
                let mut hi_off = None;
                for _ in 0..200 {
                    let m = tail(lo + off)?;
                    if scale.is_none() && m < 0.5 {
                        scale = Some(off);
                    }
                    if m < target {
                        hi_off = Some(off);
                        break;
                    }
                    off *= 2.0;
                }
                let hi_off = hi_off.ok_or_else(|| Error::QuadratureFailure("window search did not terminate".into()))?;
                let (mut a, mut b) = (0.5 * hi_off, hi_off);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if tail(lo + m)? < target {
                        b = m;
                    } else {
                        a = m;
                    }
                    if (b - a) < 1e-6 * b {
                        break;
                    }
                }
                Ok(Self {
                    t1,
                    t2,
                    y1,
                    y_lo: lo,
                    y_hi: lo + b,
                    center: lo,
                    scale: scale.unwrap_or(unit),
                    tail_mass: tail(lo + b)?,
                })
            }
        }
    }

    /// `n` points `center + scale sinh(v)`, `v` uniform, spanning the window,
    /// with the trapezoid weights for `dy`.
    pub fn grid(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let n = n.max(3);
        let v0 = ((self.y_lo - self.center) / self.scale).asinh();
        let v1 = ((self.y_hi - self.center) / self.scale).asinh();
        let h = (v1 - v0) / (n - 1) as f64;
        let mut ys = Vec::with_capacity(n);
        let mut ws = Vec::with_capacity(n);
        for i in 0..n {
            let v = v0 + h * i as f64;
            let y = if i == 0 {
                self.y_lo
            } else if i == n - 1 {
                self.y_hi
            } else {
                self.center + self.scale * v.sinh()
            };
            let edge = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            ys.push(y);
            ws.push(edge * h * self.scale * v.cosh());
        }
        (ys, ws)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distance {
    pub l1: f64,
    pub sup: f64,
    /// Part of the window lies outside the state space at this `eps`; the
    /// rescaled density is zero there and the limit mass counts in full.
    pub clipped: bool,
}

/// `L1` and sup distance between two densities in `y2` on the window.
fn distance_between<A, B>(a: A, b: B, window: &Window, resolution: usize) -> Result<Distance>
where
    A: Fn(f64) -> Result<Option<f64>> + Sync,
    B: Fn(f64) -> Result<f64> + Sync,
{
    let (ys, ws) = window.grid(resolution);
    let rows: Vec<(f64, f64, bool)> = ys
        .par_iter()
        .zip(ws.par_iter())
        .map(|(&y, &w)| {
            let lim = b(y)?;
            let (val, clipped) = match a(y)? {
                Some(v) => (v, false),
                None => (0.0, true),
            };
            let d = (val - lim).abs();
            Ok((d * w, d, clipped))
        })
        .collect::<Result<_>>()?;
    Ok(Distance {
        l1: rows.iter().map(|r| r.0).sum(),
        sup: rows.iter().map(|r| r.1).fold(0.0, f64::max),
        clipped: rows.iter().any(|r| r.2),
    })
}

fn rescaled_or_clipped(case: &TangentCase, eps: f64, w: &Window, y: f64) -> Result<Option<f64>> {
    match rescaled_pdf(case, eps, w.t1, w.t2, w.y1, y) {
        Ok(v) => Ok(Some(v)),
        Err(Error::OutOfSupport { coordinate: "y2", .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Distance between the rescaled density at `eps` and the limit density.
pub fn distance(case: &TangentCase, eps: f64, window: &Window, resolution: usize) -> Result<Distance> {
    distance_against(case, eps, window, resolution, |t1, t2, y1, y2| limit_pdf(case, t1, t2, y1, y2))
}

/// As [`distance`], against an arbitrary candidate limit.
pub fn distance_against<L>(case: &TangentCase, eps: f64, window: &Window, resolution: usize, limit: L) -> Result<Distance>
where
    L: Fn(f64, f64, f64, f64) -> Result<f64> + Sync,
{
    check_eps(eps)?;
    distance_between(
        |y| rescaled_or_clipped(case, eps, window, y),
        |y| limit(window.t1, window.t2, window.y1, y),
        window,
        resolution,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyOptions {
    pub threshold: f64,
    /// Allowed relative increase of `L1` from one rung to the next.
    pub slack: f64,
    pub resolution: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            threshold: 0.02,
            slack: 0.1,
            resolution: 4001,
        }
    }
}

pub const DEFAULT_LADDER: [f64; 5] = [0.2, 0.1, 0.05, 0.02, 0.01];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rung {
    pub eps: f64,
    pub l1: f64,
    pub sup: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    #[serde(flatten)]
    pub case: TangentCase,
    pub window: Window,
    pub ladder: Vec<Rung>,
    pub verdict: Verdict,
    pub threshold: f64,
    pub slack: f64,
    pub resolution: usize,
    /// Limit mass outside the window, not included in any `L1` value.
    pub tail_mass: f64,
}

impl ConvergenceReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn terminal_l1(&self) -> f64 {
        self.ladder.last().map(|r| r.l1).unwrap_or(f64::NAN)
    }
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::InvalidParameter("empty eps ladder".into()));
    }
    for &e in ladder {
        check_eps(e)?;
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(format!("eps ladder must be strictly decreasing: {ladder:?}")));
    }
    Ok(())
}

fn verdict(ladder: &[Rung], opts: &StudyOptions) -> Verdict {
    let monotone = ladder.windows(2).all(|w| w[1].l1 <= (1.0 + opts.slack) * w[0].l1);
    let terminal = ladder.last().map(|r| r.l1 < opts.threshold).unwrap_or(false);
    if monotone && terminal {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

pub fn convergence_study(case: &TangentCase, ladder: &[f64], window: &Window, opts: &StudyOptions) -> Result<ConvergenceReport> {
    convergence_study_against(case, ladder, window, opts, |t1, t2, y1, y2| limit_pdf(case, t1, t2, y1, y2))
}

/// Convergence study against a caller-supplied candidate limit density.
pub fn convergence_study_against<L>(
    case: &TangentCase,
    ladder: &[f64],
    window: &Window,
    opts: &StudyOptions,
    limit: L,
) -> Result<ConvergenceReport>
where
    L: Fn(f64, f64, f64, f64) -> Result<f64> + Sync,
{
    check_ladder(ladder)?;
    if !(opts.threshold > 0.0 && opts.slack >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be positive and slack nonnegative, got {} and {}",
            opts.threshold, opts.slack
        )));
    }
    let rungs = ladder
        .iter()
        .map(|&eps| {
            let d = distance_against(case, eps, window, opts.resolution, &limit)?;
            Ok(Rung {
                eps,
                l1: d.l1,
                sup: d.sup,
                clipped: d.clipped,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport {
        case: *case,
        window: *window,
        verdict: verdict(&rungs, opts),
        ladder: rungs,
        threshold: opts.threshold,
        slack: opts.slack,
        resolution: opts.resolution,
        tail_mass: window.tail_mass,
    })
}

/// `E[min(|Y_{t2} - Y_{t1}|^2, 1) | Y_{t1} = y1] / (t2 - t1)` for the rescaled
/// interior q-OU process at `eps`, by quadrature over the state space.
pub fn aldous_ratio(q: f64, eps: f64, x: f64, y1: f64, t1: f64, t2: f64) -> Result<f64> {
    check_times(t1, t2)?;
    check_eps(eps)?;
    let case = TangentCase::qou_interior(q, x)?;
    let p = case.params;
    if !is_feasible(&case, eps, t1, y1) {
        return Err(Error::OutOfSupport {
            coordinate: "y1",
            value: y1,
        });
    }
    let lo = (p.x_minus() - x) / eps;
    let hi = (p.x_plus() - x) / eps;
    let center = y1 + (x + y1 * eps) * ((eps * (t2 - t1)).cosh() - 1.0) / eps;
    let opts = QuadOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-9,
        max_intervals: 8000,
    };
    let r = integrate_domain(
        |y| {
            let d = y - y1;
            match rescaled_pdf(&case, eps, t1, t2, y1, y) {
                Ok(v) => d.mul_add(d, 0.0).min(1.0) * v,
                Err(_) => 0.0,
            }
        },
        Domain::SqrtEdges { a: lo, b: hi },
        &[y1 - 1.0, y1, y1 + 1.0, center],
        &opts,
    )?;
    Ok(r.value / (t2 - t1))
}
