//! Closed-form densities: the q-normal law, q-OU and q-Brownian transition
//! kernels, the Cauchy and 1/2-stable Biane kernels, and the free 1-stable and
//! 1/2-stable marginal semigroups.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qspecial::{phi_qk, phi_star, psi_qk, psi_star, q_pochhammer_inf, tail_product_ratio, QParams, TruncationPolicy};

/// Square-root arguments within this distance of zero are treated as zero.
const SQRT_GUARD: f64 = 1e-12;

fn guarded_sqrt(v: f64) -> f64 {
    if v <= 0.0 {
        if v > -SQRT_GUARD {
            0.0
        } else {
            f64::NAN
        }
    } else {
        v.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Qnormal,
    Qou,
    Qbm,
    Cauchy,
    BianeHalf,
    BianeShifted,
    HalfStableMarginal,
    CauchyMarginal,
}

impl ProcessKind {
    pub const ALL: [ProcessKind; 8] = [
        ProcessKind::Qnormal,
        ProcessKind::Qou,
        ProcessKind::Qbm,
        ProcessKind::Cauchy,
        ProcessKind::BianeHalf,
        ProcessKind::BianeShifted,
        ProcessKind::HalfStableMarginal,
        ProcessKind::CauchyMarginal,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ProcessKind::Qnormal => "qnormal",
            ProcessKind::Qou => "qou",
            ProcessKind::Qbm => "qbm",
            ProcessKind::Cauchy => "cauchy",
            ProcessKind::BianeHalf => "biane_half",
            ProcessKind::BianeShifted => "biane_shifted",
            ProcessKind::HalfStableMarginal => "half_stable_marginal",
            ProcessKind::CauchyMarginal => "cauchy_marginal",
        }
    }

    /// Whether the density is a one-time marginal rather than a transition kernel.
    pub fn is_marginal(&self) -> bool {
        matches!(
            self,
            ProcessKind::Qnormal | ProcessKind::HalfStableMarginal | ProcessKind::CauchyMarginal
        )
    }

    pub fn uses_q(&self) -> bool {
        matches!(self, ProcessKind::Qnormal | ProcessKind::Qou | ProcessKind::Qbm)
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProcessKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ProcessKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownProcess(s.to_string()))
    }
}

/// A closed or half-open interval; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || !(lo < hi) {
            return Err(Error::InvalidParameter(format!("empty support [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn real_line() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

/// Support of the process at time `t` (`t` is ignored for stationary laws).
pub fn support_of(process: ProcessKind, q: f64, t: f64) -> Result<Support> {
    let need_t = |t: f64| {
        if t.is_finite() && t > 0.0 {
            Ok(t)
        } else {
            Err(Error::InvalidTime(format!("time must be positive, got {t}")))
        }
    };
    match process {
        ProcessKind::Qnormal | ProcessKind::Qou => {
            let p = QParams::new(q)?;
            Support::new(p.x_minus(), p.x_plus())
        }
        ProcessKind::Qbm => {
            let p = QParams::new(q)?;
            let r = 2.0 * (need_t(t)? / p.one_minus_q()).sqrt();
            Support::new(-r, r)
        }
        ProcessKind::Cauchy | ProcessKind::CauchyMarginal => Ok(Support::real_line()),
        ProcessKind::BianeHalf | ProcessKind::HalfStableMarginal => {
            let t = need_t(t)?;
            Support::new(0.25 * t * t, f64::INFINITY)
        }
        ProcessKind::BianeShifted => Support::new(0.0, f64::INFINITY),
    }
}

fn check_times(t1: f64, t2: f64) -> Result<()> {
    if !(t1.is_finite() && t2.is_finite()) || t1 < 0.0 || t2 <= t1 {
        return Err(Error::InvalidTime(format!("need 0 <= t1 < t2, got t1 = {t1}, t2 = {t2}")));
    }
    Ok(())
}

fn check_positive_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidTime(format!("time must be positive, got {t}")));
    }
    Ok(())
}

fn policy() -> TruncationPolicy {
    TruncationPolicy::default()
}

/// `(q;q)_inf`.
pub fn q_factorial_inf(p: &QParams) -> Result<f64> {
    q_pochhammer_inf(p.q(), p.q(), &policy())
}

/// `(e^{-2 delta}; q)_inf`, with the leading factor `1 - e^{-2 delta}`
/// computed by `expm1` so that small `delta` keeps full precision.
pub fn ou_time_factor(p: &QParams, delta: f64) -> Result<f64> {
    let e2 = (-2.0 * delta).exp();
    Ok(-(-2.0 * delta).exp_m1() * q_pochhammer_inf(e2 * p.q(), p.q(), &policy())?)
}

/// q-normal density.
pub fn qnormal_pdf(p: &QParams, x: f64) -> Result<f64> {
    let q = p.q();
    if !x.is_finite() || x.abs() >= p.x_plus() {
        return Ok(0.0);
    }
    if q == 0.0 {
        return Ok((4.0 - x * x).sqrt() / (2.0 * PI));
    }
    let omq = p.one_minus_q();
    let root = guarded_sqrt(4.0 - omq * x * x);
    let prod = tail_product_ratio(q, |k, _| psi_qk(q, k, x), |_, _| 1.0, &policy())?;
    Ok(omq.sqrt() * q_factorial_inf(p)? / (2.0 * PI) * root * prod)
}

fn check_ou_state(p: &QParams, x: f64) -> Result<()> {
    if !p.contains(x) {
        return Err(Error::InvalidState {
            value: x,
            lo: p.x_minus(),
            hi: p.x_plus(),
        });
    }
    Ok(())
}

/// q-Ornstein–Uhlenbeck transition density from `x` to `y` over elapsed time `delta`.
pub fn qou_transition_pdf(p: &QParams, delta: f64, x: f64, y: f64) -> Result<f64> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidTime(format!("elapsed time must be positive, got {delta}")));
    }
    check_ou_state(p, x)?;
    if !y.is_finite() || y.abs() >= p.x_plus() {
        return Ok(0.0);
    }
    let q = p.q();
    let omq = p.one_minus_q();
    let phi0 = phi_qk(q, 0, delta, x, y);
    let root = guarded_sqrt(4.0 - omq * y * y);
    let lead = ou_time_factor(p, delta)? * omq.sqrt() / (2.0 * PI) * root / phi0;
    if q == 0.0 {
        return Ok(lead);
    }
    let prod = tail_product_ratio(q, |k, _| psi_qk(q, k, y), |k, _| phi_qk(q, k, delta, x, y), &policy())?;
    Ok(lead * q_factorial_inf(p)? * prod)
}

/// Half-width `2 sqrt(t/(1-q))` of the q-Brownian support at time `t`.
pub fn qbm_radius(p: &QParams, t: f64) -> f64 {
    2.0 * (t / p.one_minus_q()).sqrt()
}

/// q-Brownian transition density from `(t1, y1)` to `(t2, y2)`. `t1 = 0`
/// requires `y1 = 0`.
pub fn qbm_transition_pdf(p: &QParams, t1: f64, t2: f64, y1: f64, y2: f64) -> Result<f64> {
    check_times(t1, t2)?;
    let r1 = qbm_radius(p, t1);
    if !(y1.abs() <= r1 * (1.0 + 1e-12) + 1e-300) {
        return Err(Error::InvalidState { value: y1, lo: -r1, hi: r1 });
    }
    let r2 = qbm_radius(p, t2);
    if !y2.is_finite() || y2.abs() >= r2 {
        return Ok(0.0);
    }
    let q = p.q();
    let omq = p.one_minus_q();
    let root = guarded_sqrt(4.0 * t2 - omq * y2 * y2);
    let phi0 = phi_star(q, 0, t1, t2, y1, y2);
    let lead = omq * omq.sqrt() * (t2 - t1) / (2.0 * PI) * root / phi0;
    if q == 0.0 {
        return Ok(lead);
    }
    let prod = tail_product_ratio(
        q,
        |k, _| psi_star(q, k, t1, t2, y2),
        |k, _| phi_star(q, k, t1, t2, y1, y2),
        &policy(),
    )?;
    Ok(lead * prod)
}

/// Cauchy process transition density.
pub fn cauchy_transition_pdf(t1: f64, t2: f64, y1: f64, y2: f64) -> Result<f64> {
    check_times(t1, t2)?;
    let dt = t2 - t1;
    let dy = y2 - y1;
    Ok(dt / (PI * (dy * dy + dt * dt)))
}

/// Transition density of the 1/2-stable Biane process.
pub fn biane_half_pdf(t1: f64, t2: f64, y1: f64, y2: f64) -> Result<f64> {
    check_times(t1, t2)?;
    let edge1 = 0.25 * t1 * t1;
    if !(y1 >= edge1 * (1.0 - 1e-12)) || !y1.is_finite() {
        return Err(Error::InvalidState {
            value: y1,
            lo: edge1,
            hi: f64::INFINITY,
        });
    }
    let edge2 = 0.25 * t2 * t2;
    if !(y2 > edge2) || y2.is_infinite() {
        return Ok(0.0);
    }
    let dt = t2 - t1;
    let dy = y2 - y1;
    let den = dy * dy - dt * (t1 * y2 - t2 * y1);
    Ok(dt * guarded_sqrt(4.0 * y2 - t2 * t2) / (2.0 * PI * den))
}

/// Time-homogeneous kernel of the shifted process `Z_{2t} - t^2`.
pub fn biane_shifted_pdf(t1: f64, t2: f64, y1: f64, y2: f64) -> Result<f64> {
    check_times(t1, t2)?;
    if !(y1 >= 0.0) || !y1.is_finite() {
        return Err(Error::InvalidState {
            value: y1,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    if !(y2 > 0.0) || y2.is_infinite() {
        return Ok(0.0);
    }
    let dt = t2 - t1;
    let dy = y2 - y1;
    let den = dy * dy + 2.0 * dt * dt * (y1 + y2) + dt.powi(4);
    Ok(2.0 * dt * y2.sqrt() / (PI * den))
}

/// Free 1/2-stable marginal density `t sqrt(4x - t^2) / (2 pi x^2)` on `(t^2/4, inf)`.
pub fn half_stable_marginal(t: f64, x: f64) -> Result<f64> {
    check_positive_time(t)?;
    if !(x > 0.25 * t * t) || x.is_infinite() {
        return Ok(0.0);
    }
    Ok(t * guarded_sqrt(4.0 * x - t * t) / (2.0 * PI * x * x))
}

/// Cauchy marginal density `t / (pi (x^2 + t^2))`.
pub fn cauchy_marginal(t: f64, x: f64) -> Result<f64> {
    check_positive_time(t)?;
    Ok(t / (PI * (x * x + t * t)))
}

/// A single density evaluation, dispatched on the process tag. Marginals read
/// their time from `t2` and their point from `y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelQuery {
    pub process: ProcessKind,
    pub q: Option<f64>,
    pub t1: f64,
    pub t2: f64,
    pub y1: f64,
    pub y2: f64,
}

impl KernelQuery {
    fn params(&self) -> Result<QParams> {
        match self.q {
            Some(q) => QParams::new(q),
            None => Err(Error::InvalidParameter(format!("process {} needs q", self.process))),
        }
    }

    pub fn evaluate(&self) -> Result<f64> {
        match self.process {
            ProcessKind::Qnormal => qnormal_pdf(&self.params()?, self.y2),
            ProcessKind::Qou => qou_transition_pdf(&self.params()?, self.t2 - self.t1, self.y1, self.y2),
            ProcessKind::Qbm => qbm_transition_pdf(&self.params()?, self.t1, self.t2, self.y1, self.y2),
            ProcessKind::Cauchy => cauchy_transition_pdf(self.t1, self.t2, self.y1, self.y2),
            ProcessKind::BianeHalf => biane_half_pdf(self.t1, self.t2, self.y1, self.y2),
            ProcessKind::BianeShifted => biane_shifted_pdf(self.t1, self.t2, self.y1, self.y2),
            ProcessKind::HalfStableMarginal => half_stable_marginal(self.t2, self.y2),
            ProcessKind::CauchyMarginal => cauchy_marginal(self.t2, self.y2),
        }
    }
}

/// The q-OU conditional density `y -> p_delta(x, y)` with every `y`-independent
/// quantity precomputed, for repeated evaluation while tabulating.
///
/// Each factor `phi_{q,k}(delta, x, y)` is a quadratic `a_k y^2 + b_k y + c_k`
/// and each `psi_{q,k}(y)` is `u_k - v_k y^2`; the coefficients are stored up
/// to the truncation index.
#[derive(Debug, Clone)]
pub struct QouConditional {
    params: QParams,
    delta: f64,
    x: f64,
    prefactor: f64,
    e2: f64,
    sh2: f64,
    psi: Vec<(f64, f64)>,
    phi: Vec<(f64, f64, f64)>,
}

impl QouConditional {
    pub fn new(params: QParams, delta: f64, x: f64) -> Result<Self> {
        Self::with_policy(params, delta, x, &policy())
    }

    pub fn with_policy(params: QParams, delta: f64, x: f64, policy: &TruncationPolicy) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidTime(format!("elapsed time must be positive, got {delta}")));
        }
        check_ou_state(&params, x)?;
        let q = params.q();
        let omq = params.one_minus_q();
        let prefactor =
            ou_time_factor(&params, delta)? * q_pochhammer_inf(q, q, policy)? * omq.sqrt() / (2.0 * PI);
        let e1 = (-delta).exp();
        let e2 = e1 * e1;
        let sh = (0.5 * delta).sinh();
        let mut psi = Vec::new();
        let mut phi = Vec::new();
        if q != 0.0 {
            // factors deviate from one by at most ~16|q|^k on the support
            let cut = policy.rel_tol * (1.0 - q.abs()) / 16.0;
            let mut qk = q;
            let mut k = 1;
            while qk.abs() >= cut {
                if k > policy.k_max {
                    return Err(Error::TruncationExceeded { k_max: policy.k_max });
                }
                let s = 1.0 + qk;
                psi.push((s * s, omq * qk));
                let e2q2k = e2 * qk * qk;
                let lead = 1.0 - e2q2k;
                phi.push((omq * e2q2k, -omq * e1 * qk * (1.0 + e2q2k) * x, lead * lead + omq * e2q2k * x * x));
                qk *= q;
                k += 1;
            }
        }
        Ok(Self {
            params,
            delta,
            x,
            prefactor,
            e2,
            sh2: sh * sh,
            psi,
            phi,
        })
    }

    pub fn params(&self) -> &QParams {
        &self.params
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    /// Number of `k >= 1` factors retained.
    pub fn terms(&self) -> usize {
        self.psi.len()
    }

    /// Location `x cosh(delta)` and half-width of the Lorentzian that the
    /// leading factor `1/phi_0` traces in `y`.
    pub fn focus(&self) -> (f64, f64) {
        let omq = self.params.one_minus_q();
        let c2 = (4.0 / omq - self.x * self.x).max(0.0);
        let width = self.delta.sinh() * c2.sqrt();
        // near the edge c2 -> 0; the next-order width is ~ sinh^2(delta) x_plus / 2
        let floor = self.delta.sinh().powi(2) * self.params.x_plus() * 0.5;
        (self.x * self.delta.cosh(), width.max(floor))
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let p = &self.params;
        if !(y.abs() < p.x_plus()) {
            return 0.0;
        }
        let omq = p.one_minus_q();
        let d = self.x - y;
        let phi0 = self.e2 * (16.0 * self.sh2 * self.sh2 + omq * d * d + 4.0 * self.sh2 * (4.0 - omq * self.x * y));
        let root = guarded_sqrt(4.0 - omq * y * y);
        let y2 = y * y;
        let mut num = 1.0;
        let mut den = 1.0;
        for (&(u, v), &(a, b, c)) in self.psi.iter().zip(self.phi.iter()) {
            num *= u - v * y2;
            den *= (a * y + b) * y + c;
        }
        let ratio = num / den;
        if ratio.is_finite() && ratio > 0.0 {
            return self.prefactor * root / phi0 * ratio;
        }
        let mut r = 1.0;
        for (&(u, v), &(a, b, c)) in self.psi.iter().zip(self.phi.iter()) {
            r *= (u - v * y2) / ((a * y + b) * y + c);
        }
        self.prefactor * root / phi0 * r
    }
}
