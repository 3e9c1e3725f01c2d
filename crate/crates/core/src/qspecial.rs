//! q-series building blocks: infinite q-Pochhammer products and the
//! quadratic factor families that make up the q-Ornstein–Uhlenbeck and
//! q-Brownian transition kernels.
//!
//! Every infinite product is truncated at the first index whose factor is
//! within `rel_tol * (1 - |q|)` of one. Geometric decay of the factors then
//! bounds the neglected tail by a constant multiple of `rel_tol`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Deformation parameter `q` in `(-1, 1)` and the endpoints of the q-normal
/// support `[-2/sqrt(1-q), 2/sqrt(1-q)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QParams {
    q: f64,
    x_plus: f64,
}

impl QParams {
    pub fn new(q: f64) -> Result<Self> {
        if !q.is_finite() || q <= -1.0 || q >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "q must lie in (-1, 1), got {q}"
            )));
        }
        Ok(Self {
            q,
            x_plus: 2.0 / (1.0 - q).sqrt(),
        })
    }

    #[inline]
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Right endpoint `2/sqrt(1-q)` of the q-normal support.
    #[inline]
    pub fn x_plus(&self) -> f64 {
        self.x_plus
    }

    #[inline]
    pub fn x_minus(&self) -> f64 {
        -self.x_plus
    }

    #[inline]
    pub fn width(&self) -> f64 {
        2.0 * self.x_plus
    }

    /// `1 - q`, which appears in nearly every formula.
    #[inline]
    pub fn one_minus_q(&self) -> f64 {
        1.0 - self.q
    }

    /// Whether `x` lies in the closed support, allowing for rounding at the edges.
    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x.abs() <= self.x_plus * (1.0 + 1e-12)
    }
}

/// How an infinite product is cut off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationPolicy {
    pub rel_tol: f64,
    pub k_max: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            rel_tol: 1e-14,
            k_max: 10_000,
        }
    }
}

impl TruncationPolicy {
    pub fn new(rel_tol: f64, k_max: usize) -> Result<Self> {
        if !(rel_tol > 0.0) || k_max == 0 {
            return Err(Error::InvalidParameter(format!(
                "truncation policy needs rel_tol > 0 and k_max >= 1, got ({rel_tol}, {k_max})"
            )));
        }
        Ok(Self { rel_tol, k_max })
    }

    #[inline]
    fn threshold(&self, q: f64) -> f64 {
        self.rel_tol * (1.0 - q.abs())
    }
}

fn check_q(q: f64) -> Result<()> {
    if q.is_finite() && q.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::NonConvergent { q })
    }
}

/// Running product that falls back to log-space accumulation once the
/// partial product leaves `[1e-300, 1e300]` in magnitude.
#[derive(Debug, Clone, Copy)]
struct ProductAccumulator {
    linear: f64,
    // (ln |product|, sign) once the linear value would leave the safe range
    log: Option<(f64, f64)>,
}

const SAFE_LO: f64 = 1e-300;
const SAFE_HI: f64 = 1e300;

impl ProductAccumulator {
    fn new() -> Self {
        Self {
            linear: 1.0,
            log: None,
        }
    }

    fn mul(&mut self, factor: f64) {
        match self.log.as_mut() {
            Some((ln_abs, sign)) => {
                *ln_abs += factor.abs().ln();
                *sign *= factor.signum();
            }
            None => {
                let next = self.linear * factor;
                let mag = next.abs();
                if next == 0.0 || (SAFE_LO..=SAFE_HI).contains(&mag) {
                    self.linear = next;
                } else {
                    self.log = Some((
                        self.linear.abs().ln() + factor.abs().ln(),
                        self.linear.signum() * factor.signum(),
                    ));
                }
            }
        }
    }

    fn value(&self) -> f64 {
        match self.log {
            Some((ln_abs, sign)) => sign * ln_abs.exp(),
            None => self.linear,
        }
    }
}

/// `(a; q)_inf = prod_{k >= 0} (1 - a q^k)`.
///
/// Returns exactly zero when some factor vanishes (`a = q^{-k}`).
pub fn q_pochhammer_inf(a: f64, q: f64, policy: &TruncationPolicy) -> Result<f64> {
    check_q(q)?;
    let threshold = policy.threshold(q);
    let mut acc = ProductAccumulator::new();
    let mut qk = 1.0;
    for _ in 0..policy.k_max {
        let term = a * qk;
        let factor = 1.0 - term;
        if factor == 0.0 {
            return Ok(0.0);
        }
        acc.mul(factor);
        if term.abs() < threshold {
            return Ok(acc.value());
        }
        qk *= q;
    }
    Err(Error::TruncationExceeded {
        k_max: policy.k_max,
    })
}

/// The q-OU kernel factor
/// `phi_{q,k}(d,x,y) = (1 - e^{-2d} q^{2k})^2 - (1-q) e^{-d} q^k (1 + e^{-2d} q^{2k}) x y
///                    + (1-q) e^{-2d} q^{2k} (x^2 + y^2)`.
///
/// The `k = 0` factor is evaluated in the rearranged form
/// `e^{-2d} [16 sinh^4(d/2) + (1-q)(x-y)^2 + 4 sinh^2(d/2) (4 - (1-q) x y)]`,
/// which is algebraically identical but keeps full relative accuracy when
/// `d` is small and `x` is close to `y`.
pub fn phi_qk(q: f64, k: usize, delta: f64, x: f64, y: f64) -> f64 {
    let omq = 1.0 - q;
    if k == 0 {
        let sh = (0.5 * delta).sinh();
        let sh2 = sh * sh;
        let dxy = x - y;
        return (-2.0 * delta).exp()
            * (16.0 * sh2 * sh2 + omq * dxy * dxy + 4.0 * sh2 * (4.0 - omq * x * y));
    }
    let qk = q.powi(k as i32);
    let e1 = (-delta).exp();
    let e2q2k = e1 * e1 * qk * qk;
    let lead = 1.0 - e2q2k;
    lead * lead - omq * e1 * qk * (1.0 + e2q2k) * x * y + omq * e2q2k * (x * x + y * y)
}

/// `psi_{q,k}(x) = (1 + q^k)^2 - (1-q) x^2 q^k`, the factors of the q-normal density.
pub fn psi_qk(q: f64, k: usize, x: f64) -> f64 {
    let qk = q.powi(k as i32);
    let s = 1.0 + qk;
    s * s - (1.0 - q) * x * x * qk
}

/// q-Brownian kernel factor
/// `phi*_{q,k}(t1,t2,y1,y2) = (t2 - t1 q^{2k})^2 - (1-q) q^k (t2 + t1 q^{2k}) y1 y2
///                           + (1-q)(t1 y2^2 + t2 y1^2) q^{2k}`.
///
/// For `k = 0` this equals `(t2-t1)^2 + (1-q)(y2-y1)(t1 y2 - t2 y1)`, which is
/// the form used there.
pub fn phi_star(q: f64, k: usize, t1: f64, t2: f64, y1: f64, y2: f64) -> f64 {
    let omq = 1.0 - q;
    if k == 0 {
        let dt = t2 - t1;
        return dt * dt + omq * (y2 - y1) * (t1 * y2 - t2 * y1);
    }
    let qk = q.powi(k as i32);
    let q2k = qk * qk;
    let lead = t2 - t1 * q2k;
    lead * lead - omq * qk * (t2 + t1 * q2k) * y1 * y2 + omq * (t1 * y2 * y2 + t2 * y1 * y1) * q2k
}

/// q-Brownian kernel numerator factor
/// `psi*_{q,k}(t1,t2,y2) = (t2 - t1 q^k)(1 - q^{k+1}) [t2 (1+q^k)^2 - (1-q) y2^2 q^k]`.
pub fn psi_star(q: f64, k: usize, t1: f64, t2: f64, y2: f64) -> f64 {
    let qk = q.powi(k as i32);
    let s = 1.0 + qk;
    (t2 - t1 * qk) * (1.0 - qk * q) * (t2 * s * s - (1.0 - q) * y2 * y2 * qk)
}

/// Guard against stopping on a factor that happens to sit near one while
/// `|q|^k` is still large.
const TAIL_GUARD: f64 = 1e-3;

/// `prod_{k >= 1} numerator(k, q^k) / denominator(k, q^k)`, truncated as in
/// [`q_pochhammer_inf`]. Both closures receive the index and the running
/// power `q^k`.
pub fn tail_product_ratio<N, D>(
    q: f64,
    mut numerator: N,
    mut denominator: D,
    policy: &TruncationPolicy,
) -> Result<f64>
where
    N: FnMut(usize, f64) -> f64,
    D: FnMut(usize, f64) -> f64,
{
    check_q(q)?;
    let threshold = policy.threshold(q);
    let mut acc = ProductAccumulator::new();
    let mut qk = q;
    for k in 1..=policy.k_max {
        let den = denominator(k, qk);
        if !(den > 0.0) {
            return Err(Error::DivergentTerm { k, value: den });
        }
        let ratio = numerator(k, qk) / den;
        acc.mul(ratio);
        if (ratio - 1.0).abs() < threshold && qk.abs() < TAIL_GUARD {
            return Ok(acc.value());
        }
        qk *= q;
    }
    Err(Error::TruncationExceeded {
        k_max: policy.k_max,
    })
}
