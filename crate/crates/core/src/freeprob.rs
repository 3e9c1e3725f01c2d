//! Cauchy–Stieltjes transforms of the free 1- and 1/2-stable semigroups, the
//! subordination function of the 1/2-stable Biane process, Stieltjes
//! inversion, and randomized identity checks.
//!
//! All square roots use the principal branch. Arguments within `1e-12` of a
//! branch cut are rejected with [`Error::BranchCut`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{biane_shifted_pdf, cauchy_marginal, half_stable_marginal, Support};
use crate::quadrature::{integrate_domain, Domain, QuadOptions};
use crate::sampling::SeedSpec;

pub type ComplexPoint = Complex64;

const SLIT_TOL: f64 = 1e-12;

/// A probability density on the real line, with a length scale used to map
/// the quadrature onto its support.
#[derive(Clone)]
pub struct MeasureDensity {
    label: String,
    support: Support,
    center: f64,
    scale: f64,
    density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for MeasureDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasureDensity")
            .field("label", &self.label)
            .field("support", &self.support)
            .field("center", &self.center)
            .field("scale", &self.scale)
            .finish()
    }
}

impl MeasureDensity {
    /// `center` and `scale` locate the bulk of the mass; only unbounded
    /// supports use them.
    pub fn new<F>(label: impl Into<String>, support: Support, center: f64, scale: f64, density: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(scale.is_finite() && scale > 0.0) || !center.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "measure needs a finite center and positive scale, got {center}, {scale}"
            )));
        }
        Ok(Self {
            label: label.into(),
            support,
            center,
            scale,
            density: Arc::new(density),
        })
    }

    /// Cauchy law `nu_t^(1)`.
    pub fn cauchy(t: f64) -> Result<Self> {
        cauchy_marginal(t, 0.0)?;
        Self::new(format!("nu_{t}^(1)"), Support::real_line(), 0.0, t, move |x| {
            cauchy_marginal(t, x).unwrap_or(0.0)
        })
    }

    /// Free 1/2-stable law `nu_t^(1/2)` on `[t^2/4, inf)`.
    pub fn half_stable(t: f64) -> Result<Self> {
        half_stable_marginal(t, 0.0)?;
        let lo = 0.25 * t * t;
        Self::new(
            format!("nu_{t}^(1/2)"),
            Support::new(lo, f64::INFINITY)?,
            lo,
            t * t,
            move |x| half_stable_marginal(t, x).unwrap_or(0.0),
        )
    }

    /// Transition law `p_{s,t}(x, dy)` of the shifted 1/2-stable process.
    pub fn biane_transition(s: f64, t: f64, x: f64) -> Result<Self> {
        biane_shifted_pdf(s, t, x, 1.0)?;
        let d = t - s;
        Self::new(
            format!("p_{{{s},{t}}}({x}, dy)"),
            Support::new(0.0, f64::INFINITY)?,
            0.0,
            (x + d * d).max(1e-3),
            move |y| biane_shifted_pdf(s, t, x, y).unwrap_or(0.0),
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if self.support.contains(x) {
            (self.density)(x)
        } else {
            0.0
        }
    }

    /// Total mass by quadrature.
    pub fn mass(&self) -> Result<f64> {
        let opts = quad_options();
        self.integrate(|x| self.pdf(x), &[], &opts)
    }

    fn integrate<T, F>(&self, f: F, breaks: &[f64], opts: &QuadOptions) -> Result<T>
    where
        T: crate::quadrature::QuadValue,
        F: Fn(f64) -> T,
    {
        let Support { lo, hi } = self.support;
        let inside: Vec<f64> = breaks.iter().copied().filter(|b| *b > lo && *b < hi).collect();
        let est = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => integrate_domain(f, Domain::SqrtEdges { a: lo, b: hi }, &inside, opts)?,
            (true, false) => integrate_domain(
                f,
                Domain::HalfLine {
                    a: lo,
                    scale: self.scale,
                },
                &inside,
                opts,
            )?,
            (false, true) => {
                let mirrored: Vec<f64> = inside.iter().map(|b| -b).collect();
                integrate_domain(
                    |y| f(-y),
                    Domain::HalfLine {
                        a: -hi,
                        scale: self.scale,
                    },
                    &mirrored,
                    opts,
                )?
            }
            (false, false) => integrate_domain(
                f,
                Domain::RealLine {
                    center: self.center,
                    scale: self.scale,
                },
                &inside,
                opts,
            )?,
        };
        Ok(est.value)
    }
}

fn quad_options() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-12,
        max_intervals: 20000,
    }
}

fn check_upper(z: ComplexPoint) -> Result<()> {
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need a point of the upper half-plane, got {} + {}i",
            z.re, z.im
        )));
    }
    Ok(())
}

fn check_slit(z: ComplexPoint, cut_start: f64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite argument {} + {}i", z.re, z.im)));
    }
    if z.im.abs() <= SLIT_TOL && z.re >= cut_start - SLIT_TOL {
        return Err(Error::BranchCut {
            re: z.re,
            im: z.im,
            cut_start,
        });
    }
    Ok(())
}

fn check_times(s: f64, t: f64) -> Result<()> {
    if !(s.is_finite() && t.is_finite()) || s <= 0.0 || t <= s {
        return Err(Error::InvalidTime(format!("need 0 < s < t, got s = {s}, t = {t}")));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidTime(format!("t must be positive, got {t}")));
    }
    Ok(())
}

/// `G_mu(z) = int mu(dx) / (z - x)` by adaptive quadrature, for `im z > 0`
/// or real `z` strictly outside the support.
pub fn cauchy_stieltjes(mu: &MeasureDensity, z: ComplexPoint) -> Result<ComplexPoint> {
    let Support { lo, hi } = mu.support;
    if !(z.im == 0.0 && z.re.is_finite() && (z.re < lo || z.re > hi)) {
        check_upper(z)?;
    }
    let breaks = [z.re];
    mu.integrate(|x| Complex64::new(mu.pdf(x), 0.0) / (z - x), &breaks, &quad_options())
}

/// Closed form `G_t(z) = -4 / (sqrt(t^2 - 4z) + t)^2` of the free 1/2-stable law,
/// on the plane slit along `[t^2/4, inf)`.
pub fn g_half_closed(t: f64, z: ComplexPoint) -> Result<ComplexPoint> {
    check_t(t)?;
    check_slit(z, 0.25 * t * t)?;
    let w = (t * t - 4.0 * z).sqrt() + t;
    Ok(-4.0 / (w * w))
}

/// The unsimplified form `(t sqrt(t^2 - 4z) - t^2 + 2z) / (2 z^2)`; needs `z != 0`.
pub fn g_half_unsimplified(t: f64, z: ComplexPoint) -> Result<ComplexPoint> {
    check_t(t)?;
    check_slit(z, 0.25 * t * t)?;
    if z == Complex64::new(0.0, 0.0) {
        return Err(Error::InvalidParameter("the unsimplified transform is singular at z = 0".into()));
    }
    let w = (t * t - 4.0 * z).sqrt();
    Ok((t * w - t * t + 2.0 * z) / (2.0 * z * z))
}

/// Subordination function `F(z) = (s^2 - (t - s + sqrt(t^2 - 4z))^2) / 4`,
/// so that `G_t = G_s o F`.
#[allow(non_snake_case)]
pub fn subordinator_F(s: f64, t: f64, z: ComplexPoint) -> Result<ComplexPoint> {
    check_times(s, t)?;
    check_slit(z, 0.25 * t * t)?;
    let w = (t - s) + (t * t - 4.0 * z).sqrt();
    Ok(0.25 * (s * s - w * w))
}

/// `H_{s,t,x}(z) = 1 / (-x - (t - s + sqrt(-z))^2)`, the transform of the
/// shifted 1/2-stable transition law from `x`.
#[allow(non_snake_case)]
pub fn biane_H(s: f64, t: f64, x: f64, z: ComplexPoint) -> Result<ComplexPoint> {
    check_times(s, t)?;
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::InvalidState {
            value: x,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    check_slit(z, 0.0)?;
    let w = (t - s) + (-z).sqrt();
    Ok(1.0 / (-x - w * w))
}

/// Outcome of a Stieltjes inversion: the extrapolated density and the raw
/// `-(1/pi) Im G(y + i eps)` values it was built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inversion {
    pub y: f64,
    pub estimate: f64,
    pub eps: Vec<f64>,
    pub raw: Vec<f64>,
}

/// Recover a density value at `y` from its Cauchy–Stieltjes transform.
///
/// The raw values are extrapolated to `eps = 0` by Neville's scheme, which is
/// Richardson extrapolation for an error expanding in powers of `eps`.
pub fn stieltjes_invert<F>(transform: F, y: f64, eps_ladder: &[f64]) -> Result<Inversion>
where
    F: Fn(ComplexPoint) -> Result<ComplexPoint>,
{
    if !y.is_finite() {
        return Err(Error::InvalidParameter(format!("inversion point must be finite, got {y}")));
    }
    if eps_ladder.len() < 2 {
        return Err(Error::InvalidParameter("inversion needs at least two eps values".into()));
    }
    if eps_ladder.iter().any(|e| !(e.is_finite() && *e > 0.0)) || eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(format!(
            "eps ladder must be positive and strictly decreasing, got {eps_ladder:?}"
        )));
    }
    let raw = eps_ladder
        .iter()
        .map(|&e| transform(Complex64::new(y, e)).map(|g| -g.im / PI))
        .collect::<Result<Vec<f64>>>()?;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonConvergentLadder(raw));
    }
    let diffs: Vec<f64> = raw.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let floor = 1e-6 * raw.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if diffs.windows(2).any(|d| d[1] > d[0] && d[1] > floor) {
        return Err(Error::NonConvergentLadder(raw));
    }
    let mut table = raw.clone();
    let n = table.len();
    for level in 1..n {
        for i in 0..n - level {
            let (ei, ej) = (eps_ladder[i], eps_ladder[i + level]);
            table[i] = (ei * table[i + 1] - ej * table[i]) / (ei - ej);
        }
    }
    Ok(Inversion {
        y,
        estimate: table[0],
        eps: eps_ladder.to_vec(),
        raw,
    })
}

/// R-transform of the Cauchy law `nu_t^(1)`, `R(z) = K(z) - 1/z` with `K` the
/// inverse of `G(z) = 1/(z + it)`. It is the constant `-it`.
pub fn r_transform_cauchy(t: f64, z: ComplexPoint) -> Result<ComplexPoint> {
    check_t(t)?;
    let _ = z;
    Ok(Complex64::new(0.0, -t))
}

/// `K(w) = 1/w + R(w)`, the compositional inverse of `G(z) = 1/(z + it)`.
pub fn k_transform_cauchy(t: f64, w: ComplexPoint) -> Result<ComplexPoint> {
    Ok(1.0 / w + r_transform_cauchy(t, w)?)
}

/// `G(z) = 1/(z + it)`, the transform of `nu_t^(1)`.
pub fn g_cauchy_closed(t: f64, z: ComplexPoint) -> Result<ComplexPoint> {
    check_t(t)?;
    Ok(1.0 / (z + Complex64::new(0.0, t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityKind {
    Subordination,
    Biane3,
    Inversion,
    CskQuadrature,
    FUnique,
}

impl IdentityKind {
    pub const ALL: [IdentityKind; 5] = [
        IdentityKind::Subordination,
        IdentityKind::Biane3,
        IdentityKind::Inversion,
        IdentityKind::CskQuadrature,
        IdentityKind::FUnique,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            IdentityKind::Subordination => "subordination",
            IdentityKind::Biane3 => "biane3",
            IdentityKind::Inversion => "inversion",
            IdentityKind::CskQuadrature => "csk_quadrature",
            IdentityKind::FUnique => "f_unique",
        }
    }

    /// Pass threshold on the maximum absolute residual.
    pub fn threshold(&self) -> f64 {
        match self {
            IdentityKind::Subordination => 1e-10,
            IdentityKind::Biane3 => 1e-6,
            IdentityKind::Inversion => 1e-4,
            IdentityKind::CskQuadrature => 1e-8,
            IdentityKind::FUnique => 1e-3,
        }
    }
}

impl fmt::Display for IdentityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IdentityKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        IdentityKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown identity '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub kind: IdentityKind,
    pub samples: usize,
    pub max_residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Ladder used by the inversion check.
pub const INVERSION_LADDER: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Height at which the `F(iy)/(iy) -> 1` asymptotics is probed.
pub const F_ASYMPTOTIC_HEIGHT: f64 = 1e4;

struct Draw<'a, R: Rng>(&'a mut R);

impl<R: Rng> Draw<'_, R> {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.random::<f64>()
    }

    /// `0 < s < t <= 4`.
    fn times(&mut self) -> (f64, f64) {
        let t = 4.0 * (1.0 - self.0.random::<f64>());
        let s = t * (1.0 - self.0.random::<f64>()) * (1.0 - 1e-9);
        (s.max(t * 1e-9), t)
    }

    /// `re in [-10, 2]`, `im in [0.1, 10]`.
    fn point(&mut self) -> ComplexPoint {
        Complex64::new(self.uniform(-10.0, 2.0), self.uniform(0.1, 10.0))
    }
}

fn subordination_residual(s: f64, t: f64, z: ComplexPoint) -> Result<f64> {
    let lhs = g_half_closed(t, z)?;
    let rhs = g_half_closed(s, subordinator_F(s, t, z)?)?;
    Ok((lhs - rhs).norm())
}

fn biane3_residual(s: f64, t: f64, x: f64, z: ComplexPoint) -> Result<f64> {
    let mu = MeasureDensity::biane_transition(s, t, x)?;
    let quad = cauchy_stieltjes(&mu, z)?;
    Ok((quad - biane_H(s, t, x, z)?).norm())
}

fn csk_residual(t: f64, z: ComplexPoint) -> Result<f64> {
    let quad = cauchy_stieltjes(&MeasureDensity::half_stable(t)?, z)?;
    Ok((quad - g_half_closed(t, z)?).norm())
}

fn f_unique_residual(s: f64, t: f64, z: ComplexPoint) -> Result<f64> {
    let f = subordinator_F(s, t, z)?;
    let below = (z.im - f.im).max(0.0);
    let mirror = (subordinator_F(s, t, z.conj())? - f.conj()).norm();
    let iy = Complex64::new(0.0, F_ASYMPTOTIC_HEIGHT);
    let ratio = (subordinator_F(s, t, iy)? / iy - 1.0).norm();
    Ok(below.max(mirror).max(ratio))
}

/// Inversion at an interior point, alternating between the half-stable law
/// and the shifted Biane transition law.
fn inversion_residual<R: Rng>(i: u64, draw: &mut Draw<'_, R>) -> Result<f64> {
    if i.is_multiple_of(2) {
        let t = draw.uniform(0.5, 4.0);
        let y = t * t * draw.uniform(0.35, 2.0);
        let inv = stieltjes_invert(|z| g_half_closed(t, z), y, &INVERSION_LADDER)?;
        Ok((inv.estimate - half_stable_marginal(t, y)?).abs())
    } else {
        let t = draw.uniform(0.5, 4.0);
        let s = draw.uniform(0.0, t - 0.5).max(1e-3);
        let x = draw.uniform(0.1, 4.0);
        let d = t - s;
        let y = (x + d * d) * draw.uniform(0.2, 3.0);
        let inv = stieltjes_invert(|z| biane_H(s, t, x, z), y, &INVERSION_LADDER)?;
        Ok((inv.estimate - biane_shifted_pdf(s, t, x, y)?).abs())
    }
}

fn sample_residual(kind: IdentityKind, i: u64, seed: SeedSpec) -> Result<f64> {
    if i == 0 {
        return match kind {
            IdentityKind::Subordination => subordination_residual(1.0, 2.0, Complex64::new(-1.0, 0.0)),
            IdentityKind::Biane3 => biane3_residual(1.0, 2.0, 1.0, Complex64::new(-1.0, 0.0)),
            IdentityKind::Inversion => {
                let inv = stieltjes_invert(|z| g_half_closed(1.0, z), 1.0, &INVERSION_LADDER)?;
                Ok((inv.estimate - 3f64.sqrt() / (2.0 * PI)).abs())
            }
            IdentityKind::CskQuadrature => csk_residual(1.0, Complex64::new(0.0, 2.0)),
            IdentityKind::FUnique => f_unique_residual(1.0, 2.0, Complex64::new(-1.0, 1.0)),
        };
    }
    let mut rng = seed.derive(i).rng();
    let mut draw = Draw(&mut rng);
    match kind {
        IdentityKind::Subordination => {
            let (s, t) = draw.times();
            subordination_residual(s, t, draw.point())
        }
        IdentityKind::Biane3 => {
            let (s, t) = draw.times();
            let x = draw.uniform(0.0, 4.0).max(1e-6);
            biane3_residual(s, t, x, draw.point())
        }
        IdentityKind::Inversion => inversion_residual(i, &mut draw),
        IdentityKind::CskQuadrature => {
            let t = 4.0 * (1.0 - draw.0.random::<f64>());
            csk_residual(t, draw.point())
        }
        IdentityKind::FUnique => {
            let (s, t) = draw.times();
            f_unique_residual(s, t, draw.point())
        }
    }
}

/// Evaluate one identity at `samples` points in parallel and report the
/// largest absolute residual. Sample 0 is a fixed reference point; sample `i`
/// draws from `seed.derive(i)`.
pub fn verify_identities(kind: IdentityKind, samples: usize, seed: SeedSpec) -> Result<IdentityReport> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample point".into()));
    }
    let residuals = (0..samples as u64)
        .into_par_iter()
        .map(|i| sample_residual(kind, i, seed))
        .collect::<Result<Vec<f64>>>()?;
    let max_residual = residuals
        .iter()
        .fold(0.0f64, |m, &r| if r.is_nan() { f64::INFINITY } else { m.max(r) });
    let threshold = kind.threshold();
    Ok(IdentityReport {
        kind,
        samples,
        max_residual,
        threshold,
        pass: max_residual <= threshold,
    })
}
