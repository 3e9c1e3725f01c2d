//! Inverse-CDF sampling from tabulated densities, and reproducible uniform
//! streams.
//!
//! A table is built on a uniform grid in a map coordinate `s` in `[0, 1]`,
//! with `x = x(s)` chosen to flatten the features of the density (square-root
//! edges, Lorentzian cores, power-law tails). Inside each cell the density in
//! `s` is taken to be linear, so both the CDF and its inverse are closed form.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Support;
use crate::quadrature::{integrate_domain, Domain, QuadOptions};

/// Identifies one reproducible uniform stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub base_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        Self {
            base_seed,
            stream_index,
        }
    }

    /// Child stream `i` of this stream. Children of distinct parents use
    /// distinct base seeds.
    pub fn derive(&self, i: u64) -> SeedSpec {
        SeedSpec {
            base_seed: splitmix64(self.base_seed ^ splitmix64(self.stream_index)),
            stream_index: i,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.base_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Uniform variates in `[0, 1)`.
#[derive(Debug, Clone)]
pub struct UniformStream {
    rng: ChaCha8Rng,
}

impl Iterator for UniformStream {
    type Item = f64;
    fn next(&mut self) -> Option<f64> {
        Some(self.rng.random::<f64>())
    }
}

pub fn uniform_stream(seed: SeedSpec) -> UniformStream {
    UniformStream { rng: seed.rng() }
}

/// Map `s in [0, 1] -> x` used to place table nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeMap {
    /// `x = lo + (hi - lo) sin^2(pi s / 2)`: clusters nodes at both ends.
    Chebyshev { lo: f64, hi: f64 },
    /// `x = center + width tan(u)`, with `u` running over the image of
    /// `[lo, hi]` in cosine spacing. Flattens a Lorentzian core and clusters
    /// at both ends.
    Lorentz {
        lo: f64,
        hi: f64,
        center: f64,
        width: f64,
        u_lo: f64,
        u_hi: f64,
    },
    /// `x = lo + scale ((1 + R)^{s^2} - 1)` with `R = (hi - lo)/scale`:
    /// square-root clustering at `lo` and geometric growth into a long tail.
    Power { lo: f64, hi: f64, scale: f64, log_span: f64 },
    /// `x = center + scale sinh(v)`, `v` linear in `s`.
    Sinh { center: f64, scale: f64, v_lo: f64, v_hi: f64 },
    /// `x = center + scale sinh(v)` with `v` in cosine spacing: a linear core,
    /// geometric tails and square-root clustering at both ends of `[lo, hi]`.
    SinhEdges {
        lo: f64,
        hi: f64,
        center: f64,
        scale: f64,
        v_lo: f64,
        v_hi: f64,
    },
}

impl NodeMap {
    pub fn lorentz(lo: f64, hi: f64, center: f64, width: f64) -> Self {
        NodeMap::Lorentz {
            lo,
            hi,
            center,
            width,
            u_lo: ((lo - center) / width).atan(),
            u_hi: ((hi - center) / width).atan(),
        }
    }

    pub fn power(lo: f64, hi: f64, scale: f64) -> Self {
        NodeMap::Power {
            lo,
            hi,
            scale,
            log_span: ((hi - lo) / scale).ln_1p(),
        }
    }

    pub fn sinh(lo: f64, hi: f64, center: f64, scale: f64) -> Self {
        NodeMap::Sinh {
            center,
            scale,
            v_lo: ((lo - center) / scale).asinh(),
            v_hi: ((hi - center) / scale).asinh(),
        }
    }

    pub fn sinh_edges(lo: f64, hi: f64, center: f64, scale: f64) -> Self {
        NodeMap::SinhEdges {
            lo,
            hi,
            center,
            scale,
            v_lo: ((lo - center) / scale).asinh(),
            v_hi: ((hi - center) / scale).asinh(),
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            NodeMap::Chebyshev { lo, hi }
            | NodeMap::Lorentz { lo, hi, .. }
            | NodeMap::Power { lo, hi, .. }
            | NodeMap::SinhEdges { lo, hi, .. } => (lo, hi),
            NodeMap::Sinh { center, scale, v_lo, v_hi } => (center + scale * v_lo.sinh(), center + scale * v_hi.sinh()),
        }
    }

    pub fn x(&self, s: f64) -> f64 {
        let (lo, hi) = self.bounds();
        if s <= 0.0 {
            return lo;
        }
        if s >= 1.0 {
            return hi;
        }
        let x = match *self {
            NodeMap::Chebyshev { lo, hi } => {
                if s <= 0.5 {
                    lo + (hi - lo) * (0.5 * PI * s).sin().powi(2)
                } else {
                    hi - (hi - lo) * (0.5 * PI * s).cos().powi(2)
                }
            }
            NodeMap::Lorentz {
                center,
                width,
                u_lo,
                u_hi,
                ..
            } => {
                let u = if s <= 0.5 {
                    u_lo + (u_hi - u_lo) * (0.5 * PI * s).sin().powi(2)
                } else {
                    u_hi - (u_hi - u_lo) * (0.5 * PI * s).cos().powi(2)
                };
                center + width * u.tan()
            }
            NodeMap::Power { lo, scale, log_span, .. } => lo + scale * (log_span * s * s).exp_m1(),
            NodeMap::Sinh { center, scale, v_lo, v_hi } => center + scale * (v_lo + (v_hi - v_lo) * s).sinh(),
            NodeMap::SinhEdges {
                center,
                scale,
                v_lo,
                v_hi,
                ..
            } => {
                let v = if s <= 0.5 {
                    v_lo + (v_hi - v_lo) * (0.5 * PI * s).sin().powi(2)
                } else {
                    v_hi - (v_hi - v_lo) * (0.5 * PI * s).cos().powi(2)
                };
                center + scale * v.sinh()
            }
        };
        x.clamp(lo, hi)
    }

    pub fn dx_ds(&self, s: f64) -> f64 {
        match *self {
            NodeMap::Chebyshev { lo, hi } => 0.5 * PI * (hi - lo) * (PI * s).sin(),
            NodeMap::Lorentz {
                center,
                width,
                u_lo,
                u_hi,
                ..
            } => {
                let d = self.x(s) - center;
                (d * d + width * width) / width * (u_hi - u_lo) * 0.5 * PI * (PI * s).sin()
            }
            NodeMap::Power { scale, log_span, .. } => scale * log_span * 2.0 * s * (log_span * s * s).exp(),
            NodeMap::Sinh { scale, v_lo, v_hi, .. } => scale * (v_hi - v_lo) * (v_lo + (v_hi - v_lo) * s).cosh(),
            NodeMap::SinhEdges {
                center, scale, v_lo, v_hi, ..
            } => {
                let v = ((self.x(s) - center) / scale).asinh();
                scale * v.cosh() * (v_hi - v_lo) * 0.5 * PI * (PI * s).sin()
            }
        }
    }

    pub fn s(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let s = match *self {
            NodeMap::Chebyshev { lo, hi } => 2.0 * ((x - lo) / (hi - lo)).sqrt().asin() / PI,
            NodeMap::Lorentz {
                center,
                width,
                u_lo,
                u_hi,
                ..
            } => {
                let r = (((x - center) / width).atan() - u_lo) / (u_hi - u_lo);
                2.0 * r.clamp(0.0, 1.0).sqrt().asin() / PI
            }
            NodeMap::Power { lo, scale, log_span, .. } => (((x - lo) / scale).ln_1p() / log_span).sqrt(),
            NodeMap::Sinh { center, scale, v_lo, v_hi } => (((x - center) / scale).asinh() - v_lo) / (v_hi - v_lo),
            NodeMap::SinhEdges {
                center, scale, v_lo, v_hi, ..
            } => {
                let v = ((x - center) / scale).asinh();
                let r = (v - v_lo) / (v_hi - v_lo);
                if r <= 0.5 {
                    2.0 * r.clamp(0.0, 1.0).sqrt().asin() / PI
                } else {
                    1.0 - 2.0 * ((v_hi - v) / (v_hi - v_lo)).clamp(0.0, 1.0).sqrt().asin() / PI
                }
            }
        };
        s.clamp(0.0, 1.0)
    }
}

/// How cell masses are integrated in the map coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellRule {
    /// 5-point Gauss–Legendre per cell (plus node values): `6n + 1` evaluations.
    Gauss5,
    /// Simpson per cell, sharing node values: `2n + 1` evaluations.
    Simpson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfOptions {
    pub n: usize,
    pub tail_mass_tol: f64,
    pub rule: CellRule,
    /// Location and scale hint: the Lorentzian core on bounded supports, the
    /// starting scale for tail searches on unbounded ones.
    pub focus: Option<(f64, f64)>,
}

impl Default for CdfOptions {
    fn default() -> Self {
        Self {
            n: 512,
            tail_mass_tol: 1e-10,
            rule: CellRule::Gauss5,
            focus: None,
        }
    }
}

pub const MIN_NODES: usize = 64;
const MASS_TOL: f64 = 1e-4;

/// Tabulated CDF of a density, ready for inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct CdfTable {
    support: Support,
    truncated: Support,
    map: NodeMap,
    nodes: Vec<f64>,
    cdf_values: Vec<f64>,
    // density in the map coordinate at each node, used for in-cell interpolation
    weights: Vec<f64>,
    raw_mass: f64,
}

const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189,
    0.478_628_670_499_366,
    0.568_888_888_888_889,
    0.478_628_670_499_366,
    0.236_926_885_056_189,
];

/// Tail mass of `density` beyond `x` (`upper`) or below it.
fn tail_mass<F: Fn(f64) -> f64>(density: &F, x: f64, scale: f64, upper: bool) -> Result<f64> {
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-8,
        max_intervals: 2000,
    };
    let d = Domain::HalfLine { a: 0.0, scale };
    let r = if upper {
        integrate_domain(|u| density(x + u), d, &[], &opts)?
    } else {
        integrate_domain(|u| density(x - u), d, &[], &opts)?
    };
    Ok(r.value)
}

/// Locate the truncation point of one unbounded end by geometric expansion.
/// Returns `(typical scale, truncation offset)`, both measured from `origin`.
fn find_truncation<F: Fn(f64) -> f64>(density: &F, origin: f64, scale0: f64, upper: bool, tol: f64) -> Result<(f64, f64)> {
    let dir = if upper { 1.0 } else { -1.0 };
    let mut offset = scale0;
    let mut typical = None;
    for _ in 0..400 {
        let m = tail_mass(density, origin + dir * offset, offset, upper)?;
        if typical.is_none() && m < 0.5 {
            typical = Some(offset);
        }
        if m < tol {
            return Ok((typical.unwrap_or(scale0), offset));
        }
        offset *= 2.0;
    }
    Err(Error::NotNormalized { mass: f64::INFINITY })
}

impl CdfTable {
    pub fn support(&self) -> Support {
        self.support
    }

    /// The finite interval actually tabulated.
    pub fn truncated_support(&self) -> Support {
        self.truncated
    }

    pub fn map(&self) -> NodeMap {
        self.map
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf_values
    }

    /// Integral of the density over the tabulated interval before renormalization.
    pub fn raw_mass(&self) -> f64 {
        self.raw_mass
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Fraction of cell mass below relative position `g` in `[0, 1]` when the
    /// density is linear from `a` to `b` across the cell.
    #[inline]
    fn in_cell_cdf(a: f64, b: f64, g: f64) -> f64 {
        let tot = a + b;
        if tot <= 0.0 {
            return g;
        }
        ((2.0 * a * g + (b - a) * g * g) / tot).clamp(0.0, 1.0)
    }

    #[inline]
    fn in_cell_quantile(a: f64, b: f64, g: f64) -> f64 {
        let tot = a + b;
        if tot <= 0.0 {
            return g;
        }
        // root of (b - a)/2 s^2 + a s - g (a + b)/2, in cancellation-free form
        let disc = (a * a + g * (b * b - a * a)).max(0.0);
        let den = a + disc.sqrt();
        if den <= 0.0 {
            return g;
        }
        (g * tot / den).clamp(0.0, 1.0)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let sup = self.truncated;
        if x <= sup.lo {
            return 0.0;
        }
        if x >= sup.hi {
            return 1.0;
        }
        let n = self.cells();
        let s = self.map.s(x) * n as f64;
        let i = (s.floor() as usize).min(n - 1);
        let g = s - i as f64;
        let c0 = self.cdf_values[i];
        let c1 = self.cdf_values[i + 1];
        c0 + (c1 - c0) * Self::in_cell_cdf(self.weights[i], self.weights[i + 1], g)
    }

    /// Quantile at `u`; `u` is clamped into `[0, 1]`.
    pub fn sample(&self, u: f64) -> f64 {
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        let n = self.cells();
        // last node with cdf <= u; skips zero-mass cells
        let i = self.cdf_values.partition_point(|&c| c <= u).saturating_sub(1).min(n - 1);
        let c0 = self.cdf_values[i];
        let c1 = self.cdf_values[i + 1];
        let g = if c1 > c0 { ((u - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.0 };
        let sig = Self::in_cell_quantile(self.weights[i], self.weights[i + 1], g);
        self.map.x((i as f64 + sig) / n as f64)
    }
}

/// Inverse-CDF sample from `table`.
pub fn sample(table: &CdfTable, u: f64) -> f64 {
    table.sample(u)
}

/// Tabulate `density` on `support` with `n` cells and the given tail truncation.
pub fn build_cdf<F: Fn(f64) -> f64>(density: F, support: Support, n: usize, tail_mass_tol: f64) -> Result<CdfTable> {
    build_cdf_with(
        density,
        support,
        &CdfOptions {
            n,
            tail_mass_tol,
            ..CdfOptions::default()
        },
    )
}

pub fn build_cdf_with<F: Fn(f64) -> f64>(density: F, support: Support, opts: &CdfOptions) -> Result<CdfTable> {
    if opts.n < MIN_NODES {
        return Err(Error::InvalidParameter(format!("need at least {MIN_NODES} cells, got {}", opts.n)));
    }
    if !(opts.tail_mass_tol > 0.0 && opts.tail_mass_tol < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "tail mass tolerance must lie in (0, 0.5), got {}",
            opts.tail_mass_tol
        )));
    }
    let map = match (support.lo.is_finite(), support.hi.is_finite()) {
        (true, true) => match opts.focus {
            Some((center, width)) if width > 0.0 && width.is_finite() => NodeMap::sinh_edges(support.lo, support.hi, center, width),
            _ => NodeMap::Chebyshev {
                lo: support.lo,
                hi: support.hi,
            },
        },
        (true, false) => {
            let scale0 = opts.focus.map(|f| f.1).unwrap_or(1.0);
            let (scale, offset) = find_truncation(&density, support.lo, scale0, true, opts.tail_mass_tol)?;
            NodeMap::power(support.lo, support.lo + offset, scale)
        }
        (false, true) => {
            return Err(Error::InvalidParameter(
                "supports unbounded only below are not tabulated".into(),
            ))
        }
        (false, false) => {
            let (center, scale0) = opts.focus.unwrap_or((0.0, 1.0));
            let half = 0.5 * opts.tail_mass_tol;
            let (su, hi) = find_truncation(&density, center, scale0, true, half)?;
            let (sl, lo) = find_truncation(&density, center, scale0, false, half)?;
            NodeMap::sinh(center - lo, center + hi, center, su.min(sl))
        }
    };
    let (lo, hi) = map.bounds();
    let n = opts.n;
    let h = 1.0 / n as f64;
    let weight = |s: f64| -> Result<f64> {
        let x = map.x(s);
        let j = map.dx_ds(s);
        if j == 0.0 {
            return Ok(0.0);
        }
        let f = density(x);
        let w = f * j;
        if !w.is_finite() {
            return Err(Error::NonFinite { x });
        }
        Ok(w.max(0.0))
    };
    let mut nodes = Vec::with_capacity(n + 1);
    let mut weights = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let s = i as f64 * h;
        nodes.push(map.x(s));
        weights.push(weight(s)?);
    }
    let mut cdf_values = Vec::with_capacity(n + 1);
    cdf_values.push(0.0);
    let mut acc = 0.0;
    for i in 0..n {
        let s0 = i as f64 * h;
        let m = match opts.rule {
            CellRule::Simpson => h / 6.0 * (weights[i] + 4.0 * weight(s0 + 0.5 * h)? + weights[i + 1]),
            CellRule::Gauss5 => {
                let mut m = 0.0;
                for (gx, gw) in GL5_X.iter().zip(GL5_W.iter()) {
                    m += gw * weight(s0 + 0.5 * h * (1.0 + gx))?;
                }
                0.5 * h * m
            }
        };
        acc += m;
        cdf_values.push(acc);
    }
    if !((acc - 1.0).abs() <= MASS_TOL) {
        return Err(Error::NotNormalized { mass: acc });
    }
    for c in cdf_values.iter_mut() {
        *c /= acc;
    }
    cdf_values[n] = 1.0;
    Ok(CdfTable {
        support,
        truncated: Support { lo, hi },
        map,
        nodes,
        cdf_values,
        weights,
        raw_mass: acc,
    })
}
