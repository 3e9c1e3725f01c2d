//! Exact-transition Markov simulation of q-OU and q-Brownian paths, the
//! deterministic map between the two, and jump and moment statistics.
//!
//! q-Brownian steps are drawn through the q-OU kernel: given `W_{t1} = w`,
//! `W_{t2} = sqrt(t2) Y` where `Y` has the q-OU law started at `w/sqrt(t1)`
//! after elapsed time `ln(t2/t1)/2`.

use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{qbm_radius, qnormal_pdf, ProcessKind, QouConditional};
use crate::qspecial::QParams;
use crate::sampling::{build_cdf_with, CdfOptions, CdfTable, CellRule, SeedSpec};

/// Uniform time grid `t0 + i (t1 - t0)/steps`, `i = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t0 < 0.0 || t1 <= t0 {
            return Err(Error::InvalidTime(format!("need 0 <= t0 < t1, got [{t0}, {t1}]")));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("time grid needs at least one step".into()));
        }
        Ok(Self { t0, t1, steps })
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t1
        } else {
            self.t0 + i as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum InitialCondition {
    /// q-OU: draw from the q-normal law. q-BM at `t0 > 0`: draw from the
    /// marginal, a `sqrt(t0)`-dilated q-normal.
    Stationary,
    Fixed(f64),
    /// q-BM only, at `t0 = 0`.
    Origin,
}

/// A discretized trajectory. `grid` is present when the times are uniform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub process: ProcessKind,
    pub q: f64,
    pub grid: Option<TimeGrid>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub seed: SeedSpec,
}

impl PathSample {
    pub fn max_abs_increment(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerOptions {
    /// Cells per conditional table.
    pub cells: usize,
    pub cache_capacity: usize,
    /// Starting-point quantum as a fraction of the support width, further
    /// scaled by `min(1, sinh(delta))` so it stays small against the
    /// conditional's spread.
    pub quantum: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            cells: 64,
            cache_capacity: 4096,
            quantum: 1e-4,
        }
    }
}

type TableKey = (u64, i64);

/// Draws exact q-OU and q-BM transitions for one `q`, caching conditional tables.
pub struct TransitionSampler {
    params: QParams,
    opts: SamplerOptions,
    stationary: CdfTable,
    cache: Mutex<LruCache<TableKey, Arc<CdfTable>>>,
}

impl TransitionSampler {
    pub fn new(params: QParams) -> Result<Self> {
        Self::with_options(params, SamplerOptions::default())
    }

    pub fn with_options(params: QParams, opts: SamplerOptions) -> Result<Self> {
        let stationary = build_cdf_with(
            |x| qnormal_pdf(&params, x).unwrap_or(f64::NAN),
            crate::kernels::Support::new(params.x_minus(), params.x_plus())?,
            &CdfOptions::default(),
        )?;
        let cap = NonZeroUsize::new(opts.cache_capacity.max(1)).expect("nonzero");
        Ok(Self {
            params,
            opts,
            stationary,
            cache: Mutex::new(LruCache::new(cap)),
        })
    }

    pub fn params(&self) -> &QParams {
        &self.params
    }

    pub fn stationary_table(&self) -> &CdfTable {
        &self.stationary
    }

    /// q-normal draw.
    pub fn sample_qnormal(&self, u: f64) -> f64 {
        self.stationary.sample(u)
    }

    fn quantize(&self, delta: f64, x: f64) -> (TableKey, f64) {
        let quantum = self.opts.quantum * self.params.width() * delta.sinh().min(1.0);
        let idx = (x / quantum).round();
        let xq = (idx * quantum).clamp(self.params.x_minus(), self.params.x_plus());
        ((delta.to_bits(), idx as i64), xq)
    }

    fn build_table(&self, delta: f64, x: f64) -> Result<CdfTable> {
        let cond = QouConditional::new(self.params, delta, x)?;
        let support = crate::kernels::Support::new(self.params.x_minus(), self.params.x_plus())?;
        let fast = CdfOptions {
            n: self.opts.cells.max(crate::sampling::MIN_NODES),
            rule: CellRule::Simpson,
            focus: Some(cond.focus()),
            ..CdfOptions::default()
        };
        match build_cdf_with(|y| cond.pdf(y), support, &fast) {
            Ok(t) => Ok(t),
            Err(Error::NotNormalized { .. }) => build_cdf_with(
                |y| cond.pdf(y),
                support,
                &CdfOptions {
                    n: 1024,
                    rule: CellRule::Gauss5,
                    ..fast
                },
            ),
            Err(e) => Err(e),
        }
    }

    /// Conditional table for the q-OU law after `delta` from `x`; `x` is
    /// snapped to the cache quantum first, so the table depends on the key only.
    pub fn table(&self, delta: f64, x: f64) -> Result<Arc<CdfTable>> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidTime(format!("elapsed time must be positive, got {delta}")));
        }
        if !self.params.contains(x) {
            return Err(Error::InvalidState {
                value: x,
                lo: self.params.x_minus(),
                hi: self.params.x_plus(),
            });
        }
        let (key, xq) = self.quantize(delta, x);
        if let Some(t) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(t));
        }
        let table = Arc::new(self.build_table(delta, xq)?);
        self.cache.lock().expect("cache lock").put(key, Arc::clone(&table));
        Ok(table)
    }

    pub fn cached_tables(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// q-OU transition draw.
    pub fn sample_qou(&self, delta: f64, x: f64, u: f64) -> Result<f64> {
        let y = self.table(delta, x)?.sample(u);
        Ok(y.clamp(self.params.x_minus(), self.params.x_plus()))
    }

    /// q-BM transition draw from `W_{t1} = w` to time `t2`.
    pub fn sample_qbm(&self, t1: f64, t2: f64, w: f64, u: f64) -> Result<f64> {
        if !(t1.is_finite() && t2.is_finite()) || t1 < 0.0 || t2 <= t1 {
            return Err(Error::InvalidTime(format!("need 0 <= t1 < t2, got t1 = {t1}, t2 = {t2}")));
        }
        let r2 = qbm_radius(&self.params, t2);
        if t1 == 0.0 {
            return Ok((t2.sqrt() * self.sample_qnormal(u)).clamp(-r2, r2));
        }
        let x = (w / t1.sqrt()).clamp(self.params.x_minus(), self.params.x_plus());
        let delta = 0.5 * ((t2 - t1) / t1).ln_1p();
        Ok((t2.sqrt() * self.sample_qou(delta, x, u)?).clamp(-r2, r2))
    }

    pub fn simulate_path(&self, process: ProcessKind, grid: TimeGrid, init: InitialCondition, seed: SeedSpec) -> Result<PathSample> {
        let p = &self.params;
        let mut rng = seed.rng();
        let mut values = Vec::with_capacity(grid.steps + 1);
        let times = grid.times();
        match process {
            ProcessKind::Qou => {
                let x0 = match init {
                    InitialCondition::Stationary => self.sample_qnormal(rng.random::<f64>()),
                    InitialCondition::Fixed(x) if x.is_finite() && x.abs() <= p.x_plus() => x,
                    InitialCondition::Fixed(x) => {
                        return Err(Error::InvalidInit(format!(
                            "q-OU start {x} outside [{}, {}]",
                            p.x_minus(),
                            p.x_plus()
                        )))
                    }
                    InitialCondition::Origin => {
                        return Err(Error::InvalidInit("q-OU has no origin start; use stationary or fixed".into()))
                    }
                };
                values.push(x0);
                let dt = grid.dt();
                for _ in 0..grid.steps {
                    let x = *values.last().expect("nonempty");
                    values.push(self.sample_qou(dt, x, rng.random::<f64>())?);
                }
            }
            ProcessKind::Qbm => {
                let w0 = match init {
                    InitialCondition::Origin if grid.t0 == 0.0 => 0.0,
                    InitialCondition::Origin => {
                        return Err(Error::InvalidInit(format!("origin start needs t0 = 0, got {}", grid.t0)))
                    }
                    InitialCondition::Fixed(_) | InitialCondition::Stationary if grid.t0 == 0.0 => {
                        return Err(Error::InvalidInit("q-BM at t0 = 0 starts at the origin".into()))
                    }
                    InitialCondition::Stationary => grid.t0.sqrt() * self.sample_qnormal(rng.random::<f64>()),
                    InitialCondition::Fixed(x) => {
                        let r = qbm_radius(p, grid.t0);
                        if !(x.is_finite() && x.abs() <= r) {
                            return Err(Error::InvalidInit(format!("q-BM start {x} outside [{}, {r}]", -r)));
                        }
                        x
                    }
                };
                values.push(w0);
                for i in 0..grid.steps {
                    let w = *values.last().expect("nonempty");
                    values.push(self.sample_qbm(times[i], times[i + 1], w, rng.random::<f64>())?);
                }
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "simulation supports qou and qbm, not {other}"
                )))
            }
        }
        Ok(PathSample {
            process,
            q: p.q(),
            grid: Some(grid),
            times,
            values,
            seed,
        })
    }

    /// `n_paths` paths in parallel; path `i` uses stream `i` of `base_seed`.
    pub fn simulate_paths(
        &self,
        process: ProcessKind,
        grid: TimeGrid,
        init: InitialCondition,
        base_seed: u64,
        n_paths: usize,
    ) -> Result<Vec<PathSample>> {
        (0..n_paths)
            .into_par_iter()
            .map(|i| self.simulate_path(process, grid, init, SeedSpec::new(base_seed, i as u64)))
            .collect()
    }
}

pub fn simulate_path(process: ProcessKind, p: QParams, grid: TimeGrid, init: InitialCondition, seed: SeedSpec) -> Result<PathSample> {
    TransitionSampler::new(p)?.simulate_path(process, grid, init, seed)
}

/// q-OU path to q-BM path: `W_tau = sqrt(tau) X_{ln(tau)/2}`, `tau = e^{2t}`.
pub fn ou_to_bm(path: &PathSample) -> Result<PathSample> {
    if path.process != ProcessKind::Qou {
        return Err(Error::InvalidParameter(format!("expected a qou path, got {}", path.process)));
    }
    let times: Vec<f64> = path.times.iter().map(|&t| (2.0 * t).exp()).collect();
    let values = path.times.iter().zip(&path.values).map(|(&t, &x)| t.exp() * x).collect();
    Ok(PathSample {
        process: ProcessKind::Qbm,
        q: path.q,
        grid: None,
        times,
        values,
        seed: path.seed,
    })
}

/// Inverse of [`ou_to_bm`]; all times must be positive.
pub fn bm_to_ou(path: &PathSample) -> Result<PathSample> {
    if path.process != ProcessKind::Qbm {
        return Err(Error::InvalidParameter(format!("expected a qbm path, got {}", path.process)));
    }
    if let Some(&t) = path.times.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::InvalidTime(format!("q-BM time {t} has no q-OU counterpart")));
    }
    let times: Vec<f64> = path.times.iter().map(|&tau| 0.5 * tau.ln()).collect();
    let values = path.times.iter().zip(&path.values).map(|(&tau, &w)| w / tau.sqrt()).collect();
    Ok(PathSample {
        process: ProcessKind::Qou,
        q: path.q,
        grid: None,
        times,
        values,
        seed: path.seed,
    })
}

fn check_interval(s: f64, t: f64) -> Result<()> {
    if !(s.is_finite() && t.is_finite()) || s < 0.0 || t < s {
        return Err(Error::InvalidTime(format!("need 0 <= s <= t, got s = {s}, t = {t}")));
    }
    Ok(())
}

/// `E (W_t - W_s)^4 = (2 + q)(t - s)^2 + 2 (1 - q) s (t - s)`.
pub fn moment4_closed(q: f64, s: f64, t: f64) -> Result<f64> {
    check_interval(s, t)?;
    let d = t - s;
    Ok((2.0 + q) * d * d + 2.0 * (1.0 - q) * s * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub estimate: f64,
    /// Plug-in standard error; infinite when fewer than two samples.
    pub std_error: f64,
    pub n: usize,
}

/// Monte Carlo estimate of `E (W_t - W_s)^4`; sample `i` uses `seed.derive(i)`.
pub fn moment4_estimate(q: f64, s: f64, t: f64, n_samples: usize, seed: SeedSpec) -> Result<MomentEstimate> {
    check_interval(s, t)?;
    if s == t {
        return Err(Error::InvalidTime(format!("need s < t, got s = t = {s}")));
    }
    if n_samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let sampler = TransitionSampler::new(QParams::new(q)?)?;
    let draws: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed.derive(i).rng();
            let ws = if s > 0.0 {
                s.sqrt() * sampler.sample_qnormal(rng.random::<f64>())
            } else {
                0.0
            };
            let wt = sampler.sample_qbm(s, t, ws, rng.random::<f64>())?;
            Ok((wt - ws).powi(4))
        })
        .collect::<Result<_>>()?;
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let std_error = if draws.len() < 2 {
        f64::INFINITY
    } else {
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    };
    Ok(MomentEstimate {
        estimate: mean,
        std_error,
        n: draws.len(),
    })
}

/// `min(1, (1 - q)(T^2 - S^2)/a^4)`, the bound on the probability of a jump
/// larger than `a` during `[S, T]`.
pub fn jump_bound(q: f64, s: f64, t: f64, a: f64) -> Result<f64> {
    if !(q > -1.0 && q <= 1.0) {
        return Err(Error::InvalidParameter(format!("q must lie in (-1, 1], got {q}")));
    }
    if !(s.is_finite() && t.is_finite()) || s < 0.0 || t <= s {
        return Err(Error::InvalidTime(format!("need 0 <= S < T, got S = {s}, T = {t}")));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidThreshold(a));
    }
    Ok(((1.0 - q) * (t * t - s * s) / a.powi(4)).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpStats {
    pub max_abs_increment: f64,
    pub threshold: f64,
    pub exceed_count: usize,
    pub ensemble_size: usize,
}

impl JumpStats {
    /// Statistics at threshold `a` from per-path maximal increments.
    pub fn from_maxima(maxima: &[f64], a: f64) -> Result<Self> {
        if !(a >= 0.0) {
            return Err(Error::InvalidThreshold(a));
        }
        Ok(Self {
            max_abs_increment: maxima.iter().copied().fold(0.0, f64::max),
            threshold: a,
            exceed_count: maxima.iter().filter(|&&m| m > a).count(),
            ensemble_size: maxima.len(),
        })
    }

    pub fn fraction(&self) -> f64 {
        if self.ensemble_size == 0 {
            return 0.0;
        }
        self.exceed_count as f64 / self.ensemble_size as f64
    }

    pub fn binomial_std_error(&self) -> f64 {
        if self.ensemble_size == 0 {
            return f64::INFINITY;
        }
        let p = self.fraction();
        (p * (1.0 - p) / self.ensemble_size as f64).sqrt()
    }
}

/// Largest grid increment of each of `n_paths` q-BM paths on `[S, T]`.
/// Path `i` uses `seed.derive(i)`.
pub fn sup_jump_maxima(q: f64, s: f64, t: f64, n_paths: usize, steps: usize, seed: SeedSpec) -> Result<Vec<f64>> {
    let grid = TimeGrid::new(s, t, steps)?;
    let sampler = TransitionSampler::new(QParams::new(q)?)?;
    let init = if s == 0.0 {
        InitialCondition::Origin
    } else {
        InitialCondition::Stationary
    };
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            sampler
                .simulate_path(ProcessKind::Qbm, grid, init, seed.derive(i))
                .map(|p| p.max_abs_increment())
        })
        .collect()
}

pub fn sup_jump_estimate(q: f64, s: f64, t: f64, a: f64, n_paths: usize, steps: usize, seed: SeedSpec) -> Result<JumpStats> {
    if !(a >= 0.0) {
        return Err(Error::InvalidThreshold(a));
    }
    JumpStats::from_maxima(&sup_jump_maxima(q, s, t, n_paths, steps, seed)?, a)
}
