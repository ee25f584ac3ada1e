//! HMC transitions on path energies, forward/reverse AIS, the BDMC gap and
//! SMC samplers with systematic resampling.
//!
//! Chains and particles advance in lockstep over the schedule. Each unit
//! draws from its own stream keyed by `(seed, unit, step)`, so estimates are
//! identical whatever the thread count.

use crate::deformed_math::log_sum_exp;
use crate::densities::{Point, UnnormalizedDensity};
use crate::error::{Error, Result};
use crate::parallel::{for_each_mut, map_units, stream, StreamRng};
use crate::paths::{qpath_energy_from_logs, AnnealingPath};
use crate::schedules::{adaptive_next_beta, Schedule};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Stream index reserved for run-level draws (resampling uniforms).
const SYSTEM_UNIT: u64 = u64::MAX;
/// First stream index used by step-size pilot chains.
const PILOT_UNIT: u64 = 1 << 62;
const PILOT_CHAINS: usize = 16;

/// Leapfrog step size, trajectory length and diagonal mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub step_size: f64,
    pub n_leapfrog: usize,
    pub mass: Vec<f64>,
}

impl HmcConfig {
    pub fn new(step_size: f64, n_leapfrog: usize, mass: Vec<f64>) -> Result<Self> {
        let cfg = HmcConfig {
            step_size,
            n_leapfrog,
            mass,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Unit mass in `dim` dimensions.
    pub fn isotropic(dim: usize, step_size: f64, n_leapfrog: usize) -> Result<Self> {
        Self::new(step_size, n_leapfrog, vec![1.0; dim])
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            bad.push(format!("step_size must be positive, got {}", self.step_size));
        }
        if self.n_leapfrog == 0 {
            bad.push("n_leapfrog must be positive".to_string());
        }
        if self.mass.is_empty() || self.mass.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            bad.push("mass must be a nonempty vector of positive reals".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        p.iter().zip(&self.mass).map(|(pi, m)| pi * pi / (2.0 * m)).sum()
    }
}

/// Position, momentum and the cached log-density and gradient at the position.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub z: Point,
    pub p: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

fn bad_value(v: f64) -> bool {
    v.is_nan() || v == f64::NEG_INFINITY
}

fn integrate(target: &dyn UnnormalizedDensity, mut s: PhasePoint, cfg: &HmcConfig) -> (PhasePoint, bool) {
    let eps = cfg.step_size;
    for _ in 0..cfg.n_leapfrog {
        for (p, g) in s.p.iter_mut().zip(&s.grad) {
            *p += 0.5 * eps * g;
        }
        for ((z, p), m) in s.z.iter_mut().zip(&s.p).zip(&cfg.mass) {
            *z += eps * p / m;
        }
        let (v, g) = target.value_and_gradient(&s.z);
        s.log_density = v;
        s.grad = g;
        if bad_value(v) || s.grad.iter().any(|x| !x.is_finite()) {
            return (s, true);
        }
        for (p, g) in s.p.iter_mut().zip(&s.grad) {
            *p += 0.5 * eps * g;
        }
    }
    (s, false)
}

/// Result of [`leapfrog`]; `divergent` marks a trajectory that reached zero
/// mass or a non-finite gradient, in which case the state is where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct LeapfrogOutcome {
    pub z: Point,
    pub momentum: Vec<f64>,
    pub divergent: bool,
}

/// `cfg.n_leapfrog` leapfrog steps of Hamiltonian dynamics for the
/// potential `-log target`.
pub fn leapfrog(
    target: &dyn UnnormalizedDensity,
    z: &[f64],
    momentum: &[f64],
    cfg: &HmcConfig,
) -> LeapfrogOutcome {
    let (v, g) = target.value_and_gradient(z);
    let start = PhasePoint {
        z: z.to_vec(),
        p: momentum.to_vec(),
        log_density: v,
        grad: g,
    };
    if bad_value(v) {
        return LeapfrogOutcome {
            z: start.z,
            momentum: start.p,
            divergent: true,
        };
    }
    let (end, divergent) = integrate(target, start, cfg);
    LeapfrogOutcome {
        z: end.z,
        momentum: end.p,
        divergent,
    }
}

/// One Metropolis-corrected HMC transition.
#[derive(Debug, Clone, PartialEq)]
pub struct HmcStep {
    pub z: Point,
    pub accepted: bool,
    pub accept_prob: f64,
    pub divergent: bool,
}

pub fn hmc_step<R: Rng + ?Sized>(
    target: &dyn UnnormalizedDensity,
    z: &[f64],
    cfg: &HmcConfig,
    rng: &mut R,
) -> HmcStep {
    let p: Vec<f64> = cfg
        .mass
        .iter()
        .map(|m| {
            let e: f64 = StandardNormal.sample(&mut *rng);
            m.sqrt() * e
        })
        .collect();
    let (v, g) = target.value_and_gradient(z);
    let reject = |divergent| HmcStep {
        z: z.to_vec(),
        accepted: false,
        accept_prob: 0.0,
        divergent,
    };
    if bad_value(v) {
        return reject(true);
    }
    let h0 = -v + cfg.kinetic(&p);
    let start = PhasePoint {
        z: z.to_vec(),
        p,
        log_density: v,
        grad: g,
    };
    let (end, divergent) = integrate(target, start, cfg);
    if divergent {
        return reject(true);
    }
    let h1 = -end.log_density + cfg.kinetic(&end.p);
    let log_ratio = h0 - h1;
    if log_ratio.is_nan() {
        return reject(true);
    }
    let accept_prob = log_ratio.exp().min(1.0);
    let u: f64 = rng.random();
    if log_ratio >= 0.0 || u < accept_prob {
        HmcStep {
            z: end.z,
            accepted: true,
            accept_prob,
            divergent: false,
        }
    } else {
        HmcStep {
            z: z.to_vec(),
            accepted: false,
            accept_prob,
            divergent: false,
        }
    }
}

/// Nesterov dual averaging of `log step_size` towards a target acceptance.
#[derive(Debug, Clone)]
pub struct DualAverage {
    log_step: f64,
    log_step_avg: f64,
    hbar: f64,
    mu: f64,
    count: f64,
    target: f64,
}

impl DualAverage {
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;
    const GAMMA: f64 = 0.05;

    pub fn new(initial_step: f64, target: f64) -> Self {
        DualAverage {
            log_step: initial_step.ln(),
            log_step_avg: initial_step.ln(),
            hbar: 0.0,
            mu: (10.0 * initial_step).ln(),
            count: 0.0,
            target,
        }
    }

    pub fn advance(&mut self, accept_prob: f64) {
        let a = if accept_prob.is_finite() { accept_prob } else { 0.0 };
        self.count += 1.0;
        let w = 1.0 / (self.count + Self::T0);
        self.hbar = (1.0 - w) * self.hbar + w * (self.target - a);
        self.log_step = (self.mu - self.hbar * self.count.sqrt() / Self::GAMMA).clamp(-16.0, 5.0);
        let mk = self.count.powf(-Self::KAPPA);
        self.log_step_avg = mk * self.log_step + (1.0 - mk) * self.log_step_avg;
    }

    pub fn current(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn adapted(&self) -> f64 {
        self.log_step_avg.exp()
    }
}

/// Transition kernel used for the move steps.
#[derive(Debug, Clone, PartialEq)]
pub enum MoveKernel {
    /// HMC with the step size jittered uniformly over `[0.5, 1.5]` times its
    /// nominal value on each transition. When `warmup > 0` the nominal value
    /// is re-tuned at every beta by dual averaging on pilot copies of the
    /// chains (target acceptance 0.65), starting from the previous beta's value.
    Hmc { cfg: HmcConfig, warmup: usize },
    /// Independent uniform proposals over the atoms `0..support` of a
    /// finite density on the integers.
    DiscreteMetropolis { support: usize },
}

pub const TARGET_ACCEPT: f64 = 0.65;

impl MoveKernel {
    pub fn hmc(cfg: HmcConfig, warmup: usize) -> Self {
        MoveKernel::Hmc { cfg, warmup }
    }

    fn step(&self, target: &dyn UnnormalizedDensity, z: &[f64], step_size: f64, rng: &mut StreamRng) -> (Point, f64) {
        match self {
            MoveKernel::Hmc { cfg, .. } => {
                // a jittered step size avoids trajectories that resonate with
                // the target's oscillation period
                let jitter: f64 = rng.random_range(0.5..1.5);
                let c = HmcConfig {
                    step_size: step_size * jitter,
                    n_leapfrog: cfg.n_leapfrog,
                    mass: cfg.mass.clone(),
                };
                let s = hmc_step(target, z, &c, rng);
                (s.z, s.accept_prob)
            }
            MoveKernel::DiscreteMetropolis { support } => {
                let prop = vec![rng.random_range(0..*support) as f64];
                let cur = target.log_density(z);
                let new = target.log_density(&prop);
                let log_ratio = new - cur;
                let a = if log_ratio.is_nan() {
                    if new > f64::NEG_INFINITY { 1.0 } else { 0.0 }
                } else {
                    log_ratio.exp().min(1.0)
                };
                let u: f64 = rng.random();
                if u < a {
                    (prop, a)
                } else {
                    (z.to_vec(), a)
                }
            }
        }
    }

    fn initial_step(&self) -> f64 {
        match self {
            MoveKernel::Hmc { cfg, .. } => cfg.step_size,
            MoveKernel::DiscreteMetropolis { .. } => f64::NAN,
        }
    }
}

/// Moves every unit `moves` times at the intermediate `target`, tuning the
/// step size first when the kernel asks for it. Returns the mean acceptance
/// probability and the step size used.
fn move_all(
    kernel: &MoveKernel,
    target: &dyn UnnormalizedDensity,
    positions: &mut [Point],
    moves: usize,
    step_size: f64,
    seed: u64,
    step: u64,
) -> (f64, f64) {
    if moves == 0 || positions.is_empty() {
        return (f64::NAN, step_size);
    }
    let mut eps = step_size;
    if let MoveKernel::Hmc { warmup, .. } = kernel {
        if *warmup > 0 {
            let mut da = DualAverage::new(eps, TARGET_ACCEPT);
            let mut pilots: Vec<Point> = positions.iter().take(PILOT_CHAINS).cloned().collect();
            for iter in 0..*warmup {
                let e = da.current();
                let accepts = map_units(pilots.len(), |i| {
                    let mut rng = stream(seed, PILOT_UNIT + i as u64, (step << 20) | iter as u64);
                    kernel.step(target, &pilots[i], e, &mut rng)
                });
                let mut mean = 0.0;
                for (i, (z, a)) in accepts.into_iter().enumerate() {
                    pilots[i] = z;
                    mean += a;
                }
                da.advance(mean / pilots.len() as f64);
            }
            eps = da.adapted();
        }
    }
    let accepts = {
        let mut acc = vec![0.0; positions.len()];
        let mut pairs: Vec<(&mut Point, &mut f64)> = positions.iter_mut().zip(acc.iter_mut()).collect();
        for_each_mut(&mut pairs, |i, (z, a)| {
            let mut rng = stream(seed, i as u64, step);
            let mut total = 0.0;
            for _ in 0..moves {
                let (next, prob) = kernel.step(target, z, eps, &mut rng);
                **z = next;
                total += prob;
            }
            **a = total / moves as f64;
        });
        acc
    };
    (accepts.iter().sum::<f64>() / accepts.len() as f64, eps)
}

/// `E_{b1}(z) - E_{b0}(z)` for every point.
fn energy_increments(path: &dyn AnnealingPath, zs: &[Point], b0: f64, b1: f64) -> Result<Vec<f64>> {
    if let Some(q) = path.endpoint_order() {
        let base = path.base();
        let target = path.target();
        return Ok(map_units(zs.len(), |i| {
            let l0 = base.log_density(&zs[i]);
            let l1 = target.log_density(&zs[i]);
            let e1 = qpath_energy_from_logs(l0, l1, b1, q).0;
            let e0 = qpath_energy_from_logs(l0, l1, b0, q).0;
            difference(e1, e0)
        }));
    }
    let s0 = path.at(b0)?;
    let s1 = path.at(b1)?;
    Ok(map_units(zs.len(), |i| {
        difference(s1.log_density(&zs[i]), s0.log_density(&zs[i]))
    }))
}

/// Difference of log-energies with `-inf - -inf = -inf` (zero mass stays zero).
fn difference(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        a - b
    }
}

/// `(sum w)^2 / sum w^2` from log-weights; 0 when every weight is zero.
pub fn ess_of_log_weights(log_weights: &[f64]) -> f64 {
    let lse = log_sum_exp(log_weights);
    if lse == f64::NEG_INFINITY || lse.is_nan() {
        return 0.0;
    }
    let doubled: Vec<f64> = log_weights.iter().map(|l| 2.0 * (l - lse)).collect();
    (-log_sum_exp(&doubled)).exp()
}

/// `log((1/n) sum exp(x_i))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Delta-method standard error of `log_mean_exp(log_w)`.
pub fn log_mean_exp_stderr(log_w: &[f64]) -> f64 {
    let n = log_w.len() as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return f64::NAN;
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - m).exp()).collect();
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt() / mean
}

/// Systematic resampling with a caller-supplied uniform `u` in `[0, 1)`.
pub fn systematic_resample_with_uniform(log_weights: &[f64], u: f64) -> Result<Vec<usize>> {
    let n = log_weights.len();
    let lse = log_sum_exp(log_weights);
    if n == 0 || lse == f64::NEG_INFINITY || lse.is_nan() {
        return Err(Error::Degenerate("no finite log weight to resample from".into()));
    }
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut i = 0;
    for k in 0..n {
        let pos = (k as f64 + u) / n as f64;
        while i < n - 1 && cum + (log_weights[i] - lse).exp() <= pos {
            cum += (log_weights[i] - lse).exp();
            i += 1;
        }
        out.push(i);
    }
    Ok(out)
}

/// Systematic resampling: `N` indices from a single uniform draw.
pub fn systematic_resample<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let u: f64 = rng.random();
    systematic_resample_with_uniform(log_weights, u)
}

/// Particle positions with their log-weights and the running log-normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub positions: Vec<Point>,
    pub log_weights: Vec<f64>,
    pub log_z: f64,
    pub seed: u64,
    pub step: usize,
}

impl ParticleSystem {
    /// `n` exact draws from the path's base.
    pub fn from_base(path: &dyn AnnealingPath, n: usize, seed: u64) -> Result<Self> {
        let positions = draw(path.base(), n, seed)?;
        Ok(ParticleSystem {
            positions,
            log_weights: vec![0.0; n],
            log_z: 0.0,
            seed,
            step: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn ess(&self) -> f64 {
        ess_of_log_weights(&self.log_weights)
    }

    /// Fold incremental log-weights into the weights and the log-normalizer.
    fn reweight(&mut self, increments: &[f64]) -> Result<()> {
        let before = log_sum_exp(&self.log_weights);
        for (w, inc) in self.log_weights.iter_mut().zip(increments) {
            *w += inc;
            if w.is_nan() {
                *w = f64::NEG_INFINITY;
            }
        }
        let after = log_sum_exp(&self.log_weights);
        if after == f64::NEG_INFINITY || after.is_nan() {
            return Err(Error::WeightCollapse { step: self.step });
        }
        self.log_z += after - before;
        Ok(())
    }

    fn resample(&mut self) -> Result<()> {
        let mut rng = stream(self.seed, SYSTEM_UNIT, self.step as u64);
        let idx = systematic_resample(&self.log_weights, &mut rng)?;
        self.positions = idx.iter().map(|&i| self.positions[i].clone()).collect();
        self.log_weights = vec![0.0; self.positions.len()];
        Ok(())
    }
}

fn draw(density: &dyn UnnormalizedDensity, n: usize, seed: u64) -> Result<Vec<Point>> {
    if !density.has_exact_sampler() {
        return Err(Error::InvalidInput("starting density has no exact sampler".into()));
    }
    let draws = map_units(n, |i| {
        let mut rng = stream(seed, i as u64, u64::MAX);
        density.sample(&mut rng)
    });
    draws
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::InvalidInput("exact sampler returned no draw".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AisDirection {
    /// Base to target; `log_z` is a stochastic lower bound on `log(Z_1/Z_0)`.
    Forward,
    /// Target to base; `log_z` is `-log_mean_exp(per_chain_log_w)`, a
    /// stochastic upper bound on `log(Z_1/Z_0)`.
    Reverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisResult {
    pub direction: AisDirection,
    pub log_z: f64,
    pub stderr: f64,
    /// Per-chain log-weights in the direction of travel (including `-inf`).
    pub per_chain_log_w: Vec<f64>,
    pub schedule: Schedule,
    /// ESS of the accumulated chain weights after each transition, in the
    /// direction of travel.
    pub ess_trace: Vec<f64>,
    /// Mean acceptance of the moves after each transition; NaN where no
    /// moves were made (always at the last one).
    pub acceptance_trace: Vec<f64>,
    pub step_sizes: Vec<f64>,
    /// Jensen bound from the mean per-chain log-weight: `mean(log w)` below
    /// `log Z` going forward, `-mean(log w)` above it in reverse. Unlike
    /// `log_z` its bias does not vanish as chains are added.
    pub bound: f64,
    /// Chains left out of the estimate because their weight was `-inf` or NaN.
    pub dropped: usize,
}

fn summarize(direction: AisDirection, out: ChainOutput, schedule: &Schedule) -> Result<AisResult> {
    let per_chain_log_w = out.log_w;
    let kept: Vec<f64> = per_chain_log_w
        .iter()
        .copied()
        .filter(|w| w.is_finite() || *w == f64::INFINITY)
        .collect();
    let dropped = per_chain_log_w.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::WeightCollapse {
            step: schedule.len() - 1,
        });
    }
    if dropped > 0 {
        log::warn!("{dropped} of {} chains had zero weight and were dropped", per_chain_log_w.len());
    }
    let lme = log_mean_exp(&kept);
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let (log_z, bound) = match direction {
        AisDirection::Forward => (lme, mean),
        AisDirection::Reverse => (-lme, -mean),
    };
    Ok(AisResult {
        direction,
        log_z,
        stderr: log_mean_exp_stderr(&kept),
        per_chain_log_w,
        schedule: schedule.clone(),
        ess_trace: out.ess,
        acceptance_trace: out.acceptance,
        step_sizes: out.steps,
        bound,
        dropped,
    })
}

/// Forward AIS from exact base draws. Each chain accumulates
/// `E_{b_t}(z) - E_{b_{t-1}}(z)` and is then moved `moves_per_step` times at
/// `b_t`. No moves are made at `b = 1` since they cannot change the weights.
pub fn ais_forward(
    path: &dyn AnnealingPath,
    schedule: &Schedule,
    chains: usize,
    kernel: &MoveKernel,
    moves_per_step: usize,
    seed: u64,
) -> Result<AisResult> {
    if chains == 0 {
        return Err(Error::InvalidInput("need at least one chain".into()));
    }
    let mut zs = draw(path.base(), chains, seed)?;
    let betas = schedule.betas();
    let out = run_chains(path, betas, &mut zs, kernel, moves_per_step, seed)?;
    summarize(AisDirection::Forward, out, schedule)
}

/// Reverse AIS started from exact target draws, travelling the schedule
/// backwards.
pub fn ais_reverse(
    path: &dyn AnnealingPath,
    schedule: &Schedule,
    exact_target_samples: Vec<Point>,
    kernel: &MoveKernel,
    moves_per_step: usize,
    seed: u64,
) -> Result<AisResult> {
    if exact_target_samples.is_empty() {
        return Err(Error::InvalidInput("need at least one target sample".into()));
    }
    if let Some(z) = exact_target_samples.iter().find(|z| z.len() != path.dim()) {
        return Err(Error::DimensionMismatch {
            expected: path.dim(),
            got: z.len(),
        });
    }
    let mut zs = exact_target_samples;
    let betas: Vec<f64> = schedule.betas().iter().rev().copied().collect();
    let out = run_chains(path, &betas, &mut zs, kernel, moves_per_step, seed)?;
    summarize(AisDirection::Reverse, out, schedule)
}

/// Exact draws from the path's target when it has a sampler.
pub fn exact_target_samples(path: &dyn AnnealingPath, n: usize, seed: u64) -> Result<Vec<Point>> {
    draw(path.target(), n, seed ^ 0x5EED_7A26_E7D0_0001)
}

struct ChainOutput {
    log_w: Vec<f64>,
    ess: Vec<f64>,
    acceptance: Vec<f64>,
    steps: Vec<f64>,
}

fn run_chains(
    path: &dyn AnnealingPath,
    betas: &[f64],
    zs: &mut [Point],
    kernel: &MoveKernel,
    moves: usize,
    seed: u64,
) -> Result<ChainOutput> {
    let mut log_w = vec![0.0; zs.len()];
    let mut ess = Vec::new();
    let mut acceptance = Vec::new();
    let mut steps = Vec::new();
    let mut eps = kernel.initial_step();
    let last = betas.len() - 1;
    for t in 1..betas.len() {
        let inc = energy_increments(path, zs, betas[t - 1], betas[t])?;
        for (w, d) in log_w.iter_mut().zip(&inc) {
            *w += d;
        }
        ess.push(ess_of_log_weights(&log_w));
        if t < last && moves > 0 {
            let slice = path.at(betas[t])?;
            let (a, e) = move_all(kernel, slice.as_ref(), zs, moves, eps, seed, t as u64);
            eps = e;
            acceptance.push(a);
        } else {
            acceptance.push(f64::NAN);
        }
        steps.push(eps);
    }
    Ok(ChainOutput {
        log_w,
        ess,
        acceptance,
        steps,
    })
}

/// Gap between the reverse (upper) and forward (lower) Jensen bounds.
///
/// In expectation this is the sum of the KL divergences between the forward
/// and reverse chain distributions, so it measures the path and schedule
/// rather than the number of chains.
pub fn bdmc_gap(fwd: &AisResult, rev: &AisResult) -> Result<f64> {
    if fwd.direction != AisDirection::Forward || rev.direction != AisDirection::Reverse {
        return Err(Error::InvalidInput("bdmc_gap needs a forward and a reverse run".into()));
    }
    Ok(rev.bound - fwd.bound)
}

/// Fixed beta grid, or adaptive steps keeping the incremental ESS at
/// `ess_fraction * N`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleRule {
    Fixed(Schedule),
    Adaptive { ess_fraction: f64, tol: f64, max_steps: usize },
}

impl ScheduleRule {
    pub fn adaptive(ess_fraction: f64) -> Self {
        ScheduleRule::Adaptive {
            ess_fraction,
            tol: 1e-6,
            max_steps: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SmcDiagnostics {
    /// Betas visited, starting at 0.
    pub betas: Vec<f64>,
    /// ESS after reweighting to each beta past 0 (before any resampling).
    pub ess: Vec<f64>,
    /// Mean acceptance of the moves made at each beta past 0 (NaN when none).
    pub acceptance: Vec<f64>,
    pub resampled: Vec<bool>,
    pub step_sizes: Vec<f64>,
    /// Adaptive steps whose bisection did not reach the ESS tolerance.
    pub flagged_steps: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SmcOutput {
    pub log_z: f64,
    /// Rough standard error from `sum_t (1/ESS_t - 1/N)`.
    pub stderr: f64,
    pub diagnostics: SmcDiagnostics,
    pub particles: ParticleSystem,
}

/// SMC sampler from exact base draws to the target.
///
/// Fixed schedules resample when the ESS falls below `N/2`; adaptive
/// schedules resample after every step. Moves target the current beta and
/// are skipped at `beta = 1`.
pub fn smc_run(
    path: &dyn AnnealingPath,
    rule: &ScheduleRule,
    particles: usize,
    kernel: &MoveKernel,
    moves_per_step: usize,
    seed: u64,
) -> Result<SmcOutput> {
    if particles < 2 {
        return Err(Error::InvalidInput("smc needs at least two particles".into()));
    }
    let mut sys = ParticleSystem::from_base(path, particles, seed)?;
    let n = particles as f64;
    let mut diag = SmcDiagnostics {
        betas: vec![0.0],
        ..Default::default()
    };
    let mut eps = kernel.initial_step();
    let mut var = 0.0;
    let mut beta = 0.0;
    let mut t = 0usize;
    while beta < 1.0 {
        sys.step = t + 1;
        let (next, adaptive) = match rule {
            ScheduleRule::Fixed(s) => (s.betas()[t + 1], false),
            ScheduleRule::Adaptive {
                ess_fraction,
                tol,
                max_steps,
            } => {
                if t >= *max_steps {
                    return Err(Error::Degenerate(format!(
                        "adaptive schedule did not reach beta = 1 in {max_steps} steps"
                    )));
                }
                let nb = adaptive_next_beta(&sys, path, beta, ess_fraction * n, *tol)?;
                if nb.flagged {
                    diag.flagged_steps.push(t + 1);
                }
                (nb.beta, true)
            }
        };
        let inc = energy_increments(path, &sys.positions, beta, next)?;
        sys.reweight(&inc)?;
        let ess = sys.ess();
        var += (1.0 / ess - 1.0 / n).max(0.0);
        diag.ess.push(ess);
        diag.betas.push(next);
        beta = next;
        t += 1;

        if beta < 1.0 {
            let resample = adaptive || ess < n / 2.0;
            if resample {
                sys.resample()?;
            }
            diag.resampled.push(resample);
            let slice = path.at(beta)?;
            let (a, e) = move_all(kernel, slice.as_ref(), &mut sys.positions, moves_per_step, eps, seed, t as u64);
            eps = e;
            diag.acceptance.push(a);
            diag.step_sizes.push(e);
        } else {
            diag.resampled.push(false);
            diag.acceptance.push(f64::NAN);
            diag.step_sizes.push(eps);
        }
    }
    Ok(SmcOutput {
        log_z: sys.log_z,
        stderr: var.sqrt(),
        diagnostics: diag,
        particles: sys,
    })
}
