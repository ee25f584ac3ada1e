//! Beta schedules (linear and ESS-adaptive) and the choice of the order `q`:
//! a log-spaced `delta = 1 - q` grid and the ESS-matching heuristic.

use crate::deformed_math::{rho_from_log_weights, OrderQ};
use crate::densities::Point;
use crate::error::{Error, Result};
use crate::parallel::{map_units, stream};
use crate::paths::{qpath_energy_from_logs, qpath_log_weight, AnnealingPath};
use crate::samplers::{ess_of_log_weights, ParticleSystem};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Strictly increasing betas from exactly 0 to exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Schedule {
    betas: Vec<f64>,
}

impl Schedule {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::InvalidInput("a schedule needs at least two betas".into()));
        }
        if betas[0] != 0.0 || *betas.last().unwrap() != 1.0 {
            return Err(Error::InvalidInput("a schedule must start at 0 and end at 1".into()));
        }
        if betas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("betas must be strictly increasing".into()));
        }
        Ok(Schedule { betas })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// Number of points, `K + 1`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of transitions `K`.
    pub fn steps(&self) -> usize {
        self.betas.len() - 1
    }
}

impl TryFrom<Vec<f64>> for Schedule {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Schedule::new(v)
    }
}

impl From<Schedule> for Vec<f64> {
    fn from(s: Schedule) -> Vec<f64> {
        s.betas
    }
}

/// `K + 1` equally spaced betas `t / K`.
pub fn linear_schedule(k: usize) -> Result<Schedule> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    Schedule::new((0..=k).map(|t| t as f64 / k as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NextBeta {
    pub beta: f64,
    /// ESS of the incremental weights at `beta`.
    pub ess: f64,
    /// Set when bisection stopped without reaching the tolerance.
    pub flagged: bool,
}

const BISECTION_STEPS: usize = 200;

/// Next beta whose incremental-weight ESS is within `tol` of `ess_target`,
/// by bisection on `(beta_now, 1]`; 1 when even the full step keeps the ESS
/// at or above the target.
pub fn adaptive_next_beta(
    system: &ParticleSystem,
    path: &dyn AnnealingPath,
    beta_now: f64,
    ess_target: f64,
    tol: f64,
) -> Result<NextBeta> {
    if !(0.0..1.0).contains(&beta_now) {
        return Err(Error::Domain(format!("beta_now must lie in [0, 1), got {beta_now}")));
    }
    let zs = &system.positions;
    let ess_at: Box<dyn Fn(f64) -> Result<f64> + '_> = match path.endpoint_order() {
        Some(q) => {
            let logs: Vec<(f64, f64)> = map_units(zs.len(), |i| {
                (path.base().log_density(&zs[i]), path.target().log_density(&zs[i]))
            });
            let now: Vec<f64> = logs
                .iter()
                .map(|(l0, l1)| qpath_energy_from_logs(*l0, *l1, beta_now, q).0)
                .collect();
            Box::new(move |b| {
                let inc: Vec<f64> = logs
                    .iter()
                    .zip(&now)
                    .map(|((l0, l1), e0)| increment(qpath_energy_from_logs(*l0, *l1, b, q).0, *e0))
                    .collect();
                Ok(ess_of_log_weights(&inc))
            })
        }
        None => {
            let s0 = path.at(beta_now)?;
            let now: Vec<f64> = map_units(zs.len(), |i| s0.log_density(&zs[i]));
            Box::new(move |b| {
                let s1 = path.at(b)?;
                let inc = map_units(zs.len(), |i| increment(s1.log_density(&zs[i]), now[i]));
                Ok(ess_of_log_weights(&inc))
            })
        }
    };
    bisect_beta(&*ess_at, beta_now, ess_target, tol)
}

fn increment(e1: f64, e0: f64) -> f64 {
    if e1 == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        e1 - e0
    }
}

fn bisect_beta(
    ess_at: &dyn Fn(f64) -> Result<f64>,
    beta_now: f64,
    target: f64,
    tol: f64,
) -> Result<NextBeta> {
    let ess_one = ess_at(1.0)?;
    if ess_one >= target {
        return Ok(NextBeta {
            beta: 1.0,
            ess: ess_one,
            flagged: false,
        });
    }
    let (mut lo, mut hi) = (beta_now, 1.0);
    let mut hi_ess = ess_one;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let e = ess_at(mid)?;
        if (e - target).abs() <= tol {
            return Ok(NextBeta {
                beta: mid,
                ess: e,
                flagged: false,
            });
        }
        if e > target {
            lo = mid;
        } else {
            hi = mid;
            hi_ess = e;
        }
    }
    Ok(NextBeta {
        beta: hi,
        ess: hi_ess,
        flagged: (hi_ess - target).abs() > tol,
    })
}

/// `count` orders `q = 1 - delta` with `delta` log-spaced over
/// `[delta_min, delta_max]`, in descending `q`.
pub fn q_grid(count: usize, delta_min: f64, delta_max: f64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidInput("grid needs at least one point".into()));
    }
    if !(delta_min > 0.0 && delta_min < delta_max && delta_max < 1.0) {
        return Err(Error::Domain(format!(
            "need 0 < delta_min < delta_max < 1, got [{delta_min}, {delta_max}]"
        )));
    }
    if count == 1 {
        return Ok(vec![1.0 - delta_min]);
    }
    let (a, b) = (delta_min.log10(), delta_max.log10());
    Ok((0..count)
        .map(|i| {
            let delta = match i {
                0 => delta_min,
                _ if i == count - 1 => delta_max,
                _ => 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64),
            };
            1.0 - delta
        })
        .collect())
}

/// Twenty orders with `delta` from `1e-5` to `1e-1`.
pub fn default_q_grid() -> Vec<f64> {
    q_grid(20, 1e-5, 1e-1).expect("static bounds are valid")
}

/// Restarts, spread of the `log10 rho` restarts and the ESS target as a
/// fraction of the sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    pub restarts: usize,
    pub log10_sd: f64,
    pub ess_target_fraction: f64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        HeuristicConfig {
            restarts: 100,
            log10_sd: 0.1,
            ess_target_fraction: 0.5,
        }
    }
}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.restarts == 0 {
            bad.push("restarts must be at least 1".to_string());
        }
        if !(self.log10_sd >= 0.0 && self.log10_sd.is_finite()) {
            bad.push(format!("log10_sd must be a nonnegative real, got {}", self.log10_sd));
        }
        if !(self.ess_target_fraction > 0.0 && self.ess_target_fraction <= 1.0) {
            bad.push(format!(
                "ess_target_fraction must lie in (0, 1], got {}",
                self.ess_target_fraction
            ));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicResult {
    pub q: f64,
    pub beta1: f64,
    pub loss: f64,
    pub ess: f64,
    pub feasible: bool,
    /// Restart that produced the answer; `None` for the initialization.
    pub restart: Option<usize>,
}

const LOG10_DELTA_MIN: f64 = -10.0;
const LOG10_DELTA_MAX: f64 = 0.0;
const BETA_MIN: f64 = 1e-12;
const MAX_SWEEPS: usize = 50;
const SWEEP_TOL: f64 = 1e-6;
const LINE_TOL: f64 = 1e-12;

/// ESS of the path weights `pi_{beta,q}(z_i)/pi_0(z_i)` built from the
/// log importance ratios `log_ws`.
pub fn ess_at(log_ws: &[f64], beta: f64, q: OrderQ) -> f64 {
    let lw: Vec<f64> = log_ws.iter().map(|l| qpath_log_weight(*l, beta, q)).collect();
    ess_of_log_weights(&lw)
}

/// `(ESS(beta, q) - target)^2`.
pub fn ess_loss(log_ws: &[f64], beta: f64, q: OrderQ, target: f64) -> f64 {
    (ess_at(log_ws, beta, q) - target).powi(2)
}

fn order_from_log10_delta(s: f64) -> OrderQ {
    OrderQ::new(1.0 - 10f64.powf(s)).expect("finite order")
}

/// Golden-section minimization of `f` on `[a, b]`.
fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Coordinate descent on `(beta, log10 delta)` from a starting point.
fn descend(log_ws: &[f64], target: f64, beta0: f64, s0: f64) -> (f64, f64, f64) {
    let loss = |b: f64, s: f64| ess_loss(log_ws, b, order_from_log10_delta(s), target);
    let (mut beta, mut s) = (beta0, s0.clamp(LOG10_DELTA_MIN, LOG10_DELTA_MAX));
    let mut best = loss(beta, s);
    for _ in 0..MAX_SWEEPS {
        if best == 0.0 {
            break;
        }
        let (b_new, l_b) = golden_section(&|b| loss(b, s), BETA_MIN, 1.0, LINE_TOL);
        let moved_b = if l_b < best {
            let m = (b_new - beta).abs();
            beta = b_new;
            best = l_b;
            m
        } else {
            0.0
        };
        let (s_new, l_s) = golden_section(&|x| loss(beta, x), LOG10_DELTA_MIN, LOG10_DELTA_MAX, LINE_TOL);
        let moved_s = if l_s < best {
            let m = (s_new - s).abs();
            s = s_new;
            best = l_s;
            m
        } else {
            0.0
        };
        if moved_b.max(moved_s) < SWEEP_TOL {
            break;
        }
    }
    (beta, s, best)
}

/// Choose `(beta_1, q)` so that the ESS of the first-step path weights
/// matches `ess_target_fraction * N`.
///
/// Starts from `rho_0 = max_i |log w_i|`, `q_0 = 1 - 1/rho_0`, `beta = 1`;
/// each restart draws `log10 rho ~ Normal(log10 rho_0, log10_sd)` and runs
/// coordinate descent with golden-section line searches. The lowest loss
/// wins, ties going to the lowest restart index.
pub fn ess_heuristic_q(log_ws: &[f64], cfg: &HeuristicConfig, seed: u64) -> Result<HeuristicResult> {
    cfg.validate()?;
    let choice = rho_from_log_weights(log_ws)?;
    let n = log_ws.len() as f64;
    let target = cfg.ess_target_fraction * n;
    let feasible_loss = (0.05 * target).powi(2);

    let init_loss = ess_loss(log_ws, 1.0, choice.q, target);
    let init = HeuristicResult {
        q: choice.q.value(),
        beta1: 1.0,
        loss: init_loss,
        ess: ess_at(log_ws, 1.0, choice.q),
        feasible: init_loss < feasible_loss,
        restart: None,
    };
    let spread = log_ws.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - log_ws.iter().copied().fold(f64::INFINITY, f64::min);
    if spread == 0.0 {
        return Ok(HeuristicResult {
            feasible: false,
            ..init
        });
    }
    if init_loss <= (1e-12 * target).powi(2) {
        return Ok(init);
    }

    let center = choice.rho.log10();
    let normal = Normal::new(center, cfg.log10_sd)
        .map_err(|e| Error::InvalidInput(format!("restart distribution: {e}")))?;
    let runs = map_units(cfg.restarts, |m| {
        let mut rng = stream(seed, m as u64, 0);
        let log10_rho = normal.sample(&mut rng);
        // delta = 1/rho
        let (beta, s, loss) = descend(log_ws, target, 1.0, -log10_rho);
        (beta, s, loss)
    });

    let mut best: Option<(usize, f64, f64, f64)> = None;
    for (m, (beta, s, loss)) in runs.into_iter().enumerate() {
        if best.is_none_or(|(_, _, _, l)| loss < l) {
            best = Some((m, beta, s, loss));
        }
    }
    let (m, beta, s, loss) = best.expect("at least one restart");
    if !(loss < init_loss) {
        return Ok(init);
    }
    let q = order_from_log10_delta(s);
    Ok(HeuristicResult {
        q: q.value(),
        beta1: beta,
        loss,
        ess: ess_at(log_ws, beta, q),
        feasible: loss < feasible_loss,
        restart: Some(m),
    })
}

/// Log importance ratios `log pi_1(z) - log pi_0(z)` at the given points.
pub fn log_importance_ratios(path: &dyn AnnealingPath, zs: &[Point]) -> Vec<f64> {
    map_units(zs.len(), |i| {
        path.target().log_density(&zs[i]) - path.base().log_density(&zs[i])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{gaussian_1d, DensityRef};
    use crate::paths::QPath;
    use std::sync::Arc;

    #[test]
    fn linear_examples() {
        assert_eq!(linear_schedule(1).unwrap().betas(), &[0.0, 1.0]);
        assert_eq!(linear_schedule(2).unwrap().betas(), &[0.0, 0.5, 1.0]);
        let s = linear_schedule(10).unwrap();
        assert_eq!(s.len(), 11);
        for w in s.betas().windows(2) {
            assert!((w[1] - w[0] - 0.1).abs() < 1e-12);
        }
        assert!(linear_schedule(0).is_err());
        assert!(Schedule::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Schedule::new(vec![0.1, 1.0]).is_err());
    }

    #[test]
    fn q_grid_examples() {
        let g = q_grid(2, 1e-5, 1e-1).unwrap();
        assert_eq!(g, vec![1.0 - 1e-5, 1.0 - 1e-1]);
        assert_eq!(q_grid(1, 1e-5, 1e-1).unwrap(), vec![1.0 - 1e-5]);
        let d = default_q_grid();
        assert_eq!(d.len(), 20);
        assert!(d.windows(2).all(|w| w[0] > w[1]));
        assert!(q_grid(3, 1e-1, 1e-5).is_err());
        assert!(q_grid(3, 0.0, 1e-1).is_err());
    }

    fn particles(zs: Vec<Point>) -> ParticleSystem {
        let n = zs.len();
        ParticleSystem {
            positions: zs,
            log_weights: vec![0.0; n],
            log_z: 0.0,
            seed: 0,
            step: 0,
        }
    }

    #[test]
    fn adaptive_caps_at_one() {
        let g: DensityRef = Arc::new(gaussian_1d(0.0, 1.0).unwrap());
        let path = QPath::geometric(g.clone(), g).unwrap();
        let sys = particles(vec![vec![0.1], vec![-2.0], vec![3.0]]);
        let nb = adaptive_next_beta(&sys, &path, 0.0, 1.5, 1e-9).unwrap();
        assert_eq!(nb.beta, 1.0);
    }

    #[test]
    fn adaptive_two_particle_closed_form() {
        // bisection contract on ESS(b) = (1 + 3^b)^2 / (1 + 9^b)
        let ess = |b: f64| Ok((1.0 + 3f64.powf(b)).powi(2) / (1.0 + 9f64.powf(b)));
        let nb = bisect_beta(&ess, 0.0, 1.0, 1e-9).unwrap();
        assert_eq!(nb.beta, 1.0);
        let nb = bisect_beta(&ess, 0.0, 1.8, 1e-9).unwrap();
        assert!((ess(nb.beta).unwrap() - 1.8).abs() <= 1e-9);
        assert!(!nb.flagged);
    }

    #[test]
    fn heuristic_degenerate_weights() {
        let cfg = HeuristicConfig::default();
        let r = ess_heuristic_q(&[0.7; 10], &cfg, 1).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.beta1, 1.0);
        assert!((r.loss - 25.0).abs() < 1e-9);
    }

    #[test]
    fn heuristic_reaches_target() {
        let lw: Vec<f64> = (0..200).map(|i| -8.0 + 16.0 * (i as f64 / 199.0).powi(3)).collect();
        let cfg = HeuristicConfig {
            restarts: 8,
            ..Default::default()
        };
        let r = ess_heuristic_q(&lw, &cfg, 5).unwrap();
        assert!(r.feasible, "{r:?}");
        assert!((r.ess - 100.0).abs() <= 5.0);
        let again = ess_heuristic_q(&lw, &cfg, 5).unwrap();
        assert_eq!(r, again);
    }
}
