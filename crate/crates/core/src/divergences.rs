//! Amari alpha-divergences and the extended KL divergence between
//! unnormalized measures on a common finite grid, plus a perturbation
//! certificate that the pointwise q-path minimizes the weighted
//! divergence to its endpoints.

use crate::deformed_math::{power_mean, OrderQ, WeightedInputs};
use crate::densities::GridDensity;
use crate::error::{Error, Result};
use crate::parallel::{map_units, stream};
use rand_distr::{Distribution, StandardNormal};

const KL_BRANCH: f64 = 1e-12;

/// Mixing weight `beta` and divergence order `alpha = 2q - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceWeights {
    beta: f64,
    alpha: f64,
}

impl DivergenceWeights {
    pub fn new(beta: f64, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Domain(format!("beta must lie in [0, 1], got {beta}")));
        }
        if !alpha.is_finite() {
            return Err(Error::Domain(format!("alpha must be finite, got {alpha}")));
        }
        Ok(DivergenceWeights { beta, alpha })
    }

    pub fn from_q(beta: f64, q: OrderQ) -> Result<Self> {
        Self::new(beta, 2.0 * q.value() - 1.0)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q(&self) -> f64 {
        (self.alpha + 1.0) / 2.0
    }
}

fn check_support(r: &GridDensity, p: &GridDensity) -> Result<()> {
    if !r.same_support(p) {
        return Err(Error::InvalidInput("grid densities live on different atoms".into()));
    }
    Ok(())
}

/// `4/(1-a^2) [ (1-a)/2 sum r + (1+a)/2 sum p - sum r^{(1-a)/2} p^{(1+a)/2} ]`.
///
/// Rejects `alpha = +-1`; use [`extended_kl`] for those limits
/// (`alpha -> -1` gives `extended_kl(r, p)`, `alpha -> 1` gives `extended_kl(p, r)`).
pub fn alpha_divergence(r: &GridDensity, p: &GridDensity, alpha: f64) -> Result<f64> {
    check_support(r, p)?;
    if (alpha.abs() - 1.0).abs() < KL_BRANCH {
        return Err(Error::Domain(format!(
            "alpha = {alpha} is a KL limit; use extended_kl"
        )));
    }
    let a = (1.0 - alpha) / 2.0;
    let b = (1.0 + alpha) / 2.0;
    let mut acc = 0.0;
    for (ri, pi) in r.mass().iter().zip(p.mass()) {
        if ri == pi {
            continue;
        }
        let cross = if *ri == 0.0 && a > 0.0 || *pi == 0.0 && b > 0.0 {
            0.0
        } else {
            (a * ri.ln() + b * pi.ln()).exp()
        };
        acc += a * ri + b * pi - cross;
    }
    Ok(acc / (a * b))
}

/// `sum r log(r/p) - sum r + sum p` over unnormalized masses.
pub fn extended_kl(r: &GridDensity, p: &GridDensity) -> Result<f64> {
    check_support(r, p)?;
    let mut acc = 0.0;
    for (ri, pi) in r.mass().iter().zip(p.mass()) {
        if *ri > 0.0 {
            if *pi == 0.0 {
                return Err(Error::Domain("r has mass where p has none".into()));
            }
            acc += ri * (ri / pi).ln();
        }
        acc += pi - ri;
    }
    Ok(acc)
}

/// `D` with endpoint first and candidate second, dispatching to the KL limits.
fn endpoint_divergence(pi: &GridDensity, r: &GridDensity, alpha: f64) -> Result<f64> {
    if (alpha + 1.0).abs() < KL_BRANCH {
        extended_kl(pi, r)
    } else if (alpha - 1.0).abs() < KL_BRANCH {
        extended_kl(r, pi)
    } else {
        alpha_divergence(pi, r, alpha)
    }
}

/// `(1-beta) D_alpha[pi_0 : r] + beta D_alpha[pi_1 : r]`.
pub fn variational_objective(
    r: &GridDensity,
    pi0: &GridDensity,
    pi1: &GridDensity,
    w: DivergenceWeights,
) -> Result<f64> {
    check_support(r, pi0)?;
    check_support(r, pi1)?;
    let mut total = 0.0;
    if w.beta < 1.0 {
        total += (1.0 - w.beta) * endpoint_divergence(pi0, r, w.alpha)?;
    }
    if w.beta > 0.0 {
        total += w.beta * endpoint_divergence(pi1, r, w.alpha)?;
    }
    Ok(total)
}

/// Pointwise q-path `[(1-beta) pi_0^{1-q} + beta pi_1^{1-q}]^{1/(1-q)}` on a grid.
pub fn qpath_grid(pi0: &GridDensity, pi1: &GridDensity, beta: f64, q: OrderQ) -> Result<GridDensity> {
    check_support(pi0, pi1)?;
    if beta == 0.0 {
        return Ok(pi0.clone());
    }
    if beta == 1.0 {
        return Ok(pi1.clone());
    }
    let mass = pi0
        .mass()
        .iter()
        .zip(pi1.mass())
        .map(|(a, b)| {
            let inputs = WeightedInputs::new(vec![*a, *b], vec![1.0 - beta, beta])?;
            Ok(power_mean(&inputs, q))
        })
        .collect::<Result<Vec<_>>>()?;
    pi0.with_mass(mass)
}

/// A perturbation that beat the claimed minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub trial: usize,
    pub epsilon: f64,
    pub perturbed: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub minimizer: GridDensity,
    pub objective: f64,
    /// Smallest `objective(perturbed) - objective(minimizer)` seen.
    pub min_margin: f64,
    /// Largest per-atom stationarity residual.
    pub residual: f64,
    pub violation: Option<Violation>,
}

impl Certificate {
    pub fn certified(&self) -> bool {
        self.violation.is_none() && self.residual < STATIONARITY_TOL
    }
}

pub const PERTURBATION_SCALES: [f64; 3] = [1e-3, 1e-2, 1e-1];
pub const STATIONARITY_TOL: f64 = 1e-10;

/// Check that the grid q-path at `beta` minimizes the weighted divergence
/// objective against `trials` random multiplicative perturbations
/// `r exp(eps noise)` at each scale in [`PERTURBATION_SCALES`], and that it
/// satisfies the stationarity condition `r^{1-q} = sum_i w_i pi_i^{1-q}`
/// (`log r = sum_i w_i log pi_i` at `q = 1`).
pub fn certify_argmin(
    pi0: &GridDensity,
    pi1: &GridDensity,
    beta: f64,
    q: OrderQ,
    trials: usize,
    seed: u64,
) -> Result<Certificate> {
    if pi0.mass().iter().chain(pi1.mass()).any(|m| !(*m > 0.0)) {
        return Err(Error::Domain("certification needs strictly positive grids".into()));
    }
    let w = DivergenceWeights::from_q(beta, q)?;
    let r = qpath_grid(pi0, pi1, beta, q)?;
    let base = variational_objective(&r, pi0, pi1, w)?;

    let residual = r
        .mass()
        .iter()
        .zip(pi0.mass().iter().zip(pi1.mass()))
        .map(|(ri, (a, b))| match q.rho() {
            None => ((1.0 - beta) * a.ln() + beta * b.ln() - ri.ln()).abs(),
            Some(rho) => {
                let e = 1.0 / rho;
                ((1.0 - beta) * a.powf(e) + beta * b.powf(e) - ri.powf(e)).abs()
            }
        })
        .fold(0.0, f64::max);

    let slack = 1e-13 * (1.0 + base.abs());
    let outcomes = map_units(trials, |t| -> Result<(f64, Option<Violation>)> {
        let mut rng = stream(seed, t as u64, 0);
        let noise: Vec<f64> = (0..r.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut margin = f64::INFINITY;
        for eps in PERTURBATION_SCALES {
            let mass: Vec<f64> = r
                .mass()
                .iter()
                .zip(&noise)
                .map(|(m, n)| m * (eps * n).exp())
                .collect();
            let cand = r.with_mass(mass)?;
            let obj = variational_objective(&cand, pi0, pi1, w)?;
            margin = margin.min(obj - base);
            if obj < base - slack {
                return Ok((
                    margin,
                    Some(Violation {
                        trial: t,
                        epsilon: eps,
                        perturbed: cand.mass().to_vec(),
                        objective: obj,
                    }),
                ));
            }
        }
        Ok((margin, None))
    });

    let mut min_margin = f64::INFINITY;
    let mut violation = None;
    for outcome in outcomes {
        let (m, v) = outcome?;
        min_margin = min_margin.min(m);
        if violation.is_none() {
            violation = v;
        }
    }
    Ok(Certificate {
        minimizer: r,
        objective: base,
        min_margin,
        residual,
        violation,
    })
}

/// Gaussian whose mean and variance mix the endpoints' normalized grid
/// moments with weights `(1-beta, beta)`, discretized on the (1-d) atoms and
/// scaled to the arithmetic mixture's total mass.
pub fn moment_average_candidate(
    pi0: &GridDensity,
    pi1: &GridDensity,
    beta: f64,
) -> Result<GridDensity> {
    check_support(pi0, pi1)?;
    if pi0.atoms().iter().any(|a| a.len() != 1) {
        return Err(Error::InvalidInput("moment candidate needs 1-d atoms".into()));
    }
    let xs: Vec<f64> = pi0.atoms().iter().map(|a| a[0]).collect();
    let moments = |g: &GridDensity| {
        let z = g.total();
        let m1 = xs.iter().zip(g.mass()).map(|(x, m)| x * m).sum::<f64>() / z;
        let m2 = xs.iter().zip(g.mass()).map(|(x, m)| x * x * m).sum::<f64>() / z;
        (m1, m2)
    };
    let (a1, a2) = moments(pi0);
    let (b1, b2) = moments(pi1);
    let mean = (1.0 - beta) * a1 + beta * b1;
    let var = (1.0 - beta) * a2 + beta * b2 - mean * mean;
    if !(var > 0.0) {
        return Err(Error::Degenerate("mixed variance is not positive".into()));
    }
    let raw: Vec<f64> = xs
        .iter()
        .map(|x| (-(x - mean).powi(2) / (2.0 * var)).exp())
        .collect();
    let raw_total: f64 = raw.iter().sum();
    let mass_total = (1.0 - beta) * pi0.total() + beta * pi1.total();
    pi0.with_mass(raw.iter().map(|m| m * mass_total / raw_total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn grid(m: &[f64]) -> GridDensity {
        GridDensity::from_masses(m.to_vec()).unwrap()
    }

    fn q(v: f64) -> OrderQ {
        OrderQ::new(v).unwrap()
    }

    #[test]
    fn self_divergence_is_zero() {
        let p = grid(&[0.3, 1.2, 2.5]);
        for a in [-3.0, -0.5, 0.0, 0.4, 2.0] {
            assert!(alpha_divergence(&p, &p, a).unwrap().abs() < 1e-15);
        }
        assert_eq!(extended_kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_limit_example() {
        let r = grid(&[1.0, 1.0]);
        let p = grid(&[E, E]);
        let kl = extended_kl(&r, &p).unwrap();
        assert!((kl - (2.0 * E - 4.0)).abs() < 1e-14);
        let near = alpha_divergence(&r, &p, -1.0 + 1e-7).unwrap();
        assert!((near - kl).abs() < 1e-5);
        assert!(alpha_divergence(&r, &p, -1.0).is_err());
        assert!(alpha_divergence(&r, &p, 1.0).is_err());
    }

    #[test]
    fn unnormalized_scaling_matters() {
        let p = grid(&[0.2, 0.8]);
        let two_p = grid(&[0.4, 1.6]);
        assert!(alpha_divergence(&two_p, &p, 0.0).unwrap() > 0.0);
    }

    #[test]
    fn normalized_extended_kl_is_standard_kl() {
        let r = grid(&[0.25, 0.75]);
        let p = grid(&[0.5, 0.5]);
        let kl = 0.25 * (0.5f64).ln() + 0.75 * (1.5f64).ln();
        assert!((extended_kl(&r, &p).unwrap() - kl).abs() < 1e-15);
    }

    #[test]
    fn support_violation() {
        let r = grid(&[1.0, 1.0]);
        let p = grid(&[1.0, 0.0]);
        assert!(matches!(extended_kl(&r, &p), Err(Error::Domain(_))));
    }

    #[test]
    fn objective_examples() {
        let p = grid(&[0.5, 1.0, 2.0]);
        let w = DivergenceWeights::from_q(0.5, q(0.5)).unwrap();
        assert_eq!(variational_objective(&p, &p, &p, w).unwrap(), 0.0);

        let r = grid(&[1.0, 1.0, 1.0]);
        let w0 = DivergenceWeights::from_q(0.0, q(0.5)).unwrap();
        let d0 = alpha_divergence(&p, &r, 0.0).unwrap();
        assert_eq!(variational_objective(&r, &p, &grid(&[3.0, 3.0, 3.0]), w0).unwrap(), d0);
    }

    #[test]
    fn certificate_two_atoms() {
        let pi0 = grid(&[0.4, 1.3]);
        let pi1 = grid(&[2.0, 0.7]);
        let c = certify_argmin(&pi0, &pi1, 0.5, q(0.5), 500, 11).unwrap();
        assert!(c.certified(), "{c:?}");
        assert!(c.min_margin >= 0.0);
    }

    #[test]
    fn beta_zero_minimizer_is_base() {
        let pi0 = grid(&[0.4, 1.3, 0.9]);
        let pi1 = grid(&[2.0, 0.7, 0.1]);
        let c = certify_argmin(&pi0, &pi1, 0.0, q(0.3), 50, 1).unwrap();
        assert_eq!(c.minimizer, pi0);
        assert_eq!(c.objective, 0.0);
    }

    #[test]
    fn mixture_beats_moment_average_at_q0() {
        let pi0 = grid(&[2.0, 0.5, 0.1, 0.05]);
        let pi1 = grid(&[0.1, 0.2, 1.0, 3.0]);
        let w = DivergenceWeights::from_q(0.3, q(0.0)).unwrap();
        let mix = qpath_grid(&pi0, &pi1, 0.3, q(0.0)).unwrap();
        let expected: Vec<f64> = pi0
            .mass()
            .iter()
            .zip(pi1.mass())
            .map(|(a, b)| 0.7 * a + 0.3 * b)
            .collect();
        for (m, e) in mix.mass().iter().zip(&expected) {
            assert!((m - e).abs() < 1e-14);
        }
        let cand = moment_average_candidate(&pi0, &pi1, 0.3).unwrap();
        let a = variational_objective(&mix, &pi0, &pi1, w).unwrap();
        let b = variational_objective(&cand, &pi0, &pi1, w).unwrap();
        assert!(a < b);
    }
}
