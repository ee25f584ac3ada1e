//! Annealing paths between a normalized base `pi_0` and an unnormalized
//! target `pi_1`.
//!
//! [`QPath`] is the power-mean path of order `q`; its log-energy is always
//! evaluated from the endpoint log-densities, so raw densities and raw
//! importance weights are never formed. The parametric paths
//! ([`MomentPath`]) mix moments of Gaussian or Student-t endpoints in closed
//! form.

use crate::deformed_math::{log_add_exp, log_exp_q, stable_lnq_of_exp, OrderQ};
use crate::densities::{
    make_gaussian, make_student_t, DensityRef, Point, StudentTParams, UnnormalizedDensity,
};
use crate::error::{Error, Result};
use rand::RngCore;
use std::sync::Arc;

/// A beta-indexed family of unnormalized densities from a base to a target.
pub trait AnnealingPath: Send + Sync {
    fn dim(&self) -> usize;

    fn base(&self) -> &dyn UnnormalizedDensity;

    fn target(&self) -> &dyn UnnormalizedDensity;

    /// The intermediate unnormalized density at `beta` in `[0, 1]`.
    fn at(&self, beta: f64) -> Result<Box<dyn UnnormalizedDensity + '_>>;

    fn log_energy(&self, z: &[f64], beta: f64) -> Result<f64> {
        Ok(self.at(beta)?.log_density(z))
    }

    fn label(&self) -> String;

    /// `Some(q)` when the energy depends on `z` only through the endpoint
    /// log-densities via [`qpath_energy_from_logs`], letting callers cache them.
    fn endpoint_order(&self) -> Option<OrderQ> {
        None
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!("beta must lie in [0, 1], got {beta}")));
    }
    Ok(())
}

/// Log-energy of the order-`q` path at `beta` given the endpoint log-densities,
/// together with the weight `lambda` the target gradient receives in the
/// path gradient `(1 - lambda) grad log pi_0 + lambda grad log pi_1`.
///
/// `log pi_0 + (1/(1-q)) log[1 + (1-q) beta ln_q(pi_1/pi_0)]` with the
/// inner `ln_q` of the ratio taken in log space.
pub fn qpath_energy_from_logs(log_p0: f64, log_p1: f64, beta: f64, q: OrderQ) -> (f64, f64) {
    if beta == 0.0 {
        return (log_p0, 0.0);
    }
    if beta == 1.0 {
        return (log_p1, 1.0);
    }
    let finite0 = log_p0 > f64::NEG_INFINITY;
    let finite1 = log_p1 > f64::NEG_INFINITY;

    let Some(rho) = q.rho() else {
        if finite0 && finite1 {
            return (log_p0 + beta * (log_p1 - log_p0), beta);
        }
        return (f64::NEG_INFINITY, beta);
    };

    match (finite0, finite1) {
        (true, true) => {
            let log_w = log_p1 - log_p0;
            let x = log_w / rho;
            let log_bracket = if x.abs() <= 1.0 {
                // beta (1-q) ln_q(w) = beta expm1(x)
                (beta * stable_lnq_of_exp(log_w, q) / rho).ln_1p()
            } else {
                log_add_exp((1.0 - beta).ln(), beta.ln() + x)
            };
            if log_bracket.is_nan() {
                return (f64::NEG_INFINITY, beta);
            }
            let lambda = (beta.ln() + x - log_bracket).exp();
            (log_p0 + rho * log_bracket, lambda)
        }
        // Only one endpoint has mass: the power mean keeps it for q < 1 and
        // vanishes for q > 1.
        (false, true) if rho > 0.0 => (log_p1 + rho * beta.ln(), 1.0),
        (true, false) if rho > 0.0 => (log_p0 + rho * (1.0 - beta).ln(), 0.0),
        _ => (f64::NEG_INFINITY, beta),
    }
}

/// `log(pi_{beta,q}(z) / pi_0(z))` as a function of the log importance weight.
pub fn qpath_log_weight(log_w: f64, beta: f64, q: OrderQ) -> f64 {
    qpath_energy_from_logs(0.0, log_w, beta, q).0
}

/// The order-`q` power-mean path `[(1-beta) pi_0^{1-q} + beta pi_1^{1-q}]^{1/(1-q)}`.
#[derive(Clone)]
pub struct QPath {
    base: DensityRef,
    target: DensityRef,
    q: OrderQ,
}

impl QPath {
    pub fn new(base: DensityRef, target: DensityRef, q: OrderQ) -> Result<Self> {
        if base.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: target.dim(),
            });
        }
        Ok(QPath { base, target, q })
    }

    pub fn geometric(base: DensityRef, target: DensityRef) -> Result<Self> {
        QPath::new(base, target, OrderQ::GEOMETRIC)
    }

    pub fn q(&self) -> OrderQ {
        self.q
    }

    pub fn base_ref(&self) -> &DensityRef {
        &self.base
    }

    pub fn target_ref(&self) -> &DensityRef {
        &self.target
    }

    /// Sufficient statistic `ln_q(pi_1(z)/pi_0(z))` of the path's
    /// q-exponential family.
    pub fn statistic(&self, z: &[f64]) -> f64 {
        let log_w = self.target.log_density(z) - self.base.log_density(z);
        stable_lnq_of_exp(log_w, self.q)
    }

    pub fn log_density(&self, z: &[f64], beta: f64) -> Result<f64> {
        check_beta(beta)?;
        Ok(self.energy_unchecked(z, beta))
    }

    pub fn gradient(&self, z: &[f64], beta: f64) -> Result<Vec<f64>> {
        check_beta(beta)?;
        let (value, grad) = self.value_and_gradient_unchecked(z, beta);
        if value == f64::NEG_INFINITY || value.is_nan() {
            return Err(Error::ZeroMass);
        }
        Ok(grad)
    }

    fn energy_unchecked(&self, z: &[f64], beta: f64) -> f64 {
        if beta == 0.0 {
            return self.base.log_density(z);
        }
        if beta == 1.0 {
            return self.target.log_density(z);
        }
        let l0 = self.base.log_density(z);
        let l1 = self.target.log_density(z);
        qpath_energy_from_logs(l0, l1, beta, self.q).0
    }

    fn value_and_gradient_unchecked(&self, z: &[f64], beta: f64) -> (f64, Vec<f64>) {
        if beta == 0.0 {
            return self.base.value_and_gradient(z);
        }
        if beta == 1.0 {
            return self.target.value_and_gradient(z);
        }
        let (l0, g0) = self.base.value_and_gradient(z);
        let (l1, g1) = self.target.value_and_gradient(z);
        let (value, lambda) = qpath_energy_from_logs(l0, l1, beta, self.q);
        let grad = if lambda == 0.0 {
            g0
        } else if lambda == 1.0 {
            g1
        } else {
            g0.iter()
                .zip(&g1)
                .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
                .collect()
        };
        (value, grad)
    }
}

/// Free-function form of [`QPath::log_density`].
pub fn qpath_log_density(p: &QPath, z: &[f64], beta: f64) -> Result<f64> {
    p.log_density(z, beta)
}

/// Free-function form of [`QPath::gradient`].
pub fn qpath_gradient(p: &QPath, z: &[f64], beta: f64) -> Result<Vec<f64>> {
    p.gradient(z, beta)
}

struct QPathSlice<'a> {
    path: &'a QPath,
    beta: f64,
}

impl UnnormalizedDensity for QPathSlice<'_> {
    fn dim(&self) -> usize {
        self.path.base.dim()
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        self.path.energy_unchecked(z, self.beta)
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.path.value_and_gradient_unchecked(z, self.beta).1
    }

    fn value_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        self.path.value_and_gradient_unchecked(z, self.beta)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<Point> {
        match self.beta {
            0.0 => self.path.base.sample(rng),
            _ => None,
        }
    }

    fn has_exact_sampler(&self) -> bool {
        self.beta == 0.0 && self.path.base.has_exact_sampler()
    }
}

impl AnnealingPath for QPath {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn base(&self) -> &dyn UnnormalizedDensity {
        self.base.as_ref()
    }

    fn target(&self) -> &dyn UnnormalizedDensity {
        self.target.as_ref()
    }

    fn at(&self, beta: f64) -> Result<Box<dyn UnnormalizedDensity + '_>> {
        check_beta(beta)?;
        Ok(Box::new(QPathSlice { path: self, beta }))
    }

    fn log_energy(&self, z: &[f64], beta: f64) -> Result<f64> {
        self.log_density(z, beta)
    }

    fn endpoint_order(&self) -> Option<OrderQ> {
        Some(self.q)
    }

    fn label(&self) -> String {
        if self.q.is_geometric() {
            "geometric".into()
        } else {
            format!("qpath(q={})", self.q.value())
        }
    }
}

/// Natural parameters `(1-beta) theta_0 + beta theta_1` of the order-`q`
/// path between two members of the same order-`q` family.
pub fn same_family_qpath_params(
    theta0: &[f64],
    theta1: &[f64],
    beta: f64,
    _q: OrderQ,
) -> Result<Vec<f64>> {
    if theta0.len() != theta1.len() {
        return Err(Error::DimensionMismatch {
            expected: theta0.len(),
            got: theta1.len(),
        });
    }
    check_beta(beta)?;
    Ok(theta0
        .iter()
        .zip(theta1)
        .map(|(a, b)| a + beta * (b - a))
        .collect())
}

type LogBase = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type Statistics = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Unnormalized member `g(z) exp_q(theta . phi(z))` of a parametric
/// q-exponential family.
#[derive(Clone)]
pub struct QExpFamily {
    dim: usize,
    log_base: LogBase,
    stats: Statistics,
    theta: Vec<f64>,
    q: OrderQ,
}

impl QExpFamily {
    pub fn new(
        dim: usize,
        log_base: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        stats: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        theta: Vec<f64>,
        q: OrderQ,
    ) -> Self {
        QExpFamily {
            dim,
            log_base: Arc::new(log_base),
            stats: Arc::new(stats),
            theta,
            q,
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn q(&self) -> OrderQ {
        self.q
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.len(),
                got: theta.len(),
            });
        }
        Ok(QExpFamily {
            theta,
            ..self.clone()
        })
    }
}

impl UnnormalizedDensity for QExpFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        let phi = (self.stats)(z);
        let inner: f64 = self.theta.iter().zip(&phi).map(|(t, p)| t * p).sum();
        (self.log_base)(z) + log_exp_q(inner, self.q)
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        // numerical; the family is only used as a reference density
        let h = 1e-6;
        (0..z.len())
            .map(|j| {
                let mut up = z.to_vec();
                let mut dn = z.to_vec();
                up[j] += h;
                dn[j] -= h;
                (self.log_density(&up) - self.log_density(&dn)) / (2.0 * h)
            })
            .collect()
    }
}

/// Gaussian (`nu = None`) or Student-t (`nu = Some(_)`) endpoints for the
/// moment-averaged and escort-moment paths. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMomentPath {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub sigma0: Vec<f64>,
    pub sigma1: Vec<f64>,
    pub nu: Option<f64>,
}

/// Location and scale (covariance for Gaussians) of an intermediate distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianMomentPath {
    fn validate(&self) -> Result<usize> {
        let d = self.mu0.len();
        if d == 0 {
            return Err(Error::InvalidInput("empty mean".into()));
        }
        if self.mu1.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.mu1.len(),
            });
        }
        for s in [&self.sigma0, &self.sigma1] {
            if s.len() != d * d {
                return Err(Error::DimensionMismatch {
                    expected: d * d,
                    got: s.len(),
                });
            }
        }
        if let Some(nu) = self.nu {
            if !(nu > 0.0) {
                return Err(Error::Domain(format!("nu must be positive, got {nu}")));
            }
        }
        Ok(d)
    }

    fn mix(&self, beta: f64, spread: f64) -> Result<MomentParams> {
        let d = self.validate()?;
        check_beta(beta)?;
        let delta: Vec<f64> = self.mu1.iter().zip(&self.mu0).map(|(a, b)| a - b).collect();
        let mu = self
            .mu0
            .iter()
            .zip(&delta)
            .map(|(m, dm)| m + beta * dm)
            .collect();
        let outer = spread * beta * (1.0 - beta);
        let sigma = (0..d * d)
            .map(|k| {
                let (i, j) = (k / d, k % d);
                self.sigma0[k] + beta * (self.sigma1[k] - self.sigma0[k]) + outer * delta[i] * delta[j]
            })
            .collect();
        Ok(MomentParams { mu, sigma })
    }
}

/// Intermediate parameters whose (escort) mean and second moment are the
/// `beta`-mixture of the endpoints' (escort) mean and second moment.
///
/// For Student-t endpoints the escort of `t_nu(mu, Sigma)` is
/// `t_{nu+2}(mu, nu Sigma/(nu+2))`, whose covariance is exactly `Sigma`, so
/// the matched scale has the same form as the Gaussian moment-averaged
/// covariance: `(1-beta) Sigma_0 + beta Sigma_1 + beta (1-beta) dmu dmu^T`.
pub fn moment_path_params(p: &GaussianMomentPath, beta: f64) -> Result<MomentParams> {
    p.mix(beta, 1.0)
}

/// Student-t intermediate that matches the escort *scale matrices*
/// `nu Sigma/(nu+2) + mu mu^T` instead of escort second moments, giving the
/// spread factor `(nu+2)/nu` on the mean-difference term.
///
/// Equal to [`moment_path_params`] for Gaussian endpoints.
pub fn escort_scale_matched_params(p: &GaussianMomentPath, beta: f64) -> Result<MomentParams> {
    let spread = match p.nu {
        Some(nu) => (nu + 2.0) / nu,
        None => 1.0,
    };
    p.mix(beta, spread)
}

/// Which closed form a [`MomentPath`] uses for its intermediate scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMatching {
    /// [`moment_path_params`].
    SecondMoments,
    /// [`escort_scale_matched_params`].
    EscortScale,
}

/// Moment-averaged (Gaussian) or escort-moment (Student-t) path between
/// normalized endpoints, optionally with a constant log-scale on the target.
pub struct MomentPath {
    ends: GaussianMomentPath,
    matching: MomentMatching,
    base: Box<dyn UnnormalizedDensity>,
    target: Box<dyn UnnormalizedDensity>,
}

impl MomentPath {
    pub fn new(ends: GaussianMomentPath, matching: MomentMatching) -> Result<Self> {
        ends.validate()?;
        let base = build_family(&ends, ends.mu0.clone(), ends.sigma0.clone())?;
        let target = build_family(&ends, ends.mu1.clone(), ends.sigma1.clone())?;
        Ok(MomentPath {
            ends,
            matching,
            base,
            target,
        })
    }

    pub fn params(&self, beta: f64) -> Result<MomentParams> {
        match self.matching {
            MomentMatching::SecondMoments => moment_path_params(&self.ends, beta),
            MomentMatching::EscortScale => escort_scale_matched_params(&self.ends, beta),
        }
    }
}

fn build_family(
    ends: &GaussianMomentPath,
    mu: Vec<f64>,
    sigma: Vec<f64>,
) -> Result<Box<dyn UnnormalizedDensity>> {
    Ok(match ends.nu {
        None => Box::new(make_gaussian(mu, &sigma)?),
        Some(nu) => Box::new(make_student_t(StudentTParams { mu, sigma, nu })?),
    })
}

impl AnnealingPath for MomentPath {
    fn dim(&self) -> usize {
        self.ends.mu0.len()
    }

    fn base(&self) -> &dyn UnnormalizedDensity {
        self.base.as_ref()
    }

    fn target(&self) -> &dyn UnnormalizedDensity {
        self.target.as_ref()
    }

    fn at(&self, beta: f64) -> Result<Box<dyn UnnormalizedDensity + '_>> {
        check_beta(beta)?;
        if beta == 0.0 {
            return build_family(&self.ends, self.ends.mu0.clone(), self.ends.sigma0.clone());
        }
        if beta == 1.0 {
            return build_family(&self.ends, self.ends.mu1.clone(), self.ends.sigma1.clone());
        }
        let p = self.params(beta)?;
        build_family(&self.ends, p.mu, p.sigma)
    }

    fn label(&self) -> String {
        match (self.ends.nu, self.matching) {
            (None, _) => "moment".into(),
            (Some(_), MomentMatching::SecondMoments) => "escort".into(),
            (Some(_), MomentMatching::EscortScale) => "escort-scale".into(),
        }
    }
}
