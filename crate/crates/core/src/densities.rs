//! Endpoint density families: Gaussian, Student-t, generalized Pareto, the
//! Bayesian logistic-regression posterior, finite discrete densities and grid
//! discretizations.
//!
//! Every family evaluates log-densities (with `-inf` outside the support) and
//! analytic gradients. Exact samplers take a caller-supplied RNG.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::{Rng, RngCore};
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// A point in `R^d`.
pub type Point = Vec<f64>;

/// An unnormalized log-density on `R^d`.
pub trait UnnormalizedDensity: Send + Sync {
    fn dim(&self) -> usize;

    /// Log-density, `-inf` where the density is zero.
    fn log_density(&self, z: &[f64]) -> f64;

    /// Gradient of the log-density; only meaningful where it is finite.
    fn gradient(&self, z: &[f64]) -> Vec<f64>;

    fn value_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        (self.log_density(z), self.gradient(z))
    }

    /// Draw from the normalized density, when an exact sampler exists.
    fn sample(&self, _rng: &mut dyn RngCore) -> Option<Point> {
        None
    }

    fn has_exact_sampler(&self) -> bool {
        false
    }

    /// `log Z` of the density, when known.
    fn known_log_normalizer(&self) -> Option<f64> {
        None
    }
}

pub type DensityRef = Arc<dyn UnnormalizedDensity>;

/// Symmetric positive-definite matrix with its Cholesky factor and inverse,
/// stored row-major for allocation-free quadratic forms.
#[derive(Clone)]
struct SpdMatrix {
    dim: usize,
    matrix: Vec<f64>,
    chol: Vec<f64>,
    inverse: Vec<f64>,
    log_det: f64,
}

impl SpdMatrix {
    fn new(dim: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: rows.len(),
            });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        let m = DMatrix::from_row_slice(dim, dim, rows);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * m.amax().max(1.0) {
            return Err(Error::InvalidInput("matrix is not symmetric".into()));
        }
        let chol = m
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("matrix is not positive definite".into()))?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let inv = chol.inverse();
        let to_rows = |a: &DMatrix<f64>| -> Vec<f64> {
            (0..dim)
                .flat_map(|i| (0..dim).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)])
                .collect()
        };
        Ok(SpdMatrix {
            dim,
            matrix: rows.to_vec(),
            chol: to_rows(&l),
            inverse: to_rows(&inv),
            log_det,
        })
    }

    /// `Sigma^{-1} (z - mu)` and the quadratic form `(z-mu)^T Sigma^{-1} (z-mu)`.
    fn whiten(&self, z: &[f64], mu: &[f64]) -> (Vec<f64>, f64) {
        let d = self.dim;
        let prec_diff: Vec<f64> = self
            .inverse
            .chunks_exact(d)
            .map(|row| {
                row.iter()
                    .zip(z.iter().zip(mu))
                    .map(|(p, (zj, mj))| p * (zj - mj))
                    .sum()
            })
            .collect();
        let quad = prec_diff
            .iter()
            .zip(z.iter().zip(mu))
            .map(|(p, (zj, mj))| p * (zj - mj))
            .sum();
        (prec_diff, quad)
    }

    /// `L eps` for the lower Cholesky factor `L`.
    fn scale(&self, eps: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| (0..=i).map(|j| self.chol[i * d + j] * eps[j]).sum())
            .collect()
    }
}

fn check_point(z: &[f64], dim: usize) {
    debug_assert_eq!(z.len(), dim, "point dimension mismatch");
}

/// Multivariate normal `N(mu, Sigma)`, normalized.
#[derive(Clone)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: SpdMatrix,
    log_norm_const: f64,
}

impl Gaussian {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Covariance, row-major.
    pub fn covariance(&self) -> &[f64] {
        &self.cov.matrix
    }
}

impl fmt::Debug for Gaussian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gaussian")
            .field("mean", &self.mean)
            .field("cov", &self.cov.matrix)
            .finish()
    }
}

/// Gaussian with mean `mu` and covariance `sigma` (row-major `d x d`).
pub fn make_gaussian(mu: Vec<f64>, sigma: &[f64]) -> Result<Gaussian> {
    let d = mu.len();
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let cov = SpdMatrix::new(d, sigma)?;
    let log_norm_const = -0.5 * (d as f64) * (2.0 * PI).ln() - 0.5 * cov.log_det;
    Ok(Gaussian {
        mean: mu,
        cov,
        log_norm_const,
    })
}

/// Isotropic 1-d convenience: `N(mean, variance)`.
pub fn gaussian_1d(mean: f64, variance: f64) -> Result<Gaussian> {
    make_gaussian(vec![mean], &[variance])
}

impl UnnormalizedDensity for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        check_point(z, self.dim());
        let (_, quad) = self.cov.whiten(z, &self.mean);
        self.log_norm_const - 0.5 * quad
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let (prec_diff, _) = self.cov.whiten(z, &self.mean);
        prec_diff.into_iter().map(|v| -v).collect()
    }

    fn value_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let (prec_diff, quad) = self.cov.whiten(z, &self.mean);
        (
            self.log_norm_const - 0.5 * quad,
            prec_diff.into_iter().map(|v| -v).collect(),
        )
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<Point> {
        let eps: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let shift = self.cov.scale(&eps);
        Some(self.mean.iter().zip(shift).map(|(m, s)| m + s).collect())
    }

    fn has_exact_sampler(&self) -> bool {
        true
    }

    fn known_log_normalizer(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Location, scale matrix (row-major) and degrees of freedom of a Student-t.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentTParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub nu: f64,
}

/// Multivariate Student-t `t_nu(mu, Sigma)`, normalized.
#[derive(Clone)]
pub struct StudentT {
    mu: Vec<f64>,
    nu: f64,
    scale: SpdMatrix,
    log_norm_const: f64,
    chi2: ChiSquared<f64>,
}

impl StudentT {
    pub fn mean(&self) -> &[f64] {
        &self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Scale matrix, row-major.
    pub fn scale_matrix(&self) -> &[f64] {
        &self.scale.matrix
    }
}

impl fmt::Debug for StudentT {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StudentT")
            .field("mu", &self.mu)
            .field("sigma", &self.scale.matrix)
            .field("nu", &self.nu)
            .finish()
    }
}

pub fn make_student_t(p: StudentTParams) -> Result<StudentT> {
    let d = p.mu.len();
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    if !(p.nu > 0.0) || !p.nu.is_finite() {
        return Err(Error::Domain(format!("nu must be positive and finite, got {}", p.nu)));
    }
    let scale = SpdMatrix::new(d, &p.sigma)?;
    let df = d as f64;
    // log of 1/Z(nu, Sigma)
    let log_norm_const = ln_gamma((p.nu + df) / 2.0)
        - ln_gamma(p.nu / 2.0)
        - 0.5 * scale.log_det
        - 0.5 * df * p.nu.ln()
        - 0.5 * df * PI.ln();
    let chi2 = ChiSquared::new(p.nu).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(StudentT {
        mu: p.mu,
        nu: p.nu,
        scale,
        log_norm_const,
        chi2,
    })
}

impl UnnormalizedDensity for StudentT {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        check_point(z, self.dim());
        let (_, quad) = self.scale.whiten(z, &self.mu);
        let df = self.dim() as f64;
        self.log_norm_const - 0.5 * (self.nu + df) * (quad / self.nu).ln_1p()
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.value_and_gradient(z).1
    }

    fn value_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let (prec_diff, quad) = self.scale.whiten(z, &self.mu);
        let df = self.dim() as f64;
        let value = self.log_norm_const - 0.5 * (self.nu + df) * (quad / self.nu).ln_1p();
        let factor = -(self.nu + df) / (self.nu + quad);
        (value, prec_diff.into_iter().map(|v| factor * v).collect())
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<Point> {
        let eps: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let shift = self.scale.scale(&eps);
        let w: f64 = self.chi2.sample(rng);
        let inv = (self.nu / w).sqrt();
        Some(self.mu.iter().zip(shift).map(|(m, s)| m + s * inv).collect())
    }

    fn has_exact_sampler(&self) -> bool {
        true
    }

    fn known_log_normalizer(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Order `q = (nu + d + 2)/(nu + d)` of a `d`-dimensional Student-t.
pub fn q_from_nu(nu: f64, d: usize) -> Result<f64> {
    if !(nu > 0.0) || d == 0 {
        return Err(Error::Domain(format!("need nu > 0 and d >= 1, got nu={nu}, d={d}")));
    }
    if nu.is_infinite() {
        return Ok(1.0);
    }
    let s = nu + d as f64;
    Ok((s + 2.0) / s)
}

/// Degrees of freedom `nu = (d - d q + 2)/(q - 1)` for order `q`.
pub fn nu_from_q(q: f64, d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain("d must be at least 1".into()));
    }
    if !(q > 1.0) {
        return Err(Error::Domain(format!("Student-t order needs q > 1, got {q}")));
    }
    let df = d as f64;
    let nu = (df - df * q + 2.0) / (q - 1.0);
    if !(nu > 0.0) {
        return Err(Error::Domain(format!("q = {q} gives nonpositive nu in d = {d}")));
    }
    Ok(nu)
}

/// Threshold, scale and shape of a generalized Pareto distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParetoParams {
    pub x_min: f64,
    pub sigma: f64,
    pub xi: f64,
}

/// Generalized Pareto density on its support, `-inf` log-density outside.
#[derive(Debug, Clone, Copy)]
pub struct Pareto {
    p: ParetoParams,
}

pub fn make_pareto(p: ParetoParams) -> Result<Pareto> {
    if !(p.sigma > 0.0) || !p.sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be positive, got {}", p.sigma)));
    }
    if !p.x_min.is_finite() || !p.xi.is_finite() {
        return Err(Error::Domain("x_min and xi must be finite".into()));
    }
    Ok(Pareto { p })
}

impl Pareto {
    pub fn params(&self) -> ParetoParams {
        self.p
    }

    fn standardized(&self, x: f64) -> Option<f64> {
        let t = (x - self.p.x_min) / self.p.sigma;
        if t < 0.0 {
            return None;
        }
        if self.p.xi < 0.0 && 1.0 + self.p.xi * t <= 0.0 {
            return None;
        }
        Some(t)
    }
}

impl UnnormalizedDensity for Pareto {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        check_point(z, 1);
        let Some(t) = self.standardized(z[0]) else {
            return f64::NEG_INFINITY;
        };
        let xi = self.p.xi;
        if xi == 0.0 {
            -self.p.sigma.ln() - t
        } else {
            -self.p.sigma.ln() - (1.0 / xi + 1.0) * (xi * t).ln_1p()
        }
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let Some(t) = self.standardized(z[0]) else {
            return vec![f64::NAN];
        };
        let xi = self.p.xi;
        vec![-(1.0 + xi) / (self.p.sigma * (1.0 + xi * t))]
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<Point> {
        // inverse of the tail function P(X > x) = u
        let u: f64 = 1.0 - rng.random::<f64>();
        let xi = self.p.xi;
        let t = if xi == 0.0 {
            -u.ln()
        } else {
            (-xi * u.ln()).exp_m1() / xi
        };
        Some(vec![self.p.x_min + self.p.sigma * t])
    }

    fn has_exact_sampler(&self) -> bool {
        true
    }

    fn known_log_normalizer(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Order `q = (2 xi + 1)/(xi + 1)` of a generalized Pareto with shape `xi`.
pub fn q_from_xi(xi: f64) -> Result<f64> {
    if xi == -1.0 || !xi.is_finite() {
        return Err(Error::Domain(format!("no order for xi = {xi}")));
    }
    Ok((2.0 * xi + 1.0) / (xi + 1.0))
}

/// Shape `xi = (1 - q)/(q - 2)` for order `q`.
pub fn xi_from_q(q: f64) -> Result<f64> {
    if q == 2.0 || !q.is_finite() {
        return Err(Error::Domain(format!("no Pareto shape for q = {q}")));
    }
    Ok((1.0 - q) / (q - 2.0))
}

/// Bayesian logistic regression data: design matrix (intercept included),
/// binary labels and the prior standard deviation of each coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    n: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    prior_sd: f64,
}

impl LogisticModel {
    /// `rows` are the design-matrix rows (intercept already included).
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>, prior_sd: f64) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if !(prior_sd > 0.0) || !prior_sd.is_finite() {
            return Err(Error::Domain(format!("prior_sd must be positive, got {prior_sd}")));
        }
        if labels.iter().any(|y| *y > 1) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("ragged design matrix".into()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature".into()));
        }
        Ok(LogisticModel {
            n: rows.len(),
            d,
            features: rows.into_iter().flatten().collect(),
            labels: labels.into_iter().map(f64::from).collect(),
            prior_sd,
        })
    }

    /// Model with no data and `dim` coefficients.
    pub fn empty(dim: usize, prior_sd: f64) -> Result<Self> {
        let mut m = LogisticModel::new(vec![], vec![], prior_sd)?;
        m.d = dim;
        Ok(m)
    }

    pub fn n_data(&self) -> usize {
        self.n
    }

    pub fn n_coefficients(&self) -> usize {
        self.d
    }

    pub fn prior_sd(&self) -> f64 {
        self.prior_sd
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn log_likelihood(&self, w: &[f64]) -> f64 {
        (0..self.n)
            .map(|i| {
                let t = dot(self.row(i), w);
                if self.labels[i] > 0.5 {
                    log_sigmoid(t)
                } else {
                    log_sigmoid(-t)
                }
            })
            .sum()
    }

    fn log_likelihood_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.d];
        let mut ll = 0.0;
        for i in 0..self.n {
            let x = self.row(i);
            let t = dot(x, w);
            let y = self.labels[i];
            ll += if y > 0.5 { log_sigmoid(t) } else { log_sigmoid(-t) };
            let resid = y - sigmoid(t);
            for (g, xj) in grad.iter_mut().zip(x) {
                *g += resid * xj;
            }
        }
        (ll, grad)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1/(1+e^{-t}))` without overflow for either sign of `t`.
#[inline]
pub fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Unnormalized posterior `prior(w) * prod_i p(y_i | x_i, w)`.
#[derive(Debug, Clone)]
pub struct LogisticPosterior {
    prior: Gaussian,
    model: Arc<LogisticModel>,
}

impl LogisticPosterior {
    pub fn model(&self) -> &LogisticModel {
        &self.model
    }
}

impl UnnormalizedDensity for LogisticPosterior {
    fn dim(&self) -> usize {
        self.model.d
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        self.prior.log_density(z) + self.model.log_likelihood(z)
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.value_and_gradient(z).1
    }

    fn value_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let (lp, gp) = self.prior.value_and_gradient(z);
        let (ll, mut g) = self.model.log_likelihood_and_gradient(z);
        for (gi, pi) in g.iter_mut().zip(gp) {
            *gi += pi;
        }
        (lp + ll, g)
    }
}

/// Prior `N(0, prior_sd^2 I)` and the unnormalized posterior of a logistic model.
pub fn make_logistic_posterior(m: LogisticModel) -> Result<(Gaussian, LogisticPosterior)> {
    let d = m.d;
    if d == 0 {
        return Err(Error::InvalidInput("model has no coefficients".into()));
    }
    let var = m.prior_sd * m.prior_sd;
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        cov[i * d + i] = var;
    }
    let prior = make_gaussian(vec![0.0; d], &cov)?;
    let target = LogisticPosterior {
        prior: prior.clone(),
        model: Arc::new(m),
    };
    Ok((prior, target))
}

/// A density multiplied by the constant `exp(log_scale)`.
#[derive(Clone)]
pub struct Scaled {
    inner: DensityRef,
    log_scale: f64,
}

impl Scaled {
    pub fn new(inner: DensityRef, log_scale: f64) -> Self {
        Scaled { inner, log_scale }
    }
}

impl UnnormalizedDensity for Scaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        self.inner.log_density(z) + self.log_scale
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.inner.gradient(z)
    }

    fn value_and_gradient(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let (v, g) = self.inner.value_and_gradient(z);
        (v + self.log_scale, g)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<Point> {
        self.inner.sample(rng)
    }

    fn has_exact_sampler(&self) -> bool {
        self.inner.has_exact_sampler()
    }

    fn known_log_normalizer(&self) -> Option<f64> {
        self.inner.known_log_normalizer().map(|v| v + self.log_scale)
    }
}

/// Finite unnormalized density on the integers `0..mass.len()` embedded in `R^1`.
///
/// Any point that is not one of those integers has zero mass.
#[derive(Debug, Clone)]
pub struct Discrete {
    log_mass: Vec<f64>,
    cumulative: Vec<f64>,
    log_total: f64,
}

impl Discrete {
    pub fn new(mass: &[f64]) -> Result<Self> {
        if mass.is_empty() || mass.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidInput("masses must be finite and nonnegative".into()));
        }
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            return Err(Error::Degenerate("all masses are zero".into()));
        }
        let mut acc = 0.0;
        let cumulative = mass
            .iter()
            .map(|m| {
                acc += m / total;
                acc
            })
            .collect();
        Ok(Discrete {
            log_mass: mass.iter().map(|m| m.ln()).collect(),
            cumulative,
            log_total: total.ln(),
        })
    }

    pub fn support_size(&self) -> usize {
        self.log_mass.len()
    }

    fn index(&self, x: f64) -> Option<usize> {
        if x >= 0.0 && x.fract() == 0.0 && (x as usize) < self.log_mass.len() {
            Some(x as usize)
        } else {
            None
        }
    }
}

impl UnnormalizedDensity for Discrete {
    fn dim(&self) -> usize {
        1
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        self.index(z[0])
            .map_or(f64::NEG_INFINITY, |i| self.log_mass[i])
    }

    fn gradient(&self, _z: &[f64]) -> Vec<f64> {
        vec![0.0]
    }

    fn sample(&self, rng: &mut dyn RngCore) -> Option<Point> {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|c| *c <= u);
        Some(vec![i.min(self.log_mass.len() - 1) as f64])
    }

    fn has_exact_sampler(&self) -> bool {
        true
    }

    fn known_log_normalizer(&self) -> Option<f64> {
        Some(self.log_total)
    }
}

/// An unnormalized density restricted to finitely many labeled atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    atoms: Vec<Point>,
    mass: Vec<f64>,
}

impl GridDensity {
    pub fn new(atoms: Vec<Point>, mass: Vec<f64>) -> Result<Self> {
        if atoms.len() != mass.len() || atoms.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} atoms but {} masses",
                atoms.len(),
                mass.len()
            )));
        }
        if mass.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidInput("masses must be finite and nonnegative".into()));
        }
        if mass.iter().all(|m| *m == 0.0) {
            return Err(Error::Degenerate("grid density has zero total mass".into()));
        }
        Ok(GridDensity { atoms, mass })
    }

    /// Grid with atoms labeled `0, 1, ..., n-1` on the real line.
    pub fn from_masses(mass: Vec<f64>) -> Result<Self> {
        let atoms = (0..mass.len()).map(|i| vec![i as f64]).collect();
        GridDensity::new(atoms, mass)
    }

    pub fn atoms(&self) -> &[Point] {
        &self.atoms
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn same_support(&self, other: &GridDensity) -> bool {
        self.atoms == other.atoms
    }

    /// Same atoms, new masses.
    pub fn with_mass(&self, mass: Vec<f64>) -> Result<Self> {
        GridDensity::new(self.atoms.clone(), mass)
    }
}

/// Discretize `f` at `atoms` with `mass_i = exp(log f(atom_i))`.
pub fn grid_from_density(f: &dyn UnnormalizedDensity, atoms: Vec<Point>) -> Result<GridDensity> {
    if atoms.is_empty() {
        return Err(Error::InvalidInput("no atoms".into()));
    }
    if let Some(a) = atoms.iter().find(|a| a.len() != f.dim()) {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: a.len(),
        });
    }
    let mass = atoms.iter().map(|a| f.log_density(a).exp()).collect();
    GridDensity::new(atoms, mass)
}
