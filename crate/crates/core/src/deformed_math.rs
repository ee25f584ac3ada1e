//! Scalar q-deformed logarithm and exponential, homogeneous power means and
//! the log-space reparameterization used to evaluate them on importance
//! weights without overflow.
//!
//! The order `q = 1` is always handled by an exact branch (natural log,
//! standard exponential, geometric mean); it is never approximated by a
//! nearby `q`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Distance from one below which an order is treated as exactly geometric.
pub const GEOMETRIC_CUTOFF: f64 = 1e-12;

/// Order `q` of a deformed logarithm/exponential, power mean or annealing path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct OrderQ(f64);

impl OrderQ {
    pub const GEOMETRIC: OrderQ = OrderQ(1.0);

    pub fn new(q: f64) -> Result<Self> {
        if !q.is_finite() {
            return Err(Error::Domain(format!("order q must be finite, got {q}")));
        }
        Ok(OrderQ(q))
    }

    /// Order with magnitude scale `rho`, i.e. `q = 1 - 1/rho`.
    pub fn from_rho(rho: f64) -> Result<Self> {
        if !rho.is_finite() || rho == 0.0 {
            return Err(Error::Domain(format!("rho must be finite and nonzero, got {rho}")));
        }
        Self::new(1.0 - 1.0 / rho)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_geometric(self) -> bool {
        (self.0 - 1.0).abs() < GEOMETRIC_CUTOFF
    }

    /// `1 - q`, exactly zero on the geometric branch.
    #[inline]
    pub fn one_minus_q(self) -> f64 {
        if self.is_geometric() {
            0.0
        } else {
            1.0 - self.0
        }
    }

    /// `rho = 1/(1-q)`; `None` on the geometric branch.
    #[inline]
    pub fn rho(self) -> Option<f64> {
        if self.is_geometric() {
            None
        } else {
            Some(1.0 / (1.0 - self.0))
        }
    }
}

impl TryFrom<f64> for OrderQ {
    type Error = Error;
    fn try_from(q: f64) -> Result<Self> {
        OrderQ::new(q)
    }
}

impl From<OrderQ> for f64 {
    fn from(q: OrderQ) -> f64 {
        q.0
    }
}

/// Nonnegative values with a probability vector of weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedInputs {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedInputs {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "need equal nonzero lengths, got {} values and {} weights",
                values.len(),
                weights.len()
            )));
        }
        if values.iter().any(|u| !(*u >= 0.0)) {
            return Err(Error::Domain("power mean inputs must be nonnegative".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("weights must sum to 1, got {total}")));
        }
        Ok(WeightedInputs { values, weights })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Deformed logarithm `(u^{1-q} - 1)/(1-q)`, natural log at `q = 1`.
pub fn ln_q(u: f64, q: OrderQ) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::Domain(format!("ln_q requires u > 0, got {u}")));
    }
    if q.is_geometric() {
        return Ok(u.ln());
    }
    let a = q.one_minus_q();
    // (e^{a ln u} - 1)/a keeps the small-|a| regime accurate.
    Ok((a * u.ln()).exp_m1() / a)
}

/// Deformed exponential `[1 + (1-q) u]_+^{1/(1-q)}`, standard exp at `q = 1`.
pub fn exp_q(u: f64, q: OrderQ) -> f64 {
    if q.is_geometric() {
        return u.exp();
    }
    let a = q.one_minus_q();
    let bracket = 1.0 + a * u;
    if bracket <= 0.0 {
        // q < 1: out of support. q > 1: the pole; the positive branch diverges.
        return if a > 0.0 { 0.0 } else { f64::INFINITY };
    }
    ((a * u).ln_1p() / a).exp()
}

/// Log of [`exp_q`], `-inf` where the clamp applies.
pub fn log_exp_q(u: f64, q: OrderQ) -> f64 {
    if q.is_geometric() {
        return u;
    }
    let a = q.one_minus_q();
    let bracket = 1.0 + a * u;
    if bracket <= 0.0 {
        return if a > 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
    }
    (a * u).ln_1p() / a
}

/// Homogeneous power mean `(sum_i w_i u_i^{1-q})^{1/(1-q)}`.
///
/// Arithmetic mean at `q = 0`, geometric at `q = 1`. A zero input carrying
/// positive weight yields 0 for `q >= 1` (limit convention).
pub fn power_mean(inputs: &WeightedInputs, q: OrderQ) -> f64 {
    let pairs = inputs
        .values
        .iter()
        .zip(&inputs.weights)
        .filter(|(_, w)| **w > 0.0);

    if q.is_geometric() {
        let mut acc = 0.0;
        for (u, w) in pairs {
            if *u == 0.0 {
                return 0.0;
            }
            acc += w * u.ln();
        }
        return acc.exp();
    }

    let a = q.one_minus_q();
    let mut terms = Vec::with_capacity(inputs.values.len());
    for (u, w) in pairs {
        if *u == 0.0 {
            if a < 0.0 {
                return 0.0;
            }
            continue;
        }
        terms.push(w.ln() + a * u.ln());
    }
    if terms.is_empty() {
        return 0.0;
    }
    (log_sum_exp(&terms) / a).exp()
}

/// Quasi-arithmetic mean `h^{-1}(sum_i w_i h(u_i))` for an invertible `h`.
pub fn generalized_mean<H, HInv>(inputs: &WeightedInputs, h: H, h_inv: HInv) -> f64
where
    H: Fn(f64) -> f64,
    HInv: Fn(f64) -> f64,
{
    let mixed: f64 = inputs
        .values
        .iter()
        .zip(&inputs.weights)
        .map(|(u, w)| w * h(*u))
        .sum();
    h_inv(mixed)
}

/// `ln_q(exp(log_w))` evaluated as `rho * expm1(log_w / rho)`.
///
/// Never forms `exp(log_w)`; finite whenever `|log_w / rho|` is moderate.
pub fn stable_lnq_of_exp(log_w: f64, q: OrderQ) -> f64 {
    match q.rho() {
        None => log_w,
        Some(rho) => rho * (log_w / rho).exp_m1(),
    }
}

/// Magnitude scale chosen from a set of log importance weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoChoice {
    pub rho: f64,
    pub q: OrderQ,
    /// Set when every log weight was zero and the fallback `rho = 1` was used.
    pub degenerate: bool,
}

/// `rho = max_i |log w_i|` and its companion order `q = 1 - 1/rho`.
pub fn rho_from_log_weights(log_ws: &[f64]) -> Result<RhoChoice> {
    if log_ws.is_empty() {
        return Err(Error::InvalidInput("no log weights".into()));
    }
    if log_ws.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("log weights contain NaN".into()));
    }
    let rho = log_ws.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !rho.is_finite() {
        return Err(Error::Domain("log weights must be finite to pick rho".into()));
    }
    if rho == 0.0 {
        return Ok(RhoChoice {
            rho: 1.0,
            q: OrderQ(0.0),
            degenerate: true,
        });
    }
    Ok(RhoChoice {
        rho,
        q: OrderQ::from_rho(rho)?,
        degenerate: false,
    })
}

/// Product form of the q-exponential sum identity:
/// `prod_n exp_q(x_n / (1 + (1-q) sum_{i<n} x_i))`, which equals `exp_q(sum_n x_n)`.
pub fn qexp_sum_rhs(xs: &[f64], q: OrderQ) -> Result<f64> {
    let a = q.one_minus_q();
    let mut partial = 0.0;
    let mut prod = 1.0;
    for (n, &x) in xs.iter().enumerate() {
        let denom = 1.0 + a * partial;
        if denom == 0.0 {
            return Err(Error::Singular(format!(
                "zero denominator before term {n} of the sum identity"
            )));
        }
        prod *= exp_q(x / denom, q);
        partial += x;
    }
    Ok(prod)
}

/// Right-hand side of the q-exponential product identity:
/// `exp_q(sum_n x_n prod_{i<n} (1 + (1-q) x_i))`, which equals `prod_n exp_q(x_n)`.
pub fn qexp_prod_rhs(xs: &[f64], q: OrderQ) -> f64 {
    let a = q.one_minus_q();
    let mut scale = 1.0;
    let mut arg = 0.0;
    for &x in xs {
        arg += x * scale;
        scale *= 1.0 + a * x;
    }
    exp_q(arg, q)
}

/// Move from the free-energy form `g(z) exp_q(theta.phi - psi_q)` to the
/// multiplicatively normalized form `g(z) exp_q(beta.phi) / Z`.
///
/// Returns `(beta, Z)` with `beta = theta / (1 - (1-q) psi_q)` and
/// `Z = 1 / exp_q(-psi_q)`.
pub fn psi_to_multiplicative(theta: &[f64], psi_q: f64, q: OrderQ) -> Result<(Vec<f64>, f64)> {
    let denom = 1.0 + q.one_minus_q() * (-psi_q);
    if !(denom > 0.0) {
        return Err(Error::Domain(format!(
            "1 + (1-q)(-psi_q) must be positive, got {denom}"
        )));
    }
    let beta = theta.iter().map(|t| t / denom).collect();
    let z = 1.0 / exp_q(-psi_q, q);
    Ok((beta, z))
}

/// `log(sum_i exp(x_i))`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(v: f64) -> OrderQ {
        OrderQ::new(v).unwrap()
    }

    #[test]
    fn ln_q_examples() {
        assert_eq!(ln_q(1.0, q(0.3)).unwrap(), 0.0);
        assert!((ln_q(2.0, q(0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((ln_q(2.0, q(0.999)).unwrap() - 2f64.ln()).abs() < 1e-3);
        assert!(matches!(ln_q(0.0, q(0.5)), Err(Error::Domain(_))));
        assert!(matches!(ln_q(-1.0, q(1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn exp_q_examples() {
        assert_eq!(exp_q(0.0, q(1.7)), 1.0);
        assert!((exp_q(0.5, q(2.0)) - 2.0).abs() < 1e-15);
        assert_eq!(exp_q(-5.0, q(0.5)), 0.0);
        assert_eq!(log_exp_q(-5.0, q(0.5)), f64::NEG_INFINITY);
        assert_eq!(exp_q(1.5, OrderQ::GEOMETRIC), 1.5f64.exp());
    }

    #[test]
    fn geometric_branch_is_exact_cutoff() {
        assert!(q(1.0 + 5e-13).is_geometric());
        assert!(!q(1.0 + 1e-11).is_geometric());
        assert_eq!(ln_q(3.0, q(1.0 - 1e-13)).unwrap(), 3f64.ln());
    }

    #[test]
    fn power_mean_examples() {
        let ones = WeightedInputs::new(vec![1.0, 1.0], vec![0.5, 0.5]).unwrap();
        for v in [-1.0, 0.0, 0.5, 1.0, 2.0, 7.0] {
            assert!((power_mean(&ones, q(v)) - 1.0).abs() < 1e-14);
        }
        let x = WeightedInputs::new(vec![2.0, 10.0], vec![0.3, 0.7]).unwrap();
        assert!((power_mean(&x, q(0.0)) - 7.6).abs() < 1e-12);
        let g = WeightedInputs::new(vec![4.0, 9.0], vec![0.5, 0.5]).unwrap();
        assert!((power_mean(&g, q(1.0)) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn power_mean_zero_input_limits() {
        let z = WeightedInputs::new(vec![0.0, 4.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(power_mean(&z, q(2.0)), 0.0);
        assert_eq!(power_mean(&z, q(1.0)), 0.0);
        assert!((power_mean(&z, q(0.0)) - 2.0).abs() < 1e-14);
        // zero weight on the zero input leaves it out entirely
        let skip = WeightedInputs::new(vec![0.0, 4.0], vec![0.0, 1.0]).unwrap();
        assert!((power_mean(&skip, q(3.0)) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_inputs_validation() {
        assert!(WeightedInputs::new(vec![], vec![]).is_err());
        assert!(WeightedInputs::new(vec![1.0], vec![0.5]).is_err());
        assert!(WeightedInputs::new(vec![-1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(WeightedInputs::new(vec![1.0, 2.0], vec![0.5]).is_err());
    }

    #[test]
    fn stable_lnq_examples() {
        assert_eq!(stable_lnq_of_exp(0.0, q(0.3)), 0.0);
        assert!((stable_lnq_of_exp(2f64.ln(), q(0.0)) - 1.0).abs() < 1e-15);
        // rho = 700: 700 (e - 1)
        let order = OrderQ::from_rho(700.0).unwrap();
        let stable = stable_lnq_of_exp(700.0, order);
        let expected = 700.0 * (std::f64::consts::E - 1.0);
        assert!((stable - expected).abs() / expected < 1e-12, "{stable}");
        // e^700 still fits in f64, so the naive route must agree.
        let naive = ln_q(700f64.exp(), order).unwrap();
        assert!((naive - stable).abs() / stable < 1e-10);
    }

    #[test]
    fn rho_examples() {
        let r = rho_from_log_weights(&[-3.0, 5.0, -10.0]).unwrap();
        assert_eq!(r.rho, 10.0);
        assert!((r.q.value() - 0.9).abs() < 1e-15);
        assert!(!r.degenerate);
        let r = rho_from_log_weights(&[0.5]).unwrap();
        assert_eq!(r.rho, 0.5);
        assert_eq!(r.q.value(), -1.0);
        let r = rho_from_log_weights(&[0.0, 0.0]).unwrap();
        assert_eq!(r.rho, 1.0);
        assert!(r.degenerate);
        assert!(rho_from_log_weights(&[]).is_err());
    }

    #[test]
    fn sum_identity_examples() {
        for v in [0.0, 0.5, 1.0, 2.0] {
            assert_eq!(qexp_sum_rhs(&[0.3], q(v)).unwrap(), exp_q(0.3, q(v)));
        }
        let e6 = qexp_sum_rhs(&[1.0, 2.0, 3.0], q(1.0)).unwrap();
        assert!((e6 - 6f64.exp()).abs() / 6f64.exp() < 1e-14);
        let lhs = exp_q(0.5, q(0.5));
        let rhs = qexp_sum_rhs(&[0.2, -0.1, 0.4], q(0.5)).unwrap();
        assert!((lhs - rhs).abs() / lhs < 1e-12);
        // 1 + (1-q) x_1 = 0 at q = 2, x_1 = 1
        assert!(matches!(
            qexp_sum_rhs(&[1.0, 0.2], q(2.0)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn product_identity_examples() {
        assert_eq!(qexp_prod_rhs(&[0.3], q(1.5)), exp_q(0.3, q(1.5)));
        let e2 = qexp_prod_rhs(&[1.0, 1.0], q(1.0));
        assert!((e2 - 2f64.exp()).abs() < 1e-14);
        let lhs = exp_q(0.3, q(2.0)) * exp_q(-0.2, q(2.0));
        let rhs = qexp_prod_rhs(&[0.3, -0.2], q(2.0));
        assert!((lhs - rhs).abs() / lhs < 1e-12);
    }

    #[test]
    fn psi_conversion_examples() {
        let (b, z) = psi_to_multiplicative(&[0.7, -1.2], 0.3, q(1.0)).unwrap();
        assert_eq!(b, vec![0.7, -1.2]);
        assert!((z - 0.3f64.exp()).abs() < 1e-14);
        let (b, z) = psi_to_multiplicative(&[2.0], 0.0, q(0.4)).unwrap();
        assert_eq!(b, vec![2.0]);
        assert_eq!(z, 1.0);
        let (b, z) = psi_to_multiplicative(&[1.0], 0.4, q(0.5)).unwrap();
        assert!((b[0] - 1.25).abs() < 1e-14);
        assert!((z - 1.5625).abs() < 1e-14);
        assert!(psi_to_multiplicative(&[1.0], 3.0, q(0.5)).is_err());
    }

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 3.0), 3.0);
    }
}
