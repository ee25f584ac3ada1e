//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use qpaths::densities::LogisticModel;
use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite rule: `panels` equal panels on `[a, b]`, `order` nodes each.
pub fn composite_nodes(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((mid + 0.5 * h * xi, 0.5 * h * wi));
        }
    }
    out
}

pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    composite_nodes(a, b, panels, order)
        .into_iter()
        .map(|(x, w)| w * f(x))
        .sum()
}

/// `int_R f(x) dx` through `x = c + s tan(t)`.
pub fn integrate_line(f: impl Fn(f64) -> f64, c: f64, s: f64) -> f64 {
    let half = PI / 2.0;
    integrate(
        |t| {
            let sec = 1.0 / t.cos();
            f(c + s * t.tan()) * s * sec * sec
        },
        -half,
        half,
        400,
        20,
    )
}

/// Escort mean and second moment `E[x], E[x^2]` under `p^q / int p^q`,
/// given `log p` (unnormalized).
pub fn escort_moments(log_p: impl Fn(f64) -> f64, q: f64, c: f64, s: f64) -> (f64, f64) {
    let peak = log_p(c);
    let e = |k: i32| integrate_line(|x| x.powi(k) * (q * (log_p(x) - peak)).exp(), c, s);
    let z = e(0);
    (e(1) / z, e(2) / z)
}

fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

/// Log evidence `log int N(w; 0, s^2 I) prod_i p(y_i | x_i, w) dw` of a
/// two-coefficient logistic model by tensor Gauss-Legendre quadrature over
/// a box of +-12 Laplace standard deviations around the mode.
pub fn logistic_log_evidence_2d(m: &LogisticModel) -> f64 {
    assert_eq!(m.n_coefficients(), 2);
    let s2 = m.prior_sd() * m.prior_sd();
    let log_joint = |w: [f64; 2]| {
        let mut v = -(w[0] * w[0] + w[1] * w[1]) / (2.0 * s2) - (2.0 * PI * s2).ln();
        for i in 0..m.n_data() {
            let x = m.row(i);
            let t = x[0] * w[0] + x[1] * w[1];
            v += if m.label(i) > 0.5 { log_sigmoid(t) } else { log_sigmoid(-t) };
        }
        v
    };

    // Newton's method for the mode and the Laplace curvature.
    let mut w = [0.0, 0.0];
    let mut h = [[0.0; 2]; 2];
    for _ in 0..100 {
        let mut g = [-w[0] / s2, -w[1] / s2];
        h = [[1.0 / s2, 0.0], [0.0, 1.0 / s2]];
        for i in 0..m.n_data() {
            let x = m.row(i);
            let p = 1.0 / (1.0 + (-(x[0] * w[0] + x[1] * w[1])).exp());
            let r = m.label(i) - p;
            for a in 0..2 {
                g[a] += r * x[a];
                for b in 0..2 {
                    h[a][b] += p * (1.0 - p) * x[a] * x[b];
                }
            }
        }
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let step = [
            (h[1][1] * g[0] - h[0][1] * g[1]) / det,
            (h[0][0] * g[1] - h[1][0] * g[0]) / det,
        ];
        w[0] += step[0];
        w[1] += step[1];
        if step[0].abs() + step[1].abs() < 1e-12 {
            break;
        }
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let sd = [(h[1][1] / det).sqrt(), (h[0][0] / det).sqrt()];

    let ax = composite_nodes(w[0] - 12.0 * sd[0], w[0] + 12.0 * sd[0], 40, 10);
    let ay = composite_nodes(w[1] - 12.0 * sd[1], w[1] + 12.0 * sd[1], 40, 10);
    let peak = log_joint(w);
    let mut total = 0.0;
    for (x, wx) in &ax {
        for (y, wy) in &ay {
            total += wx * wy * (log_joint([*x, *y]) - peak).exp();
        }
    }
    peak + total.ln()
}

/// Fourth-order central difference gradient.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, z: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    let mut x = z.to_vec();
    for i in 0..z.len() {
        let h = 1e-3 * z[i].abs().max(1.0);
        let mut at = |d: f64| {
            x[i] = z[i] + d;
            let v = f(&x);
            x[i] = z[i];
            v
        };
        let (p2, p1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
        out.push((-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h));
    }
    out
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
