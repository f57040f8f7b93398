//! Exponential integral and the Laplace transform of `ln(1 + x)` built on it.
//!
//! Every expected-rate integral in the crate reduces to
//! `∫₀^∞ e^{-b x} ln(1 + x) dx = e^b E₁(b) / b`, so the only transcendental
//! kernel needed is the exponentially scaled `E₁`.

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// `E₁(x) = ∫ₓ^∞ e^{-t}/t dt` for `x > 0`.
pub fn e1(x: f64) -> f64 {
    if x <= 1.0 {
        e1_series(x)
    } else {
        scaled_e1_cf(x) * (-x).exp()
    }
}

/// `e^x E₁(x)` for `x > 0`, evaluated without overflow for large `x`.
pub fn scaled_e1(x: f64) -> f64 {
    if x <= 1.0 {
        x.exp() * e1_series(x)
    } else {
        scaled_e1_cf(x)
    }
}

fn e1_series(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    // E₁(x) = -γ - ln x - Σ (-x)^n / (n n!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for n in 1..MAX_ITER {
        term *= -x / n as f64;
        let contrib = term / n as f64;
        sum += contrib;
        if contrib.abs() < EPS * sum.abs().max(EPS) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

// Modified Lentz evaluation of the continued fraction
// e^x E₁(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...))).
fn scaled_e1_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// `∫₀^∞ e^{-b x} ln(1 + x) dx = e^b E₁(b) / b` for `b > 0`.
pub fn laplace_log1p(b: f64) -> f64 {
    scaled_e1(b) / b
}

/// Derivative of [`laplace_log1p`] with respect to `b`.
///
/// Uses `d/db [e^b E₁(b)] = e^b E₁(b) - 1/b`.
pub fn laplace_log1p_deriv(b: f64) -> f64 {
    let s = scaled_e1(b);
    (s * (b - 1.0) - 1.0) / (b * b)
}
