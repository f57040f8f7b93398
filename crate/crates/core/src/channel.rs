//! Rayleigh block fading: SNR sampling, instantaneous capacity and the
//! expected-rate integrals behind both scheduling schemes.
//!
//! The opportunistic integrals are expanded by inclusion–exclusion over the
//! competing links, `∏_z (1 - e^{-a_z γ}) = Σ_S (-1)^{|S|} e^{-γ Σ_{z∈S} a_z}`,
//! so every term is a single [`laplace_log1p`] evaluation. With `n` links that
//! is `2^(n-1)` terms per link, which is why link sets are capped.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::special::{laplace_log1p, laplace_log1p_deriv};

/// Largest `|U_i|` accepted by the closed forms.
pub const MAX_LINKS: usize = 16;

/// Instantaneous received SNR `γ_ij(t)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrSample(pub f64);

impl SnrSample {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Draws `γ ~ Exp(mean = γ̄)`.
pub fn sample_snr<R: Rng + ?Sized>(gamma_bar: f64, rng: &mut R) -> Result<SnrSample> {
    check_positive("mean SNR", gamma_bar)?;
    let x: f64 = Exp1.sample(rng);
    Ok(SnrSample(gamma_bar * x))
}

/// `W log₂(1 + γ)`.
pub fn capacity(gamma: f64, bandwidth: f64) -> f64 {
    bandwidth * gamma.ln_1p() / LN_2
}

/// Ergodic capacity of a single Rayleigh link: `(W/ln 2) e^{1/γ̄} E₁(1/γ̄)`.
pub fn mean_rate_single(gamma_bar: f64, bandwidth: f64) -> Result<f64> {
    check_positive("mean SNR", gamma_bar)?;
    let b = 1.0 / gamma_bar;
    Ok(bandwidth / LN_2 * b * laplace_log1p(b))
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be positive and finite, got {v}")))
    }
}

fn check_contest(j: usize, betas: &[f64], gamma_bars: &[f64]) -> Result<()> {
    if betas.len() != gamma_bars.len() {
        return Err(Error::Domain(format!(
            "{} priority weights for {} links",
            betas.len(),
            gamma_bars.len()
        )));
    }
    if j >= betas.len() {
        return Err(Error::Domain(format!("link {j} not in a set of {}", betas.len())));
    }
    if betas.len() > MAX_LINKS {
        return Err(Error::Domain(format!(
            "{} competing links exceeds the supported maximum of {MAX_LINKS}",
            betas.len()
        )));
    }
    for &b in betas {
        check_positive("priority weight", b)?;
    }
    for &g in gamma_bars {
        check_positive("mean SNR", g)?;
    }
    Ok(())
}

/// Inclusion–exclusion terms for link `j` winning the weighted-SNR contest.
/// Calls `term(sign, b, subset_mask)` for every subset of the competitors,
/// where the mask indexes into `others`.
fn for_each_term<F: FnMut(f64, f64, u32)>(
    j: usize,
    betas: &[f64],
    gamma_bars: &[f64],
    others: &mut Vec<usize>,
    mut term: F,
) {
    others.clear();
    others.extend((0..betas.len()).filter(|&z| z != j));
    let g = gamma_bars[j];
    let rates: Vec<f64> = others.iter().map(|&z| betas[j] / (betas[z] * g)).collect();
    let n = others.len();
    for mask in 0u32..(1u32 << n) {
        let mut b = 1.0 / g;
        let mut sign = 1.0;
        for (bit, a) in rates.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                b += a;
                sign = -sign;
            }
        }
        term(sign, b, mask);
    }
}

/// Expected rate on link `j` counting only the slots in which `j` wins the
/// contest `argmax_z β_z γ_z / γ̄_z`. The per-source time share is applied by
/// the caller.
pub fn mean_rate_opportunistic(j: usize, betas: &[f64], gamma_bars: &[f64], bandwidth: f64) -> Result<f64> {
    check_contest(j, betas, gamma_bars)?;
    let g = gamma_bars[j];
    let mut sum = 0.0;
    let mut others = Vec::new();
    for_each_term(j, betas, gamma_bars, &mut others, |sign, b, _| sum += sign * laplace_log1p(b));
    Ok((bandwidth / LN_2 * sum / g).max(0.0))
}

/// Probability that link `j` wins the contest in a slot.
pub fn win_probability(j: usize, betas: &[f64], gamma_bars: &[f64]) -> Result<f64> {
    check_contest(j, betas, gamma_bars)?;
    let g = gamma_bars[j];
    let mut sum = 0.0;
    let mut others = Vec::new();
    for_each_term(j, betas, gamma_bars, &mut others, |sign, b, _| sum += sign / b);
    Ok((sum / g).clamp(0.0, 1.0))
}

/// [`mean_rate_opportunistic`] together with its gradient with respect to
/// every priority weight in the contest.
pub fn mean_rate_opportunistic_grad(
    j: usize,
    betas: &[f64],
    gamma_bars: &[f64],
    bandwidth: f64,
) -> Result<(f64, Vec<f64>)> {
    check_contest(j, betas, gamma_bars)?;
    let g = gamma_bars[j];
    let scale = bandwidth / LN_2 / g;
    let mut value = 0.0;
    let mut grad = vec![0.0; betas.len()];
    let mut others = Vec::new();
    let mut pending: Vec<(f64, f64, u32)> = Vec::with_capacity(1 << (betas.len() - 1));
    for_each_term(j, betas, gamma_bars, &mut others, |sign, b, mask| pending.push((sign, b, mask)));
    for (sign, b, mask) in pending {
        value += sign * laplace_log1p(b);
        if mask == 0 {
            continue;
        }
        let dh = sign * laplace_log1p_deriv(b);
        for (bit, &z) in others.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                // b includes β_j / (β_z γ̄_j)
                let a = betas[j] / (betas[z] * g);
                grad[j] += dh * a / betas[j];
                grad[z] -= dh * a / betas[z];
            }
        }
    }
    for v in &mut grad {
        *v *= scale;
    }
    Ok(((scale * value).max(0.0), grad))
}

/// Stateless evaluator bound to one bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEngine {
    pub bandwidth: f64,
}

impl RateEngine {
    pub fn new(bandwidth: f64) -> Self {
        RateEngine { bandwidth }
    }

    pub fn capacity(&self, gamma: f64) -> f64 {
        capacity(gamma, self.bandwidth)
    }

    pub fn single(&self, gamma_bar: f64) -> Result<f64> {
        mean_rate_single(gamma_bar, self.bandwidth)
    }

    pub fn opportunistic(&self, j: usize, betas: &[f64], gamma_bars: &[f64]) -> Result<f64> {
        mean_rate_opportunistic(j, betas, gamma_bars, self.bandwidth)
    }

    pub fn opportunistic_grad(&self, j: usize, betas: &[f64], gamma_bars: &[f64]) -> Result<(f64, Vec<f64>)> {
        mean_rate_opportunistic_grad(j, betas, gamma_bars, self.bandwidth)
    }
}

#[cfg(test)]
#[path = "../tests/common/quad.rs"]
mod quad;
