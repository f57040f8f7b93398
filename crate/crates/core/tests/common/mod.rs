#![allow(dead_code)]

pub mod quad;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use dynroute::scenario::Scenario;

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

pub fn scenario(name: &str) -> Scenario {
    Scenario::load(&scenario_path(name)).expect("shipped scenario parses")
}

/// Fraction of customers whose queueing wait exceeds `deadline` in a FIFO
/// M/M/1 queue, by the Lindley recursion over `n` arrivals.
pub fn lindley_wait_exceedance(rho: f64, mu: f64, deadline: f64, n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inter = Exp::new(rho).unwrap();
    let service = Exp::new(mu).unwrap();
    let mut wait = 0.0f64;
    let mut over = 0usize;
    // start in steady state: an arrival finds the server busy w.p. rho/mu
    if rng.random::<f64>() < rho / mu {
        wait = Exp::new(mu - rho).unwrap().sample(&mut rng);
    }
    for _ in 0..n {
        if wait > deadline {
            over += 1;
        }
        wait = (wait + service.sample(&mut rng) - inter.sample(&mut rng)).max(0.0);
    }
    over as f64 / n as f64
}

/// Ergodic rate of link `j` when the node serves the link maximizing
/// `β γ / γ̄`, by direct integration over the winner's SNR.
pub fn opportunistic_rate_quad(j: usize, betas: &[f64], gbars: &[f64], bandwidth: f64) -> f64 {
    let g = gbars[j];
    let f = |x: f64| {
        let y = x / g;
        let mut win = 1.0;
        for (i, &b) in betas.iter().enumerate() {
            if i != j {
                win *= 1.0 - (-betas[j] * y / b).exp();
            }
        }
        bandwidth * (1.0 + x).log2() * (-y).exp() / g * win
    };
    quad::integrate_half_line(f, 1e-11)
}

pub fn single_rate_quad(gbar: f64, bandwidth: f64) -> f64 {
    quad::integrate_half_line(|x| bandwidth * (1.0 + x).log2() * (-x / gbar).exp() / gbar, 1e-11)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
