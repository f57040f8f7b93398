//! Per-node delay-QoS admission: M/M/1 deadline-violation probability, the
//! admissible arrival rate it implies, and the limits a node grants to its
//! previous hop.
//!
//! Rates are bit/s and deadlines seconds; the queueing formulas are applied
//! directly in those units (unit-size packets).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::Topology;

/// `(mu_ijk / mu_ik) · rho_ik`: share of the arrivals forwarded over one outlet.
pub fn split_rate(rho_ik: f64, mu_ijk: f64, mu_ik: f64) -> Result<f64> {
    if mu_ik > 0.0 {
        Ok(mu_ijk / mu_ik * rho_ik)
    } else if rho_ik > 0.0 {
        Err(Error::Starvation { rho: rho_ik })
    } else {
        Ok(0.0)
    }
}

/// `P(D > D*) = (ρ/μ) e^{-D*(μ-ρ)}` for a stable M/M/1 queue.
pub fn delay_violation_prob(rho: f64, mu: f64, deadline: f64) -> Result<f64> {
    if rho >= mu {
        return Err(Error::Unstable { rho, mu });
    }
    if rho <= 0.0 {
        return Ok(0.0);
    }
    Ok(rho / mu * (-deadline * (mu - rho)).exp())
}

/// `ln(1/ε*) / D*`, the rate headroom a queue must keep to meet its deadline.
pub fn qos_penalty(eps_star: f64, deadline: f64) -> f64 {
    (1.0 / eps_star).ln() / deadline
}

/// Largest arrival rate meeting the deadline under the small-`ε` approximation,
/// `max(0, μ - ln(1/ε*)/D*)`.
pub fn max_admissible_rate(mu: f64, eps_star: f64, deadline: f64) -> f64 {
    (mu - qos_penalty(eps_star, deadline)).max(0.0)
}

/// `ρ*` of a last-hop relay, where the only outlet is the destination.
pub fn rho_star_last_hop(mu_hat: f64, eps_star: f64, deadline: f64) -> f64 {
    max_admissible_rate(mu_hat, eps_star, deadline)
}

/// `ρ*` of a source or interior relay: each outlet contributes the smaller of
/// what the node can push and what the next hop admits.
pub fn rho_star_interior(per_link: &[(f64, f64)], eps_star: f64, deadline: f64) -> f64 {
    let mu: f64 = per_link.iter().map(|&(mu_hat, limit)| mu_hat.min(limit)).sum();
    max_admissible_rate(mu, eps_star, deadline)
}

/// Splits `ρ*_ik` into limits `ρ̂_yik` for each previous hop `y`.
///
/// `arrivals[n]` is the observed rate of source `k` from `prev[n]`;
/// `is_source[n]` flags source predecessors; `relays_per_hop` is `M`.
pub fn apportion_limits(rho_star: f64, arrivals: &[f64], is_source: &[bool], relays_per_hop: usize) -> Vec<f64> {
    debug_assert_eq!(arrivals.len(), is_source.len());
    let total: f64 = arrivals.iter().sum();
    if total > 0.0 {
        arrivals.iter().map(|&a| a / total * rho_star).collect()
    } else {
        is_source
            .iter()
            .map(|&src| if src { rho_star } else { rho_star / relays_per_hop as f64 })
            .collect()
    }
}

/// Equal split of an end-to-end budget over a path of `path_len` queues.
/// Returns `(per-node deadline, per-node loss)`.
pub fn derive_equal_budgets(path_len: usize, deadline: f64, loss: f64) -> (f64, f64) {
    assert!(path_len >= 1, "path length must be at least 1");
    let n = path_len as f64;
    let per_loss = -((-loss).ln_1p() / n).exp_m1();
    (deadline / n, per_loss)
}

/// Per-(node, source) deadline and violation threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosSpec {
    /// `[node][k] -> D*_ik` in seconds.
    pub deadline: Vec<Vec<f64>>,
    /// `[node][k] -> ε*_ik`.
    pub loss: Vec<Vec<f64>>,
    pub end_to_end: Option<(f64, f64)>,
}

impl QosSpec {
    /// Same `(D*, ε*)` at every queue.
    pub fn uniform(topo: &Topology, deadline: f64, loss: f64) -> Result<Self> {
        let n = topo.num_nodes();
        let k = topo.num_sources();
        let spec = QosSpec { deadline: vec![vec![deadline; k]; n], loss: vec![vec![loss; k]; n], end_to_end: None };
        spec.validate(topo)?;
        Ok(spec)
    }

    /// Splits end-to-end `(D*_k, ε*_k)` evenly over the `L + 1` queues of
    /// every source-to-destination path.
    pub fn from_end_to_end(topo: &Topology, deadline: f64, loss: f64) -> Result<Self> {
        let (d, e) = derive_equal_budgets(topo.num_hops() + 1, deadline, loss);
        let mut spec = Self::uniform(topo, d, e)?;
        spec.end_to_end = Some((deadline, loss));
        spec.validate(topo)?;
        Ok(spec)
    }

    pub fn penalty(&self, node: usize, k: usize) -> f64 {
        qos_penalty(self.loss[node][k], self.deadline[node][k])
    }

    pub fn validate(&self, topo: &Topology) -> Result<()> {
        let n = topo.num_nodes();
        let k = topo.num_sources();
        if self.deadline.len() != n || self.loss.len() != n {
            return Err(Error::Config(format!("QoS tables must cover {n} nodes")));
        }
        for i in topo.transmitters() {
            if self.deadline[i].len() != k || self.loss[i].len() != k {
                return Err(Error::Config(format!("QoS row for {} must cover {k} sources", topo.node(i))));
            }
            for s in topo.carried_sources(i) {
                let (d, e) = (self.deadline[i][s], self.loss[i][s]);
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::Config(format!("deadline at {} for source {} must be > 0", topo.node(i), s + 1)));
                }
                if !(e > 0.0 && e < 1.0) {
                    return Err(Error::Config(format!(
                        "violation threshold at {} for source {} must lie in (0, 1)",
                        topo.node(i),
                        s + 1
                    )));
                }
            }
        }
        if let Some((dk, ek)) = self.end_to_end {
            // Every path visits one node per layer, so the worst path takes the
            // worst node of each layer.
            for s in 0..k {
                let mut total_d = 0.0;
                let mut survive = 1.0;
                for layer in 0..=topo.num_hops() {
                    let nodes: Vec<usize> = topo.transmitters().filter(|&i| topo.layer(i) == layer).collect();
                    let nodes: Vec<usize> = if layer == 0 { vec![s] } else { nodes };
                    total_d += nodes.iter().map(|&i| self.deadline[i][s]).fold(0.0, f64::max);
                    survive *= nodes.iter().map(|&i| 1.0 - self.loss[i][s]).fold(1.0, f64::min);
                }
                let tol = 1e-12;
                if total_d > dk * (1.0 + tol) || 1.0 - survive > ek * (1.0 + 1e-9) {
                    return Err(Error::Config(format!(
                        "per-node budgets for source {} exceed the end-to-end QoS target",
                        s + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-node rate bookkeeping for one evaluation of the admission recursion.
/// Link-indexed tables follow the order of the node's outgoing links.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateTable {
    /// `[node][link][k] -> μ̂_ijk`.
    pub mu_hat: Vec<Vec<Vec<f64>>>,
    /// `[node][link][k] -> μ_ijk = min(μ̂_ijk, ρ̂_ijk)` (or `μ̂` at the last hop).
    pub mu: Vec<Vec<Vec<f64>>>,
    /// `[node][link][k] -> ρ̂_ijk`, the limit granted by the next hop
    /// (infinite on links into a destination).
    pub rho_hat: Vec<Vec<Vec<f64>>>,
    /// `[node][k] -> ρ*_ik`.
    pub rho_star: Vec<Vec<f64>>,
    /// `[node][k] -> ρ_ik`, the arrival rate under the current source rates.
    pub rho: Vec<Vec<f64>>,
    /// `[node][link][k] -> ρ_ijk`.
    pub rho_link: Vec<Vec<Vec<f64>>>,
    /// `[k] -> ρ_k`.
    pub source_rate: Vec<f64>,
}

impl RateTable {
    /// `μ_ik = Σ_j μ_ijk`.
    pub fn mu_node(&self, node: usize, k: usize) -> f64 {
        self.mu[node].iter().map(|l| l[k]).sum()
    }
}
