//! Opportunistic scheme: each slot a node sends to the next hop with the
//! largest priority-weighted normalized SNR, then picks a source by its
//! `α` weights on that link.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::RateEngine;
use crate::control::{self, Controller, Hyper, ParamKind, Report};
use crate::error::{Error, Result};
use crate::network::{LinkTable, Network, Shares};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcdrState {
    /// `[node][link] -> β_ij`.
    pub beta: Vec<Vec<f64>>,
    /// `[node][link][k] -> α_ijk`; entries for sources a link cannot carry
    /// stay zero.
    pub alpha: LinkTable,
}

impl OcdrState {
    /// All priorities and source weights equal.
    pub fn cold(net: &Network) -> Self {
        let mut alpha = net.zero_table();
        let beta = (0..net.topo.num_nodes())
            .map(|i| {
                for (l, link) in net.links(i).iter().enumerate() {
                    for &k in &link.sources {
                        alpha[i][l][k] = 1.0;
                    }
                }
                vec![1.0; net.links(i).len()]
            })
            .collect();
        OcdrState { beta, alpha }
    }

    /// Embeds a set of used `(node, link, source)` triples: unused links get
    /// the priority floor and unused sources weight zero.
    pub fn from_usage(net: &Network, used: &[Vec<Vec<bool>>], beta_min: f64) -> Self {
        let mut st = Self::cold(net);
        for i in 0..net.topo.num_nodes() {
            for l in 0..net.links(i).len() {
                let any = used[i][l].iter().any(|&u| u);
                st.beta[i][l] = if any { 1.0 } else { beta_min };
                for k in 0..net.num_sources() {
                    if !used[i][l][k] {
                        st.alpha[i][l][k] = 0.0;
                    }
                }
            }
        }
        st
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.beta.len() != net.topo.num_nodes() || self.alpha.len() != net.topo.num_nodes() {
            return Err(Error::Structure("controller state does not match the network".into()));
        }
        for i in 0..net.topo.num_nodes() {
            let n = net.links(i).len();
            if self.beta[i].len() != n || self.alpha[i].len() != n {
                return Err(Error::Structure(format!("link count mismatch at {}", net.topo.node(i))));
            }
            if self.beta[i].iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
                return Err(Error::Domain(format!("non-positive priority at {}", net.topo.node(i))));
            }
            if self.alpha[i].iter().any(|r| r.len() != net.num_sources() || r.iter().any(|&a| !(a >= 0.0))) {
                return Err(Error::Domain(format!("invalid source weight at {}", net.topo.node(i))));
            }
        }
        Ok(())
    }
}

/// `argmax_j β_j γ_j / γ̄_j`, ties broken uniformly.
pub fn select_link<R: Rng + ?Sized>(snrs: &[f64], gamma_bars: &[f64], betas: &[f64], rng: &mut R) -> Result<usize> {
    if snrs.is_empty() {
        return Err(Error::Structure("node has no next hop".into()));
    }
    let mut best = f64::NEG_INFINITY;
    let mut ties = 0u32;
    let mut pick = 0;
    for j in 0..snrs.len() {
        let v = betas[j] * snrs[j] / gamma_bars[j];
        if v > best {
            best = v;
            ties = 1;
            pick = j;
        } else if v == best {
            // reservoir draw keeps every tied index equally likely
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                pick = j;
            }
        }
    }
    Ok(pick)
}

/// Draws a source with probability proportional to its weight; `None` when
/// every weight is zero.
pub fn pick_source<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return Some(k);
            }
            u -= w;
            last = Some(k);
        }
    }
    last
}

/// `π_ijk` for one link; all-zero rows stay all-zero.
pub fn source_probabilities(alpha: &[f64]) -> Vec<f64> {
    let total: f64 = alpha.iter().sum();
    if total > 0.0 {
        alpha.iter().map(|a| a / total).collect()
    } else {
        vec![0.0; alpha.len()]
    }
}

/// Node-local `μ̂_ijk` from the node's own priorities, weights and link
/// qualities.
pub fn node_mu_hat(beta: &[f64], alpha: &[Vec<f64>], gamma_bars: &[f64], engine: &RateEngine) -> Result<Vec<Vec<f64>>> {
    (0..beta.len())
        .map(|l| {
            let rate = engine.opportunistic(l, beta, gamma_bars)?;
            Ok(source_probabilities(&alpha[l]).into_iter().map(|p| p * rate).collect())
        })
        .collect()
}

pub fn mu_hat_all(net: &Network, st: &OcdrState) -> Result<LinkTable> {
    (0..net.topo.num_nodes())
        .map(|i| {
            if net.links(i).is_empty() {
                Ok(Vec::new())
            } else {
                node_mu_hat(&st.beta[i], &st.alpha[i], &net.gamma_bars[i], &net.engine)
            }
        })
        .collect()
}

/// Node-local chain rule from `∂F/∂μ̂_i··` to `(∂F/∂β_i·, ∂F/∂α_i··)`.
pub fn node_pullback(
    beta: &[f64],
    alpha: &[Vec<f64>],
    gamma_bars: &[f64],
    engine: &RateEngine,
    d_mu: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = beta.len();
    let mut d_beta = vec![0.0; n];
    let mut d_alpha = Vec::with_capacity(n);
    for l in 0..n {
        let (rate, dr) = engine.opportunistic_grad(l, beta, gamma_bars)?;
        let pi = source_probabilities(&alpha[l]);
        let link_price: f64 = pi.iter().zip(&d_mu[l]).map(|(p, d)| p * d).sum();
        for (z, g) in dr.iter().enumerate() {
            d_beta[z] += link_price * g;
        }
        let total: f64 = alpha[l].iter().sum();
        let row = d_mu[l]
            .iter()
            .map(|d| if total > 0.0 { rate * (d - link_price) / total } else { rate * d })
            .collect();
        d_alpha.push(row);
    }
    Ok((d_beta, d_alpha))
}

/// Parameter layout: per transmitter, its `β` row, then `α` for every
/// (link, source) pair where the link carries more than one source.
#[derive(Debug, Clone)]
pub struct Ocdr<'a> {
    pub net: &'a Network,
    pub state: OcdrState,
}

impl Ocdr<'_> {
    fn free_alpha(&self, i: usize, l: usize) -> bool {
        self.net.links(i)[l].sources.len() > 1
    }

    fn for_each_param(&self, mut f: impl FnMut(usize, Option<(usize, usize)>, usize)) {
        for i in self.net.topo.transmitters() {
            for l in 0..self.net.links(i).len() {
                f(i, None, l);
            }
            for l in 0..self.net.links(i).len() {
                if self.free_alpha(i, l) {
                    for &k in &self.net.links(i)[l].sources {
                        f(i, Some((l, k)), l);
                    }
                }
            }
        }
    }
}

impl Controller for Ocdr<'_> {
    fn params(&self) -> Vec<f64> {
        let mut p = Vec::new();
        self.for_each_param(|i, a, l| match a {
            None => p.push(self.state.beta[i][l]),
            Some((l, k)) => p.push(self.state.alpha[i][l][k]),
        });
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let mut it = p.iter();
        let mut updates = Vec::new();
        self.for_each_param(|i, a, l| updates.push((i, a, l, *it.next().expect("parameter count"))));
        for (i, a, l, v) in updates {
            match a {
                None => self.state.beta[i][l] = v,
                Some((l, k)) => self.state.alpha[i][l][k] = v,
            }
        }
    }

    fn kinds(&self) -> Vec<ParamKind> {
        let mut p = Vec::new();
        self.for_each_param(|_, a, _| p.push(if a.is_none() { ParamKind::Priority } else { ParamKind::Share }));
        p
    }

    fn groups(&self) -> Vec<usize> {
        // β rows per node, α rows per link
        let mut ids = std::collections::BTreeMap::new();
        let mut g = Vec::new();
        self.for_each_param(|i, a, l| {
            let key = match a {
                None => (i, usize::MAX),
                Some(_) => (i, l),
            };
            let next = ids.len();
            g.push(*ids.entry(key).or_insert(next));
        });
        g
    }

    fn mu_hat(&self, net: &Network) -> Result<LinkTable> {
        mu_hat_all(net, &self.state)
    }

    fn pullback(&self, net: &Network, d_mu_hat: &LinkTable) -> Result<Vec<f64>> {
        let mut d_beta = Vec::with_capacity(net.topo.num_nodes());
        let mut d_alpha = Vec::with_capacity(net.topo.num_nodes());
        for i in 0..net.topo.num_nodes() {
            if net.links(i).is_empty() {
                d_beta.push(Vec::new());
                d_alpha.push(Vec::new());
                continue;
            }
            let (b, a) = node_pullback(&self.state.beta[i], &self.state.alpha[i], &net.gamma_bars[i], &net.engine, &d_mu_hat[i])?;
            d_beta.push(b);
            d_alpha.push(a);
        }
        let mut g = Vec::new();
        self.for_each_param(|i, a, l| match a {
            None => g.push(d_beta[i][l]),
            Some((l, k)) => g.push(d_alpha[i][l][k]),
        });
        Ok(g)
    }
}

/// `F` and `ρ*` for the state under the given limit fractions.
pub fn evaluate_objective(net: &Network, st: &OcdrState, shares: &Shares) -> Result<(f64, Vec<Vec<f64>>)> {
    let eval = control::assess(net, &Ocdr { net, state: st.clone() }, shares)?;
    Ok((eval.objective, eval.table.rho_star))
}

/// Flat gradient of `F` in the controller's parameter order, with the
/// matching parameter vector.
pub fn gradient(net: &Network, st: &OcdrState, shares: &Shares) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = Ocdr { net, state: st.clone() };
    let (_, g) = control::gradient(net, &c, shares)?;
    Ok((c.params(), g))
}

pub fn run_control_loop(net: &Network, init: OcdrState, hyper: Hyper, shares: Option<Shares>) -> Result<Report<OcdrState>> {
    init.validate(net)?;
    let r = control::run(net, Ocdr { net, state: init }, hyper, shares)?;
    Ok(Report {
        state: r.state.state,
        shares: r.shares,
        objective: r.objective,
        table: r.table,
        rounds: r.rounds,
        converged: r.converged,
        trace: r.trace,
    })
}
