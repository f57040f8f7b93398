//! Time-division scheme: each slot a node draws one (next hop, source)
//! pair from fixed fractions `π′`, using only average link qualities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::RateEngine;
use crate::control::{self, Controller, Hyper, ParamKind, Report};
use crate::error::{Error, Result};
use crate::network::{LinkTable, Network, Shares};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcdrState {
    /// `[node][link][k] -> α′_ijk`.
    pub alpha_prime: LinkTable,
}

impl TcdrState {
    pub fn cold(net: &Network) -> Self {
        let mut a = net.zero_table();
        for i in 0..net.topo.num_nodes() {
            for (l, link) in net.links(i).iter().enumerate() {
                for &k in &link.sources {
                    a[i][l][k] = 1.0;
                }
            }
        }
        TcdrState { alpha_prime: a }
    }

    pub fn from_usage(net: &Network, used: &[Vec<Vec<bool>>]) -> Self {
        let mut st = Self::cold(net);
        for i in 0..net.topo.num_nodes() {
            for l in 0..net.links(i).len() {
                for k in 0..net.num_sources() {
                    if !used[i][l][k] {
                        st.alpha_prime[i][l][k] = 0.0;
                    }
                }
            }
        }
        st
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.alpha_prime.len() != net.topo.num_nodes() {
            return Err(Error::Structure("controller state does not match the network".into()));
        }
        for i in 0..net.topo.num_nodes() {
            let row = &self.alpha_prime[i];
            if row.len() != net.links(i).len() || row.iter().any(|r| r.len() != net.num_sources()) {
                return Err(Error::Structure(format!("link count mismatch at {}", net.topo.node(i))));
            }
            if row.iter().flatten().any(|&a| !(a >= 0.0)) {
                return Err(Error::Domain(format!("negative time share at {}", net.topo.node(i))));
            }
        }
        Ok(())
    }
}

/// `π′_ijk`, normalized jointly over links and sources of one node.
pub fn pair_probabilities(alpha_prime: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: f64 = alpha_prime.iter().flatten().sum();
    alpha_prime
        .iter()
        .map(|r| r.iter().map(|a| if total > 0.0 { a / total } else { 0.0 }).collect())
        .collect()
}

/// Draws `(link, source)` from `π′`; `None` when the row is all zero.
pub fn pick_link_and_source<R: Rng + ?Sized>(alpha_prime: &[Vec<f64>], rng: &mut R) -> Option<(usize, usize)> {
    let kk = alpha_prime.first().map_or(0, Vec::len);
    let flat: Vec<f64> = alpha_prime.iter().flatten().copied().collect();
    crate::ocdr::pick_source(&flat, rng).map(|n| (n / kk, n % kk))
}

pub fn node_mu_hat_td(alpha_prime: &[Vec<f64>], gamma_bars: &[f64], engine: &RateEngine) -> Result<Vec<Vec<f64>>> {
    let pi = pair_probabilities(alpha_prime);
    pi.into_iter()
        .zip(gamma_bars)
        .map(|(row, &g)| {
            let rate = engine.single(g)?;
            Ok(row.into_iter().map(|p| p * rate).collect())
        })
        .collect()
}

pub fn mu_hat_all_td(net: &Network, st: &TcdrState) -> Result<LinkTable> {
    (0..net.topo.num_nodes())
        .map(|i| node_mu_hat_td(&st.alpha_prime[i], &net.gamma_bars[i], &net.engine))
        .collect()
}

pub fn node_pullback_td(alpha_prime: &[Vec<f64>], gamma_bars: &[f64], engine: &RateEngine, d_mu: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let total: f64 = alpha_prime.iter().flatten().sum();
    let pi = pair_probabilities(alpha_prime);
    let rates = gamma_bars.iter().map(|&g| engine.single(g)).collect::<Result<Vec<f64>>>()?;
    let mut node_price = 0.0;
    for l in 0..pi.len() {
        for k in 0..pi[l].len() {
            node_price += pi[l][k] * d_mu[l][k] * rates[l];
        }
    }
    Ok((0..pi.len())
        .map(|l| {
            d_mu[l]
                .iter()
                .map(|d| {
                    let own = d * rates[l];
                    if total > 0.0 {
                        (own - node_price) / total
                    } else {
                        own
                    }
                })
                .collect()
        })
        .collect())
}

/// Parameter layout: `α′` for every carried (link, source) pair of every
/// transmitter with more than one such pair.
#[derive(Debug, Clone)]
pub struct Tcdr<'a> {
    pub net: &'a Network,
    pub state: TcdrState,
}

impl Tcdr<'_> {
    fn for_each_param(&self, mut f: impl FnMut(usize, usize, usize)) {
        for i in self.net.topo.transmitters() {
            let pairs: usize = self.net.links(i).iter().map(|l| l.sources.len()).sum();
            if pairs < 2 {
                continue;
            }
            for (l, link) in self.net.links(i).iter().enumerate() {
                for &k in &link.sources {
                    f(i, l, k);
                }
            }
        }
    }
}

impl Controller for Tcdr<'_> {
    fn params(&self) -> Vec<f64> {
        let mut p = Vec::new();
        self.for_each_param(|i, l, k| p.push(self.state.alpha_prime[i][l][k]));
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let mut idx = Vec::new();
        self.for_each_param(|i, l, k| idx.push((i, l, k)));
        for ((i, l, k), &v) in idx.into_iter().zip(p) {
            self.state.alpha_prime[i][l][k] = v;
        }
    }

    fn kinds(&self) -> Vec<ParamKind> {
        vec![ParamKind::Share; self.params().len()]
    }

    fn groups(&self) -> Vec<usize> {
        let mut g = Vec::new();
        self.for_each_param(|i, _, _| g.push(i));
        g
    }

    fn mu_hat(&self, net: &Network) -> Result<LinkTable> {
        mu_hat_all_td(net, &self.state)
    }

    fn pullback(&self, net: &Network, d_mu_hat: &LinkTable) -> Result<Vec<f64>> {
        let d = (0..net.topo.num_nodes())
            .map(|i| node_pullback_td(&self.state.alpha_prime[i], &net.gamma_bars[i], &net.engine, &d_mu_hat[i]))
            .collect::<Result<Vec<_>>>()?;
        let mut g = Vec::new();
        self.for_each_param(|i, l, k| g.push(d[i][l][k]));
        Ok(g)
    }
}

pub fn evaluate_objective_td(net: &Network, st: &TcdrState, shares: &Shares) -> Result<(f64, Vec<Vec<f64>>)> {
    let eval = control::assess(net, &Tcdr { net, state: st.clone() }, shares)?;
    Ok((eval.objective, eval.table.rho_star))
}

pub fn gradient_td(net: &Network, st: &TcdrState, shares: &Shares) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = Tcdr { net, state: st.clone() };
    let (_, g) = control::gradient(net, &c, shares)?;
    Ok((c.params(), g))
}

pub fn run_control_loop_td(net: &Network, init: TcdrState, hyper: Hyper, shares: Option<Shares>) -> Result<Report<TcdrState>> {
    init.validate(net)?;
    let r = control::run(net, Tcdr { net, state: init }, hyper, shares)?;
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
