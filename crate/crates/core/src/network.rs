//! Network-wide admission recursion shared by every scheduling scheme.
//!
//! A scheme only decides the expected service rates `μ̂_ijk`. Given those,
//! one control round
//!
//! 1. computes `ρ*_ik` from the last hop back to the sources, each node
//!    granting limits `ρ̂_yik` to its previous hop in proportion to the
//!    arrival shares it observed,
//! 2. sets the source rates `ρ_k = ρ*_kk` and pushes traffic down the
//!    network, splitting it over outlets in proportion to `μ_ijk`,
//! 3. (for gradient ascent) pushes a sensitivity `∂F/∂ρ*_ik` down the same
//!    links; it is nonzero exactly where a node's admission limit binds all
//!    the way to the source.
//!
//! Every step is a composition of node-local functions taking only the
//! node's own tables and the messages it received.

use crate::channel::RateEngine;
use crate::error::{Error, Result};
use crate::qos::{apportion_limits, split_rate, QosSpec, RateTable};
use crate::topology::{ChannelParams, Topology};

/// `[node][link][k]` table.
pub type LinkTable = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedLink {
    pub to: usize,
    /// Sources allowed on this link.
    pub sources: Vec<usize>,
}

/// Outgoing links each transmitter may use, and for which sources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkPlan {
    links: Vec<Vec<PlannedLink>>,
}

impl LinkPlan {
    /// Every edge of the layered graph.
    pub fn full(topo: &Topology) -> Self {
        Self::restricted(topo, |_, _, _| true)
    }

    /// Keeps `(from, to, k)` when `keep` says so; links left with no
    /// source are dropped.
    pub fn restricted<F: Fn(usize, usize, usize) -> bool>(topo: &Topology, keep: F) -> Self {
        let links = (0..topo.num_nodes())
            .map(|i| {
                topo.next_hops(i)
                    .iter()
                    .filter_map(|&j| {
                        let sources: Vec<usize> =
                            topo.link_sources(i, j).into_iter().filter(|&k| keep(i, j, k)).collect();
                        (!sources.is_empty()).then_some(PlannedLink { to: j, sources })
                    })
                    .collect()
            })
            .collect();
        LinkPlan { links }
    }

    pub fn links(&self, node: usize) -> &[PlannedLink] {
        &self.links[node]
    }

    pub fn carries(&self, node: usize, link: usize, k: usize) -> bool {
        self.links[node][link].sources.contains(&k)
    }
}

/// Validated scenario plus derived link qualities.
#[derive(Debug, Clone)]
pub struct Network {
    pub topo: Topology,
    pub channel: ChannelParams,
    pub qos: QosSpec,
    pub weights: Vec<f64>,
    pub plan: LinkPlan,
    /// `[node][link] -> γ̄_ij` for planned links.
    pub gamma_bars: Vec<Vec<f64>>,
    pub engine: RateEngine,
    /// `[node][k]` -> `(predecessor, link index at predecessor)`.
    preds: Vec<Vec<Vec<(usize, usize)>>>,
}

impl Network {
    pub fn new(topo: Topology, channel: ChannelParams, qos: QosSpec, weights: Vec<f64>) -> Result<Self> {
        let plan = LinkPlan::full(&topo);
        Self::with_plan(topo, channel, qos, weights, plan)
    }

    pub fn with_plan(
        topo: Topology,
        channel: ChannelParams,
        qos: QosSpec,
        weights: Vec<f64>,
        plan: LinkPlan,
    ) -> Result<Self> {
        channel.validate()?;
        qos.validate(&topo)?;
        if weights.len() != topo.num_sources() {
            return Err(Error::Config(format!(
                "{} weights for {} sources",
                weights.len(),
                topo.num_sources()
            )));
        }
        if weights.iter().any(|&f| !(f >= 0.0) || !f.is_finite()) || !weights.iter().any(|&f| f > 0.0) {
            return Err(Error::Config("weights must be nonnegative with at least one positive".into()));
        }
        let mut gamma_bars = Vec::with_capacity(topo.num_nodes());
        for i in 0..topo.num_nodes() {
            let row = plan.links(i)
                .iter()
                .map(|l| {
                    channel
                        .avg_snr(topo.distance(i, l.to))
                        .map_err(|e| match e {
                            Error::Geometry(msg) => Error::Geometry(format!("{} -> {}: {msg}", topo.node(i), topo.node(l.to))),
                            other => other,
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            gamma_bars.push(row);
        }
        let k = topo.num_sources();
        let mut preds = vec![vec![Vec::new(); k]; topo.num_nodes()];
        for i in topo.transmitters() {
            for (l, link) in plan.links(i).iter().enumerate() {
                for &s in &link.sources {
                    preds[link.to][s].push((i, l));
                }
            }
        }
        Ok(Network { engine: RateEngine::new(channel.bandwidth), topo, channel, qos, weights, plan, gamma_bars, preds })
    }

    /// Same scenario restricted to another link plan.
    pub fn replan(&self, plan: LinkPlan) -> Result<Self> {
        Self::with_plan(self.topo.clone(), self.channel, self.qos.clone(), self.weights.clone(), plan)
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::with_plan(self.topo.clone(), self.channel, self.qos.clone(), weights, self.plan.clone())
    }

    pub fn num_sources(&self) -> usize {
        self.topo.num_sources()
    }

    pub fn links(&self, node: usize) -> &[PlannedLink] {
        self.plan.links(node)
    }

    /// Previous hops that forward source `k` into `node`.
    pub fn preds(&self, node: usize, k: usize) -> &[(usize, usize)] {
        &self.preds[node][k]
    }

    pub fn zero_table(&self) -> LinkTable {
        let k = self.num_sources();
        (0..self.topo.num_nodes()).map(|i| vec![vec![0.0; k]; self.links(i).len()]).collect()
    }

    fn is_terminal(&self, node: usize, link: usize) -> bool {
        self.topo.is_destination(self.links(node)[link].to)
    }
}

/// Fractions of each next hop's `ρ*_jk` granted to `(node, link)`.
/// `ρ̂_ijk = share · ρ*_jk`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shares(pub LinkTable);

impl Shares {
    /// Limits granted when no arrivals have been observed yet.
    pub fn cold(net: &Network) -> Self {
        let arrivals = Arrivals::zero(net);
        arrivals.apportion(net)
    }
}

/// Observed arrival rates `ρ_yik`, indexed `[node][k][pred slot]` in the
/// order of [`Network::preds`].
#[derive(Debug, Clone, PartialEq)]
pub struct Arrivals(pub Vec<Vec<Vec<f64>>>);

impl Arrivals {
    pub fn zero(net: &Network) -> Self {
        Arrivals(
            (0..net.topo.num_nodes())
                .map(|j| (0..net.num_sources()).map(|k| vec![0.0; net.preds(j, k).len()]).collect())
                .collect(),
        )
    }

    /// Eq.-24 apportionment at every node, expressed as fractions.
    pub fn apportion(&self, net: &Network) -> Shares {
        let mut shares = net.zero_table();
        for j in 0..net.topo.num_nodes() {
            if net.topo.is_destination(j) {
                continue;
            }
            for k in 0..net.num_sources() {
                let preds = net.preds(j, k);
                if preds.is_empty() {
                    continue;
                }
                let fractions = node_apportion(&self.0[j][k], preds, &net.topo);
                for (&(y, l), f) in preds.iter().zip(fractions) {
                    shares[y][l][k] = f;
                }
            }
        }
        Shares(shares)
    }
}

/// Node-local Eq.-24 split as fractions of `ρ*`.
pub fn node_apportion(arrivals: &[f64], preds: &[(usize, usize)], topo: &Topology) -> Vec<f64> {
    let is_source: Vec<bool> = preds.iter().map(|&(y, _)| topo.is_source(y)).collect();
    apportion_limits(1.0, arrivals, &is_source, preds.len())
}

/// Node-local admission for one source: given the node's `μ̂_ijk` and the
/// limits it holds, returns `(μ_ijk per link, Σμ - penalty)`.
pub fn node_admission(mu_hat: &[f64], limits: &[f64], penalty: f64) -> (Vec<f64>, f64) {
    let mu: Vec<f64> = mu_hat.iter().zip(limits).map(|(&m, &r)| m.min(r)).collect();
    let total: f64 = mu.iter().sum();
    (mu, total - penalty)
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub table: RateTable,
    /// `Σ_j μ_ijk - ln(1/ε*)/D*` before clamping at zero.
    pub headroom: Vec<Vec<f64>>,
    pub objective: f64,
}

/// Runs the bottom-up `ρ*` recursion and sets the source rates.
pub fn evaluate(net: &Network, mu_hat: LinkTable, shares: &Shares) -> Evaluation {
    let n = net.topo.num_nodes();
    let kk = net.num_sources();
    let mut rho_star = vec![vec![0.0; kk]; n];
    let mut headroom = vec![vec![0.0; kk]; n];
    let mut mu = net.zero_table();
    let mut rho_hat = net.zero_table();
    for i in net.topo.transmitters_bottom_up() {
        for k in net.topo.carried_sources(i) {
            let links: Vec<usize> = (0..net.links(i).len()).filter(|&l| net.plan.carries(i, l, k)).collect();
            let row_hat: Vec<f64> = links.iter().map(|&l| mu_hat[i][l][k]).collect();
            let limits: Vec<f64> = links
                .iter()
                .map(|&l| {
                    if net.is_terminal(i, l) {
                        f64::INFINITY
                    } else {
                        shares.0[i][l][k] * rho_star[net.links(i)[l].to][k]
                    }
                })
                .collect();
            let (row_mu, head) = node_admission(&row_hat, &limits, net.qos.penalty(i, k));
            for ((&l, m), r) in links.iter().zip(row_mu).zip(limits) {
                mu[i][l][k] = m;
                rho_hat[i][l][k] = r;
            }
            headroom[i][k] = head;
            rho_star[i][k] = head.max(0.0);
        }
    }
    let source_rate: Vec<f64> = (0..kk).map(|k| rho_star[net.topo.source_index(k)][k]).collect();
    let objective = net.weights.iter().zip(&source_rate).map(|(f, r)| f * r).sum();
    let table = RateTable {
        mu_hat,
        mu,
        rho_hat,
        rho_star,
        rho: vec![vec![0.0; kk]; n],
        rho_link: net.zero_table(),
        source_rate,
    };
    Evaluation { table, headroom, objective }
}

/// Pushes the admitted source rates through the network (Eq. 5) and returns
/// what every node observes arriving from each previous hop.
pub fn propagate_flows(net: &Network, eval: &mut Evaluation) -> Result<Arrivals> {
    let kk = net.num_sources();
    let t = &mut eval.table;
    for row in t.rho.iter_mut() {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
    for k in 0..kk {
        t.rho[net.topo.source_index(k)][k] = t.source_rate[k];
    }
    let mut arrivals = Arrivals::zero(net);
    for i in net.topo.transmitters() {
        for k in net.topo.carried_sources(i) {
            let mu_ik = t.mu_node(i, k);
            for l in 0..net.links(i).len() {
                if !net.plan.carries(i, l, k) {
                    continue;
                }
                let r = split_rate(t.rho[i][k], t.mu[i][l][k], mu_ik)?;
                t.rho_link[i][l][k] = r;
                let j = net.links(i)[l].to;
                t.rho[j][k] += r;
                if let Some(slot) = net.preds(j, k).iter().position(|&(y, yl)| y == i && yl == l) {
                    arrivals.0[j][k][slot] = r;
                }
            }
        }
    }
    Ok(arrivals)
}

/// `∂F/∂ρ*_ik` and `∂F/∂μ̂_ijk` under fixed shares.
#[derive(Debug, Clone)]
pub struct Sensitivity {
    pub price: Vec<Vec<f64>>,
    pub d_mu_hat: LinkTable,
}

/// Node-local backward step for one source: splits the node's price between
/// its own `μ̂` (where that branch of the min is active) and the next hops
/// (where their limit is active, scaled by the granted share).
pub fn node_backprop(price: f64, headroom: f64, mu_hat: &[f64], limits: &[f64], shares: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let active = if headroom > 0.0 { price } else { 0.0 };
    let mut d_mu = vec![0.0; mu_hat.len()];
    let mut down = vec![0.0; mu_hat.len()];
    for l in 0..mu_hat.len() {
        // ties go to μ̂, the locally controllable branch
        if mu_hat[l] <= limits[l] {
            d_mu[l] = active;
        } else {
            down[l] = active * shares[l];
        }
    }
    (d_mu, down)
}

pub fn sensitivity(net: &Network, eval: &Evaluation, shares: &Shares) -> Sensitivity {
    let n = net.topo.num_nodes();
    let kk = net.num_sources();
    let mut price = vec![vec![0.0; kk]; n];
    for k in 0..kk {
        price[net.topo.source_index(k)][k] = net.weights[k];
    }
    let mut d_mu_hat = net.zero_table();
    let t = &eval.table;
    for i in net.topo.transmitters() {
        for k in net.topo.carried_sources(i) {
            let links: Vec<usize> = (0..net.links(i).len()).filter(|&l| net.plan.carries(i, l, k)).collect();
            let hat: Vec<f64> = links.iter().map(|&l| t.mu_hat[i][l][k]).collect();
            let lim: Vec<f64> = links.iter().map(|&l| t.rho_hat[i][l][k]).collect();
            let sh: Vec<f64> = links.iter().map(|&l| shares.0[i][l][k]).collect();
            let (d_mu, down) = node_backprop(price[i][k], eval.headroom[i][k], &hat, &lim, &sh);
            for (idx, &l) in links.iter().enumerate() {
                d_mu_hat[i][l][k] = d_mu[idx];
                if down[idx] != 0.0 {
                    price[net.links(i)[l].to][k] += down[idx];
                }
            }
        }
    }
    Sensitivity { price, d_mu_hat }
}

/// Repeats evaluate → flows → apportion until the shares settle (at most
/// `rounds` times). Used to seed warm starts with consistent limits.
pub fn settle_shares(net: &Network, mu_hat: &LinkTable, mut shares: Shares, rounds: usize) -> Result<Shares> {
    for _ in 0..rounds {
        let mut eval = evaluate(net, mu_hat.clone(), &shares);
        let arrivals = propagate_flows(net, &mut eval)?;
        let next = arrivals.apportion(net);
        if next == shares {
            break;
        }
        shares = next;
    }
    Ok(shares)
}
