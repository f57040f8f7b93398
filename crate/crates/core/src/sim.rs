//! Slot-level Monte Carlo of a controlled network: Poisson sources,
//! per-source FIFO buffers with deadline drops, Rayleigh draws every slot
//! and decode-and-forward handoff between hops.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};

use crate::control::{Ascent, Hyper};
use crate::error::{Error, Result};
use crate::network::{evaluate, Arrivals, LinkTable, Network, Shares};
use crate::ocdr::{pick_source, select_link, Ocdr};
use crate::scheme::SchemeState;
use crate::tcdr::{pick_link_and_source, Tcdr};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub slots: u64,
    pub seed: u64,
    /// Packet size `B` in bits.
    pub packet_bits: f64,
    /// Slots per limit refresh (`T₁/T`).
    pub t1_slots: u64,
    /// Limit refreshes per priority refresh (`T₂/T₁`).
    pub t2_periods: u64,
    /// Recompute arrival estimates, limits and source rates every `T₁`.
    pub refresh_limits: bool,
    /// Also take controller ascent steps at `T₁`/`T₂` events.
    pub adapt: bool,
    /// Keep every buffer backlogged and only measure link throughput.
    pub saturate: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            slots: 1_000_000,
            seed: 1,
            packet_bits: 1.0,
            t1_slots: 1_000,
            t2_periods: 100,
            refresh_limits: true,
            adapt: false,
            saturate: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.packet_bits > 0.0) || !self.packet_bits.is_finite() {
            return Err(Error::Config("packet_bits must be positive".into()));
        }
        if self.t1_slots == 0 || self.t2_periods == 0 {
            return Err(Error::Config("t1_slots and t2_periods must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub source: usize,
    pub bits: f64,
    /// Time the packet became available at its current node.
    pub arrival: f64,
    /// Bits still to send from this node.
    pub residual: f64,
}

impl Packet {
    fn in_service(&self) -> bool {
        self.residual < self.bits
    }
}

/// Per-source FIFO of one node.
#[derive(Debug, Clone, Default)]
pub struct Buffer {
    queue: VecDeque<Packet>,
    bits: f64,
}

impl Buffer {
    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn push(&mut self, p: Packet) {
        self.bits += p.residual;
        self.queue.push_back(p);
    }

    /// Drops waiting packets older than `deadline`; the packet in service
    /// is never dropped. Returns the number dropped.
    pub fn expire(&mut self, now: f64, deadline: f64) -> u64 {
        let first = usize::from(self.queue.front().is_some_and(Packet::in_service));
        let mut dropped = 0;
        while let Some(p) = self.queue.get(first) {
            if now - p.arrival > deadline {
                self.bits -= p.residual;
                self.queue.remove(first);
                dropped += 1;
            } else {
                break;
            }
        }
        dropped
    }

    /// Sends up to `budget` bits; returns the packets completed.
    pub fn serve(&mut self, mut budget: f64) -> Vec<Packet> {
        let mut done = Vec::new();
        while budget > 0.0 {
            let Some(head) = self.queue.front_mut() else { break };
            let sent = head.residual.min(budget);
            head.residual -= sent;
            budget -= sent;
            self.bits -= sent;
            if head.residual <= 0.0 {
                done.push(self.queue.pop_front().expect("head exists"));
            }
        }
        if self.queue.is_empty() {
            self.bits = 0.0;
        }
        done
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetrics {
    pub seed: u64,
    pub slots: u64,
    pub duration: f64,
    /// Offered source rate at the end of the run (bit/s).
    pub final_rates: Vec<f64>,
    /// Bits per second entering each source buffer.
    pub admitted: Vec<f64>,
    /// Bits per second reaching each destination.
    pub delivered: Vec<f64>,
    /// Fraction of admitted packets dropped anywhere.
    pub drop_fraction: Vec<f64>,
    /// `[node][k]` share of packets arriving at a node that missed its deadline there.
    pub violation: Vec<Vec<f64>>,
    /// `[node][link][k]` bits per second sent over each link.
    pub link_throughput: LinkTable,
    pub packets_admitted: Vec<u64>,
    pub packets_delivered: Vec<u64>,
    pub packets_dropped: Vec<u64>,
    pub packets_in_flight: Vec<u64>,
    /// Offered load far above what the network carried.
    pub saturated: bool,
}

impl SimMetrics {
    pub fn max_violation(&self, k: usize) -> f64 {
        self.violation.iter().map(|r| r[k]).fold(0.0, f64::max)
    }

    pub fn csv_header(k: usize) -> Vec<String> {
        let mut h: Vec<String> = ["scenario", "scheme", "seed", "slots"].iter().map(|s| s.to_string()).collect();
        for s in 1..=k {
            for f in ["rate", "admitted", "delivered", "drop", "violation"] {
                h.push(format!("{f}_{s}"));
            }
        }
        h.push("saturated".into());
        h
    }

    pub fn csv_row(&self, scenario: &str, scheme: &str) -> Vec<String> {
        let mut r = vec![scenario.to_string(), scheme.to_string(), self.seed.to_string(), self.slots.to_string()];
        for k in 0..self.admitted.len() {
            r.push(format!("{}", self.final_rates[k]));
            r.push(format!("{}", self.admitted[k]));
            r.push(format!("{}", self.delivered[k]));
            r.push(format!("{}", self.drop_fraction[k]));
            r.push(format!("{}", self.max_violation(k)));
        }
        r.push(self.saturated.to_string());
        r
    }
}

/// Starting point of a run: controller state and the rates the sources
/// admit until the first refresh.
#[derive(Debug, Clone)]
pub struct SimInit {
    pub state: SchemeState,
    pub source_rates: Vec<f64>,
}

enum Live<'a> {
    Ocdr(Ocdr<'a>),
    Tcdr(Tcdr<'a>),
}

impl Live<'_> {
    fn mu_hat(&self, net: &Network) -> Result<LinkTable> {
        use crate::control::Controller;
        match self {
            Live::Ocdr(c) => c.mu_hat(net),
            Live::Tcdr(c) => c.mu_hat(net),
        }
    }
}

/// Runs one simulation; deterministic given the inputs.
pub fn run_sim(net: &Network, init: &SimInit, cfg: &SimConfig) -> Result<SimMetrics> {
    cfg.validate()?;
    init.state.validate(net)?;
    let kk = net.num_sources();
    if init.source_rates.len() != kk || init.source_rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::Config("one finite nonnegative source rate per source required".into()));
    }
    let topo = &net.topo;
    let n = topo.num_nodes();
    let slot = net.channel.slot;
    let bw = net.channel.bandwidth;
    let b = cfg.packet_bits;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut live = match &init.state {
        SchemeState::Ocdr(s) => Live::Ocdr(Ocdr { net, state: s.clone() }),
        SchemeState::Tcdr(s) | SchemeState::Static { state: s, .. } => Live::Tcdr(Tcdr { net, state: s.clone() }),
    };
    let mut ascent = match &live {
        Live::Ocdr(c) => Ascent::new(c, Hyper::default()),
        Live::Tcdr(c) => Ascent::new(c, Hyper::default()),
    };

    let mut rates = init.source_rates.clone();
    let mut buffers: Vec<Vec<Buffer>> = vec![vec![Buffer::default(); kk]; n];
    let mut next_arrival: Vec<f64> = rates.iter().map(|&r| first_arrival(r, b, 0.0, &mut rng)).collect();
    // bits received per (node, k, previous hop) since the last refresh
    let mut window = Arrivals::zero(net);

    let mut admitted = vec![0u64; kk];
    let mut delivered = vec![0u64; kk];
    let mut dropped = vec![0u64; kk];
    let mut arrived_at = vec![vec![0u64; kk]; n];
    let mut dropped_at = vec![vec![0u64; kk]; n];
    let mut link_bits = net.zero_table();
    let mut handoff: Vec<(usize, usize, usize, Packet)> = Vec::new();
    let mut snrs: Vec<f64> = Vec::new();
    let mut periods = 0u64;
    // a link whose granted rate is zero stays idle when scheduled
    let mut open = open_links(&evaluate(net, live.mu_hat(net)?, &Shares::cold(net)).table.mu);

    for t in 0..cfg.slots {
        let now = t as f64 * slot;
        let end = now + slot;

        if !cfg.saturate {
            for i in 0..n {
                for k in 0..kk {
                    let d = buffers[i][k].expire(now, net.qos.deadline[i][k]);
                    dropped_at[i][k] += d;
                    dropped[k] += d;
                }
            }
        }

        for i in topo.transmitters() {
            let links = net.links(i);
            if links.is_empty() {
                continue;
            }
            snrs.clear();
            for &g in &net.gamma_bars[i] {
                let e: f64 = Exp1.sample(&mut rng);
                snrs.push(g * e);
            }
            let choice = match &live {
                Live::Ocdr(c) => {
                    let l = select_link(&snrs, &net.gamma_bars[i], &c.state.beta[i], &mut rng)?;
                    pick_source(&c.state.alpha[i][l], &mut rng).map(|k| (l, k))
                }
                Live::Tcdr(c) => pick_link_and_source(&c.state.alpha_prime[i], &mut rng),
            };
            let Some((l, k)) = choice else { continue };
            if !cfg.saturate && !open[i][l][k] {
                continue;
            }
            let budget = bw * (1.0 + snrs[l]).log2() * slot;
            if cfg.saturate {
                link_bits[i][l][k] += budget;
                continue;
            }
            let before = buffers[i][k].bits;
            for p in buffers[i][k].serve(budget) {
                handoff.push((i, l, links[l].to, p));
            }
            link_bits[i][l][k] += before - buffers[i][k].bits.max(0.0);
        }

        for (i, l, j, p) in handoff.drain(..) {
            let k = p.source;
            if topo.is_destination(j) {
                delivered[k] += 1;
                continue;
            }
            arrived_at[j][k] += 1;
            if let Some(slot_idx) = net.preds(j, k).iter().position(|&(y, yl)| y == i && yl == l) {
                window.0[j][k][slot_idx] += p.bits;
            }
            buffers[j][k].push(Packet { arrival: end, residual: p.bits, ..p });
        }

        if !cfg.saturate {
            for k in 0..kk {
                let s = topo.source_index(k);
                while next_arrival[k] < end {
                    let at = next_arrival[k];
                    buffers[s][k].push(Packet { source: k, bits: b, arrival: at, residual: b });
                    admitted[k] += 1;
                    arrived_at[s][k] += 1;
                    next_arrival[k] = at + interarrival(rates[k], b, &mut rng);
                }
            }
        }

        if cfg.refresh_limits && !cfg.saturate && (t + 1) % cfg.t1_slots == 0 {
            periods += 1;
            let span = cfg.t1_slots as f64 * slot;
            let shares = estimate_arrival_rates(&window, span).apportion(net);
            if cfg.adapt {
                let priorities = periods % cfg.t2_periods == 0;
                match &mut live {
                    Live::Ocdr(c) => {
                        ascent.step(net, c, &shares, priorities)?;
                    }
                    Live::Tcdr(c) => {
                        ascent.step(net, c, &shares, false)?;
                    }
                }
            }
            let eval = evaluate(net, live.mu_hat(net)?, &shares);
            open = open_links(&eval.table.mu);
            for k in 0..kk {
                if eval.table.source_rate[k] != rates[k] {
                    rates[k] = eval.table.source_rate[k];
                    next_arrival[k] = first_arrival(rates[k], b, end, &mut rng);
                }
            }
            window = Arrivals::zero(net);
        }
    }

    let duration = cfg.slots as f64 * slot;
    let in_flight: Vec<u64> = (0..kk).map(|k| buffers.iter().map(|row| row[k].len() as u64).sum()).collect();
    let per_sec = |c: u64| c as f64 * b / duration;
    let drop_fraction: Vec<f64> =
        (0..kk).map(|k| if admitted[k] > 0 { dropped[k] as f64 / admitted[k] as f64 } else { 0.0 }).collect();
    let violation = (0..n)
        .map(|i| {
            (0..kk)
                .map(|k| if arrived_at[i][k] > 0 { dropped_at[i][k] as f64 / arrived_at[i][k] as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    let link_throughput = link_bits
        .into_iter()
        .map(|r| r.into_iter().map(|v| v.into_iter().map(|x| x / duration).collect()).collect())
        .collect();
    let saturated = drop_fraction.iter().any(|&d| d > SATURATION_DROP);
    Ok(SimMetrics {
        seed: cfg.seed,
        slots: cfg.slots,
        duration,
        final_rates: rates,
        admitted: admitted.iter().map(|&c| per_sec(c)).collect(),
        delivered: delivered.iter().map(|&c| per_sec(c)).collect(),
        drop_fraction,
        violation,
        link_throughput,
        packets_admitted: admitted,
        packets_delivered: delivered,
        packets_dropped: dropped,
        packets_in_flight: in_flight,
        saturated,
    })
}

fn open_links(mu: &LinkTable) -> Vec<Vec<Vec<bool>>> {
    mu.iter().map(|r| r.iter().map(|v| v.iter().map(|&x| x > 0.0).collect()).collect()).collect()
}

/// Drop fraction above which a run counts as overloaded.
pub const SATURATION_DROP: f64 = 0.5;

fn interarrival<R: Rng + ?Sized>(rate: f64, bits: f64, rng: &mut R) -> f64 {
    if rate > 0.0 {
        Exp::new(rate / bits).expect("positive rate").sample(rng)
    } else {
        f64::INFINITY
    }
}

fn first_arrival<R: Rng + ?Sized>(rate: f64, bits: f64, from: f64, rng: &mut R) -> f64 {
    from + interarrival(rate, bits, rng)
}

/// Estimated arrival rate over a window: bits counted divided by its length.
pub fn estimate_arrival_rates(bits: &Arrivals, window: f64) -> Arrivals {
    Arrivals(bits.0.iter().map(|r| r.iter().map(|v| v.iter().map(|x| x / window).collect()).collect()).collect())
}
