//! Layered `K`-source, `L`-hop, `M`-relay-per-hop network.
//!
//! Nodes are stored densely in the order sources, relays (hop by hop, then
//! by index), destinations. All public ids are 1-based to match the usual
//! `S_k`, `R_{l,m}`, `D_k` naming; dense indices are 0-based.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    Source(usize),
    Relay { hop: usize, index: usize },
    Destination(usize),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Source(k) => write!(f, "S{k}"),
            NodeId::Relay { hop, index } => write!(f, "R{hop}.{index}"),
            NodeId::Destination(k) => write!(f, "D{k}"),
        }
    }
}

/// Physical-layer constants shared by every link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Bandwidth `W` in Hz.
    pub bandwidth: f64,
    /// `cP / (N₀W)`: mean SNR at unit distance.
    pub snr_scale: f64,
    /// Path-loss exponent `δ`.
    pub path_loss_exponent: f64,
    /// Slot duration `T` in seconds.
    pub slot: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.bandwidth > 0.0
            && self.snr_scale > 0.0
            && self.path_loss_exponent >= 0.0
            && self.slot > 0.0
            && self.bandwidth.is_finite()
            && self.snr_scale.is_finite()
            && self.slot.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid channel parameters {self:?}")))
        }
    }

    /// Mean link SNR `γ̄ = snr_scale · d^{-δ}`.
    pub fn avg_snr(&self, distance: f64) -> Result<f64> {
        if !(distance > 0.0) || !distance.is_finite() {
            return Err(Error::Geometry(format!(
                "link length must be positive and finite, got {distance}"
            )));
        }
        Ok(self.snr_scale * distance.powf(-self.path_loss_exponent))
    }
}

/// 1-D node positions for every node implied by `(K, L, M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Positions {
    pub sources: Vec<f64>,
    /// `relays[l][m]` is the position of relay `m` in hop `l`.
    pub relays: Vec<Vec<f64>>,
    pub destinations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    k: usize,
    l: usize,
    m: usize,
    nodes: Vec<NodeId>,
    positions: Vec<f64>,
    next_hops: Vec<Vec<usize>>,
    prev_hops: Vec<Vec<usize>>,
}

impl Topology {
    /// Wires the full layered graph: `S → R₁ → … → R_L → D`.
    pub fn build_linear(k: usize, l: usize, m: usize, positions: &Positions) -> Result<Self> {
        if k < 1 || l < 1 || m < 1 {
            return Err(Error::Config(format!(
                "K, L, M must all be at least 1 (got K={k}, L={l}, M={m})"
            )));
        }
        if positions.sources.len() != k {
            return Err(Error::Config(format!(
                "expected {k} source positions, got {}",
                positions.sources.len()
            )));
        }
        if positions.destinations.len() != k {
            return Err(Error::Config(format!(
                "expected {k} destination positions, got {}",
                positions.destinations.len()
            )));
        }
        if positions.relays.len() != l {
            return Err(Error::Config(format!(
                "expected relay positions for {l} hops, got {}",
                positions.relays.len()
            )));
        }
        for (hop, row) in positions.relays.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Config(format!(
                    "hop {} needs {m} relay positions, got {}",
                    hop + 1,
                    row.len()
                )));
            }
        }

        let n = 2 * k + l * m;
        let mut nodes = Vec::with_capacity(n);
        let mut pos = Vec::with_capacity(n);
        for (i, &p) in positions.sources.iter().enumerate() {
            nodes.push(NodeId::Source(i + 1));
            pos.push(p);
        }
        for (hop, row) in positions.relays.iter().enumerate() {
            for (i, &p) in row.iter().enumerate() {
                nodes.push(NodeId::Relay { hop: hop + 1, index: i + 1 });
                pos.push(p);
            }
        }
        for (i, &p) in positions.destinations.iter().enumerate() {
            nodes.push(NodeId::Destination(i + 1));
            pos.push(p);
        }
        if let Some(bad) = pos.iter().find(|p| !p.is_finite()) {
            return Err(Error::Config(format!("non-finite node position {bad}")));
        }

        let relay_base = k;
        let dest_base = k + l * m;
        let hop_nodes = |hop: usize| (relay_base + (hop - 1) * m)..(relay_base + hop * m);

        let mut next_hops = vec![Vec::new(); n];
        for i in 0..k {
            next_hops[i] = hop_nodes(1).collect();
        }
        for hop in 1..=l {
            let targets: Vec<usize> = if hop < l {
                hop_nodes(hop + 1).collect()
            } else {
                (dest_base..dest_base + k).collect()
            };
            for i in hop_nodes(hop) {
                next_hops[i] = targets.clone();
            }
        }
        let mut prev_hops = vec![Vec::new(); n];
        for (i, outs) in next_hops.iter().enumerate() {
            for &j in outs {
                prev_hops[j].push(i);
            }
        }

        Ok(Topology { k, l, m, nodes, positions: pos, next_hops, prev_hops })
    }

    pub fn num_sources(&self) -> usize {
        self.k
    }

    pub fn num_hops(&self) -> usize {
        self.l
    }

    pub fn relays_per_hop(&self) -> usize {
        self.m
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, idx: usize) -> NodeId {
        self.nodes[idx]
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        match id {
            NodeId::Source(k) if (1..=self.k).contains(&k) => Some(k - 1),
            NodeId::Relay { hop, index }
                if (1..=self.l).contains(&hop) && (1..=self.m).contains(&index) =>
            {
                Some(self.k + (hop - 1) * self.m + index - 1)
            }
            NodeId::Destination(k) if (1..=self.k).contains(&k) => Some(self.k + self.l * self.m + k - 1),
            _ => None,
        }
    }

    pub fn source_index(&self, k: usize) -> usize {
        k
    }

    pub fn destination_index(&self, k: usize) -> usize {
        self.k + self.l * self.m + k
    }

    pub fn relay_index(&self, hop: usize, m: usize) -> usize {
        self.k + (hop - 1) * self.m + m
    }

    pub fn position(&self, idx: usize) -> f64 {
        self.positions[idx]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        (self.positions[a] - self.positions[b]).abs()
    }

    /// `U_i`, ordered by hop then index.
    pub fn next_hops(&self, idx: usize) -> &[usize] {
        &self.next_hops[idx]
    }

    /// `V_i`, the inverse of `U`.
    pub fn prev_hops(&self, idx: usize) -> &[usize] {
        &self.prev_hops[idx]
    }

    pub fn is_source(&self, idx: usize) -> bool {
        idx < self.k
    }

    pub fn is_destination(&self, idx: usize) -> bool {
        idx >= self.k + self.l * self.m
    }

    /// Hop of a relay (1-based), `0` for sources, `L + 1` for destinations.
    pub fn layer(&self, idx: usize) -> usize {
        match self.nodes[idx] {
            NodeId::Source(_) => 0,
            NodeId::Relay { hop, .. } => hop,
            NodeId::Destination(_) => self.l + 1,
        }
    }

    /// Nodes that transmit (sources and relays), ordered from the last hop
    /// back to the sources.
    pub fn transmitters_bottom_up(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.k + self.l * self.m).rev()
    }

    pub fn transmitters(&self) -> std::ops::Range<usize> {
        0..self.k + self.l * self.m
    }

    /// Sources whose data can be buffered at `idx`.
    pub fn carried_sources(&self, idx: usize) -> Vec<usize> {
        match self.nodes[idx] {
            NodeId::Source(k) => vec![k - 1],
            NodeId::Relay { .. } => (0..self.k).collect(),
            NodeId::Destination(_) => Vec::new(),
        }
    }

    /// Sources whose data may cross link `from → to`. Last-hop relays only
    /// deliver source `k` to `D_k`.
    pub fn link_sources(&self, from: usize, to: usize) -> Vec<usize> {
        match self.nodes[to] {
            NodeId::Destination(k) => {
                if self.carried_sources(from).contains(&(k - 1)) {
                    vec![k - 1]
                } else {
                    Vec::new()
                }
            }
            _ => self.carried_sources(from),
        }
    }

    /// Mean SNR of every outgoing link of `idx`, in `U_i` order.
    pub fn link_snrs(&self, idx: usize, params: &ChannelParams) -> Result<Vec<f64>> {
        self.next_hops[idx]
            .iter()
            .map(|&j| {
                params.avg_snr(self.distance(idx, j)).map_err(|e| match e {
                    Error::Geometry(msg) => {
                        Error::Geometry(format!("{} -> {}: {msg}", self.nodes[idx], self.nodes[j]))
                    }
                    other => other,
                })
            })
            .collect()
    }

    pub fn num_edges(&self) -> usize {
        self.next_hops.iter().map(Vec::len).sum()
    }
}
