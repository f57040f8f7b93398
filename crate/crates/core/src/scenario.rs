//! Scenario files (TOML).
//!
//! ```toml
//! name = "twohop"
//! sources = 2
//! hops = 1
//! relays_per_hop = 2
//! weights = [1.0, 1.0]
//!
//! [channel]
//! bandwidth = 1e6          # Hz
//! snr_scale = 1.0          # cP/(N0 W) at unit distance
//! path_loss_exponent = 3.0
//! slot = 1e-4              # s
//!
//! [qos]
//! deadline = 1e-4          # s, per node
//! loss = 1e-6              # per node
//! # budget = "end-to-end"  # split deadline and loss evenly along the path
//!
//! [positions]
//! sources = [0.0, 0.2]
//! relays = [[0.5, 0.5]]    # one row per hop
//! destinations = [1.0, 0.8]
//!
//! [control]                # optional, see `Hyper`
//! [sim]                    # optional, see `SimConfig`
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::Hyper;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::qos::QosSpec;
use crate::sim::SimConfig;
use crate::topology::{ChannelParams, Positions, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    /// `deadline` and `loss` apply at every node.
    #[default]
    PerNode,
    /// `deadline` and `loss` are end-to-end and split evenly over the path.
    EndToEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosConfig {
    pub deadline: f64,
    pub loss: f64,
    #[serde(default)]
    pub budget: Budget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub sources: usize,
    pub hops: usize,
    pub relays_per_hop: usize,
    pub weights: Vec<f64>,
    pub channel: ChannelParams,
    pub qos: QosConfig,
    pub positions: Positions,
    #[serde(default)]
    pub control: Hyper,
    #[serde(default)]
    pub sim: SimConfig,
}

fn default_name() -> String {
    "scenario".into()
}

impl Scenario {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse { file: origin.to_string(), msg: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read scenario {}: {e}", path.display())))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn topology(&self) -> Result<Topology> {
        Topology::build_linear(self.sources, self.hops, self.relays_per_hop, &self.positions)
    }

    pub fn qos_spec(&self, topo: &Topology) -> Result<QosSpec> {
        match self.qos.budget {
            Budget::PerNode => QosSpec::uniform(topo, self.qos.deadline, self.qos.loss),
            Budget::EndToEnd => QosSpec::from_end_to_end(topo, self.qos.deadline, self.qos.loss),
        }
    }

    /// Validates everything and builds the analytic network.
    pub fn network(&self) -> Result<Network> {
        self.control.validate()?;
        self.sim.validate()?;
        let topo = self.topology()?;
        let qos = self.qos_spec(&topo)?;
        Network::new(topo, self.channel, qos, self.weights.clone())
    }

    /// Relay position setter with 1-based hop and index.
    pub fn set_relay(&mut self, hop: usize, index: usize, pos: f64) -> Result<()> {
        let slot = hop
            .checked_sub(1)
            .and_then(|h| self.positions.relays.get_mut(h))
            .and_then(|row| index.checked_sub(1).and_then(|m| row.get_mut(m)))
            .ok_or_else(|| Error::Config(format!("no relay R{hop}.{index}")))?;
        *slot = pos;
        Ok(())
    }
}
