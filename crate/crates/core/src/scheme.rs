//! One entry point per scheme, returning a saved controller state that the
//! simulator and the CLI can reuse.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::benchmark::{best_static, lift_state, StaticAssignment, StaticValue, DEFAULT_CAP};
use crate::control::{self, Controller, Hyper, Report};
use crate::error::{Error, Result};
use crate::network::{propagate_flows, settle_shares, LinkTable, Network, Shares};
use crate::ocdr::{run_control_loop, Ocdr, OcdrState};
use crate::qos::RateTable;
use crate::tcdr::{run_control_loop_td, Tcdr, TcdrState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ocdr,
    Tcdr,
    Static,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Ocdr, Scheme::Tcdr, Scheme::Static];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ocdr => "ocdr",
            Scheme::Tcdr => "tcdr",
            Scheme::Static => "static",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ocdr" => Ok(Scheme::Ocdr),
            "tcdr" => Ok(Scheme::Tcdr),
            "static" | "benchmark" => Ok(Scheme::Static),
            other => Err(Error::Config(format!("unknown scheme '{other}' (expected ocdr, tcdr or static)"))),
        }
    }
}

/// Controller parameters of a finished run. A static route is stored as
/// time-division weights that are zero off the chosen links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum SchemeState {
    Ocdr(OcdrState),
    Tcdr(TcdrState),
    Static { relay_of: Vec<Vec<usize>>, state: TcdrState },
}

impl SchemeState {
    pub fn scheme(&self) -> Scheme {
        match self {
            SchemeState::Ocdr(_) => Scheme::Ocdr,
            SchemeState::Tcdr(_) => Scheme::Tcdr,
            SchemeState::Static { .. } => Scheme::Static,
        }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        match self {
            SchemeState::Ocdr(s) => s.validate(net),
            SchemeState::Tcdr(s) | SchemeState::Static { state: s, .. } => s.validate(net),
        }
    }

    pub fn mu_hat(&self, net: &Network) -> Result<LinkTable> {
        match self {
            SchemeState::Ocdr(s) => Ocdr { net, state: s.clone() }.mu_hat(net),
            SchemeState::Tcdr(s) | SchemeState::Static { state: s, .. } => Tcdr { net, state: s.clone() }.mu_hat(net),
        }
    }
}

/// Which initial states a solve tries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Starts {
    /// Equal weights everywhere.
    Cold,
    /// Cold start, plus a start from the best static route; the better
    /// result is kept.
    ColdAndStatic,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub scheme: Scheme,
    pub state: SchemeState,
    pub shares: Shares,
    pub objective: f64,
    pub table: RateTable,
    pub converged: bool,
    pub rounds: usize,
    pub trace: Vec<f64>,
    /// Set for the static scheme.
    pub equal_share: Option<f64>,
}

impl Solution {
    pub fn source_rates(&self) -> &[f64] {
        &self.table.source_rate
    }
}

fn from_report<S>(scheme: Scheme, r: Report<S>, wrap: impl FnOnce(S) -> SchemeState) -> Solution {
    Solution {
        scheme,
        state: wrap(r.state),
        shares: r.shares,
        objective: r.objective,
        table: r.table,
        converged: r.converged,
        rounds: r.rounds,
        trace: r.trace,
        equal_share: None,
    }
}

fn keep_better(a: Solution, b: Solution) -> Solution {
    // ties keep the cold start
    if b.objective > a.objective {
        Solution { rounds: a.rounds + b.rounds, ..b }
    } else {
        Solution { rounds: a.rounds + b.rounds, ..a }
    }
}

fn static_solution(net: &Network, a: &StaticAssignment, v: &StaticValue) -> Result<Solution> {
    let state = lift_state(net, a, v)?;
    let mu_hat = crate::tcdr::mu_hat_all_td(net, &state)?;
    let shares = settle_shares(net, &mu_hat, Shares::cold(net), 8)?;
    let mut eval = control::assess(net, &Tcdr { net, state: state.clone() }, &shares)?;
    propagate_flows(net, &mut eval)?;
    Ok(Solution {
        scheme: Scheme::Static,
        state: SchemeState::Static { relay_of: a.relay_of.clone(), state },
        shares,
        objective: v.objective,
        table: eval.table,
        converged: true,
        rounds: 0,
        trace: vec![v.objective],
        equal_share: Some(v.equal_share),
    })
}

fn run_ocdr(net: &Network, init: OcdrState, hyper: Hyper) -> Result<Solution> {
    Ok(from_report(Scheme::Ocdr, run_control_loop(net, init, hyper, None)?, SchemeState::Ocdr))
}

fn run_tcdr(net: &Network, init: TcdrState, hyper: Hyper) -> Result<Solution> {
    Ok(from_report(Scheme::Tcdr, run_control_loop_td(net, init, hyper, None)?, SchemeState::Tcdr))
}

/// Optimizes one scheme on `net`.
pub fn solve(net: &Network, scheme: Scheme, hyper: Hyper, starts: Starts) -> Result<Solution> {
    Ok(solve_all(net, &[scheme], hyper, starts)?.remove(0))
}

/// Solves the requested schemes, sharing one static search.
pub fn solve_all(net: &Network, schemes: &[Scheme], hyper: Hyper, starts: Starts) -> Result<Vec<Solution>> {
    let warm = starts == Starts::ColdAndStatic;
    let best = if warm || schemes.contains(&Scheme::Static) { Some(best_static(net, hyper, DEFAULT_CAP)?) } else { None };
    schemes
        .iter()
        .map(|&s| match s {
            Scheme::Static => {
                let b = best.as_ref().expect("static search ran");
                static_solution(net, &b.assignment, &b.value)
            }
            Scheme::Ocdr => {
                let cold = run_ocdr(net, OcdrState::cold(net), hyper)?;
                match (&best, warm) {
                    (Some(b), true) => {
                        let init = OcdrState::from_usage(net, &b.assignment.usage(net), hyper.beta_min);
                        Ok(keep_better(cold, run_ocdr(net, init, hyper)?))
                    }
                    _ => Ok(cold),
                }
            }
            Scheme::Tcdr => {
                let cold = run_tcdr(net, TcdrState::cold(net), hyper)?;
                match (&best, warm) {
                    (Some(b), true) => Ok(keep_better(cold, run_tcdr(net, lift_state(net, &b.assignment, &b.value)?, hyper)?)),
                    _ => Ok(cold),
                }
            }
        })
        .collect()
}

/// What `optimize` writes and `simulate` reads back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedState {
    pub objective: f64,
    pub source_rates: Vec<f64>,
    #[serde(flatten)]
    pub state: SchemeState,
}

impl SavedState {
    pub fn from_solution(sol: &Solution) -> Self {
        SavedState { objective: sol.objective, source_rates: sol.source_rates().to_vec(), state: sol.state.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Human-readable per-link rate table: `μ̂`, `μ`, `ρ̂` and carried flow for
/// every planned link and source.
pub fn format_rate_table(net: &Network, table: &RateTable) -> String {
    use std::fmt::Write;
    let topo = &net.topo;
    let mut out = String::new();
    let _ = writeln!(out, "{:<8}{:<8}{:>4}{:>14}{:>14}{:>14}{:>14}", "from", "to", "k", "mu_hat", "mu", "limit", "flow");
    for i in topo.transmitters() {
        for (l, link) in net.links(i).iter().enumerate() {
            for &k in &link.sources {
                let _ = writeln!(
                    out,
                    "{:<8}{:<8}{:>4}{:>14.6e}{:>14.6e}{:>14.6e}{:>14.6e}",
                    topo.node(i).to_string(),
                    topo.node(link.to).to_string(),
                    k + 1,
                    table.mu_hat[i][l][k],
                    table.mu[i][l][k],
                    table.rho_hat[i][l][k],
                    table.rho_link[i][l][k],
                );
            }
        }
    }
    for (k, r) in table.source_rate.iter().enumerate() {
        let _ = writeln!(out, "rho_{} = {r:.6e}", k + 1);
    }
    out
}
