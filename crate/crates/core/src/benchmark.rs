//! Best fixed route: every source uses one relay per hop for the whole run.
//! Relays shared by several sources split their time optimally.

use rayon::prelude::*;

use crate::control::Hyper;
use crate::error::{Error, Result};
use crate::network::{LinkPlan, Network, Shares};
use crate::tcdr::{evaluate_objective_td, run_control_loop_td, TcdrState};

/// Default ceiling on `M^(K·L)`.
pub const DEFAULT_CAP: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StaticAssignment {
    /// `relay_of[k][hop]`, zero-based relay index within the hop.
    pub relay_of: Vec<Vec<usize>>,
}

impl StaticAssignment {
    /// Node sequence of source `k` from source to destination.
    pub fn path(&self, net: &Network, k: usize) -> Vec<usize> {
        let t = &net.topo;
        let mut p = vec![t.source_index(k)];
        p.extend(self.relay_of[k].iter().enumerate().map(|(h, &m)| t.relay_index(h + 1, m)));
        p.push(t.destination_index(k));
        p
    }

    /// `[node][link][k]` flags for the links this assignment uses.
    pub fn usage(&self, net: &Network) -> Vec<Vec<Vec<bool>>> {
        let kk = net.num_sources();
        let mut used: Vec<Vec<Vec<bool>>> =
            (0..net.topo.num_nodes()).map(|i| vec![vec![false; kk]; net.links(i).len()]).collect();
        for k in 0..kk {
            for w in self.path(net, k).windows(2) {
                if let Some(l) = net.links(w[0]).iter().position(|x| x.to == w[1]) {
                    used[w[0]][l][k] = true;
                }
            }
        }
        used
    }

    /// The network with only this assignment's links.
    pub fn restrict(&self, net: &Network) -> Result<Network> {
        let used = self.usage(net);
        let plan = LinkPlan::restricted(&net.topo, |i, j, k| {
            net.links(i).iter().position(|x| x.to == j).is_some_and(|l| used[i][l][k])
        });
        net.replan(plan)
    }
}

/// Every assignment in lexicographic order of `(k, hop)`.
pub fn enumerate_assignments(k: usize, l: usize, m: usize, cap: u128) -> Result<Vec<StaticAssignment>> {
    let digits = (k * l) as u32;
    let count = (m as u128).checked_pow(digits).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut idx = vec![0usize; k * l];
    for _ in 0..count {
        out.push(StaticAssignment { relay_of: idx.chunks(l.max(1)).map(|c| c.to_vec()).take(k).collect() });
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < m {
                break;
            }
            idx[d] = 0;
        }
    }
    if l == 0 {
        out.truncate(1);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaticValue {
    /// With the best time split on shared relays.
    pub objective: f64,
    /// With every shared relay splitting its time equally.
    pub equal_share: f64,
    /// `α′` realizing `objective` on the restricted network.
    pub state: TcdrState,
}

const GRID_1D: usize = 400;
const GRID_2D: usize = 40;
/// Grid cells refined after the coarse pass.
const CANDIDATES: usize = 3;
const REFINE_TOL: f64 = 1e-7;

fn shared_nodes(net: &Network) -> Vec<usize> {
    net.topo
        .transmitters()
        .filter(|&i| net.links(i).iter().map(|l| l.sources.len()).sum::<usize>() > 1)
        .collect()
}

fn set_split(st: &mut TcdrState, net: &Network, node: usize, t: f64) {
    for (l, link) in net.links(node).iter().enumerate() {
        for &k in &link.sources {
            st.alpha_prime[node][l][k] = if k == 0 { t } else { 1.0 - t };
        }
    }
}

/// Golden-section search for a maximum on `[a, b]`.
fn golden(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > REFINE_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

fn top_indices(values: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

fn bracket(center: f64, h: f64) -> (f64, f64) {
    ((center - h).max(0.0), (center + h).min(1.0))
}

/// Maximizes over `[0, 1]`: uniform grid, then golden section around the
/// best few grid points.
fn maximize_1d(mut f: impl FnMut(f64) -> Result<f64>, grid: usize) -> Result<(f64, f64)> {
    let h = 1.0 / grid as f64;
    let values = (0..=grid).map(|n| f(n as f64 * h)).collect::<Result<Vec<f64>>>()?;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in top_indices(&values, CANDIDATES) {
        let t = i as f64 * h;
        if values[i] > best.1 {
            best = (t, values[i]);
        }
        let (a, b) = bracket(t, h);
        let r = golden(&mut f, a, b)?;
        if r.1 > best.1 {
            best = r;
        }
    }
    Ok(best)
}

/// Maximizes over `[0, 1]²` the same way, refining with nested golden
/// sections.
fn maximize_2d(mut f: impl FnMut(f64, f64) -> Result<f64>, grid: usize) -> Result<((f64, f64), f64)> {
    let h = 1.0 / grid as f64;
    let n = grid + 1;
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            values.push(f(i as f64 * h, j as f64 * h)?);
        }
    }
    let mut best = ((0.0, 0.0), f64::NEG_INFINITY);
    for c in top_indices(&values, CANDIDATES) {
        let (x0, y0) = ((c / n) as f64 * h, (c % n) as f64 * h);
        if values[c] > best.1 {
            best = ((x0, y0), values[c]);
        }
        let (xa, xb) = bracket(x0, h);
        let (ya, yb) = bracket(y0, h);
        let (x, _) = golden(|x| golden(|y| f(x, y), ya, yb).map(|r| r.1), xa, xb)?;
        let (y, v) = golden(|y| f(x, y), ya, yb)?;
        if v > best.1 {
            best = ((x, y), v);
        }
    }
    Ok(best)
}

/// Closed-form objective of a two-source route as a function of the
/// split on each shared relay.
struct PathModel {
    /// Per source, hops from the source onward: `(rate, penalty, split slot)`.
    hops: Vec<Vec<(f64, f64, Option<usize>)>>,
    weights: Vec<f64>,
}

impl PathModel {
    fn new(a: &StaticAssignment, net: &Network, shared: &[usize]) -> Result<Self> {
        let hops = (0..net.num_sources())
            .map(|k| {
                a.path(net, k)
                    .windows(2)
                    .map(|w| {
                        let d = net.topo.distance(w[0], w[1]);
                        let rate = net.engine.single(net.channel.avg_snr(d)?)?;
                        Ok((rate, net.qos.penalty(w[0], k), shared.iter().position(|&n| n == w[0])))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PathModel { hops, weights: net.weights.clone() })
    }

    fn value(&self, splits: &[f64]) -> f64 {
        let mut f = 0.0;
        for (k, path) in self.hops.iter().enumerate() {
            let mut rho = f64::INFINITY;
            for &(rate, penalty, slot) in path.iter().rev() {
                let share = slot.map_or(1.0, |s| if k == 0 { splits[s] } else { 1.0 - splits[s] });
                rho = ((share * rate).min(rho) - penalty).max(0.0);
            }
            f += self.weights[k] * rho;
        }
        f
    }
}

/// Value of one assignment.
///
/// With two sources and at most two shared relays the split is searched
/// directly; otherwise the time-division ascent runs on the fixed paths.
pub fn evaluate_static(assignment: &StaticAssignment, net: &Network, hyper: Hyper) -> Result<StaticValue> {
    let rnet = assignment.restrict(net)?;
    let shares = Shares::cold(&rnet);
    let base = TcdrState::cold(&rnet);
    let value = |st: &TcdrState| evaluate_objective_td(&rnet, st, &shares).map(|(f, _)| f);
    let shared = shared_nodes(&rnet);
    let equal_share = value(&base)?;

    if shared.is_empty() {
        return Ok(StaticValue { objective: equal_share, equal_share, state: base });
    }
    if rnet.num_sources() == 2 && shared.len() <= 2 {
        let model = PathModel::new(assignment, net, &shared)?;
        let (splits, objective) = if shared.len() == 1 {
            let (t, v) = maximize_1d(|t| Ok(model.value(&[t])), GRID_1D)?;
            (vec![t], v)
        } else {
            let ((x, y), v) = maximize_2d(|x, y| Ok(model.value(&[x, y])), GRID_2D)?;
            (vec![x, y], v)
        };
        let mut state = base;
        for (&node, &t) in shared.iter().zip(&splits) {
            set_split(&mut state, &rnet, node, t);
        }
        return Ok(StaticValue { objective: objective.max(equal_share), equal_share, state });
    }
    let r = run_control_loop_td(&rnet, base.clone(), hyper, Some(shares))?;
    let (objective, state) = if r.objective >= equal_share { (r.objective, r.state) } else { (equal_share, base) };
    Ok(StaticValue { objective, equal_share, state })
}

#[derive(Debug, Clone)]
pub struct BestStatic {
    pub assignment: StaticAssignment,
    pub value: StaticValue,
    /// Index in enumeration order.
    pub index: usize,
}

/// Exhaustive search; ties go to the earliest assignment.
pub fn best_static(net: &Network, hyper: Hyper, cap: u128) -> Result<BestStatic> {
    let t = &net.topo;
    let all = enumerate_assignments(t.num_sources(), t.num_hops(), t.relays_per_hop(), cap)?;
    let values = all.par_iter().map(|a| evaluate_static(a, net, hyper)).collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.objective > values[best].objective {
            best = i;
        }
    }
    Ok(BestStatic { assignment: all[best].clone(), value: values[best].clone(), index: best })
}

/// Lifts a restricted-network `α′` back onto the full link set.
pub fn lift_state(net: &Network, assignment: &StaticAssignment, value: &StaticValue) -> Result<TcdrState> {
    let rnet = assignment.restrict(net)?;
    let mut st = TcdrState::cold(net);
    for row in st.alpha_prime.iter_mut().flatten() {
        row.iter_mut().for_each(|v| *v = 0.0);
    }
    for i in 0..net.topo.num_nodes() {
        for (rl, link) in rnet.links(i).iter().enumerate() {
            let l = net.links(i).iter().position(|x| x.to == link.to).expect("restricted link exists");
            for &k in &link.sources {
                st.alpha_prime[i][l][k] = value.state.alpha_prime[i][rl][k];
            }
        }
    }
    Ok(st)
}
