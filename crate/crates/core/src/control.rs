//! Analytic control loop shared by OCDR and TCDR.
//!
//! Each round plays one `T₁` period with expectations in place of slot
//! realizations: nodes recompute `μ̂`, `ρ*` and the limits they grant,
//! traffic settles to the Eq.-5 split, and every node nudges its own
//! parameters along the sensitivity it received.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{evaluate, propagate_flows, sensitivity, Evaluation, LinkTable, Network, Shares};
use crate::qos::RateTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    /// Source weight `α`/`α′`, floored at zero.
    Share,
    /// Priority exponent `β`, stepped in log space and floored at `β_min`.
    Priority,
}

/// A parameter set owned by the nodes and mapped to `μ̂`.
pub trait Controller: Clone {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]);
    fn kinds(&self) -> Vec<ParamKind>;
    /// Group id per parameter; rows sharing a group are rescaled together.
    fn groups(&self) -> Vec<usize>;
    fn mu_hat(&self, net: &Network) -> Result<LinkTable>;
    /// `∂F/∂p` given `∂F/∂μ̂`.
    fn pullback(&self, net: &Network, d_mu_hat: &LinkTable) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    /// Initial relative step for shares.
    pub step_share: f64,
    /// Initial step for `ln β`.
    pub step_priority: f64,
    /// Rounds between priority updates (the `T₂/T₁` ratio in analytic mode).
    pub priority_period: usize,
    pub beta_min: f64,
    pub alpha_min: f64,
    /// Relative change in `F` treated as stalled.
    pub tol: f64,
    /// Consecutive stalled rounds needed to stop.
    pub patience: usize,
    pub max_rounds: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            step_share: 1e-2,
            step_priority: 1e-2,
            priority_period: 10,
            beta_min: 1e-6,
            alpha_min: 0.0,
            tol: 1e-5,
            patience: 20,
            max_rounds: 10_000,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        use crate::error::Error;
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.step_share) || !pos(self.step_priority) || !pos(self.beta_min) || !pos(self.tol) {
            return Err(Error::Config("step sizes, beta_min and tol must be positive".into()));
        }
        if !(self.alpha_min >= 0.0) || self.priority_period == 0 || self.max_rounds == 0 {
            return Err(Error::Config("alpha_min >= 0, priority_period and max_rounds >= 1 required".into()));
        }
        Ok(())
    }

    fn window(&self) -> usize {
        self.patience.max(2 * self.priority_period)
    }
}

/// Outcome of a control run.
#[derive(Debug, Clone)]
pub struct Report<C> {
    pub state: C,
    pub shares: Shares,
    pub objective: f64,
    pub table: RateTable,
    pub rounds: usize,
    pub converged: bool,
    /// `F` after every round.
    pub trace: Vec<f64>,
}

/// One analytic round without any parameter change.
pub fn assess<C: Controller>(net: &Network, ctrl: &C, shares: &Shares) -> Result<Evaluation> {
    let mu_hat = ctrl.mu_hat(net)?;
    Ok(evaluate(net, mu_hat, shares))
}

/// Gradient of `F` for fixed limit messages.
pub fn gradient<C: Controller>(net: &Network, ctrl: &C, shares: &Shares) -> Result<(f64, Vec<f64>)> {
    let eval = assess(net, ctrl, shares)?;
    let sens = sensitivity(net, &eval, shares);
    Ok((eval.objective, ctrl.pullback(net, &sens.d_mu_hat)?))
}

fn renormalize(p: &mut [f64], groups: &[usize]) {
    let n_groups = groups.iter().copied().max().map_or(0, |g| g + 1);
    let mut top = vec![0.0f64; n_groups];
    for (i, &g) in groups.iter().enumerate() {
        top[g] = top[g].max(p[i]);
    }
    for (i, &g) in groups.iter().enumerate() {
        if top[g] > 0.0 {
            p[i] /= top[g];
        }
    }
}

/// Sign-adaptive ascent: every parameter keeps its own step, growing while
/// its gradient keeps sign and shrinking when it flips; a round that lowers
/// `F` under unchanged limits is undone and all steps halve.
struct Stepper {
    kinds: Vec<ParamKind>,
    groups: Vec<usize>,
    steps: Vec<f64>,
    last_sign: Vec<f64>,
    hyper: Hyper,
}

const GROW: f64 = 1.2;
const SHRINK: f64 = 0.5;
const MAX_STEP_SHARE: f64 = 0.25;
const MAX_STEP_PRIORITY: f64 = 1.0;

impl Stepper {
    fn new<C: Controller>(ctrl: &C, hyper: Hyper) -> Self {
        let kinds = ctrl.kinds();
        let steps = kinds
            .iter()
            .map(|k| match k {
                ParamKind::Share => hyper.step_share,
                ParamKind::Priority => hyper.step_priority,
            })
            .collect();
        let n = kinds.len();
        Stepper { groups: ctrl.groups(), kinds, steps, last_sign: vec![0.0; n], hyper }
    }

    fn propose(&mut self, p: &[f64], grad: &[f64], priorities: bool) -> Vec<f64> {
        let mut q = p.to_vec();
        for i in 0..p.len() {
            let kind = self.kinds[i];
            if kind == ParamKind::Priority && !priorities {
                continue;
            }
            let s = if grad[i] > 0.0 {
                1.0
            } else if grad[i] < 0.0 {
                -1.0
            } else {
                0.0
            };
            let cap = if kind == ParamKind::Share { MAX_STEP_SHARE } else { MAX_STEP_PRIORITY };
            if s * self.last_sign[i] > 0.0 {
                self.steps[i] = (self.steps[i] * GROW).min(cap);
            } else if s * self.last_sign[i] < 0.0 {
                self.steps[i] *= SHRINK;
            }
            self.last_sign[i] = s;
            q[i] = match kind {
                ParamKind::Share => (p[i] + s * self.steps[i]).max(self.hyper.alpha_min),
                ParamKind::Priority => (p[i] * (s * self.steps[i]).exp()).max(self.hyper.beta_min),
            };
        }
        renormalize(&mut q, &self.groups);
        for (i, k) in self.kinds.iter().enumerate() {
            if *k == ParamKind::Priority {
                q[i] = q[i].max(self.hyper.beta_min);
            }
        }
        q
    }

    fn reject(&mut self) {
        self.steps.iter_mut().for_each(|s| *s *= SHRINK);
        self.last_sign.iter_mut().for_each(|s| *s = 0.0);
    }

    fn exhausted(&self) -> bool {
        self.steps.iter().all(|&s| s < 1e-12)
    }
}

/// Per-node ascent state carried across rounds.
pub struct Ascent {
    stepper: Stepper,
}

impl Ascent {
    pub fn new<C: Controller>(ctrl: &C, hyper: Hyper) -> Self {
        Ascent { stepper: Stepper::new(ctrl, hyper) }
    }

    /// One update under fixed limits; `priorities` also moves `β`.
    /// Returns `F` before the step.
    pub fn step<C: Controller>(&mut self, net: &Network, ctrl: &mut C, shares: &Shares, priorities: bool) -> Result<f64> {
        let eval = assess(net, ctrl, shares)?;
        let f = eval.objective;
        let sens = sensitivity(net, &eval, shares);
        let grad = ctrl.pullback(net, &sens.d_mu_hat)?;
        let q = self.stepper.propose(&ctrl.params(), &grad, priorities);
        let mut next = ctrl.clone();
        next.set_params(&q);
        if assess(net, &next, shares)?.objective >= f {
            *ctrl = next;
        } else {
            self.stepper.reject();
        }
        Ok(f)
    }
}

/// Runs rounds until `F` stalls for a full window or the round cap is hit.
///
/// `shares` are the limit fractions in force before the first round; pass
/// `None` for a cold start where nothing has been granted yet.
pub fn run<C: Controller>(net: &Network, mut ctrl: C, hyper: Hyper, shares: Option<Shares>) -> Result<Report<C>> {
    hyper.validate()?;
    let mut shares = shares.unwrap_or_else(|| Shares(net.zero_table()));
    let mut ascent = Ascent::new(&ctrl, hyper);
    let mut trace = Vec::new();
    let mut stalled = 0usize;
    let mut converged = false;
    let mut prev_f = f64::NAN;
    let mut rounds = 0;

    while rounds < hyper.max_rounds {
        rounds += 1;
        let priorities = rounds % hyper.priority_period == 0;
        let f = ascent.step(net, &mut ctrl, &shares, priorities)?;
        // limit messages for the next round follow the traffic that now flows
        let mut settled = assess(net, &ctrl, &shares)?;
        let arrivals = propagate_flows(net, &mut settled)?;
        shares = arrivals.apportion(net);

        trace.push(f);
        if prev_f.is_finite() && (f - prev_f).abs() / f.max(1.0) < hyper.tol {
            stalled += 1;
        } else {
            stalled = 0;
        }
        prev_f = f;
        if stalled >= hyper.window() || ascent.stepper.exhausted() {
            converged = true;
            break;
        }
    }

    let mut eval = assess(net, &ctrl, &shares)?;
    propagate_flows(net, &mut eval)?;
    trace.push(eval.objective);
    Ok(Report {
        state: ctrl,
        shares,
        objective: eval.objective,
        table: eval.table,
        rounds,
        converged,
        trace,
    })
}
