//! Optimize a one-relay chain, then check the admitted rate and deadline
//! misses in the slot-level simulator.

use dynroute::scenario::Scenario;
use dynroute::scheme::{solve, Scheme, Starts};
use dynroute::sim::{run_sim, SimInit};

fn main() -> dynroute::error::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/chain.toml");
    let sc = Scenario::load(path.as_ref())?;
    let net = sc.network()?;
    let sol = solve(&net, Scheme::Ocdr, sc.control, Starts::Cold)?;
    println!("analytic rate {:.4}", sol.objective);

    let init = SimInit { state: sol.state.clone(), source_rates: sol.source_rates().to_vec() };
    let m = run_sim(&net, &init, &sc.sim)?;
    println!("admitted {:.4}  delivered {:.4}", m.admitted[0], m.delivered[0]);
    println!("drops {:.2e}  worst per-node violation {:.2e} (target {:.0e})", m.drop_fraction[0], m.max_violation(0), sc.qos.loss);
    Ok(())
}
