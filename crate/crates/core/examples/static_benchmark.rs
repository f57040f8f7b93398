//! Exhaustive search for the best fixed relay assignment on the three-hop
//! scenario, then the same network under both dynamic schemes.

use dynroute::benchmark::{best_static, DEFAULT_CAP};
use dynroute::scenario::Scenario;
use dynroute::scheme::{solve_all, Scheme, Starts};

fn main() -> dynroute::error::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/threehop.toml");
    let mut sc = Scenario::load(path.as_ref())?;
    sc.set_relay(1, 2, 0.35)?;
    sc.set_relay(2, 2, 0.8)?;
    let net = sc.network()?;

    let best = best_static(&net, sc.control, DEFAULT_CAP)?;
    println!("best assignment {:?}", best.assignment.relay_of);
    println!("  F = {:.4e} (equal split {:.4e})", best.value.objective, best.value.equal_share);

    for sol in solve_all(&net, &[Scheme::Ocdr, Scheme::Tcdr], sc.control, Starts::ColdAndStatic)? {
        let gain = 100.0 * (sol.objective - best.value.objective) / best.value.objective;
        println!("{:<5} F = {:.4e}  gain {gain:+.1}%  rounds {}", sol.scheme, sol.objective, sol.rounds);
    }
    Ok(())
}
