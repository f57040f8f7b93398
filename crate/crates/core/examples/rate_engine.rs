//! Ergodic link rates under Rayleigh fading: a single link, and the share
//! each link gets when a node always picks the best weighted SNR.

use dynroute::channel::RateEngine;

fn main() -> dynroute::error::Result<()> {
    let engine = RateEngine::new(1e6);
    println!("single link, W = 1 MHz");
    for g in [0.1, 1.0, 8.0, 37.0, 1000.0] {
        println!("  gamma_bar {g:>7}: {:.6e} bit/s", engine.single(g)?);
    }

    let gbars = [8.0, 2.0, 1.0];
    for betas in [[1.0, 1.0, 1.0], [0.5, 1.0, 1.0], [0.1, 1.0, 1.0]] {
        let rates: Vec<String> =
            (0..3).map(|j| engine.opportunistic(j, &betas, &gbars).map(|r| format!("{r:.4e}"))).collect::<Result<_, _>>()?;
        println!("betas {betas:?} -> [{}]", rates.join(", "));
    }
    Ok(())
}
