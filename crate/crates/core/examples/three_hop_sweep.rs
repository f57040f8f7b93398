//! Sum rate and gains over the three-hop relay grid; writes the CSV to the
//! temp directory and prints a short summary.

use dynroute::sweep::{run_sweep, SweepSpec};

fn main() -> dynroute::error::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/fig5.toml");
    let (spec, base) = SweepSpec::load(path.as_ref())?;
    let table = run_sweep(&spec, &base)?;
    let out = std::env::temp_dir().join("fig5.csv");
    table.write_atomic(&out)?;
    println!("{} rows -> {}", table.rows.len(), out.display());
    for s in ["ocdr", "tcdr", "static"] {
        let col = format!("F_{s}");
        let best = (0..table.rows.len())
            .filter_map(|r| table.value(r, &col).map(|v| (r, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((r, v)) = best {
            println!("{s:<6} max F {v:.4e} at ({}, {})", table.rows[r][0], table.rows[r][1]);
        }
    }
    for g in ["gain_ocdr_static", "gain_tcdr_static", "gain_ocdr_tcdr"] {
        let vals: Vec<f64> = (0..table.rows.len()).filter_map(|r| table.value(r, g)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let peak = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("{g:<17} mean {mean:5.1}%  peak {peak:5.1}%");
    }
    Ok(())
}
