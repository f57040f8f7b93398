//! Per-source rates versus the weight ratio over random relay placements; writes the CSV to the
//! temp directory and prints a short summary.

use dynroute::sweep::{run_sweep, SweepSpec};

fn main() -> dynroute::error::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/fig5566.toml");
    let (spec, base) = SweepSpec::load(path.as_ref())?;
    let table = run_sweep(&spec, &base)?;
    let out = std::env::temp_dir().join("fig5566.csv");
    table.write_atomic(&out)?;
    println!("{} rows -> {}", table.rows.len(), out.display());
    for r in 0..table.rows.len() {
        let v = |c: &str| table.value(r, c).unwrap_or(f64::NAN);
        println!(
            "f2/f1 {:>4}: r2 ocdr {:.3e} tcdr {:.3e} static {:.3e} | weighted sum ocdr {:.3e} static {:.3e}",
            table.rows[r][0], v("r2_ocdr"), v("r2_tcdr"), v("r2_static"), v("wsum_ocdr"), v("wsum_static")
        );
    }
    Ok(())
}
