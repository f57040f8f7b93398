//! Parameter sweeps over relay positions or source weights, written as CSV.
//!
//! A sweep spec is a TOML file naming a scenario (relative to the spec) and
//! either one or more position axes:
//!
//! ```toml
//! scenario = "twohop.toml"
//! schemes = ["ocdr", "tcdr", "static"]
//! output = "fig3.csv"
//!
//! [[axis]]
//! relay = [1, 1]     # hop, index (1-based)
//! from = 0.3
//! to = 0.7
//! step = 0.05
//! ```
//!
//! or a weight experiment over random relay placements:
//!
//! ```toml
//! [weights]
//! ratios = [0.2, 0.5, 1.0, 2.0, 5.0]   # f2 / f1
//! placements = 100
//! seed = 2024
//! range = [0.1, 0.9]
//! ```
//!
//! Position sweeps emit one row per grid point with columns
//! `d_R<h>_<m>...`, then per scheme `F_<s>`, `r<k>_<s>`, `converged_<s>`,
//! then `gain_ocdr_static`, `gain_tcdr_static`, `gain_ocdr_tcdr` (when
//! both schemes ran) and `status`. Weight sweeps emit one row per ratio
//! with `ratio`, per scheme `r<k>_<s>` and `wsum_<s>` averaged over
//! placements, then `placements` and `failed`.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::scheme::{solve_all, Scheme, Starts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    /// `[hop, index]`, both 1-based.
    pub relay: [usize; 2],
    pub from: f64,
    pub to: f64,
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    0.05
}

impl Axis {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !self.from.is_finite() || !self.to.is_finite() || self.to < self.from {
            return Err(Error::Config(format!("axis R{}.{}: need from <= to and step > 0", self.relay[0], self.relay[1])));
        }
        let n = ((self.to - self.from) / self.step + 1e-9).floor() as usize + 1;
        // rounding keeps grid values free of accumulated binary noise
        Ok((0..n).map(|i| ((self.from + i as f64 * self.step) * 1e9).round() / 1e9).collect())
    }

    pub fn label(&self) -> String {
        format!("d_R{}_{}", self.relay[0], self.relay[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSweep {
    pub ratios: Vec<f64>,
    #[serde(default = "default_placements")]
    pub placements: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_range")]
    pub range: [f64; 2],
}

fn default_placements() -> usize {
    100
}

fn default_range() -> [f64; 2] {
    [0.1, 0.9]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub scenario: PathBuf,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_starts")]
    pub starts: Starts,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub axis: Vec<Axis>,
    #[serde(default)]
    pub weights: Option<WeightSweep>,
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

fn default_starts() -> Starts {
    Starts::ColdAndStatic
}

impl SweepSpec {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let spec: SweepSpec =
            toml::from_str(text).map_err(|e| Error::Parse { file: origin.to_string(), msg: e.to_string() })?;
        spec.validate()?;
        Ok(spec)
    }

    /// Loads a spec; relative `scenario` and `output` paths resolve against
    /// the spec's directory.
    pub fn load(path: &Path) -> Result<(Self, Scenario)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read sweep spec {}: {e}", path.display())))?;
        let mut spec = Self::from_toml_str(&text, &path.display().to_string())?;
        let dir = path.parent().unwrap_or(Path::new("."));
        if spec.scenario.is_relative() {
            spec.scenario = dir.join(&spec.scenario);
        }
        if let Some(out) = &spec.output {
            if out.is_relative() {
                spec.output = Some(dir.join(out));
            }
        }
        let scenario = Scenario::load(&spec.scenario)?;
        Ok((spec, scenario))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::Config("sweep needs at least one scheme".into()));
        }
        match (&self.weights, self.axis.is_empty()) {
            (Some(_), false) => Err(Error::Config("a sweep has either position axes or a weights table, not both".into())),
            (None, true) => Err(Error::Config("a sweep needs position axes or a weights table".into())),
            (None, false) => self.axis.iter().try_for_each(|a| a.values().map(|_| ())),
            (Some(w), true) => {
                if w.ratios.is_empty() || w.ratios.iter().any(|r| !(*r > 0.0)) || w.placements == 0 {
                    return Err(Error::Config("weights need positive ratios and placements >= 1".into()));
                }
                if !(w.range[0] < w.range[1]) {
                    return Err(Error::Config("weights range must be increasing".into()));
                }
                Ok(())
            }
        }
    }
}

/// A rectangular table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric value at `(row, column)`; `None` when blank.
    pub fn value(&self, row: usize, name: &str) -> Option<f64> {
        self.column(name).and_then(|c| self.rows[row][c].parse().ok())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn write_atomic(&self, path: &Path) -> Result<()> {
        let bytes = self.to_csv()?;
        let name = path.file_name().ok_or_else(|| Error::Config(format!("bad output path {}", path.display())))?;
        let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path).inspect_err(|_| {
            let _ = std::fs::remove_file(&tmp);
        })?;
        Ok(())
    }
}

pub fn gain(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| 100.0 * (a - b) / b)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn clean(msg: &str) -> String {
    msg.replace(['\n', '\r'], " ")
}

/// One grid point's outcome.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub objective: Vec<f64>,
    pub rates: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
}

fn run_point(scenario: &Scenario, spec: &SweepSpec) -> Result<PointResult> {
    let net = scenario.network()?;
    let sols = solve_all(&net, &spec.schemes, scenario.control, spec.starts)?;
    Ok(PointResult {
        objective: sols.iter().map(|s| s.objective).collect(),
        rates: sols.iter().map(|s| s.source_rates().to_vec()).collect(),
        converged: sols.iter().map(|s| s.converged).collect(),
    })
}

fn gain_columns(schemes: &[Scheme]) -> Vec<(Scheme, Scheme)> {
    let has = |s| schemes.contains(&s);
    let mut g = Vec::new();
    for (a, b) in [(Scheme::Ocdr, Scheme::Static), (Scheme::Tcdr, Scheme::Static), (Scheme::Ocdr, Scheme::Tcdr)] {
        if has(a) && has(b) {
            g.push((a, b));
        }
    }
    g
}

/// Runs every grid point of a position sweep.
pub fn sweep_relay_positions(spec: &SweepSpec, base: &Scenario) -> Result<Table> {
    spec.validate()?;
    if spec.axis.is_empty() {
        return Err(Error::Config("position sweep needs at least one axis".into()));
    }
    for a in &spec.axis {
        base.clone().set_relay(a.relay[0], a.relay[1], 0.0)?;
    }
    let axes: Vec<Vec<f64>> = spec.axis.iter().map(Axis::values).collect::<Result<_>>()?;
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for vals in &axes {
        points = points.into_iter().flat_map(|p| vals.iter().map(move |&v| [p.clone(), vec![v]].concat())).collect();
    }
    let kk = base.sources;
    let results: Vec<(usize, Result<PointResult>)> = points
        .par_iter()
        .enumerate()
        .map(|(idx, p)| {
            let mut sc = base.clone();
            for (a, &v) in spec.axis.iter().zip(p) {
                sc.set_relay(a.relay[0], a.relay[1], v).expect("axis checked above");
            }
            (idx, run_point(&sc, spec))
        })
        .collect();

    let mut header: Vec<String> = spec.axis.iter().map(Axis::label).collect();
    for s in &spec.schemes {
        header.push(format!("F_{s}"));
        for k in 1..=kk {
            header.push(format!("r{k}_{s}"));
        }
        header.push(format!("converged_{s}"));
    }
    let gains = gain_columns(&spec.schemes);
    for (a, b) in &gains {
        header.push(format!("gain_{a}_{b}"));
    }
    header.push("status".into());

    let pos = |s: Scheme| spec.schemes.iter().position(|&x| x == s).expect("scheme present");
    let mut rows = Vec::with_capacity(points.len());
    for (idx, res) in results {
        let mut row: Vec<String> = points[idx].iter().map(|v| v.to_string()).collect();
        match res {
            Ok(r) => {
                for i in 0..spec.schemes.len() {
                    row.push(r.objective[i].to_string());
                    row.extend(r.rates[i].iter().map(|v| v.to_string()));
                    row.push(r.converged[i].to_string());
                }
                for &(a, b) in &gains {
                    row.push(fmt_opt(gain(r.objective[pos(a)], r.objective[pos(b)])));
                }
                let all = r.converged.iter().all(|&c| c);
                row.push(if all { "ok".into() } else { "not-converged".into() });
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), spec.schemes.len() * (kk + 2) + gains.len()));
                row.push(clean(&format!("error: {e}")));
            }
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Relay positions for one random placement: all relays drawn uniformly,
/// sorted, and dealt hop by hop from the source side.
pub fn random_placement<R: Rng + ?Sized>(hops: usize, per_hop: usize, range: [f64; 2], rng: &mut R) -> Vec<Vec<f64>> {
    let mut all: Vec<f64> = (0..hops * per_hop).map(|_| rng.random_range(range[0]..range[1])).collect();
    all.sort_by(f64::total_cmp);
    all.chunks(per_hop).map(|c| c.to_vec()).collect()
}

/// Averages per-source rates and the normalized weighted sum over random
/// placements, for every weight ratio.
pub fn sweep_weights(spec: &SweepSpec, base: &Scenario) -> Result<Table> {
    spec.validate()?;
    let w = spec.weights.as_ref().ok_or_else(|| Error::Config("weight sweep needs a weights table".into()))?;
    let kk = base.sources;
    if kk < 2 {
        return Err(Error::Config("weight sweep needs at least two sources".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
    let placements: Vec<Vec<Vec<f64>>> =
        (0..w.placements).map(|_| random_placement(base.hops, base.relays_per_hop, w.range, &mut rng)).collect();
    let jobs: Vec<(usize, usize)> = (0..w.ratios.len()).flat_map(|r| (0..w.placements).map(move |p| (r, p))).collect();
    let results: Vec<Result<PointResult>> = jobs
        .par_iter()
        .map(|&(r, p)| {
            let mut sc = base.clone();
            sc.positions.relays = placements[p].clone();
            sc.weights = (0..kk).map(|k| if k == 0 { 1.0 } else { w.ratios[r] }).collect();
            run_point(&sc, spec)
        })
        .collect();

    let ns = spec.schemes.len();
    let mut header = vec!["ratio".to_string()];
    for s in &spec.schemes {
        for k in 1..=kk {
            header.push(format!("r{k}_{s}"));
        }
        header.push(format!("wsum_{s}"));
    }
    header.extend(["placements".to_string(), "failed".to_string()]);

    let mut rows = Vec::new();
    for (ri, &ratio) in w.ratios.iter().enumerate() {
        let weights: Vec<f64> = (0..kk).map(|k| if k == 0 { 1.0 } else { ratio }).collect();
        let wtotal: f64 = weights.iter().sum();
        let mut sums = vec![vec![0.0; kk + 1]; ns];
        let mut ok = 0usize;
        let mut failed = 0usize;
        for (job, res) in jobs.iter().zip(&results) {
            if job.0 != ri {
                continue;
            }
            match res {
                Ok(pr) => {
                    ok += 1;
                    for s in 0..ns {
                        for k in 0..kk {
                            sums[s][k] += pr.rates[s][k];
                        }
                        sums[s][kk] += pr.rates[s].iter().zip(&weights).map(|(r, f)| r * f).sum::<f64>() / wtotal;
                    }
                }
                Err(_) => failed += 1,
            }
        }
        let mut row = vec![ratio.to_string()];
        for s in sums {
            row.extend(s.iter().map(|v| if ok > 0 { (v / ok as f64).to_string() } else { String::new() }));
        }
        row.extend([ok.to_string(), failed.to_string()]);
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// Runs whichever sweep the spec describes.
pub fn run_sweep(spec: &SweepSpec, base: &Scenario) -> Result<Table> {
    if spec.weights.is_some() {
        sweep_weights(spec, base)
    } else {
        sweep_relay_positions(spec, base)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_grid_is_inclusive() {
        let a = Axis { relay: [1, 1], from: 0.3, to: 0.7, step: 0.05 };
        let v = a.values().unwrap();
        assert_eq!(v.len(), 9);
        assert_eq!(v[0], 0.3);
        assert_eq!(v[8], 0.7);
        assert_eq!(v[4], 0.5);
        assert!(Axis { step: 0.0, ..a.clone() }.values().is_err());
    }

    #[test]
    fn gains() {
        assert_eq!(gain(1.5, 1.0), Some(50.0));
        assert_eq!(gain(1.0, 0.0), None);
    }

    #[test]
    fn placement_orders_hops() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let p = random_placement(2, 2, [0.1, 0.9], &mut rng);
            assert!(p[0].iter().all(|&a| p[1].iter().all(|&b| a <= b)));
            assert!(p.iter().flatten().all(|&x| (0.1..0.9).contains(&x)));
        }
    }

    #[test]
    fn spec_needs_exactly_one_kind() {
        let text = "scenario = \"s.toml\"\n";
        assert!(SweepSpec::from_toml_str(text, "x").is_err());
    }
}
