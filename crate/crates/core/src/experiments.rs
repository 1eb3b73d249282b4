//! Scenario sweeps over terminal counts and seeds, and their CSV output.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelModelParams;
use crate::error::{Error, Result};
use crate::model::{InnerMethod, Mmt, Rat, Scenario, SolverConfig};
use crate::solver::{self, Mode, SolveTrace};

pub const CSV_HEADER: &str = "L,seed,mode,method,capacity_bps_per_hz,iterations,converged,wall_ms";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub mmt_counts: Vec<usize>,
    pub rats: Vec<Rat>,
    pub per_mmt_power_w: f64,
    pub distance_m: f64,
    pub seeds: Vec<u64>,
    pub methods: Vec<InnerMethod>,
    pub modes: Vec<Mode>,
    pub channel: ChannelModelParams,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            mmt_counts: (1..=10).map(|i| 5 * i).collect(),
            rats: vec![
                Rat {
                    total_bandwidth_hz: 5e6,
                    efficiency: 1.0,
                },
                Rat {
                    total_bandwidth_hz: 20e6,
                    efficiency: 1.0,
                },
            ],
            per_mmt_power_w: 0.02,
            distance_m: 200.0,
            seeds: (1..=5).collect(),
            methods: vec![InnerMethod::Newton, InnerMethod::ModifiedNewton],
            modes: vec![Mode::Parallel, Mode::Switched],
            channel: ChannelModelParams::default(),
        }
    }
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SweepSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, empty) in [
            ("mmt_counts", self.mmt_counts.is_empty()),
            ("rats", self.rats.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("methods", self.methods.is_empty()),
            ("modes", self.modes.is_empty()),
        ] {
            if empty {
                v.push(format!("{name} must be non-empty"));
            }
        }
        if self.mmt_counts.contains(&0) {
            v.push("mmt_counts >= 1".into());
        }
        if !(self.per_mmt_power_w > 0.0) {
            v.push("per_mmt_power_w > 0".into());
        }
        if !(self.distance_m > 0.0) {
            v.push("distance_m > 0".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }

    /// The `L`-terminal scenario for `seed`, every terminal at the same distance.
    pub fn scenario(&self, num_mmts: usize, seed: u64) -> Result<Scenario> {
        let mmts = vec![
            Mmt {
                max_power_w: self.per_mmt_power_w,
                distance_m: vec![self.distance_m; self.rats.len()],
            };
            num_mmts
        ];
        Scenario::generate(self.rats.clone(), mmts, self.channel.clone(), seed)
    }

    pub fn total_bandwidth_hz(&self) -> f64 {
        self.rats.iter().map(|r| r.total_bandwidth_hz).sum()
    }

    fn cells(&self) -> Vec<(usize, u64, Mode, InnerMethod)> {
        let mut cells = Vec::new();
        for &l in &self.mmt_counts {
            for &seed in &self.seeds {
                for &mode in &self.modes {
                    for &method in &self.methods {
                        cells.push((l, seed, mode, method));
                    }
                }
            }
        }
        cells.sort_by(|a, b| row_key(a.0, a.1, a.2, a.3).cmp(&row_key(b.0, b.1, b.2, b.3)));
        cells.dedup();
        cells
    }
}

fn row_key(l: usize, seed: u64, mode: Mode, method: InnerMethod) -> (usize, u64, &'static str, &'static str) {
    (l, seed, mode.as_str(), method.as_str())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "L")]
    pub l: usize,
    pub seed: u64,
    pub mode: Mode,
    pub method: InnerMethod,
    pub capacity_bps_per_hz: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub kkt_residual: Option<f64>,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub total_bandwidth_hz: f64,
    pub config_hash: String,
}

/// Summary over seeds of one `(L, mode, method)` group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    #[serde(rename = "L")]
    pub l: usize,
    pub mode: Mode,
    pub method: InnerMethod,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub samples: usize,
    pub converged: usize,
}

impl SweepResult {
    /// Rows that solved, grouped by `(L, mode, method)` in row order.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out: Vec<Aggregate> = Vec::new();
        for row in &self.rows {
            let Some(cap) = row.capacity_bps_per_hz else { continue };
            match out
                .iter_mut()
                .find(|a| a.l == row.l && a.mode == row.mode && a.method == row.method)
            {
                Some(a) => {
                    a.mean += cap;
                    a.min = a.min.min(cap);
                    a.max = a.max.max(cap);
                    a.samples += 1;
                    a.converged += row.converged as usize;
                }
                None => out.push(Aggregate {
                    l: row.l,
                    mode: row.mode,
                    method: row.method,
                    mean: cap,
                    min: cap,
                    max: cap,
                    samples: 1,
                    converged: row.converged as usize,
                }),
            }
        }
        for a in &mut out {
            a.mean /= a.samples as f64;
        }
        out.sort_by(|a, b| (a.l, a.mode.as_str(), a.method.as_str()).cmp(&(b.l, b.mode.as_str(), b.method.as_str())));
        out
    }

    pub fn row(&self, l: usize, seed: u64, mode: Mode, method: InnerMethod) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.l == l && r.seed == seed && r.mode == mode && r.method == method)
    }
}

fn run_cell(spec: &SweepSpec, cfg: &SolverConfig, cell: (usize, u64, Mode, InnerMethod), timing: bool) -> SweepRow {
    let (l, seed, mode, method) = cell;
    let started = Instant::now();
    let outcome = spec
        .scenario(l, seed)
        .and_then(|s| solver::solve(&s, &cfg.clone().with_method(method), mode));
    let wall_ms = timing.then(|| started.elapsed().as_secs_f64() * 1e3);
    match outcome {
        Ok(r) => SweepRow {
            l,
            seed,
            mode,
            method,
            capacity_bps_per_hz: Some(r.capacity_bps_per_hz),
            iterations: Some(r.trace.iterations),
            converged: r.converged(),
            kkt_residual: Some(r.kkt.residual_norm),
            wall_ms,
            error: None,
        },
        Err(e) => SweepRow {
            l,
            seed,
            mode,
            method,
            capacity_bps_per_hz: None,
            iterations: None,
            converged: false,
            kkt_residual: None,
            wall_ms,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every `(L, seed, mode, method)` cell on up to `jobs` threads.
///
/// A failed cell becomes a row with its error recorded; the sweep goes on.
/// Wall time is only measured when `timing` is set, so that untimed output
/// is a pure function of its inputs.
pub fn run_sweep(spec: &SweepSpec, cfg: &SolverConfig, jobs: usize, timing: bool) -> Result<SweepResult> {
    spec.validate()?;
    let bad = cfg.violations();
    if !bad.is_empty() {
        return Err(Error::InvalidConfig(bad));
    }
    let cells = spec.cells();
    let rows: Vec<SweepRow> = if jobs <= 1 {
        cells.into_iter().map(|c| run_cell(spec, cfg, c, timing)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Malformed(e.to_string()))?;
        pool.install(|| cells.into_par_iter().map(|c| run_cell(spec, cfg, c, timing)).collect())
    };
    Ok(SweepResult {
        rows,
        total_bandwidth_hz: spec.total_bandwidth_hz(),
        config_hash: cfg.hash(),
    })
}

/// C `%.17g`: enough digits to round-trip any double.
pub fn format_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim_fraction(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_g17).unwrap_or_default()
}

pub fn csv_string(result: &SweepResult) -> String {
    let mut rows: Vec<&SweepRow> = result.rows.iter().collect();
    rows.sort_by(|a, b| row_key(a.l, a.seed, a.mode, a.method).cmp(&row_key(b.l, b.seed, b.mode, b.method)));
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.l,
            r.seed,
            r.mode,
            r.method,
            opt_float(r.capacity_bps_per_hz),
            r.iterations.map(|n| n.to_string()).unwrap_or_default(),
            r.converged,
            opt_float(r.wall_ms),
        );
    }
    out
}

/// Writes the sweep CSV, sorted by `(L, seed, mode, method)`.
pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::InsufficientData("sweep result has no rows".into()));
    }
    std::fs::write(path, csv_string(result))?;
    Ok(())
}

/// Side file describing how the CSV numbers were produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMeta {
    pub capacity_unit: String,
    pub normalization_hz: f64,
    pub log_base: String,
    pub config_hash: String,
    pub rows: usize,
    pub failed: Vec<SweepRow>,
    pub aggregates: Vec<Aggregate>,
}

pub fn sweep_meta(result: &SweepResult) -> SweepMeta {
    SweepMeta {
        capacity_unit: "bps/Hz".into(),
        normalization_hz: result.total_bandwidth_hz,
        log_base: "capacity computed in nats, divided by ln 2 and by normalization_hz".into(),
        config_hash: result.config_hash.clone(),
        rows: result.rows.len(),
        failed: result.rows.iter().filter(|r| r.error.is_some()).cloned().collect(),
        aggregates: result.aggregates(),
    }
}

/// `<csv>.meta.json` next to the CSV.
pub fn meta_path(csv: &Path) -> std::path::PathBuf {
    let mut name = csv.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    csv.with_file_name(name)
}

pub fn emit_meta(result: &SweepResult, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(&sweep_meta(result))?)?;
    Ok(())
}

pub fn price_trace_string(trace: &SolveTrace) -> String {
    let k = trace.lambda.first().map_or(0, Vec::len);
    let l = trace.mu.first().map_or(0, Vec::len);
    let mut out = String::from("iter");
    for q in 1..=k {
        let _ = write!(out, ",lambda_{q}");
    }
    for p in 1..=l {
        let _ = write!(out, ",mu_{p}");
    }
    out.push_str(",capacity,bw_violation,pw_violation\n");
    for n in 0..trace.len() {
        out.push_str(&n.to_string());
        for v in trace.lambda[n].iter().chain(&trace.mu[n]) {
            out.push(',');
            out.push_str(&format_g17(*v));
        }
        for v in [trace.capacity[n], trace.bw_violation[n], trace.pw_violation[n]] {
            out.push(',');
            out.push_str(&format_g17(v));
        }
        out.push('\n');
    }
    out
}

/// `iter,lambda_1..K,mu_1..L,capacity,bw_violation,pw_violation`, one row per outer iteration.
pub fn dump_price_trace(trace: &SolveTrace, path: &Path) -> Result<()> {
    if trace.is_empty() {
        return Err(Error::InsufficientData("solve has no trace".into()));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(price_trace_string(trace).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_c_printf() {
        let cases = [
            (1.0, "1"),
            (0.1, "0.10000000000000001"),
            (88.69, "88.689999999999998"),
            (1e-5, "1.0000000000000001e-05"),
            (1e20, "1e+20"),
            (123456789.0, "123456789"),
            (-2.5, "-2.5"),
            (0.0001, "0.0001"),
            (1e16, "10000000000000000"),
            (1e17, "1e+17"),
            (std::f64::consts::PI, "3.1415926535897931"),
        ];
        for (x, want) in cases {
            assert_eq!(format_g17(x), want, "{x}");
        }
    }

    #[test]
    fn g17_round_trips() {
        for x in [1.0 / 3.0, 2.2e9, 5.4321e-300, 7.09, 1.7976931348623157e308] {
            assert_eq!(format_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn default_spec_matches_experiment_setup() {
        let s = SweepSpec::default();
        assert_eq!(s.mmt_counts, vec![5, 10, 15, 20, 25, 30, 35, 40, 45, 50]);
        assert_eq!(s.total_bandwidth_hz(), 25e6);
        assert_eq!(s.per_mmt_power_w, 0.02);
        assert_eq!(s.distance_m, 200.0);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn empty_lists_rejected() {
        let spec = SweepSpec {
            seeds: vec![],
            mmt_counts: vec![0],
            ..Default::default()
        };
        let v = spec.violations();
        assert!(v.iter().any(|m| m.contains("seeds")));
        assert!(v.iter().any(|m| m.contains("mmt_counts >= 1")));
    }

    #[test]
    fn spec_json_partial_fields() {
        let spec = SweepSpec::from_json(r#"{"mmt_counts":[3],"seeds":[7],"modes":["switched"]}"#).unwrap();
        assert_eq!(spec.mmt_counts, vec![3]);
        assert_eq!(spec.modes, vec![Mode::Switched]);
        assert_eq!(spec.methods.len(), 2);
    }

    #[test]
    fn meta_path_appends_suffix() {
        assert_eq!(meta_path(Path::new("out/sweep.csv")), Path::new("out/sweep.csv.meta.json"));
    }
}
