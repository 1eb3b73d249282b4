//! Problem instances, decision variables and the report-style checks on them.
//!
//! Units are fixed across the crate: bandwidth in Hz, power in W, noise
//! power spectral density in W/Hz. Rates are carried internally in nats/s.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::channel::{self, ChannelModelParams};
use crate::error::{Error, Result};

/// Dense row-major matrix, rows indexed by terminal and columns by RAT.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from nested rows. Ragged input is rejected.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Malformed("ragged matrix rows".into()));
        }
        Ok(Matrix {
            rows: n,
            cols: m,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> f64 {
        (0..self.rows).map(|r| self.get(r, c)).sum()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }
}

impl Serialize for Matrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Matrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// One radio access technology `q`: bandwidth budget `B_q` and efficiency `β_q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rat {
    pub total_bandwidth_hz: f64,
    pub efficiency: f64,
}

/// One multi-mode terminal `p`: power budget `P_p` and distance to each RAT's access point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mmt {
    pub max_power_w: f64,
    pub distance_m: Vec<f64>,
}

/// Channel state for every (terminal, RAT) pair.
///
/// `gains` holds the gain-to-noise ratio `c = |H|² / N` and is always
/// derived from the other two matrices, never set independently.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelMatrix {
    gains: Matrix,
    transfer_power: Matrix,
    noise_psd: Matrix,
}

impl ChannelMatrix {
    pub fn new(transfer_power: Matrix, noise_psd: Matrix) -> Result<Self> {
        if transfer_power.shape() != noise_psd.shape() {
            return Err(Error::ShapeMismatch {
                what: "noise_psd",
                expected: transfer_power.shape(),
                found: noise_psd.shape(),
            });
        }
        let mut gains = Matrix::zeros(transfer_power.rows(), transfer_power.cols());
        for r in 0..gains.rows() {
            for c in 0..gains.cols() {
                let g = channel::gain_to_noise_ratio(transfer_power.get(r, c), noise_psd.get(r, c))?;
                gains.set(r, c, g);
            }
        }
        Ok(ChannelMatrix {
            gains,
            transfer_power,
            noise_psd,
        })
    }

    /// Wraps an explicit gain-to-noise matrix. Noise is set to unit PSD so
    /// that `c = |H|²/N` holds exactly.
    pub fn from_gains(gains: Matrix) -> Self {
        let noise_psd = Matrix::filled(gains.rows(), gains.cols(), 1.0);
        ChannelMatrix {
            transfer_power: gains.clone(),
            gains,
            noise_psd,
        }
    }

    pub fn gains(&self) -> &Matrix {
        &self.gains
    }

    pub fn transfer_power(&self) -> &Matrix {
        &self.transfer_power
    }

    pub fn noise_psd(&self) -> &Matrix {
        &self.noise_psd
    }

    #[inline]
    pub fn gain(&self, p: usize, q: usize) -> f64 {
        self.gains.get(p, q)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.gains.shape()
    }
}

/// Where a scenario's channel came from.
#[derive(Clone, Debug, PartialEq)]
pub enum ChannelSource {
    Model(ChannelModelParams),
    Override,
}

/// A complete problem instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub rats: Vec<Rat>,
    pub mmts: Vec<Mmt>,
    pub channel: ChannelMatrix,
    pub seed: u64,
    pub source: ChannelSource,
}

/// On-disk form of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub rats: Vec<Rat>,
    pub mmts: Vec<Mmt>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_model: Option<ChannelModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_override: Option<Matrix>,
}

impl Scenario {
    /// Builds a scenario and draws its channel from the geometry.
    pub fn generate(rats: Vec<Rat>, mmts: Vec<Mmt>, params: ChannelModelParams, seed: u64) -> Result<Self> {
        let channel = channel::generate_channel(&mmts, rats.len(), &params, seed)?;
        Ok(Scenario {
            rats,
            mmts,
            channel,
            seed,
            source: ChannelSource::Model(params),
        })
    }

    /// Builds a scenario around an explicit gain-to-noise matrix.
    ///
    /// The shape is not checked here; `validate_scenario` reports mismatches.
    pub fn with_gains(rats: Vec<Rat>, mmts: Vec<Mmt>, gains: Matrix) -> Self {
        Scenario {
            rats,
            mmts,
            channel: ChannelMatrix::from_gains(gains),
            seed: 0,
            source: ChannelSource::Override,
        }
    }

    pub fn num_mmts(&self) -> usize {
        self.mmts.len()
    }

    pub fn num_rats(&self) -> usize {
        self.rats.len()
    }

    pub fn total_bandwidth_hz(&self) -> f64 {
        self.rats.iter().map(|r| r.total_bandwidth_hz).sum()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.rats.iter().map(|r| r.efficiency).collect()
    }

    /// Bandwidth below which an assignment counts as zero.
    pub fn b_floor(&self, rel: f64) -> f64 {
        let min_b = self
            .rats
            .iter()
            .map(|r| r.total_bandwidth_hz)
            .fold(f64::INFINITY, f64::min);
        rel * min_b
    }

    pub fn default_b_floor(&self) -> f64 {
        self.b_floor(SolverConfig::default().b_floor_rel)
    }

    /// Same instance with gains outside `keep` forced to zero.
    pub fn masked(&self, keep: impl Fn(usize, usize) -> bool) -> Scenario {
        let (l, k) = self.channel.shape();
        let gains = Matrix::from_fn(l, k, |p, q| if keep(p, q) { self.channel.gain(p, q) } else { 0.0 });
        Scenario {
            channel: ChannelMatrix::from_gains(gains),
            source: ChannelSource::Override,
            ..self.clone()
        }
    }

    pub fn from_file(file: ScenarioFile) -> Result<Self> {
        match file.channel_override {
            Some(gains) => Ok(Scenario {
                seed: file.seed,
                ..Scenario::with_gains(file.rats, file.mmts, gains)
            }),
            None => Scenario::generate(file.rats, file.mmts, file.channel_model.unwrap_or_default(), file.seed),
        }
    }

    pub fn to_file(&self) -> ScenarioFile {
        let (channel_model, channel_override) = match &self.source {
            ChannelSource::Model(params) => (Some(params.clone()), None),
            ChannelSource::Override => (None, Some(self.channel.gains().clone())),
        };
        ScenarioFile {
            rats: self.rats.clone(),
            mmts: self.mmts.clone(),
            seed: self.seed,
            channel_model,
            channel_override,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Scenario::from_file(file)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }
}

/// Decision variables `b_pq` (Hz) and `p_pq` (W).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub bandwidth: Matrix,
    pub power: Matrix,
}

impl Allocation {
    pub fn zeros(num_mmts: usize, num_rats: usize) -> Self {
        Allocation {
            bandwidth: Matrix::zeros(num_mmts, num_rats),
            power: Matrix::zeros(num_mmts, num_rats),
        }
    }

    /// Every terminal takes `B_q / L` of each RAT and spreads its power evenly.
    pub fn equal_split(s: &Scenario) -> Self {
        let (l, k) = (s.num_mmts(), s.num_rats());
        Allocation {
            bandwidth: Matrix::from_fn(l, k, |_, q| s.rats[q].total_bandwidth_hz / l as f64),
            power: Matrix::from_fn(l, k, |p, _| s.mmts[p].max_power_w / k as f64),
        }
    }

    /// Number of RATs each terminal actually uses.
    pub fn support_sizes(&self) -> Vec<usize> {
        (0..self.bandwidth.rows())
            .map(|p| self.bandwidth.row(p).iter().filter(|&&b| b > 0.0).count())
            .collect()
    }
}

/// Shadow prices: `λ_q` per RAT bandwidth budget, `μ_p` per terminal power budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPrices {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Which scalar method solves the per-pair bandwidth equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    Newton,
    ModifiedNewton,
    Bisection,
}

impl InnerMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            InnerMethod::Newton => "newton",
            InnerMethod::ModifiedNewton => "modified_newton",
            InnerMethod::Bisection => "bisection",
        }
    }
}

impl std::str::FromStr for InnerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newton" => Ok(InnerMethod::Newton),
            "modified_newton" => Ok(InnerMethod::ModifiedNewton),
            "bisection" => Ok(InnerMethod::Bisection),
            other => Err(Error::Malformed(format!("unknown inner method `{other}`"))),
        }
    }
}

impl std::fmt::Display for InnerMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Solver knobs. Every field has a default, so a config file may name only
/// the fields it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Dual step `ξ`, applied to normalized subgradients.
    pub step_size: f64,
    /// Use `ξ / sqrt(n + 1)` instead of a constant step.
    pub diminishing_step: bool,
    /// Threshold on the normalized KKT residual.
    pub kkt_tol: f64,
    pub max_outer_iters: usize,
    pub inner_method: InnerMethod,
    /// Tolerance on `|f(b)|` for the bandwidth equation.
    pub inner_tol: f64,
    pub inner_max_iters: usize,
    /// Bandwidth floor as a fraction of the smallest `B_q`.
    pub b_floor_rel: f64,
    /// Relative budget overshoot tolerated before an allocation counts as infeasible.
    pub feas_tol: f64,
    /// Tolerance for the power/bandwidth coupling and water-level checks.
    pub consistency_tol: f64,
    /// Lower bound applied to both price families after projection.
    pub price_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            step_size: 0.1,
            diminishing_step: false,
            kkt_tol: 1e-5,
            max_outer_iters: 5000,
            inner_method: InnerMethod::Newton,
            inner_tol: 1e-10,
            inner_max_iters: 200,
            b_floor_rel: 1e-9,
            feas_tol: 1e-9,
            consistency_tol: 1e-6,
            price_floor: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn with_method(mut self, method: InnerMethod) -> Self {
        self.inner_method = method;
        self
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.step_size > 0.0) {
            v.push("step_size > 0".to_string());
        }
        for (name, value) in [
            ("kkt_tol", self.kkt_tol),
            ("inner_tol", self.inner_tol),
            ("b_floor_rel", self.b_floor_rel),
            ("feas_tol", self.feas_tol),
            ("consistency_tol", self.consistency_tol),
            ("price_floor", self.price_floor),
        ] {
            if !(value > 0.0) {
                v.push(format!("{name} > 0"));
            }
        }
        if self.max_outer_iters == 0 {
            v.push("max_outer_iters >= 1".to_string());
        }
        if self.inner_max_iters == 0 {
            v.push("inner_max_iters >= 1".to_string());
        }
        v
    }

    /// Short stable fingerprint of the configuration.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }
}

/// List of violated scenario invariants; empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut v = Vec::new();
    let (l, k) = (s.num_mmts(), s.num_rats());
    if k == 0 {
        v.push("K >= 1".to_string());
    }
    if l == 0 {
        v.push("L >= 1".to_string());
    }
    for (q, rat) in s.rats.iter().enumerate() {
        if !(rat.total_bandwidth_hz > 0.0) || !rat.total_bandwidth_hz.is_finite() {
            v.push(format!("rat[{q}]: total_bandwidth_hz > 0"));
        }
        if !(rat.efficiency > 0.0 && rat.efficiency <= 1.0) {
            v.push(format!("rat[{q}]: 0 < efficiency <= 1"));
        }
    }
    for (p, mmt) in s.mmts.iter().enumerate() {
        if !(mmt.max_power_w > 0.0) || !mmt.max_power_w.is_finite() {
            v.push(format!("mmt[{p}]: max_power_w > 0"));
        }
        if mmt.distance_m.len() != k {
            v.push(format!("mmt[{p}]: distance_m has length K = {k}"));
        }
        if mmt.distance_m.iter().any(|&d| !(d > 0.0)) {
            v.push(format!("mmt[{p}]: all distances > 0"));
        }
    }
    let shape = s.channel.shape();
    if shape != (l, k) {
        v.push(format!(
            "channel shape {}x{} does not match (L, K) = ({l}, {k})",
            shape.0, shape.1
        ));
    } else {
        let ch = &s.channel;
        for p in 0..l {
            for q in 0..k {
                let c = ch.gain(p, q);
                if !(c >= 0.0) || !c.is_finite() {
                    v.push(format!("channel[{p}][{q}]: c_pq >= 0"));
                }
                if !(ch.noise_psd().get(p, q) > 0.0) {
                    v.push(format!("channel[{p}][{q}]: N_pq > 0"));
                }
            }
        }
    }
    ValidationReport { violations: v }
}

/// Per-budget slack for an allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `B_q − Σ_p b_pq` for every RAT.
    pub bandwidth_slack: Vec<f64>,
    /// `P_p − Σ_q p_pq` for every terminal.
    pub power_slack: Vec<f64>,
    pub nonnegative: bool,
    pub feasible: bool,
}

/// Checks the budget and sign constraints. A slack counts as satisfied when
/// it is at least `−tol` times the budget it belongs to.
pub fn check_feasibility(s: &Scenario, a: &Allocation, tol: f64) -> Result<FeasibilityReport> {
    let expected = (s.num_mmts(), s.num_rats());
    for (what, m) in [("bandwidth", &a.bandwidth), ("power", &a.power)] {
        if m.shape() != expected {
            return Err(Error::ShapeMismatch {
                what,
                expected,
                found: m.shape(),
            });
        }
    }
    let bandwidth_slack: Vec<f64> = s
        .rats
        .iter()
        .enumerate()
        .map(|(q, r)| r.total_bandwidth_hz - a.bandwidth.col_sum(q))
        .collect();
    let power_slack: Vec<f64> = s
        .mmts
        .iter()
        .enumerate()
        .map(|(p, m)| m.max_power_w - a.power.row_sum(p))
        .collect();
    let nonnegative = a
        .bandwidth
        .values()
        .iter()
        .chain(a.power.values())
        .all(|&x| x >= 0.0);
    let bw_ok = bandwidth_slack
        .iter()
        .zip(&s.rats)
        .all(|(&slack, r)| slack >= -tol * r.total_bandwidth_hz);
    let pw_ok = power_slack
        .iter()
        .zip(&s.mmts)
        .all(|(&slack, m)| slack >= -tol * m.max_power_w);
    Ok(FeasibilityReport {
        bandwidth_slack,
        power_slack,
        nonnegative,
        feasible: nonnegative && bw_ok && pw_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_rat_one_mmt() -> Scenario {
        Scenario::with_gains(
            vec![
                Rat { total_bandwidth_hz: 5e6, efficiency: 1.0 },
                Rat { total_bandwidth_hz: 20e6, efficiency: 1.0 },
            ],
            vec![Mmt { max_power_w: 0.02, distance_m: vec![200.0, 200.0] }],
            Matrix::from_rows(vec![vec![2e9, 1e9]]).unwrap(),
        )
    }

    #[test]
    fn well_formed_scenario_has_empty_report() {
        assert!(validate_scenario(&two_rat_one_mmt()).is_valid());
    }

    #[test]
    fn zero_bandwidth_is_reported() {
        let mut s = two_rat_one_mmt();
        s.rats[0].total_bandwidth_hz = 0.0;
        let report = validate_scenario(&s);
        assert!(report.violations.iter().any(|v| v.contains("total_bandwidth_hz > 0")));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut s = two_rat_one_mmt();
        s.mmts.push(s.mmts[0].clone());
        s.channel = ChannelMatrix::from_gains(Matrix::filled(2, 3, 1.0));
        let report = validate_scenario(&s);
        assert!(report.violations.iter().any(|v| v.contains("channel shape 2x3")));
    }

    #[test]
    fn validation_does_not_mutate() {
        let s = two_rat_one_mmt();
        let before = s.clone();
        let r1 = validate_scenario(&s);
        let r2 = validate_scenario(&s);
        assert_eq!(r1, r2);
        assert_eq!(s, before);
    }

    #[test]
    fn zero_allocation_is_feasible_with_full_slack() {
        let s = two_rat_one_mmt();
        let r = check_feasibility(&s, &Allocation::zeros(1, 2), 1e-9).unwrap();
        assert!(r.feasible);
        assert_eq!(r.bandwidth_slack, vec![5e6, 20e6]);
        assert_eq!(r.power_slack, vec![0.02]);
    }

    #[test]
    fn overspent_bandwidth_is_infeasible() {
        let s = two_rat_one_mmt();
        let mut a = Allocation::zeros(1, 2);
        a.bandwidth.set(0, 0, 5e6 + 1.0);
        let r = check_feasibility(&s, &a, 1e-9).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.bandwidth_slack[0], -1.0);
    }

    #[test]
    fn equal_split_is_feasible_with_zero_slack() {
        let s = Scenario::with_gains(
            vec![
                Rat { total_bandwidth_hz: 4.0, efficiency: 1.0 },
                Rat { total_bandwidth_hz: 8.0, efficiency: 1.0 },
            ],
            vec![
                Mmt { max_power_w: 2.0, distance_m: vec![1.0, 1.0] },
                Mmt { max_power_w: 6.0, distance_m: vec![1.0, 1.0] },
            ],
            Matrix::filled(2, 2, 1.0),
        );
        let r = check_feasibility(&s, &Allocation::equal_split(&s), 0.0).unwrap();
        assert!(r.feasible);
        assert!(r.bandwidth_slack.iter().chain(&r.power_slack).all(|&x| x == 0.0));
    }

    #[test]
    fn feasibility_rejects_wrong_shape() {
        let s = two_rat_one_mmt();
        let err = check_feasibility(&s, &Allocation::zeros(2, 2), 0.0).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Matrix::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = SolverConfig::default();
        assert_eq!(a.hash(), SolverConfig::default().hash());
        assert_ne!(a.hash(), a.clone().with_method(InnerMethod::ModifiedNewton).hash());
        assert!(a.violations().is_empty());
    }
}
