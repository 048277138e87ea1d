//! Config ingestion and run orchestration behind the `excess-noise` binary.
//!
//! A run reads one JSON [`ScenarioConfig`], builds the box basis and the
//! reservoir couplings, optionally tunes the gain to threshold, solves the
//! quasi-mode problem and emits a [`RunOutput`].

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::basis::{make_box_basis, ModeBasis};
use crate::coupling::{
    build_coupling, scale_to_rate, CouplingMatrix, ReservoirKind, ReservoirProfile,
};
use crate::dynamics::{
    derive_moment_generator, threshold_mismatch, verify_noise_law_at, verify_threshold_diffusion,
    NoiseCheck, THRESHOLD_TOL,
};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::quasimode::{analyze, norm_consistency, QuasiModeReport};
use crate::spectral::{
    assemble, biorthogonality_residual, completeness_residual, eigendecompose,
    phase_aligned_distance, select_dominant, QuasiModeSet,
};

/// Iteration cap of the threshold fixed point.
pub const MAX_THRESHOLD_ITERATIONS: usize = 100;

/// Built-in flagship scenario: uniform gain, loss near one wall, threshold.
pub const FLAGSHIP_CONFIG: &str = include_str!("../fixtures/flagship.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Box,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub kind: BasisKind,
    pub n_modes: usize,
    pub box_length: f64,
    pub grid_points: usize,
    /// Constant added to every box frequency; moves the band to `Δω/Ω ≪ 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carrier_frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Indicator {
    Uniform,
    Interval([f64; 2]),
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirConfig {
    pub indicator: Indicator,
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub basis: BasisConfig,
    pub gain: ReservoirConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<ReservoirConfig>,
    #[serde(default)]
    pub threshold: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn check_reservoir(r: &ReservoirConfig, path: &str, config: &ScenarioConfig) -> Result<()> {
    if !(r.strength.is_finite() && r.strength >= 0.0) {
        return Err(Error::config(
            format!("{path}.strength"),
            format!("strength must be finite and >= 0, got {}", r.strength),
        ));
    }
    let at = format!("{path}.indicator");
    match &r.indicator {
        Indicator::Uniform => {}
        Indicator::Interval([a, b]) => {
            let l = config.basis.box_length;
            if !(a.is_finite() && b.is_finite() && 0.0 <= *a && a < b && *b <= l) {
                return Err(Error::config(
                    at,
                    format!("interval [{a}, {b}] must satisfy 0 <= a < b <= {l}"),
                ));
            }
        }
        Indicator::Samples(s) => {
            if s.len() != config.basis.grid_points {
                return Err(Error::config(
                    at,
                    format!(
                        "{} samples given for {} grid points",
                        s.len(),
                        config.basis.grid_points
                    ),
                ));
            }
            if let Some(i) = s.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::config(
                    format!("{at}.samples.{i}"),
                    "samples must be finite and >= 0",
                ));
            }
        }
    }
    Ok(())
}

impl ScenarioConfig {
    /// Range checks that the JSON schema cannot express.
    pub fn validate(&self) -> Result<()> {
        let b = &self.basis;
        if b.n_modes == 0 {
            return Err(Error::config("basis.n_modes", "need at least one mode"));
        }
        if !(b.box_length.is_finite() && b.box_length > 0.0) {
            return Err(Error::config(
                "basis.box_length",
                "box length must be finite and > 0",
            ));
        }
        if b.grid_points < 4 * b.n_modes || b.grid_points < crate::basis::MIN_GRID_POINTS {
            return Err(Error::config(
                "basis.grid_points",
                format!(
                    "need at least max(4 n_modes, {}) points, got {}",
                    crate::basis::MIN_GRID_POINTS,
                    b.grid_points
                ),
            ));
        }
        if let Some(c) = b.carrier_frequency {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::config(
                    "basis.carrier_frequency",
                    "must be finite and >= 0",
                ));
            }
        }
        check_reservoir(&self.gain, "gain", self)?;
        if let Some(l) = &self.loss {
            check_reservoir(l, "loss", self)?;
        }
        if let Some(t) = self.target_frequency {
            if !t.is_finite() {
                return Err(Error::config("target_frequency", "must be finite"));
            }
        }
        if self.threshold && self.loss.is_none() {
            return Err(Error::config(
                "threshold",
                "threshold tuning needs a loss reservoir",
            ));
        }
        Ok(())
    }

    /// Lowercase hex SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn from_value(value: Value) -> Result<ScenarioConfig> {
    let config: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;
    config.validate()?;
    Ok(config)
}

/// Parse and validate a JSON config document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;
    de.end().map_err(|e| Error::config(".", e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &std::path::Path) -> Result<ScenarioConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Basis and reservoir couplings described by a config.
#[derive(Debug, Clone)]
pub struct Built {
    pub basis: ModeBasis,
    pub gain: CouplingMatrix,
    pub loss: Option<CouplingMatrix>,
}

fn profile(
    basis: &ModeBasis,
    r: &ReservoirConfig,
    kind: ReservoirKind,
) -> Result<ReservoirProfile> {
    let grid = basis.grid();
    match &r.indicator {
        Indicator::Uniform => ReservoirProfile::uniform(grid, r.strength, kind),
        Indicator::Interval([a, b]) => ReservoirProfile::interval(grid, *a, *b, r.strength, kind),
        Indicator::Samples(s) => ReservoirProfile::new(s.clone(), r.strength, kind),
    }
}

pub fn build(config: &ScenarioConfig) -> Result<Built> {
    let b = &config.basis;
    let mut basis =
        make_box_basis(b.n_modes, b.box_length, b.grid_points).map_err(|e| match e {
            Error::Resolution { .. } => Error::config("basis.grid_points", e.to_string()),
            other => other,
        })?;
    if let Some(c) = b.carrier_frequency.filter(|c| *c != 0.0) {
        basis = basis.with_frequency_offset(c)?;
    }
    let gain = build_coupling(&basis, &profile(&basis, &config.gain, ReservoirKind::Gain)?)
        .map_err(|e| reservoir_error(e, "gain"))?;
    let loss = match &config.loss {
        Some(l) => Some(
            build_coupling(&basis, &profile(&basis, l, ReservoirKind::Loss)?)
                .map_err(|e| reservoir_error(e, "loss"))?,
        ),
        None => None,
    };
    Ok(Built { basis, gain, loss })
}

fn reservoir_error(e: Error, path: &str) -> Error {
    match e {
        Error::DegenerateProfile | Error::InvalidInput(_) => {
            Error::config(format!("{path}.indicator"), e.to_string())
        }
        other => other,
    }
}

/// Solved quasi-mode problem with the gain matrix actually used.
#[derive(Debug, Clone)]
pub struct Solution {
    pub gain: CouplingMatrix,
    pub set: QuasiModeSet,
    pub index: usize,
    pub report: QuasiModeReport,
    /// Fixed-point iterations spent on threshold tuning (0 if not tuned).
    pub threshold_iterations: usize,
}

fn solve_once(
    basis: &ModeBasis,
    gain: &CouplingMatrix,
    loss: Option<&CouplingMatrix>,
    target: Option<f64>,
) -> Result<(QuasiModeSet, usize, QuasiModeReport)> {
    let sys = assemble(basis, gain, loss)?;
    let set = eigendecompose(&sys)?;
    let index = select_dominant(&set, target)?;
    let report = analyze(&set, index, basis, gain, loss)?;
    Ok((set, index, report))
}

/// Solve without tuning.
pub fn solve_system(
    basis: &ModeBasis,
    gain: &CouplingMatrix,
    loss: Option<&CouplingMatrix>,
    target: Option<f64>,
) -> Result<Solution> {
    let (set, index, report) = solve_once(basis, gain, loss, target)?;
    Ok(Solution {
        gain: gain.clone(),
        set,
        index,
        report,
        threshold_iterations: 0,
    })
}

/// Rescale the gain until `|γ - λ|/λ < 1e-10` on the dominant quasi mode.
///
/// Each pass solves the problem, then scales the gain so that its rate on the
/// current dominant vector equals that vector's loss rate. The vector moves
/// with the gain, hence the iteration.
pub fn tune_threshold(
    basis: &ModeBasis,
    gain: &CouplingMatrix,
    loss: &CouplingMatrix,
    target: Option<f64>,
) -> Result<Solution> {
    let mut gain = gain.clone();
    let mut mismatch = f64::INFINITY;
    for iteration in 0..=MAX_THRESHOLD_ITERATIONS {
        let (set, index, report) = solve_once(basis, &gain, Some(loss), target)?;
        mismatch = threshold_mismatch(&report);
        if mismatch < THRESHOLD_TOL {
            return Ok(Solution {
                gain,
                set,
                index,
                report,
                threshold_iterations: iteration,
            });
        }
        if iteration == MAX_THRESHOLD_ITERATIONS {
            break;
        }
        gain = scale_to_rate(&gain, &report.c, &report.eps, report.gamma)?;
    }
    Err(Error::ThresholdNotConverged {
        iterations: MAX_THRESHOLD_ITERATIONS,
        mismatch,
    })
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(name.to_string()))
    }
}

/// Scalar quasi-mode quantities as emitted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportFields {
    pub mode_index: usize,
    pub mu_re: f64,
    pub mu_im: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "K_tilde")]
    pub k_tilde: f64,
    pub ratio: f64,
    pub ratio_minus_one: f64,
    #[serde(rename = "Omega")]
    pub omega_mean: f64,
    pub lambda: f64,
    pub gamma: f64,
    #[serde(rename = "E_nu")]
    pub e_nu: f64,
    #[serde(rename = "N2")]
    pub n2: f64,
    #[serde(rename = "N2_bar")]
    pub n2_bar: f64,
    pub relative_bandwidth: f64,
    #[serde(rename = "Omega_bare")]
    pub omega_bare: f64,
    pub p: Vec<f64>,
    pub c_re: Vec<f64>,
    pub c_im: Vec<f64>,
}

impl ReportFields {
    fn from_report(r: &QuasiModeReport) -> Result<Self> {
        let mu = r.eigenvalue.unwrap_or_default();
        let check_all = |name: &str, v: &[f64]| -> Result<Vec<f64>> {
            v.iter().map(|x| finite(name, *x)).collect()
        };
        Ok(Self {
            mode_index: r.index,
            mu_re: finite("mu_re", mu.re)?,
            mu_im: finite("mu_im", mu.im)?,
            k: finite("K", r.k)?,
            k_tilde: finite("K_tilde", r.k_tilde)?,
            ratio: finite("ratio", r.ratio)?,
            ratio_minus_one: finite("ratio_minus_one", r.ratio_excess())?,
            omega_mean: finite("Omega", r.omega_mean)?,
            lambda: finite("lambda", r.lambda)?,
            gamma: finite("gamma", r.gamma)?,
            e_nu: finite("E_nu", r.e_nu)?,
            n2: finite("N2", r.n2)?,
            n2_bar: finite("N2_bar", r.n2_bar)?,
            relative_bandwidth: finite("relative_bandwidth", r.relative_bandwidth())?,
            omega_bare: finite("Omega_bare", r.omega_bare_mean())?,
            p: check_all("p", &r.p)?,
            c_re: check_all("c_re", &r.c.iter().map(|z| z.re).collect::<Vec<_>>())?,
            c_im: check_all("c_im", &r.c.iter().map(|z| z.im).collect::<Vec<_>>())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    pub biorthogonality: f64,
    /// Absent when a quasi mode is self-orthogonal.
    pub completeness: Option<f64>,
    pub norm_consistency: f64,
    pub eigen_residual: f64,
    pub left_eigen_residual: f64,
    pub degenerate_pairs: Vec<(usize, usize)>,
    pub flagged_modes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdInfo {
    pub iterations: usize,
    pub mismatch: f64,
    /// Factor applied to the configured gain strength.
    pub gain_scale: f64,
}

/// Dominant quasi mode of the loss-only problem, for comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossOnlyComparison {
    #[serde(rename = "K")]
    pub k: f64,
    pub eigenvector_distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    /// Grid index, absent for the position-averaged probe.
    pub position: Option<usize>,
    pub max_deviation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsResult {
    pub check: &'static str,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope_fit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_slope: Option<f64>,
    /// `slope_fit / (2 λ E²)`, which should equal `K`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_from_slope: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub tool: &'static str,
    pub version: &'static str,
}

impl Provenance {
    pub fn for_config(config: &ScenarioConfig) -> Self {
        Self {
            config_hash: config.hash(),
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    #[serde(flatten)]
    pub report: ReportFields,
    pub residuals: Residuals,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_only: Option<LossOnlyComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsResult>,
    pub provenance: Provenance,
}

/// Full pipeline for one config, returning the solution alongside the
/// output for callers that continue with it.
pub fn solve_config(config: &ScenarioConfig) -> Result<(Built, Solution, RunOutput)> {
    let built = build(config)?;
    let target = config.target_frequency;
    let solution = match (&built.loss, config.threshold) {
        (Some(loss), true) => tune_threshold(&built.basis, &built.gain, loss, target)?,
        _ => solve_system(&built.basis, &built.gain, built.loss.as_ref(), target)?,
    };
    let report = &solution.report;
    let biorth = biorthogonality_residual(&solution.set, &built.basis);
    let completeness = match completeness_residual(&solution.set, &built.basis) {
        Ok(r) => Some(finite("completeness", r)?),
        Err(Error::CompletenessUnavailable { .. }) => None,
        Err(e) => return Err(e),
    };
    let (dn, dn_bar) = norm_consistency(report, built.basis.grid())?;
    let residuals = Residuals {
        biorthogonality: finite("biorthogonality", biorth.residual)?,
        completeness,
        norm_consistency: finite("norm_consistency", dn.max(dn_bar))?,
        eigen_residual: finite("eigen_residual", solution.set.max_residual())?,
        left_eigen_residual: finite("left_eigen_residual", solution.set.max_left_residual())?,
        degenerate_pairs: biorth.degenerate_pairs,
        flagged_modes: solution.set.flagged(),
    };
    let threshold = if solution.threshold_iterations > 0 || config.threshold {
        let base = built.gain.rate(&report.eps, &report.c);
        Some(ThresholdInfo {
            iterations: solution.threshold_iterations,
            mismatch: finite("threshold.mismatch", threshold_mismatch(report))?,
            gain_scale: finite("threshold.gain_scale", report.lambda / base)?,
        })
    } else {
        None
    };
    let loss_only = match &built.loss {
        Some(loss) => Some(loss_only_comparison(&built.basis, loss, report)?),
        None => None,
    };
    let output = RunOutput {
        report: ReportFields::from_report(report)?,
        residuals,
        threshold,
        loss_only,
        dynamics: None,
        provenance: Provenance::for_config(config),
    };
    Ok((built, solution, output))
}

/// Loss-only problem: pick the quasi mode closest to the full solution's
/// dominant vector and report its `K`. The two coincide exactly when the
/// gain matrix is a multiple of the identity.
pub fn loss_only_comparison(
    basis: &ModeBasis,
    loss: &CouplingMatrix,
    full: &QuasiModeReport,
) -> Result<LossOnlyComparison> {
    let zero = CouplingMatrix::zeros(basis.n_modes(), ReservoirKind::Gain);
    let sys = assemble(basis, &zero, Some(loss))?;
    let set = eigendecompose(&sys)?;
    let mut best: Option<(usize, f64)> = None;
    for i in 0..set.len() {
        if set.is_flagged(i) {
            continue;
        }
        let d = phase_aligned_distance(&set.right_vector(i), &full.c);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    let (index, distance) = best.ok_or(Error::NoSelectableMode)?;
    let report = analyze(&set, index, basis, &zero, Some(loss))?;
    Ok(LossOnlyComparison {
        k: finite("loss_only.K", report.k)?,
        eigenvector_distance: finite("loss_only.eigenvector_distance", distance)?,
    })
}

pub fn run_solve(config: &ScenarioConfig) -> Result<RunOutput> {
    Ok(solve_config(config)?.2)
}

/// Interior grid indices for the point probes, drawn from the config seed.
fn probe_positions(config: &ScenarioConfig, points: usize, count: usize) -> Vec<usize> {
    let mut rng = fixtures::rng(config.seed.unwrap_or(0));
    let lo = points / 20;
    let hi = points - points / 20;
    (0..count).map(|_| rng.random_range(lo..hi)).collect()
}

fn noise_law_result(checks: &[NoiseCheck]) -> DynamicsResult {
    let passed = checks.iter().all(|c| c.passed);
    DynamicsResult {
        check: "noise_law",
        status: if passed { Status::Pass } else { Status::Fail },
        reason: None,
        max_deviation: Some(checks.iter().map(|c| c.max_deviation).fold(0.0, f64::max)),
        tolerance: checks.first().map(|c| c.tolerance),
        slope_fit: None,
        expected_slope: None,
        k_from_slope: None,
        probes: checks
            .iter()
            .map(|c| ProbeResult {
                position: c.position,
                max_deviation: c.max_deviation,
                passed: c.passed,
            })
            .collect(),
    }
}

/// Solve, then check the noise dynamics against the moment oracle: the
/// amplifier noise law for gain-only configs, the diffusion law at threshold.
pub fn run_validate(config: &ScenarioConfig) -> Result<RunOutput> {
    if config.loss.is_some() && !config.threshold {
        return Err(Error::config(
            "threshold",
            "with a loss reservoir only the threshold diffusion check applies; set threshold to true",
        ));
    }
    let (built, solution, mut output) = solve_config(config)?;
    let report = &solution.report;
    let generator =
        derive_moment_generator(&solution.gain, built.loss.as_ref(), built.basis.omega())?;
    let dynamics = if config.threshold {
        let check = verify_threshold_diffusion(report, &generator, None)?;
        let slope = check.trace.slope_fit.unwrap_or(0.0);
        let denom = 2.0 * report.lambda * report.e_nu * report.e_nu;
        DynamicsResult {
            check: "threshold_diffusion",
            status: if check.passed {
                Status::Pass
            } else {
                Status::Fail
            },
            reason: None,
            max_deviation: Some(finite("dynamics.max_deviation", check.max_deviation)?),
            tolerance: Some(check.tolerance),
            slope_fit: Some(finite("dynamics.slope_fit", slope)?),
            expected_slope: check.expected_slope,
            k_from_slope: if denom > 0.0 {
                Some(finite("dynamics.k_from_slope", slope / denom)?)
            } else {
                None
            },
            probes: Vec::new(),
        }
    } else if report.lambda <= 0.0 {
        DynamicsResult {
            check: "noise_law",
            status: Status::Skipped,
            reason: Some(format!(
                "gain rate lambda = {} is not positive",
                report.lambda
            )),
            max_deviation: None,
            tolerance: None,
            slope_fit: None,
            expected_slope: None,
            k_from_slope: None,
            probes: Vec::new(),
        }
    } else {
        let positions = probe_positions(config, built.basis.grid().len(), 3);
        let checks = verify_noise_law_at(report, &generator, &positions, None)?;
        for c in &checks {
            finite("dynamics.max_deviation", c.max_deviation)?;
        }
        noise_law_result(&checks)
    };
    output.dynamics = Some(dynamics);
    Ok(output)
}

/// Output format of the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

fn set_path(value: &mut Value, path: &str, x: f64) -> Result<()> {
    let bad = |msg: &str| Error::config(path, msg.to_string());
    if path.is_empty() {
        return Err(bad("empty parameter path"));
    }
    let mut node = value;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            Value::Object(map) => {
                if last && !map.contains_key(*seg) {
                    // Optional numeric fields are omitted when unset.
                    map.insert(seg.to_string(), Value::Null);
                }
                map.get_mut(*seg).ok_or_else(|| bad("no such field"))?
            }
            Value::Array(items) => {
                let k: usize = seg.parse().map_err(|_| bad("array index expected"))?;
                items
                    .get_mut(k)
                    .ok_or_else(|| bad("array index out of range"))?
            }
            _ => return Err(bad("no such field")),
        };
    }
    match node {
        Value::Number(_) | Value::Null => {}
        _ => return Err(bad("not a numeric field")),
    }
    *node = if x.fract() == 0.0 && x.abs() < 9.0e15 {
        if x >= 0.0 {
            Value::from(x as u64)
        } else {
            Value::from(x as i64)
        }
    } else {
        serde_json::Number::from_f64(x)
            .map(Value::Number)
            .ok_or_else(|| bad("value must be finite"))?
    };
    Ok(())
}

/// Copy of `config` with the numeric field at dotted `path` set to `x`.
pub fn with_parameter(config: &ScenarioConfig, path: &str, x: f64) -> Result<ScenarioConfig> {
    let mut value = serde_json::to_value(config).expect("config serialises");
    set_path(&mut value, path, x)?;
    from_value(value)
}

/// One sweep row: the swept value and the run at that value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    #[serde(flatten)]
    pub output: RunOutput,
}

/// Solve at every value of the parameter. Runs fan out across threads;
/// rows come back in input order.
pub fn run_sweep(
    config: &ScenarioConfig,
    parameter: &str,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    // Fail on a bad path even when there is nothing to sweep.
    let probe = values.first().copied().unwrap_or(0.0);
    let mut value = serde_json::to_value(config).expect("config serialises");
    set_path(&mut value, parameter, probe)?;

    let configs: Vec<ScenarioConfig> = values
        .iter()
        .map(|&x| with_parameter(config, parameter, x))
        .collect::<Result<_>>()?;
    let outputs: Vec<Result<RunOutput>> = configs.par_iter().map(run_solve).collect();
    values
        .iter()
        .zip(outputs)
        .map(|(&value, out)| {
            Ok(SweepRow {
                value,
                output: out?,
            })
        })
        .collect()
}

pub const CSV_COLUMNS: &[&str] = &[
    "value",
    "K",
    "K_tilde",
    "ratio",
    "ratio_minus_one",
    "Omega",
    "lambda",
    "gamma",
    "E_nu",
    "N2",
    "N2_bar",
    "relative_bandwidth",
    "biorthogonality",
    "completeness",
    "norm_consistency",
    "eigen_residual",
    "threshold_iterations",
    "dynamics_status",
    "slope_fit",
    "config_hash",
    "version",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_line(value: Option<f64>, o: &RunOutput) -> String {
    let r = &o.report;
    let status = o.dynamics.as_ref().map(|d| match d.status {
        Status::Pass => "pass",
        Status::Fail => "fail",
        Status::Skipped => "skipped",
    });
    let fields = [
        opt(value),
        r.k.to_string(),
        r.k_tilde.to_string(),
        r.ratio.to_string(),
        r.ratio_minus_one.to_string(),
        r.omega_mean.to_string(),
        r.lambda.to_string(),
        r.gamma.to_string(),
        r.e_nu.to_string(),
        r.n2.to_string(),
        r.n2_bar.to_string(),
        r.relative_bandwidth.to_string(),
        o.residuals.biorthogonality.to_string(),
        opt(o.residuals.completeness),
        o.residuals.norm_consistency.to_string(),
        o.residuals.eigen_residual.to_string(),
        o.threshold
            .as_ref()
            .map(|t| t.iterations.to_string())
            .unwrap_or_default(),
        status.unwrap_or_default().to_string(),
        opt(o.dynamics.as_ref().and_then(|d| d.slope_fit)),
        o.provenance.config_hash.clone(),
        o.provenance.version.to_string(),
    ];
    fields.join(",")
}

fn csv_header() -> String {
    CSV_COLUMNS.join(",")
}

/// CSV with header row and LF line endings.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = csv_header();
    out.push('\n');
    for row in rows {
        out.push_str(&csv_line(Some(row.value), &row.output));
        out.push('\n');
    }
    out
}

/// Single-run CSV (header plus one row, empty `value`).
pub fn output_csv(output: &RunOutput) -> String {
    format!("{}\n{}\n", csv_header(), csv_line(None, output))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serialises");
    s.push('\n');
    s
}

/// One invariant family checked by the self-test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfTestCheck {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfTestReport {
    pub seed: u64,
    pub checks: Vec<SelfTestCheck>,
    pub flagship: RunOutput,
    pub passed: bool,
    pub provenance: Provenance,
}

struct Worst {
    name: &'static str,
    tolerance: f64,
    cases: usize,
    worst: f64,
}

impl Worst {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            cases: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, v: f64) {
        self.cases += 1;
        // NaN must surface as a failure.
        self.worst = if v.is_nan() || self.worst.is_nan() {
            f64::NAN
        } else {
            self.worst.max(v)
        };
    }

    fn finish(self) -> SelfTestCheck {
        let ok = self.worst <= self.tolerance;
        SelfTestCheck {
            name: self.name,
            cases: self.cases,
            worst: self.worst,
            tolerance: self.tolerance,
            status: if ok { Status::Pass } else { Status::Fail },
        }
    }
}

pub const SELFTEST_SEED: u64 = 20_240_917;

/// Seeded invariant suite on built-in random scenarios plus the flagship
/// fixture. Deterministic: the same binary produces the same report.
pub fn run_selftest() -> Result<SelfTestReport> {
    let mut rng = fixtures::rng(SELFTEST_SEED);
    let mut lower = Worst::new("K >= 1", 1e-10);
    let mut upper = Worst::new("K <= K_tilde", 1e-10);
    let mut ratio = Worst::new("ratio identity", 1e-10);
    let mut biorth = Worst::new("biorthogonality", 1e-8);
    let mut complete = Worst::new("completeness", 1e-8);
    let mut left = Worst::new("left eigenvector scaling", 1e-9);
    let mut scale = Worst::new("scale invariance", 1e-12);

    for case in 0..24 {
        let n = 2 + case % 11;
        let s = fixtures::random_interval_scenario(&mut rng, n, case % 3 != 0)?;
        let sol = solve_system(&s.basis, &s.gain, s.loss.as_ref(), None)?;
        let r = &sol.report;
        lower.record((1.0 - r.k).max(0.0));
        upper.record(((r.k - r.k_tilde) / r.k_tilde).max(0.0));
        let direct = r.omega_mean * r.p.iter().zip(&r.omega).map(|(p, w)| p / w).sum::<f64>();
        ratio.record((r.k_tilde / r.k - direct).abs() / direct);
        let b = biorthogonality_residual(&sol.set, &s.basis);
        if !b.has_degeneracy_warning() {
            biorth.record(b.residual);
            complete.record(completeness_residual(&sol.set, &s.basis)?);
        }
        left.record(sol.set.max_left_residual());

        let z = num_complex::Complex64::from_polar(
            rng.random_range(0.1..10.0),
            rng.random_range(0.0..std::f64::consts::TAU),
        );
        let scaled: Vec<_> = r.c.iter().map(|x| x * z).collect();
        let rs =
            crate::quasimode::analyze_vector(&scaled, r.index, &s.basis, &s.gain, s.loss.as_ref())?;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        let mut d = rel(rs.k, r.k)
            .max(rel(rs.k_tilde, r.k_tilde))
            .max(rel(rs.omega_mean, r.omega_mean))
            .max(rel(rs.lambda, r.lambda));
        if r.gamma != 0.0 {
            d = d.max(rel(rs.gamma, r.gamma));
        }
        for (a, b) in rs.p.iter().zip(&r.p) {
            d = d.max(rel(*a, *b));
        }
        scale.record(d);
    }

    let flagship = run_solve(&parse_config(FLAGSHIP_CONFIG)?)?;
    let checks: Vec<SelfTestCheck> = [lower, upper, ratio, biorth, complete, left, scale]
        .into_iter()
        .map(Worst::finish)
        .collect();
    let passed = checks.iter().all(|c| c.status == Status::Pass);
    let provenance = Provenance {
        config_hash: flagship.provenance.config_hash.clone(),
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
    };
    Ok(SelfTestReport {
        seed: SELFTEST_SEED,
        checks,
        flagship,
        passed,
        provenance,
    })
}
