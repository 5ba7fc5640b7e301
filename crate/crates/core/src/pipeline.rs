//! End-to-end runs: simulated Bell test, tomography, and the storage-time
//! sweep with lifetime fit. Each run writes its outputs plus a manifest.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bell::{analytic_chsh, chsh_from_counts, BellResult, ChshAngles};
use crate::config::ExperimentConfig;
use crate::detection::{detected_state, same_angle, simulate_tomography_dataset, simulate_two_arm, CountRecord, DetectorParams, MeasurementSetting};
use crate::error::{Error, Result};
use crate::fit::{fit_lifetime, FitPoint, LifetimeFit};
use crate::io::{write_count_records, write_json, write_series, write_tomography, BellJson, MatrixJson};
use crate::linalg::{DensityDiagnostics, DensityMatrix};
use crate::measures::{report, EntanglementReport};
use crate::protocol::{final_state, rate_budget, RateReport};
use crate::rng::derive_seed;
use crate::tomography::{
    bootstrap_errors, linear_inversion, mle_reconstruct, project_to_physical, BootstrapReport, MleOptions,
    ReconstructionResult, TomographyDataset,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const BELL_STREAM: u64 = 0x100;
const TOMO_STREAM: u64 = 0x200;
const SWEEP_STREAM: u64 = 0x300;
const BOOTSTRAP_STREAM: u64 = 0x400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Simulate,
    Bell,
    Tomo,
    Sweep,
    Rates,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Mle,
    Linear,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub method: Method,
    /// Bootstrap resamples; `None` disables the bootstrap.
    pub bootstrap: Option<usize>,
}

/// `(α, α′; β, β′)` from four settings in CHSH order.
pub fn chsh_angles(settings: &[MeasurementSetting]) -> Result<ChshAngles> {
    let [s0, s1, s2, s3] = settings else {
        return Err(Error::Configuration(format!("expected 4 settings, got {}", settings.len())));
    };
    let angles = ChshAngles::new(s0.alpha_deg, s2.alpha_deg, s0.beta_deg, s1.beta_deg);
    let consistent = same_angle(s1.alpha_deg, angles.alpha)
        && same_angle(s3.alpha_deg, angles.alpha_p)
        && same_angle(s2.beta_deg, angles.beta)
        && same_angle(s3.beta_deg, angles.beta_p);
    if !consistent {
        return Err(Error::Configuration(
            "settings must be ordered (α,β), (α,β′), (α′,β), (α′,β′)".into(),
        ));
    }
    Ok(angles)
}

fn swap_roles(a: &ChshAngles) -> ChshAngles {
    ChshAngles::new(a.beta, a.beta_p, a.alpha, a.alpha_p)
}

/// Source state at `dt_us` and the effective state behind the detectors.
pub fn states(cfg: &ExperimentConfig, dt_us: f64, det: &DetectorParams) -> Result<(DensityMatrix, DensityMatrix)> {
    let rho = final_state(&cfg.noise, dt_us)?;
    let detected = detected_state(&rho, det)?;
    Ok((rho, detected))
}

#[derive(Clone, Debug)]
pub struct BellRun {
    /// Photon 1 in arm A: settings as configured.
    pub records_a: Vec<CountRecord>,
    /// Photon 1 in arm B: roles of the two analyzers swapped.
    pub records_b: Vec<CountRecord>,
    /// `S` from `records_a` and from `records_b`.
    pub results: [BellResult; 2],
    /// The same two values from the detected state.
    pub analytic: [BellResult; 2],
}

/// Runs the two-arm experiment at every configured setting. Arm A holds
/// `α`, arm B holds `β`; each run yields one record per CHSH set.
pub fn run_bell(cfg: &ExperimentConfig) -> Result<BellRun> {
    let angles = chsh_angles(&cfg.settings)?;
    // the Monte-Carlo applies detector noise itself, so it starts from the source state
    let (rho, detected) = states(cfg, cfg.dt_us, &cfg.detector)?;
    let mut records_a = Vec::with_capacity(4);
    let mut records_b = Vec::with_capacity(4);
    for (k, s) in cfg.settings.iter().enumerate() {
        let run = simulate_two_arm(
            &rho,
            s.alpha_deg,
            s.beta_deg,
            cfg.n_sequences,
            &cfg.detector,
            derive_seed(cfg.seed, BELL_STREAM + k as u64),
        )?;
        records_a.push(run.photon1_in_a);
        records_b.push(run.photon1_in_b);
    }
    let swapped = swap_roles(&angles);
    // with roles swapped, (α,β′) and (α′,β) trade places in CHSH order
    records_b.swap(1, 2);
    Ok(BellRun {
        results: [chsh_from_counts(&records_a, &angles)?, chsh_from_counts(&records_b, &swapped)?],
        analytic: [analytic_chsh(&detected, &angles)?, analytic_chsh(&detected, &swapped)?],
        records_a,
        records_b,
    })
}

pub fn reconstruct(ds: &TomographyDataset, method: Method) -> Result<ReconstructionResult> {
    match method {
        Method::Mle => {
            let r = mle_reconstruct(ds, &MleOptions::default())?;
            if !r.converged {
                return Err(Error::NonConvergence(format!(
                    "MLE stopped after {} iterations",
                    r.iterations
                )));
            }
            Ok(r)
        }
        Method::Linear => linear_inversion(ds),
    }
}

#[derive(Clone, Debug)]
pub struct TomoRun {
    pub dt_us: f64,
    pub dataset: TomographyDataset,
    pub result: ReconstructionResult,
    pub report: EntanglementReport,
    /// Measures were computed on the PSD projection of the estimate.
    pub projected: bool,
    pub bootstrap: Option<BootstrapReport>,
    /// Measures of the analytic detected state.
    pub expected: EntanglementReport,
}

/// Measures of an estimate; non-physical estimates are projected first.
pub fn analyze(result: &ReconstructionResult) -> Result<(EntanglementReport, bool)> {
    if result.is_physical() {
        Ok((report(&result.density()?)?, false))
    } else {
        Ok((report(&project_to_physical(&result.estimate)?)?, true))
    }
}

pub fn analyze_dataset(ds: &TomographyDataset, method: Method) -> Result<(ReconstructionResult, EntanglementReport, bool)> {
    let result = reconstruct(ds, method)?;
    let (rep, projected) = analyze(&result)?;
    Ok((result, rep, projected))
}

fn tomo_at(cfg: &ExperimentConfig, dt_us: f64, seed: u64, opts: &RunOptions) -> Result<TomoRun> {
    let (rho, detected) = states(cfg, dt_us, &cfg.detector)?;
    let dataset = simulate_tomography_dataset(&rho, cfg.n_per_basis, &cfg.detector, seed)?;
    let (result, rep, projected) = analyze_dataset(&dataset, opts.method)?;
    let bootstrap = match opts.bootstrap {
        Some(n) => Some(bootstrap_errors(&dataset, n, derive_seed(seed, BOOTSTRAP_STREAM), &MleOptions::default())?),
        None => None,
    };
    Ok(TomoRun {
        dt_us,
        dataset,
        result,
        report: rep,
        projected,
        bootstrap,
        expected: report(&detected)?,
    })
}

pub fn run_tomo(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<TomoRun> {
    tomo_at(cfg, cfg.dt_us, derive_seed(cfg.seed, TOMO_STREAM), opts)
}

#[derive(Clone, Debug)]
pub struct SweepRun {
    pub points: Vec<TomoRun>,
    pub fit: LifetimeFit,
}

/// Tomography at every `sweep_dt_us`, then a Gaussian fit of the negativity.
/// Bootstrap spreads, when requested, weight the fit.
pub fn run_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SweepRun> {
    if cfg.sweep_dt_us.len() < 3 {
        return Err(Error::config("sweep_dt_us", "sweep needs at least 3 storage times"));
    }
    let points = cfg
        .sweep_dt_us
        .iter()
        .enumerate()
        .map(|(i, &dt)| tomo_at(cfg, dt, derive_seed(cfg.seed, SWEEP_STREAM + i as u64), opts))
        .collect::<Result<Vec<_>>>()?;
    let series = sweep_series(&points);
    let fit = fit_lifetime(&series)?;
    Ok(SweepRun { points, fit })
}

pub fn sweep_series(points: &[TomoRun]) -> Vec<FitPoint> {
    points
        .iter()
        .map(|p| {
            let sigma = p.bootstrap.as_ref().map(|b| b.log_negativity.std.max(1e-6));
            FitPoint {
                dt_us: p.dt_us,
                value: p.report.log_negativity,
                kind: crate::fit::SeriesKind::EN,
                sigma,
            }
        })
        .collect()
}

pub fn run_rates(cfg: &ExperimentConfig) -> Result<RateReport> {
    rate_budget(&cfg.efficiency)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub mode: Mode,
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<OutputEntry>,
    /// Set when the run stopped early; `outputs` lists what was written.
    pub partial: bool,
    pub error: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

struct Outputs {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
}

impl Outputs {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let bytes = std::fs::read(self.path(name))?;
        self.entries.push(OutputEntry {
            file: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }
}

#[derive(Serialize)]
struct TomoJson<'a> {
    #[serde(flatten)]
    state: MatrixJson,
    method: Method,
    dt_us: f64,
    converged: bool,
    iterations: usize,
    log_likelihood: f64,
    diagnostics: DiagnosticsJson,
    metrics: &'a EntanglementReport,
    metrics_from_projection: bool,
    expected_metrics: &'a EntanglementReport,
    bootstrap: Option<&'a BootstrapReport>,
}

#[derive(Serialize)]
struct DiagnosticsJson {
    hermiticity_defect: f64,
    trace_defect: f64,
    min_eigenvalue: f64,
    passed: bool,
}

impl From<&DensityDiagnostics> for DiagnosticsJson {
    fn from(d: &DensityDiagnostics) -> Self {
        Self {
            hermiticity_defect: d.hermiticity_defect,
            trace_defect: d.trace_defect,
            min_eigenvalue: d.min_eigenvalue,
            passed: d.passed,
        }
    }
}

fn write_tomo_json(path: &Path, run: &TomoRun, method: Method) -> Result<()> {
    write_json(
        path,
        &TomoJson {
            state: MatrixJson::from_matrix(&run.result.estimate),
            method,
            dt_us: run.dt_us,
            converged: run.result.converged,
            iterations: run.result.iterations,
            log_likelihood: run.result.log_likelihood,
            diagnostics: (&run.result.diagnostics).into(),
            metrics: &run.report,
            metrics_from_projection: run.projected,
            expected_metrics: &run.expected,
            bootstrap: run.bootstrap.as_ref(),
        },
    )
}

#[derive(Serialize)]
struct BellRunJson {
    results: Vec<BellJson>,
    analytic: Vec<BellJson>,
}

/// Runs `mode` and writes its outputs, `config.json` and the manifest into
/// `out_dir`. On failure the manifest is still written, marked partial.
pub fn run_pipeline(cfg: &ExperimentConfig, mode: Mode, out_dir: &Path, opts: &RunOptions) -> Result<RunManifest> {
    std::fs::create_dir_all(out_dir)?;
    let started_unix = unix_now();
    let mut out = Outputs { dir: out_dir.to_path_buf(), entries: Vec::new() };
    let outcome = execute(cfg, mode, opts, &mut out);
    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        mode,
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        started_unix,
        finished_unix: unix_now(),
        outputs: out.entries,
        partial: outcome.is_err(),
        error: outcome.as_ref().err().map(|e| e.to_string()),
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    outcome.map(|_| manifest)
}

fn execute(cfg: &ExperimentConfig, mode: Mode, opts: &RunOptions, out: &mut Outputs) -> Result<()> {
    cfg.save(&out.path("config.json"))?;
    out.record("config.json")?;
    match mode {
        Mode::Simulate => {
            let bell = run_bell(cfg)?;
            let mut records = bell.records_a.clone();
            records.extend(bell.records_b.iter().copied());
            write_count_records(&out.path("counts.csv"), &records)?;
            out.record("counts.csv")?;
            let (rho, detected) = states(cfg, cfg.dt_us, &cfg.detector)?;
            let ds = simulate_tomography_dataset(&rho, cfg.n_per_basis, &cfg.detector, derive_seed(cfg.seed, TOMO_STREAM))?;
            write_tomography(&out.path("tomography.csv"), &ds)?;
            out.record("tomography.csv")?;
            write_json(&out.path("state.json"), &MatrixJson::from_matrix(rho.matrix()))?;
            out.record("state.json")?;
            write_json(&out.path("detected_state.json"), &MatrixJson::from_matrix(detected.matrix()))?;
            out.record("detected_state.json")?;
        }
        Mode::Bell => {
            let bell = run_bell(cfg)?;
            let mut records = bell.records_a.clone();
            records.extend(bell.records_b.iter().copied());
            write_count_records(&out.path("counts.csv"), &records)?;
            out.record("counts.csv")?;
            let json = BellRunJson {
                results: bell.results.iter().map(BellJson::from).collect(),
                analytic: bell.analytic.iter().map(BellJson::from).collect(),
            };
            write_json(&out.path("bell.json"), &json)?;
            out.record("bell.json")?;
        }
        Mode::Tomo => {
            let run = run_tomo(cfg, opts)?;
            write_tomography(&out.path("tomography.csv"), &run.dataset)?;
            out.record("tomography.csv")?;
            write_tomo_json(&out.path("tomo.json"), &run, opts.method)?;
            out.record("tomo.json")?;
        }
        Mode::Sweep => {
            let sweep = run_sweep(cfg, opts)?;
            for (i, run) in sweep.points.iter().enumerate() {
                let name = format!("tomography_{i}.csv");
                write_tomography(&out.path(&name), &run.dataset)?;
                out.record(&name)?;
            }
            write_series(&out.path("sweep.csv"), &sweep_series(&sweep.points))?;
            out.record("sweep.csv")?;
            let rows: Vec<SweepRow> = sweep.points.iter().map(SweepRow::from).collect();
            write_json(&out.path("sweep.json"), &rows)?;
            out.record("sweep.json")?;
            write_json(&out.path("fit.json"), &sweep.fit)?;
            out.record("fit.json")?;
        }
        Mode::Rates => {
            write_json(&out.path("rates.json"), &run_rates(cfg)?)?;
            out.record("rates.json")?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    dt_us: f64,
    metrics: EntanglementReport,
    expected_metrics: EntanglementReport,
    bootstrap: Option<BootstrapReport>,
}

impl From<&TomoRun> for SweepRow {
    fn from(r: &TomoRun) -> Self {
        Self {
            dt_us: r.dt_us,
            metrics: r.report,
            expected_metrics: r.expected,
            bootstrap: r.bootstrap.clone(),
        }
    }
}
