//! Monte-Carlo model of the polarization detection chain.
//!
//! Both photons leave the cavity through the same fiber. A 50/50 beam
//! splitter sends each of them independently to arm A or arm B; only pairs
//! that split across the two arms are kept. Each arm has a polarization
//! analyzer (optional quarter-wave retarder, rotated polarizer, two-port
//! PBS) followed by detectors with efficiency `eta_det` and a dark-click
//! probability `dark_rate` per gate.
//!
//! Photon 2 has an emission time drawn from an exponential profile over the
//! normalized pulse `[0, 1)`. Only photons before `window_fraction` are
//! accepted, and photons emitted after `late_onset` are depolarized with
//! probability `late_emission_error`.
//!
//! Polarization conventions (photonic `|0⟩ = σ⁺`, `|1⟩ = σ⁻`):
//!
//! * `|H⟩ = (|σ⁺⟩ + |σ⁻⟩)/√2`, `|V⟩ = −i(|σ⁺⟩ − |σ⁻⟩)/√2`
//! * analyzer at θ: up port `cos θ|H⟩ + sin θ|V⟩`
//! * `|D⟩`/`|A⟩`: analyzer at 45°; `|R⟩ = (|H⟩ + i|V⟩)/√2 = |σ⁺⟩`, `|L⟩ = |σ⁻⟩`
//! * circular analysis: retarder `Q = |H⟩⟨R| + |V⟩⟨L|` in front of a 0° analyzer,
//!   i.e. `Q†` takes `H → (H + iV)/√2`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, cr, partial_trace, tensor, validate_density, CMatrix, DensityMatrix, HermitianOperator, StateVector};
use crate::protocol::check_unit;
use crate::rng::{derive_seed, stream_rng};
use crate::tomography::{TomographyDataset, TomographyRecord};

/// Sequences simulated per random stream.
pub const BATCH_SIZE: u64 = 1 << 16;

/// `|H⟩` in the circular basis.
pub fn h_state() -> StateVector {
    StateVector::new(vec![cr(FRAC_1_SQRT_2), cr(FRAC_1_SQRT_2)]).expect("nonzero")
}

/// `|V⟩` in the circular basis.
pub fn v_state() -> StateVector {
    StateVector::new(vec![c(0.0, -FRAC_1_SQRT_2), c(0.0, FRAC_1_SQRT_2)]).expect("nonzero")
}

/// Up-port state of a linear analyzer at `theta_deg`.
pub fn analyzer_state(theta_deg: f64) -> StateVector {
    let t = theta_deg.to_radians();
    let (h, v) = (h_state(), v_state());
    let amps = h
        .amplitudes()
        .iter()
        .zip(v.amplitudes())
        .map(|(a, b)| a * t.cos() + b * t.sin())
        .collect();
    StateVector::new(amps).expect("nonzero")
}

/// Up/down port projectors of a linear analyzer at `theta_deg`.
pub fn analyzer_projectors(theta_deg: f64) -> (HermitianOperator, HermitianOperator) {
    let up = analyzer_state(theta_deg).projector();
    let down = &CMatrix::identity(2) - &up;
    (
        HermitianOperator::new(up).expect("projector"),
        HermitianOperator::new(down).expect("projector"),
    )
}

/// Quarter-wave retarder used for circular analysis: `R → H`, `L → V`.
pub fn quarter_wave() -> CMatrix {
    let (h, v) = (h_state(), v_state());
    let r = StateVector::basis(2, 0);
    let l = StateVector::basis(2, 1);
    &CMatrix::outer(h.amplitudes(), r.amplitudes()) + &CMatrix::outer(v.amplitudes(), l.amplitudes())
}

/// Analyzer bases used for tomography.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    /// Linear 0°: ports H / V.
    HV,
    /// Linear 45°: ports D / A.
    DA,
    /// Retarder + linear 0°: ports R / L.
    RL,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::HV, Basis::DA, Basis::RL];

    /// Port labels `(up, down)`.
    pub fn labels(self) -> (char, char) {
        match self {
            Basis::HV => ('H', 'V'),
            Basis::DA => ('D', 'A'),
            Basis::RL => ('R', 'L'),
        }
    }

    /// Angle of the polarizer behind the (optional) retarder.
    pub fn analyzer_angle(self) -> f64 {
        match self {
            Basis::DA => 45.0,
            _ => 0.0,
        }
    }

    /// Effective `(up, down)` projectors on the incoming photon.
    pub fn projectors(self) -> [CMatrix; 2] {
        let (up, down) = analyzer_projectors(self.analyzer_angle());
        match self {
            Basis::RL => {
                let q = quarter_wave();
                let qd = q.adjoint();
                [
                    up.matrix().conjugate_by(&qd),
                    down.matrix().conjugate_by(&qd),
                ]
            }
            _ => [up.into_matrix(), down.into_matrix()],
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (u, d) = self.labels();
        write!(f, "{u}{d}")
    }
}

impl FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "H" | "V" | "HV" | "H/V" => Ok(Basis::HV),
            "D" | "A" | "DA" | "D/A" => Ok(Basis::DA),
            "R" | "L" | "RL" | "R/L" => Ok(Basis::RL),
            other => Err(Error::Parse(format!("unknown basis label `{other}`"))),
        }
    }
}

/// Analyzer angles for photon 1 (`alpha_deg`) and photon 2 (`beta_deg`),
/// stored modulo 180° in `[0, 180)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementSetting {
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

pub fn wrap_angle(deg: f64) -> f64 {
    let w = deg.rem_euclid(180.0);
    if (180.0 - w).abs() < 1e-9 {
        0.0
    } else {
        w
    }
}

/// Angle equality modulo 180°.
pub fn same_angle(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d) < 1e-9
}

impl MeasurementSetting {
    pub fn new(alpha_deg: f64, beta_deg: f64) -> Result<Self> {
        if !alpha_deg.is_finite() || !beta_deg.is_finite() {
            return Err(Error::Validation("analyzer angles must be finite".into()));
        }
        Ok(Self {
            alpha_deg: wrap_angle(alpha_deg),
            beta_deg: wrap_angle(beta_deg),
        })
    }

    pub fn swapped(&self) -> Self {
        Self {
            alpha_deg: self.beta_deg,
            beta_deg: self.alpha_deg,
        }
    }

    pub fn matches(&self, alpha_deg: f64, beta_deg: f64) -> bool {
        same_angle(self.alpha_deg, alpha_deg) && same_angle(self.beta_deg, beta_deg)
    }
}

/// Detector and photon-2 timing model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    /// Detection probability per photon reaching an analyzer.
    pub eta_det: f64,
    /// Dark-click probability per photon gate (full-length gate).
    pub dark_rate: f64,
    /// Accepted leading fraction of the photon-2 pulse, in (0, 1].
    pub window_fraction: f64,
    /// Depolarization probability of a late photon 2.
    pub late_emission_error: f64,
    /// Pulse fraction after which a photon-2 emission counts as late.
    pub late_onset: f64,
    /// Decay rate of the exponential emission profile, per pulse length.
    pub pulse_decay: f64,
}

impl DetectorParams {
    /// Unit efficiency, no dark counts, no late-emission errors.
    pub fn ideal() -> Self {
        Self {
            eta_det: 1.0,
            dark_rate: 0.0,
            window_fraction: 1.0,
            late_emission_error: 0.0,
            late_onset: 1.0,
            pulse_decay: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("detector.eta_det", self.eta_det)?;
        check_unit("detector.dark_rate", self.dark_rate)?;
        check_unit("detector.late_emission_error", self.late_emission_error)?;
        check_unit("detector.late_onset", self.late_onset)?;
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(Error::config(
                "detector.window_fraction",
                format!("must lie in (0, 1], got {}", self.window_fraction),
            ));
        }
        if !(self.pulse_decay >= 0.0) || !self.pulse_decay.is_finite() {
            return Err(Error::config(
                "detector.pulse_decay",
                format!("must be finite and >= 0, got {}", self.pulse_decay),
            ));
        }
        Ok(())
    }

    /// CDF of the photon-2 emission time on `[0, 1)`.
    pub fn emission_cdf(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let k = self.pulse_decay;
        if k < 1e-12 {
            t
        } else {
            (-(-k * t).exp_m1()) / (-(-k).exp_m1())
        }
    }

    fn sample_emission_time(&self, u: f64) -> f64 {
        let k = self.pulse_decay;
        if k < 1e-12 {
            u
        } else {
            -(u * (-k).exp_m1()).ln_1p() / k
        }
    }

    /// Fraction of photon-2 emissions inside the window.
    pub fn window_acceptance(&self) -> f64 {
        self.emission_cdf(self.window_fraction)
    }

    /// Fraction of accepted photon-2 emissions that are late.
    pub fn late_fraction(&self) -> f64 {
        let accepted = self.window_acceptance();
        if accepted <= 0.0 {
            return 0.0;
        }
        let late = (accepted - self.emission_cdf(self.late_onset)).max(0.0);
        late / accepted
    }

    /// `(click probability, fraction of clicks that are dark)` for photon 1.
    fn photon1_click(&self) -> (f64, f64) {
        click_model(self.eta_det, self.dark_rate)
    }

    /// Same for photon 2, whose gate shrinks with the window.
    fn photon2_click(&self) -> (f64, f64) {
        click_model(
            self.eta_det * self.window_acceptance(),
            self.dark_rate * self.window_fraction,
        )
    }

    /// Probability that photon 1's recorded outcome is uniformly random.
    pub fn photon1_randomization(&self) -> f64 {
        self.photon1_click().1
    }

    /// Probability that photon 2's recorded outcome is uniformly random
    /// (dark click, or late emission that was depolarized).
    pub fn photon2_randomization(&self) -> f64 {
        let (_, dark) = self.photon2_click();
        dark + (1.0 - dark) * self.late_emission_error * self.late_fraction()
    }

    /// Probability that a sequence ends as a recorded coincidence.
    pub fn coincidence_probability(&self) -> f64 {
        0.5 * self.photon1_click().0 * self.photon2_click().0
    }
}

fn click_model(eta: f64, dark: f64) -> (f64, f64) {
    let click = eta + (1.0 - eta) * dark;
    let dark_share = if click > 0.0 { (1.0 - eta) * dark / click } else { 0.0 };
    (click, dark_share)
}

/// Coincidence counts for one analyzer setting. `n_ij`: port `i` on the
/// photon-1 analyzer, port `j` on the photon-2 analyzer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub n_uu: u64,
    pub n_ud: u64,
    pub n_du: u64,
    pub n_dd: u64,
    pub n_discarded: u64,
}

impl Counts {
    pub fn as_array(&self) -> [u64; 4] {
        [self.n_uu, self.n_ud, self.n_du, self.n_dd]
    }

    pub fn coincidences(&self) -> u64 {
        self.n_uu + self.n_ud + self.n_du + self.n_dd
    }

    fn add(mut self, o: Counts) -> Counts {
        self.n_uu += o.n_uu;
        self.n_ud += o.n_ud;
        self.n_du += o.n_du;
        self.n_dd += o.n_dd;
        self.n_discarded += o.n_discarded;
        self
    }

    fn bump(&mut self, outcome: usize) {
        match outcome {
            0 => self.n_uu += 1,
            1 => self.n_ud += 1,
            2 => self.n_du += 1,
            _ => self.n_dd += 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub setting: MeasurementSetting,
    #[serde(flatten)]
    pub counts: Counts,
}

impl CountRecord {
    pub fn new(setting: MeasurementSetting, n: [u64; 4], n_discarded: u64) -> Self {
        Self {
            setting,
            counts: Counts {
                n_uu: n[0],
                n_ud: n[1],
                n_du: n[2],
                n_dd: n[3],
                n_discarded,
            },
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.coincidences()
    }
}

/// Records of one two-arm run, split by which arm photon 1 reached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoArmRecord {
    /// Photon 1 analyzed in arm A: setting `(θ_A, θ_B)`.
    pub photon1_in_a: CountRecord,
    /// Photon 1 analyzed in arm B: setting `(θ_B, θ_A)`.
    pub photon1_in_b: CountRecord,
    /// Pairs that went to the same arm.
    pub n_same_arm: u64,
}

/// `[p_uu, p_ud, p_du, p_dd]` for projector pairs on photon 1 and photon 2.
pub fn joint_probabilities(rho: &DensityMatrix, proj_1: &[CMatrix; 2], proj_2: &[CMatrix; 2]) -> [f64; 4] {
    let mut p = [0.0; 4];
    for (i, a) in proj_1.iter().enumerate() {
        for (j, b) in proj_2.iter().enumerate() {
            p[2 * i + j] = rho.matrix().trace_product(&tensor(a, b)).re;
        }
    }
    p
}

fn check_two_qubit(rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != 4 {
        return Err(Error::Dimension(format!("expected a two-qubit state, got dim {}", rho.dim())));
    }
    let d = validate_density(rho.matrix());
    if !d.passed {
        return Err(Error::Validation(d.to_string()));
    }
    Ok(())
}

/// Joint port probabilities for linear analyzers at `setting`.
pub fn outcome_probabilities(rho: &DensityMatrix, setting: &MeasurementSetting) -> Result<[f64; 4]> {
    check_two_qubit(rho)?;
    Ok(linear_probabilities(rho, setting))
}

fn linear_probabilities(rho: &DensityMatrix, setting: &MeasurementSetting) -> [f64; 4] {
    let (a_up, a_dn) = analyzer_projectors(setting.alpha_deg);
    let (b_up, b_dn) = analyzer_projectors(setting.beta_deg);
    joint_probabilities(
        rho,
        &[a_up.into_matrix(), a_dn.into_matrix()],
        &[b_up.into_matrix(), b_dn.into_matrix()],
    )
}

/// Replaces qubit `which` by `I/2` with probability `q`.
pub fn depolarize_local(rho: &DensityMatrix, which: usize, q: f64) -> DensityMatrix {
    if q == 0.0 {
        return rho.clone();
    }
    let half = CMatrix::identity(2).scale(0.5);
    let other = partial_trace(rho, [2, 2], which).expect("two-qubit state");
    let replaced = if which == 0 {
        tensor(&half, other.matrix())
    } else {
        tensor(other.matrix(), &half)
    };
    DensityMatrix::from_channel(&rho.matrix().scale(1.0 - q) + &replaced.scale(q))
}

/// Effective two-photon state seen in recorded coincidences: dark clicks
/// and late-emission errors act as local depolarization of each photon.
pub fn detected_state(rho: &DensityMatrix, det: &DetectorParams) -> Result<DensityMatrix> {
    check_two_qubit(rho)?;
    det.validate()?;
    let r1 = depolarize_local(rho, 0, det.photon1_randomization());
    Ok(depolarize_local(&r1, 1, det.photon2_randomization()))
}

/// Inverse-CDF table for the four joint outcomes.
#[derive(Clone, Copy)]
struct OutcomeSampler {
    cum: [f64; 3],
}

impl OutcomeSampler {
    fn new(p: [f64; 4]) -> Self {
        let p = p.map(|x| x.max(0.0));
        let total: f64 = p.iter().sum();
        let mut cum = [0.0; 3];
        let mut acc = 0.0;
        for k in 0..3 {
            acc += p[k] / total;
            cum[k] = acc;
        }
        Self { cum }
    }

    fn sample(&self, u: f64) -> usize {
        self.cum.iter().position(|&c| u < c).unwrap_or(3)
    }
}

/// Batch execution order. Results are identical for every variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    Parallel,
    Sequential,
    /// Sequential, last batch first.
    Reversed,
}

#[derive(Clone, Copy, Default)]
struct BatchTally {
    first_in_a: Counts,
    first_in_b: Counts,
    same_arm: u64,
}

impl BatchTally {
    fn add(self, o: BatchTally) -> BatchTally {
        BatchTally {
            first_in_a: self.first_in_a.add(o.first_in_a),
            first_in_b: self.first_in_b.add(o.first_in_b),
            same_arm: self.same_arm + o.same_arm,
        }
    }
}

fn simulate_batch(
    rng: &mut ChaCha8Rng,
    n: u64,
    samplers: &[OutcomeSampler; 2],
    det: &DetectorParams,
) -> BatchTally {
    let mut tally = BatchTally::default();
    let dark2 = det.dark_rate * det.window_fraction;
    for _ in 0..n {
        let route: u8 = rng.random();
        let (arm1, arm2) = (route & 1, (route >> 1) & 1);
        if arm1 == arm2 {
            tally.same_arm += 1;
            continue;
        }
        let photon1_in_a = arm1 == 0;
        let sampler = &samplers[usize::from(!photon1_in_a)];
        let outcome = sampler.sample(rng.random());
        let (mut port1, mut port2) = (outcome / 2, outcome % 2);

        let u_det1: f64 = rng.random();
        let u_dark1: f64 = rng.random();
        let u_time: f64 = rng.random();
        let u_det2: f64 = rng.random();
        let u_err2: f64 = rng.random();
        let u_dark2: f64 = rng.random();
        let rand_ports: u8 = rng.random();

        let click1 = if u_det1 < det.eta_det {
            true
        } else if u_dark1 < det.dark_rate {
            port1 = usize::from(rand_ports & 1);
            true
        } else {
            false
        };

        let t = det.sample_emission_time(u_time);
        let click2 = if t < det.window_fraction && u_det2 < det.eta_det {
            if t >= det.late_onset && u_err2 < det.late_emission_error {
                port2 = usize::from((rand_ports >> 1) & 1);
            }
            true
        } else if u_dark2 < dark2 {
            port2 = usize::from((rand_ports >> 1) & 1);
            true
        } else {
            false
        };

        let bucket = if photon1_in_a {
            &mut tally.first_in_a
        } else {
            &mut tally.first_in_b
        };
        if click1 && click2 {
            bucket.bump(2 * port1 + port2);
        } else {
            bucket.n_discarded += 1;
        }
    }
    tally
}

fn run_batches(
    n_sequences: u64,
    seed: u64,
    schedule: Schedule,
    samplers: [OutcomeSampler; 2],
    det: &DetectorParams,
) -> BatchTally {
    let n_batches = n_sequences.div_ceil(BATCH_SIZE);
    let batch = |b: u64| {
        let len = BATCH_SIZE.min(n_sequences - b * BATCH_SIZE);
        simulate_batch(&mut stream_rng(seed, b), len, &samplers, det)
    };
    match schedule {
        Schedule::Parallel => (0..n_batches)
            .into_par_iter()
            .map(batch)
            .reduce(BatchTally::default, BatchTally::add),
        Schedule::Sequential => (0..n_batches).map(batch).fold(BatchTally::default(), BatchTally::add),
        Schedule::Reversed => (0..n_batches).rev().map(batch).fold(BatchTally::default(), BatchTally::add),
    }
}

fn check_run(n_sequences: u64, det: &DetectorParams) -> Result<()> {
    if n_sequences == 0 {
        return Err(Error::Validation("n_sequences must be > 0".into()));
    }
    det.validate()
}

/// Simulates `n_sequences` protocol runs with photon 1 analyzed at
/// `setting.alpha_deg` and photon 2 at `setting.beta_deg`. Same-arm pairs
/// and pairs without two clicks end up in `n_discarded`.
pub fn simulate_counts(
    rho: &DensityMatrix,
    setting: &MeasurementSetting,
    n_sequences: u64,
    det: &DetectorParams,
    seed: u64,
) -> Result<CountRecord> {
    simulate_counts_scheduled(rho, setting, n_sequences, det, seed, Schedule::Parallel)
}

pub fn simulate_counts_scheduled(
    rho: &DensityMatrix,
    setting: &MeasurementSetting,
    n_sequences: u64,
    det: &DetectorParams,
    seed: u64,
    schedule: Schedule,
) -> Result<CountRecord> {
    check_two_qubit(rho)?;
    check_run(n_sequences, det)?;
    let sampler = OutcomeSampler::new(linear_probabilities(rho, setting));
    let counts = simulate_projective(sampler, n_sequences, det, seed, schedule);
    Ok(CountRecord { setting: *setting, counts })
}

fn simulate_projective(sampler: OutcomeSampler, n: u64, det: &DetectorParams, seed: u64, schedule: Schedule) -> Counts {
    let t = run_batches(n, seed, schedule, [sampler, sampler], det);
    let mut merged = t.first_in_a.add(t.first_in_b);
    merged.n_discarded += t.same_arm;
    merged
}

/// Simulates a run with fixed arm analyzers. Events are split by the arm
/// photon 1 took, so one run yields two disjoint records.
pub fn simulate_two_arm(
    rho: &DensityMatrix,
    arm_a_deg: f64,
    arm_b_deg: f64,
    n_sequences: u64,
    det: &DetectorParams,
    seed: u64,
) -> Result<TwoArmRecord> {
    check_two_qubit(rho)?;
    check_run(n_sequences, det)?;
    let in_a = MeasurementSetting::new(arm_a_deg, arm_b_deg)?;
    let in_b = in_a.swapped();
    let samplers = [
        OutcomeSampler::new(linear_probabilities(rho, &in_a)),
        OutcomeSampler::new(linear_probabilities(rho, &in_b)),
    ];
    let t = run_batches(n_sequences, seed, Schedule::Parallel, samplers, det);
    Ok(TwoArmRecord {
        photon1_in_a: CountRecord { setting: in_a, counts: t.first_in_a },
        photon1_in_b: CountRecord { setting: in_b, counts: t.first_in_b },
        n_same_arm: t.same_arm,
    })
}

/// Counts for one tomography basis pair.
pub fn simulate_basis_pair(
    rho: &DensityMatrix,
    basis_1: Basis,
    basis_2: Basis,
    n_sequences: u64,
    det: &DetectorParams,
    seed: u64,
) -> Result<TomographyRecord> {
    check_two_qubit(rho)?;
    check_run(n_sequences, det)?;
    let p = joint_probabilities(rho, &basis_1.projectors(), &basis_2.projectors());
    let counts = simulate_projective(OutcomeSampler::new(p), n_sequences, det, seed, Schedule::Parallel);
    Ok(TomographyRecord::from_counts(basis_1, basis_2, &counts))
}

/// All nine basis pairs `{HV, DA, RL}²`, each run with its own derived seed.
pub fn simulate_tomography_dataset(
    rho: &DensityMatrix,
    n_per_basis: u64,
    det: &DetectorParams,
    seed: u64,
) -> Result<TomographyDataset> {
    let mut records = Vec::with_capacity(9);
    for (k, (b1, b2)) in TomographyDataset::canonical_pairs().into_iter().enumerate() {
        records.push(simulate_basis_pair(rho, b1, b2, n_per_basis, det, derive_seed(seed, k as u64))?);
    }
    TomographyDataset::new(records)
}
