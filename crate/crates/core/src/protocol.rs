//! Analytic states of the entangling sequence and the phenomenological
//! noise channels acting on them, plus the pair-rate budget.
//!
//! Sequence: the first vSTIRAP pulse leaves the atom entangled with photon 1,
//! the atom stores the qubit for `dt`, and the second pulse maps the atomic
//! qubit onto photon 2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cr, CMatrix, DensityMatrix, StateVector};

/// Phenomenological noise acting on the stored atomic qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Atomic coherence factor at `dt = 0`.
    pub v0: f64,
    /// Gaussian dephasing time in μs.
    pub tau_e: f64,
    /// Weight of the white-noise admixture `I/4`.
    pub p_white: f64,
    /// Optical-pumping success probability.
    pub eta_pump: f64,
}

impl NoiseParams {
    /// No noise at all: the protocol produces the exact singlet.
    pub fn ideal() -> Self {
        Self {
            v0: 1.0,
            tau_e: f64::INFINITY,
            p_white: 0.0,
            eta_pump: 1.0,
        }
    }

    /// Pure Gaussian dephasing with the given initial coherence and lifetime.
    pub fn dephasing_only(v0: f64, tau_e: f64) -> Self {
        Self {
            v0,
            tau_e,
            p_white: 0.0,
            eta_pump: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit("noise.v0", self.v0)?;
        check_unit("noise.p_white", self.p_white)?;
        check_unit("noise.eta_pump", self.eta_pump)?;
        if self.tau_e.is_nan() || self.tau_e <= 0.0 {
            return Err(Error::config("noise.tau_e", format!("must be > 0, got {}", self.tau_e)));
        }
        Ok(())
    }

    /// Coherence factor `v(dt) = v0·exp(−(dt/τ)²)`.
    pub fn coherence(&self, dt_us: f64) -> f64 {
        if self.tau_e.is_infinite() {
            return self.v0;
        }
        let x = dt_us / self.tau_e;
        self.v0 * (-x * x).exp()
    }
}

/// Per-pulse photon probabilities, detection efficiency and repetition rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencyParams {
    pub p_photon1: f64,
    pub p_photon2: f64,
    pub eta_det: f64,
    /// Sequence repetition rate in kHz.
    pub rep_rate: f64,
}

impl EfficiencyParams {
    pub fn validate(&self) -> Result<()> {
        check_unit("efficiency.p_photon1", self.p_photon1)?;
        check_unit("efficiency.p_photon2", self.p_photon2)?;
        check_unit("efficiency.eta_det", self.eta_det)?;
        if !(self.rep_rate > 0.0) || !self.rep_rate.is_finite() {
            return Err(Error::config(
                "efficiency.rep_rate",
                format!("must be > 0, got {}", self.rep_rate),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Probability per sequence of detecting both photons.
    pub p_pair_detect: f64,
    pub pairs_produced_per_s: f64,
    pub pairs_detected_per_s: f64,
}

pub(crate) fn check_unit(path: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::config(path, format!("must lie in [0, 1], got {x}")));
    }
    Ok(())
}

fn singlet_amplitudes() -> Vec<crate::linalg::C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![cr(0.0), cr(s), cr(-s), cr(0.0)]
}

/// `|Ψ⁻⟩ = (|σ⁺σ⁻⟩ − |σ⁻σ⁺⟩)/√2`
pub fn singlet_vector() -> StateVector {
    StateVector::new(singlet_amplitudes()).expect("nonzero")
}

pub fn singlet() -> DensityMatrix {
    DensityMatrix::from_pure(&singlet_vector())
}

/// Atom ⊗ photon-1 state `(|1,−1⟩|σ⁺⟩ − |1,+1⟩|σ⁻⟩)/√2`.
pub fn atom_photon_vector() -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::new(vec![cr(s), cr(0.0), cr(0.0), cr(-s)]).expect("nonzero")
}

pub fn atom_photon_state() -> DensityMatrix {
    DensityMatrix::from_pure(&atom_photon_vector())
}

/// Index permutation of the mapping pulse: `|a, p⟩ → |p, 1−a⟩`
/// (atom ⊗ photon 1 → photon 1 ⊗ photon 2). `|1,−1⟩` becomes a σ⁻ photon
/// and `|1,+1⟩` a σ⁺ photon, which turns the atom–photon state into `|Ψ⁻⟩`.
fn mapped_index(atom_photon: usize) -> usize {
    let a = atom_photon / 2;
    let p = atom_photon % 2;
    p * 2 + (1 - a)
}

/// Maps the atomic qubit onto photon 2 and reorders to photon1 ⊗ photon2.
pub fn map_to_photon_pair(rho_ap: &DensityMatrix) -> Result<DensityMatrix> {
    if rho_ap.dim() != 4 {
        return Err(Error::Dimension(format!(
            "mapping needs a 4x4 atom-photon state, got {}x{}",
            rho_ap.dim(),
            rho_ap.dim()
        )));
    }
    let m = rho_ap.matrix();
    let mut out = CMatrix::zeros(4);
    for i in 0..4 {
        for j in 0..4 {
            out[(mapped_index(i), mapped_index(j))] = m[(i, j)];
        }
    }
    Ok(DensityMatrix::from_channel(out))
}

/// Multiplies the atomic-qubit coherences by `factor`. Valid for `|factor| ≤ 1`.
pub fn dephase_atom(rho_ap: &DensityMatrix, factor: f64) -> DensityMatrix {
    let m = rho_ap.matrix();
    let out = CMatrix::from_fn(4, |i, j| {
        if i / 2 != j / 2 {
            m[(i, j)] * factor
        } else {
            m[(i, j)]
        }
    });
    DensityMatrix::from_channel(out)
}

/// `ρ → (1−p)ρ + p·I/d`
pub fn depolarize(rho: &DensityMatrix, p: f64) -> DensityMatrix {
    let d = rho.dim();
    let mixed = CMatrix::identity(d).scale(p / d as f64);
    DensityMatrix::from_channel(&rho.matrix().scale(1.0 - p) + &mixed)
}

/// Storage noise for a delay `dt` (μs): Gaussian dephasing of the atomic
/// coherences followed by the white-noise admixture.
pub fn apply_storage_noise(rho_ap: &DensityMatrix, noise: &NoiseParams, dt_us: f64) -> Result<DensityMatrix> {
    if rho_ap.dim() != 4 {
        return Err(Error::Dimension("storage noise acts on the 4x4 atom-photon state".into()));
    }
    if dt_us.is_nan() || dt_us < 0.0 {
        return Err(Error::Validation(format!("dt must be >= 0, got {dt_us}")));
    }
    noise.validate()?;
    let dephased = dephase_atom(rho_ap, noise.coherence(dt_us));
    Ok(depolarize(&dephased, noise.p_white))
}

/// Failed optical pumping contributes a fully depolarized pair.
pub fn pumping_channel(rho: &DensityMatrix, eta_pump: f64) -> Result<DensityMatrix> {
    check_unit("eta_pump", eta_pump)?;
    Ok(depolarize(rho, 1.0 - eta_pump))
}

/// Two-photon state emitted for a storage time `dt` (μs).
pub fn final_state(noise: &NoiseParams, dt_us: f64) -> Result<DensityMatrix> {
    let stored = apply_storage_noise(&atom_photon_state(), noise, dt_us)?;
    let pumped = pumping_channel(&stored, noise.eta_pump)?;
    map_to_photon_pair(&pumped)
}

/// Independent-event pair-rate budget.
pub fn rate_budget(eff: &EfficiencyParams) -> Result<RateReport> {
    eff.validate()?;
    let p_pair = eff.p_photon1 * eff.p_photon2;
    let p_pair_detect = p_pair * eff.eta_det * eff.eta_det;
    let rep_hz = eff.rep_rate * 1e3;
    Ok(RateReport {
        p_pair_detect,
        pairs_produced_per_s: rep_hz * p_pair,
        pairs_detected_per_s: rep_hz * p_pair_detect,
    })
}
