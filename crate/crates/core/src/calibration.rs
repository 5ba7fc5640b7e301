//! Closed-form calibration of the white-noise weight and the late-emission
//! error against two singlet fidelities: one for the full photon-2 window
//! and one for a restricted window.
//!
//! All noise after the source is local depolarization, and the source state
//! has no local Bloch vectors, so `F − ¼` scales by `(1 − q1)(1 − q2)`.

use serde::{Deserialize, Serialize};

use crate::detection::DetectorParams;
use crate::error::{Error, Result};
use crate::protocol::NoiseParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTarget {
    pub dt_us: f64,
    /// Detected singlet fidelity with the full window.
    pub fidelity_full: f64,
    /// Detected singlet fidelity with `window_fraction`.
    pub fidelity_window: f64,
    pub window_fraction: f64,
}

impl Default for CalibrationTarget {
    fn default() -> Self {
        Self {
            dt_us: 0.8,
            fidelity_full: 0.902,
            fidelity_window: 0.932,
            window_fraction: 0.4,
        }
    }
}

/// Singlet fidelity of the source state (before detection).
pub fn source_fidelity(noise: &NoiseParams, dt_us: f64) -> f64 {
    let v = noise.coherence(dt_us);
    let f_dephased = (1.0 + v) / 2.0;
    let f_pumped = noise.eta_pump * f_dephased + (1.0 - noise.eta_pump) * 0.25;
    (1.0 - noise.p_white) * f_pumped + noise.p_white * 0.25
}

/// Singlet fidelity after the detection chain.
pub fn detected_fidelity(noise: &NoiseParams, det: &DetectorParams, dt_us: f64) -> f64 {
    let k = (1.0 - det.photon1_randomization()) * (1.0 - det.photon2_randomization());
    0.25 + k * (source_fidelity(noise, dt_us) - 0.25)
}

/// Solves for `noise.p_white` and `detector.late_emission_error`; all other
/// fields are kept. `detector.window_fraction` is set to 1 in the result.
pub fn calibrate(noise: &NoiseParams, det: &DetectorParams, target: &CalibrationTarget) -> Result<(NoiseParams, DetectorParams)> {
    let narrow = DetectorParams {
        window_fraction: target.window_fraction,
        late_emission_error: 0.0,
        ..*det
    };
    if narrow.late_fraction() > 0.0 {
        return Err(Error::Configuration(format!(
            "late_onset {} lies inside the calibration window {}",
            det.late_onset, target.window_fraction
        )));
    }
    let k_narrow = (1.0 - narrow.photon1_randomization()) * (1.0 - narrow.photon2_randomization());
    let f_source = 0.25 + (target.fidelity_window - 0.25) / k_narrow;

    let no_white = NoiseParams { p_white: 0.0, ..*noise };
    let f_clean = source_fidelity(&no_white, target.dt_us);
    let p_white = (f_clean - f_source) / (f_clean - 0.25);
    if !(0.0..=1.0).contains(&p_white) {
        return Err(Error::Configuration(format!(
            "window fidelity {} needs p_white = {p_white:.4}, outside [0, 1]",
            target.fidelity_window
        )));
    }

    let full = DetectorParams {
        window_fraction: 1.0,
        late_emission_error: 0.0,
        ..*det
    };
    let q1 = full.photon1_randomization();
    let dark2 = full.photon2_randomization();
    let q2 = 1.0 - (target.fidelity_full - 0.25) / ((f_source - 0.25) * (1.0 - q1));
    let late = full.late_fraction();
    let error = if late > 0.0 { (q2 - dark2) / ((1.0 - dark2) * late) } else { f64::NAN };
    if !(0.0..=1.0).contains(&error) {
        return Err(Error::Configuration(format!(
            "full-window fidelity {} needs late_emission_error = {error:.4}, outside [0, 1]",
            target.fidelity_full
        )));
    }
    Ok((
        NoiseParams { p_white, ..*noise },
        DetectorParams { late_emission_error: error, ..full },
    ))
}

/// Initial coherence that gives source fidelity `fidelity` at `dt_us` with
/// dephasing as the only noise.
pub fn dephasing_v0(fidelity: f64, tau_e: f64, dt_us: f64) -> Result<f64> {
    let decay = NoiseParams::dephasing_only(1.0, tau_e).coherence(dt_us);
    let v0 = (2.0 * fidelity - 1.0) / decay;
    if !(0.0..=1.0).contains(&v0) {
        return Err(Error::Configuration(format!("fidelity {fidelity} needs v0 = {v0:.4}")));
    }
    Ok(v0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::detected_state;
    use crate::measures::fidelity_singlet;
    use crate::protocol::final_state;

    fn base() -> (NoiseParams, DetectorParams) {
        (
            NoiseParams { v0: 1.0, tau_e: 5.7, p_white: 0.0, eta_pump: 1.0 },
            DetectorParams {
                eta_det: 0.2,
                dark_rate: 1e-4,
                window_fraction: 1.0,
                late_emission_error: 0.0,
                late_onset: 0.4,
                pulse_decay: 2.0,
            },
        )
    }

    #[test]
    fn calibrated_fidelities_match_state_model() {
        let (n, d) = base();
        let t = CalibrationTarget::default();
        let (n, d) = calibrate(&n, &d, &t).unwrap();
        let rho = final_state(&n, t.dt_us).unwrap();
        let full = fidelity_singlet(&detected_state(&rho, &d).unwrap()).unwrap();
        let narrow_det = DetectorParams { window_fraction: 0.4, ..d };
        let narrow = fidelity_singlet(&detected_state(&rho, &narrow_det).unwrap()).unwrap();
        assert!((full - 0.902).abs() < 1e-12);
        assert!((narrow - 0.932).abs() < 1e-12);
        assert!((detected_fidelity(&n, &d, t.dt_us) - full).abs() < 1e-12);
    }

    #[test]
    fn source_fidelity_matches_state() {
        let n = NoiseParams { v0: 0.9, tau_e: 5.7, p_white: 0.1, eta_pump: 0.8 };
        let f = fidelity_singlet(&final_state(&n, 2.0).unwrap()).unwrap();
        assert!((source_fidelity(&n, 2.0) - f).abs() < 1e-12);
    }

    #[test]
    fn pumping_at_eighty_percent_cannot_reach_target() {
        let (mut n, d) = base();
        n.eta_pump = 0.8;
        assert!(calibrate(&n, &d, &CalibrationTarget::default()).is_err());
    }

    #[test]
    fn dephasing_only_v0() {
        let v0 = dephasing_v0(0.902, 5.7, 0.8).unwrap();
        let f = source_fidelity(&NoiseParams::dephasing_only(v0, 5.7), 0.8);
        assert!((f - 0.902).abs() < 1e-12);
    }
}
