//! Correlation values and the CHSH combination
//! `S = |E(α′,β′) − E(α,β′)| + |E(α′,β) + E(α,β)|`, from counts or from a state.

use serde::{Deserialize, Serialize};

use crate::detection::{outcome_probabilities, CountRecord, MeasurementSetting};
use crate::error::{Error, Result};
use crate::linalg::{bloch_projector, eig_hermitian, pauli, tensor, CMatrix, DensityMatrix};

pub const TSIRELSON: f64 = 2.0 * std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    pub std_err: f64,
    pub n_total: u64,
}

/// Analyzer angles `(α, α′; β, β′)` in degrees. `α` angles act on photon 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshAngles {
    pub alpha: f64,
    pub alpha_p: f64,
    pub beta: f64,
    pub beta_p: f64,
}

impl ChshAngles {
    pub fn new(alpha: f64, alpha_p: f64, beta: f64, beta_p: f64) -> Self {
        Self { alpha, alpha_p, beta, beta_p }
    }

    /// The four settings in the order `(α,β), (α,β′), (α′,β), (α′,β′)`.
    pub fn settings(&self) -> [(f64, f64); 4] {
        [
            (self.alpha, self.beta),
            (self.alpha, self.beta_p),
            (self.alpha_p, self.beta),
            (self.alpha_p, self.beta_p),
        ]
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha, self.alpha_p, self.beta, self.beta_p]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellResult {
    pub s_value: f64,
    pub std_err: f64,
    pub settings: ChshAngles,
    /// `E` at `(α,β), (α,β′), (α′,β), (α′,β′)`.
    pub e_values: [f64; 4],
}

/// `S` from the four correlations ordered as in [`ChshAngles::settings`].
pub fn chsh_combination(e: [f64; 4]) -> f64 {
    let [e_ab, e_abp, e_apb, e_apbp] = e;
    (e_apbp - e_abp).abs() + (e_apb + e_ab).abs()
}

pub fn correlation_from_counts(rec: &CountRecord) -> Result<CorrelationEstimate> {
    let n = rec.total();
    if n == 0 {
        return Err(Error::EmptyData(format!(
            "no coincidences at ({}, {})",
            rec.setting.alpha_deg, rec.setting.beta_deg
        )));
    }
    let c = &rec.counts;
    let nf = n as f64;
    let value = (c.n_dd as f64 + c.n_uu as f64 - c.n_ud as f64 - c.n_du as f64) / nf;
    let std_err = ((1.0 - value * value).max(0.0) / nf).sqrt();
    Ok(CorrelationEstimate { value, std_err, n_total: n })
}

/// CHSH value from count records. The records may come in any order and may
/// include extra settings; each of the four required settings must be present.
pub fn chsh_from_counts(records: &[CountRecord], angles: &ChshAngles) -> Result<BellResult> {
    let mut e_values = [0.0; 4];
    let mut var = 0.0;
    for (k, (a, b)) in angles.settings().into_iter().enumerate() {
        let matching: Vec<&CountRecord> = records.iter().filter(|r| r.setting.matches(a, b)).collect();
        if matching.is_empty() {
            return Err(Error::Configuration(format!("no count record for setting ({a}°, {b}°)")));
        }
        let mut merged = *matching[0];
        for r in &matching[1..] {
            merged.counts.n_uu += r.counts.n_uu;
            merged.counts.n_ud += r.counts.n_ud;
            merged.counts.n_du += r.counts.n_du;
            merged.counts.n_dd += r.counts.n_dd;
            merged.counts.n_discarded += r.counts.n_discarded;
        }
        let est = correlation_from_counts(&merged)?;
        e_values[k] = est.value;
        var += est.std_err * est.std_err;
    }
    Ok(BellResult {
        s_value: chsh_combination(e_values),
        std_err: var.sqrt(),
        settings: *angles,
        e_values,
    })
}

fn correlation_of(p: [f64; 4]) -> f64 {
    p[3] + p[0] - p[1] - p[2]
}

/// Exact `E(α, β)` of a state for linear analyzers.
pub fn analytic_correlation(rho: &DensityMatrix, setting: &MeasurementSetting) -> Result<f64> {
    Ok(correlation_of(outcome_probabilities(rho, setting)?))
}

/// Exact CHSH value of a state at fixed linear-analyzer angles.
pub fn analytic_chsh(rho: &DensityMatrix, angles: &ChshAngles) -> Result<BellResult> {
    let mut e_values = [0.0; 4];
    for (k, (a, b)) in angles.settings().into_iter().enumerate() {
        e_values[k] = analytic_correlation(rho, &MeasurementSetting::new(a, b)?)?;
    }
    Ok(BellResult {
        s_value: chsh_combination(e_values),
        std_err: 0.0,
        settings: *angles,
        e_values,
    })
}

/// Correlation tensor `T_kl = tr(ρ σ_k ⊗ σ_l)`, `k, l ∈ {x, y, z}`.
pub fn correlation_tensor(rho: &DensityMatrix) -> [[f64; 3]; 3] {
    let mut t = [[0.0; 3]; 3];
    for (k, row) in t.iter_mut().enumerate() {
        for (l, entry) in row.iter_mut().enumerate() {
            *entry = rho.matrix().trace_product(&tensor(&pauli(k + 1), &pauli(l + 1))).re;
        }
    }
    t
}

/// `E` for spin measurements along Bloch directions `a` (photon 1) and `b` (photon 2).
pub fn directional_correlation(rho: &DensityMatrix, a: [f64; 3], b: [f64; 3]) -> f64 {
    let pa = bloch_projector(a);
    let pb = bloch_projector(b);
    let id = CMatrix::identity(2);
    let qa = &id - &pa;
    let qb = &id - &pb;
    let p = |x: &CMatrix, y: &CMatrix| rho.matrix().trace_product(&tensor(x, y)).re;
    correlation_of([p(&pa, &pb), p(&pa, &qb), p(&qa, &pb), p(&qa, &qb)])
}

/// Measurement directions attaining the CHSH maximum of a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalDirections {
    pub a: [f64; 3],
    pub a_p: [f64; 3],
    pub b: [f64; 3],
    pub b_p: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxChsh {
    /// Closed-form maximum `2·sqrt(u₁ + u₂)`.
    pub s_max: f64,
    pub directions: OptimalDirections,
    /// CHSH value evaluated from projectors along `directions`.
    pub achieved_s: f64,
}

fn mat_vec(t: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (0..3).map(|l| t[k][l] * v[l]).sum();
    }
    out
}

fn normalized(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 1e-14).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

/// Any unit vector orthogonal to `v`.
fn orthogonal_to(v: [f64; 3]) -> [f64; 3] {
    let trial = if v[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let cross = [
        v[1] * trial[2] - v[2] * trial[1],
        v[2] * trial[0] - v[0] * trial[2],
        v[0] * trial[1] - v[1] * trial[0],
    ];
    normalized(cross).expect("nonzero cross product")
}

/// Maximal CHSH value over all local spin measurements (Horodecki criterion),
/// together with an explicit optimal measurement set.
pub fn max_chsh_from_state(rho: &DensityMatrix) -> Result<MaxChsh> {
    if rho.dim() != 4 {
        return Err(Error::Dimension("max_chsh_from_state needs a two-qubit state".into()));
    }
    let t = correlation_tensor(rho);
    let mut tt = CMatrix::zeros(3);
    for i in 0..3 {
        for j in 0..3 {
            tt[(i, j)] = crate::linalg::cr((0..3).map(|k| t[k][i] * t[k][j]).sum());
        }
    }
    let eig = eig_hermitian(&tt)?;
    let u1 = eig.values[0].max(0.0);
    let u2 = eig.values[1].max(0.0);
    let s_max = 2.0 * (u1 + u2).sqrt();

    let real_vec = |k: usize| -> [f64; 3] {
        let v = eig.vector(k);
        // Real symmetric input: fix the global phase so the largest entry is real.
        let pivot = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
        let phase = pivot.conj() / pivot.norm();
        let r = [(v[0] * phase).re, (v[1] * phase).re, (v[2] * phase).re];
        normalized(r).unwrap_or([1.0, 0.0, 0.0])
    };
    let c1 = real_vec(0);
    let c2 = real_vec(1);

    // b ± b′ along the top two right-singular directions of T.
    let theta = u2.sqrt().atan2(u1.sqrt());
    let (s, co) = theta.sin_cos();
    let b = [0, 1, 2].map(|k| co * c1[k] + s * c2[k]);
    let b_p = [0, 1, 2].map(|k| co * c1[k] - s * c2[k]);
    let sum = [0, 1, 2].map(|k| b[k] + b_p[k]);
    let diff = [0, 1, 2].map(|k| b[k] - b_p[k]);
    let a = normalized(mat_vec(&t, sum)).unwrap_or_else(|| orthogonal_to(c1));
    let a_p = normalized(mat_vec(&t, diff)).unwrap_or_else(|| orthogonal_to(a));
    let directions = OptimalDirections { a, a_p, b, b_p };

    let e = [
        directional_correlation(rho, a, b),
        directional_correlation(rho, a, b_p),
        directional_correlation(rho, a_p, b),
        directional_correlation(rho, a_p, b_p),
    ];
    // This assignment of roles maximizes E(a,b)+E(a,b′)+E(a′,b)−E(a′,b′).
    let achieved_s = (e[0] + e[1]).abs() + (e[2] - e[3]).abs();
    Ok(MaxChsh { s_max, directions, achieved_s })
}

/// Best CHSH value reachable with linear analyzers only: exhaustive 1° grid
/// over `[0°, 180°)⁴`, then coordinate refinement of the best grid point.
pub fn best_linear_chsh(rho: &DensityMatrix) -> Result<BellResult> {
    const N: usize = 180;
    let e_table: Vec<f64> = {
        let mut v = vec![0.0; N * N];
        for a in 0..N {
            for b in 0..N {
                v[a * N + b] = analytic_correlation(rho, &MeasurementSetting::new(a as f64, b as f64)?)?;
            }
        }
        v
    };
    let e = |a: usize, b: usize| e_table[a * N + b];

    // For fixed (α, α′) the two CHSH terms separate: β′ only enters the
    // first, β only the second.
    let mut best = (f64::NEG_INFINITY, [0usize; 4]);
    for a in 0..N {
        for ap in 0..N {
            let (mut t1, mut bp_best) = (f64::NEG_INFINITY, 0);
            let (mut t2, mut b_best) = (f64::NEG_INFINITY, 0);
            for b in 0..N {
                let x = (e(ap, b) - e(a, b)).abs();
                if x > t1 {
                    t1 = x;
                    bp_best = b;
                }
                let y = (e(ap, b) + e(a, b)).abs();
                if y > t2 {
                    t2 = y;
                    b_best = b;
                }
            }
            if t1 + t2 > best.0 {
                best = (t1 + t2, [a, ap, b_best, bp_best]);
            }
        }
    }

    let mut x = best.1.map(|k| k as f64);
    let eval = |x: &[f64; 4]| -> Result<f64> {
        Ok(analytic_chsh(rho, &ChshAngles::new(x[0], x[1], x[2], x[3]))?.s_value)
    };
    let mut fx = eval(&x)?;
    let mut step = 0.5;
    while step > 1e-9 {
        let mut improved = false;
        for k in 0..4 {
            for dir in [-1.0, 1.0] {
                let mut y = x;
                y[k] += dir * step;
                let fy = eval(&y)?;
                if fy > fx + 1e-15 {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    analytic_chsh(rho, &ChshAngles::new(x[0], x[1], x[2], x[3]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::singlet;

    fn rec(a: f64, b: f64, n: [u64; 4]) -> CountRecord {
        CountRecord::new(MeasurementSetting::new(a, b).unwrap(), n, 0)
    }

    #[test]
    fn perfect_anticorrelation() {
        let e = correlation_from_counts(&rec(0.0, 0.0, [0, 500, 500, 0])).unwrap();
        assert_eq!(e.value, -1.0);
        assert_eq!(e.std_err, 0.0);
    }

    #[test]
    fn uniform_counts() {
        let e = correlation_from_counts(&rec(0.0, 0.0, [250; 4])).unwrap();
        assert_eq!(e.value, 0.0);
        assert!((e.std_err - 1.0 / 1000f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_record_is_an_error() {
        assert!(matches!(correlation_from_counts(&rec(0.0, 0.0, [0; 4])), Err(Error::EmptyData(_))));
    }

    #[test]
    fn missing_setting_is_a_configuration_error() {
        let records = [rec(0.0, 22.5, [1, 2, 3, 4]), rec(0.0, -22.5, [1, 2, 3, 4]), rec(45.0, 22.5, [1, 2, 3, 4])];
        let r = chsh_from_counts(&records, &ChshAngles::new(0.0, 45.0, 22.5, -22.5));
        assert!(matches!(r, Err(Error::Configuration(_))));
    }

    #[test]
    fn singlet_correlation_formula() {
        for (a, b) in [(0.0, 22.5), (10.0, 80.0), (33.0, -12.0)] {
            let e = analytic_correlation(&singlet(), &MeasurementSetting::new(a, b).unwrap()).unwrap();
            let expected = -(2.0 * (a - b) as f64).to_radians().cos();
            assert!((e - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn port_relabeling_flips_sign() {
        let r = rec(0.0, 0.0, [120, 40, 75, 301]);
        let flipped = rec(0.0, 0.0, [40, 120, 301, 75]);
        let e1 = correlation_from_counts(&r).unwrap().value;
        let e2 = correlation_from_counts(&flipped).unwrap().value;
        assert_eq!(e1, -e2);
    }

    #[test]
    fn singlet_max_chsh() {
        let m = max_chsh_from_state(&singlet()).unwrap();
        assert!((m.s_max - TSIRELSON).abs() < 1e-12);
        assert!((m.achieved_s - m.s_max).abs() < 1e-9);
    }
}
