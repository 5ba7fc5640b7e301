//! Gaussian storage-decay fit `N(Δt) = N0 · exp(−(Δt/τ)²)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::negativity_from_log_negativity;

/// Quantity held by a series point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesKind {
    /// Negativity.
    N,
    /// Logarithmic negativity.
    EN,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub dt_us: f64,
    pub value: f64,
    pub kind: SeriesKind,
    /// One-sigma uncertainty; `None` for an unweighted fit.
    pub sigma: Option<f64>,
}

impl FitPoint {
    pub fn negativity(dt_us: f64, value: f64, sigma: Option<f64>) -> Self {
        Self { dt_us, value, kind: SeriesKind::N, sigma }
    }

    /// The point expressed as negativity; sigma is propagated to first order.
    pub fn to_negativity(&self) -> FitPoint {
        match self.kind {
            SeriesKind::N => *self,
            SeriesKind::EN => FitPoint {
                dt_us: self.dt_us,
                value: negativity_from_log_negativity(self.value),
                kind: SeriesKind::N,
                // dN/dE = 2^E ln2 / 2
                sigma: self.sigma.map(|s| s * self.value.exp2() * std::f64::consts::LN_2 / 2.0),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub n0: f64,
    pub tau_e_us: f64,
    /// Covariance of `(n0, tau_e_us)`.
    pub cov: [[f64; 2]; 2],
    /// RMS of the unweighted negativity residuals.
    pub residual_rms: f64,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    /// `false` means the iteration cap was hit; parameters are the best iterate.
    pub converged: bool,
}

impl LifetimeFit {
    pub fn model(&self, dt_us: f64) -> f64 {
        model(self.n0, self.tau_e_us, dt_us)
    }

    pub fn model_log_negativity(&self, dt_us: f64) -> f64 {
        (2.0 * self.model(dt_us) + 1.0).log2()
    }

    pub fn n0_err(&self) -> f64 {
        self.cov[0][0].max(0.0).sqrt()
    }

    pub fn tau_err(&self) -> f64 {
        self.cov[1][1].max(0.0).sqrt()
    }
}

fn model(n0: f64, tau: f64, t: f64) -> f64 {
    n0 * (-(t / tau).powi(2)).exp()
}

fn validate(points: &[FitPoint]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "lifetime fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    for p in points {
        if !p.dt_us.is_finite() || p.dt_us < 0.0 {
            return Err(Error::Validation(format!("invalid delay {}", p.dt_us)));
        }
        let max = match p.kind {
            SeriesKind::N => 0.5,
            SeriesKind::EN => 1.0,
        };
        if !(p.value.is_finite() && (-1e-9..=max + 1e-9).contains(&p.value)) {
            return Err(Error::Validation(format!(
                "value {} at dt = {} outside [0, {max}]",
                p.value, p.dt_us
            )));
        }
        if let Some(s) = p.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Validation(format!("sigma must be > 0 at dt = {}", p.dt_us)));
            }
        }
    }
    let weighted = points[0].sigma.is_some();
    if points.iter().any(|p| p.sigma.is_some() != weighted) {
        return Err(Error::Validation("sigma must be given for all points or none".into()));
    }
    let mut t: Vec<f64> = points.iter().map(|p| p.dt_us).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    if t.len() < 2 {
        return Err(Error::InsufficientData("need at least two distinct delays".into()));
    }
    Ok(())
}

fn initial_guess(points: &[FitPoint]) -> (f64, f64) {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.dt_us.total_cmp(&b.dt_us));
    let first = sorted[0];
    let n0 = if first.value.abs() > 0.0 { first.value } else { 1.0 };
    let half = sorted.iter().find(|p| p.value <= n0 / 2.0);
    let last = sorted[sorted.len() - 1];
    let tau = match half {
        Some(p) if p.dt_us > 0.0 => p.dt_us / std::f64::consts::LN_2.sqrt(),
        _ => {
            let ratio = (last.value / n0).clamp(1e-6, 0.999);
            (last.dt_us - first.dt_us).max(last.dt_us) / (-ratio.ln()).sqrt()
        }
    };
    (n0, tau.max(1e-6))
}

fn chi2(points: &[FitPoint], n0: f64, tau: f64) -> f64 {
    points
        .iter()
        .map(|p| {
            let r = (p.value - model(n0, tau, p.dt_us)) / p.sigma.unwrap_or(1.0);
            r * r
        })
        .sum()
}

/// Levenberg-Marquardt fit of the negativity decay. Log-negativity points
/// are converted first.
pub fn fit_lifetime(series: &[FitPoint]) -> Result<LifetimeFit> {
    validate(series)?;
    let points: Vec<FitPoint> = series.iter().map(FitPoint::to_negativity).collect();
    let points = points.as_slice();
    let (mut n0, mut tau) = initial_guess(points);
    let mut cost = chi2(points, n0, tau);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < 500 {
        iterations += 1;
        let (jtj, jtr) = normal_equations(points, n0, tau);
        let mut improved = false;
        for _ in 0..50 {
            let a = [
                [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
            ];
            let Some(step) = solve2(a, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let (n_new, t_new) = (n0 + step[0], tau + step[1]);
            if t_new <= 0.0 {
                lambda *= 10.0;
                continue;
            }
            let c_new = chi2(points, n_new, t_new);
            if c_new <= cost {
                let rel = (cost - c_new) / cost.max(1e-300);
                let small = step[0].abs() <= 1e-12 * n_new.abs().max(1e-12) && step[1].abs() <= 1e-12 * t_new;
                n0 = n_new;
                tau = t_new;
                cost = c_new;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-14 || small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            converged = true;
        }
        if converged {
            break;
        }
    }

    let (jtj, _) = normal_equations(points, n0, tau);
    let cov = invert2(jtj).ok_or_else(|| Error::NonConvergence("singular fit covariance".into()))?;
    let dof = points.len() - 2;
    let scale = if points[0].sigma.is_some() {
        1.0
    } else if dof > 0 {
        cost / dof as f64
    } else {
        0.0
    };
    let residual_rms = (points
        .iter()
        .map(|p| (p.value - model(n0, tau, p.dt_us)).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    Ok(LifetimeFit {
        n0,
        tau_e_us: tau,
        cov: cov.map(|row| row.map(|v| v * scale)),
        residual_rms,
        chi2: cost,
        dof,
        iterations,
        converged,
    })
}

fn normal_equations(points: &[FitPoint], n0: f64, tau: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    let mut jtj = [[0.0; 2]; 2];
    let mut jtr = [0.0; 2];
    for p in points {
        let w = 1.0 / p.sigma.unwrap_or(1.0).powi(2);
        let x = p.dt_us / tau;
        let e = (-x * x).exp();
        let j = [e, n0 * e * 2.0 * x * x / tau];
        let r = p.value - n0 * e;
        for a in 0..2 {
            jtr[a] += w * j[a] * r;
            for b in 0..2 {
                jtj[a][b] += w * j[a] * j[b];
            }
        }
    }
    (jtj, jtr)
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let inv = invert2(a)?;
    Some([inv[0][0] * b[0] + inv[0][1] * b[1], inv[1][0] * b[0] + inv[1][1] * b[1]])
}

fn invert2(a: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !det.is_finite() || det.abs() <= 1e-300 {
        return None;
    }
    Some([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}
