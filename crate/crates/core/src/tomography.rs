//! Two-qubit state reconstruction from nine-basis coincidence data.
//!
//! Each basis pair contributes four projectors (both PBS ports on both
//! photons), 36 in total. Linear inversion solves the resulting linear
//! system in the Pauli basis; maximum likelihood optimizes over
//! `ρ = T†T / tr(T†T)` with `T` lower triangular, which keeps every iterate
//! physical.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{joint_probabilities, Basis, Counts};
use crate::error::{Error, Result};
use crate::linalg::{c, cr, eig_hermitian, pauli, tensor, validate_density, CMatrix, DensityDiagnostics, DensityMatrix};
use crate::measures::{report, EntanglementReport};
use crate::rng::stream_rng;

/// Counts for one basis pair. Counts are real so exact-probability datasets
/// can be represented; simulated data always holds integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyRecord {
    pub basis_1: Basis,
    pub basis_2: Basis,
    /// `[n_uu, n_ud, n_du, n_dd]`
    pub counts: [f64; 4],
    pub n_discarded: f64,
}

impl TomographyRecord {
    pub fn from_counts(basis_1: Basis, basis_2: Basis, c: &Counts) -> Self {
        Self {
            basis_1,
            basis_2,
            counts: c.as_array().map(|n| n as f64),
            n_discarded: c.n_discarded as f64,
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// The four projectors `P_i ⊗ P_j`, in count order.
    pub fn projectors(&self) -> [CMatrix; 4] {
        let p1 = self.basis_1.projectors();
        let p2 = self.basis_2.projectors();
        [
            tensor(&p1[0], &p2[0]),
            tensor(&p1[0], &p2[1]),
            tensor(&p1[1], &p2[0]),
            tensor(&p1[1], &p2[1]),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomographyDataset {
    pub records: Vec<TomographyRecord>,
}

impl TomographyDataset {
    /// `{HV, DA, RL}²` in row-major order.
    pub fn canonical_pairs() -> Vec<(Basis, Basis)> {
        Basis::ALL
            .iter()
            .flat_map(|&a| Basis::ALL.iter().map(move |&b| (a, b)))
            .collect()
    }

    /// Rejects duplicate basis pairs and negative or non-finite counts.
    /// Incomplete basis sets are allowed here and rejected by the estimators.
    pub fn new(records: Vec<TomographyRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyData("tomography dataset has no records".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if r.counts.iter().any(|n| !n.is_finite() || *n < 0.0) {
                return Err(Error::Validation(format!(
                    "record {}{} has invalid counts",
                    r.basis_1, r.basis_2
                )));
            }
            if records[..i]
                .iter()
                .any(|o| o.basis_1 == r.basis_1 && o.basis_2 == r.basis_2)
            {
                return Err(Error::Validation(format!(
                    "duplicate basis pair {}/{}",
                    r.basis_1, r.basis_2
                )));
            }
        }
        Ok(Self { records })
    }

    /// Counts equal to `total_per_basis × exact probabilities`.
    pub fn exact(rho: &DensityMatrix, total_per_basis: f64) -> Result<Self> {
        let records = Self::canonical_pairs()
            .into_iter()
            .map(|(b1, b2)| {
                let p = joint_probabilities(rho, &b1.projectors(), &b2.projectors());
                TomographyRecord {
                    basis_1: b1,
                    basis_2: b2,
                    counts: p.map(|x| x.max(0.0) * total_per_basis),
                    n_discarded: 0.0,
                }
            })
            .collect();
        Self::new(records)
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() == 9
    }

    pub fn total_counts(&self) -> f64 {
        self.records.iter().map(|r| r.total()).sum()
    }

    fn projector_list(&self) -> Vec<(CMatrix, f64, f64)> {
        // (projector, count, basis total)
        let mut out = Vec::with_capacity(4 * self.records.len());
        for r in &self.records {
            let total = r.total();
            for (proj, n) in r.projectors().into_iter().zip(r.counts) {
                out.push((proj, n, total));
            }
        }
        out
    }
}

/// Estimator output. `estimate` is Hermitian with unit trace; it is only
/// guaranteed positive semidefinite for maximum likelihood.
#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub estimate: CMatrix,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: DensityDiagnostics,
}

impl ReconstructionResult {
    pub fn is_physical(&self) -> bool {
        self.diagnostics.passed
    }

    pub fn density(&self) -> Result<DensityMatrix> {
        DensityMatrix::new(self.estimate.clone())
    }
}

/// Σ n_k ln tr(ρ Π_k); −∞ when a projector with counts has zero probability.
pub fn log_likelihood(ds: &TomographyDataset, rho: &CMatrix) -> f64 {
    let mut ll = 0.0;
    for r in &ds.records {
        for (proj, n) in r.projectors().iter().zip(r.counts) {
            if n > 0.0 {
                let p = rho.trace_product(proj).re;
                if p <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                ll += n * p.ln();
            }
        }
    }
    ll
}

fn pauli_pairs() -> Vec<CMatrix> {
    (0..16)
        .filter(|&k| k != 0)
        .map(|k| tensor(&pauli(k / 4), &pauli(k % 4)))
        .collect()
}

struct LinearSystem {
    design: DMatrix<f64>,
    rhs: DVector<f64>,
}

fn linear_system(ds: &TomographyDataset) -> LinearSystem {
    let basis = pauli_pairs();
    let rows: Vec<(Vec<f64>, f64)> = ds
        .projector_list()
        .into_iter()
        .filter(|(_, _, total)| *total > 0.0)
        .map(|(proj, n, total)| {
            let coeffs = basis.iter().map(|s| s.trace_product(&proj).re / 4.0).collect();
            (coeffs, n / total - proj.trace().re / 4.0)
        })
        .collect();
    let design = DMatrix::from_fn(rows.len(), 15, |i, j| rows[i].0[j]);
    let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    LinearSystem { design, rhs }
}

fn design_rank(design: &DMatrix<f64>) -> usize {
    if design.nrows() == 0 {
        return 0;
    }
    let sv = design.clone().svd(false, false).singular_values;
    let max = sv.max();
    sv.iter().filter(|&&s| s > 1e-10 * max.max(1e-300)).count()
}

fn check_coverage(ds: &TomographyDataset) -> Result<()> {
    let rank = design_rank(&linear_system(ds).design);
    if rank < 15 {
        return Err(Error::BasisCoverage(format!(
            "measured projectors span only {rank} of 15 state parameters"
        )));
    }
    Ok(())
}

/// Least-squares solution of `tr(ρ Π_k) = f_k` with unit trace enforced.
/// Positivity is not enforced; the diagnostics report any violation.
pub fn linear_inversion(ds: &TomographyDataset) -> Result<ReconstructionResult> {
    let sys = linear_system(ds);
    if design_rank(&sys.design) == 15 {
        let svd = sys.design.clone().svd(true, true);
        let r = svd
            .solve(&sys.rhs, 1e-12)
            .map_err(|e| Error::BasisSet(e.to_string()))?;
        let mut rho = CMatrix::identity(4).scale(0.25);
        for (coef, s) in r.iter().zip(pauli_pairs()) {
            rho = &rho + &s.scale(coef / 4.0);
        }
        let rho = rho.hermitian_part();
        let diagnostics = validate_density(&rho);
        Ok(ReconstructionResult {
            log_likelihood: log_likelihood(ds, &rho),
            estimate: rho,
            iterations: 0,
            converged: true,
            diagnostics,
        })
    } else {
        Err(Error::BasisSet(format!(
            "design matrix is singular (rank {} < 15)",
            design_rank(&sys.design)
        )))
    }
}

/// Nearest-in-spectrum density matrix: negative eigenvalues clipped to zero.
pub fn project_to_physical(m: &CMatrix) -> Result<DensityMatrix> {
    let eig = eig_hermitian(&m.hermitian_part())?;
    let clipped: f64 = eig.values.iter().map(|l| l.max(0.0)).sum();
    if clipped <= 0.0 {
        return Ok(DensityMatrix::maximally_mixed(m.dim()));
    }
    let out = eig.map_values(|l| l.max(0.0) / clipped);
    DensityMatrix::new(out.hermitian_part())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Gradient-norm threshold on the per-count log-likelihood.
    pub grad_tol: f64,
    /// Relative change threshold on the log-likelihood.
    pub rel_tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            grad_tol: 1e-8,
            rel_tol: 1e-12,
        }
    }
}

/// Lower-triangular `T` ↔ 16 real parameters: 4 real diagonal entries,
/// then real and imaginary parts of the 6 sub-diagonal entries.
const OFF_DIAG: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

fn params_to_t(x: &[f64]) -> CMatrix {
    let mut t = CMatrix::zeros(4);
    for i in 0..4 {
        t[(i, i)] = cr(x[i]);
    }
    for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
        t[(i, j)] = c(x[4 + 2 * k], x[5 + 2 * k]);
    }
    t
}

fn t_to_params(t: &CMatrix) -> Vec<f64> {
    let mut x = vec![0.0; 16];
    for i in 0..4 {
        x[i] = t[(i, i)].re;
    }
    for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
        x[4 + 2 * k] = t[(i, j)].re;
        x[5 + 2 * k] = t[(i, j)].im;
    }
    x
}

/// `T` lower triangular with `T†T = ρ` (Cholesky of the index-reversed matrix).
fn factorize(rho: &CMatrix) -> Option<CMatrix> {
    let n = rho.dim();
    let rev = |i: usize| n - 1 - i;
    let m = CMatrix::from_fn(n, |i, j| rho[(rev(i), rev(j))]);
    // m = L L†
    let mut l = CMatrix::zeros(n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = cr(d);
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    // ρ = J L L† J = U U† with U = J L J upper triangular, so T = U†.
    let u = CMatrix::from_fn(n, |i, j| l[(rev(i), rev(j))]);
    Some(u.adjoint())
}

fn rho_from_t(t: &CMatrix) -> CMatrix {
    let a = &t.adjoint() * t;
    let tr = a.trace().re;
    a.scale(1.0 / tr).hermitian_part()
}

struct Objective<'a> {
    terms: &'a [(CMatrix, f64)],
    n_total: f64,
}

impl Objective<'_> {
    /// Negative log-likelihood per count and its gradient in parameter space.
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let t = params_to_t(x);
        let a = &t.adjoint() * &t;
        let s = a.trace().re;
        let mut f = 0.0;
        let mut m = CMatrix::identity(4).scale(-self.n_total / s);
        for (proj, n) in self.terms {
            let q = a.trace_product(proj).re;
            if q <= 0.0 {
                return (f64::INFINITY, vec![0.0; 16]);
            }
            f -= n * (q / s).ln();
            m = &m + &proj.scale(n / q);
        }
        // dL = 2 Re tr(T M dT†...) → ∂L/∂Re T = 2 Re(TM), ∂L/∂Im T = 2 Im(TM)
        let tm = &t * &m;
        let mut g = vec![0.0; 16];
        for i in 0..4 {
            g[i] = -2.0 * tm[(i, i)].re / self.n_total;
        }
        for (k, &(i, j)) in OFF_DIAG.iter().enumerate() {
            g[4 + 2 * k] = -2.0 * tm[(i, j)].re / self.n_total;
            g[5 + 2 * k] = -2.0 * tm[(i, j)].im / self.n_total;
        }
        (f / self.n_total, g)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize_params(x: &mut [f64]) {
    let n = dot(x, x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// Maximum-likelihood estimate over physical states.
pub fn mle_reconstruct(ds: &TomographyDataset, opts: &MleOptions) -> Result<ReconstructionResult> {
    if let Some(r) = ds.records.iter().find(|r| r.total() <= 0.0) {
        return Err(Error::EmptyData(format!(
            "basis pair {}/{} has no counts",
            r.basis_1, r.basis_2
        )));
    }
    check_coverage(ds)?;

    let terms: Vec<(CMatrix, f64)> = ds
        .projector_list()
        .into_iter()
        .filter(|(_, n, _)| *n > 0.0)
        .map(|(p, n, _)| (p, n))
        .collect();
    let n_total: f64 = terms.iter().map(|(_, n)| n).sum();
    let objective = Objective { terms: &terms, n_total };

    let linear = linear_inversion(ds)?;
    let mut start = project_to_physical(&linear.estimate)?.into_matrix();
    let mut eps = 0.0;
    let x0 = loop {
        let min_p = terms
            .iter()
            .map(|(p, _)| start.trace_product(p).re)
            .fold(f64::INFINITY, f64::min);
        if min_p > 1e-12 {
            if let Some(t) = factorize(&start) {
                break t_to_params(&t);
            }
        }
        eps = if eps == 0.0 { 1e-9 } else { eps * 10.0 };
        let mixed = CMatrix::identity(4).scale(0.25);
        start = &start.scale(1.0 - eps) + &mixed.scale(eps);
    };

    let (x, iterations, converged) = bfgs(&objective, x0, opts);
    let rho = rho_from_t(&params_to_t(&x));
    let diagnostics = validate_density(&rho);
    Ok(ReconstructionResult {
        log_likelihood: log_likelihood(ds, &rho),
        estimate: rho,
        iterations,
        converged,
        diagnostics,
    })
}

/// BFGS with Armijo backtracking; parameters are kept on the unit sphere
/// (the objective is scale invariant).
fn bfgs(obj: &Objective<'_>, mut x: Vec<f64>, opts: &MleOptions) -> (Vec<f64>, usize, bool) {
    let n = x.len();
    normalize_params(&mut x);
    let (mut f, mut g) = obj.eval(&x);
    let mut h = identity(n);
    for it in 0..opts.max_iterations {
        if dot(&g, &g).sqrt() < opts.grad_tol {
            return (x, it, true);
        }
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i], &g)).collect();
        let mut slope = dot(&d, &g);
        if slope >= 0.0 {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            normalize_params(&mut trial);
            let (ft, gt) = obj.eval(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // No descent possible at machine precision.
            return (x, it, true);
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let rel_change = (f - f_new).abs() / f.abs().max(1e-300);
        x = x_new;
        g = g_new;
        let f_old = f;
        f = f_new;
        if rel_change < opts.rel_tol && f_old >= f {
            return (x, it + 1, true);
        }
        let sy = dot(&s, &y);
        if sy > 1e-18 {
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], &y)).collect();
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += (1.0 + yhy * rho) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
    }
    (x, opts.max_iterations, false)
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub n_resamples: usize,
    /// Resamples whose reconstruction failed (skipped).
    pub n_failed: usize,
    pub fidelity: Spread,
    pub concurrence: Spread,
    pub eof: Spread,
    pub log_negativity: Spread,
    pub s_max: Spread,
}

fn resample(ds: &TomographyDataset, seed: u64, index: u64) -> TomographyDataset {
    let mut rng = stream_rng(seed, index);
    let records = ds
        .records
        .iter()
        .map(|r| {
            let total = r.total().round() as u64;
            let mut remaining = total;
            let mut mass = 1.0;
            let mut counts = [0.0; 4];
            for k in 0..4 {
                let p = if r.total() > 0.0 { r.counts[k] / r.total() } else { 0.0 };
                let n = if k == 3 || mass <= 0.0 {
                    remaining
                } else {
                    let q = (p / mass).clamp(0.0, 1.0);
                    Binomial::new(remaining, q).expect("valid binomial").sample(&mut rng)
                };
                counts[k] = n as f64;
                remaining -= n;
                mass -= p;
            }
            TomographyRecord { counts, ..r.clone() }
        })
        .collect();
    TomographyDataset { records }
}

/// Multinomial bootstrap of the entanglement measures of the MLE estimate.
pub fn bootstrap_errors(ds: &TomographyDataset, n_resamples: usize, seed: u64, opts: &MleOptions) -> Result<BootstrapReport> {
    if n_resamples < 100 {
        return Err(Error::Configuration(format!("bootstrap needs >= 100 resamples, got {n_resamples}")));
    }
    let reports: Vec<Option<EntanglementReport>> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|k| {
            let sample = resample(ds, seed, k);
            mle_reconstruct(&sample, opts)
                .and_then(|r| r.density())
                .and_then(|rho| report(&rho))
                .ok()
        })
        .collect();
    let ok: Vec<&EntanglementReport> = reports.iter().flatten().collect();
    if ok.is_empty() {
        return Err(Error::NonConvergence("every bootstrap resample failed".into()));
    }
    let pick = |f: fn(&EntanglementReport) -> f64| Spread::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
    Ok(BootstrapReport {
        n_resamples,
        n_failed: n_resamples - ok.len(),
        fidelity: pick(|r| r.fidelity_singlet),
        concurrence: pick(|r| r.concurrence),
        eof: pick(|r| r.eof),
        log_negativity: pick(|r| r.log_negativity),
        s_max: pick(|r| r.s_max),
    })
}
