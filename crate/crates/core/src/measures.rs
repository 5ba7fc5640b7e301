//! Entanglement measures of two-qubit states.

use serde::{Deserialize, Serialize};

use crate::bell::max_chsh_from_state;
use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, partial_transpose, pauli, tensor, DensityMatrix};
use crate::protocol::singlet_vector;

fn require_two_qubit(rho: &DensityMatrix) -> Result<()> {
    if rho.dim() != 4 {
        return Err(Error::Dimension(format!("expected a 4x4 state, got {}x{}", rho.dim(), rho.dim())));
    }
    Ok(())
}

/// ⟨Ψ⁻|ρ|Ψ⁻⟩.
pub fn fidelity_singlet(rho: &DensityMatrix) -> Result<f64> {
    require_two_qubit(rho)?;
    Ok(rho.overlap(&singlet_vector()).clamp(0.0, 1.0))
}

/// Uhlmann fidelity `(tr √(√ρ σ √ρ))²` between two states.
pub fn state_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension(format!("{} vs {}", rho.dim(), sigma.dim())));
    }
    let s = eig_hermitian(rho.matrix())?.map_values(|l| l.max(0.0).sqrt());
    let inner = &(&s * sigma.matrix()) * &s;
    let root: f64 = eig_hermitian(&inner.hermitian_part())?
        .values
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .sum();
    Ok((root * root).min(1.0))
}

/// Wootters concurrence.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    require_two_qubit(rho)?;
    let yy = tensor(&pauli(2), &pauli(2));
    let tilde = rho.matrix().conj().conjugate_by(&yy);
    // eigenvalues of sqrt(ρ) ρ̃ sqrt(ρ) are the squares of the Wootters λ_i
    let sqrt_rho = eig_hermitian(rho.matrix())?.map_values(|l| l.max(0.0).sqrt());
    let r = &(&sqrt_rho * &tilde) * &sqrt_rho;
    let mut lam: Vec<f64> = eig_hermitian(&r.hermitian_part())?
        .values
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    Ok((lam[0] - lam[1] - lam[2] - lam[3]).max(0.0).min(1.0))
}

fn binary_entropy(x: f64) -> f64 {
    let h = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    h(x) + h(1.0 - x)
}

/// Entanglement of formation from the concurrence.
pub fn eof_from_concurrence(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    binary_entropy((1.0 + (1.0 - c * c).sqrt()) / 2.0)
}

pub fn entanglement_of_formation(rho: &DensityMatrix) -> Result<f64> {
    Ok(eof_from_concurrence(concurrence(rho)?))
}

/// Sum of the magnitudes of the negative eigenvalues of ρ^{T_B}.
pub fn negativity(rho: &DensityMatrix) -> Result<f64> {
    require_two_qubit(rho)?;
    let pt = partial_transpose(rho, 1)?;
    Ok(pt.eigen().values.iter().filter(|&&l| l < 0.0).map(|l| -l).sum())
}

/// `(N, log2(2N + 1))`.
pub fn log_negativity(rho: &DensityMatrix) -> Result<(f64, f64)> {
    let n = negativity(rho)?;
    Ok((n, log_negativity_from_negativity(n)))
}

pub fn log_negativity_from_negativity(n: f64) -> f64 {
    (2.0 * n + 1.0).log2()
}

pub fn negativity_from_log_negativity(e: f64) -> f64 {
    (e.exp2() - 1.0) / 2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntanglementReport {
    pub fidelity_singlet: f64,
    pub concurrence: f64,
    pub eof: f64,
    pub negativity: f64,
    pub log_negativity: f64,
    pub s_max: f64,
}

pub fn report(rho: &DensityMatrix) -> Result<EntanglementReport> {
    let c = concurrence(rho)?;
    let n = negativity(rho)?;
    Ok(EntanglementReport {
        fidelity_singlet: fidelity_singlet(rho)?,
        concurrence: c,
        eof: eof_from_concurrence(c),
        negativity: n,
        log_negativity: log_negativity_from_negativity(n),
        s_max: max_chsh_from_state(rho)?.s_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{final_state, singlet, NoiseParams};

    fn werner(p: f64) -> DensityMatrix {
        DensityMatrix::mixture(&[(p, &singlet()), (1.0 - p, &DensityMatrix::maximally_mixed(4))]).unwrap()
    }

    #[test]
    fn singlet_values() {
        let r = report(&singlet()).unwrap();
        assert!((r.fidelity_singlet - 1.0).abs() < 1e-12);
        assert!((r.concurrence - 1.0).abs() < 1e-9);
        assert!((r.eof - 1.0).abs() < 1e-9);
        assert!((r.log_negativity - 1.0).abs() < 1e-12);
        assert!((r.s_max - 2.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn werner_concurrence_closed_form() {
        for p in [0.2, 0.5, 0.8] {
            let c = concurrence(&werner(p)).unwrap();
            assert!((c - ((3.0 * p - 1.0) / 2.0).max(0.0)).abs() < 1e-9);
            let n = negativity(&werner(p)).unwrap();
            assert!((n - ((3.0 * p - 1.0) / 4.0).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn product_state_is_unentangled() {
        let rho = DensityMatrix::maximally_mixed(4);
        let r = report(&rho).unwrap();
        assert_eq!(r.concurrence, 0.0);
        assert_eq!(r.eof, 0.0);
        assert!(r.log_negativity.abs() < 1e-12);
    }

    #[test]
    fn dephased_state_negativity() {
        let rho = final_state(&NoiseParams::dephasing_only(0.6, 5.0), 0.0).unwrap();
        assert!((negativity(&rho).unwrap() - 0.3).abs() < 1e-12);
        assert!((concurrence(&rho).unwrap() - 0.6).abs() < 1e-9);
    }

    #[test]
    fn state_fidelity_reduces_to_overlap_for_pure_target() {
        let rho = werner(0.7);
        let f = state_fidelity(&rho, &singlet()).unwrap();
        assert!((f - fidelity_singlet(&rho).unwrap()).abs() < 1e-7);
        assert!((state_fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn negativity_conversion_round_trip() {
        for n in [0.0, 0.1, 0.5] {
            assert!((negativity_from_log_negativity(log_negativity_from_negativity(n)) - n).abs() < 1e-14);
        }
    }
}
