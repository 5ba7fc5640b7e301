#![allow(dead_code)]

use ces_core::linalg::{c, pauli, tensor, C64};
use ces_core::{CMatrix, DensityMatrix, StateVector};
use proptest::prelude::*;

pub fn gaussian_entries(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| c(a, b)), n)
}

/// Random state vector of dimension `dim` (not uniform, but full support).
pub fn state_vector(dim: usize) -> impl Strategy<Value = StateVector> {
    gaussian_entries(dim)
        .prop_filter("nonzero", |v| v.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3)
        .prop_map(|v| StateVector::new(v).unwrap())
}

/// `G G† / tr`, optionally of reduced rank.
pub fn density(dim: usize) -> impl Strategy<Value = DensityMatrix> {
    (1..=dim, gaussian_entries(dim * dim)).prop_filter_map("degenerate", move |(rank, g)| {
        let g = CMatrix::from_fn(dim, |i, j| if j < rank { g[i * dim + j] } else { c(0.0, 0.0) });
        let m = &g * &g.adjoint();
        let tr = m.trace().re;
        (tr > 1e-3).then(|| DensityMatrix::new(m.scale(1.0 / tr).hermitian_part()).unwrap())
    })
}

pub fn full_rank_density(dim: usize) -> impl Strategy<Value = DensityMatrix> {
    gaussian_entries(dim * dim).prop_filter_map("degenerate", move |g| {
        let g = CMatrix::from_row_major(g).unwrap();
        let m = &(&g * &g.adjoint()) + &CMatrix::identity(dim).scale(0.05);
        let tr = m.trace().re;
        Some(DensityMatrix::new(m.scale(1.0 / tr).hermitian_part()).unwrap())
    })
}

/// Unitary from Gram-Schmidt on a random matrix.
pub fn unitary(dim: usize) -> impl Strategy<Value = CMatrix> {
    gaussian_entries(dim * dim).prop_filter_map("singular", move |g| {
        let mut cols: Vec<Vec<C64>> = Vec::new();
        for j in 0..dim {
            let mut v: Vec<C64> = (0..dim).map(|i| g[i * dim + j]).collect();
            for u in &cols {
                let proj: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= proj * y;
                }
            }
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if n < 1e-6 {
                return None;
            }
            cols.push(v.into_iter().map(|z| z / n).collect());
        }
        Some(CMatrix::from_fn(dim, |i, j| cols[j][i]))
    })
}

pub fn local_unitary() -> impl Strategy<Value = CMatrix> {
    (unitary(2), unitary(2)).prop_map(|(a, b)| tensor(&a, &b))
}

/// Rotation by 120° about (1,1,1) on the Bloch sphere: x → y → z → x.
pub fn axis_cycle() -> CMatrix {
    let sum = &(&pauli(1) + &pauli(2)) + &pauli(3);
    (&CMatrix::identity(2) - &sum.scale_c(c(0.0, 1.0))).scale(0.5)
}

pub fn uhlmann_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> f64 {
    ces_core::measures::state_fidelity(rho, sigma).unwrap()
}
