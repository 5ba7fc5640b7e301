mod common;

use ces_core::detection::{simulate_tomography_dataset, Basis, DetectorParams};
use ces_core::linalg::{tensor, trace_distance, validate_density};
use ces_core::protocol::singlet;
use ces_core::tomography::{
    linear_inversion, log_likelihood, mle_reconstruct, project_to_physical, MleOptions, TomographyDataset,
    TomographyRecord,
};
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mle_matches_inversion_on_exact_data(rho in full_rank_density(4)) {
        let ds = TomographyDataset::exact(&rho, 1e5).unwrap();
        let lin = linear_inversion(&ds).unwrap();
        let mle = mle_reconstruct(&ds, &MleOptions::default()).unwrap();
        prop_assert!(mle.converged);
        prop_assert!(trace_distance(&mle.estimate, &lin.estimate) < 1e-6);
        prop_assert!(trace_distance(&lin.estimate, rho.matrix()) < 1e-10);
    }

    #[test]
    fn mle_is_physical_on_adversarial_counts(cells in prop::collection::vec(0usize..4, 9), scale in 1.0f64..1e4) {
        let records = TomographyDataset::canonical_pairs()
            .into_iter()
            .zip(&cells)
            .map(|((b1, b2), &k)| {
                let mut counts = [0.0; 4];
                counts[k] = scale.round();
                TomographyRecord { basis_1: b1, basis_2: b2, counts, n_discarded: 0.0 }
            })
            .collect();
        let ds = TomographyDataset::new(records).unwrap();
        let mle = mle_reconstruct(&ds, &MleOptions::default()).unwrap();
        prop_assert!(validate_density(&mle.estimate).passed, "{}", mle.diagnostics);
    }

    #[test]
    fn mle_likelihood_dominates_projected_inversion(rho in density(4), seed: u64) {
        let ds = simulate_tomography_dataset(&rho, 2_000, &DetectorParams::ideal(), seed).unwrap();
        let mle = mle_reconstruct(&ds, &MleOptions::default()).unwrap();
        let proj = project_to_physical(&linear_inversion(&ds).unwrap().estimate).unwrap();
        prop_assert!(mle.log_likelihood >= log_likelihood(&ds, proj.matrix()) - 1e-6 * ds.total_counts());
    }

    #[test]
    fn reconstruction_is_covariant(rho in density(4), seed: u64) {
        // U maps the H, D, R Bloch axes onto D, R, H, so measuring UρU† in the
        // cycled bases reproduces the statistics of ρ in the original ones.
        let u = tensor(&axis_cycle(), &axis_cycle());
        let cycle = |b: Basis| match b {
            Basis::HV => Basis::DA,
            Basis::DA => Basis::RL,
            Basis::RL => Basis::HV,
        };
        let ds = simulate_tomography_dataset(&rho, 5_000, &DetectorParams::ideal(), seed).unwrap();
        let moved = TomographyDataset::new(
            ds.records
                .iter()
                .map(|r| TomographyRecord { basis_1: cycle(r.basis_1), basis_2: cycle(r.basis_2), ..r.clone() })
                .collect(),
        )
        .unwrap();
        let a = mle_reconstruct(&ds, &MleOptions::default()).unwrap();
        let b = mle_reconstruct(&moved, &MleOptions::default()).unwrap();
        let rotated = a.estimate.conjugate_by(&u);
        prop_assert!(trace_distance(&rotated, &b.estimate) < 1e-4, "{}", trace_distance(&rotated, &b.estimate));
    }
}

#[test]
fn axis_cycle_permutes_bases() {
    let u = axis_cycle();
    for (from, to) in [(Basis::HV, Basis::DA), (Basis::DA, Basis::RL), (Basis::RL, Basis::HV)] {
        let moved = from.projectors()[0].conjugate_by(&u);
        assert!(moved.max_abs_diff(&to.projectors()[0]) < 1e-12);
    }
}

#[test]
fn round_trip_at_high_counts() {
    let det = DetectorParams::ideal();
    let ds = simulate_tomography_dataset(&singlet(), 200_000, &det, 77).unwrap();
    let rho = mle_reconstruct(&ds, &MleOptions::default()).unwrap().density().unwrap();
    assert!(uhlmann_fidelity(&rho, &singlet()) > 0.995);
    assert!(trace_distance(rho.matrix(), singlet().matrix()) < 0.02);
}
