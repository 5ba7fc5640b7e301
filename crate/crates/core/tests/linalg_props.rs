mod common;

use ces_core::linalg::{eig_hermitian, partial_trace, partial_transpose, tensor, validate_density};
use ces_core::DensityMatrix;
use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_is_associative(a in density(2), b in density(2), c in density(2)) {
        let left = tensor(&tensor(a.matrix(), b.matrix()), c.matrix());
        let right = tensor(a.matrix(), &tensor(b.matrix(), c.matrix()));
        prop_assert!(left.max_abs_diff(&right) < 1e-15);
    }

    #[test]
    fn partial_trace_inverts_tensor(a in density(2), b in density(2)) {
        let joint = DensityMatrix::new(tensor(a.matrix(), b.matrix())).unwrap();
        let ra = partial_trace(&joint, [2, 2], 1).unwrap();
        let rb = partial_trace(&joint, [2, 2], 0).unwrap();
        prop_assert!(ra.matrix().max_abs_diff(a.matrix()) < 1e-12);
        prop_assert!(rb.matrix().max_abs_diff(b.matrix()) < 1e-12);
    }

    #[test]
    fn partial_transpose_keeps_trace_and_hermiticity(rho in density(4)) {
        for sub in 0..2 {
            let pt = partial_transpose(&rho, sub).unwrap();
            prop_assert!((pt.matrix().trace().re - 1.0).abs() < 1e-12);
            prop_assert!(pt.matrix().trace().im.abs() < 1e-12);
            prop_assert!(pt.matrix().hermiticity_defect() < 1e-12);
        }
    }

    #[test]
    fn spectrum_is_unitarily_invariant(rho in density(4), u in unitary(4)) {
        let a = eig_hermitian(rho.matrix()).unwrap().values;
        let b = eig_hermitian(&rho.matrix().conjugate_by(&u).hermitian_part()).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn eigen_decomposition_reconstructs(rho in density(4)) {
        let e = eig_hermitian(rho.matrix()).unwrap();
        prop_assert!(e.reconstruct().max_abs_diff(rho.matrix()) < 1e-12);
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn evolution_and_mixtures_stay_physical(a in density(4), b in density(4), u in unitary(4), w in 0.0f64..1.0) {
        prop_assert!(validate_density(a.evolve(&u).matrix()).passed);
        let m = DensityMatrix::mixture(&[(w, &a), (1.0 - w, &b)]).unwrap();
        prop_assert!(validate_density(m.matrix()).passed);
    }
}

#[test]
fn eigensolver_agrees_with_reference_on_real_symmetric() {
    // real symmetric input: compare against nalgebra's solver
    let m = nalgebra::Matrix4::new(
        2.0, 0.5, -0.3, 0.1, 0.5, 1.0, 0.2, 0.0, -0.3, 0.2, 0.7, 0.4, 0.1, 0.0, 0.4, 1.5,
    );
    let mut reference: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    reference.sort_by(|a, b| b.total_cmp(a));
    let ours = eig_hermitian(&ces_core::CMatrix::from_fn(4, |i, j| ces_core::linalg::cr(m[(i, j)])))
        .unwrap()
        .values;
    for (x, y) in ours.iter().zip(&reference) {
        assert!((x - y).abs() < 1e-12);
    }
}
