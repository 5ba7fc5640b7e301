mod common;

use ces_core::bell::{
    analytic_chsh, chsh_from_counts, correlation_from_counts, max_chsh_from_state, ChshAngles, TSIRELSON,
};
use ces_core::detection::{simulate_counts, Counts, CountRecord, DetectorParams, MeasurementSetting};
use ces_core::protocol::singlet;
use ces_core::DensityMatrix;
use common::*;
use proptest::prelude::*;

fn angles() -> impl Strategy<Value = ChshAngles> {
    (0.0f64..180.0, 0.0f64..180.0, 0.0f64..180.0, 0.0f64..180.0).prop_map(|(a, ap, b, bp)| ChshAngles::new(a, ap, b, bp))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn tsirelson_bound(rho in density(4), a in angles()) {
        prop_assert!(analytic_chsh(&rho, &a).unwrap().s_value <= TSIRELSON + 1e-9);
    }

    #[test]
    fn horodecki_value_dominates_fixed_angles(rho in density(4), a in angles()) {
        let m = max_chsh_from_state(&rho).unwrap();
        prop_assert!(m.s_max + 1e-9 >= analytic_chsh(&rho, &a).unwrap().s_value);
        prop_assert!(m.s_max <= TSIRELSON + 1e-9);
        prop_assert!((m.achieved_s - m.s_max).abs() < 1e-7, "{} vs {}", m.achieved_s, m.s_max);
    }

    #[test]
    fn relabeling_ports_flips_correlation(n in prop::array::uniform4(0u64..10_000), disc in 0u64..100) {
        prop_assume!(n.iter().sum::<u64>() > 0);
        let s = MeasurementSetting::new(0.0, 0.0).unwrap();
        let rec = CountRecord::new(s, n, disc);
        let flipped = CountRecord {
            setting: s,
            counts: Counts { n_uu: n[1], n_ud: n[0], n_du: n[3], n_dd: n[2], n_discarded: disc },
        };
        let e = correlation_from_counts(&rec).unwrap().value;
        prop_assert_eq!(correlation_from_counts(&flipped).unwrap().value, -e);
    }
}

fn counts_for(rho: &DensityMatrix, a: &ChshAngles, n: u64, seed: u64) -> Vec<CountRecord> {
    a.settings()
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| {
            let s = MeasurementSetting::new(x, y).unwrap();
            simulate_counts(rho, &s, n, &DetectorParams::ideal(), seed + k as u64).unwrap()
        })
        .collect()
}

#[test]
fn counted_chsh_converges_to_analytic() {
    let a = ChshAngles::new(0.0, 45.0, 22.5, -22.5);
    let werner = DensityMatrix::mixture(&[(0.85, &singlet()), (0.15, &DensityMatrix::maximally_mixed(4))]).unwrap();
    for (i, rho) in [singlet(), werner].iter().enumerate() {
        let r = chsh_from_counts(&counts_for(rho, &a, 250_000, 40 + 10 * i as u64), &a).unwrap();
        let exact = analytic_chsh(rho, &a).unwrap().s_value;
        assert!((r.s_value - exact).abs() < 5.0 * r.std_err, "{} vs {exact} ± {}", r.s_value, r.std_err);
    }
}

#[test]
fn missing_setting_is_reported() {
    let a = ChshAngles::new(0.0, 45.0, 22.5, -22.5);
    let recs = counts_for(&singlet(), &a, 1000, 1);
    assert!(chsh_from_counts(&recs[..3], &a).is_err());
}
