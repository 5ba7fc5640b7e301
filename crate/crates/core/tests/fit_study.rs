use ces_core::fit::{fit_lifetime, FitPoint};
use ces_core::rng::stream_rng;
use rand_distr::{Distribution, Normal};

const GRID: [f64; 6] = [0.8, 2.0, 4.0, 6.0, 8.0, 10.0];

fn curve(t: f64) -> f64 {
    0.434 * (-(t / 5.7f64).powi(2)).exp()
}

#[test]
fn noiseless_round_trip() {
    let pts: Vec<FitPoint> = GRID.iter().map(|&t| FitPoint::negativity(t, curve(t), None)).collect();
    let f = fit_lifetime(&pts).unwrap();
    assert!((f.n0 / 0.434 - 1.0).abs() < 1e-6);
    assert!((f.tau_e_us / 5.7 - 1.0).abs() < 1e-6);
}

#[test]
fn five_percent_noise_is_unbiased() {
    let taus: Vec<f64> = (0..200)
        .map(|k| {
            let mut rng = stream_rng(2024, k);
            let pts: Vec<FitPoint> = GRID
                .iter()
                .map(|&t| {
                    let y = curve(t);
                    let noisy = y * (1.0 + Normal::new(0.0, 0.05).unwrap().sample(&mut rng));
                    FitPoint::negativity(t, noisy, Some(0.05 * y))
                })
                .collect();
            fit_lifetime(&pts).unwrap().tau_e_us
        })
        .collect();
    let mean = taus.iter().sum::<f64>() / taus.len() as f64;
    assert!((mean / 5.7 - 1.0).abs() < 0.02, "mean tau {mean}");
}
