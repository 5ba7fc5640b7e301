//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach the output. A failing
//! criterion fails the process only when `CES_ACCEPTANCE_STRICT=1`.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use ces_core::bell::{analytic_chsh, ChshAngles, TSIRELSON};
use ces_core::config::{defaults, from_overrides, ExperimentConfig};
use ces_core::detection::{simulate_counts, simulate_counts_scheduled, simulate_tomography_dataset, DetectorParams, MeasurementSetting, Schedule};
use ces_core::linalg::{c, eig_hermitian, tensor, trace_distance, validate_density, CMatrix};
use ces_core::measures::{fidelity_singlet, report, state_fidelity};
use ces_core::pipeline::{run_bell, run_rates, run_sweep, run_tomo, RunOptions};
use ces_core::protocol::{depolarize, final_state, pumping_channel, singlet, NoiseParams};
use ces_core::rng::stream_rng;
use ces_core::tomography::{linear_inversion, mle_reconstruct, MleOptions, TomographyDataset};
use ces_core::DensityMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(label: &str, value: f64, target: f64, tol: f64, notes: &mut Vec<String>) -> bool {
    let ok = (value - target).abs() <= tol;
    notes.push(format!("{label}={value:.4} (target {target}±{tol}{})", if ok { "" } else { " MISS" }));
    ok
}

fn config_file(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    from_overrides(&v).unwrap()
}

fn within_time(t: Duration, limit_s: u64, notes: &mut Vec<String>) -> bool {
    notes.push(format!("{:.1}s (limit {limit_s}s)", t.as_secs_f64()));
    t.as_secs() < limit_s
}

fn ideal_bell_limit() -> Outcome {
    let start = Instant::now();
    let cfg = config_file("ideal.json");
    let mut notes = Vec::new();
    let angles = ChshAngles::new(0.0, 45.0, 22.5, -22.5);
    let rho = final_state(&cfg.noise, cfg.dt_us).unwrap();
    let exact = analytic_chsh(&rho, &angles).unwrap().s_value;
    let mut pass = (exact - TSIRELSON).abs() < 1e-9;
    notes.push(format!("analytic S={exact:.12}"));
    let run = run_bell(&cfg).unwrap();
    let r = &run.results[0];
    let ok_mc = (r.s_value - TSIRELSON).abs() < 5.0 * r.std_err;
    notes.push(format!("MC S={:.4}±{:.4} over {} sequences per setting", r.s_value, r.std_err, cfg.n_sequences));
    pass &= ok_mc;
    pass &= within_time(start.elapsed(), 10, &mut notes);
    Outcome { pass, detail: notes.join(", ") }
}

fn reference_state() -> Outcome {
    let start = Instant::now();
    let cfg = defaults().unwrap();
    let mut notes = Vec::new();
    let tomo = run_tomo(&cfg, &RunOptions::default()).unwrap();
    let r = tomo.report;
    notes.push(format!("{:.0} coincidences", tomo.dataset.total_counts()));
    let mut pass = true;
    pass &= check("F", r.fidelity_singlet, 0.902, 0.02, &mut notes);
    pass &= check("C", r.concurrence, 0.81, 0.04, &mut notes);
    pass &= check("E_F", r.eof, 0.73, 0.05, &mut notes);
    pass &= check("E_N", r.log_negativity, 0.867, 0.03, &mut notes);
    pass &= check("S_inferred", r.s_max, 2.47, 0.06, &mut notes);
    let bell = run_bell(&cfg).unwrap();
    for (k, res) in bell.results.iter().enumerate() {
        let n: u64 = if k == 0 { &bell.records_a } else { &bell.records_b }.iter().map(|r| r.total()).sum();
        notes.push(format!("S{}: {n} coincidences, analytic {:.4}", k + 1, bell.analytic[k].s_value));
        pass &= check(&format!("S{}_vs_2.46", k + 1), res.s_value, 2.46, 0.08, &mut notes);
        pass &= check(&format!("S{}_vs_2.53", k + 1), res.s_value, 2.53, 0.08, &mut notes);
    }
    pass &= within_time(start.elapsed(), 120, &mut notes);
    Outcome { pass, detail: notes.join(", ") }
}

fn fidelity_floor() -> Outcome {
    let n = NoiseParams::dephasing_only(1.0, 5.7);
    let f = fidelity_singlet(&final_state(&n, 1e4).unwrap()).unwrap();
    Outcome { pass: (f - 0.5).abs() < 1e-9, detail: format!("F(dt=1e4 us)={f:.12}") }
}

fn lifetime_recovery() -> Outcome {
    let start = Instant::now();
    let cfg = config_file("lifetime.json");
    let sweep = run_sweep(&cfg, &RunOptions::default()).unwrap();
    let mut notes = vec![format!("dt grid {:?}", cfg.sweep_dt_us)];
    let mut pass = check("tau_e", sweep.fit.tau_e_us, 5.7, 0.4, &mut notes);
    notes.push(format!("N0={:.4}", sweep.fit.n0));
    pass &= within_time(start.elapsed(), 300, &mut notes);
    Outcome { pass, detail: notes.join(", ") }
}

fn rate_budget() -> Outcome {
    let r = run_rates(&defaults().unwrap()).unwrap();
    let rel = |x: f64, t: f64| (x / t - 1.0).abs();
    let pass = rel(r.p_pair_detect, 2.4e-4) <= 0.25 && rel(r.pairs_produced_per_s, 370.0) <= 0.10 && rel(r.pairs_detected_per_s, 12.0) <= 0.25;
    Outcome {
        pass,
        detail: format!(
            "p_pair_detect={:.4e}, produced={:.1}/s, detected={:.2}/s",
            r.p_pair_detect, r.pairs_produced_per_s, r.pairs_detected_per_s
        ),
    }
}

fn random_state(rng: &mut ChaCha8Rng) -> DensityMatrix {
    let g = CMatrix::from_fn(4, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new(m.scale(1.0 / tr).hermitian_part()).unwrap()
}

fn tomography_oracle() -> Outcome {
    let mut rng = stream_rng(6, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rho = random_state(&mut rng);
        let ds = TomographyDataset::exact(&rho, 1e5).unwrap();
        let lin = linear_inversion(&ds).unwrap();
        let mle = mle_reconstruct(&ds, &MleOptions::default()).unwrap();
        worst = worst.max(trace_distance(&lin.estimate, &mle.estimate));
    }
    let mut min_f: f64 = 1.0;
    let det = DetectorParams::ideal();
    for k in 0..10u64 {
        let rho = if k == 0 { singlet() } else { random_state(&mut rng) };
        // routing keeps half the sequences: ≈10⁵ counts per basis pair
        let ds = simulate_tomography_dataset(&rho, 200_000, &det, 600 + k).unwrap();
        let est = mle_reconstruct(&ds, &MleOptions::default()).unwrap().density().unwrap();
        min_f = min_f.min(state_fidelity(&est, &rho).unwrap());
    }
    Outcome {
        pass: worst < 1e-6 && min_f > 0.995,
        detail: format!("max trace distance MLE vs linear = {worst:.2e} (100 states), min round-trip fidelity = {min_f:.5} (10 states)"),
    }
}

fn window_feature() -> Outcome {
    let full = defaults().unwrap();
    let narrow = from_overrides(&serde_json::json!({"detector": {"window_fraction": 0.4}})).unwrap();
    let a = run_tomo(&full, &RunOptions::default()).unwrap();
    let b = run_tomo(&narrow, &RunOptions::default()).unwrap();
    let mut notes = Vec::new();
    let mut pass = check("F_full", a.report.fidelity_singlet, 0.902, 0.02, &mut notes);
    pass &= check("F_window", b.report.fidelity_singlet, 0.932, 0.02, &mut notes);
    pass &= b.report.fidelity_singlet > a.report.fidelity_singlet;
    let (na, nb) = (a.dataset.total_counts(), b.dataset.total_counts());
    let ratio = nb / na;
    let expected = narrow.detector.coincidence_probability() / full.detector.coincidence_probability();
    let sigma = ratio * (1.0 / na + 1.0 / nb).sqrt();
    let ok = (ratio - expected).abs() < 4.0 * sigma;
    notes.push(format!("coincidence ratio {ratio:.4} vs acceptance {expected:.4} (±{:.4}){}", 4.0 * sigma, if ok { "" } else { " MISS" }));
    pass &= ok;
    Outcome { pass, detail: notes.join(", ") }
}

fn property_spot_checks() -> Outcome {
    let mut rng = stream_rng(8, 0);
    let mut failures = Vec::new();
    for _ in 0..200 {
        let rho = random_state(&mut rng);
        let p: f64 = rng.random();
        let outs = [pumping_channel(&rho, p).unwrap(), depolarize(&rho, p)];
        if outs.iter().any(|o| !validate_density(o.matrix()).passed) {
            failures.push("channel output invalid");
        }
        let n = NoiseParams { v0: rng.random(), tau_e: 0.1 + 10.0 * rng.random::<f64>(), p_white: rng.random(), eta_pump: rng.random() };
        if !validate_density(final_state(&n, 20.0 * rng.random::<f64>()).unwrap().matrix()).passed {
            failures.push("final_state invalid");
        }
        let angles = ChshAngles::new(180.0 * rng.random::<f64>(), 180.0 * rng.random::<f64>(), 180.0 * rng.random::<f64>(), 180.0 * rng.random::<f64>());
        if analytic_chsh(&rho, &angles).unwrap().s_value > TSIRELSON + 1e-9 {
            failures.push("Tsirelson bound exceeded");
        }
    }
    for _ in 0..50 {
        let rho = DensityMatrix::new(
            (&random_state(&mut rng).matrix().scale(0.95) + &CMatrix::identity(4).scale(0.0125)).hermitian_part(),
        )
        .unwrap();
        let u = tensor(&random_unitary(&mut rng), &random_unitary(&mut rng));
        let (a, b) = (report(&rho).unwrap(), report(&rho.evolve(&u)).unwrap());
        let diffs = [a.concurrence - b.concurrence, a.eof - b.eof, a.negativity - b.negativity, a.s_max - b.s_max];
        if diffs.iter().any(|d| d.abs() > 1e-9) {
            failures.push("measure changed under local unitary");
        }
    }
    let setting = MeasurementSetting::new(0.0, 22.5).unwrap();
    let det = DetectorParams { eta_det: 0.2, dark_rate: 1e-3, ..DetectorParams::ideal() };
    let n = 300_000;
    let runs: Vec<_> = [Schedule::Parallel, Schedule::Sequential, Schedule::Reversed]
        .into_iter()
        .map(|s| simulate_counts_scheduled(&singlet(), &setting, n, &det, 3, s).unwrap())
        .collect();
    if runs.windows(2).any(|w| w[0] != w[1]) {
        failures.push("counts depend on schedule");
    }
    if simulate_counts(&singlet(), &setting, n, &det, 3).unwrap() != runs[0] {
        failures.push("counts not reproducible");
    }
    failures.dedup();
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "channels, Tsirelson bound, local-unitary invariance, determinism and schedule independence hold; full suites in the *_props targets".into()
        } else {
            failures.join("; ")
        },
    }
}

fn random_unitary(rng: &mut ChaCha8Rng) -> CMatrix {
    // exp(iH) for a random Hermitian H
    let g = CMatrix::from_fn(2, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let h = (&g + &g.adjoint()).scale(2.0);
    let e = eig_hermitian(&h).unwrap();
    let mut u = CMatrix::zeros(2);
    for k in 0..2 {
        let v = e.vector(k);
        let phase = c(0.0, e.values[k]).exp();
        u = &u + &CMatrix::outer(&v, &v).scale_c(phase);
    }
    u
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("ideal-protocol Bell limit", ideal_bell_limit),
        ("reference-state reproduction", reference_state),
        ("fidelity decay to 1/2", fidelity_floor),
        ("lifetime recovery", lifetime_recovery),
        ("rate budget", rate_budget),
        ("tomography oracle equivalence", tomography_oracle),
        ("window feature", window_feature),
        ("property suites", property_spot_checks),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} [{name}]: {} | {}", k + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    let strict = std::env::var("CES_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        std::process::exit(1);
    }
}
