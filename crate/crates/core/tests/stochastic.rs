use rayon::prelude::*;
use rotor::crlb::*;
use rotor::estimation::*;
use rotor::spindown::*;

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Standard error of a sample variance from `m` Gaussian draws, relative to the variance.
fn var_rel_se(m: usize) -> f64 {
    (2.0 / (m as f64 - 1.0)).sqrt()
}

#[test]
fn random_walk_increments_and_spread() {
    let (gamma, q) = (1e-3, 1e-6);
    let model = StateSpaceModel::new(0.1, 100, 0.0).unwrap();
    let trials = 10_000;
    let paths: Vec<Vec<f64>> =
        (0..trials as u64).into_par_iter().map(|s| sample_log_path(0.0, gamma, q, &model, &mut rng_for(11, s))).collect();

    let incs: Vec<f64> = paths.iter().flat_map(|z| z.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()).collect();
    let (m, v) = mean_var(&incs);
    let qd = q * model.dt();
    assert!((m + gamma * model.dt()).abs() < 3.0 * (qd / incs.len() as f64).sqrt(), "mean {m}");
    assert!((v / qd - 1.0).abs() < 3.0 * var_rel_se(incs.len()), "var {v} vs {qd}");

    let ends: Vec<f64> = paths.iter().map(|z| z[z.len() - 1] - z[0]).collect();
    let (_, v) = mean_var(&ends);
    let expected = q * (model.n_samples() - 1) as f64 * model.dt();
    assert!((v / expected - 1.0).abs() < 3.0 * var_rel_se(trials), "{v} vs {expected}");
}

#[test]
fn covariance_matches_ensemble() {
    let model = StateSpaceModel::new(0.5, 5, 0.3).unwrap();
    let q = 2.0;
    let cov = build_covariance(&model, q).unwrap();
    let trials = 100_000;
    let paths: Vec<Vec<f64>> =
        (0..trials as u64).into_par_iter().map(|s| sample_log_path(0.0, 0.0, q, &model, &mut rng_for(5, s))).collect();
    let n = model.n_samples();
    for i in 0..n {
        for j in 0..n {
            let emp = paths.iter().map(|z| z[i] * z[j]).sum::<f64>() / trials as f64;
            let s = &cov.matrix;
            let se = ((s[(i, i)] * s[(j, j)] + s[(i, j)].powi(2)) / trials as f64).sqrt();
            assert!((emp - s[(i, j)]).abs() < 4.0 * se, "({i},{j}): {emp} vs {}", s[(i, j)]);
        }
    }
}

fn ols_gamma(z: &[f64], dt: f64) -> f64 {
    let times: Vec<f64> = (0..z.len()).map(|k| k as f64 * dt).collect();
    let trace = SpinDownTrace::new(times, z.iter().map(|x| x.exp()).collect()).unwrap();
    fit_exponential_decay(&trace, &FitOptions { min_freq: 0.0, ..Default::default() }).unwrap().gamma
}

fn gls_gamma(z: &[f64], w: &nalgebra::DVector<f64>) -> f64 {
    -w.iter().zip(z).map(|(w, z)| w * z).sum::<f64>()
}

#[test]
fn estimators_never_beat_the_bound() {
    let trials = 10_000;
    for (case, &(q, sv, n)) in [(0.0, 1e-3, 50), (1e-6, 1e-3, 50), (1e-4, 1e-5, 50), (1e-5, 1e-4, 200)].iter().enumerate() {
        let model = StateSpaceModel::new(0.1, n, sv).unwrap();
        let cov = build_covariance(&model, q).unwrap();
        let bound = exact_crlb_gamma(&cov).unwrap().variance;
        let w = gls_weights(&cov).unwrap();
        let est: Vec<(f64, f64)> = (0..trials as u64)
            .into_par_iter()
            .map(|s| {
                let z = sample_log_path(8.0, 1e-2, q, &model, &mut rng_for(100 + case as u64, s));
                (ols_gamma(&z, model.dt()), gls_gamma(&z, &w))
            })
            .collect();
        let floor = bound * (1.0 - 3.0 * var_rel_se(trials));
        let (_, v_ols) = mean_var(&est.iter().map(|e| e.0).collect::<Vec<_>>());
        let (m_gls, v_gls) = mean_var(&est.iter().map(|e| e.1).collect::<Vec<_>>());
        assert!(v_ols >= floor, "case {case}: OLS {v_ols} < {bound}");
        assert!(v_gls >= floor, "case {case}: GLS {v_gls} < {bound}");
        assert!((v_gls / bound - 1.0).abs() < 3.0 * var_rel_se(trials), "case {case}: GLS not efficient");
        assert!((m_gls - 1e-2).abs() < 4.0 * (bound / trials as f64).sqrt());
    }
}

#[test]
fn readout_only_ols_matches_regression_limit() {
    let model = StateSpaceModel::new(0.05, 400, 1e-3).unwrap();
    let trials = 10_000;
    let est: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|s| ols_gamma(&sample_log_path(5.0, 2e-2, 0.0, &model, &mut rng_for(21, s)), model.dt()))
        .collect();
    let (_, v) = mean_var(&est);
    let lim = readout_limited_bound(&model);
    assert!(v / lim < 1.2 && v / lim > 1.0 / 1.2, "{v} vs {lim}");
}

#[test]
fn increment_estimator_hits_process_limit() {
    let q = 1e-6;
    let model = StateSpaceModel::new(0.1, 1000, 0.0).unwrap();
    let cov = build_covariance(&model, q).unwrap();
    let w = gls_weights(&cov).unwrap();
    let trials = 10_000;
    let est: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|s| gls_gamma(&sample_log_path(5.0, 1e-3, q, &model, &mut rng_for(31, s)), &w))
        .collect();
    let (_, v) = mean_var(&est);
    let lim = process_limited_bound(q, model.duration()).unwrap();
    assert!((v / lim - 1.0).abs() < 3.0 * var_rel_se(trials), "{v} vs {lim}");
}

#[test]
fn noiseless_simulation_fits_exactly() {
    let m = rotor::model::MagnetSpec::new(25e-6, 7500.0).unwrap();
    let p = OUParams::new(m.moment_of_inertia(), 0.0, 4.0, 2.0 * std::f64::consts::PI * 2e6).unwrap();
    let model = StateSpaceModel::new(10.0, 500, 0.0).unwrap();
    let mut trace = simulate_ou_spindown(&p, &model, 3).unwrap();
    // γ = 0 in the torque model keeps Q = 0; impose the decay on the noiseless samples.
    let gamma = 3e-5;
    for (f, t) in trace.freqs.iter_mut().zip(&trace.times) {
        *f *= (-gamma * t).exp();
    }
    let fit = fit_exponential_decay(&trace, &FitOptions::default()).unwrap();
    assert!(((fit.gamma - gamma) / gamma).abs() < 1e-8);
}

#[test]
fn tracking_noise_matches_tone_bound() {
    let (n, fs, sn) = (256usize, 2000.0, 0.5);
    let bound = tone_frequency_crlb(1.0, sn, n, fs);
    let errs: Vec<f64> = (0..4000u64)
        .into_par_iter()
        .map(|s| {
            let spec = SquidSpec {
                f0: 431.7,
                gamma: 0.0,
                amplitude: 1.0,
                phase0: 0.37 * s as f64,
                noise_sigma: sn,
                sample_rate: fs,
                duration: n as f64 / fs,
                process_noise: 0.0,
            };
            let sq = synth_squid_signal(&spec, s).unwrap();
            periodogram_peak(&sq.values, fs, &PeakOptions::default()).unwrap().frequency - 431.7
        })
        .collect();
    let (_, v) = mean_var(&errs);
    assert!(v / bound < 1.15 && v / bound > 0.9, "variance {v} vs bound {bound}");
}
