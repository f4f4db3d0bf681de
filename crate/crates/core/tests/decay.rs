use mnflow_core::decay::{
    exponent_bookkeeping, linear_fit, log_times, predicted_exponent, run_decay_experiment, transverse_packet,
    velocity_gaussian, DecayConfig, DecayKind, DecayVerdict, MEAN_NOTE,
};
use mnflow_core::error::Error;
use mnflow_core::linstokes::LinearOp;
use mnflow_core::model::{DomainSpec, ModelParams, PressureLaw};
use proptest::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

fn params() -> ModelParams {
    ModelParams {
        mu: 1.0,
        nu: 0.0,
        rho_star: 1.0,
        pressure: PressureLaw::Power { a: 1.0, gamma: 1.4 },
        ..Default::default()
    }
}

#[test]
fn table_values() {
    assert_eq!(predicted_exponent(DecayKind::State, 2.0, 1.0).unwrap(), 0.75);
    assert_eq!(predicted_exponent(DecayKind::Gradient, 2.0, 1.0).unwrap(), 1.25);
    assert_eq!(predicted_exponent(DecayKind::Dt, 2.0, 1.0).unwrap(), 1.5);
    assert_eq!(predicted_exponent(DecayKind::Hessian, 6.0, 2.0).unwrap(), 0.75);
    assert_eq!(predicted_exponent(DecayKind::Gradient, 6.0, 1.0).unwrap(), 1.5);
    for (p, q) in [(1.5, 1.0), (2.0, 2.5), (2.0, 0.5), (f64::INFINITY, 1.0)] {
        assert!(matches!(predicted_exponent(DecayKind::State, p, q), Err(Error::OutOfRange(_))));
    }
}

proptest! {
    #[test]
    fn gradient_gains_half_below_three(p in 2.0f64..3.0, q in 1.0f64..2.0) {
        let s = predicted_exponent(DecayKind::State, p, q).unwrap();
        let g = predicted_exponent(DecayKind::Gradient, p, q).unwrap();
        prop_assert!((g - s - 0.5).abs() < 1e-14);
        prop_assert!(s >= 0.0);
    }

    #[test]
    fn gradient_exponent_is_continuous_in_p(q in 1.0f64..2.0) {
        let below = predicted_exponent(DecayKind::Gradient, 3.0 - 1e-9, q).unwrap();
        let above = predicted_exponent(DecayKind::Gradient, 3.0 + 1e-9, q).unwrap();
        prop_assert!((below - above).abs() < 1e-8);
    }
}

#[test]
fn transverse_packet_decays_like_the_heat_kernel() {
    // v = curl(psi e_z), psi Gaussian of width w: ||v(t)||_2 ~ (w^2/2 + 2 mu t)^{-5/4}
    let d = DomainSpec::periodic(24.0, 48);
    let w = 1.5;
    let data = transverse_packet(&d, 1e-2, w).unwrap();
    let fit = run_decay_experiment(&data, &d, &params(), DecayKind::State, 2.0, 1.0, &DecayConfig::default()).unwrap();
    let lx: Vec<f64> = fit.times.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = fit.times.iter().map(|t| -1.25 * (0.5 * w * w + 2.0 * t).ln()).collect();
    let closed = -linear_fit(&lx, &ly).0;
    assert!((fit.fitted_exponent - closed).abs() <= 0.1 * closed, "{} vs {closed}", fit.fitted_exponent);
    let r0 = fit.norms[0] * (0.5 * w * w + 2.0 * fit.times[0]).powf(1.25);
    for (t, n) in fit.times.iter().zip(&fit.norms) {
        let r = n * (0.5 * w * w + 2.0 * t).powf(1.25);
        assert!((r / r0 - 1.0).abs() < 0.1, "t = {t}");
    }
}

fn parseval_l2(field: &[f64], n: usize, length: f64) -> f64 {
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = field.iter().map(|v| Complex::new(*v, 0.0)).collect();
    // three passes of 1D transforms along each axis
    for stride in [1, n, n * n] {
        let mut line = vec![Complex::new(0.0, 0.0); n];
        for base in 0..n * n * n {
            if (base / stride) % n != 0 {
                continue;
            }
            for (k, l) in line.iter_mut().enumerate() {
                *l = buf[base + k * stride];
            }
            fft.process(&mut line);
            for (k, l) in line.iter().enumerate() {
                buf[base + k * stride] = *l;
            }
        }
    }
    // the zero mode is excluded: experiments remove spatial means
    let total = n * n * n;
    let s: f64 = buf.iter().skip(1).map(|c| c.norm_sqr()).sum();
    (s / total as f64 * length.powi(3) / total as f64).sqrt()
}

#[test]
fn state_decay_matches_table_and_parseval() {
    let d = DomainSpec::periodic(32.0, 64);
    let p = params();
    let data = velocity_gaussian(&d, 1e-2, 1.0);
    let fit = run_decay_experiment(&data, &d, &p, DecayKind::State, 2.0, 1.0, &DecayConfig::default()).unwrap();
    assert_eq!(fit.verdict, DecayVerdict::Pass, "{fit:?}");
    assert!((fit.fitted_exponent - 0.75).abs() <= 0.15 * 0.75 && fit.r_squared >= 0.98);
    assert!(fit.notes.iter().any(|n| n == MEAN_NOTE));
    assert!(fit.times[0] >= 1.0 && fit.window.1 <= 0.4 * 32.0 / p.sound_speed() + 1e-12);

    let op = LinearOp::new(&p, &d).unwrap();
    let i = fit.times.len() / 2;
    let x = op.semigroup_apply(fit.times[i], &data).unwrap();
    let mut sq = 0.0;
    for c in std::iter::once(&x.theta).chain(x.vel.iter()) {
        sq += parseval_l2(c, 64, 32.0).powi(2);
    }
    assert!((sq.sqrt() / fit.norms[i] - 1.0).abs() < 1e-10, "{} vs {}", sq.sqrt(), fit.norms[i]);
}

#[test]
fn fits_do_not_depend_on_amplitude() {
    let d = DomainSpec::periodic(16.0, 24);
    let cfg = DecayConfig::default();
    let a = run_decay_experiment(&velocity_gaussian(&d, 1e-2, 1.5), &d, &params(), DecayKind::Gradient, 2.0, 1.0, &cfg).unwrap();
    let b = run_decay_experiment(&velocity_gaussian(&d, 3e-6, 1.5), &d, &params(), DecayKind::Gradient, 2.0, 1.0, &cfg).unwrap();
    assert!((a.fitted_exponent - b.fitted_exponent).abs() < 1e-9);
    assert!((a.r_squared - b.r_squared).abs() < 1e-9);
}

#[test]
fn short_windows_are_inconclusive() {
    let d = DomainSpec::periodic(16.0, 16);
    let cfg = DecayConfig { t_max: Some(2.0), ..Default::default() };
    let f = run_decay_experiment(&velocity_gaussian(&d, 1e-2, 1.5), &d, &params(), DecayKind::State, 2.0, 1.0, &cfg).unwrap();
    assert_eq!(f.verdict, DecayVerdict::Inconclusive);
    assert!(f.fitted_exponent.is_nan() && f.times.is_empty());

    // the shell reflects after (R_out - R_in) / c
    let shell = DomainSpec::radial(4.5, 200);
    let data = velocity_gaussian(&shell, 1e-2, 0.5);
    let f = run_decay_experiment(&data, &shell, &params(), DecayKind::State, 2.0, 1.0, &DecayConfig::default()).unwrap();
    assert_eq!(f.verdict, DecayVerdict::Inconclusive);

    let bad = DecayConfig { t_min: 0.5, ..Default::default() };
    assert!(matches!(
        run_decay_experiment(&data, &shell, &params(), DecayKind::State, 2.0, 1.0, &bad),
        Err(Error::InvalidParameter { key, .. }) if key == "t_min"
    ));
}

#[test]
fn long_window_is_capped_and_noted() {
    let d = DomainSpec::periodic(16.0, 16);
    let cfg = DecayConfig { t_max: Some(100.0), ..Default::default() };
    let f = run_decay_experiment(&velocity_gaussian(&d, 1e-2, 1.5), &d, &params(), DecayKind::State, 2.0, 1.0, &cfg).unwrap();
    assert!((f.window.1 - 0.4 * 16.0 / params().sound_speed()).abs() < 1e-12);
    assert!(f.notes.len() == 2);
    assert_eq!(f.times, log_times(1.0, f.window.1, 12));
}

#[test]
fn three_dimensions_admit_both_weights() {
    let sigma = 0.1;
    for p in [2.0, 1.0 + sigma] {
        let r = exponent_bookkeeping(3, sigma, p, None).unwrap();
        assert!(r.decay_inequality && r.weight_inequality && r.holds, "{r:?}");
        assert!(r.b > r.b_interval.0 && r.b < r.b_interval.1);
    }
    let r = exponent_bookkeeping(3, sigma, 2.0, None).unwrap();
    assert!((r.b - (3.0 - sigma) / (2.0 * (2.0 + sigma))).abs() < 1e-15);
    assert!((r.decay_product - 2.0 * (0.5 + 1.5 / 2.1 - 2.9 / 4.2)).abs() < 1e-14);
    let r = exponent_bookkeeping(3, sigma, 1.0 + sigma, None).unwrap();
    assert!((r.b - (1.0 - sigma) / (2.0 * (2.0 + sigma))).abs() < 1e-15);
    assert!((r.weight_product - 0.9 / 4.2 * 11.0).abs() < 1e-12);
    assert_eq!(r.q3_threshold, Some(6.0));
    assert!(r.q3_scan.iter().any(|&(q, ok)| q == 6.0 && ok));
    assert!(r.q3_scan.iter().any(|&(q, ok)| q == 5.5 && !ok));
}

#[test]
fn two_dimensions_fail() {
    for p in [2.0, 1.1, 4.0] {
        let r = exponent_bookkeeping(2, 0.1, p, None).unwrap();
        assert!(r.rate < 1.0 && !r.holds);
        assert!(r.b_interval.0 >= r.b_interval.1);
        assert!(r.q3_threshold.is_none() && !r.notes.is_empty());
    }
    // no weight rescues it
    for b in [0.1, 0.3, 0.5, 0.7, 0.9] {
        assert!(!exponent_bookkeeping(2, 0.1, 2.0, Some(b)).unwrap().holds);
    }
}

#[test]
fn four_dimensions_need_q3_above_n() {
    let r = exponent_bookkeeping(4, 0.1, 2.0, None).unwrap();
    assert_eq!(r.q3_threshold, Some(4.0));
    for (q, ok) in &r.q3_scan {
        assert_eq!(*ok, *q > 4.0, "q3 = {q}");
    }
    assert!(r.holds);
    assert!(matches!(exponent_bookkeeping(1, 0.1, 2.0, None), Err(Error::OutOfRange(_))));
}
