mod common;

use std::f64::consts::TAU;

use mnflow_core::linstokes::{LinearOp, Native};
use mnflow_core::model::{DomainSpec, FieldState, Frame, ModelParams, PressureLaw};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_params() -> ModelParams {
    ModelParams { mu: 1.0, nu: 0.0, rho_star: 1.0, pressure: PressureLaw::Linear { slope: 1.0 }, ..Default::default() }
}

fn l2(s: &FieldState) -> f64 {
    s.theta.iter().chain(s.vel.iter().flatten()).map(|v| v * v).sum::<f64>().sqrt()
}

fn diff(a: &FieldState, b: &FieldState) -> f64 {
    l2(&a.difference(b))
}

#[test]
fn single_mode_resolvent_matches_hand_solution() {
    let domain = DomainSpec::periodic(TAU, 8);
    let op = LinearOp::new(&unit_params(), &domain).unwrap();
    let n3 = domain.scalar_len();
    let f: Vec<f64> = (0..n3).map(|i| domain.box_point(i)[0].cos()).collect();
    let g = vec![f.clone(), vec![0.0; n3], vec![0.0; n3]];
    let (zeta, w) = op.resolvent_solve(Complex64::new(1.0, 0.0), &f, &g).unwrap();
    // zeta_hat = (3 - i)/4 and w1_hat = (1 - i)/4 on the e^{ix} mode
    for i in 0..n3 {
        let x = domain.box_point(i)[0];
        assert!((zeta[i].re - (3.0 * x.cos() + x.sin()) / 4.0).abs() < 1e-13);
        assert!((w[0][i].re - (x.cos() + x.sin()) / 4.0).abs() < 1e-13);
        assert!(zeta[i].im.abs() < 1e-13 && w[1][i].norm() < 1e-13 && w[2][i].norm() < 1e-13);
    }
}

#[test]
fn zero_mode_resolvent_decouples() {
    let domain = DomainSpec::periodic(TAU, 8);
    let prm = ModelParams { rho_star: 2.0, ..unit_params() };
    let op = LinearOp::new(&prm, &domain).unwrap();
    let n3 = domain.scalar_len();
    let lam = Complex64::new(3.0, 1.0);
    let (zeta, w) = op.resolvent_solve(lam, &vec![1.5; n3], &[vec![0.5; n3], vec![0.0; n3], vec![-1.0; n3]]).unwrap();
    assert!((zeta[5] - 1.5 / lam).norm() < 1e-14);
    assert!((w[0][7] - 0.5 / (2.0 * lam)).norm() < 1e-14);
    assert!((w[2][1] + 1.0 / (2.0 * lam)).norm() < 1e-14);
}

#[test]
fn random_resolvent_residual_is_tiny() {
    let domain = DomainSpec::periodic(TAU, 16);
    let prm = ModelParams { mu: 0.8, nu: 0.3, rho_star: 1.2, ..Default::default() };
    let op = LinearOp::new(&prm, &domain).unwrap();
    let n3 = domain.scalar_len();
    let f = common::random_vec(n3, 1);
    let g: Vec<Vec<f64>> = (0..3).map(|c| common::random_vec(n3, 10 + c)).collect();
    let lam = Complex64::new(10.0, 0.0);
    let (zeta, w) = op.resolvent_solve(lam, &f, &g).unwrap();
    let res = op.resolvent_residual(lam, &zeta, &w, &f, &g).unwrap();
    assert!(res <= 1e-10, "residual {res}");
}

#[test]
fn radial_resolvent_residual_is_small() {
    let domain = DomainSpec::radial(6.0, 200);
    let prm = ModelParams { mu: 1.0, nu: 0.5, rho_star: 1.0, ..Default::default() };
    let op = LinearOp::new(&prm, &domain).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let lam = Complex64::new(rng.random_range(1.0..100.0), rng.random_range(-20.0..20.0));
        let f = common::random_vec(domain.scalar_len(), rng.random());
        let mut g = common::random_vec(domain.vector_len(), rng.random());
        let n = g.len();
        g[0] = 0.0;
        g[n - 1] = 0.0;
        let (zeta, w) = op.resolvent_solve(lam, &f, &[g.clone()]).unwrap();
        let res = op.resolvent_residual(lam, &zeta, &w, &f, &[g]).unwrap();
        assert!(res <= 1e-8, "residual {res}");
    }
}

#[test]
fn semigroup_at_zero_is_identity_and_composes() {
    let domain = DomainSpec::periodic(TAU, 16);
    let op = LinearOp::new(&ModelParams { mu: 0.5, nu: 0.2, ..Default::default() }, &domain).unwrap();
    let s0 = common::random_smooth_state(&domain, 1.0, 11);
    let id = op.semigroup_apply(0.0, &s0).unwrap();
    assert!(diff(&id, &s0) <= 1e-12 * l2(&s0));
    let (s, t) = (0.37, 0.81);
    let a = op.semigroup_apply(s + t, &s0).unwrap();
    let b = op.semigroup_apply(t, &op.semigroup_apply(s, &s0).unwrap()).unwrap();
    assert!(diff(&a, &b) <= 1e-9 * l2(&s0));
    assert!(op.semigroup_apply(-1.0, &s0).is_err());
}

#[test]
fn transverse_mode_decays_as_heat_kernel() {
    let domain = DomainSpec::periodic(TAU, 8);
    let prm = ModelParams { mu: 0.3, nu: 0.7, rho_star: 1.5, ..Default::default() };
    let op = LinearOp::new(&prm, &domain).unwrap();
    let mut s0 = FieldState::zeros(&domain, Frame::Lagrange, 0.0);
    // xi = (2, 0, 0), w along y
    for i in 0..domain.scalar_len() {
        s0.vel[1][i] = (2.0 * domain.box_point(i)[0]).sin();
    }
    let t = 0.9;
    let s = op.semigroup_apply(t, &s0).unwrap();
    let factor = (-(prm.mu / prm.rho_star) * 4.0 * t).exp();
    let expect = s0.scaled(factor);
    assert!(diff(&s, &expect.clone()) < 1e-12);
}

#[test]
fn zero_mode_is_conserved_and_shift_is_exponential() {
    let domain = DomainSpec::periodic(TAU, 8);
    let op = LinearOp::new(&ModelParams::default(), &domain).unwrap();
    let mut s0 = FieldState::zeros(&domain, Frame::Lagrange, 0.0);
    s0.theta.iter_mut().for_each(|v| *v = 0.3);
    s0.vel[2].iter_mut().for_each(|v| *v = -0.2);
    let s = op.semigroup_apply(5.0, &s0).unwrap();
    assert!(diff(&s, &s0) < 1e-13);
    let sh = op.shifted_semigroup_apply(1.0, 2.0, &s0).unwrap();
    assert!(diff(&sh, &s0.scaled((-2.0f64).exp())) < 1e-13);
    let plain = op.shifted_semigroup_apply(0.0, 0.4, &common::random_smooth_state(&domain, 1.0, 2)).unwrap();
    let plain2 = op.semigroup_apply(0.4, &common::random_smooth_state(&domain, 1.0, 2)).unwrap();
    assert_eq!(plain.theta, plain2.theta);
}

#[test]
fn box_abscissa_is_zero_and_radial_is_negative() {
    let op = LinearOp::new(&ModelParams::default(), &DomainSpec::periodic(TAU, 8)).unwrap();
    let a = op.spectral_abscissa();
    assert!(a <= 0.0 && a > -1e-12, "{a}");
    assert_eq!(op.lambda1(), 2.0);
    let rop = LinearOp::new(&ModelParams::default(), &DomainSpec::radial(5.0, 40)).unwrap();
    assert!(rop.spectral_abscissa() < 0.0);
}

#[test]
fn longitudinal_roots_solve_characteristic_polynomial() {
    let prm = unit_params();
    let op = LinearOp::new(&prm, &DomainSpec::periodic(TAU, 8)).unwrap();
    let c = op.coefficients();
    for k in [0.3, 1.0, 2.0, 5.0] {
        for z in c.long_eigenvalues(k) {
            // z^2 + (2 mu + nu) k^2 z + p' k^2 = 0 for rho = 1
            let p = z * z + z * (2.0 * k * k) + k * k;
            assert!(p.norm() < 1e-10);
            assert!(z.re < 0.0);
        }
    }
}

#[test]
fn energy_is_non_increasing_over_many_steps() {
    let domain = DomainSpec::periodic(TAU, 16);
    let op = LinearOp::new(&ModelParams { mu: 0.05, nu: 0.01, ..Default::default() }, &domain).unwrap();
    let s0 = common::random_smooth_state(&domain, 1.0, 21);
    let h = 0.01;
    let stepper = op.stepper(h, 0.0);
    let mut y = op.to_native(&s0).unwrap();
    let zero = y.zeros_like();
    let mut e = op.energy(&s0).unwrap();
    for _ in 0..1000 {
        y = stepper.step(&op, &y, &zero, &zero).unwrap();
        let en = op.energy(&op.from_native(&y, Frame::Lagrange, 0.0)).unwrap();
        assert!(en <= e * (1.0 + 1e-10), "{en} > {e}");
        e = en;
    }
}

#[test]
fn radial_energy_is_non_increasing() {
    let domain = DomainSpec::radial(6.0, 120);
    let op = LinearOp::new(&ModelParams::default(), &domain).unwrap();
    let s0 = common::gaussian_state(&domain, 0.1, 0.8);
    let mut e = op.energy(&s0).unwrap();
    let mut s = s0;
    for _ in 0..50 {
        s = op.semigroup_trapezoid(0.02, 2, &s).unwrap();
        let en = op.energy(&s).unwrap();
        assert!(en <= e * (1.0 + 1e-10));
        e = en;
    }
}

#[test]
fn trapezoid_converges_to_exact_exponential_at_second_order() {
    let domain = DomainSpec::periodic(TAU, 8);
    let op = LinearOp::new(&ModelParams { mu: 0.2, nu: 0.1, ..Default::default() }, &domain).unwrap();
    let s0 = common::random_smooth_state(&domain, 1.0, 8);
    let exact = op.semigroup_apply(1.0, &s0).unwrap();
    let e1 = diff(&op.semigroup_trapezoid(1.0, 40, &s0).unwrap(), &exact);
    let e2 = diff(&op.semigroup_trapezoid(1.0, 80, &s0).unwrap(), &exact);
    let order = (e1 / e2).log2();
    assert!((order - 2.0).abs() < 0.2, "order {order}");
}

#[test]
fn shifted_semigroup_decays_at_least_at_shift_rate() {
    let domain = DomainSpec::periodic(TAU, 8);
    let op = LinearOp::new(&ModelParams::default(), &domain).unwrap();
    let s0 = common::random_smooth_state(&domain, 1.0, 4);
    let lam1 = op.lambda1();
    let lam0 = op.spectral_abscissa();
    for t in [0.5, 1.0, 2.0] {
        let s = op.shifted_semigroup_apply(lam1, t, &s0).unwrap();
        // energy norm is non-increasing under T(t), so the shift sets the rate
        let ratio = (op.energy(&s).unwrap() / op.energy(&s0).unwrap()).sqrt();
        assert!(ratio <= (-(lam1 - lam0) * t).exp() * (1.0 + 1e-12));
    }
}

#[test]
fn duhamel_step_with_constant_zero_mode_source_is_exact() {
    let domain = DomainSpec::periodic(TAU, 8);
    let op = LinearOp::new(&ModelParams::default(), &domain).unwrap();
    let n3 = domain.scalar_len();
    let src = op.source_native(&vec![1.0; n3], &vec![vec![0.0; n3]; 3]).unwrap();
    let lam = 2.0;
    let h = 0.1;
    let st = op.stepper(h, lam);
    let mut y = src.zeros_like();
    for _ in 0..10 {
        y = st.step(&op, &y, &src, &src).unwrap();
    }
    let s = op.from_native(&y, Frame::Lagrange, 1.0);
    let exact = (1.0 - (-lam * 1.0f64).exp()) / lam;
    assert!((s.theta[0] - exact).abs() < 1e-13);
    assert!(matches!(y, Native::Spec(_)));
}
