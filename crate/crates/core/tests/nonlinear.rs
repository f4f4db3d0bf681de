mod common;

use std::f64::consts::TAU;

use approx::assert_abs_diff_eq;
use mnflow_core::lagrangian::{DisplacementAccumulator, DisplacementField, Kinematics};
use mnflow_core::model::{DomainSpec, FieldState, Frame, ModelParams, Ops};
use mnflow_core::nonlinear::monitor::{assemble_trajectory, gauss_legendre01};
use mnflow_core::nonlinear::{assemble_f, assemble_g, d_deform, d_div, estimate_monitor};
use mnflow_core::norms::weighted_time_norm_values;
use proptest::prelude::*;

use common::oracle::{decaying_trajectory, manufactured, oracle, production, v0_neumann, M3};

fn params(nu: f64) -> ModelParams {
    ModelParams { mu: 0.7, nu, rho_star: 1.3, ..Default::default() }
}

#[test]
fn manufactured_terms_match_expanded_oracle() {
    let m = manufactured();
    for nu in [0.0, 0.4] {
        let prm = params(nu);
        let (fo, go) = oracle(&m, &prm);
        let (fp, gp) = production(&m, &prm);
        let ef = common::max_abs_diff(&fo, &fp);
        let mut eg: f64 = 0.0;
        for p in 0..fo.len() {
            for i in 0..3 {
                eg = eg.max((go[p][i] - gp[i][p]).abs());
            }
        }
        assert!(ef < 1e-10, "F error {ef}");
        assert!(eg < 1e-10, "G error {eg}");
    }
}

#[test]
fn directional_derivative_of_v0_matches_finite_differences() {
    let k = M3::new(0.03, -0.01, 0.02, 0.015, -0.02, 0.01, -0.025, 0.005, 0.01);
    let a = M3::identity() + v0_neumann(&k);
    for (i, j) in [(0, 0), (0, 2), (1, 0), (2, 1)] {
        let mut e = M3::zeros();
        e[(i, j)] = 1.0;
        let h = 1e-5;
        let fd = (v0_neumann(&(k + e * h)) - v0_neumann(&(k - e * h))) / (2.0 * h);
        let exact = -a * e * a;
        assert!((fd - exact).abs().max() < 1e-6);
    }
}

#[test]
fn zero_inputs_give_zero_terms() {
    let d = DomainSpec::periodic(TAU, 8);
    let ops = Ops::new(&d).unwrap();
    let z = FieldState::zeros(&d, Frame::Lagrange, 0.0);
    let kin = Kinematics::from_state(&z, &ops).unwrap();
    let disp = DisplacementField::zeros(&d);
    let prm = params(0.2);
    let (f, _) = assemble_f(&z.theta, &kin, &disp, &prm).unwrap();
    let (g, _) = assemble_g(&z.theta, &z.vel, &kin, &disp, &prm, &ops).unwrap();
    assert!(f.iter().all(|v| *v == 0.0));
    assert!(g.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn frozen_map_with_zero_density_gives_zero_g() {
    let mut m = manufactured();
    m.eta.iter_mut().for_each(|v| *v = 0.0);
    m.k.iter_mut().flatten().for_each(|v| *v = 0.0);
    m.grad_k.iter_mut().flatten().for_each(|v| *v = 0.0);
    let (_, g) = production(&m, &params(0.3));
    assert!(g.iter().flatten().all(|v| v.abs() < 1e-13));
}

#[test]
fn zero_map_leaves_only_density_flux_and_inertia() {
    let mut m = manufactured();
    m.k.iter_mut().flatten().for_each(|v| *v = 0.0);
    m.grad_k.iter_mut().flatten().for_each(|v| *v = 0.0);
    let mut prm = params(0.3);
    prm.pressure = mnflow_core::model::PressureLaw::Linear { slope: 2.0 };
    let (f, g) = production(&m, &prm);
    for p in 0..f.len() {
        let divu = m.grad_u[p].trace();
        assert_abs_diff_eq!(f[p], -m.eta[p] * divu, epsilon = 1e-12);
        for i in 0..3 {
            assert_abs_diff_eq!(g[i][p], -m.eta[p] * m.dt_u[i][p], epsilon = 1e-12);
        }
    }
}

/// For a steady velocity the exact density is `rho_0 / det(I + t grad u)`;
/// its time derivative must equal `-rho_* div u + F`.
#[test]
fn continuity_term_reproduces_exact_lagrangian_mass_balance() {
    let m = manufactured();
    let prm = params(0.0);
    let rho = prm.rho_star;
    let ops = Ops::new(&m.domain).unwrap();
    let t = 0.3;
    let dt = 1e-4;
    let density = |p: usize, s: f64| {
        let eta0 = 0.1 * m.eta[p];
        (rho + eta0) / (M3::identity() + m.grad_u[p] * s).determinant()
    };
    let eta: Vec<f64> = (0..m.eta.len()).map(|p| density(p, t) - rho).collect();
    let k: Vec<Vec<f64>> = (0..9)
        .map(|c| m.grad_u.iter().map(|g| g[(c / 3, c % 3)] * t).collect())
        .collect();
    let state = FieldState { theta: eta.clone(), vel: m.u.clone(), frame: Frame::Lagrange, time: t };
    let kin = Kinematics::from_state(&state, &ops).unwrap();
    let d = DisplacementField::from_k(&m.domain, k).unwrap();
    let (f, _) = assemble_f(&eta, &kin, &d, &prm).unwrap();
    for p in (0..eta.len()).step_by(37) {
        let dteta = (density(p, t + dt) - density(p, t - dt)) / (2.0 * dt);
        let rhs = -rho * m.grad_u[p].trace() + f[p];
        assert!((dteta - rhs).abs() < 1e-7, "{dteta} vs {rhs}");
    }
}

proptest! {
    #[test]
    fn d_div_matches_index_loop(seed in 0u64..1000) {
        let n = 5;
        let v0: Vec<Vec<f64>> = (0..9).map(|c| common::random_vec(n, seed * 31 + c)).collect();
        let g: Vec<Vec<f64>> = (0..9).map(|c| common::random_vec(n, seed * 57 + 100 + c)).collect();
        let out = d_div(&v0, &g).unwrap();
        for p in 0..n {
            let mut s = 0.0;
            for i in 0..3 { for j in 0..3 { s += v0[3*i+j][p] * g[3*j+i][p]; } }
            prop_assert!((out[p] - s).abs() < 1e-14);
        }
    }

    #[test]
    fn d_deform_is_exactly_symmetric(seed in 0u64..1000) {
        let n = 4;
        let v0: Vec<Vec<f64>> = (0..9).map(|c| common::random_vec(n, seed * 13 + c)).collect();
        let g: Vec<Vec<f64>> = (0..9).map(|c| common::random_vec(n, seed * 17 + 50 + c)).collect();
        let out = d_deform(&v0, &g).unwrap();
        for p in 0..n {
            for i in 0..3 { for j in 0..3 { prop_assert_eq!(out[3*i+j][p], out[3*j+i][p]); } }
        }
    }

    #[test]
    fn d_div_is_bilinear(seed in 0u64..500, a in -3.0f64..3.0) {
        let n = 3;
        let v0: Vec<Vec<f64>> = (0..9).map(|c| common::random_vec(n, seed + c)).collect();
        let g: Vec<Vec<f64>> = (0..9).map(|c| common::random_vec(n, seed + 20 + c)).collect();
        let sg: Vec<Vec<f64>> = g.iter().map(|c| c.iter().map(|v| a * v).collect()).collect();
        let base = d_div(&v0, &g).unwrap();
        let scaled = d_div(&v0, &sg).unwrap();
        for p in 0..n { prop_assert!((scaled[p] - a * base[p]).abs() < 1e-13); }
    }
}

#[test]
fn identity_correction_reduces_to_divergence_and_deformation() {
    let n = 4;
    let mut v0 = vec![vec![0.0; n]; 9];
    for d in [0, 4, 8] {
        v0[d] = vec![1.0; n];
    }
    let g: Vec<Vec<f64>> = (0..9).map(|c| common::random_vec(n, 300 + c)).collect();
    let dd = d_div(&v0, &g).unwrap();
    let dm = d_deform(&v0, &g).unwrap();
    for p in 0..n {
        assert_abs_diff_eq!(dd[p], g[0][p] + g[4][p] + g[8][p], epsilon = 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(dm[3 * i + j][p], g[3 * i + j][p] + g[3 * j + i][p], epsilon = 1e-15);
            }
        }
    }
}

#[test]
fn nonlinear_terms_are_quadratically_small() {
    let domain = DomainSpec::periodic(TAU, 16);
    let base = common::random_smooth_state(&domain, 1.0, 7);
    let prm = params(0.2);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut alpha = 0.02;
    for _ in 0..4 {
        let traj = decaying_trajectory(&base, alpha, 10, 0.1);
        let terms = assemble_trajectory(&traj, &domain, &prm, None).unwrap();
        let vals: Vec<f64> = terms
            .iter()
            .map(|t| {
                let fr = [t.f.as_slice()];
                let gr: Vec<&[f64]> = t.g.iter().map(|c| c.as_slice()).collect();
                mnflow_core::model::lq_norm(&fr, &domain, 2.0).unwrap()
                    + mnflow_core::model::lq_norm(&gr, &domain, 2.0).unwrap()
            })
            .collect();
        let norm = weighted_time_norm_values(&traj.times, &vals, 2.0, prm.b()).unwrap();
        xs.push(alpha.ln());
        ys.push(norm.ln());
        alpha *= 0.5;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    assert!(slope >= 1.9, "slope {slope}");
}

#[test]
fn density_bound_is_enforced() {
    let m = manufactured();
    let mut prm = params(0.0);
    prm.rho_star = 0.2;
    let ops = Ops::new(&m.domain).unwrap();
    let state = FieldState { theta: m.eta.clone(), vel: m.u.clone(), frame: Frame::Lagrange, time: 0.0 };
    let kin = Kinematics::from_state(&state, &ops).unwrap();
    let d = DisplacementField::zeros(&m.domain);
    assert!(assemble_f(&m.eta, &kin, &d, &prm).is_err());
}

#[test]
fn radial_terms_converge_to_analytic_expression() {
    // steady radial velocity with k = t grad u; compare G against the
    // closed-form spherical expression at interior nodes
    let prm = ModelParams { mu: 0.5, nu: 0.1, rho_star: 1.0, ..Default::default() };
    let visc = 2.0 * prm.mu + prm.nu;
    let t = 0.2;
    let (r0, r1) = (1.0, 5.0);
    let uf = |r: f64| 0.05 * (r - r0) * (r1 - r) * (r - 2.0) / 8.0;
    let duf = |r: f64| 0.05 / 8.0 * ((r1 - r) * (r - 2.0) - (r - r0) * (r - 2.0) + (r - r0) * (r1 - r));
    let ef = |r: f64| 0.05 * (-(r - 3.0) * (r - 3.0)).exp();
    let def = |r: f64| -2.0 * (r - 3.0) * ef(r);
    // divergence of the Eulerian velocity in Lagrangian variables
    let divx = |r: f64| {
        let (a, b) = (t * duf(r), t * uf(r) / r);
        duf(r) / (1.0 + a) + 2.0 * uf(r) / r / (1.0 + b)
    };
    let divu = |r: f64| duf(r) + 2.0 * uf(r) / r;
    let mut errs = Vec::new();
    for n in [161usize, 321] {
        let domain = DomainSpec::radial(r1, n);
        let ops = Ops::new(&domain).unwrap();
        let nodes = domain.radial_nodes();
        let centers = domain.radial_centers();
        let u: Vec<f64> = nodes.iter().map(|&r| uf(r)).collect();
        let eta: Vec<f64> = centers.iter().map(|&r| ef(r)).collect();
        let s = FieldState { theta: eta.clone(), vel: vec![u.clone()], frame: Frame::Lagrange, time: 0.0 };
        let kin = Kinematics::from_state(&s, &ops).unwrap();
        let mut acc = DisplacementAccumulator::new(&domain, None);
        acc.push(0.0, kin.clone()).unwrap();
        let d = acc.push(t, kin.clone()).unwrap().clone();
        let zero = vec![vec![0.0; n]];
        let (g, _) = assemble_g(&eta, &zero, &kin, &d, &prm, &ops).unwrap();
        let mut err: f64 = 0.0;
        let h = 1e-6;
        for (i, &r) in nodes.iter().enumerate().take(n - 10).skip(10) {
            let a = 1.0 / (1.0 + t * duf(r));
            let dx = (divx(r + h) - divx(r - h)) / (2.0 * h);
            let du = (divu(r + h) - divu(r - h)) / (2.0 * h);
            let dp = |rho: f64| prm.pressure.deriv(rho).unwrap();
            let exact = visc * (a * dx - du) - (a * dp(1.0 + ef(r)) - dp(1.0)) * def(r);
            err = err.max((g[0][i] - exact).abs());
        }
        errs.push(err);
    }
    let order = (errs[0] / errs[1]).log2();
    assert!(order > 1.7, "errors {errs:?}, order {order}");
}

#[test]
fn monitor_reports_zero_ratio_for_zero_trajectories() {
    let domain = DomainSpec::periodic(TAU, 8);
    let z = FieldState::zeros(&domain, Frame::Lagrange, 0.0);
    let traj = decaying_trajectory(&z, 1.0, 4, 0.25);
    let rep = estimate_monitor(&traj, &traj, &domain, &params(0.0)).unwrap();
    assert!(rep.checks.iter().all(|c| c.lhs == 0.0 && c.ratio == 0.0));
    assert_eq!(rep.max_ratio, 0.0);
}

#[test]
fn monitor_ratios_stay_bounded_under_amplitude_scaling() {
    let domain = DomainSpec::periodic(TAU, 12);
    let b1 = common::random_smooth_state(&domain, 1.0, 3);
    let b2 = common::random_smooth_state(&domain, 1.0, 4);
    let prm = params(0.1);
    let mut maxes = Vec::new();
    for alpha in [0.02, 0.005, 0.00125] {
        let t1 = decaying_trajectory(&b1, alpha, 6, 0.2);
        let t2 = decaying_trajectory(&b2, alpha, 6, 0.2);
        let rep = estimate_monitor(&t1, &t2, &domain, &prm).unwrap();
        assert!(rep.checks.iter().all(|c| c.ratio.is_finite()));
        assert!(rep.pressure_remainder_gap < 1e-12);
        maxes.push(rep.max_ratio);
    }
    // quadratic on both sides: the ratio must not blow up as alpha -> 0
    assert!(maxes[2] <= 2.0 * maxes[0] + 1e-12, "{maxes:?}");
}

#[test]
fn gauss_legendre_integrates_polynomials() {
    let (x, w) = gauss_legendre01(8);
    for deg in 0..16 {
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
        assert!((s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13);
    }
}
