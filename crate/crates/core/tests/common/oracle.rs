//! Hand-expanded oracle for the Lagrangian nonlinear terms on a manufactured
//! single-mode state, shared by the nonlinear tests and the acceptance run.

use std::f64::consts::TAU;

use mnflow_core::lagrangian::{DisplacementField, Kinematics};
use mnflow_core::model::{DomainSpec, FieldState, Frame, ModelParams, Ops, TrajectoryRecord};
use mnflow_core::nonlinear::{assemble_f, assemble_g};
use nalgebra::Matrix3;

pub type M3 = Matrix3<f64>;

/// V0 by the Neumann series `sum_{n>=1} (-k)^n`.
pub fn v0_neumann(k: &M3) -> M3 {
    let mut term = M3::identity();
    let mut s = M3::zeros();
    for _ in 0..60 {
        term = -term * k;
        s += term;
    }
    s
}

pub struct Manufactured {
    pub domain: DomainSpec,
    pub eta: Vec<f64>,
    pub u: Vec<Vec<f64>>,
    pub dt_u: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub grad_k: Vec<Vec<f64>>,
    // analytic pointwise data for the oracle
    pub grad_u: Vec<M3>,
    pub hess_u: Vec<[M3; 3]>,
    pub grad_eta: Vec<[f64; 3]>,
    pub kmat: Vec<M3>,
    pub dk: Vec<[M3; 3]>,
}

pub fn manufactured() -> Manufactured {
    let n = 16;
    let domain = DomainSpec::periodic(TAU, n);
    let len = n * n * n;
    let ku = [1.0, 2.0, -1.0];
    let au = [0.3, -0.2, 0.25];
    let ph = [0.1, 0.7, -0.4];
    let ke = [0.0, 1.0, 1.0];
    let e0 = 0.2;
    let kk = [1.0, 0.0, 1.0];
    let kbase = M3::new(0.03, -0.01, 0.02, 0.015, -0.02, 0.01, -0.025, 0.005, 0.01);
    let dot = |a: &[f64; 3], x: &[f64; 3]| a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
    let mut m = Manufactured {
        domain,
        eta: vec![0.0; len],
        u: vec![vec![0.0; len]; 3],
        dt_u: vec![vec![0.0; len]; 3],
        k: vec![vec![0.0; len]; 9],
        grad_k: vec![vec![0.0; len]; 27],
        grad_u: Vec::new(),
        hess_u: Vec::new(),
        grad_eta: Vec::new(),
        kmat: Vec::new(),
        dk: Vec::new(),
    };
    for p in 0..len {
        let x = domain.box_point(p);
        let mut g = M3::zeros();
        let mut h = [M3::zeros(); 3];
        for j in 0..3 {
            let arg = dot(&ku, &x) + ph[j];
            m.u[j][p] = au[j] * arg.sin();
            m.dt_u[j][p] = 0.1 * (j as f64 + 1.0) * (x[0] + 2.0 * x[j]).cos();
            for i in 0..3 {
                g[(i, j)] = au[j] * ku[i] * arg.cos();
                for l in 0..3 {
                    h[l][(i, j)] = -au[j] * ku[l] * ku[i] * arg.sin();
                }
            }
        }
        let ae = dot(&ke, &x);
        m.eta[p] = e0 * ae.cos();
        m.grad_eta.push([0, 1, 2].map(|i| -e0 * ke[i] * ae.sin()));
        let ak = dot(&kk, &x);
        let kp = kbase * ak.cos();
        let mut dkp = [M3::zeros(); 3];
        for l in 0..3 {
            dkp[l] = -kbase * (kk[l] * ak.sin());
        }
        for i in 0..3 {
            for j in 0..3 {
                m.k[3 * i + j][p] = kp[(i, j)];
                for l in 0..3 {
                    m.grad_k[9 * l + 3 * i + j][p] = dkp[l][(i, j)];
                }
            }
        }
        m.grad_u.push(g);
        m.hess_u.push(h);
        m.kmat.push(kp);
        m.dk.push(dkp);
    }
    m
}

pub fn stress(mu: f64, nu: f64, m: &M3) -> M3 {
    mu * (m + m.transpose()) + M3::identity() * (nu * m.trace())
}

/// Term-by-term expansion: frozen-k viscous part, `d_k` part, pressure split
/// and inertia, all from analytic derivatives.
pub fn oracle(m: &Manufactured, prm: &ModelParams) -> (Vec<f64>, Vec<[f64; 3]>) {
    let (mu, nu, rho) = (prm.mu, prm.nu, prm.rho_star);
    let dp = |r: f64| prm.pressure.deriv(r).unwrap();
    let mut f = Vec::new();
    let mut g = Vec::new();
    for p in 0..m.eta.len() {
        let v0 = v0_neumann(&m.kmat[p]);
        let gu = m.grad_u[p];
        let eta = m.eta[p];
        let mut ddiv = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                ddiv += v0[(i, j)] * gu[(j, i)];
            }
        }
        let divu = gu.trace();
        f.push(-rho * ddiv - eta * (divu + ddiv));

        // d_l of the correction stress with k frozen, and d_l of the Stokes stress
        let mut e = [M3::zeros(); 3];
        let mut s0 = [M3::zeros(); 3];
        for l in 0..3 {
            let hl = m.hess_u[p][l];
            let vh = v0 * hl;
            let mut tr = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    tr += v0[(a, b)] * hl[(b, a)];
                }
            }
            e[l] = mu * (vh + vh.transpose()) + M3::identity() * (nu * tr);
            s0[l] = stress(mu, nu, &hl);
        }
        let a = M3::identity() + v0;
        let mut out = [0.0; 3];
        for i in 0..3 {
            let mut v1 = 0.0;
            for j in 0..3 {
                v1 += e[j][(i, j)];
                for l in 0..3 {
                    v1 += v0[(j, l)] * (s0[l] + e[l])[(i, j)];
                }
            }
            let mut v2 = 0.0;
            for l in 0..3 {
                let dv = -a * m.dk[p][l] * a;
                let dd = dv * gu;
                let mut dtr = 0.0;
                for x in 0..3 {
                    for y in 0..3 {
                        dtr += dv[(x, y)] * gu[(y, x)];
                    }
                }
                let sl = mu * (dd + dd.transpose()) + M3::identity() * (nu * dtr);
                for j in 0..3 {
                    v2 += a[(j, l)] * sl[(i, j)];
                }
            }
            let ge = m.grad_eta[p];
            let v0ge = (0..3).map(|j| v0[(i, j)] * ge[j]).sum::<f64>();
            let pdiff = (dp(rho + eta) - dp(rho)) * ge[i];
            out[i] = -eta * m.dt_u[i][p] + v1 + v2 - pdiff - dp(rho + eta) * v0ge;
        }
        g.push(out);
    }
    (f, g)
}

pub fn production(m: &Manufactured, prm: &ModelParams) -> (Vec<f64>, Vec<Vec<f64>>) {
    let ops = Ops::new(&m.domain).unwrap();
    let state = FieldState { theta: m.eta.clone(), vel: m.u.clone(), frame: Frame::Lagrange, time: 0.0 };
    let kin = Kinematics::from_state(&state, &ops).unwrap();
    let mut d = DisplacementField::from_k(&m.domain, m.k.clone()).unwrap();
    d.grad_k = m.grad_k.clone();
    let (f, _) = assemble_f(&m.eta, &kin, &d, prm).unwrap();
    let (g, diag) = assemble_g(&m.eta, &m.dt_u, &kin, &d, prm, &ops).unwrap();
    assert!(diag.values().all(|v| v.is_finite()));
    (f, g)
}

/// `alpha e^{-t} (theta_b, v_b)` with its exact time derivative.
pub fn decaying_trajectory(base: &FieldState, alpha: f64, steps: usize, dt: f64) -> TrajectoryRecord {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut dts = Vec::new();
    for i in 0..=steps {
        let t = i as f64 * dt;
        let mut s = base.scaled(alpha * (-t).exp());
        s.time = t;
        let mut d = s.scaled(-1.0);
        d.time = t;
        times.push(t);
        states.push(s);
        dts.push(d);
    }
    TrajectoryRecord::new(times, states, dts).unwrap()
}
