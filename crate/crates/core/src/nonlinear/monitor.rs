//! Product-estimate monitor for `F` and `G`.
//!
//! Each bound is evaluated with its unknown constant dropped; the report
//! records the measured ratio `lhs / rhs`. Bounds are transcribed as stated,
//! with two repairs: an undefined density in the `F` difference bound is read
//! as the second trajectory, and a repeated `v_1` inside `sum_i` is read as `v_i`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::{assemble, NonlinearTerms};
use crate::error::{Error, Result};
use crate::lagrangian::{DisplacementAccumulator, Kinematics};
use crate::model::quadrature::derivative_fields;
use crate::model::{lq_norm, DomainSpec, Frame, ModelParams, Ops, TrajectoryRecord};
use crate::norms::{trajectory_profiles, weighted_time_norm_values, SpaceProfile, Q2, Q6, QS};

/// `F` and `G` at every node of a Lagrangian trajectory, with the map built
/// from the trajectory's own velocity. `delta = None` skips the map check.
pub fn assemble_trajectory(
    traj: &TrajectoryRecord,
    domain: &DomainSpec,
    params: &ModelParams,
    delta: Option<f64>,
) -> Result<Vec<NonlinearTerms>> {
    traj.validate()?;
    if !traj.has_derivatives() {
        return Err(Error::MissingDerivatives);
    }
    let ops = Ops::new(domain)?;
    let mut acc = DisplacementAccumulator::new(domain, delta);
    let mut out = Vec::with_capacity(traj.len());
    for i in 0..traj.len() {
        let s = &traj.states[i];
        if s.frame != Frame::Lagrange {
            return Err(Error::FrameMismatch { expected: Frame::Lagrange, got: s.frame });
        }
        let kin = Kinematics::from_state(s, &ops)?;
        let d = acc.push(traj.times[i], kin.clone())?;
        out.push(assemble(s, &traj.dt_states[i], &kin, d, params, &ops)?);
    }
    Ok(out)
}

/// Time norms of one trajectory used by the bounds (`[q = 2, 2+sigma, 6]`).
#[derive(Debug, Clone, Default, Serialize)]
pub struct Atoms {
    pub theta0_h1: [f64; 3],
    pub theta0_l: [f64; 3],
    pub dt_theta_h1: [f64; 3],
    pub dt_theta_l: [f64; 3],
    pub grad_vel_h1: [f64; 3],
    pub grad_vel_l: [f64; 3],
    pub hess_vel_l: [f64; 3],
    pub grad_theta_l: [f64; 3],
    pub dt_vel_l: [f64; 3],
}

impl Atoms {
    pub fn from_profiles(times: &[f64], prof: &[SpaceProfile], p: f64, b: f64) -> Result<Self> {
        let tn = |f: &dyn Fn(&SpaceProfile, usize) -> f64| -> Result<[f64; 3]> {
            let mut out = [0.0; 3];
            for (q, o) in out.iter_mut().enumerate() {
                let v: Vec<f64> = prof.iter().map(|s| f(s, q)).collect();
                *o = weighted_time_norm_values(times, &v, p, b)?;
            }
            Ok(out)
        };
        let p0 = &prof[0];
        Ok(Atoms {
            theta0_h1: [0, 1, 2].map(|q| p0.theta_h1(q)),
            theta0_l: p0.theta,
            dt_theta_h1: tn(&|s, q| s.dt_theta_h1(q))?,
            dt_theta_l: tn(&|s, q| s.dt_theta[q])?,
            grad_vel_h1: tn(&|s, q| s.grad_vel_h1(q))?,
            grad_vel_l: tn(&|s, q| s.grad_vel[q])?,
            hess_vel_l: tn(&|s, q| s.hess_vel[q])?,
            grad_theta_l: tn(&|s, q| s.grad_theta[q])?,
            dt_vel_l: tn(&|s, q| s.dt_vel[q])?,
        })
    }
}

/// One evaluated bound.
#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

impl BoundCheck {
    fn new(label: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let ratio = if lhs == 0.0 {
            0.0
        } else if rhs == 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        };
        BoundCheck { label: label.into(), lhs, rhs, ratio }
    }
}

/// Monitor output for a trajectory pair.
#[derive(Debug, Clone, Serialize)]
pub struct MonitorReport {
    pub checks: Vec<BoundCheck>,
    pub max_ratio: f64,
    /// Largest gap between `p'(rho_* + eta) - p'(rho_*)` and its integral
    /// remainder form (Gauss-Legendre), over both trajectories.
    pub pressure_remainder_gap: f64,
    pub notes: Vec<String>,
}

pub const NORM_ORDER_NOTE: &str =
    "the bound for F is stated in H^1_r while the bound for its difference is stated in L_r; both are evaluated as stated";

/// Gauss-Legendre nodes and weights on `[0, 1]` (Golub-Welsch).
pub fn gauss_legendre01(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (0.5 * (eig.eigenvalues[i] + 1.0), v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

fn pressure_gap(traj: &TrajectoryRecord, params: &ModelParams) -> Result<f64> {
    let (x, w) = gauss_legendre01(8);
    let rho = params.rho_star;
    let dp0 = params.pressure_deriv(rho)?;
    let mut gap: f64 = 0.0;
    for s in &traj.states {
        for &e in &s.theta {
            let direct = params.pressure_deriv(rho + e)? - dp0;
            let mut integral = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                integral += wi * params.pressure.second_deriv(rho + xi * e)?;
            }
            gap = gap.max((direct - integral * e).abs());
        }
    }
    Ok(gap)
}

/// Per-node norms of `F` (`H^1` or `L`) and `G` (`L`) at a list of exponents.
struct TermNorms {
    f_h1: Vec<Vec<f64>>,
    f_l: Vec<Vec<f64>>,
    g_l: Vec<Vec<f64>>,
}

fn term_norms(terms: &[(Vec<f64>, Vec<Vec<f64>>)], qs: &[f64], domain: &DomainSpec, ops: &Ops) -> Result<TermNorms> {
    let mut out = TermNorms { f_h1: Vec::new(), f_l: Vec::new(), g_l: Vec::new() };
    for (f, g) in terms {
        let fr = [f.as_slice()];
        let (gf, _) = derivative_fields(&fr, ops, 1, false)?;
        let gfr: Vec<&[f64]> = gf.iter().map(|c| c.as_slice()).collect();
        let gr: Vec<&[f64]> = g.iter().map(|c| c.as_slice()).collect();
        let mut fh = Vec::new();
        let mut fl = Vec::new();
        let mut gl = Vec::new();
        for &q in qs {
            let l = lq_norm(&fr, domain, q)?;
            fl.push(l);
            fh.push(l + lq_norm(&gfr, domain, q)?);
            gl.push(lq_norm(&gr, domain, q)?);
        }
        out.f_h1.push(fh);
        out.f_l.push(fl);
        out.g_l.push(gl);
    }
    Ok(out)
}

/// Evaluates both sides of the product bounds for `F`, `G` and their
/// differences on a pair of Lagrangian trajectories with time derivatives.
pub fn estimate_monitor(
    traj1: &TrajectoryRecord,
    traj2: &TrajectoryRecord,
    domain: &DomainSpec,
    params: &ModelParams,
) -> Result<MonitorReport> {
    if traj1.times != traj2.times {
        return Err(Error::MisalignedTimes("monitor trajectories use different time grids".into()));
    }
    let (p, b, sigma) = (params.p(), params.b(), params.sigma);
    let ops = Ops::new(domain)?;
    let times = &traj1.times;
    let t1 = assemble_trajectory(traj1, domain, params, None)?;
    let t2 = assemble_trajectory(traj2, domain, params, None)?;
    let diff = traj1.difference(traj2)?;
    let a1 = Atoms::from_profiles(times, &trajectory_profiles(traj1, domain, sigma)?, p, b)?;
    let a2 = Atoms::from_profiles(times, &trajectory_profiles(traj2, domain, sigma)?, p, b)?;
    let ad = Atoms::from_profiles(times, &trajectory_profiles(&diff, domain, sigma)?, p, b)?;

    let r = params.r();
    let qs = [r, 2.0, 2.0 + sigma, 6.0];
    let single: Vec<_> = t1.iter().map(|t| (t.f.clone(), t.g.clone())).collect();
    let pair: Vec<_> = t1
        .iter()
        .zip(&t2)
        .map(|(x, y)| {
            let f = x.f.iter().zip(&y.f).map(|(a, b)| a - b).collect();
            let g = x.g.iter().zip(&y.g).map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect()).collect();
            (f, g)
        })
        .collect();
    let ns = term_norms(&single, &qs, domain, &ops)?;
    let nd = term_norms(&pair, &qs, domain, &ops)?;
    let tn = |series: &[Vec<f64>], k: usize| -> Result<f64> {
        let v: Vec<f64> = series.iter().map(|s| s[k]).collect();
        weighted_time_norm_values(times, &v, p, b)
    };

    let th0_h1 = |q: usize| a1.theta0_h1[q].max(a2.theta0_h1[q]);
    let th0_l = |q: usize| a1.theta0_l[q].max(a2.theta0_l[q]);
    let (s, two, six) = (QS, Q2, Q6);
    let mut checks = Vec::new();

    // F in H^1_r
    {
        let g = &a1.grad_vel_h1;
        let t = |q: usize| a1.theta0_h1[q] + a1.dt_theta_h1[q];
        let rhs = g[s] * g[two] + t(s) * g[two] + (t(six) * g[s] + t(s) * g[six]) * g[two];
        checks.push(BoundCheck::new("F in L_p(H^1_r)", tn(&ns.f_h1, 0)?, rhs));
    }
    // F difference in L_r
    {
        let (g1, g2, gd, dd) = (&a1.grad_vel_h1, &a2.grad_vel_h1, &ad.grad_vel_h1, &ad.dt_theta_h1);
        let t2 = |q: usize| th0_h1(q) + a2.dt_theta_h1[q];
        let sum = |q: usize| g1[q] + g2[q];
        let rhs = (gd[s] + sum(s) * gd[six]) * g1[two]
            + g2[s] * gd[two]
            + dd[s] * g1[two]
            + t2(s) * gd[two]
            + (dd[six] * g1[s] + dd[s] * g1[six]) * g1[two]
            + (t2(six) * (gd[s] + sum(s) * gd[six]) + t2(s) * (gd[six] + sum(six) * gd[six])) * g1[two]
            + (t2(six) * g2[s] + t2(s) * g2[six]) * gd[two];
        checks.push(BoundCheck::new("F difference in L_p(L_r)", tn(&nd.f_l, 0)?, rhs));
    }
    for (k, q) in [two, s, six].into_iter().enumerate() {
        let label_q = ["2", "2+sigma", "6"][k];
        // F in H^1_q
        {
            let g = &a1.grad_vel_h1;
            let t = |q: usize| a1.theta0_h1[q] + a1.dt_theta_h1[q];
            let rhs = g[q] * g[six] + t(q) * g[six] + t(six) * g[q] + t(q) * g[six] * g[six] + t(six) * g[q] * g[six];
            checks.push(BoundCheck::new(format!("F in L_p(H^1_{label_q})"), tn(&ns.f_h1, k + 1)?, rhs));
        }
        // F difference in H^1_q
        {
            let (g1, g2, gd, dd) = (&a1.grad_vel_h1, &a2.grad_vel_h1, &ad.grad_vel_h1, &ad.dt_theta_h1);
            let t2 = |q: usize| th0_h1(q) + a2.dt_theta_h1[q];
            let sum = |q: usize| g1[q] + g2[q];
            let rhs = (gd[q] + sum(q) * gd[six]) * g1[six]
                + (gd[six] + sum(six) * gd[six]) * g1[q]
                + g2[q] * gd[six]
                + g2[six] * gd[q]
                + dd[q] * g1[six]
                + dd[six] * g1[q]
                + t2(q) * gd[six]
                + t2(six) * gd[q]
                + dd[q] * g1[six] * g1[six]
                + dd[six] * g1[q] * g1[six]
                + t2(q) * (gd[six] + sum(six) * gd[six]) * g1[six]
                + t2(six) * (gd[q] + sum(q) * gd[six]) * g1[six]
                + t2(six) * (gd[six] + sum(six) * gd[six]) * g1[q]
                + t2(q) * g2[six] * gd[six]
                + t2(six) * g2[q] * gd[six]
                + t2(six) * g2[six] * gd[q];
            checks.push(BoundCheck::new(format!("F difference in L_p(H^1_{label_q})"), tn(&nd.f_h1, k + 1)?, rhs));
        }
    }
    // G in L_r
    {
        let t = a1.theta0_l[s] + a1.dt_theta_l[s];
        let rhs = t * (a1.dt_vel_l[two] + a1.grad_theta_l[two])
            + a1.grad_vel_l[s] * (a1.hess_vel_l[two] + a1.grad_theta_l[two]);
        checks.push(BoundCheck::new("G in L_p(L_r)", tn(&ns.g_l, 0)?, rhs));
    }
    // G difference in L_r
    {
        let t2 = th0_l(s) + a2.dt_theta_l[s];
        let rhs = ad.dt_theta_l[s] * a1.dt_vel_l[two]
            + t2 * ad.dt_vel_l[two]
            + ad.grad_vel_l[two] * a1.hess_vel_l[s]
            + a2.grad_vel_l[s] * ad.hess_vel_l[two]
            + ad.grad_vel_l[two] * a1.hess_vel_l[s] * a1.grad_vel_h1[six]
            + ad.hess_vel_l[two] * a1.grad_vel_l[s]
            + a2.hess_vel_l[s] * ad.grad_vel_l[two]
            + ad.dt_theta_l[two] * a1.grad_theta_l[s]
            + ad.grad_vel_l[two] * a1.grad_theta_l[s]
            + a2.grad_vel_l[s] * ad.grad_theta_l[two]
            + t2 * ad.grad_theta_l[two];
        checks.push(BoundCheck::new("G difference in L_p(L_r)", tn(&nd.g_l, 0)?, rhs));
    }
    for (k, q) in [two, s, six].into_iter().enumerate() {
        let label_q = ["2", "2+sigma", "6"][k];
        {
            let t6 = a1.theta0_h1[six] + a1.dt_theta_h1[six];
            let g6 = a1.grad_vel_h1[six];
            let rhs = t6 * (a1.dt_vel_l[q] + a1.grad_theta_l[q]) + g6 * (a1.hess_vel_l[q] + a1.grad_theta_l[q]);
            checks.push(BoundCheck::new(format!("G in L_p(L_{label_q})"), tn(&ns.g_l, k + 1)?, rhs));
        }
        {
            let t26 = th0_h1(six) + a2.dt_theta_h1[six];
            let (g1, g2, gd) = (a1.grad_vel_h1[six], a2.grad_vel_h1[six], ad.grad_vel_h1[six]);
            let dd6 = ad.dt_theta_h1[six];
            let rhs = dd6 * a1.dt_vel_l[q]
                + t26 * ad.dt_vel_l[q]
                + gd * a1.hess_vel_l[q]
                + g2 * ad.hess_vel_l[q]
                + gd * g1 * a1.hess_vel_l[q]
                + ad.hess_vel_l[q] * g1
                + a2.hess_vel_l[q] * gd
                + dd6 * a1.grad_theta_l[q]
                + gd * a1.grad_theta_l[q]
                + g2 * ad.grad_theta_l[q]
                + t26 * ad.grad_theta_l[q];
            checks.push(BoundCheck::new(format!("G difference in L_p(L_{label_q})"), tn(&nd.g_l, k + 1)?, rhs));
        }
    }

    let max_ratio = checks.iter().map(|c| c.ratio).fold(0.0, f64::max);
    let gap = pressure_gap(traj1, params)?.max(pressure_gap(traj2, params)?);
    Ok(MonitorReport {
        checks,
        max_ratio,
        pressure_remainder_gap: gap,
        notes: vec![
            NORM_ORDER_NOTE.to_string(),
            "the initial density of the pair is taken as the larger of the two".to_string(),
        ],
    })
}
