//! Eulerian form of a Lagrangian solution and the residual of the original
//! system `d_t rho + div(rho v) = 0`,
//! `rho (d_t v + v.grad v) - Div(mu D(v) + nu div v I - P(rho) I) = 0`.

use serde::Serialize;

use super::{lagrangian_residual, state_l2, ResidualReport};
use crate::error::{Error, Result};
use crate::lagrangian::{norm_change_constant, pullback_to_euler, DisplacementAccumulator, Kinematics};
use crate::linstokes::LinearOp;
use crate::model::quadrature::{derivative_fields, lq_norm};
use crate::model::{DomainSpec, FieldState, Frame, ModelParams, Ops, TrajectoryRecord};

/// `v . grad f` for a scalar (`vector = false`) or each velocity component.
fn advect(ops: &Ops, v: &[Vec<f64>], f: &[Vec<f64>], vector: bool) -> Result<Vec<Vec<f64>>> {
    match ops {
        Ops::Box(b) => {
            if vector {
                let g = b.grad_vec(f)?;
                Ok((0..3)
                    .map(|i| (0..v[0].len()).map(|p| (0..3).map(|j| v[j][p] * g[3 * j + i][p]).sum()).collect())
                    .collect())
            } else {
                let g = b.grad(&f[0])?;
                Ok(vec![(0..v[0].len()).map(|p| (0..3).map(|j| v[j][p] * g[j][p]).sum()).collect()])
            }
        }
        Ops::Radial(r) => {
            if vector {
                let d = r.dr_nodes(&f[0])?;
                Ok(vec![v[0].iter().zip(&d).map(|(a, b)| a * b).collect()])
            } else {
                let g = r.grad(&f[0])?;
                let prod: Vec<f64> = v[0].iter().zip(&g).map(|(a, b)| a * b).collect();
                Ok(vec![r.nodes_to_centers(&prod)?])
            }
        }
    }
}

/// Pulls a Lagrangian trajectory back to the Eulerian frame. When the input
/// carries time derivatives, the Eulerian ones follow from the chain rule
/// `d_t(theta, v)(x) = d_t(eta, u)(X^{-1} x) - (v . grad)(theta, v)(x)`.
pub fn euler_solution(traj: &TrajectoryRecord, domain: &DomainSpec, delta: f64) -> Result<TrajectoryRecord> {
    traj.validate()?;
    if traj.frame() != Some(Frame::Lagrange) {
        return Err(Error::FrameMismatch { expected: Frame::Lagrange, got: traj.states[0].frame });
    }
    let ops = Ops::new(domain)?;
    let mut acc = DisplacementAccumulator::new(domain, Some(delta));
    let mut states = Vec::with_capacity(traj.len());
    let mut dt_states = Vec::new();
    for (n, s) in traj.states.iter().enumerate() {
        let kin = Kinematics::from_state(s, &ops)?;
        let d = acc.push(traj.times[n], kin)?;
        let e = pullback_to_euler(s, d, delta)?;
        if let Some(dl) = traj.dt_states.get(n) {
            // d_t theta(x) = (d_t eta)(X^{-1} x) - v . grad_x theta
            let mut de = pullback_to_euler(dl, d, delta)?;
            let at = advect(&ops, &e.vel, std::slice::from_ref(&e.theta), false)?;
            let av = advect(&ops, &e.vel, &e.vel, true)?;
            de.theta.iter_mut().zip(&at[0]).for_each(|(a, b)| *a -= b);
            for (c, a) in de.vel.iter_mut().zip(&av) {
                c.iter_mut().zip(a).for_each(|(x, y)| *x -= y);
            }
            dt_states.push(de);
        }
        states.push(e);
    }
    Ok(TrajectoryRecord { times: traj.times.clone(), states, dt_states })
}

/// Spatial part `N(s)` of `d_t s + N(s) = 0` at one node, momentum divided
/// by the local density.
fn euler_spatial(ops: &Ops, s: &FieldState, params: &ModelParams) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let rs = params.rho_star;
    let (mu, nu) = (params.mu, params.nu);
    match ops {
        Ops::Box(b) => {
            let rho: Vec<f64> = s.theta.iter().map(|t| rs + t).collect();
            let flux: Vec<Vec<f64>> = s.vel.iter().map(|c| c.iter().zip(&rho).map(|(v, r)| v * r).collect()).collect();
            let nc = b.div(&flux)?;
            let adv = advect(ops, &s.vel, &s.vel, true)?;
            let dv = b.div(&s.vel)?;
            let gdiv = b.grad(&dv)?;
            let gth = b.grad(&s.theta)?;
            let dp: Vec<f64> = rho.iter().map(|r| params.pressure.deriv(*r)).collect::<Result<_>>()?;
            let mut nm = Vec::with_capacity(3);
            for i in 0..3 {
                let lap = b.laplace(&s.vel[i])?;
                nm.push(
                    (0..rho.len())
                        .map(|p| adv[i][p] + (dp[p] * gth[i][p] - mu * lap[p] - (mu + nu) * gdiv[i][p]) / rho[p])
                        .collect(),
                );
            }
            Ok((nc, nm))
        }
        Ops::Radial(r) => {
            let u = &s.vel[0];
            let rho_n: Vec<f64> = r.centers_to_nodes(&s.theta)?.iter().map(|t| rs + t).collect();
            let flux: Vec<f64> = u.iter().zip(&rho_n).map(|(v, p)| v * p).collect();
            let nc = r.div(&flux)?;
            let press: Vec<f64> = s.theta.iter().map(|t| params.pressure.value(rs + t)).collect::<Result<_>>()?;
            let gp = r.grad_interior(&press)?;
            let gdiv = r.grad_interior(&r.div(u)?)?;
            let du = r.dr_nodes(u)?;
            let m = u.len() - 1;
            let nm: Vec<f64> = (0..=m)
                .map(|i| {
                    if i == 0 || i == m {
                        0.0
                    } else {
                        u[i] * du[i] + (gp[i] - (2.0 * mu + nu) * gdiv[i]) / rho_n[i]
                    }
                })
                .collect();
            Ok((nc, vec![nm]))
        }
    }
}

/// Residual of the Eulerian system in the trapezoid form
/// `(s_{n+1} - s_n)/h + [N(s_n) + N(s_{n+1})]/2`, momentum scaled by
/// `rho / rho_*` so it is comparable with the Lagrangian residual.
pub fn euler_residual(traj: &TrajectoryRecord, domain: &DomainSpec, params: &ModelParams) -> Result<ResidualReport> {
    traj.validate()?;
    if traj.frame() != Some(Frame::Euler) {
        return Err(Error::FrameMismatch { expected: Frame::Euler, got: traj.states[0].frame });
    }
    let ops = Ops::new(domain)?;
    let rs = params.rho_star;
    let spatial: Vec<_> = traj.states.iter().map(|s| euler_spatial(&ops, s, params)).collect::<Result<_>>()?;
    let mut series = Vec::new();
    let mut scale: f64 = 0.0;
    for n in 0..traj.len() - 1 {
        let (a, b) = (&traj.states[n], &traj.states[n + 1]);
        let h = traj.times[n + 1] - traj.times[n];
        let dth: Vec<f64> = a.theta.iter().zip(&b.theta).map(|(x, y)| (y - x) / h).collect();
        let dv: Vec<Vec<f64>> =
            a.vel.iter().zip(&b.vel).map(|(x, y)| x.iter().zip(y).map(|(p, q)| (q - p) / h).collect()).collect();
        let rho_mid: Vec<f64> = match &ops {
            Ops::Box(_) => a.theta.iter().zip(&b.theta).map(|(x, y)| rs + 0.5 * (x + y)).collect(),
            Ops::Radial(r) => {
                let mid: Vec<f64> = a.theta.iter().zip(&b.theta).map(|(x, y)| 0.5 * (x + y)).collect();
                r.centers_to_nodes(&mid)?.iter().map(|t| rs + t).collect()
            }
        };
        let (na, nb) = (&spatial[n], &spatial[n + 1]);
        let rc: Vec<f64> = (0..dth.len()).map(|p| dth[p] + 0.5 * (na.0[p] + nb.0[p])).collect();
        let rm: Vec<Vec<f64>> = (0..dv.len())
            .map(|i| {
                (0..dv[i].len())
                    .map(|p| {
                        let v = if matches!(ops, Ops::Radial(_)) && (p == 0 || p + 1 == dv[i].len()) {
                            0.0
                        } else {
                            dv[i][p] + 0.5 * (na.1[i][p] + nb.1[i][p])
                        };
                        v * rho_mid[p] / rs
                    })
                    .collect()
            })
            .collect();
        let r = FieldState { theta: rc, vel: rm, frame: Frame::Euler, time: traj.times[n] };
        series.push(state_l2(&r, domain)?);
        let d = FieldState { theta: dth, vel: dv, frame: Frame::Euler, time: traj.times[n] };
        scale = scale.max(state_l2(&d, domain)?);
    }
    Ok(ResidualReport::from_series(series, scale))
}

/// Relative gap between the chain-rule time derivative of an Eulerian
/// trajectory and the difference quotient of its states:
/// `max_n ||(s_{n+1} - s_n)/h - (d_n + d_{n+1})/2|| / max_n ||d_n||`.
pub fn chain_rule_error(traj: &TrajectoryRecord, domain: &DomainSpec) -> Result<f64> {
    if !traj.has_derivatives() {
        return Err(Error::MissingDerivatives);
    }
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for n in 0..traj.len() {
        scale = scale.max(state_l2(&traj.dt_states[n], domain)?);
        if n + 1 == traj.len() {
            break;
        }
        let h = traj.times[n + 1] - traj.times[n];
        let mut q = traj.states[n + 1].difference(&traj.states[n]);
        q.scale(1.0 / h);
        q.axpy(-0.5, &traj.dt_states[n]);
        q.axpy(-0.5, &traj.dt_states[n + 1]);
        worst = worst.max(state_l2(&q, domain)?);
    }
    Ok(if worst == 0.0 { 0.0 } else { worst / scale })
}

/// Eulerian against Lagrangian norm at the final time with the change of
/// variables bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormComparison {
    pub label: String,
    pub euler: f64,
    pub lagrange: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EulerReport {
    pub lagrangian_residual: ResidualReport,
    pub euler_residual: ResidualReport,
    /// `euler_residual.max_abs / lagrangian_residual.max_abs`.
    pub residual_ratio: f64,
    pub chain_rule_error: f64,
    pub norm_comparisons: Vec<NormComparison>,
}

fn sl(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(|c| c.as_slice()).collect()
}

fn norm_comparisons(
    lag: &FieldState,
    eul: &FieldState,
    domain: &DomainSpec,
    delta: f64,
) -> Result<Vec<NormComparison>> {
    let ops = Ops::new(domain)?;
    let grads = |s: &FieldState| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let (gt, _) = derivative_fields(&[s.theta.as_slice()], &ops, 1, false)?;
        let vel: Vec<&[f64]> = s.vel.iter().map(|c| c.as_slice()).collect();
        let (gv, _) = derivative_fields(&vel, &ops, 1, true)?;
        Ok((gt, gv))
    };
    let (glt, glv) = grads(lag)?;
    let (get, gev) = grads(eul)?;
    let mut out = Vec::new();
    for q in [2.0, 6.0] {
        let c0 = norm_change_constant(delta, q);
        let c1 = c0 / (1.0 - delta);
        let rows = [
            ("theta", lq_norm(&[&eul.theta], domain, q)?, lq_norm(&[&lag.theta], domain, q)?, c0),
            ("v", lq_norm(&sl(&eul.vel), domain, q)?, lq_norm(&sl(&lag.vel), domain, q)?, c0),
            ("grad theta", lq_norm(&sl(&get), domain, q)?, lq_norm(&sl(&glt), domain, q)?, c1),
            ("grad v", lq_norm(&sl(&gev), domain, q)?, lq_norm(&sl(&glv), domain, q)?, c1),
        ];
        for (name, e, l, c) in rows {
            let bound = c * l;
            out.push(NormComparison {
                label: format!("{name} in L_{q}"),
                euler: e,
                lagrange: l,
                bound,
                // quadrature and interpolation error allowance
                holds: e <= bound * (1.0 + 1e-6) + 1e-14,
            });
        }
    }
    Ok(out)
}

/// Eulerian trajectory plus residual and chain-rule diagnostics.
pub fn euler_report(
    traj: &TrajectoryRecord,
    domain: &DomainSpec,
    params: &ModelParams,
) -> Result<(TrajectoryRecord, EulerReport)> {
    let delta = params.delta_diffeo;
    let eul = euler_solution(traj, domain, delta)?;
    let op = LinearOp::new(params, domain)?;
    let lres = lagrangian_residual(&op, traj, params)?;
    let eres = euler_residual(&eul, domain, params)?;
    let chain = if eul.has_derivatives() { chain_rule_error(&eul, domain)? } else { f64::NAN };
    let residual_ratio = if eres.max_abs == 0.0 {
        0.0
    } else if lres.max_abs == 0.0 {
        f64::INFINITY
    } else {
        eres.max_abs / lres.max_abs
    };
    let n = traj.len() - 1;
    let norm_comparisons = norm_comparisons(&traj.states[n], &eul.states[n], domain, delta)?;
    Ok((eul, EulerReport { lagrangian_residual: lres, euler_residual: eres, residual_ratio, chain_rule_error: chain, norm_comparisons }))
}
