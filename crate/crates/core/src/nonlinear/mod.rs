//! Nonlinear terms of the Lagrangian system.
//!
//! With `rho = rho_* + eta`, `A = I + V0` and `W = A grad u` (the Eulerian
//! velocity gradient), the Lagrangian equations are
//!
//! ```text
//! d_t eta + rho_* div u = F
//! rho_* d_t u - Div S0(u) + p'(rho_*) grad eta = G
//! ```
//!
//! where `S0(u)` is the Stokes stress and
//!
//! ```text
//! F = -rho_* Ddiv - eta (div u + Ddiv)
//! G = -eta d_t u + (Div_x S(W) - Div S0(u))
//!     - (p'(rho) - p'(rho_*)) grad eta - p'(rho) V0 grad eta.
//! ```
//!
//! The viscous difference is split into the part with `k` frozen (`V1`) and
//! the part carrying `d_l k = int d_l grad u ds` (`V2`).

pub mod monitor;

use std::collections::BTreeMap;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lagrangian::{mat_at, DisplacementField, Kinematics};
use crate::model::{lq_norm, DomainSpec, FieldState, ModelParams, Ops};

pub use monitor::{estimate_monitor, MonitorReport};

/// Assembled right-hand sides and per-term magnitudes (`L_2` norms).
#[derive(Debug, Clone, Serialize)]
pub struct NonlinearTerms {
    pub f: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub diagnostics: BTreeMap<String, f64>,
}

fn check_matrix(m: &[Vec<f64>], n: usize) -> Result<()> {
    if m.len() != 9 {
        return Err(Error::ShapeMismatch { expected: 9, got: m.len() });
    }
    if let Some(c) = m.iter().find(|c| c.len() != n) {
        return Err(Error::ShapeMismatch { expected: n, got: c.len() });
    }
    Ok(())
}

/// `sum_ij V0_ij d_j u_i`, with `grad_u[3 j + i] = d_j u_i`.
pub fn d_div(v0: &[Vec<f64>], grad_u: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = v0.first().map_or(0, |c| c.len());
    check_matrix(v0, n)?;
    check_matrix(grad_u, n)?;
    Ok((0..n)
        .into_par_iter()
        .map(|p| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += v0[3 * i + j][p] * grad_u[3 * j + i][p];
                }
            }
            s
        })
        .collect())
}

/// `V0 grad u + (V0 grad u)^T`.
pub fn d_deform(v0: &[Vec<f64>], grad_u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = v0.first().map_or(0, |c| c.len());
    check_matrix(v0, n)?;
    check_matrix(grad_u, n)?;
    let mut out = vec![vec![0.0; n]; 9];
    for p in 0..n {
        let m = mat_at(v0, p) * mat_at(grad_u, p);
        for i in 0..3 {
            for j in i..3 {
                let s = m[(i, j)] + m[(j, i)];
                out[3 * i + j][p] = s;
                out[3 * j + i][p] = s;
            }
        }
    }
    Ok(out)
}

fn check_density(eta: &[f64], rho_star: f64) -> Result<()> {
    let sup = eta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if !(sup <= 0.5 * rho_star) {
        return Err(Error::InadmissibleState(format!("sup |eta| = {sup} exceeds rho_*/2 = {}", 0.5 * rho_star)));
    }
    Ok(())
}

fn l2(comps: &[&[f64]], domain: &DomainSpec) -> f64 {
    lq_norm(comps, domain, 2.0).unwrap_or(f64::NAN)
}

/// Continuity right-hand side `F` (box: at the grid points; radial: at the centres).
pub fn assemble_f(
    eta: &[f64],
    kin: &Kinematics,
    d: &DisplacementField,
    params: &ModelParams,
) -> Result<(Vec<f64>, BTreeMap<String, f64>)> {
    check_density(eta, params.rho_star)?;
    let (grad, v0) = if d.domain.is_periodic() {
        (&kin.grad_u, &d.v0)
    } else {
        (&kin.grad_u_centers, &d.v0_centers)
    };
    if eta.len() != grad[0].len() {
        return Err(Error::ShapeMismatch { expected: grad[0].len(), got: eta.len() });
    }
    let dd = d_div(v0, grad)?;
    let rho = params.rho_star;
    let divu: Vec<f64> = (0..eta.len()).map(|p| grad[0][p] + grad[4][p] + grad[8][p]).collect();
    let lin: Vec<f64> = dd.iter().map(|x| -rho * x).collect();
    let quad: Vec<f64> = (0..eta.len()).map(|p| -eta[p] * (divu[p] + dd[p])).collect();
    let f: Vec<f64> = lin.iter().zip(&quad).map(|(a, b)| a + b).collect();
    let mut diag = BTreeMap::new();
    diag.insert("F.density_times_div_correction".to_string(), l2(&[&lin], &d.domain));
    diag.insert("F.eta_times_euler_div".to_string(), l2(&[&quad], &d.domain));
    Ok((f, diag))
}

/// Momentum right-hand side `G` at every velocity sample (radial wall nodes are zero).
pub fn assemble_g(
    eta: &[f64],
    dt_u: &[Vec<f64>],
    kin: &Kinematics,
    d: &DisplacementField,
    params: &ModelParams,
    ops: &Ops,
) -> Result<(Vec<Vec<f64>>, BTreeMap<String, f64>)> {
    check_density(eta, params.rho_star)?;
    match ops {
        Ops::Box(b) => assemble_g_box(eta, dt_u, kin, d, params, b),
        Ops::Radial(r) => assemble_g_radial(eta, dt_u, kin, d, params, r),
    }
}

/// Pointwise viscous difference split as `(V1 part, V2 part)`.
///
/// `h[l]` is `d_l grad u`, `kl[l]` is `d_l k`.
pub fn viscous_split(
    mu: f64,
    nu: f64,
    a: &Matrix3<f64>,
    g: &Matrix3<f64>,
    h: &[Matrix3<f64>; 3],
    kl: &[Matrix3<f64>; 3],
) -> ([f64; 3], [f64; 3]) {
    let stress_rate = |dw: &Matrix3<f64>| mu * (dw + dw.transpose()) + Matrix3::identity() * (nu * dw.trace());
    // d_l S for the frozen-k part and for the d_l k part
    let mut frozen = [Matrix3::zeros(); 3];
    let mut moving = [Matrix3::zeros(); 3];
    let mut base = [Matrix3::zeros(); 3];
    for l in 0..3 {
        frozen[l] = stress_rate(&(a * h[l]));
        let da = -a * kl[l] * a;
        moving[l] = stress_rate(&(da * g));
        base[l] = stress_rate(&h[l]);
    }
    let mut v1 = [0.0; 3];
    let mut v2 = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            for l in 0..3 {
                v1[i] += a[(j, l)] * frozen[l][(i, j)];
                v2[i] += a[(j, l)] * moving[l][(i, j)];
            }
            v1[i] -= base[j][(i, j)];
        }
    }
    (v1, v2)
}

fn assemble_g_box(
    eta: &[f64],
    dt_u: &[Vec<f64>],
    kin: &Kinematics,
    d: &DisplacementField,
    params: &ModelParams,
    b: &crate::model::BoxOps,
) -> Result<(Vec<Vec<f64>>, BTreeMap<String, f64>)> {
    let n = b.len();
    if eta.len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: eta.len() });
    }
    if dt_u.len() != 3 || dt_u.iter().any(|c| c.len() != n) {
        return Err(Error::ShapeMismatch { expected: 3 * n, got: dt_u.iter().map(|c| c.len()).sum() });
    }
    let grad_eta = b.grad(eta)?;
    let (mu, nu, rho) = (params.mu, params.nu, params.rho_star);
    let dp0 = params.pressure_deriv(rho)?;
    let dps: Vec<f64> = eta.iter().map(|e| params.pressure_deriv(rho + e)).collect::<Result<_>>()?;
    let terms: Vec<[[f64; 3]; 5]> = (0..n)
        .into_par_iter()
        .map(|p| {
            let a = Matrix3::identity() + mat_at(&d.v0, p);
            let g = mat_at(&kin.grad_u, p);
            let sub = |m: &[Vec<f64>], l: usize| Matrix3::from_fn(|i, j| m[9 * l + 3 * i + j][p]);
            let h = [sub(&kin.hess_u, 0), sub(&kin.hess_u, 1), sub(&kin.hess_u, 2)];
            let kl = [sub(&d.grad_k, 0), sub(&d.grad_k, 1), sub(&d.grad_k, 2)];
            let (v1, v2) = viscous_split(mu, nu, &a, &g, &h, &kl);
            let ge = nalgebra::Vector3::new(grad_eta[0][p], grad_eta[1][p], grad_eta[2][p]);
            let v0ge = (a - Matrix3::identity()) * ge;
            let mut inertial = [0.0; 3];
            let mut pdiff = [0.0; 3];
            let mut pv0 = [0.0; 3];
            for i in 0..3 {
                inertial[i] = -eta[p] * dt_u[i][p];
                pdiff[i] = -(dps[p] - dp0) * ge[i];
                pv0[i] = -dps[p] * v0ge[i];
            }
            [inertial, v1, v2, pdiff, pv0]
        })
        .collect();
    let mut g = vec![vec![0.0; n]; 3];
    let names = ["G.inertial", "G.viscous_frozen_k", "G.viscous_k_gradient", "G.pressure_difference", "G.pressure_v0"];
    let mut parts = vec![vec![vec![0.0; n]; 3]; 5];
    for (p, t) in terms.iter().enumerate() {
        for (k, term) in t.iter().enumerate() {
            for i in 0..3 {
                parts[k][i][p] = term[i];
                g[i][p] += term[i];
            }
        }
    }
    let mut diag = BTreeMap::new();
    for (name, part) in names.iter().zip(&parts) {
        let r: Vec<&[f64]> = part.iter().map(|c| c.as_slice()).collect();
        diag.insert(name.to_string(), l2(&r, &d.domain));
    }
    Ok((g, diag))
}

fn assemble_g_radial(
    eta: &[f64],
    dt_u: &[Vec<f64>],
    kin: &Kinematics,
    d: &DisplacementField,
    params: &ModelParams,
    r: &crate::model::RadialOps,
) -> Result<(Vec<Vec<f64>>, BTreeMap<String, f64>)> {
    let n = r.n();
    let m = n - 1;
    if eta.len() != m {
        return Err(Error::ShapeMismatch { expected: m, got: eta.len() });
    }
    if dt_u.len() != 1 || dt_u[0].len() != n {
        return Err(Error::ShapeMismatch { expected: n, got: dt_u.first().map_or(0, |c| c.len()) });
    }
    let u = &kin.vel[0];
    let (mu, nu, rho) = (params.mu, params.nu, params.rho_star);
    let visc = 2.0 * mu + nu;
    let dp0 = params.pressure_deriv(rho)?;
    let divu = r.div(u)?;
    let dd = d_div(&d.v0_centers, &kin.grad_u_centers)?;
    let div_x: Vec<f64> = divu.iter().zip(&dd).map(|(a, b)| a + b).collect();
    let g_divx = r.grad_interior(&div_x)?;
    let g_divu = r.grad_interior(&divu)?;
    let g_eta = r.grad_interior(eta)?;
    let eta_n = r.centers_to_nodes(eta)?;
    let mut parts = vec![vec![0.0; n]; 4];
    for i in 1..n - 1 {
        let a = 1.0 + d.v0[0][i];
        let dps = params.pressure_deriv(rho + eta_n[i])?;
        parts[0][i] = -eta_n[i] * dt_u[0][i];
        parts[1][i] = visc * (a * g_divx[i] - g_divu[i]);
        parts[2][i] = -(dps - dp0) * g_eta[i];
        parts[3][i] = -dps * d.v0[0][i] * g_eta[i];
    }
    let g: Vec<f64> = (0..n).map(|i| parts.iter().map(|p| p[i]).sum()).collect();
    let names = ["G.inertial", "G.viscous", "G.pressure_difference", "G.pressure_v0"];
    let mut diag = BTreeMap::new();
    for (name, part) in names.iter().zip(&parts) {
        diag.insert(name.to_string(), l2(&[part], &d.domain));
    }
    Ok((vec![g], diag))
}

/// Assembles `F` and `G` for a Lagrangian state and its time derivative.
pub fn assemble(
    state: &FieldState,
    dt_state: &FieldState,
    kin: &Kinematics,
    d: &DisplacementField,
    params: &ModelParams,
    ops: &Ops,
) -> Result<NonlinearTerms> {
    let (f, mut diag) = assemble_f(&state.theta, kin, d, params)?;
    let (g, dg) = assemble_g(&state.theta, &dt_state.vel, kin, d, params, ops)?;
    diag.extend(dg);
    if diag.values().any(|v| !v.is_finite()) {
        return Err(Error::InadmissibleState("non-finite nonlinear term".into()));
    }
    Ok(NonlinearTerms { f, g, diagnostics: diag })
}
