//! Lagrange map `x = y + int_0^t u(y, s) ds`, its Jacobian `I + k`, the
//! correction `V0(k) = (I + k)^{-1} - I`, admissibility checks and
//! conversion of fields between the Lagrangian and Eulerian frames.
//!
//! Matrix fields are stored as nine components with index `3 i + j`, and
//! `(grad u)_{ij} = d_i u_j`. With this convention `d/dx_i = sum_j (I + V0)_{ij} d/dy_j`.
//! On the radial shell every matrix is the spherical-frame diagonal
//! `diag(rr, tt, pp)` (off-diagonal components stay zero).

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{DomainSpec, FieldState, Frame, Ops, TrajectoryRecord};

/// Velocity derivatives at one time node.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub vel: Vec<Vec<f64>>,
    /// `d_i u_j` (box) or `diag(u', u/r, u/r)` at the nodes (radial).
    pub grad_u: Vec<Vec<f64>>,
    /// Box: 27 components `d_l d_i u_j` at index `9 l + 3 i + j`.
    /// Radial: nine components holding `d_r` of the diagonal gradient.
    pub hess_u: Vec<Vec<f64>>,
    /// Radial only: gradient diagonal evaluated at the cell centres.
    pub grad_u_centers: Vec<Vec<f64>>,
    /// `sup_x |grad u|` (Frobenius).
    pub sup_grad: f64,
}

impl Kinematics {
    pub fn from_state(state: &FieldState, ops: &Ops) -> Result<Self> {
        match ops {
            Ops::Box(b) => {
                let spec: Vec<_> = state.vel.iter().map(|c| b.forward(c)).collect::<Result<_>>()?;
                let grad_u = b.grad_vec_spec(&spec)?;
                let hess_u = b.hess_vec_spec(&spec)?;
                let sup_grad = sup_frobenius(&grad_u);
                Ok(Kinematics { vel: state.vel.clone(), grad_u, hess_u, grad_u_centers: Vec::new(), sup_grad })
            }
            Ops::Radial(r) => {
                let u = &state.vel[0];
                let n = u.len();
                let [du, ur] = r.grad_vec(u)?;
                let d2 = r.drr_nodes(u)?;
                let dur: Vec<f64> = du.iter().zip(&ur).zip(&r.nodes).map(|((d, q), rr)| (d - q) / rr).collect();
                let grad_u = diag9(n, &du, &ur);
                let hess_u = diag9(n, &d2, &dur);
                let m = r.centers.len();
                let duc: Vec<f64> = (0..m).map(|i| (u[i + 1] - u[i]) / r.h).collect();
                let urc: Vec<f64> = (0..m).map(|i| 0.5 * (u[i] + u[i + 1]) / r.centers[i]).collect();
                let grad_u_centers = diag9(m, &duc, &urc);
                let sup_grad = sup_frobenius(&grad_u).max(sup_frobenius(&grad_u_centers));
                Ok(Kinematics { vel: state.vel.clone(), grad_u, hess_u, grad_u_centers, sup_grad })
            }
        }
    }
}

fn diag9(n: usize, rr: &[f64], tt: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n]; 9];
    out[0] = rr.to_vec();
    out[4] = tt.to_vec();
    out[8] = tt.to_vec();
    out
}

/// Largest pointwise Frobenius norm of a 9-component matrix field.
pub fn sup_frobenius(m: &[Vec<f64>]) -> f64 {
    let n = m.first().map_or(0, |c| c.len());
    (0..n)
        .into_par_iter()
        .map(|p| m.iter().map(|c| c[p] * c[p]).sum::<f64>().sqrt())
        .reduce(|| 0.0, f64::max)
}

pub fn mat_at(m: &[Vec<f64>], p: usize) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[3 * i + j][p])
}

fn store(m: &mut [Vec<f64>], p: usize, v: &Matrix3<f64>) {
    for i in 0..3 {
        for j in 0..3 {
            m[3 * i + j][p] = v[(i, j)];
        }
    }
}

/// `V0(k) = (I + k)^{-1} - I` at a point; `None` when `I + k` is singular.
pub fn v0_of(k: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    (Matrix3::identity() + k).try_inverse().map(|inv| inv - Matrix3::identity())
}

/// Accumulated displacement and the derived geometry at one time.
#[derive(Debug, Clone)]
pub struct DisplacementField {
    pub domain: DomainSpec,
    pub time: f64,
    /// `int_0^t u ds` (three components on the box, radial component otherwise).
    pub disp: Vec<Vec<f64>>,
    /// `k = int_0^t grad u ds`.
    pub k: Vec<Vec<f64>>,
    /// `int_0^t grad^2 u ds`, laid out like `Kinematics::hess_u`.
    pub grad_k: Vec<Vec<f64>>,
    /// Radial only: `k` at the cell centres.
    pub k_centers: Vec<Vec<f64>>,
    pub jac: Vec<Vec<f64>>,
    pub v0: Vec<Vec<f64>>,
    /// Radial only: `V0` at the cell centres.
    pub v0_centers: Vec<Vec<f64>>,
    /// `int_0^t sup_x |grad u| ds`.
    pub grad_integral: f64,
}

impl DisplacementField {
    pub fn zeros(domain: &DomainSpec) -> Self {
        let nv = domain.vector_len();
        let (nh, nc) = if domain.is_periodic() { (27, 0) } else { (9, domain.scalar_len()) };
        let id = |n: usize| {
            let mut m = vec![vec![0.0; n]; 9];
            for d in [0, 4, 8] {
                m[d] = vec![1.0; n];
            }
            m
        };
        DisplacementField {
            domain: *domain,
            time: 0.0,
            disp: vec![vec![0.0; nv]; domain.vel_components()],
            k: vec![vec![0.0; nv]; 9],
            grad_k: vec![vec![0.0; nv]; nh],
            k_centers: if nc > 0 { vec![vec![0.0; nc]; 9] } else { Vec::new() },
            jac: id(nv),
            v0: vec![vec![0.0; nv]; 9],
            v0_centers: if nc > 0 { vec![vec![0.0; nc]; 9] } else { Vec::new() },
            grad_integral: 0.0,
        }
    }

    /// Builds the geometry from a given `k` field (box layout), with zero
    /// displacement and `grad k`. Used to probe `V0` directly.
    pub fn from_k(domain: &DomainSpec, k: Vec<Vec<f64>>) -> Result<Self> {
        let mut d = DisplacementField::zeros(domain);
        d.k = k;
        d.refresh()?;
        Ok(d)
    }

    pub fn sup_k(&self) -> f64 {
        sup_frobenius(&self.k).max(sup_frobenius(&self.k_centers))
    }

    /// Recomputes `jac` and `V0` from `k`.
    pub fn refresh(&mut self) -> Result<()> {
        let sup = self.sup_k();
        if !(sup < 1.0) {
            return Err(Error::SingularMap(sup));
        }
        let n = self.k[0].len();
        let (jac, v0) = invert_field(&self.k, n)?;
        self.jac = jac;
        self.v0 = v0;
        if !self.k_centers.is_empty() {
            let m = self.k_centers[0].len();
            self.v0_centers = invert_field(&self.k_centers, m)?.1;
        }
        Ok(())
    }

    /// Smallest and largest `det(I + k)`.
    pub fn det_range(&self) -> (f64, f64) {
        let n = self.jac[0].len();
        (0..n)
            .map(|p| mat_at(&self.jac, p).determinant())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
    }

    /// Checks `int sup |grad u| < delta`.
    pub fn check_admissible(&self, delta: f64) -> Result<()> {
        if self.grad_integral >= delta {
            return Err(Error::InadmissibleMap { integral: self.grad_integral, delta });
        }
        Ok(())
    }

    /// Largest `|(I + k)(I + V0) - I|` over the grid.
    pub fn inverse_defect(&self) -> f64 {
        let n = self.k[0].len();
        (0..n)
            .map(|p| {
                let e = mat_at(&self.jac, p) * (Matrix3::identity() + mat_at(&self.v0, p)) - Matrix3::identity();
                e.abs().max()
            })
            .fold(0.0, f64::max)
    }
}

fn invert_field(k: &[Vec<f64>], n: usize) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let res: Vec<Option<(Matrix3<f64>, Matrix3<f64>)>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let kp = mat_at(k, p);
            v0_of(&kp).map(|v| (Matrix3::identity() + kp, v))
        })
        .collect();
    let mut jac = vec![vec![0.0; n]; 9];
    let mut v0 = vec![vec![0.0; n]; 9];
    for (p, r) in res.into_iter().enumerate() {
        let (j, v) = r.ok_or(Error::SingularMap(f64::INFINITY))?;
        store(&mut jac, p, &j);
        store(&mut v0, p, &v);
    }
    Ok((jac, v0))
}

/// Trapezoid accumulation of the Lagrange map over time nodes.
#[derive(Debug, Clone)]
pub struct DisplacementAccumulator {
    field: DisplacementField,
    prev: Option<(f64, Kinematics)>,
    delta: Option<f64>,
}

impl DisplacementAccumulator {
    /// `delta = None` skips the admissibility check.
    pub fn new(domain: &DomainSpec, delta: Option<f64>) -> Self {
        DisplacementAccumulator { field: DisplacementField::zeros(domain), prev: None, delta }
    }

    pub fn field(&self) -> &DisplacementField {
        &self.field
    }

    /// Adds the node at time `t` (the first call must be at `t = 0`).
    pub fn push(&mut self, t: f64, kin: Kinematics) -> Result<&DisplacementField> {
        if let Some((t0, prev)) = &self.prev {
            let h = t - t0;
            if !(h > 0.0) {
                return Err(Error::MisalignedTimes(format!("node {t} does not follow {t0}")));
            }
            let f = &mut self.field;
            let half = 0.5 * h;
            let add = |acc: &mut [Vec<f64>], a: &[Vec<f64>], b: &[Vec<f64>]| {
                for ((c, x), y) in acc.iter_mut().zip(a).zip(b) {
                    c.par_iter_mut().zip(x.par_iter().zip(y)).for_each(|(s, (p, q))| *s += half * (p + q));
                }
            };
            add(&mut f.disp, &prev.vel, &kin.vel);
            add(&mut f.k, &prev.grad_u, &kin.grad_u);
            add(&mut f.grad_k, &prev.hess_u, &kin.hess_u);
            if !f.k_centers.is_empty() {
                add(&mut f.k_centers, &prev.grad_u_centers, &kin.grad_u_centers);
            }
            f.grad_integral += half * (prev.sup_grad + kin.sup_grad);
            f.time = t;
            f.refresh()?;
        } else if t != 0.0 {
            return Err(Error::WrongTime(t));
        }
        if let Some(delta) = self.delta {
            self.field.check_admissible(delta)?;
        }
        self.prev = Some((t, kin));
        Ok(&self.field)
    }
}

/// Accumulates the map over a whole Lagrangian trajectory.
pub fn accumulate_displacement(traj: &TrajectoryRecord, domain: &DomainSpec, delta: Option<f64>) -> Result<DisplacementField> {
    traj.validate()?;
    let ops = Ops::new(domain)?;
    let mut acc = DisplacementAccumulator::new(domain, delta);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        if s.frame != Frame::Lagrange {
            return Err(Error::FrameMismatch { expected: Frame::Lagrange, got: s.frame });
        }
        acc.push(*t, Kinematics::from_state(s, &ops)?)?;
    }
    Ok(acc.field)
}

/// Result of the sampled injectivity test.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct InjectivityVerdict {
    /// `min |x1 - x2| / |y1 - y2|` over the sampled pairs.
    pub worst_ratio: f64,
    /// `1 - int sup |grad u| dt`.
    pub bound: f64,
    pub holds: bool,
    pub samples: usize,
}

/// Samples point pairs and checks `|x1 - x2| >= (1 - int |grad u|_inf) |y1 - y2|`.
pub fn check_injectivity(d: &DisplacementField, samples: usize, seed: u64) -> InjectivityVerdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = 1.0 - d.grad_integral;
    let mut worst = f64::INFINITY;
    match d.domain {
        DomainSpec::PeriodicBox { n, .. } => {
            let h = d.domain.spacing();
            let span = (n / 4).max(1) as i64;
            for _ in 0..samples {
                let a = [rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n)];
                let off = loop {
                    let o = [
                        rng.random_range(-span..=span),
                        rng.random_range(-span..=span),
                        rng.random_range(-span..=span),
                    ];
                    if o != [0, 0, 0] {
                        break o;
                    }
                };
                let b: Vec<usize> = (0..3).map(|i| (a[i] as i64 + off[i]).rem_euclid(n as i64) as usize).collect();
                let ia = (a[0] * n + a[1]) * n + a[2];
                let ib = (b[0] * n + b[1]) * n + b[2];
                let mut dy2 = 0.0;
                let mut dx2 = 0.0;
                for c in 0..3 {
                    let dy = off[c] as f64 * h;
                    let dx = dy + d.disp[c][ib] - d.disp[c][ia];
                    dy2 += dy * dy;
                    dx2 += dx * dx;
                }
                worst = worst.min((dx2 / dy2).sqrt());
            }
        }
        DomainSpec::RadialShell { inner, outer, .. } => {
            let nodes = d.domain.radial_nodes();
            let dr = |r: f64| linear_interp(&nodes, &d.disp[0], r);
            for _ in 0..samples {
                let pt = |rng: &mut ChaCha8Rng| {
                    let r = rng.random_range(inner..outer);
                    let z: f64 = rng.random_range(-1.0..1.0);
                    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let s = (1.0 - z * z).sqrt();
                    (r, [s * phi.cos(), s * phi.sin(), z])
                };
                let (r1, w1) = pt(&mut rng);
                let (r2, w2) = pt(&mut rng);
                let (x1, x2) = (r1 + dr(r1), r2 + dr(r2));
                let dy: f64 = (0..3).map(|i| (r1 * w1[i] - r2 * w2[i]).powi(2)).sum::<f64>().sqrt();
                let dx: f64 = (0..3).map(|i| (x1 * w1[i] - x2 * w2[i]).powi(2)).sum::<f64>().sqrt();
                if dy > 1e-12 {
                    worst = worst.min(dx / dy);
                }
            }
        }
    }
    if !worst.is_finite() {
        worst = 1.0;
    }
    InjectivityVerdict { worst_ratio: worst, bound, holds: worst >= bound - 1e-12, samples }
}

/// Piecewise-linear interpolation on an increasing grid (clamped at the ends).
pub fn linear_interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let h = xs[1] - xs[0];
    let i = (((x - xs[0]) / h).floor() as usize).min(n - 2);
    let t = (x - xs[i]) / h;
    ys[i] * (1.0 - t) + ys[i + 1] * t
}

/// Four-point Lagrange stencil on a periodic axis.
fn cubic_axis(x: f64, h: f64, n: usize) -> ([usize; 4], [f64; 4]) {
    let s = x / h;
    let base = s.floor();
    let t = s - base;
    let b = base as i64 - 1;
    let idx = [0, 1, 2, 3].map(|o| (b + o).rem_euclid(n as i64) as usize);
    // nodes at t = -1, 0, 1, 2
    let w = [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ];
    (idx, w)
}

/// Tensor-product cubic interpolation stencil at a point of the periodic box.
#[derive(Debug, Clone, Copy)]
pub struct CubicStencil {
    idx: [[usize; 4]; 3],
    w: [[f64; 4]; 3],
    n: usize,
}

impl CubicStencil {
    pub fn new(p: [f64; 3], h: f64, n: usize) -> Self {
        let (i0, w0) = cubic_axis(p[0], h, n);
        let (i1, w1) = cubic_axis(p[1], h, n);
        let (i2, w2) = cubic_axis(p[2], h, n);
        CubicStencil { idx: [i0, i1, i2], w: [w0, w1, w2], n }
    }

    pub fn eval(&self, f: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let base = (self.idx[0][a] * n + self.idx[1][b]) * n;
                let wab = self.w[0][a] * self.w[1][b];
                for c in 0..4 {
                    s += wab * self.w[2][c] * f[base + self.idx[2][c]];
                }
            }
        }
        s
    }
}

const PULLBACK_TOL: f64 = 1e-10;
const PULLBACK_ITERS: usize = 50;

/// Lagrangian point `y = X_t(x)` of each Eulerian grid point, by the
/// fixed point `y <- x - disp(y)`.
fn inverse_points_box(d: &DisplacementField) -> Result<Vec<[f64; 3]>> {
    let (n, h) = match d.domain {
        DomainSpec::PeriodicBox { n, .. } => (n, d.domain.spacing()),
        DomainSpec::RadialShell { .. } => unreachable!(),
    };
    let pts: Vec<Option<[f64; 3]>> = (0..n * n * n)
        .into_par_iter()
        .map(|idx| {
            let x = d.domain.box_point(idx);
            let mut y = x;
            for _ in 0..PULLBACK_ITERS {
                let st = CubicStencil::new(y, h, n);
                let ny = [x[0] - st.eval(&d.disp[0]), x[1] - st.eval(&d.disp[1]), x[2] - st.eval(&d.disp[2])];
                let diff = (0..3).map(|i| (ny[i] - y[i]).abs()).fold(0.0, f64::max);
                y = ny;
                if diff < PULLBACK_TOL {
                    return Some(y);
                }
            }
            None
        })
        .collect();
    pts.into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::InadmissibleState("inverse Lagrange map did not converge".into()))
}

fn inverse_radius(nodes: &[f64], disp: &[f64], x: f64) -> Result<f64> {
    let mut y = x;
    for _ in 0..PULLBACK_ITERS {
        let ny = x - linear_interp(nodes, disp, y);
        if (ny - y).abs() < PULLBACK_TOL {
            return Ok(ny);
        }
        y = ny;
    }
    Err(Error::InadmissibleState("inverse Lagrange map did not converge".into()))
}

fn check_map(d: &DisplacementField, delta: f64) -> Result<()> {
    if d.sup_k() >= 1.0 {
        return Err(Error::SingularMap(d.sup_k()));
    }
    d.check_admissible(delta)
}

/// Eulerian fields `theta(x) = eta(X_t(x))`, `v(x) = u(X_t(x))` on the same grid.
///
/// Interpolation is tensor cubic on the box and linear on the radial shell.
pub fn pullback_to_euler(state: &FieldState, d: &DisplacementField, delta: f64) -> Result<FieldState> {
    if state.frame != Frame::Lagrange {
        return Err(Error::FrameMismatch { expected: Frame::Lagrange, got: state.frame });
    }
    state.check_shape(&d.domain)?;
    check_map(d, delta)?;
    match d.domain {
        DomainSpec::PeriodicBox { n, .. } => {
            let h = d.domain.spacing();
            let ys = inverse_points_box(d)?;
            let sample = |f: &[f64]| -> Vec<f64> { ys.par_iter().map(|&y| CubicStencil::new(y, h, n).eval(f)).collect() };
            Ok(FieldState {
                theta: sample(&state.theta),
                vel: state.vel.iter().map(|c| sample(c)).collect(),
                frame: Frame::Euler,
                time: state.time,
            })
        }
        DomainSpec::RadialShell { .. } => {
            let nodes = d.domain.radial_nodes();
            let centers = d.domain.radial_centers();
            let disp = &d.disp[0];
            let theta = centers
                .iter()
                .map(|&x| inverse_radius(&nodes, disp, x).map(|y| linear_interp(&centers, &state.theta, y)))
                .collect::<Result<Vec<_>>>()?;
            let u = nodes
                .iter()
                .map(|&x| inverse_radius(&nodes, disp, x).map(|y| linear_interp(&nodes, &state.vel[0], y)))
                .collect::<Result<Vec<_>>>()?;
            Ok(FieldState { theta, vel: vec![u], frame: Frame::Euler, time: state.time })
        }
    }
}

/// Lagrangian fields `eta(y) = theta(y + disp(y))`, `u(y) = v(y + disp(y))`.
pub fn pushforward_to_lagrange(state: &FieldState, d: &DisplacementField, delta: f64) -> Result<FieldState> {
    if state.frame != Frame::Euler {
        return Err(Error::FrameMismatch { expected: Frame::Euler, got: state.frame });
    }
    state.check_shape(&d.domain)?;
    check_map(d, delta)?;
    match d.domain {
        DomainSpec::PeriodicBox { n, .. } => {
            let h = d.domain.spacing();
            let xs: Vec<[f64; 3]> = (0..n * n * n)
                .into_par_iter()
                .map(|idx| {
                    let y = d.domain.box_point(idx);
                    [y[0] + d.disp[0][idx], y[1] + d.disp[1][idx], y[2] + d.disp[2][idx]]
                })
                .collect();
            let sample = |f: &[f64]| -> Vec<f64> { xs.par_iter().map(|&x| CubicStencil::new(x, h, n).eval(f)).collect() };
            Ok(FieldState {
                theta: sample(&state.theta),
                vel: state.vel.iter().map(|c| sample(c)).collect(),
                frame: Frame::Lagrange,
                time: state.time,
            })
        }
        DomainSpec::RadialShell { .. } => {
            let nodes = d.domain.radial_nodes();
            let centers = d.domain.radial_centers();
            let disp = &d.disp[0];
            let theta = centers
                .iter()
                .map(|&y| linear_interp(&centers, &state.theta, y + linear_interp(&nodes, disp, y)))
                .collect();
            let u = nodes
                .iter()
                .zip(disp)
                .map(|(&y, &dd)| linear_interp(&nodes, &state.vel[0], y + dd))
                .collect();
            Ok(FieldState { theta, vel: vec![u], frame: Frame::Lagrange, time: state.time })
        }
    }
}

/// Constant `(1 - delta)^{-3/q}` of the `L_q` norm change under the map.
pub fn norm_change_constant(delta: f64, q: f64) -> f64 {
    (1.0 - delta).powf(-3.0 / q)
}

/// Eulerian gradient `grad_x f = (I + V0) grad_y f` of a Lagrangian scalar.
pub fn euler_gradient(grad_y: &[Vec<f64>], d: &DisplacementField) -> Vec<Vec<f64>> {
    let n = grad_y[0].len();
    let mut out = vec![vec![0.0; n]; 3];
    for p in 0..n {
        for i in 0..3 {
            let mut s = grad_y[i][p];
            for j in 0..3 {
                s += d.v0[3 * i + j][p] * grad_y[j][p];
            }
            out[i][p] = s;
        }
    }
    out
}
