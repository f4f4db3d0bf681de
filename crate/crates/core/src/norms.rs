//! Weighted space-time norms, the solution energy `E_T` and the initial-data norm.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::quadrature::derivative_fields;
use crate::model::{lq_norm, DomainSpec, FieldState, ModelParams, Ops, TrajectoryRecord};

/// `<t>^b = (1 + t^2)^{b/2}`.
pub fn time_weight(t: f64, b: f64) -> f64 {
    (1.0 + t * t).powf(0.5 * b)
}

/// `|| <t>^b f ||_{L_p(0, T)}` for samples `values[i] = f(times[i])`,
/// by the trapezoid rule on `(<t>^b f)^p`; `p = inf` gives the weighted maximum.
pub fn weighted_time_norm_values(times: &[f64], values: &[f64], p: f64, b: f64) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    if times.len() != values.len() {
        return Err(Error::MisalignedTimes(format!("{} values for {} times", values.len(), times.len())));
    }
    if !(p >= 1.0) {
        return Err(Error::UnsupportedExponent(p));
    }
    let w: Vec<f64> = times.iter().zip(values).map(|(t, v)| time_weight(*t, b) * v.abs()).collect();
    if p.is_infinite() {
        return Ok(w.iter().fold(0.0, |a, &b| a.max(b)));
    }
    let mut s = 0.0;
    for i in 1..times.len() {
        s += 0.5 * (times[i] - times[i - 1]) * (w[i].powf(p) + w[i - 1].powf(p));
    }
    Ok(s.powf(1.0 / p))
}

/// Which part of a trajectory a norm measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quantity {
    Theta,
    Vel,
    /// `theta` and `v` together (sum of the two norms).
    State,
    DtTheta,
    DtVel,
    DtState,
}

/// Spatial norm applied at each time node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaceNorm {
    pub quantity: Quantity,
    /// Derivative order measured: `||grad^order f||_{L_q}`.
    pub derivative: usize,
    /// `true`: Sobolev norm summing orders `0..=derivative`.
    pub sobolev: bool,
    pub q: f64,
}

impl SpaceNorm {
    pub fn lq(quantity: Quantity, q: f64) -> Self {
        SpaceNorm { quantity, derivative: 0, sobolev: false, q }
    }
}

fn field_parts<'a>(s: &'a FieldState, which: Quantity) -> Vec<(Vec<&'a [f64]>, bool)> {
    let th = (vec![s.theta.as_slice()], false);
    let v = (s.vel.iter().map(|c| c.as_slice()).collect(), true);
    match which {
        Quantity::Theta | Quantity::DtTheta => vec![th],
        Quantity::Vel | Quantity::DtVel => vec![v],
        Quantity::State | Quantity::DtState => vec![th, v],
    }
}

/// Spatial norm of one state.
pub fn space_norm(s: &FieldState, dt: Option<&FieldState>, spec: &SpaceNorm, domain: &DomainSpec) -> Result<f64> {
    let src = match spec.quantity {
        Quantity::Theta | Quantity::Vel | Quantity::State => s,
        _ => dt.ok_or(Error::MissingDerivatives)?,
    };
    let ops = Ops::new(domain)?;
    let mut total = 0.0;
    for (comps, vector) in field_parts(src, spec.quantity) {
        let orders: Vec<usize> = if spec.sobolev { (0..=spec.derivative).collect() } else { vec![spec.derivative] };
        let (g, h) = if spec.derivative > 0 {
            derivative_fields(&comps, &ops, spec.derivative, vector)?
        } else {
            (Vec::new(), Vec::new())
        };
        for o in orders {
            total += match o {
                0 => lq_norm(&comps, domain, spec.q)?,
                1 => lq_norm(&refs(&g), domain, spec.q)?,
                2 => lq_norm(&refs(&h), domain, spec.q)?,
                _ => return Err(Error::OutOfRange(format!("derivative order {o} > 2"))),
            };
        }
    }
    Ok(total)
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(|c| c.as_slice()).collect()
}

/// `|| <t>^b ||f(t)||_X ||_{L_p(0, T)}` over a trajectory.
pub fn weighted_time_norm(traj: &TrajectoryRecord, domain: &DomainSpec, spec: &SpaceNorm, p: f64, b: f64) -> Result<f64> {
    traj.validate()?;
    let needs_dt = matches!(spec.quantity, Quantity::DtTheta | Quantity::DtVel | Quantity::DtState);
    if needs_dt && !traj.has_derivatives() {
        return Err(Error::MissingDerivatives);
    }
    let values = (0..traj.len())
        .map(|i| space_norm(&traj.states[i], traj.dt_states.get(i), spec, domain))
        .collect::<Result<Vec<_>>>()?;
    weighted_time_norm_values(&traj.times, &values, p, b)
}

/// Index of the exponents `2, 2 + sigma, 6` in [`SpaceProfile`] arrays.
pub const Q2: usize = 0;
pub const QS: usize = 1;
pub const Q6: usize = 2;

/// Spatial `L_q` norms of a state and its derivatives at one time node,
/// for `q = 2, 2 + sigma, 6`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SpaceProfile {
    pub qs: [f64; 3],
    pub theta: [f64; 3],
    pub grad_theta: [f64; 3],
    pub vel: [f64; 3],
    pub grad_vel: [f64; 3],
    pub hess_vel: [f64; 3],
    pub dt_theta: [f64; 3],
    pub dt_grad_theta: [f64; 3],
    pub dt_vel: [f64; 3],
    pub dt_grad_vel: [f64; 3],
    pub has_dt: bool,
}

impl SpaceProfile {
    pub fn new(s: &FieldState, dt: Option<&FieldState>, ops: &Ops, domain: &DomainSpec, sigma: f64) -> Result<Self> {
        let qs = [2.0, 2.0 + sigma, 6.0];
        let norms = |comps: &[&[f64]]| -> Result<[f64; 3]> {
            let v: Vec<f64> = qs.par_iter().map(|&q| lq_norm(comps, domain, q)).collect::<Result<_>>()?;
            Ok([v[0], v[1], v[2]])
        };
        let th = [s.theta.as_slice()];
        let vel = refs(&s.vel);
        let (gth, _) = derivative_fields(&th, ops, 1, false)?;
        let (gv, hv) = derivative_fields(&vel, ops, 2, true)?;
        let mut p = SpaceProfile {
            qs,
            theta: norms(&th)?,
            grad_theta: norms(&refs(&gth))?,
            vel: norms(&vel)?,
            grad_vel: norms(&refs(&gv))?,
            hess_vel: norms(&refs(&hv))?,
            ..Default::default()
        };
        if let Some(d) = dt {
            let dth = [d.theta.as_slice()];
            let dv = refs(&d.vel);
            let (gdth, _) = derivative_fields(&dth, ops, 1, false)?;
            let (gdv, _) = derivative_fields(&dv, ops, 1, true)?;
            p.dt_theta = norms(&dth)?;
            p.dt_grad_theta = norms(&refs(&gdth))?;
            p.dt_vel = norms(&dv)?;
            p.dt_grad_vel = norms(&refs(&gdv))?;
            p.has_dt = true;
        }
        Ok(p)
    }

    /// `||theta||_{H^1_q}`.
    pub fn theta_h1(&self, q: usize) -> f64 {
        self.theta[q] + self.grad_theta[q]
    }

    /// `||grad v||_{H^1_q}`.
    pub fn grad_vel_h1(&self, q: usize) -> f64 {
        self.grad_vel[q] + self.hess_vel[q]
    }

    /// `||d_t theta||_{H^1_q}`.
    pub fn dt_theta_h1(&self, q: usize) -> f64 {
        self.dt_theta[q] + self.dt_grad_theta[q]
    }
}

/// Profiles of every node of a trajectory.
pub fn trajectory_profiles(traj: &TrajectoryRecord, domain: &DomainSpec, sigma: f64) -> Result<Vec<SpaceProfile>> {
    traj.validate()?;
    let ops = Ops::new(domain)?;
    (0..traj.len())
        .map(|i| SpaceProfile::new(&traj.states[i], traj.dt_states.get(i), &ops, domain, sigma))
        .collect()
}

/// Whether the energy is below the smallness threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smallness {
    Small,
    NotSmall,
}

/// Components of `E_T` and their sum.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub components: BTreeMap<String, f64>,
    pub total: f64,
    pub verdict: Smallness,
    pub p: f64,
    pub b: f64,
    /// Largest ratio `||f||_{2+sigma} / (||f||_2 + ||f||_6)` over the
    /// gradient quantities and nodes.
    pub interpolation_constant: f64,
}

pub const SUP_STATE: &str = "sup_state_L2_L6";
pub const GRAD_STATE: &str = "grad_state_H01_2_2sigma";
pub const STATE_H6: &str = "state_H12_6";
pub const DT_STATE: &str = "dt_state_L2_L6";
pub const DT_GRAD_2: &str = "dt_grad_L2";
pub const DT_GRAD_6: &str = "dt_grad_L6";

/// `E_T` from precomputed node profiles.
pub fn energy_from_profiles(times: &[f64], prof: &[SpaceProfile], params: &ModelParams) -> Result<EnergyReport> {
    if prof.iter().any(|p| !p.has_dt) {
        return Err(Error::MissingDerivatives);
    }
    let (p, b) = (params.p(), params.b());
    let series = |f: &dyn Fn(&SpaceProfile) -> f64| -> Vec<f64> { prof.iter().map(f).collect() };
    let mut c = BTreeMap::new();
    let sup = series(&|s| s.theta[Q2] + s.vel[Q2] + s.theta[Q6] + s.vel[Q6]);
    c.insert(SUP_STATE.to_string(), weighted_time_norm_values(times, &sup, f64::INFINITY, b)?);
    let grad = series(&|s| [Q2, QS].iter().map(|&q| s.grad_theta[q] + s.grad_vel[q] + s.hess_vel[q]).sum());
    c.insert(GRAD_STATE.to_string(), weighted_time_norm_values(times, &grad, p, b)?);
    let h6 = series(&|s| s.theta_h1(Q6) + s.vel[Q6] + s.grad_vel[Q6] + s.hess_vel[Q6]);
    c.insert(STATE_H6.to_string(), weighted_time_norm_values(times, &h6, p, b)?);
    let dts = series(&|s| s.dt_theta[Q2] + s.dt_vel[Q2] + s.dt_theta[Q6] + s.dt_vel[Q6]);
    c.insert(DT_STATE.to_string(), weighted_time_norm_values(times, &dts, p, b)?);
    let dg2 = series(&|s| s.dt_grad_theta[Q2] + s.dt_grad_vel[Q2]);
    c.insert(DT_GRAD_2.to_string(), weighted_time_norm_values(times, &dg2, p, b)?);
    let dg6 = series(&|s| s.dt_grad_theta[Q6] + s.dt_grad_vel[Q6]);
    c.insert(DT_GRAD_6.to_string(), weighted_time_norm_values(times, &dg6, p, b)?);
    let total = c.values().sum();
    let mut interp: f64 = 0.0;
    for s in prof {
        for arr in [&s.grad_theta, &s.grad_vel, &s.hess_vel] {
            let den = arr[Q2] + arr[Q6];
            if den > 0.0 {
                interp = interp.max(arr[QS] / den);
            }
        }
    }
    Ok(EnergyReport {
        components: c,
        total,
        verdict: if total <= params.epsilon { Smallness::Small } else { Smallness::NotSmall },
        p,
        b,
        interpolation_constant: interp,
    })
}

/// `E_T` of a Lagrangian trajectory with time derivatives.
pub fn energy_et(traj: &TrajectoryRecord, domain: &DomainSpec, params: &ModelParams) -> Result<EnergyReport> {
    if !traj.has_derivatives() {
        return Err(Error::MissingDerivatives);
    }
    let prof = trajectory_profiles(traj, domain, params.sigma)?;
    energy_from_profiles(&traj.times, &prof, params)
}

/// Norms of the initial data entering the smallness condition.
#[derive(Debug, Clone, Serialize)]
pub struct InitialDataNorm {
    /// `||theta_0||_{H^1_q}` keyed by `q` (`r`, `2`, `2+sigma`, `6`).
    pub theta_h1: BTreeMap<String, f64>,
    /// Velocity norms keyed by `q` (`2`, `2+sigma`, `6`), Besov surrogate.
    pub velocity: BTreeMap<String, f64>,
    /// `||theta_0||_{H^1_r} + ||v_0||_{L_r}`.
    pub lr_pair: f64,
    pub total: f64,
    pub r: f64,
    pub velocity_norm_kind: String,
}

pub const BESOV_SURROGATE: &str = "surrogate ||v0||_{L_q}^{1/p} ||v0||_{H^2_q}^{1-1/p} for the Besov norm";

fn q_key(q: f64) -> String {
    format!("{q}")
}

/// Initial-data norm with the multiplicative surrogate for the Besov part.
pub fn initial_norm(state0: &FieldState, domain: &DomainSpec, params: &ModelParams) -> Result<InitialDataNorm> {
    if state0.time != 0.0 {
        return Err(Error::WrongTime(state0.time));
    }
    state0.check_shape(domain)?;
    let ops = Ops::new(domain)?;
    let sigma = params.sigma;
    let r = params.r();
    let p = params.p();
    let th = [state0.theta.as_slice()];
    let vel = refs(&state0.vel);
    let (gth, _) = derivative_fields(&th, &ops, 1, false)?;
    let (gv, hv) = derivative_fields(&vel, &ops, 2, true)?;
    let mut theta_h1 = BTreeMap::new();
    let mut velocity = BTreeMap::new();
    let mut total = 0.0;
    for q in [r, 2.0, 2.0 + sigma, 6.0] {
        let v = lq_norm(&th, domain, q)? + lq_norm(&refs(&gth), domain, q)?;
        theta_h1.insert(q_key(q), v);
        if q != r {
            total += v;
        }
    }
    for q in [2.0, 2.0 + sigma, 6.0] {
        let lq = lq_norm(&vel, domain, q)?;
        let h2 = lq + lq_norm(&refs(&gv), domain, q)? + lq_norm(&refs(&hv), domain, q)?;
        let v = if lq == 0.0 { 0.0 } else { lq.powf(1.0 / p) * h2.powf(1.0 - 1.0 / p) };
        velocity.insert(q_key(q), v);
        total += v;
    }
    let lr_pair = theta_h1[&q_key(r)] + lq_norm(&vel, domain, r)?;
    total += lr_pair;
    Ok(InitialDataNorm { theta_h1, velocity, lr_pair, total, r, velocity_norm_kind: BESOV_SURROGATE.to_string() })
}
