//! Solution scheme: the shifted linear solve, the compensation solve and
//! the Picard iteration of the solution map on the Lagrangian trajectory.
//!
//! Every trajectory lives on the uniform grid `t_n = n T / N`. Forcing is
//! interpolated linearly between nodes and integrated exactly against the
//! (shifted) semigroup.

pub mod euler;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linstokes::{LinearOp, Native};
use crate::model::quadrature::{derivative_fields, lq_norm};
use crate::model::{integrate, DomainSpec, FieldState, Frame, ModelParams, Ops, TrajectoryRecord, Violation};
use crate::nonlinear::monitor::assemble_trajectory;
use crate::nonlinear::NonlinearTerms;
use crate::norms::{energy_et, initial_norm, trajectory_profiles, weighted_time_norm_values};

pub use euler::{chain_rule_error, euler_report, euler_residual, euler_solution, EulerReport, NormComparison};

/// Quadrature of the Duhamel integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuhamelRule {
    /// Linear interpolation of the forcing, integrated exactly per mode.
    #[default]
    Trapezoid,
}

fn default_max_picard() -> usize {
    8
}

fn default_contraction_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default = "default_max_picard")]
    pub max_picard: usize,
    #[serde(default = "default_contraction_tol")]
    pub contraction_tol: f64,
    #[serde(default)]
    pub duhamel_rule: DuhamelRule,
    /// Overrides the operator default `2 max(1, |abscissa|)`.
    #[serde(default)]
    pub lambda1: Option<f64>,
}

impl SchemeConfig {
    pub fn new(t_end: f64, dt: f64) -> Self {
        SchemeConfig {
            t_end,
            dt,
            max_picard: default_max_picard(),
            contraction_tol: default_contraction_tol(),
            duhamel_rule: DuhamelRule::Trapezoid,
            lambda1: None,
        }
    }

    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let key = |k: &str| format!("{prefix}{k}");
        let mut out = Vec::new();
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            out.push(Violation::new(key("t_end"), "horizon must satisfy t_end > 0"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(Violation::new(key("dt"), "time step must satisfy dt > 0"));
        } else if self.t_end > 0.0 && self.dt > self.t_end {
            out.push(Violation::new(key("dt"), "time step must not exceed t_end"));
        }
        if self.max_picard < 1 {
            out.push(Violation::new(key("max_picard"), "at least one Picard iterate is required"));
        }
        if !(self.contraction_tol > 0.0 && self.contraction_tol < 1.0) {
            out.push(Violation::new(key("contraction_tol"), "tolerance must satisfy 0 < tol < 1"));
        }
        if let Some(l) = self.lambda1 {
            if !(l > 0.0 && l.is_finite()) {
                out.push(Violation::new(key("lambda1"), "shift constant must satisfy lambda1 > 0"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations("").into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidParameter { key: v.key, rule: v.rule }),
        }
    }

    /// Number of steps; `dt` is shrunk so the grid ends exactly at `t_end`.
    pub fn steps(&self) -> usize {
        let r = self.t_end / self.dt;
        let n = r.round();
        if (r - n).abs() <= 1e-9 * r.max(1.0) {
            (n as usize).max(1)
        } else {
            r.ceil() as usize
        }
    }

    pub fn step(&self) -> f64 {
        self.t_end / self.steps() as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.steps();
        let h = self.step();
        (0..=n).map(|i| if i == n { self.t_end } else { i as f64 * h }).collect()
    }

    pub fn lambda1_for(&self, op: &LinearOp) -> f64 {
        self.lambda1.unwrap_or_else(|| op.lambda1())
    }
}

/// `y_{n+1}` from `y_n` for `y' = (A - shift) y + s` at every node.
fn duhamel(op: &LinearOp, y0: Native, src: &[Native], h: f64, shift: f64) -> Result<Vec<Native>> {
    let st = op.stepper(h, shift);
    let mut ys = Vec::with_capacity(src.len());
    ys.push(y0);
    for k in 1..src.len() {
        let y = st.step(op, &ys[k - 1], &src[k - 1], &src[k])?;
        ys.push(y);
    }
    Ok(ys)
}

fn derivative(op: &LinearOp, y: &Native, src: &Native, shift: f64) -> Native {
    let mut d = op.apply_native(y);
    if shift != 0.0 {
        d.axpy(-shift, y);
    }
    d.axpy(1.0, src);
    d
}

fn record(op: &LinearOp, times: &[f64], ys: &[Native], dys: &[Native]) -> TrajectoryRecord {
    let states = ys.iter().zip(times).map(|(y, t)| op.from_native(y, Frame::Lagrange, *t)).collect();
    let dt_states = dys.iter().zip(times).map(|(y, t)| op.from_native(y, Frame::Lagrange, *t)).collect();
    TrajectoryRecord { times: times.to_vec(), states, dt_states }
}

fn sources_native(op: &LinearOp, sources: &[NonlinearTerms], n: usize, zero: &Native) -> Result<Vec<Native>> {
    if sources.is_empty() {
        return Ok(vec![zero.clone(); n]);
    }
    if sources.len() != n {
        return Err(Error::MisalignedTimes(format!("{} forcing samples for {} time nodes", sources.len(), n)));
    }
    sources.iter().map(|s| op.source_native(&s.f, &s.g)).collect()
}

fn check_grid(times: &[f64], config: &SchemeConfig) -> Result<()> {
    let grid = config.times();
    let tol = 1e-12 * config.t_end.max(1.0);
    if times.len() != grid.len() || times.iter().zip(&grid).any(|(a, b)| (a - b).abs() > tol) {
        return Err(Error::MisalignedTimes(format!(
            "trajectory has {} nodes ending at {}, scheme grid has {} ending at {}",
            times.len(),
            times.last().copied().unwrap_or(0.0),
            grid.len(),
            config.t_end
        )));
    }
    Ok(())
}

fn check_initial(state0: &FieldState, domain: &DomainSpec) -> Result<()> {
    state0.check_shape(domain)?;
    if state0.frame != Frame::Lagrange {
        return Err(Error::FrameMismatch { expected: Frame::Lagrange, got: state0.frame });
    }
    if state0.time != 0.0 {
        return Err(Error::WrongTime(state0.time));
    }
    Ok(())
}

/// Solves `d_t eta1 + lambda1 eta1 + rho div u1 = F`,
/// `rho (d_t u1 + lambda1 u1) - Div(S(u1) - p' eta1 I) = G`
/// with data `state0`. An empty `sources` slice means zero forcing.
pub fn shifted_solve(
    op: &LinearOp,
    sources: &[NonlinearTerms],
    state0: &FieldState,
    config: &SchemeConfig,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    check_initial(state0, &op.domain)?;
    let times = config.times();
    let lam = config.lambda1_for(op);
    let y0 = op.to_native(state0)?;
    let src = sources_native(op, sources, times.len(), &y0.zeros_like())?;
    let ys = duhamel(op, y0, &src, config.step(), lam)?;
    let dys: Vec<Native> = ys.iter().zip(&src).map(|(y, s)| derivative(op, y, s, lam)).collect();
    Ok(record(op, &times, &ys, &dys))
}

/// Solves the compensation system `y2' = A y2 + lambda1 y1`, `y2(0) = 0`,
/// where `y1` is the output of [`shifted_solve`].
pub fn compensation_solve(op: &LinearOp, traj1: &TrajectoryRecord, config: &SchemeConfig) -> Result<TrajectoryRecord> {
    config.validate()?;
    traj1.validate()?;
    check_grid(&traj1.times, config)?;
    let lam = config.lambda1_for(op);
    let src: Vec<Native> = traj1
        .states
        .iter()
        .map(|s| op.to_native(s).map(|y| y.scaled(lam)))
        .collect::<Result<_>>()?;
    let ys = duhamel(op, src[0].zeros_like(), &src, config.step(), 0.0)?;
    let dys: Vec<Native> = ys.iter().zip(&src).map(|(y, s)| derivative(op, y, s, 0.0)).collect();
    Ok(record(op, &traj1.times, &ys, &dys))
}

/// Both halves of one application of the solution map.
#[derive(Debug, Clone)]
pub struct SplitSolution {
    pub shifted: TrajectoryRecord,
    pub compensation: TrajectoryRecord,
    pub sum: TrajectoryRecord,
}

/// `(eta, u) = (eta1 + eta2, u1 + u2)` for the given forcing.
pub fn split_solve(
    op: &LinearOp,
    sources: &[NonlinearTerms],
    state0: &FieldState,
    config: &SchemeConfig,
) -> Result<SplitSolution> {
    config.validate()?;
    check_initial(state0, &op.domain)?;
    let times = config.times();
    let h = config.step();
    let lam = config.lambda1_for(op);
    let y0 = op.to_native(state0)?;
    let src = sources_native(op, sources, times.len(), &y0.zeros_like())?;
    let y1 = duhamel(op, y0, &src, h, lam)?;
    let dy1: Vec<Native> = y1.iter().zip(&src).map(|(y, s)| derivative(op, y, s, lam)).collect();
    let src2: Vec<Native> = y1.iter().map(|y| y.scaled(lam)).collect();
    let y2 = duhamel(op, y1[0].zeros_like(), &src2, h, 0.0)?;
    let dy2: Vec<Native> = y2.iter().zip(&src2).map(|(y, s)| derivative(op, y, s, 0.0)).collect();
    let sum = |a: &[Native], b: &[Native]| -> Vec<Native> {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let mut z = x.clone();
                z.axpy(1.0, y);
                z
            })
            .collect()
    };
    Ok(SplitSolution {
        shifted: record(op, &times, &y1, &dy1),
        compensation: record(op, &times, &y2, &dy2),
        sum: record(op, &times, &sum(&y1, &y2), &sum(&dy1, &dy2)),
    })
}

/// `sqrt(||theta||_2^2 + ||v||_2^2)`.
pub fn state_l2(s: &FieldState, domain: &DomainSpec) -> Result<f64> {
    let a = lq_norm(&[&s.theta], domain, 2.0)?;
    let vel: Vec<&[f64]> = s.vel.iter().map(|c| c.as_slice()).collect();
    let b = lq_norm(&vel, domain, 2.0)?;
    Ok(a.hypot(b))
}

/// Residual of a discrete evolution equation, sampled at the half steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `max_n ||r_{n+1/2}||_{L_2}`.
    pub max_abs: f64,
    /// `max_abs / max_n ||(y_{n+1} - y_n) / h||_{L_2}`.
    pub max_relative: f64,
    pub series: Vec<f64>,
}

impl ResidualReport {
    pub(crate) fn from_series(series: Vec<f64>, scale: f64) -> Self {
        let max_abs = series.iter().copied().fold(0.0, f64::max);
        let max_relative = if max_abs == 0.0 { 0.0 } else { max_abs / scale };
        ResidualReport { max_abs, max_relative, series }
    }
}

/// Residual of the full Lagrangian system
/// `d_t eta + rho div u = F(eta, u)`, `rho d_t u - Div(S(u) - p' eta I) = G(eta, u)`
/// in the trapezoid form
/// `(y_{n+1} - y_n)/h - [A y_n + A y_{n+1} + s_n + s_{n+1}]/2`,
/// momentum divided by `rho_*`. `F` and `G` are assembled from the
/// trajectory itself.
pub fn lagrangian_residual(op: &LinearOp, traj: &TrajectoryRecord, params: &ModelParams) -> Result<ResidualReport> {
    let terms = assemble_trajectory(traj, &op.domain, params, Some(params.delta_diffeo))?;
    let ys: Vec<Native> = traj.states.iter().map(|s| op.to_native(s)).collect::<Result<_>>()?;
    let ss: Vec<Native> = terms.iter().map(|t| op.source_native(&t.f, &t.g)).collect::<Result<_>>()?;
    let mut series = Vec::with_capacity(ys.len().saturating_sub(1));
    let mut scale: f64 = 0.0;
    for n in 0..ys.len() - 1 {
        let h = traj.times[n + 1] - traj.times[n];
        let mut dy = ys[n + 1].clone();
        dy.axpy(-1.0, &ys[n]);
        let dy = dy.scaled(1.0 / h);
        let mut r = dy.clone();
        r.axpy(-0.5, &derivative(op, &ys[n], &ss[n], 0.0));
        r.axpy(-0.5, &derivative(op, &ys[n + 1], &ss[n + 1], 0.0));
        series.push(state_l2(&op.from_native(&r, Frame::Lagrange, 0.0), &op.domain)?);
        scale = scale.max(state_l2(&op.from_native(&dy, Frame::Lagrange, 0.0), &op.domain)?);
    }
    Ok(ResidualReport::from_series(series, scale))
}

/// Largest deviation of `int eta(t) - int_0^t int F` from `int eta(0)`.
///
/// The linear part conserves the mean density on both domains (periodic box
/// and walls with `u = 0`), so any drift measures the discrete continuity
/// equation against its forcing.
pub fn mass_balance(traj: &TrajectoryRecord, sources: &[NonlinearTerms], domain: &DomainSpec) -> Result<f64> {
    traj.validate()?;
    let flux: Vec<f64> = if sources.is_empty() {
        vec![0.0; traj.len()]
    } else if sources.len() == traj.len() {
        sources.iter().map(|s| integrate(&s.f, domain)).collect::<Result<_>>()?
    } else {
        return Err(Error::MisalignedTimes(format!("{} forcing samples for {} nodes", sources.len(), traj.len())));
    };
    let m0 = integrate(&traj.states[0].theta, domain)?;
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for n in 1..traj.len() {
        acc += 0.5 * (traj.times[n] - traj.times[n - 1]) * (flux[n - 1] + flux[n]);
        let m = integrate(&traj.states[n].theta, domain)?;
        worst = worst.max((m - m0 - acc).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PicardVerdict {
    Converged,
    NotConverged,
    NonContraction,
    Inadmissible,
}

/// Weighted sup of one half against the bracket norm of the other, for
/// both index pairings of the shifted/compensation estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairingCheck {
    pub q: f64,
    /// `sup_t <t>^b ||(eta1, u1)||_{L_q}`.
    pub sup_shifted: f64,
    /// `sup_t <t>^b ||(eta2, u2)||_{L_q}`.
    pub sup_compensation: f64,
    /// Bracket time norm of `(eta1, u1)`.
    pub bracket_shifted: f64,
    /// Bracket time norm of `(eta2, u2)`.
    pub bracket_compensation: f64,
    /// `sup_shifted / bracket_compensation`.
    pub ratio_shifted_by_compensation: f64,
    /// `sup_compensation / bracket_shifted`.
    pub ratio_compensation_by_shifted: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        a / b
    }
}

/// Bracket norm series
/// `||(eta, u)||_{H^{1,0}_r} + sum_q (||(eta, u)||_{H^{1,2}_q} + ||d_t(eta, u)||_{H^{1,0}_q})`.
fn bracket_series(traj: &TrajectoryRecord, domain: &DomainSpec, params: &ModelParams) -> Result<Vec<f64>> {
    let prof = trajectory_profiles(traj, domain, params.sigma)?;
    let ops = Ops::new(domain)?;
    let r = params.r();
    let mut out = Vec::with_capacity(traj.len());
    for (s, p) in traj.states.iter().zip(&prof) {
        let th = [s.theta.as_slice()];
        let (g, _) = derivative_fields(&th, &ops, 1, false)?;
        let gr: Vec<&[f64]> = g.iter().map(|c| c.as_slice()).collect();
        let vel: Vec<&[f64]> = s.vel.iter().map(|c| c.as_slice()).collect();
        let mut v = lq_norm(&th, domain, r)? + lq_norm(&gr, domain, r)? + lq_norm(&vel, domain, r)?;
        for q in 0..3 {
            v += p.theta_h1(q) + p.vel[q] + p.grad_vel_h1(q) + p.dt_theta_h1(q) + p.dt_vel[q];
        }
        out.push(v);
    }
    Ok(out)
}

/// Both pairings of the weighted sup against the bracket norm.
pub fn pairing_checks(split: &SplitSolution, domain: &DomainSpec, params: &ModelParams) -> Result<Vec<PairingCheck>> {
    let (p, b) = (params.p(), params.b());
    let times = &split.shifted.times;
    let e1 = weighted_time_norm_values(times, &bracket_series(&split.shifted, domain, params)?, p, b)?;
    let e2 = weighted_time_norm_values(times, &bracket_series(&split.compensation, domain, params)?, p, b)?;
    let p1 = trajectory_profiles(&split.shifted, domain, params.sigma)?;
    let p2 = trajectory_profiles(&split.compensation, domain, params.sigma)?;
    let mut out = Vec::new();
    for (qi, q) in [2.0, 2.0 + params.sigma, 6.0].into_iter().enumerate() {
        let s1: Vec<f64> = p1.iter().map(|x| x.theta[qi] + x.vel[qi]).collect();
        let s2: Vec<f64> = p2.iter().map(|x| x.theta[qi] + x.vel[qi]).collect();
        let sup1 = weighted_time_norm_values(times, &s1, f64::INFINITY, b)?;
        let sup2 = weighted_time_norm_values(times, &s2, f64::INFINITY, b)?;
        out.push(PairingCheck {
            q,
            sup_shifted: sup1,
            sup_compensation: sup2,
            bracket_shifted: e1,
            bracket_compensation: e2,
            ratio_shifted_by_compensation: ratio(sup1, e2),
            ratio_compensation_by_shifted: ratio(sup2, e1),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardReport {
    pub iterates: usize,
    pub lambda1: f64,
    pub dt: f64,
    pub steps: usize,
    /// `E_T` of the difference of successive iterates (iterate 0 is zero).
    pub difference_energies: Vec<f64>,
    /// Ratios of successive difference energies.
    pub contraction_factors: Vec<f64>,
    /// Residual of the full Lagrangian system at the last accepted iterate.
    pub final_residual: Option<ResidualReport>,
    pub energy_total: f64,
    pub energy_components: BTreeMap<String, f64>,
    /// Surrogate norm of the initial data.
    pub initial_norm: f64,
    /// Whether `initial_norm <= epsilon^2`.
    pub initial_data_small: bool,
    /// Drift of the discrete mass balance of the last iterate.
    pub mass_drift: f64,
    pub pairings: Vec<PairingCheck>,
    pub verdict: PicardVerdict,
    pub rejection: Option<String>,
}

fn is_admissibility_error(e: &Error) -> bool {
    matches!(e, Error::InadmissibleMap { .. } | Error::InadmissibleState(_) | Error::SingularMap(_))
}

fn zero_trajectory(domain: &DomainSpec, times: &[f64]) -> TrajectoryRecord {
    let z = |t: &f64| FieldState::zeros(domain, Frame::Lagrange, *t);
    TrajectoryRecord { times: times.to_vec(), states: times.iter().map(z).collect(), dt_states: times.iter().map(z).collect() }
}

/// Picard iteration of the solution map starting from the zero trajectory.
///
/// Admissibility failures and non-contraction end the iteration with a
/// verdict; the last accepted iterate is returned.
pub fn picard_fixed_point(
    state0: &FieldState,
    domain: &DomainSpec,
    params: &ModelParams,
    config: &SchemeConfig,
) -> Result<(TrajectoryRecord, PicardReport)> {
    params.validate()?;
    config.validate()?;
    check_initial(state0, domain)?;
    let op = LinearOp::new(params, domain)?;
    let lam = config.lambda1_for(&op);
    let times = config.times();
    let init = initial_norm(state0, domain, params)?.total;

    let mut current = zero_trajectory(domain, &times);
    let mut last_split: Option<SplitSolution> = None;
    let mut last_sources: Vec<NonlinearTerms> = Vec::new();
    let mut energies: Vec<f64> = Vec::new();
    let mut factors = Vec::new();
    let mut verdict = PicardVerdict::NotConverged;
    let mut rejection = None;

    if let Err(e) = state0.check_admissible(params.rho_star) {
        verdict = PicardVerdict::Inadmissible;
        rejection = Some(format!("initial data: {e}"));
    }
    let mut k = 0;
    while verdict == PicardVerdict::NotConverged && k < config.max_picard {
        let sources = match assemble_trajectory(&current, domain, params, Some(params.delta_diffeo)) {
            Ok(s) => s,
            Err(e) if is_admissibility_error(&e) => {
                verdict = PicardVerdict::Inadmissible;
                rejection = Some(format!("iterate {k}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        let split = split_solve(&op, &sources, state0, config)?;
        if let Some(e) = split.sum.states.iter().find_map(|s| s.check_admissible(params.rho_star).err()) {
            verdict = PicardVerdict::Inadmissible;
            rejection = Some(format!("iterate {}: {e}", k + 1));
            break;
        }
        let e = energy_et(&split.sum.difference(&current)?, domain, params)?.total;
        k += 1;
        log::debug!("picard iterate {k}: E_T(difference) = {e:e}");
        if let Some(prev) = energies.last() {
            let f = ratio(e, *prev);
            factors.push(f);
            if f >= 1.0 {
                verdict = PicardVerdict::NonContraction;
            }
        }
        energies.push(e);
        current = split.sum.clone();
        last_split = Some(split);
        last_sources = sources;
        if verdict == PicardVerdict::NotConverged && e <= config.contraction_tol * energies[0] {
            verdict = PicardVerdict::Converged;
        }
    }

    let final_residual = match lagrangian_residual(&op, &current, params) {
        Ok(r) => Some(r),
        Err(e) if is_admissibility_error(&e) => None,
        Err(e) => return Err(e),
    };
    let energy = energy_et(&current, domain, params)?;
    let mass_drift = if last_split.is_some() { mass_balance(&current, &last_sources, domain)? } else { 0.0 };
    let pairings = match &last_split {
        Some(s) => pairing_checks(s, domain, params)?,
        None => Vec::new(),
    };
    let report = PicardReport {
        iterates: k,
        lambda1: lam,
        dt: config.step(),
        steps: config.steps(),
        difference_energies: energies,
        contraction_factors: factors,
        final_residual,
        energy_total: energy.total,
        energy_components: energy.components,
        initial_norm: init,
        initial_data_small: init <= params.epsilon * params.epsilon,
        mass_drift,
        pairings,
        verdict,
        rejection,
    };
    Ok((current, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_ends_exactly_at_horizon() {
        let c = SchemeConfig::new(2.0, 0.3);
        assert_eq!(c.steps(), 7);
        assert_eq!(*c.times().last().unwrap(), 2.0);
        let c = SchemeConfig::new(2.0, 0.05);
        assert_eq!(c.steps(), 40);
        assert!((c.step() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn config_rules_name_keys() {
        let mut c = SchemeConfig::new(1.0, 0.1);
        c.max_picard = 0;
        assert_eq!(c.violations("scheme.")[0].key, "scheme.max_picard");
        c.max_picard = 3;
        c.dt = -1.0;
        assert!(matches!(c.validate(), Err(Error::InvalidParameter { key, .. }) if key == "dt"));
    }
}
