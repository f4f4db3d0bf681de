use serde::{Deserialize, Serialize};

use super::domain::DomainSpec;
use crate::error::{Error, Result};

/// Coordinate frame a field is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Euler,
    Lagrange,
}

/// Density perturbation and velocity sampled on a grid.
///
/// On the periodic box `vel` holds three components of `n^3` samples each.
/// On the radial shell it holds the single radial component at the nodes and
/// `theta` lives at the cell centres.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub theta: Vec<f64>,
    pub vel: Vec<Vec<f64>>,
    pub frame: Frame,
    pub time: f64,
}

impl FieldState {
    pub fn zeros(domain: &DomainSpec, frame: Frame, time: f64) -> Self {
        FieldState {
            theta: vec![0.0; domain.scalar_len()],
            vel: vec![vec![0.0; domain.vector_len()]; domain.vel_components()],
            frame,
            time,
        }
    }

    pub fn check_shape(&self, domain: &DomainSpec) -> Result<()> {
        if self.theta.len() != domain.scalar_len() {
            return Err(Error::ShapeMismatch { expected: domain.scalar_len(), got: self.theta.len() });
        }
        if self.vel.len() != domain.vel_components() {
            return Err(Error::ShapeMismatch { expected: domain.vel_components(), got: self.vel.len() });
        }
        for c in &self.vel {
            if c.len() != domain.vector_len() {
                return Err(Error::ShapeMismatch { expected: domain.vector_len(), got: c.len() });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(self.vel.iter().flatten()).all(|v| v.is_finite())
    }

    pub fn sup_theta(&self) -> f64 {
        self.theta.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest pointwise Euclidean velocity magnitude.
    pub fn sup_vel(&self) -> f64 {
        let n = self.vel.first().map_or(0, |c| c.len());
        (0..n)
            .map(|i| self.vel.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Checks `sup |theta| <= rho_* / 2`.
    pub fn check_admissible(&self, rho_star: f64) -> Result<()> {
        let s = self.sup_theta();
        if !self.is_finite() {
            return Err(Error::InadmissibleState("non-finite values".into()));
        }
        if s > 0.5 * rho_star {
            return Err(Error::InadmissibleState(format!(
                "sup |theta| = {s} exceeds rho_*/2 = {}",
                0.5 * rho_star
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn scale(&mut self, a: f64) {
        self.theta.iter_mut().for_each(|v| *v *= a);
        self.vel.iter_mut().flatten().for_each(|v| *v *= a);
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &FieldState) {
        for (x, y) in self.theta.iter_mut().zip(&other.theta) {
            *x += a * y;
        }
        for (cx, cy) in self.vel.iter_mut().zip(&other.vel) {
            for (x, y) in cx.iter_mut().zip(cy) {
                *x += a * y;
            }
        }
    }

    pub fn difference(&self, other: &FieldState) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// All scalar component slices: theta first, then velocity components.
    pub fn components(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.theta];
        out.extend(self.vel.iter().map(|c| c.as_slice()));
        out
    }
}

/// Time-indexed sequence of states and their time derivatives.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<FieldState>,
    pub dt_states: Vec<FieldState>,
}

impl TrajectoryRecord {
    pub fn new(times: Vec<f64>, states: Vec<FieldState>, dt_states: Vec<FieldState>) -> Result<Self> {
        let t = TrajectoryRecord { times, states, dt_states };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn has_derivatives(&self) -> bool {
        !self.is_empty() && self.dt_states.len() == self.times.len()
    }

    pub fn frame(&self) -> Option<Frame> {
        self.states.first().map(|s| s.frame)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::EmptyTrajectory);
        }
        if self.times[0] != 0.0 {
            return Err(Error::MisalignedTimes(format!("first time is {}, expected 0", self.times[0])));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::MisalignedTimes("times must be strictly increasing".into()));
        }
        if self.states.len() != self.times.len() {
            return Err(Error::MisalignedTimes(format!(
                "{} states for {} times",
                self.states.len(),
                self.times.len()
            )));
        }
        if !self.dt_states.is_empty() && self.dt_states.len() != self.times.len() {
            return Err(Error::MisalignedTimes(format!(
                "{} derivative states for {} times",
                self.dt_states.len(),
                self.times.len()
            )));
        }
        Ok(())
    }

    pub fn end_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Pointwise scaled copy of states and derivatives.
    pub fn scaled(&self, a: f64) -> Self {
        TrajectoryRecord {
            times: self.times.clone(),
            states: self.states.iter().map(|s| s.scaled(a)).collect(),
            dt_states: self.dt_states.iter().map(|s| s.scaled(a)).collect(),
        }
    }

    /// Node-wise difference of two trajectories on the same time grid.
    pub fn difference(&self, other: &TrajectoryRecord) -> Result<Self> {
        if self.times != other.times {
            return Err(Error::MisalignedTimes("trajectories use different time grids".into()));
        }
        let states = self.states.iter().zip(&other.states).map(|(a, b)| a.difference(b)).collect();
        let dt_states = if self.has_derivatives() && other.has_derivatives() {
            self.dt_states.iter().zip(&other.dt_states).map(|(a, b)| a.difference(b)).collect()
        } else {
            Vec::new()
        };
        Ok(TrajectoryRecord { times: self.times.clone(), states, dt_states })
    }

    /// Restriction to the first `n` time nodes.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        TrajectoryRecord {
            times: self.times[..n].to_vec(),
            states: self.states[..n].to_vec(),
            dt_states: if self.dt_states.is_empty() { Vec::new() } else { self.dt_states[..n].to_vec() },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_validation() {
        let d = DomainSpec::periodic(1.0, 8);
        let s = FieldState::zeros(&d, Frame::Lagrange, 0.0);
        assert!(TrajectoryRecord::new(vec![0.0, 1.0], vec![s.clone(), s.clone()], vec![]).is_ok());
        assert!(TrajectoryRecord::new(vec![0.0, 0.0], vec![s.clone(), s.clone()], vec![]).is_err());
        assert!(TrajectoryRecord::new(vec![0.5], vec![s.clone()], vec![]).is_err());
        assert!(TrajectoryRecord::new(vec![0.0, 1.0], vec![s.clone()], vec![]).is_err());
        assert!(matches!(TrajectoryRecord::new(vec![], vec![], vec![]), Err(Error::EmptyTrajectory)));
    }

    #[test]
    fn admissibility_threshold() {
        let d = DomainSpec::periodic(1.0, 8);
        let mut s = FieldState::zeros(&d, Frame::Lagrange, 0.0);
        s.theta[3] = 0.5;
        assert!(s.check_admissible(1.0).is_ok());
        s.theta[3] = -0.51;
        assert!(s.check_admissible(1.0).is_err());
    }
}
