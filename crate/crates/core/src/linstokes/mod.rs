//! Linearised compressible Stokes operator
//! `A(zeta, w) = (-rho div w, (1/rho)[Div(mu D(w) + nu div w I) - p' grad zeta])`,
//! its resolvent, the semigroup `T(t) = e^{tA}` and the shifted semigroup
//! `e^{-lambda1 t} T(t)`.

pub mod periodic;
pub mod radial;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::quadrature::weights;
use crate::model::{BoxOps, DomainSpec, FieldState, Frame, ModelParams, RadialOps};
pub use periodic::{Coefficients, PeriodicOp, PeriodicStepper, Spectrum};
pub use radial::RadialOp;

/// Domain-specific operator.
#[derive(Debug, Clone)]
pub enum OpKind {
    Periodic(PeriodicOp),
    Radial(RadialOp),
}

/// State in the operator's native representation: Fourier coefficients on
/// the box, packed staggered unknowns on the radial shell.
#[derive(Debug, Clone, PartialEq)]
pub enum Native {
    Spec(Spectrum),
    Radial(Vec<f64>),
}

impl Native {
    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Native) {
        match (self, other) {
            (Native::Spec(x), Native::Spec(y)) => {
                for (cx, cy) in x.iter_mut().zip(y) {
                    cx.iter_mut().zip(cy).for_each(|(p, q)| *p += q * a);
                }
            }
            (Native::Radial(x), Native::Radial(y)) => x.iter_mut().zip(y).for_each(|(p, q)| *p += a * q),
            _ => panic!("mixed native representations"),
        }
    }

    pub fn scaled(&self, a: f64) -> Native {
        match self {
            Native::Spec(x) => Native::Spec(x.iter().map(|c| c.iter().map(|v| v * a).collect()).collect()),
            Native::Radial(x) => Native::Radial(x.iter().map(|v| v * a).collect()),
        }
    }

    pub fn zeros_like(&self) -> Native {
        self.scaled(0.0)
    }
}

/// Linear Stokes operator on a domain.
#[derive(Debug, Clone)]
pub struct LinearOp {
    pub params: ModelParams,
    pub domain: DomainSpec,
    pub kind: OpKind,
    /// Largest trapezoid step used by radial semigroup evaluation.
    pub radial_dt_max: f64,
}

impl LinearOp {
    pub fn new(params: &ModelParams, domain: &DomainSpec) -> Result<Self> {
        params.validate()?;
        domain.validate()?;
        let coef = Coefficients::from_params(params)?;
        let kind = match domain {
            DomainSpec::PeriodicBox { .. } => OpKind::Periodic(PeriodicOp::new(BoxOps::new(domain)?, coef)),
            DomainSpec::RadialShell { .. } => OpKind::Radial(RadialOp::new(RadialOps::new(domain)?, coef)),
        };
        Ok(LinearOp { params: params.clone(), domain: *domain, kind, radial_dt_max: 1e-3 })
    }

    pub fn coefficients(&self) -> Coefficients {
        match &self.kind {
            OpKind::Periodic(p) => p.coef,
            OpKind::Radial(r) => r.coef,
        }
    }

    pub fn to_native(&self, s: &FieldState) -> Result<Native> {
        s.check_shape(&self.domain)?;
        match &self.kind {
            OpKind::Periodic(p) => Ok(Native::Spec(p.to_spectrum(&s.theta, &s.vel)?)),
            OpKind::Radial(r) => Ok(Native::Radial(r.pack(&s.theta, &s.vel[0])?)),
        }
    }

    pub fn from_native(&self, y: &Native, frame: Frame, time: f64) -> FieldState {
        match (&self.kind, y) {
            (OpKind::Periodic(p), Native::Spec(s)) => {
                let (theta, vel) = p.from_spectrum(s);
                FieldState { theta, vel, frame, time }
            }
            (OpKind::Radial(r), Native::Radial(v)) => {
                let (theta, u) = r.unpack(v);
                FieldState { theta, vel: vec![u], frame, time }
            }
            _ => panic!("native representation does not match the operator"),
        }
    }

    /// Native form of the forcing `(f, g / rho_*)`.
    pub fn source_native(&self, f: &[f64], g: &[Vec<f64>]) -> Result<Native> {
        let rho = self.params.rho_star;
        let gs: Vec<Vec<f64>> = g.iter().map(|c| c.iter().map(|v| v / rho).collect()).collect();
        match &self.kind {
            OpKind::Periodic(p) => Ok(Native::Spec(p.to_spectrum(f, &gs)?)),
            OpKind::Radial(r) => {
                if gs.len() != 1 {
                    return Err(Error::ShapeMismatch { expected: 1, got: gs.len() });
                }
                Ok(Native::Radial(r.pack_source(f, &gs[0])?))
            }
        }
    }

    pub fn apply_native(&self, y: &Native) -> Native {
        match (&self.kind, y) {
            (OpKind::Periodic(p), Native::Spec(s)) => Native::Spec(p.apply(s)),
            (OpKind::Radial(r), Native::Radial(v)) => Native::Radial(r.apply(v)),
            _ => panic!("native representation does not match the operator"),
        }
    }

    /// `A` applied to a physical state.
    pub fn apply(&self, s: &FieldState) -> Result<FieldState> {
        let y = self.to_native(s)?;
        Ok(self.from_native(&self.apply_native(&y), s.frame, s.time))
    }

    fn propagate_native(&self, y: &Native, t: f64, shift: f64) -> Result<Native> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        match (&self.kind, y) {
            (OpKind::Periodic(p), Native::Spec(s)) => Ok(Native::Spec(p.propagate(s, t, shift))),
            (OpKind::Radial(r), Native::Radial(v)) => Ok(Native::Radial(r.propagate(v, t, shift, self.radial_dt_max)?)),
            _ => panic!("native representation does not match the operator"),
        }
    }

    /// `T(t) state0`: exact per-mode exponentials on the box, trapezoid
    /// stepping with `radial_dt_max` control on the shell.
    pub fn semigroup_apply(&self, t: f64, state0: &FieldState) -> Result<FieldState> {
        self.shifted_semigroup_apply(0.0, t, state0)
    }

    /// `e^{-lambda1 t} T(t) state0`.
    pub fn shifted_semigroup_apply(&self, lambda1: f64, t: f64, state0: &FieldState) -> Result<FieldState> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        let y = self.to_native(state0)?;
        let out = self.propagate_native(&y, t, lambda1)?;
        Ok(self.from_native(&out, state0.frame, state0.time + t))
    }

    /// `T(t) state0` by `steps` implicit-trapezoid steps (both domains).
    pub fn semigroup_trapezoid(&self, t: f64, steps: usize, state0: &FieldState) -> Result<FieldState> {
        if t < 0.0 {
            return Err(Error::NegativeTime(t));
        }
        let h = t / steps.max(1) as f64;
        let y = self.to_native(state0)?;
        let out = match (&self.kind, y) {
            (OpKind::Periodic(p), Native::Spec(mut s)) => {
                for _ in 0..steps {
                    s = p.trapezoid_step(&s, h);
                }
                Native::Spec(s)
            }
            (OpKind::Radial(r), Native::Radial(mut v)) => {
                let zero = vec![0.0; v.len()];
                for _ in 0..steps {
                    v = r.trapezoid_step(&v, h, 0.0, &zero, &zero)?;
                }
                Native::Radial(v)
            }
            _ => unreachable!(),
        };
        Ok(self.from_native(&out, state0.frame, state0.time + t))
    }

    /// Solves `lambda zeta + rho div w = f`,
    /// `rho lambda w - Div(mu D(w) + nu div w I - p' zeta I) = g`.
    ///
    /// Returns complex physical fields `(zeta, w)`.
    pub fn resolvent_solve(
        &self,
        lambda: Complex64,
        f: &[f64],
        g: &[Vec<f64>],
    ) -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
        let rhs = self.source_native(f, g)?;
        match (&self.kind, rhs) {
            (OpKind::Periodic(p), Native::Spec(s)) => {
                let mut sol = p.resolvent(lambda, &s)?;
                for c in sol.iter_mut() {
                    p.ops.inverse_complex(c);
                }
                let zeta = sol.remove(0);
                Ok((zeta, sol))
            }
            (OpKind::Radial(r), Native::Radial(v)) => {
                let cv: Vec<Complex64> = v.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
                let sol = r.resolvent(lambda, &cv)?;
                let m = r.m();
                let mut u = vec![Complex64::new(0.0, 0.0)];
                u.extend_from_slice(&sol[m..]);
                u.push(Complex64::new(0.0, 0.0));
                Ok((sol[..m].to_vec(), vec![u]))
            }
            _ => unreachable!(),
        }
    }

    /// Max-norm residual of the resolvent equations for a candidate solution,
    /// evaluated with physical-space operators (divergence and gradient of the
    /// assembled stress), independent of the per-mode solve.
    pub fn resolvent_residual(
        &self,
        lambda: Complex64,
        zeta: &[Complex64],
        w: &[Vec<Complex64>],
        f: &[f64],
        g: &[Vec<f64>],
    ) -> Result<f64> {
        let c = self.coefficients();
        let re = |v: &[Complex64]| v.iter().map(|z| z.re).collect::<Vec<f64>>();
        let im = |v: &[Complex64]| v.iter().map(|z| z.im).collect::<Vec<f64>>();
        // split into real and imaginary parts; the operator is real
        let parts = [
            (re(zeta), w.iter().map(|x| re(x)).collect::<Vec<_>>()),
            (im(zeta), w.iter().map(|x| im(x)).collect::<Vec<_>>()),
        ];
        let mut div_w = Vec::new();
        let mut force = Vec::new();
        for (z, ww) in &parts {
            match &self.kind {
                OpKind::Periodic(p) => {
                    let ops = &p.ops;
                    let gw = ops.grad_vec(ww)?;
                    let dv: Vec<f64> = (0..z.len()).map(|i| gw[0][i] + gw[4][i] + gw[8][i]).collect();
                    // stress S_ij = mu (d_i w_j + d_j w_i) + (nu div w - p' zeta) delta_ij
                    let mut fr = vec![vec![0.0; z.len()]; 3];
                    for i in 0..3 {
                        for j in 0..3 {
                            let sij: Vec<f64> = (0..z.len())
                                .map(|k| {
                                    let iso = if i == j { c.nu * dv[k] - c.dp * z[k] } else { 0.0 };
                                    c.mu * (gw[3 * i + j][k] + gw[3 * j + i][k]) + iso
                                })
                                .collect();
                            let d = ops.deriv(&sij, j)?;
                            fr[i].iter_mut().zip(d).for_each(|(a, b)| *a += b);
                        }
                    }
                    div_w.push(dv);
                    force.push(fr);
                }
                OpKind::Radial(r) => {
                    div_w.push(r.ops.div(&ww[0])?);
                    force.push(vec![r.ops.stokes_force(c.mu, c.nu, c.dp, z, &ww[0])?]);
                }
            }
        }
        let mut worst: f64 = 0.0;
        for k in 0..zeta.len() {
            let dv = Complex64::new(div_w[0][k], div_w[1][k]);
            worst = worst.max((lambda * zeta[k] + c.rho * dv - f[k]).norm());
        }
        let interior = |k: usize, len: usize| self.domain.is_periodic() || (k > 0 && k + 1 < len);
        for (i, wi) in w.iter().enumerate() {
            for k in 0..wi.len() {
                if !interior(k, wi.len()) {
                    continue;
                }
                let fk = Complex64::new(force[0][i][k], force[1][i][k]);
                worst = worst.max((c.rho * lambda * wi[k] - fk - g[i][k]).norm());
            }
        }
        Ok(worst)
    }

    /// Largest real part of the spectrum (the conserved mean/mass modes
    /// contribute zero on the box and are excluded on the shell).
    pub fn spectral_abscissa(&self) -> f64 {
        match &self.kind {
            OpKind::Periodic(p) => p.spectral_abscissa(),
            OpKind::Radial(r) => r.spectral_abscissa(),
        }
    }

    /// `lambda1` from the parameters, or `2 max(1, |abscissa|)`.
    pub fn lambda1(&self) -> f64 {
        self.params.lambda1.unwrap_or_else(|| default_lambda1(self.spectral_abscissa()))
    }

    /// `E = 1/2 int (rho |w|^2 + (p'/rho) zeta^2)`.
    pub fn energy(&self, s: &FieldState) -> Result<f64> {
        let c = self.coefficients();
        let wz = weights(&self.domain, s.theta.len())?;
        let mut e: f64 = s.theta.iter().zip(&wz).map(|(z, w)| c.dp / c.rho * z * z * w).sum();
        for comp in &s.vel {
            let wv = weights(&self.domain, comp.len())?;
            e += comp.iter().zip(&wv).map(|(v, w)| c.rho * v * v * w).sum::<f64>();
        }
        Ok(0.5 * e)
    }

    /// Stepper for `y' = (A - shift) y + f` with step `h`.
    pub fn stepper(&self, h: f64, shift: f64) -> Stepper {
        match &self.kind {
            OpKind::Periodic(p) => Stepper::Periodic(p.duhamel_stepper(h, shift)),
            OpKind::Radial(_) => Stepper::Radial { h, shift },
        }
    }
}

/// `2 max(1, |abscissa|)`.
pub fn default_lambda1(abscissa: f64) -> f64 {
    2.0 * abscissa.abs().max(1.0)
}

/// One-step map for the forced linear system.
#[derive(Debug, Clone)]
pub enum Stepper {
    Periodic(PeriodicStepper),
    Radial { h: f64, shift: f64 },
}

impl Stepper {
    pub fn step(&self, op: &LinearOp, y: &Native, f0: &Native, f1: &Native) -> Result<Native> {
        match (self, &op.kind, y, f0, f1) {
            (Stepper::Periodic(st), OpKind::Periodic(p), Native::Spec(y), Native::Spec(a), Native::Spec(b)) => {
                Ok(Native::Spec(st.step(p, y, a, b)))
            }
            (Stepper::Radial { h, shift }, OpKind::Radial(r), Native::Radial(y), Native::Radial(a), Native::Radial(b)) => {
                Ok(Native::Radial(r.trapezoid_step(y, *h, *shift, a, b)?))
            }
            _ => Err(Error::Unsupported("stepper does not match the operator".into())),
        }
    }
}
