//! Linear Stokes dynamics for radial flows `u(r) e_r` on the shell
//! `R0 <= r <= R` with `u = 0` on both walls.
//!
//! For a radial field `mu Lap u + (mu + nu) grad div u = (2 mu + nu) d_r(u' + 2u/r)`,
//! so the system is
//!
//! ```text
//! zeta' = -rho div u
//! u'    = (1/rho) d_r [ (2 mu + nu) div u - p' zeta ]
//! ```
//!
//! discretised on a staggered grid: density at cell centres, velocity at the
//! interior nodes. The flux-form divergence and the node gradient are
//! negative adjoints in the `4 pi r^2` weighted inner products, which makes
//! the discrete energy law and mass conservation exact.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::periodic::Coefficients;
use crate::error::{Error, Result};
use crate::model::RadialOps;

/// Linear Stokes operator on the radial shell.
#[derive(Debug, Clone)]
pub struct RadialOp {
    pub ops: RadialOps,
    pub coef: Coefficients,
}

type C = Complex64;

impl RadialOp {
    pub fn new(ops: RadialOps, coef: Coefficients) -> Self {
        RadialOp { ops, coef }
    }

    /// Number of cell centres (density unknowns).
    pub fn m(&self) -> usize {
        self.ops.centers.len()
    }

    /// Number of interior nodes (velocity unknowns).
    pub fn ni(&self) -> usize {
        self.ops.nodes.len() - 2
    }

    pub fn dim(&self) -> usize {
        self.m() + self.ni()
    }

    /// Packs `(zeta, u)` into the unknown vector, rejecting nonzero wall velocity.
    pub fn pack(&self, zeta: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if zeta.len() != self.m() {
            return Err(Error::ShapeMismatch { expected: self.m(), got: zeta.len() });
        }
        if u.len() != self.ops.nodes.len() {
            return Err(Error::ShapeMismatch { expected: self.ops.nodes.len(), got: u.len() });
        }
        let scale = 1.0 + u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let wall = u[0].abs().max(u[u.len() - 1].abs());
        if wall > 1e-12 * scale {
            return Err(Error::BoundaryViolation(wall));
        }
        let mut y = zeta.to_vec();
        y.extend_from_slice(&u[1..u.len() - 1]);
        Ok(y)
    }

    /// Packs a source `(f, g)`; wall entries of `g` are ignored.
    pub fn pack_source(&self, f: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.m() || g.len() != self.ops.nodes.len() {
            return Err(Error::ShapeMismatch { expected: self.dim(), got: f.len() + g.len() });
        }
        let mut y = f.to_vec();
        y.extend_from_slice(&g[1..g.len() - 1]);
        Ok(y)
    }

    pub fn unpack(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.m();
        let mut u = vec![0.0];
        u.extend_from_slice(&y[m..]);
        u.push(0.0);
        (y[..m].to_vec(), u)
    }

    /// Flux divergence of interior-node velocity, at the centres.
    fn div_int<T>(&self, u: &[T]) -> Vec<T>
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Sub<Output = T> + Default,
    {
        let r = &self.ops.nodes;
        let h = self.ops.h;
        let ni = u.len();
        let at = |i: usize| if i == 0 || i == ni + 1 { T::default() } else { u[i - 1] };
        self.ops
            .centers
            .iter()
            .enumerate()
            .map(|(j, c)| (at(j + 1) * (r[j + 1] * r[j + 1]) - at(j) * (r[j] * r[j])) * (1.0 / (c * c * h)))
            .collect()
    }

    /// Centre-to-interior-node gradient.
    fn grad_int<T>(&self, z: &[T]) -> Vec<T>
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Sub<Output = T>,
    {
        let h = self.ops.h;
        (1..z.len()).map(|i| (z[i] - z[i - 1]) * (1.0 / h)).collect()
    }

    /// `A y`.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let c = self.coef;
        let m = self.m();
        let (z, u) = y.split_at(m);
        let d = self.div_int(u);
        let mut out: Vec<f64> = d.iter().map(|v| -c.rho * v).collect();
        let s: Vec<f64> = d.iter().zip(z).map(|(dv, zz)| (2.0 * c.mu + c.nu) * dv - c.dp * zz).collect();
        out.extend(self.grad_int(&s).into_iter().map(|v| v / c.rho));
        out
    }

    pub fn apply_complex(&self, y: &[C]) -> Vec<C> {
        let c = self.coef;
        let m = self.m();
        let (z, u) = y.split_at(m);
        let d = self.div_int(u);
        let mut out: Vec<C> = d.iter().map(|v| v * -c.rho).collect();
        let s: Vec<C> = d.iter().zip(z).map(|(dv, zz)| dv * (2.0 * c.mu + c.nu) - zz * c.dp).collect();
        out.extend(self.grad_int(&s).into_iter().map(|v| v / c.rho));
        out
    }

    /// Solves `(p I - q A) y = rhs` by eliminating the density and solving a
    /// tridiagonal system for the velocity.
    pub fn solve_pencil(&self, p: C, q: C, rhs: &[C]) -> Result<Vec<C>> {
        let c = self.coef;
        let m = self.m();
        let ni = self.ni();
        if p.norm() < 1e-300 {
            return Err(Error::Spectrum(format!("{p}")));
        }
        let (rz, ru) = rhs.split_at(m);
        let coef = q * ((2.0 * c.mu + c.nu) / c.rho) + q * q * c.dp / p;
        let gz = self.grad_int(rz);
        let b: Vec<C> = ru.iter().zip(&gz).map(|(r, g)| r - g * (q * c.dp / (c.rho * p))).collect();
        // tridiagonal entries of grad div on interior nodes
        let r = &self.ops.nodes;
        let ctr = &self.ops.centers;
        let h2 = self.ops.h * self.ops.h;
        let mut lo = vec![C::default(); ni];
        let mut di = vec![C::default(); ni];
        let mut up = vec![C::default(); ni];
        for k in 0..ni {
            let i = k + 1;
            let gd_lo = r[i - 1] * r[i - 1] / (ctr[i - 1] * ctr[i - 1] * h2);
            let gd_di = -r[i] * r[i] / (ctr[i] * ctr[i] * h2) - r[i] * r[i] / (ctr[i - 1] * ctr[i - 1] * h2);
            let gd_up = r[i + 1] * r[i + 1] / (ctr[i] * ctr[i] * h2);
            lo[k] = -coef * gd_lo;
            di[k] = p - coef * gd_di;
            up[k] = -coef * gd_up;
        }
        let u = thomas(&lo, &di, &up, &b).ok_or_else(|| Error::Spectrum(format!("{p}/{q}")))?;
        let du = self.div_int(&u);
        let mut out: Vec<C> = rz.iter().zip(&du).map(|(r, d)| (r - d * (q * c.rho)) / p).collect();
        out.extend(u);
        Ok(out)
    }

    /// Solves `(lambda - A) y = rhs`.
    pub fn resolvent(&self, lambda: C, rhs: &[C]) -> Result<Vec<C>> {
        self.solve_pencil(lambda, C::new(1.0, 0.0), rhs)
    }

    /// One trapezoid step for `y' = (A - shift) y + f`.
    pub fn trapezoid_step(&self, y: &[f64], h: f64, shift: f64, f0: &[f64], f1: &[f64]) -> Result<Vec<f64>> {
        let a = 0.5 * h;
        let ay = self.apply(y);
        let rhs: Vec<C> = (0..y.len())
            .map(|i| C::new(y[i] + a * (ay[i] - shift * y[i]) + a * (f0[i] + f1[i]), 0.0))
            .collect();
        let sol = self.solve_pencil(C::new(1.0 + a * shift, 0.0), C::new(a, 0.0), &rhs)?;
        Ok(sol.into_iter().map(|v| v.re).collect())
    }

    /// `e^{-shift t} T(t) y` by `ceil(t / dt_max)` trapezoid steps.
    pub fn propagate(&self, y: &[f64], t: f64, shift: f64, dt_max: f64) -> Result<Vec<f64>> {
        if t == 0.0 {
            return Ok(y.to_vec());
        }
        let steps = (t / dt_max).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        let zero = vec![0.0; y.len()];
        let mut cur = y.to_vec();
        for _ in 0..steps {
            cur = self.trapezoid_step(&cur, h, shift, &zero, &zero)?;
        }
        Ok(cur)
    }

    /// Dense matrix of `A`.
    pub fn dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut a = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            let col = self.apply(&e);
            for i in 0..d {
                a[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        a
    }

    /// Largest real part of the spectrum, excluding the single zero eigenvalue
    /// carried by the conserved uniform-density mode.
    pub fn spectral_abscissa(&self) -> f64 {
        let a = self.dense();
        let scale = a.norm();
        let mut ev: Vec<C> = a.complex_eigenvalues().iter().copied().collect();
        ev.sort_by(|x, y| x.norm().partial_cmp(&y.norm()).unwrap());
        if ev.first().is_some_and(|z| z.norm() < 1e-8 * scale) {
            ev.remove(0);
        }
        ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Tridiagonal solve; `None` on a vanishing pivot.
fn thomas(lo: &[C], di: &[C], up: &[C], b: &[C]) -> Option<Vec<C>> {
    let n = di.len();
    let mut c = vec![C::default(); n];
    let mut d = vec![C::default(); n];
    let mut piv = di[0];
    if piv.norm() == 0.0 {
        return None;
    }
    c[0] = up[0] / piv;
    d[0] = b[0] / piv;
    for i in 1..n {
        piv = di[i] - lo[i] * c[i - 1];
        if piv.norm() == 0.0 || !piv.is_finite() {
            return None;
        }
        c[i] = up[i] / piv;
        d[i] = (b[i] - lo[i] * d[i - 1]) / piv;
    }
    let mut x = vec![C::default(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Some(x)
}
