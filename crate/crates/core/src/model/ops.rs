//! Discrete differential operators.
//!
//! Periodic box: Fourier differentiation with the Nyquist mode removed from
//! every first-derivative symbol, so `div grad == laplace` holds exactly.
//! Radial shell: staggered second-order differences, velocity at nodes and
//! density at cell centres.

use num_complex::Complex64;
use rayon::prelude::*;

use super::domain::DomainSpec;
use super::fft::{signed_index, Fft3};
use crate::error::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Fourier operators on the periodic box.
#[derive(Debug, Clone)]
pub struct BoxOps {
    n: usize,
    length: f64,
    fft: Fft3,
    /// Physical derivative wavenumber for each FFT index along one axis.
    k1: Vec<f64>,
}

impl BoxOps {
    pub fn new(domain: &DomainSpec) -> Result<Self> {
        match *domain {
            DomainSpec::PeriodicBox { length, n } => {
                let dk = std::f64::consts::TAU / length;
                let k1 = (0..n).map(|m| dk * signed_index(m, n) as f64).collect();
                Ok(BoxOps { n, length, fft: Fft3::new(n), k1 })
            }
            DomainSpec::RadialShell { .. } => Err(Error::Unsupported("Fourier operators need a periodic box".into())),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn domain(&self) -> DomainSpec {
        DomainSpec::PeriodicBox { length: self.length, n: self.n }
    }

    /// Derivative wavevector of flat spectral index `idx`.
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        [self.k1[idx / (n * n)], self.k1[(idx / n) % n], self.k1[idx % n]]
    }

    /// Integer wavenumber triple of `idx` with the Nyquist entries zeroed.
    pub fn mode_index(&self, idx: usize) -> [i64; 3] {
        let n = self.n;
        [signed_index(idx / (n * n), n), signed_index((idx / n) % n, n), signed_index(idx % n, n)]
    }

    /// Unit of wavenumber `2 pi / L`.
    pub fn dk(&self) -> f64 {
        std::f64::consts::TAU / self.length
    }

    pub fn forward(&self, f: &[f64]) -> Result<Vec<Complex64>> {
        self.check(f.len())?;
        Ok(self.fft.forward_real(f))
    }

    pub fn forward_complex(&self, f: &mut [Complex64]) {
        self.fft.forward(f);
    }

    /// Normalised inverse transform in place, keeping complex values.
    pub fn inverse_complex(&self, s: &mut [Complex64]) {
        self.fft.inverse(s);
    }

    pub fn inverse(&self, s: Vec<Complex64>) -> Vec<f64> {
        self.fft.inverse_real(s)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::ShapeMismatch { expected: self.len(), got: len });
        }
        Ok(())
    }

    /// Multiplies a spectrum by `i k_axis`.
    pub fn deriv_spec(&self, s: &[Complex64], axis: usize) -> Vec<Complex64> {
        s.par_iter()
            .enumerate()
            .map(|(idx, &v)| v * I * self.wavevector(idx)[axis])
            .collect()
    }

    /// Multiplies a spectrum by `-k_a k_b`.
    pub fn deriv2_spec(&self, s: &[Complex64], a: usize, b: usize) -> Vec<Complex64> {
        s.par_iter()
            .enumerate()
            .map(|(idx, &v)| {
                let k = self.wavevector(idx);
                -v * k[a] * k[b]
            })
            .collect()
    }

    pub fn deriv(&self, f: &[f64], axis: usize) -> Result<Vec<f64>> {
        let s = self.forward(f)?;
        Ok(self.inverse(self.deriv_spec(&s, axis)))
    }

    pub fn grad(&self, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        let s = self.forward(f)?;
        Ok((0..3).map(|a| self.inverse(self.deriv_spec(&s, a))).collect())
    }

    pub fn div(&self, v: &[Vec<f64>]) -> Result<Vec<f64>> {
        if v.len() != 3 {
            return Err(Error::ShapeMismatch { expected: 3, got: v.len() });
        }
        let mut acc = vec![Complex64::new(0.0, 0.0); self.len()];
        for (a, c) in v.iter().enumerate() {
            let d = self.deriv_spec(&self.forward(c)?, a);
            acc.iter_mut().zip(d).for_each(|(x, y)| *x += y);
        }
        Ok(self.inverse(acc))
    }

    pub fn laplace(&self, f: &[f64]) -> Result<Vec<f64>> {
        let s = self.forward(f)?;
        let out = s
            .par_iter()
            .enumerate()
            .map(|(idx, &v)| {
                let k = self.wavevector(idx);
                -v * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2])
            })
            .collect();
        Ok(self.inverse(out))
    }

    /// Velocity gradient, component `3 i + j` holding `d_i u_j`.
    pub fn grad_vec(&self, u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let spec: Vec<Vec<Complex64>> = u.iter().map(|c| self.forward(c)).collect::<Result<_>>()?;
        self.grad_vec_spec(&spec)
    }

    pub fn grad_vec_spec(&self, spec: &[Vec<Complex64>]) -> Result<Vec<Vec<f64>>> {
        if spec.len() != 3 {
            return Err(Error::ShapeMismatch { expected: 3, got: spec.len() });
        }
        let mut out = Vec::with_capacity(9);
        for i in 0..3 {
            for s in spec {
                out.push(self.inverse(self.deriv_spec(s, i)));
            }
        }
        Ok(out)
    }

    /// Second velocity derivatives, component `9 l + 3 i + j` holding `d_l d_i u_j`.
    pub fn hess_vec(&self, u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let spec: Vec<Vec<Complex64>> = u.iter().map(|c| self.forward(c)).collect::<Result<_>>()?;
        self.hess_vec_spec(&spec)
    }

    pub fn hess_vec_spec(&self, spec: &[Vec<Complex64>]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(27);
        for l in 0..3 {
            for i in 0..3 {
                for s in spec {
                    out.push(self.inverse(self.deriv2_spec(s, l, i)));
                }
            }
        }
        Ok(out)
    }

    /// Second derivatives of a scalar, component `3 a + b` holding `d_a d_b f`.
    pub fn hessian(&self, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        let s = self.forward(f)?;
        let mut out = Vec::with_capacity(9);
        for a in 0..3 {
            for b in 0..3 {
                out.push(self.inverse(self.deriv2_spec(&s, a, b)));
            }
        }
        Ok(out)
    }

    /// Deformation tensor `D(u) = grad u + grad u^T`, component `3 i + j`.
    pub fn deform(&self, u: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let g = self.grad_vec(u)?;
        Ok(deform_from_grad(&g))
    }

    /// Viscous and pressure force `Div(mu D(w) + nu div w I) - p' grad zeta`.
    pub fn stokes_force(&self, mu: f64, nu: f64, dp: f64, zeta: &[f64], w: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let zs = self.forward(zeta)?;
        let ws: Vec<Vec<Complex64>> = w.iter().map(|c| self.forward(c)).collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(3);
        for i in 0..3 {
            let comp: Vec<Complex64> = (0..self.len())
                .into_par_iter()
                .map(|idx| {
                    let k = self.wavevector(idx);
                    let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                    let kdotw = k[0] * ws[0][idx] + k[1] * ws[1][idx] + k[2] * ws[2][idx];
                    -mu * k2 * ws[i][idx] - (mu + nu) * k[i] * kdotw - dp * I * k[i] * zs[idx]
                })
                .collect();
            out.push(self.inverse(comp));
        }
        Ok(out)
    }
}

/// Symmetrisation `G + G^T` of a 9-component matrix field.
pub fn deform_from_grad(g: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(9);
    for i in 0..3 {
        for j in 0..3 {
            let a = &g[3 * i + j];
            let b = &g[3 * j + i];
            out.push(a.iter().zip(b).map(|(x, y)| x + y).collect());
        }
    }
    out
}

/// Staggered finite differences on the radial shell.
#[derive(Debug, Clone)]
pub struct RadialOps {
    pub nodes: Vec<f64>,
    pub centers: Vec<f64>,
    pub h: f64,
}

impl RadialOps {
    pub fn new(domain: &DomainSpec) -> Result<Self> {
        match domain {
            DomainSpec::RadialShell { .. } => Ok(RadialOps {
                nodes: domain.radial_nodes(),
                centers: domain.radial_centers(),
                h: domain.spacing(),
            }),
            DomainSpec::PeriodicBox { .. } => Err(Error::Unsupported("radial operators need a radial shell".into())),
        }
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    fn check_nodes(&self, len: usize) -> Result<()> {
        if len != self.nodes.len() {
            return Err(Error::ShapeMismatch { expected: self.nodes.len(), got: len });
        }
        Ok(())
    }

    fn check_centers(&self, len: usize) -> Result<()> {
        if len != self.centers.len() {
            return Err(Error::ShapeMismatch { expected: self.centers.len(), got: len });
        }
        Ok(())
    }

    /// Divergence `r^-2 (r^2 u)'` of a nodal radial velocity, at the centres.
    pub fn div(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_nodes(u.len())?;
        let r = &self.nodes;
        Ok(self
            .centers
            .iter()
            .enumerate()
            .map(|(i, c)| (r[i + 1] * r[i + 1] * u[i + 1] - r[i] * r[i] * u[i]) / (c * c * self.h))
            .collect())
    }

    /// Radial derivative of a centred scalar, at the nodes.
    ///
    /// Interior nodes use the compact centred difference; the two wall nodes
    /// use second-order one-sided stencils.
    pub fn grad(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_centers(f.len())?;
        let m = f.len();
        let h = self.h;
        let mut out = vec![0.0; m + 1];
        for i in 1..m {
            out[i] = (f[i] - f[i - 1]) / h;
        }
        out[0] = (-2.0 * f[0] + 3.0 * f[1] - f[2]) / h;
        out[m] = (2.0 * f[m - 1] - 3.0 * f[m - 2] + f[m - 3]) / h;
        Ok(out)
    }

    /// Interior-node gradient only (walls set to zero), the form used in the
    /// momentum balance where the wall velocity is prescribed.
    pub fn grad_interior(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut g = self.grad(f)?;
        let m = g.len() - 1;
        g[0] = 0.0;
        g[m] = 0.0;
        Ok(g)
    }

    /// `div grad f` at the centres.
    pub fn laplace(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.div(&self.grad(f)?)
    }

    /// `d/dr` of a nodal field at the nodes (second order everywhere).
    pub fn dr_nodes(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_nodes(u.len())?;
        let n = u.len();
        let h = self.h;
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            out[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
        }
        out[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
        out[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
        Ok(out)
    }

    /// `d^2/dr^2` of a nodal field at the nodes.
    pub fn drr_nodes(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_nodes(u.len())?;
        let n = u.len();
        let h2 = self.h * self.h;
        let mut out = vec![0.0; n];
        for i in 1..n - 1 {
            out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
        }
        out[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) / h2;
        out[n - 1] = (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) / h2;
        Ok(out)
    }

    /// Average of a centred field onto the nodes (linear, extrapolated at the walls).
    pub fn centers_to_nodes(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_centers(f.len())?;
        let m = f.len();
        let mut out = vec![0.0; m + 1];
        for i in 1..m {
            out[i] = 0.5 * (f[i] + f[i - 1]);
        }
        out[0] = 1.5 * f[0] - 0.5 * f[1];
        out[m] = 1.5 * f[m - 1] - 0.5 * f[m - 2];
        Ok(out)
    }

    /// Average of a nodal field onto the centres.
    pub fn nodes_to_centers(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_nodes(u.len())?;
        Ok(u.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
    }

    /// Spherical-frame velocity gradient `diag(u', u/r, u/r)` at the nodes,
    /// returned as `[u', u/r]`.
    pub fn grad_vec(&self, u: &[f64]) -> Result<[Vec<f64>; 2]> {
        let du = self.dr_nodes(u)?;
        let ur = u.iter().zip(&self.nodes).map(|(v, r)| v / r).collect();
        Ok([du, ur])
    }

    /// Viscous and pressure force `(2 mu + nu) d_r div w - p' d_r zeta` at the
    /// interior nodes; wall entries are zero.
    pub fn stokes_force(&self, mu: f64, nu: f64, dp: f64, zeta: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        let d = self.div(w)?;
        let s: Vec<f64> = d.iter().zip(zeta).map(|(dv, z)| (2.0 * mu + nu) * dv - dp * z).collect();
        self.grad_interior(&s)
    }
}

/// Dispatching operator set for either domain.
#[derive(Debug, Clone)]
pub enum Ops {
    Box(BoxOps),
    Radial(RadialOps),
}

impl Ops {
    pub fn new(domain: &DomainSpec) -> Result<Self> {
        domain.validate()?;
        Ok(match domain {
            DomainSpec::PeriodicBox { .. } => Ops::Box(BoxOps::new(domain)?),
            DomainSpec::RadialShell { .. } => Ops::Radial(RadialOps::new(domain)?),
        })
    }

    /// Gradient of a scalar: three components on the box, the radial one otherwise.
    pub fn grad(&self, f: &[f64]) -> Result<Vec<Vec<f64>>> {
        match self {
            Ops::Box(b) => b.grad(f),
            Ops::Radial(r) => Ok(vec![r.grad(f)?]),
        }
    }

    pub fn div(&self, v: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            Ops::Box(b) => b.div(v),
            Ops::Radial(r) => {
                if v.len() != 1 {
                    return Err(Error::ShapeMismatch { expected: 1, got: v.len() });
                }
                r.div(&v[0])
            }
        }
    }

    pub fn laplace(&self, f: &[f64]) -> Result<Vec<f64>> {
        match self {
            Ops::Box(b) => b.laplace(f),
            Ops::Radial(r) => r.laplace(f),
        }
    }

    /// Deformation tensor. On the radial shell the spherical-frame diagonal
    /// `2 diag(u', u/r, u/r)` is returned as three components.
    pub fn deform(&self, v: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match self {
            Ops::Box(b) => b.deform(v),
            Ops::Radial(r) => {
                if v.len() != 1 {
                    return Err(Error::ShapeMismatch { expected: 1, got: v.len() });
                }
                let [du, ur] = r.grad_vec(&v[0])?;
                let two = |f: &Vec<f64>| f.iter().map(|x| 2.0 * x).collect::<Vec<f64>>();
                Ok(vec![two(&du), two(&ur), two(&ur)])
            }
        }
    }
}

/// Gradient of a scalar field on `domain`.
pub fn grad(f: &[f64], domain: &DomainSpec) -> Result<Vec<Vec<f64>>> {
    Ops::new(domain)?.grad(f)
}

/// Divergence of a vector field on `domain`.
pub fn div(v: &[Vec<f64>], domain: &DomainSpec) -> Result<Vec<f64>> {
    Ops::new(domain)?.div(v)
}

pub fn laplace(f: &[f64], domain: &DomainSpec) -> Result<Vec<f64>> {
    Ops::new(domain)?.laplace(f)
}

pub fn deform_tensor(v: &[Vec<f64>], domain: &DomainSpec) -> Result<Vec<Vec<f64>>> {
    Ops::new(domain)?.deform(v)
}
