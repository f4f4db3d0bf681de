//! Discrete Lebesgue and Sobolev norms.

use rayon::prelude::*;

use super::domain::DomainSpec;
use super::ops::Ops;
use crate::error::{Error, Result};

const CHUNK: usize = 4096;

/// Quadrature weights for a field of `len` samples.
///
/// Box: uniform cell volume (exact for trigonometric polynomials at q = 2).
/// Radial nodes: trapezoid with the `4 pi r^2` shell factor; radial centres:
/// midpoint rule.
pub fn weights(domain: &DomainSpec, len: usize) -> Result<Vec<f64>> {
    match *domain {
        DomainSpec::PeriodicBox { .. } => {
            if len != domain.scalar_len() {
                return Err(Error::ShapeMismatch { expected: domain.scalar_len(), got: len });
            }
            let h = domain.spacing();
            Ok(vec![h * h * h; len])
        }
        DomainSpec::RadialShell { n, .. } => {
            let h = domain.spacing();
            let four_pi = 4.0 * std::f64::consts::PI;
            if len == n {
                let r = domain.radial_nodes();
                Ok(r.iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                        four_pi * r * r * h * w
                    })
                    .collect())
            } else if len == n - 1 {
                Ok(domain.radial_centers().iter().map(|c| four_pi * c * c * h).collect())
            } else {
                Err(Error::ShapeMismatch { expected: n, got: len })
            }
        }
    }
}

/// Deterministic sum: fixed chunks reduced in order.
pub fn det_sum(values: impl IndexedParallelIterator<Item = f64>) -> f64 {
    let partial: Vec<f64> = values.chunks(CHUNK).map(|c| c.iter().sum::<f64>()).collect();
    partial.iter().sum()
}

/// Integral of a scalar field.
pub fn integrate(f: &[f64], domain: &DomainSpec) -> Result<f64> {
    let w = weights(domain, f.len())?;
    Ok(det_sum(f.par_iter().zip(w.par_iter()).map(|(a, b)| a * b)))
}

/// Pointwise Euclidean magnitude of a multi-component field.
pub fn magnitude(comps: &[&[f64]]) -> Result<Vec<f64>> {
    let len = comps.first().map_or(0, |c| c.len());
    if let Some(c) = comps.iter().find(|c| c.len() != len) {
        return Err(Error::ShapeMismatch { expected: len, got: c.len() });
    }
    Ok((0..len)
        .into_par_iter()
        .map(|i| comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
        .collect())
}

/// `L_q` norm of the pointwise magnitude of `comps`; `q = inf` gives the
/// maximum. Any `q >= 1` is accepted.
pub fn lq_norm(comps: &[&[f64]], domain: &DomainSpec, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::UnsupportedExponent(q));
    }
    if comps.is_empty() {
        return Ok(0.0);
    }
    let m = magnitude(comps)?;
    if q.is_infinite() {
        return Ok(m.iter().fold(0.0, |a, &b| a.max(b)));
    }
    let w = weights(domain, m.len())?;
    let s = det_sum(m.par_iter().zip(w.par_iter()).map(|(a, b)| a.powf(q) * b));
    Ok(s.powf(1.0 / q))
}

/// `L_q` norm restricted to the exponents the energy functionals use:
/// `q in {r, 2, 2 + sigma, 6, inf}`.
pub fn lq_norm_checked(comps: &[&[f64]], domain: &DomainSpec, q: f64, sigma: f64) -> Result<f64> {
    let allowed = [super::params::r_exponent(sigma), 2.0, 2.0 + sigma, 6.0];
    if !(q.is_infinite() || allowed.iter().any(|a| (a - q).abs() < 1e-12)) {
        return Err(Error::UnsupportedExponent(q));
    }
    lq_norm(comps, domain, q)
}

/// Derivative fields of a scalar (`vector = false`) or velocity field.
///
/// Returns `(first, second)` derivative component lists; `second` is empty
/// unless `order >= 2`. Radial tensors are given by their spherical-frame
/// entries, weighted so the pointwise magnitude is the Frobenius norm.
pub fn derivative_fields(
    comps: &[&[f64]],
    ops: &Ops,
    order: usize,
    vector: bool,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    match ops {
        Ops::Box(b) => {
            if vector {
                let owned: Vec<Vec<f64>> = comps.iter().map(|c| c.to_vec()).collect();
                let g = b.grad_vec(&owned)?;
                let h = if order >= 2 { b.hess_vec(&owned)? } else { Vec::new() };
                Ok((g, h))
            } else {
                let g = b.grad(comps[0])?;
                let h = if order >= 2 { b.hessian(comps[0])? } else { Vec::new() };
                Ok((g, h))
            }
        }
        Ops::Radial(r) => {
            if vector {
                let u = comps[0];
                let [du, ur] = r.grad_vec(u)?;
                let first = vec![du.clone(), ur.clone(), ur];
                let second = if order >= 2 {
                    let d2 = r.drr_nodes(u)?;
                    // |grad^2 u|^2 = u''^2 + 6 ((u' - u/r)/r)^2 for u(r) e_r
                    let s6 = 6f64.sqrt();
                    let w: Vec<f64> = du
                        .iter()
                        .zip(u)
                        .zip(&r.nodes)
                        .map(|((d, v), rr)| s6 * (d - v / rr) / rr)
                        .collect();
                    vec![d2, w]
                } else {
                    Vec::new()
                };
                Ok((first, second))
            } else {
                let g = r.grad(comps[0])?;
                let second = if order >= 2 {
                    // |grad^2 f|^2 = f''^2 + 2 (f'/r)^2
                    let d2 = r.dr_nodes(&g)?;
                    let gr: Vec<f64> = g.iter().zip(&r.nodes).map(|(a, rr)| 2f64.sqrt() * a / rr).collect();
                    vec![d2, gr]
                } else {
                    Vec::new()
                };
                Ok((vec![g], second))
            }
        }
    }
}

/// `H^order_q` norm: `||f||_q + ||grad f||_q (+ ||grad^2 f||_q)`.
///
/// Three components on the box (or nodal samples on the radial shell) are
/// treated as a velocity field, anything else as a scalar.
pub fn sobolev_norm(comps: &[&[f64]], domain: &DomainSpec, q: f64, order: usize) -> Result<f64> {
    if order > 2 {
        return Err(Error::OutOfRange(format!("Sobolev order {order} > 2")));
    }
    let ops = Ops::new(domain)?;
    let mut total = lq_norm(comps, domain, q)?;
    if order == 0 {
        return Ok(total);
    }
    let vector = match &ops {
        Ops::Box(_) => comps.len() == 3,
        Ops::Radial(r) => comps[0].len() == r.n(),
    };
    let (g, h) = derivative_fields(comps, &ops, order, vector)?;
    let gr: Vec<&[f64]> = g.iter().map(|c| c.as_slice()).collect();
    total += lq_norm(&gr, domain, q)?;
    if order == 2 {
        let hr: Vec<&[f64]> = h.iter().map(|c| c.as_slice()).collect();
        total += lq_norm(&hr, domain, q)?;
    }
    Ok(total)
}
