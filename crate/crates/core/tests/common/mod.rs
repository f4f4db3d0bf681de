#![allow(dead_code)]

pub mod oracle;

use mnflow_core::model::{DomainSpec, FieldState, Frame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Periodic minimum-image offset.
pub fn wrap(d: f64, l: f64) -> f64 {
    d - l * (d / l).round()
}

/// Gaussian density bump plus a swirling Gaussian velocity, centred in the box.
pub fn gaussian_state(domain: &DomainSpec, amp: f64, width: f64) -> FieldState {
    let mut s = FieldState::zeros(domain, Frame::Lagrange, 0.0);
    match *domain {
        DomainSpec::PeriodicBox { length, .. } => {
            let c = 0.5 * length;
            for idx in 0..domain.scalar_len() {
                let x = domain.box_point(idx);
                let d = [wrap(x[0] - c, length), wrap(x[1] - c, length), wrap(x[2] - c, length)];
                let r2 = d.iter().map(|v| v * v).sum::<f64>();
                let g = (-r2 / (width * width)).exp();
                s.theta[idx] = amp * g;
                s.vel[0][idx] = amp * g * (0.5 * d[0] - d[1]) / width;
                s.vel[1][idx] = amp * g * (d[0] + 0.3 * d[2]) / width;
                s.vel[2][idx] = amp * g * (0.4 * d[2] - 0.2 * d[1]) / width;
            }
        }
        DomainSpec::RadialShell { inner, outer, .. } => {
            let mid = 0.5 * (inner + outer);
            let bump = |r: f64| (-(r - mid) * (r - mid) / (width * width)).exp();
            s.theta = domain.radial_centers().iter().map(|&r| amp * bump(r)).collect();
            s.vel[0] = domain
                .radial_nodes()
                .iter()
                .map(|&r| amp * bump(r) * (r - inner) * (outer - r) / ((outer - inner) * (outer - inner)))
                .collect();
            let n = s.vel[0].len();
            s.vel[0][0] = 0.0;
            s.vel[0][n - 1] = 0.0;
        }
    }
    s
}

/// Band-limited random state: a few low Fourier modes with random coefficients.
pub fn random_smooth_state(domain: &DomainSpec, amp: f64, seed: u64) -> FieldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = FieldState::zeros(domain, Frame::Lagrange, 0.0);
    let DomainSpec::PeriodicBox { length, .. } = *domain else {
        panic!("box only");
    };
    let kk = std::f64::consts::TAU / length;
    for _ in 0..6 {
        let m = [rng.random_range(-2i32..=2), rng.random_range(-2i32..=2), rng.random_range(-2i32..=2)];
        let ph: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let a: [f64; 4] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        for idx in 0..domain.scalar_len() {
            let x = domain.box_point(idx);
            let arg = kk * (m[0] as f64 * x[0] + m[1] as f64 * x[1] + m[2] as f64 * x[2]) + ph;
            let c = arg.cos();
            s.theta[idx] += amp * a[0] * c;
            for i in 0..3 {
                s.vel[i][idx] += amp * a[i + 1] * c;
            }
        }
    }
    s
}

pub fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
