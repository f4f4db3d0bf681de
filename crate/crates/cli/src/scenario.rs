use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use mnflow_core::decay::{gaussian_data, transverse_packet, velocity_gaussian, DecayConfig, DecayKind};
use mnflow_core::model::{DomainSpec, FieldState, Frame, ModelParams, PressureLaw, Violation};
use mnflow_core::scheme::SchemeConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    LinearDecay,
    Picard,
    Monitor,
    Bookkeeping,
}

/// Initial data of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    /// Density bump plus a velocity along the first axis.
    Gaussian { amplitude: f64, width: f64 },
    /// Gaussian velocity, no density.
    VelocityGaussian { amplitude: f64, width: f64 },
    /// Divergence-free packet (box only).
    Transverse { amplitude: f64, width: f64 },
    /// A few low modes with seeded random coefficients, scaled to `amplitude`.
    Random { amplitude: f64 },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Gaussian { amplitude: 1e-3, width: 1.5 }
    }
}

impl InitialData {
    pub fn violations(&self, prefix: &str, domain: &DomainSpec) -> Vec<Violation> {
        let key = |k: &str| format!("{prefix}{k}");
        let mut out = Vec::new();
        let (amp, width) = match *self {
            InitialData::Zero => return out,
            InitialData::Gaussian { amplitude, width }
            | InitialData::VelocityGaussian { amplitude, width }
            | InitialData::Transverse { amplitude, width } => (amplitude, Some(width)),
            InitialData::Random { amplitude } => (amplitude, None),
        };
        if !amp.is_finite() {
            out.push(Violation::new(key("amplitude"), "amplitude must be finite"));
        }
        if let Some(w) = width {
            if !(w > 0.0 && w.is_finite()) {
                out.push(Violation::new(key("width"), "width must be positive"));
            }
        }
        if matches!(self, InitialData::Transverse { .. }) && !domain.is_periodic() {
            out.push(Violation::new(key("kind"), "transverse packets need the periodic box"));
        }
        out
    }

    pub fn build(&self, domain: &DomainSpec, seed: u64) -> mnflow_core::error::Result<FieldState> {
        Ok(match *self {
            InitialData::Zero => FieldState::zeros(domain, Frame::Lagrange, 0.0),
            InitialData::Gaussian { amplitude, width } => gaussian_data(domain, amplitude, width),
            InitialData::VelocityGaussian { amplitude, width } => velocity_gaussian(domain, amplitude, width),
            InitialData::Transverse { amplitude, width } => transverse_packet(domain, amplitude, width)?,
            InitialData::Random { amplitude } => random_smooth(domain, amplitude, seed),
        })
    }
}

fn random_smooth(domain: &DomainSpec, amp: f64, seed: u64) -> FieldState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = FieldState::zeros(domain, Frame::Lagrange, 0.0);
    match *domain {
        DomainSpec::PeriodicBox { length, .. } => {
            let k = 2.0 * PI / length;
            for f in std::iter::once(&mut s.theta).chain(s.vel.iter_mut()) {
                let modes: Vec<([f64; 3], f64, f64)> = (0..4)
                    .map(|_| {
                        let m = [0, 1, 2].map(|_| rng.random_range(-2i32..=2) as f64 * k);
                        (m, rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI))
                    })
                    .collect();
                for (i, v) in f.iter_mut().enumerate() {
                    let x = domain.box_point(i);
                    *v = modes.iter().map(|(m, c, ph)| c * (m[0] * x[0] + m[1] * x[1] + m[2] * x[2] + ph).cos()).sum();
                }
            }
        }
        DomainSpec::RadialShell { inner, outer, .. } => {
            let coef: Vec<(f64, f64)> = (1..=3).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let lw = outer - inner;
            let eval = |r: f64, which: usize| -> f64 {
                coef.iter()
                    .enumerate()
                    .map(|(m, c)| {
                        let a = if which == 0 { c.0 } else { c.1 };
                        let arg = (m + 1) as f64 * PI * (r - inner) / lw;
                        a * if which == 0 { arg.cos() } else { arg.sin() }
                    })
                    .sum()
            };
            s.theta = domain.radial_centers().iter().map(|&r| eval(r, 0)).collect();
            s.vel[0] = domain.radial_nodes().iter().map(|&r| eval(r, 1)).collect();
            let n = s.vel[0].len();
            s.vel[0][0] = 0.0;
            s.vel[0][n - 1] = 0.0;
        }
    }
    let m = s.theta.iter().chain(s.vel.iter().flatten()).fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        s.scale(amp / m);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayCell {
    pub kind: DecayKind,
    pub p: f64,
    pub q: f64,
}

fn default_cells() -> Vec<DecayCell> {
    vec![
        DecayCell { kind: DecayKind::State, p: 2.0, q: 1.0 },
        DecayCell { kind: DecayKind::Gradient, p: 2.0, q: 1.0 },
        DecayCell { kind: DecayKind::Dt, p: 2.0, q: 1.0 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    #[serde(default = "default_cells")]
    pub cells: Vec<DecayCell>,
    #[serde(default)]
    pub config: DecayConfig,
}

impl Default for DecaySection {
    fn default() -> Self {
        DecaySection { cells: default_cells(), config: DecayConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BookkeepingSection {
    #[serde(default = "three")]
    pub n: usize,
    /// Defaults to `params.sigma`.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Defaults to `[2, 1 + sigma]`.
    #[serde(default)]
    pub p: Vec<f64>,
    #[serde(default)]
    pub b: Option<f64>,
}

fn three() -> usize {
    3
}

impl Default for BookkeepingSection {
    fn default() -> Self {
        BookkeepingSection { n: 3, sigma: None, p: Vec::new(), b: None }
    }
}

fn default_domain() -> DomainSpec {
    DomainSpec::periodic(8.0, 16)
}

fn default_scheme() -> SchemeConfig {
    SchemeConfig::new(2.0, 0.05)
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default = "default_domain")]
    pub domain: DomainSpec,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: InitialData,
    #[serde(default)]
    pub decay: DecaySection,
    #[serde(default)]
    pub bookkeeping: BookkeepingSection,
}

#[derive(Debug)]
pub enum LoadError {
    Io(PathBuf, std::io::Error),
    Parse(PathBuf, serde_json::Error),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(p, e) => write!(f, "cannot read {}: {e}", p.display()),
            LoadError::Parse(p, e) => write!(f, "malformed config {}: {e}", p.display()),
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(path.to_path_buf(), e))?;
        serde_json::from_str(&text).map_err(|e| LoadError::Parse(path.to_path_buf(), e))
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            out.push(Violation::new("name", "name must be non-empty and contain no path separators"));
        }
        out.extend(self.params.violations("params."));
        out.extend(self.domain.violations("domain."));
        out.extend(self.scheme.violations("scheme."));
        out.extend(self.data.violations("data.", &self.domain));
        if self.mode == Mode::LinearDecay {
            out.extend(self.decay.config.violations("decay.config."));
            if self.decay.cells.is_empty() {
                out.push(Violation::new("decay.cells", "at least one decay cell"));
            }
            for (i, c) in self.decay.cells.iter().enumerate() {
                if mnflow_core::decay::predicted_exponent(c.kind, c.p, c.q).is_err() {
                    out.push(Violation::new(format!("decay.cells[{i}]"), "needs 1 <= q <= 2 <= p < inf"));
                }
            }
        }
        if self.mode == Mode::Bookkeeping {
            if self.bookkeeping.n < 2 {
                out.push(Violation::new("bookkeeping.n", "dimension must be at least 2"));
            }
            if self.bookkeeping.p.iter().any(|p| !(*p > 1.0)) {
                out.push(Violation::new("bookkeeping.p", "time exponents must exceed 1"));
            }
        }
        out
    }
}

fn decay_params() -> ModelParams {
    ModelParams { mu: 1.0, nu: 0.0, rho_star: 1.0, pressure: PressureLaw::Power { a: 1.0, gamma: 1.4 }, ..Default::default() }
}

/// Built-in scenarios: `(name, description, scenario)`.
pub fn presets() -> Vec<(&'static str, &'static str, Scenario)> {
    let base = |name: &str, mode: Mode| Scenario {
        name: name.to_string(),
        mode,
        params: decay_params(),
        domain: default_domain(),
        scheme: default_scheme(),
        seed: 0,
        output_dir: default_output(),
        data: InitialData::default(),
        decay: DecaySection::default(),
        bookkeeping: BookkeepingSection::default(),
    };
    let decay = Scenario {
        domain: DomainSpec::periodic(32.0, 128),
        data: InitialData::VelocityGaussian { amplitude: 1e-2, width: 1.0 },
        ..base("decay-standard", Mode::LinearDecay)
    };
    let decay_small = Scenario {
        domain: DomainSpec::periodic(32.0, 64),
        data: InitialData::VelocityGaussian { amplitude: 1e-2, width: 1.0 },
        ..base("decay-small", Mode::LinearDecay)
    };
    let picard = Scenario {
        domain: DomainSpec::periodic(8.0, 16),
        data: InitialData::Gaussian { amplitude: 2e-3, width: 1.5 },
        ..base("picard-small", Mode::Picard)
    };
    let radial = Scenario {
        domain: DomainSpec::RadialShell { inner: 1.0, outer: 6.0, n: 200 },
        data: InitialData::Gaussian { amplitude: 2e-3, width: 1.0 },
        scheme: SchemeConfig::new(1.0, 0.05),
        ..base("picard-radial", Mode::Picard)
    };
    let monitor = Scenario {
        data: InitialData::Random { amplitude: 1e-3 },
        seed: 11,
        ..base("monitor-small", Mode::Monitor)
    };
    vec![
        ("decay-standard", "decay table on a 128^3 box of side 32", decay),
        ("decay-small", "decay table on a 64^3 box of side 32", decay_small),
        ("picard-small", "fixed-point iteration on a 16^3 box, T = 2", picard),
        ("picard-radial", "fixed-point iteration on the radial shell", radial),
        ("monitor-small", "product-bound monitor and Euler check on a 16^3 box", monitor),
        ("bookkeeping-3d", "exponent inequalities in three dimensions", base("bookkeeping-3d", Mode::Bookkeeping)),
    ]
}

pub fn preset(name: &str) -> Option<Scenario> {
    presets().into_iter().find(|(n, _, _)| *n == name).map(|(_, _, s)| s)
}
