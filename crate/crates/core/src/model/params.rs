use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Barotropic pressure law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum PressureLaw {
    /// `p(rho) = a * rho^gamma`.
    Power { a: f64, gamma: f64 },
    /// `p(rho) = slope * rho`.
    Linear { slope: f64 },
}

impl Default for PressureLaw {
    fn default() -> Self {
        PressureLaw::Power { a: 1.0, gamma: 1.4 }
    }
}

impl PressureLaw {
    pub fn value(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(match *self {
            PressureLaw::Power { a, gamma } => a * rho.powf(gamma),
            PressureLaw::Linear { slope } => slope * rho,
        })
    }

    pub fn deriv(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(match *self {
            PressureLaw::Power { a, gamma } => a * gamma * rho.powf(gamma - 1.0),
            PressureLaw::Linear { slope } => slope,
        })
    }

    pub fn second_deriv(&self, rho: f64) -> Result<f64> {
        check_density(rho)?;
        Ok(match *self {
            PressureLaw::Power { a, gamma } => a * gamma * (gamma - 1.0) * rho.powf(gamma - 2.0),
            PressureLaw::Linear { .. } => 0.0,
        })
    }
}

fn check_density(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("pressure law evaluated at non-positive density {rho}")))
    }
}

/// Time integrability exponent `p` of the maximal regularity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeExponent {
    Two,
    OnePlusSigma,
}

impl TimeExponent {
    pub fn value(self, sigma: f64) -> f64 {
        match self {
            TimeExponent::Two => 2.0,
            TimeExponent::OnePlusSigma => 1.0 + sigma,
        }
    }
}

/// Time weight exponent `b` paired with `p`.
pub fn weight_exponent(p: TimeExponent, sigma: f64) -> f64 {
    match p {
        TimeExponent::Two => (3.0 - sigma) / (2.0 * (2.0 + sigma)),
        TimeExponent::OnePlusSigma => (1.0 - sigma) / (2.0 * (2.0 + sigma)),
    }
}

/// Hölder conjugate `p' = p / (p - 1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// The exponent `r` with `1/r = 1/2 + 1/(2 + sigma)`.
pub fn r_exponent(sigma: f64) -> f64 {
    2.0 * (2.0 + sigma) / (4.0 + sigma)
}

fn default_delta() -> f64 {
    0.1
}

fn default_epsilon() -> f64 {
    1e-3
}

fn default_sigma() -> f64 {
    0.1
}

fn default_p() -> TimeExponent {
    TimeExponent::Two
}

/// Physical and scheme constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub mu: f64,
    pub nu: f64,
    pub rho_star: f64,
    #[serde(default)]
    pub pressure: PressureLaw,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_p")]
    pub p_time: TimeExponent,
    /// Derived from `(sigma, p_time)` when absent.
    #[serde(default)]
    pub b_weight: Option<f64>,
    /// Shift constant; `None` means "derive from the spectral abscissa".
    #[serde(default)]
    pub lambda1: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta_diffeo: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            mu: 1.0,
            nu: 0.0,
            rho_star: 1.0,
            pressure: PressureLaw::default(),
            sigma: default_sigma(),
            p_time: default_p(),
            b_weight: None,
            lambda1: None,
            delta_diffeo: default_delta(),
            epsilon: default_epsilon(),
        }
    }
}

/// A broken parameter rule, keyed by the offending config path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub key: String,
    pub rule: String,
}

impl Violation {
    pub fn new(key: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation { key: key.into(), rule: rule.into() }
    }
}

impl ModelParams {
    pub fn p(&self) -> f64 {
        self.p_time.value(self.sigma)
    }

    pub fn b(&self) -> f64 {
        self.b_weight.unwrap_or_else(|| weight_exponent(self.p_time, self.sigma))
    }

    pub fn r(&self) -> f64 {
        r_exponent(self.sigma)
    }

    /// `p'(rho_*)`.
    pub fn sound_speed_sq(&self) -> f64 {
        self.pressure.deriv(self.rho_star).unwrap_or(f64::NAN)
    }

    /// Linear sound speed `sqrt(p'(rho_*))`.
    pub fn sound_speed(&self) -> f64 {
        self.sound_speed_sq().sqrt()
    }

    pub fn pressure_deriv(&self, rho: f64) -> Result<f64> {
        self.pressure.deriv(rho)
    }

    /// Checks every parameter rule; an empty list means the parameters are valid.
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let key = |k: &str| format!("{prefix}{k}");
        let mut out = Vec::new();
        let finite = [
            ("mu", self.mu),
            ("nu", self.nu),
            ("rho_star", self.rho_star),
            ("sigma", self.sigma),
            ("delta_diffeo", self.delta_diffeo),
            ("epsilon", self.epsilon),
        ];
        for (k, v) in finite {
            if !v.is_finite() {
                out.push(Violation::new(key(k), "must be finite"));
            }
        }
        if !(self.mu > 0.0) {
            out.push(Violation::new(key("mu"), "viscosity must satisfy mu > 0"));
        }
        if !(self.mu + self.nu > 0.0) {
            out.push(Violation::new(key("nu"), "viscosities must satisfy mu + nu > 0"));
        }
        if !(self.rho_star > 0.0) {
            out.push(Violation::new(key("rho_star"), "reference density must satisfy rho_star > 0"));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0 / 6.0) {
            out.push(Violation::new(key("sigma"), "sigma must satisfy 0 < sigma < 1/6"));
        }
        match self.pressure {
            PressureLaw::Power { a, gamma } => {
                if !(a > 0.0) {
                    out.push(Violation::new(key("pressure.a"), "pressure derivative must be positive: a > 0"));
                }
                if !(gamma > 0.0) {
                    out.push(Violation::new(
                        key("pressure.gamma"),
                        "pressure derivative must be positive: gamma > 0",
                    ));
                }
            }
            PressureLaw::Linear { slope } => {
                if !(slope > 0.0) {
                    out.push(Violation::new(
                        key("pressure.slope"),
                        "pressure derivative must be positive: slope > 0",
                    ));
                }
            }
        }
        if self.rho_star > 0.0 {
            // p' > 0 on the admissible density band [rho_*/2, 3 rho_*/2].
            for rho in [0.5 * self.rho_star, self.rho_star, 1.5 * self.rho_star] {
                match self.pressure.deriv(rho) {
                    Ok(d) if d > 0.0 && d.is_finite() => {}
                    _ => {
                        out.push(Violation::new(key("pressure"), format!("p'(rho) must be positive at rho = {rho}")));
                        break;
                    }
                }
            }
        }
        let expected_b = weight_exponent(self.p_time, self.sigma);
        if let Some(b) = self.b_weight {
            if (b - expected_b).abs() > 1e-12 {
                out.push(Violation::new(
                    key("b_weight"),
                    format!("b must equal {expected_b} for the chosen (sigma, p_time)"),
                ));
            }
        }
        let p = self.p();
        if p > 1.0 && !(self.b() * conjugate(p) > 1.0) {
            out.push(Violation::new(key("b_weight"), "b * p' > 1 is required"));
        }
        if let Some(l1) = self.lambda1 {
            if !(l1 > 0.0) {
                out.push(Violation::new(key("lambda1"), "shift constant must satisfy lambda1 > 0"));
            }
        }
        if !(self.delta_diffeo > 0.0 && self.delta_diffeo < 1.0) {
            out.push(Violation::new(key("delta_diffeo"), "delta must satisfy 0 < delta < 1"));
        }
        if !(self.epsilon > 0.0) {
            out.push(Violation::new(key("epsilon"), "epsilon must be positive"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations("").into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidParameter { key: v.key, rule: v.rule }),
        }
    }
}

/// `p'(rho)`; fails for non-positive density.
pub fn pressure_deriv(params: &ModelParams, rho: f64) -> Result<f64> {
    params.pressure.deriv(rho)
}
