//! Velocity laws `V = -F(u, H)`, their inverses `H = -K(u, V)`, the energy
//! density `G`, and the diffusion coefficient `D`.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonlinear functions driving the coupled flow.
///
/// Implementors must satisfy `V = -F(u, H)` if and only if `H = -K(u, V)`.
pub trait FlowModel: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    fn f(&self, u: f64, h: f64) -> Result<f64>;
    fn d1_f(&self, u: f64, h: f64) -> Result<f64>;
    fn d2_f(&self, u: f64, h: f64) -> Result<f64>;

    fn k(&self, u: f64, v: f64) -> Result<f64>;
    fn d1_k(&self, u: f64, v: f64) -> Result<f64>;
    fn d2_k(&self, u: f64, v: f64) -> Result<f64>;

    /// Energy density `G(r)`.
    fn energy_density(&self, r: f64) -> Result<f64>;
    fn energy_density_d1(&self, r: f64) -> Result<f64>;
    fn energy_density_d2(&self, r: f64) -> Result<f64>;

    /// `g(r) = G(r) - r G'(r)`.
    fn g(&self, r: f64) -> Result<f64> {
        Ok(self.energy_density(r)? - r * self.energy_density_d1(r)?)
    }

    fn diffusion(&self, u: f64) -> Result<f64>;
    /// Bounds `(D0, D1)` with `0 < D0 <= D(u) <= D1`.
    fn diffusion_bounds(&self) -> (f64, f64);

    /// Whether `F` and `K` are mutually inverse velocity laws.
    fn is_invertible(&self) -> bool {
        true
    }
}

fn check_u(u: f64) -> Result<()> {
    if u > 0.0 && u.is_finite() {
        Ok(())
    } else {
        Err(Error::ModelDomain(format!(
            "concentration must be positive and finite, got u = {u:e}"
        )))
    }
}

/// Gradient flow of `∫ G(u)` with `G(r) = r^-alpha`, so `g(r) = (1 + alpha) r^-alpha`
/// and `F(u, H) = g(u) H`. Diffusion is constant `d0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientFlow {
    alpha: f64,
    d0: f64,
}

impl GradientFlow {
    pub fn new(alpha: f64, d0: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Validation(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(d0 > 0.0 && d0.is_finite()) {
            return Err(Error::Validation(format!("D0 must be positive, got {d0}")));
        }
        Ok(Self { alpha, d0 })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }
}

impl FlowModel for GradientFlow {
    fn name(&self) -> &'static str {
        "gradient_flow"
    }

    fn f(&self, u: f64, h: f64) -> Result<f64> {
        Ok(self.g(u)? * h)
    }

    fn d1_f(&self, u: f64, h: f64) -> Result<f64> {
        check_u(u)?;
        let a = self.alpha;
        Ok(-a * (1.0 + a) * u.powf(-a - 1.0) * h)
    }

    fn d2_f(&self, u: f64, _h: f64) -> Result<f64> {
        self.g(u)
    }

    fn k(&self, u: f64, v: f64) -> Result<f64> {
        Ok(v * self.d2_k(u, v)?)
    }

    fn d1_k(&self, u: f64, v: f64) -> Result<f64> {
        check_u(u)?;
        let a = self.alpha;
        Ok(a * v * u.powf(a - 1.0) / (1.0 + a))
    }

    fn d2_k(&self, u: f64, _v: f64) -> Result<f64> {
        check_u(u)?;
        Ok(u.powf(self.alpha) / (1.0 + self.alpha))
    }

    fn energy_density(&self, r: f64) -> Result<f64> {
        check_u(r)?;
        Ok(r.powf(-self.alpha))
    }

    fn energy_density_d1(&self, r: f64) -> Result<f64> {
        check_u(r)?;
        Ok(-self.alpha * r.powf(-self.alpha - 1.0))
    }

    fn energy_density_d2(&self, r: f64) -> Result<f64> {
        check_u(r)?;
        let a = self.alpha;
        Ok(a * (a + 1.0) * r.powf(-a - 2.0))
    }

    // closed form avoids cancellation in G - r G'
    fn g(&self, r: f64) -> Result<f64> {
        check_u(r)?;
        Ok((1.0 + self.alpha) * r.powf(-self.alpha))
    }

    fn diffusion(&self, u: f64) -> Result<f64> {
        check_u(u)?;
        Ok(self.d0)
    }

    fn diffusion_bounds(&self) -> (f64, f64) {
        (self.d0, self.d0)
    }
}

/// Test model with no surface motion: `F ≡ 0` and `K(u, V) = V`, constant
/// energy density and diffusion. Not an invertible velocity law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frozen {
    d0: f64,
}

impl Frozen {
    pub fn new(d0: f64) -> Result<Self> {
        if !(d0 > 0.0 && d0.is_finite()) {
            return Err(Error::Validation(format!("D0 must be positive, got {d0}")));
        }
        Ok(Self { d0 })
    }
}

impl FlowModel for Frozen {
    fn name(&self) -> &'static str {
        "frozen"
    }
    fn f(&self, u: f64, _h: f64) -> Result<f64> {
        check_u(u)?;
        Ok(0.0)
    }
    fn d1_f(&self, u: f64, _h: f64) -> Result<f64> {
        check_u(u)?;
        Ok(0.0)
    }
    fn d2_f(&self, u: f64, _h: f64) -> Result<f64> {
        check_u(u)?;
        Ok(0.0)
    }
    fn k(&self, u: f64, v: f64) -> Result<f64> {
        check_u(u)?;
        Ok(v)
    }
    fn d1_k(&self, u: f64, _v: f64) -> Result<f64> {
        check_u(u)?;
        Ok(0.0)
    }
    fn d2_k(&self, u: f64, _v: f64) -> Result<f64> {
        check_u(u)?;
        Ok(1.0)
    }
    fn energy_density(&self, r: f64) -> Result<f64> {
        check_u(r)?;
        Ok(1.0)
    }
    fn energy_density_d1(&self, r: f64) -> Result<f64> {
        check_u(r)?;
        Ok(0.0)
    }
    fn energy_density_d2(&self, r: f64) -> Result<f64> {
        check_u(r)?;
        Ok(0.0)
    }
    fn diffusion(&self, u: f64) -> Result<f64> {
        check_u(u)?;
        Ok(self.d0)
    }
    fn diffusion_bounds(&self) -> (f64, f64) {
        (self.d0, self.d0)
    }
    fn is_invertible(&self) -> bool {
        false
    }
}

/// Serializable model selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    GradientFlow {
        alpha: f64,
        #[serde(default = "default_d0")]
        d0: f64,
    },
    Frozen {
        #[serde(default = "default_d0")]
        d0: f64,
    },
}

fn default_d0() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn build(&self) -> Result<Arc<dyn FlowModel>> {
        Ok(match *self {
            ModelSpec::GradientFlow { alpha, d0 } => Arc::new(GradientFlow::new(alpha, d0)?),
            ModelSpec::Frozen { d0 } => Arc::new(Frozen::new(d0)?),
        })
    }

    /// `alpha` for the gradient-flow family.
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            ModelSpec::GradientFlow { alpha, .. } => Some(alpha),
            ModelSpec::Frozen { .. } => None,
        }
    }
}

/// Closed sample box in `(u, V, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub u: (f64, f64),
    pub v: (f64, f64),
    pub h: (f64, f64),
}

/// Result of one sampled assumption check.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub assumption: &'static str,
    pub description: &'static str,
    /// Smallest margin found; negative means violated.
    pub worst_margin: f64,
    /// Sample `(u, V or H)` at which the worst margin occurred.
    pub worst_at: (f64, f64),
    pub passed: bool,
    /// Set when evaluation itself failed somewhere in the box.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &AssumptionCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "ok" } else { "VIOLATED" };
            write!(
                f,
                "{:<14} {:<28} worst margin {:+.3e} at {:?}: {status}",
                c.assumption, c.description, c.worst_margin, c.worst_at
            )?;
            if let Some(e) = &c.error {
                write!(f, " ({e})")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

struct Check {
    assumption: &'static str,
    description: &'static str,
    worst: f64,
    at: (f64, f64),
    error: Option<String>,
}

impl Check {
    fn new(assumption: &'static str, description: &'static str) -> Self {
        Self {
            assumption,
            description,
            worst: f64::INFINITY,
            at: (f64::NAN, f64::NAN),
            error: None,
        }
    }

    fn record(&mut self, margin: Result<f64>, at: (f64, f64)) {
        match margin {
            Ok(m) if m.is_nan() => {
                self.error.get_or_insert_with(|| format!("NaN at {at:?}"));
            }
            Ok(m) => {
                if m < self.worst {
                    self.worst = m;
                    self.at = at;
                }
            }
            Err(e) => {
                self.error.get_or_insert_with(|| format!("{e} at {at:?}"));
            }
        }
    }

    fn finish(self) -> AssumptionCheck {
        AssumptionCheck {
            passed: self.error.is_none() && self.worst > 0.0,
            assumption: self.assumption,
            description: self.description,
            worst_margin: self.worst,
            worst_at: self.at,
            error: self.error,
        }
    }
}

/// Samples `model` on a `samples`-per-axis grid over `bx` and reports the
/// worst margin of every positivity, bound and consistency requirement.
pub fn validate_assumptions(model: &dyn FlowModel, bx: &SampleBox, samples: usize) -> AssumptionReport {
    let samples = samples.max(2);
    let mut d2k = Check::new("Assumption 4", "d2K(u,V) > 0");
    let mut inv_d2f = Check::new("Assumption 2", "1/d2F(u,H) > 0");
    let mut g2 = Check::new("Assumption 5", "G''(u) > 0");
    let mut g = Check::new("Assumption 5", "g(u) > 0");
    let mut dbound = Check::new("Assumption 6", "D0 <= D(u) <= D1");
    let mut inversion = Check::new("Consistency", "V=-F(u,H) <=> H=-K(u,V)");
    let (d0, d1) = model.diffusion_bounds();

    for u in linspace(bx.u.0, bx.u.1, samples) {
        g2.record(model.energy_density_d2(u), (u, f64::NAN));
        g.record(model.g(u), (u, f64::NAN));
        dbound.record(
            model.diffusion(u).map(|d| (d - d0).min(d1 - d) + f64::EPSILON * d1.abs().max(1.0)),
            (u, f64::NAN),
        );
        for v in linspace(bx.v.0, bx.v.1, samples) {
            d2k.record(model.d2_k(u, v), (u, v));
        }
        for h in linspace(bx.h.0, bx.h.1, samples) {
            // 1/d2F > 0 iff d2F > 0; zero means the weight is undefined
            inv_d2f.record(model.d2_f(u, h), (u, h));
            if model.is_invertible() {
                let residual = model
                    .f(u, h)
                    .and_then(|f| model.k(u, -f))
                    .map(|k| 1e-10 * h.abs().max(1.0) - (h + k).abs());
                inversion.record(residual, (u, h));
            }
        }
    }
    let mut checks = vec![d2k.finish(), inv_d2f.finish(), g2.finish(), g.finish(), dbound.finish()];
    if model.is_invertible() {
        checks.push(inversion.finish());
    }
    AssumptionReport { checks }
}

/// Largest relative mismatch between the closed-form partials of `F`, `K` and
/// `G` and central differences with step `step`, at `(u, V)` and `(u, H)`.
pub fn partials_fd_mismatch(model: &dyn FlowModel, u: f64, v: f64, h: f64, step: f64) -> Result<f64> {
    let cd = |f: &dyn Fn(f64) -> Result<f64>, x: f64| -> Result<f64> {
        Ok((f(x + step)? - f(x - step)?) / (2.0 * step))
    };
    let rel = |exact: f64, approx: f64| (exact - approx).abs() / exact.abs().max(1.0);
    let pairs = [
        (model.d1_f(u, h)?, cd(&|s| model.f(s, h), u)?),
        (model.d2_f(u, h)?, cd(&|s| model.f(u, s), h)?),
        (model.d1_k(u, v)?, cd(&|s| model.k(s, v), u)?),
        (model.d2_k(u, v)?, cd(&|s| model.k(u, s), v)?),
        (model.energy_density_d1(u)?, cd(&|s| model.energy_density(s), u)?),
        (model.energy_density_d2(u)?, cd(&|s| model.energy_density_d1(s), u)?),
    ];
    Ok(pairs.iter().map(|&(e, a)| rel(e, a)).fold(0.0, f64::max))
}
