//! Radially symmetric reference solution, error norms, convergence orders and
//! the per-step monitors (mass, energy, extrema, mean convexity).

use std::io::Write;

use crate::assembly::Assembler;
use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::model::FlowModel;
use crate::stepper::FlowState;
use crate::vec3::{norm, normalize, scale, sub, Vec3};

/// Shrinking sphere with spatially constant concentration for the
/// gradient-flow model `G(u) = u^{-alpha}`, `D` constant.
///
/// The radius solves `R' = -b R^{alpha m - 1}` and `u R^m` is conserved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSolution {
    pub r0: f64,
    pub u0: f64,
    pub alpha: f64,
    pub m: f64,
    b: f64,
}

/// `(R, u, V, H)` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialValues {
    pub r: f64,
    pub u: f64,
    pub v: f64,
    pub h: f64,
}

impl RadialSolution {
    pub fn new(r0: f64, u0: f64, alpha: f64, m: f64) -> Result<Self> {
        if !(r0 > 0.0 && u0 > 0.0 && m > 0.0 && alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Validation(format!(
                "radial solution needs R0, u0, m > 0 and alpha >= 0, got R0={r0}, u0={u0}, m={m}, alpha={alpha}"
            )));
        }
        let b = m * (1.0 + alpha) * (u0 * r0.powf(m)).powf(-alpha);
        Ok(Self { r0, u0, alpha, m, b })
    }

    /// Unit sphere, unit concentration, surface dimension 2.
    pub fn unit(alpha: f64) -> Result<Self> {
        Self::new(1.0, 1.0, alpha, 2.0)
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    fn exponent(&self) -> f64 {
        2.0 - self.alpha * self.m
    }

    /// Extinction time, finite when `2 - alpha m > 0`.
    pub fn t_max(&self) -> Option<f64> {
        let e = self.exponent();
        (e > 0.0).then(|| self.r0.powf(e) / (self.b * e))
    }

    pub fn radius(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::ModelDomain(format!("radial solution evaluated at t = {t}")));
        }
        if let Some(tm) = self.t_max() {
            if t >= tm {
                return Err(Error::ModelDomain(format!(
                    "t = {t} is past the extinction time {tm} of the radial solution"
                )));
            }
        }
        let e = self.exponent();
        Ok(if e == 0.0 {
            self.r0 * (-self.b * t).exp()
        } else {
            (self.r0.powf(e) - t * self.b * e).powf(1.0 / e)
        })
    }

    pub fn eval(&self, t: f64) -> Result<RadialValues> {
        let r = self.radius(t)?;
        Ok(RadialValues {
            r,
            u: self.u0 * (self.r0 / r).powf(self.m),
            v: -self.b * r.powf(self.alpha * self.m - 1.0),
            h: self.m / r,
        })
    }

    /// Nodal interpolation of the exact state on `mesh`, whose nodes are
    /// taken to lie on the initial sphere. The flow map is `p -> R(t)/R0 p`.
    pub fn exact_state(&self, reference: &[Vec3], t: f64, with_h: bool) -> Result<FlowState> {
        let ev = self.eval(t)?;
        let len = reference.len();
        let x: Vec<Vec3> = reference.iter().map(|&p| scale(ev.r / self.r0, p)).collect();
        let n: Vec<Vec3> = x.iter().map(|&p| normalize(p)).collect();
        FlowState::new(
            t,
            x,
            n,
            vec![ev.v; len],
            vec![ev.u; len],
            with_h.then(|| vec![ev.h; len]),
        )
    }
}

pub fn radial_eval(sol: &RadialSolution, t: f64) -> Result<RadialValues> {
    sol.eval(t)
}

/// `‖e‖_K` per variable.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorNorms {
    pub x: f64,
    pub vel: f64,
    pub n: f64,
    pub v: f64,
    pub u: f64,
}

impl ErrorNorms {
    pub const NAMES: [&'static str; 5] = ["x", "v", "n", "V", "u"];

    pub fn as_array(&self) -> [f64; 5] {
        [self.x, self.vel, self.n, self.v, self.u]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self {
            x: a[0],
            vel: a[1],
            n: a[2],
            v: a[3],
            u: a[4],
        }
    }

    /// Componentwise maximum.
    pub fn max(&self, other: &Self) -> Self {
        let (a, b) = (self.as_array(), other.as_array());
        Self::from_array(std::array::from_fn(|i| a[i].max(b[i])))
    }
}

fn k_norm(k: &SparseMatrix, e: &[f64]) -> Result<f64> {
    let ke = k.mul_vec(e)?;
    Ok(e.iter().zip(&ke).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt())
}

fn k_norm_vec(k: &SparseMatrix, e: &[Vec3]) -> Result<f64> {
    let mut s = 0.0;
    for d in 0..3 {
        let c: Vec<f64> = e.iter().map(|p| p[d]).collect();
        s += k_norm(k, &c)?.powi(2);
    }
    Ok(s.sqrt())
}

/// Errors against the interpolated radial solution, measured in the norm
/// `(eᵀ (M + A) e)^{1/2}` with both matrices assembled on the exact surface.
/// `reference` are the initial node positions.
pub fn error_norms(asm: &Assembler, state: &FlowState, sol: &RadialSolution, reference: &[Vec3]) -> Result<ErrorNorms> {
    if state.node_count() != reference.len() || reference.len() != asm.node_count() {
        return Err(Error::Dimension {
            expected: asm.node_count(),
            got: state.node_count(),
        });
    }
    let exact = sol.exact_state(reference, state.t, false)?;
    let geo = asm.geometry(&exact.x)?;
    let k = asm.mass(&geo)?.linear_combination(1.0, &asm.stiffness(&geo)?, 1.0)?;
    let diff = |a: &[Vec3], b: &[Vec3]| -> Vec<Vec3> { a.iter().zip(b).map(|(&p, &q)| sub(p, q)).collect() };
    let diff_s = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p - q).collect() };
    Ok(ErrorNorms {
        x: k_norm_vec(&k, &diff(&state.x, &exact.x))?,
        vel: k_norm_vec(&k, &diff(&state.vel, &exact.vel))?,
        n: k_norm_vec(&k, &diff(&state.n, &exact.n))?,
        v: k_norm(&k, &diff_s(&state.v, &exact.v))?,
        u: k_norm(&k, &diff_s(&state.u, &exact.u))?,
    })
}

/// Experimental orders `log(e_i/e_{i+1}) / log(h_i/h_{i+1})` between
/// successive entries. Entries with a non-positive error are dropped first.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() {
        return Err(Error::Dimension {
            expected: hs.len(),
            got: errors.len(),
        });
    }
    if hs.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Validation("step sizes for EOC must be positive".into()));
    }
    let kept: Vec<(f64, f64)> = errors
        .iter()
        .zip(hs)
        .filter(|&(&e, _)| {
            let ok = e > 0.0 && e.is_finite();
            if !ok {
                log::warn!("error entry {e} excluded from EOC");
            }
            ok
        })
        .map(|(&e, &h)| (e, h))
        .collect();
    if kept.len() < 2 {
        return Err(Error::Validation(format!(
            "EOC needs at least two positive errors, got {}",
            kept.len()
        )));
    }
    Ok(kept
        .windows(2)
        .map(|w| (w[0].0 / w[1].0).ln() / (w[0].1 / w[1].1).ln())
        .collect())
}

/// One line of the monitor file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Minimum of `H`, or of the proxy `-K(u, V)` when `H` is not carried.
    pub h_min: f64,
    pub area: f64,
    pub nu_min: f64,
    pub nu_max: f64,
}

pub const MONITOR_HEADER: &str = "t,mass,energy,u_min,u_max,H_min,area,nu_min,nu_max";

impl MonitorRow {
    pub fn values(&self) -> [f64; 9] {
        [
            self.t,
            self.mass,
            self.energy,
            self.u_min,
            self.u_max,
            self.h_min,
            self.area,
            self.nu_min,
            self.nu_max,
        ]
    }

    pub fn to_csv(&self) -> String {
        self.values().iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
    }
}

fn min_max(v: impl Iterator<Item = f64>) -> (f64, f64) {
    v.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

/// Nodal mean curvature: carried `H`, else `-K(u, V)` nodewise.
pub fn h_proxy(model: &dyn FlowModel, state: &FlowState) -> Result<Vec<f64>> {
    match &state.h {
        Some(h) => Ok(h.clone()),
        None => state
            .u
            .iter()
            .zip(&state.v)
            .map(|(&u, &v)| model.k(u, v).map(|k| -k))
            .collect(),
    }
}

pub fn monitor(asm: &Assembler, model: &dyn FlowModel, state: &FlowState) -> Result<MonitorRow> {
    let geo = asm.geometry(&state.x)?;
    let m = asm.mass(&geo)?;
    let mu = m.mul_vec(&state.u)?;
    let mass = mu.iter().sum();
    let area = m.values().iter().sum();
    let energy = asm.energy(&geo, model, &state.u)?;
    let (u_min, u_max) = min_max(state.u.iter().copied());
    let (h_min, _) = min_max(h_proxy(model, state)?.into_iter());
    let (nu_min, nu_max) = min_max(state.n.iter().map(|&n| norm(n)));
    Ok(MonitorRow {
        t: state.t,
        mass,
        energy,
        u_min,
        u_max,
        h_min,
        area,
        nu_min,
        nu_max,
    })
}

/// Streams monitor rows as CSV, rejecting non-increasing times.
#[derive(Debug)]
pub struct MonitorWriter<W: Write> {
    out: W,
    last_t: Option<f64>,
}

impl<W: Write> MonitorWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{MONITOR_HEADER}")?;
        Ok(Self { out, last_t: None })
    }

    pub fn write(&mut self, row: &MonitorRow) -> Result<()> {
        if let Some(v) = row.values().iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite monitor value {v} at t = {}", row.t)));
        }
        if let Some(prev) = self.last_t {
            if !(row.t > prev) {
                return Err(Error::Validation(format!(
                    "monitor times must increase, got {} after {prev}",
                    row.t
                )));
            }
        }
        self.last_t = Some(row.t);
        writeln!(self.out, "{}", row.to_csv())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

/// Principal curvatures `(k1, k2)`, `k1 <= k2`, at every quadrature point:
/// the tangential eigenvalues of the symmetrised gradient of `n_h`.
pub fn principal_curvatures(asm: &Assembler, x: &[Vec3], n: &[Vec3]) -> Result<Vec<(f64, f64)>> {
    let geo = asm.geometry(x)?;
    let grads: Vec<Vec<Vec3>> = (0..3)
        .map(|d| {
            let c: Vec<f64> = n.iter().map(|p| p[d]).collect();
            asm.gradient(&geo, &c)
        })
        .collect::<Result<_>>()?;
    let nu = asm.interpolate_vec(n)?;
    Ok((0..nu.len())
        .map(|k| {
            let v = normalize(nu[k]);
            let mut s = [[0.0; 3]; 3];
            for r in 0..3 {
                for c in 0..3 {
                    s[r][c] = 0.5 * (grads[r][k][c] + grads[c][k][r]);
                }
            }
            // P S P with P = I - v vᵀ has eigenvalue 0 along v
            let mut p = [[0.0; 3]; 3];
            for r in 0..3 {
                for c in 0..3 {
                    p[r][c] = f64::from(u8::from(r == c)) - v[r] * v[c];
                }
            }
            let mul = |a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]| {
                let mut o = [[0.0; 3]; 3];
                for r in 0..3 {
                    for c in 0..3 {
                        o[r][c] = (0..3).map(|i| a[r][i] * b[i][c]).sum();
                    }
                }
                o
            };
            let t = mul(&mul(&p, &s), &p);
            let tr = t[0][0] + t[1][1] + t[2][2];
            let tr2: f64 = (0..3).map(|r| (0..3).map(|c| t[r][c] * t[c][r]).sum::<f64>()).sum();
            let prod = 0.5 * (tr * tr - tr2);
            let disc = (0.25 * tr * tr - prod).max(0.0).sqrt();
            (0.5 * tr - disc, 0.5 * tr + disc)
        })
        .collect())
}

/// Smallest principal curvature over all quadrature points; negative once
/// the surface is no longer convex.
pub fn min_principal_curvature(asm: &Assembler, x: &[Vec3], n: &[Vec3]) -> Result<f64> {
    Ok(principal_curvatures(asm, x, n)?
        .into_iter()
        .map(|(k1, _)| k1)
        .fold(f64::INFINITY, f64::min))
}

/// Mean over nodes of `|x_j|`.
pub fn mean_radius(x: &[Vec3]) -> f64 {
    x.iter().map(|&p| norm(p)).sum::<f64>() / x.len() as f64
}

/// Largest `|mass_i - mass_0| / |mass_0|` over the rows.
pub fn max_relative_mass_drift(rows: &[MonitorRow]) -> f64 {
    let Some(first) = rows.first() else {
        return 0.0;
    };
    rows.iter()
        .map(|r| (r.mass - first.mass).abs() / first.mass.abs())
        .fold(0.0, f64::max)
}

/// First row index whose energy exceeds its predecessor by more than
/// `rel_tol` relative.
pub fn energy_increase(rows: &[MonitorRow], rel_tol: f64) -> Option<usize> {
    rows.windows(2)
        .position(|w| w[1].energy > w[0].energy + rel_tol * w[0].energy.abs())
        .map(|i| i + 1)
}
