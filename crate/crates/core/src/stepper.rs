//! Linearly implicit BDF time stepping for the two formulations: evolving
//! `(n, V)` with the velocity law inverted (`P1`), or `(n, H)` with the
//! velocity obtained algebraically (`P2`).
//!
//! Every step is a fixed sequence of symmetric positive definite solves with
//! coefficients frozen at extrapolated values.

use std::collections::VecDeque;
use std::sync::Arc;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::assembly::Assembler;
use crate::error::{Error, Result};
use crate::linalg::{cg_solve, CgOptions, SparseMatrix};
use crate::mesh::SurfaceMesh;
use crate::model::FlowModel;
use crate::vec3::{normalize, scale, Vec3};

pub const MAX_BDF_ORDER: usize = 5;

/// BDF coefficients `delta_0..delta_q` of `δ(ζ) = Σ_{l=1}^q (1/l)(1-ζ)^l` and
/// extrapolation weights `gamma_0..gamma_{q-1}` of `γ(ζ) = (1 - (1-ζ)^q)/ζ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BdfCoefficients {
    pub q: usize,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta_exact: Vec<Ratio<i64>>,
    pub gamma_exact: Vec<Ratio<i64>>,
}

fn binomial(n: usize, k: usize) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i as i64 + 1))
}

fn sign(k: usize) -> i64 {
    if k % 2 == 0 {
        1
    } else {
        -1
    }
}

pub fn bdf_coefficients(q: usize) -> Result<BdfCoefficients> {
    if !(1..=MAX_BDF_ORDER).contains(&q) {
        return Err(Error::Validation(format!(
            "BDF order must be in 1..={MAX_BDF_ORDER}, got {q}"
        )));
    }
    let delta_exact: Vec<Ratio<i64>> = (0..=q)
        .map(|j| {
            (1..=q)
                .filter(|&l| j <= l)
                .map(|l| Ratio::new(sign(j) * binomial(l, j), l as i64))
                .sum()
        })
        .collect();
    let gamma_exact: Vec<Ratio<i64>> = (1..=q)
        .map(|k| Ratio::from_integer(-sign(k) * binomial(q, k)))
        .collect();
    let to_f64 = |r: &Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;
    Ok(BdfCoefficients {
        q,
        delta: delta_exact.iter().map(to_f64).collect(),
        gamma: gamma_exact.iter().map(to_f64).collect(),
        delta_exact,
        gamma_exact,
    })
}

/// Which unknowns carry the geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Normal and normal velocity, `H = -K(u, V)`.
    P1,
    /// Normal and mean curvature, `V = -F(u, H)`.
    P2,
}

/// Nodal values at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub x: Vec<Vec3>,
    /// Velocity `V n`.
    pub vel: Vec<Vec3>,
    pub n: Vec<Vec3>,
    /// Normal velocity.
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    /// Mean curvature (scheme `P2` only).
    pub h: Option<Vec<f64>>,
}

impl FlowState {
    pub fn new(t: f64, x: Vec<Vec3>, n: Vec<Vec3>, v: Vec<f64>, u: Vec<f64>, h: Option<Vec<f64>>) -> Result<Self> {
        let len = x.len();
        for got in [n.len(), v.len(), u.len(), h.as_ref().map_or(len, Vec::len)] {
            if got != len {
                return Err(Error::Dimension { expected: len, got });
            }
        }
        let vel = n.iter().zip(&v).map(|(&ni, &vi)| scale(vi, ni)).collect();
        Ok(Self { t, x, vel, n, v, u, h })
    }

    pub fn node_count(&self) -> usize {
        self.x.len()
    }

    /// `sum_j c_j s_j` componentwise; `t` is combined the same way.
    fn combine(states: &[&FlowState], coef: &[f64]) -> FlowState {
        let len = states[0].node_count();
        let mut out = FlowState {
            t: 0.0,
            x: vec![[0.0; 3]; len],
            vel: vec![[0.0; 3]; len],
            n: vec![[0.0; 3]; len],
            v: vec![0.0; len],
            u: vec![0.0; len],
            h: states[0].h.as_ref().map(|_| vec![0.0; len]),
        };
        for (s, &c) in states.iter().zip(coef) {
            out.t += c * s.t;
            for i in 0..len {
                for d in 0..3 {
                    out.x[i][d] += c * s.x[i][d];
                    out.vel[i][d] += c * s.vel[i][d];
                    out.n[i][d] += c * s.n[i][d];
                }
                out.v[i] += c * s.v[i];
                out.u[i] += c * s.u[i];
            }
            if let (Some(oh), Some(sh)) = (out.h.as_mut(), s.h.as_ref()) {
                for i in 0..len {
                    oh[i] += c * sh[i];
                }
            }
        }
        out
    }
}

/// One stored time level plus the cached product `M(x̃) u` of the mass matrix
/// on the geometry the level was computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub state: FlowState,
    pub mass_u: Vec<f64>,
}

/// The most recent `q` levels, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    q: usize,
    levels: VecDeque<Level>,
}

impl History {
    pub fn new(q: usize) -> Self {
        Self {
            q,
            levels: VecDeque::with_capacity(q + 1),
        }
    }

    pub fn order(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.levels.len() == self.q
    }

    /// Appends a level, dropping the oldest when more than `q` are stored.
    pub fn push(&mut self, level: Level) {
        self.levels.push_back(level);
        while self.levels.len() > self.q {
            self.levels.pop_front();
        }
    }

    pub fn latest(&self) -> Option<&FlowState> {
        self.levels.back().map(|l| &l.state)
    }

    /// `j`-th most recent level (`back(0)` is the latest).
    pub fn back(&self, j: usize) -> Option<&Level> {
        self.levels.len().checked_sub(j + 1).map(|i| &self.levels[i])
    }

    pub fn levels(&self) -> impl Iterator<Item = &Level> {
        self.levels.iter()
    }
}

/// Extrapolated state `Σ_j γ_j s^{n-1-j}` from a full history.
pub fn extrapolate(history: &History, gamma: &[f64]) -> Result<FlowState> {
    if history.len() < gamma.len() {
        return Err(Error::Validation(format!(
            "extrapolation needs {} levels, history has {}",
            gamma.len(),
            history.len()
        )));
    }
    let states: Vec<&FlowState> = (0..gamma.len()).map(|j| &history.back(j).unwrap().state).collect();
    Ok(FlowState::combine(&states, gamma))
}

/// Per-step options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepOptions {
    pub cg_rel_tol: f64,
    pub cg_max_iter: Option<usize>,
    /// Rescale the computed normals to unit length after every step.
    pub renormalize: bool,
    /// Use the full instead of the symmetrised normal gradient in `|A_h|²`.
    pub full_shape_operator: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            cg_rel_tol: 1e-10,
            cg_max_iter: None,
            renormalize: false,
            full_shape_operator: false,
        }
    }
}

/// Advances a [`History`] by one step of size `tau`.
#[derive(Debug)]
pub struct Stepper {
    asm: Assembler,
    model: Arc<dyn FlowModel>,
    scheme: Scheme,
    bdf: BdfCoefficients,
    tau: f64,
    opts: StepOptions,
}

impl Stepper {
    pub fn new(
        mesh: &SurfaceMesh,
        model: Arc<dyn FlowModel>,
        scheme: Scheme,
        q: usize,
        tau: f64,
        opts: StepOptions,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Validation(format!("time step must be positive, got {tau}")));
        }
        Ok(Self {
            asm: Assembler::new(mesh),
            model,
            scheme,
            bdf: bdf_coefficients(q)?,
            tau,
            opts,
        })
    }

    /// Same mesh, model and scheme with another order and step size.
    pub fn with_step(&self, q: usize, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Validation(format!("time step must be positive, got {tau}")));
        }
        Ok(Self {
            asm: self.asm.clone(),
            model: self.model.clone(),
            scheme: self.scheme,
            bdf: bdf_coefficients(q)?,
            tau,
            opts: self.opts,
        })
    }

    pub fn options(&self) -> &StepOptions {
        &self.opts
    }

    pub fn assembler(&self) -> &Assembler {
        &self.asm
    }

    pub fn model(&self) -> &dyn FlowModel {
        self.model.as_ref()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn order(&self) -> usize {
        self.bdf.q
    }

    pub fn coefficients(&self) -> &BdfCoefficients {
        &self.bdf
    }

    fn cg_options(&self) -> CgOptions {
        CgOptions {
            rel_tol: self.opts.cg_rel_tol,
            max_iter: self.opts.cg_max_iter,
        }
    }

    fn solve(&self, a: &SparseMatrix, b: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
        let opts = self.cg_options();
        let max_iter = opts.max_iter.unwrap_or(10 * a.dim());
        Ok(cg_solve(a, b, Some(x0), opts.rel_tol, max_iter)?.x)
    }

    /// A start level: `state` with its mass product on its own geometry.
    pub fn level(&self, state: FlowState) -> Result<Level> {
        if state.h.is_none() && self.scheme == Scheme::P2 {
            return Err(Error::Validation("scheme P2 needs mean curvature in the state".into()));
        }
        let geo = self.asm.geometry(&state.x)?;
        let mass_u = self.asm.mass(&geo)?.mul_vec(&state.u)?;
        Ok(Level { state, mass_u })
    }

    /// History filled with the given start levels (oldest first).
    pub fn history_from_states(&self, states: Vec<FlowState>) -> Result<History> {
        if states.len() != self.bdf.q {
            return Err(Error::Validation(format!(
                "BDF{} needs {} start levels, got {}",
                self.bdf.q,
                self.bdf.q,
                states.len()
            )));
        }
        let mut h = History::new(self.bdf.q);
        for s in states {
            h.push(self.level(s)?);
        }
        Ok(h)
    }

    /// Computes the next level and appends it to `history`.
    pub fn step(&self, history: &mut History) -> Result<()> {
        if !history.is_full() || history.order() != self.bdf.q {
            return Err(Error::Validation(format!(
                "BDF{} step needs a full history of {} levels, have {}",
                self.bdf.q,
                self.bdf.q,
                history.len()
            )));
        }
        let level = match self.scheme {
            Scheme::P1 => self.step_p1(history)?,
            Scheme::P2 => self.step_p2(history)?,
        };
        history.push(level);
        Ok(())
    }

    /// `Σ_{j>=1} δ_j s^{n-j}` for a nodal quantity selected by `f`.
    fn history_sum<T: Nodal>(&self, history: &History, f: impl Fn(&Level) -> &[T]) -> Vec<T> {
        let len = f(history.back(0).unwrap()).len();
        let mut out = vec![T::ZERO; len];
        for j in 1..=self.bdf.q {
            let lv = history.back(j - 1).unwrap();
            let d = self.bdf.delta[j];
            for (o, &s) in out.iter_mut().zip(f(lv)) {
                o.axpy(d, s);
            }
        }
        out
    }

    fn u_solve(&self, history: &History, ext: &FlowState, geo: &crate::assembly::Geometry, m: &SparseMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let tau = self.tau;
        let d0 = self.bdf.delta[0];
        let u_qp = self.asm.interpolate(&ext.u)?;
        let dw = self.asm.diffusion_weight(self.model(), &u_qp)?;
        let a_u = self.asm.weighted_stiffness(geo, &dw)?;
        let lhs = m.linear_combination(d0, &a_u, tau)?;
        let rhs: Vec<f64> = self.history_sum(history, |l| &l.mass_u).iter().map(|v| -v).collect();
        let u = self.solve(&lhs, &rhs, &ext.u)?;
        let mass_u = m.mul_vec(&u)?;
        Ok((u, mass_u))
    }

    fn backward_difference(&self, history: &History, newest: &[f64], f: impl Fn(&FlowState) -> &[f64]) -> Vec<f64> {
        let past = self.history_sum(history, |l| f(&l.state));
        newest
            .iter()
            .zip(&past)
            .map(|(&a, &b)| (self.bdf.delta[0] * a + b) / self.tau)
            .collect()
    }

    /// Solves `(δ₀ Mw + τ A) z = τ src - Mw Σ_{j>=1} δ_j z^{n-j}` for each
    /// scalar block `z`.
    fn block_solve(
        &self,
        mw: &SparseMatrix,
        a: &SparseMatrix,
        src: &[f64],
        past: &[f64],
        guess: &[f64],
    ) -> Result<Vec<f64>> {
        let lhs = mw.linear_combination(self.bdf.delta[0], a, self.tau)?;
        let mp = mw.mul_vec(past)?;
        let rhs: Vec<f64> = src.iter().zip(&mp).map(|(s, p)| self.tau * s - p).collect();
        self.solve(&lhs, &rhs, guess)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(&self, history: &History, u: Vec<f64>, n: Vec<Vec3>, v: Vec<f64>, h: Option<Vec<f64>>, mass_u: Vec<f64>) -> Result<Level> {
        let n = if self.opts.renormalize {
            n.into_iter().map(normalize).collect()
        } else {
            n
        };
        let vel: Vec<Vec3> = n.iter().zip(&v).map(|(&ni, &vi)| scale(vi, ni)).collect();
        let past_x = self.history_sum(history, |l| &l.state.x);
        let d0 = self.bdf.delta[0];
        let x: Vec<Vec3> = vel
            .iter()
            .zip(&past_x)
            .map(|(&w, &p)| {
                [
                    (self.tau * w[0] - p[0]) / d0,
                    (self.tau * w[1] - p[1]) / d0,
                    (self.tau * w[2] - p[2]) / d0,
                ]
            })
            .collect();
        let t = history.latest().unwrap().t + self.tau;
        Ok(Level {
            state: FlowState { t, x, vel, n, v, u, h },
            mass_u,
        })
    }

    fn step_p1(&self, history: &History) -> Result<Level> {
        let ext = extrapolate(history, &self.bdf.gamma)?;
        let geo = self.asm.geometry(&ext.x)?;
        let m = self.asm.mass(&geo)?;
        let (u, mass_u) = self.u_solve(history, &ext, &geo, &m)?;
        let udot = self.backward_difference(history, &u, |s| &s.u);

        let u_qp = self.asm.interpolate(&ext.u)?;
        let v_qp = self.asm.interpolate(&ext.v)?;
        let mw = self.asm.weighted_mass(&geo, &self.asm.mass_weight_k(self.model(), &u_qp, &v_qp)?)?;
        let a = self.asm.stiffness(&geo)?;
        let f = self.asm.f1_f2(
            &geo,
            self.model(),
            &ext.n,
            &ext.v,
            &ext.u,
            &udot,
            self.opts.full_shape_operator,
        )?;
        let past_n = self.history_sum(history, |l| &l.state.n);
        let past_v = self.history_sum(history, |l| &l.state.v);
        let mut n = vec![[0.0; 3]; u.len()];
        for d in 0..3 {
            let past: Vec<f64> = past_n.iter().map(|p| p[d]).collect();
            let guess: Vec<f64> = ext.n.iter().map(|p| p[d]).collect();
            let sol = self.block_solve(&mw, &a, f.block(d), &past, &guess)?;
            for (ni, s) in n.iter_mut().zip(sol) {
                ni[d] = s;
            }
        }
        let v = self.block_solve(&mw, &a, f.block(3), &past_v, &ext.v)?;
        self.finish(history, u, n, v, None, mass_u)
    }

    fn step_p2(&self, history: &History) -> Result<Level> {
        let ext = extrapolate(history, &self.bdf.gamma)?;
        let h_ext = ext
            .h
            .as_ref()
            .ok_or_else(|| Error::Validation("scheme P2 needs mean curvature in the state".into()))?;
        let geo = self.asm.geometry(&ext.x)?;
        let m = self.asm.mass(&geo)?;
        let a = self.asm.stiffness(&geo)?;
        let (u, mass_u) = self.u_solve(history, &ext, &geo, &m)?;

        // mean curvature: ∂H = -ΔV - |A|²V with -ΔV = div(∂₂F ∇H + ∂₁F ∇u); the
        // ∂₂F part is implicit, the rest uses u^n and extrapolated values
        let ue_qp = self.asm.interpolate(&ext.u)?;
        let he_qp = self.asm.interpolate(h_ext)?;
        let d2f = self.asm.eval2(&ue_qp, &he_qp, |a, b| self.model.d2_f(a, b))?;
        if let Some(k) = d2f.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
            let (e, p) = self.asm.locate(k);
            return Err(Error::ModelAssumption {
                assumption: "Assumption 2, d2F > 0",
                detail: format!("d2F = {} on element {e} at ({:.3}, {:.3})", d2f[k], p[0], p[1]),
            });
        }
        let d1f = self.asm.eval2(&ue_qp, &he_qp, |a, b| self.model.d1_f(a, b))?;
        let a_h = self.asm.weighted_stiffness(&geo, &d2f)?;
        let cross = self.asm.weighted_stiffness(&geo, &d1f)?.mul_vec(&u)?;
        let a2 = self.asm.shape_operator_sq(&geo, &ext.n, self.opts.full_shape_operator)?;
        let v_qp = self.asm.interpolate(&ext.v)?;
        let a2v: Vec<f64> = a2.iter().zip(&v_qp).map(|(x, y)| x * y).collect();
        let g = self.asm.load(&geo, &a2v)?;
        let src: Vec<f64> = cross.iter().zip(&g).map(|(c, gi)| -c - gi).collect();
        let past_h = self.history_sum(history, |l| l.state.h.as_deref().unwrap_or(&[]));
        let h = self.block_solve(&m, &a_h, &src, &past_h, h_ext)?;

        // velocity law: M V = -∫ F(u_h, H_h) phi
        let un_qp = self.asm.interpolate(&u)?;
        let hn_qp = self.asm.interpolate(&h)?;
        let f_qp = self.asm.eval2(&un_qp, &hn_qp, |a, b| self.model.f(a, b))?;
        let fvec: Vec<f64> = self.asm.load(&geo, &f_qp)?.into_iter().map(|x| -x).collect();
        let v = self.solve(&m, &fvec, &ext.v)?;

        // normal: weight 1/∂₂F and source f3 at extrapolated values
        let mw = self.asm.weighted_mass(&geo, &self.asm.mass_weight_f(self.model(), &ue_qp, &he_qp)?)?;
        let (f3, _) = self.asm.f3_fvec(
            &geo,
            self.model(),
            &ext.n,
            h_ext,
            &ext.u,
            self.opts.full_shape_operator,
        )?;
        let past_n = self.history_sum(history, |l| &l.state.n);
        let mut n = vec![[0.0; 3]; u.len()];
        for d in 0..3 {
            let past: Vec<f64> = past_n.iter().map(|p| p[d]).collect();
            let guess: Vec<f64> = ext.n.iter().map(|p| p[d]).collect();
            let sol = self.block_solve(&mw, &a, f3.block(d), &past, &guess)?;
            for (ni, s) in n.iter_mut().zip(sol) {
                ni[d] = s;
            }
        }
        self.finish(history, u, n, v, Some(h), mass_u)
    }
}

/// How the start levels `1..q-1` of a BDF-`q` run are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BootstrapMode {
    /// Interpolated exact solution (radial test family only).
    Exact,
    /// BDF1 with step `tau / 2^log2_refinement`; a default is derived from `tau`
    /// and `q` when unset.
    Substep {
        #[serde(default)]
        log2_refinement: Option<u32>,
    },
}

impl Default for BootstrapMode {
    fn default() -> Self {
        BootstrapMode::Substep { log2_refinement: None }
    }
}

/// Refinement used by [`bootstrap_substep`] when none is given: enough that the
/// BDF1 start error `~ tau_sub * tau` stays below `tau^q`, plus a margin of 4,
/// capped at `2^12` substeps.
pub fn default_substep_refinement(q: usize, tau: f64) -> u32 {
    let need = (q.saturating_sub(2) as f64 * (1.0 / tau).log2()).ceil().max(0.0);
    (need as u32 + 2).min(12)
}

/// History whose levels are `exact(i tau)` for `i < q`.
pub fn bootstrap_exact(stepper: &Stepper, exact: impl Fn(f64) -> Result<FlowState>) -> Result<History> {
    let states = (0..stepper.order())
        .map(|i| exact(i as f64 * stepper.tau()))
        .collect::<Result<Vec<_>>>()?;
    stepper.history_from_states(states)
}

/// History started from `initial` with BDF1 substeps of size `tau / 2^s`.
pub fn bootstrap_substep(stepper: &Stepper, initial: FlowState, log2_refinement: Option<u32>) -> Result<History> {
    let q = stepper.order();
    let s = log2_refinement.unwrap_or_else(|| default_substep_refinement(q, stepper.tau()));
    let t0 = initial.t;
    let mut states = vec![initial.clone()];
    if q > 1 {
        let sub = 1usize << s;
        let fine = stepper.with_step(1, stepper.tau() / sub as f64)?;
        let mut h = fine.history_from_states(vec![initial])?;
        for i in 1..q {
            for _ in 0..sub {
                fine.step(&mut h)?;
            }
            let mut st = h.latest().unwrap().clone();
            // avoid accumulated rounding in the time stamps
            st.t = t0 + i as f64 * stepper.tau();
            states.push(st);
        }
    }
    stepper.history_from_states(states)
}

/// One BDF step for the scalar test equation `y' = lambda y`; `past` holds
/// `y^{n-1}, ..., y^{n-q}`.
pub fn bdf_scalar_step(bdf: &BdfCoefficients, tau: f64, lambda: f64, past: &[f64]) -> f64 {
    let s: f64 = (1..=bdf.q).map(|j| bdf.delta[j] * past[j - 1]).sum();
    -s / (bdf.delta[0] - tau * lambda)
}

/// Nodal value types that can be accumulated in history sums.
pub trait Nodal: Copy {
    const ZERO: Self;
    fn axpy(&mut self, c: f64, x: Self);
}

impl Nodal for f64 {
    const ZERO: Self = 0.0;
    fn axpy(&mut self, c: f64, x: Self) {
        *self += c * x;
    }
}

impl Nodal for Vec3 {
    const ZERO: Self = [0.0; 3];
    fn axpy(&mut self, c: f64, x: Self) {
        for d in 0..3 {
            self[d] += c * x[d];
        }
    }
}
