//! Mass and stiffness matrices (plain and coefficient-weighted) and the
//! nonlinear load vectors, all on the surface spanned by a nodal position vector.
//!
//! Coefficients are evaluated at quadrature points from the interpolated finite
//! element functions. An [`Assembler`] holds what depends only on connectivity
//! (sparsity, scatter map, reference shape data); a [`Geometry`] holds the
//! per-quadrature-point Jacobian data for one set of node positions.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{BlockVector, CsrPattern, SparseMatrix};
use crate::mesh::{frame_from_shape, QuadratureRule, RefPoint, SurfaceMesh};
use crate::model::FlowModel;
use crate::vec3::{add, dot, scale, Vec3};

/// Connectivity-dependent assembly data, reusable for any node positions.
#[derive(Debug, Clone)]
pub struct Assembler {
    mesh: SurfaceMesh,
    rule: QuadratureRule,
    n_loc: usize,
    phi: Vec<f64>,
    dphi: Vec<[f64; 2]>,
    pattern: Arc<CsrPattern>,
    scatter: Vec<usize>,
}

/// Quadrature weights times area element, and tangential gradients of the
/// basis functions, at every quadrature point of every element.
#[derive(Debug, Clone)]
pub struct Geometry {
    jxw: Vec<f64>,
    grads: Vec<Vec3>,
    positions: Vec<Vec3>,
}

impl Geometry {
    /// `w_q * sqrt(det g)` per quadrature point, element-major.
    pub fn jxw(&self) -> &[f64] {
        &self.jxw
    }

    /// Image of each quadrature point on the discrete surface.
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }
}

impl Assembler {
    /// Uses the default rule for the mesh degree.
    pub fn new(mesh: &SurfaceMesh) -> Self {
        Self::with_rule(mesh, QuadratureRule::for_degree(mesh.degree()))
    }

    pub fn with_rule(mesh: &SurfaceMesh, rule: QuadratureRule) -> Self {
        let el = mesh.reference_element();
        let n_loc = el.local_node_count();
        let nq = rule.len();
        let mut phi = vec![0.0; nq * n_loc];
        let mut dphi = vec![[0.0; 2]; nq * n_loc];
        for (q, &p) in rule.points.iter().enumerate() {
            el.shape_values(p, &mut phi[q * n_loc..(q + 1) * n_loc]);
            el.shape_gradients(p, &mut dphi[q * n_loc..(q + 1) * n_loc]);
        }
        let mut rows = vec![Vec::new(); mesh.node_count()];
        for conn in mesh.elements() {
            for &i in conn {
                rows[i].extend_from_slice(conn);
            }
        }
        let pattern = Arc::new(CsrPattern::from_rows(rows).expect("mesh indices are in range"));
        let mut scatter = Vec::with_capacity(mesh.element_count() * n_loc * n_loc);
        for conn in mesh.elements() {
            for &i in conn {
                for &j in conn {
                    scatter.push(pattern.index_of(i, j).expect("pattern covers element"));
                }
            }
        }
        Self {
            mesh: mesh.clone(),
            rule,
            n_loc,
            phi,
            dphi,
            pattern,
            scatter,
        }
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn node_count(&self) -> usize {
        self.mesh.node_count()
    }

    /// Number of quadrature points over the whole mesh.
    pub fn qp_count(&self) -> usize {
        self.mesh.element_count() * self.rule.len()
    }

    fn check_nodal(&self, len: usize) -> Result<()> {
        if len == self.mesh.node_count() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.mesh.node_count(),
                got: len,
            })
        }
    }

    fn check_qp(&self, len: usize) -> Result<()> {
        if len == self.qp_count() {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: self.qp_count(),
                got: len,
            })
        }
    }

    /// Geometry of the surface with node positions `x`.
    pub fn geometry(&self, x: &[Vec3]) -> Result<Geometry> {
        self.check_nodal(x.len())?;
        let (n, nq) = (self.n_loc, self.rule.len());
        let total = self.qp_count();
        let mut jxw = Vec::with_capacity(total);
        let mut grads = Vec::with_capacity(total * n);
        let mut positions = Vec::with_capacity(total);
        for (e, conn) in self.mesh.elements().enumerate() {
            for q in 0..nq {
                let vals = &self.phi[q * n..(q + 1) * n];
                let dv = &self.dphi[q * n..(q + 1) * n];
                let f = frame_from_shape(x, conn, vals, dv).ok_or_else(|| {
                    Error::Geometry(format!(
                        "degenerate element {e} at quadrature point {:?}",
                        self.rule.points[q]
                    ))
                })?;
                jxw.push(self.rule.weights[q] * f.area_element);
                positions.push(f.position);
                grads.extend(dv.iter().map(|&g| f.tangential_gradient(g)));
            }
        }
        Ok(Geometry {
            jxw,
            grads,
            positions,
        })
    }

    /// Values of the finite element function with nodal values `vals` at all
    /// quadrature points.
    pub fn interpolate(&self, vals: &[f64]) -> Result<Vec<f64>> {
        self.check_nodal(vals.len())?;
        let (n, nq) = (self.n_loc, self.rule.len());
        let mut out = Vec::with_capacity(self.qp_count());
        for conn in self.mesh.elements() {
            for q in 0..nq {
                let phi = &self.phi[q * n..(q + 1) * n];
                out.push(conn.iter().zip(phi).map(|(&i, p)| vals[i] * p).sum());
            }
        }
        Ok(out)
    }

    pub fn interpolate_vec(&self, vals: &[Vec3]) -> Result<Vec<Vec3>> {
        self.check_nodal(vals.len())?;
        let (n, nq) = (self.n_loc, self.rule.len());
        let mut out = Vec::with_capacity(self.qp_count());
        for conn in self.mesh.elements() {
            for q in 0..nq {
                let phi = &self.phi[q * n..(q + 1) * n];
                let mut s = [0.0; 3];
                for (&i, &p) in conn.iter().zip(phi) {
                    s = add(s, scale(p, vals[i]));
                }
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Tangential gradient of a scalar finite element function at all quadrature points.
    pub fn gradient(&self, geo: &Geometry, vals: &[f64]) -> Result<Vec<Vec3>> {
        self.check_nodal(vals.len())?;
        let (n, nq) = (self.n_loc, self.rule.len());
        let mut out = Vec::with_capacity(self.qp_count());
        for (e, conn) in self.mesh.elements().enumerate() {
            for q in 0..nq {
                let g = &geo.grads[(e * nq + q) * n..(e * nq + q + 1) * n];
                let mut s = [0.0; 3];
                for (&i, &ga) in conn.iter().zip(g) {
                    s = add(s, scale(vals[i], ga));
                }
                out.push(s);
            }
        }
        Ok(out)
    }

    /// Tangential divergence of a vector finite element function at all quadrature points.
    pub fn divergence(&self, geo: &Geometry, vals: &[Vec3]) -> Result<Vec<f64>> {
        self.check_nodal(vals.len())?;
        let (n, nq) = (self.n_loc, self.rule.len());
        let mut out = Vec::with_capacity(self.qp_count());
        for (e, conn) in self.mesh.elements().enumerate() {
            for q in 0..nq {
                let g = &geo.grads[(e * nq + q) * n..(e * nq + q + 1) * n];
                out.push(conn.iter().zip(g).map(|(&i, &ga)| dot(vals[i], ga)).sum());
            }
        }
        Ok(out)
    }

    /// `∫ f` for `f` given at quadrature points.
    pub fn integrate(&self, geo: &Geometry, f: &[f64]) -> Result<f64> {
        self.check_qp(f.len())?;
        Ok(geo.jxw.iter().zip(f).map(|(w, v)| w * v).sum())
    }

    /// Load vector `b_j = ∫ f phi_j`.
    pub fn load(&self, geo: &Geometry, f: &[f64]) -> Result<Vec<f64>> {
        self.check_qp(f.len())?;
        let (n, nq) = (self.n_loc, self.rule.len());
        let mut b = vec![0.0; self.node_count()];
        for (e, conn) in self.mesh.elements().enumerate() {
            for q in 0..nq {
                let k = e * nq + q;
                let c = geo.jxw[k] * f[k];
                for (&i, &p) in conn.iter().zip(&self.phi[q * n..(q + 1) * n]) {
                    b[i] += c * p;
                }
            }
        }
        Ok(b)
    }

    /// Vector load `b_{j + l N} = ∫ f_l phi_j` as three blocks.
    pub fn load_vec(&self, geo: &Geometry, f: &[Vec3]) -> Result<BlockVector> {
        self.check_qp(f.len())?;
        let (n, nq, nn) = (self.n_loc, self.rule.len(), self.node_count());
        let mut b = BlockVector::zeros(3, nn);
        let data = b.as_mut_slice();
        for (e, conn) in self.mesh.elements().enumerate() {
            for q in 0..nq {
                let k = e * nq + q;
                let c = scale(geo.jxw[k], f[k]);
                for (&i, &p) in conn.iter().zip(&self.phi[q * n..(q + 1) * n]) {
                    for d in 0..3 {
                        data[d * nn + i] += c[d] * p;
                    }
                }
            }
        }
        Ok(b)
    }

    fn assemble(&self, geo: &Geometry, weight: Option<&[f64]>, stiffness: bool) -> Result<SparseMatrix> {
        if let Some(w) = weight {
            self.check_qp(w.len())?;
        }
        let n = self.n_loc;
        let mut values = vec![0.0; self.pattern.nnz()];
        let mut local = vec![0.0; n * n];
        for e in 0..self.mesh.element_count() {
            self.element_matrix_into(geo, e, weight, stiffness, &mut local);
            let scatter = &self.scatter[e * n * n..(e + 1) * n * n];
            for (&idx, &v) in scatter.iter().zip(&local) {
                values[idx] += v;
            }
        }
        SparseMatrix::from_pattern(self.pattern.clone(), values)
    }

    fn element_matrix_into(
        &self,
        geo: &Geometry,
        e: usize,
        weight: Option<&[f64]>,
        stiffness: bool,
        local: &mut [f64],
    ) {
        let (n, nq) = (self.n_loc, self.rule.len());
        local.iter_mut().for_each(|v| *v = 0.0);
        for q in 0..nq {
            let k = e * nq + q;
            let c = geo.jxw[k] * weight.map_or(1.0, |w| w[k]);
            if stiffness {
                let g = &geo.grads[k * n..(k + 1) * n];
                for a in 0..n {
                    for b in a..n {
                        local[a * n + b] += c * dot(g[a], g[b]);
                    }
                }
            } else {
                let phi = &self.phi[q * n..(q + 1) * n];
                for a in 0..n {
                    let ca = c * phi[a];
                    for b in a..n {
                        local[a * n + b] += ca * phi[b];
                    }
                }
            }
        }
        // mirror so the element matrix is exactly symmetric
        for a in 0..n {
            for b in 0..a {
                local[a * n + b] = local[b * n + a];
            }
        }
    }

    /// Local `n_loc x n_loc` mass matrix of element `e` (row-major).
    pub fn element_mass(&self, geo: &Geometry, e: usize) -> Vec<f64> {
        let mut local = vec![0.0; self.n_loc * self.n_loc];
        self.element_matrix_into(geo, e, None, false, &mut local);
        local
    }

    /// Local stiffness matrix of element `e` (row-major).
    pub fn element_stiffness(&self, geo: &Geometry, e: usize) -> Vec<f64> {
        let mut local = vec![0.0; self.n_loc * self.n_loc];
        self.element_matrix_into(geo, e, None, true, &mut local);
        local
    }

    /// `M_ij = ∫ phi_i phi_j`.
    pub fn mass(&self, geo: &Geometry) -> Result<SparseMatrix> {
        self.assemble(geo, None, false)
    }

    /// `A_ij = ∫ grad phi_i . grad phi_j`.
    pub fn stiffness(&self, geo: &Geometry) -> Result<SparseMatrix> {
        self.assemble(geo, None, true)
    }

    /// `∫ w phi_i phi_j` with `w` given at quadrature points.
    pub fn weighted_mass(&self, geo: &Geometry, w: &[f64]) -> Result<SparseMatrix> {
        self.assemble(geo, Some(w), false)
    }

    /// `∫ w grad phi_i . grad phi_j` with `w` given at quadrature points.
    pub fn weighted_stiffness(&self, geo: &Geometry, w: &[f64]) -> Result<SparseMatrix> {
        self.assemble(geo, Some(w), true)
    }

    /// `|A_h|^2` at every quadrature point, where `A_h` is the symmetric part of
    /// the tangential gradient of the normal field `n` (or the full gradient
    /// when `full` is set).
    pub fn shape_operator_sq(&self, geo: &Geometry, n_field: &[Vec3], full: bool) -> Result<Vec<f64>> {
        self.check_nodal(n_field.len())?;
        let (n, nq) = (self.n_loc, self.rule.len());
        let mut out = Vec::with_capacity(self.qp_count());
        for (e, conn) in self.mesh.elements().enumerate() {
            for q in 0..nq {
                let k = e * nq + q;
                let g = &geo.grads[k * n..(k + 1) * n];
                // column l is the tangential gradient of component l
                let mut m = [[0.0; 3]; 3];
                for (&i, &ga) in conn.iter().zip(g) {
                    let ni = n_field[i];
                    for l in 0..3 {
                        for r in 0..3 {
                            m[r][l] += ni[l] * ga[r];
                        }
                    }
                }
                out.push(frobenius_sq(&m, full));
            }
        }
        Ok(out)
    }

    /// Evaluates `coef(u, v)` at every quadrature point.
    pub fn eval2(
        &self,
        a: &[f64],
        b: &[f64],
        coef: impl Fn(f64, f64) -> Result<f64>,
    ) -> Result<Vec<f64>> {
        self.check_qp(a.len())?;
        self.check_qp(b.len())?;
        a.iter().zip(b).map(|(&x, &y)| coef(x, y)).collect()
    }

    /// Element and reference point of quadrature index `k`.
    pub fn locate(&self, k: usize) -> (usize, RefPoint) {
        let nq = self.rule.len();
        (k / nq, self.rule.points[k % nq])
    }

    /// `∂₂K(u_h, V_h)` at quadrature points, checked positive.
    pub fn mass_weight_k(&self, model: &dyn FlowModel, u_qp: &[f64], v_qp: &[f64]) -> Result<Vec<f64>> {
        let w = self.eval2(u_qp, v_qp, |u, v| model.d2_k(u, v))?;
        self.require_positive(&w, "Assumption 4, d2K > 0", "d2K")?;
        Ok(w)
    }

    /// `1 / ∂₂F(u_h, H_h)` at quadrature points, checked positive.
    pub fn mass_weight_f(&self, model: &dyn FlowModel, u_qp: &[f64], h_qp: &[f64]) -> Result<Vec<f64>> {
        let d2f = self.eval2(u_qp, h_qp, |u, h| model.d2_f(u, h))?;
        self.require_positive(&d2f, "Assumption 2, 1/d2F > 0", "d2F")?;
        Ok(d2f.into_iter().map(|d| 1.0 / d).collect())
    }

    /// `D(u_h)` at quadrature points, checked against the model bounds.
    pub fn diffusion_weight(&self, model: &dyn FlowModel, u_qp: &[f64]) -> Result<Vec<f64>> {
        self.check_qp(u_qp.len())?;
        let (d0, d1) = model.diffusion_bounds();
        let slack = 1e-12 * d1.abs();
        let mut out = Vec::with_capacity(u_qp.len());
        for (k, &u) in u_qp.iter().enumerate() {
            let d = model.diffusion(u)?;
            if !(d >= d0 - slack && d <= d1 + slack) {
                let (e, p) = self.locate(k);
                return Err(Error::ModelAssumption {
                    assumption: "Assumption 6, D0 <= D <= D1",
                    detail: format!(
                        "D = {d:e} outside [{d0:e}, {d1:e}] in element {e} at {p:?} (u = {u:e})"
                    ),
                });
            }
            out.push(d);
        }
        Ok(out)
    }

    fn require_positive(&self, w: &[f64], assumption: &'static str, what: &str) -> Result<()> {
        if let Some(k) = w.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            let (e, p) = self.locate(k);
            return Err(Error::ModelAssumption {
                assumption,
                detail: format!("{what} = {:e} in element {e} at {p:?}", w[k]),
            });
        }
        Ok(())
    }

    /// Right-hand side of the `(n, V)` system as four blocks `(f1_x, f1_y, f1_z, f2)`:
    ///
    /// `f1_l,j = ∫ |A_h|² (n_h)_l phi_j + ∫ ∂₁K (grad u_h)_l phi_j`,
    /// `f2_j = ∫ |A_h|² V_h phi_j - ∫ ∂₁K udot_h phi_j`.
    #[allow(clippy::too_many_arguments)]
    pub fn f1_f2(
        &self,
        geo: &Geometry,
        model: &dyn FlowModel,
        n_field: &[Vec3],
        v: &[f64],
        u: &[f64],
        udot: &[f64],
        full_shape_operator: bool,
    ) -> Result<BlockVector> {
        let a2 = self.shape_operator_sq(geo, n_field, full_shape_operator)?;
        let n_qp = self.interpolate_vec(n_field)?;
        let v_qp = self.interpolate(v)?;
        let u_qp = self.interpolate(u)?;
        let udot_qp = self.interpolate(udot)?;
        let grad_u = self.gradient(geo, u)?;
        let d1k = self.eval2(&u_qp, &v_qp, |a, b| model.d1_k(a, b))?;
        let f1_src: Vec<Vec3> = (0..a2.len())
            .map(|k| add(scale(a2[k], n_qp[k]), scale(d1k[k], grad_u[k])))
            .collect();
        let f2_src: Vec<f64> = (0..a2.len())
            .map(|k| a2[k] * v_qp[k] - d1k[k] * udot_qp[k])
            .collect();
        let f1 = self.load_vec(geo, &f1_src)?;
        let f2 = self.load(geo, &f2_src)?;
        let mut data = f1.into_vec();
        data.extend(f2);
        BlockVector::from_flat(4, data)
    }

    /// Source of the normal equation for the `(n, H)` formulation and the
    /// velocity load: `f3_l,j = ∫ |A_h|² (n_h)_l phi_j + ∫ (∂₁F/∂₂F) (grad u_h)_l phi_j`,
    /// `Fvec_j = ∫ F(u_h, H_h) phi_j`.
    #[allow(clippy::too_many_arguments)]
    pub fn f3_fvec(
        &self,
        geo: &Geometry,
        model: &dyn FlowModel,
        n_field: &[Vec3],
        h: &[f64],
        u: &[f64],
        full_shape_operator: bool,
    ) -> Result<(BlockVector, Vec<f64>)> {
        let a2 = self.shape_operator_sq(geo, n_field, full_shape_operator)?;
        let n_qp = self.interpolate_vec(n_field)?;
        let h_qp = self.interpolate(h)?;
        let u_qp = self.interpolate(u)?;
        let grad_u = self.gradient(geo, u)?;
        let d2f = self.eval2(&u_qp, &h_qp, |a, b| model.d2_f(a, b))?;
        self.require_positive(&d2f, "Assumption 2, 1/d2F > 0", "d2F")?;
        let d1f = self.eval2(&u_qp, &h_qp, |a, b| model.d1_f(a, b))?;
        let f_qp = self.eval2(&u_qp, &h_qp, |a, b| model.f(a, b))?;
        let src: Vec<Vec3> = (0..a2.len())
            .map(|k| add(scale(a2[k], n_qp[k]), scale(d1f[k] / d2f[k], grad_u[k])))
            .collect();
        Ok((self.load_vec(geo, &src)?, self.load(geo, &f_qp)?))
    }

    /// `∫ G(u_h)`.
    pub fn energy(&self, geo: &Geometry, model: &dyn FlowModel, u: &[f64]) -> Result<f64> {
        let u_qp = self.interpolate(u)?;
        let g: Vec<f64> = u_qp
            .iter()
            .map(|&x| model.energy_density(x))
            .collect::<Result<_>>()?;
        self.integrate(geo, &g)
    }
}

fn frobenius_sq(m: &[[f64; 3]; 3], full: bool) -> f64 {
    let mut s = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            let v = if full { m[r][c] } else { 0.5 * (m[r][c] + m[c][r]) };
            s += v * v;
        }
    }
    s
}

/// `M(x)` on the surface with node positions `x`.
pub fn assemble_mass(mesh: &SurfaceMesh, x: &[Vec3]) -> Result<SparseMatrix> {
    let asm = Assembler::new(mesh);
    asm.mass(&asm.geometry(x)?)
}

/// `A(x)` on the surface with node positions `x`.
pub fn assemble_stiffness(mesh: &SurfaceMesh, x: &[Vec3]) -> Result<SparseMatrix> {
    let asm = Assembler::new(mesh);
    asm.stiffness(&asm.geometry(x)?)
}

/// `∫ weight(u_h, V_h) phi_i phi_j`; the weight must be positive everywhere.
pub fn assemble_weighted_mass(
    mesh: &SurfaceMesh,
    x: &[Vec3],
    u: &[f64],
    v: &[f64],
    weight: impl Fn(f64, f64) -> Result<f64>,
) -> Result<SparseMatrix> {
    let asm = Assembler::new(mesh);
    let geo = asm.geometry(x)?;
    let w = asm.eval2(&asm.interpolate(u)?, &asm.interpolate(v)?, weight)?;
    asm.require_positive(&w, "Assumption 4, d2K > 0", "mass weight")?;
    asm.weighted_mass(&geo, &w)
}

/// `∫ D(u_h) grad phi_i . grad phi_j` with `D` from `model`.
pub fn assemble_weighted_stiffness(
    mesh: &SurfaceMesh,
    x: &[Vec3],
    u: &[f64],
    model: &dyn FlowModel,
) -> Result<SparseMatrix> {
    let asm = Assembler::new(mesh);
    let geo = asm.geometry(x)?;
    let d = asm.diffusion_weight(model, &asm.interpolate(u)?)?;
    asm.weighted_stiffness(&geo, &d)
}

/// `|A_h|²` of the normal field `n` at one point of one element.
pub fn shape_operator_sq(
    mesh: &SurfaceMesh,
    x: &[Vec3],
    n_field: &[Vec3],
    elem: usize,
    p: RefPoint,
) -> Result<f64> {
    if n_field.len() != mesh.node_count() {
        return Err(Error::Dimension {
            expected: mesh.node_count(),
            got: n_field.len(),
        });
    }
    let el = mesh.reference_element();
    let nl = el.local_node_count();
    let mut grads = [[0.0; 2]; 6];
    el.shape_gradients(p, &mut grads[..nl]);
    let f = crate::mesh::element_frame(mesh, x, elem, p)?;
    let mut m = [[0.0; 3]; 3];
    for (a, &i) in mesh.element(elem).iter().enumerate() {
        let ga = f.tangential_gradient(grads[a]);
        for l in 0..3 {
            for r in 0..3 {
                m[r][l] += n_field[i][l] * ga[r];
            }
        }
    }
    Ok(frobenius_sq(&m, false))
}

/// `(f1; f2)` as a four-block vector; see [`Assembler::f1_f2`].
#[allow(clippy::too_many_arguments)]
pub fn assemble_f1_f2(
    mesh: &SurfaceMesh,
    x: &[Vec3],
    n_field: &[Vec3],
    v: &[f64],
    u: &[f64],
    udot: &[f64],
    model: &dyn FlowModel,
) -> Result<BlockVector> {
    let asm = Assembler::new(mesh);
    let geo = asm.geometry(x)?;
    asm.f1_f2(&geo, model, n_field, v, u, udot, false)
}

/// `(f3, Fvec)`; see [`Assembler::f3_fvec`].
pub fn assemble_f3_and_fvec(
    mesh: &SurfaceMesh,
    x: &[Vec3],
    n_field: &[Vec3],
    h: &[f64],
    u: &[f64],
    model: &dyn FlowModel,
) -> Result<(BlockVector, Vec<f64>)> {
    let asm = Assembler::new(mesh);
    let geo = asm.geometry(x)?;
    asm.f3_fvec(&geo, model, n_field, h, u, false)
}
