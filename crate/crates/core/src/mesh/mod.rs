//! Triangulated closed surfaces with flat (degree 1) or curved isoparametric
//! (degree 2) elements.

mod io;
mod reference;
mod surface;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::vec3::{add, cross, dot, norm, scale, sub, Vec3};

pub use io::{read_off, write_off, write_vtk, write_vtk_quadratic, Field, FieldData};
pub use reference::{QuadratureRule, RefPoint, ReferenceElement};
pub use surface::{ImplicitSurface, SurfaceKind};

/// Largest icosphere refinement level accepted (20 * 4^7 = 327 680 faces).
pub const MAX_ICOSPHERE_LEVEL: u32 = 7;

/// Node positions plus fixed element connectivity.
///
/// Only positions change during an evolution; connectivity, degree and node
/// numbering stay fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub nodes: Vec<Vec3>,
    elements: Vec<usize>,
    element: ReferenceElement,
}

impl SurfaceMesh {
    /// Builds a mesh and checks that it is a closed, consistently oriented
    /// surface in which every node is used.
    pub fn new(nodes: Vec<Vec3>, elements: Vec<Vec<usize>>, degree: usize) -> Result<Self> {
        let element = ReferenceElement::new(degree)?;
        let n_loc = element.local_node_count();
        let mut flat = Vec::with_capacity(elements.len() * n_loc);
        for (e, conn) in elements.iter().enumerate() {
            if conn.len() != n_loc {
                return Err(Error::Validation(format!(
                    "element {e} has {} nodes, degree {degree} needs {n_loc}",
                    conn.len()
                )));
            }
            flat.extend_from_slice(conn);
        }
        let mesh = Self {
            nodes,
            elements: flat,
            element,
        };
        mesh.check_topology()?;
        Ok(mesh)
    }

    pub fn degree(&self) -> usize {
        self.element.degree()
    }

    pub fn reference_element(&self) -> ReferenceElement {
        self.element
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len() / self.element.local_node_count()
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let n = self.element.local_node_count();
        &self.elements[e * n..(e + 1) * n]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> {
        self.elements.chunks_exact(self.element.local_node_count())
    }

    /// Same connectivity, new node positions.
    pub fn with_nodes(&self, nodes: Vec<Vec3>) -> Result<Self> {
        if nodes.len() != self.nodes.len() {
            return Err(Error::Dimension {
                expected: self.nodes.len(),
                got: nodes.len(),
            });
        }
        Ok(Self {
            nodes,
            elements: self.elements.clone(),
            element: self.element,
        })
    }

    /// Number of distinct element vertices (corner nodes).
    pub fn vertex_count(&self) -> usize {
        let mut seen = vec![false; self.nodes.len()];
        for el in self.elements() {
            for &v in &el[..3] {
                seen[v] = true;
            }
        }
        seen.into_iter().filter(|&s| s).count()
    }

    /// Largest straight corner-to-corner edge length.
    pub fn mesh_width(&self) -> f64 {
        self.elements()
            .flat_map(|el| {
                [(el[0], el[1]), (el[1], el[2]), (el[2], el[0])]
                    .map(|(a, b)| norm(sub(self.nodes[a], self.nodes[b])))
            })
            .fold(0.0, f64::max)
    }

    /// Geometry of element `elem` at `p`, using the mesh's own node positions.
    pub fn frame(&self, elem: usize, p: RefPoint) -> Result<ElementFrame> {
        element_frame(self, &self.nodes, elem, p)
    }

    /// Surface area by quadrature.
    pub fn area(&self, rule: &QuadratureRule) -> Result<f64> {
        let mut area = 0.0;
        for e in 0..self.element_count() {
            for (&p, &w) in rule.points.iter().zip(&rule.weights) {
                area += w * self.frame(e, p)?.area_element;
            }
        }
        Ok(area)
    }

    /// Checks that the geometry map has rank 2 at every quadrature point.
    pub fn check_geometry(&self, rule: &QuadratureRule) -> Result<()> {
        for e in 0..self.element_count() {
            for &p in &rule.points {
                self.frame(e, p)?;
            }
        }
        Ok(())
    }

    fn check_topology(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut used = vec![false; n];
        for (e, el) in self.elements().enumerate() {
            for &v in el {
                if v >= n {
                    return Err(Error::Validation(format!(
                        "element {e} references node {v}, mesh has {n} nodes"
                    )));
                }
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|&u| !u) {
            return Err(Error::Validation(format!(
                "node {v} is not referenced by any element"
            )));
        }
        // directed corner edge -> (element, midpoint node for degree 2)
        let mut directed: HashMap<(usize, usize), (usize, Option<usize>)> = HashMap::new();
        for (e, el) in self.elements().enumerate() {
            for (k, (a, b)) in [(el[0], el[1]), (el[1], el[2]), (el[2], el[0])]
                .into_iter()
                .enumerate()
            {
                if a == b {
                    return Err(Error::Validation(format!("element {e} repeats node {a}")));
                }
                let mid = (self.degree() == 2).then(|| el[3 + k]);
                if directed.insert((a, b), (e, mid)).is_some() {
                    return Err(Error::Validation(format!(
                        "edge ({a}, {b}) appears twice with the same orientation: \
                         surface is not consistently oriented"
                    )));
                }
            }
        }
        for (&(a, b), &(e, mid)) in &directed {
            match directed.get(&(b, a)) {
                None => {
                    return Err(Error::Validation(format!(
                        "edge ({a}, {b}) of element {e} is a boundary edge: surface is not closed"
                    )))
                }
                Some(&(_, other_mid)) if other_mid != mid => {
                    return Err(Error::Validation(format!(
                        "edge ({a}, {b}) has inconsistent midpoint nodes"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Position, tangent frame and metric of the geometry map at one reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementFrame {
    pub position: Vec3,
    pub tangents: [Vec3; 2],
    /// Unit normal `t1 x t2 / |t1 x t2|`.
    pub normal: Vec3,
    /// `sqrt(det g)` with `g` the first fundamental form.
    pub area_element: f64,
    /// Inverse of the first fundamental form.
    pub inverse_metric: [[f64; 2]; 2],
}

impl ElementFrame {
    /// Maps a reference gradient to the tangential gradient on the surface:
    /// `J g^{-1} grad_ref`.
    #[inline]
    pub fn tangential_gradient(&self, ref_grad: [f64; 2]) -> Vec3 {
        let gi = &self.inverse_metric;
        let c0 = gi[0][0] * ref_grad[0] + gi[0][1] * ref_grad[1];
        let c1 = gi[1][0] * ref_grad[0] + gi[1][1] * ref_grad[1];
        add(scale(c0, self.tangents[0]), scale(c1, self.tangents[1]))
    }
}

/// Evaluates the geometry map of element `elem` for node positions `x`.
pub fn element_frame(mesh: &SurfaceMesh, x: &[Vec3], elem: usize, p: RefPoint) -> Result<ElementFrame> {
    let el = mesh.reference_element();
    let n = el.local_node_count();
    let mut vals = [0.0; 6];
    let mut grads = [[0.0; 2]; 6];
    el.shape_values(p, &mut vals[..n]);
    el.shape_gradients(p, &mut grads[..n]);
    frame_from_shape(x, mesh.element(elem), &vals[..n], &grads[..n]).ok_or_else(|| {
        Error::Geometry(format!(
            "degenerate Jacobian in element {elem} at reference point {p:?}"
        ))
    })
}

pub(crate) fn frame_from_shape(
    x: &[Vec3],
    conn: &[usize],
    vals: &[f64],
    grads: &[[f64; 2]],
) -> Option<ElementFrame> {
    let mut pos = [0.0; 3];
    let mut t1 = [0.0; 3];
    let mut t2 = [0.0; 3];
    for (a, &node) in conn.iter().enumerate() {
        let xa = x[node];
        for d in 0..3 {
            pos[d] += vals[a] * xa[d];
            t1[d] += grads[a][0] * xa[d];
            t2[d] += grads[a][1] * xa[d];
        }
    }
    let g11 = dot(t1, t1);
    let g12 = dot(t1, t2);
    let g22 = dot(t2, t2);
    let det = g11 * g22 - g12 * g12;
    if !(det > 1e-14 * (g11 * g22).max(f64::MIN_POSITIVE)) || !det.is_finite() {
        return None;
    }
    let c = cross(t1, t2);
    let area_element = det.sqrt();
    Some(ElementFrame {
        position: pos,
        tangents: [t1, t2],
        normal: scale(1.0 / norm(c), c),
        area_element,
        inverse_metric: [[g22 / det, -g12 / det], [-g12 / det, g11 / det]],
    })
}

/// Icosahedron refined `level` times, vertices on the sphere of radius `radius`.
/// Faces are oriented with outward normals.
pub fn icosphere(level: u32, radius: f64) -> Result<SurfaceMesh> {
    if level > MAX_ICOSPHERE_LEVEL {
        return Err(Error::Resource(format!(
            "icosphere level {level} exceeds the maximum of {MAX_ICOSPHERE_LEVEL}"
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::Validation(format!("radius must be positive, got {radius}")));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(|v| scale(1.0 / norm(v), v))
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = add(verts[a], verts[b]);
                verts.push(scale(1.0 / norm(m), m));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let nodes = verts.into_iter().map(|v| scale(radius, v)).collect();
    SurfaceMesh::new(nodes, faces.into_iter().map(Vec::from).collect(), 1)
}

/// Turns a flat mesh into a curved degree-2 mesh: every edge gets a node at its
/// straight midpoint projected onto `surface`.
pub fn promote_to_quadratic(mesh: &SurfaceMesh, surface: &ImplicitSurface) -> Result<SurfaceMesh> {
    if mesh.degree() != 1 {
        return Err(Error::Validation("mesh is already quadratic".into()));
    }
    for (i, &p) in mesh.nodes.iter().enumerate() {
        let phi = surface.value(p);
        let g = norm(surface.gradient(p));
        if phi.abs() > 1e-10 * g.max(1.0) {
            return Err(Error::Geometry(format!(
                "vertex {i} is not on the surface (phi = {phi:.3e})"
            )));
        }
    }
    let mut nodes = mesh.nodes.clone();
    let mut edge_node: HashMap<(usize, usize), usize> = HashMap::new();
    let mut elements = Vec::with_capacity(mesh.element_count());
    for el in mesh.elements() {
        let mut conn = el.to_vec();
        for (a, b) in [(el[0], el[1]), (el[1], el[2]), (el[2], el[0])] {
            let key = (a.min(b), a.max(b));
            let idx = match edge_node.get(&key) {
                Some(&i) => i,
                None => {
                    let mid = scale(0.5, add(mesh.nodes[a], mesh.nodes[b]));
                    let p = surface.project(mid).map_err(|err| {
                        Error::Geometry(format!("edge ({a}, {b}): {err}"))
                    })?;
                    nodes.push(p);
                    edge_node.insert(key, nodes.len() - 1);
                    nodes.len() - 1
                }
            };
            conn.push(idx);
        }
        elements.push(conn);
    }
    SurfaceMesh::new(nodes, elements, 2)
}

/// Icosphere-based mesh of `surface`: unit icosphere mapped onto the surface,
/// polished by projection, optionally promoted to degree 2.
pub fn surface_mesh(surface: &ImplicitSurface, level: u32, degree: usize) -> Result<SurfaceMesh> {
    ReferenceElement::new(degree)?;
    let base = icosphere(level, 1.0)?;
    let nodes = base
        .nodes
        .iter()
        .map(|&p| surface.project(surface.map_from_unit_sphere(p)))
        .collect::<Result<Vec<_>>>()?;
    let flat = base.with_nodes(nodes)?;
    let mesh = if degree == 2 {
        promote_to_quadratic(&flat, surface)?
    } else {
        flat
    };
    mesh.check_geometry(&QuadratureRule::for_degree(degree))?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn icosphere_counts() {
        let m0 = icosphere(0, 1.0).unwrap();
        assert_eq!((m0.node_count(), m0.element_count()), (12, 20));
        let m2 = icosphere(2, 1.0).unwrap();
        assert_eq!((m2.node_count(), m2.element_count()), (162, 320));
        for level in 0..=4 {
            let m = icosphere(level, 1.0).unwrap();
            let p = 4usize.pow(level);
            assert_eq!(m.node_count(), 10 * p + 2);
            assert_eq!(m.element_count(), 20 * p);
        }
    }

    #[test]
    fn icosphere_radius_and_orientation() {
        let m = icosphere(1, 2.0).unwrap();
        for p in &m.nodes {
            assert!((norm(*p) - 2.0).abs() < 1e-14);
        }
        for e in 0..m.element_count() {
            let f = m.frame(e, [1.0 / 3.0, 1.0 / 3.0]).unwrap();
            assert!(dot(f.normal, f.position) > 0.0, "element {e} points inward");
        }
    }

    #[test]
    fn icosphere_level_guard() {
        assert!(matches!(icosphere(8, 1.0), Err(Error::Resource(_))));
    }

    #[test]
    fn flat_triangle_frame() {
        let nodes = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        // a single triangle is not closed, so build the frame directly
        let mesh = SurfaceMesh {
            nodes: nodes.clone(),
            elements: vec![0, 1, 2],
            element: ReferenceElement::new(1).unwrap(),
        };
        let f = element_frame(&mesh, &nodes, 0, [1.0 / 3.0, 1.0 / 3.0]).unwrap();
        assert_eq!(f.normal, [0.0, 0.0, 1.0]);
        assert!((f.area_element - 1.0).abs() < 1e-15);
        let g = f.tangential_gradient([-1.0, -1.0]);
        assert_eq!(g, [-1.0, -1.0, 0.0]);
    }

    #[test]
    fn degenerate_element_is_reported() {
        let nodes = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let mesh = SurfaceMesh {
            nodes: nodes.clone(),
            elements: vec![0, 1, 2],
            element: ReferenceElement::new(1).unwrap(),
        };
        let err = element_frame(&mesh, &nodes, 0, [0.2, 0.2]).unwrap_err();
        assert!(err.to_string().contains("element 0"));
    }

    #[test]
    fn open_mesh_rejected() {
        let m = icosphere(0, 1.0).unwrap();
        let mut elems: Vec<Vec<usize>> = m.elements().map(<[usize]>::to_vec).collect();
        elems.pop();
        let err = SurfaceMesh::new(m.nodes.clone(), elems, 1).unwrap_err();
        assert!(err.to_string().contains("not closed"), "{err}");
    }

    #[test]
    fn flipped_face_rejected() {
        let m = icosphere(0, 1.0).unwrap();
        let mut elems: Vec<Vec<usize>> = m.elements().map(<[usize]>::to_vec).collect();
        elems[3].swap(1, 2);
        assert!(SurfaceMesh::new(m.nodes.clone(), elems, 1).is_err());
    }

    #[test]
    fn tangential_gradients_orthogonal_to_normal() {
        let s = ImplicitSurface::ellipsoid(2.0, 1.0, 0.7).unwrap();
        let m = surface_mesh(&s, 1, 2).unwrap();
        let el = m.reference_element();
        let mut g = [[0.0; 2]; 6];
        for e in 0..m.element_count() {
            let p = [0.2, 0.3];
            el.shape_gradients(p, &mut g);
            let f = m.frame(e, p).unwrap();
            assert!((norm(f.normal) - 1.0).abs() < 1e-14);
            for rg in g {
                assert!(dot(f.tangential_gradient(rg), f.normal).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quadratic_midpoints_on_sphere() {
        let s = ImplicitSurface::sphere(1.0).unwrap();
        let m = promote_to_quadratic(&icosphere(0, 1.0).unwrap(), &s).unwrap();
        assert_eq!(m.node_count(), 12 + 30);
        for p in &m.nodes {
            assert!((norm(*p) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_is_identity_on_surface() {
        let s = ImplicitSurface::ellipsoid(2.0, 1.0, 1.0).unwrap();
        let p = [2.0, 0.0, 0.0];
        assert_eq!(s.project(p).unwrap(), p);
    }

    #[test]
    fn curved_area_is_closer_to_sphere() {
        let s = ImplicitSurface::sphere(1.0).unwrap();
        let flat = icosphere(1, 1.0).unwrap();
        let curved = promote_to_quadratic(&flat, &s).unwrap();
        let rule = QuadratureRule::new(6).unwrap();
        let a_flat = flat.area(&rule).unwrap();
        let a_curved = curved.area(&rule).unwrap();
        assert!((a_curved - 4.0 * PI).abs() < (a_flat - 4.0 * PI).abs());
    }

    #[test]
    fn area_converges_and_promotion_helps() {
        let s = ImplicitSurface::sphere(1.0).unwrap();
        let rule = QuadratureRule::new(6).unwrap();
        let mut prev = 0.0;
        for level in 0..4 {
            let flat = icosphere(level, 1.0).unwrap();
            let a = flat.area(&rule).unwrap();
            assert!(a > prev && a < 4.0 * PI);
            prev = a;
            let curved = promote_to_quadratic(&flat, &s).unwrap();
            let ac = curved.area(&rule).unwrap();
            assert!((ac - 4.0 * PI).abs() * 2.0 <= (a - 4.0 * PI).abs());
        }
    }

    #[test]
    fn curved_normals_match_sphere_at_vertices() {
        let s = ImplicitSurface::sphere(1.0).unwrap();
        let mut errs = Vec::new();
        for level in [2, 3] {
            let m = promote_to_quadratic(&icosphere(level, 1.0).unwrap(), &s).unwrap();
            let mut worst: f64 = 0.0;
            for e in 0..m.element_count() {
                for p in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]] {
                    let f = m.frame(e, p).unwrap();
                    worst = worst.max(norm(sub(f.normal, f.position)));
                }
            }
            errs.push(worst);
        }
        // O(h^2): halving h should reduce the error by about 4
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
        assert!(errs[1] < 1e-2);
    }

    #[test]
    fn catalog_meshes_are_valid() {
        for s in [
            ImplicitSurface::ellipsoid(2.0, 1.0, 1.0).unwrap(),
            ImplicitSurface::dumbbell(1.0, 0.2, 1.0).unwrap(),
            ImplicitSurface::cup(1.0, 0.6, 0.5).unwrap(),
        ] {
            let m = surface_mesh(&s, 2, 2).unwrap();
            for p in &m.nodes {
                assert!(s.value(*p).abs() < 1e-10);
            }
        }
    }
}
