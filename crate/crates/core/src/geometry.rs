//! Initial data from analytic surfaces: exact normals and mean curvature,
//! consistent normal velocity, and preset concentration profiles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{ImplicitSurface, SurfaceKind, SurfaceMesh};
use crate::model::FlowModel;
use crate::vec3::{dot, norm, scale, Vec3};

/// Outward unit normal `grad phi / |grad phi|` and mean curvature (sum of the
/// principal curvatures, positive on spheres) at a point of the surface.
pub fn analytic_normal_and_h(surface: &ImplicitSurface, p: Vec3) -> Result<(Vec3, f64)> {
    let g = surface.gradient(p);
    let gn = norm(g);
    if !(gn > 1e-12) {
        return Err(Error::Geometry(format!(
            "level-set gradient vanishes at {p:?} (|grad phi| = {gn:e})"
        )));
    }
    let phi = surface.value(p);
    if phi.abs() > 1e-8 * gn.max(1.0) {
        return Err(Error::Geometry(format!(
            "point {p:?} is not on the surface (phi = {phi:e})"
        )));
    }
    let h = surface.hessian(p);
    let lap = h[0][0] + h[1][1] + h[2][2];
    let mut ghg = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            ghg += g[i] * h[i][j] * g[j];
        }
    }
    let mean = (lap * gn * gn - ghg) / (gn * gn * gn);
    Ok((scale(1.0 / gn, g), mean))
}

/// Nodal initial values.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub x: Vec<Vec3>,
    pub n: Vec<Vec3>,
    pub h: Vec<f64>,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
}

/// Interpolates the exact normal, mean curvature and `u0` at the mesh nodes
/// and sets `V = -F(u, H)` nodewise.
pub fn build_initial_data(
    mesh: &SurfaceMesh,
    surface: &ImplicitSurface,
    model: &dyn FlowModel,
    u0: impl Fn(Vec3) -> f64,
) -> Result<InitialData> {
    let n_nodes = mesh.node_count();
    let mut data = InitialData {
        x: mesh.nodes.clone(),
        n: Vec::with_capacity(n_nodes),
        h: Vec::with_capacity(n_nodes),
        v: Vec::with_capacity(n_nodes),
        u: Vec::with_capacity(n_nodes),
    };
    for (i, &p) in mesh.nodes.iter().enumerate() {
        let (nu, h) = analytic_normal_and_h(surface, p)?;
        let u = u0(p);
        let v = model
            .f(u, h)
            .map_err(|e| Error::ModelDomain(format!("initial value at node {i}: {e}")))?;
        data.n.push(nu);
        data.h.push(h);
        data.u.push(u);
        data.v.push(-v);
    }
    Ok(data)
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Profile rising from `low` to `high` along the x axis across the band
/// `[center - width/2, center + width/2]`.
pub fn dumbbell_initial_u(mesh: &SurfaceMesh, high: f64, low: f64, center: f64, width: f64) -> Result<Vec<f64>> {
    let preset = U0Preset::NeckSplit {
        high,
        low,
        center,
        width,
    };
    preset.validate()?;
    Ok(mesh.nodes.iter().map(|&p| preset.value(p)).collect())
}

/// Named initial concentration profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum U0Preset {
    Constant {
        value: f64,
    },
    /// Largest near the tips of the x axis, smallest in the middle:
    /// `valley + (peak - valley) * (|x| / extent)^sharpness`.
    Tips {
        peak: f64,
        valley: f64,
        sharpness: f64,
        extent: f64,
    },
    /// `high` for x beyond the band around `center`, `low` before it, with a
    /// smoothstep across the band.
    NeckSplit {
        high: f64,
        low: f64,
        center: f64,
        width: f64,
    },
    /// `high` above `z_top`, decreasing smoothly to `low` at `z_bottom`.
    CupBottom {
        high: f64,
        low: f64,
        z_top: f64,
        z_bottom: f64,
    },
}

impl U0Preset {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            U0Preset::Constant { value } => value > 0.0,
            U0Preset::Tips {
                peak,
                valley,
                sharpness,
                extent,
            } => valley > 0.0 && peak >= valley && sharpness > 0.0 && extent > 0.0,
            U0Preset::NeckSplit {
                high, low, width, ..
            } => high > low && low > 0.0 && width > 0.0,
            U0Preset::CupBottom {
                high,
                low,
                z_top,
                z_bottom,
            } => high > low && low > 0.0 && z_top > z_bottom,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "invalid initial concentration profile {self:?}: values must be positive, \
                 high above low, and widths positive"
            )))
        }
    }

    pub fn value(&self, p: Vec3) -> f64 {
        match *self {
            U0Preset::Constant { value } => value,
            U0Preset::Tips {
                peak,
                valley,
                sharpness,
                extent,
            } => valley + (peak - valley) * (p[0].abs() / extent).min(1.0).powf(sharpness),
            U0Preset::NeckSplit {
                high,
                low,
                center,
                width,
            } => low + (high - low) * smoothstep((p[0] - center) / width + 0.5),
            U0Preset::CupBottom {
                high,
                low,
                z_top,
                z_bottom,
            } => low + (high - low) * smoothstep((p[2] - z_bottom) / (z_top - z_bottom)),
        }
    }

    /// Nodal values on `mesh`.
    pub fn nodal(&self, mesh: &SurfaceMesh) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(mesh.nodes.iter().map(|&p| self.value(p)).collect())
    }

    /// Sensible default profile for each catalog surface.
    pub fn default_for(kind: &SurfaceKind) -> Self {
        match *kind {
            SurfaceKind::Sphere { .. } => U0Preset::Constant { value: 1.0 },
            SurfaceKind::Ellipsoid { a, .. } => U0Preset::Tips {
                peak: 5.0,
                valley: 0.5,
                sharpness: 4.0,
                extent: a,
            },
            SurfaceKind::Dumbbell { .. } => U0Preset::NeckSplit {
                high: 0.8,
                low: 0.2,
                center: 0.0,
                width: 0.4,
            },
            SurfaceKind::Cup { radius, .. } => U0Preset::CupBottom {
                high: 1.0,
                low: 0.5,
                z_top: -0.3 * radius,
                z_bottom: -radius,
            },
        }
    }
}

/// Mean curvature as the divergence of the normalised gradient field, by
/// central differences with step `step`. Independent of the closed form in
/// [`analytic_normal_and_h`].
pub fn fd_mean_curvature(surface: &ImplicitSurface, p: Vec3, step: f64) -> f64 {
    let unit = |q: Vec3| {
        let g = surface.gradient(q);
        scale(1.0 / norm(g), g)
    };
    (0..3)
        .map(|d| {
            let (mut qp, mut qm) = (p, p);
            qp[d] += step;
            qm[d] -= step;
            (unit(qp)[d] - unit(qm)[d]) / (2.0 * step)
        })
        .sum()
}

/// Largest deviation of `|n_j|` from 1.
pub fn unit_defect(n: &[Vec3]) -> f64 {
    n.iter().map(|&v| (dot(v, v).sqrt() - 1.0).abs()).fold(0.0, f64::max)
}
