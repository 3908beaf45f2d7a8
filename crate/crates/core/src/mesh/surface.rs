//! Closed level-set surfaces `{phi = 0}` with analytic first and second derivatives.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use crate::vec3::{dot, norm};

/// Catalog of built-in initial surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurfaceKind {
    Sphere {
        radius: f64,
    },
    /// Semi-axes along x, y, z.
    Ellipsoid {
        a: f64,
        b: f64,
        c: f64,
    },
    /// Axis along x. Radius profile `sqrt(1 - x^2/L^2) * f(x)` with
    /// `f(x) = neck + (bulb - neck) * (1 - cos(pi x / L))^2 / 4`.
    Dumbbell {
        half_length: f64,
        neck: f64,
        bulb: f64,
    },
    /// Sphere of radius `radius` whose top is pushed down by the bump
    /// `depth * exp(-(x^2 + y^2) / width^2)`, giving a concave opening.
    Cup {
        radius: f64,
        depth: f64,
        width: f64,
    },
}

/// Level-set description of a closed surface. `phi < 0` inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImplicitSurface {
    #[serde(flatten)]
    pub kind: SurfaceKind,
}

impl ImplicitSurface {
    pub fn new(kind: SurfaceKind) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{name} must be positive, got {v}")))
            }
        };
        match kind {
            SurfaceKind::Sphere { radius } => positive("radius", radius)?,
            SurfaceKind::Ellipsoid { a, b, c } => {
                positive("a", a)?;
                positive("b", b)?;
                positive("c", c)?;
            }
            SurfaceKind::Dumbbell {
                half_length,
                neck,
                bulb,
            } => {
                positive("half_length", half_length)?;
                positive("neck", neck)?;
                positive("bulb", bulb)?;
            }
            SurfaceKind::Cup {
                radius,
                depth,
                width,
            } => {
                positive("radius", radius)?;
                positive("width", width)?;
                if !(0.0..radius).contains(&depth) {
                    return Err(Error::Validation(format!(
                        "cup depth must lie in [0, radius), got {depth}"
                    )));
                }
            }
        }
        Ok(Self { kind })
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        Self::new(SurfaceKind::Sphere { radius })
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(SurfaceKind::Ellipsoid { a, b, c })
    }

    pub fn dumbbell(half_length: f64, neck: f64, bulb: f64) -> Result<Self> {
        Self::new(SurfaceKind::Dumbbell {
            half_length,
            neck,
            bulb,
        })
    }

    pub fn cup(radius: f64, depth: f64, width: f64) -> Result<Self> {
        Self::new(SurfaceKind::Cup {
            radius,
            depth,
            width,
        })
    }

    pub fn value(&self, p: [f64; 3]) -> f64 {
        let [x, y, z] = p;
        match self.kind {
            SurfaceKind::Sphere { radius } => x * x + y * y + z * z - radius * radius,
            SurfaceKind::Ellipsoid { a, b, c } => {
                x * x / (a * a) + y * y / (b * b) + z * z / (c * c) - 1.0
            }
            SurfaceKind::Dumbbell { .. } => y * y + z * z - self.dumbbell_profile(x)[0],
            SurfaceKind::Cup { radius, .. } => {
                let zeta = z + self.cup_bump(x, y)[0];
                x * x + y * y + zeta * zeta - radius * radius
            }
        }
    }

    pub fn gradient(&self, p: [f64; 3]) -> [f64; 3] {
        let [x, y, z] = p;
        match self.kind {
            SurfaceKind::Sphere { .. } => [2.0 * x, 2.0 * y, 2.0 * z],
            SurfaceKind::Ellipsoid { a, b, c } => {
                [2.0 * x / (a * a), 2.0 * y / (b * b), 2.0 * z / (c * c)]
            }
            SurfaceKind::Dumbbell { .. } => {
                let prof = self.dumbbell_profile(x);
                [-prof[1], 2.0 * y, 2.0 * z]
            }
            SurfaceKind::Cup { .. } => {
                let [b, bx, by, ..] = self.cup_bump(x, y);
                let zeta = z + b;
                [
                    2.0 * x + 2.0 * zeta * bx,
                    2.0 * y + 2.0 * zeta * by,
                    2.0 * zeta,
                ]
            }
        }
    }

    pub fn hessian(&self, p: [f64; 3]) -> [[f64; 3]; 3] {
        let [x, y, z] = p;
        match self.kind {
            SurfaceKind::Sphere { .. } => diag(2.0, 2.0, 2.0),
            SurfaceKind::Ellipsoid { a, b, c } => {
                diag(2.0 / (a * a), 2.0 / (b * b), 2.0 / (c * c))
            }
            SurfaceKind::Dumbbell { .. } => diag(-self.dumbbell_profile(x)[2], 2.0, 2.0),
            SurfaceKind::Cup { .. } => {
                let [b, bx, by, bxx, bxy, byy] = self.cup_bump(x, y);
                let zeta = z + b;
                let hxx = 2.0 + 2.0 * (bx * bx + zeta * bxx);
                let hyy = 2.0 + 2.0 * (by * by + zeta * byy);
                let hxy = 2.0 * (bx * by + zeta * bxy);
                [
                    [hxx, hxy, 2.0 * bx],
                    [hxy, hyy, 2.0 * by],
                    [2.0 * bx, 2.0 * by, 2.0],
                ]
            }
        }
    }

    /// Radius of a ball centred at the origin that contains the surface.
    pub fn bounding_radius(&self) -> f64 {
        match self.kind {
            SurfaceKind::Sphere { radius } => radius,
            SurfaceKind::Ellipsoid { a, b, c } => a.max(b).max(c),
            SurfaceKind::Dumbbell {
                half_length,
                neck,
                bulb,
            } => half_length.max(neck.max(bulb)),
            SurfaceKind::Cup { radius, depth, .. } => radius + depth,
        }
    }

    /// Maps a point of the unit sphere onto the surface. The maps are
    /// orientation preserving, so outward-oriented triangles stay outward.
    pub fn map_from_unit_sphere(&self, p: [f64; 3]) -> [f64; 3] {
        let [x, y, z] = p;
        match self.kind {
            SurfaceKind::Sphere { radius } => [radius * x, radius * y, radius * z],
            SurfaceKind::Ellipsoid { a, b, c } => [a * x, b * y, c * z],
            SurfaceKind::Dumbbell { half_length, .. } => {
                let xs = half_length * x;
                let f = self.dumbbell_f(xs);
                [xs, f * y, f * z]
            }
            SurfaceKind::Cup { radius, .. } => {
                let (xs, ys) = (radius * x, radius * y);
                [xs, ys, radius * z - self.cup_bump(xs, ys)[0]]
            }
        }
    }

    /// Newton projection onto `{phi = 0}` along the gradient.
    pub fn project(&self, p: [f64; 3]) -> Result<[f64; 3]> {
        const TOL: f64 = 1e-12;
        const MAX_ITER: usize = 50;
        let mut q = p;
        for _ in 0..MAX_ITER {
            let phi = self.value(q);
            let g = self.gradient(q);
            let gg = dot(g, g);
            if gg < 1e-28 {
                return Err(Error::Geometry(format!(
                    "vanishing level-set gradient at {q:?}"
                )));
            }
            if phi.abs() / gg.sqrt() <= TOL {
                return Ok(q);
            }
            let s = phi / gg;
            q = [q[0] - s * g[0], q[1] - s * g[1], q[2] - s * g[2]];
        }
        let phi = self.value(q);
        if phi.abs() / norm(self.gradient(q)).max(1e-300) <= TOL {
            Ok(q)
        } else {
            Err(Error::Geometry(format!(
                "projection of {p:?} onto the surface did not converge (phi = {phi:.3e})"
            )))
        }
    }

    fn dumbbell_f(&self, x: f64) -> f64 {
        let SurfaceKind::Dumbbell {
            half_length,
            neck,
            bulb,
        } = self.kind
        else {
            unreachable!()
        };
        let s = 0.5 * (1.0 - (PI * x / half_length).cos());
        neck + (bulb - neck) * s * s
    }

    // squared radius profile rho^2(x) and its first two derivatives
    fn dumbbell_profile(&self, x: f64) -> [f64; 3] {
        let SurfaceKind::Dumbbell {
            half_length: l,
            neck,
            bulb,
        } = self.kind
        else {
            unreachable!()
        };
        let w = PI / l;
        let s = 0.5 * (1.0 - (w * x).cos());
        let ds = 0.5 * w * (w * x).sin();
        let dds = 0.5 * w * w * (w * x).cos();
        let amp = bulb - neck;
        let f = neck + amp * s * s;
        let df = 2.0 * amp * s * ds;
        let ddf = 2.0 * amp * (ds * ds + s * dds);
        let cap = 1.0 - x * x / (l * l);
        let dcap = -2.0 * x / (l * l);
        let ddcap = -2.0 / (l * l);
        [
            cap * f * f,
            dcap * f * f + 2.0 * cap * f * df,
            ddcap * f * f + 4.0 * dcap * f * df + 2.0 * cap * (df * df + f * ddf),
        ]
    }

    // bump b(x, y) with derivatives [b, bx, by, bxx, bxy, byy]
    fn cup_bump(&self, x: f64, y: f64) -> [f64; 6] {
        let SurfaceKind::Cup { depth, width, .. } = self.kind else {
            unreachable!()
        };
        let w2 = width * width;
        let b = depth * (-(x * x + y * y) / w2).exp();
        let bx = -2.0 * x / w2 * b;
        let by = -2.0 * y / w2 * b;
        let bxx = b * (4.0 * x * x / (w2 * w2) - 2.0 / w2);
        let byy = b * (4.0 * y * y / (w2 * w2) - 2.0 / w2);
        let bxy = b * 4.0 * x * y / (w2 * w2);
        [b, bx, by, bxx, bxy, byy]
    }
}

fn diag(a: f64, b: f64, c: f64) -> [[f64; 3]; 3] {
    [[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]]
}
