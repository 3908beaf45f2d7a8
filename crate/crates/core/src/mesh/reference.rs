//! Lagrange elements and quadrature on the reference triangle
//! `{(xi, eta) : xi >= 0, eta >= 0, xi + eta <= 1}`.

use crate::error::{Error, Result};

/// Point in reference coordinates `(xi, eta)`.
pub type RefPoint = [f64; 2];

/// Degree-1 or degree-2 Lagrange element.
///
/// Local node order: the three vertices `(0,0)`, `(1,0)`, `(0,1)`, followed for
/// degree 2 by the midpoints of edges `(0,1)`, `(1,2)`, `(2,0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReferenceElement {
    degree: usize,
}

impl ReferenceElement {
    pub fn new(degree: usize) -> Result<Self> {
        match degree {
            1 | 2 => Ok(Self { degree }),
            _ => Err(Error::Validation(format!(
                "element degree must be 1 or 2, got {degree}"
            ))),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn local_node_count(&self) -> usize {
        if self.degree == 1 {
            3
        } else {
            6
        }
    }

    /// Reference coordinates of the local nodes.
    pub fn nodes(&self) -> Vec<RefPoint> {
        let mut pts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        if self.degree == 2 {
            pts.extend([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]);
        }
        pts
    }

    /// Shape function values at `p`; writes `local_node_count()` entries.
    pub fn shape_values(&self, p: RefPoint, out: &mut [f64]) {
        let (l1, l2) = (p[0], p[1]);
        let l0 = 1.0 - l1 - l2;
        match self.degree {
            1 => {
                out[0] = l0;
                out[1] = l1;
                out[2] = l2;
            }
            _ => {
                out[0] = l0 * (2.0 * l0 - 1.0);
                out[1] = l1 * (2.0 * l1 - 1.0);
                out[2] = l2 * (2.0 * l2 - 1.0);
                out[3] = 4.0 * l0 * l1;
                out[4] = 4.0 * l1 * l2;
                out[5] = 4.0 * l2 * l0;
            }
        }
    }

    /// Reference gradients `(d/dxi, d/deta)` of the shape functions at `p`.
    pub fn shape_gradients(&self, p: RefPoint, out: &mut [[f64; 2]]) {
        let (l1, l2) = (p[0], p[1]);
        let l0 = 1.0 - l1 - l2;
        match self.degree {
            1 => {
                out[0] = [-1.0, -1.0];
                out[1] = [1.0, 0.0];
                out[2] = [0.0, 1.0];
            }
            _ => {
                let d0 = 1.0 - 4.0 * l0;
                out[0] = [d0, d0];
                out[1] = [4.0 * l1 - 1.0, 0.0];
                out[2] = [0.0, 4.0 * l2 - 1.0];
                out[3] = [4.0 * (l0 - l1), -4.0 * l1];
                out[4] = [4.0 * l2, 4.0 * l1];
                out[5] = [-4.0 * l2, 4.0 * (l0 - l2)];
            }
        }
    }
}

/// Symmetric quadrature rule on the reference triangle. Weights sum to 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<RefPoint>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

impl QuadratureRule {
    /// Rule exact for polynomials of total degree `exactness` (2, 4 or 6).
    pub fn new(exactness: usize) -> Result<Self> {
        let mut rule = QuadratureRule {
            points: Vec::new(),
            weights: Vec::new(),
            exactness,
        };
        match exactness {
            2 => {
                rule.orbit3(1.0 / 6.0, 1.0 / 3.0);
            }
            4 => {
                rule.orbit3(0.445_948_490_915_964_886_318_329_253_883, 0.223_381_589_678_011_465_695_007_008_433);
                rule.orbit3(0.091_576_213_509_770_743_459_571_463_402_2, 0.109_951_743_655_321_867_638_326_324_900);
            }
            6 => {
                rule.orbit3(0.249_286_745_170_910_421_291_638_553_107, 0.116_786_275_726_379_366_025_289_611_385_6);
                rule.orbit3(0.063_089_014_491_502_228_340_331_602_870_8, 0.050_844_906_370_206_816_920_936_809_106_9);
                rule.orbit6(
                    0.053_145_049_844_816_947_353_249_671_631_4,
                    0.310_352_451_033_784_405_416_607_733_956_6,
                    0.082_851_075_618_373_575_193_553_456_420_4,
                );
            }
            _ => {
                return Err(Error::Validation(format!(
                    "quadrature exactness must be 2, 4 or 6, got {exactness}"
                )))
            }
        }
        Ok(rule)
    }

    /// Default rule for an element degree: 4 for linear, 6 for quadratic.
    pub fn for_degree(degree: usize) -> Self {
        Self::new(if degree == 1 { 4 } else { 6 }).expect("built-in rule")
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(RefPoint) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| w * f(p))
            .sum()
    }

    // barycentric (a, a, 1-2a); `w` is the weight for a unit-area triangle
    fn orbit3(&mut self, a: f64, w: f64) {
        let b = 1.0 - 2.0 * a;
        for p in [[a, a], [b, a], [a, b]] {
            self.points.push(p);
            self.weights.push(0.5 * w);
        }
    }

    // barycentric permutations of (a, b, 1-a-b)
    fn orbit6(&mut self, a: f64, b: f64, w: f64) {
        let c = 1.0 - a - b;
        for p in [[a, b], [b, a], [b, c], [c, b], [c, a], [a, c]] {
            self.points.push(p);
            self.weights.push(0.5 * w);
        }
    }
}
