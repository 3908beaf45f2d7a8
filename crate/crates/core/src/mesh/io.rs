//! OFF input/output and legacy VTK output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vec3::Vec3;

use super::SurfaceMesh;

/// A named nodal field for VTK output.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    pub data: FieldData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Scalar(Vec<f64>),
    Vector(Vec<Vec3>),
}

impl Field {
    pub fn scalar(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            data: FieldData::Scalar(values),
        }
    }

    pub fn vector(name: impl Into<String>, values: Vec<Vec3>) -> Self {
        Self {
            name: name.into(),
            data: FieldData::Vector(values),
        }
    }

    fn len(&self) -> usize {
        match &self.data {
            FieldData::Scalar(v) => v.len(),
            FieldData::Vector(v) => v.len(),
        }
    }
}

/// Formats with 17 significant digits, enough to round-trip an `f64`.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Reads an ASCII OFF file with triangular faces into a degree-1 mesh.
pub fn read_off(path: impl AsRef<Path>) -> Result<SurfaceMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    // significant lines with their 1-based numbers
    let mut lines = text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    });

    let (ln, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let mut counts_line = None;
    if header != "OFF" {
        if let Some(rest) = header.strip_prefix("OFF") {
            counts_line = Some((ln, rest.trim()));
        } else {
            return Err(parse_err(ln, format!("expected 'OFF' header, found '{header}'")));
        }
    }
    let (ln, counts) = match counts_line {
        Some(c) => c,
        None => lines
            .next()
            .ok_or_else(|| parse_err(ln + 1, "missing vertex/face counts".into()))?,
    };
    let nums: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(ln, format!("bad counts: {e}")))?;
    if nums.len() < 2 {
        return Err(parse_err(ln, "expected vertex and face counts".into()));
    }
    let (nv, nf) = (nums[0], nums[1]);

    let mut nodes = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("expected {nv} vertices")))?;
        let c: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(ln, format!("bad coordinate: {e}")))?;
        if c.len() != 3 {
            return Err(parse_err(ln, format!("expected 3 coordinates, found {}", c.len())));
        }
        nodes.push([c[0], c[1], c[2]]);
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, format!("expected {nf} faces")))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(ln, format!("bad face index: {e}")))?;
        if idx.first() != Some(&3) || idx.len() != 4 {
            return Err(parse_err(ln, "only triangular faces ('3 a b c') are supported".into()));
        }
        if let Some(&bad) = idx[1..].iter().find(|&&i| i >= nv) {
            return Err(parse_err(ln, format!("vertex index {bad} out of range")));
        }
        faces.push(idx[1..].to_vec());
    }
    SurfaceMesh::new(nodes, faces, 1)
}

/// Writes the corner triangles of `mesh` as ASCII OFF.
pub fn write_off(path: impl AsRef<Path>, mesh: &SurfaceMesh) -> Result<()> {
    if mesh.degree() != 1 {
        return Err(Error::Unsupported("OFF output holds degree-1 meshes only".into()));
    }
    let mut s = String::new();
    writeln!(s, "OFF").unwrap();
    writeln!(s, "{} {} 0", mesh.node_count(), mesh.element_count()).unwrap();
    for p in &mesh.nodes {
        writeln!(s, "{} {} {}", fmt17(p[0]), fmt17(p[1]), fmt17(p[2])).unwrap();
    }
    for el in mesh.elements() {
        writeln!(s, "3 {} {} {}", el[0], el[1], el[2]).unwrap();
    }
    fs::write(path, s)?;
    Ok(())
}

fn check_fields(mesh: &SurfaceMesh, points: &[Vec3], fields: &[Field]) -> Result<()> {
    if points.len() != mesh.node_count() {
        return Err(Error::Dimension {
            expected: mesh.node_count(),
            got: points.len(),
        });
    }
    for f in fields {
        if f.len() != mesh.node_count() {
            return Err(Error::Dimension {
                expected: mesh.node_count(),
                got: f.len(),
            });
        }
    }
    Ok(())
}

fn write_points(s: &mut String, points: &[Vec3]) {
    writeln!(s, "POINTS {} double", points.len()).unwrap();
    for p in points {
        writeln!(s, "{} {} {}", fmt17(p[0]), fmt17(p[1]), fmt17(p[2])).unwrap();
    }
}

fn write_point_data(s: &mut String, n: usize, fields: &[Field]) {
    if fields.is_empty() {
        return;
    }
    writeln!(s, "POINT_DATA {n}").unwrap();
    for f in fields {
        let name = f.name.replace(char::is_whitespace, "_");
        match &f.data {
            FieldData::Scalar(v) => {
                writeln!(s, "SCALARS {name} double 1").unwrap();
                writeln!(s, "LOOKUP_TABLE default").unwrap();
                for x in v {
                    writeln!(s, "{}", fmt17(*x)).unwrap();
                }
            }
            FieldData::Vector(v) => {
                writeln!(s, "VECTORS {name} double").unwrap();
                for p in v {
                    writeln!(s, "{} {} {}", fmt17(p[0]), fmt17(p[1]), fmt17(p[2])).unwrap();
                }
            }
        }
    }
}

/// Legacy ASCII VTK POLYDATA. Curved elements are written as four flat
/// sub-triangles through their six nodes.
pub fn write_vtk(
    path: impl AsRef<Path>,
    mesh: &SurfaceMesh,
    points: &[Vec3],
    fields: &[Field],
) -> Result<()> {
    check_fields(mesh, points, fields)?;
    let mut tris: Vec<[usize; 3]> = Vec::new();
    for el in mesh.elements() {
        if mesh.degree() == 1 {
            tris.push([el[0], el[1], el[2]]);
        } else {
            tris.extend([
                [el[0], el[3], el[5]],
                [el[3], el[1], el[4]],
                [el[5], el[4], el[2]],
                [el[3], el[4], el[5]],
            ]);
        }
    }
    let mut s = String::new();
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "gesfem surface").unwrap();
    writeln!(s, "ASCII").unwrap();
    writeln!(s, "DATASET POLYDATA").unwrap();
    write_points(&mut s, points);
    writeln!(s, "POLYGONS {} {}", tris.len(), 4 * tris.len()).unwrap();
    for [a, b, c] in tris {
        writeln!(s, "3 {a} {b} {c}").unwrap();
    }
    write_point_data(&mut s, points.len(), fields);
    fs::write(path, s)?;
    Ok(())
}

/// Legacy ASCII VTK UNSTRUCTURED_GRID with quadratic triangle cells (type 22).
pub fn write_vtk_quadratic(
    path: impl AsRef<Path>,
    mesh: &SurfaceMesh,
    points: &[Vec3],
    fields: &[Field],
) -> Result<()> {
    if mesh.degree() != 2 {
        return Err(Error::Unsupported("quadratic VTK output needs a degree-2 mesh".into()));
    }
    check_fields(mesh, points, fields)?;
    let m = mesh.element_count();
    let mut s = String::new();
    writeln!(s, "# vtk DataFile Version 3.0").unwrap();
    writeln!(s, "gesfem quadratic surface").unwrap();
    writeln!(s, "ASCII").unwrap();
    writeln!(s, "DATASET UNSTRUCTURED_GRID").unwrap();
    write_points(&mut s, points);
    writeln!(s, "CELLS {m} {}", 7 * m).unwrap();
    for el in mesh.elements() {
        let ids: Vec<String> = el.iter().map(usize::to_string).collect();
        writeln!(s, "6 {}", ids.join(" ")).unwrap();
    }
    writeln!(s, "CELL_TYPES {m}").unwrap();
    for _ in 0..m {
        writeln!(s, "22").unwrap();
    }
    write_point_data(&mut s, points.len(), fields);
    fs::write(path, s)?;
    Ok(())
}
