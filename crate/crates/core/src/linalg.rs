//! Compressed-row sparse matrices, block vectors acted on by `I_d ⊗ A`, and a
//! Jacobi-preconditioned conjugate gradient solver.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Row offsets and sorted, unique column indices of a CSR matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrPattern {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
}

impl CsrPattern {
    /// Builds a pattern from per-row column lists (sorted and deduplicated here).
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for (i, mut cols) in rows.into_iter().enumerate() {
            cols.sort_unstable();
            cols.dedup();
            if let Some(&j) = cols.last() {
                if j >= n {
                    return Err(Error::Validation(format!(
                        "column {j} out of range in row {i} (dimension {n})"
                    )));
                }
            }
            col_indices.extend(cols);
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            n,
            row_offsets,
            col_indices,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Storage index of entry `(i, j)`, if present in the pattern.
    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_offsets[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }
}

/// Square sparse matrix in compressed-row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pattern: Arc<CsrPattern>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Sums duplicate entries. The result does not depend on the order of
    /// `triplets`: duplicates are summed in a canonical order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(i, j, _) in &sorted {
            if i >= n || j >= n {
                return Err(Error::Validation(format!(
                    "triplet ({i}, {j}) out of range for dimension {n}"
                )));
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
        let mut row_offsets = vec![0; n + 1];
        let mut col_indices = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        let pattern = Arc::new(CsrPattern {
            n,
            row_offsets,
            col_indices,
        });
        let mut m = Self {
            pattern,
            values,
            symmetric: false,
        };
        m.symmetric = m.check_symmetry(1e-14);
        Ok(m)
    }

    /// Matrix with the given pattern and values (one per stored entry).
    pub fn from_pattern(pattern: Arc<CsrPattern>, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::Dimension {
                expected: pattern.nnz(),
                got: values.len(),
            });
        }
        let mut m = Self {
            pattern,
            values,
            symmetric: false,
        };
        m.symmetric = m.check_symmetry(1e-14);
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &triplets).expect("in range")
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Entry `(i, j)`, zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern
            .index_of(i, j)
            .map_or(0.0, |k| self.values[k])
    }

    /// Row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.pattern.row_offsets[i]..self.pattern.row_offsets[i + 1];
        self.pattern.col_indices[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i)).collect()
    }

    /// `(i, j)` and `(j, i)` agree within `rel_tol` relative to the largest entry.
    pub fn check_symmetry(&self, rel_tol: f64) -> bool {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0..self.dim()).all(|i| {
            self.row(i).all(|(j, v)| match self.pattern.index_of(j, i) {
                Some(k) => (v - self.values[k]).abs() <= rel_tol * scale,
                None => v.abs() <= rel_tol * scale,
            })
        })
    }

    /// `alpha * self + beta * other`; both must share one pattern.
    pub fn linear_combination(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Result<Self> {
        if !Arc::ptr_eq(&self.pattern, &other.pattern) && self.pattern != other.pattern {
            return Err(Error::Validation(
                "linear combination of matrices with different sparsity".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        Ok(Self {
            pattern: self.pattern.clone(),
            values,
            symmetric: self.symmetric && other.symmetric,
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| s * v).collect(),
            symmetric: self.symmetric,
        }
    }

    /// `y = A x` for one block.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in p.row_offsets[i]..p.row_offsets[i + 1] {
                s += self.values[k] * x[p.col_indices[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), x.len())?;
        let mut y = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut y);
        Ok(y)
    }

    /// Applies `I_d ⊗ A` blockwise.
    pub fn spmv(&self, z: &BlockVector) -> Result<BlockVector> {
        check_len(self.dim(), z.block_len())?;
        let mut out = BlockVector::zeros(z.blocks(), z.block_len());
        for b in 0..z.blocks() {
            self.mul_vec_into(z.block(b), out.block_mut(b));
        }
        Ok(out)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

/// `d` blocks of length `n` in block-major layout: `[z_1; z_2; ...; z_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    blocks: usize,
    data: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(blocks: usize, block_len: usize) -> Self {
        Self {
            blocks,
            data: vec![0.0; blocks * block_len],
        }
    }

    pub fn from_flat(blocks: usize, data: Vec<f64>) -> Result<Self> {
        if blocks == 0 || data.len() % blocks != 0 {
            return Err(Error::Validation(format!(
                "length {} is not a multiple of {blocks} blocks",
                data.len()
            )));
        }
        Ok(Self { blocks, data })
    }

    pub fn from_blocks(blocks: &[&[f64]]) -> Result<Self> {
        let n = blocks.first().map_or(0, |b| b.len());
        let mut data = Vec::with_capacity(n * blocks.len());
        for b in blocks {
            check_len(n, b.len())?;
            data.extend_from_slice(b);
        }
        Ok(Self {
            blocks: blocks.len(),
            data,
        })
    }

    /// Three blocks holding the x, y and z components of nodal 3-vectors.
    pub fn from_points(points: &[[f64; 3]]) -> Self {
        let n = points.len();
        let mut data = vec![0.0; 3 * n];
        for (j, p) in points.iter().enumerate() {
            for d in 0..3 {
                data[d * n + j] = p[d];
            }
        }
        Self { blocks: 3, data }
    }

    /// Inverse of [`BlockVector::from_points`] (uses the first three blocks).
    pub fn to_points(&self) -> Vec<[f64; 3]> {
        let n = self.block_len();
        (0..n)
            .map(|j| [self.data[j], self.data[n + j], self.data[2 * n + j]])
            .collect()
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn block_len(&self) -> usize {
        self.data.len() / self.blocks
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, b: usize) -> &[f64] {
        let n = self.block_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn block_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.block_len();
        &mut self.data[b * n..(b + 1) * n]
    }
}

/// Outcome of a CG solve.
#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `||b - A x|| / ||b||`.
    pub relative_residual: f64,
}

/// Solver settings; defaults are relative tolerance 1e-10 and `10 N` iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    pub max_iter: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: None,
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite `a`.
///
/// On success `||b - A x||_2 <= rel_tol ||b||_2` for the returned `x`.
pub fn cg_solve(
    a: &SparseMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgSolution> {
    let n = a.dim();
    check_len(n, b.len())?;
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::Validation(format!(
            "relative tolerance must lie in (0, 1), got {rel_tol}"
        )));
    }
    if !a.is_symmetric() {
        return Err(Error::Validation("conjugate gradients need a symmetric matrix".into()));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .enumerate()
        .map(|(row, d)| {
            if d == 0.0 || !d.is_finite() {
                Err(Error::Preconditioner { row })
            } else {
                Ok(1.0 / d)
            }
        })
        .collect::<Result<_>>()?;

    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let target = rel_tol * b_norm;

    let mut x = match x0 {
        Some(x0) => {
            check_len(n, x0.len())?;
            x0.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    // restart loop: the recurrence residual can drift from the true one
    loop {
        a.mul_vec_into(&x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        let true_res = norm2(&r);
        if true_res <= target {
            return Ok(CgSolution {
                x,
                iterations,
                relative_residual: true_res / b_norm,
            });
        }
        if iterations >= max_iter {
            return Err(Error::Convergence {
                iterations,
                residual: true_res / b_norm,
            });
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            iterations += 1;
            a.mul_vec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Validation(format!(
                    "matrix is not positive definite (p^T A p = {pap:.3e})"
                )));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if norm2(&r) <= target {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// Solves `(I_d ⊗ A) x = b` block by block.
pub fn cg_solve_blocks(
    a: &SparseMatrix,
    b: &BlockVector,
    x0: Option<&BlockVector>,
    opts: CgOptions,
) -> Result<BlockVector> {
    check_len(a.dim(), b.block_len())?;
    let max_iter = opts.max_iter.unwrap_or(10 * a.dim());
    let mut out = BlockVector::zeros(b.blocks(), b.block_len());
    for k in 0..b.blocks() {
        let sol = cg_solve(a, b.block(k), x0.map(|x| x.block(k)), opts.rel_tol, max_iter)?;
        out.block_mut(k).copy_from_slice(&sol.x);
    }
    Ok(out)
}

/// `z^T (I_d ⊗ A) w`; with `z == w` this is the squared `A`-norm.
pub fn dot_norm(z: &BlockVector, w: &BlockVector, a: &SparseMatrix) -> Result<f64> {
    check_len(z.len(), w.len())?;
    let aw = a.spmv(w)?;
    Ok(dot(z.as_slice(), aw.as_slice()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
