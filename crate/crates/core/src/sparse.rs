//! Compressed sparse row storage and the direct solves used by Newton.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, CholeskySymbolicParams, SymbolicCholesky, SymmetricOrdering};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::linalg::{LuError, SupernodalThreshold};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, Mat, Par, Side};

use crate::{Error, Result};

/// Square or rectangular CSR matrix with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < n_rows && c < n_cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values }
    }

    /// Zero-valued matrix over a fixed pattern (`rows[r]` sorted and unique).
    pub fn from_pattern(n_cols: usize, rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows {
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix { n_rows: rows.len(), n_cols, row_ptr, col_idx, values: vec![0.0; nnz] }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let n_cols = a.first().map_or(0, |r| r.len());
        let mut t = Vec::new();
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        CsrMatrix::from_triplets(a.len(), n_cols, &t)
    }

    /// Structural nonzero count.
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Storage position of `(r, c)`, if it is in the pattern.
    #[inline]
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[lo..hi].binary_search(&c).ok().map(|k| lo + k)
    }

    #[inline]
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self
            .position(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) not in sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.values[k] * x[self.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut count = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            count[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            count[c + 1] += count[c];
        }
        let row_ptr = count.clone();
        let mut next = count;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let dst = next[c];
                col_idx[dst] = r;
                values[dst] = self.values[k];
                next[c] += 1;
            }
        }
        CsrMatrix { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr, col_idx, values }
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n_cols]; self.n_rows];
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                a[r][self.col_idx[k]] = self.values[k];
            }
        }
        a
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Sparse direct solver. Symmetric systems use an AMD-ordered supernodal
/// `LBL^T` factorization with Bunch-Kaufman pivoting inside supernodes; other
/// systems, or symmetric ones the former cannot solve accurately, use LU with
/// partial pivoting. Symbolic factorizations are kept while the sparsity
/// pattern does not change.
#[derive(Default)]
pub struct DirectSolver {
    lblt: Option<(Vec<usize>, Vec<usize>, SymbolicCholesky<usize>)>,
    lu: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
}

/// Relative residual accepted without a warning.
const TARGET: f64 = 1e-10;

impl DirectSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Solves `a x = rhs`, followed by up to three steps of iterative
    /// refinement.
    pub fn solve(&mut self, a: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        if a.n_rows != a.n_cols || rhs.len() != a.n_rows {
            return Err(Error::Config(format!(
                "linear solve needs a square system, got {}x{} with rhs {}",
                a.n_rows,
                a.n_cols,
                rhs.len()
            )));
        }
        let n = a.n_rows;
        if n == 0 {
            return Ok(Vec::new());
        }
        for r in 0..n {
            if (a.row_ptr[r]..a.row_ptr[r + 1]).all(|k| a.values[k] == 0.0) {
                return Err(Error::Singular { row: r, detail: "empty row".into() });
            }
        }
        if norm(rhs) == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let scale = a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if a.max_asymmetry() <= 1e-12 * scale {
            match self.solve_lblt(a, rhs) {
                Ok((x, rel)) if rel <= TARGET => return Ok(x),
                Ok((_, rel)) => log::debug!("symmetric factorization reached {rel:.2e}, retrying with LU"),
                Err(e) => log::debug!("symmetric factorization failed ({e}), retrying with LU"),
            }
        }
        let (x, rel) = self.solve_lu(a, rhs)?;
        if rel > TARGET {
            log::warn!("linear solve relative residual {rel:.3e} above {TARGET:e}");
        }
        Ok(x)
    }

    fn solve_lblt(&mut self, a: &CsrMatrix, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = a.n_rows;
        // row r of the upper triangle is column r of the lower one
        let mut ptr = vec![0usize];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for r in 0..n {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                if a.col_idx[k] >= r {
                    idx.push(a.col_idx[k]);
                    val.push(a.values[k]);
                }
            }
            ptr.push(idx.len());
        }
        let reuse = matches!(&self.lblt, Some((p, i, _)) if *p == ptr && *i == idx);
        if !reuse {
            let sym = SymbolicSparseColMatRef::new_checked(n, n, &ptr, None, &idx);
            let params = CholeskySymbolicParams {
                supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
                ..Default::default()
            };
            let symbolic = factorize_symbolic_cholesky(sym, Side::Lower, SymmetricOrdering::Amd, params)
                .map_err(|e| Error::Singular { row: 0, detail: format!("symbolic factorization: {e:?}") })?;
            self.lblt = Some((ptr, idx, symbolic));
        }
        let (ptr, idx, symbolic) = self.lblt.as_ref().unwrap();
        let sym = SymbolicSparseColMatRef::new_checked(n, n, ptr, None, idx);
        let mat = SparseColMatRef::new(sym, &val);
        let mut l_values = vec![0.0; symbolic.len_val()];
        let mut subdiag = vec![0.0; n];
        let mut fwd = vec![0usize; n];
        let mut inv = vec![0usize; n];
        let mut buf = MemBuffer::new(symbolic.factorize_numeric_intranode_lblt_scratch::<f64>(Par::Seq, Default::default()));
        let lblt = symbolic.factorize_numeric_intranode_lblt(
            &mut l_values,
            &mut subdiag,
            &mut fwd,
            &mut inv,
            mat,
            Side::Lower,
            Par::Seq,
            MemStack::new(&mut buf),
            Default::default(),
        );
        let mut solve_buf = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        refine(a, rhs, |b| {
            let mut x = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
            lblt.solve_in_place_with_conj(Conj::No, x.as_mut(), Par::Seq, MemStack::new(&mut solve_buf));
            (0..n).map(|i| x[(i, 0)]).collect()
        })
    }

    fn solve_lu(&mut self, a: &CsrMatrix, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = a.n_rows;
        // CSC of `a` is the CSR of its transpose
        let at = a.transpose();
        let reuse = matches!(&self.lu, Some((p, i, _)) if *p == at.row_ptr && *i == at.col_idx);
        if !reuse {
            let sym = SymbolicSparseColMatRef::new_checked(n, n, &at.row_ptr, None, &at.col_idx);
            let lu = SymbolicLu::try_new(sym)
                .map_err(|e| Error::Singular { row: 0, detail: format!("symbolic factorization: {e:?}") })?;
            self.lu = Some((at.row_ptr.clone(), at.col_idx.clone(), lu));
        }
        let (ptr, idx, symbolic) = self.lu.as_ref().unwrap();
        let sym = SymbolicSparseColMatRef::new_checked(n, n, ptr, None, idx);
        let mat = SparseColMatRef::new(sym, &at.values);
        let lu = Lu::try_new_with_symbolic(symbolic.clone(), mat).map_err(|e| match e {
            LuError::SymbolicSingular { index } => {
                Error::Singular { row: index, detail: "no pivot available".into() }
            }
            LuError::Generic(g) => Error::Singular { row: 0, detail: format!("{g:?}") },
        })?;
        let (x, rel) = refine(a, rhs, |b| {
            let col = faer::Col::<f64>::from_fn(n, |i| b[i]);
            let x = lu.solve(&col);
            (0..n).map(|i| x[i]).collect()
        })?;
        if !rel.is_finite() || rel > 1e-6 {
            return Err(Error::InaccurateSolve(rel));
        }
        Ok((x, rel))
    }
}

/// Solution and relative residual after iterative refinement with `solve`.
fn refine(a: &CsrMatrix, rhs: &[f64], mut solve: impl FnMut(&[f64]) -> Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let bnorm = norm(rhs);
    let mut x = solve(rhs);
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Singular { row: i, detail: "non-finite solution component".into() });
    }
    let residual = |x: &[f64]| -> (Vec<f64>, f64) {
        let ax = a.mul_vec(x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
        let rel = norm(&r) / bnorm;
        (r, rel)
    };
    let (mut r, mut rel) = residual(&x);
    for _ in 0..3 {
        if rel <= TARGET {
            break;
        }
        let dx = solve(&r);
        let trial: Vec<f64> = x.iter().zip(&dx).map(|(p, q)| p + q).collect();
        let (tr, trel) = residual(&trial);
        if !(trel < rel) {
            break;
        }
        (x, r, rel) = (trial, tr, trel);
    }
    Ok((x, rel))
}

/// One-shot sparse direct solve.
pub fn linear_solve(a: &CsrMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    DirectSolver::new().solve(a, rhs)
}
