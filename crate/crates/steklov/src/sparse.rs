//! Compressed-row complex matrices sharing a symbolic pattern, and a sparse LU
//! wrapper that reuses the symbolic analysis across numeric refactorizations.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::Mat;
use num_complex::Complex64;
use std::sync::Arc;

use crate::error::SolveError;

#[derive(Debug)]
pub struct SparsePattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    /// The same arrays read as compressed columns; this is the transpose.
    faer: SymbolicSparseColMat<usize>,
}

impl SparsePattern {
    /// Pattern from `(row, col)` pairs; duplicates are merged.
    pub fn from_pairs(n: usize, mut pairs: Vec<(usize, usize)>) -> Arc<Self> {
        pairs.sort_unstable();
        pairs.dedup();
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(pairs.len());
        for &(r, c) in &pairs {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let faer = SymbolicSparseColMat::new_checked(n, n, row_ptr.clone(), None, col_idx.clone());
        Arc::new(Self { n, row_ptr, col_idx, faer })
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Position of `(r, c)` in the value array.
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        row.binary_search(&c).ok().map(|p| self.row_ptr[r] + p)
    }
}

#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub pattern: Arc<SparsePattern>,
    pub values: Vec<Complex64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: &Arc<SparsePattern>) -> Self {
        Self {
            pattern: Arc::clone(pattern),
            values: vec![Complex64::new(0.0, 0.0); pattern.nnz()],
        }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    /// Adds `v` at `(r, c)`. Panics if the entry is outside the pattern.
    pub fn add(&mut self, r: usize, c: usize, v: Complex64) {
        let p = self.pattern.find(r, c).expect("entry outside sparsity pattern");
        self.values[p] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.pattern.find(r, c).map_or(Complex64::new(0.0, 0.0), |p| self.values[p])
    }

    pub fn same_pattern(&self, other: &SparseMatrix) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern)
    }

    /// `sum_i w_i M_i` over matrices sharing one pattern.
    pub fn combine(terms: &[(Complex64, &SparseMatrix)]) -> SparseMatrix {
        let first = terms[0].1;
        let mut out = SparseMatrix::zeros(&first.pattern);
        for (w, m) in terms {
            assert!(m.same_pattern(first), "combine requires a shared pattern");
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += *w * *v;
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|r| {
                let mut s = Complex64::new(0.0, 0.0);
                for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                    s += self.values[k] * x[p.col_idx[k]];
                }
                s
            })
            .collect()
    }

    /// Exact entrywise equality with the transpose (no conjugation).
    pub fn is_symmetric(&self) -> bool {
        let p = &self.pattern;
        for r in 0..p.n {
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                let c = p.col_idx[k];
                match p.find(c, r) {
                    Some(q) if self.values[q] == self.values[k] => {}
                    _ => return false,
                }
            }
        }
        true
    }

    /// Principal submatrix on `keep` (new index `i` is old index `keep[i]`).
    pub fn restrict(&self, keep: &[usize]) -> SparseMatrix {
        let restricted = self.restrict_pattern(keep);
        self.restrict_into(keep, &restricted)
    }

    /// Pattern of the principal submatrix on `keep`.
    pub fn restrict_pattern(&self, keep: &[usize]) -> Arc<SparsePattern> {
        let map = index_map(self.n(), keep);
        let p = &self.pattern;
        let mut pairs = Vec::new();
        for (i, &r) in keep.iter().enumerate() {
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                if let Some(j) = map[p.col_idx[k]] {
                    pairs.push((i, j));
                }
            }
        }
        SparsePattern::from_pairs(keep.len(), pairs)
    }

    /// Principal submatrix on `keep` written into an existing pattern.
    pub fn restrict_into(&self, keep: &[usize], pattern: &Arc<SparsePattern>) -> SparseMatrix {
        let map = index_map(self.n(), keep);
        let p = &self.pattern;
        let mut out = SparseMatrix::zeros(pattern);
        for (i, &r) in keep.iter().enumerate() {
            for k in p.row_ptr[r]..p.row_ptr[r + 1] {
                if let Some(j) = map[p.col_idx[k]] {
                    out.add(i, j, self.values[k]);
                }
            }
        }
        out
    }

    /// Column indices and values of row `r`.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let p = &self.pattern;
        (p.row_ptr[r]..p.row_ptr[r + 1]).map(move |k| (p.col_idx[k], self.values[k]))
    }

    fn faer_transpose(&self) -> SparseColMatRef<'_, usize, Complex64> {
        SparseColMatRef::new(self.pattern.faer.as_ref(), &self.values)
    }
}

fn index_map(n: usize, keep: &[usize]) -> Vec<Option<usize>> {
    let mut map = vec![None; n];
    for (i, &k) in keep.iter().enumerate() {
        map[k] = Some(i);
    }
    map
}

/// Symbolic analysis shared between factorizations of matrices with one pattern.
#[derive(Clone)]
pub struct LuAnalysis {
    symbolic: SymbolicLu<usize>,
    pattern: Arc<SparsePattern>,
}

impl LuAnalysis {
    pub fn new(pattern: &Arc<SparsePattern>) -> Result<Self, SolveError> {
        let symbolic = SymbolicLu::try_new(pattern.faer.as_ref()).map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        Ok(Self {
            symbolic,
            pattern: Arc::clone(pattern),
        })
    }
}

/// Sparse LU of a square matrix.
pub struct SparseLu {
    lu: Lu<usize, Complex64>,
    n: usize,
}

impl SparseLu {
    pub fn new(a: &SparseMatrix) -> Result<Self, SolveError> {
        let analysis = LuAnalysis::new(&a.pattern)?;
        Self::with_analysis(&analysis, a)
    }

    pub fn with_analysis(analysis: &LuAnalysis, a: &SparseMatrix) -> Result<Self, SolveError> {
        assert!(a.same_pattern_as(&analysis.pattern), "analysis built for another pattern");
        if a.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(SolveError::NonFinite);
        }
        let lu = Lu::try_new_with_symbolic(analysis.symbolic.clone(), a.faer_transpose())
            .map_err(|e| SolveError::Factorization(format!("{e:?}")))?;
        Ok(Self { lu, n: a.n() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A X = B` for the columns of `b` (column-major, `n` rows).
    pub fn solve_columns(&self, b: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>, SolveError> {
        if b.is_empty() {
            return Ok(Vec::new());
        }
        let mut rhs = Mat::<Complex64>::from_fn(self.n, b.len(), |i, j| b[j][i]);
        // The stored factorization is of the transpose.
        self.lu.solve_transpose_in_place(rhs.as_mut());
        let out: Vec<Vec<Complex64>> = (0..b.len()).map(|j| (0..self.n).map(|i| rhs[(i, j)]).collect()).collect();
        if out.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(SolveError::NonFinite);
        }
        Ok(out)
    }

    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>, SolveError> {
        Ok(self.solve_columns(&[b.to_vec()])?.pop().unwrap())
    }

    /// Solve followed by up to two steps of iterative refinement; fails if the
    /// relative residual stays above `tol`.
    pub fn solve_checked(&self, a: &SparseMatrix, b: &[Complex64], tol: f64) -> Result<Vec<Complex64>, SolveError> {
        let mut x = self.solve(b)?;
        let bn = norm(b).max(f64::MIN_POSITIVE);
        for step in 0..3 {
            let ax = a.matvec(&x);
            let r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let rel = norm(&r) / bn;
            if rel <= tol {
                return Ok(x);
            }
            if step == 2 {
                return Err(SolveError::Residual(rel));
            }
            let dx = self.solve(&r)?;
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        unreachable!()
    }
}

impl SparseMatrix {
    fn same_pattern_as(&self, p: &Arc<SparsePattern>) -> bool {
        Arc::ptr_eq(&self.pattern, p)
    }
}

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}
