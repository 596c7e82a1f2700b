//! Sparse KKT matrix `[H A^T; A 0]` with a fixed pattern.
//!
//! The pattern is the union of the dense blocks of every log-sum-exp form
//! (objective and inequalities), the diagonal, and the equality rows. It is
//! built once, together with a fill-reducing symbolic factorization, so each
//! Newton step only scatters values and refactors numerically.
//!
//! The matrix is symmetric and, once the Hessian block is shifted, quasi-
//! definite, so it is factored as `L D L^T` with the pivot signs fixed in
//! advance (positive on the primal block, negative on the dual block).

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, SymbolicCholesky, SymmetricOrdering};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};

use super::convex::AffineRow;

/// Pivots smaller than this (after equilibration) are replaced by
/// `PIVOT_SHIFT` with the expected sign; refinement absorbs the change.
const PIVOT_FLOOR: f64 = 1e-13;
const PIVOT_SHIFT: f64 = 1e-9;
const REFINEMENT_ROUNDS: usize = 3;

pub(crate) struct KktSystem {
    n: usize,
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    form_slots: Vec<Vec<usize>>,
    diag_slots: Vec<usize>,
    eq_entries: Vec<(usize, usize, f64)>,
    upper_col_ptr: Vec<usize>,
    upper_row_idx: Vec<usize>,
    /// Full-pattern slot of each upper-triangle entry.
    upper_src: Vec<usize>,
    symbolic: SymbolicCholesky<usize>,
    factor: Vec<f64>,
    signs: Vec<i8>,
    mem: MemBuffer,
}

impl KktSystem {
    /// `forms[f]` is the sorted variable list of form `f`.
    pub(crate) fn new(n: usize, forms: &[&[usize]], eqs: &[AffineRow]) -> Result<Self, String> {
        let p = eqs.len();
        let dim = n + p;
        let mut cols: Vec<Vec<usize>> = (0..dim).map(|j| vec![j]).collect();
        for vars in forms {
            for &c in *vars {
                cols[c].extend_from_slice(vars);
            }
        }
        for (r, row) in eqs.iter().enumerate() {
            for &(j, _) in &row.coeffs {
                cols[j].push(n + r);
                cols[n + r].push(j);
            }
        }
        let mut col_ptr = Vec::with_capacity(dim + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for c in &mut cols {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        drop(cols);
        let slot = |row: usize, col: usize| -> usize {
            let seg = &row_idx[col_ptr[col]..col_ptr[col + 1]];
            col_ptr[col] + seg.binary_search(&row).expect("entry in pattern")
        };
        let form_slots = forms
            .iter()
            .map(|vars| {
                let mut s = Vec::with_capacity(vars.len() * vars.len());
                for &r in *vars {
                    for &c in *vars {
                        s.push(slot(r, c));
                    }
                }
                s
            })
            .collect();
        let diag_slots = (0..dim).map(|j| slot(j, j)).collect();
        let mut eq_entries = Vec::new();
        for (r, row) in eqs.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                eq_entries.push((slot(n + r, j), slot(j, n + r), a));
            }
        }

        let mut upper_col_ptr = Vec::with_capacity(dim + 1);
        let mut upper_row_idx = Vec::new();
        let mut upper_src = Vec::new();
        upper_col_ptr.push(0);
        for c in 0..dim {
            for k in col_ptr[c]..col_ptr[c + 1] {
                if row_idx[k] <= c {
                    upper_row_idx.push(row_idx[k]);
                    upper_src.push(k);
                }
            }
            upper_col_ptr.push(upper_row_idx.len());
        }
        let symbolic = {
            let sym = SymbolicSparseColMatRef::new_checked(dim, dim, &upper_col_ptr, None, &upper_row_idx);
            factorize_symbolic_cholesky(sym, Side::Upper, SymmetricOrdering::Amd, Default::default())
                .map_err(|e| format!("symbolic factorization: {e:?}"))?
        };
        let mem = MemBuffer::try_new(StackReq::any_of(&[
            symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()),
            symbolic.solve_in_place_scratch::<f64>(1, Par::Seq),
        ]))
        .map_err(|e| format!("workspace: {e:?}"))?;
        let factor = vec![0.0; symbolic.len_val()];
        let signs = (0..dim).map(|j| if j < n { 1 } else { -1 }).collect();
        let values = vec![0.0; row_idx.len()];
        Ok(Self {
            n,
            dim,
            col_ptr,
            row_idx,
            values,
            form_slots,
            diag_slots,
            eq_entries,
            upper_col_ptr,
            upper_row_idx,
            upper_src,
            symbolic,
            factor,
            signs,
            mem,
        })
    }

    /// Zeroes the Hessian block and rewrites the equality block.
    pub(crate) fn reset(&mut self) {
        self.values.fill(0.0);
        for &(a, b, v) in &self.eq_entries {
            self.values[a] += v;
            self.values[b] += v;
        }
    }

    /// Adds `sh * hess + sg * g g^T` for form `f` (local dense blocks).
    pub(crate) fn add_form(&mut self, f: usize, hess: &[f64], sh: f64, g: &[f64], sg: f64) {
        let k = g.len();
        let slots = &self.form_slots[f];
        for i in 0..k {
            for j in 0..k {
                let v = sh * hess[i * k + j] + sg * g[i] * g[j];
                self.values[slots[i * k + j]] += v;
            }
        }
    }

    /// Adds only `sg * g g^T` for form `f` (affine forms have zero Hessian).
    pub(crate) fn add_outer(&mut self, f: usize, g: &[f64], sg: f64) {
        let k = g.len();
        let slots = &self.form_slots[f];
        for i in 0..k {
            for j in 0..k {
                self.values[slots[i * k + j]] += sg * g[i] * g[j];
            }
        }
    }

    /// Adds `primal` to the Hessian diagonal and `-dual` to the lower block
    /// diagonal, factors, and solves in place. Returns false if the
    /// factorization fails or produces non-finite values.
    ///
    /// Barrier Hessians mix entries of order one with entries of order
    /// `t^2`, so the matrix is symmetrically equilibrated before factoring
    /// and the solution is polished by iterative refinement against the
    /// unscaled matrix.
    pub(crate) fn factor_solve(&mut self, primal: f64, dual: f64, rhs: &mut [f64]) -> bool {
        let dim = self.dim;
        let mut values = self.values.clone();
        for (j, &s) in self.diag_slots.iter().enumerate() {
            values[s] += if j < self.n { primal } else { -dual };
        }
        let mut d = vec![1.0; dim];
        for j in 0..self.n {
            d[j] = 1.0 / values[self.diag_slots[j]].abs().max(1.0).sqrt();
        }
        for c in self.n..dim {
            let mut sq = 0.0;
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                if r < self.n {
                    sq += (values[k] * d[r]).powi(2);
                }
            }
            if sq > 0.0 {
                d[c] = 1.0 / sq.sqrt();
            }
        }
        let mut scaled = Vec::with_capacity(self.upper_src.len());
        for c in 0..dim {
            for i in self.upper_col_ptr[c]..self.upper_col_ptr[c + 1] {
                scaled.push(values[self.upper_src[i]] * d[self.upper_row_idx[i]] * d[c]);
            }
        }
        let sym = SymbolicSparseColMatRef::new_checked(dim, dim, &self.upper_col_ptr, None, &self.upper_row_idx);
        let mat = SparseColMatRef::new(sym, &scaled);
        let symbolic = &self.symbolic;
        let mem = &mut self.mem;
        let ldlt = match symbolic.factorize_numeric_ldlt::<f64>(
            &mut self.factor,
            mat,
            Side::Upper,
            LdltRegularization {
                dynamic_regularization_signs: Some(&self.signs),
                dynamic_regularization_delta: PIVOT_SHIFT,
                dynamic_regularization_epsilon: PIVOT_FLOOR,
            },
            Par::Seq,
            MemStack::new(mem),
            Default::default(),
        ) {
            Ok(l) => l,
            Err(_) => return false,
        };
        let mut solve = |b: &mut [f64]| {
            for (v, di) in b.iter_mut().zip(&d) {
                *v *= di;
            }
            ldlt.solve_in_place_with_conj(
                Conj::No,
                MatMut::from_column_major_slice_mut(b, dim, 1),
                Par::Seq,
                MemStack::new(mem),
            );
            for (v, di) in b.iter_mut().zip(&d) {
                *v *= di;
            }
        };
        let b = rhs.to_vec();
        solve(rhs);
        let mut residual = vec![0.0; dim];
        for _ in 0..REFINEMENT_ROUNDS {
            residual.copy_from_slice(&b);
            for c in 0..dim {
                let xc = rhs[c];
                if xc != 0.0 {
                    for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                        residual[self.row_idx[k]] -= values[k] * xc;
                    }
                }
            }
            solve(&mut residual);
            for (x, r) in rhs.iter_mut().zip(&residual) {
                *x += r;
            }
        }
        rhs.iter().all(|v| v.is_finite())
    }

    /// `y = H x` using the current Hessian block (no regularization).
    pub(crate) fn hessian_apply(&self, x: &[f64], y: &mut [f64]) {
        y[..self.n].fill(0.0);
        for c in 0..self.n {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[k];
                if r < self.n {
                    y[r] += self.values[k] * x[c];
                }
            }
        }
    }
}
