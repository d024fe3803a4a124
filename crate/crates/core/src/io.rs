//! JSON helpers: complex numbers are `[re, im]`, matrices are row lists.

use crate::error::{Error, Result};
use crate::operator::{c, CMatrix, Operator, C64};

pub fn complex_to_pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn pair_to_complex(p: [f64; 2]) -> C64 {
    c(p[0], p[1])
}

pub fn vec_to_pairs(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().copied().map(complex_to_pair).collect()
}

pub fn pairs_to_vec(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().copied().map(pair_to_complex).collect()
}

pub fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| complex_to_pair(m[(i, j)])).collect()).collect()
}

pub fn rows_to_matrix(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix> {
    let n = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Schema("ragged matrix rows".into()));
    }
    let mut m = CMatrix::zeros(n, ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::Schema(format!("non-finite entry at ({i}, {j})")));
            }
            m[(i, j)] = pair_to_complex(p);
        }
    }
    Ok(m)
}

pub fn operator_to_rows(op: &Operator) -> Vec<Vec<[f64; 2]>> {
    matrix_to_rows(op.matrix())
}

pub fn rows_to_operator(rows: &[Vec<[f64; 2]>], factor_dims: &[usize]) -> Result<Operator> {
    let m = rows_to_matrix(rows)?;
    Operator::new(m, factor_dims.to_vec()).map_err(|e| Error::Schema(e.to_string()))
}
